//! Deterministic top-k selection shared by every sparsifier.

use std::cmp::Ordering;

/// Relative slack applied before rounding a keep budget up, so that
/// `100 × 0.01` style products landing a hair above an integer do not gain
/// an extra element.
const CEIL_SLACK: f64 = 1e-9;

/// `ceil(x)` that ignores floating-point overshoot just above an integer.
pub(crate) fn ceil_count(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x * (1.0 - CEIL_SLACK)).ceil() as usize
}

/// Score order: higher score first, then lower index.
fn rank(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Indices of the `k` highest scores, ties to the lower index, returned in
/// ascending index order.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let n = scores.len();
    if k >= n {
        return (0..n).collect();
    }
    if k == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| rank(scores, a, b));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}
