use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nsgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsgc"))
        .args(args)
        .output()
        .expect("spawn nsgc")
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

const QUICK: &[&str] = &["--epochs", "2", "--dataset_size", "200"];

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--out", out_arg(dir.path()), "--seed", "3"];
    args.extend_from_slice(QUICK);
    let o = nsgc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(dir.path().join("steps.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,step,loss,train_acc,bytes_sent_total,dense_bytes_total,ratio")
    );
    assert!(lines.count() > 0);

    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    for key in [
        "final_train_acc",
        "final_test_acc",
        "cumulative_bytes",
        "compression_ratio",
        "config_echo",
    ] {
        assert!(summary.contains(&format!("\"{key}\"")), "missing {key}");
    }
    assert!(summary.contains("\"master_seed\": \"3\""));
    assert!(dir.path().join("schedule.csv").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# quick run\narchitecture = mlp\ngenerator = gaussian_blobs\nepochs = 1\ncompressor = top_k\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = nsgc(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--compressor",
        "random_k",
        "--out",
        out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"compressor\": \"random_k\""));
    assert!(summary.contains("\"architecture\": \"mlp\""));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsgc(&["run", "--density", "2", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("density"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "denisty = 0.1\n").unwrap();
    let o = nsgc(&["run", "--config", cfg.to_str().unwrap(), "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("denisty"));

    let o = nsgc(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsgc(&[
        "run",
        "--compressor",
        "dense",
        "--learning_rate",
        "1e6",
        "--epochs",
        "5",
        "--out",
        out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "compare",
        "--compressors",
        "dense,top_k,rs_dgc",
        "--out",
        out_arg(dir.path()),
    ];
    args.extend_from_slice(QUICK);
    let o = nsgc(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(
        rows[0],
        "method,accuracy,accuracy_delta_vs_dense,sparsification_ratio,byte_ratio"
    );
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("dense,") && rows[1].split(',').nth(2) == Some("0"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let mut args = vec!["run", "--threads", threads, "--out", out_arg(dir.path())];
        args.extend_from_slice(QUICK);
        assert!(nsgc(&args).status.success());
    }
    for f in ["steps.csv", "summary.json", "schedule.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}
