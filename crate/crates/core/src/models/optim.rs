use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `period_epochs` epochs.
    StepDecay {
        factor: f64,
        period_epochs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    learning_rate: f64,
    momentum: f64,
    schedule: LrSchedule,
}

impl OptimizerConfig {
    pub fn new(learning_rate: f64, momentum: f64, schedule: LrSchedule) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {learning_rate} must be > 0"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum {momentum} outside [0, 1)")));
        }
        if let LrSchedule::StepDecay { factor, period_epochs } = schedule {
            if !(factor > 0.0 && factor <= 1.0) || period_epochs == 0 {
                return Err(Error::InvalidArgument(format!(
                    "step decay needs factor in (0, 1] and period >= 1, got {factor} / {period_epochs}"
                )));
            }
        }
        Ok(Self {
            learning_rate,
            momentum,
            schedule,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn schedule(&self) -> LrSchedule {
        self.schedule
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::StepDecay { factor, period_epochs } => {
                self.learning_rate * factor.powi((epoch / period_epochs) as i32)
            }
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            schedule: LrSchedule::Constant,
        }
    }
}
