//! Experiment configuration: every knob of one run, JSON-serializable with
//! exactly these field names. Unknown keys are rejected so sweep typos fail
//! loudly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{OptimizerKind, ScheduleSpec, TrainSettings};
use crate::rng::{substream, Stream};
use crate::student::{ActivationKind, InitScheme};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_n_test")]
    pub n_test: usize,
    #[serde(default = "d_d")]
    pub d: usize,
    #[serde(default = "d_h")]
    pub h: usize,
    #[serde(default = "d_eta0")]
    pub eta0: f64,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub bias_correction: bool,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_rho_e")]
    pub rho_e: f64,
    #[serde(default = "d_student_act")]
    pub student_act: ActivationKind,
    #[serde(default = "d_teacher_act")]
    pub teacher_act: ActivationKind,
    #[serde(default = "d_init")]
    pub init: InitScheme,
    #[serde(default)]
    pub weight_norm: bool,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub record_overlaps: bool,
}

fn d_n() -> usize {
    2000
}
fn d_n_test() -> usize {
    200
}
fn d_d() -> usize {
    1000
}
fn d_h() -> usize {
    1500
}
fn d_eta0() -> f64 {
    0.1
}
fn d_steps() -> usize {
    1
}
fn d_optimizer() -> OptimizerKind {
    OptimizerKind::FbAdam
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_epsilon() -> f64 {
    1e-8
}
fn d_lambda() -> f64 {
    0.01
}
fn d_rho_e() -> f64 {
    0.3
}
fn d_student_act() -> ActivationKind {
    ActivationKind::Tanh
}
fn d_teacher_act() -> ActivationKind {
    ActivationKind::Softplus
}
fn d_init() -> InitScheme {
    InitScheme::Ntk
}
fn d_checkpoint_every() -> usize {
    10
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidConfig {
            field: field.into(),
            reason: "must be a positive integer".into(),
        });
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        positive("n", self.n)?;
        positive("n_test", self.n_test)?;
        positive("d", self.d)?;
        positive("h", self.h)?;
        positive("checkpoint_every", self.checkpoint_every)?;
        if !(self.eta0 > 0.0) {
            return Err(Error::InvalidConfig {
                field: "eta0".into(),
                reason: format!("must be positive, got {}", self.eta0),
            });
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidConfig {
                field: "lambda".into(),
                reason: format!("must be positive, got {}", self.lambda),
            });
        }
        if !(self.rho_e >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "rho_e".into(),
                reason: format!("must be nonnegative, got {}", self.rho_e),
            });
        }
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig {
                    field: field.into(),
                    reason: format!("must be in [0, 1), got {v}"),
                });
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "epsilon".into(),
                reason: format!("must be nonnegative, got {}", self.epsilon),
            });
        }
        self.schedule.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            optimizer: self.optimizer,
            eta0: self.eta0,
            steps: self.steps,
            schedule: self.schedule,
            weight_norm: self.weight_norm,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            bias_correction: self.bias_correction,
            student_act: self.student_act,
            checkpoint_every: self.checkpoint_every,
        }
    }

    /// Seed of one named sub-stream of this experiment.
    pub fn stream_seed(&self, stream: Stream) -> u64 {
        substream(self.seed, stream)
    }
}
