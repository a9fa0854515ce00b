//! Stage-one training of the first layer: analytic full-batch gradient,
//! GD and full-batch Adam steps, weight normalization, learning-rate
//! schedules, and the trajectory driver recording per-step update matrices.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::student::{ActivationKind, StudentParams};

/// Samples per block in the gradient accumulation; bounds the size of the
/// preactivation scratch matrix to `h x GRAD_BLOCK`.
const GRAD_BLOCK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "FBAdam")]
    FbAdam,
}

/// Moving averages of the full-batch Adam recurrence. No bias correction by
/// default; the flag exists for comparison runs.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m_avg: Array2<f64>,
    pub v_avg: Array2<f64>,
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl AdamState {
    pub fn new(h: usize, d: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m_avg: Array2::zeros((h, d)),
            v_avg: Array2::zeros((h, d)),
            step: 0,
            beta1,
            beta2,
            epsilon,
            bias_correction: false,
        }
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }
}

/// One recorded optimizer step: the raw (pre-normalization) weight delta
/// `W'_{t+1} - W_t` and the learning rate the schedule emitted.
#[derive(Clone, Debug)]
pub struct UpdateRecord {
    pub step_index: usize,
    pub update_matrix: Array2<f64>,
    pub effective_lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Constant,
    StepLR,
    Cosine,
}

/// Learning-rate schedule. `gamma` is the per-step decay for StepLR;
/// `t_max` and `eta_min` drive the cosine shape.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_t_max() -> usize {
    10
}
fn default_eta_min() -> f64 {
    1e-7
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Constant,
            gamma: default_gamma(),
            t_max: default_t_max(),
            eta_min: default_eta_min(),
        }
    }
}

impl ScheduleSpec {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn step_lr(gamma: f64) -> Self {
        Self {
            kind: ScheduleKind::StepLR,
            gamma,
            ..Self::default()
        }
    }

    pub fn cosine(t_max: usize, eta_min: f64) -> Self {
        Self {
            kind: ScheduleKind::Cosine,
            t_max,
            eta_min,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "schedule.gamma".into(),
                reason: format!("must be in (0, 1], got {}", self.gamma),
            });
        }
        if self.t_max == 0 {
            return Err(Error::InvalidConfig {
                field: "schedule.t_max".into(),
                reason: "must be positive".into(),
            });
        }
        let min_ok = match self.kind {
            ScheduleKind::Cosine => self.eta_min > 0.0,
            _ => self.eta_min >= 0.0,
        };
        if !min_ok {
            return Err(Error::InvalidConfig {
                field: "schedule.eta_min".into(),
                reason: "cosine schedules need eta_min > 0 so every emitted rate is positive"
                    .into(),
            });
        }
        Ok(())
    }
}

/// Learning rate for step `t` (0-based). StepLR decays every step,
/// `eta0 * gamma^t`; cosine follows
/// `eta_min + (eta0 - eta_min) (1 + cos(pi t / t_max)) / 2`.
pub fn schedule_eta(spec: &ScheduleSpec, t: usize, eta0: f64) -> f64 {
    match spec.kind {
        ScheduleKind::Constant => eta0,
        ScheduleKind::StepLR => eta0 * spec.gamma.powi(t as i32),
        ScheduleKind::Cosine => {
            let phase = std::f64::consts::PI * t as f64 / spec.t_max as f64;
            spec.eta_min + 0.5 * (eta0 - spec.eta_min) * (1.0 + phase.cos())
        }
    }
}

/// Gradient of the half-MSE `R = sum (y_i - f(x_i))^2 / (2n)` with respect
/// to the first layer, with the readout frozen:
/// `G = (s / (n sqrt(h))) [(a r^T) (.) sigma'(s W X^T)] X` where
/// `r = f(X) - y` and `s` is the scheme's preactivation scale. Accumulated
/// over sample blocks so the scratch stays bounded.
pub fn full_batch_gradient(
    params: &StudentParams,
    act: ActivationKind,
    inputs: &Array2<f64>,
    labels: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (n, d) = inputs.dim();
    let h = params.width();
    if d != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "inputs have {d} columns but the first layer expects {}",
            params.input_dim()
        )));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    let scale = params.scheme.preact_scale(d);
    let inv_sqrt_h = 1.0 / (h as f64).sqrt();
    let prefactor = scale / (n as f64 * (h as f64).sqrt());
    let a = &params.readout;

    let mut grad = Array2::<f64>::zeros((h, d));
    let mut start = 0;
    while start < n {
        let stop = (start + GRAD_BLOCK).min(n);
        let x_block = inputs.slice(s![start..stop, ..]);
        let y_block = labels.slice(s![start..stop]);
        // preactivations for this block, h x nb
        let mut pre = params.first_layer.dot(&x_block.t());
        // residuals r_i = f(x_i) - y_i
        let nb = stop - start;
        let mut resid = Array1::<f64>::zeros(nb);
        for i in 0..nb {
            let col = pre.column(i);
            let f: f64 = col
                .iter()
                .zip(a.iter())
                .map(|(p, aj)| aj * act.eval(scale * p))
                .sum();
            resid[i] = f * inv_sqrt_h - y_block[i];
        }
        // overwrite the preactivations with (a r^T) (.) sigma'(s P)
        for j in 0..h {
            let aj = a[j];
            let mut row = pre.row_mut(j);
            for i in 0..nb {
                row[i] = aj * resid[i] * act.deriv(scale * row[i]);
            }
        }
        grad.scaled_add(prefactor, &pre.dot(&x_block));
        start = stop;
    }
    Ok(grad)
}

/// Gradient of the plain mean squared error `sum (y_i - f(x_i))^2 / n`:
/// twice the half-MSE gradient. The stage-one trainer steps on this
/// objective; its learning-rate scale is the one the reported loss curves
/// (also plain means) correspond to. Adam trajectories are invariant to the
/// factor (the moment ratio cancels it); GD feels it directly.
pub fn training_gradient(
    params: &StudentParams,
    act: ActivationKind,
    inputs: &Array2<f64>,
    labels: &Array1<f64>,
) -> Result<Array2<f64>> {
    let mut g = full_batch_gradient(params, act, inputs, labels)?;
    g.mapv_inplace(|v| 2.0 * v);
    Ok(g)
}

/// Plain gradient descent: `W' = W - eta G`.
pub fn gd_step(weights: &Array2<f64>, grad: &Array2<f64>, eta: f64) -> Result<Array2<f64>> {
    if weights.dim() != grad.dim() {
        return Err(Error::ShapeMismatch(format!(
            "weights {:?} vs gradient {:?}",
            weights.dim(),
            grad.dim()
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidConfig {
            field: "eta".into(),
            reason: format!("learning rate must be nonnegative, got {eta}"),
        });
    }
    Ok(weights - &(eta * grad))
}

/// One full-batch Adam step. Updates the moving averages in place and
/// returns the new weights:
/// `m <- b1 m + (1-b1) G`, `v <- b2 v + (1-b2) G^2`,
/// `W' = W - eta m / (sqrt(v) + eps)`. No bias correction unless the state
/// asks for it; with `eps = 0` the `0/0` entries update by 0.
pub fn adam_step(
    state: &mut AdamState,
    weights: &Array2<f64>,
    grad: &Array2<f64>,
    eta: f64,
) -> Result<Array2<f64>> {
    if state.m_avg.dim() != grad.dim() || weights.dim() != grad.dim() {
        return Err(Error::ShapeMismatch(format!(
            "adam state {:?}, weights {:?}, gradient {:?}",
            state.m_avg.dim(),
            weights.dim(),
            grad.dim()
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidConfig {
            field: "eta".into(),
            reason: format!("learning rate must be nonnegative, got {eta}"),
        });
    }
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    ndarray::Zip::from(&mut state.m_avg)
        .and(grad)
        .for_each(|m, g| *m = b1 * *m + (1.0 - b1) * g);
    ndarray::Zip::from(&mut state.v_avg)
        .and(grad)
        .for_each(|v, g| *v = b2 * *v + (1.0 - b2) * g * g);
    state.step += 1;
    let (mc, vc) = if state.bias_correction {
        let t = state.step as i32;
        (1.0 - b1.powi(t), 1.0 - b2.powi(t))
    } else {
        (1.0, 1.0)
    };
    let mut next = weights.to_owned();
    ndarray::Zip::from(&mut next)
        .and(&state.m_avg)
        .and(&state.v_avg)
        .for_each(|w, m, v| {
            let num = m / mc;
            let den = (v / vc).sqrt() + eps;
            if den == 0.0 {
                // only reachable when every past gradient entry was zero,
                // in which case num == 0 as well
                debug_assert_eq!(num, 0.0);
            } else {
                *w -= eta * num / den;
            }
        });
    Ok(next)
}

/// Rescale to a fixed Frobenius norm: `W' = target W / ||W||_F`.
pub fn weight_normalize(weights: &Array2<f64>, target: f64) -> Result<Array2<f64>> {
    if !(target > 0.0) {
        return Err(Error::InvalidConfig {
            field: "weight_norm_target".into(),
            reason: format!("must be positive, got {target}"),
        });
    }
    let frob = weights.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Err(Error::InvalidDimension(
            "cannot normalize the zero matrix (undefined direction)".into(),
        ));
    }
    Ok(weights * (target / frob))
}

/// Everything the stage-one driver needs to know.
#[derive(Clone, Debug)]
pub struct TrainSettings {
    pub optimizer: OptimizerKind,
    pub eta0: f64,
    pub steps: usize,
    pub schedule: ScheduleSpec,
    pub weight_norm: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
    pub student_act: ActivationKind,
    pub checkpoint_every: usize,
}

fn check_finite(weights: &Array2<f64>, step: usize) -> Result<()> {
    if let Some(bad) = weights.iter().find(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step,
            detail: format!("non-finite weight entry {bad}"),
        });
    }
    Ok(())
}

/// Run the stage-one loop, invoking `on_step(t, params, record)` after every
/// completed update `t` (weights already normalized when WN is on; the
/// record holds the pre-normalization delta). The readout stays frozen.
pub fn drive_first_layer<F>(
    settings: &TrainSettings,
    data: &Dataset,
    params: &mut StudentParams,
    mut on_step: F,
) -> Result<()>
where
    F: FnMut(usize, &StudentParams, &UpdateRecord) -> Result<()>,
{
    settings.schedule.validate()?;
    let (h, d) = params.first_layer.dim();
    let mut adam = AdamState::new(h, d, settings.beta1, settings.beta2, settings.epsilon)
        .with_bias_correction(settings.bias_correction);
    for t in 0..settings.steps {
        let eta = schedule_eta(&settings.schedule, t, settings.eta0);
        let grad = training_gradient(params, settings.student_act, &data.inputs, &data.labels)?;
        let next = match settings.optimizer {
            OptimizerKind::Gd => gd_step(&params.first_layer, &grad, eta)?,
            OptimizerKind::FbAdam => adam_step(&mut adam, &params.first_layer, &grad, eta)?,
        };
        let record = UpdateRecord {
            step_index: t,
            update_matrix: &next - &params.first_layer,
            effective_lr: eta,
        };
        params.first_layer = if settings.weight_norm {
            let target = params.scheme.weight_norm_target(h, d);
            weight_normalize(&next, target)?
        } else {
            next
        };
        check_finite(&params.first_layer, t)?;
        on_step(t, params, &record)?;
    }
    Ok(())
}

/// Weight snapshot at a given step.
pub type Checkpoint = (usize, Array2<f64>);

/// Stage-one training that materializes the whole trajectory: final
/// parameters (in place), all update records, and weight checkpoints at
/// step 0, every `checkpoint_every`-th step, and the final step.
pub fn train_first_layer(
    settings: &TrainSettings,
    data: &Dataset,
    params: &mut StudentParams,
) -> Result<(Vec<UpdateRecord>, Vec<Checkpoint>)> {
    let mut records = Vec::with_capacity(settings.steps);
    let mut checkpoints = vec![(0, params.first_layer.clone())];
    let every = settings.checkpoint_every.max(1);
    let steps = settings.steps;
    drive_first_layer(settings, data, params, |t, p, rec| {
        records.push(rec.clone());
        let step_no = t + 1;
        if step_no == steps || step_no % every == 0 {
            checkpoints.push((step_no, p.first_layer.clone()));
        }
        Ok(())
    })?;
    Ok((records, checkpoints))
}
