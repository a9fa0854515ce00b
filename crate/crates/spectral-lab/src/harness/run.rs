//! One experiment end to end: data generation, stage-one training with
//! per-step readout fits and spectral reports, optional singular-vector
//! overlap traces, and weight checkpoints.

use ndarray::{Array1, Array2};
use std::time::Instant;

use super::config::ExperimentConfig;
use crate::dataset::{generate_dataset, sample_target_direction, Dataset, TeacherSpec};
use crate::error::Result;
use crate::linalg;
use crate::optim::drive_first_layer;
use crate::readout::{kta_from_features, ridge_fit, AlignmentReport};
use crate::rng::{Generator, Stream};
use crate::spectral::{esd_from_singular_values, overlap, svd, OverlapMatrix, SpectralReport, SvdResult};
use crate::student::{hidden_features, init_student, plain_mse, StudentParams};

/// Everything measured at one recorded step.
#[derive(Clone, Debug)]
pub struct StepMetrics {
    pub step: usize,
    /// Holdout ridge data-fit loss `||y - Z^T a||^2 / n`.
    pub train_loss: f64,
    /// Test MSE against noisy labels.
    pub test_loss: f64,
    /// Test MSE against noise-free labels.
    pub test_loss_clean: f64,
    pub alignment: AlignmentReport,
    pub report: SpectralReport,
}

impl StepMetrics {
    pub fn kta(&self) -> f64 {
        self.alignment.kta
    }

    pub fn sim(&self) -> f64 {
        self.alignment.sim_w_beta
    }
}

/// Overlaps of the step's weight singular vectors with the update that
/// produced it (`step = 0` pairs the initial weights with the first update).
#[derive(Clone, Debug)]
pub struct OverlapPair {
    pub step: usize,
    pub left: OverlapMatrix,
    pub right: OverlapMatrix,
}

#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub target_direction: Array1<f64>,
    /// One entry per recorded step, step 0 (initialization) included.
    pub metrics: Vec<StepMetrics>,
    pub overlaps: Vec<OverlapPair>,
    pub checkpoints: Vec<(usize, Array2<f64>)>,
    /// `||M_0||_F / (eta_0 sqrt(hd))`; NaN when no step was taken.
    pub first_update_frob_ratio: f64,
    pub wall_clock_secs: f64,
    pub blas_threads: usize,
}

struct MetricsContext<'a> {
    config: &'a ExperimentConfig,
    holdout: &'a Dataset,
    test: &'a Dataset,
    beta: &'a Array1<f64>,
}

impl MetricsContext<'_> {
    fn evaluate(&self, step: usize, params: &StudentParams, decomp: &SvdResult) -> Result<StepMetrics> {
        let act = self.config.student_act;
        let features = hidden_features(params, act, &self.holdout.inputs)?;
        let sol = ridge_fit(&features, &self.holdout.labels, self.config.lambda)?;
        let resid = &self.holdout.labels - &features.t().dot(&sol.a_hat);
        let train_loss = resid.dot(&resid) / self.holdout.len() as f64;
        let test_features = hidden_features(params, act, &self.test.inputs)?;
        let pred = test_features.t().dot(&sol.a_hat);
        let test_loss = plain_mse(&pred, &self.test.labels)?;
        let test_loss_clean = plain_mse(&pred, &self.test.clean_labels)?;
        let kta = kta_from_features(&features, &self.holdout.labels)?;
        let sim = decomp.right.column(0).dot(self.beta).abs();
        if !(train_loss.is_finite() && test_loss.is_finite() && kta.is_finite() && sim.is_finite())
        {
            // weights can still be finite while the feature Gram overflows
            return Err(crate::error::Error::Divergence {
                step,
                detail: format!(
                    "non-finite metrics (train {train_loss}, test {test_loss}, kta {kta})"
                ),
            });
        }
        let eigenvalues =
            esd_from_singular_values(&decomp.singular_values, params.input_dim());
        let report = SpectralReport::from_eigenvalues(eigenvalues)?;
        Ok(StepMetrics {
            step,
            train_loss,
            test_loss,
            test_loss_clean,
            alignment: AlignmentReport::new(kta, sim),
            report,
        })
    }
}

/// Run the full two-stage pipeline for one config. Deterministic given the
/// config and the BLAS thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    let started = Instant::now();

    let mut teacher_rng = Generator::from_seed(config.stream_seed(Stream::Teacher));
    let beta = sample_target_direction(config.d, &mut teacher_rng)?;
    let teacher = TeacherSpec::new(beta.clone(), config.teacher_act, config.rho_e)?;

    let mut train_rng = Generator::from_seed(config.stream_seed(Stream::Train));
    let train = generate_dataset(&teacher, config.n, config.d, &mut train_rng)?;
    let mut holdout_rng = Generator::from_seed(config.stream_seed(Stream::Holdout));
    let holdout = generate_dataset(&teacher, config.n, config.d, &mut holdout_rng)?;
    let mut test_rng = Generator::from_seed(config.stream_seed(Stream::Test));
    let test = generate_dataset(&teacher, config.n_test, config.d, &mut test_rng)?;

    let mut init_rng = Generator::from_seed(config.stream_seed(Stream::Init));
    let mut params = init_student(config.h, config.d, config.init, &mut init_rng)?;

    let ctx = MetricsContext {
        config,
        holdout: &holdout,
        test: &test,
        beta: &beta,
    };

    let mut current_svd = svd(&params.first_layer)?;
    let mut metrics = vec![ctx.evaluate(0, &params, &current_svd)?];
    let mut overlaps = Vec::new();
    let mut checkpoints = vec![(0usize, params.first_layer.clone())];
    let mut first_update_frob_ratio = f64::NAN;

    let settings = config.train_settings();
    let steps = config.steps;
    let every = config.checkpoint_every;
    let sqrt_hd = ((config.h * config.d) as f64).sqrt();

    drive_first_layer(&settings, &train, &mut params, |t, p, record| {
        let step_no = t + 1;
        let new_svd = svd(&p.first_layer)?;
        if t == 0 {
            let frob = record
                .update_matrix
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            first_update_frob_ratio = frob / (record.effective_lr * sqrt_hd);
        }
        if config.record_overlaps {
            let update_svd = svd(&record.update_matrix)?;
            if t == 0 {
                overlaps.push(OverlapPair {
                    step: 0,
                    left: overlap(&current_svd.left, &update_svd.left)?,
                    right: overlap(&current_svd.right, &update_svd.right)?,
                });
            }
            overlaps.push(OverlapPair {
                step: step_no,
                left: overlap(&new_svd.left, &update_svd.left)?,
                right: overlap(&new_svd.right, &update_svd.right)?,
            });
        }
        metrics.push(ctx.evaluate(step_no, p, &new_svd)?);
        if step_no == steps || step_no % every == 0 {
            checkpoints.push((step_no, p.first_layer.clone()));
        }
        current_svd = new_svd;
        Ok(())
    })?;

    Ok(ResultBundle {
        config: config.clone(),
        target_direction: beta,
        metrics,
        overlaps,
        checkpoints,
        first_update_frob_ratio,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        blas_threads: linalg::blas_threads(),
    })
}
