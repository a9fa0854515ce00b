//! Numerical checks for the one-step analysis: the first Hermite coefficient
//! of the student activation, the rank-1 surrogate of the first-step update,
//! sign agreement, the rank-1 gap, norm scaling across the size grid, and
//! the learning-rate-scale ratios for both initializations.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{generate_dataset, sample_target_direction, Dataset, TeacherSpec};
use crate::error::Result;
use crate::linalg;
use crate::optim::{adam_step, full_batch_gradient, AdamState};
use crate::rng::{mix_seed, substream, Generator, Stream};
use crate::student::{init_student, ActivationKind, InitScheme, StudentParams};

/// Adam decay factors used throughout the norm checks.
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;

/// `(1 - beta1) / sqrt(1 - beta2)`: the magnitude every entry of the first
/// Adam step takes when epsilon is zero and no gradient entry vanishes.
pub fn first_step_factor(beta1: f64, beta2: f64) -> f64 {
    (1.0 - beta1) / (1.0 - beta2).sqrt()
}

/// Gauss-Hermite nodes and weights via the Golub-Welsch eigensolve of the
/// Jacobi matrix (off-diagonals `sqrt(k/2)`).
fn gauss_hermite(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = Array2::<f64>::zeros((nodes, nodes));
    for k in 1..nodes {
        let b = (k as f64 / 2.0).sqrt();
        jac[[k - 1, k]] = b;
        jac[[k, k - 1]] = b;
    }
    let (x, vecs) = linalg::eigh(&jac).expect("Jacobi matrix eigensolve");
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let weights: Vec<f64> = (0..nodes)
        .map(|j| sqrt_pi * vecs[[0, j]] * vecs[[0, j]])
        .collect();
    (x.to_vec(), weights)
}

/// `E[g(z)]` for `z ~ N(0,1)` by 128-node Gauss-Hermite quadrature. 128
/// nodes keep the two mu_1 forms within 1e-10 of each other even for tanh,
/// whose complex poles slow the quadrature's convergence.
pub fn gauss_hermite_expect<F: Fn(f64) -> f64>(g: F) -> f64 {
    let (nodes, weights) = gauss_hermite(128);
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights.iter())
        .map(|(x, w)| w * g(std::f64::consts::SQRT_2 * x))
        .sum::<f64>()
        * inv_sqrt_pi
}

/// First Hermite coefficient `mu_1 = E[sigma'(z)] = E[z sigma(z)]` of the
/// activation under a standard Gaussian input. Both quadrature forms are
/// evaluated and must agree to 1e-10 (Stein's identity).
pub fn mu1(kind: ActivationKind) -> f64 {
    let via_deriv = gauss_hermite_expect(|z| kind.deriv(z));
    let via_stein = gauss_hermite_expect(|z| z * kind.eval(z));
    debug_assert!(
        (via_deriv - via_stein).abs() <= 1e-10,
        "quadrature forms disagree: {via_deriv} vs {via_stein}"
    );
    via_deriv
}

/// Rank-1 surrogate of the first-step update direction:
/// `A = mu1 / (n sqrt(h d)) * a (y^T X)`.
pub fn rank1_surrogate(
    a: &Array1<f64>,
    y: &Array1<f64>,
    x: &Array2<f64>,
    mu1: f64,
) -> Array2<f64> {
    let (n, d) = x.dim();
    let h = a.len();
    debug_assert_eq!(y.len(), n);
    let ytx = x.t().dot(y); // length d
    let scale = mu1 / (n as f64 * ((h * d) as f64).sqrt());
    let mut out = Array2::<f64>::zeros((h, d));
    for (i, ai) in a.iter().enumerate() {
        let row_scale = scale * ai;
        let mut row = out.row_mut(i);
        for (j, v) in ytx.iter().enumerate() {
            row[j] = row_scale * v;
        }
    }
    out
}

/// First-step update direction of the training loss: the negative gradient,
/// which is the orientation the rank-1 surrogate approximates and the
/// orientation Adam's first step takes (up to the sign-step factor).
pub fn first_update_direction(
    params: &StudentParams,
    act: ActivationKind,
    data: &Dataset,
) -> Result<Array2<f64>> {
    let g = full_batch_gradient(params, act, &data.inputs, &data.labels)?;
    Ok(g.mapv(|v| -v))
}

/// Fraction of entries whose signs match. Entries that are exactly zero in
/// either matrix count as disagreement.
pub fn sign_agreement(g0: &Array2<f64>, a: &Array2<f64>) -> Result<f64> {
    if g0.dim() != a.dim() {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "sign agreement of {:?} vs {:?}",
            g0.dim(),
            a.dim()
        )));
    }
    let total = g0.len();
    let mut agree = 0usize;
    for (x, y) in g0.iter().zip(a.iter()) {
        if *x != 0.0 && *y != 0.0 && x.signum() == y.signum() {
            agree += 1;
        }
    }
    Ok(agree as f64 / total as f64)
}

/// Measured spectral-norm gap `||G0 - A||_2 / ||G0||_2` together with the
/// asymptotic reference bound `2 ln^2(n) / sqrt(n)` (natural log).
pub fn rank1_gap(g0: &Array2<f64>, a: &Array2<f64>, n: usize) -> Result<(f64, f64)> {
    if g0.dim() != a.dim() {
        return Err(crate::error::Error::ShapeMismatch(format!(
            "rank-1 gap of {:?} vs {:?}",
            g0.dim(),
            a.dim()
        )));
    }
    let diff = g0 - a;
    let num = linalg::singular_values(&diff)?[0];
    let den = linalg::singular_values(g0)?[0];
    let log_n = (n as f64).ln();
    Ok((num / den, 2.0 * log_n * log_n / (n as f64).sqrt()))
}

/// One row of the norm-scaling sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormSweepRow {
    pub index: usize,
    pub n: usize,
    pub h: usize,
    pub d: usize,
    pub sqrt_hd: f64,
    /// Frobenius norm of the first Adam step direction (epsilon = 0).
    pub frob_norm: f64,
    /// Spectral norm of the same matrix.
    pub spec_norm: f64,
    /// Sign agreement between the update direction and its rank-1 surrogate.
    pub sign_agreement: f64,
    /// Smallest gradient magnitude; positive means no exactly-zero entries.
    pub min_abs_g0: f64,
}

/// The size grid used by the norm-scaling simulation: `n` from 1000 to 8000
/// with `h = 0.75 n` and `d = 0.5 n`.
pub fn norm_sweep_grid() -> Vec<(usize, usize, usize)> {
    (1..=8)
        .map(|i| (1000 * i, 750 * i, 500 * i))
        .collect()
}

/// Fresh teacher, data and NTK student at the standard setting (softplus
/// teacher, label noise 0.3, tanh student), drawn from the seed's
/// sub-streams.
pub fn standard_instance(
    n: usize,
    h: usize,
    d: usize,
    seed: u64,
) -> Result<(StudentParams, Dataset, TeacherSpec)> {
    let mut teacher_rng = Generator::from_seed(substream(seed, Stream::Teacher));
    let beta = sample_target_direction(d, &mut teacher_rng)?;
    let teacher = TeacherSpec::new(beta, ActivationKind::Softplus, 0.3)?;
    let mut data_rng = Generator::from_seed(substream(seed, Stream::Train));
    let data = generate_dataset(&teacher, n, d, &mut data_rng)?;
    let mut init_rng = Generator::from_seed(substream(seed, Stream::Init));
    let params = init_student(h, d, InitScheme::Ntk, &mut init_rng)?;
    Ok((params, data, teacher))
}

/// Build one sweep row: fresh data and weights, the first-step update
/// direction, the zero-epsilon Adam step norms, and the rank-1 sign check.
pub fn norm_sweep_row(index: usize, n: usize, h: usize, d: usize, seed: u64) -> Result<NormSweepRow> {
    let row_seed = mix_seed(seed, index as u64);
    let (params, data, _) = standard_instance(n, h, d, row_seed)?;
    let g0 = first_update_direction(&params, ActivationKind::Tanh, &data)?;
    let min_abs_g0 = g0.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let surrogate = rank1_surrogate(
        &params.readout,
        &data.labels,
        &data.inputs,
        mu1(ActivationKind::Tanh),
    );
    let agreement = sign_agreement(&g0, &surrogate)?;
    let factor = first_step_factor(BETA1, BETA2);
    let sign_step = g0.mapv(|v| factor * v.signum());
    let frob_norm = sign_step.iter().map(|v| v * v).sum::<f64>().sqrt();
    let spec_norm = linalg::spectral_norm(&sign_step)?;
    Ok(NormSweepRow {
        index,
        n,
        h,
        d,
        sqrt_hd: ((h * d) as f64).sqrt(),
        frob_norm,
        spec_norm,
        sign_agreement: agreement,
        min_abs_g0,
    })
}

/// Run the norm sweep over a size grid; rows are independent and run in
/// parallel with per-row derived seeds.
pub fn adam_norm_sweep(rows: &[(usize, usize, usize)], seed: u64) -> Result<Vec<NormSweepRow>> {
    rows.par_iter()
        .enumerate()
        .map(|(index, &(n, h, d))| norm_sweep_row(index, n, h, d, seed))
        .collect()
}

/// Least-squares fit `y = slope * x + intercept` plus the R^2 of the fit.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// One-step learning-rate-scale measurement.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorollaryReport {
    pub eta: f64,
    /// `||W1 - W0||_F / ||W0||_F`.
    pub frob_ratio: f64,
    /// `||W1 - W0||_2 / ||W0||_2`.
    pub spec_ratio: f64,
    pub scheme: InitScheme,
}

/// One exact-sign-path Adam step per learning rate, from a shared fresh
/// initialization, reporting both norm ratios.
pub fn corollary_check(
    etas: &[f64],
    scheme: InitScheme,
    n: usize,
    h: usize,
    d: usize,
    seed: u64,
) -> Result<Vec<CorollaryReport>> {
    let mut teacher_rng = Generator::from_seed(substream(seed, Stream::Teacher));
    let beta = sample_target_direction(d, &mut teacher_rng)?;
    let teacher = TeacherSpec::new(beta, ActivationKind::Softplus, 0.3)?;
    let mut data_rng = Generator::from_seed(substream(seed, Stream::Train));
    let data = generate_dataset(&teacher, n, d, &mut data_rng)?;
    let mut init_rng = Generator::from_seed(substream(seed, Stream::Init));
    let params = init_student(h, d, scheme, &mut init_rng)?;

    let grad = full_batch_gradient(&params, ActivationKind::Tanh, &data.inputs, &data.labels)?;
    let w0_frob = params.first_layer.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w0_spec = linalg::singular_values(&params.first_layer)?[0];
    let mut reports = Vec::with_capacity(etas.len());
    for &eta in etas {
        let mut state = AdamState::new(h, d, BETA1, BETA2, 0.0);
        let w1 = adam_step(&mut state, &params.first_layer, &grad, eta)?;
        let delta = &w1 - &params.first_layer;
        let frob_ratio = delta.iter().map(|v| v * v).sum::<f64>().sqrt() / w0_frob;
        let spec_ratio = if eta == 0.0 {
            0.0
        } else {
            linalg::spectral_norm(&delta)? / w0_spec
        };
        reports.push(CorollaryReport {
            eta,
            frob_ratio,
            spec_ratio,
            scheme,
        });
    }
    Ok(reports)
}
