//! Two-layer student network: initialization, activations, forward pass,
//! hidden features and the half mean-squared error.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Generator;

/// Scalar activation tags for both the student nonlinearity and the teacher
/// link function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Tanh,
    Softplus,
    Identity,
}

impl ActivationKind {
    /// Evaluate the activation at `x`. Total on finite inputs: softplus
    /// switches to `x + ln(1 + e^{-x})` for large `x` to avoid overflow.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Softplus => {
                if x > 30.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
            ActivationKind::Identity => x,
        }
    }

    /// Derivative of the activation at `x`.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            // logistic sigmoid, evaluated on the stable side
            ActivationKind::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }
}

/// Weight initialization scheme. The scheme fixes both the entry variances
/// and the preactivation scaling used by the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    #[serde(rename = "NTK")]
    Ntk,
    MeanField,
}

impl InitScheme {
    /// Multiplier applied to `W x` before the activation: `1/sqrt(d)` under
    /// NTK scaling, `1` under mean-field.
    pub fn preact_scale(self, d: usize) -> f64 {
        match self {
            InitScheme::Ntk => 1.0 / (d as f64).sqrt(),
            InitScheme::MeanField => 1.0,
        }
    }

    /// Natural Frobenius norm of the first layer at init; the default weight
    /// normalization target.
    pub fn weight_norm_target(self, h: usize, d: usize) -> f64 {
        match self {
            InitScheme::Ntk => ((h * d) as f64).sqrt(),
            InitScheme::MeanField => (h as f64).sqrt(),
        }
    }
}

/// First-layer matrix, frozen readout and the scheme they were drawn under.
#[derive(Clone, Debug)]
pub struct StudentParams {
    pub first_layer: Array2<f64>,
    pub readout: Array1<f64>,
    pub scheme: InitScheme,
}

impl StudentParams {
    pub fn width(&self) -> usize {
        self.first_layer.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.first_layer.ncols()
    }
}

/// Draw fresh student parameters: `W` entries then `a` entries, both
/// row-major off one stream. NTK uses unit variance; mean-field uses `1/d`
/// for `W` and `1/h` for `a`.
pub fn init_student(
    h: usize,
    d: usize,
    scheme: InitScheme,
    rng: &mut Generator,
) -> Result<StudentParams> {
    if h == 0 || d == 0 {
        return Err(Error::InvalidDimension(format!(
            "student needs h >= 1 and d >= 1, got h={h}, d={d}"
        )));
    }
    let mut first_layer = rng.normal_matrix(h, d);
    let mut readout = rng.normal_vector(h);
    if scheme == InitScheme::MeanField {
        let w_std = 1.0 / (d as f64).sqrt();
        let a_std = 1.0 / (h as f64).sqrt();
        first_layer.mapv_inplace(|v| v * w_std);
        readout.mapv_inplace(|v| v * a_std);
    }
    Ok(StudentParams {
        first_layer,
        readout,
        scheme,
    })
}

fn check_input(params: &StudentParams, inputs: &Array2<f64>) -> Result<()> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "inputs have {} columns but the first layer expects {}",
            inputs.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Post-activation feature matrix `Z` (`h x n`): column `i` is
/// `sigma(scale * W x_i) / sqrt(h)`, so predictions are `Z^T a`.
pub fn hidden_features(
    params: &StudentParams,
    act: ActivationKind,
    inputs: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_input(params, inputs)?;
    let scale = params.scheme.preact_scale(params.input_dim());
    let inv_sqrt_h = 1.0 / (params.width() as f64).sqrt();
    let mut z = params.first_layer.dot(&inputs.t());
    z.mapv_inplace(|p| act.eval(scale * p) * inv_sqrt_h);
    Ok(z)
}

/// Network output for every row of `inputs`.
pub fn forward(
    params: &StudentParams,
    act: ActivationKind,
    inputs: &Array2<f64>,
) -> Result<Array1<f64>> {
    let z = hidden_features(params, act, inputs)?;
    Ok(z.t().dot(&params.readout))
}

/// Half mean-squared error `sum (y_i - pred_i)^2 / (2n)`.
pub fn mse_loss(pred: &Array1<f64>, labels: &Array1<f64>) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidDimension("loss of empty vectors".into()));
    }
    if pred.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "predictions have length {} but labels have length {}",
            pred.len(),
            labels.len()
        )));
    }
    let n = pred.len() as f64;
    let sq = pred
        .iter()
        .zip(labels.iter())
        .map(|(p, y)| (y - p) * (y - p))
        .sum::<f64>();
    Ok(sq / (2.0 * n))
}

/// Plain mean squared error, used for test-set reporting.
pub fn plain_mse(pred: &Array1<f64>, labels: &Array1<f64>) -> Result<f64> {
    Ok(2.0 * mse_loss(pred, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softplus_basics() {
        assert!((ActivationKind::Softplus.eval(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((ActivationKind::Softplus.eval(50.0) - 50.0).abs() < 1e-12);
        assert!(ActivationKind::Softplus.eval(800.0).is_finite());
        assert!((ActivationKind::Softplus.deriv(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tanh_basics() {
        assert_eq!(ActivationKind::Tanh.eval(0.0), 0.0);
        assert_eq!(ActivationKind::Tanh.deriv(0.0), 1.0);
        assert!((ActivationKind::Tanh.deriv(2.0) - (1.0 - 2.0f64.tanh().powi(2))).abs() < 1e-15);
    }

    #[test]
    fn init_rejects_zero_dims() {
        let mut g = Generator::from_seed(0);
        assert!(init_student(0, 3, InitScheme::Ntk, &mut g).is_err());
        assert!(init_student(3, 0, InitScheme::Ntk, &mut g).is_err());
    }

    #[test]
    fn single_entry_init_is_one_gaussian_draw() {
        let mut g = Generator::from_seed(11);
        let expect = {
            let mut g2 = Generator::from_seed(11);
            g2.standard_normal()
        };
        let p = init_student(1, 1, InitScheme::Ntk, &mut g).unwrap();
        assert_eq!(p.first_layer[[0, 0]], expect);
    }

    #[test]
    fn ntk_frobenius_concentration() {
        let mut g = Generator::from_seed(1);
        let p = init_student(1500, 1000, InitScheme::Ntk, &mut g).unwrap();
        let frob = p.first_layer.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = frob / (1500.0f64 * 1000.0).sqrt();
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
        // entry variance close to 1 for both layers
        let wvar = p.first_layer.iter().map(|v| v * v).sum::<f64>() / 1_500_000.0;
        let avar = p.readout.iter().map(|v| v * v).sum::<f64>() / 1500.0;
        assert!((0.95..=1.05).contains(&wvar), "w var {wvar}");
        assert!((0.9..=1.1).contains(&avar), "a var {avar}");
    }

    #[test]
    fn mean_field_frobenius_concentration() {
        let mut g = Generator::from_seed(2);
        let p = init_student(1500, 1000, InitScheme::MeanField, &mut g).unwrap();
        let frob = p.first_layer.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ratio = frob / 1500.0f64.sqrt();
        assert!((0.97..=1.03).contains(&ratio), "ratio {ratio}");
        let wvar = p.first_layer.iter().map(|v| v * v).sum::<f64>() / 1_500_000.0;
        assert!((wvar * 1000.0 - 1.0).abs() < 0.05, "w var {wvar}");
        let avar = p.readout.iter().map(|v| v * v).sum::<f64>() / 1500.0;
        assert!((avar * 1500.0 - 1.0).abs() < 0.1, "a var {avar}");
    }

    #[test]
    fn forward_scalar_case() {
        // h=1, d=1, identity activation, NTK: f(2) = a * (w * 2 / 1) / 1 = 12
        let p = StudentParams {
            first_layer: array![[2.0]],
            readout: array![3.0],
            scheme: InitScheme::Ntk,
        };
        let x = array![[2.0]];
        let out = forward(&p, ActivationKind::Identity, &x).unwrap();
        assert!((out[0] - 12.0).abs() < 1e-15);
    }

    #[test]
    fn zero_readout_predicts_zero() {
        let mut g = Generator::from_seed(4);
        let mut p = init_student(8, 5, InitScheme::Ntk, &mut g).unwrap();
        p.readout.fill(0.0);
        let x = g.normal_matrix(6, 5);
        let out = forward(&p, ActivationKind::Tanh, &x).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_forward_matches_matrix_product() {
        let mut g = Generator::from_seed(5);
        let p = init_student(7, 4, InitScheme::Ntk, &mut g).unwrap();
        let x = g.normal_matrix(9, 4);
        let out = forward(&p, ActivationKind::Identity, &x).unwrap();
        let direct = x.dot(&p.first_layer.t()).dot(&p.readout) / (7.0f64 * 4.0).sqrt();
        for (a, b) in out.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_features_consistent_with_forward() {
        let mut g = Generator::from_seed(6);
        let p = init_student(10, 6, InitScheme::Ntk, &mut g).unwrap();
        let x = g.normal_matrix(12, 6);
        let z = hidden_features(&p, ActivationKind::Tanh, &x).unwrap();
        let out = forward(&p, ActivationKind::Tanh, &x).unwrap();
        let via_z = z.t().dot(&p.readout);
        for (a, b) in out.iter().zip(via_z.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn hidden_features_zero_weights() {
        let p = StudentParams {
            first_layer: Array2::zeros((4, 3)),
            readout: Array1::ones(4),
            scheme: InitScheme::Ntk,
        };
        let x = array![[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]];
        let z = hidden_features(&p, ActivationKind::Tanh, &x).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let zs = hidden_features(&p, ActivationKind::Softplus, &x).unwrap();
        let expect = std::f64::consts::LN_2 / 2.0;
        assert!(zs.iter().all(|v| (*v - expect).abs() < 1e-15));
    }

    #[test]
    fn hidden_features_matches_per_sample_loop() {
        let mut g = Generator::from_seed(7);
        let p = init_student(5, 3, InitScheme::MeanField, &mut g).unwrap();
        let x = g.normal_matrix(4, 3);
        let z = hidden_features(&p, ActivationKind::Softplus, &x).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let pre: f64 = (0..3).map(|k| p.first_layer[[j, k]] * x[[i, k]]).sum();
                let want = ActivationKind::Softplus.eval(pre) / 5.0f64.sqrt();
                assert!((z[[j, i]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_linear_in_readout() {
        let mut g = Generator::from_seed(8);
        let p = init_student(16, 8, InitScheme::Ntk, &mut g).unwrap();
        let x = g.normal_matrix(10, 8);
        let mut p2 = p.clone();
        p2.readout.mapv_inplace(|v| 2.0 * v);
        let f1 = forward(&p, ActivationKind::Tanh, &x).unwrap();
        let f2 = forward(&p2, ActivationKind::Tanh, &x).unwrap();
        for (a, b) in f1.iter().zip(f2.iter()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn ntk_output_variance_is_order_one() {
        let mut g = Generator::from_seed(9);
        let p = init_student(300, 200, InitScheme::Ntk, &mut g).unwrap();
        let x = g.normal_matrix(2000, 200);
        let f = forward(&p, ActivationKind::Tanh, &x).unwrap();
        let mean = f.sum() / f.len() as f64;
        let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / f.len() as f64;
        assert!((0.05..=5.0).contains(&var), "var {var}");
    }

    #[test]
    fn scheme_separation_identity_activation() {
        let mut g = Generator::from_seed(10);
        let mut p = init_student(6, 9, InitScheme::Ntk, &mut g).unwrap();
        let x = g.normal_matrix(5, 9);
        let ntk = forward(&p, ActivationKind::Identity, &x).unwrap();
        p.scheme = InitScheme::MeanField;
        let mf = forward(&p, ActivationKind::Identity, &x).unwrap();
        // same W, a: mean-field skips the 1/sqrt(d) preactivation factor
        for (a, b) in ntk.iter().zip(mf.iter()) {
            assert!((a * 9.0f64.sqrt() - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn mse_loss_cases() {
        let y = array![0.0, 0.0];
        let p = array![1.0, 1.0];
        assert!((mse_loss(&p, &y).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(mse_loss(&y, &y).unwrap(), 0.0);
        assert!(mse_loss(&array![], &array![]).is_err());
        // against a plain summation oracle
        let mut g = Generator::from_seed(12);
        let a = g.normal_vector(33);
        let b = g.normal_vector(33);
        let mut acc = 0.0;
        for i in 0..33 {
            acc += (b[i] - a[i]) * (b[i] - a[i]);
        }
        assert!((mse_loss(&a, &b).unwrap() - acc / 66.0).abs() < 1e-14);
    }
}
