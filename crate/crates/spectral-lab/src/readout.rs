//! Stage-two ridge regression on frozen hidden features, loss evaluation,
//! and the alignment metrics (kernel-target alignment, similarity of the
//! first layer's principal direction with the target).

use ndarray::{Array1, Array2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::student::{hidden_features, plain_mse, ActivationKind, StudentParams};

/// Fitted readout vector together with the ridge objective it minimizes.
#[derive(Clone, Debug)]
pub struct ReadoutSolution {
    pub a_hat: Array1<f64>,
    pub lambda: f64,
    /// Full objective `||y - Z^T a||^2 / n + lambda ||a||^2 / h` at `a_hat`.
    pub train_objective: f64,
}

/// Alignment numbers reported per recorded step; both live in [0, 1].
#[derive(Clone, Copy, Debug)]
pub struct AlignmentReport {
    pub kta: f64,
    pub sim_w_beta: f64,
}

impl AlignmentReport {
    pub fn new(kta: f64, sim_w_beta: f64) -> Self {
        debug_assert!((0.0..=1.0 + 1e-10).contains(&kta), "kta {kta}");
        debug_assert!(
            (0.0..=1.0 + 1e-10).contains(&sim_w_beta),
            "sim {sim_w_beta}"
        );
        Self { kta, sim_w_beta }
    }
}

/// Solve `min_a ||y - Z^T a||^2 / n + lambda ||a||^2 / h` through the
/// stationarity system `(Z Z^T / n + lambda/h I) a = Z y / n` (h x h, SPD).
pub fn ridge_fit(features: &Array2<f64>, labels: &Array1<f64>, lambda: f64) -> Result<ReadoutSolution> {
    let (h, n) = features.dim();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "features have {n} columns but labels have length {}",
            labels.len()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidConfig {
            field: "lambda".into(),
            reason: format!("must be nonnegative, got {lambda}"),
        });
    }
    let n_f = n as f64;
    let mut system = features.dot(&features.t());
    system.mapv_inplace(|v| v / n_f);
    let ridge = lambda / h as f64;
    for i in 0..h {
        system[[i, i]] += ridge;
    }
    let rhs = features.dot(labels) / n_f;
    let a_hat = linalg::solve_spd(&system, &rhs).map_err(|e| match e {
        Error::SingularSystem(_) if lambda == 0.0 => Error::SingularSystem(
            "feature Gram matrix is singular at lambda = 0; use lambda > 0".into(),
        ),
        other => other,
    })?;
    let resid = labels - &features.t().dot(&a_hat);
    let train_objective =
        resid.dot(&resid) / n_f + ridge * a_hat.dot(&a_hat);
    Ok(ReadoutSolution {
        a_hat,
        lambda,
        train_objective,
    })
}

/// Data-fit and test losses for a fitted readout.
#[derive(Clone, Copy, Debug)]
pub struct LossReport {
    /// `||y - Z^T a||^2 / n` on the holdout split (the ridge data-fit term).
    pub train_loss: f64,
    /// Mean squared error on the test split, noisy labels.
    pub test_loss: f64,
    /// Mean squared error on the test split against the noise-free labels.
    pub test_loss_clean: f64,
}

/// Evaluate a fitted readout: holdout data-fit loss plus test MSE against
/// both noisy and clean labels.
pub fn eval_losses(
    params: &StudentParams,
    act: ActivationKind,
    a_hat: &Array1<f64>,
    holdout: &Dataset,
    test: &Dataset,
) -> Result<LossReport> {
    let z = hidden_features(params, act, &holdout.inputs)?;
    let resid = &holdout.labels - &z.t().dot(a_hat);
    let train_loss = resid.dot(&resid) / holdout.len() as f64;
    let zt = hidden_features(params, act, &test.inputs)?;
    let pred = zt.t().dot(a_hat);
    let test_loss = plain_mse(&pred, &test.labels)?;
    let test_loss_clean = plain_mse(&pred, &test.clean_labels)?;
    Ok(LossReport {
        train_loss,
        test_loss,
        test_loss_clean,
    })
}

/// Conjugate kernel `K = Z^T Z` of a feature matrix.
pub fn conjugate_kernel(features: &Array2<f64>) -> Array2<f64> {
    features.t().dot(features)
}

/// Kernel-target alignment `<K, y y^T> / (||K||_F ||y y^T||_F)`.
pub fn kta(kernel: &Array2<f64>, labels: &Array1<f64>) -> Result<f64> {
    let (m, n) = kernel.dim();
    if m != n || labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "kernel is {m}x{n}, labels have length {}",
            labels.len()
        )));
    }
    let y_sq = labels.dot(labels);
    let k_frob = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
    if y_sq == 0.0 || k_frob == 0.0 {
        return Err(Error::InvalidDimension(
            "kernel-target alignment undefined for zero kernel or zero labels".into(),
        ));
    }
    let inner = labels.dot(&kernel.dot(labels));
    Ok(inner / (k_frob * y_sq))
}

/// Same quantity as [`kta`] computed without materializing the n x n kernel:
/// `<Z^T Z, y y^T> = ||Z y||^2` and `||Z^T Z||_F = ||Z Z^T||_F`.
pub fn kta_from_features(features: &Array2<f64>, labels: &Array1<f64>) -> Result<f64> {
    if features.ncols() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} columns but labels have length {}",
            features.ncols(),
            labels.len()
        )));
    }
    let y_sq = labels.dot(labels);
    let gram = features.dot(&features.t());
    let k_frob = gram.iter().map(|v| v * v).sum::<f64>().sqrt();
    if y_sq == 0.0 || k_frob == 0.0 {
        return Err(Error::InvalidDimension(
            "kernel-target alignment undefined for zero kernel or zero labels".into(),
        ));
    }
    let zy = features.dot(labels);
    Ok(zy.dot(&zy) / (k_frob * y_sq))
}

/// `|u_1^T beta|` where `u_1` is the top right singular vector of `W` (the
/// principal direction of the rows, living in the same space as `beta`).
pub fn sim_target(weights: &Array2<f64>, beta: &Array1<f64>) -> Result<f64> {
    if weights.ncols() != beta.len() {
        return Err(Error::ShapeMismatch(format!(
            "weights have {} columns but beta has length {}",
            weights.ncols(),
            beta.len()
        )));
    }
    if weights.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidDimension(
            "principal direction of the zero matrix is undefined".into(),
        ));
    }
    let (_, _, vt) = linalg::svd_thin(weights)?;
    Ok(vt.row(0).dot(beta).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Generator;
    use crate::student::{init_student, InitScheme};
    use ndarray::array;

    #[test]
    fn ridge_norm_shrinks_with_lambda() {
        let mut g = Generator::from_seed(1);
        let z = g.normal_matrix(20, 30);
        let y = g.normal_vector(30);
        let mut last = f64::INFINITY;
        for lambda in [1e-2, 1.0, 1e2, 1e4] {
            let sol = ridge_fit(&z, &y, lambda).unwrap();
            let norm = sol.a_hat.dot(&sol.a_hat).sqrt();
            assert!(norm < last, "lambda {lambda}: norm {norm} !< {last}");
            last = norm;
        }
        let huge = ridge_fit(&z, &y, 1e9).unwrap();
        let rhs_norm = (z.dot(&y) / 30.0).dot(&(z.dot(&y) / 30.0)).sqrt();
        let norm = huge.a_hat.dot(&huge.a_hat).sqrt();
        assert!(norm <= 1e-6 * rhs_norm * 20.0, "norm {norm} under huge ridge");
    }

    #[test]
    fn identity_features_recover_labels_at_lambda_zero() {
        let n = 12;
        let z = Array2::<f64>::eye(n);
        let mut g = Generator::from_seed(2);
        let y = g.normal_vector(n);
        let sol = ridge_fit(&z, &y, 0.0).unwrap();
        for (a, b) in sol.a_hat.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hand_instance_matches_inverse_oracle() {
        let z = array![[1.0, 2.0], [3.0, -1.0]];
        let y = array![0.5, -2.0];
        let (lambda, h, n) = (0.7, 2.0, 2.0);
        let sol = ridge_fit(&z, &y, lambda).unwrap();
        // explicit 2x2 inverse of (Z Z^T / n + lambda/h I)
        let gram = z.dot(&z.t()) / n;
        let a00 = gram[[0, 0]] + lambda / h;
        let a01 = gram[[0, 1]];
        let a11 = gram[[1, 1]] + lambda / h;
        let det = a00 * a11 - a01 * a01;
        let rhs = z.dot(&y) / n;
        let want = array![
            (a11 * rhs[0] - a01 * rhs[1]) / det,
            (-a01 * rhs[0] + a00 * rhs[1]) / det
        ];
        for (a, b) in sol.a_hat.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn normal_equation_residual_bound() {
        let mut g = Generator::from_seed(3);
        let z = g.normal_matrix(40, 25);
        let y = g.normal_vector(25);
        let lambda = 0.01;
        let sol = ridge_fit(&z, &y, lambda).unwrap();
        let n = 25.0;
        let mut system = z.dot(&z.t()) / n;
        for i in 0..40 {
            system[[i, i]] += lambda / 40.0;
        }
        let rhs = z.dot(&y) / n;
        let resid = &system.dot(&sol.a_hat) - &rhs;
        let r = resid.dot(&resid).sqrt();
        let b = rhs.dot(&rhs).sqrt();
        assert!(r <= 1e-8 * b, "residual {r} vs bound {}", 1e-8 * b);
    }

    #[test]
    fn solution_is_a_local_minimum() {
        let mut g = Generator::from_seed(4);
        let z = g.normal_matrix(15, 20);
        let y = g.normal_vector(20);
        let lambda = 0.5;
        let sol = ridge_fit(&z, &y, lambda).unwrap();
        let objective = |a: &Array1<f64>| {
            let r = &y - &z.t().dot(a);
            r.dot(&r) / 20.0 + lambda / 15.0 * a.dot(a)
        };
        let base = objective(&sol.a_hat);
        assert!((base - sol.train_objective).abs() < 1e-12);
        for _ in 0..10 {
            let dir = g.normal_vector(15);
            let unit = &dir / dir.dot(&dir).sqrt();
            for sign in [1.0, -1.0] {
                let perturbed = &sol.a_hat + &(unit.clone() * (1e-3 * sign));
                assert!(objective(&perturbed) >= base, "perturbation decreased objective");
            }
        }
    }

    fn toy_dataset(inputs: Array2<f64>, labels: Array1<f64>) -> Dataset {
        Dataset {
            clean_labels: labels.clone(),
            inputs,
            labels,
        }
    }

    #[test]
    fn test_equals_train_when_same_split() {
        let mut g = Generator::from_seed(5);
        let params = init_student(8, 8, InitScheme::Ntk, &mut g).unwrap();
        let data = toy_dataset(g.normal_matrix(8, 8), g.normal_vector(8));
        let z = hidden_features(&params, ActivationKind::Tanh, &data.inputs).unwrap();
        let sol = ridge_fit(&z, &data.labels, 0.0).unwrap();
        let report = eval_losses(&params, ActivationKind::Tanh, &sol.a_hat, &data, &data).unwrap();
        assert!(
            (report.train_loss - report.test_loss).abs() <= 1e-12 * report.train_loss.max(1e-12),
            "{} vs {}",
            report.train_loss,
            report.test_loss
        );
    }

    #[test]
    fn zero_readout_reports_label_power() {
        let mut g = Generator::from_seed(6);
        let params = init_student(6, 4, InitScheme::Ntk, &mut g).unwrap();
        let data = toy_dataset(g.normal_matrix(10, 4), g.normal_vector(10));
        let zero = Array1::<f64>::zeros(6);
        let report = eval_losses(&params, ActivationKind::Tanh, &zero, &data, &data).unwrap();
        let power = data.labels.dot(&data.labels) / 10.0;
        assert!((report.train_loss - power).abs() < 1e-12);
        assert!((report.test_loss - power).abs() < 1e-12);
    }

    #[test]
    fn conjugate_kernel_contract() {
        let mut g = Generator::from_seed(7);
        // orthonormal columns -> identity kernel
        let q = {
            let a = g.normal_matrix(6, 3);
            let (u, _, _) = linalg::svd_thin(&a).unwrap();
            u
        };
        let k = conjugate_kernel(&q);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((k[[i, j]] - want).abs() < 1e-12);
            }
        }
        let z = g.normal_matrix(4, 3);
        let k = conjugate_kernel(&z);
        let asym = (&k - &k.t()).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert_eq!(asym, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for l in 0..4 {
                    acc += z[[l, i]] * z[[l, j]];
                }
                assert!((k[[i, j]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kta_known_values() {
        let mut g = Generator::from_seed(8);
        let y = g.normal_vector(9);
        let yy = Array2::from_shape_fn((9, 9), |(i, j)| y[i] * y[j]);
        assert!((kta(&yy, &y).unwrap() - 1.0).abs() < 1e-12);
        let eye = Array2::<f64>::eye(9);
        assert!((kta(&eye, &y).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(kta(&Array2::zeros((3, 3)), &array![1.0, 2.0, 3.0]).is_err());
        assert!(kta(&eye, &Array1::zeros(9)).is_err());
    }

    #[test]
    fn kta_matches_double_sum_oracle() {
        let mut g = Generator::from_seed(9);
        let z = g.normal_matrix(5, 7);
        let k = conjugate_kernel(&z);
        let y = g.normal_vector(7);
        let mut inner = 0.0;
        let mut k_frob = 0.0;
        let mut y_frob = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                inner += k[[i, j]] * y[i] * y[j];
                k_frob += k[[i, j]] * k[[i, j]];
                y_frob += y[i] * y[i] * y[j] * y[j];
            }
        }
        let want = inner / (k_frob.sqrt() * y_frob.sqrt());
        assert!((kta(&k, &y).unwrap() - want).abs() < 1e-12);
        assert!((kta_from_features(&z, &y).unwrap() - want).abs() < 1e-12);
        assert!(want >= 0.0 && want <= 1.0);
    }

    #[test]
    fn sim_target_rank_one_aligned() {
        let mut g = Generator::from_seed(10);
        let beta = crate::dataset::sample_target_direction(6, &mut g).unwrap();
        let a = g.normal_vector(9);
        let w = Array2::from_shape_fn((9, 6), |(i, j)| a[i] * beta[j]);
        assert!((sim_target(&w, &beta).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sim_target_orthogonal_rows() {
        // rows supported on the first two coordinates, beta on the third
        let w = array![[1.0, 2.0, 0.0], [3.0, -1.0, 0.0], [0.5, 0.5, 0.0]];
        let beta = array![0.0, 0.0, 1.0];
        assert!(sim_target(&w, &beta).unwrap() < 1e-10);
        assert!(sim_target(&Array2::zeros((2, 2)), &array![1.0, 0.0]).is_err());
    }

    #[test]
    fn sim_target_matches_power_iteration_oracle() {
        let mut g = Generator::from_seed(11);
        let w = g.normal_matrix(12, 7);
        let beta = crate::dataset::sample_target_direction(7, &mut g).unwrap();
        // power iteration on W^T W, run to 1e-12
        let mut v = g.normal_vector(7);
        v /= v.dot(&v).sqrt();
        for _ in 0..20_000 {
            let mut next = w.t().dot(&w.dot(&v));
            next /= next.dot(&next).sqrt();
            let delta = (&next - &v).iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            v = next;
            if delta < 1e-13 {
                break;
            }
        }
        let want = v.dot(&beta).abs();
        let got = sim_target(&w, &beta).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn sim_target_invariances() {
        let mut g = Generator::from_seed(12);
        let w = g.normal_matrix(8, 5);
        let beta = crate::dataset::sample_target_direction(5, &mut g).unwrap();
        let base = sim_target(&w, &beta).unwrap();
        // row permutation
        let mut permuted = w.clone();
        for j in 0..5 {
            permuted.swap((0, j), (7, j));
        }
        assert!((sim_target(&permuted, &beta).unwrap() - base).abs() < 1e-10);
        // global sign flip
        let negated = w.mapv(|v| -v);
        assert!((sim_target(&negated, &beta).unwrap() - base).abs() < 1e-10);
    }
}
