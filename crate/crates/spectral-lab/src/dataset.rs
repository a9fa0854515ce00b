//! Single-index teacher and Gaussian datasets.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::Generator;
use crate::student::ActivationKind;

/// The data-generating model: a unit target direction, a scalar link
/// function and the additive label noise level.
#[derive(Clone, Debug)]
pub struct TeacherSpec {
    pub target_direction: Array1<f64>,
    pub link: ActivationKind,
    pub noise_std: f64,
}

impl TeacherSpec {
    pub fn new(target_direction: Array1<f64>, link: ActivationKind, noise_std: f64) -> Result<Self> {
        let norm = target_direction.dot(&target_direction).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDimension(format!(
                "target direction must be unit length, got norm {norm}"
            )));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::InvalidConfig {
                field: "noise_std".into(),
                reason: format!("must be nonnegative, got {noise_std}"),
            });
        }
        Ok(Self {
            target_direction,
            link,
            noise_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.target_direction.len()
    }
}

/// Inputs and labels for one split. Clean labels (pre-noise) are retained so
/// test error can be reported against both.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Array1<f64>,
    pub clean_labels: Array1<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Standard Gaussian direction normalized to the unit sphere. Deterministic
/// given the generator state.
pub fn sample_target_direction(d: usize, rng: &mut Generator) -> Result<Array1<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension(
            "target direction needs d >= 1".into(),
        ));
    }
    loop {
        let v = rng.normal_vector(d);
        let norm = v.dot(&v).sqrt();
        // norm == 0 has probability zero; retry keeps the map total
        if norm > 0.0 {
            return Ok(v / norm);
        }
    }
}

/// Draw `n` rows of i.i.d. standard Gaussian inputs and label them with the
/// teacher. Stream order is part of the format contract: all of `X` row-major
/// first, then the `n` noise draws.
pub fn generate_dataset(
    teacher: &TeacherSpec,
    n: usize,
    d: usize,
    rng: &mut Generator,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidDimension("dataset needs n >= 1".into()));
    }
    if teacher.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "teacher direction has dimension {} but d = {d}",
            teacher.dim()
        )));
    }
    let inputs = rng.normal_matrix(n, d);
    let mut clean_labels = inputs.dot(&teacher.target_direction);
    clean_labels.mapv_inplace(|z| teacher.link.eval(z));
    let labels = if teacher.noise_std > 0.0 {
        let noise = rng.normal_vector(n);
        &clean_labels + &(noise * teacher.noise_std)
    } else {
        // keep the stream contract: noise draws happen even at rho_e = 0
        let _ = rng.normal_vector(n);
        clean_labels.clone()
    };
    Ok(Dataset {
        inputs,
        labels,
        clean_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::gauss_hermite_expect;

    fn teacher(d: usize, link: ActivationKind, rho: f64, seed: u64) -> TeacherSpec {
        let mut g = Generator::from_seed(seed);
        let beta = sample_target_direction(d, &mut g).unwrap();
        TeacherSpec::new(beta, link, rho).unwrap()
    }

    #[test]
    fn direction_d1_is_sign() {
        for seed in 0..20 {
            let mut g = Generator::from_seed(seed);
            let v = sample_target_direction(1, &mut g).unwrap();
            assert!((v[0].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_is_unit_and_deterministic() {
        let mut g1 = Generator::from_seed(123);
        let mut g2 = Generator::from_seed(123);
        let a = sample_target_direction(3, &mut g1).unwrap();
        let b = sample_target_direction(3, &mut g2).unwrap();
        assert_eq!(a, b);
        assert!((a.dot(&a).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn direction_rejects_d0() {
        let mut g = Generator::from_seed(0);
        assert!(sample_target_direction(0, &mut g).is_err());
    }

    #[test]
    fn high_dim_directions_nearly_orthogonal() {
        // |<b1, b2>| ~ 1/sqrt(d); at d=1000 staying under 0.2 is a ~6 sigma event
        for pair in 0..100u64 {
            let mut g1 = Generator::from_seed(1000 + 2 * pair);
            let mut g2 = Generator::from_seed(1001 + 2 * pair);
            let b1 = sample_target_direction(1000, &mut g1).unwrap();
            let b2 = sample_target_direction(1000, &mut g2).unwrap();
            let ip = b1.dot(&b2).abs();
            assert!(ip < 0.2, "pair {pair}: inner product {ip}");
        }
    }

    #[test]
    fn noiseless_identity_link_is_linear() {
        let t = teacher(6, ActivationKind::Identity, 0.0, 7);
        let mut g = Generator::from_seed(8);
        let ds = generate_dataset(&t, 50, 6, &mut g).unwrap();
        let direct = ds.inputs.dot(&t.target_direction);
        for (y, z) in ds.labels.iter().zip(direct.iter()) {
            assert!((y - z).abs() < 1e-12);
        }
        assert_eq!(ds.labels, ds.clean_labels);
    }

    #[test]
    fn noiseless_softplus_labels_positive() {
        let t = teacher(4, ActivationKind::Softplus, 0.0, 9);
        let mut g = Generator::from_seed(10);
        let ds = generate_dataset(&t, 200, 4, &mut g).unwrap();
        assert!(ds.labels.iter().all(|y| *y > 0.0));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let t = teacher(4, ActivationKind::Softplus, 0.0, 11);
        let mut g = Generator::from_seed(12);
        assert!(generate_dataset(&t, 10, 5, &mut g).is_err());
    }

    #[test]
    fn noise_variance_matches_rho_squared() {
        // rho = 0.3 -> Var(y - clean) = 0.09; Monte-Carlo window [0.08, 0.10]
        let t = teacher(10, ActivationKind::Softplus, 0.3, 13);
        let mut g = Generator::from_seed(14);
        let ds = generate_dataset(&t, 100_000, 10, &mut g).unwrap();
        let diff = &ds.labels - &ds.clean_labels;
        let mean = diff.sum() / diff.len() as f64;
        let var = diff.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / diff.len() as f64;
        assert!((0.08..=0.10).contains(&var), "noise variance {var}");
    }

    #[test]
    fn noise_std_within_twenty_percent_at_n1000() {
        let t = teacher(5, ActivationKind::Tanh, 0.5, 15);
        let mut g = Generator::from_seed(16);
        let ds = generate_dataset(&t, 1000, 5, &mut g).unwrap();
        let diff = &ds.labels - &ds.clean_labels;
        let mean = diff.sum() / diff.len() as f64;
        let sd =
            (diff.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / diff.len() as f64).sqrt();
        assert!((sd / 0.5 - 1.0).abs() < 0.2, "sample std {sd}");
    }

    #[test]
    fn softplus_label_mean_matches_quadrature() {
        // E[softplus(z)] for z ~ N(0,1), via Gauss-Hermite
        let expect = gauss_hermite_expect(|z| ActivationKind::Softplus.eval(z));
        let t = teacher(50, ActivationKind::Softplus, 0.0, 17);
        let mut g = Generator::from_seed(18);
        let ds = generate_dataset(&t, 100_000, 50, &mut g).unwrap();
        let mean = ds.clean_labels.sum() / ds.clean_labels.len() as f64;
        assert!(
            (mean / expect - 1.0).abs() < 0.02,
            "sample mean {mean} vs quadrature {expect}"
        );
        // the quadrature value itself is ~0.8061
        assert!((expect - 0.8061).abs() < 0.001, "E[softplus] {expect}");
    }

    #[test]
    fn bitwise_deterministic() {
        let t = teacher(8, ActivationKind::Softplus, 0.3, 19);
        let mut g1 = Generator::from_seed(20);
        let mut g2 = Generator::from_seed(20);
        let a = generate_dataset(&t, 64, 8, &mut g1).unwrap();
        let b = generate_dataset(&t, 64, 8, &mut g2).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
    }
}
