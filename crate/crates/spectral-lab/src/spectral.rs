//! Spectral analysis of weight matrices: thin SVD, the empirical spectral
//! density of `W^T W`, spike statistics, power-law tail exponents (Hill and
//! KS-minimizing fits), singular-vector overlap matrices and histogram export.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg;

/// Thin SVD with a deterministic sign convention: the largest-magnitude
/// entry of every left singular vector is nonnegative.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `h x b`, column-orthonormal.
    pub left: Array2<f64>,
    /// Length `b`, nonincreasing.
    pub singular_values: Array1<f64>,
    /// `d x b`, column-orthonormal (right singular vectors as columns).
    pub right: Array2<f64>,
}

impl SvdResult {
    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }
}

/// Thin SVD of a real matrix with finite entries.
pub fn svd(weights: &Array2<f64>) -> Result<SvdResult> {
    if let Some(bad) = weights.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix entry {bad}")));
    }
    let (mut u, s, vt) = linalg::svd_thin(weights)?;
    let mut v = vt.t().to_owned();
    let b = s.len();
    for j in 0..b {
        let col = u.column(j);
        let mut arg = 0usize;
        let mut best = -1.0f64;
        for (i, val) in col.iter().enumerate() {
            if val.abs() > best {
                best = val.abs();
                arg = i;
            }
        }
        if u[[arg, j]] < 0.0 {
            u.column_mut(j).mapv_inplace(|x| -x);
            v.column_mut(j).mapv_inplace(|x| -x);
        }
    }
    Ok(SvdResult {
        left: u,
        singular_values: s,
        right: v,
    })
}

/// Squared singular values in descending order, padded with the structural
/// zeros of `W^T W` (when `h < d`) so the vector always has length `d`.
pub fn esd_from_singular_values(s: &Array1<f64>, d: usize) -> Array1<f64> {
    let mut eigs = Array1::<f64>::zeros(d.max(s.len()));
    for (i, sv) in s.iter().enumerate() {
        eigs[i] = sv * sv;
    }
    eigs
}

/// Eigenvalues of `W^T W` in descending order: the squared singular values,
/// padded with the structural zeros when `h < d` so the vector always has
/// length `d`. Shares [`svd`]'s decomposition path so a checkpoint
/// re-analyzed from disk reproduces the in-run report bit for bit.
pub fn esd(weights: &Array2<f64>) -> Result<Array1<f64>> {
    let r = svd(weights)?;
    Ok(esd_from_singular_values(&r.singular_values, weights.ncols()))
}

/// Entrywise squared cross-Gram of two singular-vector matrices.
#[derive(Clone, Debug)]
pub struct OverlapMatrix {
    pub values: Array2<f64>,
}

/// `O(J, Q) = (J^T Q)^{o2}` for column-orthonormal `J`, `Q` sharing a row
/// count.
pub fn overlap(j: &Array2<f64>, q: &Array2<f64>) -> Result<OverlapMatrix> {
    if j.nrows() != q.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "overlap factors have {} and {} rows",
            j.nrows(),
            q.nrows()
        )));
    }
    let mut values = j.t().dot(q);
    values.mapv_inplace(|x| x * x);
    Ok(OverlapMatrix { values })
}

fn positive_sorted_desc(eigenvalues: &[f64]) -> Vec<f64> {
    let mut vals: Vec<f64> = eigenvalues.iter().copied().filter(|v| *v > 0.0).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Default Hill order statistic count: half the positive spectrum.
pub fn hill_default_k(positive_count: usize) -> usize {
    positive_count / 2
}

/// Hill tail-index estimate over the top `k` eigenvalues:
/// `1 + k / sum_{i<=k} ln(lam_(i) / lam_(k+1))`.
pub fn pl_alpha_hill(eigenvalues: &[f64], k: usize) -> Result<f64> {
    let vals = positive_sorted_desc(eigenvalues);
    if k == 0 {
        return Err(Error::InsufficientData("Hill estimator needs k >= 1".into()));
    }
    if vals.len() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "Hill estimator with k={k} needs k+1 positive eigenvalues, have {}",
            vals.len()
        )));
    }
    let pivot = vals[k];
    let denom: f64 = vals[..k].iter().map(|v| (v / pivot).ln()).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateTail(
            "top k+1 eigenvalues are all equal; tail index undefined".into(),
        ));
    }
    Ok(1.0 + k as f64 / denom)
}

/// Number of extreme eigenvalues excluded from the KS cutoff search so the
/// fit always keeps a tail.
pub const KS_XMIN_EXCLUDE_TOP: usize = 5;

/// Maximum number of cutoff candidates; log-spaced thinning kicks in above.
pub const KS_MAX_CANDIDATES: usize = 200;

/// Power-law tail fit by KS-distance minimization over the cutoff `x_min`:
/// for each candidate cutoff from the unique positive eigenvalues (excluding
/// the top few so the tail is never empty, thinned to at most 200 log-spaced
/// points), fit the continuous MLE `alpha = 1 + n_tail / sum ln(lam/x_min)`
/// and keep the `(alpha, x_min, ks)` triple with the smallest KS distance.
pub fn pl_alpha_ks(eigenvalues: &[f64]) -> Result<(f64, f64, f64)> {
    pl_alpha_ks_with(eigenvalues, KS_XMIN_EXCLUDE_TOP)
}

/// Same fit with an explicit number of top values excluded from the cutoff
/// search (0 searches the full range).
pub fn pl_alpha_ks_with(eigenvalues: &[f64], exclude_top: usize) -> Result<(f64, f64, f64)> {
    let mut vals = positive_sorted_desc(eigenvalues);
    if vals.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "KS power-law fit needs at least 50 positive eigenvalues, have {}",
            vals.len()
        )));
    }
    vals.reverse(); // ascending from here on
    let mut unique: Vec<f64> = Vec::with_capacity(vals.len());
    for v in &vals {
        if unique.last() != Some(v) {
            unique.push(*v);
        }
    }
    if unique.len() <= exclude_top + 1 {
        return Err(Error::DegenerateTail(
            "not enough distinct eigenvalues for a cutoff search".into(),
        ));
    }
    let candidates: Vec<f64> = {
        let pool = &unique[..unique.len() - exclude_top];
        if pool.len() <= KS_MAX_CANDIDATES {
            pool.to_vec()
        } else {
            // log-spaced targets snapped to the nearest pool value from below
            let lo = pool[0].ln();
            let hi = pool[pool.len() - 1].ln();
            let mut picked = Vec::with_capacity(KS_MAX_CANDIDATES);
            for i in 0..KS_MAX_CANDIDATES {
                let t =
                    (lo + (hi - lo) * i as f64 / (KS_MAX_CANDIDATES - 1) as f64).exp();
                let idx = match pool.binary_search_by(|p| p.total_cmp(&t)) {
                    Ok(i) => i,
                    Err(0) => 0,
                    Err(i) => i - 1,
                };
                picked.push(pool[idx]);
            }
            picked.dedup();
            picked
        }
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &x_min in &candidates {
        let start = vals.partition_point(|v| *v < x_min);
        let tail = &vals[start..];
        let nt = tail.len();
        if nt < 2 {
            continue;
        }
        let denom: f64 = tail.iter().map(|v| (v / x_min).ln()).sum();
        if denom <= 0.0 {
            continue;
        }
        let alpha = 1.0 + nt as f64 / denom;
        // KS distance between the empirical tail CDF and
        // F(x) = 1 - (x / x_min)^{-(alpha - 1)}
        let mut ks = 0.0f64;
        for (i, v) in tail.iter().enumerate() {
            let fit = 1.0 - (v / x_min).powf(-(alpha - 1.0));
            let lo = i as f64 / nt as f64;
            let hi = (i + 1) as f64 / nt as f64;
            ks = ks.max((fit - lo).abs()).max((hi - fit).abs());
        }
        if best.is_none_or(|(_, _, b)| ks < b) {
            best = Some((alpha, x_min, ks));
        }
    }
    best.ok_or_else(|| Error::DegenerateTail("no viable power-law cutoff".into()))
}

/// Largest eigenvalue, bulk edge (second largest) and their ratio.
pub fn spike_stats(eigenvalues: &[f64]) -> Result<(f64, f64, f64)> {
    if eigenvalues.len() < 2 {
        return Err(Error::InsufficientData(
            "spike statistics need at least two eigenvalues".into(),
        ));
    }
    let mut sorted: Vec<f64> = eigenvalues.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let lambda_max = sorted[0];
    let bulk_edge = sorted[1];
    Ok((lambda_max, bulk_edge, lambda_max / bulk_edge))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistogramScale {
    Linear,
    Log,
}

/// Equal-width histogram on the chosen axis. Returns `bins + 1` edges and
/// `bins` counts summing to the number of values.
pub fn histogram(
    values: &[f64],
    bins: usize,
    scale: HistogramScale,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if values.is_empty() {
        return Err(Error::InsufficientData("histogram of no values".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidDimension("histogram needs bins >= 1".into()));
    }
    if scale == HistogramScale::Log && values.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidDimension(
            "log-scale histogram needs strictly positive values".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = match scale {
        HistogramScale::Linear => {
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
        HistogramScale::Log => {
            if lo == hi {
                (lo / 2.0, hi * 2.0)
            } else {
                (lo, hi)
            }
        }
    };
    let (tlo, thi) = match scale {
        HistogramScale::Linear => (lo, hi),
        HistogramScale::Log => (lo.ln(), hi.ln()),
    };
    let width = (thi - tlo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| {
            let t = tlo + width * i as f64;
            match scale {
                HistogramScale::Linear => t,
                HistogramScale::Log => t.exp(),
            }
        })
        .collect();
    let mut counts = vec![0usize; bins];
    for v in values {
        let t = match scale {
            HistogramScale::Linear => *v,
            HistogramScale::Log => v.ln(),
        };
        let idx = (((t - tlo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    Ok((edges, counts))
}

/// Per-step spectral summary of a weight matrix. Estimator fields fall back
/// to NaN when the spectrum is too degenerate for the fit (the standalone
/// estimator functions keep their error contracts).
#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub eigenvalues: Array1<f64>,
    pub lambda_max: f64,
    pub bulk_edge: f64,
    pub separation: f64,
    pub pl_alpha_hill: f64,
    pub pl_alpha_ks: f64,
    pub ks_xmin: f64,
    pub ks_stat: f64,
}

impl SpectralReport {
    pub fn from_eigenvalues(eigenvalues: Array1<f64>) -> Result<Self> {
        let slice = eigenvalues
            .as_slice()
            .expect("eigenvalues are contiguous");
        let (lambda_max, bulk_edge, separation) = spike_stats(slice)?;
        let positive = slice.iter().filter(|v| **v > 0.0).count();
        let pl_alpha_hill =
            pl_alpha_hill(slice, hill_default_k(positive)).unwrap_or(f64::NAN);
        let (pl_alpha_ks, ks_xmin, ks_stat) =
            pl_alpha_ks(slice).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        Ok(Self {
            eigenvalues,
            lambda_max,
            bulk_edge,
            separation,
            pl_alpha_hill,
            pl_alpha_ks,
            ks_xmin,
            ks_stat,
        })
    }

    pub fn from_weights(weights: &Array2<f64>) -> Result<Self> {
        Self::from_eigenvalues(esd(weights)?)
    }
}
