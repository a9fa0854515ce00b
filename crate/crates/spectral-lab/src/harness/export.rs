//! Plot-data export: CSV tables, histograms, WMAT1 checkpoints and a hashed
//! file manifest. All floating-point values are printed with 17 significant
//! digits so re-exports of identical bundles are byte-identical.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use super::run::ResultBundle;
use super::wmat;
use crate::error::{Error, Result};
use crate::spectral::{histogram, HistogramScale};
use crate::theory::NormSweepRow;

pub const HISTOGRAM_BINS: usize = 100;

/// 17 significant digits; enough to reconstruct the exact f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    pub wall_clock_secs: f64,
    pub blas_threads: usize,
}

struct Exporter {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Exporter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

/// Write every artifact of a finished run into `out_dir` and a
/// `manifest.json` listing the files with their content hashes.
pub fn export_bundle(bundle: &ResultBundle, out_dir: &Path) -> Result<Manifest> {
    let mut ex = Exporter::new(out_dir)?;

    ex.write("config.json", bundle.config.to_json_pretty().as_bytes())?;

    let mut losses = String::from(
        "step,train_loss,test_loss,test_loss_clean,kta,sim,pl_alpha_hill,pl_alpha_ks,lambda_max,separation\n",
    );
    for m in &bundle.metrics {
        losses.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            m.step,
            fmt_float(m.train_loss),
            fmt_float(m.test_loss),
            fmt_float(m.test_loss_clean),
            fmt_float(m.kta()),
            fmt_float(m.sim()),
            fmt_float(m.report.pl_alpha_hill),
            fmt_float(m.report.pl_alpha_ks),
            fmt_float(m.report.lambda_max),
            fmt_float(m.report.separation),
        ));
    }
    ex.write("losses.csv", losses.as_bytes())?;

    for m in &bundle.metrics {
        let mut esd_csv = String::from("index,eigenvalue\n");
        for (i, lam) in m.report.eigenvalues.iter().enumerate() {
            esd_csv.push_str(&format!("{i},{}\n", fmt_float(*lam)));
        }
        ex.write(&format!("esd_step{}.csv", m.step), esd_csv.as_bytes())?;

        let values: Vec<f64> = m.report.eigenvalues.to_vec();
        let (edges, counts) = histogram(&values, HISTOGRAM_BINS, HistogramScale::Linear)?;
        ex.write(
            &format!("hist_step{}_lin.csv", m.step),
            hist_csv(&edges, &counts).as_bytes(),
        )?;
        let positives: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
        if !positives.is_empty() {
            let (edges, counts) = histogram(&positives, HISTOGRAM_BINS, HistogramScale::Log)?;
            ex.write(
                &format!("hist_step{}_log.csv", m.step),
                hist_csv(&edges, &counts).as_bytes(),
            )?;
        }
    }

    for pair in &bundle.overlaps {
        ex.write(
            &format!("overlap_u_step{}.csv", pair.step),
            dense_csv(&pair.left.values).as_bytes(),
        )?;
        ex.write(
            &format!("overlap_v_step{}.csv", pair.step),
            dense_csv(&pair.right.values).as_bytes(),
        )?;
    }

    for (step, weights) in &bundle.checkpoints {
        let name = format!("checkpoint_step{step}.wmat");
        wmat::write_matrix(&ex.dir.join(&name), weights)?;
        let bytes = std::fs::read(ex.dir.join(&name)).map_err(|e| Error::Io {
            path: name.clone(),
            source: e,
        })?;
        ex.entries.push(ManifestEntry {
            path: name,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }

    let manifest = Manifest {
        files: ex.entries.clone(),
        wall_clock_secs: bundle.wall_clock_secs,
        blas_threads: bundle.blas_threads,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = ex.dir.join("manifest.json");
    std::fs::write(&path, manifest_json.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(manifest)
}

fn hist_csv(edges: &[f64], counts: &[usize]) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{c}\n",
            fmt_float(edges[i]),
            fmt_float(edges[i + 1])
        ));
    }
    out
}

fn dense_csv(values: &ndarray::Array2<f64>) -> String {
    let mut out = String::new();
    for row in values.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt_float(*v));
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Optional dataset export: inputs, labels and clean labels as WMAT1 files
/// (`<prefix>_inputs.wmat`, `<prefix>_labels.wmat`,
/// `<prefix>_clean_labels.wmat`); labels are stored as n x 1 matrices.
/// Datasets are regenerable from (seed, config), so nothing calls this on
/// the standard paths.
pub fn export_dataset(
    dataset: &crate::dataset::Dataset,
    dir: &Path,
    prefix: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let n = dataset.len();
    let as_column = |v: &ndarray::Array1<f64>| {
        ndarray::Array2::from_shape_vec((n, 1), v.to_vec()).expect("column shape")
    };
    wmat::write_matrix(&dir.join(format!("{prefix}_inputs.wmat")), &dataset.inputs)?;
    wmat::write_matrix(
        &dir.join(format!("{prefix}_labels.wmat")),
        &as_column(&dataset.labels),
    )?;
    wmat::write_matrix(
        &dir.join(format!("{prefix}_clean_labels.wmat")),
        &as_column(&dataset.clean_labels),
    )
}

/// Norm-sweep CSV with the column layout consumed by the scaling plots.
pub fn norm_sweep_csv(rows: &[NormSweepRow]) -> String {
    let mut out = String::from(
        "index,n,h,d,sqrt_hd,frob_norm,spec_norm,sign_agreement,min_abs_g0\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.n,
            r.h,
            r.d,
            fmt_float(r.sqrt_hd),
            fmt_float(r.frob_norm),
            fmt_float(r.spec_norm),
            fmt_float(r.sign_agreement),
            fmt_float(r.min_abs_g0),
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, text.as_bytes()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
