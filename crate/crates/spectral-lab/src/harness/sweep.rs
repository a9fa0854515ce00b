//! Parameter sweeps: a Cartesian grid over config fields crossed with seed
//! replicates, cells run in a worker pool, reduced to a per-grid-point
//! mean/std summary of the final-step metrics.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{run_experiment, ResultBundle};
use crate::error::{Error, Result};
use crate::rng::{hash_descriptor, mix_seed};

/// Config fields a sweep may vary.
pub const GRID_KEYS: &[&str] = &[
    "n",
    "n_test",
    "d",
    "h",
    "eta0",
    "steps",
    "optimizer",
    "beta1",
    "beta2",
    "epsilon",
    "bias_correction",
    "lambda",
    "rho_e",
    "student_act",
    "teacher_act",
    "init",
    "weight_norm",
    "checkpoint_every",
    "record_overlaps",
    "schedule.kind",
    "schedule.gamma",
    "schedule.t_max",
    "schedule.eta_min",
];

/// Metrics aggregated in sweep summaries (taken at the final recorded step).
pub const METRIC_NAMES: &[&str] = &[
    "train_loss",
    "test_loss",
    "test_loss_clean",
    "kta",
    "sim",
    "pl_alpha_hill",
    "pl_alpha_ks",
    "lambda_max",
    "separation",
    "first_update_frob_ratio",
];

pub type FinalMetrics = [f64; 10];

pub fn final_metrics(bundle: &ResultBundle) -> FinalMetrics {
    let m = bundle.metrics.last().expect("at least step 0");
    [
        m.train_loss,
        m.test_loss,
        m.test_loss_clean,
        m.kta(),
        m.sim(),
        m.report.pl_alpha_hill,
        m.report.pl_alpha_ks,
        m.report.lambda_max,
        m.report.separation,
        bundle.first_update_frob_ratio,
    ]
}

#[derive(Clone, Debug)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parse a `KEY=V1,V2,...` grid argument.
pub fn parse_grid_arg(arg: &str) -> Result<GridAxis> {
    let (key, rest) = arg.split_once('=').ok_or_else(|| Error::ConfigParse(format!(
        "grid argument `{arg}` must look like KEY=V1,V2,..."
    )))?;
    let values: Vec<String> = rest
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::ConfigParse(format!(
            "grid argument `{arg}` lists no values"
        )));
    }
    let axis = GridAxis {
        key: key.trim().to_string(),
        values,
    };
    if !GRID_KEYS.contains(&axis.key.as_str()) {
        return Err(Error::UnknownGridKey {
            key: axis.key,
            valid: GRID_KEYS.join(", "),
        });
    }
    Ok(axis)
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig {
        field: key.to_string(),
        reason: format!("cannot parse `{value}`"),
    })
}

fn parse_enum<T: serde::de::DeserializeOwned>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|_| {
        Error::InvalidConfig {
            field: key.to_string(),
            reason: format!("cannot parse `{value}`"),
        }
    })
}

/// Set one config field from its string form.
pub fn apply_field(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "n" => cfg.n = parse_as(key, value)?,
        "n_test" => cfg.n_test = parse_as(key, value)?,
        "d" => cfg.d = parse_as(key, value)?,
        "h" => cfg.h = parse_as(key, value)?,
        "eta0" => cfg.eta0 = parse_as(key, value)?,
        "steps" => cfg.steps = parse_as(key, value)?,
        "optimizer" => cfg.optimizer = parse_enum(key, value)?,
        "beta1" => cfg.beta1 = parse_as(key, value)?,
        "beta2" => cfg.beta2 = parse_as(key, value)?,
        "epsilon" => cfg.epsilon = parse_as(key, value)?,
        "bias_correction" => cfg.bias_correction = parse_as(key, value)?,
        "lambda" => cfg.lambda = parse_as(key, value)?,
        "rho_e" => cfg.rho_e = parse_as(key, value)?,
        "student_act" => cfg.student_act = parse_enum(key, value)?,
        "teacher_act" => cfg.teacher_act = parse_enum(key, value)?,
        "init" => cfg.init = parse_enum(key, value)?,
        "weight_norm" => cfg.weight_norm = parse_as(key, value)?,
        "checkpoint_every" => cfg.checkpoint_every = parse_as(key, value)?,
        "record_overlaps" => cfg.record_overlaps = parse_as(key, value)?,
        "schedule.kind" => cfg.schedule.kind = parse_enum(key, value)?,
        "schedule.gamma" => cfg.schedule.gamma = parse_as(key, value)?,
        "schedule.t_max" => cfg.schedule.t_max = parse_as(key, value)?,
        "schedule.eta_min" => cfg.schedule.eta_min = parse_as(key, value)?,
        other => {
            return Err(Error::UnknownGridKey {
                key: other.to_string(),
                valid: GRID_KEYS.join(", "),
            })
        }
    }
    Ok(())
}

/// One cell of the sweep: a grid assignment plus a seed replicate.
#[derive(Clone, Debug)]
pub struct CellSpec {
    pub index: usize,
    /// `key=value` pairs in axis order; empty for a gridless sweep.
    pub assignment: Vec<(String, String)>,
    pub replicate: u64,
    pub config: ExperimentConfig,
}

impl CellSpec {
    pub fn assignment_label(&self) -> String {
        if self.assignment.is_empty() {
            "base".to_string()
        } else {
            self.assignment
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";")
        }
    }

    pub fn dir_name(&self) -> String {
        let slug: String = self
            .assignment_label()
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect();
        format!("cell{:03}_{}_rep{}", self.index, slug, self.replicate)
    }
}

/// Expand grid x seeds into cell specs. Each cell's seed mixes the base seed
/// with a hash of the assignment text and the replicate, so adding grid
/// points later never reshuffles the seeds of existing cells.
pub fn expand_cells(
    base: &ExperimentConfig,
    axes: &[GridAxis],
    replicates: &[u64],
) -> Result<Vec<CellSpec>> {
    let mut assignments: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(assignments.len() * axis.values.len());
        for prefix in &assignments {
            for value in &axis.values {
                let mut a = prefix.clone();
                a.push((axis.key.clone(), value.clone()));
                next.push(a);
            }
        }
        assignments = next;
    }
    let mut cells = Vec::with_capacity(assignments.len() * replicates.len());
    for assignment in &assignments {
        for &replicate in replicates {
            let mut config = base.clone();
            for (k, v) in assignment {
                apply_field(&mut config, k, v)?;
            }
            let descriptor: String = assignment
                .iter()
                .map(|(k, v)| format!("{k}={v};"))
                .collect();
            config.seed = mix_seed(mix_seed(base.seed, hash_descriptor(&descriptor)), replicate);
            config.validate()?;
            cells.push(CellSpec {
                index: cells.len(),
                assignment: assignment.clone(),
                replicate,
                config,
            });
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub assignment: Vec<(String, String)>,
    pub runs: usize,
    pub mean: FinalMetrics,
    pub std: FinalMetrics,
}

/// Run every cell (in the current rayon pool), hand each finished bundle to
/// `on_bundle`, and reduce the final metrics per grid point.
pub fn run_sweep<F>(
    base: &ExperimentConfig,
    axes: &[GridAxis],
    replicates: &[u64],
    on_bundle: F,
) -> Result<Vec<SummaryRow>>
where
    F: Fn(&CellSpec, &ResultBundle) -> Result<()> + Sync,
{
    type CellOutcome = (String, Vec<(String, String)>, FinalMetrics);
    let cells = expand_cells(base, axes, replicates)?;
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|cell| {
            let bundle = run_experiment(&cell.config)?;
            on_bundle(cell, &bundle)?;
            Ok((
                cell.assignment_label(),
                cell.assignment.clone(),
                final_metrics(&bundle),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    // group in first-appearance order (the product order)
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<FinalMetrics>> = Vec::new();
    for (label, assignment, metrics) in outcomes {
        match labels.iter().position(|l| *l == label) {
            Some(i) => groups[i].push(metrics),
            None => {
                labels.push(label);
                groups.push(vec![metrics]);
                rows.push(SummaryRow {
                    assignment,
                    runs: 0,
                    mean: [0.0; 10],
                    std: [0.0; 10],
                });
            }
        }
    }
    for (row, group) in rows.iter_mut().zip(groups.iter()) {
        row.runs = group.len();
        for m in 0..METRIC_NAMES.len() {
            let vals: Vec<f64> = group.iter().map(|g| g[m]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            row.mean[m] = mean;
            row.std[m] = std;
        }
    }
    Ok(rows)
}

/// Summary rows as CSV: the grid keys, the run count, then mean/std columns
/// for every aggregated metric.
pub fn summary_csv(axes_keys: &[String], rows: &[SummaryRow]) -> String {
    let mut header: Vec<String> = axes_keys.to_vec();
    header.push("runs".into());
    for name in METRIC_NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut fields: Vec<String> = axes_keys
            .iter()
            .map(|k| {
                row.assignment
                    .iter()
                    .find(|(key, _)| key == k)
                    .map(|(_, v)| v.clone())
                    .unwrap_or_default()
            })
            .collect();
        fields.push(row.runs.to_string());
        for m in 0..METRIC_NAMES.len() {
            fields.push(super::export::fmt_float(row.mean[m]));
            fields.push(super::export::fmt_float(row.std[m]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
