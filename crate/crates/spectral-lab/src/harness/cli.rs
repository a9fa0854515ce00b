//! Command-line interface: run single experiments, sweeps, named figure
//! recipes, the norm-scaling check, and spectral analysis of checkpoints.

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::sync::Once;

use super::config::ExperimentConfig;
use super::export::{self, export_bundle};
use super::recipes::{figure_recipe, Recipe, RecipeKind};
use super::run::{run_experiment, ResultBundle};
use super::sweep::{
    final_metrics, parse_grid_arg, run_sweep, summary_csv, FinalMetrics, GridAxis, SummaryRow,
    METRIC_NAMES,
};
use super::wmat;
use crate::error::{Error, Result};
use crate::theory;

/// Worker-pool size override for sweeps and multi-run figures.
pub const THREADS_ENV: &str = "SPECTRAL_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "spectral-lab",
    version,
    about = "Heavy-tailed weight spectra from full-batch training of two-layer teacher-student networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        /// Path to an ExperimentConfig JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Export directory for plot data and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cartesian sweep over config fields, with seed replication.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid axis KEY=V1,V2,... (repeatable).
        #[arg(long = "grid")]
        grid: Vec<String>,
        /// Number of seed replicates per grid point.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named figure recipe.
    Figure {
        /// Recipe name; an unknown name lists the available ones.
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// First-step Adam norm scaling over a size grid.
    Theorem {
        /// Optional CSV of rows `n,h,d` replacing the built-in grid.
        #[arg(long)]
        rows: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spectral report of a WMAT1 weight matrix.
    Analyze {
        #[arg(long)]
        weights: PathBuf,
    },
    /// Print the JSON config of a named recipe.
    GenConfig { name: String },
}

fn init_worker_pool() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Ok(value) = std::env::var(THREADS_ENV) {
            if let Ok(n) = value.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        }
    });
}

pub fn cli_main(argv: Vec<String>) -> i32 {
    init_worker_pool();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let bundle = run_experiment(&cfg)?;
            if let Some(dir) = out {
                export_bundle(&bundle, &dir)?;
                eprintln!("exported to {}", dir.display());
            }
            println!("{}", bundle_summary_json(&bundle));
            Ok(())
        }
        Command::Sweep {
            config,
            grid,
            seeds,
            out,
        } => {
            let base = ExperimentConfig::from_path(&config)?;
            let axes: Vec<GridAxis> = grid
                .iter()
                .map(|g| parse_grid_arg(g))
                .collect::<Result<_>>()?;
            let replicates: Vec<u64> = (0..seeds.max(1) as u64).collect();
            let out_ref = out.as_deref();
            let rows = run_sweep(&base, &axes, &replicates, |cell, bundle| {
                if let Some(dir) = out_ref {
                    export_bundle(bundle, &dir.join(cell.dir_name()))?;
                }
                eprintln!(
                    "finished {} rep {}",
                    cell.assignment_label(),
                    cell.replicate
                );
                Ok(())
            })?;
            let keys: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
            let csv = summary_csv(&keys, &rows);
            if let Some(dir) = out {
                export::write_text(&dir.join("summary.csv"), &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
        Command::Figure { name, out } => run_figure(&figure_recipe(&name)?, out),
        Command::Theorem { rows, out, seed } => {
            let grid = match rows {
                Some(path) => parse_rows_file(&path)?,
                None => theory::norm_sweep_grid(),
            };
            let results = theory::adam_norm_sweep(&grid, seed)?;
            let csv = export::norm_sweep_csv(&results);
            if let Some(dir) = out {
                export::write_text(&dir.join("norm_sweep.csv"), &csv)?;
            }
            print!("{csv}");
            Ok(())
        }
        Command::Analyze { weights } => {
            let matrix = wmat::read_matrix(&weights)?;
            let report = crate::spectral::SpectralReport::from_weights(&matrix)?;
            let (rows, cols) = matrix.dim();
            let positive = report.eigenvalues.iter().filter(|v| **v > 0.0).count();
            let value = serde_json::json!({
                "rows": rows,
                "cols": cols,
                "eigenvalues": report.eigenvalues.len(),
                "positive_eigenvalues": positive,
                "lambda_max": json_num(report.lambda_max),
                "bulk_edge": json_num(report.bulk_edge),
                "separation": json_num(report.separation),
                "pl_alpha_hill": json_num(report.pl_alpha_hill),
                "pl_alpha_ks": json_num(report.pl_alpha_ks),
                "ks_xmin": json_num(report.ks_xmin),
                "ks_stat": json_num(report.ks_stat),
            });
            println!("{}", serde_json::to_string_pretty(&value).expect("json"));
            Ok(())
        }
        Command::GenConfig { name } => {
            let recipe = figure_recipe(&name)?;
            println!("{}", recipe.base_config()?.to_json_pretty());
            Ok(())
        }
    }
}

fn json_num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

fn bundle_summary_json(bundle: &ResultBundle) -> String {
    let finals = final_metrics(bundle);
    let mut map = serde_json::Map::new();
    map.insert("steps".into(), serde_json::json!(bundle.config.steps));
    for (name, value) in METRIC_NAMES.iter().zip(finals.iter()) {
        map.insert((*name).to_string(), json_num(*value));
    }
    map.insert("wall_clock_secs".into(), json_num(bundle.wall_clock_secs));
    map.insert(
        "blas_threads".into(),
        serde_json::json!(bundle.blas_threads),
    );
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("json")
}

fn run_figure(recipe: &Recipe, out: Option<PathBuf>) -> Result<()> {
    let out_dir = out.unwrap_or_else(|| PathBuf::from(recipe.name));
    match &recipe.kind {
        RecipeKind::Single(cfg) => {
            let bundle = run_experiment(cfg)?;
            export_bundle(&bundle, &out_dir)?;
            println!("{}", bundle_summary_json(&bundle));
            Ok(())
        }
        RecipeKind::Runs(cells) => {
            let outcomes: Vec<(String, FinalMetrics)> = cells
                .par_iter()
                .map(|cell| {
                    let bundle = run_experiment(&cell.config)?;
                    let dir = out_dir.join(format!("{}_seed{}", cell.group, cell.seed));
                    export_bundle(&bundle, &dir)?;
                    eprintln!("finished {} seed {}", cell.group, cell.seed);
                    Ok((cell.group.clone(), final_metrics(&bundle)))
                })
                .collect::<Result<_>>()?;
            let rows = group_summary(outcomes);
            let csv = summary_csv(&["label".to_string()], &rows);
            export::write_text(&out_dir.join("summary.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        RecipeKind::NormSweep(grid) => {
            let results = theory::adam_norm_sweep(grid, 0)?;
            let csv = export::norm_sweep_csv(&results);
            export::write_text(&out_dir.join("norm_sweep.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn group_summary(outcomes: Vec<(String, FinalMetrics)>) -> Vec<SummaryRow> {
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<FinalMetrics>> = Vec::new();
    for (label, metrics) in outcomes {
        match labels.iter().position(|l| *l == label) {
            Some(i) => groups[i].push(metrics),
            None => {
                labels.push(label);
                groups.push(vec![metrics]);
            }
        }
    }
    labels
        .into_iter()
        .zip(groups)
        .map(|(label, group)| {
            let runs = group.len();
            let mut mean = [0.0f64; 10];
            let mut std = [0.0f64; 10];
            for m in 0..METRIC_NAMES.len() {
                let vals: Vec<f64> = group.iter().map(|g| g[m]).collect();
                let n = vals.len() as f64;
                let mu = vals.iter().sum::<f64>() / n;
                mean[m] = mu;
                std[m] = if vals.len() > 1 {
                    (vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
            }
            SummaryRow {
                assignment: vec![("label".to_string(), label)],
                runs,
                mean,
                std,
            }
        })
        .collect()
}

fn parse_rows_file(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('n') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::ConfigParse(format!(
                "{}:{}: expected `n,h,d`, got `{line}`",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::ConfigParse(format!(
                    "{}:{}: `{s}` is not a positive integer",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        rows.push((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?));
    }
    if rows.is_empty() {
        return Err(Error::ConfigParse(format!(
            "{}: no `n,h,d` rows found",
            path.display()
        )));
    }
    Ok(rows)
}
