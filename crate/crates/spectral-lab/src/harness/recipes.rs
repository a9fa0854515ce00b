//! Named experiment recipes: the exact configurations behind the standard
//! plots, addressable from the CLI by name.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::optim::{OptimizerKind, ScheduleSpec};
use crate::student::InitScheme;
use crate::theory;

/// One labeled run of a multi-run recipe. `group` collects seed replicates
/// of the same setting for the summary.
#[derive(Clone, Debug)]
pub struct RecipeCell {
    pub group: String,
    pub seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub enum RecipeKind {
    Single(ExperimentConfig),
    Runs(Vec<RecipeCell>),
    /// The size-grid norm sweep; handled by the theorem path.
    NormSweep(Vec<(usize, usize, usize)>),
}

#[derive(Clone, Debug)]
pub struct Recipe {
    pub name: &'static str,
    pub description: &'static str,
    pub kind: RecipeKind,
}

pub const RECIPE_NAMES: &[&str] = &[
    "fig1",
    "fig2",
    "fig3",
    "fig8",
    "fig9",
    "fig7-veryht",
    "fig10-theorem",
    "fig24-steplr",
    "fig25-cosine",
    "app-64step",
    "app-100step",
    "app-meanfield",
];

fn base() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn cell(
    group: &str,
    seed: u64,
    mutate: impl Fn(&mut ExperimentConfig),
) -> RecipeCell {
    let mut config = base();
    mutate(&mut config);
    config.seed = seed;
    RecipeCell {
        group: group.to_string(),
        seed,
        config,
    }
}

fn optimizer_eta_runs(
    pairs: &[(OptimizerKind, f64)],
    seeds: std::ops::Range<u64>,
    mutate: impl Fn(&mut ExperimentConfig) + Copy,
) -> Vec<RecipeCell> {
    let mut cells = Vec::new();
    for &(opt, eta) in pairs {
        let tag = match opt {
            OptimizerKind::Gd => "gd",
            OptimizerKind::FbAdam => "fbadam",
        };
        for seed in seeds.clone() {
            cells.push(cell(&format!("{tag}_eta{eta}"), seed, |cfg| {
                mutate(cfg);
                cfg.optimizer = opt;
                cfg.eta0 = eta;
            }));
        }
    }
    cells
}

/// The learning-rate grid the one-step and ten-step scans share.
pub const ETA_GRID: [f64; 9] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 2000.0, 3000.0];

/// Resolve a recipe by name.
pub fn figure_recipe(name: &str) -> Result<Recipe> {
    let recipe = match name {
        "fig1" => Recipe {
            name: "fig1",
            description: "ESD of W^T W after ten full-batch steps, GD at a large rate vs Adam at a moderate one",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &[(OptimizerKind::Gd, 2000.0), (OptimizerKind::FbAdam, 0.5)],
                0..1,
                |cfg| cfg.steps = 10,
            )),
        },
        "fig2" => Recipe {
            name: "fig2",
            description: "one-step ESD evolution at small and large learning rates for GD and Adam",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &[
                    (OptimizerKind::Gd, 0.1),
                    (OptimizerKind::Gd, 2000.0),
                    (OptimizerKind::FbAdam, 0.1),
                    (OptimizerKind::FbAdam, 10.0),
                ],
                0..1,
                |cfg| cfg.steps = 1,
            )),
        },
        "fig3" => Recipe {
            name: "fig3",
            description: "one-step losses, KTA and target alignment across the learning-rate grid, five seeds",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &grid_pairs(),
                0..5,
                |cfg| cfg.steps = 1,
            )),
        },
        "fig8" => Recipe {
            name: "fig8",
            description: "ten-step losses, KTA and tail exponents across the learning-rate grid at n=8000, five seeds",
            kind: RecipeKind::Runs(optimizer_eta_runs(&grid_pairs(), 0..5, |cfg| {
                cfg.steps = 10;
                cfg.n = 8000;
            })),
        },
        "fig9" => Recipe {
            name: "fig9",
            description: "ten Adam steps at eta=1 with the training-set size varied",
            kind: RecipeKind::Runs({
                let mut cells = Vec::new();
                for n in [500usize, 2000, 4000, 8000] {
                    for seed in 0..5 {
                        cells.push(cell(&format!("n{n}"), seed, |cfg| {
                            cfg.optimizer = OptimizerKind::FbAdam;
                            cfg.eta0 = 1.0;
                            cfg.steps = 10;
                            cfg.n = n;
                        }));
                    }
                }
                cells
            }),
        },
        "fig7-veryht" => Recipe {
            name: "fig7-veryht",
            description: "very heavy tails: ten normalized steps at n=4000, d=500, h=3000",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &[(OptimizerKind::Gd, 5000.0), (OptimizerKind::FbAdam, 3.0)],
                0..1,
                |cfg| {
                    cfg.steps = 10;
                    cfg.n = 4000;
                    cfg.d = 500;
                    cfg.h = 3000;
                    cfg.weight_norm = true;
                },
            )),
        },
        "fig10-theorem" => Recipe {
            name: "fig10-theorem",
            description: "first-step Adam norm scaling over the size grid",
            kind: RecipeKind::NormSweep(theory::norm_sweep_grid()),
        },
        "fig24-steplr" => Recipe {
            name: "fig24-steplr",
            description: "ten normalized Adam steps at eta=1 under per-step StepLR decay factors",
            kind: RecipeKind::Runs({
                let mut cells = Vec::new();
                for gamma in [0.2f64, 0.4, 0.6, 0.8] {
                    cells.push(cell(&format!("steplr_gamma{gamma}"), 0, |cfg| {
                        cfg.optimizer = OptimizerKind::FbAdam;
                        cfg.eta0 = 1.0;
                        cfg.steps = 10;
                        cfg.weight_norm = true;
                        cfg.schedule = ScheduleSpec::step_lr(gamma);
                    }));
                }
                cells
            }),
        },
        "fig25-cosine" => Recipe {
            name: "fig25-cosine",
            description: "ten normalized Adam steps at eta=1 under a cosine schedule (t_max=10, floor 1e-7)",
            kind: RecipeKind::Single({
                let mut cfg = base();
                cfg.optimizer = OptimizerKind::FbAdam;
                cfg.eta0 = 1.0;
                cfg.steps = 10;
                cfg.weight_norm = true;
                cfg.schedule = ScheduleSpec::cosine(10, 1e-7);
                cfg
            }),
        },
        "app-64step" => Recipe {
            name: "app-64step",
            description: "sixty-four steps: spike absorption at moderate rates",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &[
                    (OptimizerKind::Gd, 0.1),
                    (OptimizerKind::Gd, 2000.0),
                    (OptimizerKind::FbAdam, 0.1),
                    (OptimizerKind::FbAdam, 1.0),
                ],
                0..1,
                |cfg| cfg.steps = 64,
            )),
        },
        "app-100step" => Recipe {
            name: "app-100step",
            description: "one hundred Adam steps across moderate learning rates",
            kind: RecipeKind::Runs(optimizer_eta_runs(
                &[
                    (OptimizerKind::FbAdam, 0.1),
                    (OptimizerKind::FbAdam, 0.25),
                    (OptimizerKind::FbAdam, 0.5),
                    (OptimizerKind::FbAdam, 1.0),
                ],
                0..1,
                |cfg| cfg.steps = 100,
            )),
        },
        "app-meanfield" => Recipe {
            name: "app-meanfield",
            description: "one Adam step under mean-field initialization across the rate scale",
            kind: RecipeKind::Runs({
                let mut cells = Vec::new();
                for eta in [5e-5f64, 5e-3, 0.04, 0.5] {
                    cells.push(cell(&format!("fbadam_eta{eta}"), 0, |cfg| {
                        cfg.optimizer = OptimizerKind::FbAdam;
                        cfg.eta0 = eta;
                        cfg.steps = 1;
                        cfg.init = InitScheme::MeanField;
                    }));
                }
                cells
            }),
        },
        other => {
            return Err(Error::UnknownRecipe {
                name: other.to_string(),
                available: RECIPE_NAMES.join(", "),
            })
        }
    };
    Ok(recipe)
}

fn grid_pairs() -> Vec<(OptimizerKind, f64)> {
    let mut pairs = Vec::with_capacity(18);
    for opt in [OptimizerKind::Gd, OptimizerKind::FbAdam] {
        for eta in ETA_GRID {
            pairs.push((opt, eta));
        }
    }
    pairs
}

impl Recipe {
    /// A single representative config (what `gen-config` prints).
    pub fn base_config(&self) -> Result<ExperimentConfig> {
        match &self.kind {
            RecipeKind::Single(cfg) => Ok(cfg.clone()),
            RecipeKind::Runs(cells) => Ok(cells
                .first()
                .expect("recipes have at least one run")
                .config
                .clone()),
            RecipeKind::NormSweep(_) => Err(Error::InvalidConfig {
                field: "recipe".into(),
                reason: format!(
                    "{} is a norm sweep without an experiment config; run it via `theorem` or `figure {}`",
                    self.name, self.name
                ),
            }),
        }
    }
}
