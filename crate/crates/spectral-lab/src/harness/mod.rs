//! Experiment harness: configs, recipes, runs, sweeps, export, CLI.

pub mod cli;
pub mod config;
pub mod export;
pub mod recipes;
pub mod run;
pub mod sweep;
pub mod wmat;
