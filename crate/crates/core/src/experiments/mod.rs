//! Experiment harness: configuration, the denoising table, the convergence
//! study under refinement, and the spectral convergence study.

mod config;
mod convergence;
mod denoise;
mod spectral;

use std::path::Path;

use serde::Serialize;

pub use config::ExperimentConfig;
pub use convergence::{run_convergence, ConvergenceOutcome, ConvergencePoint, ConvergenceRow};
pub use denoise::{
    run_denoise, run_table1, summarize, DenoiseOutcome, ModelTag, ResultRow, SummaryCell,
};
pub use spectral::{
    run_spectral_convergence, SpectralOutcome, SpectralRun, SpectralSummary, L1_CLUSTER, L2_CLUSTER,
};

use crate::error::Result;

#[derive(Serialize)]
struct Meta<'a> {
    experiment: &'a str,
    git_hash: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
}

/// Writes `meta.json` with the code revision and an echo of the config.
pub fn write_meta(dir: impl AsRef<Path>, experiment: &str, cfg: &ExperimentConfig, git_hash: &str) -> Result<()> {
    let meta = Meta {
        experiment,
        git_hash,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
    };
    std::fs::create_dir_all(dir.as_ref())?;
    std::fs::write(dir.as_ref().join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(crate::io::fmt_f64).unwrap_or_default()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}
