use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{mean_std, opt_f64};
use crate::error::{Error, Result};
use crate::geometry::sample_sphere;
use crate::io::fmt_f64;
use crate::sheaf::build_sheaf;
use crate::spectral::{eigendecompose, relative_spread};

/// Positions of the first two clusters of the connection Laplacian on the
/// unit sphere: eigenvalues `l(l+1) - 1` with multiplicity `2(2l+1)`.
pub const L1_CLUSTER: std::ops::Range<usize> = 0..6;
pub const L2_CLUSTER: std::ops::Range<usize> = 6..16;

/// Lowest eigenvalues for one (n, seed) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRun {
    pub n: usize,
    pub seed: u64,
    pub d_hat: Option<usize>,
    pub eigenvalues: Vec<f64>,
    pub error: Option<String>,
}

impl SpectralRun {
    /// `(max - min) / mean` over the first cluster.
    pub fn l1_spread(&self) -> Option<f64> {
        self.has_clusters().then(|| relative_spread(&self.eigenvalues[L1_CLUSTER]))
    }

    /// Mean of the second cluster over mean of the first.
    pub fn cluster_ratio(&self) -> Option<f64> {
        self.has_clusters().then(|| {
            let mean = |r: std::ops::Range<usize>| self.eigenvalues[r.clone()].iter().sum::<f64>() / r.len() as f64;
            mean(L2_CLUSTER) / mean(L1_CLUSTER)
        })
    }

    /// `lambda_2 / lambda_1` with one-based indices.
    pub fn second_ratio(&self) -> Option<f64> {
        (self.eigenvalues.len() >= 2).then(|| self.eigenvalues[1] / self.eigenvalues[0])
    }

    fn has_clusters(&self) -> bool {
        self.error.is_none() && self.eigenvalues.len() >= L2_CLUSTER.end
    }
}

/// Seed aggregates at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub n: usize,
    pub mean_l1_spread: Option<f64>,
    pub max_l1_spread: Option<f64>,
    pub mean_cluster_ratio: Option<f64>,
    /// Standard deviation of `lambda_2 / lambda_1` relative to its mean.
    pub second_ratio_rel_std: Option<f64>,
    pub ok_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct SpectralOutcome {
    pub runs: Vec<SpectralRun>,
    pub summary: Vec<SpectralSummary>,
}

impl SpectralOutcome {
    pub fn summary_at(&self, n: usize) -> Option<&SpectralSummary> {
        self.summary.iter().find(|s| s.n == n)
    }

    /// Writes `spectral.csv` (eigenvalues and ratios per run),
    /// `spectral_runs.csv` (cluster diagnostics per run) and
    /// `spectral_summary.csv` (per sample size).
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("spectral.csv"))?;
        w.write_record(["n", "seed", "index", "lambda", "ratio"])?;
        for r in &self.runs {
            for (i, &l) in r.eigenvalues.iter().enumerate() {
                w.write_record([
                    r.n.to_string(),
                    r.seed.to_string(),
                    (i + 1).to_string(),
                    fmt_f64(l),
                    fmt_f64(l / r.eigenvalues[0]),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("spectral_runs.csv"))?;
        w.write_record(["n", "seed", "d_hat", "l1_spread", "cluster_ratio", "second_ratio", "error"])?;
        for r in &self.runs {
            w.write_record([
                r.n.to_string(),
                r.seed.to_string(),
                r.d_hat.map(|d| d.to_string()).unwrap_or_default(),
                opt_f64(r.l1_spread()),
                opt_f64(r.cluster_ratio()),
                opt_f64(r.second_ratio()),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("spectral_summary.csv"))?;
        w.write_record([
            "n",
            "mean_l1_spread",
            "max_l1_spread",
            "mean_cluster_ratio",
            "second_ratio_rel_std",
            "ok_seeds",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.n.to_string(),
                opt_f64(s.mean_l1_spread),
                opt_f64(s.max_l1_spread),
                opt_f64(s.mean_cluster_ratio),
                opt_f64(s.second_ratio_rel_std),
                s.ok_seeds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn spectral_run(cfg: &ExperimentConfig, n: usize, seed: u64) -> SpectralRun {
    let attempt = || -> Result<(usize, Vec<f64>)> {
        let sheaf = build_sheaf(&sample_sphere(n, seed)?, &cfg.sheaf_params())?;
        let spectrum = eigendecompose(&sheaf, Some(cfg.eigen_count))?;
        Ok((sheaf.d_hat(), spectrum.eigenvalues().to_vec()))
    };
    match attempt() {
        Ok((d, eigenvalues)) => SpectralRun {
            n,
            seed,
            d_hat: Some(d),
            eigenvalues,
            error: None,
        },
        Err(e) => SpectralRun {
            n,
            seed,
            d_hat: None,
            eigenvalues: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Lowest `eigen_count` frequencies of the sheaf Laplacian on sphere samples
/// for every (n, seed), with diagnostics of the first two eigenvalue
/// clusters.
pub fn run_spectral_convergence(cfg: &ExperimentConfig) -> Result<SpectralOutcome> {
    cfg.validate()?;
    if cfg.eigen_count < L2_CLUSTER.end {
        return Err(Error::Config(format!(
            "eigen_count must be at least {} to cover two clusters",
            L2_CLUSTER.end
        )));
    }
    let sizes = cfg.sorted_n();
    let keys: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| cfg.sample_seeds.iter().map(move |&s| (n, s)))
        .collect();
    let runs: Vec<SpectralRun> = keys.par_iter().map(|&(n, s)| spectral_run(cfg, n, s)).collect();

    let summary = sizes
        .iter()
        .map(|&n| {
            let at: Vec<&SpectralRun> = runs.iter().filter(|r| r.n == n && r.has_clusters()).collect();
            let spreads: Vec<f64> = at.iter().filter_map(|r| r.l1_spread()).collect();
            let ratios: Vec<f64> = at.iter().filter_map(|r| r.cluster_ratio()).collect();
            let seconds: Vec<f64> = at.iter().filter_map(|r| r.second_ratio()).collect();
            SpectralSummary {
                n,
                mean_l1_spread: mean_std(&spreads).map(|(m, _)| m),
                max_l1_spread: spreads.iter().copied().reduce(f64::max),
                mean_cluster_ratio: mean_std(&ratios).map(|(m, _)| m),
                second_ratio_rel_std: mean_std(&seconds).map(|(m, s)| s / m),
                ok_seeds: at.len(),
            }
        })
        .collect();
    Ok(SpectralOutcome { runs, summary })
}
