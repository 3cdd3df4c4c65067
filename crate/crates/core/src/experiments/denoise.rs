use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{mean_std, opt_f64};
use crate::error::{Error, Result};
use crate::filter::{shift_operator, ShiftMethod, ShiftOperator};
use crate::geometry::{add_awgn, rotational_field, sample_sphere, AmbientField};
use crate::sheaf::{build_sheaf, sample_field, OrthogonalSheaf};
use crate::tnn::{scalar_shift, train_denoiser, train_mnn, TnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Ddtnn,
    Mnn,
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelTag::Ddtnn => "ddtnn",
            ModelTag::Mnn => "mnn",
        })
    }
}

/// One trained model on one (sample, noise) realisation. Failed trials keep
/// their row with the error message and no losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub n: usize,
    pub tau: f64,
    pub seed_sample: u64,
    pub seed_noise: u64,
    pub model: ModelTag,
    pub eval_mse: Option<f64>,
    pub train_mse_final: Option<f64>,
    pub wallclock_s: f64,
    pub error: Option<String>,
}

/// Mean and population standard deviation of the evaluation MSE over the
/// successful trials of one (n, tau, model) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub n: usize,
    pub tau: f64,
    pub model: ModelTag,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub trials: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryCell>,
}

impl DenoiseOutcome {
    pub fn cell(&self, n: usize, tau: f64, model: ModelTag) -> Option<&SummaryCell> {
        self.summary.iter().find(|c| c.n == n && c.tau == tau && c.model == model)
    }

    /// Writes `results.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_results(dir.join("results.csv"), &self.rows)?;
        write_summary(dir.join("summary.csv"), &self.summary)
    }
}

fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "experiment",
        "n",
        "tau",
        "seed_sample",
        "seed_noise",
        "model",
        "eval_mse",
        "train_mse_final",
        "wallclock_s",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.n.to_string(),
            r.tau.to_string(),
            r.seed_sample.to_string(),
            r.seed_noise.to_string(),
            r.model.to_string(),
            opt_f64(r.eval_mse),
            opt_f64(r.train_mse_final),
            format!("{:.3}", r.wallclock_s),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Table layout: one row per (n, model), a mean and a std column per noise
/// level.
fn write_summary(path: impl AsRef<Path>, cells: &[SummaryCell]) -> Result<()> {
    let mut taus: Vec<f64> = cells.iter().map(|c| c.tau).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut keys: Vec<(usize, ModelTag)> = cells.iter().map(|c| (c.n, c.model)).collect();
    keys.sort();
    keys.dedup();

    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["n".to_string(), "model".to_string()];
    for t in &taus {
        header.push(format!("mean_tau_{t}"));
        header.push(format!("std_tau_{t}"));
    }
    header.push("failed".into());
    w.write_record(&header)?;
    for (n, model) in keys {
        let mut record = vec![n.to_string(), model.to_string()];
        let mut failed = 0;
        for &t in &taus {
            match cells.iter().find(|c| c.n == n && c.model == model && c.tau == t) {
                Some(c) => {
                    record.push(opt_f64(c.mean));
                    record.push(opt_f64(c.std));
                    failed += c.failed;
                }
                None => record.extend([String::new(), String::new()]),
            }
        }
        record.push(failed.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by (n, tau, model) in the order the cells first appear.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryCell> {
    let mut cells: Vec<SummaryCell> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let idx = match cells.iter().position(|c| c.n == r.n && c.tau == r.tau && c.model == r.model) {
            Some(i) => i,
            None => {
                cells.push(SummaryCell {
                    n: r.n,
                    tau: r.tau,
                    model: r.model,
                    mean: None,
                    std: None,
                    trials: 0,
                    failed: 0,
                });
                values.push(Vec::new());
                cells.len() - 1
            }
        };
        cells[idx].trials += 1;
        match r.eval_mse {
            Some(v) if r.error.is_none() => values[idx].push(v),
            _ => cells[idx].failed += 1,
        }
    }
    for (c, v) in cells.iter_mut().zip(&values) {
        if let Some((m, s)) = mean_std(v) {
            c.mean = Some(m);
            c.std = Some(s);
        }
    }
    cells
}

/// Everything a trial needs that depends only on the point sample.
struct Setup {
    sheaf: OrthogonalSheaf,
    shift: ShiftOperator,
    scalar: Option<ShiftOperator>,
    clean: AmbientField,
}

fn prepare(cfg: &ExperimentConfig, n: usize, seed: u64, with_scalar: bool) -> Result<Setup> {
    let cloud = sample_sphere(n, seed)?;
    let sheaf = build_sheaf(&cloud, &cfg.sheaf_params())?;
    let shift = shift_operator(&sheaf, ShiftMethod::Eig)?;
    let scalar = if with_scalar { Some(scalar_shift(&sheaf)?) } else { None };
    let clean = rotational_field(&cloud)?;
    Ok(Setup {
        sheaf,
        shift,
        scalar,
        clean,
    })
}

struct Job {
    n: usize,
    tau: f64,
    seed_sample: u64,
    seed_noise: u64,
    model: ModelTag,
    setup: usize,
}

struct TrialResult {
    eval_mse: f64,
    train_mse: f64,
    model: Option<TnnModel>,
    trace: Option<crate::tnn::TrainOutcome>,
}

fn run_trial(cfg: &ExperimentConfig, setup: &Setup, job: &Job) -> Result<TrialResult> {
    let train = cfg.train_config();
    let noisy = add_awgn(&setup.clean, job.tau, job.seed_noise)?;
    match job.model {
        ModelTag::Ddtnn => {
            let clean_s = sample_field(&setup.sheaf, &setup.clean)?;
            let noisy_s = sample_field(&setup.sheaf, &noisy)?;
            let model = TnnModel::init(cfg.architecture()?, cfg.init_seed);
            let out = train_denoiser(model, &setup.shift, &noisy_s, Some(&clean_s), &train)?;
            let last = *out.final_loss();
            Ok(TrialResult {
                eval_mse: last.eval_mse.expect("clean target supplied"),
                train_mse: last.train_mse,
                model: Some(out.model.clone()),
                trace: Some(out),
            })
        }
        ModelTag::Mnn => {
            let scalar = setup.scalar.as_ref().expect("scalar shift prepared for baseline jobs");
            let out = train_mnn(scalar, &noisy, &setup.clean, cfg.mnn_architecture()?, cfg.init_seed, &train)?;
            Ok(TrialResult {
                eval_mse: out.eval_mse,
                train_mse: out.training.final_loss().train_mse,
                model: None,
                trace: None,
            })
        }
    }
}

fn run_grid(cfg: &ExperimentConfig, models: &[ModelTag], artifacts: Option<&Path>) -> Result<DenoiseOutcome> {
    cfg.validate()?;
    let with_scalar = models.contains(&ModelTag::Mnn);
    let sizes = cfg.sorted_n();
    let keys: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|&n| cfg.sample_seeds.iter().map(move |&s| (n, s)))
        .collect();
    let setups: Vec<Result<Setup>> = keys
        .par_iter()
        .map(|&(n, s)| prepare(cfg, n, s, with_scalar))
        .collect();

    let mut jobs = Vec::new();
    for &n in &sizes {
        for &tau in &cfg.tau {
            for &seed_sample in &cfg.sample_seeds {
                let setup = keys.iter().position(|&k| k == (n, seed_sample)).expect("setup key");
                for &seed_noise in &cfg.noise_seeds {
                    for &model in models {
                        jobs.push(Job {
                            n,
                            tau,
                            seed_sample,
                            seed_noise,
                            model,
                            setup,
                        });
                    }
                }
            }
        }
    }
    if let Some(dir) = artifacts {
        std::fs::create_dir_all(dir)?;
    }

    let rows = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let outcome = match &setups[job.setup] {
                Ok(setup) => run_trial(cfg, setup, job),
                Err(e) => Err(Error::InvalidArgument(format!("sheaf construction failed: {e}"))),
            };
            let mut row = ResultRow {
                experiment: cfg.experiment.clone(),
                n: job.n,
                tau: job.tau,
                seed_sample: job.seed_sample,
                seed_noise: job.seed_noise,
                model: job.model,
                eval_mse: None,
                train_mse_final: None,
                wallclock_s: 0.0,
                error: None,
            };
            match outcome {
                Ok(t) => {
                    row.eval_mse = Some(t.eval_mse);
                    row.train_mse_final = Some(t.train_mse);
                    if let (Some(dir), Some(model), Some(trace)) = (artifacts, t.model, t.trace) {
                        let stem = format!(
                            "{}_n{}_tau{}_s{}_z{}",
                            job.model, job.n, job.tau, job.seed_sample, job.seed_noise
                        );
                        model.save(dir.join(format!("{stem}.json")))?;
                        trace.write_trace(dir.join(format!("{stem}_trace.csv")))?;
                    }
                }
                Err(e) => {
                    log::warn!("trial n={} tau={} failed: {e}", job.n, job.tau);
                    row.error = Some(e.to_string());
                }
            }
            row.wallclock_s = start.elapsed().as_secs_f64();
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&rows);
    Ok(DenoiseOutcome { rows, summary })
}

/// Denoising comparison of the bundle network against the scalar baseline
/// over every (n, tau, sample seed, noise seed) combination. Rows come back
/// ordered by (n, tau, sample seed, noise seed, model) whatever the
/// scheduling.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<DenoiseOutcome> {
    run_grid(cfg, &[ModelTag::Ddtnn, ModelTag::Mnn], None)
}

/// Bundle network only. When `artifacts` is given, each trained model and
/// its loss trace are saved there.
pub fn run_denoise(cfg: &ExperimentConfig, artifacts: Option<&Path>) -> Result<DenoiseOutcome> {
    run_grid(cfg, &[ModelTag::Ddtnn], artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            experiment: "unit".into(),
            n: vec![120],
            sample_seeds: vec![3],
            noise_seeds: vec![7, 8],
            tau: vec![0.0, 0.05],
            epochs: 400,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn rows_are_ordered_and_complete() {
        let out = run_table1(&small()).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2);
        let order: Vec<(f64, u64, ModelTag)> = out.rows.iter().map(|r| (r.tau, r.seed_noise, r.model)).collect();
        assert_eq!(
            order,
            vec![
                (0.0, 7, ModelTag::Ddtnn),
                (0.0, 7, ModelTag::Mnn),
                (0.0, 8, ModelTag::Ddtnn),
                (0.0, 8, ModelTag::Mnn),
                (0.05, 7, ModelTag::Ddtnn),
                (0.05, 7, ModelTag::Mnn),
                (0.05, 8, ModelTag::Ddtnn),
                (0.05, 8, ModelTag::Mnn),
            ]
        );
        assert!(out.rows.iter().all(|r| r.error.is_none() && r.eval_mse.unwrap() >= 0.0));
        assert_eq!(out.summary.len(), 4);
    }

    #[test]
    fn failed_setup_is_recorded_not_dropped() {
        let cfg = ExperimentConfig {
            epsilon: Some(1e-9),
            ..small()
        };
        let out = run_table1(&cfg).unwrap();
        assert_eq!(out.rows.len(), 8);
        assert!(out.rows.iter().all(|r| r.error.is_some() && r.eval_mse.is_none()));
        assert!(out.summary.iter().all(|c| c.failed == c.trials && c.mean.is_none()));
    }

    #[test]
    fn summary_statistics() {
        let row = |model, v| ResultRow {
            experiment: "x".into(),
            n: 10,
            tau: 0.1,
            seed_sample: 0,
            seed_noise: 0,
            model,
            eval_mse: Some(v),
            train_mse_final: Some(v),
            wallclock_s: 0.0,
            error: None,
        };
        let cells = summarize(&[row(ModelTag::Ddtnn, 1.0), row(ModelTag::Ddtnn, 3.0), row(ModelTag::Mnn, 2.0)]);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].mean, Some(2.0));
        assert_eq!(cells[0].std, Some(1.0));
        assert_eq!(cells[1].std, Some(0.0));
    }

    #[test]
    fn writes_both_tables() {
        let out = run_table1(&ExperimentConfig {
            tau: vec![0.05],
            noise_seeds: vec![7],
            ..small()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write(dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next(), Some("n,model,mean_tau_0.05,std_tau_0.05,failed"));
        assert!(lines.next().unwrap().starts_with("120,ddtnn,"));
        assert!(lines.next().unwrap().starts_with("120,mnn,"));
        let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 3);
    }
}
