use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{median, opt_f64};
use crate::error::{Error, Result};
use crate::filter::{shift_operator, ShiftMethod};
use crate::geometry::{rotational_field, sample_sphere};
use crate::sheaf::{build_sheaf, lift_signal, sample_field, SheafSignal};
use crate::tnn::TnnModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub seed: u64,
    pub discrepancy: Option<f64>,
    pub error: Option<String>,
}

/// Median discrepancy at one sample size over the seeds that succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    pub median: Option<f64>,
    pub ok_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub points: Vec<ConvergencePoint>,
    /// The fixed network that was evaluated at every sample size.
    pub model: TnnModel,
}

impl ConvergenceOutcome {
    /// True when every median exists and each is strictly below the previous.
    pub fn strictly_decreasing(&self) -> bool {
        let medians: Option<Vec<f64>> = self.points.iter().map(|p| p.median).collect();
        medians.is_some_and(|m| m.windows(2).all(|w| w[1] < w[0]))
    }

    /// Writes `convergence.csv` (per seed) and `convergence_summary.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("convergence.csv"))?;
        w.write_record(["n", "seed", "discrepancy", "error"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.seed.to_string(),
                opt_f64(r.discrepancy),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("convergence_summary.csv"))?;
        w.write_record(["n", "median_discrepancy", "ok_seeds"])?;
        for p in &self.points {
            w.write_record([p.n.to_string(), opt_f64(p.median), p.ok_seeds.to_string()])?;
        }
        w.flush()?;
        self.model.save(dir.join("model.json"))
    }
}

/// Rescales every layer so that `sum_k ||H_k||_F <= 1`. Since the shift
/// operator is a contraction, each layer then cannot amplify its input.
fn non_amplifying(mut model: TnnModel) -> TnnModel {
    for layer in model.layers_mut() {
        let total: f64 = layer.taps.iter().map(|h| h.norm()).sum();
        if total > 1.0 {
            for h in &mut layer.taps {
                *h /= total;
            }
        }
    }
    model
}

/// Lifted network output at the first `m` points of a sample of size `n`.
fn lifted_output(cfg: &ExperimentConfig, model: &TnnModel, n: usize, seed: u64, m: usize) -> Result<DMatrix<f64>> {
    let full = sample_sphere(*cfg.n.iter().max().expect("validated"), seed)?;
    let cloud = full.prefix(n)?;
    let sheaf = build_sheaf(&cloud, &cfg.sheaf_params())?;
    let shift = shift_operator(&sheaf, ShiftMethod::Eig)?;
    let x = sample_field(&sheaf, &rotational_field(&cloud)?)?;
    let (out, _) = model.forward(&shift, x.data())?;
    let lifted = lift_signal(&sheaf, &SheafSignal::new(out, sheaf.d_hat())?)?;
    Ok(lifted.values().rows(0, m).into_owned())
}

/// Convergence under refinement. For each seed the samples are nested (the
/// sample of size `n` is a prefix of the largest one), so the first
/// `eval_points` points are shared. A fixed untrained network is run on each
/// sheaf, its output is lifted to the ambient space, and the mean squared
/// distance to the largest-sample output at the shared points is reported.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutcome> {
    cfg.validate()?;
    let sizes = cfg.sorted_n();
    let m = cfg.eval_points;
    if m > sizes[0] {
        return Err(Error::Config(format!(
            "eval_points = {m} exceeds the smallest sample size {}",
            sizes[0]
        )));
    }
    let model = non_amplifying(TnnModel::init(cfg.architecture()?, cfg.init_seed));
    let n_max = *sizes.last().expect("non-empty");

    let keys: Vec<(u64, usize)> = cfg
        .sample_seeds
        .iter()
        .flat_map(|&s| sizes.iter().map(move |&n| (s, n)))
        .collect();
    let lifts: Vec<Result<DMatrix<f64>>> = keys
        .par_iter()
        .map(|&(seed, n)| lifted_output(cfg, &model, n, seed, m))
        .collect();

    let mut rows = Vec::with_capacity(keys.len());
    for (idx, &(seed, n)) in keys.iter().enumerate() {
        let reference = keys.iter().position(|&k| k == (seed, n_max)).expect("reference key");
        let row = match (&lifts[idx], &lifts[reference]) {
            (Ok(a), Ok(r)) => ConvergenceRow {
                n,
                seed,
                discrepancy: Some((a - r).norm_squared() / m as f64),
                error: None,
            },
            (Err(e), _) => ConvergenceRow {
                n,
                seed,
                discrepancy: None,
                error: Some(e.to_string()),
            },
            (_, Err(e)) => ConvergenceRow {
                n,
                seed,
                discrepancy: None,
                error: Some(format!("reference failed: {e}")),
            },
        };
        rows.push(row);
    }
    rows.sort_by_key(|r| (r.n, r.seed));

    let points = sizes
        .iter()
        .map(|&n| {
            let mut vals: Vec<f64> = rows.iter().filter(|r| r.n == n).filter_map(|r| r.discrepancy).collect();
            ConvergencePoint {
                n,
                ok_seeds: vals.len(),
                median: median(&mut vals),
            }
        })
        .collect();
    Ok(ConvergenceOutcome { rows, points, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tnn::Nonlinearity;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            experiment: "conv".into(),
            n: vec![300, 100, 150],
            sample_seeds: vec![1, 2, 3],
            eval_points: 30,
            nonlinearity: Nonlinearity::Tanh,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn self_reference_is_zero_and_rows_sorted() {
        let out = run_convergence(&small()).unwrap();
        assert_eq!(out.points.iter().map(|p| p.n).collect::<Vec<_>>(), vec![100, 150, 300]);
        for r in out.rows.iter().filter(|r| r.n == 300) {
            assert_eq!(r.discrepancy, Some(0.0));
        }
        assert!(out.points.iter().all(|p| p.ok_seeds == 3));
        let taps: f64 = out.model.layers()[0].taps.iter().map(|h| h.norm()).sum();
        assert!(taps <= 1.0 + 1e-15);
    }

    #[test]
    fn too_many_eval_points_is_a_config_error() {
        let cfg = ExperimentConfig {
            eval_points: 101,
            ..small()
        };
        assert!(matches!(run_convergence(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn failing_sizes_are_tagged() {
        // with a tiny kernel scale no point has neighbours
        let cfg = ExperimentConfig {
            epsilon: Some(1e-9),
            ..small()
        };
        let out = run_convergence(&cfg).unwrap();
        assert!(out.rows.iter().all(|r| r.error.is_some()));
        assert!(!out.strictly_decreasing());
    }
}
