use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sheaf::SheafParams;
use crate::tnn::{Architecture, Nonlinearity, TrainConfig};

/// Smallest sphere sample for which local PCA has enough neighbours.
const MIN_SPHERE_POINTS: usize = 50;

/// Settings shared by all experiments. Loaded from TOML whose keys are the
/// field names; missing keys take the denoising-table defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Tag written into every result row.
    pub experiment: String,
    /// Sample sizes on the unit sphere.
    pub n: Vec<usize>,
    pub sample_seeds: Vec<u64>,
    pub noise_seeds: Vec<u64>,
    /// Kernel scale; automatic schedule when absent.
    pub epsilon: Option<f64>,
    /// Local PCA scale; equal to the kernel scale when absent.
    pub epsilon_pca: Option<f64>,
    pub gamma: f64,
    /// Noise standard deviations.
    pub tau: Vec<f64>,
    /// Feature widths of the bundle network; the number of layers is
    /// `widths.len() - 1`.
    pub widths: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
    /// Widths of the scalar baseline, which sees the ambient coordinates.
    pub mnn_widths: Vec<usize>,
    pub lr: f64,
    /// Factor by which the learning rate has decayed at the last epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    /// Seed of the network initialisation (also the random taps of the
    /// convergence study).
    pub init_seed: u64,
    /// Number of shared evaluation points in the convergence study.
    pub eval_points: usize,
    /// Number of eigenvalues reported by the spectral study.
    pub eigen_count: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "table1".into(),
            n: vec![200, 800],
            sample_seeds: vec![1, 2, 3, 4, 5],
            noise_seeds: vec![101, 102, 103, 104, 105],
            epsilon: None,
            epsilon_pca: None,
            gamma: 0.9,
            tau: vec![1e-2, 5e-2, 1e-1],
            widths: vec![1, 1],
            taps: 5,
            nonlinearity: Nonlinearity::Identity,
            mnn_widths: vec![3, 3],
            lr: 0.1,
            lr_decay: 0.01,
            epochs: 10000,
            init_seed: 0,
            eval_points: 50,
            eigen_count: 16,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n.is_empty() || self.sample_seeds.is_empty() || self.noise_seeds.is_empty() || self.tau.is_empty() {
            return bad("n, sample_seeds, noise_seeds and tau must be non-empty".into());
        }
        if let Some(&small) = self.n.iter().find(|&&n| n < MIN_SPHERE_POINTS) {
            return bad(format!("n = {small} is below the minimum of {MIN_SPHERE_POINTS} sphere points"));
        }
        if self.tau.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad(format!("noise levels must be finite and non-negative, got {:?}", self.tau));
        }
        for (name, v) in [("epsilon", self.epsilon), ("epsilon_pca", self.epsilon_pca)] {
            if v.is_some_and(|e| !(e.is_finite() && e > 0.0)) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        if self.widths.first() != Some(&1) || self.widths.last() != Some(&1) {
            return bad(format!("widths must start and end with 1, got {:?}", self.widths));
        }
        if self.mnn_widths.first() != Some(&3) || self.mnn_widths.last() != Some(&3) {
            return bad(format!("mnn_widths must start and end with 3, got {:?}", self.mnn_widths));
        }
        self.architecture()?;
        self.mnn_architecture()?;
        if self.eval_points == 0 {
            return bad("eval_points must be positive".into());
        }
        Ok(())
    }

    pub fn sheaf_params(&self) -> SheafParams {
        SheafParams {
            epsilon: self.epsilon,
            epsilon_pca: self.epsilon_pca,
            gamma: self.gamma,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            lr_decay: self.lr_decay,
            ..TrainConfig::default()
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.widths.clone(), self.taps, self.nonlinearity)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mnn_architecture(&self) -> Result<Architecture> {
        Architecture::new(self.mnn_widths.clone(), self.taps, self.nonlinearity)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Sample sizes in ascending order without repeats.
    pub(crate) fn sorted_n(&self) -> Vec<usize> {
        let mut n = self.n.clone();
        n.sort_unstable();
        n.dedup();
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("n = [100]\ntau = [0.0]\nnonlinearity = \"tanh\"\n").unwrap();
        assert_eq!(cfg.n, vec![100]);
        assert_eq!(cfg.tau, vec![0.0]);
        assert_eq!(cfg.nonlinearity, Nonlinearity::Tanh);
        assert_eq!(cfg.taps, 5);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "n = []",
            "n = [40]",
            "tau = [-0.1]",
            "sample_seeds = []",
            "gamma = 1.5",
            "widths = [2, 1]",
            "taps = 0",
            "unknown_key = 1",
            "epsilon = -1.0",
            "lr_decay = 0.0",
            "n = \"many\"",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }
}
