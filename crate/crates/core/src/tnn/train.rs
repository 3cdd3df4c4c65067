use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::model::{Architecture, TnnModel};
use crate::error::{Error, Result};
use crate::filter::{shift_operator, ShiftMethod, ShiftOperator};
use crate::geometry::AmbientField;
use crate::io::fmt_f64;
use crate::sheaf::{OrthogonalSheaf, SheafSignal};

/// Optimiser settings. Training is full-batch and deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Learning rate multiplier reached at the last update; the rate decays
    /// geometrically from `lr` to `lr * lr_decay`. `1.0` keeps it constant.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            lr_decay: 1.0,
        }
    }
}

/// Losses of the parameters after `epoch` updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub eval_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TnnModel,
    /// `epochs + 1` entries; entry `e` is measured after `e` updates.
    pub trace: Vec<EpochLoss>,
    /// Output of the final model.
    pub output: DMatrix<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> &EpochLoss {
        self.trace.last().expect("trace has the initial entry")
    }

    /// `epoch,train_mse,eval_mse` (empty eval column when no clean target).
    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_mse", "eval_mse"])?;
        for e in &self.trace {
            w.write_record([
                e.epoch.to_string(),
                fmt_f64(e.train_mse),
                e.eval_mse.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(1/n) ||a - b||_F^2` with `n` nodes (`rows / d_hat`).
fn node_mse(a: &DMatrix<f64>, b: &DMatrix<f64>, nodes: usize) -> f64 {
    (a - b).norm_squared() / nodes as f64
}

/// `(1/n) ||output - clean||^2` over stalks.
pub fn evaluate_mse(output: &SheafSignal, clean: &SheafSignal) -> Result<f64> {
    output.check_same_shape(clean, "mse operands")?;
    Ok(node_mse(output.data(), clean.data(), output.node_count()))
}

/// Fits the network's output on `input` to `target` with Adam on the loss
/// `(1/n) ||target - output||_F^2`. `eval_target`, when given, is tracked
/// alongside but never trained on.
pub fn train_network(
    mut model: TnnModel,
    shift: &ShiftOperator,
    input: &DMatrix<f64>,
    target: &DMatrix<f64>,
    eval_target: Option<&DMatrix<f64>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let out_width = *model.architecture().widths.last().expect("widths");
    if target.shape() != (shift.dim(), out_width) {
        return Err(Error::mismatch("training target shape", shift.dim() * out_width, target.len()));
    }
    if let Some(e) = eval_target {
        if e.shape() != target.shape() {
            return Err(Error::mismatch("evaluation target shape", target.len(), e.len()));
        }
    }
    let nodes = shift.dim() / shift.d_hat();
    // the input never changes, so its diffusion is computed once
    let first = shift.powers_applied(input, model.architecture().taps)?;

    let mut adam = AdamState::new(
        model.layers().iter().flat_map(|l| &l.taps),
        cfg.lr,
        cfg.beta1,
        cfg.beta2,
        cfg.eps_adam,
    );
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (out, cache) = model.forward_from_powers(shift, first.clone())?;
        let train_mse = node_mse(&out, target, nodes);
        if !train_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(EpochLoss {
            epoch,
            train_mse,
            eval_mse: eval_target.map(|e| node_mse(&out, e, nodes)),
        });
        if epoch == cfg.epochs {
            model.add_epochs(cfg.epochs);
            return Ok(TrainOutcome {
                model,
                trace,
                output: out,
            });
        }
        adam.lr = cfg.lr * cfg.lr_decay.powf(epoch as f64 / cfg.epochs.saturating_sub(1).max(1) as f64);
        let grad_out = (&out - target) * (2.0 / nodes as f64);
        let grads = model.backward(shift, &cache, &grad_out, false)?;
        adam.update(
            model.layers_mut().iter_mut().flat_map(|l| l.taps.iter_mut()),
            grads.taps.iter().flatten(),
        );
    }
    unreachable!("loop returns on the last epoch")
}

/// Trains a denoiser on a single-feature sheaf signal, with the noisy signal
/// as both input and target.
pub fn train_denoiser(
    model: TnnModel,
    shift: &ShiftOperator,
    noisy: &SheafSignal,
    clean: Option<&SheafSignal>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let widths = &model.architecture().widths;
    if widths[0] != 1 || *widths.last().expect("widths") != 1 {
        return Err(Error::InvalidArgument(format!(
            "denoiser needs one input and one output feature, got widths {widths:?}"
        )));
    }
    if noisy.features() != 1 {
        return Err(Error::mismatch("noisy signal features", 1, noisy.features()));
    }
    if let Some(c) = clean {
        noisy.check_same_shape(c, "clean signal")?;
    }
    train_network(model, shift, noisy.data(), noisy.data(), clean.map(|c| c.data()), cfg)
}

/// Shift operator of the scalar construction on the same kernel weights.
pub fn scalar_shift(sheaf: &OrthogonalSheaf) -> Result<ShiftOperator> {
    let scalar = OrthogonalSheaf::trivial_bundle(sheaf.graph().clone(), sheaf.epsilon())?;
    shift_operator(&scalar, ShiftMethod::Eig)
}

#[derive(Debug, Clone)]
pub struct MnnOutcome {
    pub training: TrainOutcome,
    pub eval_mse: f64,
}

/// Trains the scalar-graph baseline on the ambient coordinates of a noisy
/// field (one feature per coordinate) and scores it against the clean field.
pub fn train_mnn(
    scalar: &ShiftOperator,
    noisy: &AmbientField,
    clean: &AmbientField,
    arch: Architecture,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<MnnOutcome> {
    if scalar.d_hat() != 1 {
        return Err(Error::mismatch("baseline stalk dimension", 1, scalar.d_hat()));
    }
    let p = noisy.ambient_dim();
    if arch.widths[0] != p || *arch.widths.last().expect("widths") != p {
        return Err(Error::InvalidArgument(format!(
            "baseline widths {:?} must start and end with the ambient dimension {p}",
            arch.widths
        )));
    }
    if noisy.values().shape() != clean.values().shape() {
        return Err(Error::mismatch("clean field rows", noisy.len(), clean.len()));
    }
    let model = TnnModel::init(arch, seed);
    let training = train_network(model, scalar, noisy.values(), noisy.values(), Some(clean.values()), cfg)?;
    let eval_mse = node_mse(&training.output, clean.values(), noisy.len());
    Ok(MnnOutcome { training, eval_mse })
}

/// Manifold-network baseline: same kernel weights, one-dimensional stalks
/// with identity transports, ambient coordinates as features.
pub fn mnn_baseline(
    sheaf: &OrthogonalSheaf,
    noisy: &AmbientField,
    clean: &AmbientField,
    arch: Architecture,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<MnnOutcome> {
    train_mnn(&scalar_shift(sheaf)?, noisy, clean, arch, seed, cfg)
}
