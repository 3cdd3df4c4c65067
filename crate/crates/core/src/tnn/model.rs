use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ShiftOperator;

/// Pointwise nonlinearity applied to every stalk coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => u.tanh(),
            Nonlinearity::Relu => u.max(0.0),
            Nonlinearity::Identity => u,
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - u.tanh().powi(2),
            Nonlinearity::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            other => Err(Error::InvalidArgument(format!("unknown nonlinearity {other:?}"))),
        }
    }
}

/// Shape of a network: feature widths `F_0..F_L`, taps per filter and the
/// nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
}

impl Architecture {
    pub fn new(widths: Vec<usize>, taps: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "need at least input and output widths, all positive; got {widths:?}"
            )));
        }
        if taps == 0 {
            return Err(Error::InvalidArgument("filters need at least one tap".into()));
        }
        Ok(Self {
            widths,
            taps,
            nonlinearity,
        })
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Filter taps of one layer: `K` matrices `H_k` of size `F_in x F_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct TnnLayerParams {
    pub taps: Vec<DMatrix<f64>>,
}

impl TnnLayerParams {
    pub fn f_in(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn f_out(&self) -> usize {
        self.taps[0].ncols()
    }
}

/// A stack of layers `X_{l+1} = sigma(sum_k P^k X_l H_{l,k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TnnModel {
    arch: Architecture,
    layers: Vec<TnnLayerParams>,
    seed: u64,
    epochs: usize,
}

/// Activations kept by [`TnnModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `[X_l, P X_l, ..., P^{K-1} X_l]` per layer.
    powers: Vec<Vec<DMatrix<f64>>>,
    /// Pre-activations `U_l`.
    pre: Vec<DMatrix<f64>>,
    dim: usize,
    widths: Vec<usize>,
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub taps: Vec<Vec<DMatrix<f64>>>,
    /// `dL/dX_0`, when requested.
    pub input: Option<DMatrix<f64>>,
}

impl TnnModel {
    /// Random initialisation, i.i.d. uniform on `[-a, a]` with
    /// `a = (F_l K)^{-1/2}`, drawn layer by layer, tap by tap, row-major.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = arch.taps;
        let layers = arch
            .widths
            .windows(2)
            .map(|w| {
                let (fin, fout) = (w[0], w[1]);
                let a = 1.0 / ((fin * k) as f64).sqrt();
                let taps = (0..k)
                    .map(|_| {
                        let vals: Vec<f64> = (0..fin * fout).map(|_| rng.gen_range(-a..=a)).collect();
                        DMatrix::from_row_slice(fin, fout, &vals)
                    })
                    .collect();
                TnnLayerParams { taps }
            })
            .collect();
        Self {
            arch,
            layers,
            seed,
            epochs: 0,
        }
    }

    /// Builds a model from explicit taps; widths are read off the matrices.
    pub fn from_layers(layers: Vec<TnnLayerParams>, nonlinearity: Nonlinearity) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("model needs at least one layer".into()))?;
        let k = first.taps.len();
        let mut widths = vec![first.f_in()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.taps.len() != k || k == 0 {
                return Err(Error::InvalidArgument(format!("layer {l} has {} taps, expected {k}", layer.taps.len())));
            }
            if layer.f_in() != *widths.last().expect("non-empty") {
                return Err(Error::mismatch("layer input width", *widths.last().unwrap(), layer.f_in()));
            }
            if layer.taps.iter().any(|h| h.shape() != (layer.f_in(), layer.f_out())) {
                return Err(Error::InvalidArgument(format!("layer {l} has inconsistent tap shapes")));
            }
            if layer.taps.iter().any(|h| h.iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidArgument(format!("layer {l} has non-finite taps")));
            }
            widths.push(layer.f_out());
        }
        let arch = Architecture::new(widths, k, nonlinearity)?;
        Ok(Self {
            arch,
            layers,
            seed: 0,
            epochs: 0,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[TnnLayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [TnnLayerParams] {
        &mut self.layers
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.arch.nonlinearity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub(crate) fn add_epochs(&mut self, e: usize) {
        self.epochs += e;
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.taps).map(|h| h.len()).sum()
    }

    /// Runs the network on `X_0` (`n d_hat x F_0`).
    pub fn forward(&self, shift: &ShiftOperator, x0: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_input(shift, x0)?;
        let first = shift.powers_applied(x0, self.arch.taps)?;
        self.forward_from_powers(shift, first)
    }

    /// As [`TnnModel::forward`], but with the first layer's diffused inputs
    /// `[X_0, P X_0, ...]` supplied. Training reuses them across epochs.
    pub fn forward_from_powers(
        &self,
        shift: &ShiftOperator,
        first: Vec<DMatrix<f64>>,
    ) -> Result<(DMatrix<f64>, ForwardCache)> {
        if first.len() != self.arch.taps {
            return Err(Error::mismatch("precomputed input powers", self.arch.taps, first.len()));
        }
        self.check_input(shift, &first[0])?;
        let sigma = self.arch.nonlinearity;
        let mut powers = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z = first;
        let mut out = DMatrix::zeros(0, 0);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut u = &z[0] * &layer.taps[0];
            for (zk, hk) in z.iter().zip(&layer.taps).skip(1) {
                u += zk * hk;
            }
            out = u.map(|v| sigma.apply(v));
            pre.push(u);
            powers.push(z);
            z = if l + 1 < self.layers.len() {
                shift.powers_applied(&out, self.arch.taps)?
            } else {
                Vec::new()
            };
        }
        Ok((
            out,
            ForwardCache {
                powers,
                pre,
                dim: shift.dim(),
                widths: self.arch.widths.clone(),
            },
        ))
    }

    fn check_input(&self, shift: &ShiftOperator, x0: &DMatrix<f64>) -> Result<()> {
        if x0.nrows() != shift.dim() {
            return Err(Error::mismatch("network input rows", shift.dim(), x0.nrows()));
        }
        if x0.ncols() != self.arch.widths[0] {
            return Err(Error::mismatch("network input features", self.arch.widths[0], x0.ncols()));
        }
        Ok(())
    }

    /// Reverse-mode gradients given `dL/dX_L`.
    pub fn backward(
        &self,
        shift: &ShiftOperator,
        cache: &ForwardCache,
        grad_out: &DMatrix<f64>,
        want_input_grad: bool,
    ) -> Result<Gradients> {
        if cache.widths != self.arch.widths || cache.dim != shift.dim() || cache.pre.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache for widths {:?} on {} rows, model has {:?} on {} rows",
                cache.widths,
                cache.dim,
                self.arch.widths,
                shift.dim()
            )));
        }
        let last = cache.pre.last().expect("at least one layer");
        if grad_out.shape() != last.shape() {
            return Err(Error::StaleCache("upstream gradient shape differs from output".into()));
        }
        let sigma = self.arch.nonlinearity;
        let p = shift.matrix();
        let mut taps = vec![Vec::new(); self.layers.len()];
        let mut upstream = grad_out.clone();
        let mut input = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = upstream.zip_map(&cache.pre[l], |d, u| d * sigma.derivative(u));
            taps[l] = cache.powers[l].iter().map(|z| z.tr_mul(&g)).collect();
            if l > 0 || want_input_grad {
                // sum_k (P^T)^k G H_k^T, Horner from the highest tap down
                let k = layer.taps.len();
                let mut acc = &g * layer.taps[k - 1].transpose();
                for h in layer.taps[..k - 1].iter().rev() {
                    acc = p.tr_mul(&acc) + &g * h.transpose();
                }
                if l == 0 {
                    input = Some(acc);
                } else {
                    upstream = acc;
                }
            }
        }
        Ok(Gradients { taps, input })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            widths: self.arch.widths.clone(),
            taps: self.arch.taps,
            nonlinearity: self.arch.nonlinearity,
            seed: self.seed,
            epochs: self.epochs,
            layers: self
                .layers
                .iter()
                .map(|layer| CheckpointLayer {
                    f_in: layer.f_in(),
                    f_out: layer.f_out(),
                    taps: layer
                        .taps
                        .iter()
                        .map(|h| h.transpose().as_slice().to_vec())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let layers = c
            .layers
            .iter()
            .map(|l| {
                let taps = l
                    .taps
                    .iter()
                    .map(|flat| {
                        if flat.len() != l.f_in * l.f_out {
                            return Err(Error::mismatch("checkpoint tap length", l.f_in * l.f_out, flat.len()));
                        }
                        Ok(DMatrix::from_row_slice(l.f_in, l.f_out, flat))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TnnLayerParams { taps })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::from_layers(layers, c.nonlinearity)?;
        if m.arch.widths != c.widths || m.arch.taps != c.taps {
            return Err(Error::InvalidArgument("checkpoint header disagrees with its layers".into()));
        }
        m.seed = c.seed;
        m.epochs = c.epochs;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(&c)
    }
}

/// JSON checkpoint: layer shapes, taps flattened row-major, nonlinearity,
/// seed and epochs trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub widths: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
    pub epochs: usize,
    pub layers: Vec<CheckpointLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub f_in: usize,
    pub f_out: usize,
    pub taps: Vec<Vec<f64>>,
}
