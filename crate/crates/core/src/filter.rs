//! FIR filters with the sheaf shift operator `P = e^{Delta_n}`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sheaf::{OrthogonalSheaf, SheafSignal};
use crate::spectral::{eigendecompose, FirFrequencyResponse, SheafSpectrum};

/// How `e^{Delta_n}` was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMethod {
    /// From the symmetrised eigendecomposition.
    Eig,
    /// Pade approximation with scaling and squaring on the dense Laplacian.
    ScalingSquaring,
}

/// Dense `P = e^{Delta_n}` of size `n d_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    matrix: DMatrix<f64>,
    method: ShiftMethod,
    d_hat: usize,
}

pub fn shift_operator(sheaf: &OrthogonalSheaf, method: ShiftMethod) -> Result<ShiftOperator> {
    match method {
        ShiftMethod::Eig => ShiftOperator::from_spectrum(&eigendecompose(sheaf, None)?),
        ShiftMethod::ScalingSquaring => Ok(ShiftOperator {
            matrix: expm(&sheaf.laplacian_dense()?)?,
            method,
            d_hat: sheaf.d_hat(),
        }),
    }
}

impl ShiftOperator {
    /// `P = Phi e^{-Lambda} Phi^T W / n`, the spectral form of `e^{Delta_n}`
    /// for modes orthonormal in the degree-weighted product.
    pub fn from_spectrum(spectrum: &SheafSpectrum) -> Result<Self> {
        if !spectrum.is_complete() {
            return Err(Error::InvalidArgument(
                "shift operator needs the complete spectrum".into(),
            ));
        }
        let phi = spectrum.eigenvectors();
        let d = spectrum.d_hat();
        let weights = spectrum.node_weights();
        let n = weights.len() as f64;
        let mut left = phi.clone();
        for (c, mut col) in left.column_iter_mut().enumerate() {
            // e^{-lambda} underflows to 0 for very high frequencies
            col *= (-spectrum.eigenvalues()[c]).exp();
        }
        let mut right = phi.clone();
        for (r, mut row) in right.row_iter_mut().enumerate() {
            row *= weights[r / d] / n;
        }
        Ok(Self {
            matrix: left * right.transpose(),
            method: ShiftMethod::Eig,
            d_hat: d,
        })
    }

    /// Wraps an explicit matrix, e.g. one built outside this crate.
    pub fn from_matrix(matrix: DMatrix<f64>, method: ShiftMethod, d_hat: usize) -> Result<Self> {
        if !matrix.is_square() || d_hat == 0 || !matrix.nrows().is_multiple_of(d_hat) {
            return Err(Error::InvalidArgument("shift operator must be square with whole stalks".into()));
        }
        Ok(Self {
            matrix,
            method,
            d_hat,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> ShiftMethod {
        self.method
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `[x, P x, ..., P^{K-1} x]` by repeated products.
    pub fn powers_applied(&self, x: &DMatrix<f64>, k: usize) -> Result<Vec<DMatrix<f64>>> {
        if x.nrows() != self.dim() {
            return Err(Error::mismatch("shift operand rows", self.dim(), x.nrows()));
        }
        let mut out = Vec::with_capacity(k);
        if k == 0 {
            return Ok(out);
        }
        out.push(x.clone());
        for i in 1..k {
            let next = &self.matrix * &out[i - 1];
            out.push(next);
        }
        Ok(out)
    }
}

/// Matrix exponential by scaling and squaring with a diagonal [6/6] Pade
/// approximant, scaled so that `||A / 2^s||_1 <= 1/2`.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("matrix exponential of a non-square matrix".into()));
    }
    let size = a.nrows();
    let norm1 = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if !norm1.is_finite() {
        return Err(Error::InvalidArgument("matrix exponential of a non-finite matrix".into()));
    }
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);

    const Q: usize = 6;
    let mut c = [0.0; Q + 1];
    c[0] = 1.0;
    for k in 1..=Q {
        c[k] = c[k - 1] * (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
    }
    let eye = DMatrix::<f64>::identity(size, size);
    let mut num = &eye * c[0];
    let mut den = &eye * c[0];
    let mut power = eye.clone();
    for (k, &ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * ck;
        if k % 2 == 0 {
            den += &power * ck;
        } else {
            den -= &power * ck;
        }
    }
    let mut x = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::ConvergenceFailure("singular Pade denominator".into()))?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    Ok(x)
}

/// Tap coefficients `h_0 .. h_{K-1}` (unit sampling interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("taps must be non-empty and finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn order(&self) -> usize {
        self.taps.len()
    }

    pub fn frequency_response(&self) -> FirFrequencyResponse {
        FirFrequencyResponse {
            taps: self.taps.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: FirFilter = serde_json::from_str(s)?;
        Self::new(f.taps)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// `sum_k h_k P^k x`, accumulated along `z_{k+1} = P z_k`.
pub fn apply_fir(shift: &ShiftOperator, filter: &FirFilter, x: &SheafSignal) -> Result<SheafSignal> {
    if x.len() != shift.dim() {
        return Err(Error::mismatch("filtered signal length", shift.dim(), x.len()));
    }
    if x.d_hat() != shift.d_hat() {
        return Err(Error::mismatch("filtered signal stalk dim", shift.d_hat(), x.d_hat()));
    }
    let mut z = x.data().clone();
    let mut acc = &z * filter.taps[0];
    for &h in &filter.taps[1..] {
        z = shift.matrix() * &z;
        acc += &z * h;
    }
    SheafSignal::new(acc, x.d_hat())
}
