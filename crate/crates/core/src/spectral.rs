//! Eigendecomposition of the sheaf Laplacian and filtering in its eigenbasis.
//!
//! `Delta_n` is self-adjoint for the degree-weighted product
//! `<a, b>_D = (1/n) sum_i w_i <a_i, b_i>` with `w_i = ndeg(i) / mean(ndeg)`,
//! so eigenvectors are orthonormal for that product and all frequency
//! coefficients use it. When `ndeg` is constant it is the plain empirical
//! product of [`sheaf_inner_product`](crate::sheaf::sheaf_inner_product).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};
use crate::sheaf::{OrthogonalSheaf, SheafSignal};

/// Eigenpairs of `-Delta_n`, ascending.
#[derive(Debug, Clone)]
pub struct SheafSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    node_weights: Vec<f64>,
    d_hat: usize,
    complete: bool,
}

/// Eigendecomposes `Delta_n` through its symmetrisation
/// `D^{1/2} Delta_n D^{-1/2}`. `count = None` keeps the full spectrum,
/// otherwise the `count` lowest frequencies.
pub fn eigendecompose(sheaf: &OrthogonalSheaf, count: Option<usize>) -> Result<SheafSpectrum> {
    let sym = sheaf.symmetrized_laplacian()?;
    let size = sym.nrows();
    let d = sheaf.d_hat();
    let n = sheaf.node_count();
    let k = count.unwrap_or(size).min(size);

    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or_else(|| {
        Error::ConvergenceFailure(format!("symmetric eigensolver on {size}x{size} operator"))
    })?;
    // solver returns eigenvalues mu of Delta_n; frequencies are lambda = -mu
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(k);

    let mean_ndeg = sheaf.ndeg().iter().sum::<f64>() / n as f64;
    let node_weights: Vec<f64> = sheaf.ndeg().iter().map(|&v| v / mean_ndeg).collect();

    let mut eigenvectors = DMatrix::zeros(size, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (c, &src) in order.iter().enumerate() {
        eigenvalues.push(-eig.eigenvalues[src]);
        let u = eig.eigenvectors.column(src);
        let mut col = eigenvectors.column_mut(c);
        for r in 0..size {
            // phi = sqrt(n / w_i) u has unit norm in <.,.>_D
            col[r] = u[r] * (n as f64 / node_weights[r / d]).sqrt();
        }
        fix_sign(&mut col);
    }
    Ok(SheafSpectrum {
        eigenvalues,
        eigenvectors,
        node_weights,
        d_hat: d,
        complete: k == size,
    })
}

fn fix_sign(col: &mut nalgebra::DVectorViewMut<'_, f64>) {
    let scale = col.amax();
    if let Some(first) = col.iter().find(|v| v.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            col.neg_mut();
        }
    }
}

/// Outcome of a bandlimitedness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandlimit {
    pub bandlimited: bool,
    /// Fraction of energy above the cutoff.
    pub residual: f64,
}

impl SheafSpectrum {
    /// Frequencies `lambda_1 <= lambda_2 <= ...` (spectrum of `-Delta_n`).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are the oscillation modes `phi_i`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    /// Mode `i` as a single-feature signal.
    pub fn mode(&self, i: usize) -> SheafSignal {
        SheafSignal::from_vector(self.eigenvectors.column(i).into_owned(), self.d_hat)
            .expect("eigenvectors are finite")
    }

    fn weighted(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d_hat;
        let n = self.node_weights.len() as f64;
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] * self.node_weights[r / d] / n)
    }

    fn check(&self, signal: &SheafSignal) -> Result<()> {
        if signal.len() != self.eigenvectors.nrows() || signal.d_hat() != self.d_hat {
            return Err(Error::mismatch("spectral operand length", self.eigenvectors.nrows(), signal.len()));
        }
        Ok(())
    }

    /// Degree-weighted inner product (Frobenius over features).
    pub fn inner(&self, a: &SheafSignal, b: &SheafSignal) -> Result<f64> {
        self.check(a)?;
        a.check_same_shape(b, "spectral inner product")?;
        Ok(self.weighted(a.data()).dot(b.data()))
    }

    pub fn norm_squared(&self, a: &SheafSignal) -> Result<f64> {
        self.inner(a, a)
    }

    /// `[f^]_i = <f, phi_i>_D`, one row per stored mode and one column per feature.
    pub fn frequency_coeffs(&self, signal: &SheafSignal) -> Result<DMatrix<f64>> {
        self.check(signal)?;
        Ok(self.eigenvectors.tr_mul(&self.weighted(signal.data())))
    }

    /// `sum_i h(lambda_i) [f^]_i phi_i`. A partial spectrum is accepted only if
    /// the signal lives in the stored modes.
    pub fn spectral_filter(
        &self,
        response: &FirFrequencyResponse,
        signal: &SheafSignal,
    ) -> Result<SheafSignal> {
        let coeffs = self.frequency_coeffs(signal)?;
        if !self.complete {
            let total = self.norm_squared(signal)?;
            let kept = coeffs.norm_squared();
            let residual = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };
            if residual > 1e-10 {
                return Err(Error::PartialSpectrum { residual });
            }
        }
        let mut scaled = coeffs;
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= response.eval(self.eigenvalues[i]);
        }
        SheafSignal::new(&self.eigenvectors * scaled, self.d_hat)
    }

    /// True iff the energy above `lambda_m` is at most `tol` of the total.
    /// Modes missing from a partial spectrum count as above the cutoff.
    pub fn is_bandlimited(&self, signal: &SheafSignal, lambda_m: f64, tol: f64) -> Result<Bandlimit> {
        let coeffs = self.frequency_coeffs(signal)?;
        let total = self.norm_squared(signal)?;
        if total == 0.0 {
            return Ok(Bandlimit {
                bandlimited: true,
                residual: 0.0,
            });
        }
        let below: f64 = self
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= lambda_m)
            .map(|(i, _)| coeffs.row(i).norm_squared())
            .sum();
        let residual = ((total - below) / total).clamp(0.0, 1.0);
        Ok(Bandlimit {
            bandlimited: residual <= tol,
            residual,
        })
    }

    /// `eigenvalues.csv` (index, lambda), `eigenvectors.bin` (column-major
    /// little-endian f64) and `eigenvectors.json` with the dimensions.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("eigenvalues.csv"))?;
        w.write_record(["index", "lambda"])?;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(*l)])?;
        }
        w.flush()?;
        let mut bytes = Vec::with_capacity(self.eigenvectors.len() * 8);
        for v in self.eigenvectors.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("eigenvectors.bin"), bytes)?;
        let side = EigenvectorLayout {
            rows: self.eigenvectors.nrows(),
            cols: self.eigenvectors.ncols(),
            order: "column-major".into(),
            dtype: "float64-le".into(),
            d_hat: self.d_hat,
        };
        fs::write(dir.join("eigenvectors.json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    /// Reads back the eigenpairs written by [`SheafSpectrum::write`].
    pub fn read_modes(dir: impl AsRef<Path>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let dir = dir.as_ref();
        let path = dir.join("eigenvalues.csv");
        let mut r = csv::Reader::from_path(&path)?;
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            values.push(parse_f64(rec.get(1).unwrap_or(""), &path)?);
        }
        let side: EigenvectorLayout =
            serde_json::from_str(&fs::read_to_string(dir.join("eigenvectors.json"))?)?;
        let bytes = fs::read(dir.join("eigenvectors.bin"))?;
        if bytes.len() != side.rows * side.cols * 8 {
            return Err(Error::Parse {
                path: dir.join("eigenvectors.bin"),
                reason: format!("expected {} bytes, found {}", side.rows * side.cols * 8, bytes.len()),
            });
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok((values, DMatrix::from_column_slice(side.rows, side.cols, &data)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EigenvectorLayout {
    rows: usize,
    cols: usize,
    order: String,
    dtype: String,
    d_hat: usize,
}

/// Frequency response `h(lambda) = sum_k h_k e^{-k lambda}` of FIR taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFrequencyResponse {
    pub taps: Vec<f64>,
}

impl FirFrequencyResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("taps must be non-empty and finite".into()));
        }
        Ok(Self { taps })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let z = (-lambda).exp();
        // Horner in z = e^{-lambda}
        self.taps.iter().rev().fold(0.0, |acc, &h| acc * z + h)
    }
}

/// Grid diagnostics of a frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseAnalysis {
    pub max_abs: f64,
    /// Largest finite-difference slope on the grid.
    pub lipschitz: f64,
    /// `max |h| <= 1` on the grid.
    pub non_amplifying: bool,
}

pub fn analyze_response(response: &FirFrequencyResponse, lambda_grid: &[f64]) -> ResponseAnalysis {
    let vals: Vec<f64> = lambda_grid.iter().map(|&l| response.eval(l)).collect();
    let max_abs = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lipschitz = lambda_grid
        .windows(2)
        .zip(vals.windows(2))
        .filter(|(l, _)| l[1] != l[0])
        .map(|(l, v)| ((v[1] - v[0]) / (l[1] - l[0])).abs())
        .fold(0.0f64, f64::max);
    ResponseAnalysis {
        max_abs,
        lipschitz,
        non_amplifying: max_abs <= 1.0 + 1e-12,
    }
}

/// `m` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
    }
}

/// Relative spread `(max - min) / mean` of a cluster of eigenvalues.
pub fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / mean
}
