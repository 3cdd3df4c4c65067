//! Sheaf signals (0-cochains) and the maps between them and ambient fields.

use nalgebra::{DMatrix, DMatrixView, DVector};

use super::OrthogonalSheaf;
use crate::error::{Error, Result};
use crate::geometry::AmbientField;

/// Stacked stalk vectors. Node `i` occupies rows `i*d .. (i+1)*d`; each column
/// is one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SheafSignal {
    data: DMatrix<f64>,
    d_hat: usize,
}

impl SheafSignal {
    pub fn new(data: DMatrix<f64>, d_hat: usize) -> Result<Self> {
        if d_hat == 0 || !data.nrows().is_multiple_of(d_hat) {
            return Err(Error::InvalidArgument(format!(
                "signal with {} rows cannot be split into stalks of dimension {d_hat}",
                data.nrows()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("signal has non-finite entries".into()));
        }
        Ok(Self { data, d_hat })
    }

    pub fn from_vector(v: DVector<f64>, d_hat: usize) -> Result<Self> {
        let n = v.len();
        Self::new(DMatrix::from_column_slice(n, 1, v.as_slice()), d_hat)
    }

    pub fn zeros(nodes: usize, d_hat: usize, features: usize) -> Self {
        Self {
            data: DMatrix::zeros(nodes * d_hat, features),
            d_hat,
        }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn d_hat(&self) -> usize {
        self.d_hat
    }

    pub fn node_count(&self) -> usize {
        self.data.nrows() / self.d_hat
    }

    pub fn features(&self) -> usize {
        self.data.ncols()
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Stalk of node `i` (all features).
    pub fn block(&self, i: usize) -> DMatrixView<'_, f64> {
        self.data.rows(i * self.d_hat, self.d_hat)
    }

    /// `||f||^2` under the empirical inner product.
    pub fn norm_squared(&self) -> f64 {
        self.data.norm_squared() / self.node_count() as f64
    }

    pub(crate) fn check_same_shape(&self, other: &SheafSignal, context: &'static str) -> Result<()> {
        if self.d_hat != other.d_hat {
            return Err(Error::mismatch(context, self.d_hat, other.d_hat));
        }
        if self.data.shape() != other.data.shape() {
            return Err(Error::mismatch(context, self.data.len(), other.data.len()));
        }
        Ok(())
    }
}

fn bases_of(sheaf: &OrthogonalSheaf) -> Result<&[DMatrix<f64>]> {
    sheaf.bases().ok_or_else(|| {
        Error::InvalidArgument("sheaf has no tangent bases (scalar construction)".into())
    })
}

/// Sampling operator: stalk `i` is `O_i^T iF(x_i)`.
pub fn sample_field(sheaf: &OrthogonalSheaf, field: &AmbientField) -> Result<SheafSignal> {
    let bases = bases_of(sheaf)?;
    let n = sheaf.node_count();
    if field.len() != n {
        return Err(Error::mismatch("sampled field rows", n, field.len()));
    }
    let p = sheaf.meta().p;
    if field.ambient_dim() != p {
        return Err(Error::mismatch("sampled field ambient dim", p, field.ambient_dim()));
    }
    let d = sheaf.d_hat();
    let mut data = DMatrix::zeros(n * d, 1);
    for (i, o) in bases.iter().enumerate() {
        let v = field.values().row(i).transpose();
        data.view_mut((i * d, 0), (d, 1)).copy_from(&(o.transpose() * v));
    }
    Ok(SheafSignal { data, d_hat: d })
}

/// Ambient lift: row `i` is `O_i f_i`. Single-feature signals only.
pub fn lift_signal(sheaf: &OrthogonalSheaf, signal: &SheafSignal) -> Result<AmbientField> {
    let bases = bases_of(sheaf)?;
    if signal.d_hat() != sheaf.d_hat() {
        return Err(Error::mismatch("lifted signal stalk dim", sheaf.d_hat(), signal.d_hat()));
    }
    if signal.len() != sheaf.dim() {
        return Err(Error::mismatch("lifted signal length", sheaf.dim(), signal.len()));
    }
    if signal.features() != 1 {
        return Err(Error::mismatch("lifted signal features", 1, signal.features()));
    }
    let p = sheaf.meta().p;
    let mut values = DMatrix::zeros(sheaf.node_count(), p);
    for (i, o) in bases.iter().enumerate() {
        let v = o * signal.block(i);
        values.row_mut(i).copy_from(&v.transpose());
    }
    Ok(AmbientField::new(values))
}

/// `(1/n) sum_i <a_i, b_i>` over stalks (Frobenius over features).
pub fn sheaf_inner_product(a: &SheafSignal, b: &SheafSignal) -> Result<f64> {
    a.check_same_shape(b, "inner product operands")?;
    Ok(a.data.dot(&b.data) / a.node_count() as f64)
}
