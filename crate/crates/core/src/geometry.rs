//! Point clouds on embedded manifolds and ambient vector fields over them.

use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64};

/// Which manifold a cloud was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldTag {
    Sphere2,
    Custom,
}

/// `n` points in ambient `R^p`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>,
    seed: u64,
    manifold: ManifoldTag,
}

impl PointCloud {
    /// Wraps an arbitrary set of points. Rejects empty clouds, non-finite
    /// coordinates and repeated points.
    pub fn new(points: DMatrix<f64>, seed: u64, manifold: ManifoldTag) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidArgument("point cloud must be non-empty".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point cloud has non-finite coordinates".into()));
        }
        for i in 0..points.nrows() {
            for j in 0..i {
                if points.row(i) == points.row(j) {
                    return Err(Error::InvalidArgument(format!(
                        "points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            points,
            seed,
            manifold,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> nalgebra::DVector<f64> {
        self.points.row(i).transpose()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn manifold(&self) -> ManifoldTag {
        self.manifold
    }

    /// The first `m` points as a cloud of their own.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {m} out of range 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            points: self.points.rows(0, m).into_owned(),
            seed: self.seed,
            manifold: self.manifold,
        })
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        let p = &self.points;
        (0..p.ncols()).map(|c| (p[(i, c)] - p[(j, c)]).powi(2)).sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = self.ambient_dim();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((1..=p).map(|c| format!("x{c}")))?;
        for row in self.points.row_iter() {
            w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a cloud written by [`PointCloud::write_csv`] (or any CSV whose
    /// columns are `x1..xp`). The result is tagged [`ManifoldTag::Custom`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let p = r.headers()?.len();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != p {
                return Err(Error::Parse {
                    path: path.into(),
                    reason: format!("expected {p} columns, found {}", rec.len()),
                });
            }
            let vals = rec
                .iter()
                .map(|s| parse_f64(s, path))
                .collect::<Result<Vec<_>>>()?;
            rows.push(RowDVector::from_vec(vals));
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                reason: "no points".into(),
            });
        }
        Self::new(DMatrix::from_rows(&rows), 0, ManifoldTag::Custom)
    }
}

/// Embedded tangent vectors `iF(x_i)`, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientField {
    values: DMatrix<f64>,
}

impl AmbientField {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self::new(DMatrix::zeros(n, p))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.values.ncols()
    }

    /// Empirical mean squared distance `(1/n) ||a - b||_F^2`.
    pub fn mse(&self, other: &AmbientField) -> Result<f64> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::mismatch("ambient field mse", self.len(), other.len()));
        }
        Ok((&self.values - &other.values).norm_squared() / self.len() as f64)
    }

    pub fn write_csv(&self, cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
        if cloud.len() != self.len() {
            return Err(Error::mismatch("field csv rows", cloud.len(), self.len()));
        }
        let p = cloud.ambient_dim();
        let q = self.ambient_dim();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(
            (1..=p)
                .map(|c| format!("x{c}"))
                .chain((1..=q).map(|c| format!("v{c}"))),
        )?;
        for i in 0..self.len() {
            w.write_record(
                cloud
                    .points
                    .row(i)
                    .iter()
                    .chain(self.values.row(i).iter())
                    .map(|&v| fmt_f64(v)),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` points uniformly on the unit sphere in `R^3` by normalising
/// standard-normal triples.
///
/// Points are generated sequentially from one stream, so the cloud for a
/// smaller `n` is a prefix of the cloud for a larger `n` with the same seed.
pub fn sample_sphere(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot sample zero points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n, 3);
    let mut filled = 0;
    while filled < n {
        let g: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let x = [g[0] / norm, g[1] / norm, g[2] / norm];
        let duplicate = (0..filled).any(|j| {
            points[(j, 0)] == x[0] && points[(j, 1)] == x[1] && points[(j, 2)] == x[2]
        });
        if duplicate {
            continue;
        }
        for (c, v) in x.into_iter().enumerate() {
            points[(filled, c)] = v;
        }
        filled += 1;
    }
    Ok(PointCloud {
        points,
        seed,
        manifold: ManifoldTag::Sphere2,
    })
}

/// The rotation field `iF(x, y, z) = (-y, x, 0)`, tangent to the sphere.
pub fn rotational_field(cloud: &PointCloud) -> Result<AmbientField> {
    if cloud.ambient_dim() != 3 {
        return Err(Error::mismatch("rotational field ambient dim", 3, cloud.ambient_dim()));
    }
    let p = cloud.points();
    let values = DMatrix::from_fn(cloud.len(), 3, |i, c| match c {
        0 => -p[(i, 1)],
        1 => p[(i, 0)],
        _ => 0.0,
    });
    Ok(AmbientField::new(values))
}

/// Adds i.i.d. `N(0, tau^2)` noise to every ambient coordinate.
pub fn add_awgn(field: &AmbientField, tau: f64, seed: u64) -> Result<AmbientField> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be finite and non-negative, got {tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(field.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = field.values.shape();
    let mut out = field.values.clone();
    // row-major draw order so the noise does not depend on storage layout
    for i in 0..n {
        for c in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[(i, c)] += tau * z;
        }
    }
    Ok(AmbientField::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_has_unit_norm() {
        let c = sample_sphere(1, 42).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.point(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_points_rejected() {
        assert!(matches!(sample_sphere(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sphere_sample_statistics() {
        let n = 200;
        let c = sample_sphere(n, 7).unwrap();
        for i in 0..n {
            assert!((c.point(i).norm() - 1.0).abs() < 1e-12);
        }
        let mean = c.points().row_mean();
        assert!(mean.norm() < 3.0 / (n as f64).sqrt(), "mean norm {}", mean.norm());
    }

    #[test]
    fn sphere_sampling_is_deterministic_and_nested() {
        let a = sample_sphere(300, 11).unwrap();
        let b = sample_sphere(300, 11).unwrap();
        assert_eq!(a, b);
        let small = sample_sphere(120, 11).unwrap();
        assert_eq!(small.points(), &a.points().rows(0, 120).into_owned());
        assert_ne!(sample_sphere(10, 12).unwrap().points(), a.prefix(10).unwrap().points());
    }

    #[test]
    fn rotational_field_values() {
        let pts = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let c = PointCloud::new(pts, 0, ManifoldTag::Sphere2).unwrap();
        let f = rotational_field(&c).unwrap();
        assert_eq!(f.values().row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0]);
        assert_eq!(f.values().row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rotational_field_is_tangent() {
        let c = sample_sphere(500, 3).unwrap();
        let f = rotational_field(&c).unwrap();
        for i in 0..c.len() {
            let dot = c.points().row(i).dot(&f.values().row(i));
            assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn rotational_field_needs_three_dims() {
        let c = PointCloud::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 0, ManifoldTag::Custom)
            .unwrap();
        assert!(matches!(rotational_field(&c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn awgn_zero_tau_is_identity() {
        let c = sample_sphere(50, 1).unwrap();
        let f = rotational_field(&c).unwrap();
        assert_eq!(add_awgn(&f, 0.0, 9).unwrap(), f);
        assert!(add_awgn(&f, -1.0, 9).is_err());
    }

    #[test]
    fn awgn_variance_matches() {
        // chi-square concentration: 600 samples, relative sd of the variance
        // estimate is sqrt(2/600) ~ 6%, so 30% is a > 5 sigma band
        let c = sample_sphere(200, 1).unwrap();
        let f = rotational_field(&c).unwrap();
        let tau = 1e-2;
        let g = add_awgn(&f, tau, 5).unwrap();
        let diff = g.values() - f.values();
        let var = diff.norm_squared() / diff.len() as f64;
        assert!((var / (tau * tau) - 1.0).abs() < 0.3, "variance {var}");
    }

    #[test]
    fn awgn_seeds_differ() {
        let c = sample_sphere(20, 1).unwrap();
        let f = rotational_field(&c).unwrap();
        let a = add_awgn(&f, 0.1, 1).unwrap();
        let b = add_awgn(&f, 0.1, 2).unwrap();
        assert_eq!(a.values().shape(), b.values().shape());
        assert_ne!(a, b);
        assert_eq!(a, add_awgn(&f, 0.1, 1).unwrap());
    }

    #[test]
    fn duplicate_points_rejected() {
        let pts = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(PointCloud::new(pts, 0, ManifoldTag::Custom).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample_sphere(40, 8).unwrap();
        let path = dir.path().join("cloud.csv");
        c.write_csv(&path).unwrap();
        let back = PointCloud::read_csv(&path).unwrap();
        assert_eq!(back.points(), c.points());
        assert_eq!(back.manifold(), ManifoldTag::Custom);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("x1,x2,x3\n"));

        let f = rotational_field(&c).unwrap();
        let fpath = dir.path().join("field.csv");
        f.write_csv(&c, &fpath).unwrap();
        let text = std::fs::read_to_string(&fpath).unwrap();
        assert!(text.starts_with("x1,x2,x3,v1,v2,v3\n"));
    }
}
