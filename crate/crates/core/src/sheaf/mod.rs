//! Discrete `O(d)`-bundles built from point clouds.
//!
//! The pipeline is: truncated Gaussian kernel graph, local PCA tangent bases,
//! nearest-orthogonal transports along edges, and finally the block matrices
//! `S`, `D` and the normalised sheaf Laplacian `eps^-1 (D^-1 S - I)`.

mod io;
mod pca;
mod signal;
mod transport;
mod weights;

pub use pca::{explained_dimension, local_pca, LocalBases};
pub use signal::{lift_signal, sample_field, sheaf_inner_product, SheafSignal};
pub use transport::{nearest_orthogonal, transport_operators, Transports};
pub use weights::{default_epsilon, kernel_value, kernel_weights, WeightGraph};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Largest `n * d_hat` for which dense Laplacian copies are formed.
pub const DENSE_CAP: usize = 4096;

/// Construction parameters. `None` scales follow the default schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheafParams {
    pub epsilon: Option<f64>,
    pub epsilon_pca: Option<f64>,
    pub gamma: f64,
}

impl Default for SheafParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            epsilon_pca: None,
            gamma: 0.9,
        }
    }
}

/// Provenance and sizes, written to `meta.json` on save.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheafMeta {
    pub n: usize,
    pub p: usize,
    pub d_hat: usize,
    pub epsilon: f64,
    pub epsilon_pca: Option<f64>,
    pub seed: u64,
    pub gamma: Option<f64>,
}

/// An assembled orthogonal sheaf. Immutable once built.
#[derive(Debug, Clone)]
pub struct OrthogonalSheaf {
    meta: SheafMeta,
    bases: Option<Vec<DMatrix<f64>>>,
    graph: WeightGraph,
    transports: Transports,
    degree: Vec<f64>,
    ndeg: Vec<f64>,
    // w_ij / (deg_i deg_j), aligned with the graph's CSR entries
    coef: Vec<f64>,
}

/// Builds the sheaf of a point cloud.
///
/// With an automatic `epsilon`, the scale is first chosen for a hypersurface
/// (`d = p - 1`), local PCA estimates `d_hat`, and if that differs the scale
/// is recomputed for `d_hat` and local PCA is repeated once.
pub fn build_sheaf(cloud: &PointCloud, params: &SheafParams) -> Result<OrthogonalSheaf> {
    let n = cloud.len();
    let guess = cloud.ambient_dim().saturating_sub(1).max(1);
    let mut epsilon = params.epsilon.unwrap_or_else(|| default_epsilon(n, guess));
    let mut local = local_pca(cloud, params.epsilon_pca.unwrap_or(epsilon), params.gamma)?;
    if params.epsilon.is_none() && local.d_hat != guess {
        epsilon = default_epsilon(n, local.d_hat);
        if params.epsilon_pca.is_none() {
            local = local_pca(cloud, epsilon, params.gamma)?;
        }
    }
    let epsilon_pca = params.epsilon_pca.unwrap_or(epsilon);
    log::debug!(
        "sheaf: n={n} d_hat={} epsilon={epsilon:.5} epsilon_pca={epsilon_pca:.5}",
        local.d_hat
    );
    let graph = kernel_weights(cloud, epsilon)?;
    let transports = transport_operators(&graph, &local.bases)?;
    let mut sheaf = assemble_laplacian(graph, Some(local.bases), transports, epsilon)?;
    sheaf.meta.p = cloud.ambient_dim();
    sheaf.meta.seed = cloud.seed();
    sheaf.meta.gamma = Some(params.gamma);
    sheaf.meta.epsilon_pca = Some(epsilon_pca);
    Ok(sheaf)
}

/// Degrees, `S`, `D` and the Laplacian from weights, bases and transports.
pub fn assemble_laplacian(
    graph: WeightGraph,
    bases: Option<Vec<DMatrix<f64>>>,
    transports: Transports,
    epsilon: f64,
) -> Result<OrthogonalSheaf> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = graph.node_count();
    let d = transports.dim();
    if transports.len() != graph.nnz() {
        return Err(Error::mismatch("transports per edge", graph.nnz(), transports.len()));
    }
    let mut p = 0;
    if let Some(b) = &bases {
        if b.len() != n {
            return Err(Error::mismatch("tangent basis count", n, b.len()));
        }
        p = b.first().map_or(0, |o| o.nrows());
        if let Some(o) = b.iter().find(|o| o.shape() != (p, d)) {
            return Err(Error::mismatch("tangent basis columns", d, o.ncols()));
        }
    }

    let degree: Vec<f64> = (0..n).map(|i| graph.neighbors(i).map(|(_, w)| w).sum()).collect();
    if let Some(i) = degree.iter().position(|&g| g.is_nan() || g <= 0.0) {
        return Err(Error::ZeroDegree(i));
    }
    let mut coef = vec![0.0; graph.nnz()];
    let mut ndeg = vec![0.0; n];
    for i in 0..n {
        for k in graph.row_range(i) {
            let j = graph.col(k);
            coef[k] = graph.weight_at(k) / (degree[i] * degree[j]);
            ndeg[i] += coef[k];
        }
    }

    Ok(OrthogonalSheaf {
        meta: SheafMeta {
            n,
            p,
            d_hat: d,
            epsilon,
            epsilon_pca: None,
            seed: 0,
            gamma: None,
        },
        bases,
        graph,
        transports,
        degree,
        ndeg,
        coef,
    })
}

/// Largest deviations from the structural invariants of an orthogonal sheaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    /// `max_i |O_i^T O_i - I|`; zero when there are no bases.
    pub basis_orthonormality: f64,
    /// `max_ij |O_ij^T O_ij - I|`.
    pub transport_orthogonality: f64,
    /// `max_ij |O_ji - O_ij^T|`.
    pub transport_symmetry: f64,
    /// `max_ij |S_ij - S_ji^T|`.
    pub s_block_symmetry: f64,
    /// Smallest diagonal entry of `D`.
    pub min_ndeg: f64,
}

impl OrthogonalSheaf {
    /// The scalar construction on a weight graph: one-dimensional stalks and
    /// identity transports.
    pub fn trivial_bundle(graph: WeightGraph, epsilon: f64) -> Result<Self> {
        let transports = Transports::identity(&graph, 1);
        assemble_laplacian(graph, None, transports, epsilon)
    }

    pub fn meta(&self) -> &SheafMeta {
        &self.meta
    }

    pub fn node_count(&self) -> usize {
        self.meta.n
    }

    pub fn d_hat(&self) -> usize {
        self.meta.d_hat
    }

    pub fn epsilon(&self) -> f64 {
        self.meta.epsilon
    }

    /// `n * d_hat`, the length of a single-feature sheaf signal.
    pub fn dim(&self) -> usize {
        self.meta.n * self.meta.d_hat
    }

    pub fn bases(&self) -> Option<&[DMatrix<f64>]> {
        self.bases.as_deref()
    }

    pub fn graph(&self) -> &WeightGraph {
        &self.graph
    }

    pub fn transports(&self) -> &Transports {
        &self.transports
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Diagonal of `D` (one value per node).
    pub fn ndeg(&self) -> &[f64] {
        &self.ndeg
    }

    /// Transport `O_ij`, or `None` when `i` and `j` are not adjacent.
    pub fn transport(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        self.graph.position(i, j).map(|k| self.transports.at(k).into_owned())
    }

    /// Block `S_ij = w_ij deg(i)^-1 O_ij deg(j)^-1` (zero when not adjacent).
    pub fn s_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.d_hat();
        match self.graph.position(i, j) {
            Some(k) => self.transports.at(k) * self.coef[k],
            None => DMatrix::zeros(d, d),
        }
    }

    /// Dense `eps^-1 (D^-1 S - I)`.
    pub fn laplacian_dense(&self) -> Result<DMatrix<f64>> {
        self.dense_operator(|i, _, k| self.coef[k] / self.ndeg[i])
    }

    /// Dense `D^{1/2} Delta_n D^{-1/2} = eps^-1 (D^{-1/2} S D^{-1/2} - I)`,
    /// symmetric by construction.
    pub fn symmetrized_laplacian(&self) -> Result<DMatrix<f64>> {
        self.dense_operator(|i, j, k| self.coef[k] / (self.ndeg[i] * self.ndeg[j]).sqrt())
    }

    fn dense_operator(&self, scale: impl Fn(usize, usize, usize) -> f64) -> Result<DMatrix<f64>> {
        let size = self.dim();
        if size > DENSE_CAP {
            return Err(Error::DimensionOverflow {
                size,
                cap: DENSE_CAP,
            });
        }
        let d = self.d_hat();
        let eps = self.epsilon();
        let mut m = DMatrix::zeros(size, size);
        for i in 0..self.node_count() {
            for k in self.graph.row_range(i) {
                let j = self.graph.col(k);
                let c = scale(i, j, k);
                let o = self.transports.at(k);
                for a in 0..d {
                    for b in 0..d {
                        m[(i * d + a, j * d + b)] = (c * o[(a, b)]) / eps;
                    }
                }
            }
        }
        for r in 0..size {
            m[(r, r)] -= 1.0 / eps;
        }
        Ok(m)
    }

    /// Sparse product `Delta_n X` for an `n d_hat x F` matrix.
    pub fn apply_laplacian(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(Error::mismatch("laplacian operand rows", self.dim(), x.nrows()));
        }
        let d = self.d_hat();
        let eps = self.epsilon();
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..self.node_count() {
            let mut acc = DMatrix::zeros(d, x.ncols());
            for k in self.graph.row_range(i) {
                let j = self.graph.col(k);
                let c = self.coef[k] / self.ndeg[i];
                acc += (self.transports.at(k) * x.rows(j * d, d)) * c;
            }
            let xi = x.rows(i * d, d);
            y.rows_mut(i * d, d).copy_from(&((acc - xi) / eps));
        }
        Ok(y)
    }

    pub fn structure_report(&self) -> StructureReport {
        let d = self.d_hat();
        let eye = DMatrix::<f64>::identity(d, d);
        let basis_orthonormality = self.bases.as_ref().map_or(0.0, |b| {
            b.iter()
                .map(|o| (o.transpose() * o - &eye).abs().max())
                .fold(0.0, f64::max)
        });
        let mut transport_orthogonality: f64 = 0.0;
        let mut transport_symmetry: f64 = 0.0;
        let mut s_block_symmetry: f64 = 0.0;
        for i in 0..self.node_count() {
            for k in self.graph.row_range(i) {
                let j = self.graph.col(k);
                let o = self.transports.at(k);
                transport_orthogonality =
                    transport_orthogonality.max((o.transpose() * o - &eye).abs().max());
                let back = self.transports.at(self.graph.position(j, i).expect("symmetric graph"));
                transport_symmetry = transport_symmetry.max((back - o.transpose()).abs().max());
                let sij = self.s_block(i, j);
                let sji = self.s_block(j, i);
                s_block_symmetry = s_block_symmetry.max((sij - sji.transpose()).abs().max());
            }
        }
        StructureReport {
            basis_orthonormality,
            transport_orthogonality,
            transport_symmetry,
            s_block_symmetry,
            min_ndeg: self.ndeg.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

pub use io::{load_sheaf, save_sheaf};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_sphere;

    fn path3() -> WeightGraph {
        WeightGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn path_graph_degrees() {
        let s = OrthogonalSheaf::trivial_bundle(path3(), 1.0).unwrap();
        assert_eq!(s.degree(), &[1.0, 2.0, 1.0]);
        // ndeg(1) = 1/(2*1) + 1/(2*1)
        assert_eq!(s.ndeg(), &[0.5, 1.0, 0.5]);
        let l = s.laplacian_dense().unwrap();
        let ones = nalgebra::DVector::from_element(3, 1.0);
        assert!((l * ones).norm() < 1e-15);
    }

    #[test]
    fn path_graph_random_walk_rows() {
        let s = OrthogonalSheaf::trivial_bundle(path3(), 0.5).unwrap();
        let l = s.laplacian_dense().unwrap();
        // D^-1 S = eps * L + I
        let p = &l * 0.5 + DMatrix::identity(3, 3);
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0]);
        assert!((p - expect).abs().max() < 1e-15);
    }

    #[test]
    fn trivial_bundle_matches_scalar_normalised_laplacian() {
        let c = sample_sphere(120, 5).unwrap();
        let eps = default_epsilon(120, 2);
        let g = kernel_weights(&c, eps).unwrap();
        let w = g.to_dense();
        let s = OrthogonalSheaf::trivial_bundle(g, eps).unwrap();
        let deg: Vec<f64> = (0..120).map(|i| w.row(i).sum()).collect();
        let wt = DMatrix::from_fn(120, 120, |i, j| w[(i, j)] / (deg[i] * deg[j]));
        let nd: Vec<f64> = (0..120).map(|i| wt.row(i).sum()).collect();
        let oracle = DMatrix::from_fn(120, 120, |i, j| {
            (wt[(i, j)] / nd[i] - if i == j { 1.0 } else { 0.0 }) / eps
        });
        let l = s.laplacian_dense().unwrap();
        assert!((l - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn sparse_and_dense_laplacian_agree() {
        let c = sample_sphere(150, 9).unwrap();
        let s = build_sheaf(&c, &SheafParams::default()).unwrap();
        let x = DMatrix::from_fn(s.dim(), 2, |r, f| ((r * 7 + f * 3) % 11) as f64 - 5.0);
        let dense = s.laplacian_dense().unwrap() * &x;
        let sparse = s.apply_laplacian(&x).unwrap();
        assert!((dense - sparse).abs().max() < 1e-10 * s.laplacian_dense().unwrap().abs().max());
    }

    #[test]
    fn symmetrization_identity() {
        let c = sample_sphere(120, 2).unwrap();
        let s = build_sheaf(&c, &SheafParams::default()).unwrap();
        let sym = s.symmetrized_laplacian().unwrap();
        assert_eq!(sym, sym.transpose());
        let d = s.d_hat();
        let half = DMatrix::from_fn(s.dim(), s.dim(), |r, c| {
            if r == c {
                s.ndeg()[r / d].sqrt()
            } else {
                0.0
            }
        });
        let inv_half = half.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
        let via = &half * s.laplacian_dense().unwrap() * &inv_half;
        assert!((via - &sym).abs().max() < 1e-8 * sym.abs().max());
    }

    #[test]
    fn sphere_sheaf_structure() {
        let c = sample_sphere(200, 1).unwrap();
        let s = build_sheaf(&c, &SheafParams::default()).unwrap();
        assert_eq!(s.d_hat(), 2);
        assert!((s.epsilon() - default_epsilon(200, 2)).abs() < 1e-15);
        let r = s.structure_report();
        assert!(r.basis_orthonormality < 1e-10);
        assert!(r.transport_orthogonality < 1e-10);
        assert_eq!(r.transport_symmetry, 0.0);
        assert_eq!(r.s_block_symmetry, 0.0);
        assert!(r.min_ndeg > 0.0);
    }

    #[test]
    fn dense_cap_enforced() {
        let n = DENSE_CAP + 1;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let g = WeightGraph::from_edges(n, &edges).unwrap();
        let s = OrthogonalSheaf::trivial_bundle(g, 1.0).unwrap();
        assert!(matches!(s.laplacian_dense(), Err(Error::DimensionOverflow { .. })));
        // sparse products still work
        let y = s.apply_laplacian(&DMatrix::from_element(n, 1, 1.0)).unwrap();
        assert!(y.abs().max() < 1e-12);
    }

    #[test]
    fn zero_degree_rejected() {
        let g = WeightGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(OrthogonalSheaf::trivial_bundle(g, 1.0), Err(Error::ZeroDegree(2))));
    }
}
