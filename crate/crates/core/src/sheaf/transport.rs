//! Orthogonal transport maps between neighbouring tangent bases.

use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;

use super::weights::WeightGraph;
use crate::error::{Error, Result};

/// One `d x d` map `O_ij` per stored graph entry, aligned with the CSR
/// layout of the [`WeightGraph`] it was built for. `O_ji` is stored as the
/// exact transpose of `O_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transports {
    d: usize,
    // column-major d x d blocks, one per CSR entry
    data: Vec<f64>,
}

impl Transports {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.d * self.d)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Transport stored at CSR position `k`.
    pub fn at(&self, k: usize) -> DMatrixView<'_, f64> {
        let dd = self.d * self.d;
        DMatrixView::from_slice(&self.data[k * dd..(k + 1) * dd], self.d, self.d)
    }

    /// All maps equal to the identity: the trivial bundle.
    pub fn identity(graph: &WeightGraph, d: usize) -> Self {
        let eye = DMatrix::<f64>::identity(d, d);
        let mut data = Vec::with_capacity(graph.nnz() * d * d);
        for _ in 0..graph.nnz() {
            data.extend_from_slice(eye.as_slice());
        }
        Self { d, data }
    }

    /// Assembles from one map per undirected edge `(i, j)`, `i < j`, given
    /// in the order of [`WeightGraph::edges`].
    pub fn from_upper(graph: &WeightGraph, d: usize, upper: &[DMatrix<f64>]) -> Result<Self> {
        if upper.len() != graph.edge_count() {
            return Err(Error::mismatch("transport count", graph.edge_count(), upper.len()));
        }
        let dd = d * d;
        let mut data = vec![0.0; graph.nnz() * dd];
        for ((i, j, _), o) in graph.edges().zip(upper) {
            if o.shape() != (d, d) {
                return Err(Error::mismatch("transport block size", d, o.nrows()));
            }
            let kij = graph.position(i, j).expect("edge present");
            let kji = graph.position(j, i).expect("graph is symmetric");
            data[kij * dd..(kij + 1) * dd].copy_from_slice(o.as_slice());
            data[kji * dd..(kji + 1) * dd].copy_from_slice(o.transpose().as_slice());
        }
        Ok(Self { d, data })
    }

    /// Maps for the undirected edges in [`WeightGraph::edges`] order.
    pub fn upper<'a>(&'a self, graph: &'a WeightGraph) -> impl Iterator<Item = DMatrixView<'a, f64>> + 'a {
        graph
            .edges()
            .map(move |(i, j, _)| self.at(graph.position(i, j).expect("edge present")))
    }
}

/// Nearest orthogonal matrix to `m` in Frobenius norm (`U V^T` from the SVD),
/// together with the smallest singular value of `m`.
pub fn nearest_orthogonal(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let svd = m.clone().svd(true, true);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => Ok((u * v_t, sigma_min)),
        _ => Err(Error::ConvergenceFailure("transport SVD did not converge".into())),
    }
}

/// `O_ij = M V^T` where `O_i^T O_j = M Sigma V^T`, for every edge of `graph`.
pub fn transport_operators(graph: &WeightGraph, bases: &[DMatrix<f64>]) -> Result<Transports> {
    let n = graph.node_count();
    if bases.len() != n {
        return Err(Error::mismatch("tangent basis count", n, bases.len()));
    }
    let d = bases.first().map_or(0, |b| b.ncols());
    let edges: Vec<(usize, usize)> = graph.edges().map(|(i, j, _)| (i, j)).collect();
    let upper = edges
        .par_iter()
        .map(|&(i, j)| {
            let overlap = bases[i].transpose() * &bases[j];
            let (o, sigma_min) = nearest_orthogonal(&overlap)?;
            if sigma_min < 1e-12 {
                return Err(Error::RankDeficientAlignment { i, j, sigma_min });
            }
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;
    Transports::from_upper(graph, d, &upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> WeightGraph {
        WeightGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn rot(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn equal_bases_give_identity() {
        let g = two_node_graph();
        let o = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let t = transport_operators(&g, &[o.clone(), o]).unwrap();
        assert!((t.at(0) - DMatrix::identity(2, 2)).abs().max() < 1e-14);
    }

    #[test]
    fn planar_rotation_recovered() {
        // O_i = [e1 e2], O_j = rotation by 30 degrees inside the same plane
        let g = two_node_graph();
        let oi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let r = rot(std::f64::consts::PI / 6.0);
        let mut oj = DMatrix::zeros(3, 2);
        oj.view_mut((0, 0), (2, 2)).copy_from(&r);
        let t = transport_operators(&g, &[oi, oj]).unwrap();
        let kij = g.position(0, 1).unwrap();
        let kji = g.position(1, 0).unwrap();
        assert!((t.at(kij) - &r).abs().max() < 1e-10);
        assert_eq!(t.at(kji).into_owned(), t.at(kij).transpose());
    }

    #[test]
    fn orthogonal_planes_are_rank_deficient() {
        let g = two_node_graph();
        let oi = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let oj = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            transport_operators(&g, &[oi, oj]),
            Err(Error::RankDeficientAlignment { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn nearest_orthogonal_of_scaled_rotation() {
        let m = rot(0.3) * 2.5;
        let (o, smin) = nearest_orthogonal(&m).unwrap();
        assert!((o - rot(0.3)).abs().max() < 1e-12);
        assert!((smin - 2.5).abs() < 1e-12);
    }
}
