//! Truncated Gaussian kernel graph over a point cloud.

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Symmetric sparse weight matrix in CSR layout with sorted column indices and
/// an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl WeightGraph {
    /// Builds the graph from an undirected edge list. Each pair may appear
    /// once in either orientation; self loops and non-positive weights are
    /// rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has weight {w}")));
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in adj.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument(format!("duplicate edge at node {i}")));
            }
            for (j, w) in row {
                cols.push(j);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            weights,
        })
    }

    pub fn node_count(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored directed entries (twice the number of edges).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nnz() / 2
    }

    pub(crate) fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub(crate) fn col(&self, k: usize) -> usize {
        self.cols[k]
    }

    pub(crate) fn weight_at(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// `(j, w_ij)` for every neighbour `j` of `i`, ascending in `j`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(i).map(move |k| (self.cols[k], self.weights[k]))
    }

    pub fn degree_count(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Storage position of entry `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|off| r.start + off)
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.weights[k])
    }

    /// Undirected edges `(i, j, w)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.node_count();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, w) in self.neighbors(i) {
                m[(i, j)] = w;
            }
        }
        m
    }
}

/// `exp(-d / sqrt(eps))` for `0 < d <= sqrt(eps)`, zero otherwise, where `d`
/// is the squared distance.
pub fn kernel_value(squared_distance: f64, epsilon: f64) -> f64 {
    let scale = epsilon.sqrt();
    if squared_distance > 0.0 && squared_distance <= scale {
        (-squared_distance / scale).exp()
    } else {
        0.0
    }
}

/// Kernel weights for every pair of points. Fails with
/// [`Error::IsolatedNode`] when some point has no neighbour in the support.
pub fn kernel_weights(cloud: &PointCloud, epsilon: f64) -> Result<WeightGraph> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = cloud.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = kernel_value(cloud.squared_distance(i, j), epsilon);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    let graph = WeightGraph::from_edges(n, &edges)?;
    if let Some(i) = (0..n).find(|&i| graph.degree_count(i) == 0) {
        return Err(Error::IsolatedNode(i));
    }
    Ok(graph)
}

/// Kernel scale `n^(-2 / (d + 4))`.
pub fn default_epsilon(n: usize, d_hat: usize) -> f64 {
    (n as f64).powf(-2.0 / (d_hat as f64 + 4.0))
}
