//! Tangent-space estimation by weighted local PCA.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::weights::{kernel_weights, WeightGraph};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Per-node orthonormal tangent bases `O_i` (each `p x d_hat`).
#[derive(Debug, Clone)]
pub struct LocalBases {
    pub bases: Vec<DMatrix<f64>>,
    pub d_hat: usize,
    /// Dimension each node would pick on its own before the vote.
    pub local_dims: Vec<usize>,
}

struct NodeSvd {
    /// Left singular vectors sorted by decreasing singular value.
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    neighbors: usize,
}

/// Estimates tangent bases from the neighbourhoods of the `epsilon_pca`
/// kernel graph. The intrinsic dimension is the majority vote of the per-node
/// explained-variance dimension at threshold `gamma`, ties going to the
/// smaller dimension.
pub fn local_pca(cloud: &PointCloud, epsilon_pca: f64, gamma: f64) -> Result<LocalBases> {
    let graph = kernel_weights(cloud, epsilon_pca)?;
    local_pca_on_graph(cloud, &graph, gamma)
}

pub(crate) fn local_pca_on_graph(
    cloud: &PointCloud,
    graph: &WeightGraph,
    gamma: f64,
) -> Result<LocalBases> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let n = cloud.len();
    let svds = (0..n)
        .into_par_iter()
        .map(|i| node_svd(cloud, graph, i))
        .collect::<Result<Vec<_>>>()?;

    let local_dims: Vec<usize> = svds.iter().map(|s| explained_dimension(&s.sigma, gamma)).collect();
    let d_hat = majority_vote(&local_dims);

    let bases = svds
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.neighbors < d_hat || s.u.ncols() < d_hat {
                return Err(Error::InsufficientNeighbors {
                    node: i,
                    found: s.neighbors,
                    required: d_hat,
                });
            }
            Ok(s.u.columns(0, d_hat).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LocalBases {
        bases,
        d_hat,
        local_dims,
    })
}

fn node_svd(cloud: &PointCloud, graph: &WeightGraph, i: usize) -> Result<NodeSvd> {
    let p = cloud.ambient_dim();
    let k = graph.degree_count(i);
    if k == 0 {
        return Err(Error::InsufficientNeighbors {
            node: i,
            found: 0,
            required: 1,
        });
    }
    let pts = cloud.points();
    let mut b = DMatrix::zeros(p, k);
    for (col, (j, w)) in graph.neighbors(i).enumerate() {
        let s = w.sqrt();
        for r in 0..p {
            b[(r, col)] = s * (pts[(j, r)] - pts[(i, r)]);
        }
    }
    let svd = b.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::ConvergenceFailure(format!("local PCA SVD at node {i}")))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&c| svd.singular_values[c]).collect();
    if sigma.first().is_none_or(|&s| s < 1e-14) {
        return Err(Error::DegenerateSpectrum(i));
    }
    let u = DMatrix::from_fn(p, order.len(), |r, c| u[(r, order[c])]);
    Ok(NodeSvd {
        u,
        sigma,
        neighbors: k,
    })
}

/// Smallest `k` whose leading squared singular values carry a `gamma`
/// fraction of the total.
pub fn explained_dimension(sigma_desc: &[f64], gamma: f64) -> usize {
    let total: f64 = sigma_desc.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (k, s) in sigma_desc.iter().enumerate() {
        acc += s * s;
        if acc >= gamma * total {
            return k + 1;
        }
    }
    sigma_desc.len()
}

fn majority_vote(dims: &[usize]) -> usize {
    let max = dims.iter().copied().max().unwrap_or(1);
    let mut counts = vec![0usize; max + 1];
    for &d in dims {
        counts[d] += 1;
    }
    // first maximum wins, i.e. the smaller dimension on ties
    let mut best = 1;
    for d in 1..=max {
        if counts[d] > counts[best] {
            best = d;
        }
    }
    best
}
