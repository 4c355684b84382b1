//! Principal-component projection of the landmark tree for plotting.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

use super::tree::TreeGraph;

#[derive(Clone, Debug)]
pub struct TreeProjection {
    /// `K x dims` projected landmark coordinates.
    pub coords: DMatrix<f64>,
    pub edges: Vec<(usize, usize)>,
    /// All eigenvalues of the centered landmark scatter, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit principal directions in landmark space (`N_s x dims`); zero for
    /// padded components.
    pub directions: DMatrix<f64>,
    pub mean: nalgebra::DVector<f64>,
}

/// Project the landmarks (columns of `c`) onto their first `dims` principal
/// components via the `K x K` Gram matrix of the centered landmarks. Each
/// direction's largest-magnitude loading is made positive. Components past
/// the rank are zero.
pub fn project_tree_pca(c: &DMatrix<f64>, g: &TreeGraph, dims: usize) -> Result<TreeProjection> {
    let k = c.ncols();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 landmarks, got {k}")));
    }
    if g.n_vertices() != k {
        return Err(Error::dim(format!(
            "tree has {} vertices, C has {k} landmarks",
            g.n_vertices()
        )));
    }
    let mean = c.column_mean();
    let mut centered = c.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let gram = centered.tr_mul(&centered);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let top = eigenvalues[0];

    let ns = c.nrows();
    let mut coords = DMatrix::zeros(k, dims);
    let mut directions = DMatrix::zeros(ns, dims);
    for d in 0..dims.min(k) {
        let lam = eigenvalues[d];
        if lam <= 1e-12 * top.max(f64::MIN_POSITIVE) {
            continue;
        }
        let v = eig.eigenvectors.column(order[d]);
        let mut u = &centered * v / lam.sqrt();
        let pivot = u.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if pivot < 0.0 {
            u = -u;
        }
        coords.set_column(d, &centered.tr_mul(&u));
        directions.set_column(d, &u);
    }
    Ok(TreeProjection {
        coords,
        edges: g.edges().to_vec(),
        eigenvalues,
        directions,
        mean,
    })
}
