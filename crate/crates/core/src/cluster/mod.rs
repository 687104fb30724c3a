//! Density clustering and principal-component projection.

mod hdbscan;
mod pca;

pub use hdbscan::{
    hdbscan, minimum_spanning_tree, mutual_reachability, ClusterResult, HdbscanParams, MstEdge,
};
pub use pca::{pca_project, Pca};

use crate::error::{Error, Result};

pub(crate) fn check_points(points: &[Vec<f64>], min: usize) -> Result<usize> {
    if points.len() < min {
        return Err(Error::arg(format!(
            "need at least {min} points, got {}",
            points.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::dim("points have differing dimensions"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("input points".into()));
    }
    Ok(d)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
