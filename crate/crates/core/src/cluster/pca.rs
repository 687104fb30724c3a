use serde::{Deserialize, Serialize};

use super::check_points;
use crate::error::{Error, Result};

const TOL: f64 = 1e-12;
const MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Projected coordinates, one row per point.
    pub coords: Vec<Vec<f64>>,
    /// Variance captured by each component, descending.
    pub variances: Vec<f64>,
}

/// Leading eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(a: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = a.len();
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_034).fract())
        .collect();
    normalize(&mut v);
    let mut eig = 0.0;
    for _ in 0..MAX_ITER {
        let mut w: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum())
            .collect();
        eig = w.iter().zip(&v).map(|(x, y)| x * y).sum();
        if normalize(&mut w) == 0.0 {
            return (0.0, v);
        }
        let delta = w
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        v = w;
        if delta < TOL {
            break;
        }
    }
    (eig.max(0.0), v)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Projects centred points onto their top `k` principal directions using
/// power iteration with deflation on the `n x n` Gram matrix. Component
/// signs are fixed so the largest-magnitude coordinate is positive.
pub fn pca_project(points: &[Vec<f64>], k: usize) -> Result<Pca> {
    let d = check_points(points, 2)?;
    let n = points.len();
    if k == 0 || k > n.min(d) {
        return Err(Error::arg(format!(
            "cannot take {k} components of {n} points in {d} dimensions"
        )));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n as f64;
        }
    }
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let g: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            gram[i][j] = g;
            gram[j][i] = g;
        }
    }

    let mut coords = vec![vec![0.0; k]; n];
    let mut variances = Vec::with_capacity(k);
    for c in 0..k {
        let (eig, mut v) = power_iteration(&gram);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let s = eig.sqrt();
        for i in 0..n {
            coords[i][c] = v[i] * s;
        }
        variances.push(eig / (n - 1) as f64);
        for i in 0..n {
            for j in 0..n {
                gram[i][j] -= eig * v[i] * v[j];
            }
        }
    }
    Ok(Pca { coords, variances })
}
