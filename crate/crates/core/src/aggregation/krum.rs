use rayon::prelude::*;

use super::basic::check_updates;
use crate::error::{Error, Result};
use crate::nn::ParamVector;

#[derive(Debug, Clone, PartialEq)]
pub struct KrumOutput {
    pub selected: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiKrumOutput {
    /// Indices in selection order.
    pub selected: Vec<usize>,
    pub mean: ParamVector,
}

fn check_f(tau: usize, f: usize) -> Result<()> {
    if tau < f + 3 {
        return Err(Error::arg(format!(
            "Krum needs at least f + 3 = {} updates, got {tau}",
            f + 3
        )));
    }
    Ok(())
}

/// Pairwise squared Euclidean distances.
pub fn squared_distances(updates: &[ParamVector]) -> Vec<Vec<f64>> {
    let n = updates.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| updates[i].squared_distance(&updates[j]))
                .collect()
        })
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            d[i][i + 1 + off] = v;
            d[i + 1 + off][i] = v;
        }
    }
    d
}

/// Score of each candidate in `pool`: the sum of squared distances to its
/// `k` nearest other candidates.
fn scores(dist: &[Vec<f64>], pool: &[usize], k: usize) -> Vec<f64> {
    pool.iter()
        .map(|&i| {
            let mut row: Vec<f64> = pool
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist[i][j])
                .collect();
            row.sort_by(f64::total_cmp);
            row[..k].iter().sum()
        })
        .collect()
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn krum_from_distances(dist: &[Vec<f64>], f: usize) -> Result<KrumOutput> {
    let n = dist.len();
    check_f(n, f)?;
    let pool: Vec<usize> = (0..n).collect();
    let scores = scores(dist, &pool, n - f - 2);
    Ok(KrumOutput {
        selected: argmin(&scores),
        scores,
    })
}

/// Picks the update whose `tau - f - 2` nearest neighbours are closest.
pub fn krum(updates: &[ParamVector], f: usize) -> Result<KrumOutput> {
    check_updates(updates)?;
    check_f(updates.len(), f)?;
    krum_from_distances(&squared_distances(updates), f)
}

pub(crate) fn multi_krum_selection(dist: &[Vec<f64>], f: usize) -> Result<Vec<usize>> {
    let n = dist.len();
    check_f(n, f)?;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut selected = Vec::with_capacity(n - f - 2);
    while selected.len() < n - f - 2 {
        let s = scores(dist, &pool, pool.len() - f - 2);
        let pick = pool.remove(argmin(&s));
        selected.push(pick);
    }
    Ok(selected)
}

/// Repeated Krum without replacement until `tau - f - 2` updates are chosen;
/// returns their mean.
pub fn multi_krum(updates: &[ParamVector], f: usize) -> Result<MultiKrumOutput> {
    check_updates(updates)?;
    let selected = multi_krum_selection(&squared_distances(updates), f)?;
    let chosen: Vec<ParamVector> = selected.iter().map(|&i| updates[i].clone()).collect();
    Ok(MultiKrumOutput {
        mean: super::fedavg(&chosen, None)?,
        selected,
    })
}
