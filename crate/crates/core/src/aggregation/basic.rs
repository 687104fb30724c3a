use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;

pub(crate) fn check_updates(updates: &[ParamVector]) -> Result<usize> {
    let first = updates
        .first()
        .ok_or_else(|| Error::arg("no updates to aggregate"))?;
    for u in updates {
        first.check_len(u)?;
    }
    Ok(first.len())
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::dim(format!("{} weights for {n} updates", w.len())));
            }
            if w.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
                return Err(Error::arg("weights must be positive"));
            }
            Ok(w.to_vec())
        }
    }
}

fn weighted_mean(updates: &[ParamVector], w: &[f64]) -> ParamVector {
    let total: f64 = w.iter().sum();
    let mut out = vec![0.0; updates[0].len()];
    for (u, &p) in updates.iter().zip(w) {
        let c = p / total;
        for (o, x) in out.iter_mut().zip(u.as_slice()) {
            *o += c * x;
        }
    }
    ParamVector::new(out)
}

/// Weighted mean of the updates, uniform when `weights` is `None`.
pub fn fedavg(updates: &[ParamVector], weights: Option<&[f64]>) -> Result<ParamVector> {
    check_updates(updates)?;
    let w = check_weights(weights, updates.len())?;
    Ok(weighted_mean(updates, &w))
}

/// Scales `u` down to norm `delta` if it is longer.
pub fn clip_norm(u: &ParamVector, delta: f64) -> ParamVector {
    let factor = (u.norm() / delta).max(1.0);
    u.scaled(1.0 / factor)
}

/// Norm-difference clipping followed by the plain mean.
pub fn ndc(updates: &[ParamVector], delta: f64) -> Result<ParamVector> {
    check_updates(updates)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::arg(format!(
            "clipping threshold must be positive, got {delta}"
        )));
    }
    let clipped: Vec<ParamVector> = updates.iter().map(|u| clip_norm(u, delta)).collect();
    fedavg(&clipped, None)
}

/// `beta * sum_i sign(u_i)`, with `sign(0) = 0`.
pub fn rsa(updates: &[ParamVector], beta: f64) -> Result<ParamVector> {
    let d = check_updates(updates)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::arg(format!("RSA step must be positive, got {beta}")));
    }
    let mut out = vec![0.0; d];
    for u in updates {
        for (o, &x) in out.iter_mut().zip(u.as_slice()) {
            if x > 0.0 {
                *o += 1.0;
            } else if x < 0.0 {
                *o -= 1.0;
            }
        }
    }
    out.iter_mut().for_each(|o| *o *= beta);
    Ok(ParamVector::new(out))
}

/// Smoothed Weiszfeld settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfaParams {
    /// Smoothing floor on distances.
    pub v: f64,
    /// Stop once an iteration moves the estimate less than this.
    pub mu: f64,
    pub max_rounds: usize,
}

impl Default for RfaParams {
    fn default() -> Self {
        Self {
            v: 0.1,
            mu: 1e-5,
            max_rounds: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfaOutput {
    pub median: ParamVector,
    pub iterations: usize,
}

/// Approximate geometric median by smoothed Weiszfeld iterations started
/// from the weighted mean.
pub fn rfa(
    updates: &[ParamVector],
    weights: Option<&[f64]>,
    params: &RfaParams,
) -> Result<RfaOutput> {
    check_updates(updates)?;
    let p = check_weights(weights, updates.len())?;
    if !(params.v > 0.0 && params.mu > 0.0) || params.max_rounds == 0 {
        return Err(Error::arg("RFA needs v > 0, mu > 0 and at least one round"));
    }
    let mut z = weighted_mean(updates, &p);
    let mut iterations = 0;
    while iterations < params.max_rounds {
        let q: Vec<f64> = updates
            .iter()
            .zip(&p)
            .map(|(u, &pi)| pi / params.v.max(z.distance(u)))
            .collect();
        let next = weighted_mean(updates, &q);
        let moved = next.distance(&z);
        z = next;
        iterations += 1;
        if moved < params.mu {
            break;
        }
    }
    Ok(RfaOutput {
        median: z,
        iterations,
    })
}
