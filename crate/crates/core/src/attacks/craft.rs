use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Rescales `update` to L2 norm `epsilon`. A zero update is returned as is.
pub fn pgd_project(update: &ParamVector, epsilon: f64) -> Result<ParamVector> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::arg(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let norm = update.norm();
    if norm == 0.0 {
        return Ok(update.clone());
    }
    Ok(update.scaled(epsilon / norm))
}

/// Boosts an update so that it survives averaging.
pub fn model_replacement_scale(update: &ParamVector, factor: f64) -> ParamVector {
    update.scaled(factor)
}

/// Elementwise sign with `sign(0) = 0`.
pub fn sign(u: &ParamVector) -> ParamVector {
    ParamVector::new(
        u.as_slice()
            .iter()
            .map(|&x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// `u_g - lambda * sign(u_g)`: the vector every colluding client submits.
pub fn adaptive_craft(global_update_est: &ParamVector, lambda: f64) -> Result<ParamVector> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::arg(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    global_update_est.axpy(-lambda, &sign(global_update_est))
}

pub const DEFAULT_LAMBDA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSearch {
    pub lambda: f64,
    /// Whether the last probed lambda was accepted.
    pub accepted: bool,
    /// Number of oracle calls.
    pub iterations: usize,
}

/// Probes `init, init/2, init/4, ...` until `accepted(lambda)` holds or the
/// probed value is at or below `floor`.
pub fn binary_search_lambda<F>(mut accepted: F, init: f64, floor: f64) -> Result<LambdaSearch>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(init.is_finite() && init > 0.0 && floor > 0.0) {
        return Err(Error::arg("lambda search needs positive init and floor"));
    }
    let mut lambda = init;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if accepted(lambda)? {
            return Ok(LambdaSearch {
                lambda,
                accepted: true,
                iterations,
            });
        }
        if lambda <= floor {
            return Ok(LambdaSearch {
                lambda,
                accepted: false,
                iterations,
            });
        }
        lambda /= 2.0;
    }
}
