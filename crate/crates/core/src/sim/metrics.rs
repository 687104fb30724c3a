use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{predict, NetworkSpec, ParamVector};

fn predictions(model: &ParamVector, spec: &NetworkSpec, data: &Dataset) -> Result<Vec<usize>> {
    data.inputs()
        .par_iter()
        .map(|x| predict(model, spec, x))
        .collect()
}

/// Share of backdoor inputs classified as the attacker's target.
pub fn attack_success_rate(
    model: &ParamVector,
    spec: &NetworkSpec,
    backdoor_test: &Dataset,
    target_label: usize,
) -> Result<f64> {
    if backdoor_test.is_empty() {
        return Err(Error::arg("empty backdoor test set"));
    }
    let hits = predictions(model, spec, backdoor_test)?
        .into_iter()
        .filter(|&p| p == target_label)
        .count();
    Ok(hits as f64 / backdoor_test.len() as f64)
}

/// Share of test inputs that are misclassified.
pub fn testing_error_rate(model: &ParamVector, spec: &NetworkSpec, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    let wrong = predictions(model, spec, test)?
        .into_iter()
        .zip(test.labels())
        .filter(|(p, l)| p != *l)
        .count();
    Ok(wrong as f64 / test.len() as f64)
}
