use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Default distance between any two class means, in units of σ.
pub const DEFAULT_SEPARATION: f64 = 6.0;

/// Isotropic unit-variance Gaussian blobs, one per class, with class `k`
/// centred at `separation / sqrt(2) * e_k` so that every pair of means is
/// `separation` apart. Examples are interleaved by class and shaped
/// `[1, 1, dim]`.
pub fn gen_synthetic(
    num_classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::arg("synthetic data needs at least two classes"));
    }
    if dim < num_classes {
        return Err(Error::arg(format!(
            "dimension {dim} is too small for {num_classes} orthogonal class means"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::arg("separation must be finite and non-negative"));
    }
    let offset = separation / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(num_classes * n_per_class);
    let mut labels = Vec::with_capacity(num_classes * n_per_class);
    for _ in 0..n_per_class {
        for k in 0..num_classes {
            let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            x[k] += offset;
            inputs.push(Tensor::new(vec![1, 1, dim], x)?);
            labels.push(k);
        }
    }
    Dataset::new("synthetic", inputs, labels, num_classes)
}
