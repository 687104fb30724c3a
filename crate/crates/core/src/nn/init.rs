use rand::Rng;

use super::params::ParamVector;
use super::spec::{Layer, NetworkSpec};

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every weight and bias.
pub fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> ParamVector {
    let mut out = Vec::with_capacity(spec.param_count());
    for p in spec.plan() {
        let fan_in = match p.layer {
            Layer::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
            Layer::FullyConnected { in_dim, .. } => in_dim,
            _ => continue,
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        out.extend((0..p.param_len()).map(|_| rng.random_range(-bound..=bound)));
    }
    ParamVector::new(out)
}
