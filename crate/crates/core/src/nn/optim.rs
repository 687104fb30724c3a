use serde::{Deserialize, Serialize};

use super::params::{Gradient, ParamVector};
use crate::error::{Error, Result};

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::arg("weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// Velocity state, owned by whoever runs the optimisation loop. Starts empty
/// and is sized on the first step.
#[derive(Debug, Clone, Default)]
pub struct MomentumBuffer {
    velocity: Option<Vec<f64>>,
}

impl MomentumBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> Option<&[f64]> {
        self.velocity.as_deref()
    }
}

/// One step of heavy-ball SGD with L2 weight decay:
/// `v = m*v + g + wd*p`, `p = p - lr*v`.
pub fn sgd_step(
    params: &mut ParamVector,
    grad: &Gradient,
    opt: &Sgd,
    buf: &mut MomentumBuffer,
) -> Result<()> {
    if grad.len() != params.len() {
        return Err(Error::dim(format!(
            "gradient of length {} for {} parameters",
            grad.len(),
            params.len()
        )));
    }
    let v = buf.velocity.get_or_insert_with(|| vec![0.0; params.len()]);
    if v.len() != params.len() {
        return Err(Error::dim("momentum buffer belongs to a different model"));
    }
    for ((p, &g), vi) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(v.iter_mut())
    {
        *vi = opt.momentum * *vi + g + opt.weight_decay * *p;
        *p -= opt.lr * *vi;
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters after SGD step".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = ParamVector::new(vec![1.0, -2.0]);
        let g = Gradient::new(vec![0.5, 0.5]);
        let opt = Sgd {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_step(&mut p, &g, &opt, &mut MomentumBuffer::new()).unwrap();
        assert_eq!(p.as_slice(), &[0.95, -2.05]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = ParamVector::new(vec![0.0]);
        let g = Gradient::new(vec![1.0]);
        let opt = Sgd {
            lr: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
        };
        let mut buf = MomentumBuffer::new();
        sgd_step(&mut p, &g, &opt, &mut buf).unwrap();
        sgd_step(&mut p, &g, &opt, &mut buf).unwrap();
        // v1 = 1, v2 = 1.5
        assert_eq!(p.as_slice(), &[-2.5]);
        assert_eq!(buf.velocity().unwrap(), &[1.5]);
    }

    #[test]
    fn weight_decay_pulls_towards_zero() {
        let mut p = ParamVector::new(vec![2.0]);
        let opt = Sgd {
            lr: 0.5,
            momentum: 0.0,
            weight_decay: 0.1,
        };
        sgd_step(
            &mut p,
            &Gradient::zeros(1),
            &opt,
            &mut MomentumBuffer::new(),
        )
        .unwrap();
        assert!((p.as_slice()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        let mut p = ParamVector::zeros(2);
        let opt = Sgd {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        };
        let err = sgd_step(
            &mut p,
            &Gradient::zeros(3),
            &opt,
            &mut MomentumBuffer::new(),
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
