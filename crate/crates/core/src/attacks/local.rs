use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, sgd_step, Gradient, MomentumBuffer, NetworkSpec, ParamVector, Sgd};

/// Local training settings for one client in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub sgd: Sgd,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the batch order.
    pub seed: u64,
}

impl TrainHyper {
    fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTraining {
    /// `w_after - w_global`.
    pub update: ParamVector,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn batch_loss(
    params: &ParamVector,
    spec: &NetworkSpec,
    data: &Dataset,
    idx: &[usize],
) -> Result<(f64, Gradient)> {
    let inputs: Vec<_> = idx.iter().map(|&i| &data.inputs()[i]).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
    loss_and_grad(params, spec, &inputs, &labels)
}

/// Minibatch SGD on the shard's training set (clean examples plus any
/// poisoned ones), starting from `global`.
pub fn train_local(
    global: &ParamVector,
    spec: &NetworkSpec,
    shard: &ClientShard,
    hyper: &TrainHyper,
) -> Result<LocalTraining> {
    if shard.is_empty() {
        return Err(Error::arg(format!(
            "client {} has no data",
            shard.client_id
        )));
    }
    hyper.validate()?;
    let data = shard.training_set()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = global.clone();
    let mut buf = MomentumBuffer::new();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let mut total = 0.0;
        let order = batches(data.len(), hyper.batch_size, &mut rng);
        for idx in &order {
            let (loss, grad) = batch_loss(&params, spec, &data, idx)?;
            sgd_step(&mut params, &grad, &hyper.sgd, &mut buf)?;
            total += loss;
        }
        epoch_losses.push(total / order.len() as f64);
    }
    Ok(LocalTraining {
        update: params.sub(global)?,
        epoch_losses,
    })
}

/// Stealthy training: minimises
/// `rho1 * L(poisoned) + L(clean) + rho2 * ||w - global||`.
/// Clean batches follow the same order as [`train_local`] on the clean part;
/// each is paired with a poisoned batch drawn from an independent stream.
pub fn smp_train(
    global: &ParamVector,
    spec: &NetworkSpec,
    shard: &ClientShard,
    rho1: f64,
    rho2: f64,
    hyper: &TrainHyper,
) -> Result<LocalTraining> {
    if shard.poisoned.is_empty() || shard.clean.is_empty() {
        return Err(Error::arg(
            "stealthy training needs clean and poisoned data",
        ));
    }
    if !(rho1 >= 0.0 && rho2 >= 0.0) {
        return Err(Error::arg("rho1 and rho2 must be non-negative"));
    }
    hyper.validate()?;
    let clean = &shard.clean;
    let poisoned = &shard.poisoned;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut poison_rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut poison_queue: Vec<usize> = Vec::new();
    let mut params = global.clone();
    let mut buf = MomentumBuffer::new();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let mut total = 0.0;
        let order = batches(clean.len(), hyper.batch_size, &mut rng);
        for idx in &order {
            let (mut loss, mut grad) = batch_loss(&params, spec, clean, idx)?;
            if rho1 > 0.0 {
                let want = hyper.batch_size.min(poisoned.len());
                while poison_queue.len() < want {
                    let mut more: Vec<usize> = (0..poisoned.len()).collect();
                    more.shuffle(&mut poison_rng);
                    poison_queue.extend(more);
                }
                let pidx: Vec<usize> = poison_queue.drain(..want).collect();
                let (pl, pg) = batch_loss(&params, spec, poisoned, &pidx)?;
                loss += rho1 * pl;
                for (g, p) in grad.as_mut_slice().iter_mut().zip(pg.as_slice()) {
                    *g += rho1 * p;
                }
            }
            if rho2 > 0.0 {
                let diff = params.sub(global)?;
                let norm = diff.norm();
                loss += rho2 * norm;
                if norm > 0.0 {
                    for (g, d) in grad.as_mut_slice().iter_mut().zip(diff.as_slice()) {
                        *g += rho2 * d / norm;
                    }
                }
            }
            sgd_step(&mut params, &grad, &hyper.sgd, &mut buf)?;
            total += loss;
        }
        epoch_losses.push(total / order.len() as f64);
    }
    Ok(LocalTraining {
        update: params.sub(global)?,
        epoch_losses,
    })
}
