use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basic::check_updates;
use crate::cluster::{hdbscan, HdbscanParams};
use crate::error::{Error, Result};
use crate::nn::{forward, NetworkSpec, ParamVector, Tensor};

/// The fixed input fed through every submitted update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeKind {
    #[default]
    AllOnes,
    /// Uniform entries in [0, 1).
    Random { seed: u64 },
}

impl ProbeKind {
    pub fn build(&self, spec: &NetworkSpec) -> Result<Tensor> {
        let shape = spec.input_shape().to_vec();
        match *self {
            ProbeKind::AllOnes => Tensor::filled(shape, 1.0),
            ProbeKind::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| rng.random::<f64>()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XmamOptions {
    pub hdbscan: HdbscanParams,
    pub probe: ProbeKind,
    /// Sum the preserved updates instead of averaging them.
    pub sum_preserved: bool,
    /// Probe `global + update` rather than the bare update.
    pub probe_full_model: bool,
}

impl Default for XmamOptions {
    fn default() -> Self {
        Self {
            hdbscan: HdbscanParams::default(),
            probe: ProbeKind::AllOnes,
            sum_preserved: false,
            probe_full_model: false,
        }
    }
}

/// Softmax output of the network when `update` is loaded as its parameters
/// and `probe` is the input.
pub fn xmam_examine(update: &ParamVector, spec: &NetworkSpec, probe: &Tensor) -> Result<Vec<f64>> {
    forward(update, spec, probe)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub slous: Vec<Vec<f64>>,
    pub labels: Vec<Option<usize>>,
    /// Indices of the kept updates, ascending.
    pub preserved: Vec<usize>,
    /// Clustering found no cluster and every update was kept.
    pub all_noise: bool,
}

/// Computes every SLOU and keeps the largest density cluster.
pub fn xmam_screen(
    updates: &[ParamVector],
    spec: &NetworkSpec,
    probe: &Tensor,
    opts: &XmamOptions,
    global: Option<&ParamVector>,
) -> Result<Screening> {
    check_updates(updates)?;
    if updates.len() < 2 {
        return Err(Error::arg("XMAM needs at least two updates"));
    }
    let slous = updates
        .par_iter()
        .map(|u| match (opts.probe_full_model, global) {
            (false, _) => xmam_examine(u, spec, probe),
            (true, Some(g)) => xmam_examine(&g.add(u)?, spec, probe),
            (true, None) => Err(Error::arg("probing full models needs the global model")),
        })
        .collect::<Result<Vec<_>>>()?;
    let clusters = hdbscan(&slous, &opts.hdbscan)?;
    let (preserved, all_noise) = match clusters.major() {
        Some(major) => (major.to_vec(), false),
        None => ((0..updates.len()).collect(), true),
    };
    Ok(Screening {
        slous,
        labels: clusters.labels,
        preserved,
        all_noise,
    })
}

/// Mean (or sum) of the updates kept by [`xmam_screen`].
pub fn xmam_combine(
    updates: &[ParamVector],
    preserved: &[usize],
    opts: &XmamOptions,
) -> Result<ParamVector> {
    let kept: Vec<ParamVector> = preserved.iter().map(|&i| updates[i].clone()).collect();
    let mean = super::fedavg(&kept, None)?;
    Ok(if opts.sum_preserved {
        mean.scaled(kept.len() as f64)
    } else {
        mean
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct XmamOutput {
    pub update: ParamVector,
    pub screening: Screening,
}

pub fn xmam_aggregate(
    updates: &[ParamVector],
    spec: &NetworkSpec,
    probe: &Tensor,
    opts: &XmamOptions,
    global: Option<&ParamVector>,
) -> Result<XmamOutput> {
    let screening = xmam_screen(updates, spec, probe, opts, global)?;
    Ok(XmamOutput {
        update: xmam_combine(updates, &screening.preserved, opts)?,
        screening,
    })
}
