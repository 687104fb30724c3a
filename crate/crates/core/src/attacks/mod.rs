//! Malicious update construction: poisoned local training, norm hiding,
//! stealthy objectives, model replacement and adaptive collusion.

mod craft;
mod local;

use serde::{Deserialize, Serialize};

pub use craft::{
    adaptive_craft, binary_search_lambda, model_replacement_scale, pgd_project, sign, LambdaSearch,
    DEFAULT_LAMBDA_FLOOR,
};
pub use local::{smp_train, train_local, LocalTraining, TrainHyper};

use crate::aggregation::{fedavg, krum, xmam_screen, XmamOptions};
use crate::data::{ClientShard, Selector, TriggerSpec};
use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, ParamVector, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    /// Corner-block trigger backdoor.
    #[default]
    Trigger,
    /// Relabeled rare subpopulation.
    Subpopulation,
    /// Colluding clients craft updates to be picked by Krum.
    KrumAdaptive,
    /// Colluding clients craft updates to land in XMAM's major cluster.
    XmamAdaptive,
}

impl AttackKind {
    pub fn is_backdoor(self) -> bool {
        matches!(self, AttackKind::Trigger | AttackKind::Subpopulation)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, AttackKind::KrumAdaptive | AttackKind::XmamAdaptive)
    }
}

/// How a backdoor client hides its update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HidingMode {
    #[default]
    Blackbox,
    Pgd,
    Smp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubpopulationSpec {
    pub selector: Selector,
    pub target_label: usize,
}

impl Default for SubpopulationSpec {
    fn default() -> Self {
        Self {
            selector: Selector::Tail {
                class: 1,
                fraction: 0.1,
                shift: 0.3,
                seed: 0,
            },
            target_label: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub mode: HidingMode,
    /// Norm bound for the PGD mode.
    pub epsilon: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Multiplies the final malicious update (model replacement).
    pub replace_scale: Option<f64>,
    /// Share of each malicious client's data that is poisoned.
    pub poison_fraction: f64,
    pub trigger: TriggerSpec,
    pub subpopulation: SubpopulationSpec,
    pub lambda_init: f64,
    pub lambda_floor: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Trigger,
            mode: HidingMode::Blackbox,
            epsilon: 5e-2,
            rho1: 10.0,
            rho2: 1e-4,
            replace_scale: None,
            poison_fraction: 0.3,
            trigger: TriggerSpec::default(),
            subpopulation: SubpopulationSpec::default(),
            lambda_init: 1.0,
            lambda_floor: DEFAULT_LAMBDA_FLOOR,
        }
    }
}

impl AttackConfig {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == HidingMode::Pgd && !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.mode == HidingMode::Smp && !(self.rho1 >= 0.0 && self.rho2 >= 0.0) {
            return Err(Error::Config("rho1 and rho2 must be non-negative".into()));
        }
        if let Some(s) = self.replace_scale {
            if !(s.is_finite() && s >= 1.0) {
                return Err(Error::Config(format!(
                    "replace_scale must be at least 1, got {s}"
                )));
            }
        }
        if !(self.poison_fraction > 0.0 && self.poison_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "poison_fraction must lie in (0, 1], got {}",
                self.poison_fraction
            )));
        }
        if !(self.lambda_init > 0.0 && self.lambda_floor > 0.0) {
            return Err(Error::Config(
                "lambda_init and lambda_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Update of a backdoor client under the configured hiding mode.
pub fn malicious_update(
    global: &ParamVector,
    spec: &NetworkSpec,
    shard: &ClientShard,
    cfg: &AttackConfig,
    hyper: &TrainHyper,
) -> Result<LocalTraining> {
    let mut out = match cfg.mode {
        HidingMode::Blackbox => train_local(global, spec, shard, hyper)?,
        HidingMode::Pgd => {
            let mut t = train_local(global, spec, shard, hyper)?;
            t.update = pgd_project(&t.update, cfg.epsilon)?;
            t
        }
        HidingMode::Smp => smp_train(global, spec, shard, cfg.rho1, cfg.rho2, hyper)?,
    };
    if let Some(factor) = cfg.replace_scale {
        out.update = model_replacement_scale(&out.update, factor);
    }
    Ok(out)
}

/// Result of one round of adaptive collusion.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    /// Submitted by every malicious client.
    pub crafted: ParamVector,
    pub search: LambdaSearch,
}

/// What the colluders test their crafted updates against.
pub enum AdaptiveTarget<'a> {
    /// Accepted when Krum picks a malicious update.
    Krum { f: usize },
    /// Accepted when every malicious update is in the major cluster.
    Xmam {
        spec: &'a NetworkSpec,
        probe: &'a Tensor,
        opts: &'a XmamOptions,
        global: &'a ParamVector,
    },
}

/// Estimates the benign direction as the mean of all `honest` updates and
/// searches for the largest accepted deviation along `-sign`.
pub fn adaptive_attack(
    honest: &[ParamVector],
    malicious: &[usize],
    target: &AdaptiveTarget<'_>,
    lambda_init: f64,
    lambda_floor: f64,
) -> Result<AdaptiveOutcome> {
    if malicious.is_empty() {
        return Err(Error::arg("adaptive attack without malicious clients"));
    }
    if let Some(&i) = malicious.iter().find(|&&i| i >= honest.len()) {
        return Err(Error::arg(format!("malicious index {i} out of range")));
    }
    let u_g = fedavg(honest, None)?;
    let with_crafted = |lambda: f64| -> Result<Vec<ParamVector>> {
        let crafted = adaptive_craft(&u_g, lambda)?;
        let mut all = honest.to_vec();
        for &i in malicious {
            all[i] = crafted.clone();
        }
        Ok(all)
    };
    let search = binary_search_lambda(
        |lambda| {
            let updates = with_crafted(lambda)?;
            match target {
                AdaptiveTarget::Krum { f } => Ok(malicious.contains(&krum(&updates, *f)?.selected)),
                AdaptiveTarget::Xmam {
                    spec,
                    probe,
                    opts,
                    global,
                } => {
                    let s = xmam_screen(&updates, spec, probe, opts, Some(global))?;
                    Ok(malicious.iter().all(|i| s.preserved.contains(i)))
                }
            }
        },
        lambda_init,
        lambda_floor,
    )?;
    Ok(AdaptiveOutcome {
        crafted: adaptive_craft(&u_g, search.lambda)?,
        search,
    })
}
