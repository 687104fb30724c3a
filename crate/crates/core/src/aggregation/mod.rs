//! Server-side aggregation rules.
//!
//! Every rule maps the round's updates to one global update `u`. The caller
//! applies it as `w <- w + eta_g * u`.

mod basic;
mod krum;
mod xmam;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use basic::{clip_norm, fedavg, ndc, rfa, rsa, RfaOutput, RfaParams};
pub use krum::{krum, multi_krum, squared_distances, KrumOutput, MultiKrumOutput};
pub use xmam::{
    xmam_aggregate, xmam_combine, xmam_examine, xmam_screen, ProbeKind, Screening, XmamOptions,
    XmamOutput,
};

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    Ndc,
    Rsa,
    Rfa,
    Krum,
    MultiKrum,
    Xmam,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 7] = [
        AggregatorKind::FedAvg,
        AggregatorKind::Ndc,
        AggregatorKind::Rsa,
        AggregatorKind::Rfa,
        AggregatorKind::Krum,
        AggregatorKind::MultiKrum,
        AggregatorKind::Xmam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::FedAvg => "fedavg",
            AggregatorKind::Ndc => "ndc",
            AggregatorKind::Rsa => "rsa",
            AggregatorKind::Rfa => "rfa",
            AggregatorKind::Krum => "krum",
            AggregatorKind::MultiKrum => "multi-krum",
            AggregatorKind::Xmam => "xmam",
        }
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown aggregator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// Global learning rate.
    pub eta_g: f64,
    pub ndc_delta: f64,
    /// RSA step at round t is `rsa_beta0 * rsa_decay^t`.
    pub rsa_beta0: f64,
    pub rsa_decay: f64,
    pub rfa: RfaParams,
    /// Byzantine count assumed by Krum and Multi-Krum. Defaults to the
    /// number of malicious clients sampled per round.
    pub krum_f: Option<usize>,
    pub xmam: XmamOptions,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            kind: AggregatorKind::Xmam,
            eta_g: 1.0,
            ndc_delta: 2.0,
            rsa_beta0: 5e-5,
            rsa_decay: 0.998,
            rfa: RfaParams::default(),
            krum_f: None,
            xmam: XmamOptions::default(),
        }
    }
}

impl AggregatorConfig {
    pub fn with_kind(kind: AggregatorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn rsa_beta(&self, round: usize) -> f64 {
        self.rsa_beta0 * self.rsa_decay.powi(round as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {v}")))
            }
        };
        if !(self.eta_g.is_finite() && self.eta_g >= 0.0) {
            return Err(Error::Config(format!(
                "eta_g must be non-negative, got {}",
                self.eta_g
            )));
        }
        positive(self.ndc_delta, "ndc_delta")?;
        positive(self.rsa_beta0, "rsa_beta0")?;
        positive(self.rsa_decay, "rsa_decay")?;
        positive(self.rfa.v, "rfa.v")?;
        positive(self.rfa.mu, "rfa.mu")?;
        if self.rfa.max_rounds == 0 {
            return Err(Error::Config("rfa.max_rounds must be at least 1".into()));
        }
        if self.xmam.hdbscan.min_cluster_size < 2 || self.xmam.hdbscan.min_samples < 1 {
            return Err(Error::Config(
                "xmam.hdbscan needs min_cluster_size >= 2 and min_samples >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Krum's `f` for `tau` updates when `malicious` are expected.
    pub fn krum_f_for(&self, tau: usize, malicious: usize) -> usize {
        self.krum_f.unwrap_or(malicious).min(tau.saturating_sub(3))
    }
}

/// What a rule saw and kept, beyond the update itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Krum scores of the full pool.
    pub scores: Option<Vec<f64>>,
    pub slous: Option<Vec<Vec<f64>>>,
    pub cluster_labels: Option<Vec<Option<usize>>>,
    pub all_noise: bool,
    pub rfa_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    /// Unscaled global update.
    pub global_update: ParamVector,
    /// Indices of updates that contributed, ascending.
    pub preserved: Vec<usize>,
    /// Wall time of the filtering phase. Zero for FedAvg.
    pub screening_seconds: f64,
    pub diagnostics: Diagnostics,
}

/// Round-specific inputs some rules need.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub round: usize,
    pub spec: &'a NetworkSpec,
    pub global: &'a ParamVector,
    /// Byzantine count passed to Krum and Multi-Krum.
    pub krum_f: usize,
}

pub fn aggregate(
    cfg: &AggregatorConfig,
    updates: &[ParamVector],
    ctx: &RoundContext<'_>,
) -> Result<AggregationResult> {
    basic::check_updates(updates)?;
    let all: Vec<usize> = (0..updates.len()).collect();
    let mut diagnostics = Diagnostics::default();
    let start = Instant::now();
    let (global_update, preserved, screening_seconds) = match cfg.kind {
        AggregatorKind::FedAvg => (fedavg(updates, None)?, all, 0.0),
        AggregatorKind::Ndc => {
            let clipped: Vec<ParamVector> = updates
                .iter()
                .map(|u| clip_norm(u, cfg.ndc_delta))
                .collect();
            let t = start.elapsed().as_secs_f64();
            (fedavg(&clipped, None)?, all, t)
        }
        AggregatorKind::Rsa => {
            let u = rsa(updates, cfg.rsa_beta(ctx.round))?;
            (u, all, start.elapsed().as_secs_f64())
        }
        AggregatorKind::Rfa => {
            let out = rfa(updates, None, &cfg.rfa)?;
            diagnostics.rfa_iterations = Some(out.iterations);
            (out.median, all, start.elapsed().as_secs_f64())
        }
        AggregatorKind::Krum => {
            let out = krum(updates, ctx.krum_f)?;
            let t = start.elapsed().as_secs_f64();
            let u = updates[out.selected].clone();
            let sel = vec![out.selected];
            diagnostics.scores = Some(out.scores);
            (u, sel, t)
        }
        AggregatorKind::MultiKrum => {
            let dist = squared_distances(updates);
            let mut sel = krum::multi_krum_selection(&dist, ctx.krum_f)?;
            let t = start.elapsed().as_secs_f64();
            diagnostics.scores = Some(krum::krum_from_distances(&dist, ctx.krum_f)?.scores);
            let chosen: Vec<ParamVector> = sel.iter().map(|&i| updates[i].clone()).collect();
            sel.sort_unstable();
            (fedavg(&chosen, None)?, sel, t)
        }
        AggregatorKind::Xmam => {
            let probe = cfg.xmam.probe.build(ctx.spec)?;
            let screening = xmam_screen(updates, ctx.spec, &probe, &cfg.xmam, Some(ctx.global))?;
            let t = start.elapsed().as_secs_f64();
            let u = xmam_combine(updates, &screening.preserved, &cfg.xmam)?;
            diagnostics.all_noise = screening.all_noise;
            diagnostics.slous = Some(screening.slous);
            diagnostics.cluster_labels = Some(screening.labels);
            (u, screening.preserved, t)
        }
    };
    if !global_update.is_finite() {
        return Err(Error::Numeric(format!("{} output", cfg.kind.name())));
    }
    Ok(AggregationResult {
        global_update,
        preserved,
        screening_seconds,
        diagnostics,
    })
}
