//! Experiment description, loaded from TOML.
//!
//! Every key is optional; omitted keys take the defaults below. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregatorConfig;
use crate::attacks::{AttackConfig, AttackKind};
use crate::data::{gen_synthetic, load_idx, Dataset, DEFAULT_SEPARATION};
use crate::error::{Error, Result};
use crate::nn::{Layer, NetworkSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX files named as in the MNIST distribution, inside `dir`.
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    Synthetic {
        classes: usize,
        n_per_class: usize,
        test_per_class: usize,
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Mnist {
            dir: PathBuf::from("data/mnist"),
            train_limit: None,
            test_limit: None,
        }
    }
}

impl DatasetConfig {
    /// Loads `(train, test)`. Relative MNIST paths are resolved against
    /// `base`.
    pub fn load(&self, base: &Path) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetConfig::Mnist {
                dir,
                train_limit,
                test_limit,
            } => {
                let dir = if dir.is_absolute() {
                    dir.clone()
                } else {
                    base.join(dir)
                };
                let train = load_idx(
                    dir.join("train-images-idx3-ubyte"),
                    dir.join("train-labels-idx1-ubyte"),
                )?;
                let test = load_idx(
                    dir.join("t10k-images-idx3-ubyte"),
                    dir.join("t10k-labels-idx1-ubyte"),
                )?;
                let cut = |d: Dataset, limit: &Option<usize>| match limit {
                    Some(n) => d.split_at(*n).map(|(head, _)| head),
                    None => Ok(d),
                };
                Ok((cut(train, train_limit)?, cut(test, test_limit)?))
            }
            DatasetConfig::Synthetic {
                classes,
                n_per_class,
                test_per_class,
                dim,
                separation,
                seed,
            } => {
                let all = gen_synthetic(
                    *classes,
                    n_per_class + test_per_class,
                    *dim,
                    *separation,
                    *seed,
                )?;
                all.split_at(n_per_class * classes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    #[default]
    LenetLite,
    Mlp {
        hidden: usize,
    },
    Custom {
        layers: Vec<Layer>,
    },
}

impl ModelConfig {
    pub fn build(&self, input_shape: [usize; 3], num_classes: usize) -> Result<NetworkSpec> {
        match self {
            ModelConfig::LenetLite => NetworkSpec::lenet_lite(input_shape, num_classes),
            ModelConfig::Mlp { hidden } => NetworkSpec::mlp(input_shape, *hidden, num_classes),
            ModelConfig::Custom { layers } => {
                NetworkSpec::new("custom", input_shape, layers.clone(), num_classes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Total number of clients.
    pub num_clients: usize,
    /// Clients sampled each round.
    pub clients_per_round: usize,
    /// Share of malicious clients, overall and in every round.
    pub malicious_fraction: f64,
    pub global_iterations: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Local learning rate at round t is `lr * lr_decay^t`.
    pub lr: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dirichlet_alpha: f64,
    /// Write measured screening times into the metrics. When off the column
    /// holds zeros so reruns are byte-identical.
    pub timing_in_metrics: bool,
    /// Keep per-round SLOUs, cluster labels and PCA projections.
    pub record_diagnostics: bool,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub attack: AttackConfig,
    pub aggregator: AggregatorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            num_clients: 200,
            clients_per_round: 30,
            malicious_fraction: 0.2,
            global_iterations: 100,
            local_epochs: 1,
            batch_size: 32,
            lr: 0.001,
            lr_decay: 0.998,
            momentum: 0.9,
            weight_decay: 1e-4,
            dirichlet_alpha: 0.5,
            timing_in_metrics: true,
            record_diagnostics: true,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            attack: AttackConfig::default(),
            aggregator: AggregatorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Malicious clients among those sampled each round.
    pub fn malicious_per_round(&self) -> usize {
        if self.attack.kind == AttackKind::None {
            return 0;
        }
        (self.clients_per_round as f64 * self.malicious_fraction).round() as usize
    }

    /// Malicious clients in the whole population.
    pub fn malicious_total(&self) -> usize {
        if self.attack.kind == AttackKind::None {
            return 0;
        }
        (self.num_clients as f64 * self.malicious_fraction).round() as usize
    }

    pub fn lr_at(&self, round: usize) -> f64 {
        self.lr * self.lr_decay.powi(round as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(0.0..0.5).contains(&self.malicious_fraction) {
            return bad(format!(
                "malicious_fraction {} violates the threat model: malicious clients must be \
                 fewer than half of all clients (0 <= fraction < 0.5)",
                self.malicious_fraction
            ));
        }
        if self.num_clients == 0 || self.clients_per_round == 0 {
            return bad("num_clients and clients_per_round must be positive".into());
        }
        if self.clients_per_round > self.num_clients {
            return bad(format!(
                "clients_per_round {} exceeds num_clients {}",
                self.clients_per_round, self.num_clients
            ));
        }
        let (m_round, m_total) = (self.malicious_per_round(), self.malicious_total());
        if m_round > m_total || self.clients_per_round - m_round > self.num_clients - m_total {
            return bad(format!(
                "cannot sample {m_round} malicious and {} benign clients per round from \
                 {m_total} malicious and {} benign",
                self.clients_per_round - m_round,
                self.num_clients - m_total
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0 && self.lr_decay > 0.0) {
            return bad("lr and lr_decay must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative".into());
        }
        if !(self.dirichlet_alpha > 0.0) {
            return bad("dirichlet_alpha must be positive".into());
        }
        self.attack.validate()?;
        self.aggregator.validate()?;
        if self.attack.kind.is_adaptive() && m_round == 0 && self.malicious_fraction > 0.0 {
            return bad("adaptive attack configured but no malicious client is sampled".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.num_clients, 200);
        assert_eq!(cfg.clients_per_round, 30);
        assert_eq!(cfg.batch_size, 32);
    }

    #[test]
    fn threat_model_bound() {
        let err = ExperimentConfig::from_toml_str("malicious_fraction = 0.6").unwrap_err();
        assert!(err.to_string().contains("threat model"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("aggegator = 1").unwrap_err();
        assert!(err.to_string().contains("aggegator"));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
