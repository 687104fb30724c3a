use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{attack_success_rate, testing_error_rate};
use super::report::{LambdaRecord, RoundDiagnostics, RoundReport};
use super::sink::RoundSink;
use crate::aggregation::{aggregate, xmam_examine, AggregatorKind, RoundContext};
use crate::attacks::{
    adaptive_attack, malicious_update, train_local, AdaptiveTarget, AttackKind, TrainHyper,
};
use crate::cluster::pca_project;
use crate::config::ExperimentConfig;
use crate::data::{
    apply_trigger, dirichlet_partition, make_subpopulation_backdoor, trigger_test_set, ClientShard,
    Dataset,
};
use crate::error::{Error, Result};
use crate::nn::{init_params, NetworkSpec, ParamVector, Sgd};

const SALT_PARTITION: u64 = 1;
const SALT_MALICIOUS: u64 = 2;
const SALT_INIT: u64 = 3;
const SALT_SAMPLE: u64 = 4;
const SALT_CLIENT: u64 = 5;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent seed for one purpose, derived from the master seed.
fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// State of a running experiment.
pub struct Simulation {
    cfg: ExperimentConfig,
    spec: NetworkSpec,
    shards: Vec<ClientShard>,
    test: Dataset,
    backdoor_test: Option<Dataset>,
    target_label: usize,
    global: ParamVector,
    round: usize,
}

impl Simulation {
    /// Loads the configured dataset (relative paths against `base`).
    pub fn from_config(cfg: ExperimentConfig, base: &Path) -> Result<Self> {
        let (train, test) = cfg.dataset.load(base)?;
        Self::new(cfg, train, test)
    }

    pub fn new(cfg: ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self> {
        cfg.validate()?;
        let shape: [usize; 3] = match train.input_shape() {
            Some(&[c, h, w]) => [c, h, w],
            Some(s) => return Err(Error::dim(format!("training inputs of shape {s:?}"))),
            None => return Err(Error::arg("empty training set")),
        };
        let num_classes = train.num_classes().max(test.num_classes());
        let spec = cfg.model.build(shape, num_classes)?;
        let attack = &cfg.attack;

        let mut target_label = 0;
        let mut subpop = None;
        let train = if attack.kind == AttackKind::Subpopulation {
            let task = make_subpopulation_backdoor(
                &train,
                &attack.subpopulation.selector,
                attack.subpopulation.target_label,
            )?;
            let keep: Vec<usize> = (0..train.len())
                .filter(|i| task.source_indices.binary_search(i).is_err())
                .collect();
            let rest = train.subset(train.name().to_string(), &keep)?;
            target_label = task.target_label;
            subpop = Some(task);
            rest
        } else {
            train
        };

        let mut shards = dirichlet_partition(
            &train,
            cfg.num_clients,
            cfg.dirichlet_alpha,
            derive(cfg.seed, &[SALT_PARTITION]),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[SALT_MALICIOUS]));
        let mut malicious = sample(&mut rng, cfg.num_clients, cfg.malicious_total()).into_vec();
        malicious.sort_unstable();
        for &id in &malicious {
            let shard = &shards[id];
            shards[id] = match attack.kind {
                AttackKind::Trigger => {
                    let (poisoned, rest) =
                        apply_trigger(&shard.clean, &attack.trigger, attack.poison_fraction)?;
                    ClientShard::malicious(id, rest, poisoned)?
                }
                AttackKind::Subpopulation => {
                    let task = subpop.as_ref().expect("task built above");
                    ClientShard::malicious(id, shard.clean.clone(), task.poison.clone())?
                }
                _ => ClientShard {
                    is_malicious: true,
                    ..shard.clone()
                },
            };
        }

        let backdoor_test = match attack.kind {
            AttackKind::Trigger => {
                target_label = attack.trigger.target_label;
                Some(trigger_test_set(&test, &attack.trigger)?)
            }
            AttackKind::Subpopulation => subpop.map(|t| t.test_set),
            _ => None,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[SALT_INIT]));
        let global = init_params(&spec, &mut rng);
        Ok(Self {
            cfg,
            spec,
            shards,
            test,
            backdoor_test,
            target_label,
            global,
            round: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn malicious_ids(&self) -> Vec<usize> {
        (0..self.shards.len())
            .filter(|&i| self.shards[i].is_malicious)
            .collect()
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn set_global(&mut self, global: ParamVector) -> Result<()> {
        global.check_spec(&self.spec)?;
        self.global = global;
        Ok(())
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn backdoor_test_set(&self) -> Option<&Dataset> {
        self.backdoor_test.as_ref()
    }

    /// Index of the next round.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Client ids for round `t`, ascending: exactly the configured number of
    /// malicious clients plus benign ones, uniformly without replacement.
    pub fn sample_clients(&self, t: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.cfg.seed, &[SALT_SAMPLE, t as u64]));
        let (bad, good): (Vec<usize>, Vec<usize>) =
            (0..self.shards.len()).partition(|&i| self.shards[i].is_malicious);
        let k = self.cfg.malicious_per_round();
        let tau = self.cfg.clients_per_round;
        let mut ids: Vec<usize> = sample(&mut rng, bad.len(), k)
            .into_iter()
            .map(|i| bad[i])
            .chain(
                sample(&mut rng, good.len(), tau - k)
                    .into_iter()
                    .map(|i| good[i]),
            )
            .collect();
        ids.sort_unstable();
        ids
    }

    fn hyper(&self, t: usize, client: usize) -> TrainHyper {
        TrainHyper {
            sgd: Sgd {
                lr: self.cfg.lr_at(t),
                momentum: self.cfg.momentum,
                weight_decay: self.cfg.weight_decay,
            },
            epochs: self.cfg.local_epochs,
            batch_size: self.cfg.batch_size,
            seed: derive(self.cfg.seed, &[SALT_CLIENT, t as u64, client as u64]),
        }
    }

    /// Local updates of the given clients, in the given order.
    pub fn client_updates(&self, t: usize, ids: &[usize]) -> Result<Vec<ParamVector>> {
        let attack = &self.cfg.attack;
        ids.par_iter()
            .map(|&id| {
                let shard = &self.shards[id];
                let hyper = self.hyper(t, id);
                let out = if shard.is_malicious && attack.kind.is_backdoor() {
                    malicious_update(&self.global, &self.spec, shard, attack, &hyper)?
                } else {
                    train_local(&self.global, &self.spec, shard, &hyper)?
                };
                Ok(out.update)
            })
            .collect()
    }

    pub fn run_round(&mut self) -> Result<RoundReport> {
        let t = self.round;
        self.step(t).map_err(|e| Error::Round {
            round: t,
            source: Box::new(e),
        })
    }

    fn step(&mut self, t: usize) -> Result<RoundReport> {
        let cfg = &self.cfg;
        let ids = self.sample_clients(t);
        let positions: Vec<usize> = (0..ids.len())
            .filter(|&p| self.shards[ids[p]].is_malicious)
            .collect();
        let mut updates = self.client_updates(t, &ids)?;

        let tau = ids.len();
        let krum_f = cfg.aggregator.krum_f_for(tau, positions.len());
        let probe = cfg.aggregator.xmam.probe.build(&self.spec)?;
        let mut lambda = None;
        if cfg.attack.kind.is_adaptive() && !positions.is_empty() {
            let target = match cfg.attack.kind {
                AttackKind::KrumAdaptive => AdaptiveTarget::Krum { f: krum_f },
                _ => AdaptiveTarget::Xmam {
                    spec: &self.spec,
                    probe: &probe,
                    opts: &cfg.aggregator.xmam,
                    global: &self.global,
                },
            };
            let out = adaptive_attack(
                &updates,
                &positions,
                &target,
                cfg.attack.lambda_init,
                cfg.attack.lambda_floor,
            )?;
            for &p in &positions {
                updates[p] = out.crafted.clone();
            }
            lambda = Some(LambdaRecord {
                lambda: out.search.lambda,
                accepted: out.search.accepted,
                iterations: out.search.iterations,
            });
        }

        let ctx = RoundContext {
            round: t,
            spec: &self.spec,
            global: &self.global,
            krum_f,
        };
        let result = aggregate(&cfg.aggregator, &updates, &ctx)?;

        let diagnostics = if cfg.record_diagnostics {
            let slous = match &result.diagnostics.slous {
                Some(s) => s.clone(),
                None => updates
                    .par_iter()
                    .map(|u| xmam_examine(u, &self.spec, &probe))
                    .collect::<Result<Vec<_>>>()?,
            };
            let raw: Vec<Vec<f64>> = updates.iter().map(|u| u.as_slice().to_vec()).collect();
            let to_pairs = |c: Vec<Vec<f64>>| c.into_iter().map(|p| [p[0], p[1]]).collect();
            Some(RoundDiagnostics {
                slou_pca: to_pairs(pca_project(&slous, 2)?.coords),
                update_pca: to_pairs(pca_project(&raw, 2)?.coords),
                update_norms: updates.iter().map(ParamVector::norm).collect(),
                cluster_labels: result.diagnostics.cluster_labels.clone(),
                slous,
                aggregator: result.diagnostics.clone(),
            })
        } else {
            None
        };

        self.global
            .add_scaled(cfg.aggregator.eta_g, &result.global_update)?;
        if !self.global.is_finite() {
            return Err(Error::Numeric("global model".into()));
        }
        self.round += 1;

        let test_error = testing_error_rate(&self.global, &self.spec, &self.test)?;
        let attack_success_rate = match &self.backdoor_test {
            Some(b) => Some(attack_success_rate(
                &self.global,
                &self.spec,
                b,
                self.target_label,
            )?),
            None => None,
        };
        Ok(RoundReport {
            iteration: t,
            test_error,
            attack_success_rate,
            malicious_ids: positions.iter().map(|&p| ids[p]).collect(),
            preserved_ids: result.preserved.iter().map(|&p| ids[p]).collect(),
            sampled_ids: ids,
            screening_seconds: result.screening_seconds,
            lambda,
            diagnostics,
        })
    }

    /// Runs the remaining configured rounds, streaming each report to `sink`.
    pub fn run(&mut self, sink: &mut dyn RoundSink) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::new();
        while self.round < self.cfg.global_iterations {
            let report = self.run_round()?;
            sink.record(&report)?;
            reports.push(report);
        }
        Ok(reports)
    }

    /// The configured aggregation rule.
    pub fn aggregator(&self) -> AggregatorKind {
        self.cfg.aggregator.kind
    }
}
