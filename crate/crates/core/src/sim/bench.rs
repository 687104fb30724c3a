use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::aggregation::{aggregate, AggregatorConfig, AggregatorKind, RoundContext};
use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub aggregator: AggregatorKind,
    pub tau: usize,
    pub zeta: usize,
    pub classes: usize,
    pub repeats: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Softmax regression with `zeta` parameters (rounded down to a multiple of
/// `classes`).
pub fn bench_spec(zeta: usize, classes: usize) -> Result<NetworkSpec> {
    if classes < 2 || zeta < 2 * classes {
        return Err(Error::arg(format!(
            "cannot build a {classes}-class model with {zeta} parameters"
        )));
    }
    NetworkSpec::mlp([1, 1, zeta / classes - 1], 0, classes)
}

/// Mean and standard deviation of the screening time of each rule on
/// `tau` random updates, measured on a single thread.
pub fn screening_benchmark(
    kinds: &[AggregatorKind],
    tau: usize,
    zeta: usize,
    classes: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(Error::arg("need at least 3 repeats"));
    }
    if tau < 3 {
        return Err(Error::arg("need at least 3 updates"));
    }
    let spec = bench_spec(zeta, classes)?;
    let n = spec.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-2).map_err(|e| Error::arg(e.to_string()))?;
    let updates: Vec<ParamVector> = (0..tau)
        .map(|_| ParamVector::new((0..n).map(|_| normal.sample(&mut rng)).collect()))
        .collect();
    let global = ParamVector::zeros(n);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::arg(e.to_string()))?;

    let mut rows = Vec::new();
    for &kind in kinds {
        let cfg = AggregatorConfig::with_kind(kind);
        let ctx = RoundContext {
            round: 0,
            spec: &spec,
            global: &global,
            krum_f: cfg.krum_f_for(tau, (tau as f64 * 0.2).round() as usize),
        };
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let out = pool.install(|| aggregate(&cfg, &updates, &ctx))?;
            times.push(out.screening_seconds);
        }
        let mean = times.iter().sum::<f64>() / repeats as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64;
        rows.push(BenchRow {
            aggregator: kind,
            tau,
            zeta: n,
            classes,
            repeats,
            mean_seconds: mean,
            std_seconds: var.sqrt(),
        });
    }
    Ok(rows)
}
