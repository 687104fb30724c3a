use std::path::Path;

use xmam::aggregation::AggregatorKind;
use xmam::sim::screening_benchmark;

use crate::failure::Failure;

pub fn bench(
    tau: usize,
    zeta: usize,
    classes: usize,
    repeats: usize,
    names: &[String],
    seed: u64,
    csv_path: &Path,
) -> Result<(), Failure> {
    let kinds: Vec<AggregatorKind> = if names.is_empty() {
        AggregatorKind::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| n.parse())
            .collect::<xmam::Result<_>>()?
    };
    log::info!(
        "timing {} rules at tau {tau}, zeta {zeta}, {classes} classes",
        kinds.len()
    );
    let rows = screening_benchmark(&kinds, tau, zeta, classes, repeats, seed)?;

    println!(
        "{:<12} {:>6} {:>10} {:>8} {:>14} {:>14}",
        "aggregator", "tau", "zeta", "classes", "mean_s", "std_s"
    );
    for r in &rows {
        println!(
            "{:<12} {:>6} {:>10} {:>8} {:>14.6e} {:>14.6e}",
            r.aggregator.name(),
            r.tau,
            r.zeta,
            r.classes,
            r.mean_seconds,
            r.std_seconds
        );
    }

    let mut w = csv::Writer::from_path(csv_path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", csv_path.display())))?;
    for r in &rows {
        w.serialize(r).map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}
