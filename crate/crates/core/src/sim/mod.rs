//! Round orchestration, evaluation and reporting.

mod bench;
mod engine;
mod metrics;
mod report;
mod sink;

pub use bench::{bench_spec, screening_benchmark, BenchRow};
pub use engine::Simulation;
pub use metrics::{attack_success_rate, testing_error_rate};
pub use report::{LambdaRecord, RoundDiagnostics, RoundReport};
pub use sink::{MetricsCsv, RoundSink, METRICS_HEADER};
