use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::RoundReport;
use crate::error::{Error, Result};

/// Receives each round's report as soon as it is available.
pub trait RoundSink {
    fn record(&mut self, report: &RoundReport) -> Result<()>;
}

impl<F: FnMut(&RoundReport) -> Result<()>> RoundSink for F {
    fn record(&mut self, report: &RoundReport) -> Result<()> {
        self(report)
    }
}

pub const METRICS_HEADER: [&str; 6] = [
    "iteration",
    "test_error",
    "attack_success_rate",
    "preserved_count",
    "screening_seconds",
    "preserved_ids",
];

/// Streams reports as CSV rows with the [`METRICS_HEADER`] columns.
/// `preserved_ids` is a `;`-separated list, an absent attack success rate
/// is an empty field.
pub struct MetricsCsv<W: Write> {
    writer: csv::Writer<W>,
    write_timing: bool,
}

impl MetricsCsv<File> {
    pub fn create(path: impl AsRef<Path>, write_timing: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(file, write_timing)
    }
}

impl<W: Write> MetricsCsv<W> {
    pub fn new(inner: W, write_timing: bool) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(METRICS_HEADER)?;
        writer.flush().map_err(|e| Error::io("metrics", e))?;
        Ok(Self {
            writer,
            write_timing,
        })
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::io("metrics", e.into_error()))
    }
}

impl<W: Write> RoundSink for MetricsCsv<W> {
    fn record(&mut self, r: &RoundReport) -> Result<()> {
        let ids: Vec<String> = r.preserved_ids.iter().map(usize::to_string).collect();
        let seconds = if self.write_timing {
            r.screening_seconds
        } else {
            0.0
        };
        self.writer.write_record([
            r.iteration.to_string(),
            r.test_error.to_string(),
            r.attack_success_rate
                .map_or_else(String::new, |a| a.to_string()),
            r.preserved_count().to_string(),
            seconds.to_string(),
            ids.join(";"),
        ])?;
        self.writer.flush().map_err(|e| Error::io("metrics", e))
    }
}
