use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;

use crate::failure::Failure;
use crate::run::{DiagnosticsFile, DIAGNOSTICS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Slous,
    Updates,
}

pub fn export(
    run_dir: &Path,
    round: usize,
    space: Space,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let path = run_dir.join(DIAGNOSTICS_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let file: DiagnosticsFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let report = file
        .rounds
        .iter()
        .find(|r| r.iteration == round)
        .ok_or_else(|| {
            Failure::Config(format!(
                "round {round} is not recorded in {}",
                path.display()
            ))
        })?;
    let diag = report.diagnostics.as_ref().ok_or_else(|| {
        Failure::Config(format!("round {round} was recorded without diagnostics"))
    })?;
    let coords = match space {
        Space::Slous => &diag.slou_pca,
        Space::Updates => &diag.update_pca,
    };

    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(
            fs::File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "pc1", "pc2", "is_malicious", "preserved"])
        .map_err(Failure::runtime)?;
    for (id, [pc1, pc2]) in report.sampled_ids.iter().zip(coords) {
        w.write_record([
            id.to_string(),
            pc1.to_string(),
            pc2.to_string(),
            report.malicious_ids.contains(id).to_string(),
            report.preserved_ids.contains(id).to_string(),
        ])
        .map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}
