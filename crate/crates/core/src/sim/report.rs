use serde::{Deserialize, Serialize};

use crate::aggregation::Diagnostics;

/// Outcome of one global iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub iteration: usize,
    pub test_error: f64,
    /// `None` when the experiment has no backdoor task.
    pub attack_success_rate: Option<f64>,
    /// Sampled client ids, ascending.
    pub sampled_ids: Vec<usize>,
    /// Malicious client ids among the sampled ones.
    pub malicious_ids: Vec<usize>,
    /// Client ids whose updates were aggregated.
    pub preserved_ids: Vec<usize>,
    pub screening_seconds: f64,
    /// Adaptive attack search result, when one ran.
    pub lambda: Option<LambdaRecord>,
    pub diagnostics: Option<RoundDiagnostics>,
}

impl RoundReport {
    pub fn preserved_count(&self) -> usize {
        self.preserved_ids.len()
    }

    /// Whether any malicious update made it into the aggregate.
    pub fn preserved_malicious(&self) -> bool {
        self.preserved_ids
            .iter()
            .any(|id| self.malicious_ids.contains(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub lambda: f64,
    pub accepted: bool,
    pub iterations: usize,
}

/// Per-client views of one round, in sampled order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub slous: Vec<Vec<f64>>,
    /// Cluster label per client (XMAM only), `None` for noise.
    pub cluster_labels: Option<Vec<Option<usize>>>,
    pub slou_pca: Vec<[f64; 2]>,
    pub update_pca: Vec<[f64; 2]>,
    pub update_norms: Vec<f64>,
    pub aggregator: Diagnostics,
}
