use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Key holding the only non-deterministic field of a metrics line.
pub const WALL_CLOCK_KEY: &str = "wall_clock";

/// One evaluation line of `metrics.jsonl`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment: String,
    pub method: String,
    pub step: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_likelihood_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reconstruction_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_aggregated_posterior: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_to_reference: Option<f64>,
    pub knn_estimator: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, f64>,
    /// Seconds since the run started.
    pub wall_clock: f64,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Appends one JSON line to `path`, creating the file when missing.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", self.to_json_line()?)?;
        Ok(())
    }
}

/// A metrics line with the wall-clock key removed, for reproducibility checks.
pub fn strip_wall_clock(line: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(line)?;
    if let Some(o) = v.as_object_mut() {
        o.remove(WALL_CLOCK_KEY);
    }
    Ok(serde_json::to_string(&v)?)
}
