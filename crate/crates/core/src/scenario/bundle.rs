use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::write_gauge_csv;
use crate::time::{format_iso8601, MS_PER_MINUTE};

use super::metrics::{outlet_gauge, CheckResult, Metrics};
use super::{RunOutput, ScenarioError};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.json";
pub const CHECKS: &str = "checks.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    pub start: String,
    pub end: String,
    /// SHA-256 of every other file in the bundle.
    pub files: BTreeMap<String, String>,
}

/// The files a run produces, keyed by relative path. Contents depend only on
/// the scenario and the seed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, Vec<u8>>,
}

fn json_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("bundle records serialize");
    b.push(b'\n');
    b
}

fn series_csv(points: &[(i64, f64)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "value"]).expect("in-memory csv");
    for (t, v) in points {
        w.write_record([t.to_string(), v.to_string()]).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

impl ReportBundle {
    pub fn build(
        controlled: &RunOutput,
        uncontrolled: Option<&RunOutput>,
        metrics: &Metrics,
        checks: &[CheckResult],
        config_sha256: &str,
    ) -> ReportBundle {
        let mut files = BTreeMap::new();
        files.insert(METRICS.to_owned(), json_pretty(metrics));
        if !checks.is_empty() {
            files.insert(CHECKS.to_owned(), json_pretty(&checks));
        }
        files.insert("plant.csv".to_owned(), controlled.trace.plant.to_csv().into_bytes());
        if let Some(u) = uncontrolled {
            files.insert("uncontrolled/plant.csv".to_owned(), u.trace.plant.to_csv().into_bytes());
        }

        let mut gauge = Vec::new();
        write_gauge_csv(&outlet_gauge(controlled, 15 * MS_PER_MINUTE), &mut gauge).expect("in-memory csv");
        files.insert("outlet_gauge.csv".to_owned(), gauge);

        let store = &controlled.store;
        for key in store.series_keys() {
            let points = store.query_range(&key, i64::MIN, i64::MAX).unwrap_or_default();
            let rows: Vec<(i64, f64)> = points.iter().map(|p| (p.timestamp, p.value)).collect();
            files.insert(format!("series/{key}.csv"), series_csv(&rows));
        }

        let alerts: String = store.alerts().iter().map(|a| a.outbox_record()).collect();
        files.insert("alerts.jsonl".to_owned(), alerts.into_bytes());
        let mut commands = Vec::new();
        for e in store.command_journal() {
            commands.extend(serde_json::to_vec(&e).expect("command events serialize"));
            commands.push(b'\n');
        }
        files.insert("commands.jsonl".to_owned(), commands);

        let hashes = files.iter().map(|(k, v)| (k.clone(), hex::encode(Sha256::digest(v)))).collect();
        let manifest = Manifest {
            scenario: controlled.scenario.name.clone(),
            seed: controlled.seed,
            config_sha256: config_sha256.to_owned(),
            start: format_iso8601(controlled.start),
            end: format_iso8601(controlled.end),
            files: hashes,
        };
        files.insert(MANIFEST.to_owned(), json_pretty(&manifest));
        ReportBundle { files }
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    pub fn manifest(&self) -> Result<Manifest, ScenarioError> {
        let bytes = self.get(MANIFEST).ok_or_else(|| ScenarioError::Bundle("missing manifest.json".into()))?;
        serde_json::from_slice(bytes).map_err(|e| ScenarioError::Bundle(format!("manifest.json: {e}")))
    }

    pub fn metrics(&self) -> Result<Metrics, ScenarioError> {
        let bytes = self.get(METRICS).ok_or_else(|| ScenarioError::Bundle("missing metrics.json".into()))?;
        serde_json::from_slice(bytes).map_err(|e| ScenarioError::Bundle(format!("metrics.json: {e}")))
    }

    pub fn checks(&self) -> Result<Vec<CheckResult>, ScenarioError> {
        match self.get(CHECKS) {
            None => Ok(Vec::new()),
            Some(b) => serde_json::from_slice(b).map_err(|e| ScenarioError::Bundle(format!("checks.json: {e}"))),
        }
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| ScenarioError::Io(format!("{}: {e}", parent.display())))?;
            }
            fs::write(&path, bytes).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    /// Reads a bundle back and checks every file against the manifest.
    pub fn read_from(dir: &Path) -> Result<ReportBundle, ScenarioError> {
        let manifest_bytes =
            fs::read(dir.join(MANIFEST)).map_err(|e| ScenarioError::Bundle(format!("{}: {e}", dir.display())))?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| ScenarioError::Bundle(format!("manifest.json: {e}")))?;
        let mut files = BTreeMap::new();
        for (name, digest) in &manifest.files {
            let bytes = fs::read(dir.join(name)).map_err(|e| ScenarioError::Bundle(format!("{name}: {e}")))?;
            if hex::encode(Sha256::digest(&bytes)) != *digest {
                return Err(ScenarioError::Bundle(format!("{name} does not match the manifest")));
            }
            files.insert(name.clone(), bytes);
        }
        files.insert(MANIFEST.to_owned(), manifest_bytes);
        Ok(ReportBundle { files })
    }
}
