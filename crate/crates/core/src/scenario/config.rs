use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datastore::CommandKind;
use crate::hydro::{ElementRef, Watershed, WatershedGraph};
use crate::ingest::{ForecastRecord, ReferenceGauge};
use crate::node::NodeConfig;
use crate::subscription::{AlertSinks, NodeDirectory, NodeInfo, Rule, Subscription, SubscriptionEngine};
use crate::telemetry::{LinkModel, OutageWindow};
use crate::time::{hours_to_ms, parse_iso8601, Timestamp};

use super::ScenarioError;

fn default_start() -> String {
    "1970-01-01T00:00:00Z".into()
}
fn default_dt() -> f64 {
    1.0
}
fn default_debounce() -> f64 {
    crate::subscription::DEFAULT_DEBOUNCE_MIN
}
fn default_scale() -> f64 {
    1.0
}
fn default_latency() -> u64 {
    250
}
fn default_signal() -> f64 {
    -75.0
}

/// Tuning knobs applied on top of the rest of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// Multiplies every rainfall intensity.
    #[serde(default = "default_scale")]
    pub storm_scale: f64,
    /// Overrides reach pure delays, minutes.
    #[serde(default)]
    pub reach_delays_min: BTreeMap<String, f64>,
    /// Overrides the safe depth of every release controller.
    #[serde(default)]
    pub safe_release_depth_m: Option<f64>,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration { storm_scale: 1.0, reach_delays_min: BTreeMap::new(), safe_release_depth_m: None }
    }
}

/// `[start_h, end_h)` relative to the run start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub start_h: f64,
    pub end_h: f64,
    #[serde(default)]
    pub nodes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default = "default_latency")]
    pub base_latency_ms: u64,
    #[serde(default = "default_latency")]
    pub latency_jitter_ms: u64,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default)]
    pub outages: Vec<Outage>,
    #[serde(default)]
    pub signal_db: BTreeMap<String, f64>,
    #[serde(default = "default_signal")]
    pub default_signal_db: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            base_latency_ms: default_latency(),
            latency_jitter_ms: default_latency(),
            loss_probability: 0.0,
            outages: Vec::new(),
            signal_db: BTreeMap::new(),
            default_signal_db: default_signal(),
        }
    }
}

impl LinkConfig {
    pub fn model(&self, start: Timestamp) -> LinkModel {
        LinkModel {
            base_latency_ms: self.base_latency_ms,
            latency_jitter_ms: self.latency_jitter_ms,
            loss_probability: self.loss_probability,
            outage_windows: self
                .outages
                .iter()
                .map(|o| OutageWindow {
                    start: start + hours_to_ms(o.start_h),
                    end: start + hours_to_ms(o.end_h),
                    nodes: o.nodes.clone(),
                })
                .collect(),
            signal_db: self.signal_db.clone(),
            default_signal_db: self.default_signal_db,
        }
    }
}

/// Step function of intensity over time for one or more catchments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainfallScript {
    pub catchments: Vec<String>,
    /// `(hours since start, mm/h)`; each value holds until the next step.
    pub steps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastStep {
    pub at_h: f64,
    pub probability: f64,
    #[serde(default)]
    pub intensity_mmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub at_h: f64,
    pub node: String,
    pub command: CommandKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixtures {
    /// Gauge CSV, relative to the scenario file.
    #[serde(default)]
    pub reference_gauge: Option<String>,
}

/// Which elements the report metrics are computed for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricTargets {
    #[serde(default)]
    pub outlet: Option<String>,
    #[serde(default)]
    pub pond: Option<String>,
    #[serde(default)]
    pub wetland: Option<String>,
}

/// An acceptance bound on one metric, addressed by dotted path into metrics.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: String,
    pub duration_hours: f64,
    #[serde(default = "default_dt")]
    pub hydro_dt_min: f64,
    /// Default `[min, max]` sampling interval for nodes that do not set one.
    #[serde(default)]
    pub interval_bounds: Option<(f64, f64)>,
    #[serde(default = "default_debounce")]
    pub debounce_min: f64,
    #[serde(default)]
    pub retention_hours: Option<f64>,
    /// After the end, nodes keep retrying buffered uploads (no new samples)
    /// for up to this many hours.
    #[serde(default)]
    pub flush_hours: Option<f64>,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub watershed: WatershedGraph,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub subscriptions: Vec<Subscription>,
    #[serde(default)]
    pub rainfall: Vec<RainfallScript>,
    #[serde(default)]
    pub forecast: Vec<ForecastStep>,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
    #[serde(default)]
    pub fixtures: Fixtures,
    #[serde(default)]
    pub metrics: MetricTargets,
    /// Also run with valve control removed and report the difference.
    #[serde(default)]
    pub counterfactual: bool,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

const BUILTINS: &[(&str, &str)] = &[
    ("malletts-hold-release", include_str!("../../scenarios/malletts-hold-release.toml")),
    ("dfw-flash-flood", include_str!("../../scenarios/dfw-flash-flood.toml")),
    ("pid-single-pond", include_str!("../../scenarios/pid-single-pond.toml")),
    ("adaptive-sampling", include_str!("../../scenarios/adaptive-sampling.toml")),
    ("lossy-link", include_str!("../../scenarios/lossy-link.toml")),
    ("command-loop", include_str!("../../scenarios/command-loop.toml")),
];

const BUILTIN_FIXTURES: &[(&str, &str)] =
    &[("malletts-outlet-gauge.csv", include_str!("../../scenarios/malletts-outlet-gauge.csv"))];

impl Scenario {
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTINS.iter().map(|(n, _)| *n).collect()
    }

    pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::Load(format!("no built-in scenario {name:?}")))?;
        Scenario::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Load(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Loads a scenario file, or a built-in when `path` names one and no such
    /// file exists.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        if !path.exists() {
            if let Some(name) = path.to_str().filter(|n| BUILTINS.iter().any(|(b, _)| b == n)) {
                return Scenario::builtin(name);
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Load(format!("{}: {e}", path.display())))?;
        let mut s = Scenario::from_toml(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios serialize")
    }

    pub fn start_ms(&self) -> Result<Timestamp, ScenarioError> {
        parse_iso8601(&self.start).ok_or_else(|| ScenarioError::Load(format!("bad start time {:?}", self.start)))
    }

    pub fn end_ms(&self) -> Result<Timestamp, ScenarioError> {
        Ok(self.start_ms()? + hours_to_ms(self.duration_hours))
    }

    /// SHA-256 of the canonical JSON form of the scenario.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenarios serialize");
        hex::encode(Sha256::digest(&json))
    }

    /// Applies the calibration block: scales rainfall, overrides reach delays
    /// and release depths. The block itself is kept for the record.
    pub fn calibrated(&self) -> Scenario {
        let mut s = self.clone();
        let c = &self.calibration;
        for script in &mut s.rainfall {
            for step in &mut script.steps {
                step.1 *= c.storm_scale;
            }
        }
        for r in &mut s.watershed.reaches {
            if let Some(&d) = c.reach_delays_min.get(&r.id) {
                r.pure_delay_min = d;
            }
        }
        if let Some(depth) = c.safe_release_depth_m {
            for sub in &mut s.subscriptions {
                if let Rule::SetpointRelease(cfg) = &mut sub.rule {
                    cfg.safe_release_depth_m = depth;
                }
            }
        }
        s
    }

    /// The same scenario with valve control taken away: valve-writing
    /// subscriptions and scripted valve commands are dropped and every valve
    /// starts fully open.
    pub fn uncontrolled(&self) -> Scenario {
        let mut s = self.clone();
        s.name = format!("{}-uncontrolled", self.name);
        s.subscriptions.retain(|sub| !sub.writes_valves());
        s.commands.retain(|c| !matches!(c.command, CommandKind::SetValve(_)));
        for st in &mut s.watershed.storages {
            st.outlet.opening = 1.0;
        }
        s.counterfactual = false;
        s.checks.clear();
        s
    }

    pub fn node_config(&self, n: &NodeConfig) -> NodeConfig {
        let mut n = n.clone();
        if n.interval_bounds.is_none() {
            n.interval_bounds = self.interval_bounds;
        }
        n
    }

    pub fn directory(&self) -> NodeDirectory {
        self.nodes
            .iter()
            .map(|n| {
                let n = self.node_config(n);
                (
                    n.node_id.clone(),
                    NodeInfo {
                        sampling_interval_min: n.sampling_interval_min,
                        interval_bounds: n.bounds(),
                        has_valve: n.valve.is_some(),
                    },
                )
            })
            .collect()
    }

    pub fn forecast_records(&self) -> Result<Vec<ForecastRecord>, ScenarioError> {
        let start = self.start_ms()?;
        Ok(self
            .forecast
            .iter()
            .map(|f| ForecastRecord {
                valid_at: start + hours_to_ms(f.at_h),
                precip_probability: f.probability,
                intensity_mmh: f.intensity_mmh,
                horizon_min: 0.0,
            })
            .collect())
    }

    pub fn reference_gauge(&self) -> Result<Option<ReferenceGauge>, ScenarioError> {
        let Some(name) = &self.fixtures.reference_gauge else {
            return Ok(None);
        };
        let text = match self.base_dir.as_ref().map(|d| d.join(name)).filter(|p| p.exists()) {
            Some(p) => std::fs::read_to_string(&p).map_err(|e| ScenarioError::Load(format!("{}: {e}", p.display())))?,
            None => BUILTIN_FIXTURES
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| ScenarioError::Load(format!("fixture {name:?} not found")))?,
        };
        ReferenceGauge::read_csv("reference", text.as_bytes())
            .map(Some)
            .map_err(|e| ScenarioError::Load(format!("fixture {name}: {e}")))
    }

    /// Checks every cross-reference before anything runs.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Load(m));
        if self.name.trim().is_empty() {
            return bad("scenario name is empty".into());
        }
        self.start_ms()?;
        if !(self.duration_hours > 0.0) {
            return bad("duration must be > 0".into());
        }
        if !(self.hydro_dt_min > 0.0 && self.hydro_dt_min <= 1.0) {
            return bad(format!("hydro_dt_min must be in (0, 1], got {}", self.hydro_dt_min));
        }
        if self.flush_hours.is_some_and(|h| !(h >= 0.0)) {
            return bad("flush_hours must be >= 0".into());
        }
        if !(self.calibration.storm_scale >= 0.0) {
            return bad("storm scale must be >= 0".into());
        }
        let calibrated = self.calibrated();
        let ws = Watershed::new(calibrated.watershed.clone()).map_err(|e| ScenarioError::Load(e.to_string()))?;
        for id in self.calibration.reach_delays_min.keys() {
            if !matches!(ws.lookup(id), Some(ElementRef::Reach(_))) {
                return bad(format!("calibration names unknown reach {id:?}"));
            }
        }
        self.link.model(0).validate().map_err(ScenarioError::Load)?;
        for o in &self.link.outages {
            if !(o.end_h > o.start_h) {
                return bad(format!("empty outage [{}, {})", o.start_h, o.end_h));
            }
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            let n = self.node_config(n);
            n.validate().map_err(ScenarioError::Load)?;
            if !ids.insert(n.node_id.clone()) {
                return bad(format!("duplicate node {:?}", n.node_id));
            }
            if n.node_id == crate::ingest::EXTERNAL_NODE {
                return bad(format!("node id {:?} is reserved", n.node_id));
            }
            for s in &n.sensors {
                crate::hydro::observe(&ws, &crate::hydro::HydroState::initial(&ws, 0), &s.binding())
                    .map_err(|e| ScenarioError::Load(format!("node {} sensor {}: {e}", n.node_id, s.id)))?;
            }
            if let Some(v) = &n.valve {
                ws.storage_index(v).map_err(|e| ScenarioError::Load(format!("node {}: {e}", n.node_id)))?;
            }
        }
        for r in &self.rainfall {
            for c in &r.catchments {
                if !matches!(ws.lookup(c), Some(ElementRef::Catchment(_))) {
                    return bad(format!("rainfall names unknown catchment {c:?}"));
                }
            }
            if r.steps.windows(2).any(|w| w[1].0 <= w[0].0) || r.steps.iter().any(|s| !(s.1 >= 0.0)) {
                return bad("rainfall steps must have increasing times and intensities >= 0".into());
            }
        }
        for f in self.forecast_records()? {
            f.validate().map_err(|e| ScenarioError::Load(format!("forecast: {e}")))?;
        }
        for c in &self.commands {
            if !ids.contains(&c.node) {
                return bad(format!("scripted command for unknown node {:?}", c.node));
            }
        }
        for (what, id) in [("outlet", &self.metrics.outlet), ("pond", &self.metrics.pond), ("wetland", &self.metrics.wetland)] {
            if let Some(id) = id {
                let ok = match (what, ws.lookup(id)) {
                    ("outlet", Some(ElementRef::Outlet(_) | ElementRef::Reach(_))) => true,
                    (_, Some(ElementRef::Storage(_))) => what != "outlet",
                    _ => false,
                };
                if !ok {
                    return bad(format!("metrics {what} {id:?} does not name a suitable element"));
                }
            }
        }
        SubscriptionEngine::new(calibrated.subscriptions.clone(), self.directory(), self.debounce_min, AlertSinks::default())
            .map_err(|e| ScenarioError::Load(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in Scenario::builtin_names() {
            Scenario::builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_reference_is_a_load_error() {
        let text = r#"
            name = "broken"
            seed = 1
            duration_hours = 1
            [watershed]
            catchments = [{ id = "c", area_km2 = 1, runoff_coefficient = 0.5, reservoir_k_hours = 1, downstream = "nowhere" }]
        "#;
        assert!(matches!(Scenario::from_toml(text), Err(ScenarioError::Load(_))));
    }

    #[test]
    fn toml_roundtrip() {
        let s = Scenario::builtin("dfw-flash-flood").unwrap();
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.config_hash(), s.config_hash());
    }

    #[test]
    fn counterfactual_drops_valve_control() {
        let s = Scenario::builtin("malletts-hold-release").unwrap();
        let u = s.uncontrolled();
        assert!(u.subscriptions.iter().all(|x| !x.writes_valves()));
        assert!(u.watershed.storages.iter().all(|st| st.outlet.opening == 1.0));
        assert!(s.subscriptions.iter().any(|x| x.writes_valves()));
    }
}
