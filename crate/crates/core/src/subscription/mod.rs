//! Applications that sit on the datastore: alert rules, adaptive sampling and
//! valve control.
//!
//! A subscription reads series, and either writes derived series, enqueues
//! node commands, or fires alerts. Evaluation is driven from outside (the
//! scenario scheduler or a server loop) through [`SubscriptionEngine`].

mod adaptive;
mod alert;
mod pid;
mod release;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use adaptive::{adaptive_sampling, AdaptiveSamplingPolicy, SamplingDecision};
pub use alert::{Alert, AlertSinks, Severity};
pub use pid::{pid_step, PidParams, PidState};
pub use release::{setpoint_release, ReleaseConfig, ReleaseDecision, ReleasePhase, ReleaseState};

use crate::datastore::{CommandKind, CommandState, Datastore, Point, SeriesKey, StoreError};
use crate::time::{minutes_to_ms, Timestamp};

pub const DEFAULT_DEBOUNCE_MIN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubscriptionKind {
    /// Reads series and steers nodes through commands.
    Read,
    /// Writes new series entries.
    Write,
    /// Fires alerts.
    Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Above,
    Below,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Above => value > threshold,
            Comparator::Below => value < threshold,
        }
    }
}

/// Every series named `sensor`, optionally on one node only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    #[serde(default)]
    pub node: Option<String>,
    pub sensor: String,
}

impl Selector {
    pub fn matches(&self, key: &SeriesKey) -> bool {
        key.sensor == self.sensor && self.node.as_ref().map_or(true, |n| *n == key.node)
    }
}

fn default_silence_windows() -> f64 {
    3.0
}
fn default_critical() -> Severity {
    Severity::Critical
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    Threshold {
        selector: Selector,
        comparator: Comparator,
        threshold: f64,
        severity: Severity,
        #[serde(default)]
        label: Option<String>,
    },
    /// No data from a node for `windows` evaluation intervals.
    Silence {
        #[serde(default)]
        nodes: Option<Vec<String>>,
        #[serde(default = "default_silence_windows")]
        windows: f64,
        #[serde(default = "default_critical")]
        severity: Severity,
    },
    AdaptiveSampling {
        policy: AdaptiveSamplingPolicy,
        nodes: Vec<String>,
    },
    Pid {
        params: PidParams,
        measurement: SeriesKey,
        node: String,
        /// Smallest change in output worth a new command.
        #[serde(default)]
        deadband: f64,
    },
    SetpointRelease(ReleaseConfig),
    /// `target = scale · source + offset`, written at the source timestamps.
    Derive {
        source: SeriesKey,
        target: SeriesKey,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn default_evaluation_interval() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscription {
    pub id: String,
    pub rule: Rule,
    #[serde(default = "default_evaluation_interval")]
    pub evaluation_interval_min: f64,
    /// Also evaluate whenever matching points are stored.
    #[serde(default)]
    pub on_write: bool,
}

impl Subscription {
    pub fn kind(&self) -> SubscriptionKind {
        match self.rule {
            Rule::Threshold { .. } | Rule::Silence { .. } => SubscriptionKind::Trigger,
            Rule::Derive { .. } => SubscriptionKind::Write,
            Rule::AdaptiveSampling { .. } | Rule::Pid { .. } | Rule::SetpointRelease(_) => SubscriptionKind::Read,
        }
    }

    /// Whether a stored point is relevant to an on-write evaluation.
    pub fn watches(&self, key: &SeriesKey) -> bool {
        match &self.rule {
            Rule::Threshold { selector, .. } => selector.matches(key),
            Rule::Pid { measurement, .. } => measurement == key,
            Rule::SetpointRelease(c) => c.wetland_depth == *key || c.pond_depth == *key,
            Rule::Derive { source, .. } => source == key,
            Rule::AdaptiveSampling { policy, .. } => policy.forecast_series == *key,
            Rule::Silence { .. } => false,
        }
    }

    /// Whether the rule commands a valve.
    pub fn writes_valves(&self) -> bool {
        matches!(self.rule, Rule::Pid { .. } | Rule::SetpointRelease(_))
    }
}

/// What the engine needs to know about a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub sampling_interval_min: f64,
    pub interval_bounds: (f64, f64),
    pub has_valve: bool,
}

pub type NodeDirectory = BTreeMap<String, NodeInfo>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubscriptionError {
    #[error("subscription {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One applied effect of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Alert(Alert),
    Command { node: String, id: u64, kind: CommandKind },
    Write(Vec<Point>),
}

#[derive(Debug, Clone, Default)]
enum Memory {
    #[default]
    None,
    Pid { state: PidState, last_output: Option<f64>, last_eval: Option<Timestamp> },
    Release(ReleaseState),
    Silence { since: Timestamp },
}

#[derive(Debug, Clone)]
struct Slot {
    sub: Subscription,
    memory: Memory,
    /// Last firing time per alert subject.
    fired: BTreeMap<String, Timestamp>,
    error: Option<String>,
    evaluations: u64,
}

#[derive(Debug, Clone)]
pub struct SubscriptionEngine {
    slots: Vec<Slot>,
    nodes: NodeDirectory,
    debounce_ms: i64,
    sinks: AlertSinks,
}

impl SubscriptionEngine {
    pub fn new(
        subscriptions: Vec<Subscription>,
        nodes: NodeDirectory,
        debounce_min: f64,
        sinks: AlertSinks,
    ) -> Result<Self, SubscriptionError> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &subscriptions {
            let invalid = |reason: String| SubscriptionError::Invalid { id: s.id.clone(), reason };
            if !seen.insert(s.id.clone()) {
                return Err(invalid("duplicate id".into()));
            }
            if !(s.evaluation_interval_min > 0.0) {
                return Err(invalid("evaluation interval must be > 0".into()));
            }
            validate_rule(&s.rule, &nodes).map_err(invalid)?;
        }
        let slots = subscriptions
            .into_iter()
            .map(|sub| Slot { sub, memory: Memory::None, fired: BTreeMap::new(), error: None, evaluations: 0 })
            .collect();
        Ok(SubscriptionEngine { slots, nodes, debounce_ms: minutes_to_ms(debounce_min), sinks })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn subscription(&self, i: usize) -> &Subscription {
        &self.slots[i].sub
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.slots.iter().map(|s| &s.sub)
    }

    /// Last evaluation error of each subscription that has one.
    pub fn errors(&self) -> Vec<(String, String)> {
        self.slots
            .iter()
            .filter_map(|s| s.error.as_ref().map(|e| (s.sub.id.clone(), e.clone())))
            .collect()
    }

    pub fn evaluations(&self, i: usize) -> u64 {
        self.slots[i].evaluations
    }

    /// Evaluates every subscription once. The scheduler normally calls
    /// [`evaluate_subscription`](Self::evaluate_subscription) per due slot instead.
    pub fn evaluate(&mut self, store: &Datastore, now: Timestamp) -> Vec<Action> {
        (0..self.slots.len()).flat_map(|i| self.evaluate_subscription(i, store, now)).collect()
    }

    /// Evaluates one subscription and applies its actions. A failure marks the
    /// subscription errored and yields no actions.
    pub fn evaluate_subscription(&mut self, i: usize, store: &Datastore, now: Timestamp) -> Vec<Action> {
        self.run_slot(i, store, now, None)
    }

    /// Evaluates on-write subscriptions that watch any of `points`.
    pub fn on_write(&mut self, store: &Datastore, points: &[Point], now: Timestamp) -> Vec<Action> {
        let mut actions = Vec::new();
        for i in 0..self.slots.len() {
            let sub = &self.slots[i].sub;
            if !sub.on_write {
                continue;
            }
            let relevant: Vec<Point> = points.iter().filter(|p| sub.watches(&p.series)).cloned().collect();
            if !relevant.is_empty() {
                actions.extend(self.run_slot(i, store, now, Some(&relevant)));
            }
        }
        actions
    }

    fn run_slot(&mut self, i: usize, store: &Datastore, now: Timestamp, written: Option<&[Point]>) -> Vec<Action> {
        let proposed = match self.propose(i, store, now, written) {
            Ok(p) => {
                self.slots[i].error = None;
                p
            }
            Err(e) => {
                log::warn!("subscription {} failed: {e}", self.slots[i].sub.id);
                self.slots[i].error = Some(e.to_string());
                return Vec::new();
            }
        };
        self.slots[i].evaluations += 1;
        let mut applied = Vec::with_capacity(proposed.len());
        for p in proposed {
            match p {
                Proposed::Alert(alert) => {
                    let slot = &mut self.slots[i];
                    let last = slot.fired.get(&alert.subject).copied();
                    if last.is_some_and(|t| now - t < self.debounce_ms) {
                        continue;
                    }
                    slot.fired.insert(alert.subject.clone(), now);
                    if let Err(e) = self.sinks.deliver(store, alert.clone()) {
                        log::error!("alert outbox write failed: {e}");
                    }
                    applied.push(Action::Alert(alert));
                }
                Proposed::Command(node, kind) => {
                    let id = store.enqueue_command(&node, kind.clone(), now);
                    applied.push(Action::Command { node, id, kind });
                }
                Proposed::Write(points) => {
                    store.write_points(&points);
                    applied.push(Action::Write(points));
                }
            }
        }
        applied
    }

    fn alert(&self, i: usize, now: Timestamp, severity: Severity, subject: String, message: String) -> Proposed {
        Proposed::Alert(Alert { fired_at: now, severity, subject, message, subscription: self.slots[i].sub.id.clone() })
    }

    fn propose(
        &mut self,
        i: usize,
        store: &Datastore,
        now: Timestamp,
        written: Option<&[Point]>,
    ) -> Result<Vec<Proposed>, SubscriptionError> {
        let sub = self.slots[i].sub.clone();
        let mut out = Vec::new();
        match &sub.rule {
            Rule::Threshold { selector, comparator, threshold, severity, label } => {
                let candidates: Vec<Point> = match written {
                    Some(points) => points.to_vec(),
                    None => store
                        .series_keys()
                        .into_iter()
                        .filter(|k| selector.matches(k))
                        .filter_map(|k| store.query_last(&k))
                        .collect(),
                };
                let what = label.as_deref().unwrap_or(&selector.sensor);
                for p in candidates.iter().filter(|p| comparator.holds(p.value, *threshold)) {
                    let relation = match comparator {
                        Comparator::Above => "above",
                        Comparator::Below => "below",
                    };
                    out.push(self.alert(
                        i,
                        now,
                        *severity,
                        p.series.node.clone(),
                        format!("{what} {} = {} {relation} {threshold}", p.series, p.value),
                    ));
                }
            }
            Rule::Silence { nodes, windows, severity } => {
                let since = match self.slots[i].memory {
                    Memory::Silence { since } => since,
                    _ => {
                        self.slots[i].memory = Memory::Silence { since: now };
                        now
                    }
                };
                let limit = minutes_to_ms(windows * sub.evaluation_interval_min);
                let targets: Vec<String> = nodes.clone().unwrap_or_else(|| self.nodes.keys().cloned().collect());
                for node in targets {
                    let reference = store.last_seen(&node).map_or(since, |t| t.max(since));
                    if now - reference >= limit {
                        let quiet_min = (now - reference) as f64 / 60_000.0;
                        out.push(self.alert(
                            i,
                            now,
                            *severity,
                            node.clone(),
                            format!("no data from {node} for {quiet_min:.0} min"),
                        ));
                    }
                }
            }
            Rule::AdaptiveSampling { policy, nodes } => {
                for node in nodes {
                    let current = self.current_interval(store, node);
                    match adaptive_sampling(policy, store, now, current)? {
                        SamplingDecision::Switch(m) => {
                            out.push(Proposed::Command(node.clone(), CommandKind::SetSamplingInterval(m)))
                        }
                        SamplingDecision::Unchanged => {}
                        SamplingDecision::MissingForecast => out.push(self.alert(
                            i,
                            now,
                            Severity::Info,
                            node.clone(),
                            format!("no forecast in {} for adaptive sampling", policy.forecast_series),
                        )),
                    }
                }
            }
            Rule::Pid { params, measurement, node, deadband } => {
                let Some(m) = store.query_last(measurement) else {
                    return Ok(out);
                };
                let (state, last_output, last_eval) = match self.slots[i].memory {
                    Memory::Pid { state, last_output, last_eval } => (state, last_output, last_eval),
                    _ => (PidState::default(), None, None),
                };
                // skip repeat evaluations on the same measurement
                if last_eval.is_some_and(|t| t >= m.timestamp) {
                    return Ok(out);
                }
                let dt_min = last_eval.map_or(sub.evaluation_interval_min, |t| (m.timestamp - t) as f64 / 60_000.0);
                let (u, next) = pid_step(params, m.value, state, dt_min);
                let send = last_output.map_or(true, |prev| (prev - u).abs() > *deadband);
                self.slots[i].memory = Memory::Pid {
                    state: next,
                    last_output: if send { Some(u) } else { last_output },
                    last_eval: Some(m.timestamp),
                };
                if send {
                    out.push(Proposed::Command(node.clone(), CommandKind::SetValve(u)));
                }
            }
            Rule::SetpointRelease(config) => {
                let staleness_ms = minutes_to_ms(config.staleness_min.unwrap_or_else(|| {
                    3.0 * self.nodes.get(&config.wetland_depth.node).map_or(15.0, |n| n.sampling_interval_min)
                }));
                let mut state = match &self.slots[i].memory {
                    Memory::Release(s) => s.clone(),
                    _ => ReleaseState::default(),
                };
                let decision = setpoint_release(config, &mut state, store, now, staleness_ms)?;
                self.slots[i].memory = Memory::Release(state);
                if decision.stale {
                    out.push(self.alert(
                        i,
                        now,
                        Severity::Warning,
                        config.wetland_depth.node.clone(),
                        format!("stale depth data for release control; holding {} closed", config.valve_node),
                    ));
                }
                if let Some(opening) = decision.command {
                    out.push(Proposed::Command(config.valve_node.clone(), CommandKind::SetValve(opening)));
                }
            }
            Rule::Derive { source, target, scale, offset } => {
                let points: Vec<Point> = match written {
                    Some(points) => points.to_vec(),
                    None => store.query_last(source).into_iter().collect(),
                };
                let derived: Vec<Point> = points
                    .iter()
                    .map(|p| Point { series: target.clone(), timestamp: p.timestamp, value: scale * p.value + offset })
                    .collect();
                if !derived.is_empty() {
                    out.push(Proposed::Write(derived));
                }
            }
        }
        Ok(out)
    }

    /// The interval a node is configured for, as far as the store knows: the
    /// newest non-rejected interval command, else the node's initial setting.
    pub fn current_interval(&self, store: &Datastore, node: &str) -> f64 {
        let info = self.nodes.get(node);
        let initial = info.map_or(15.0, |n| n.sampling_interval_min);
        let bounds = info.map_or((f64::MIN, f64::MAX), |n| n.interval_bounds);
        store
            .commands(node)
            .iter()
            .rev()
            .filter(|c| c.state != CommandState::Rejected)
            .find_map(|c| match c.kind {
                CommandKind::SetSamplingInterval(m) => Some(m.clamp(bounds.0, bounds.1)),
                _ => None,
            })
            .unwrap_or(initial)
    }
}

enum Proposed {
    Alert(Alert),
    Command(String, CommandKind),
    Write(Vec<Point>),
}

fn validate_rule(rule: &Rule, nodes: &NodeDirectory) -> Result<(), String> {
    let known = |n: &str| {
        if nodes.contains_key(n) {
            Ok(())
        } else {
            Err(format!("unknown node {n:?}"))
        }
    };
    match rule {
        Rule::Threshold { threshold, selector, .. } => {
            if !threshold.is_finite() {
                return Err("threshold must be finite".into());
            }
            if let Some(n) = &selector.node {
                known(n)?;
            }
        }
        Rule::Silence { nodes: targets, windows, .. } => {
            if !(*windows > 0.0) {
                return Err("silence windows must be > 0".into());
            }
            for n in targets.iter().flatten() {
                known(n)?;
            }
        }
        Rule::AdaptiveSampling { policy, nodes: targets } => {
            for n in targets {
                known(n)?;
                policy.validate(nodes[n].interval_bounds)?;
            }
        }
        Rule::Pid { params, node, .. } => {
            known(node)?;
            if !nodes[node].has_valve {
                return Err(format!("node {node:?} has no valve"));
            }
            if !(params.output_min <= params.output_max) {
                return Err("PID output range is empty".into());
            }
        }
        Rule::SetpointRelease(c) => {
            known(&c.valve_node)?;
            if !nodes[&c.valve_node].has_valve {
                return Err(format!("node {:?} has no valve", c.valve_node));
            }
            if c.hysteresis_m < 0.0 {
                return Err("hysteresis must be >= 0".into());
            }
            if c.schedule.is_empty() {
                return Err("release schedule is empty".into());
            }
        }
        Rule::Derive { scale, offset, .. } => {
            if !scale.is_finite() || !offset.is_finite() {
                return Err("derive coefficients must be finite".into());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn directory() -> NodeDirectory {
        ["n1", "n2", "pond_ctl"]
            .into_iter()
            .map(|n| {
                (
                    n.to_owned(),
                    NodeInfo { sampling_interval_min: 15.0, interval_bounds: (3.0, 15.0), has_valve: n == "pond_ctl" },
                )
            })
            .collect()
    }

    fn engine(rules: Vec<(&str, Rule)>) -> SubscriptionEngine {
        let subs = rules
            .into_iter()
            .map(|(id, rule)| Subscription { id: id.into(), rule, evaluation_interval_min: 5.0, on_write: false })
            .collect();
        SubscriptionEngine::new(subs, directory(), DEFAULT_DEBOUNCE_MIN, AlertSinks::default()).unwrap()
    }

    fn battery_rule() -> Rule {
        Rule::Threshold {
            selector: Selector { node: None, sensor: "battery_v".into() },
            comparator: Comparator::Below,
            threshold: 3.3,
            severity: Severity::Warning,
            label: None,
        }
    }

    fn alerts(actions: &[Action]) -> Vec<&Alert> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Alert(al) => Some(al),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn low_battery_warns_for_that_node() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("n1", "battery_v", 0, 3.1), Point::new("n2", "battery_v", 0, 3.9)]);
        let mut e = engine(vec![("battery", battery_rule())]);
        let actions = e.evaluate(&ds, 1_000);
        let fired = alerts(&actions);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].severity, Severity::Warning);
        assert_eq!(fired[0].subject, "n1");
        assert_eq!(ds.alerts().len(), 1, "alert persisted");
    }

    #[test]
    fn debounce_limits_repeats() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("n1", "battery_v", 0, 3.1)]);
        let mut e = engine(vec![("battery", battery_rule())]);
        assert_eq!(alerts(&e.evaluate(&ds, 0)).len(), 1);
        assert_eq!(alerts(&e.evaluate(&ds, minutes_to_ms(59.0))).len(), 0);
        assert_eq!(alerts(&e.evaluate(&ds, minutes_to_ms(60.0))).len(), 1);
    }

    #[test]
    fn silent_node_raises_critical() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("n1", "depth", 0, 0.1), Point::new("n2", "depth", 0, 0.1)]);
        let rule = Rule::Silence { nodes: Some(vec!["n1".into(), "n2".into()]), windows: 3.0, severity: Severity::Critical };
        let mut e = engine(vec![("silence", rule)]);
        assert!(alerts(&e.evaluate(&ds, 0)).is_empty());
        ds.write_points(&[Point::new("n2", "depth", minutes_to_ms(14.0), 0.1)]);
        let actions = e.evaluate(&ds, minutes_to_ms(15.0));
        let fired = alerts(&actions);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].subject, "n1");
        assert_eq!(fired[0].severity, Severity::Critical);
    }

    #[test]
    fn flood_threshold_names_bridge_node() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("n1", "depth", 0, 2.5), Point::new("n2", "depth", 0, 0.3)]);
        let rule = Rule::Threshold {
            selector: Selector { node: None, sensor: "depth".into() },
            comparator: Comparator::Above,
            threshold: 1.5,
            severity: Severity::Critical,
            label: Some("flood stage".into()),
        };
        let mut e = engine(vec![("flood", rule)]);
        let actions = e.evaluate(&ds, 0);
        let fired = alerts(&actions);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].subject, "n1");
        assert!(fired[0].message.contains("flood stage"));
    }

    #[test]
    fn adaptive_sampling_commands_once() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("ext", "precip_prob", 0, 0.8)]);
        let policy = AdaptiveSamplingPolicy {
            forecast_series: SeriesKey::new("ext", "precip_prob"),
            rain_probability_threshold: 0.5,
            fast_interval_min: 3.0,
            slow_interval_min: 15.0,
            lookahead_min: 60.0,
        };
        let mut e = engine(vec![("adaptive", Rule::AdaptiveSampling { policy, nodes: vec!["n1".into()] })]);
        let first = e.evaluate(&ds, 0);
        assert_eq!(
            first,
            vec![Action::Command { node: "n1".into(), id: 1, kind: CommandKind::SetSamplingInterval(3.0) }]
        );
        assert!(e.evaluate(&ds, 1).is_empty(), "no churn once commanded");
        assert_eq!(e.current_interval(&ds, "n1"), 3.0);
    }

    #[test]
    fn missing_forecast_gives_info_alert() {
        let ds = Datastore::new();
        let policy = AdaptiveSamplingPolicy {
            forecast_series: SeriesKey::new("ext", "precip_prob"),
            rain_probability_threshold: 0.5,
            fast_interval_min: 3.0,
            slow_interval_min: 15.0,
            lookahead_min: 60.0,
        };
        let mut e = engine(vec![("adaptive", Rule::AdaptiveSampling { policy, nodes: vec!["n1".into()] })]);
        let actions = e.evaluate(&ds, 0);
        assert_eq!(alerts(&actions)[0].severity, Severity::Info);
        assert!(ds.commands("n1").is_empty());
    }

    #[test]
    fn pid_rule_enqueues_valve_commands() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("pond_ctl", "depth", 0, 1.5)]);
        let params = PidParams {
            kp: -1.0,
            ki: 0.0,
            kd: 0.0,
            setpoint: 1.0,
            output_min: 0.0,
            output_max: 1.0,
            integral_limit: 10.0,
        };
        let rule = Rule::Pid { params, measurement: SeriesKey::new("pond_ctl", "depth"), node: "pond_ctl".into(), deadband: 0.0 };
        let mut e = engine(vec![("pid", rule)]);
        let actions = e.evaluate(&ds, 0);
        assert_eq!(actions, vec![Action::Command { node: "pond_ctl".into(), id: 1, kind: CommandKind::SetValve(0.5) }]);
        assert!(e.evaluate(&ds, 10).is_empty(), "same measurement is not re-used");
    }

    #[test]
    fn derive_writes_affine_series() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("n1", "flow", 5, 0.28)]);
        let rule = Rule::Derive {
            source: SeriesKey::new("n1", "flow"),
            target: SeriesKey::new("n1", "tss"),
            scale: 156.25,
            offset: 16.25,
        };
        let mut e = engine(vec![("tss", rule)]);
        e.evaluate(&ds, 10);
        let got = ds.query_last(&SeriesKey::new("n1", "tss")).unwrap();
        assert_eq!(got.timestamp, 5);
        assert!((got.value - 60.0).abs() < 1e-9);
    }

    #[test]
    fn failing_subscription_is_isolated() {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("ext", "precip_prob", 0, 0.9), Point::new("n1", "battery_v", 0, 3.0)]);
        let policy = AdaptiveSamplingPolicy {
            forecast_series: SeriesKey::new("ext", "precip_prob"),
            rain_probability_threshold: 0.5,
            fast_interval_min: 3.0,
            slow_interval_min: 15.0,
            // negative lookahead makes the range query invalid
            lookahead_min: -1.0e9,
        };
        let mut e = engine(vec![
            ("bad", Rule::AdaptiveSampling { policy, nodes: vec!["n1".into()] }),
            ("battery", battery_rule()),
        ]);
        let actions = e.evaluate(&ds, 0);
        assert_eq!(alerts(&actions).len(), 1);
        assert_eq!(e.errors().len(), 1);
        assert_eq!(e.errors()[0].0, "bad");
    }

    #[test]
    fn on_write_only_sees_watched_series() {
        let ds = Datastore::new();
        let rule = Rule::Threshold {
            selector: Selector { node: None, sensor: "depth".into() },
            comparator: Comparator::Above,
            threshold: 1.0,
            severity: Severity::Critical,
            label: None,
        };
        let subs = vec![Subscription { id: "flood".into(), rule, evaluation_interval_min: 5.0, on_write: true }];
        let mut e = SubscriptionEngine::new(subs, directory(), 60.0, AlertSinks::default()).unwrap();
        let pts = vec![Point::new("n1", "flow", 0, 5.0), Point::new("n2", "depth", 0, 1.2)];
        ds.write_points(&pts);
        let actions = e.on_write(&ds, &pts, 0);
        let fired = alerts(&actions);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].subject, "n2");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = vec![Subscription {
            id: "pid".into(),
            rule: Rule::Pid {
                params: PidParams {
                    kp: 1.0,
                    ki: 0.0,
                    kd: 0.0,
                    setpoint: 1.0,
                    output_min: 0.0,
                    output_max: 1.0,
                    integral_limit: 1.0,
                },
                measurement: SeriesKey::new("n1", "depth"),
                node: "n1".into(),
                deadband: 0.0,
            },
            evaluation_interval_min: 5.0,
            on_write: false,
        }];
        assert!(SubscriptionEngine::new(bad, directory(), 60.0, AlertSinks::default()).is_err());
    }
}
