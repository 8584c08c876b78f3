//! Sensor node firmware emulation.
//!
//! A node sleeps until its next wake time, then runs one cycle: fetch pending
//! commands, apply them, sample every enabled sensor plus health statistics,
//! upload the buffer, reschedule and sleep again. Each message gets one
//! transmission attempt per cycle; failures leave data buffered for the next
//! cycle.

mod power;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use power::{integrate_power, power_step, Mode, PowerModel, Solar};

use crate::datastore::{AckOutcome, CommandKind, CommandSlot, CommandView, Point};
use crate::hydro::{observe, Binding, HydroError, HydroState, Watershed};
use crate::telemetry::{encode_points, Credentials, WireBody, WireMessage};
use crate::time::{minutes_to_ms, Timestamp};

pub const BATTERY_SENSOR: &str = "battery_v";
pub const SIGNAL_SENSOR: &str = "signal_db";
pub const ATTEMPTS_SENSOR: &str = "conn_attempts";
pub const HEALTH_SENSORS: [&str; 3] = [BATTERY_SENSOR, SIGNAL_SENSOR, ATTEMPTS_SENSOR];

pub const DEFAULT_INTERVAL_BOUNDS: (f64, f64) = (3.0, 15.0);
pub const DEFAULT_BUFFER_CAPACITY: usize = 1024;

fn enabled() -> bool {
    true
}
fn default_awake_window() -> f64 {
    10.0
}
fn default_buffer() -> usize {
    DEFAULT_BUFFER_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorBinding {
    pub id: String,
    pub element: String,
    pub quantity: crate::hydro::Quantity,
    #[serde(default = "enabled")]
    pub enabled: bool,
}

impl SensorBinding {
    pub fn binding(&self) -> Binding {
        Binding::new(&self.element, self.quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub node_id: String,
    #[serde(default)]
    pub description: String,
    /// `(lat, lon)`.
    #[serde(default)]
    pub location: Option<(f64, f64)>,
    pub sampling_interval_min: f64,
    #[serde(default = "default_awake_window")]
    pub awake_window_s: f64,
    pub sensors: Vec<SensorBinding>,
    /// Storage unit whose valve this node drives.
    #[serde(default)]
    pub valve: Option<String>,
    /// Basic-auth password; the username is the node id. Defaults to a
    /// per-node value derived from the id.
    #[serde(default)]
    pub password: Option<String>,
    /// `[min, max]` sampling interval in minutes.
    #[serde(default)]
    pub interval_bounds: Option<(f64, f64)>,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub power: PowerModel,
    /// Delay of the first wake after the run starts.
    #[serde(default)]
    pub first_wake_offset_min: f64,
}

impl NodeConfig {
    pub fn credentials(&self) -> Credentials {
        let password = self.password.clone().unwrap_or_else(|| format!("{}-key", self.node_id));
        Credentials::new(self.node_id.clone(), password)
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.interval_bounds.unwrap_or(DEFAULT_INTERVAL_BOUNDS)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !crate::hydro::is_identifier(&self.node_id) {
            return Err(format!("bad node id {:?}", self.node_id));
        }
        let (lo, hi) = self.bounds();
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!("node {}: bad interval bounds [{lo}, {hi}]", self.node_id));
        }
        if !(lo..=hi).contains(&self.sampling_interval_min) {
            return Err(format!(
                "node {}: sampling interval {} outside [{lo}, {hi}]",
                self.node_id, self.sampling_interval_min
            ));
        }
        if !(self.awake_window_s >= 0.0) || self.awake_window_s >= self.sampling_interval_min * 60.0 {
            return Err(format!("node {}: awake window must be shorter than the interval", self.node_id));
        }
        if !self.sensors.iter().any(|s| s.enabled) {
            return Err(format!("node {}: needs at least one enabled sensor", self.node_id));
        }
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.sensors {
            if !crate::hydro::is_identifier(&s.id) || HEALTH_SENSORS.contains(&s.id.as_str()) || !ids.insert(&s.id) {
                return Err(format!("node {}: bad or duplicate sensor id {:?}", self.node_id, s.id));
            }
        }
        if self.buffer_capacity == 0 {
            return Err(format!("node {}: buffer capacity must be > 0", self.node_id));
        }
        if self.first_wake_offset_min < 0.0 {
            return Err(format!("node {}: negative first wake offset", self.node_id));
        }
        self.power.validate().map_err(|e| format!("node {}: {e}", self.node_id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub mode: Mode,
    pub next_wake: Timestamp,
    pub charge_mah: f64,
    pub voltage: f64,
    /// Unacknowledged measurements, oldest first.
    pub buffer: VecDeque<Point>,
    /// Points lost to buffer overflow.
    pub dropped_points: u64,
    /// Highest command id handled per command slot.
    pub applied: BTreeMap<CommandSlot, u64>,
    pub signal_db: f64,
    /// Failed connection attempts since boot.
    pub connection_attempts: u64,
    pub awake_ms: i64,
    pub cycles: u64,
    pub skipped_cycles: u64,
    power_clock: Timestamp,
}

impl NodeState {
    pub fn new(config: &NodeConfig, start: Timestamp) -> Self {
        let charge = config.power.initial_charge();
        NodeState {
            mode: Mode::Sleeping,
            next_wake: start + minutes_to_ms(config.first_wake_offset_min),
            charge_mah: charge,
            voltage: config.power.voltage(charge),
            buffer: VecDeque::new(),
            dropped_points: 0,
            applied: BTreeMap::new(),
            signal_db: 0.0,
            connection_attempts: 0,
            awake_ms: 0,
            cycles: 0,
            skipped_cycles: 0,
            power_clock: start,
        }
    }
}

/// Round trip to the server. `None` means the request or the response was lost.
pub trait Transport {
    fn exchange(&mut self, request: WireMessage, now: Timestamp) -> Option<WireMessage>;
    fn signal_strength(&self, node: &str) -> f64;
}

/// Read access to the physical quantities a sensor can measure.
pub trait Plant {
    fn read(&self, binding: &Binding) -> Result<f64, HydroError>;
}

pub struct PlantView<'a> {
    pub watershed: &'a Watershed,
    pub state: &'a HydroState,
}

impl Plant for PlantView<'_> {
    fn read(&self, binding: &Binding) -> Result<f64, HydroError> {
        observe(self.watershed, self.state, binding)
    }
}

/// Valve target for the plant; travel limits are the plant's business.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuation {
    pub storage: String,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enacted {
    pub command_id: u64,
    pub kind: CommandKind,
    pub outcome: AckOutcome,
    /// Whether the outcome was acknowledged to the server this cycle.
    pub acked: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleReport {
    pub skipped: bool,
    pub sampled: Vec<Point>,
    /// Points the server acknowledged this cycle.
    pub transmitted: Vec<Point>,
    pub actuations: Vec<Actuation>,
    pub enacted: Vec<Enacted>,
    pub failed_attempts: u32,
}

/// Applies one command. Commands at or below the last id handled for their
/// slot are duplicates and change nothing.
pub fn apply_command(state: &mut NodeState, config: &mut NodeConfig, command: &CommandView) -> (AckOutcome, Option<Actuation>) {
    let slot = command.kind.slot();
    if state.applied.get(&slot).is_some_and(|&last| command.id <= last) {
        return (AckOutcome::Duplicate, None);
    }
    state.applied.insert(slot, command.id);
    let rejected = |reason: String| (AckOutcome::Rejected { reason }, None);
    match &command.kind {
        CommandKind::SetValve(target) => {
            let Some(storage) = &config.valve else {
                return rejected(format!("node {} has no valve", config.node_id));
            };
            if !target.is_finite() {
                return rejected(format!("valve target {target} is not finite"));
            }
            let clamped = target.clamp(0.0, 1.0);
            let outcome = if clamped != *target {
                log::warn!("node {}: valve target {target} clamped to {clamped}", config.node_id);
                AckOutcome::Clamped
            } else {
                AckOutcome::Applied
            };
            (outcome, Some(Actuation { storage: storage.clone(), target: clamped }))
        }
        CommandKind::SetSamplingInterval(minutes) => {
            if !(minutes.is_finite() && *minutes > 0.0) {
                return rejected(format!("sampling interval {minutes} is not positive"));
            }
            let (lo, hi) = config.bounds();
            let clamped = minutes.clamp(lo, hi);
            config.sampling_interval_min = clamped;
            if clamped != *minutes {
                (AckOutcome::Clamped, None)
            } else {
                (AckOutcome::Applied, None)
            }
        }
        CommandKind::SetSensorEnabled { sensor, enabled } => {
            let others_enabled = config.sensors.iter().any(|s| s.enabled && s.id != *sensor);
            let Some(s) = config.sensors.iter_mut().find(|s| s.id == *sensor) else {
                return rejected(format!("unknown sensor {sensor:?}"));
            };
            if !enabled && !others_enabled {
                return rejected("cannot disable the last enabled sensor".into());
            }
            s.enabled = *enabled;
            (AckOutcome::Applied, None)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SensorNode {
    pub config: NodeConfig,
    pub state: NodeState,
}

impl SensorNode {
    pub fn new(config: NodeConfig, start: Timestamp) -> Self {
        let state = NodeState::new(&config, start);
        SensorNode { config, state }
    }

    pub fn id(&self) -> &str {
        &self.config.node_id
    }

    /// Brings the battery up to `now` assuming the node slept since the last
    /// accounting point.
    pub fn settle(&mut self, now: Timestamp) {
        if now > self.state.power_clock {
            self.state.charge_mah =
                integrate_power(&self.config.power, self.state.charge_mah, self.state.power_clock, now, Mode::Sleeping);
            self.state.power_clock = now;
        }
        self.state.voltage = self.config.power.voltage(self.state.charge_mah);
    }

    fn push_buffer(&mut self, point: Point) {
        if self.state.buffer.len() >= self.config.buffer_capacity {
            self.state.buffer.pop_front();
            self.state.dropped_points += 1;
        }
        self.state.buffer.push_back(point);
    }

    fn request(&self, body: WireBody) -> WireMessage {
        WireMessage::request(&self.config.node_id, Some(self.config.credentials()), body)
    }

    /// One wake cycle at `now`.
    pub fn wake_cycle(&mut self, now: Timestamp, transport: &mut dyn Transport, plant: &dyn Plant) -> CycleReport {
        let mut report = CycleReport::default();
        self.settle(now);
        if self.state.voltage < self.config.power.cutoff_v {
            self.state.skipped_cycles += 1;
            self.state.next_wake = now + minutes_to_ms(self.config.sampling_interval_min);
            report.skipped = true;
            return report;
        }
        self.state.mode = Mode::Awake;
        self.state.cycles += 1;
        let wake_voltage = self.state.voltage;
        let node = self.config.node_id.clone();

        // download instructions
        let commands = match transport.exchange(self.request(WireBody::FetchCommands), now) {
            Some(WireMessage { body: WireBody::CommandList { commands }, .. }) => commands,
            Some(other) => {
                log::warn!("node {node}: unexpected reply to fetch: {:?}", other.body);
                Vec::new()
            }
            None => {
                self.state.connection_attempts += 1;
                report.failed_attempts += 1;
                Vec::new()
            }
        };

        // apply the newest command per slot, acknowledge each after applying
        let mut newest: BTreeMap<CommandSlot, u64> = BTreeMap::new();
        for c in &commands {
            let e = newest.entry(c.kind.slot()).or_insert(c.id);
            *e = (*e).max(c.id);
        }
        for c in &commands {
            let already = self.state.applied.get(&c.kind.slot()).is_some_and(|&last| c.id <= last);
            let (outcome, actuation) = if !already && newest[&c.kind.slot()] != c.id {
                (AckOutcome::Superseded, None)
            } else {
                apply_command(&mut self.state, &mut self.config, c)
            };
            report.actuations.extend(actuation);
            let ack = self.request(WireBody::AckCommand { command_id: c.id, outcome: outcome.clone() });
            let acked =
                matches!(transport.exchange(ack, now), Some(WireMessage { body: WireBody::AckResult { .. }, .. }));
            if !acked {
                self.state.connection_attempts += 1;
                report.failed_attempts += 1;
            }
            report.enacted.push(Enacted { command_id: c.id, kind: c.kind.clone(), outcome, acked });
        }

        // sample
        for s in self.config.sensors.iter().filter(|s| s.enabled) {
            match plant.read(&s.binding()) {
                Ok(v) => report.sampled.push(Point::new(&node, &s.id, now, v)),
                Err(e) => log::warn!("node {node}: sensor {} unreadable: {e}", s.id),
            }
        }
        self.state.signal_db = transport.signal_strength(&node);
        report.sampled.push(Point::new(&node, BATTERY_SENSOR, now, wake_voltage));
        report.sampled.push(Point::new(&node, SIGNAL_SENSOR, now, self.state.signal_db));
        report.sampled.push(Point::new(&node, ATTEMPTS_SENSOR, now, self.state.connection_attempts as f64));
        for p in report.sampled.clone() {
            self.push_buffer(p);
        }

        self.upload(now, transport, &mut report);
        self.sleep(now);
        report
    }

    /// Retry-only cycle: uploads whatever is buffered without sampling or
    /// fetching commands.
    pub fn flush(&mut self, now: Timestamp, transport: &mut dyn Transport) -> CycleReport {
        let mut report = CycleReport::default();
        self.settle(now);
        if self.state.voltage < self.config.power.cutoff_v {
            self.state.skipped_cycles += 1;
            self.state.next_wake = now + minutes_to_ms(self.config.sampling_interval_min);
            report.skipped = true;
            return report;
        }
        self.state.mode = Mode::Awake;
        self.state.cycles += 1;
        if !self.state.buffer.is_empty() {
            self.upload(now, transport, &mut report);
        }
        self.sleep(now);
        report
    }

    fn upload(&mut self, now: Timestamp, transport: &mut dyn Transport, report: &mut CycleReport) {
        let node = &self.config.node_id;
        let batch: Vec<Point> = self.state.buffer.iter().cloned().collect();
        let upload = self.request(WireBody::WritePoints { payload: encode_points(&batch) });
        match transport.exchange(upload, now) {
            Some(WireMessage { body: WireBody::WriteAck { .. }, .. }) => {
                self.state.buffer.drain(..batch.len());
                report.transmitted = batch;
            }
            Some(WireMessage { body: WireBody::BadRequest { line, message }, .. }) => {
                log::error!("node {node}: server refused upload at line {line:?}: {message}; dropping batch");
                self.state.dropped_points += batch.len() as u64;
                self.state.buffer.drain(..batch.len());
            }
            Some(other) => {
                log::warn!("node {node}: upload refused: {:?}", other.body);
                self.state.connection_attempts += 1;
                report.failed_attempts += 1;
            }
            None => {
                self.state.connection_attempts += 1;
                report.failed_attempts += 1;
            }
        }
    }

    fn sleep(&mut self, now: Timestamp) {
        let awake = (self.config.awake_window_s * 1000.0).round() as i64;
        self.state.charge_mah =
            integrate_power(&self.config.power, self.state.charge_mah, now, now + awake, Mode::Awake);
        self.state.power_clock = now + awake;
        self.state.awake_ms += awake;
        self.state.voltage = self.config.power.voltage(self.state.charge_mah);
        self.state.next_wake = now + minutes_to_ms(self.config.sampling_interval_min);
        self.state.mode = Mode::Sleeping;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{Datastore, SeriesKey};
    use crate::hydro::Quantity;
    use crate::telemetry::{decode_points, CredentialStore};

    struct FakePlant;
    impl Plant for FakePlant {
        fn read(&self, b: &Binding) -> Result<f64, HydroError> {
            Ok(match b.quantity {
                Quantity::Depth => 0.42,
                _ => 1.5,
            })
        }
    }

    /// Talks to a datastore directly; `down` drops every message.
    struct Direct {
        store: Datastore,
        creds: CredentialStore,
        down: bool,
    }

    impl Transport for Direct {
        fn exchange(&mut self, req: WireMessage, now: Timestamp) -> Option<WireMessage> {
            if self.down {
                return None;
            }
            if self.creds.authenticate(req.auth.as_ref()).is_err() {
                return Some(WireMessage::response(&req.node_id, WireBody::AuthError));
            }
            let body = match req.body {
                WireBody::FetchCommands => WireBody::CommandList {
                    commands: self.store.fetch_pending(&req.node_id, now).iter().map(|c| c.view()).collect(),
                },
                WireBody::AckCommand { command_id, outcome } => {
                    let r = self.store.ack(&req.node_id, command_id, outcome, now).ok()?;
                    WireBody::AckResult { command_id, state: r.state }
                }
                WireBody::WritePoints { payload } => {
                    let pts = decode_points(&payload).ok()?;
                    WireBody::WriteAck { written: self.store.write_points(&pts).written }
                }
                _ => return None,
            };
            Some(WireMessage::response(&req.node_id, body))
        }

        fn signal_strength(&self, _: &str) -> f64 {
            -80.0
        }
    }

    fn config() -> NodeConfig {
        NodeConfig {
            node_id: "n1".into(),
            description: String::new(),
            location: None,
            sampling_interval_min: 15.0,
            awake_window_s: 10.0,
            sensors: vec![
                SensorBinding { id: "depth".into(), element: "pond".into(), quantity: Quantity::Depth, enabled: true },
                SensorBinding { id: "flow".into(), element: "pond".into(), quantity: Quantity::Flow, enabled: true },
            ],
            valve: Some("pond".into()),
            password: None,
            interval_bounds: None,
            buffer_capacity: 1024,
            power: PowerModel::default(),
            first_wake_offset_min: 0.0,
        }
    }

    fn direct() -> Direct {
        let mut creds = CredentialStore::new();
        creds.insert(&config().credentials());
        Direct { store: Datastore::new(), creds, down: false }
    }

    #[test]
    fn happy_path_transmits_everything() {
        let mut t = direct();
        let mut node = SensorNode::new(config(), 0);
        let r = node.wake_cycle(0, &mut t, &FakePlant);
        assert_eq!(r.sampled.len(), 2 + 3);
        assert_eq!(r.transmitted, r.sampled);
        assert!(node.state.buffer.is_empty());
        assert_eq!(t.store.query_last(&SeriesKey::new("n1", "depth")).unwrap().value, 0.42);
        assert_eq!(node.state.next_wake, minutes_to_ms(15.0));
        assert_eq!(node.state.mode, Mode::Sleeping);
    }

    #[test]
    fn pending_valve_command_is_enacted_and_acked() {
        let mut t = direct();
        let id = t.store.enqueue_command("n1", CommandKind::SetValve(0.0), 0);
        let mut node = SensorNode::new(config(), 0);
        let r = node.wake_cycle(1, &mut t, &FakePlant);
        assert_eq!(r.actuations, vec![Actuation { storage: "pond".into(), target: 0.0 }]);
        assert_eq!(t.store.commands("n1")[0].state, crate::datastore::CommandState::Acked);
        assert_eq!(r.enacted[0].command_id, id);
    }

    #[test]
    fn outage_buffers_then_flushes_in_order() {
        let mut t = direct();
        let mut node = SensorNode::new(config(), 0);
        t.down = true;
        for k in 0..3 {
            let r = node.wake_cycle(node.state.next_wake, &mut t, &FakePlant);
            assert!(r.transmitted.is_empty(), "cycle {k}");
        }
        assert_eq!(node.state.buffer.len(), 15);
        assert_eq!(node.state.connection_attempts, 6);
        t.down = false;
        let r = node.wake_cycle(node.state.next_wake, &mut t, &FakePlant);
        assert_eq!(r.transmitted.len(), 20);
        let depth = t.store.query_range(&SeriesKey::new("n1", "depth"), 0, i64::MAX).unwrap();
        let times: Vec<i64> = depth.iter().map(|p| p.timestamp).collect();
        assert_eq!(times, (0..4).map(|k| minutes_to_ms(15.0 * k as f64)).collect::<Vec<_>>());
    }

    #[test]
    fn interval_command_applies() {
        let mut cfg = config();
        let mut state = NodeState::new(&cfg, 0);
        let cmd = CommandView { id: 1, kind: CommandKind::SetSamplingInterval(3.0), issued_at: 0 };
        assert_eq!(apply_command(&mut state, &mut cfg, &cmd).0, AckOutcome::Applied);
        assert_eq!(cfg.sampling_interval_min, 3.0);
    }

    #[test]
    fn duplicate_is_noop() {
        let mut cfg = config();
        let mut state = NodeState::new(&cfg, 0);
        let cmd = CommandView { id: 7, kind: CommandKind::SetValve(0.3), issued_at: 0 };
        assert!(apply_command(&mut state, &mut cfg, &cmd).1.is_some());
        let (s1, c1) = (state.clone(), cfg.clone());
        assert_eq!(apply_command(&mut state, &mut cfg, &cmd), (AckOutcome::Duplicate, None));
        assert_eq!((state, cfg), (s1, c1));
    }

    #[test]
    fn valve_out_of_range_is_clamped() {
        let mut cfg = config();
        let mut state = NodeState::new(&cfg, 0);
        let cmd = CommandView { id: 1, kind: CommandKind::SetValve(1.5), issued_at: 0 };
        let (outcome, act) = apply_command(&mut state, &mut cfg, &cmd);
        assert_eq!(outcome, AckOutcome::Clamped);
        assert_eq!(act.unwrap().target, 1.0);
    }

    #[test]
    fn valve_without_binding_is_rejected() {
        let mut cfg = NodeConfig { valve: None, ..config() };
        let mut state = NodeState::new(&cfg, 0);
        let cmd = CommandView { id: 1, kind: CommandKind::SetValve(0.5), issued_at: 0 };
        assert!(matches!(apply_command(&mut state, &mut cfg, &cmd).0, AckOutcome::Rejected { .. }));
    }

    #[test]
    fn interval_out_of_bounds_is_clamped() {
        let mut cfg = config();
        let mut state = NodeState::new(&cfg, 0);
        let cmd = CommandView { id: 1, kind: CommandKind::SetSamplingInterval(60.0), issued_at: 0 };
        assert_eq!(apply_command(&mut state, &mut cfg, &cmd).0, AckOutcome::Clamped);
        assert_eq!(cfg.sampling_interval_min, 15.0);
    }

    #[test]
    fn last_sensor_cannot_be_disabled() {
        let mut cfg = config();
        let mut state = NodeState::new(&cfg, 0);
        let off = |id, sensor: &str| CommandView {
            id,
            kind: CommandKind::SetSensorEnabled { sensor: sensor.into(), enabled: false },
            issued_at: 0,
        };
        assert_eq!(apply_command(&mut state, &mut cfg, &off(1, "depth")).0, AckOutcome::Applied);
        assert!(matches!(apply_command(&mut state, &mut cfg, &off(2, "flow")).0, AckOutcome::Rejected { .. }));
    }

    #[test]
    fn newest_valve_command_wins_within_a_batch() {
        let mut t = direct();
        t.store.enqueue_command("n1", CommandKind::SetValve(0.2), 0);
        t.store.enqueue_command("n1", CommandKind::SetValve(0.8), 0);
        let mut node = SensorNode::new(config(), 0);
        let r = node.wake_cycle(1, &mut t, &FakePlant);
        assert_eq!(r.actuations, vec![Actuation { storage: "pond".into(), target: 0.8 }]);
        assert_eq!(r.enacted[0].outcome, AckOutcome::Superseded);
    }

    #[test]
    fn below_cutoff_skips_cycle() {
        let mut cfg = config();
        cfg.power.initial_soc = 0.1; // 3.12 V
        let mut t = direct();
        let mut node = SensorNode::new(cfg, 0);
        let r = node.wake_cycle(0, &mut t, &FakePlant);
        assert!(r.skipped);
        assert_eq!(t.store.point_count(), 0);
        assert_eq!(node.state.next_wake, minutes_to_ms(15.0));
    }

    #[test]
    fn duty_cycle_under_five_percent() {
        let mut t = direct();
        let mut node = SensorNode::new(config(), 0);
        let day = 24 * 60 * 60_000;
        while node.state.next_wake < day {
            node.wake_cycle(node.state.next_wake, &mut t, &FakePlant);
        }
        assert!(node.state.awake_ms as f64 / day as f64 <= 0.05);
    }

    #[test]
    fn faster_sampling_uses_more_charge() {
        let run = |interval: f64| {
            let mut t = direct();
            let cfg = NodeConfig { sampling_interval_min: interval, ..config() };
            let mut node = SensorNode::new(cfg, 0);
            let day = 24 * 60 * 60_000;
            while node.state.next_wake < day {
                node.wake_cycle(node.state.next_wake, &mut t, &FakePlant);
            }
            node.settle(day);
            node.state.charge_mah
        };
        assert!(run(3.0) < run(15.0));
    }
}
