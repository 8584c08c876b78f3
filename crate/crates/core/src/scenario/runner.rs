use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datastore::{AckOutcome, CommandKind, Datastore, Point};
use crate::gateway::{error_body, Gateway};
use crate::hydro::{step_watershed, FluxLedger, HydroState, Watershed};
use crate::ingest::ingest_records;
use crate::node::{PlantView, SensorNode, Transport};
use crate::subscription::{AlertSinks, SubscriptionEngine};
use crate::telemetry::{Delivery, Link, WireBody, WireMessage};
use crate::time::{hours_to_ms, minutes_to_ms, Timestamp};

use super::{PlantTrace, Scenario, ScenarioError};

/// Same-time events run in this order, then in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Hydro,
    Delivery,
    Wake,
    Evaluation,
}

#[derive(Debug)]
enum Event {
    Hydro,
    /// A write reaching the server; committed when it is processed.
    Delivery { points: Vec<Point> },
    Scripted(usize),
    Wake(usize),
    Evaluate(usize),
    /// Post-run upload retry.
    Flush(usize),
}

#[derive(Debug)]
struct Entry {
    at: Timestamp,
    priority: Priority,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.priority, other.seq).cmp(&(self.at, self.priority, self.seq))
    }
}

#[derive(Debug, Default)]
struct Queue {
    heap: BinaryHeap<Entry>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, at: Timestamp, priority: Priority, event: Event) {
        self.seq += 1;
        self.heap.push(Entry { at, priority, seq: self.seq, event });
    }

    fn peek_time(&self) -> Option<Timestamp> {
        self.heap.peek().map(|e| e.at)
    }

    fn pop(&mut self) -> Option<Entry> {
        self.heap.pop()
    }
}

/// Called around every processed event; serve mode uses it to pace the run
/// against the wall clock.
pub trait RunHooks {
    fn before_event(&mut self, _at: Timestamp) {}
    fn after_event(&mut self, _at: Timestamp) {}
}

pub struct NoHooks;
impl RunHooks for NoHooks {}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Appends fired alerts to this file.
    pub outbox: Option<PathBuf>,
    pub log_alerts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnactRecord {
    pub at: Timestamp,
    pub node: String,
    pub command_id: u64,
    pub kind: CommandKind,
    pub outcome: AckOutcome,
    pub acked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationRecord {
    pub at: Timestamp,
    pub node: String,
    pub storage: String,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalChange {
    pub at: Timestamp,
    pub node: String,
    pub from_min: f64,
    pub to_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: String,
    pub charge_mah: f64,
    pub voltage: f64,
    pub awake_ms: i64,
    pub cycles: u64,
    pub skipped_cycles: u64,
    pub dropped_points: u64,
    pub buffered_points: usize,
    pub connection_attempts: u64,
    pub sampling_interval_min: f64,
}

/// Everything observed during a run, beyond what the datastore holds.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub plant: PlantTrace,
    /// Every point any node sampled, in sampling order.
    pub sampled: Vec<Point>,
    pub enacted: Vec<EnactRecord>,
    pub actuations: Vec<ActuationRecord>,
    pub interval_changes: Vec<IntervalChange>,
    /// Largest `|imbalance| / max(inflow, 1 L)` seen after any step.
    pub max_mass_imbalance_rel: f64,
    pub ledger: FluxLedger,
    pub nodes: Vec<NodeSummary>,
    pub subscription_errors: Vec<(String, String)>,
    pub events: u64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub seed: u64,
    pub start: Timestamp,
    pub end: Timestamp,
    pub store: Datastore,
    pub trace: RunTrace,
}

/// Piecewise-constant rainfall per catchment.
#[derive(Debug, Clone, Default)]
struct RainSchedule {
    scripts: Vec<(Vec<String>, Vec<(Timestamp, f64)>)>,
}

impl RainSchedule {
    fn new(s: &Scenario, start: Timestamp) -> Self {
        RainSchedule {
            scripts: s
                .rainfall
                .iter()
                .map(|r| (r.catchments.clone(), r.steps.iter().map(|&(h, v)| (start + hours_to_ms(h), v)).collect()))
                .collect(),
        }
    }

    fn at(&self, t: Timestamp) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (catchments, steps) in &self.scripts {
            let i = steps.partition_point(|&(ts, _)| ts <= t);
            let v = if i == 0 { 0.0 } else { steps[i - 1].1 };
            for c in catchments {
                *out.entry(c.clone()).or_insert(0.0) += v;
            }
        }
        out
    }
}

/// Node-side view of the network: every message crosses the lossy link both
/// ways and is handled by the gateway at its delivery time.
struct SimTransport<'a> {
    link: &'a mut Link,
    gateway: &'a Gateway,
    /// Accepted writes, committed later at their delivery time.
    commits: Vec<(Timestamp, Vec<Point>)>,
}

impl Transport for SimTransport<'_> {
    fn exchange(&mut self, request: WireMessage, now: Timestamp) -> Option<WireMessage> {
        let Delivery::Delivered { at } = self.link.transmit(&request, now) else {
            return None;
        };
        let body = match &request.body {
            WireBody::WritePoints { payload } => match self.gateway.prepare_write(request.auth.as_ref(), payload) {
                Ok(points) => {
                    let written = points.len();
                    self.commits.push((at, points));
                    WireBody::WriteAck { written }
                }
                Err(e) => error_body(e),
            },
            _ => self.gateway.handle(&request, at).body,
        };
        let response = WireMessage::response(&request.node_id, body);
        match self.link.transmit(&response, at) {
            Delivery::Delivered { .. } => Some(response),
            Delivery::Dropped => None,
        }
    }

    fn signal_strength(&self, node: &str) -> f64 {
        self.link.model().signal_strength(node)
    }
}

/// Discrete-event run of one scenario.
pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    start: Timestamp,
    end: Timestamp,
    dt_ms: i64,
    watershed: Watershed,
    hydro: HydroState,
    nodes: Vec<SensorNode>,
    link: Link,
    store: Datastore,
    gateway: Gateway,
    engine: SubscriptionEngine,
    rain: RainSchedule,
    queue: Queue,
    trace: RunTrace,
    now: Timestamp,
}

impl Simulation {
    pub fn new(scenario: &Scenario, options: RunOptions) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let scenario = scenario.calibrated();
        let seed = options.seed.unwrap_or(scenario.seed);
        let start = scenario.start_ms()?;
        let end = scenario.end_ms()?;
        let watershed = Watershed::new(scenario.watershed.clone()).map_err(|e| ScenarioError::Load(e.to_string()))?;
        let hydro = HydroState::initial(&watershed, start);
        let store = Datastore::with_retention(scenario.retention_hours.map(hours_to_ms));
        store.advance_clock(start);
        let gateway = Gateway::new(store.clone());
        let mut nodes = Vec::new();
        for n in &scenario.nodes {
            let config = scenario.node_config(n);
            gateway.register_node(&config);
            store.set_redelivery_timeout(&config.node_id, 2 * minutes_to_ms(config.sampling_interval_min));
            nodes.push(SensorNode::new(config, start));
        }
        let sinks = AlertSinks { log: options.log_alerts, outbox: options.outbox.clone() };
        let engine = SubscriptionEngine::new(scenario.subscriptions.clone(), scenario.directory(), scenario.debounce_min, sinks)
            .map_err(|e| ScenarioError::Load(e.to_string()))?;
        ingest_records(&scenario.forecast_records()?, &store);
        let link = Link::new(scenario.link.model(start), seed);
        let rain = RainSchedule::new(&scenario, start);

        let mut trace = RunTrace { plant: PlantTrace::new(&watershed), ..Default::default() };
        trace.plant.record(&watershed, &hydro);
        let mut queue = Queue::default();
        let dt_ms = minutes_to_ms(scenario.hydro_dt_min);
        if start + dt_ms <= end {
            queue.push(start + dt_ms, Priority::Hydro, Event::Hydro);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.state.next_wake <= end {
                queue.push(n.state.next_wake, Priority::Wake, Event::Wake(i));
            }
        }
        for (i, c) in scenario.commands.iter().enumerate() {
            let at = start + hours_to_ms(c.at_h);
            if at <= end {
                queue.push(at, Priority::Delivery, Event::Scripted(i));
            }
        }
        for i in 0..engine.len() {
            let at = start + minutes_to_ms(engine.subscription(i).evaluation_interval_min);
            if at <= end {
                queue.push(at, Priority::Evaluation, Event::Evaluate(i));
            }
        }
        Ok(Simulation {
            scenario,
            seed,
            start,
            end,
            dt_ms,
            watershed,
            hydro,
            nodes,
            link,
            store,
            gateway,
            engine,
            rain,
            queue,
            trace,
            now: start,
        })
    }

    pub fn store(&self) -> &Datastore {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn hydro(&self) -> &HydroState {
        &self.hydro
    }

    pub fn watershed(&self) -> &Watershed {
        &self.watershed
    }

    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    /// Time of the next event, if any is left. Deliveries scheduled past the
    /// end still run so that nothing in flight is lost.
    pub fn next_event_time(&self) -> Option<Timestamp> {
        self.queue.peek_time()
    }

    /// Processes one event. Returns its time, or `None` when the run is over.
    pub fn step(&mut self) -> Result<Option<Timestamp>, ScenarioError> {
        let Some(entry) = self.queue.pop() else {
            return Ok(None);
        };
        let at = entry.at;
        if at > self.end && !matches!(entry.event, Event::Delivery { .. } | Event::Flush(_)) {
            return Ok(Some(at));
        }
        self.now = self.now.max(at);
        self.store.advance_clock(self.now);
        self.trace.events += 1;
        match entry.event {
            Event::Hydro => self.hydro_step(at)?,
            Event::Delivery { points } => {
                self.gateway.commit_write(&points);
                self.engine.on_write(&self.store, &points, at);
            }
            Event::Scripted(i) => {
                let c = &self.scenario.commands[i];
                self.store.enqueue_command(&c.node, c.command.clone(), at);
            }
            Event::Wake(i) => self.wake(i, at)?,
            Event::Flush(i) => self.flush(i, at),
            Event::Evaluate(i) => {
                self.engine.evaluate_subscription(i, &self.store, at);
                let next = at + minutes_to_ms(self.engine.subscription(i).evaluation_interval_min);
                if next <= self.end {
                    self.queue.push(next, Priority::Evaluation, Event::Evaluate(i));
                }
            }
        }
        Ok(Some(at))
    }

    fn hydro_step(&mut self, at: Timestamp) -> Result<(), ScenarioError> {
        let rain = self.rain.at(at - self.dt_ms);
        let (next, _) = step_watershed(&self.watershed, &self.hydro, &rain, self.scenario.hydro_dt_min)
            .map_err(|e| ScenarioError::Hydro(e.to_string()))?;
        self.hydro = next;
        self.hydro.time = at;
        let scale = self.hydro.ledger.runoff_in_l.max(self.hydro.ledger.initial_storage_l).max(1.0);
        let rel = self.hydro.mass_imbalance_l().abs() / scale;
        self.trace.max_mass_imbalance_rel = self.trace.max_mass_imbalance_rel.max(rel);
        self.trace.plant.record(&self.watershed, &self.hydro);
        if at + self.dt_ms <= self.end {
            self.queue.push(at + self.dt_ms, Priority::Hydro, Event::Hydro);
        }
        Ok(())
    }

    fn wake(&mut self, i: usize, at: Timestamp) -> Result<(), ScenarioError> {
        let before = self.nodes[i].config.sampling_interval_min;
        let mut transport = SimTransport { link: &mut self.link, gateway: &self.gateway, commits: Vec::new() };
        let plant = PlantView { watershed: &self.watershed, state: &self.hydro };
        let report = self.nodes[i].wake_cycle(at, &mut transport, &plant);
        let commits = std::mem::take(&mut transport.commits);
        let node = self.nodes[i].id().to_owned();
        for (when, points) in commits {
            self.queue.push(when, Priority::Delivery, Event::Delivery { points });
        }
        for a in &report.actuations {
            self.hydro
                .set_valve_target(&self.watershed, &a.storage, a.target)
                .map_err(|e| ScenarioError::Hydro(e.to_string()))?;
            self.trace.actuations.push(ActuationRecord { at, node: node.clone(), storage: a.storage.clone(), target: a.target });
        }
        for e in report.enacted {
            self.trace.enacted.push(EnactRecord {
                at,
                node: node.clone(),
                command_id: e.command_id,
                kind: e.kind,
                outcome: e.outcome,
                acked: e.acked,
            });
        }
        self.trace.sampled.extend(report.sampled);
        let after = self.nodes[i].config.sampling_interval_min;
        if after != before {
            self.store.set_redelivery_timeout(&node, 2 * minutes_to_ms(after));
            self.trace.interval_changes.push(IntervalChange { at, node, from_min: before, to_min: after });
        }
        let next = self.nodes[i].state.next_wake;
        if next <= self.end {
            self.queue.push(next, Priority::Wake, Event::Wake(i));
        }
        Ok(())
    }

    fn flush(&mut self, i: usize, at: Timestamp) {
        let mut transport = SimTransport { link: &mut self.link, gateway: &self.gateway, commits: Vec::new() };
        self.nodes[i].flush(at, &mut transport);
        for (when, points) in std::mem::take(&mut transport.commits) {
            self.queue.push(when, Priority::Delivery, Event::Delivery { points });
        }
        let next = self.nodes[i].state.next_wake;
        if !self.nodes[i].state.buffer.is_empty() && next <= self.flush_until() {
            self.queue.push(next, Priority::Wake, Event::Flush(i));
        }
    }

    fn flush_until(&self) -> Timestamp {
        self.end + self.scenario.flush_hours.map_or(0, hours_to_ms)
    }

    /// Schedules upload retries for nodes still holding data once the run
    /// proper is over. Returns whether anything was scheduled.
    fn schedule_flush(&mut self) -> bool {
        if self.scenario.flush_hours.is_none() {
            return false;
        }
        let mut any = false;
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.state.buffer.is_empty() && n.state.next_wake <= self.flush_until() {
                self.queue.push(n.state.next_wake.max(self.end), Priority::Wake, Event::Flush(i));
                any = true;
            }
        }
        any
    }

    pub fn run(self) -> Result<RunOutput, ScenarioError> {
        self.run_with(&mut NoHooks)
    }

    pub fn run_with(mut self, hooks: &mut dyn RunHooks) -> Result<RunOutput, ScenarioError> {
        let mut flushed = false;
        loop {
            while let Some(at) = self.queue.peek_time() {
                hooks.before_event(at);
                self.step()?;
                hooks.after_event(at);
            }
            if flushed || !self.schedule_flush() {
                break;
            }
            flushed = true;
        }
        Ok(self.finish())
    }

    /// Settles batteries at the end time (or after the flush phase) and hands
    /// back the results.
    pub fn finish(mut self) -> RunOutput {
        for n in &mut self.nodes {
            n.settle(self.end);
            self.trace.nodes.push(NodeSummary {
                node: n.id().to_owned(),
                charge_mah: n.state.charge_mah,
                voltage: n.state.voltage,
                awake_ms: n.state.awake_ms,
                cycles: n.state.cycles,
                skipped_cycles: n.state.skipped_cycles,
                dropped_points: n.state.dropped_points,
                buffered_points: n.state.buffer.len(),
                connection_attempts: n.state.connection_attempts,
                sampling_interval_min: n.config.sampling_interval_min,
            });
        }
        self.trace.ledger = self.hydro.ledger.clone();
        self.trace.subscription_errors = self.engine.errors();
        RunOutput { scenario: self.scenario, seed: self.seed, start: self.start, end: self.end, store: self.store, trace: self.trace }
    }
}
