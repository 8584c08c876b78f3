//! Server-side request handling shared by the simulated link and the HTTP
//! service: authentication, line decoding, command queue access and the node
//! registry.
//!
//! Nothing here touches node state. Configuration and valve requests become
//! queued commands that the node picks up on its next wake.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::datastore::{AckOutcome, AckResult, Command, CommandKind, CommandView, Datastore, Point, SeriesKey, StoreError};
use crate::node::{NodeConfig, BATTERY_SENSOR, SIGNAL_SENSOR};
use crate::subscription::{Alert, Severity};
use crate::telemetry::{decode_points, CredentialStore, Credentials, WireBody, WireMessage};
use crate::time::{Timestamp, MS_PER_HOUR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("unauthorized")]
    Unauthorized,
    #[error("bad request: {message}")]
    BadRequest { line: Option<usize>, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unprocessable: {0}")]
    Unprocessable(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Unauthorized => 401,
            ApiError::BadRequest { .. } => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Unprocessable(_) => 422,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidRange { .. } => ApiError::BadRequest { line: None, message: e.to_string() },
            StoreError::Command(c) => ApiError::NotFound(c.to_string()),
        }
    }
}

/// Static facts about a node, known from the scenario or deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub node_id: String,
    pub description: String,
    pub location: Option<(f64, f64)>,
    pub interval_bounds: (f64, f64),
    pub has_valve: bool,
    pub sensors: Vec<String>,
}

impl From<&NodeConfig> for NodeRecord {
    fn from(c: &NodeConfig) -> Self {
        NodeRecord {
            node_id: c.node_id.clone(),
            description: c.description.clone(),
            location: c.location,
            interval_bounds: c.bounds(),
            has_valve: c.valve.is_some(),
            sensors: c.sensors.iter().map(|s| s.id.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Healthy,
    Warning,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRegistryEntry {
    pub node_id: String,
    pub description: String,
    pub location: Option<(f64, f64)>,
    pub last_seen: Option<Timestamp>,
    pub battery_v: Option<f64>,
    pub signal_db: Option<f64>,
    pub status: NodeStatus,
}

/// Body of `POST /nodes/{id}/config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigRequest {
    #[serde(default)]
    pub sampling_interval_min: Option<f64>,
    #[serde(default)]
    pub sensor: Option<String>,
    #[serde(default)]
    pub enabled: Option<bool>,
}

/// How long an alert keeps a node out of the healthy state.
const STATUS_WINDOW_MS: i64 = MS_PER_HOUR;

struct Inner {
    credentials: RwLock<CredentialStore>,
    registry: RwLock<BTreeMap<String, NodeRecord>>,
}

#[derive(Clone)]
pub struct Gateway {
    store: Datastore,
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("nodes", &self.inner.registry.read().len()).finish()
    }
}

impl Gateway {
    pub fn new(store: Datastore) -> Self {
        Gateway {
            store,
            inner: Arc::new(Inner {
                credentials: RwLock::new(CredentialStore::new()),
                registry: RwLock::new(BTreeMap::new()),
            }),
        }
    }

    pub fn store(&self) -> &Datastore {
        &self.store
    }

    pub fn add_user(&self, credentials: &Credentials) {
        self.inner.credentials.write().insert(credentials);
    }

    /// Registers a node and its credentials.
    pub fn register_node(&self, config: &NodeConfig) {
        self.add_user(&config.credentials());
        self.inner.registry.write().insert(config.node_id.clone(), NodeRecord::from(config));
    }

    pub fn authenticate(&self, credentials: Option<&Credentials>) -> Result<(), ApiError> {
        self.inner.credentials.read().authenticate(credentials).map_err(|_| ApiError::Unauthorized)
    }

    fn record(&self, node: &str) -> Result<NodeRecord, ApiError> {
        self.inner.registry.read().get(node).cloned().ok_or_else(|| ApiError::NotFound(format!("node {node}")))
    }

    /// Authenticates and decodes a write without storing anything.
    pub fn prepare_write(&self, credentials: Option<&Credentials>, body: &str) -> Result<Vec<Point>, ApiError> {
        self.authenticate(credentials)?;
        decode_points(body).map_err(|e| ApiError::BadRequest { line: Some(e.line), message: e.reason })
    }

    pub fn commit_write(&self, points: &[Point]) -> usize {
        self.store.write_points(points).written
    }

    /// All-or-nothing: a malformed line rejects the whole batch.
    pub fn write(&self, credentials: Option<&Credentials>, body: &str) -> Result<usize, ApiError> {
        let points = self.prepare_write(credentials, body)?;
        Ok(self.commit_write(&points))
    }

    /// Pending commands for a node, marked delivered.
    pub fn fetch_commands(&self, credentials: Option<&Credentials>, node: &str, now: Timestamp) -> Result<Vec<CommandView>, ApiError> {
        self.authenticate(credentials)?;
        self.record(node)?;
        Ok(self.store.fetch_pending(node, now).iter().map(Command::view).collect())
    }

    /// Every command of a node with its state, without delivering anything.
    pub fn list_commands(&self, credentials: Option<&Credentials>, node: &str) -> Result<Vec<Command>, ApiError> {
        self.authenticate(credentials)?;
        self.record(node)?;
        Ok(self.store.commands(node))
    }

    pub fn ack(
        &self,
        credentials: Option<&Credentials>,
        node: &str,
        id: u64,
        outcome: AckOutcome,
        now: Timestamp,
    ) -> Result<AckResult, ApiError> {
        self.authenticate(credentials)?;
        Ok(self.store.ack(node, id, outcome, now)?)
    }

    pub fn query(
        &self,
        credentials: Option<&Credentials>,
        series: &SeriesKey,
        start: Timestamp,
        end: Timestamp,
    ) -> Result<Vec<Point>, ApiError> {
        self.authenticate(credentials)?;
        Ok(self.store.query_range(series, start, end)?)
    }

    pub fn set_valve(&self, credentials: Option<&Credentials>, node: &str, opening: f64, now: Timestamp) -> Result<u64, ApiError> {
        self.authenticate(credentials)?;
        let rec = self.record(node)?;
        if !rec.has_valve {
            return Err(ApiError::Unprocessable(format!("node {node} has no valve")));
        }
        if !(0.0..=1.0).contains(&opening) {
            return Err(ApiError::Unprocessable(format!("opening {opening} outside [0, 1]")));
        }
        Ok(self.store.enqueue_command(node, CommandKind::SetValve(opening), now))
    }

    /// Enqueues one command per field present in the request.
    pub fn set_config(
        &self,
        credentials: Option<&Credentials>,
        node: &str,
        request: &ConfigRequest,
        now: Timestamp,
    ) -> Result<Vec<u64>, ApiError> {
        self.authenticate(credentials)?;
        let rec = self.record(node)?;
        let mut kinds = Vec::new();
        if let Some(m) = request.sampling_interval_min {
            let (lo, hi) = rec.interval_bounds;
            if !(lo..=hi).contains(&m) {
                return Err(ApiError::Unprocessable(format!("interval {m} min outside [{lo}, {hi}]")));
            }
            kinds.push(CommandKind::SetSamplingInterval(m));
        }
        match (&request.sensor, request.enabled) {
            (Some(sensor), Some(enabled)) => {
                if !rec.sensors.contains(sensor) {
                    return Err(ApiError::Unprocessable(format!("node {node} has no sensor {sensor}")));
                }
                kinds.push(CommandKind::SetSensorEnabled { sensor: sensor.clone(), enabled });
            }
            (None, None) => {}
            _ => return Err(ApiError::Unprocessable("sensor and enabled go together".into())),
        }
        if kinds.is_empty() {
            return Err(ApiError::Unprocessable("empty config request".into()));
        }
        Ok(kinds.into_iter().map(|k| self.store.enqueue_command(node, k, now)).collect())
    }

    pub fn alerts_since(&self, credentials: Option<&Credentials>, since: Timestamp) -> Result<Vec<Alert>, ApiError> {
        self.authenticate(credentials)?;
        Ok(self.store.alerts_since(since))
    }

    pub fn nodes(&self, credentials: Option<&Credentials>, now: Timestamp) -> Result<Vec<NodeRegistryEntry>, ApiError> {
        self.authenticate(credentials)?;
        Ok(self.registry(now))
    }

    /// Registry with status derived from recent alerts: a critical alert newer
    /// than the node's last data means offline, any warning or critical alert
    /// in the last hour means warning.
    pub fn registry(&self, now: Timestamp) -> Vec<NodeRegistryEntry> {
        let alerts = self.store.alerts_since(now - STATUS_WINDOW_MS);
        let records: Vec<NodeRecord> = self.inner.registry.read().values().cloned().collect();
        records
            .into_iter()
            .map(|r| {
                let last_seen = self.store.last_seen(&r.node_id);
                let latest = |sensor: &str| self.store.query_last(&SeriesKey::new(&r.node_id, sensor)).map(|p| p.value);
                let mine: Vec<&Alert> = alerts.iter().filter(|a| a.node() == r.node_id).collect();
                let status = if mine
                    .iter()
                    .any(|a| a.severity == Severity::Critical && last_seen.map_or(true, |t| a.fired_at >= t))
                {
                    NodeStatus::Offline
                } else if mine.iter().any(|a| a.severity >= Severity::Warning) {
                    NodeStatus::Warning
                } else {
                    NodeStatus::Healthy
                };
                NodeRegistryEntry {
                    battery_v: latest(BATTERY_SENSOR),
                    signal_db: latest(SIGNAL_SENSOR),
                    node_id: r.node_id,
                    description: r.description,
                    location: r.location,
                    last_seen,
                    status,
                }
            })
            .collect()
    }

    /// Handles one wire request completely (writes are stored immediately).
    pub fn handle(&self, msg: &WireMessage, now: Timestamp) -> WireMessage {
        let body = match self.handle_body(msg, now) {
            Ok(b) => b,
            Err(e) => error_body(e),
        };
        WireMessage::response(&msg.node_id, body)
    }

    fn handle_body(&self, msg: &WireMessage, now: Timestamp) -> Result<WireBody, ApiError> {
        let auth = msg.auth.as_ref();
        match &msg.body {
            WireBody::WritePoints { payload } => Ok(WireBody::WriteAck { written: self.write(auth, payload)? }),
            WireBody::FetchCommands => Ok(WireBody::CommandList { commands: self.fetch_commands(auth, &msg.node_id, now)? }),
            WireBody::AckCommand { command_id, outcome } => {
                let r = self.ack(auth, &msg.node_id, *command_id, outcome.clone(), now)?;
                Ok(WireBody::AckResult { command_id: *command_id, state: r.state })
            }
            _ => Err(ApiError::BadRequest { line: None, message: "not a request".into() }),
        }
    }
}

pub fn error_body(e: ApiError) -> WireBody {
    match e {
        ApiError::Unauthorized => WireBody::AuthError,
        ApiError::BadRequest { line, message } => WireBody::BadRequest { line, message },
        other => WireBody::BadRequest { line: None, message: other.to_string() },
    }
}
