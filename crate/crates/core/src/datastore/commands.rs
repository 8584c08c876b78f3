use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum CommandKind {
    /// Target opening fraction.
    SetValve(f64),
    /// Minutes between wake cycles.
    SetSamplingInterval(f64),
    SetSensorEnabled { sensor: String, enabled: bool },
}

/// Commands in the same slot supersede each other; only the newest matters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CommandSlot {
    Valve,
    SamplingInterval,
    Sensor(String),
}

impl CommandKind {
    pub fn slot(&self) -> CommandSlot {
        match self {
            CommandKind::SetValve(_) => CommandSlot::Valve,
            CommandKind::SetSamplingInterval(_) => CommandSlot::SamplingInterval,
            CommandKind::SetSensorEnabled { sensor, .. } => CommandSlot::Sensor(sensor.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandState {
    Pending,
    Delivered,
    Acked,
    Rejected,
}

impl CommandState {
    pub fn is_final(self) -> bool {
        matches!(self, CommandState::Acked | CommandState::Rejected)
    }
}

/// What the node reports back for a delivered command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AckOutcome {
    Applied,
    /// Applied after clamping an out-of-range value.
    Clamped,
    /// A newer command for the same slot arrived in the same batch.
    Superseded,
    /// Already applied under this sequence number.
    Duplicate,
    Rejected { reason: String },
}

impl AckOutcome {
    pub fn final_state(&self) -> CommandState {
        match self {
            AckOutcome::Rejected { .. } => CommandState::Rejected,
            _ => CommandState::Acked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub id: u64,
    pub node_id: String,
    #[serde(flatten)]
    pub kind: CommandKind,
    pub issued_at: Timestamp,
    pub state: CommandState,
    pub delivered_at: Option<Timestamp>,
    pub deliveries: u32,
    pub outcome: Option<AckOutcome>,
}

impl Command {
    pub fn view(&self) -> CommandView {
        CommandView { id: self.id, kind: self.kind.clone(), issued_at: self.issued_at }
    }
}

/// The part of a command a node sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandView {
    pub id: u64,
    #[serde(flatten)]
    pub kind: CommandKind,
    pub issued_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CommandOp {
    Enqueued { id: u64, #[serde(flatten)] kind: CommandKind },
    Delivered { ids: Vec<u64> },
    Acked { id: u64, outcome: AckOutcome, state: CommandState, transitioned: bool },
}

/// One applied queue operation, in the order the store serialized them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEvent {
    pub seq: u64,
    pub at: Timestamp,
    pub node_id: String,
    #[serde(flatten)]
    pub op: CommandOp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("node {node} has no command {id}")]
    UnknownCommand { node: String, id: u64 },
    #[error("command {id} on node {node} has not been delivered")]
    NotDelivered { node: String, id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckResult {
    pub state: CommandState,
    /// False when the command had already reached a final state.
    pub transitioned: bool,
}

#[derive(Debug, Clone, Default)]
struct NodeQueue {
    last_id: u64,
    commands: BTreeMap<u64, Command>,
    redelivery_timeout_ms: Option<i64>,
}

#[derive(Debug, Clone)]
pub(crate) struct CommandBook {
    queues: BTreeMap<String, NodeQueue>,
    journal: Vec<CommandEvent>,
    default_timeout_ms: i64,
}

impl CommandBook {
    pub(crate) fn new(default_timeout_ms: i64) -> Self {
        CommandBook { queues: BTreeMap::new(), journal: Vec::new(), default_timeout_ms }
    }

    fn record(&mut self, at: Timestamp, node_id: &str, op: CommandOp) -> CommandEvent {
        let event = CommandEvent { seq: self.journal.len() as u64 + 1, at, node_id: node_id.to_owned(), op };
        self.journal.push(event.clone());
        event
    }

    pub(crate) fn set_redelivery_timeout(&mut self, node: &str, timeout_ms: i64) {
        self.queues.entry(node.to_owned()).or_default().redelivery_timeout_ms = Some(timeout_ms);
    }

    pub(crate) fn enqueue(&mut self, node: &str, kind: CommandKind, issued_at: Timestamp) -> (u64, CommandEvent) {
        let q = self.queues.entry(node.to_owned()).or_default();
        q.last_id += 1;
        let id = q.last_id;
        q.commands.insert(
            id,
            Command {
                id,
                node_id: node.to_owned(),
                kind: kind.clone(),
                issued_at,
                state: CommandState::Pending,
                delivered_at: None,
                deliveries: 0,
                outcome: None,
            },
        );
        let event = self.record(issued_at, node, CommandOp::Enqueued { id, kind });
        (id, event)
    }

    /// Pending commands plus delivered ones whose redelivery timeout elapsed,
    /// in id order; all returned commands are marked delivered at `now`.
    pub(crate) fn fetch_pending(&mut self, node: &str, now: Timestamp) -> (Vec<Command>, Option<CommandEvent>) {
        let default_timeout = self.default_timeout_ms;
        let Some(q) = self.queues.get_mut(node) else {
            return (Vec::new(), None);
        };
        let timeout = q.redelivery_timeout_ms.unwrap_or(default_timeout);
        let mut out = Vec::new();
        for c in q.commands.values_mut() {
            let due = match c.state {
                CommandState::Pending => true,
                CommandState::Delivered => c.delivered_at.is_some_and(|t| now - t >= timeout),
                _ => false,
            };
            if due {
                c.state = CommandState::Delivered;
                c.delivered_at = Some(now);
                c.deliveries += 1;
                out.push(c.clone());
            }
        }
        if out.is_empty() {
            return (out, None);
        }
        let ids = out.iter().map(|c| c.id).collect();
        let event = self.record(now, node, CommandOp::Delivered { ids });
        (out, Some(event))
    }

    pub(crate) fn ack(
        &mut self,
        node: &str,
        id: u64,
        outcome: AckOutcome,
        now: Timestamp,
    ) -> Result<(AckResult, Option<CommandEvent>), CommandError> {
        let cmd = self
            .queues
            .get_mut(node)
            .and_then(|q| q.commands.get_mut(&id))
            .ok_or_else(|| CommandError::UnknownCommand { node: node.to_owned(), id })?;
        match cmd.state {
            CommandState::Pending => Err(CommandError::NotDelivered { node: node.to_owned(), id }),
            s if s.is_final() => Ok((AckResult { state: s, transitioned: false }, None)),
            _ => {
                let state = outcome.final_state();
                cmd.state = state;
                cmd.outcome = Some(outcome.clone());
                let event = self.record(now, node, CommandOp::Acked { id, outcome, state, transitioned: true });
                Ok((AckResult { state, transitioned: true }, Some(event)))
            }
        }
    }

    pub(crate) fn commands(&self, node: &str) -> Vec<Command> {
        self.queues.get(node).map(|q| q.commands.values().cloned().collect()).unwrap_or_default()
    }

    pub(crate) fn all_commands(&self) -> Vec<Command> {
        self.queues.values().flat_map(|q| q.commands.values().cloned()).collect()
    }

    pub(crate) fn journal(&self) -> &[CommandEvent] {
        &self.journal
    }
}
