//! Time-series store and per-node command queue.
//!
//! All operations take `&self` and are linearizable: series live behind one
//! read-write lock, the command book and alert log behind mutexes. Listeners
//! are invoked while the corresponding lock is held, so they observe events in
//! storage order; they must not block.

mod commands;
mod point;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use commands::{
    AckOutcome, AckResult, Command, CommandError, CommandEvent, CommandKind, CommandOp, CommandSlot,
    CommandState, CommandView,
};
pub use point::{Point, SeriesKey};

use crate::subscription::Alert;
use crate::telemetry::{decode_points, encode_points};
use crate::time::{Timestamp, MS_PER_MINUTE};

use commands::CommandBook;

/// Redelivery timeout for nodes that never registered one.
pub const DEFAULT_REDELIVERY_TIMEOUT_MS: i64 = 30 * MS_PER_MINUTE;

#[derive(Debug, Clone, PartialEq)]
pub enum StoreEvent {
    Point(Point),
    Alert(Alert),
    Command(CommandEvent),
}

type Listener = Box<dyn Fn(&StoreEvent) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("invalid range: start {start} > end {end}")]
    InvalidRange { start: Timestamp, end: Timestamp },
    #[error(transparent)]
    Command(#[from] CommandError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WriteSummary {
    pub written: usize,
    /// Indices of points refused for non-finite values.
    pub rejected: Vec<usize>,
}

struct Inner {
    series: RwLock<BTreeMap<SeriesKey, BTreeMap<Timestamp, f64>>>,
    commands: Mutex<CommandBook>,
    alerts: Mutex<Vec<Alert>>,
    log: Mutex<Option<BufWriter<File>>>,
    listeners: RwLock<Vec<Listener>>,
    retention_ms: Option<i64>,
    clock: AtomicI64,
}

/// Cheap to clone; clones share the same storage.
#[derive(Clone)]
pub struct Datastore {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Datastore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Datastore")
            .field("series", &self.inner.series.read().len())
            .field("retention_ms", &self.inner.retention_ms)
            .finish()
    }
}

impl Default for Datastore {
    fn default() -> Self {
        Self::new()
    }
}

impl Datastore {
    pub fn new() -> Self {
        Self::with_retention(None)
    }

    /// Points older than `now - retention` are dropped as the clock advances.
    pub fn with_retention(retention_ms: Option<i64>) -> Self {
        Datastore {
            inner: Arc::new(Inner {
                series: RwLock::new(BTreeMap::new()),
                commands: Mutex::new(CommandBook::new(DEFAULT_REDELIVERY_TIMEOUT_MS)),
                alerts: Mutex::new(Vec::new()),
                log: Mutex::new(None),
                listeners: RwLock::new(Vec::new()),
                retention_ms,
                clock: AtomicI64::new(i64::MIN),
            }),
        }
    }

    /// Replays an existing point log (line grammar) and appends new writes to it.
    pub fn open_log(&self, path: &Path) -> io::Result<usize> {
        let mut replayed = 0;
        if path.exists() {
            let mut text = String::new();
            File::open(path)?.read_to_string(&mut text)?;
            let points = decode_points(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            replayed = self.apply_points(&points, false).written;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        *self.inner.log.lock() = Some(BufWriter::new(file));
        Ok(replayed)
    }

    pub fn add_listener(&self, listener: impl Fn(&StoreEvent) + Send + Sync + 'static) {
        self.inner.listeners.write().push(Box::new(listener));
    }

    fn emit(&self, event: StoreEvent) {
        for l in self.inner.listeners.read().iter() {
            l(&event);
        }
    }

    pub fn now(&self) -> Option<Timestamp> {
        match self.inner.clock.load(Ordering::SeqCst) {
            i64::MIN => None,
            t => Some(t),
        }
    }

    /// Moves the retention clock forward and prunes expired points.
    pub fn advance_clock(&self, now: Timestamp) {
        let prev = self.inner.clock.fetch_max(now, Ordering::SeqCst);
        if let (Some(window), true) = (self.inner.retention_ms, now > prev) {
            let cutoff = now - window;
            let mut series = self.inner.series.write();
            for points in series.values_mut() {
                *points = points.split_off(&cutoff);
            }
        }
    }

    fn retention_cutoff(&self) -> Option<Timestamp> {
        Some(self.now()? - self.inner.retention_ms?)
    }

    /// Stores points; a later write to the same (series, timestamp) wins.
    pub fn write_points(&self, points: &[Point]) -> WriteSummary {
        self.apply_points(points, true)
    }

    fn apply_points(&self, points: &[Point], log: bool) -> WriteSummary {
        let mut summary = WriteSummary::default();
        let cutoff = self.retention_cutoff();
        let mut series = self.inner.series.write();
        let mut accepted = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if !p.value.is_finite() {
                summary.rejected.push(i);
                continue;
            }
            summary.written += 1;
            if cutoff.is_some_and(|c| p.timestamp < c) {
                continue;
            }
            series.entry(p.series.clone()).or_default().insert(p.timestamp, p.value);
            accepted.push(p.clone());
        }
        if log {
            if let Some(w) = self.inner.log.lock().as_mut() {
                let written = w.write_all(encode_points(&accepted).as_bytes()).and_then(|_| w.flush());
                if let Err(e) = written {
                    log::error!("point log append failed: {e}");
                }
            }
        }
        for p in accepted {
            self.emit(StoreEvent::Point(p));
        }
        summary
    }

    /// Half-open `[start, end)`, ascending. Unknown series yield no points.
    pub fn query_range(&self, series: &SeriesKey, start: Timestamp, end: Timestamp) -> Result<Vec<Point>, StoreError> {
        if start > end {
            return Err(StoreError::InvalidRange { start, end });
        }
        let start = self.retention_cutoff().map_or(start, |c| start.max(c));
        if start >= end {
            return Ok(Vec::new());
        }
        let guard = self.inner.series.read();
        Ok(guard
            .get(series)
            .map(|pts| {
                pts.range(start..end)
                    .map(|(&t, &v)| Point { series: series.clone(), timestamp: t, value: v })
                    .collect()
            })
            .unwrap_or_default())
    }

    pub fn query_last(&self, series: &SeriesKey) -> Option<Point> {
        let cutoff = self.retention_cutoff();
        let guard = self.inner.series.read();
        let (&t, &v) = guard.get(series)?.iter().next_back()?;
        if cutoff.is_some_and(|c| t < c) {
            return None;
        }
        Some(Point { series: series.clone(), timestamp: t, value: v })
    }

    /// Most recent timestamp across every series of a node.
    pub fn last_seen(&self, node: &str) -> Option<Timestamp> {
        let guard = self.inner.series.read();
        guard
            .range(SeriesKey::new(node, "")..)
            .take_while(|(k, _)| k.node == node)
            .filter_map(|(_, pts)| pts.keys().next_back().copied())
            .max()
    }

    pub fn series_keys(&self) -> Vec<SeriesKey> {
        self.inner.series.read().keys().cloned().collect()
    }

    pub fn point_count(&self) -> usize {
        self.inner.series.read().values().map(BTreeMap::len).sum()
    }

    pub fn set_redelivery_timeout(&self, node: &str, timeout_ms: i64) {
        self.inner.commands.lock().set_redelivery_timeout(node, timeout_ms);
    }

    pub fn enqueue_command(&self, node: &str, kind: CommandKind, issued_at: Timestamp) -> u64 {
        let mut book = self.inner.commands.lock();
        let (id, event) = book.enqueue(node, kind, issued_at);
        self.emit(StoreEvent::Command(event));
        id
    }

    pub fn fetch_pending(&self, node: &str, now: Timestamp) -> Vec<Command> {
        let mut book = self.inner.commands.lock();
        let (commands, event) = book.fetch_pending(node, now);
        if let Some(e) = event {
            self.emit(StoreEvent::Command(e));
        }
        commands
    }

    pub fn ack(&self, node: &str, id: u64, outcome: AckOutcome, now: Timestamp) -> Result<AckResult, StoreError> {
        let mut book = self.inner.commands.lock();
        let (result, event) = book.ack(node, id, outcome, now)?;
        if let Some(e) = event {
            self.emit(StoreEvent::Command(e));
        }
        Ok(result)
    }

    pub fn commands(&self, node: &str) -> Vec<Command> {
        self.inner.commands.lock().commands(node)
    }

    pub fn all_commands(&self) -> Vec<Command> {
        self.inner.commands.lock().all_commands()
    }

    pub fn command_journal(&self) -> Vec<CommandEvent> {
        self.inner.commands.lock().journal().to_vec()
    }

    pub fn persist_alert(&self, alert: Alert) {
        let mut alerts = self.inner.alerts.lock();
        alerts.push(alert.clone());
        self.emit(StoreEvent::Alert(alert));
    }

    pub fn alerts_since(&self, since: Timestamp) -> Vec<Alert> {
        self.inner.alerts.lock().iter().filter(|a| a.fired_at >= since).cloned().collect()
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.inner.alerts.lock().clone()
    }

    /// Deterministic dump of every series, command and alert; equal snapshots
    /// mean equal stores.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (key, pts) in self.inner.series.read().iter() {
            let points: Vec<Point> =
                pts.iter().map(|(&t, &v)| Point { series: key.clone(), timestamp: t, value: v }).collect();
            out.push_str(&encode_points(&points));
        }
        for c in self.all_commands() {
            out.push_str(&serde_json::to_string(&c).unwrap_or_default());
            out.push('\n');
        }
        for a in self.alerts() {
            out.push_str(&serde_json::to_string(&a).unwrap_or_default());
            out.push('\n');
        }
        out
    }
}
