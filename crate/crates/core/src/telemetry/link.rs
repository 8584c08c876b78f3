//! Simulated cellular link: fixed latency plus uniform jitter, Bernoulli loss
//! and scheduled outage windows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wire::WireMessage;
use crate::time::Timestamp;

/// `[start, end)`; applies to every node unless `nodes` narrows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default)]
    pub nodes: Option<Vec<String>>,
}

impl OutageWindow {
    pub fn covers(&self, node: &str, t: Timestamp) -> bool {
        (self.start..self.end).contains(&t)
            && self.nodes.as_ref().map_or(true, |ns| ns.iter().any(|n| n == node))
    }
}

fn default_signal() -> f64 {
    -75.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    #[serde(default)]
    pub base_latency_ms: u64,
    #[serde(default)]
    pub latency_jitter_ms: u64,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default)]
    pub outage_windows: Vec<OutageWindow>,
    /// Per-node received signal strength, dB.
    #[serde(default)]
    pub signal_db: BTreeMap<String, f64>,
    #[serde(default = "default_signal")]
    pub default_signal_db: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            base_latency_ms: 250,
            latency_jitter_ms: 250,
            loss_probability: 0.0,
            outage_windows: Vec::new(),
            signal_db: BTreeMap::new(),
            default_signal_db: default_signal(),
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(format!("loss probability must be in [0, 1), got {}", self.loss_probability));
        }
        if let Some(w) = self.outage_windows.iter().find(|w| w.start >= w.end) {
            return Err(format!("empty outage window [{}, {})", w.start, w.end));
        }
        Ok(())
    }

    pub fn signal_strength(&self, node: &str) -> f64 {
        self.signal_db.get(node).copied().unwrap_or(self.default_signal_db)
    }

    pub fn in_outage(&self, node: &str, t: Timestamp) -> bool {
        self.outage_windows.iter().any(|w| w.covers(node, t))
    }

    pub fn max_latency_ms(&self) -> u64 {
        self.base_latency_ms + self.latency_jitter_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Delivered { at: Timestamp },
    Dropped,
}

/// One transmission attempt, without ordering guarantees across calls.
///
/// The loss draw and the jitter draw are always both taken so the generator
/// advances identically whatever the outcome.
pub fn link_transmit<R: Rng>(msg: &WireMessage, link: &LinkModel, rng: &mut R, now: Timestamp) -> Delivery {
    let lost = rng.random::<f64>() < link.loss_probability;
    let jitter = if link.latency_jitter_ms > 0 { rng.random_range(0..=link.latency_jitter_ms) } else { 0 };
    if link.in_outage(&msg.node_id, now) || lost {
        Delivery::Dropped
    } else {
        Delivery::Delivered { at: now + (link.base_latency_ms + jitter) as Timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Stateful link: an independent random stream per node and FIFO delivery per
/// (node, direction).
#[derive(Debug, Clone)]
pub struct Link {
    model: LinkModel,
    seed: u64,
    streams: BTreeMap<String, ChaCha8Rng>,
    last_delivery: BTreeMap<(String, Direction), Timestamp>,
}

impl Link {
    pub fn new(model: LinkModel, seed: u64) -> Self {
        Link { model, seed, streams: BTreeMap::new(), last_delivery: BTreeMap::new() }
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    pub fn transmit(&mut self, msg: &WireMessage, now: Timestamp) -> Delivery {
        let direction = if msg.is_request() { Direction::Uplink } else { Direction::Downlink };
        let seed = self.seed;
        let rng = self.streams.entry(msg.node_id.clone()).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fnv1a(msg.node_id.as_bytes()));
            rng
        });
        match link_transmit(msg, &self.model, rng, now) {
            Delivery::Dropped => Delivery::Dropped,
            Delivery::Delivered { at } => {
                let last = self.last_delivery.entry((msg.node_id.clone(), direction)).or_insert(at);
                *last = (*last).max(at);
                Delivery::Delivered { at: *last }
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
