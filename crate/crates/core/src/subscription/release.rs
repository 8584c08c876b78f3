use serde::{Deserialize, Serialize};

use crate::datastore::{Datastore, SeriesKey, StoreError};
use crate::time::{hours_to_ms, minutes_to_ms, Timestamp};

fn default_schedule() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}
fn default_recession_window() -> f64 {
    120.0
}
fn default_recession_drop() -> f64 {
    0.01
}

/// Hold-then-release rule for an upstream basin draining into a downstream
/// basin that must not overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseConfig {
    /// Node that operates the upstream valve.
    pub valve_node: String,
    pub pond_depth: SeriesKey,
    pub wetland_depth: SeriesKey,
    pub safe_release_depth_m: f64,
    #[serde(default)]
    pub hysteresis_m: f64,
    /// `(hours since release began, opening)` steps.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<(f64, f64)>,
    /// Wetland data older than this forces a hold. Defaults to three sampling
    /// intervals of the wetland node.
    #[serde(default)]
    pub staleness_min: Option<f64>,
    /// Only start releasing once the wetland level is falling.
    #[serde(default)]
    pub require_recession: bool,
    #[serde(default = "default_recession_window")]
    pub recession_window_min: f64,
    /// Drop below the window maximum that counts as falling, m.
    #[serde(default = "default_recession_drop")]
    pub recession_drop_m: f64,
    /// Nothing to release below this pond depth.
    #[serde(default)]
    pub min_pond_depth_m: f64,
}

impl ReleaseConfig {
    pub fn opening_at(&self, since_release_ms: i64) -> f64 {
        self.schedule
            .iter()
            .take_while(|(h, _)| hours_to_ms(*h) <= since_release_ms)
            .last()
            .map_or(0.0, |&(_, o)| o)
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReleasePhase {
    #[default]
    Holding,
    Releasing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReleaseState {
    pub phase: ReleasePhase,
    pub release_started: Option<Timestamp>,
    pub last_command: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseDecision {
    pub command: Option<f64>,
    /// Set when the wetland feed went stale.
    pub stale: bool,
}

pub fn setpoint_release(
    config: &ReleaseConfig,
    state: &mut ReleaseState,
    store: &Datastore,
    now: Timestamp,
    staleness_ms: i64,
) -> Result<ReleaseDecision, StoreError> {
    let wetland = store.query_last(&config.wetland_depth);
    let pond = store.query_last(&config.pond_depth);
    let fresh = |t: Timestamp| now - t <= staleness_ms;

    let stale = !matches!((&wetland, &pond), (Some(w), Some(p)) if fresh(w.timestamp) && fresh(p.timestamp));
    if stale {
        state.phase = ReleasePhase::Holding;
        state.release_started = None;
    } else {
        let wetland_depth = wetland.as_ref().map_or(f64::INFINITY, |p| p.value);
        let pond_depth = pond.as_ref().map_or(0.0, |p| p.value);
        match state.phase {
            ReleasePhase::Holding => {
                let low_enough = wetland_depth <= config.safe_release_depth_m - config.hysteresis_m;
                let receding = !config.require_recession || {
                    let window =
                        store.query_range(&config.wetland_depth, now - minutes_to_ms(config.recession_window_min), now + 1)?;
                    let peak = window.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
                    peak - wetland_depth >= config.recession_drop_m
                };
                if low_enough && receding && pond_depth >= config.min_pond_depth_m {
                    state.phase = ReleasePhase::Releasing;
                    state.release_started = Some(now);
                }
            }
            ReleasePhase::Releasing => {
                if wetland_depth > config.safe_release_depth_m {
                    state.phase = ReleasePhase::Holding;
                    state.release_started = None;
                }
            }
        }
    }

    let target = match (state.phase, state.release_started) {
        (ReleasePhase::Releasing, Some(start)) => config.opening_at(now - start),
        _ => 0.0,
    };
    let command = match state.last_command {
        Some(prev) if (prev - target).abs() < 1e-9 => None,
        _ => {
            state.last_command = Some(target);
            Some(target)
        }
    };
    Ok(ReleaseDecision { command, stale })
}
