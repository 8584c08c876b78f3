use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hydro::{sediment_concentration, HydroState, Watershed};
use crate::ingest::{validate_against_reference, ReferenceGauge, ValidationMetrics};
use crate::subscription::Severity;
use crate::time::{ms_to_hours, Timestamp, MS_PER_HOUR};

use super::{Check, RunOutput};

/// Plant observables after every hydro step, one column per quantity.
#[derive(Debug, Clone, Default)]
pub struct PlantTrace {
    pub times: Vec<Timestamp>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl PlantTrace {
    pub fn new(ws: &Watershed) -> Self {
        let g = ws.graph();
        let mut names = Vec::new();
        for c in &g.catchments {
            names.push(format!("{}.rain_mm_h", c.id));
            names.push(format!("{}.flow_cms", c.id));
        }
        for s in &g.storages {
            for q in ["depth_m", "volume_l", "inflow_cms", "valve_cms", "overflow_cms", "opening"] {
                names.push(format!("{}.{q}", s.id));
            }
        }
        for r in &g.reaches {
            names.push(format!("{}.flow_cms", r.id));
        }
        for o in &g.outlets {
            names.push(format!("{}.flow_cms", o.id));
            names.push(format!("{}.sediment_mg_l", o.id));
        }
        let columns = vec![Vec::new(); names.len()];
        PlantTrace { times: Vec::new(), names, columns }
    }

    pub fn record(&mut self, ws: &Watershed, state: &HydroState) {
        let g = ws.graph();
        let f = &state.flows;
        let mut row = Vec::with_capacity(self.names.len());
        for i in 0..g.catchments.len() {
            row.push(state.rainfall_mm_h[i]);
            row.push(f.catchment_outflow[i]);
        }
        for i in 0..g.storages.len() {
            row.extend([
                state.storage_depth(ws, i),
                state.storage_volume_l[i],
                f.storage_inflow[i],
                f.storage_valve[i],
                f.storage_overflow[i],
                state.valves[i].opening,
            ]);
        }
        row.extend(f.reach_outflow.iter().copied());
        for &q in &f.outlet_inflow {
            row.push(q);
            row.push(sediment_concentration(&g.sediment, q));
        }
        self.times.push(state.time);
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.push(v);
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn series(&self, name: &str) -> Option<Vec<(Timestamp, f64)>> {
        self.column(name).map(|c| self.times.iter().copied().zip(c.iter().copied()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["timestamp".to_owned()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory csv");
        for (r, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.columns.iter().map(|c| c[r].to_string()));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// Trapezoidal integral of a flow series (m³/s) in liters.
pub fn trapezoid_l(series: &[(Timestamp, f64)]) -> f64 {
    series.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) as f64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequencing {
    pub pond_drop_h: f64,
    pub wetland_rise_h: f64,
    pub outlet_rise_h: f64,
    pub pond_to_wetland_h: f64,
    pub wetland_to_outlet_h: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub peak_outlet_flow_cms: f64,
    pub peak_outlet_time_h: f64,
    pub cumulative_outlet_volume_l: f64,
    pub peak_sediment_mg_l: f64,
    pub storm_start_h: Option<f64>,
    pub storm_end_h: Option<f64>,
    pub pond_peak_volume_l: Option<f64>,
    /// Hours from storm end until the pond is back within 5% of its
    /// pre-storm volume (measured against the peak excess).
    pub pond_retention_h: Option<f64>,
    /// True when the pond never got there before the run ended.
    pub pond_retention_censored: bool,
    pub pond_outflow_l: Option<f64>,
    pub wetland_peak_depth_m: Option<f64>,
    pub wetland_overflow_l: Option<f64>,
    pub sequencing: Option<Sequencing>,
    pub mass_imbalance_rel: f64,
    pub points_stored: usize,
    pub alerts: BTreeMap<String, usize>,
    /// Distinct nodes with at least one warning or critical alert.
    pub alerted_nodes: usize,
    pub commands: usize,
    pub nodes: BTreeMap<String, NodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub final_charge_mah: f64,
    pub final_voltage: f64,
    pub duty_cycle: f64,
    pub cycles: u64,
    pub sampling_interval_min: f64,
    pub dropped_points: u64,
    pub buffered_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub peak_reduction: f64,
    pub retention_increase_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub metric: String,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    #[serde(flatten)]
    pub run: RunMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncontrolled: Option<RunMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<ValidationMetrics>,
}

impl Metrics {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("metrics serialize")
    }

    /// Looks up a number by dotted path, e.g. `uncontrolled.peak_outlet_flow_cms`.
    pub fn lookup(&self, path: &str) -> Option<f64> {
        let root = self.to_json_value();
        let mut v = &root;
        for part in path.split('.') {
            v = v.get(part)?;
        }
        match v {
            serde_json::Value::Number(n) => n.as_f64(),
            serde_json::Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn check(&self, checks: &[Check]) -> Vec<CheckResult> {
        checks
            .iter()
            .map(|c| {
                let value = self.lookup(&c.metric);
                let pass = value.is_some_and(|v| c.min.map_or(true, |m| v >= m) && c.max.map_or(true, |m| v <= m));
                CheckResult { metric: c.metric.clone(), value, min: c.min, max: c.max, pass }
            })
            .collect()
    }
}

/// `(first time rain starts, time the last rain stops)` in hours.
fn storm_window(out: &RunOutput) -> (Option<f64>, Option<f64>) {
    let mut first: Option<f64> = None;
    let mut last: Option<f64> = None;
    for r in &out.scenario.rainfall {
        for (k, &(h, v)) in r.steps.iter().enumerate() {
            if v > 0.0 {
                first = Some(first.map_or(h, |f| f.min(h)));
                let stop = r.steps.get(k + 1).map_or(out.scenario.duration_hours, |s| s.0);
                last = Some(last.map_or(stop, |l| l.max(stop)));
            }
        }
    }
    (first, last)
}

fn argmax_last(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.map_or(true, |b| x >= v[b]) {
            best = Some(i);
        }
    }
    best
}

fn argmin_in(v: &[f64], range: std::ops::Range<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in range {
        if best.map_or(true, |b| v[i] < v[b]) {
            best = Some(i);
        }
    }
    best
}

fn outlet_column(out: &RunOutput, ws: &Watershed) -> Option<String> {
    let id = out.scenario.metrics.outlet.clone().or_else(|| ws.graph().outlets.first().map(|o| o.id.clone()))?;
    Some(format!("{id}.flow_cms"))
}

pub fn compute_metrics(out: &RunOutput) -> RunMetrics {
    let ws = Watershed::new(out.scenario.watershed.clone()).expect("validated watershed");
    let trace = &out.trace.plant;
    let hours = |t: Timestamp| ms_to_hours(t - out.start);
    let mut m = RunMetrics { mass_imbalance_rel: out.trace.max_mass_imbalance_rel, ..Default::default() };

    let outlet = outlet_column(out, &ws).and_then(|c| trace.series(&c)).unwrap_or_default();
    if let Some(i) = argmax_last(&outlet.iter().map(|p| p.1).collect::<Vec<_>>()) {
        m.peak_outlet_flow_cms = outlet[i].1;
        m.peak_outlet_time_h = hours(outlet[i].0);
    }
    m.cumulative_outlet_volume_l = trapezoid_l(&outlet);
    m.peak_sediment_mg_l = sediment_concentration(&ws.graph().sediment, m.peak_outlet_flow_cms);

    let (storm_start, storm_end) = storm_window(out);
    m.storm_start_h = storm_start;
    m.storm_end_h = storm_end;
    let index_at = |h: f64| trace.times.partition_point(|&t| t < out.start + (h * MS_PER_HOUR as f64).round() as Timestamp);

    if let Some(pond) = &out.scenario.metrics.pond {
        let i = ws.storage_index(pond).expect("validated pond");
        let vol = trace.column(&format!("{pond}.volume_l")).unwrap_or_default();
        m.pond_outflow_l = Some(out.trace.ledger.storages[i].out_l);
        m.pond_peak_volume_l = vol.iter().copied().reduce(f64::max);
        if let (Some(s0), Some(s1)) = (storm_start, storm_end) {
            let k0 = index_at(s0).min(vol.len().saturating_sub(1));
            let v_pre = vol.get(k0).copied().unwrap_or(0.0);
            let peak_k = argmax_last(&vol[k0..]).map(|k| k + k0);
            if let Some(pk) = peak_k {
                let v_peak = vol[pk];
                let k1 = index_at(s1).max(pk);
                let done = (k1..vol.len()).find(|&k| vol[k] - v_pre <= 0.05 * (v_peak - v_pre));
                match done {
                    Some(k) => m.pond_retention_h = Some((hours(trace.times[k]) - s1).max(0.0)),
                    None => {
                        m.pond_retention_h = Some(out.scenario.duration_hours - s1);
                        m.pond_retention_censored = true;
                    }
                }
            }
        }
    }

    if let Some(wet) = &out.scenario.metrics.wetland {
        let i = ws.storage_index(wet).expect("validated wetland");
        m.wetland_overflow_l = Some(out.trace.ledger.storage_overflow_l[i]);
        m.wetland_peak_depth_m = trace.column(&format!("{wet}.depth_m")).and_then(|d| d.iter().copied().reduce(f64::max));
    }

    m.sequencing = sequencing(out, &outlet);

    m.points_stored = out.store.point_count();
    for a in out.store.alerts() {
        let key = match a.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Critical => "critical",
        };
        *m.alerts.entry(key.to_owned()).or_default() += 1;
    }
    let alerted: std::collections::BTreeSet<String> = out
        .store
        .alerts()
        .iter()
        .filter(|a| a.severity >= Severity::Warning)
        .map(|a| a.node().to_owned())
        .collect();
    m.alerted_nodes = alerted.len();
    m.commands = out.store.all_commands().len();
    let duration_ms = (out.end - out.start).max(1) as f64;
    for n in &out.trace.nodes {
        m.nodes.insert(
            n.node.clone(),
            NodeMetrics {
                final_charge_mah: n.charge_mah,
                final_voltage: n.voltage,
                duty_cycle: n.awake_ms as f64 / duration_ms,
                cycles: n.cycles,
                sampling_interval_min: n.sampling_interval_min,
                dropped_points: n.dropped_points,
                buffered_points: n.buffered_points,
            },
        );
    }
    m
}

/// Release wave timing: the pond starts to fall at its last maximum, the
/// wetland turns upward at its following minimum, and the outlet turns
/// upward at the minimum after that. Each search looks eight hours ahead.
fn sequencing(out: &RunOutput, outlet: &[(Timestamp, f64)]) -> Option<Sequencing> {
    let trace = &out.trace.plant;
    let pond = trace.column(&format!("{}.depth_m", out.scenario.metrics.pond.as_ref()?))?;
    let wet = trace.column(&format!("{}.depth_m", out.scenario.metrics.wetland.as_ref()?))?;
    let q: Vec<f64> = outlet.iter().map(|p| p.1).collect();
    if q.len() != pond.len() || pond.is_empty() {
        return None;
    }
    let dt = (trace.times.get(1)? - trace.times[0]).max(1);
    let span = (8 * MS_PER_HOUR / dt) as usize;
    let drop = argmax_last(pond)?;
    if drop + 1 >= pond.len() {
        return None;
    }
    let rise_w = argmin_in(wet, drop..(drop + span).min(wet.len()))?;
    let rise_o = argmin_in(&q, rise_w..(rise_w + span).min(q.len()))?;
    let h = |k: usize| ms_to_hours(trace.times[k] - out.start);
    Some(Sequencing {
        pond_drop_h: h(drop),
        wetland_rise_h: h(rise_w),
        outlet_rise_h: h(rise_o),
        pond_to_wetland_h: h(rise_w) - h(drop),
        wetland_to_outlet_h: h(rise_o) - h(rise_w),
    })
}

pub fn compare(controlled: &RunMetrics, uncontrolled: &RunMetrics) -> Comparison {
    let peak_reduction = if uncontrolled.peak_outlet_flow_cms > 0.0 {
        1.0 - controlled.peak_outlet_flow_cms / uncontrolled.peak_outlet_flow_cms
    } else {
        0.0
    };
    let retention_increase_h = match (controlled.pond_retention_h, uncontrolled.pond_retention_h) {
        (Some(c), Some(u)) => Some(c - u),
        _ => None,
    };
    Comparison { peak_reduction, retention_increase_h }
}

/// Compares the simulated outlet flow with a reference gauge over the run.
pub fn validate_outlet(out: &RunOutput, reference: &ReferenceGauge) -> Option<ValidationMetrics> {
    let ws = Watershed::new(out.scenario.watershed.clone()).ok()?;
    let col = outlet_column(out, &ws)?;
    let sim = out.trace.plant.series(&col)?;
    validate_against_reference(&sim, &reference.series, (out.start, out.end)).ok()
}

/// Outlet flow sampled at a fixed period, for the gauge CSV.
pub fn outlet_gauge(out: &RunOutput, period_ms: i64) -> Vec<(Timestamp, f64)> {
    let Ok(ws) = Watershed::new(out.scenario.watershed.clone()) else {
        return Vec::new();
    };
    let Some(series) = outlet_column(out, &ws).and_then(|c| out.trace.plant.series(&c)) else {
        return Vec::new();
    };
    series.into_iter().filter(|(t, _)| (t - out.start) % period_ms == 0).collect()
}
