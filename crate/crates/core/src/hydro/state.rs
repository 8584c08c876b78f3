use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::graph::{ElementRef, Watershed};
use super::sediment::sediment_concentration;
use super::valve::{valve_discharge, weir_discharge};
use super::HydroError;
use crate::time::{minutes_to_ms, Timestamp};

/// 1 mm/h over 1 km² for one hour, in liters.
const LITERS_PER_MM_KM2: f64 = 1.0e6;
const LITERS_PER_M3: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveState {
    pub opening: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachState {
    /// Volumes in transit, one slot per step of pure delay, oldest first.
    pub delay_line: VecDeque<f64>,
    pub storage_l: f64,
}

impl ReachState {
    pub fn total_l(&self) -> f64 {
        self.delay_line.iter().sum::<f64>() + self.storage_l
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementFlux {
    pub in_l: f64,
    pub out_l: f64,
}

/// Cumulative volumes crossing the system boundary and each element.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxLedger {
    /// Effective rainfall (after the runoff coefficient) entering catchments.
    pub runoff_in_l: f64,
    /// Everything delivered to outlets.
    pub outlet_out_l: f64,
    pub initial_storage_l: f64,
    pub catchments: Vec<ElementFlux>,
    pub storages: Vec<ElementFlux>,
    /// Overflow portion of each storage's outflow.
    pub storage_overflow_l: Vec<f64>,
    pub reaches: Vec<ElementFlux>,
    pub outlets: Vec<f64>,
}

/// Per-element flows averaged over the last step, m³/s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepFlows {
    pub catchment_outflow: Vec<f64>,
    pub storage_inflow: Vec<f64>,
    pub storage_valve: Vec<f64>,
    pub storage_overflow: Vec<f64>,
    pub reach_outflow: Vec<f64>,
    pub outlet_inflow: Vec<f64>,
}

impl StepFlows {
    fn zeros(ws: &Watershed) -> Self {
        let g = ws.graph();
        StepFlows {
            catchment_outflow: vec![0.0; g.catchments.len()],
            storage_inflow: vec![0.0; g.storages.len()],
            storage_valve: vec![0.0; g.storages.len()],
            storage_overflow: vec![0.0; g.storages.len()],
            reach_outflow: vec![0.0; g.reaches.len()],
            outlet_inflow: vec![0.0; g.outlets.len()],
        }
    }

    pub fn storage_outflow(&self, i: usize) -> f64 {
        self.storage_valve[i] + self.storage_overflow[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroState {
    pub time: Timestamp,
    pub catchment_storage_l: Vec<f64>,
    pub storage_volume_l: Vec<f64>,
    pub valves: Vec<ValveState>,
    pub reaches: Vec<ReachState>,
    pub rainfall_mm_h: Vec<f64>,
    pub flows: StepFlows,
    pub ledger: FluxLedger,
}

impl HydroState {
    pub fn initial(ws: &Watershed, time: Timestamp) -> Self {
        let g = ws.graph();
        let storage_volume_l: Vec<f64> = g.storages.iter().map(|s| s.initial_volume_l).collect();
        let ledger = FluxLedger {
            initial_storage_l: storage_volume_l.iter().sum(),
            catchments: vec![ElementFlux::default(); g.catchments.len()],
            storages: vec![ElementFlux::default(); g.storages.len()],
            storage_overflow_l: vec![0.0; g.storages.len()],
            reaches: vec![ElementFlux::default(); g.reaches.len()],
            outlets: vec![0.0; g.outlets.len()],
            ..Default::default()
        };
        HydroState {
            time,
            catchment_storage_l: vec![0.0; g.catchments.len()],
            storage_volume_l,
            valves: g
                .storages
                .iter()
                .map(|s| ValveState { opening: s.outlet.opening, target: s.outlet.opening })
                .collect(),
            reaches: vec![ReachState::default(); g.reaches.len()],
            rainfall_mm_h: vec![0.0; g.catchments.len()],
            flows: StepFlows::zeros(ws),
            ledger,
        }
    }

    pub fn total_storage_l(&self) -> f64 {
        self.catchment_storage_l.iter().sum::<f64>()
            + self.storage_volume_l.iter().sum::<f64>()
            + self.reaches.iter().map(ReachState::total_l).sum::<f64>()
    }

    /// `in - out - Δstorage`; zero up to rounding for a conserving run.
    pub fn mass_imbalance_l(&self) -> f64 {
        self.ledger.runoff_in_l
            - self.ledger.outlet_out_l
            - (self.total_storage_l() - self.ledger.initial_storage_l)
    }

    /// Commands a valve; the opening follows at the valve's travel rate.
    pub fn set_valve_target(&mut self, ws: &Watershed, storage: &str, target: f64) -> Result<(), HydroError> {
        let i = ws.storage_index(storage)?;
        if !target.is_finite() {
            return Err(HydroError::Domain(format!("valve target must be finite, got {target}")));
        }
        self.valves[i].target = target.clamp(0.0, 1.0);
        Ok(())
    }

    pub fn storage_depth(&self, ws: &Watershed, i: usize) -> f64 {
        ws.graph().storages[i].stage_storage.depth_at(self.storage_volume_l[i])
    }
}

/// Volume routed into each element during the current step, liters.
struct Inbox {
    storage: Vec<f64>,
    reach: Vec<f64>,
    outlet: Vec<f64>,
}

impl Inbox {
    fn route(&mut self, target: ElementRef, liters: f64) {
        match target {
            ElementRef::Storage(j) => self.storage[j] += liters,
            ElementRef::Reach(j) => self.reach[j] += liters,
            ElementRef::Outlet(j) => self.outlet[j] += liters,
            ElementRef::Catchment(_) => unreachable!("validated graph"),
        }
    }
}

/// Advances the plant by `dt_min` minutes of rainfall held constant over the step.
pub fn step_watershed(
    ws: &Watershed,
    state: &HydroState,
    rainfall_mm_h: &BTreeMap<String, f64>,
    dt_min: f64,
) -> Result<(HydroState, StepFlows), HydroError> {
    if !(dt_min > 0.0) || !dt_min.is_finite() {
        return Err(HydroError::Domain(format!("dt must be > 0, got {dt_min}")));
    }
    let g = ws.graph();
    let mut next = state.clone();
    next.rainfall_mm_h.iter_mut().for_each(|r| *r = 0.0);
    for (id, &intensity) in rainfall_mm_h {
        match ws.lookup(id) {
            Some(ElementRef::Catchment(i)) => {
                if !(intensity >= 0.0) || !intensity.is_finite() {
                    return Err(HydroError::Domain(format!("rainfall on {id} must be >= 0, got {intensity}")));
                }
                next.rainfall_mm_h[i] = intensity;
            }
            _ => return Err(HydroError::Config(format!("rainfall for unknown catchment {id:?}"))),
        }
    }

    let dt_h = dt_min / 60.0;
    let dt_s = dt_min * 60.0;
    let to_cms = |liters: f64| liters / LITERS_PER_M3 / dt_s;
    let mut flows = StepFlows::zeros(ws);
    let mut inbox = Inbox {
        storage: vec![0.0; g.storages.len()],
        reach: vec![0.0; g.reaches.len()],
        outlet: vec![0.0; g.outlets.len()],
    };

    for (i, c) in g.catchments.iter().enumerate() {
        let inflow = c.runoff_coefficient * next.rainfall_mm_h[i] * c.area_km2 * LITERS_PER_MM_KM2 * dt_h;
        let stored = next.catchment_storage_l[i];
        let out = (stored * dt_h / c.reservoir_k_hours).min(stored + inflow);
        next.catchment_storage_l[i] = (stored + inflow - out).max(0.0);
        next.ledger.runoff_in_l += inflow;
        next.ledger.catchments[i].in_l += inflow;
        next.ledger.catchments[i].out_l += out;
        flows.catchment_outflow[i] = to_cms(out);
        inbox.route(ws.catchment_target(i), out);
    }

    for &element in ws.routing_order() {
        match element {
            ElementRef::Storage(i) => {
                let s = &g.storages[i];
                let valve = &mut next.valves[i];
                let max_move = s.outlet.travel_rate_per_min * dt_min;
                valve.opening += (valve.target - valve.opening).clamp(-max_move, max_move);
                valve.opening = valve.opening.clamp(0.0, 1.0);

                let volume = next.storage_volume_l[i];
                let depth = s.stage_storage.depth_at(volume);
                let valve_q = valve_discharge(valve.opening, depth, s.outlet.diameter_m, s.outlet.discharge_coefficient)?
                    * f64::from(s.outlet.count);
                let weir_q = s
                    .overflow
                    .as_ref()
                    .map_or(0.0, |w| weir_discharge(depth, w.crest_depth_m, w.coefficient, w.length_m));
                let inflow = inbox.storage[i];
                let mut valve_l = valve_q * dt_s * LITERS_PER_M3;
                let mut weir_l = weir_q * dt_s * LITERS_PER_M3;
                let available = volume + inflow;
                if valve_l + weir_l > available {
                    let scale = available / (valve_l + weir_l);
                    valve_l *= scale;
                    weir_l *= scale;
                }
                let out = valve_l + weir_l;
                next.storage_volume_l[i] = (available - out).max(0.0);
                next.ledger.storages[i].in_l += inflow;
                next.ledger.storages[i].out_l += out;
                next.ledger.storage_overflow_l[i] += weir_l;
                flows.storage_inflow[i] = to_cms(inflow);
                flows.storage_valve[i] = to_cms(valve_l);
                flows.storage_overflow[i] = to_cms(weir_l);
                inbox.route(ws.storage_target(i), out);
            }
            ElementRef::Reach(i) => {
                let r = &g.reaches[i];
                let slots = (r.pure_delay_min / dt_min).round() as usize;
                let inflow = inbox.reach[i];
                let rs = &mut next.reaches[i];
                rs.delay_line.push_back(inflow);
                let mut arrived = 0.0;
                while rs.delay_line.len() > slots {
                    arrived += rs.delay_line.pop_front().unwrap_or(0.0);
                }
                let out = (rs.storage_l * dt_h / r.attenuation_k_hours).min(rs.storage_l + arrived);
                rs.storage_l = (rs.storage_l + arrived - out).max(0.0);
                next.ledger.reaches[i].in_l += inflow;
                next.ledger.reaches[i].out_l += out;
                flows.reach_outflow[i] = to_cms(out);
                inbox.route(ws.reach_target(i), out);
            }
            _ => unreachable!("routing order holds storages and reaches"),
        }
    }

    for (j, &liters) in inbox.outlet.iter().enumerate() {
        next.ledger.outlets[j] += liters;
        next.ledger.outlet_out_l += liters;
        flows.outlet_inflow[j] = to_cms(liters);
    }

    next.time = state.time + minutes_to_ms(dt_min);
    next.flows = flows.clone();
    Ok((next, flows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Depth,
    Flow,
    Rainfall,
    Concentration,
}

/// What a virtual sensor measures: one quantity at one element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binding {
    pub element: String,
    pub quantity: Quantity,
}

impl Binding {
    pub fn new(element: &str, quantity: Quantity) -> Self {
        Binding { element: element.to_owned(), quantity }
    }
}

/// Reads one observable from the plant without changing it.
pub fn observe(ws: &Watershed, state: &HydroState, binding: &Binding) -> Result<f64, HydroError> {
    let g = ws.graph();
    let element = ws
        .lookup(&binding.element)
        .ok_or_else(|| HydroError::Config(format!("unknown element {:?}", binding.element)))?;
    let flow = match element {
        ElementRef::Catchment(i) => state.flows.catchment_outflow[i],
        ElementRef::Storage(i) => state.flows.storage_outflow(i),
        ElementRef::Reach(i) => state.flows.reach_outflow[i],
        ElementRef::Outlet(i) => state.flows.outlet_inflow[i],
    };
    let value = match (binding.quantity, element) {
        (Quantity::Flow, _) => flow,
        (Quantity::Concentration, _) => sediment_concentration(&g.sediment, flow),
        (Quantity::Rainfall, ElementRef::Catchment(i)) => state.rainfall_mm_h[i],
        (Quantity::Depth, ElementRef::Storage(i)) => state.storage_depth(ws, i),
        (Quantity::Depth, ElementRef::Reach(i)) => g.reaches[i].rating.unwrap_or_default().depth(flow),
        (Quantity::Depth, ElementRef::Outlet(i)) => g.outlets[i].rating.unwrap_or_default().depth(flow),
        (q, _) => {
            return Err(HydroError::Config(format!(
                "element {:?} has no {q:?} observable",
                binding.element
            )))
        }
    };
    Ok(value.max(0.0))
}
