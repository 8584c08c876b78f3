use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curve::StageStorage;
use super::sediment::SedimentModel;
use super::HydroError;

fn default_cd() -> f64 {
    0.6
}
fn default_count() -> u32 {
    1
}
fn default_opening() -> f64 {
    1.0
}
fn default_travel_rate() -> f64 {
    0.10
}
fn default_weir_coefficient() -> f64 {
    1.7
}

/// Land surface draining to one routing element through a linear reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catchment {
    pub id: String,
    pub area_km2: f64,
    pub runoff_coefficient: f64,
    pub reservoir_k_hours: f64,
    pub downstream: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageKind {
    Pond,
    Wetland,
}

/// Gate or butterfly valve(s) at the bottom of a storage unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValveOutlet {
    pub diameter_m: f64,
    #[serde(default = "default_cd")]
    pub discharge_coefficient: f64,
    /// Identical valves operated together.
    #[serde(default = "default_count")]
    pub count: u32,
    /// Initial opening fraction.
    #[serde(default = "default_opening")]
    pub opening: f64,
    /// Maximum change in opening fraction per minute.
    #[serde(default = "default_travel_rate")]
    pub travel_rate_per_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverflowWeir {
    pub crest_depth_m: f64,
    #[serde(default = "default_weir_coefficient")]
    pub coefficient: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub id: String,
    pub kind: StorageKind,
    pub stage_storage: StageStorage,
    /// Design capacity in liters; informational, reported alongside overflow.
    #[serde(default)]
    pub capacity_l: Option<f64>,
    pub outlet: ValveOutlet,
    #[serde(default)]
    pub overflow: Option<OverflowWeir>,
    #[serde(default)]
    pub initial_volume_l: f64,
    pub downstream: String,
}

/// Power-law stage rating, `depth = coefficient · flow^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rating {
    pub coefficient: f64,
    pub exponent: f64,
}

impl Default for Rating {
    fn default() -> Self {
        Rating { coefficient: 0.5, exponent: 0.6 }
    }
}

impl Rating {
    pub fn depth(&self, flow: f64) -> f64 {
        if flow <= 0.0 {
            0.0
        } else {
            self.coefficient * flow.powf(self.exponent)
        }
    }
}

/// Channel segment: a pure delay followed by a linear reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reach {
    pub id: String,
    pub pure_delay_min: f64,
    pub attenuation_k_hours: f64,
    pub downstream: String,
    #[serde(default)]
    pub rating: Option<Rating>,
}

/// Terminal sink; everything that reaches it leaves the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outlet {
    pub id: String,
    #[serde(default)]
    pub rating: Option<Rating>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatershedGraph {
    #[serde(default)]
    pub catchments: Vec<Catchment>,
    #[serde(default)]
    pub storages: Vec<StorageUnit>,
    #[serde(default)]
    pub reaches: Vec<Reach>,
    #[serde(default)]
    pub outlets: Vec<Outlet>,
    #[serde(default)]
    pub sediment: SedimentModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementRef {
    Catchment(usize),
    Storage(usize),
    Reach(usize),
    Outlet(usize),
}

/// A validated graph with resolved references and a routing order.
#[derive(Debug, Clone)]
pub struct Watershed {
    graph: WatershedGraph,
    index: BTreeMap<String, ElementRef>,
    catchment_targets: Vec<ElementRef>,
    storage_targets: Vec<ElementRef>,
    reach_targets: Vec<ElementRef>,
    /// Storages and reaches, upstream before downstream.
    order: Vec<ElementRef>,
}

impl Watershed {
    pub fn new(graph: WatershedGraph) -> Result<Self, HydroError> {
        let mut index = BTreeMap::new();
        let ids = graph
            .catchments
            .iter()
            .enumerate()
            .map(|(i, c)| (&c.id, ElementRef::Catchment(i)))
            .chain(graph.storages.iter().enumerate().map(|(i, s)| (&s.id, ElementRef::Storage(i))))
            .chain(graph.reaches.iter().enumerate().map(|(i, r)| (&r.id, ElementRef::Reach(i))))
            .chain(graph.outlets.iter().enumerate().map(|(i, o)| (&o.id, ElementRef::Outlet(i))));
        for (id, r) in ids {
            if !is_identifier(id) {
                return Err(HydroError::Config(format!("invalid element id {id:?}")));
            }
            if index.insert(id.clone(), r).is_some() {
                return Err(HydroError::Config(format!("duplicate element id {id:?}")));
            }
        }

        for c in &graph.catchments {
            if !(c.area_km2 > 0.0) {
                return Err(HydroError::Config(format!("catchment {}: area must be > 0", c.id)));
            }
            if !(0.0..=1.0).contains(&c.runoff_coefficient) {
                return Err(HydroError::Config(format!("catchment {}: runoff coefficient outside [0, 1]", c.id)));
            }
            if !(c.reservoir_k_hours > 0.0) {
                return Err(HydroError::Config(format!("catchment {}: reservoir constant must be > 0", c.id)));
            }
        }
        for s in &graph.storages {
            let o = &s.outlet;
            if !(o.diameter_m >= 0.0) || !(o.discharge_coefficient >= 0.0) || !(o.travel_rate_per_min > 0.0) {
                return Err(HydroError::Config(format!("storage {}: invalid valve parameters", s.id)));
            }
            if !(0.0..=1.0).contains(&o.opening) {
                return Err(HydroError::Config(format!("storage {}: valve opening outside [0, 1]", s.id)));
            }
            if let Some(w) = &s.overflow {
                if !(w.crest_depth_m >= 0.0) || !(w.coefficient >= 0.0) || !(w.length_m >= 0.0) {
                    return Err(HydroError::Config(format!("storage {}: invalid overflow weir", s.id)));
                }
            }
            if !(s.initial_volume_l >= 0.0) {
                return Err(HydroError::Config(format!("storage {}: initial volume must be >= 0", s.id)));
            }
        }
        for r in &graph.reaches {
            if !(r.pure_delay_min >= 0.0) || !(r.attenuation_k_hours > 0.0) {
                return Err(HydroError::Config(format!("reach {}: delay must be >= 0 and k > 0", r.id)));
            }
        }

        let resolve = |from: &str, to: &str| -> Result<ElementRef, HydroError> {
            match index.get(to) {
                None => Err(HydroError::Config(format!("{from}: unknown downstream element {to:?}"))),
                Some(ElementRef::Catchment(_)) => {
                    Err(HydroError::Config(format!("{from}: downstream {to:?} is a catchment")))
                }
                Some(r) => Ok(*r),
            }
        };
        let catchment_targets = graph
            .catchments
            .iter()
            .map(|c| resolve(&c.id, &c.downstream))
            .collect::<Result<Vec<_>, _>>()?;
        let storage_targets = graph
            .storages
            .iter()
            .map(|s| resolve(&s.id, &s.downstream))
            .collect::<Result<Vec<_>, _>>()?;
        let reach_targets = graph
            .reaches
            .iter()
            .map(|r| resolve(&r.id, &r.downstream))
            .collect::<Result<Vec<_>, _>>()?;

        // Kahn's algorithm over storages and reaches; outlets are sinks.
        let nodes: Vec<ElementRef> = (0..graph.storages.len())
            .map(ElementRef::Storage)
            .chain((0..graph.reaches.len()).map(ElementRef::Reach))
            .collect();
        let target_of = |n: ElementRef| match n {
            ElementRef::Storage(i) => storage_targets[i],
            ElementRef::Reach(i) => reach_targets[i],
            _ => unreachable!(),
        };
        let mut indegree: BTreeMap<ElementRef, usize> = nodes.iter().map(|&n| (n, 0)).collect();
        for &n in &nodes {
            if let Some(d) = indegree.get_mut(&target_of(n)) {
                *d += 1;
            }
        }
        let mut ready: Vec<ElementRef> =
            nodes.iter().copied().filter(|n| indegree[n] == 0).rev().collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            let t = target_of(n);
            if let Some(d) = indegree.get_mut(&t) {
                *d -= 1;
                if *d == 0 {
                    ready.push(t);
                }
            }
        }
        if order.len() != nodes.len() {
            return Err(HydroError::Config("routing graph contains a cycle".into()));
        }

        Ok(Watershed { graph, index, catchment_targets, storage_targets, reach_targets, order })
    }

    pub fn graph(&self) -> &WatershedGraph {
        &self.graph
    }

    pub fn lookup(&self, id: &str) -> Option<ElementRef> {
        self.index.get(id).copied()
    }

    pub fn catchment_target(&self, i: usize) -> ElementRef {
        self.catchment_targets[i]
    }

    pub fn storage_target(&self, i: usize) -> ElementRef {
        self.storage_targets[i]
    }

    pub fn reach_target(&self, i: usize) -> ElementRef {
        self.reach_targets[i]
    }

    pub fn routing_order(&self) -> &[ElementRef] {
        &self.order
    }

    pub fn storage_index(&self, id: &str) -> Result<usize, HydroError> {
        match self.lookup(id) {
            Some(ElementRef::Storage(i)) => Ok(i),
            _ => Err(HydroError::Config(format!("{id:?} is not a storage unit"))),
        }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catchment(id: &str, to: &str) -> Catchment {
        Catchment {
            id: id.into(),
            area_km2: 1.0,
            runoff_coefficient: 0.5,
            reservoir_k_hours: 1.0,
            downstream: to.into(),
        }
    }

    fn reach(id: &str, to: &str) -> Reach {
        Reach { id: id.into(), pure_delay_min: 0.0, attenuation_k_hours: 1.0, downstream: to.into(), rating: None }
    }

    #[test]
    fn routing_order_is_topological() {
        let g = WatershedGraph {
            catchments: vec![catchment("c", "r1")],
            reaches: vec![reach("r2", "out"), reach("r1", "r2")],
            outlets: vec![Outlet { id: "out".into(), rating: None }],
            ..Default::default()
        };
        let w = Watershed::new(g).unwrap();
        assert_eq!(w.routing_order(), &[ElementRef::Reach(1), ElementRef::Reach(0)]);
    }

    #[test]
    fn rejects_cycles_and_dangling_references() {
        let g = WatershedGraph {
            reaches: vec![reach("a", "b"), reach("b", "a")],
            ..Default::default()
        };
        assert!(matches!(Watershed::new(g), Err(HydroError::Config(_))));

        let g = WatershedGraph { catchments: vec![catchment("c", "nowhere")], ..Default::default() };
        assert!(Watershed::new(g).is_err());
    }

    #[test]
    fn rejects_bad_catchment_parameters() {
        let mut c = catchment("c", "out");
        c.runoff_coefficient = 1.2;
        let g = WatershedGraph {
            catchments: vec![c],
            outlets: vec![Outlet { id: "out".into(), rating: None }],
            ..Default::default()
        };
        assert!(Watershed::new(g).is_err());
    }
}
