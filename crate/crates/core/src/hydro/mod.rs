//! Watershed physics: runoff, storage routing through valved basins, reaches
//! and outlets, plus the sediment proxy.
//!
//! Stepping is explicit Euler with storages clamped at zero; all volumes are
//! liters, flows m³/s, depths m and rainfall mm/h.

mod curve;
mod graph;
mod sediment;
mod state;
mod valve;

pub use curve::{StageStorage, StageStorageSpec};
pub use graph::{
    Catchment, ElementRef, Outlet, OverflowWeir, Rating, Reach, StorageKind, StorageUnit, ValveOutlet,
    Watershed, WatershedGraph,
};
pub(crate) use graph::is_identifier;
pub use sediment::{sediment_concentration, SedimentModel};
pub use state::{
    observe, step_watershed, Binding, ElementFlux, FluxLedger, HydroState, Quantity, ReachState, StepFlows,
    ValveState,
};
pub use valve::{valve_discharge, weir_discharge, GRAVITY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HydroError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
}
