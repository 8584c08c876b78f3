use std::f64::consts::PI;

use super::HydroError;

pub const GRAVITY: f64 = 9.81;

/// Orifice discharge through a partially opened valve, in m³/s.
///
/// The opening fraction scales the flow area linearly:
/// `Q = opening · cd · (π d² / 4) · sqrt(2 g head)`.
pub fn valve_discharge(opening: f64, head: f64, diameter: f64, cd: f64) -> Result<f64, HydroError> {
    for (name, v) in [("opening", opening), ("head", head), ("diameter", diameter), ("cd", cd)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(HydroError::Domain(format!("{name} must be a finite value >= 0, got {v}")));
        }
    }
    if opening > 1.0 {
        return Err(HydroError::Domain(format!("opening must be <= 1, got {opening}")));
    }
    let area = PI * diameter * diameter / 4.0;
    Ok(opening * cd * area * (2.0 * GRAVITY * head).sqrt())
}

/// Rectangular weir overflow `C · L · (depth - crest)^1.5`; zero at or below the crest.
pub fn weir_discharge(depth: f64, crest: f64, coefficient: f64, length: f64) -> f64 {
    let over = depth - crest;
    if over <= 0.0 {
        0.0
    } else {
        coefficient * length * over.powf(1.5)
    }
}
