use serde::{Deserialize, Serialize};

/// Suspended sediment proxy: concentration affine in flow.
///
/// The default line passes through 60 mg/L at 0.28 m³/s and 110 mg/L at
/// 0.60 m³/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SedimentModel {
    /// Intercept, mg/L.
    pub c0: f64,
    /// mg/L per m³/s.
    pub slope: f64,
}

impl SedimentModel {
    pub fn through_points((q1, c1): (f64, f64), (q2, c2): (f64, f64)) -> Self {
        let slope = (c2 - c1) / (q2 - q1);
        SedimentModel { c0: c1 - slope * q1, slope }
    }
}

impl Default for SedimentModel {
    fn default() -> Self {
        SedimentModel::through_points((0.28, 60.0), (0.60, 110.0))
    }
}

/// Concentration in mg/L for a flow in m³/s, clamped at zero.
pub fn sediment_concentration(model: &SedimentModel, flow: f64) -> f64 {
    (model.c0 + model.slope * flow.max(0.0)).max(0.0)
}
