use serde::{Deserialize, Serialize};

use super::HydroError;

/// Piecewise-linear stage-storage relation, depth (m) to volume (L).
///
/// Both columns are strictly increasing. Beyond the last knot the last
/// segment is extrapolated, so every nonnegative volume maps to a depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StageStorageSpec", into = "StageStorageSpec")]
pub struct StageStorage {
    knots: Vec<(f64, f64)>,
}

/// File representation: either explicit `[[depth_m, volume_l], ...]` knots or a
/// prismatic basin of constant plan area.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageStorageSpec {
    Knots { knots: Vec<(f64, f64)> },
    Prismatic { area_m2: f64 },
}

impl StageStorage {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, HydroError> {
        if knots.len() < 2 {
            return Err(HydroError::Config("stage-storage curve needs at least two knots".into()));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(HydroError::Config("stage-storage curve must start at (0, 0)".into()));
        }
        for w in knots.windows(2) {
            let ((d0, v0), (d1, v1)) = (w[0], w[1]);
            if !(d1 > d0 && v1 > v0) || !d1.is_finite() || !v1.is_finite() {
                return Err(HydroError::Config(format!(
                    "stage-storage curve must be strictly increasing, got ({d0}, {v0}) -> ({d1}, {v1})"
                )));
            }
        }
        Ok(StageStorage { knots })
    }

    /// Constant plan area in m²: volume (L) = area · depth · 1000.
    pub fn prismatic(area_m2: f64) -> Result<Self, HydroError> {
        if !(area_m2 > 0.0) {
            return Err(HydroError::Config(format!("prismatic area must be > 0, got {area_m2}")));
        }
        StageStorage::new(vec![(0.0, 0.0), (1.0, area_m2 * 1000.0)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn volume_at(&self, depth: f64) -> f64 {
        let depth = depth.max(0.0);
        let i = self.segment(|&(d, _)| d, depth);
        let ((d0, v0), (d1, v1)) = (self.knots[i], self.knots[i + 1]);
        v0 + (depth - d0) * (v1 - v0) / (d1 - d0)
    }

    pub fn depth_at(&self, volume: f64) -> f64 {
        let volume = volume.max(0.0);
        let i = self.segment(|&(_, v)| v, volume);
        let ((d0, v0), (d1, v1)) = (self.knots[i], self.knots[i + 1]);
        d0 + (volume - v0) * (d1 - d0) / (v1 - v0)
    }

    fn segment(&self, key: impl Fn(&(f64, f64)) -> f64, x: f64) -> usize {
        let last = self.knots.len() - 2;
        // first segment whose upper knot is at or above x, else extrapolate the last
        self.knots[1..]
            .iter()
            .position(|k| key(k) >= x)
            .unwrap_or(last)
            .min(last)
    }
}

impl TryFrom<StageStorageSpec> for StageStorage {
    type Error = HydroError;

    fn try_from(spec: StageStorageSpec) -> Result<Self, Self::Error> {
        match spec {
            StageStorageSpec::Knots { knots } => StageStorage::new(knots),
            StageStorageSpec::Prismatic { area_m2 } => StageStorage::prismatic(area_m2),
        }
    }
}

impl From<StageStorage> for StageStorageSpec {
    fn from(curve: StageStorage) -> Self {
        StageStorageSpec::Knots { knots: curve.knots }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pond() -> StageStorage {
        StageStorage::new(vec![(0.0, 0.0), (1.0, 5.0e6), (2.0, 12.0e6), (3.0, 21.0e6)]).unwrap()
    }

    #[test]
    fn empty_basin_has_zero_depth() {
        assert_eq!(pond().depth_at(0.0), 0.0);
    }

    #[test]
    fn inverse_recovers_depth() {
        let c = pond();
        for d in [0.25, 1.0, 1.5, 2.75, 3.5] {
            assert!((c.depth_at(c.volume_at(d)) - d).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn rejects_non_monotone_curves() {
        assert!(StageStorage::new(vec![(0.0, 0.0), (1.0, 5.0), (0.5, 8.0)]).is_err());
        assert!(StageStorage::new(vec![(0.0, 0.0), (1.0, 5.0), (2.0, 5.0)]).is_err());
        assert!(StageStorage::new(vec![(0.0, 0.0)]).is_err());
        assert!(StageStorage::prismatic(0.0).is_err());
    }

    #[test]
    fn prismatic_volume_is_linear() {
        let c = StageStorage::prismatic(7600.0).unwrap();
        assert!((c.volume_at(2.5) - 19.0e6).abs() < 1e-6);
    }
}
