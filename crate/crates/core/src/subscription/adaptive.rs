use serde::{Deserialize, Serialize};

use crate::datastore::{Datastore, SeriesKey, StoreError};
use crate::time::{minutes_to_ms, Timestamp};

fn default_forecast_series() -> SeriesKey {
    SeriesKey::new(crate::ingest::EXTERNAL_NODE, crate::ingest::PRECIP_PROB_SENSOR)
}
fn default_lookahead() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSamplingPolicy {
    #[serde(default = "default_forecast_series")]
    pub forecast_series: SeriesKey,
    pub rain_probability_threshold: f64,
    pub fast_interval_min: f64,
    pub slow_interval_min: f64,
    /// How far ahead of `now` the forecast is consulted.
    #[serde(default = "default_lookahead")]
    pub lookahead_min: f64,
}

impl AdaptiveSamplingPolicy {
    pub fn validate(&self, bounds: (f64, f64)) -> Result<(), String> {
        if !(self.fast_interval_min < self.slow_interval_min) {
            return Err("fast interval must be shorter than slow interval".into());
        }
        for v in [self.fast_interval_min, self.slow_interval_min] {
            if v < bounds.0 || v > bounds.1 {
                return Err(format!("interval {v} min outside node bounds [{}, {}]", bounds.0, bounds.1));
            }
        }
        if !(0.0..=1.0).contains(&self.rain_probability_threshold) {
            return Err("probability threshold outside [0, 1]".into());
        }
        Ok(())
    }

    /// Highest rain probability in effect between `now` and `now + lookahead`.
    /// A forecast point holds from its timestamp until the next one.
    pub fn forecast_probability(&self, store: &Datastore, now: Timestamp) -> Result<Option<f64>, StoreError> {
        let horizon = now + minutes_to_ms(self.lookahead_min);
        let current = store
            .query_range(&self.forecast_series, Timestamp::MIN, now + 1)?
            .last()
            .map(|p| p.value);
        let upcoming = store.query_range(&self.forecast_series, now + 1, horizon + 1)?;
        Ok(current.into_iter().chain(upcoming.iter().map(|p| p.value)).reduce(f64::max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingDecision {
    /// Command this interval (minutes).
    Switch(f64),
    Unchanged,
    MissingForecast,
}

/// Picks the fast interval when rain is likely, the slow one otherwise, and
/// only asks for a change when it differs from `current_interval_min`.
pub fn adaptive_sampling(
    policy: &AdaptiveSamplingPolicy,
    store: &Datastore,
    now: Timestamp,
    current_interval_min: f64,
) -> Result<SamplingDecision, StoreError> {
    let Some(probability) = policy.forecast_probability(store, now)? else {
        return Ok(SamplingDecision::MissingForecast);
    };
    let target = if probability >= policy.rain_probability_threshold {
        policy.fast_interval_min
    } else {
        policy.slow_interval_min
    };
    if (target - current_interval_min).abs() < 1e-9 {
        Ok(SamplingDecision::Unchanged)
    } else {
        Ok(SamplingDecision::Switch(target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Point;

    fn policy() -> AdaptiveSamplingPolicy {
        AdaptiveSamplingPolicy {
            forecast_series: default_forecast_series(),
            rain_probability_threshold: 0.5,
            fast_interval_min: 3.0,
            slow_interval_min: 15.0,
            lookahead_min: 60.0,
        }
    }

    fn store_with(prob: f64) -> Datastore {
        let ds = Datastore::new();
        ds.write_points(&[Point::new("ext", "precip_prob", 0, prob)]);
        ds
    }

    #[test]
    fn likely_rain_speeds_up_sampling() {
        let d = adaptive_sampling(&policy(), &store_with(0.8), 10, 15.0).unwrap();
        assert_eq!(d, SamplingDecision::Switch(3.0));
    }

    #[test]
    fn dry_forecast_slows_down() {
        let d = adaptive_sampling(&policy(), &store_with(0.1), 10, 3.0).unwrap();
        assert_eq!(d, SamplingDecision::Switch(15.0));
    }

    #[test]
    fn no_churn_when_already_fast() {
        let d = adaptive_sampling(&policy(), &store_with(0.8), 10, 3.0).unwrap();
        assert_eq!(d, SamplingDecision::Unchanged);
    }

    #[test]
    fn missing_forecast_is_reported() {
        let d = adaptive_sampling(&policy(), &Datastore::new(), 10, 15.0).unwrap();
        assert_eq!(d, SamplingDecision::MissingForecast);
    }

    #[test]
    fn lookahead_sees_upcoming_rain() {
        let ds = Datastore::new();
        ds.write_points(&[
            Point::new("ext", "precip_prob", 0, 0.1),
            Point::new("ext", "precip_prob", minutes_to_ms(50.0), 0.9),
        ]);
        assert_eq!(policy().forecast_probability(&ds, 0).unwrap(), Some(0.9));
        assert_eq!(policy().forecast_probability(&ds, minutes_to_ms(-20.0)).unwrap(), Some(0.1));
    }

    #[test]
    fn validation() {
        assert!(policy().validate((3.0, 15.0)).is_ok());
        assert!(AdaptiveSamplingPolicy { fast_interval_min: 20.0, ..policy() }.validate((3.0, 15.0)).is_err());
        assert!(AdaptiveSamplingPolicy { slow_interval_min: 60.0, ..policy() }.validate((3.0, 15.0)).is_err());
    }
}
