use serde::{Deserialize, Serialize};

use crate::time::{Timestamp, MS_PER_HOUR};

/// Daily window, in UTC hours, during which the panel charges the battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solar {
    pub charge_ma: f64,
    pub day_start_utc_h: f64,
    pub day_end_utc_h: f64,
}

impl Solar {
    pub fn is_daylight(&self, t: Timestamp) -> bool {
        let h = hour_of_day(t);
        if self.day_start_utc_h <= self.day_end_utc_h {
            (self.day_start_utc_h..self.day_end_utc_h).contains(&h)
        } else {
            h >= self.day_start_utc_h || h < self.day_end_utc_h
        }
    }
}

fn hour_of_day(t: Timestamp) -> f64 {
    t.rem_euclid(24 * MS_PER_HOUR) as f64 / MS_PER_HOUR as f64
}

fn default_capacity() -> f64 {
    2000.0
}
fn default_sleep() -> f64 {
    0.5
}
fn default_awake() -> f64 {
    120.0
}
fn default_cutoff() -> f64 {
    3.2
}
fn default_curve() -> Vec<(f64, f64)> {
    vec![(0.0, 3.0), (1.0, 4.2)]
}
fn default_initial() -> f64 {
    1.0
}

/// Single-cell Li-ion pack with an optional solar charger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    #[serde(default = "default_capacity")]
    pub capacity_mah: f64,
    #[serde(default = "default_sleep")]
    pub sleep_current_ma: f64,
    #[serde(default = "default_awake")]
    pub awake_current_ma: f64,
    #[serde(default)]
    pub solar: Option<Solar>,
    #[serde(default = "default_cutoff")]
    pub cutoff_v: f64,
    /// `(state of charge fraction, volts)`, increasing in both.
    #[serde(default = "default_curve")]
    pub voltage_curve: Vec<(f64, f64)>,
    /// Initial state of charge, fraction of capacity.
    #[serde(default = "default_initial")]
    pub initial_soc: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            capacity_mah: default_capacity(),
            sleep_current_ma: default_sleep(),
            awake_current_ma: default_awake(),
            solar: None,
            cutoff_v: default_cutoff(),
            voltage_curve: default_curve(),
            initial_soc: default_initial(),
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.capacity_mah > 0.0) {
            return Err("battery capacity must be > 0".into());
        }
        if self.sleep_current_ma < 0.0 || self.awake_current_ma < 0.0 {
            return Err("currents must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err("initial state of charge outside [0, 1]".into());
        }
        let c = &self.voltage_curve;
        if c.len() < 2 || c[0].0 != 0.0 || c[c.len() - 1].0 != 1.0 {
            return Err("voltage curve must span state of charge 0 to 1".into());
        }
        if c.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 >= w[0].1)) {
            return Err("voltage curve must be increasing".into());
        }
        Ok(())
    }

    pub fn voltage(&self, charge_mah: f64) -> f64 {
        let soc = (charge_mah / self.capacity_mah).clamp(0.0, 1.0);
        let c = &self.voltage_curve;
        let i = c.windows(2).position(|w| soc <= w[1].0).unwrap_or(c.len() - 2);
        let ((s0, v0), (s1, v1)) = (c[i], c[i + 1]);
        v0 + (soc - s0) * (v1 - v0) / (s1 - s0)
    }

    pub fn initial_charge(&self) -> f64 {
        self.capacity_mah * self.initial_soc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sleeping,
    Awake,
}

/// Charge after `dt_min` minutes in `mode`, clamped to `[0, capacity]`.
pub fn power_step(model: &PowerModel, charge_mah: f64, dt_min: f64, mode: Mode, daylight: bool) -> f64 {
    let draw = match mode {
        Mode::Sleeping => model.sleep_current_ma,
        Mode::Awake => model.awake_current_ma,
    };
    let solar = match (&model.solar, daylight) {
        (Some(s), true) => s.charge_ma,
        _ => 0.0,
    };
    (charge_mah - (draw - solar) * dt_min / 60.0).clamp(0.0, model.capacity_mah)
}

/// Integrates `[from, to)` in `mode`, splitting at daylight boundaries.
pub fn integrate_power(model: &PowerModel, mut charge_mah: f64, from: Timestamp, to: Timestamp, mode: Mode) -> f64 {
    let Some(solar) = &model.solar else {
        if to > from {
            charge_mah = power_step(model, charge_mah, (to - from) as f64 / 60_000.0, mode, false);
        }
        return charge_mah;
    };
    let mut t = from;
    while t < to {
        let day_start = t - t.rem_euclid(24 * MS_PER_HOUR);
        let boundaries = [solar.day_start_utc_h, solar.day_end_utc_h, 24.0]
            .map(|h| day_start + (h * MS_PER_HOUR as f64).round() as Timestamp);
        let next = boundaries.into_iter().filter(|&b| b > t).min().unwrap_or(to).min(to);
        charge_mah = power_step(model, charge_mah, (next - t) as f64 / 60_000.0, mode, solar.is_daylight(t));
        t = next;
    }
    charge_mah
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> PowerModel {
        PowerModel { solar: Some(Solar { charge_ma: 100.0, day_start_utc_h: 6.0, day_end_utc_h: 18.0 }), ..Default::default() }
    }

    #[test]
    fn full_battery_in_daylight_stays_full() {
        let m = model();
        assert_eq!(power_step(&m, 2000.0, 60.0, Mode::Sleeping, true), 2000.0);
    }

    #[test]
    fn ten_seconds_awake() {
        // 120 mA * 10/3600 h = 0.3333 mAh
        let m = PowerModel::default();
        let after = power_step(&m, 1000.0, 10.0 / 60.0, Mode::Awake, false);
        assert!((1000.0 - after - 120.0 * 10.0 / 3600.0).abs() < 1e-12);
        assert!((1000.0 - after - 0.3333).abs() < 1e-4);
    }

    #[test]
    fn a_day_asleep_without_sun() {
        // 0.5 mA * 24 h = 12 mAh
        let m = PowerModel::default();
        let after = integrate_power(&m, 1000.0, 0, 24 * MS_PER_HOUR, Mode::Sleeping);
        assert!((1000.0 - after - 12.0).abs() < 1e-9);
    }

    #[test]
    fn daylight_split_is_exact() {
        // 12 h of sun at +99.5 mA net and 12 h of night at -0.5 mA
        let m = model();
        let after = integrate_power(&m, 500.0, 0, 24 * MS_PER_HOUR, Mode::Sleeping);
        assert!((after - (500.0 + 99.5 * 12.0 - 0.5 * 12.0)).abs() < 1e-9);
    }

    #[test]
    fn voltage_curve_endpoints() {
        let m = PowerModel::default();
        assert!((m.voltage(2000.0) - 4.2).abs() < 1e-12);
        assert!((m.voltage(0.0) - 3.0).abs() < 1e-12);
        assert!((m.voltage(1000.0) - 3.6).abs() < 1e-12);
    }

    #[test]
    fn charge_never_negative() {
        let m = PowerModel::default();
        assert_eq!(power_step(&m, 0.1, 600.0, Mode::Awake, false), 0.0);
    }
}
