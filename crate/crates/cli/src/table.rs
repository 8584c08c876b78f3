//! Plain-text tables for `run` and `report`.

use std::fmt::Write;

use stormnet_core::scenario::{CheckResult, Metrics, RunMetrics};

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e6 {
        format!("{v:.4e}")
    } else if v.abs() >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.4}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), num)
}

fn rows(m: &RunMetrics) -> Vec<(&'static str, String)> {
    let mut retention = opt(m.pond_retention_h);
    if m.pond_retention_censored {
        retention.push_str(" (censored)");
    }
    vec![
        ("peak outlet flow (m3/s)", num(m.peak_outlet_flow_cms)),
        ("peak outlet time (h)", num(m.peak_outlet_time_h)),
        ("cumulative outlet volume (L)", num(m.cumulative_outlet_volume_l)),
        ("pond outflow volume (L)", opt(m.pond_outflow_l)),
        ("pond retention (h)", retention),
        ("wetland peak depth (m)", opt(m.wetland_peak_depth_m)),
        ("wetland overflow (L)", opt(m.wetland_overflow_l)),
        ("peak sediment (mg/L)", num(m.peak_sediment_mg_l)),
        ("mass imbalance (rel)", format!("{:.2e}", m.mass_imbalance_rel)),
        ("points stored", m.points_stored.to_string()),
        ("alerts", m.alerts.values().sum::<usize>().to_string()),
        ("commands", m.commands.to_string()),
    ]
}

/// The metrics table, with a counterfactual column when there is one.
pub fn metrics(m: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} (seed {})", m.scenario, m.seed);
    let left = rows(&m.run);
    let right = m.uncontrolled.as_ref().map(rows);
    let _ = match &right {
        Some(_) => writeln!(out, "{:<30} {:>18} {:>18}", "metric", "controlled", "uncontrolled"),
        None => writeln!(out, "{:<30} {:>18}", "metric", "value"),
    };
    for (i, (name, v)) in left.iter().enumerate() {
        let _ = match &right {
            Some(r) => writeln!(out, "{name:<30} {v:>18} {:>18}", r[i].1),
            None => writeln!(out, "{name:<30} {v:>18}"),
        };
    }
    if let Some(c) = &m.comparison {
        let _ = writeln!(out, "{:<30} {:>18}", "peak reduction", format!("{:.1}%", 100.0 * c.peak_reduction));
        let _ = writeln!(out, "{:<30} {:>18}", "retention increase (h)", opt(c.retention_increase_h));
    }
    if let Some(s) = &m.run.sequencing {
        let _ = writeln!(out, "{:<30} {:>18}", "pond to wetland (h)", num(s.pond_to_wetland_h));
        let _ = writeln!(out, "{:<30} {:>18}", "wetland to outlet (h)", num(s.wetland_to_outlet_h));
    }
    if let Some(v) = &m.validation {
        let _ = writeln!(out, "{:<30} {:>18}", "gauge rmse (m3/s)", num(v.rmse));
        let _ = writeln!(out, "{:<30} {:>18}", "gauge peak error", format!("{:+.1}%", 100.0 * v.peak_error));
        let _ = writeln!(out, "{:<30} {:>18}", "gauge volume error", format!("{:+.1}%", 100.0 * v.volume_error));
    }
    if !m.run.alerts.is_empty() {
        let _ = writeln!(out, "\nalerts by severity");
        for (sub, n) in &m.run.alerts {
            let _ = writeln!(out, "  {sub:<28} {n:>6}");
        }
    }
    if !m.run.nodes.is_empty() {
        let _ = writeln!(
            out,
            "\n{:<16} {:>8} {:>10} {:>8} {:>9} {:>8} {:>8}",
            "node", "cycles", "interval", "duty", "battery", "dropped", "buffered"
        );
        for (id, n) in &m.run.nodes {
            let _ = writeln!(
                out,
                "{id:<16} {:>8} {:>10} {:>7.2}% {:>8.3}V {:>8} {:>8}",
                n.cycles,
                num(n.sampling_interval_min),
                100.0 * n.duty_cycle,
                n.final_voltage,
                n.dropped_points,
                n.buffered_points
            );
        }
    }
    out
}

pub fn checks(checks: &[CheckResult]) -> String {
    let mut out = String::new();
    if checks.is_empty() {
        return out;
    }
    let _ = writeln!(out, "\nchecks");
    for c in checks {
        let range = format!("[{}, {}]", opt(c.min), opt(c.max));
        let _ = writeln!(
            out,
            "  {} {:<40} {:>14} in {range}",
            if c.pass { "PASS" } else { "FAIL" },
            c.metric,
            opt(c.value)
        );
    }
    out
}
