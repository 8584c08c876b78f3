//! Runs a scenario (file path or built-in name) and prints its metrics and checks.

use std::path::Path;
use std::time::Instant;

use stormnet_core::scenario::{run_scenario, RunOptions, Scenario};

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "malletts-hold-release".into());
    let scenario = Scenario::load(Path::new(&arg)).unwrap_or_else(|e| panic!("{e}"));
    let t0 = Instant::now();
    let report = run_scenario(&scenario, RunOptions::default()).unwrap_or_else(|e| panic!("{e}"));
    if let Some(dir) = std::env::args().nth(2) {
        report.bundle.write_to(Path::new(&dir)).unwrap_or_else(|e| panic!("{e}"));
    }
    let mut m = report.metrics.to_json_value();
    if let Some(o) = m.as_object_mut() {
        o.remove("nodes");
        if let Some(u) = o.get_mut("uncontrolled").and_then(|u| u.as_object_mut()) {
            u.remove("nodes");
        }
    }
    println!("{}", serde_json::to_string_pretty(&m).unwrap());
    for c in &report.checks {
        println!("{} {} = {:?} [{:?}, {:?}]", if c.pass { "PASS" } else { "FAIL" }, c.metric, c.value, c.min, c.max);
    }
    println!("elapsed {:.2?}", t0.elapsed());
}
