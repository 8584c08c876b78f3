//! Scenario files, the discrete-event runner and report bundles.

mod bundle;
mod config;
mod metrics;
mod runner;

pub use bundle::{Manifest, ReportBundle};
pub use config::{
    Calibration, Check, Fixtures, ForecastStep, LinkConfig, MetricTargets, Outage, RainfallScript, Scenario,
    ScriptedCommand,
};
pub use metrics::{
    compare, compute_metrics, trapezoid_l, CheckResult, Comparison, Metrics, NodeMetrics, PlantTrace, RunMetrics,
    Sequencing,
};
pub use runner::{
    ActuationRecord, EnactRecord, IntervalChange, NoHooks, NodeSummary, RunHooks, RunOptions, RunOutput, RunTrace,
    Simulation,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario: {0}")]
    Load(String),
    #[error("hydrology: {0}")]
    Hydro(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("io: {0}")]
    Io(String),
}

/// A finished scenario: the controlled run, the counterfactual if asked for,
/// and the bundle built from them.
#[derive(Debug)]
pub struct Report {
    pub metrics: Metrics,
    pub checks: Vec<CheckResult>,
    pub bundle: ReportBundle,
    pub controlled: RunOutput,
    pub uncontrolled: Option<RunOutput>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs a scenario headless.
pub fn run_scenario(scenario: &Scenario, options: RunOptions) -> Result<Report, ScenarioError> {
    run_scenario_with(scenario, options, &mut NoHooks)
}

/// Runs a scenario, calling `hooks` around each event of the controlled run.
pub fn run_scenario_with(
    scenario: &Scenario,
    options: RunOptions,
    hooks: &mut dyn RunHooks,
) -> Result<Report, ScenarioError> {
    let sim = Simulation::new(scenario, options.clone())?;
    finish_report(scenario, options, sim.run_with(hooks)?)
}

/// Builds the report for a controlled run that has already finished, running
/// the counterfactual first when the scenario asks for one.
pub fn finish_report(scenario: &Scenario, options: RunOptions, controlled: RunOutput) -> Result<Report, ScenarioError> {
    let uncontrolled = if scenario.counterfactual {
        let opts = RunOptions { outbox: None, log_alerts: false, ..options };
        Some(Simulation::new(&scenario.uncontrolled(), opts)?.run()?)
    } else {
        None
    };
    let run = compute_metrics(&controlled);
    let mut metrics = Metrics {
        scenario: scenario.name.clone(),
        seed: controlled.seed,
        run,
        uncontrolled: None,
        comparison: None,
        validation: None,
    };
    if let Some(u) = &uncontrolled {
        let um = compute_metrics(u);
        metrics.comparison = Some(compare(&metrics.run, &um));
        metrics.uncontrolled = Some(um);
    }
    if let Some(reference) = scenario.reference_gauge()? {
        metrics.validation = metrics::validate_outlet(&controlled, &reference);
    }
    let checks = metrics.check(&scenario.checks);
    let mut hashed = scenario.clone();
    hashed.seed = controlled.seed;
    let bundle = ReportBundle::build(&controlled, uncontrolled.as_ref(), &metrics, &checks, &hashed.config_hash());
    Ok(Report { metrics, checks, bundle, controlled, uncontrolled })
}
