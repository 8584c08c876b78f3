mod table;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stormnet_core::scenario::{run_scenario, Report, RunOptions, ScenarioError};
use stormnet_core::telemetry::Credentials;
use stormnet_core::{ReportBundle, Scenario, Simulation};
use stormnet_server::{serve_scenario, CorsPolicy, ServeError, ServeOptions};

const EXIT_LOAD: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "stormnet", version, about = "Closed-loop stormwater network simulator")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file (or built-in scenario name) and write its report bundle.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle directory [default: out/<scenario>-<seed>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 if any of the scenario's checks fail.
        #[arg(long)]
        check: bool,
        /// Append fired alerts to this JSON-lines file.
        #[arg(long)]
        outbox: Option<PathBuf>,
        /// Expose the HTTP API while the run progresses.
        #[arg(long)]
        serve: bool,
        #[arg(long, default_value = "127.0.0.1:8080", requires = "serve")]
        listen: SocketAddr,
        /// Simulated seconds per wall-clock second; 0 runs unpaced.
        #[arg(long, default_value_t = 60.0, requires = "serve")]
        compress: f64,
        /// Dashboard account as user:password.
        #[arg(long, default_value = "operator:stormnet", requires = "serve")]
        operator: String,
        /// Allowed CORS origin, repeatable; '*' allows any [default: *]
        #[arg(long = "cors-origin", requires = "serve")]
        cors_origins: Vec<String>,
        /// Keep serving after the run until interrupted.
        #[arg(long, requires = "serve")]
        hold: bool,
    },
    /// Load a scenario and resolve every reference without running it.
    Validate { scenario: PathBuf },
    /// Print the metrics table of a bundle after verifying its hashes.
    Report {
        bundle: PathBuf,
        #[arg(long)]
        check: bool,
    },
    /// List the built-in scenarios.
    Scenarios,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match cli.command {
        Cmd::Run { scenario, seed, out, check, outbox, serve, listen, compress, operator, cors_origins, hold } => {
            let serve = serve.then(|| {
                let operator = operator.split_once(':').map(|(u, p)| Credentials::new(u, p));
                let cors = if cors_origins.is_empty() { CorsPolicy::any() } else { CorsPolicy { origins: cors_origins } };
                let compression = if compress > 0.0 { compress } else { f64::INFINITY };
                (ServeOptions { listen, compression, operator, cors }, hold)
            });
            run(&scenario, RunOptions { seed, outbox, log_alerts: !cli.quiet }, out, check, serve)
        }
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::Report { bundle, check } => report(&bundle, check),
        Cmd::Scenarios => {
            for name in Scenario::builtin_names() {
                let s = Scenario::builtin(name).expect("built-in scenarios load");
                println!("{name:<24} {}", s.description);
            }
            ExitCode::SUCCESS
        }
    }
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    Scenario::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_LOAD)
    })
}

fn failure(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ScenarioError::Load(_) => ExitCode::from(EXIT_LOAD),
        _ => ExitCode::FAILURE,
    }
}

fn run(path: &Path, options: RunOptions, out: Option<PathBuf>, check: bool, serve: Option<(ServeOptions, bool)>) -> ExitCode {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let report: Report = match serve {
        None => match run_scenario(&scenario, options) {
            Ok(r) => r,
            Err(e) => return failure(&e),
        },
        Some((serve, hold)) => {
            let ready = |addr| println!("serving http://{addr}/api/v1 at {}x", serve.compression);
            match serve_scenario(&scenario, options, &serve, ready) {
                Ok((r, server)) => {
                    if hold {
                        println!("run finished; still serving, Ctrl-C to stop");
                        let _ = server.block_on(tokio::signal::ctrl_c());
                    }
                    r
                }
                Err(ServeError::Scenario(e)) => return failure(&e),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            }
        }
    };
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(format!("{}-{}", scenario.name, report.metrics.seed)));
    if let Err(e) = report.bundle.write_to(&dir) {
        return failure(&e);
    }
    print!("{}", table::metrics(&report.metrics));
    print!("{}", table::checks(&report.checks));
    println!("\nbundle written to {}", dir.display());
    if check && !report.passed() {
        return ExitCode::from(EXIT_CHECK);
    }
    ExitCode::SUCCESS
}

fn validate(path: &Path) -> ExitCode {
    let scenario = match load(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    // building the simulation resolves every binding and subscription
    if let Err(e) = Simulation::new(&scenario, RunOptions::default()) {
        return failure(&e);
    }
    println!(
        "ok: {} ({} h, {} nodes, {} subscriptions, {} checks, config sha256 {})",
        scenario.name,
        scenario.duration_hours,
        scenario.nodes.len(),
        scenario.subscriptions.len(),
        scenario.checks.len(),
        scenario.config_hash()
    );
    ExitCode::SUCCESS
}

fn report(dir: &Path, check: bool) -> ExitCode {
    let loaded = ReportBundle::read_from(dir).and_then(|b| Ok((b.metrics()?, b.checks()?)));
    let (metrics, checks) = match loaded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_LOAD);
        }
    };
    print!("{}", table::metrics(&metrics));
    print!("{}", table::checks(&checks));
    if check && !checks.iter().all(|c| c.pass) {
        return ExitCode::from(EXIT_CHECK);
    }
    ExitCode::SUCCESS
}
