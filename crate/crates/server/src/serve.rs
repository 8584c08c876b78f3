//! Serve mode: the HTTP API stays live while a scenario runs, paced so one
//! wall-clock second covers `compression` simulated seconds.
//!
//! Pacing only delays events; it never reorders them, so a serve-mode run
//! whose clients only read produces the same bundle as a headless one.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use stormnet_core::scenario::{finish_report, Report, RunHooks, RunOptions, ScenarioError};
use stormnet_core::telemetry::Credentials;
use stormnet_core::time::Timestamp;
use stormnet_core::{Scenario, Simulation};
use tokio::runtime::Runtime;
use tokio::sync::oneshot;

use crate::{router, AppState, Clock, CorsPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("server: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub listen: SocketAddr,
    /// Simulated seconds per wall-clock second. Infinite means unpaced.
    pub compression: f64,
    /// Extra account for the dashboard, on top of the node accounts.
    pub operator: Option<Credentials>,
    pub cors: CorsPolicy,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            compression: 60.0,
            operator: Some(Credentials::new("operator", "stormnet")),
            cors: CorsPolicy::any(),
        }
    }
}

/// A running HTTP server on its own runtime. Dropping it stops the server.
pub struct Server {
    runtime: Runtime,
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
}

impl Server {
    pub fn start(state: AppState, listen: SocketAddr, cors: &CorsPolicy) -> io::Result<Server> {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let std_listener = std::net::TcpListener::bind(listen)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let listener = {
            let _guard = runtime.enter();
            tokio::net::TcpListener::from_std(std_listener)?
        };
        let app = router(state, cors);
        let (tx, rx) = oneshot::channel::<()>();
        runtime.spawn(async move {
            let served = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = served.await {
                log::error!("server stopped: {e}");
            }
        });
        log::info!("listening on http://{addr}/api/v1");
        Ok(Server { runtime, addr, shutdown: Some(tx) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs a future on the server's runtime, e.g. to wait for a signal.
    pub fn block_on<F: Future>(&self, f: F) -> F::Output {
        self.runtime.block_on(f)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Holds each event back until its wall-clock slot and publishes the
/// simulated time to the HTTP handlers.
pub struct Pacer {
    clock: Clock,
    compression: f64,
    sim_start: Timestamp,
    wall_start: Instant,
}

impl Pacer {
    pub fn new(clock: Clock, compression: f64, sim_start: Timestamp) -> Self {
        Pacer { clock, compression, sim_start, wall_start: Instant::now() }
    }

    /// Wall time offset at which the event at `at` may run.
    pub fn slot(&self, at: Timestamp) -> Option<Duration> {
        if !(self.compression.is_finite() && self.compression > 0.0) {
            return None;
        }
        let sim_s = (at - self.sim_start).max(0) as f64 / 1000.0;
        Some(Duration::from_secs_f64(sim_s / self.compression))
    }
}

impl RunHooks for Pacer {
    fn before_event(&mut self, at: Timestamp) {
        if let Some(slot) = self.slot(at) {
            let elapsed = self.wall_start.elapsed();
            if slot > elapsed {
                std::thread::sleep(slot - elapsed);
            }
        }
        self.clock.set(at);
    }
}

/// Runs `scenario` with the API live on `options.listen`. `on_ready` gets
/// the bound address before the first event. The server is returned still
/// running so the caller decides how long to keep serving.
pub fn serve_scenario(
    scenario: &Scenario,
    run: RunOptions,
    options: &ServeOptions,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<(Report, Server), ServeError> {
    let sim = Simulation::new(scenario, run.clone())?;
    let clock = Clock::shared(sim.start());
    let gateway = sim.gateway().clone();
    if let Some(op) = &options.operator {
        gateway.add_user(op);
    }
    let server = Server::start(AppState::new(gateway, clock.clone()), options.listen, &options.cors)?;
    on_ready(server.addr());
    let mut pacer = Pacer::new(clock, options.compression, sim.start());
    let controlled = sim.run_with(&mut pacer)?;
    let report = finish_report(scenario, run, controlled)?;
    Ok((report, server))
}
