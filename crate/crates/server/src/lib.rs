//! HTTP front end for a [`Gateway`]: the `/api/v1` routes the dashboard and
//! networked nodes talk to, plus serve mode, which runs a scenario paced
//! against the wall clock while the API is live.

mod error;
mod routes;
pub mod serve;
mod stream;

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::Router;
use stormnet_core::time::Timestamp;
use stormnet_core::Gateway;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::HttpError;
pub use routes::{AckRequest, ValveRequest};
pub use serve::{serve_scenario, Pacer, ServeError, ServeOptions, Server};
pub use stream::{StreamEvent, StreamHub};

/// Where request handlers get "now" from.
#[derive(Debug, Clone)]
pub enum Clock {
    /// Wall time in ms since the epoch.
    Wall,
    /// Virtual time, advanced by whoever owns the handle (serve mode).
    Shared(Arc<AtomicI64>),
}

impl Clock {
    pub fn shared(start: Timestamp) -> Self {
        Clock::Shared(Arc::new(AtomicI64::new(start)))
    }

    pub fn now(&self) -> Timestamp {
        match self {
            Clock::Wall => std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as i64)
                .unwrap_or(0),
            Clock::Shared(t) => t.load(Ordering::SeqCst),
        }
    }

    pub fn set(&self, at: Timestamp) {
        if let Clock::Shared(t) = self {
            t.store(at, Ordering::SeqCst);
        }
    }
}

/// Allowed origins for cross-origin requests. Empty disables the CORS layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorsPolicy {
    pub origins: Vec<String>,
}

impl CorsPolicy {
    pub fn any() -> Self {
        CorsPolicy { origins: vec!["*".into()] }
    }

    fn layer(&self) -> Option<CorsLayer> {
        if self.origins.is_empty() {
            return None;
        }
        let origin = if self.origins.iter().any(|o| o == "*") {
            AllowOrigin::from(Any)
        } else {
            AllowOrigin::list(self.origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
        };
        Some(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers(Any),
        )
    }
}

#[derive(Clone)]
pub struct AppState {
    pub gateway: Gateway,
    pub clock: Clock,
    pub hub: StreamHub,
}

impl AppState {
    /// Wires the stream hub to the gateway's store.
    pub fn new(gateway: Gateway, clock: Clock) -> Self {
        let hub = StreamHub::attach(gateway.store());
        AppState { gateway, clock, hub }
    }
}

/// The full `/api/v1` router.
pub fn router(state: AppState, cors: &CorsPolicy) -> Router {
    let app = routes::api(state);
    match cors.layer() {
        Some(layer) => app.layer(layer),
        None => app,
    }
}
