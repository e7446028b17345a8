//! Local HTTP gateway over the host toolkit.
//!
//! Request/response calls live under `/api`; `/api/stream` is a single
//! server-sent-events stream carrying every message kind. Virtual time is
//! paced against the wall clock so live sessions render in real time. See
//! `API.md` at the repository root for the endpoint and message reference.

pub mod api;
pub mod bus;
mod error;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{ApiMessage, ErrorBody, Kind};
pub use error::ApiError;
pub use routes::{router, CLIENT_HEADER};
pub use state::{spawn_pacer, AppState, Pacing};

use ringlab_core::hostkit::Host;

pub const DEFAULT_PORT: u16 = 8737;
pub const PORT_ENV: &str = "RINGLAB_PORT";

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub addr: SocketAddr,
    /// Virtual seconds per wall-clock second.
    pub speed: f64,
    /// Where exports and fetched files are written.
    pub out_dir: PathBuf,
    /// Static console assets served at `/`.
    pub assets: Option<PathBuf>,
    /// Default scan window for the device list.
    pub scan_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            speed: 1.0,
            out_dir: PathBuf::from("ringlab-out"),
            assets: None,
            scan_ms: 1000,
        }
    }
}

/// Serve until `shutdown` resolves. `on_bound` receives the bound address,
/// which differs from the configured one when port 0 is requested.
pub async fn serve(
    host: Host,
    config: GatewayConfig,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    on_bound(listener.local_addr()?);
    let state = AppState::new(host, config);
    let pacer = spawn_pacer(&state);
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    pacer.abort();
    result
}
