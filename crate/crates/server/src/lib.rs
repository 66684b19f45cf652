//! HTTP API for the composition framework. All endpoints live under `/v1`
//! and speak JSON; errors use the body `{code, message, detail?}`.

mod app;
mod error;
mod routes;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;

pub use app::{App, ComposeOutcome, ServedFrom, StartError, Stats};
pub use error::{status_for, ApiError};
pub use routes::{router, LATENCY_HEADER, SERVED_FROM_HEADER, USER_HEADER};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub store: PathBuf,
    pub catalog: PathBuf,
    pub bind: SocketAddr,
}

/// Serves `app` on `listener` until `shutdown` resolves. In-flight requests
/// finish first; store writes are synchronous, so nothing is left to flush
/// beyond waiting for the store lock.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: App,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app.clone())).with_graceful_shutdown(shutdown).await?;
    app.with_store(|_| ());
    Ok(())
}

/// Opens the store and catalog, binds, and serves until Ctrl-C.
pub async fn run(config: ServerConfig) -> Result<(), StartError> {
    let app = App::open(&config.store, &config.catalog)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await.map_err(|source| StartError::BindFailed {
        addr: config.bind.to_string(),
        source,
    })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, app, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    })
    .await?;
    Ok(())
}
