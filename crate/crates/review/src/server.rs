use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use log::info;
use tokio::sync::oneshot;

use crate::api::{router, CostOptions};
use crate::error::{Result, ReviewError};
use crate::store::ReviewStore;

/// A running review service. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://host:port` without a trailing slash.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections, lets in-flight requests finish and waits
    /// for the server thread.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop_and_join()
    }

    /// Blocks until Ctrl-C, then shuts down gracefully.
    pub fn run_until_ctrl_c(self) -> Result<()> {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| ReviewError::Internal(format!("signal runtime: {e}")))?;
        rt.block_on(tokio::signal::ctrl_c())
            .map_err(|e| ReviewError::Internal(format!("waiting for Ctrl-C: {e}")))?;
        info!("shutting down review service");
        self.shutdown()
    }

    fn stop_and_join(&mut self) -> Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(Err(e))) => Err(ReviewError::Internal(format!("server stopped with {e}"))),
            Some(Err(_)) => Err(ReviewError::Internal("server thread panicked".into())),
            _ => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` and serves the review API from a background thread.
/// Binding happens before this returns, so a busy port is reported here.
pub fn serve(store: Arc<ReviewStore>, addr: &str, cost: CostOptions) -> Result<ServerHandle> {
    let bind_err = |source| ReviewError::Bind { addr: addr.to_owned(), source };
    let listener = TcpListener::bind(addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let local = listener.local_addr().map_err(bind_err)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| ReviewError::Internal(format!("server runtime: {e}")))?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(store, cost);
    let thread = std::thread::Builder::new()
        .name("elseg-review".into())
        .spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        })
        .map_err(|e| ReviewError::Internal(format!("server thread: {e}")))?;
    info!("review service listening on http://{local}");
    Ok(ServerHandle {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}
