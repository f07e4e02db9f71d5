//! HTTP and WebSocket service hosting both analysis backends in one
//! process. The skeleton backend lives under `/skel-api` and `/skel-ws`,
//! the VLM backend under `/api` and `/ws`; both expose the same routes.

pub mod api;
pub mod error;
pub mod live;
pub mod session;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use edgeguard_core::config::AppConfig;
use edgeguard_core::storage::{AlertStore, Backend, FileAlertStore, StorageLayout};

pub use api::{api_prefix, router, ws_prefix, UploadReceipt};
pub use error::{ApiError, ErrorCode};
pub use live::{LiveHub, Subscription};
pub use session::{BackendRuntime, StatsView};

pub struct Service {
    config: Arc<AppConfig>,
    layout: StorageLayout,
    store: Arc<dyn AlertStore>,
    skel: Arc<BackendRuntime>,
    vlm: Arc<BackendRuntime>,
}

impl Service {
    /// Creates the storage hierarchy and reloads persisted alerts.
    pub fn open(config: AppConfig) -> edgeguard_core::Result<Arc<Self>> {
        let layout = StorageLayout::create(&config.service.storage_root)?;
        let store: Arc<dyn AlertStore> = Arc::new(FileAlertStore::open(layout.clone())?);
        let config = Arc::new(config);
        let rt = |b| BackendRuntime::new(b, config.clone(), layout.clone(), store.clone());
        Ok(Arc::new(Service { skel: rt(Backend::Skeleton), vlm: rt(Backend::Vlm), config, layout, store }))
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn layout(&self) -> &StorageLayout {
        &self.layout
    }

    pub fn store(&self) -> &Arc<dyn AlertStore> {
        &self.store
    }

    pub fn backend(&self, b: Backend) -> &Arc<BackendRuntime> {
        match b {
            Backend::Skeleton => &self.skel,
            Backend::Vlm => &self.vlm,
        }
    }

    /// Stops any running sessions and waits for them to drain.
    pub fn shutdown(&self) {
        self.skel.shutdown();
        self.vlm.shutdown();
    }
}

/// Serves until `shutdown` resolves, then stops running sessions.
pub async fn serve(
    service: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service.clone())).with_graceful_shutdown(shutdown).await?;
    tokio::task::spawn_blocking(move || service.shutdown()).await.map_err(std::io::Error::other)
}

/// A server on its own runtime thread; dropping it shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    service: Arc<Service>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| std::io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

pub fn spawn_server(service: Arc<Service>, bind: &str) -> std::io::Result<ServerHandle> {
    let std_listener = std::net::TcpListener::bind(bind)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let svc = service.clone();
    let thread = std::thread::Builder::new().name("edgeguard-http".into()).spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().worker_threads(2).build()?;
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener)?;
            serve(svc, listener, async {
                let _ = rx.await;
            })
            .await
        })
    })?;
    Ok(ServerHandle { addr, service, shutdown: Some(tx), thread: Some(thread) })
}
