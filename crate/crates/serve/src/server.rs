use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use dtnlab_core::ml::ModelArtifact;

use crate::{parse_request, predict_inprocess, HealthResponse};

#[derive(Debug, Default)]
pub struct ServiceStats {
    pub requests: AtomicU64,
    pub rejected: AtomicU64,
    pub inference_nanos: AtomicU64,
}

impl ServiceStats {
    pub fn mean_inference_seconds(&self) -> f64 {
        let served = self.requests.load(Ordering::Relaxed) - self.rejected.load(Ordering::Relaxed);
        if served == 0 {
            return 0.0;
        }
        self.inference_nanos.load(Ordering::Relaxed) as f64 * 1e-9 / served as f64
    }
}

/// The model is read-only after load; only the counters change.
pub struct AppState {
    pub model: ModelArtifact,
    pub stats: ServiceStats,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    state.stats.requests.fetch_add(1, Ordering::Relaxed);
    match parse_request(&body) {
        Ok(query) => {
            let t = Instant::now();
            let response = predict_inprocess(&state.model, &query);
            state.stats.inference_nanos.fetch_add(t.elapsed().as_nanos() as u64, Ordering::Relaxed);
            Json(response).into_response()
        }
        Err(e) => {
            state.stats.rejected.fetch_add(1, Ordering::Relaxed);
            (StatusCode::BAD_REQUEST, Json(e)).into_response()
        }
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        model_version: state.model.model_version.clone(),
        requests: state.stats.requests.load(Ordering::Relaxed),
        rejected: state.stats.rejected.load(Ordering::Relaxed),
        mean_inference_seconds: state.stats.mean_inference_seconds(),
    })
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new().route("/predict", post(predict)).route("/health", get(health)).with_state(state)
}

/// Serves until the process is stopped.
pub fn serve(model: ModelArtifact, bind: &str) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        let state = Arc::new(AppState { model, stats: ServiceStats::default() });
        axum::serve(listener, app(state)).await
    })
}

/// A service running on a background thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &ServiceStats {
        &self.state.stats
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `bind` (port 0 picks a free port) and serves on a background thread.
pub fn spawn(model: ModelArtifact, bind: &str) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(bind))?;
    let addr = listener.local_addr()?;
    let state = Arc::new(AppState { model, stats: ServiceStats::default() });
    let router = app(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle { addr, state, stop: Some(tx), thread: Some(thread) })
}
