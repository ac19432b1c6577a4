//! HTTP gateway for one AI system: transparency headers on every response,
//! the first-contact consent gate, factsheets, artifacts, and the
//! subject-access dashboard endpoints.

pub mod auth;
pub mod config;
pub mod error;
mod handlers;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::{HeaderName, HeaderValue};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{delete, get, post};
use axum::Router;
use clearsign_core::{encode_sign_headers, Clock, Engine, SystemClock, SystemDocument};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::Mutex;

pub use auth::{StaticTokens, TokenVerifier};
pub use config::GatewayConfig;
pub use error::ApiError;

/// Where clients find the factsheet a consent prompt should show.
pub const FACTSHEET_LOCATOR: &str = "/factsheets/privacy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateOutcome {
    PassThrough,
    ConsentRequired,
    DegradedMode,
}

/// What the consent gate decided for one service call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConsentGateDecision {
    pub outcome: GateOutcome,
    pub pending: Vec<String>,
    pub factsheet: String,
}

/// Calls pass when the target service has a version-current grant or needs
/// no personal data. Otherwise they are held for consent, unless the
/// service declares a degraded fallback and the caller accepts one.
pub fn consent_gate(
    engine: &Engine,
    user_id: &str,
    service_id: &str,
    allow_degraded: bool,
) -> ConsentGateDecision {
    let pending = engine.pending_consents(user_id);
    let outcome = if !pending.iter().any(|s| s == service_id) {
        GateOutcome::PassThrough
    } else if allow_degraded
        && engine
            .service(service_id)
            .is_some_and(|d| d.degraded_fallback)
    {
        GateOutcome::DegradedMode
    } else {
        GateOutcome::ConsentRequired
    };
    ConsentGateDecision {
        outcome,
        pending,
        factsheet: FACTSHEET_LOCATOR.to_owned(),
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub verifier: Arc<dyn TokenVerifier>,
    persistence: Option<Arc<Persistence>>,
}

struct Persistence {
    path: PathBuf,
    saved: Mutex<u64>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, verifier: Arc<dyn TokenVerifier>) -> Self {
        Self {
            engine,
            verifier,
            persistence: None,
        }
    }

    /// Saves the engine state to `path` after every request that changed it.
    pub fn with_state_file(mut self, path: PathBuf) -> Self {
        let saved = self.engine.revision();
        self.persistence = Some(Arc::new(Persistence {
            path,
            saved: Mutex::new(saved),
        }));
        self
    }

    /// Writes the state file if the engine changed since the last save.
    pub async fn persist(&self) {
        let Some(p) = &self.persistence else { return };
        let mut saved = p.saved.lock().await;
        if self.engine.revision() == *saved {
            return;
        }
        let engine = self.engine.clone();
        let path = p.path.clone();
        match tokio::task::spawn_blocking(move || engine.save(&path)).await {
            Ok(Ok(rev)) => *saved = rev,
            Ok(Err(e)) => tracing::error!("saving state to {}: {e}", p.path.display()),
            Err(e) => tracing::error!("state save task failed: {e}"),
        }
    }
}

async fn transparency_headers(State(app): State<AppState>, req: Request, next: Next) -> Response {
    let mut res = next.run(req).await;
    app.persist().await;
    let headers = res.headers_mut();
    for (name, value) in encode_sign_headers(&app.engine.signs()).iter() {
        let name = HeaderName::from_bytes(name.as_bytes()).expect("sign header names are valid");
        headers.insert(
            name,
            HeaderValue::from_str(value).expect("sign header values are ascii"),
        );
    }
    res
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(handlers::health))
        .route("/signs", get(handlers::signs))
        .route("/factsheets/privacy", get(handlers::privacy_factsheet))
        .route(
            "/factsheets/transparency",
            get(handlers::transparency_factsheet),
        )
        .route(
            "/consents",
            get(handlers::list_consents).post(handlers::grant),
        )
        .route("/consents/{service_id}", delete(handlers::revoke))
        .route("/records", post(handlers::put_record))
        .route("/services/{service_id}/access", post(handlers::access))
        .route("/services/{service_id}/shares", post(handlers::share))
        .route(
            "/services/{service_id}/artifacts/{kind}",
            get(handlers::artifact),
        )
        .route("/views/{view_id}", get(handlers::view))
        .route("/my-data", get(handlers::my_data))
        .route("/my-data/erasure", post(handlers::erasure))
        .route("/my-data/rectification", post(handlers::rectification))
        .route("/my-data/trace", get(handlers::trace))
        .route("/complaints", post(handlers::complaint))
        .fallback(handlers::not_found)
        .layer(middleware::from_fn_with_state(
            state.clone(),
            transparency_headers,
        ))
        .with_state(state)
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("cannot read descriptor {path}: {source}")]
    Descriptor {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid descriptor: {0}")]
    DescriptorFormat(#[from] serde_json::Error),
    #[error("descriptor rejected: {0}")]
    Registry(#[from] clearsign_core::RegistryError),
    #[error("state file: {0}")]
    State(#[from] clearsign_core::engine::PersistError),
    #[error("state file audit trail is corrupted: {0}")]
    CorruptAudit(#[from] clearsign_core::FirstBadSeq),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Builds the engine for `cfg`: the saved state updated with the current
/// descriptor, or a fresh engine when there is no state yet.
pub fn build_engine(cfg: &GatewayConfig, clock: Arc<dyn Clock>) -> Result<Engine, StartError> {
    let text =
        std::fs::read_to_string(&cfg.descriptor).map_err(|source| StartError::Descriptor {
            path: cfg.descriptor.clone(),
            source,
        })?;
    let doc = SystemDocument::parse(&text)?;
    let engine = match cfg.state.as_deref().filter(|p| p.exists()) {
        Some(path) => {
            let engine = Engine::load(path, clock, cfg.engine_config())?;
            engine.verify_integrity()?;
            let changed = engine.apply_document(&doc)?;
            if !changed.is_empty() {
                tracing::info!(
                    "descriptor changed for {changed:?}; their consents must be given again"
                );
            }
            engine
        }
        None => {
            let id = doc.id.clone();
            Engine::new(doc.into_registry()?, &id, clock, cfg.engine_config())?
        }
    };
    Ok(engine)
}

pub fn app_state(cfg: &GatewayConfig, engine: Arc<Engine>) -> AppState {
    let state = AppState::new(engine, Arc::new(StaticTokens::new(cfg.tokens.clone())));
    match &cfg.state {
        Some(p) => state.with_state_file(p.clone()),
        None => state,
    }
}

/// Runs the gateway until ctrl-c.
pub async fn serve(cfg: GatewayConfig) -> Result<(), StartError> {
    let engine = Arc::new(build_engine(&cfg, Arc::new(SystemClock))?);
    let state = app_state(&cfg, engine.clone());
    if let Some(p) = &cfg.state {
        save_now(&engine, p)?;
    }
    let listener = tokio::net::TcpListener::bind(&cfg.listen)
        .await
        .map_err(|source| StartError::Bind {
            addr: cfg.listen.clone(),
            source,
        })?;
    tracing::info!("serving system {:?} on {}", engine.system_id(), cfg.listen);

    let maintenance = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(std::time::Duration::from_secs(60));
            loop {
                tick.tick().await;
                if state.engine.maintain() {
                    state.persist().await;
                }
            }
        })
    };
    let result = axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(StartError::Serve);
    maintenance.abort();
    state.persist().await;
    result
}

fn save_now(engine: &Engine, path: &Path) -> Result<(), StartError> {
    engine.save(path)?;
    Ok(())
}
