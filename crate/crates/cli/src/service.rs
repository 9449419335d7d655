//! HTTP/JSON session service.
//!
//! Denials are answered with 200 and `"status": "denied"`. Error codes:
//! 400 for malformed bodies and invalid queries, 404 for unknown sessions
//! or datasets, 409 for closed sessions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use privclean_core::accountant::{AccountantMode, PrivacyParams};
use privclean_core::cleaners::Budget;
use privclean_core::engine::{Session, SessionStatus};
use privclean_core::query::DataBinding;
use privclean_core::Error as CoreError;
use rand::TryRngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{base_dir, ServiceConfig, SessionDefaults};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::SessionState(_) => StatusCode::CONFLICT,
            CoreError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

/// Accepts `"sequential"`, `"moments"`, or a full accountant object.
#[derive(Deserialize)]
#[serde(untagged)]
enum ModeArg {
    Name(String),
    Full(AccountantMode),
}

impl ModeArg {
    fn resolve(self) -> ApiResult<AccountantMode> {
        let mode = match self {
            ModeArg::Name(n) => match n.as_str() {
                "sequential" => AccountantMode::Sequential,
                "moments" => AccountantMode::moments(),
                other => {
                    return Err(ApiError::new(
                        StatusCode::BAD_REQUEST,
                        format!("unknown accountant mode `{other}`"),
                    ))
                }
            },
            ModeArg::Full(m) => m,
        };
        mode.validate()?;
        Ok(mode)
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateSession {
    dataset: String,
    /// Absent means the configured default; `null` means unlimited.
    #[serde(default, alias = "B", deserialize_with = "present")]
    budget: Option<Budget>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    mode: Option<ModeArg>,
}

fn present<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Budget>, D::Error> {
    Budget::deserialize(d).map(Some)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetInfo {
    pub id: String,
    pub attributes: Vec<String>,
    pub base_tables: Vec<String>,
    pub pairs: usize,
    pub positives: usize,
}

enum SeedSource {
    Fixed(u64),
    Os,
}

pub struct AppState {
    datasets: Vec<(String, Arc<DataBinding>)>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    defaults: SessionDefaults,
    seeds: SeedSource,
    next_id: AtomicU64,
    trace_dir: Option<PathBuf>,
}

/// splitmix64, so that fixed-seed sessions get unrelated streams.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl AppState {
    /// Loads every registered dataset; fails if any of them does not load.
    pub fn from_config(cfg: &ServiceConfig, config_path: &Path) -> anyhow::Result<Self> {
        cfg.validate()?;
        let base = base_dir(config_path);
        let datasets = cfg
            .datasets
            .iter()
            .map(|d| Ok((d.id.clone(), Arc::new(d.load(&base)?))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let trace_dir = cfg.trace_dir.as_ref().map(|d| {
            if d.is_relative() {
                base.join(d)
            } else {
                d.clone()
            }
        });
        Ok(Self::new(
            datasets,
            cfg.defaults.clone(),
            cfg.seed,
            trace_dir,
        ))
    }

    pub fn new(
        datasets: Vec<(String, Arc<DataBinding>)>,
        defaults: SessionDefaults,
        seed: Option<u64>,
        trace_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            datasets,
            sessions: RwLock::new(HashMap::new()),
            defaults,
            seeds: seed.map_or(SeedSource::Os, SeedSource::Fixed),
            next_id: AtomicU64::new(1),
            trace_dir,
        }
    }

    fn dataset(&self, id: &str) -> ApiResult<Arc<DataBinding>> {
        self.datasets
            .iter()
            .find(|(name, _)| name == id)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn seed_for(&self, n: u64) -> ApiResult<u64> {
        match self.seeds {
            SeedSource::Fixed(base) => Ok(mix(base, n)),
            SeedSource::Os => rand::rngs::OsRng.try_next_u64().map_err(|e| {
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    format!("no entropy: {e}"),
                )
            }),
        }
    }

    /// The JSON-lines trace of a session. Operator-side only: it carries
    /// the noise seed and is never served over HTTP.
    pub fn export_trace(&self, id: &str) -> anyhow::Result<Vec<u8>> {
        let session = self.session(id).map_err(|e| anyhow::anyhow!(e.message))?;
        let mut out = Vec::new();
        session
            .lock()
            .expect("session poisoned")
            .export_trace(&mut out)?;
        Ok(out)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status).delete(close_session))
        .route("/sessions/{id}/queries", post(submit_query))
        .with_state(state)
}

async fn list_datasets(State(app): State<Arc<AppState>>) -> Json<Vec<DatasetInfo>> {
    Json(
        app.datasets
            .iter()
            .map(|(id, d)| {
                let meta = d.public_metadata();
                DatasetInfo {
                    id: id.clone(),
                    attributes: meta.schema.attributes().to_vec(),
                    base_tables: meta.base_tables,
                    pairs: meta.pairs,
                    positives: meta.positives,
                }
            })
            .collect(),
    )
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionStatus>)> {
    let req: CreateSession = parse_body(&body)?;
    let data = app.dataset(&req.dataset)?;
    let privacy = PrivacyParams::new(
        req.budget.map_or(app.defaults.budget, |b| b.0),
        req.delta.unwrap_or(app.defaults.delta),
    )?;
    let mode = match req.mode {
        Some(m) => m.resolve()?,
        None => app.defaults.mode.clone(),
    };
    let n = app.next_id.fetch_add(1, Ordering::Relaxed);
    let id = format!("s{n}");
    let session = Session::open(
        id.clone(),
        req.dataset,
        data,
        privacy,
        mode,
        app.seed_for(n)?,
    )?;
    let status = session.status();
    app.sessions
        .write()
        .expect("session map poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(status)))
}

async fn session_status(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionStatus>> {
    let session = app.session(&id)?;
    let status = session.lock().expect("session poisoned").status();
    Ok(Json(status))
}

async fn submit_query(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = app.session(&id)?;
    let req = parse_body(&body)?;
    let resp = session.lock().expect("session poisoned").submit(&req)?;
    Ok(Json(resp).into_response())
}

async fn close_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionStatus>> {
    let session = app.session(&id)?;
    let mut s = session.lock().expect("session poisoned");
    if s.state() == privclean_core::engine::SessionState::Closed {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session `{id}` is already closed"),
        ));
    }
    s.close();
    if let Some(dir) = &app.trace_dir {
        let path = dir.join(format!("{id}.jsonl"));
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::File::create(&path))
            .map_err(|e| {
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    format!("writing {}: {e}", path.display()),
                )
            })
            .and_then(|f| {
                s.export_trace(std::io::BufWriter::new(f))
                    .map_err(ApiError::from)
            })?;
    }
    Ok(Json(s.status()))
}

/// Binds and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig, config_path: &Path) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&cfg, config_path)?);
    let listener = tokio::net::TcpListener::bind(&cfg.listen).await?;
    eprintln!("privclean listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
