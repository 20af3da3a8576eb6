//! Session-oriented HTTP API for interactive keypoint editing.
//!
//! Every deformation starts from the session's original mesh, so a request
//! depends only on the session's upload and its own payload.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use keydeform::cage::points_hash;
use keydeform::deformer::KeypointSet;
use keydeform::geom::{parse_obj, write_obj, Mesh};
use keydeform::pipeline::{round_points, EditableShape};
use keydeform::prior::{synchronize, PcaPrior};
use keydeform::Vec3;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::ops::{builtin_mesh, prior_keypoints, Model};

pub const DEFAULT_MAX_UPLOAD: usize = 2 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }

    fn unprocessable(message: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn conflict(message: impl ToString) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "status": self.status.as_u16() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Session {
    shape: EditableShape,
    /// Predicted keypoints in mesh coordinates, as sent to the client.
    original_keypoints: KeypointSet,
    current_keypoints: KeypointSet,
    /// Hash of the normalized vertices and cage the cached weights belong to.
    weights_key: String,
}

impl Session {
    fn new(model: &Model, mesh: &Mesh) -> keydeform::Result<Self> {
        let shape = model.prepare(mesh)?;
        let original_keypoints = KeypointSet {
            points: round_points(&shape.keypoints_original().points),
        };
        let weights_key = weights_key(&shape);
        Ok(Self {
            current_keypoints: original_keypoints.clone(),
            original_keypoints,
            shape,
            weights_key,
        })
    }
}

fn weights_key(shape: &EditableShape) -> String {
    let normalized: Vec<Vec3> = shape.original.vertices.iter().map(|&p| shape.transform.apply(p)).collect();
    format!("{}:{}", points_hash(&normalized), shape.prepared.cage.content_hash())
}

pub struct AppState {
    pub model: Model,
    pub prior: Option<PcaPrior>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(model: Model, prior: Option<PcaPrior>) -> Self {
        Self {
            model,
            prior,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }

    /// The loaded prior, provided it matches the checkpoint.
    fn prior(&self) -> Result<&PcaPrior, ApiError> {
        let prior = self.prior.as_ref().ok_or_else(|| ApiError::conflict("no prior loaded"))?;
        if prior.num_keypoints != self.model.num_keypoints() {
            return Err(ApiError::conflict(format!(
                "prior has {} keypoints, checkpoint has {}",
                prior.num_keypoints,
                self.model.num_keypoints()
            )));
        }
        Ok(prior)
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>, max_upload: usize) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/deform", post(deform))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/prior", post(deform_from_prior))
        .route("/prior", get(get_prior))
        .layer(DefaultBodyLimit::max(max_upload))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Serialize)]
struct MeshView {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl MeshView {
    fn of(vertices: &[Vec3], faces: &[[usize; 3]]) -> Self {
        Self {
            vertices: round_points(vertices),
            faces: faces.to_vec(),
        }
    }
}

#[derive(Serialize)]
struct SessionView {
    session_id: String,
    num_keypoints: usize,
    mesh: MeshView,
    keypoints: Vec<Vec3>,
    original_keypoints: Vec<Vec3>,
    cage: MeshView,
}

fn view(id: &str, s: &Session) -> SessionView {
    let cage = s.shape.cage_original();
    SessionView {
        session_id: id.to_string(),
        num_keypoints: s.shape.num_keypoints(),
        mesh: MeshView::of(&s.shape.original.vertices, &s.shape.original.faces),
        keypoints: s.current_keypoints.points.clone(),
        original_keypoints: s.original_keypoints.points.clone(),
        cage: MeshView::of(&cage.vertices, &cage.faces),
    }
}

#[derive(Serialize)]
struct DeformView {
    session_id: String,
    keypoints: Vec<Vec3>,
    vertices: Vec<Vec3>,
    /// Full-precision OBJ of the deformed mesh.
    obj: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let header = &state.model.checkpoint.header;
    Json(json!({
        "status": "ok",
        "category": header.category,
        "num_keypoints": header.num_keypoints,
        "cage_vertices": header.cage_vertices,
        "checkpoint": header.checksum,
        "prior": state.prior.is_some(),
        "sessions": state.sessions.read().expect("session table poisoned").len(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    obj: Option<String>,
    builtin: Option<String>,
}

/// Accepts `{"obj": "..."}`, `{"builtin": "winged"}` or a raw OBJ body.
async fn create_session(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<SessionView> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let mesh = if is_json {
        let req: CreateSession = serde_json::from_slice(&body).map_err(ApiError::unprocessable)?;
        match (req.obj, req.builtin) {
            (Some(obj), None) => parse_obj(&obj, "upload").map_err(ApiError::unprocessable)?,
            (None, Some(name)) => builtin_mesh(&name).map_err(ApiError::unprocessable)?,
            _ => return Err(ApiError::unprocessable("give exactly one of obj or builtin")),
        }
    } else {
        let text = std::str::from_utf8(&body).map_err(ApiError::unprocessable)?;
        parse_obj(text, "upload").map_err(ApiError::unprocessable)?
    };
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || Session::new(&st.model, &mesh))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
        .map_err(ApiError::unprocessable)?;
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let v = view(&id, &session);
    state
        .sessions
        .write()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(v))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let s = state.session(&id)?;
    let s = s.lock().expect("session poisoned");
    Ok(Json(view(&id, &s)))
}

async fn reset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let s = state.session(&id)?;
    let mut s = s.lock().expect("session poisoned");
    s.current_keypoints = s.original_keypoints.clone();
    Ok(Json(view(&id, &s)))
}

#[derive(Deserialize)]
struct DeformRequest {
    edited_keypoints: Vec<Vec3>,
    #[serde(default)]
    sync: bool,
    /// Indices the user moved; inferred from the payload when absent.
    #[serde(default)]
    edited: Option<Vec<usize>>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::unprocessable)
}

fn checked_keypoints(points: Vec<Vec3>, k: usize) -> Result<KeypointSet, ApiError> {
    if points.len() != k {
        return Err(ApiError::unprocessable(format!("expected {k} keypoints, got {}", points.len())));
    }
    KeypointSet::new(points).map_err(ApiError::unprocessable)
}

fn run_deform(id: &str, s: &mut Session, target: KeypointSet) -> ApiResult<DeformView> {
    if weights_key(&s.shape) != s.weights_key {
        return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "cached cage weights do not match the mesh"));
    }
    let mesh = s.shape.deform(&target).map_err(ApiError::unprocessable)?;
    let obj = write_obj(&mesh);
    s.current_keypoints = target;
    Ok(Json(DeformView {
        session_id: id.to_string(),
        keypoints: round_points(&s.current_keypoints.points),
        vertices: round_points(&mesh.vertices),
        obj,
    }))
}

async fn deform(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<DeformView> {
    let s = state.session(&id)?;
    let req: DeformRequest = parse_json(&body)?;
    let k = state.model.num_keypoints();
    let mut target = checked_keypoints(req.edited_keypoints, k)?;
    let mut s = s.lock().expect("session poisoned");
    if req.sync {
        let prior = state.prior()?;
        let edited: Vec<usize> = match req.edited {
            Some(idx) => {
                if let Some(bad) = idx.iter().find(|&&i| i >= k) {
                    return Err(ApiError::unprocessable(format!("edited index {bad} out of range")));
                }
                idx
            }
            None => (0..k).filter(|&i| target.points[i] != s.original_keypoints.points[i]).collect(),
        };
        if !edited.is_empty() {
            let edits: Vec<(usize, Vec3)> =
                edited.iter().map(|&i| (i, s.shape.transform.apply(target.points[i]))).collect();
            let synced = synchronize(prior, &edits).map_err(ApiError::unprocessable)?;
            for (i, p) in synced.points.iter().enumerate() {
                if !edited.contains(&i) {
                    target.points[i] = s.shape.transform.invert(*p);
                }
            }
        }
    }
    run_deform(&id, &mut s, target)
}

async fn get_prior(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    if state.prior.is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "no prior loaded"));
    }
    let prior = state.prior()?;
    Ok(Json(json!({
        "num_keypoints": prior.num_keypoints,
        "n_basis": prior.n_basis(),
        "std_devs": prior.std_devs(),
        "singular_values": prior.singular_values,
        "rank_deficient": prior.rank_deficient,
        "samples": prior.samples,
    })))
}

async fn deform_from_prior(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<DeformView> {
    let s = state.session(&id)?;
    let req: crate::ops::Coefficients = parse_json(&body)?;
    let prior = state.prior()?;
    if req.coefficients.len() != prior.n_basis() || req.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(ApiError::unprocessable(format!("expected {} finite coefficients", prior.n_basis())));
    }
    let mut s = s.lock().expect("session poisoned");
    let target = prior_keypoints(prior, &s.shape, &req.coefficients).map_err(ApiError::unprocessable)?;
    run_deform(&id, &mut s, target)
}
