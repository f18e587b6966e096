use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use segbench_core::geometry::{BoundingBox, Mask, Vec3, Volume};
use segbench_core::metrics::CaseMetrics;
use segbench_core::reconstruction::{reconstruct, Sweep, DEFAULT_RECONSTRUCTION_SPACING_MM};
use segbench_core::segmentation::{crop_grid, embed_mask, roi_with_margin, segment, PredictorHandle, ROI_MARGIN_MM};
use segbench_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::session::{apply_edit, full_grid_mask, render_slice, Axis, EditOp, MaskSummary, SessionState, Timings, Window};

pub const GEOMETRY_HEADER: &str = "x-slice-geometry";

/// One open case. The volume never changes; everything else sits behind
/// `state`. `ops` serializes mutating requests in arrival order without
/// blocking reads of `state` while a segmentation runs.
pub struct Session {
    pub id: String,
    pub source: String,
    pub volume: Arc<Volume>,
    pub state: RwLock<SessionState>,
    ops: tokio::sync::Mutex<()>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Session>>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("session table poisoned").get(id).cloned()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([header::HeaderName::from_static(GEOMETRY_HEADER)]);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/slice", get(get_slice))
        .route("/sessions/{id}/roi", put(set_roi))
        .route("/sessions/{id}/segment", post(run_segmentation))
        .route("/sessions/{id}/edits", post(add_edit).get(list_edits))
        .route("/sessions/{id}/mask", get(get_mask))
        .route("/sessions/{id}/export", post(export_case))
        .layer(cors)
        .with_state(state)
}

fn lookup(app: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    app.session(id).ok_or_else(|| ApiError::not_found(id))
}

// -----------------------------------------------------------------------------
// Sessions
// -----------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub sweep_dir: Option<PathBuf>,
    pub volume_path: Option<PathBuf>,
    /// Reconstruction voxel size for sweep sources.
    pub spacing_mm: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub source: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub extent: BoundingBox,
    pub intensity_range: [f64; 2],
    pub requested_roi: Option<BoundingBox>,
    pub roi: Option<BoundingBox>,
    pub predictor: Option<String>,
    pub tau: Option<f64>,
    pub mask: Option<MaskSummary>,
    pub edit_count: usize,
    pub timings: Timings,
}

fn info(s: &Session) -> SessionInfo {
    let st = s.state.read().expect("session poisoned");
    let g = s.volume.grid();
    let (lo, hi) = s.volume.min_max();
    SessionInfo {
        session_id: s.id.clone(),
        source: s.source.clone(),
        dims: g.dims(),
        spacing: (*g.spacing()).into(),
        origin: (*g.origin()).into(),
        extent: g.extent(),
        intensity_range: [lo, hi],
        requested_roi: st.requested_roi,
        roi: st.roi,
        predictor: st.predictor.clone(),
        tau: st.tau,
        mask: st.summary(),
        edit_count: st.edit_log.len(),
        timings: st.timings.clone(),
    }
}

fn load_source(req: &CreateSession) -> Result<(Volume, String, Option<f64>), String> {
    match (&req.sweep_dir, &req.volume_path) {
        (Some(dir), None) => {
            let spacing = req.spacing_mm.unwrap_or(DEFAULT_RECONSTRUCTION_SPACING_MM);
            let start = Instant::now();
            let sweep = Sweep::read_dir(dir).map_err(|e| e.to_string())?;
            let r = reconstruct(&sweep, &Vec3::repeat(spacing)).map_err(|e| e.to_string())?;
            Ok((r.volume, dir.display().to_string(), Some(start.elapsed().as_secs_f64())))
        }
        (None, Some(p)) => {
            let v = Volume::read_nrrd(p).map_err(|e| e.to_string())?;
            Ok((v, p.display().to_string(), None))
        }
        _ => Err("give exactly one of sweep_dir and volume_path".into()),
    }
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<Json<SessionInfo>> {
    let (volume, source, recon_s) = tokio::task::spawn_blocking(move || load_source(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let id = uuid::Uuid::new_v4().to_string();
    let state = SessionState {
        timings: Timings {
            reconstruction_s: recon_s,
            ..Timings::default()
        },
        ..SessionState::default()
    };
    let session = Arc::new(Session {
        id: id.clone(),
        source,
        volume: Arc::new(volume),
        state: RwLock::new(state),
        ops: tokio::sync::Mutex::new(()),
    });
    tracing::info!(session = %id, source = %session.source, "session created");
    app.sessions.write().expect("session table poisoned").insert(id, session.clone());
    Ok(Json(info(&session)))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let s = lookup(&app, &id)?;
    Ok(Json(info(&s)))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match app.sessions.write().expect("session table poisoned").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

// -----------------------------------------------------------------------------
// Slices
// -----------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    pub axis: Axis,
    pub index: usize,
    pub level: Option<f64>,
    pub width: Option<f64>,
}

async fn get_slice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<Response> {
    let s = lookup(&app, &id)?;
    let mask = full_grid_mask(&s.state.read().expect("session poisoned"), s.volume.grid());
    let window = Window {
        level: q.level,
        width: q.width,
    };
    let (png, geom) = render_slice(&s.volume, mask.as_ref(), q.axis, q.index, window).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("slice {} out of range for dims {:?}", q.index, s.volume.grid().dims()),
        )
    })?;
    let geom_json = serde_json::to_string(&geom).expect("geometry serializes");
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    resp.headers_mut().insert(
        GEOMETRY_HEADER,
        HeaderValue::from_str(&geom_json).expect("JSON is a valid header value"),
    );
    Ok(resp)
}

// -----------------------------------------------------------------------------
// ROI, segmentation, edits
// -----------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct RoiResponse {
    pub requested: BoundingBox,
    /// Requested box grown by the margin and clipped to the volume.
    pub effective: BoundingBox,
    pub margin_mm: f64,
    pub crop_dims: [usize; 3],
}

async fn set_roi(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<BoundingBox>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<RoiResponse>> {
    let s = lookup(&app, &id)?;
    let Json(requested) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let _op = s.ops.lock().await;
    let grid = s.volume.grid();
    let effective = roi_with_margin(&requested, ROI_MARGIN_MM, &grid.extent())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let crop = crop_grid(grid, &effective).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut st = s.state.write().expect("session poisoned");
    // A new crop invalidates any mask defined on the old one.
    st.clear_segmentation();
    st.requested_roi = Some(requested);
    st.roi = Some(effective);
    Ok(Json(RoiResponse {
        requested,
        effective,
        margin_mm: ROI_MARGIN_MM,
        crop_dims: crop.dims(),
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct SegmentRequest {
    pub predictor: Option<String>,
    pub tau: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub predictor: String,
    pub tau: f64,
    pub voxel_count: usize,
    pub volume_ml: f64,
    pub elapsed_s: f64,
}

fn predictor_status(e: &CoreError) -> StatusCode {
    match e {
        CoreError::PredictorFailed { .. }
        | CoreError::PredictorTimeout { .. }
        | CoreError::GridMismatch(_)
        | CoreError::InvalidProbability { .. }
        | CoreError::Nrrd { .. }
        | CoreError::Io { .. } => StatusCode::BAD_GATEWAY,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn run_segmentation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<SegmentRequest>>,
) -> ApiResult<Json<SegmentResponse>> {
    let s = lookup(&app, &id)?;
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let spec = req.predictor.unwrap_or_else(|| "threshold_model".into());
    let handle: PredictorHandle = spec
        .parse()
        .map_err(|e: CoreError| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let tau = req.tau.or(handle.tau()).unwrap_or(segbench_core::segmentation::DEFAULT_THRESHOLD);
    let _op = s.ops.lock().await;
    let (roi, requested) = {
        let st = s.state.read().expect("session poisoned");
        match (st.roi, st.requested_roi) {
            (Some(r), Some(q)) => (r, q),
            _ => return Err(ApiError::new(StatusCode::CONFLICT, "set an ROI before segmenting")),
        }
    };
    let volume = s.volume.clone();
    let h = handle.clone();
    let hint = requested.center();
    let seg = tokio::task::spawn_blocking(move || segment(&h, &volume, &roi, &hint, tau))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(predictor_status(&e), format!("predictor {handle}: {e}")))?;
    let mut st = s.state.write().expect("session poisoned");
    st.clear_segmentation();
    st.predictor = Some(handle.to_string());
    st.tau = Some(tau);
    st.timings.segmentation_s = Some(seg.elapsed_s);
    st.timings.total_s = Some(seg.elapsed_s);
    st.segmented_at = Some(Instant::now());
    let resp = SegmentResponse {
        predictor: handle.to_string(),
        tau,
        voxel_count: seg.mask.count(),
        volume_ml: seg.mask.volume_ml(),
        elapsed_s: seg.elapsed_s,
    };
    st.probability = Some(seg.probability);
    st.predicted_mask = Some(seg.mask.clone());
    st.mask = Some(seg.mask);
    Ok(Json(resp))
}

async fn add_edit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<EditOp>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<MaskSummary>> {
    let s = lookup(&app, &id)?;
    let Json(op) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let _op = s.ops.lock().await;
    let mut st = s.state.write().expect("session poisoned");
    if st.mask.is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "segment before editing"));
    }
    if !op.is_valid() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "sphere_radius must be > 0 and all coordinates finite",
        ));
    }
    apply_edit(st.mask.as_mut().expect("checked above"), &op);
    st.edit_log.push(op);
    if let Some(t0) = st.segmented_at {
        st.timings.correction_s = t0.elapsed().as_secs_f64();
    }
    st.timings.total_s = Some(st.timings.segmentation_s.unwrap_or_default() + st.timings.correction_s);
    Ok(Json(st.summary().expect("mask present")))
}

async fn list_edits(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<EditOp>>> {
    let s = lookup(&app, &id)?;
    let st = s.state.read().expect("session poisoned");
    Ok(Json(st.edit_log.clone()))
}

#[derive(Debug, Deserialize)]
pub struct MaskQuery {
    /// `current` (default) or `predicted`.
    pub stage: Option<String>,
}

/// The mask on the ROI-cropped grid as an NRRD file.
async fn get_mask(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
) -> ApiResult<Response> {
    let s = lookup(&app, &id)?;
    let mask = {
        let st = s.state.read().expect("session poisoned");
        match q.stage.as_deref().unwrap_or("current") {
            "current" => st.mask.clone(),
            "predicted" => st.predicted_mask.clone(),
            other => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown stage {other:?}"))),
        }
    }
    .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no mask yet"))?;
    let bytes = mask_bytes(&mask).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

fn mask_bytes(mask: &Mask) -> Result<Vec<u8>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path().join("mask.nrrd");
    mask.write_nrrd(&p).map_err(|e| e.to_string())?;
    std::fs::read(&p).map_err(|e| e.to_string())
}

// -----------------------------------------------------------------------------
// Export
// -----------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct ExportRequest {
    pub out_dir: PathBuf,
    /// Ground-truth mask to score against.
    pub gt_path: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportResponse {
    pub files: Vec<PathBuf>,
    pub metrics: Option<CaseMetrics>,
}

async fn export_case(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ExportRequest>,
) -> ApiResult<Json<ExportResponse>> {
    let s = lookup(&app, &id)?;
    let _op = s.ops.lock().await;
    let (mask, edits, timings, predictor, tau, roi) = {
        let st = s.state.read().expect("session poisoned");
        let mask = st.mask.clone().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no mask to export"))?;
        (mask, st.edit_log.clone(), st.timings.clone(), st.predictor.clone(), st.tau, st.roi)
    };
    let volume = s.volume.clone();
    tokio::task::spawn_blocking(move || -> Result<ExportResponse, ApiError> {
        let internal = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e);
        let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, e);
        std::fs::create_dir_all(&req.out_dir).map_err(|e| internal(format!("{}: {e}", req.out_dir.display())))?;
        let mut files = Vec::new();
        let mask_path = req.out_dir.join("mask.nrrd");
        mask.write_nrrd(&mask_path).map_err(|e| internal(e.to_string()))?;
        files.push(mask_path);
        let timing_path = req.out_dir.join("timing.json");
        let timing = json!({
            "timings": timings,
            "predictor": predictor,
            "tau": tau,
            "roi": roi,
            "edits": edits,
        });
        std::fs::write(&timing_path, serde_json::to_string_pretty(&timing).expect("serializable") + "\n")
            .map_err(|e| internal(e.to_string()))?;
        files.push(timing_path);
        let metrics = match &req.gt_path {
            None => None,
            Some(p) => {
                let gt = Mask::read_nrrd(p).map_err(|e| bad(e.to_string()))?;
                let full = embed_mask(&mask, volume.grid()).map_err(|e| internal(e.to_string()))?;
                let gt = gt.resample_onto(volume.grid());
                let m = CaseMetrics::compute(&full, &gt, timings.total_s.unwrap_or_default())
                    .map_err(|e| bad(e.to_string()))?;
                let metrics_path = req.out_dir.join("metrics.json");
                std::fs::write(&metrics_path, serde_json::to_string_pretty(&m).expect("serializable") + "\n")
                    .map_err(|e| internal(e.to_string()))?;
                files.push(metrics_path);
                Some(m)
            }
        };
        Ok(ExportResponse { files, metrics })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map(Json)
}
