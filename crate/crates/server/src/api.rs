//! HTTP interface. JSON bodies, `X-User: <id>` identifies the caller on the
//! user-facing routes; detector routes are open.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | /events/capture | `CaptureUpload` | `RecordSummary` |
//! | POST | /events/collaboration | `CollaborationInterval` | `{"upgraded": n}` |
//! | POST | /events/motion | `MotionNotice` | `{"forwarded": bool}` |
//! | GET | /assignments/{detector} | `?since=rev` | `AssignmentDelta` |
//! | GET | /me | | `User` |
//! | GET | /cameras | | `[CameraSummary]` |
//! | PUT | /cameras/{id}/capture-enabled | `{"enabled": bool}` | `CaptureEnabledAck` |
//! | POST | /cameras/{id}/manual-capture | | `ManualCaptureAck` |
//! | PUT | /cameras/{id}/detectors | `AssignRequest` | `{"revision": n}` |
//! | GET | /captures | filter query | `[RecordSummary]` |
//! | GET | /captures/{id} | | `RecordDetail` |
//! | GET | /captures/{id}/image | `?max_height=n` | PNG |
//! | POST | /captures/{id}/share | `ShareRequest` | `RecordDetail` |
//! | PATCH | /captures/{id}/metadata | `MetadataPatch` | `RecordDetail` |
//! | GET | /views/calendar | filter query | `[DaySummary]` |
//! | GET | /views/timeline | filter query | `[TimelineBar]` |
//! | GET | /views/heatmap | filter query | `HeatmapGrid` |
//! | GET | /views/region-select | filter query + `sel=c0,r0,c1,r1` | `RegionSelection` |
//!
//! Filter queries use the `FilterContext` query form (`cameras=1,2&from=..&
//! to=..&types=personal,shared&keyword=..&region=..&cells=..`). Errors come
//! back as `{"error": code, "message": text}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, RawQuery, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use reboard_core::collab::CollaborationInterval;
use reboard_core::wire::{ApiError, CaptureUpload, MotionNotice};
use reboard_core::{CameraId, DetectorId, RecordId, UserId};

use crate::coordinator::{AssignRequest, CoordError, Coordinator, MetadataPatch, ShareRequest};
use crate::retrieval::{FilterContext, RetrievalError};

pub type Shared = Arc<Coordinator>;

#[derive(Debug)]
pub struct Failure(pub CoordError);

impl From<CoordError> for Failure {
    fn from(e: CoordError) -> Self {
        Failure(e)
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        Failure(e.into())
    }
}

/// Status code and error code for a coordinator error.
pub fn classify(e: &CoordError) -> (StatusCode, &'static str) {
    use CoordError::*;
    match e {
        Unauthenticated => (StatusCode::UNAUTHORIZED, "unauthenticated"),
        NotOwner => (StatusCode::FORBIDDEN, "not_owner"),
        NotAuthorized => (StatusCode::FORBIDDEN, "not_authorized"),
        NotAdmin => (StatusCode::FORBIDDEN, "not_admin"),
        UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
        UnknownDetector(_) => (StatusCode::NOT_FOUND, "unknown_detector"),
        UnknownCamera(_) => (StatusCode::NOT_FOUND, "unknown_camera"),
        UnknownRecord(_) => (StatusCode::NOT_FOUND, "unknown_record"),
        CaptureDisabled(_) => (StatusCode::CONFLICT, "capture_disabled"),
        NoDetector(_) => (StatusCode::CONFLICT, "no_detector"),
        EmptyChange => (StatusCode::BAD_REQUEST, "empty_change"),
        Invalid(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
        Retrieval(RetrievalError::MalformedFilter(_)) => (StatusCode::BAD_REQUEST, "malformed_filter"),
        Retrieval(RetrievalError::MalformedRange { .. }) => (StatusCode::BAD_REQUEST, "malformed_range"),
        Retrieval(RetrievalError::NoCameraSelected) => (StatusCode::BAD_REQUEST, "no_camera_selected"),
        Retrieval(RetrievalError::EmptySelection) => (StatusCode::BAD_REQUEST, "empty_selection"),
        Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let (status, code) = classify(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ApiError {
            error: code.to_owned(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, Failure>;

/// The authenticated caller.
pub struct Caller(pub UserId);

impl<S: Send + Sync> FromRequestParts<S> for Caller {
    type Rejection = Failure;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        parts
            .headers
            .get("x-user")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|id| Caller(UserId(id)))
            .ok_or(Failure(CoordError::Unauthenticated))
    }
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| Failure(CoordError::Invalid(format!("request body: {e}"))))
}

/// Runs a coordinator call off the async executor.
async fn blocking<T, F>(coord: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Coordinator) -> Result<T, CoordError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&coord))
        .await
        .map_err(|e| Failure(CoordError::Storage(format!("worker failed: {e}"))))?
        .map_err(Failure)
}

fn filter(query: Option<String>) -> ApiResult<FilterContext> {
    Ok(FilterContext::from_query(query.as_deref().unwrap_or(""))?)
}

pub fn router(coord: Shared) -> Router {
    Router::new()
        .route("/events/capture", post(post_capture))
        .route("/events/collaboration", post(post_collaboration))
        .route("/events/motion", post(post_motion))
        .route("/assignments/{detector}", get(get_assignments))
        .route("/me", get(get_me))
        .route("/cameras", get(get_cameras))
        .route("/cameras/{id}/capture-enabled", put(put_capture_enabled))
        .route("/cameras/{id}/manual-capture", post(post_manual_capture))
        .route("/cameras/{id}/detectors", put(put_detectors))
        .route("/captures", get(get_captures))
        .route("/captures/{id}", get(get_capture))
        .route("/captures/{id}/image", get(get_image))
        .route("/captures/{id}/share", post(post_share))
        .route("/captures/{id}/metadata", patch(patch_metadata))
        .route("/views/calendar", get(get_calendar))
        .route("/views/timeline", get(get_timeline))
        .route("/views/heatmap", get(get_heatmap))
        .route("/views/region-select", get(get_region_select))
        .fallback(|| async {
            let body = ApiError {
                error: "not_found".into(),
                message: "no such route".into(),
            };
            (StatusCode::NOT_FOUND, Json(body))
        })
        .with_state(coord)
}

async fn post_capture(State(c): State<Shared>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let upload: CaptureUpload = body(&bytes)?;
    let summary = blocking(c, move |c| c.ingest_capture(&upload)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn post_collaboration(State(c): State<Shared>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let interval: CollaborationInterval = body(&bytes)?;
    let upgraded = blocking(c, move |c| c.ingest_collaboration(&interval)).await?;
    Ok(Json(json!({ "upgraded": upgraded })))
}

async fn post_motion(State(c): State<Shared>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let notice: MotionNotice = body(&bytes)?;
    let forwarded = blocking(c, move |c| c.notify_motion(&notice)).await?;
    Ok(Json(json!({ "forwarded": forwarded })))
}

#[derive(Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: u64,
}

async fn get_assignments(
    State(c): State<Shared>,
    Path(detector): Path<String>,
    RawQuery(q): RawQuery,
) -> ApiResult<impl IntoResponse> {
    let since: SinceQuery = parse_query(q)?;
    let id = DetectorId(detector);
    Ok(Json(blocking(c, move |c| c.poll_assignments(&id, since.since)).await?))
}

fn parse_query<T: DeserializeOwned>(q: Option<String>) -> ApiResult<T> {
    let pairs: serde_json::Map<String, serde_json::Value> = form_urlencoded::parse(q.as_deref().unwrap_or("").as_bytes())
        .map(|(k, v)| {
            let value = v.parse::<u64>().map_or_else(|_| json!(v), |n| json!(n));
            (k.into_owned(), value)
        })
        .collect();
    serde_json::from_value(serde_json::Value::Object(pairs))
        .map_err(|e| Failure(RetrievalError::MalformedFilter(e.to_string()).into()))
}

async fn get_me(State(c): State<Shared>, Caller(u): Caller) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(c, move |c| c.authenticate(u)).await?))
}

async fn get_cameras(State(c): State<Shared>, Caller(u): Caller) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(c, move |c| c.cameras(u)).await?))
}

#[derive(Serialize, Deserialize)]
struct EnabledBody {
    enabled: bool,
}

async fn put_capture_enabled(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    let b: EnabledBody = body(&bytes)?;
    Ok(Json(blocking(c, move |c| c.set_capture_enabled(u, CameraId(id), b.enabled)).await?))
}

async fn post_manual_capture(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
) -> ApiResult<impl IntoResponse> {
    let ack = blocking(c, move |c| c.request_manual_capture(u, CameraId(id))).await?;
    Ok((StatusCode::ACCEPTED, Json(ack)))
}

async fn put_detectors(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: AssignRequest = body(&bytes)?;
    let revision = blocking(c, move |c| c.assign_camera(u, CameraId(id), &req)).await?;
    Ok(Json(json!({ "revision": revision })))
}

async fn get_captures(State(c): State<Shared>, Caller(u): Caller, RawQuery(q): RawQuery) -> ApiResult<impl IntoResponse> {
    let ctx = filter(q)?;
    Ok(Json(blocking(c, move |c| c.query_captures(u, &ctx)).await?))
}

async fn get_capture(State(c): State<Shared>, Caller(u): Caller, Path(id): Path<u64>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(c, move |c| c.record_detail(u, RecordId(id))).await?))
}

#[derive(Deserialize)]
struct ImageQuery {
    max_height: Option<u32>,
}

async fn get_image(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
    RawQuery(q): RawQuery,
) -> ApiResult<impl IntoResponse> {
    let q: ImageQuery = parse_query(q)?;
    let png = blocking(c, move |c| c.record_image(u, RecordId(id), q.max_height)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn post_share(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: ShareRequest = body(&bytes)?;
    Ok(Json(blocking(c, move |c| c.share(u, RecordId(id), &req)).await?))
}

async fn patch_metadata(
    State(c): State<Shared>,
    Caller(u): Caller,
    Path(id): Path<u64>,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    let patch: MetadataPatch = body(&bytes)?;
    Ok(Json(blocking(c, move |c| c.set_metadata(u, RecordId(id), &patch)).await?))
}

async fn get_calendar(State(c): State<Shared>, Caller(u): Caller, RawQuery(q): RawQuery) -> ApiResult<impl IntoResponse> {
    let ctx = filter(q)?;
    Ok(Json(blocking(c, move |c| c.calendar(u, &ctx)).await?))
}

async fn get_timeline(State(c): State<Shared>, Caller(u): Caller, RawQuery(q): RawQuery) -> ApiResult<impl IntoResponse> {
    let ctx = filter(q)?;
    Ok(Json(blocking(c, move |c| c.timeline(u, &ctx)).await?))
}

async fn get_heatmap(State(c): State<Shared>, Caller(u): Caller, RawQuery(q): RawQuery) -> ApiResult<impl IntoResponse> {
    let ctx = filter(q)?;
    Ok(Json(blocking(c, move |c| c.heatmap(u, &ctx)).await?))
}

/// Splits `sel=c0,r0,c1,r1` off a filter query.
fn split_selection(q: &str) -> ApiResult<(String, (u32, u32, u32, u32))> {
    let mut rest = form_urlencoded::Serializer::new(String::new());
    let mut sel = None;
    for (k, v) in form_urlencoded::parse(q.as_bytes()) {
        if k == "sel" {
            let parts: Vec<u32> = v
                .split(',')
                .map(|p| p.trim().parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|_| RetrievalError::MalformedFilter(format!("bad sel {v:?}")))?;
            match parts[..] {
                [c0, r0, c1, r1] => sel = Some((c0, r0, c1, r1)),
                _ => return Err(RetrievalError::MalformedFilter(format!("bad sel {v:?}")).into()),
            }
        } else {
            rest.append_pair(&k, &v);
        }
    }
    let sel = sel.ok_or(RetrievalError::EmptySelection)?;
    Ok((rest.finish(), sel))
}

async fn get_region_select(
    State(c): State<Shared>,
    Caller(u): Caller,
    RawQuery(q): RawQuery,
) -> ApiResult<impl IntoResponse> {
    let (rest, sel) = split_selection(q.as_deref().unwrap_or(""))?;
    let ctx = FilterContext::from_query(&rest)?;
    Ok(Json(blocking(c, move |c| c.region_select(u, &ctx, sel)).await?))
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(coord: Shared, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(coord))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_is_split_from_the_filter() {
        let (rest, sel) = split_selection("camera=2&sel=1,2,3,4&q=x").unwrap();
        assert_eq!(rest, "camera=2&q=x");
        assert_eq!(sel, (1, 2, 3, 4));
        assert!(split_selection("camera=2").is_err());
        assert!(split_selection("sel=1,2,3").is_err());
    }

    #[test]
    fn every_error_has_a_client_or_server_status() {
        let errs = [
            CoordError::Unauthenticated,
            CoordError::EmptyChange,
            CoordError::CaptureDisabled(CameraId(1)),
            CoordError::Retrieval(RetrievalError::NoCameraSelected),
            CoordError::Storage("x".into()),
        ];
        let codes: Vec<u16> = errs.iter().map(|e| classify(e).0.as_u16()).collect();
        assert_eq!(codes, [401, 400, 409, 400, 500]);
    }
}
