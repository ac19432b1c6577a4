use std::collections::{BTreeMap, BTreeSet};

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Redirect, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use clearsign_core::consent::{ConsentGrant, RevocationReceipt};
use clearsign_core::data::DataError;
use clearsign_core::enforcer::CachedView;
use clearsign_core::registry::{PrivacyFactsheetRow, TransparencyFactsheet};
use clearsign_core::{
    encode_sign_headers, AccessFilters, AccessOutcome, ArtifactKind, Complaint, ConsentError,
    DataPackage, DataSource, Denial, EnforcementError, FilteredView, RecordId, SourceKind,
    SubjectError, SystemSigns, TraceDocument,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::auth::bearer;
use crate::error::ApiError;
use crate::{consent_gate, AppState, ConsentGateDecision, GateOutcome};

type ApiResult<T> = Result<T, ApiError>;

/// The authenticated caller.
pub struct User(pub String);

impl FromRequestParts<AppState> for User {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(bearer)
            .ok_or_else(ApiError::unauthenticated)?;
        state
            .verifier
            .verify(token)
            .map(User)
            .ok_or_else(ApiError::unauthenticated)
    }
}

/// Parses a JSON body; an empty body reads as `T::default()`.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("invalid_body", e))
}

/// Parses a JSON body that must be present.
fn required<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("invalid_body", e))
}

fn decode_payload(s: &str) -> ApiResult<Vec<u8>> {
    B64.decode(s).map_err(|e| {
        ApiError::bad_request("invalid_payload", format!("payload must be base64: {e}"))
    })
}

fn enforcement_error(e: EnforcementError) -> ApiError {
    match e {
        EnforcementError::UnknownService(id) => ApiError::unknown_service(&id),
        EnforcementError::UndeclaredRecipient { .. } => {
            ApiError::new(StatusCode::FORBIDDEN, "undeclared_recipient", e)
        }
        EnforcementError::StorageFailure(_) => {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e)
        }
    }
}

fn consent_error(e: ConsentError) -> ApiError {
    match e {
        ConsentError::UnknownService(id) => ApiError::unknown_service(&id),
        ConsentError::CategoryNotDeclared { .. } => {
            ApiError::bad_request("category_not_declared", e)
        }
        ConsentError::UnknownSystem(_) => {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "unknown_system", e)
        }
    }
}

fn subject_error(e: SubjectError) -> ApiError {
    match e {
        SubjectError::NotFound(_) => ApiError::not_found("not_found", e),
        SubjectError::AlreadyErased(_) => ApiError::new(StatusCode::CONFLICT, "already_erased", e),
        SubjectError::EmptyText => ApiError::bad_request("empty_text", e),
        SubjectError::EmptyPayload => ApiError::bad_request("empty_payload", e),
    }
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("no_route", "no such endpoint")
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

// Transparency.

#[derive(Serialize)]
pub struct SignsBody {
    system_id: String,
    signs: SystemSigns,
    summary: String,
    headers: BTreeMap<String, String>,
}

pub async fn signs(State(app): State<AppState>) -> Json<SignsBody> {
    let signs = app.engine.signs();
    let headers = encode_sign_headers(&signs)
        .iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    Json(SignsBody {
        system_id: app.engine.system_id(),
        summary: signs.summary(),
        signs,
        headers,
    })
}

#[derive(Serialize)]
pub struct PrivacyFactsheetBody {
    system_id: String,
    rows: Vec<PrivacyFactsheetRow>,
}

pub async fn privacy_factsheet(State(app): State<AppState>) -> Json<PrivacyFactsheetBody> {
    Json(PrivacyFactsheetBody {
        system_id: app.engine.system_id(),
        rows: app.engine.privacy_factsheet(),
    })
}

pub async fn transparency_factsheet(State(app): State<AppState>) -> Json<TransparencyFactsheet> {
    Json(app.engine.transparency_factsheet())
}

pub async fn artifact(
    State(app): State<AppState>,
    Path((service_id, kind)): Path<(String, String)>,
) -> ApiResult<Response> {
    let d = app
        .engine
        .service(&service_id)
        .ok_or_else(|| ApiError::unknown_service(&service_id))?;
    let kind = ArtifactKind::parse(&kind).ok_or_else(|| {
        ApiError::not_found(
            "unknown_artifact_kind",
            format!("no artifact kind {kind:?}"),
        )
    })?;
    let not_claimed = || {
        ApiError::not_found(
            "not_claimed",
            format!("{service_id} does not publish its {}", kind.as_str()),
        )
    };
    if !kind.is_claimed_by(&d) {
        return Err(not_claimed());
    }
    let locator = d
        .locations(kind)
        .next()
        .ok_or_else(not_claimed)?
        .locator
        .clone();
    if locator.starts_with("http://") || locator.starts_with("https://") {
        return Ok(Redirect::temporary(&locator).into_response());
    }
    let path = match locator.strip_prefix("file://") {
        Some(p) => p,
        None if !locator.contains("://") => locator.as_str(),
        None => {
            return Err(ApiError::new(
                StatusCode::BAD_GATEWAY,
                "locator_unreachable",
                format!("unsupported locator {locator}"),
            ))
        }
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => Ok(([(CONTENT_TYPE, "application/octet-stream")], bytes).into_response()),
        Err(e) => Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "locator_unreachable",
            format!("{locator}: {e}"),
        )),
    }
}

// Consent.

#[derive(Deserialize)]
struct GrantRequest {
    service_id: String,
    #[serde(default)]
    categories: BTreeSet<String>,
}

#[derive(Serialize)]
pub struct GrantBody {
    grant: ConsentGrant,
    created: bool,
    pending: Vec<String>,
}

pub async fn grant(
    State(app): State<AppState>,
    User(user): User,
    bytes: Bytes,
) -> ApiResult<Json<GrantBody>> {
    let req: GrantRequest = required(&bytes)?;
    let out = app
        .engine
        .grant(&user, &req.service_id, &req.categories)
        .map_err(consent_error)?;
    Ok(Json(GrantBody {
        grant: out.grant,
        created: out.created,
        pending: app.engine.pending_consents(&user),
    }))
}

#[derive(Serialize)]
pub struct RevokeBody {
    receipt: RevocationReceipt,
    pending: Vec<String>,
}

pub async fn revoke(
    State(app): State<AppState>,
    User(user): User,
    Path(service_id): Path<String>,
) -> ApiResult<Json<RevokeBody>> {
    let receipt = app
        .engine
        .revoke(&user, &service_id)
        .map_err(consent_error)?;
    Ok(Json(RevokeBody {
        receipt,
        pending: app.engine.pending_consents(&user),
    }))
}

#[derive(Serialize)]
pub struct ConsentsBody {
    grants: Vec<ConsentGrant>,
    pending: Vec<String>,
}

pub async fn list_consents(State(app): State<AppState>, User(user): User) -> Json<ConsentsBody> {
    Json(ConsentsBody {
        grants: app.engine.grants_of(&user),
        pending: app.engine.pending_consents(&user),
    })
}

// Data ingestion.

#[derive(Deserialize)]
struct PutRequest {
    category: String,
    payload: String,
    #[serde(default)]
    source: Option<DataSource>,
}

pub async fn put_record(
    State(app): State<AppState>,
    User(user): User,
    bytes: Bytes,
) -> ApiResult<Response> {
    let req: PutRequest = required(&bytes)?;
    let payload = decode_payload(&req.payload)?;
    let source = req.source.unwrap_or_else(DataSource::user_direct);
    let id = app
        .engine
        .put_record(&user, &req.category, payload, source)
        .map_err(|e| match e {
            DataError::UnknownCategory(_) => ApiError::bad_request("unknown_category", e),
            other => ApiError::bad_request("empty_payload", other),
        })?;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "record_id": id })),
    )
        .into_response())
}

// Service calls.

#[derive(Default, Deserialize)]
struct AccessRequest {
    /// Absent: everything the user's grants allow.
    #[serde(default)]
    categories: Option<BTreeSet<String>>,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    PassThrough,
    ConsentRequired,
    DegradedMode,
    Denied,
}

#[derive(Serialize)]
pub struct AccessBody {
    outcome: AccessKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pending: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factsheet: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    view: Option<FilteredView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    denial: Option<Denial>,
}

impl AccessBody {
    fn held(gate: ConsentGateDecision, kind: AccessKind, view: Option<FilteredView>) -> Self {
        Self {
            outcome: kind,
            pending: Some(gate.pending),
            factsheet: Some(gate.factsheet),
            view,
            denial: None,
        }
    }

    fn outcome(out: AccessOutcome) -> (StatusCode, Self) {
        match out {
            AccessOutcome::Granted { view } => (
                StatusCode::OK,
                Self {
                    outcome: AccessKind::PassThrough,
                    pending: None,
                    factsheet: None,
                    view: Some(view),
                    denial: None,
                },
            ),
            AccessOutcome::Denied { denial } => (
                StatusCode::FORBIDDEN,
                Self {
                    outcome: AccessKind::Denied,
                    pending: None,
                    factsheet: None,
                    view: None,
                    denial: Some(denial),
                },
            ),
        }
    }
}

pub async fn access(
    State(app): State<AppState>,
    User(user): User,
    Path(service_id): Path<String>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<AccessBody>)> {
    let req: AccessRequest = body(&bytes)?;
    if app.engine.service(&service_id).is_none() {
        return Err(ApiError::unknown_service(&service_id));
    }
    let gate = consent_gate(&app.engine, &user, &service_id, true);
    match gate.outcome {
        GateOutcome::ConsentRequired => Ok((
            StatusCode::PRECONDITION_REQUIRED,
            Json(AccessBody::held(gate, AccessKind::ConsentRequired, None)),
        )),
        GateOutcome::DegradedMode => {
            let view = match app
                .engine
                .enforce_access(&user, &service_id, &BTreeSet::new())
                .map_err(enforcement_error)?
            {
                AccessOutcome::Granted { view } => view,
                AccessOutcome::Denied { .. } => {
                    unreachable!("an empty request is always permitted")
                }
            };
            Ok((
                StatusCode::OK,
                Json(AccessBody::held(gate, AccessKind::DegradedMode, Some(view))),
            ))
        }
        GateOutcome::PassThrough => {
            let out = match req.categories {
                Some(cats) => app.engine.enforce_access(&user, &service_id, &cats),
                None => app
                    .engine
                    .materialize_view(&user, &service_id)
                    .map(|view| AccessOutcome::Granted { view }),
            }
            .map_err(enforcement_error)?;
            let (status, body) = AccessBody::outcome(out);
            Ok((status, Json(body)))
        }
    }
}

#[derive(Deserialize)]
struct ShareRequest {
    recipient: String,
    #[serde(default)]
    categories: BTreeSet<String>,
}

pub async fn share(
    State(app): State<AppState>,
    User(user): User,
    Path(service_id): Path<String>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<AccessBody>)> {
    let req: ShareRequest = required(&bytes)?;
    let d = app
        .engine
        .service(&service_id)
        .ok_or_else(|| ApiError::unknown_service(&service_id))?;
    let declared = d
        .accessors
        .iter()
        .any(|a| a.name == req.recipient && a.kind != clearsign_core::AccessorKind::SystemItself);
    if !declared {
        return Err(enforcement_error(EnforcementError::UndeclaredRecipient {
            service: service_id,
            recipient: req.recipient,
        }));
    }
    let gate = consent_gate(&app.engine, &user, &service_id, false);
    if gate.outcome == GateOutcome::ConsentRequired {
        return Ok((
            StatusCode::PRECONDITION_REQUIRED,
            Json(AccessBody::held(gate, AccessKind::ConsentRequired, None)),
        ));
    }
    let out = app
        .engine
        .share_with_accessor(&user, &service_id, &req.recipient, &req.categories)
        .map_err(enforcement_error)?;
    let (status, body) = AccessBody::outcome(out);
    Ok((status, Json(body)))
}

pub async fn view(
    State(app): State<AppState>,
    User(user): User,
    Path(view_id): Path<String>,
) -> ApiResult<Json<FilteredView>> {
    let missing = || ApiError::not_found("unknown_view", format!("no view {view_id:?}"));
    let CachedView { view, invalidated } = app.engine.view(&view_id).ok_or_else(missing)?;
    if view.user_id != user {
        return Err(missing());
    }
    if invalidated {
        return Err(ApiError::new(
            StatusCode::GONE,
            "view_invalidated",
            "the view was invalidated by an erasure",
        ));
    }
    Ok(Json(view))
}

// Subject access.

#[derive(Default, Deserialize)]
pub struct FilterQuery {
    categories: Option<String>,
    purposes: Option<String>,
    sources: Option<String>,
}

fn split(s: &Option<String>) -> Option<BTreeSet<String>> {
    s.as_ref().map(|s| {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(str::to_owned)
            .collect()
    })
}

impl FilterQuery {
    fn filters(&self) -> ApiResult<AccessFilters> {
        let sources = match split(&self.sources) {
            None => None,
            Some(names) => Some(
                names
                    .into_iter()
                    .map(|n| {
                        serde_json::from_value::<SourceKind>(serde_json::Value::String(n.clone()))
                            .map_err(|_| {
                                ApiError::bad_request(
                                    "invalid_filter",
                                    format!("unknown source kind {n:?}"),
                                )
                            })
                    })
                    .collect::<ApiResult<_>>()?,
            ),
        };
        Ok(AccessFilters {
            categories: split(&self.categories),
            purposes: split(&self.purposes),
            sources,
        })
    }
}

pub async fn my_data(
    State(app): State<AppState>,
    User(user): User,
    Query(q): Query<FilterQuery>,
) -> ApiResult<Json<DataPackage>> {
    Ok(Json(app.engine.export_all(&user, &q.filters()?)))
}

pub async fn erasure(
    State(app): State<AppState>,
    User(user): User,
    bytes: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let filters: AccessFilters = body(&bytes)?;
    let n = app.engine.request_erasure(&user, &filters);
    Ok(Json(serde_json::json!({ "erased": n })))
}

#[derive(Deserialize)]
struct RectifyRequest {
    record_id: RecordId,
    payload: String,
}

pub async fn rectification(
    State(app): State<AppState>,
    User(user): User,
    bytes: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let req: RectifyRequest = required(&bytes)?;
    let payload = decode_payload(&req.payload)?;
    let version = app
        .engine
        .request_rectification(&user, req.record_id, payload)
        .map_err(subject_error)?;
    Ok(Json(
        serde_json::json!({ "record_id": req.record_id, "version": version }),
    ))
}

pub async fn trace(State(app): State<AppState>, User(user): User) -> Json<TraceDocument> {
    Json(app.engine.export_trace(&user))
}

#[derive(Deserialize)]
struct ComplaintRequest {
    text: String,
}

pub async fn complaint(
    State(app): State<AppState>,
    User(user): User,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<Complaint>)> {
    let req: ComplaintRequest = required(&bytes)?;
    let c = app
        .engine
        .file_complaint(&user, &req.text)
        .map_err(subject_error)?;
    Ok((StatusCode::CREATED, Json(c)))
}
