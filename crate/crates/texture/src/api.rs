//! The HTTP query service.
//!
//! All query work runs on the blocking pool under a per-request deadline; a
//! request that misses it answers 503 `overloaded`. Errors are JSON objects
//! `{"error": {"code": ..., "message": ...}}`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use texture_core::embeddings::{similar_to_document, similar_to_query};
use texture_core::query::{
    DerivedPredicate, PageRequest, Predicate, SortSpec, SummaryOptions, Test, DEFAULT_PAGE_LIMIT,
};
use texture_core::schema::AttributeKind;
use texture_core::{
    compute_highlights, reassemble_document, DatasetSchema, Engine, EmbeddingError, QueryError,
    Scalar, SelectionState,
};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::embedder::EmbedderConfig;
use crate::registry::{Dataset, Registry};

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub embedder: EmbedderConfig,
    pub request_timeout: Duration,
    /// Origins allowed by CORS; `*` allows any. Empty sends no CORS headers.
    pub cors_origins: Vec<String>,
    /// Static UI bundle served for paths outside the API.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderConfig::None,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            cors_origins: Vec::new(),
            ui_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    registry: Arc<Registry>,
    embedder: Arc<EmbedderConfig>,
    timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn bad_selection(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_selection", message)
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            QueryError::UnknownAttribute(_) => (S::BAD_REQUEST, "unknown_attribute"),
            QueryError::UnknownDerivedColumn(_) => (S::BAD_REQUEST, "unknown_derived_column"),
            QueryError::WrongDataType { .. } => (S::BAD_REQUEST, "wrong_data_type"),
            QueryError::AllNull(_) => (S::BAD_REQUEST, "all_null"),
            QueryError::UnsortableAttribute(_) => (S::BAD_REQUEST, "unsortable_attribute"),
            QueryError::InvalidPredicate { .. } | QueryError::DuplicatePredicate(_) => {
                (S::BAD_REQUEST, "bad_selection")
            }
            QueryError::EmptyQuery => (S::BAD_REQUEST, "empty_query"),
            QueryError::UnknownDocument(_) => (S::NOT_FOUND, "unknown_document"),
            QueryError::NoEmbedding => (S::CONFLICT, "no_embedding"),
            QueryError::NoProjection => (S::CONFLICT, "no_projection"),
            QueryError::InvalidColorAttribute(_) => (S::BAD_REQUEST, "invalid_color_attribute"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<EmbeddingError> for ApiError {
    fn from(e: EmbeddingError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            EmbeddingError::NoEmbedding => (S::CONFLICT, "no_embedding"),
            EmbeddingError::UnknownDocument(_) => (S::NOT_FOUND, "unknown_document"),
            EmbeddingError::DegenerateData => (S::INTERNAL_SERVER_ERROR, "internal"),
            // Anything else came back from the embedder: a failure, a wrong-sized
            // vector, or one that cannot be compared.
            _ => (S::BAD_GATEWAY, "embedder_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// One selection entry as sent by a client.
///
/// ```json
/// {"attribute": "topic", "op": "in", "values": ["vis", "ml"]}
/// {"attribute": "score", "op": "range", "lo": 0, "hi": 1, "hi_inclusive": false}
/// {"attribute": "text", "op": "contains", "query": "won", "case_sensitive": false}
/// {"attribute": "topic", "op": "null"}
/// {"derived": "similar_doc_0", "lo": 0, "hi": 0.5}
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionEntry {
    pub attribute: Option<String>,
    pub derived: Option<String>,
    pub op: Option<String>,
    pub values: Option<Vec<Scalar>>,
    pub lo: Option<Scalar>,
    pub hi: Option<Scalar>,
    pub lo_inclusive: Option<bool>,
    pub hi_inclusive: Option<bool>,
    pub query: Option<String>,
    pub case_sensitive: Option<bool>,
}

enum Entry {
    Attribute(Predicate),
    Derived(DerivedPredicate),
}

impl SelectionEntry {
    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, present) in [
            ("values", self.values.is_some()),
            ("lo", self.lo.is_some()),
            ("hi", self.hi.is_some()),
            ("lo_inclusive", self.lo_inclusive.is_some()),
            ("hi_inclusive", self.hi_inclusive.is_some()),
            ("query", self.query.is_some()),
            ("case_sensitive", self.case_sensitive.is_some()),
        ] {
            if present {
                out.push(name);
            }
        }
        out
    }

    fn only(&self, allowed: &[&str]) -> Result<(), String> {
        match self.present().into_iter().find(|f| !allowed.contains(f)) {
            Some(f) => Err(format!("field `{f}` does not apply here")),
            None => Ok(()),
        }
    }

    fn bounds(&self) -> Result<(Scalar, Scalar), String> {
        match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => Ok((lo.clone(), hi.clone())),
            _ => Err("a range needs both `lo` and `hi`".into()),
        }
    }

    fn into_entry(self) -> Result<Entry, String> {
        let range_fields = ["lo", "hi", "lo_inclusive", "hi_inclusive"];
        match (&self.attribute, &self.derived) {
            (Some(_), Some(_)) => Err("give either `attribute` or `derived`, not both".into()),
            (None, None) => Err("missing `attribute` or `derived`".into()),
            (None, Some(handle)) => {
                if let Some(op) = &self.op {
                    if op != "range" {
                        return Err(format!("derived columns only support `range`, not `{op}`"));
                    }
                }
                self.only(&range_fields)?;
                let (lo, hi) = self.bounds()?;
                let number = |s: Scalar, which: &str| {
                    s.as_number()
                        .filter(|n| !n.is_nan())
                        .ok_or_else(|| format!("`{which}` must be a number"))
                };
                Ok(Entry::Derived(DerivedPredicate {
                    handle: handle.clone(),
                    lo: number(lo, "lo")?,
                    hi: number(hi, "hi")?,
                    lo_inclusive: self.lo_inclusive.unwrap_or(true),
                    hi_inclusive: self.hi_inclusive.unwrap_or(true),
                }))
            }
            (Some(attribute), None) => {
                let op = self.op.as_deref().ok_or("missing `op`")?;
                let test = match op {
                    "in" => {
                        self.only(&["values"])?;
                        let values = self.values.clone().ok_or("`in` needs `values`")?;
                        if values.is_empty() {
                            return Err("`values` is empty".into());
                        }
                        Test::ValueSet { values }
                    }
                    "range" => {
                        self.only(&range_fields)?;
                        let (lo, hi) = self.bounds()?;
                        Test::Range {
                            lo,
                            hi,
                            lo_inclusive: self.lo_inclusive.unwrap_or(true),
                            hi_inclusive: self.hi_inclusive.unwrap_or(true),
                        }
                    }
                    "contains" => {
                        self.only(&["query", "case_sensitive"])?;
                        let query = self.query.clone().ok_or("`contains` needs `query`")?;
                        if query.is_empty() {
                            return Err("`query` is empty".into());
                        }
                        Test::Substring {
                            query,
                            case_sensitive: self.case_sensitive.unwrap_or(false),
                        }
                    }
                    "null" => {
                        self.only(&[])?;
                        Test::Null
                    }
                    other => {
                        return Err(format!(
                            "unknown op `{other}`; expected in, range, contains or null"
                        ))
                    }
                };
                Ok(Entry::Attribute(Predicate {
                    attribute: attribute.clone(),
                    test,
                }))
            }
        }
    }
}

/// Parses a client selection. Errors name the offending entry by index.
pub fn parse_selection(entries: &[Value]) -> Result<SelectionState, ApiError> {
    let mut state = SelectionState::new();
    for (i, raw) in entries.iter().enumerate() {
        let fail = |reason: String| ApiError::bad_selection(format!("selection[{i}]: {reason}"));
        let entry: SelectionEntry =
            serde_json::from_value(raw.clone()).map_err(|e| fail(e.to_string()))?;
        let pushed = match entry.into_entry().map_err(fail)? {
            Entry::Attribute(p) => state.push(p),
            Entry::Derived(d) => state.push_derived(d),
        };
        pushed.map_err(|e| fail(e.to_string()))?;
    }
    Ok(state)
}

async fn run<T, F>(state: &AppState, work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let task = tokio::task::spawn_blocking(work);
    match tokio::time::timeout(state.timeout, task).await {
        Err(_) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "overloaded",
            "the request did not finish in time",
        )),
        Ok(Err(e)) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("query task failed: {e}"),
        )),
        Ok(Ok(result)) => result,
    }
}

fn dataset(state: &AppState, name: &str) -> Result<Arc<Dataset>, ApiError> {
    state.registry.get(name).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_dataset",
            format!("no dataset named `{name}`"),
        )
    })
}

#[derive(Serialize)]
struct DatasetInfo {
    name: String,
    n_docs: usize,
    attributes: usize,
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetInfo>> {
    Json(
        state
            .registry
            .iter()
            .map(|d| DatasetInfo {
                name: d.name().to_string(),
                n_docs: d.store().n_docs(),
                attributes: d.store().schema().attributes().len(),
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct DerivedInfo {
    handle: String,
    label: String,
    created_at: u64,
}

#[derive(Serialize)]
struct SchemaResponse {
    #[serde(flatten)]
    schema: DatasetSchema,
    n_docs: usize,
    derived_columns: Vec<DerivedInfo>,
}

async fn get_schema(
    State(state): State<AppState>,
    Path(name): Path<String>,
) -> ApiResult<SchemaResponse> {
    let d = dataset(&state, &name)?;
    let derived = d.derived_snapshot([]);
    Ok(Json(SchemaResponse {
        schema: d.store().schema().as_schema().clone(),
        n_docs: d.store().n_docs(),
        derived_columns: derived
            .iter()
            .map(|c| DerivedInfo {
                handle: c.handle.clone(),
                label: c.label.clone(),
                created_at: c.created_at,
            })
            .collect(),
    }))
}

fn used_handles(selection: &SelectionState) -> Vec<String> {
    selection.derived().iter().map(|d| d.handle.clone()).collect()
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummariesRequest {
    #[serde(default)]
    selection: Vec<Value>,
    /// Defaults to every single-value, list and span-list attribute.
    attributes: Option<Vec<String>>,
    k: Option<usize>,
    offset: Option<usize>,
    bin_count: Option<usize>,
}

async fn summaries(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = dataset(&state, &name)?;
    let req: SummariesRequest = parse_body(&body)?;
    let selection = parse_selection(&req.selection)?;
    let defaults = SummaryOptions::default();
    let options = SummaryOptions {
        k: req.k.unwrap_or(defaults.k),
        offset: req.offset.unwrap_or(defaults.offset),
        bin_count: req.bin_count.unwrap_or(defaults.bin_count).max(1),
    };
    let attributes = req
        .attributes
        .unwrap_or_else(|| chartable_attributes(d.store().schema().as_schema()));
    let out = run(&state, move || {
        let mut used = used_handles(&selection);
        used.extend(attributes.iter().cloned());
        let derived = d.derived_snapshot(used.iter().map(String::as_str));
        let engine = Engine::with_derived(d.store(), &derived);
        let summaries = engine.summarize_many(&attributes, &selection, &options)?;
        Ok(serde_json::to_vec(&summaries).expect("summaries serialize"))
    })
    .await?;
    Ok(json_bytes(out))
}

fn json_bytes(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentsRequest {
    #[serde(default)]
    selection: Vec<Value>,
    sort: Option<SortSpec>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

async fn documents(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = dataset(&state, &name)?;
    let req: DocumentsRequest = parse_body(&body)?;
    let selection = parse_selection(&req.selection)?;
    let request = PageRequest {
        sort: req.sort,
        offset: req.offset,
        limit: req.limit.unwrap_or(DEFAULT_PAGE_LIMIT),
    };
    let out = run(&state, move || {
        let mut used = used_handles(&selection);
        used.extend(request.sort.iter().map(|s| s.attribute.clone()));
        let derived = d.derived_snapshot(used.iter().map(String::as_str));
        let engine = Engine::with_derived(d.store(), &derived);
        let page = engine.document_page(&selection, &request)?;
        Ok(serde_json::to_vec(&page).expect("page serializes"))
    })
    .await?;
    Ok(json_bytes(out))
}

#[derive(Serialize)]
struct DocumentResponse {
    doc_id: u32,
    /// The full document in input form.
    record: texture_core::RawRecord,
    derived: BTreeMap<String, f64>,
    highlights: Vec<texture_core::HighlightRange>,
}

async fn document(
    State(state): State<AppState>,
    Path((name, doc_id)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let d = dataset(&state, &name)?;
    let doc_id: u32 = doc_id.parse().map_err(|_| {
        ApiError::bad_request(format!("document id `{doc_id}` is not a non-negative integer"))
    })?;
    let entries: Vec<Value> = match query.get("selection") {
        None => Vec::new(),
        Some(raw) => serde_json::from_str(raw)
            .map_err(|e| ApiError::bad_selection(format!("selection is not a JSON array: {e}")))?,
    };
    let selection = parse_selection(&entries)?;
    let out = run(&state, move || {
        let store = d.store();
        if doc_id as usize >= store.n_docs() {
            return Err(QueryError::UnknownDocument(doc_id).into());
        }
        let derived = d.derived_snapshot(used_handles(&selection).iter().map(String::as_str));
        // Validates the selection the same way a page request would.
        Engine::with_derived(store, &derived).select(&selection)?;
        let response = DocumentResponse {
            doc_id,
            record: reassemble_document(store, doc_id)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?,
            derived: derived
                .iter()
                .map(|c| (c.handle.clone(), c.values[doc_id as usize]))
                .collect(),
            highlights: compute_highlights(store, doc_id, &selection)?,
        };
        Ok(serde_json::to_vec(&response).expect("document serializes"))
    })
    .await?;
    Ok(json_bytes(out))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilarityRequest {
    doc_id: Option<u32>,
    query: Option<String>,
}

#[derive(Serialize)]
struct SimilarityResponse {
    handle: String,
    label: String,
}

async fn similarity(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> ApiResult<SimilarityResponse> {
    let d = dataset(&state, &name)?;
    let req: SimilarityRequest = parse_body(&body)?;
    let embedder = state.embedder.clone();
    let column = run(&state, move || {
        let store = d.store();
        let column = match (req.doc_id, req.query) {
            (Some(doc), None) => similar_to_document(store, doc)?,
            (None, Some(query)) => {
                if query.trim().is_empty() {
                    return Err(QueryError::EmptyQuery.into());
                }
                let matrix = store.embeddings().ok_or(QueryError::NoEmbedding)?;
                let embedder = embedder.for_dimension(matrix.dimension()).ok_or_else(|| {
                    ApiError::new(
                        StatusCode::CONFLICT,
                        "embedder_unavailable",
                        "no query embedder is configured",
                    )
                })?;
                similar_to_query(store, &query, &embedder)?
            }
            _ => return Err(ApiError::bad_request("give exactly one of `doc_id` or `query`")),
        };
        Ok(d.register(column))
    })
    .await?;
    Ok(Json(SimilarityResponse {
        handle: column.handle.clone(),
        label: column.label.clone(),
    }))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionRequest {
    #[serde(default)]
    selection: Vec<Value>,
    color_attribute: Option<String>,
}

async fn projection(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = dataset(&state, &name)?;
    let req: ProjectionRequest = parse_body(&body)?;
    let selection = parse_selection(&req.selection)?;
    let out = run(&state, move || {
        let derived = d.derived_snapshot(used_handles(&selection).iter().map(String::as_str));
        let engine = Engine::with_derived(d.store(), &derived);
        let points = engine.projection_points(&selection, req.color_attribute.as_deref())?;
        Ok(serde_json::to_vec(&points).expect("points serialize"))
    })
    .await?;
    Ok(json_bytes(out))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(
            origins
                .iter()
                .filter_map(|o| HeaderValue::from_str(o).ok()),
        )
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

/// Names of the attributes a fresh client would chart, in schema order.
pub fn chartable_attributes(schema: &DatasetSchema) -> Vec<String> {
    schema
        .attributes
        .iter()
        .filter(|a| {
            matches!(
                a.kind,
                AttributeKind::SingleValue | AttributeKind::List | AttributeKind::SpanList
            )
        })
        .map(|a| a.name.clone())
        .collect()
}

pub fn router(registry: Registry, config: &ServiceConfig) -> Router {
    let state = AppState {
        registry: Arc::new(registry),
        embedder: Arc::new(config.embedder.clone()),
        timeout: config.request_timeout,
    };
    let api = Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{name}/schema", get(get_schema))
        .route("/datasets/{name}/summaries", post(summaries))
        .route("/datasets/{name}/documents", post(documents))
        .route("/datasets/{name}/documents/{doc_id}", get(document))
        .route("/datasets/{name}/similarity", post(similarity))
        .route("/datasets/{name}/projection", post(projection))
        .with_state(state);
    let mut app = match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    if let Some(layer) = cors(&config.cors_origins) {
        app = app.layer(layer);
    }
    app
}

/// Every route the service answers, as `(method, path)`.
pub const ROUTES: &[(&str, &str)] = &[
    ("get", "/datasets"),
    ("get", "/datasets/{name}/schema"),
    ("post", "/datasets/{name}/summaries"),
    ("post", "/datasets/{name}/documents"),
    ("get", "/datasets/{name}/documents/{doc_id}"),
    ("post", "/datasets/{name}/similarity"),
    ("post", "/datasets/{name}/projection"),
];

/// Every `error.code` the service can send.
pub const ERROR_CODES: &[&str] = &[
    "bad_request",
    "bad_selection",
    "unknown_dataset",
    "unknown_attribute",
    "unknown_derived_column",
    "wrong_data_type",
    "all_null",
    "unsortable_attribute",
    "empty_query",
    "invalid_color_attribute",
    "unknown_document",
    "no_embedding",
    "no_projection",
    "embedder_unavailable",
    "embedder_failure",
    "overloaded",
    "not_found",
    "internal",
];
