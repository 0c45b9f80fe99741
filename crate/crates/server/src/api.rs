//! Read-only HTTP API over a model store.
//!
//! Everything is loaded when the router is built; the store is immutable
//! while serving, so handlers share one catalog without locking and repeated
//! requests return identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::Serialize;
use tutorviz_core::layout::{default_layout, LayoutGraph};
use tutorviz_core::views::{
    compare_periods, date_view, details_of, filtered_layout, logs_in_range, parse_search_query, search_state, student_trace, FilterSpec,
    Target,
};
use tutorviz_core::{group_super_states, AssignmentConfig, Automaton, StateId, StudentLog, Zone};

use crate::store::{ModelRecord, Store, StoreError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "invalid_params", message: message.into() }
    }
}

impl From<tutorviz_core::Error> for ApiError {
    fn from(e: tutorviz_core::Error) -> Self {
        use tutorviz_core::Error as E;
        let message = e.to_string();
        match e {
            E::UnknownState(_) => ApiError::not_found("unknown_state", message),
            E::UnknownEdge(_) => ApiError::not_found("unknown_edge", message),
            E::UnknownStudent(_) => ApiError::not_found("unknown_student", message),
            E::EmptyRange { .. } | E::EmptyCorpus => ApiError { status: StatusCode::BAD_REQUEST, code: "no_data", message },
            E::Io(_) | E::Json(_) => ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message },
            _ => ApiError::bad_request(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
    }
}

fn json<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("responses serialize");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

type ApiResult = Result<Response, ApiError>;

struct LoadedModel {
    record: ModelRecord,
    config: Arc<AssignmentConfig>,
    logs: Arc<Vec<StudentLog>>,
    changes: Arc<BTreeMap<String, String>>,
    clusters: Vec<(Automaton, LayoutGraph)>,
}

pub struct Catalog {
    models: BTreeMap<String, LoadedModel>,
}

impl Catalog {
    pub fn load(store: &Store) -> Result<Catalog, StoreError> {
        let mut corpora = HashMap::new();
        let mut models = BTreeMap::new();
        for record in store.models()? {
            if !corpora.contains_key(&record.corpus_id) {
                let c = store.corpus(&record.corpus_id)?;
                corpora.insert(record.corpus_id.clone(), (Arc::new(c.config), Arc::new(c.logs), Arc::new(c.record.changes)));
            }
            let (config, logs, changes) = corpora[&record.corpus_id].clone();
            let clusters = (0..record.clusters.len())
                .map(|c| Ok((store.automaton(&record.model_id, c)?, store.layout(&record.model_id, c)?)))
                .collect::<Result<Vec<_>, StoreError>>()?;
            models.insert(record.model_id.clone(), LoadedModel { record, config, logs, changes, clusters });
        }
        Ok(Catalog { models })
    }

    fn model(&self, id: &str) -> Result<&LoadedModel, ApiError> {
        self.models.get(id).ok_or_else(|| ApiError::not_found("unknown_model", format!("unknown model {id:?}")))
    }
}

impl LoadedModel {
    fn cluster(&self, c: &str) -> Result<&(Automaton, LayoutGraph), ApiError> {
        c.parse::<usize>()
            .ok()
            .and_then(|i| self.clusters.get(i))
            .ok_or_else(|| ApiError::not_found("unknown_cluster", format!("unknown cluster {c:?}")))
    }

    /// Logs of one cluster, or of the whole corpus.
    fn logs_for(&self, cluster: Option<&str>) -> Result<Vec<StudentLog>, ApiError> {
        match cluster {
            None => Ok(self.logs.as_ref().clone()),
            Some(c) => {
                let (a, _) = self.cluster(c)?;
                let wanted = a.cluster_id.unwrap_or(0);
                Ok(self.logs.iter().filter(|l| self.record.model.assignments.get(&l.student_id) == Some(&wanted)).cloned().collect())
            }
        }
    }
}

type Params = Query<HashMap<String, String>>;

fn percent(params: &HashMap<String, String>, name: &str) -> Result<f64, ApiError> {
    match params.get(name) {
        None => Ok(0.0),
        Some(v) => v.parse::<f64>().map_err(|_| ApiError::bad_request(format!("{name} must be a number, got {v:?}"))),
    }
}

fn filter_spec(params: &HashMap<String, String>) -> Result<FilterSpec, ApiError> {
    Ok(FilterSpec::new(percent(params, "min_node_freq")?, percent(params, "min_edge_freq")?)?)
}

/// Accepts RFC 3339 instants or plain dates; a plain `to` date covers the
/// whole day.
pub fn parse_instant(value: &str, end_of_day: bool) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Some(t.with_timezone(&Utc));
    }
    let day = NaiveDate::parse_from_str(value, "%Y-%m-%d").ok()?;
    let time = if end_of_day { NaiveTime::from_hms_opt(23, 59, 59)? } else { NaiveTime::MIN };
    Some(day.and_time(time).and_utc())
}

fn instant(params: &HashMap<String, String>, name: &str, end_of_day: bool) -> Result<DateTime<Utc>, ApiError> {
    let v = params.get(name).ok_or_else(|| ApiError::bad_request(format!("missing parameter {name}")))?;
    parse_instant(v, end_of_day).ok_or_else(|| ApiError::bad_request(format!("{name} is not a date: {v:?}")))
}

async fn list_models(State(cat): State<Arc<Catalog>>) -> ApiResult {
    let records: Vec<&ModelRecord> = cat.models.values().map(|m| &m.record).collect();
    Ok(json(&records))
}

async fn list_clusters(State(cat): State<Arc<Catalog>>, Path(m): Path<String>) -> ApiResult {
    Ok(json(&cat.model(&m)?.record.clusters))
}

async fn graph(State(cat): State<Arc<Catalog>>, Path((m, c)): Path<(String, String)>, Query(params): Params) -> ApiResult {
    let spec = filter_spec(&params)?;
    let (a, layout) = cat.model(&m)?.cluster(&c)?;
    Ok(json(&filtered_layout(layout, a, &spec)))
}

async fn state_details(State(cat): State<Arc<Catalog>>, Path((m, c, id)): Path<(String, String, String)>) -> ApiResult {
    let (a, _) = cat.model(&m)?.cluster(&c)?;
    let state: StateId = id.parse().map_err(|_| ApiError::not_found("unknown_state", format!("unknown state {id:?}")))?;
    Ok(json(&details_of(a, &Target::State(state))?))
}

async fn search(State(cat): State<Arc<Catalog>>, Path((m, c)): Path<(String, String)>, Query(params): Params) -> ApiResult {
    let (a, _) = cat.model(&m)?.cluster(&c)?;
    let (query, inline_zone) = parse_search_query(params.get("q").map_or("", String::as_str));
    let zone = match params.get("zone").filter(|z| !z.is_empty()) {
        Some(z) => Some(Zone::parse_loose(z).ok_or_else(|| ApiError::bad_request(format!("unknown zone {z:?}")))?),
        None => inline_zone,
    };
    Ok(json(&search_state(a, &query, zone)))
}

async fn date_view_graph(State(cat): State<Arc<Catalog>>, Path(m): Path<String>, Query(params): Params) -> ApiResult {
    let model = cat.model(&m)?;
    let from = instant(&params, "from", false)?;
    let to = instant(&params, "to", true)?;
    let spec = filter_spec(&params)?;
    let logs = model.logs_for(params.get("cluster").map(String::as_str))?;
    let a = group_super_states(&date_view(&logs, from, to, &model.config)?);
    let layout = default_layout(&a, &model.config.correct_flow);
    Ok(json(&filtered_layout(&layout, &a, &spec)))
}

#[derive(Serialize)]
struct TraceStepView {
    id: String,
    label: String,
    zone: Zone,
    kind: tutorviz_core::StateKind,
    edge_label: String,
    events: usize,
}

#[derive(Serialize)]
struct TraceView {
    student_id: String,
    steps: Vec<TraceStepView>,
    #[serde(flatten)]
    layout: LayoutGraph,
}

async fn trace(State(cat): State<Arc<Catalog>>, Path((m, sid)): Path<(String, String)>) -> ApiResult {
    let model = cat.model(&m)?;
    let tr = student_trace(&model.logs, &sid, &model.config)?;
    let steps = tr
        .steps
        .iter()
        .map(|s| TraceStepView {
            id: s.state.id.key(),
            label: s.state.label.clone(),
            zone: s.state.id.zone,
            kind: s.state.kind,
            edge_label: s.edge.label.clone(),
            events: s.events,
        })
        .collect();
    let layout = default_layout(&tr.automaton, &model.config.correct_flow);
    Ok(json(&TraceView { student_id: tr.student_id, steps, layout }))
}

async fn compare(State(cat): State<Arc<Catalog>>, Path(m): Path<String>, Query(params): Params) -> ApiResult {
    let model = cat.model(&m)?;
    let period = |from: &str, to: &str| -> Result<Vec<StudentLog>, ApiError> {
        let selected = logs_in_range(&model.logs, instant(&params, from, false)?, instant(&params, to, true)?)?;
        if selected.is_empty() {
            return Err(ApiError { status: StatusCode::BAD_REQUEST, code: "no_data", message: format!("no data in range {from} .. {to}") });
        }
        Ok(selected.into_iter().cloned().collect())
    };
    let a = period("from_a", "to_a")?;
    let b = period("from_b", "to_b")?;
    Ok(json(&compare_periods(&a, &b, &model.changes)?))
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

pub fn router(catalog: Arc<Catalog>) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{m}/clusters", get(list_clusters))
        .route("/models/{m}/clusters/{c}/graph", get(graph))
        .route("/models/{m}/clusters/{c}/states/{id}", get(state_details))
        .route("/models/{m}/clusters/{c}/search", get(search))
        .route("/models/{m}/date-view", get(date_view_graph))
        .route("/models/{m}/students/{sid}/trace", get(trace))
        .route("/models/{m}/compare", get(compare))
        .fallback(fallback)
        .with_state(catalog)
}

pub fn router_for(store: &Store) -> Result<Router, StoreError> {
    Ok(router(Arc::new(Catalog::load(store)?)))
}
