//! HTTP routes and wire formats. Money goes out as 2-decimal strings,
//! timestamps as RFC 3339 UTC, errors as `{"error": {"code", "message"}}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clad_core::cost::format_money;
use clad_core::data::{CladRecord, EXTRA_FEATURE_NAMES};
use clad_core::evaluation::{AgreementBand, ConfusionMatrix};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{ServiceError, ServiceResult};
use crate::service::{DecideRequest, ModelInfo, OpenRequest, Service, TrainJob, TrainRequest};
use crate::session::{Session, SessionAgreement, SessionStatus, WhatIf};

#[derive(Serialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub importance: f64,
}

fn weights(pairs: &[(String, f64)]) -> Vec<FeatureWeight> {
    pairs
        .iter()
        .map(|(f, v)| FeatureWeight {
            feature: f.clone(),
            importance: *v,
        })
        .collect()
}

#[derive(Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub alpha: f64,
    pub model: String,
    pub model_fingerprint: String,
    pub blind: bool,
    pub opened_at: String,
    pub closed_at: Option<String>,
    pub cases: usize,
    pub decided: usize,
    pub top_features: Vec<FeatureWeight>,
}

impl SessionView {
    fn of(s: &Session) -> Self {
        let h = &s.header;
        SessionView {
            session_id: h.session_id.clone(),
            status: s.status,
            alpha: h.alpha,
            model: h.model.clone(),
            model_fingerprint: h.model_fingerprint.clone(),
            blind: h.blind,
            opened_at: h.opened_at.clone(),
            closed_at: s.closed_at.clone(),
            cases: h.entries.len(),
            decided: s.decided_count(),
            top_features: weights(&h.top_features),
        }
    }
}

/// The 13 features keyed by column name; money columns as strings.
pub fn record_view(rec: &CladRecord) -> Value {
    let mut m = Map::new();
    m.insert("limit_before".into(), json!(format_money(rec.limit_before)));
    m.insert("outstanding_balance".into(), json!(format_money(rec.outstanding_balance)));
    m.insert("rating".into(), json!(rec.rating.as_str()));
    m.insert("account_age_years".into(), json!(rec.account_age_years));
    for (name, v) in EXTRA_FEATURE_NAMES.iter().zip(rec.extra) {
        let value = match *name {
            "avg_monthly_spend" | "avg_monthly_payment" | "monthly_deposits" => json!(format_money(v)),
            _ => json!(v),
        };
        m.insert((*name).into(), value);
    }
    Value::Object(m)
}

#[derive(Serialize)]
pub struct QueueItem {
    pub record_id: String,
    pub record: Value,
    /// Model fields are withheld on undecided cases in blind sessions.
    pub probability: Option<f64>,
    pub threshold: Option<f64>,
    pub margin: Option<f64>,
    pub recommendation: Option<bool>,
    pub c_fp: String,
    pub c_fn: String,
    pub decided: bool,
    pub committee_decision: Option<bool>,
    pub committee_note: Option<String>,
}

#[derive(Serialize)]
pub struct QueueView {
    pub session: SessionView,
    pub items: Vec<QueueItem>,
}

fn queue_view(s: &Session) -> QueueView {
    let items = s
        .header
        .entries
        .iter()
        .zip(&s.decisions)
        .map(|(e, d)| {
            let show = !s.header.blind || d.is_some();
            QueueItem {
                record_id: e.record.record_id.clone(),
                record: record_view(&e.record),
                probability: show.then_some(e.probability),
                threshold: show.then_some(e.threshold),
                margin: show.then_some(e.probability - e.threshold),
                recommendation: show.then_some(e.model_decision),
                c_fp: format_money(e.costs.c_fp),
                c_fn: format_money(e.costs.c_fn),
                decided: d.is_some(),
                committee_decision: d.as_ref().map(|d| d.committee_decision),
                committee_note: d.as_ref().and_then(|d| d.note.clone()),
            }
        })
        .collect();
    QueueView {
        session: SessionView::of(s),
        items,
    }
}

#[derive(Serialize)]
pub struct AgreementView {
    pub session_id: String,
    pub decided: usize,
    pub remaining: usize,
    pub matrix: ConfusionMatrix,
    pub n: u64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub pe: f64,
    pub kappa: f64,
    /// Kappa to two decimals, as reported to the committee.
    pub kappa_display: String,
    pub band: AgreementBand,
    pub band_label: String,
}

impl From<SessionAgreement> for AgreementView {
    fn from(a: SessionAgreement) -> Self {
        let r = a.report;
        AgreementView {
            session_id: a.session_id,
            decided: a.decided,
            remaining: a.remaining,
            matrix: r.matrix,
            n: r.n,
            p0: r.p0,
            p1: r.p1,
            p2: r.p2,
            pe: r.pe,
            kappa: r.kappa,
            kappa_display: format!("{:.2}", r.kappa),
            band: r.band,
            band_label: r.band.label().to_string(),
        }
    }
}

#[derive(Serialize)]
pub struct WhatIfItem {
    pub record_id: String,
    pub c_fp: String,
    pub c_fn: String,
    pub clamped: bool,
    pub threshold: f64,
    pub recommendation: bool,
    pub session_recommendation: bool,
    pub flipped: bool,
}

#[derive(Serialize)]
pub struct WhatIfView {
    pub session_id: String,
    pub alpha: f64,
    pub session_alpha: f64,
    pub flips: usize,
    pub total_c_fp: String,
    pub total_c_fn: String,
    pub items: Vec<WhatIfItem>,
}

impl From<WhatIf> for WhatIfView {
    fn from(w: WhatIf) -> Self {
        WhatIfView {
            session_id: w.session_id,
            alpha: w.alpha,
            session_alpha: w.session_alpha,
            flips: w.flips,
            total_c_fp: format_money(w.total_c_fp),
            total_c_fn: format_money(w.total_c_fn),
            items: w
                .cases
                .into_iter()
                .map(|c| WhatIfItem {
                    record_id: c.record_id,
                    c_fp: format_money(c.costs.c_fp),
                    c_fn: format_money(c.costs.c_fn),
                    clamped: c.costs.clamped,
                    threshold: c.threshold,
                    recommendation: c.recommendation,
                    session_recommendation: c.session_recommendation,
                    flipped: c.flipped,
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
pub struct ModelView {
    pub name: String,
    pub family: String,
    pub fingerprint: String,
    pub cost_weighted: bool,
    pub top_features: Vec<FeatureWeight>,
}

impl From<ModelInfo> for ModelView {
    fn from(m: ModelInfo) -> Self {
        ModelView {
            name: m.name,
            family: m.family,
            fingerprint: m.fingerprint,
            cost_weighted: m.cost_weighted,
            top_features: weights(&m.top_features),
        }
    }
}

#[derive(Serialize)]
pub struct JobView {
    #[serde(flatten)]
    pub job: TrainJob,
    pub model: Option<ModelView>,
}

type AppState = Arc<Service>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ServiceResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn healthz(State(svc): State<AppState>) -> ServiceResult<Json<Value>> {
    let sessions = svc.session_ids()?.len();
    Ok(Json(json!({ "status": "ok", "sessions": sessions })))
}

async fn list_sessions(State(svc): State<AppState>) -> ServiceResult<Json<Vec<SessionView>>> {
    let ids = svc.session_ids()?;
    let views = ids
        .iter()
        .map(|id| svc.with_session(id, |s| Ok(SessionView::of(s))))
        .collect::<ServiceResult<_>>()?;
    Ok(Json(views))
}

async fn open_session(
    State(svc): State<AppState>,
    payload: Result<Json<OpenRequest>, JsonRejection>,
) -> ServiceResult<(StatusCode, Json<SessionView>)> {
    let req = body(payload)?;
    let view = blocking(move || {
        let id = svc.open_session(req)?;
        svc.with_session(&id, |s| Ok(SessionView::of(s)))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionView>> {
    Ok(Json(svc.with_session(&id, |s| Ok(SessionView::of(s)))?))
}

async fn queue(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<QueueView>> {
    Ok(Json(svc.with_session(&id, |s| Ok(queue_view(s)))?))
}

async fn decide(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<DecideRequest>, JsonRejection>,
) -> ServiceResult<(StatusCode, Json<crate::session::DecisionEntry>)> {
    let req = body(payload)?;
    let entry = blocking(move || svc.record_decision(&id, req)).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn agreement(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<AgreementView>> {
    Ok(Json(svc.agreement(&id)?.into()))
}

async fn whatif(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ServiceResult<Json<WhatIfView>> {
    let raw = q
        .get("alpha")
        .ok_or_else(|| ServiceError::BadRequest("query parameter `alpha` is required".into()))?;
    let alpha: f64 = raw
        .parse()
        .ok()
        .filter(|a: &f64| a.is_finite())
        .ok_or_else(|| ServiceError::BadRequest(format!("alpha `{raw}` is not a number")))?;
    Ok(Json(svc.whatif(&id, alpha)?.into()))
}

async fn close(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Json<SessionView>> {
    let view = blocking(move || {
        svc.close(&id)?;
        svc.with_session(&id, |s| Ok(SessionView::of(s)))
    })
    .await?;
    Ok(Json(view))
}

async fn list_models(State(svc): State<AppState>) -> ServiceResult<Json<Vec<ModelView>>> {
    let models = blocking(move || svc.models()).await?;
    Ok(Json(models.into_iter().map(ModelView::from).collect()))
}

async fn train(
    State(svc): State<AppState>,
    payload: Result<Json<TrainRequest>, JsonRejection>,
) -> ServiceResult<(StatusCode, Json<JobView>)> {
    let req = body(payload)?;
    let job = svc.start_training(req)?;
    Ok((StatusCode::ACCEPTED, Json(JobView { job, model: None })))
}

async fn job_status(State(svc): State<AppState>, Path(job_id): Path<String>) -> ServiceResult<Json<JobView>> {
    let job = svc.job(&job_id)?;
    let model = match job.status {
        crate::service::JobStatus::Succeeded => {
            let name = job.name.clone();
            let svc = Arc::clone(&svc);
            Some(blocking(move || svc.model_info(&name)).await?.into())
        }
        _ => None,
    };
    Ok(Json(JobView { job, model }))
}

async fn require_token(State(svc): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = svc.config().token.as_deref() else {
        return next.run(req).await;
    };
    if req.uri().path() == "/healthz" {
        return next.run(req).await;
    }
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token) {
        next.run(req).await
    } else {
        ServiceError::Unauthorized.into_response()
    }
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions).post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/queue", get(queue))
        .route("/sessions/{id}/decisions", post(decide))
        .route("/sessions/{id}/agreement", get(agreement))
        .route("/sessions/{id}/whatif", get(whatif))
        .route("/sessions/{id}/close", post(close))
        .route("/models", get(list_models))
        .route("/models/train", post(train))
        .route("/models/train/{job_id}", get(job_status))
        .layer(middleware::from_fn_with_state(Arc::clone(&svc), require_token))
        .with_state(svc)
}

/// Serves until ctrl-c.
pub async fn serve(svc: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
