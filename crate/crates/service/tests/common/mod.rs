#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use clad_core::data::{CladRecord, CreditRating, Dataset, Provenance, FEATURE_NAMES};
use clad_core::gbdt::{GbdtModel, GbdtParams, Node, Tree};
use clad_core::model::TrainedModel;
use clad_service::store::Store;
use clad_service::{Service, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const TOP: usize = 120;
pub const BOTTOM: usize = 33;

pub fn case(i: usize, rating: CreditRating) -> CladRecord {
    CladRecord {
        record_id: format!("c{i:03}"),
        limit_before: 1000.0 + 10.0 * i as f64,
        outstanding_balance: 250.0 + i as f64,
        rating,
        account_age_years: 3.0 + (i % 15) as f64,
        extra: [400.0, 350.0, 0.85, 1.0, 14.0, 0.02, 2.0, 0.3, 900.0],
        label: None,
    }
}

/// 120 AAA cases followed by 33 D cases.
pub fn meeting_cases() -> Dataset {
    let records = (0..TOP + BOTTOM)
        .map(|i| case(i, if i < TOP { CreditRating::AAA } else { CreditRating::D }))
        .collect();
    Dataset::new(records, Provenance::Derived).unwrap()
}

pub fn ids(range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("c{i:03}")).collect()
}

/// One stump on the rating: near-certain yes above BB, near-certain no below.
pub fn rating_stump() -> TrainedModel {
    let tree = Tree {
        nodes: vec![
            Node::Split {
                feature: 2,
                threshold: 4.5,
                left: 1,
                right: 2,
                gain: 1.0,
            },
            Node::Leaf { weight: -80.0 },
            Node::Leaf { weight: 80.0 },
        ],
    };
    GbdtModel {
        trees: vec![tree],
        base_score: 0.0,
        schema: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        params: GbdtParams::default(),
    }
    .into()
}

pub fn seed_store(dir: &Path) {
    Store::open(dir).unwrap().save_model("stump", &rating_stump()).unwrap();
}

pub fn service(dir: &Path, token: Option<&str>, training: Option<Dataset>) -> Arc<Service> {
    let mut config = ServiceConfig::new(dir);
    config.token = token.map(str::to_string);
    Arc::new(Service::new(config, meeting_cases(), training).unwrap())
}

pub async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Method::GET, uri, None, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, Method::POST, uri, Some(body), None).await
}

pub async fn open(app: &Router, alpha: f64, case_ids: Vec<String>, blind: bool) -> String {
    let (status, body) = post(
        app,
        "/sessions",
        serde_json::json!({ "alpha": alpha, "model": "stump", "case_ids": case_ids, "blind": blind }),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

pub async fn decide(app: &Router, session: &str, record_id: &str, yes: bool) -> (StatusCode, Value) {
    post(
        app,
        &format!("/sessions/{session}/decisions"),
        serde_json::json!({ "record_id": record_id, "committee_decision": yes }),
    )
    .await
}
