//! Shared service state: case pool, model store, live sessions, training jobs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{SecondsFormat, Utc};
use clad_core::cost::{CostParams, ThresholdRule};
use clad_core::data::{CladRecord, Dataset};
use clad_core::model::TrainedModel;
use clad_core::pipeline::{fit, score_record, CostRecipe, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::session::{DecisionEntry, Event, Opened, ScoredEntry, Session, SessionAgreement, WhatIf};
use crate::store::{valid_name, SessionLog, Store};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Cost parameters for every session; each session overrides alpha.
    pub cost: CostParams,
    /// Static bearer token; `None` disables the check.
    pub token: Option<String>,
    /// Blind mode for sessions that do not choose.
    pub blind_default: bool,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            cost: CostParams::default(),
            token: None,
            blind_default: false,
        }
    }
}

struct LiveSession {
    session: Session,
    log: SessionLog,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub job_id: String,
    pub name: String,
    pub status: JobStatus,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TrainRequest {
    pub name: String,
    pub params: ModelParams,
    #[serde(default)]
    pub recipe: CostRecipe,
    /// Rate used for the training weights; defaults to the service's.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct OpenRequest {
    pub alpha: f64,
    pub model: String,
    pub case_ids: Vec<String>,
    pub blind: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct DecideRequest {
    pub record_id: String,
    pub committee_decision: bool,
    pub note: Option<String>,
}

/// Summary of a stored model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub family: String,
    pub fingerprint: String,
    pub cost_weighted: bool,
    pub top_features: Vec<(String, f64)>,
}

impl ModelInfo {
    fn of(name: &str, m: &TrainedModel) -> Self {
        ModelInfo {
            name: name.to_string(),
            family: m.family().to_string(),
            fingerprint: m.fingerprint(),
            cost_weighted: m.training_costs.is_some(),
            top_features: m.top_features(5),
        }
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Service {
    config: ServiceConfig,
    store: Store,
    cases: HashMap<String, CladRecord>,
    training: Option<Arc<Dataset>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<LiveSession>>>>,
    jobs: Arc<Mutex<BTreeMap<String, TrainJob>>>,
}

fn poisoned<T>(_: T) -> ServiceError {
    ServiceError::Internal("lock poisoned".into())
}

impl Service {
    /// Opens the store and replays every session log found in it.
    pub fn new(config: ServiceConfig, cases: Dataset, training: Option<Dataset>) -> ServiceResult<Self> {
        config.cost.validate()?;
        let store = Store::open(&config.data_dir)?;
        let mut sessions = BTreeMap::new();
        for id in store.session_ids()? {
            let session = Session::replay(store.read_log(&id)?)?;
            let log = store.open_log(&id)?;
            sessions.insert(id, Arc::new(Mutex::new(LiveSession { session, log })));
        }
        Ok(Service {
            cases: cases.records.into_iter().map(|r| (r.record_id.clone(), r)).collect(),
            training: training.map(Arc::new),
            config,
            store,
            sessions: RwLock::new(sessions),
            jobs: Arc::new(Mutex::new(BTreeMap::new())),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn live(&self, id: &str) -> ServiceResult<Arc<Mutex<LiveSession>>> {
        self.sessions
            .read()
            .map_err(poisoned)?
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session `{id}` not found")))
    }

    /// Runs `f` on a snapshot-consistent view of the session.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&Session) -> ServiceResult<T>) -> ServiceResult<T> {
        let live = self.live(id)?;
        let guard = live.lock().map_err(poisoned)?;
        f(&guard.session)
    }

    pub fn session_ids(&self) -> ServiceResult<Vec<String>> {
        Ok(self.sessions.read().map_err(poisoned)?.keys().cloned().collect())
    }

    pub fn open_session(&self, req: OpenRequest) -> ServiceResult<String> {
        let cost = self.config.cost.with_alpha(req.alpha);
        cost.validate()?;
        let model = self.store.load_model(&req.model)?;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(req.case_ids.len());
        for id in &req.case_ids {
            if !seen.insert(id.as_str()) {
                return Err(ServiceError::BadRequest(format!("case `{id}` listed twice")));
            }
            let rec = self
                .cases
                .get(id)
                .ok_or_else(|| ServiceError::NotFound(format!("case `{id}` not found")))?;
            let s = score_record(&model, rec, &cost, ThresholdRule::Bayes)?;
            entries.push(ScoredEntry {
                record: rec.clone(),
                probability: s.probability,
                threshold: s.threshold,
                model_decision: s.decision,
                costs: s.costs,
            });
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let opened = Event::Opened(Opened {
            session_id: id.clone(),
            opened_at: now(),
            alpha: req.alpha,
            cost,
            model: req.model.clone(),
            model_fingerprint: model.fingerprint(),
            blind: req.blind.unwrap_or(self.config.blind_default),
            top_features: model.top_features(5),
            entries,
        });
        let Event::Opened(header) = &opened else { unreachable!() };
        let session = Session::new(header.clone())?;
        let log = self.store.create_log(&id, &opened)?;
        self.sessions
            .write()
            .map_err(poisoned)?
            .insert(id.clone(), Arc::new(Mutex::new(LiveSession { session, log })));
        log::info!("opened session {id} with {} cases", req.case_ids.len());
        Ok(id)
    }

    /// Validates, persists, then applies; the session lock makes the three
    /// steps atomic per session.
    fn append(&self, id: &str, event: Event) -> ServiceResult<()> {
        let live = self.live(id)?;
        let mut guard = live.lock().map_err(poisoned)?;
        guard.session.check(&event)?;
        guard.log.append(&event)?;
        guard.session.apply(&event)
    }

    pub fn record_decision(&self, id: &str, req: DecideRequest) -> ServiceResult<DecisionEntry> {
        let record_id = req.record_id.clone();
        self.append(
            id,
            Event::Decided {
                record_id: req.record_id,
                committee_decision: req.committee_decision,
                note: req.note,
                at: now(),
            },
        )?;
        self.with_session(id, |s| {
            let i = s.position(&record_id).expect("decided entry exists");
            Ok(s.decision_entry(i))
        })
    }

    pub fn close(&self, id: &str) -> ServiceResult<()> {
        self.append(id, Event::Closed { at: now() })
    }

    pub fn agreement(&self, id: &str) -> ServiceResult<SessionAgreement> {
        self.with_session(id, Session::agreement)
    }

    pub fn whatif(&self, id: &str, alpha: f64) -> ServiceResult<WhatIf> {
        self.with_session(id, |s| s.whatif(alpha))
    }

    pub fn models(&self) -> ServiceResult<Vec<ModelInfo>> {
        self.store
            .model_names()?
            .into_iter()
            .map(|name| self.store.load_model(&name).map(|m| ModelInfo::of(&name, &m)))
            .collect()
    }

    pub fn model_info(&self, name: &str) -> ServiceResult<ModelInfo> {
        self.store.load_model(name).map(|m| ModelInfo::of(name, &m))
    }

    /// Queues a training run on a background thread.
    pub fn start_training(&self, req: TrainRequest) -> ServiceResult<TrainJob> {
        if !valid_name(&req.name) {
            return Err(ServiceError::BadRequest(format!(
                "model name `{}` must be 1-64 letters, digits, `-` or `_`",
                req.name
            )));
        }
        if self.store.model_path(&req.name).exists() {
            return Err(ServiceError::Conflict(format!("model `{}` already exists", req.name)));
        }
        let training = self
            .training
            .clone()
            .ok_or_else(|| ServiceError::BadRequest("no training data configured".into()))?;
        let cost = match req.alpha {
            Some(a) => self.config.cost.with_alpha(a),
            None => self.config.cost,
        };
        cost.validate()?;

        let job = TrainJob {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            name: req.name.clone(),
            status: JobStatus::Queued,
            error: None,
        };
        self.jobs.lock().map_err(poisoned)?.insert(job.job_id.clone(), job.clone());

        let jobs = Arc::clone(&self.jobs);
        let store = self.store.clone();
        let job_id = job.job_id.clone();
        std::thread::spawn(move || {
            let set = |status: JobStatus, error: Option<String>| {
                if let Ok(mut jobs) = jobs.lock() {
                    if let Some(j) = jobs.get_mut(&job_id) {
                        j.status = status;
                        j.error = error;
                    }
                }
            };
            set(JobStatus::Running, None);
            let outcome = fit(&training, &req.params, &cost, &req.recipe)
                .map_err(ServiceError::from)
                .and_then(|m| store.save_model(&req.name, &m));
            match outcome {
                Ok(()) => set(JobStatus::Succeeded, None),
                Err(e) => {
                    log::warn!("training job {job_id} failed: {e}");
                    set(JobStatus::Failed, Some(e.to_string()))
                }
            }
        });
        Ok(job)
    }

    pub fn job(&self, job_id: &str) -> ServiceResult<TrainJob> {
        self.jobs
            .lock()
            .map_err(poisoned)?
            .get(job_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("job `{job_id}` not found")))
    }
}
