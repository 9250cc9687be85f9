//! Meeting sessions as an append-only event stream.
//!
//! A session log is one JSON object per line. The first line is always an
//! `opened` event carrying every scored case; later lines are `decided` and
//! at most one `closed`. Session state is a fold over these events, so
//! replaying a log rebuilds exactly what the live service held.

use std::collections::HashMap;

use clad_core::cost::{bayes_threshold, instance_costs, CostParams, InstanceCosts};
use clad_core::data::CladRecord;
use clad_core::evaluation::{cohen_kappa, rater_matrix, AgreementReport};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

/// One case as scored when the session opened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub record: CladRecord,
    /// Cost-neutral probability of a positive outcome.
    pub probability: f64,
    pub threshold: f64,
    pub model_decision: bool,
    pub costs: InstanceCosts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Opened {
    pub session_id: String,
    pub opened_at: String,
    pub alpha: f64,
    pub cost: CostParams,
    pub model: String,
    pub model_fingerprint: String,
    pub blind: bool,
    pub top_features: Vec<(String, f64)>,
    pub entries: Vec<ScoredEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Opened(Opened),
    Decided {
        record_id: String,
        committee_decision: bool,
        note: Option<String>,
        at: String,
    },
    Closed {
        at: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub committee_decision: bool,
    pub note: Option<String>,
    pub at: String,
}

/// A committee verdict next to the model's view of the same case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub record_id: String,
    pub timestamp: String,
    pub alpha: f64,
    pub model_probability: f64,
    pub model_decision: bool,
    pub committee_decision: Option<bool>,
    pub committee_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub header: Opened,
    pub status: SessionStatus,
    pub closed_at: Option<String>,
    pub decisions: Vec<Option<Decision>>,
    index: HashMap<String, usize>,
}

/// Agreement over decided entries only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionAgreement {
    pub session_id: String,
    pub decided: usize,
    pub remaining: usize,
    pub report: AgreementReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIfCase {
    pub record_id: String,
    pub costs: InstanceCosts,
    pub threshold: f64,
    pub recommendation: bool,
    pub session_recommendation: bool,
    pub flipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub session_id: String,
    pub alpha: f64,
    pub session_alpha: f64,
    pub flips: usize,
    pub total_c_fp: f64,
    pub total_c_fn: f64,
    pub cases: Vec<WhatIfCase>,
}

impl Session {
    pub fn new(header: Opened) -> ServiceResult<Self> {
        let mut index = HashMap::with_capacity(header.entries.len());
        for (i, e) in header.entries.iter().enumerate() {
            if index.insert(e.record.record_id.clone(), i).is_some() {
                return Err(ServiceError::BadRequest(format!(
                    "case `{}` listed twice",
                    e.record.record_id
                )));
            }
        }
        Ok(Session {
            decisions: vec![None; header.entries.len()],
            header,
            status: SessionStatus::Open,
            closed_at: None,
            index,
        })
    }

    pub fn id(&self) -> &str {
        &self.header.session_id
    }

    pub fn position(&self, record_id: &str) -> Option<usize> {
        self.index.get(record_id).copied()
    }

    pub fn decided_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_some()).count()
    }

    /// Checks that `event` may follow the current state.
    pub fn check(&self, event: &Event) -> ServiceResult<()> {
        match event {
            Event::Opened(_) => Err(ServiceError::Conflict("session is already open".into())),
            Event::Decided { record_id, .. } => {
                if self.status == SessionStatus::Closed {
                    return Err(ServiceError::Conflict(format!("session {} is closed", self.id())));
                }
                let i = self
                    .position(record_id)
                    .ok_or_else(|| ServiceError::NotFound(format!("case `{record_id}` is not in this session")))?;
                if self.decisions[i].is_some() {
                    return Err(ServiceError::Conflict(format!("case `{record_id}` is already decided")));
                }
                Ok(())
            }
            Event::Closed { .. } => {
                if self.status == SessionStatus::Closed {
                    Err(ServiceError::Conflict(format!("session {} is already closed", self.id())))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn apply(&mut self, event: &Event) -> ServiceResult<()> {
        self.check(event)?;
        match event {
            Event::Opened(_) => unreachable!("rejected by check"),
            Event::Decided {
                record_id,
                committee_decision,
                note,
                at,
            } => {
                let i = self.index[record_id];
                self.decisions[i] = Some(Decision {
                    committee_decision: *committee_decision,
                    note: note.clone(),
                    at: at.clone(),
                });
            }
            Event::Closed { at } => {
                self.status = SessionStatus::Closed;
                self.closed_at = Some(at.clone());
            }
        }
        Ok(())
    }

    /// Rebuilds a session from its events.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> ServiceResult<Self> {
        let mut events = events.into_iter();
        let mut session = match events.next() {
            Some(Event::Opened(o)) => Session::new(o)?,
            _ => return Err(ServiceError::Internal("session log must start with an opened event".into())),
        };
        for (n, e) in events.enumerate() {
            session
                .apply(&e)
                .map_err(|err| ServiceError::Internal(format!("session log event {}: {err}", n + 2)))?;
        }
        Ok(session)
    }

    pub fn decision_entry(&self, i: usize) -> DecisionEntry {
        let e = &self.header.entries[i];
        let d = self.decisions[i].as_ref();
        DecisionEntry {
            record_id: e.record.record_id.clone(),
            timestamp: d.map_or_else(|| self.header.opened_at.clone(), |d| d.at.clone()),
            alpha: self.header.alpha,
            model_probability: e.probability,
            model_decision: e.model_decision,
            committee_decision: d.map(|d| d.committee_decision),
            committee_note: d.and_then(|d| d.note.clone()),
        }
    }

    pub fn agreement(&self) -> ServiceResult<SessionAgreement> {
        let (committee, model): (Vec<bool>, Vec<bool>) = self
            .decisions
            .iter()
            .zip(&self.header.entries)
            .filter_map(|(d, e)| d.as_ref().map(|d| (d.committee_decision, e.model_decision)))
            .unzip();
        if committee.is_empty() {
            return Err(ServiceError::EmptyAgreement("no decisions recorded yet".into()));
        }
        let matrix = rater_matrix(&committee, &model)?;
        let report = cohen_kappa(&matrix).map_err(|e| ServiceError::EmptyAgreement(e.to_string()))?;
        Ok(SessionAgreement {
            session_id: self.id().to_string(),
            decided: committee.len(),
            remaining: self.header.entries.len() - committee.len(),
            report,
        })
    }

    /// Recomputes costs, thresholds and recommendations under another rate,
    /// keeping every model probability. Touches nothing. Only open sessions
    /// can be explored.
    pub fn whatif(&self, alpha: f64) -> ServiceResult<WhatIf> {
        if self.status == SessionStatus::Closed {
            return Err(ServiceError::Conflict(format!("session {} is closed", self.id())));
        }
        let cost = self.header.cost.with_alpha(alpha);
        cost.validate()?;
        let mut cases = Vec::with_capacity(self.header.entries.len());
        for e in &self.header.entries {
            let costs = instance_costs(&e.record, &cost)?;
            let threshold = bayes_threshold(&costs)?;
            let recommendation = e.probability > threshold;
            cases.push(WhatIfCase {
                record_id: e.record.record_id.clone(),
                costs,
                threshold,
                recommendation,
                session_recommendation: e.model_decision,
                flipped: recommendation != e.model_decision,
            });
        }
        Ok(WhatIf {
            session_id: self.id().to_string(),
            alpha,
            session_alpha: self.header.alpha,
            flips: cases.iter().filter(|c| c.flipped).count(),
            total_c_fp: cases.iter().map(|c| c.costs.c_fp).sum(),
            total_c_fn: cases.iter().map(|c| c.costs.c_fn).sum(),
            cases,
        })
    }
}
