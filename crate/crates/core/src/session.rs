//! Live annotation sessions: one pending query at a time, answers applied to
//! the belief as they arrive, and an append-only history that replays to the
//! same belief offline.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::belief::{apply_response, GaussianBelief};
use crate::harness::{ExperimentConfig, Learner, PlannedQuery, QueryPlanner};
use crate::policy::CostObservation;
use crate::response::{Label, Query, QueryKind, Response};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: String,
    pub display: String,
}

/// What the annotator is shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryView {
    pub query_id: String,
    pub kind: QueryKind,
    pub items: Vec<ItemView>,
    pub set_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerSummary {
    pub status: SessionStatus,
    pub interactions: usize,
    pub log_det_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query_id: String,
    pub kind: QueryKind,
    /// Pool indices of the query items, in display order.
    pub items: Vec<usize>,
    pub response: Response,
    pub elapsed_ms: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelPayload {
    y: Label,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionPayload {
    index: usize,
    y: Label,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankPayload {
    order: Vec<usize>,
    threshold: usize,
}

/// Reads an answer payload (`{y}`, `{index, y}` or `{order, threshold}`)
/// according to the kind of query it answers.
pub fn parse_payload(kind: QueryKind, payload: &serde_json::Value) -> Result<Response> {
    let bad = |e: serde_json::Error| Error::InvalidResponse(format!("{kind} payload: {e}"));
    let p = payload.clone();
    Ok(match kind {
        QueryKind::Label => {
            let LabelPayload { y } = serde_json::from_value(p).map_err(bad)?;
            Response::Label { y }
        }
        QueryKind::SelectHigh | QueryKind::SelectLow => {
            let SelectionPayload { index, y } = serde_json::from_value(p).map_err(bad)?;
            Response::Selection { index, y }
        }
        QueryKind::Rank => {
            let RankPayload { order, threshold } = serde_json::from_value(p).map_err(bad)?;
            Response::Ranking { order, threshold }
        }
    })
}

#[derive(Debug)]
struct Pending {
    query_id: String,
    planned: PlannedQuery,
}

/// State of one session; only reachable through [`SessionManager`].
#[derive(Debug)]
pub struct SessionState {
    id: String,
    learner: Learner,
    planner: QueryPlanner,
    belief: GaussianBelief<f64>,
    pending: Option<Pending>,
    history: Vec<HistoryEntry>,
    status: SessionStatus,
    // the last accepted answer, returned again if the client resubmits it
    last_answer: Option<(String, AnswerSummary)>,
    issued: usize,
}

impl SessionState {
    fn summary(&self) -> AnswerSummary {
        AnswerSummary { status: self.status, interactions: self.history.len(), log_det_sigma: self.belief.log_det_sigma() }
    }

    fn next_query(&mut self) -> Result<QueryView> {
        if self.status == SessionStatus::Stopped {
            return Err(Error::SessionStopped(self.id.clone()));
        }
        if let Some(p) = &self.pending {
            return Err(Error::Protocol(format!("query {} is still unanswered", p.query_id)));
        }
        let planned = self.planner.plan(&self.learner, &self.belief)?;
        self.issued += 1;
        let query_id = format!("{}-q{}", self.id, self.issued);
        let q = &planned.query;
        let view = QueryView {
            query_id: query_id.clone(),
            kind: q.kind(),
            items: q.items().iter().map(|it| ItemView { id: it.id.clone(), display: it.display.clone() }).collect(),
            set_size: q.len(),
        };
        self.pending = Some(Pending { query_id, planned });
        Ok(view)
    }

    fn submit(&mut self, query_id: &str, payload: &serde_json::Value, elapsed_ms: u64) -> Result<AnswerSummary> {
        if let Some((last, summary)) = &self.last_answer {
            if last == query_id {
                return Ok(*summary);
            }
        }
        if self.status == SessionStatus::Stopped {
            return Err(Error::SessionStopped(self.id.clone()));
        }
        let pending = self.pending.as_ref().ok_or_else(|| Error::Protocol("no query is pending".into()))?;
        if pending.query_id != query_id {
            return Err(Error::Protocol(format!("answer for {query_id}, but {} is pending", pending.query_id)));
        }
        let q = &pending.planned.query;
        let response = parse_payload(q.kind(), payload)?;
        let belief = apply_response(&self.belief, q, &response, &self.learner.params, &self.learner.config.update)?;
        // nothing above mutated the session; commit
        let pending = self.pending.take().expect("checked");
        self.history.push(HistoryEntry {
            query_id: pending.query_id,
            kind: pending.planned.query.kind(),
            items: pending.planned.indices,
            response,
            elapsed_ms,
        });
        self.belief = belief;
        if self.learner.is_done(&self.belief, self.history.len()) {
            self.status = SessionStatus::Stopped;
        }
        let summary = self.summary();
        self.last_answer = Some((query_id.to_string(), summary));
        Ok(summary)
    }

    fn stop(&mut self) -> Result<AnswerSummary> {
        if let Some(p) = &self.pending {
            return Err(Error::Protocol(format!("query {} is still unanswered", p.query_id)));
        }
        if self.status == SessionStatus::Stopped {
            return Err(Error::SessionStopped(self.id.clone()));
        }
        self.status = SessionStatus::Stopped;
        Ok(self.summary())
    }
}

/// A read-only copy of a session's state.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSnapshot {
    pub status: SessionStatus,
    pub belief: GaussianBelief<f64>,
    pub history: Vec<HistoryEntry>,
    pub pending_query: Option<String>,
}

/// Owns all sessions. Calls on one session are serialized by its own lock;
/// different sessions proceed in parallel.
#[derive(Debug, Default)]
pub struct SessionManager {
    configs: RwLock<HashMap<String, ExperimentConfig>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    counter: AtomicU64,
    nonce: u64,
}

impl SessionManager {
    pub fn new() -> Self {
        Self { nonce: rand::random::<u64>() & 0xffff_ffff, ..Self::default() }
    }

    /// Makes `config` available to [`create`](Self::create) under `name`.
    pub fn register(&self, name: impl Into<String>, config: ExperimentConfig) -> Result<()> {
        config.validate()?;
        self.configs.write().expect("config lock").insert(name.into(), config);
        Ok(())
    }

    /// Creates a session from a registered config name or a config file path.
    pub fn create(&self, config_ref: &str) -> Result<String> {
        let registered = self.configs.read().expect("config lock").get(config_ref).cloned();
        let config = match registered {
            Some(c) => c,
            None if Path::new(config_ref).is_file() => ExperimentConfig::load(config_ref)?,
            None => return Err(Error::Config { field: "config_ref".into(), message: format!("unknown config {config_ref:?}") }),
        };
        self.create_with_config(&config)
    }

    pub fn create_with_config(&self, config: &ExperimentConfig) -> Result<String> {
        let learner = Learner::from_config(config)?;
        let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("{:08x}{n:06}", self.nonce);
        let state = SessionState {
            id: id.clone(),
            planner: QueryPlanner::new(config.seed()),
            belief: learner.prior.clone(),
            learner,
            pending: None,
            history: Vec::new(),
            status: SessionStatus::Active,
            last_answer: None,
            issued: 0,
        };
        self.sessions.write().expect("session lock").insert(id.clone(), Arc::new(Mutex::new(state)));
        Ok(id)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        self.sessions.read().expect("session lock").get(id).cloned().ok_or_else(|| Error::UnknownSession(id.into()))
    }

    fn with<R>(&self, id: &str, f: impl FnOnce(&mut SessionState) -> Result<R>) -> Result<R> {
        let s = self.session(id)?;
        let mut guard = s.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn next_query(&self, id: &str) -> Result<QueryView> {
        self.with(id, SessionState::next_query)
    }

    /// Applies an answer to the pending query. A repeated submission of the
    /// last accepted `query_id` returns the same summary without reapplying it.
    pub fn submit_response(
        &self,
        id: &str,
        query_id: &str,
        payload: &serde_json::Value,
        elapsed_ms: u64,
    ) -> Result<AnswerSummary> {
        self.with(id, |s| s.submit(query_id, payload, elapsed_ms))
    }

    pub fn stop(&self, id: &str) -> Result<AnswerSummary> {
        self.with(id, SessionState::stop)
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot> {
        self.with(id, |s| {
            Ok(SessionSnapshot {
                status: s.status,
                belief: s.belief.clone(),
                history: s.history.clone(),
                pending_query: s.pending.as_ref().map(|p| p.query_id.clone()),
            })
        })
    }

    /// Response times so far, one observation per answered query.
    pub fn cost_observations(&self, id: &str) -> Result<Vec<CostObservation>> {
        self.with(id, |s| Ok(cost_observations(&s.history)))
    }

    /// Re-applies a session's history to its prior.
    pub fn replay(&self, id: &str) -> Result<GaussianBelief<f64>> {
        self.with(id, |s| replay_history(&s.learner, &s.history))
    }

    pub fn learner(&self, id: &str) -> Result<Learner> {
        self.with(id, |s| Ok(s.learner.clone()))
    }
}

pub fn cost_observations(history: &[HistoryEntry]) -> Vec<CostObservation> {
    history
        .iter()
        .map(|h| CostObservation { kind: h.kind, set_size: h.items.len(), seconds: h.elapsed_ms as f64 / 1000.0 })
        .collect()
}

/// Rebuilds the belief from the prior and a recorded history.
pub fn replay_history(learner: &Learner, history: &[HistoryEntry]) -> Result<GaussianBelief<f64>> {
    let mut belief = learner.prior.clone();
    for h in history {
        let items = h
            .items
            .iter()
            .map(|&i| {
                learner.pool.get(i).cloned().ok_or_else(|| Error::InvalidArgument(format!("history item {i} not in pool")))
            })
            .collect::<Result<Vec<_>>>()?;
        let query = Query::new(h.kind, items)?;
        belief = apply_response(&belief, &query, &h.response, &learner.params, &learner.config.update)?;
    }
    Ok(belief)
}
