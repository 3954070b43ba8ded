//! Campaign records and the events that build them.

use kuramoto_oed::kuramoto::Pair;
use kuramoto_oed::mocu::{BackendKind, ExperimentScore};
use kuramoto_oed::oed::{CampaignState, StepRecord, Strategy};
use kuramoto_oed::uncertainty::{ExperimentOutcome, UncertaintyClass};
use serde::{Deserialize, Serialize};

/// Everything fixed at creation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub name: String,
    pub class: UncertaintyClass,
    pub strategy: Strategy,
    pub backend: BackendKind,
    pub k: usize,
    pub eval_k: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub crn: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Exhausted,
    Inconsistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub step: usize,
    pub pair: Pair,
    pub synchronized: bool,
    /// What the service recommended when the outcome arrived, if known.
    pub recommended: Option<Pair>,
    pub interval_before: (f64, f64),
    pub interval_after: (f64, f64),
    /// Ground-truth MOCU of the class after this step, once evaluated.
    pub mocu: Option<f64>,
    pub stderr_mc: Option<f64>,
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Number of outcomes the ranked class reflects.
    pub after_step: usize,
    pub scores: Vec<ExperimentScore>,
    pub wall_ms: f64,
    pub backend_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair: Pair,
    pub synchronized: bool,
    pub reason: String,
    pub at_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub evaluations: usize,
    pub rankings: usize,
    pub ranking_ms: f64,
    pub backend_calls: usize,
}

/// Append-only log entry. A record is the fold of its events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        config: CampaignConfig,
        at_ms: u64,
    },
    Outcome {
        pair: Pair,
        synchronized: bool,
        recommended: Option<Pair>,
        at_ms: u64,
    },
    Evaluated {
        after_step: usize,
        mocu: f64,
        stderr: f64,
        at_ms: u64,
    },
    Ranked {
        ranking: Ranking,
        at_ms: u64,
    },
    Rejected(Rejection),
}

impl Event {
    fn at_ms(&self) -> u64 {
        match self {
            Event::Created { at_ms, .. }
            | Event::Outcome { at_ms, .. }
            | Event::Evaluated { at_ms, .. }
            | Event::Ranked { at_ms, .. } => *at_ms,
            Event::Rejected(r) => r.at_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub id: String,
    pub config: CampaignConfig,
    pub status: Status,
    /// Work still outstanding: "mocu" and/or "ranking".
    pub pending: Vec<String>,
    pub created_ms: u64,
    pub updated_ms: u64,
    /// Events applied so far.
    pub version: u64,
    pub class: UncertaintyClass,
    pub initial_mocu: Option<f64>,
    pub initial_stderr: Option<f64>,
    pub history: Vec<Step>,
    /// Initial MOCU, then the MOCU after each step.
    pub trajectory: Vec<Option<f64>>,
    pub ranking: Option<Ranking>,
    pub rejections: Vec<Rejection>,
    pub telemetry: Telemetry,
    /// Last background failure; not persisted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job_error: Option<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReplayError {
    #[error("the first event must create the campaign")]
    NotCreated,
    #[error("campaign created twice")]
    CreatedTwice,
    #[error("event {0} does not apply: {1}")]
    Invalid(u64, String),
}

impl CampaignRecord {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, ReplayError> {
        let mut events = events.into_iter();
        let mut record = match events.next() {
            Some(Event::Created { id, config, at_ms }) => {
                CampaignRecord::new(id.clone(), config.clone(), *at_ms)
            }
            _ => return Err(ReplayError::NotCreated),
        };
        for e in events {
            record.apply(e)?;
        }
        Ok(record)
    }

    fn new(id: String, config: CampaignConfig, at_ms: u64) -> Self {
        let mut r = CampaignRecord {
            id,
            class: config.class.clone(),
            config,
            status: Status::Active,
            pending: Vec::new(),
            created_ms: at_ms,
            updated_ms: at_ms,
            version: 1,
            initial_mocu: None,
            initial_stderr: None,
            history: Vec::new(),
            trajectory: vec![None],
            ranking: None,
            rejections: Vec::new(),
            telemetry: Telemetry::default(),
            job_error: None,
        };
        r.refresh();
        r
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), ReplayError> {
        let invalid = |msg: String| ReplayError::Invalid(self.version + 1, msg);
        match event {
            Event::Created { .. } => return Err(ReplayError::CreatedTwice),
            Event::Outcome {
                pair,
                synchronized,
                recommended,
                at_ms,
            } => {
                if self.is_performed(*pair) {
                    return Err(invalid(format!("pair {pair} already performed")));
                }
                let outcome = ExperimentOutcome {
                    pair: *pair,
                    synchronized: *synchronized,
                };
                let next = self
                    .class
                    .update(&outcome)
                    .map_err(|e| invalid(e.to_string()))?;
                self.history.push(Step {
                    step: self.history.len() + 1,
                    pair: *pair,
                    synchronized: *synchronized,
                    recommended: *recommended,
                    interval_before: self.class.interval(*pair),
                    interval_after: next.interval(*pair),
                    mocu: None,
                    stderr_mc: None,
                    at_ms: *at_ms,
                });
                self.class = next;
                self.trajectory.push(None);
            }
            Event::Evaluated {
                after_step,
                mocu,
                stderr,
                ..
            } => {
                match after_step {
                    0 => {
                        self.initial_mocu = Some(*mocu);
                        self.initial_stderr = Some(*stderr);
                    }
                    s if *s <= self.history.len() => {
                        let step = &mut self.history[s - 1];
                        step.mocu = Some(*mocu);
                        step.stderr_mc = Some(*stderr);
                    }
                    s => {
                        return Err(invalid(format!(
                            "evaluation after step {s} precedes the step"
                        )))
                    }
                }
                self.trajectory[*after_step] = Some(*mocu);
                self.telemetry.evaluations += 1;
            }
            Event::Ranked { ranking, .. } => {
                if ranking.after_step > self.history.len() {
                    return Err(invalid(format!(
                        "ranking after step {} precedes the step",
                        ranking.after_step
                    )));
                }
                self.telemetry.rankings += 1;
                self.telemetry.ranking_ms += ranking.wall_ms;
                self.telemetry.backend_calls += ranking.backend_calls;
                self.ranking = Some(ranking.clone());
            }
            Event::Rejected(r) => self.rejections.push(r.clone()),
        }
        self.version += 1;
        self.updated_ms = self.updated_ms.max(event.at_ms());
        self.refresh();
        Ok(())
    }

    fn refresh(&mut self) {
        self.status = if !self.rejections.is_empty() {
            Status::Inconsistent
        } else if self.history.len() >= self.class.pairs().len() {
            Status::Exhausted
        } else {
            Status::Active
        };
        self.pending.clear();
        if self.next_evaluation().is_some() {
            self.pending.push("mocu".into());
        }
        if self.needed_ranking().is_some() {
            self.pending.push("ranking".into());
        }
    }

    pub fn is_performed(&self, pair: Pair) -> bool {
        self.history.iter().any(|s| s.pair == pair)
    }

    pub fn is_exhausted(&self) -> bool {
        self.history.len() >= self.class.pairs().len()
    }

    /// Earliest step (0 = initial class) still missing its MOCU.
    pub fn next_evaluation(&self) -> Option<usize> {
        self.trajectory.iter().position(Option::is_none)
    }

    /// Step whose class the strategy wants ranked and has not been yet.
    pub fn needed_ranking(&self) -> Option<usize> {
        let wanted = match self.config.strategy {
            Strategy::MocuIterative if !self.is_exhausted() => self.history.len(),
            Strategy::MocuStatic => 0,
            _ => return None,
        };
        match &self.ranking {
            Some(r) if r.after_step == wanted => None,
            _ => Some(wanted),
        }
    }

    /// The class after the first `step` outcomes.
    pub fn class_after(&self, step: usize) -> UncertaintyClass {
        self.history[..step]
            .iter()
            .fold(self.config.class.clone(), |c, s| {
                c.update(&ExperimentOutcome {
                    pair: s.pair,
                    synchronized: s.synchronized,
                })
                .expect("history replays")
            })
    }

    /// Library view of the campaign, for the strategies that need no ranking.
    pub fn state(&self) -> CampaignState {
        CampaignState {
            initial: self.config.class.clone(),
            class: self.class.clone(),
            strategy: self.config.strategy,
            backend: self
                .config
                .strategy
                .uses_mocu()
                .then_some(self.config.backend),
            seed: self.config.seed,
            initial_mocu: self.initial_mocu.unwrap_or(f64::NAN),
            initial_stderr: self.initial_stderr.unwrap_or(f64::NAN),
            history: self
                .history
                .iter()
                .map(|s| StepRecord {
                    step: s.step,
                    pair: s.pair,
                    outcome: s.synchronized,
                    mocu: s.mocu.unwrap_or(f64::NAN),
                    stderr_mc: s.stderr_mc.unwrap_or(f64::NAN),
                    wall_ms: 0.0,
                    backend_calls: 0,
                })
                .collect(),
            static_ranking: None,
        }
    }
}
