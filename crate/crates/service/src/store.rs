//! Campaign registry: one serialized writer and an append-only log per
//! campaign, background jobs for the expensive estimates.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use kuramoto_oed::control::SearchConfig;
use kuramoto_oed::kuramoto::{Pair, SimConfig};
use kuramoto_oed::mocu::{Backend, BackendKind, MocuConfig};
use kuramoto_oed::oed::{GroundTruth, Planner, Selection, Strategy};
use kuramoto_oed::parallel::derive_seed;
use kuramoto_oed::surrogate::SurrogateClassifier;
use kuramoto_oed::uncertainty::{ExperimentOutcome, Setup, UncertaintyClass};
use serde::{Deserialize, Serialize};

use crate::record::{CampaignConfig, CampaignRecord, Event, Rejection, Status, Step};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("campaign {0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl From<io::Error> for ApiError {
    fn from(e: io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

/// Body of `POST /v1/campaigns`: a preset name or an explicit class.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub preset: Option<Setup>,
    #[serde(default)]
    pub class: Option<UncertaintyClass>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub eval_k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub crn: bool,
}

fn default_strategy() -> Strategy {
    Strategy::MocuIterative
}

fn default_backend() -> BackendKind {
    BackendKind::Ode
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Recommendation {
    Ready {
        pair: Pair,
        /// Expected remaining MOCU; only the MOCU strategies score pairs.
        remaining_mocu: Option<f64>,
        p_sync: f64,
        status: Status,
    },
    Computing {
        pending: Vec<String>,
        status: Status,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeReply {
    pub step: Step,
    pub mocu: Option<f64>,
    pub status: Status,
    pub pending: Vec<String>,
    pub version: u64,
}

pub const DEFAULT_K: usize = 2048;

struct Engine {
    ground_truth: GroundTruth,
    selection: Option<Selection>,
}

impl Engine {
    fn build(
        config: &CampaignConfig,
        models: &[Arc<SurrogateClassifier>],
    ) -> Result<Self, ApiError> {
        let sim = SimConfig::default();
        let search = SearchConfig {
            tolerance: config.tolerance,
            ..SearchConfig::default()
        };
        let eval = MocuConfig {
            search: search.clone(),
            ..MocuConfig::with_k(config.eval_k)
        };
        let selection = if config.strategy.uses_mocu() {
            let backend = match config.backend {
                BackendKind::Ode => Backend::Ode(sim.clone()),
                BackendKind::Ml => {
                    let n_total = config.class.n() + 1;
                    let model = models
                        .iter()
                        .find(|m| m.schema.n_total == n_total)
                        .ok_or_else(|| {
                            ApiError::Unprocessable(format!(
                                "no classifier loaded for {} oscillators plus control",
                                config.class.n()
                            ))
                        })?;
                    Backend::Ml(model.clone())
                }
            };
            let rank = MocuConfig {
                search,
                common_random_numbers: config.crn,
                ..MocuConfig::with_k(config.k)
            };
            Some(Selection::new(backend, rank, config.seed))
        } else {
            None
        };
        Ok(Engine {
            ground_truth: GroundTruth::new(sim, eval, derive_seed(config.seed, 0xE7A1)),
            selection,
        })
    }
}

struct Writer {
    record: CampaignRecord,
    log: File,
}

pub struct Campaign {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<CampaignRecord>>,
    engine: Engine,
    job_running: AtomicBool,
}

impl Campaign {
    pub fn snapshot(&self) -> Arc<CampaignRecord> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, record: &CampaignRecord) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(record.clone());
    }

    /// Appends `event` to the log and applies it, under the writer lock.
    fn commit(writer: &mut Writer, event: &Event) -> Result<(), ApiError> {
        let mut next = writer.record.clone();
        next.apply(event)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        append(&mut writer.log, event)?;
        writer.record = next;
        Ok(())
    }

    fn set_job_error(&self, message: Option<String>) {
        let mut w = self.writer.lock().expect("writer lock");
        w.record.job_error = message;
        self.publish(&w.record);
    }

    fn recommendation(&self, record: &CampaignRecord) -> Result<Recommendation, ApiError> {
        if record.is_exhausted() {
            return Err(ApiError::Conflict(
                "every experiment has been performed".into(),
            ));
        }
        let status = record.status;
        if record.config.strategy.uses_mocu() {
            let wanted = match record.config.strategy {
                Strategy::MocuStatic => 0,
                _ => record.history.len(),
            };
            return match &record.ranking {
                Some(r) if r.after_step == wanted => {
                    let best = r
                        .scores
                        .iter()
                        .find(|s| !record.is_performed(s.pair))
                        .ok_or_else(|| {
                            ApiError::Conflict("every experiment has been performed".into())
                        })?;
                    Ok(Recommendation::Ready {
                        pair: best.pair,
                        remaining_mocu: Some(best.remaining_mocu),
                        p_sync: best.p_sync,
                        status,
                    })
                }
                _ => Ok(Recommendation::Computing {
                    pending: record.pending.clone(),
                    status,
                }),
            };
        }
        let planner = Planner {
            strategy: record.config.strategy,
            selection: None,
            ground_truth: &self.engine.ground_truth,
            true_model: None,
        };
        let choice = planner
            .next_experiment(&mut record.state())
            .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
        Ok(Recommendation::Ready {
            pair: choice.pair,
            remaining_mocu: None,
            p_sync: record.class.outcome_probability(choice.pair),
            status,
        })
    }
}

fn append(log: &mut File, event: &Event) -> io::Result<()> {
    let mut line = serde_json::to_string(event).map_err(io::Error::other)?;
    line.push('\n');
    log.write_all(line.as_bytes())?;
    log.sync_data()
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Store {
    dir: PathBuf,
    models: Vec<Arc<SurrogateClassifier>>,
    campaigns: RwLock<HashMap<String, Arc<Campaign>>>,
}

impl Store {
    /// Opens `dir`, replaying every campaign log found there.
    pub fn open(dir: &Path, models: Vec<Arc<SurrogateClassifier>>) -> io::Result<Arc<Self>> {
        fs::create_dir_all(dir)?;
        let store = Arc::new(Store {
            dir: dir.to_path_buf(),
            models,
            campaigns: RwLock::new(HashMap::new()),
        });
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match store.recover(&path) {
                Ok(c) => {
                    let id = c.snapshot().id.clone();
                    store
                        .campaigns
                        .write()
                        .expect("registry lock")
                        .insert(id.clone(), c);
                    store.schedule(&id);
                }
                Err(e) => eprintln!("skipping {}: {e}", path.display()),
            }
        }
        Ok(store)
    }

    fn recover(&self, path: &Path) -> Result<Arc<Campaign>, ApiError> {
        let text = fs::read_to_string(path)?;
        let mut events = Vec::new();
        let mut good_len = 0;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (n, line) in lines.iter().enumerate() {
            match serde_json::from_str::<Event>(line) {
                Ok(e) if line.ends_with('\n') => {
                    events.push(e);
                    good_len += line.len();
                }
                // a torn final write from a crash is dropped
                _ if n + 1 == lines.len() => break,
                Ok(_) => unreachable!("only the last line can lack a newline"),
                Err(e) => {
                    return Err(ApiError::Internal(format!(
                        "{}:{}: {e}",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
        let record =
            CampaignRecord::replay(&events).map_err(|e| ApiError::Internal(e.to_string()))?;
        let log = OpenOptions::new().append(true).open(path)?;
        log.set_len(good_len as u64)?;
        let engine = Engine::build(&record.config, &self.models)?;
        Ok(Arc::new(Campaign {
            snapshot: RwLock::new(Arc::new(record.clone())),
            writer: Mutex::new(Writer { record, log }),
            engine,
            job_running: AtomicBool::new(false),
        }))
    }

    pub fn get(&self, id: &str) -> Result<Arc<Campaign>, ApiError> {
        self.campaigns
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))
    }

    pub fn list(&self) -> Vec<Arc<CampaignRecord>> {
        let mut all: Vec<_> = self
            .campaigns
            .read()
            .expect("registry lock")
            .values()
            .map(|c| c.snapshot())
            .collect();
        all.sort_by(|a, b| (a.created_ms, &a.id).cmp(&(b.created_ms, &b.id)));
        all
    }

    pub fn create(
        self: &Arc<Self>,
        request: CreateRequest,
    ) -> Result<Arc<CampaignRecord>, ApiError> {
        let (name, class) = match (request.preset, request.class) {
            (Some(p), None) => (p.to_string(), p.class()),
            (None, Some(c)) => ("custom".to_string(), c),
            _ => {
                return Err(ApiError::BadRequest(
                    "give exactly one of preset or class".into(),
                ))
            }
        };
        class
            .validate()
            .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
        if request.strategy == Strategy::Oracle {
            return Err(ApiError::Unprocessable(
                "the oracle strategy needs the true model, which a live campaign does not have"
                    .into(),
            ));
        }
        let k = request.k.unwrap_or(DEFAULT_K);
        let tolerance = request
            .tolerance
            .unwrap_or(SearchConfig::default().tolerance);
        if k == 0 || request.eval_k == Some(0) {
            return Err(ApiError::Unprocessable(
                "sample counts must be positive".into(),
            ));
        }
        if !(tolerance > 0.0) {
            return Err(ApiError::Unprocessable("tolerance must be positive".into()));
        }
        let config = CampaignConfig {
            name,
            class,
            strategy: request.strategy,
            backend: request.backend,
            k,
            eval_k: request.eval_k.unwrap_or(k),
            seed: request.seed,
            tolerance,
            crn: request.crn,
        };
        let engine = Engine::build(&config, &self.models)?;

        let mut registry = self.campaigns.write().expect("registry lock");
        let id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !registry.contains_key(&id) {
                break id;
            }
        };
        let event = Event::Created {
            id: id.clone(),
            config,
            at_ms: now_ms(),
        };
        let record =
            CampaignRecord::replay([&event]).map_err(|e| ApiError::Internal(e.to_string()))?;
        let mut log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(self.dir.join(format!("{id}.jsonl")))?;
        append(&mut log, &event)?;
        let snapshot = Arc::new(record.clone());
        registry.insert(
            id.clone(),
            Arc::new(Campaign {
                snapshot: RwLock::new(snapshot.clone()),
                writer: Mutex::new(Writer { record, log }),
                engine,
                job_running: AtomicBool::new(false),
            }),
        );
        drop(registry);
        self.schedule(&id);
        Ok(snapshot)
    }

    pub fn recommendation(&self, id: &str) -> Result<Recommendation, ApiError> {
        let campaign = self.get(id)?;
        let record = campaign.snapshot();
        campaign.recommendation(&record)
    }

    /// Records an observed outcome. Concurrent posts are serialized by the
    /// campaign's writer lock.
    pub fn post_outcome(
        self: &Arc<Self>,
        id: &str,
        pair: Pair,
        synchronized: bool,
    ) -> Result<OutcomeReply, ApiError> {
        let campaign = self.get(id)?;
        let reply = {
            let mut w = campaign.writer.lock().expect("writer lock");
            pair.check(w.record.class.n())
                .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
            if w.record.is_performed(pair) {
                return Err(ApiError::Conflict(format!("pair {pair} already performed")));
            }
            let outcome = ExperimentOutcome { pair, synchronized };
            if let Err(e) = w.record.class.update(&outcome) {
                let event = Event::Rejected(Rejection {
                    pair,
                    synchronized,
                    reason: e.to_string(),
                    at_ms: now_ms(),
                });
                Campaign::commit(&mut w, &event)?;
                campaign.publish(&w.record);
                return Err(ApiError::Unprocessable(e.to_string()));
            }
            let recommended = match campaign.recommendation(&w.record) {
                Ok(Recommendation::Ready { pair, .. }) => Some(pair),
                _ => None,
            };
            let event = Event::Outcome {
                pair,
                synchronized,
                recommended,
                at_ms: now_ms(),
            };
            Campaign::commit(&mut w, &event)?;
            campaign.publish(&w.record);
            let r = &w.record;
            OutcomeReply {
                step: r.history.last().expect("just recorded").clone(),
                mocu: None,
                status: r.status,
                pending: r.pending.clone(),
                version: r.version,
            }
        };
        self.schedule(id);
        Ok(reply)
    }

    /// Starts the campaign's background job unless one is running.
    fn schedule(self: &Arc<Self>, id: &str) {
        let Ok(campaign) = self.get(id) else { return };
        if campaign.snapshot().pending.is_empty() {
            return;
        }
        if campaign
            .job_running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return;
        }
        std::thread::spawn(move || loop {
            run_jobs(&campaign);
            campaign.job_running.store(false, Ordering::Release);
            // an outcome may have landed between the last check and the release
            let more =
                !campaign.snapshot().pending.is_empty() && campaign.snapshot().job_error.is_none();
            if !more
                || campaign
                    .job_running
                    .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
                    .is_err()
            {
                break;
            }
        });
    }

    /// Blocks until nothing is pending (or a job failed). For tests and
    /// orderly shutdown.
    pub fn wait_idle(
        &self,
        id: &str,
        timeout: std::time::Duration,
    ) -> Result<Arc<CampaignRecord>, ApiError> {
        let campaign = self.get(id)?;
        let start = Instant::now();
        loop {
            let s = campaign.snapshot();
            if (s.pending.is_empty() || s.job_error.is_some())
                && !campaign.job_running.load(Ordering::Acquire)
            {
                return Ok(s);
            }
            if start.elapsed() > timeout {
                return Err(ApiError::Internal(format!(
                    "campaign {id} still busy: {:?}",
                    s.pending
                )));
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
    }
}

/// Works through the pending rankings and evaluations, ranking first so a
/// waiting experimenter gets a recommendation as early as possible.
fn run_jobs(campaign: &Campaign) {
    loop {
        let record = campaign.snapshot();
        let event = if let Some(step) = record.needed_ranking() {
            let Some(selection) = &campaign.engine.selection else {
                return;
            };
            let start = Instant::now();
            match selection.rank(&record.class_after(step)) {
                Ok(scores) => {
                    let backend_calls = if selection.config.common_random_numbers {
                        scores.first().map_or(0, |s| s.predicate_calls)
                    } else {
                        scores.iter().map(|s| s.predicate_calls).sum()
                    };
                    Event::Ranked {
                        ranking: crate::record::Ranking {
                            after_step: step,
                            scores,
                            wall_ms: start.elapsed().as_secs_f64() * 1e3,
                            backend_calls,
                        },
                        at_ms: now_ms(),
                    }
                }
                Err(e) => return campaign.set_job_error(Some(format!("ranking failed: {e}"))),
            }
        } else if let Some(step) = record.next_evaluation() {
            match campaign
                .engine
                .ground_truth
                .estimate(&record.class_after(step))
            {
                Ok(m) => Event::Evaluated {
                    after_step: step,
                    mocu: m.value,
                    stderr: m.stderr,
                    at_ms: now_ms(),
                },
                Err(e) => {
                    return campaign.set_job_error(Some(format!("MOCU evaluation failed: {e}")))
                }
            }
        } else {
            return;
        };
        let mut w = campaign.writer.lock().expect("writer lock");
        if let Err(e) = Campaign::commit(&mut w, &event) {
            w.record.job_error = Some(e.to_string());
            campaign.publish(&w.record);
            return;
        }
        campaign.publish(&w.record);
    }
}
