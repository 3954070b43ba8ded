//! Sequential experimental design campaigns.
//!
//! Each step picks an unperformed pairwise experiment, observes its outcome
//! (from a hidden true model in simulation, or from a human through the
//! service), shrinks the class, and records the class's MOCU on a common
//! ODE-backed scale.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kuramoto::{Pair, SimConfig};
use crate::mocu::{
    expected_remaining_mocu, rank_experiments_cached, Backend, BackendKind, ExperimentScore,
    MocuCache, MocuConfig, MocuEstimate,
};
use crate::parallel::substream;
use crate::stats::{mean, standard_error};
use crate::uncertainty::{pairwise_sync_threshold, ExperimentOutcome, UncertaintyClass};

/// Couplings this close below the threshold still count as synchronizing.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    MocuIterative,
    MocuStatic,
    Entropy,
    Random,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::MocuIterative,
        Strategy::MocuStatic,
        Strategy::Entropy,
        Strategy::Random,
        Strategy::Oracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::MocuIterative => "mocu_iterative",
            Strategy::MocuStatic => "mocu_static",
            Strategy::Entropy => "entropy",
            Strategy::Random => "random",
            Strategy::Oracle => "oracle",
        }
    }

    pub fn uses_mocu(&self) -> bool {
        matches!(self, Strategy::MocuIterative | Strategy::MocuStatic)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy '{s}'")))
    }
}

/// Outcome of testing `pair` in isolation on the true network: synchronized
/// iff a_{i,j} ≥ |ω_i − ω_j| / 2.
pub fn simulate_outcome(
    omega: &[f64],
    true_model: &[f64],
    pair: Pair,
) -> Result<ExperimentOutcome> {
    pair.check(omega.len())?;
    let a = true_model
        .get(pair.index(omega.len()))
        .ok_or_else(|| Error::InvalidModel("true model is shorter than the pair list".into()))?;
    Ok(ExperimentOutcome {
        pair,
        synchronized: *a >= pairwise_sync_threshold(omega, pair) - BOUNDARY_TOLERANCE,
    })
}

/// Scale every campaign reports MOCU on: ODE backend, fixed seed, memoized
/// by class.
#[derive(Debug)]
pub struct GroundTruth {
    backend: Backend,
    pub config: MocuConfig,
    pub seed: u64,
    cache: MocuCache,
}

impl GroundTruth {
    pub fn new(sim: SimConfig, config: MocuConfig, seed: u64) -> Self {
        GroundTruth {
            backend: Backend::Ode(sim),
            config,
            seed,
            cache: MocuCache::new(),
        }
    }

    pub fn estimate(&self, class: &UncertaintyClass) -> Result<MocuEstimate> {
        self.cache
            .estimate(class, &self.backend, &self.config, self.seed)
    }

    /// Distinct classes evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }
}

/// MOCU-based experiment scoring with one backend.
#[derive(Debug)]
pub struct Selection {
    pub backend: Backend,
    pub config: MocuConfig,
    pub seed: u64,
    cache: MocuCache,
}

impl Selection {
    pub fn new(backend: Backend, config: MocuConfig, seed: u64) -> Self {
        Selection {
            backend,
            config,
            seed,
            cache: MocuCache::new(),
        }
    }

    pub fn rank(&self, class: &UncertaintyClass) -> Result<Vec<ExperimentScore>> {
        rank_experiments_cached(class, &self.backend, &self.config, self.seed, &self.cache)
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }
}

fn ranking_calls(scores: &[ExperimentScore], crn: bool) -> usize {
    if crn {
        scores.first().map_or(0, |s| s.predicate_calls)
    } else {
        scores.iter().map(|s| s.predicate_calls).sum()
    }
}

/// One performed experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pair: Pair,
    pub outcome: bool,
    /// Ground-truth MOCU after the update.
    pub mocu: f64,
    pub stderr_mc: f64,
    /// Time spent choosing the experiment.
    pub wall_ms: f64,
    /// Predicate evaluations spent choosing it.
    pub backend_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub initial: UncertaintyClass,
    pub class: UncertaintyClass,
    pub strategy: Strategy,
    pub backend: Option<BackendKind>,
    pub seed: u64,
    pub initial_mocu: f64,
    pub initial_stderr: f64,
    pub history: Vec<StepRecord>,
    /// Pair order of the initial ranking, once computed.
    #[serde(default)]
    pub static_ranking: Option<Vec<Pair>>,
}

impl CampaignState {
    pub fn new(
        initial: UncertaintyClass,
        strategy: Strategy,
        backend: Option<BackendKind>,
        seed: u64,
        ground_truth: &GroundTruth,
    ) -> Result<Self> {
        initial.validate()?;
        let m = ground_truth.estimate(&initial)?;
        Ok(CampaignState {
            class: initial.clone(),
            initial,
            strategy,
            backend,
            seed,
            initial_mocu: m.value,
            initial_stderr: m.stderr,
            history: Vec::new(),
            static_ranking: None,
        })
    }

    pub fn is_performed(&self, pair: Pair) -> bool {
        self.history.iter().any(|r| r.pair == pair)
    }

    pub fn remaining(&self) -> Vec<Pair> {
        let done: HashSet<Pair> = self.history.iter().map(|r| r.pair).collect();
        self.class
            .pairs()
            .into_iter()
            .filter(|p| !done.contains(p))
            .collect()
    }

    pub fn is_exhausted(&self) -> bool {
        self.history.len() >= self.class.pairs().len()
    }

    /// Ground-truth MOCU before any experiment, then after each.
    pub fn trajectory(&self) -> Vec<f64> {
        std::iter::once(self.initial_mocu)
            .chain(self.history.iter().map(|r| r.mocu))
            .collect()
    }

    pub fn sequence(&self) -> Vec<Pair> {
        self.history.iter().map(|r| r.pair).collect()
    }

    /// The initial class with every recorded outcome applied in order.
    pub fn replay(&self) -> Result<UncertaintyClass> {
        self.history.iter().try_fold(self.initial.clone(), |c, r| {
            c.update(&ExperimentOutcome {
                pair: r.pair,
                synchronized: r.outcome,
            })
        })
    }

    /// Applies an observed outcome and appends its record.
    pub fn record(
        &mut self,
        outcome: ExperimentOutcome,
        ground_truth: &GroundTruth,
        wall_ms: f64,
        backend_calls: usize,
    ) -> Result<&StepRecord> {
        outcome.pair.check(self.class.n())?;
        if self.is_performed(outcome.pair) {
            return Err(Error::AlreadyPerformed(
                outcome.pair.i + 1,
                outcome.pair.j + 1,
            ));
        }
        let next = self.class.update(&outcome)?;
        let m = ground_truth.estimate(&next)?;
        self.class = next;
        self.history.push(StepRecord {
            step: self.history.len() + 1,
            pair: outcome.pair,
            outcome: outcome.synchronized,
            mocu: m.value,
            stderr_mc: m.stderr,
            wall_ms,
            backend_calls,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Campaign log: one JSON object per step.
    pub fn to_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

/// The pieces a strategy may consult when choosing.
pub struct Planner<'a> {
    pub strategy: Strategy,
    /// Required by the MOCU strategies.
    pub selection: Option<&'a Selection>,
    pub ground_truth: &'a GroundTruth,
    /// Required by the oracle.
    pub true_model: Option<&'a [f64]>,
}

/// A chosen experiment plus what choosing it cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub pair: Pair,
    pub backend_calls: usize,
    pub wall_ms: f64,
    /// The score the MOCU strategies ranked it by.
    pub score: Option<ExperimentScore>,
}

impl Planner<'_> {
    fn selection(&self) -> Result<&Selection> {
        self.selection.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "strategy {} needs a selection backend",
                self.strategy
            ))
        })
    }

    /// The next experiment for `state`. Static rankings are computed on first
    /// use and stored in the state.
    pub fn next_experiment(&self, state: &mut CampaignState) -> Result<Choice> {
        let remaining = state.remaining();
        if remaining.is_empty() {
            return Err(Error::Exhausted);
        }
        let start = Instant::now();
        let mut calls = 0;
        let mut score = None;
        let pair = match self.strategy {
            Strategy::MocuIterative => {
                let sel = self.selection()?;
                let ranking = sel.rank(&state.class)?;
                calls = ranking_calls(&ranking, sel.config.common_random_numbers);
                let best = ranking
                    .into_iter()
                    .find(|s| !state.is_performed(s.pair))
                    .ok_or(Error::Exhausted)?;
                let p = best.pair;
                score = Some(best);
                p
            }
            Strategy::MocuStatic => {
                if state.static_ranking.is_none() {
                    let sel = self.selection()?;
                    let ranking = sel.rank(&state.initial)?;
                    calls = ranking_calls(&ranking, sel.config.common_random_numbers);
                    state.static_ranking = Some(ranking.iter().map(|s| s.pair).collect());
                }
                let order = state.static_ranking.as_ref().expect("set above");
                *order
                    .iter()
                    .find(|p| !state.is_performed(**p))
                    .ok_or(Error::Exhausted)?
            }
            Strategy::Entropy => {
                // uniform entropy is log(width); first widest wins ties
                let mut best = remaining[0];
                for &p in &remaining[1..] {
                    if state.class.width(p) > state.class.width(best) {
                        best = p;
                    }
                }
                best
            }
            Strategy::Random => {
                let mut rng = substream(state.seed, state.history.len() as u64);
                remaining[rng.gen_range(0..remaining.len())]
            }
            Strategy::Oracle => {
                let truth = self.true_model.ok_or_else(|| {
                    Error::InvalidConfig("the oracle needs the true model".into())
                })?;
                let mut best: Option<(f64, Pair)> = None;
                for &p in &remaining {
                    let outcome = simulate_outcome(&state.class.omega, truth, p)?;
                    let m = self.ground_truth.estimate(&state.class.update(&outcome)?)?;
                    calls += m.predicate_calls;
                    if best.is_none_or(|(v, _)| m.value < v) {
                        best = Some((m.value, p));
                    }
                }
                best.expect("remaining is nonempty").1
            }
        };
        Ok(Choice {
            pair,
            backend_calls: calls,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            score,
        })
    }

    /// Runs `steps` experiments against the planner's true model.
    pub fn run_campaign(
        &self,
        initial: &UncertaintyClass,
        steps: usize,
        seed: u64,
    ) -> Result<CampaignState> {
        let truth = self.true_model.ok_or_else(|| {
            Error::InvalidConfig("a simulated campaign needs a true model".into())
        })?;
        if truth.len() != initial.lower.len() {
            return Err(Error::SchemaMismatch {
                expected: initial.lower.len(),
                actual: truth.len(),
            });
        }
        if !initial.contains(truth) {
            return Err(Error::InvalidModel(
                "true model lies outside the class".into(),
            ));
        }
        if steps > initial.pairs().len() {
            return Err(Error::InvalidConfig(format!(
                "{steps} steps requested but only {} experiments exist",
                initial.pairs().len()
            )));
        }
        let backend = self
            .strategy
            .uses_mocu()
            .then(|| self.selection())
            .transpose()?
            .map(|s| s.kind());
        let mut state = CampaignState::new(
            initial.clone(),
            self.strategy,
            backend,
            seed,
            self.ground_truth,
        )?;
        for _ in 0..steps {
            let choice = self.next_experiment(&mut state)?;
            let outcome = simulate_outcome(&initial.omega, truth, choice.pair)?;
            state.record(
                outcome,
                self.ground_truth,
                choice.wall_ms,
                choice.backend_calls,
            )?;
        }
        Ok(state)
    }
}

/// Entry k − 1 is the number of experiments common to the first k of each
/// sequence.
pub fn sequence_agreement(a: &[Pair], b: &[Pair]) -> Result<Vec<usize>> {
    let (sa, sb): (HashSet<Pair>, HashSet<Pair>) =
        (a.iter().copied().collect(), b.iter().copied().collect());
    if a.len() != b.len() || sa.len() != a.len() || sa != sb {
        return Err(Error::MismatchedDesignSpace(format!(
            "sequences of {} and {} experiments are not permutations of one design space",
            a.len(),
            b.len()
        )));
    }
    let mut seen_a = HashSet::new();
    let mut seen_b = HashSet::new();
    let mut common = 0;
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == y {
                common += 1;
            } else {
                common += usize::from(seen_b.contains(&x)) + usize::from(seen_a.contains(&y));
            }
            seen_a.insert(x);
            seen_b.insert(y);
            common
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub pair: Pair,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub ode_seconds: f64,
    pub ml_seconds: f64,
    /// Mean ODE time over mean ML time.
    pub ratio: f64,
}

/// Times [`expected_remaining_mocu`] on `pair` under both backends with the
/// same K and seeds.
pub fn benchmark_speedup(
    class: &UncertaintyClass,
    pair: Pair,
    ode: &Backend,
    ml: &Backend,
    config: &MocuConfig,
    seeds: &[u64],
) -> Result<SpeedupReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "benchmark needs at least one seed".into(),
        ));
    }
    let time = |backend: &Backend| -> Result<f64> {
        let mut total = 0.0;
        for &seed in seeds {
            let start = Instant::now();
            expected_remaining_mocu(class, pair, backend, config, seed)?;
            total += start.elapsed().as_secs_f64();
        }
        Ok(total / seeds.len() as f64)
    };
    let ml_seconds = time(ml)?;
    let ode_seconds = time(ode)?;
    Ok(SpeedupReport {
        pair,
        k: config.k,
        seeds: seeds.to_vec(),
        ode_seconds,
        ml_seconds,
        ratio: ode_seconds / ml_seconds,
    })
}

/// Per-step summary across replicate campaigns of one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub label: String,
    pub step: usize,
    pub mean_mocu: f64,
    pub stderr_mocu: f64,
    pub mean_cumulative_seconds: f64,
}

/// Mean and standard error of MOCU at every step, plus mean cumulative
/// selection time.
pub fn summarize_runs(label: &str, runs: &[CampaignState]) -> Vec<TrajectorySummary> {
    let steps = runs.iter().map(|r| r.history.len()).min().unwrap_or(0);
    (0..=steps)
        .map(|k| {
            let values: Vec<f64> = runs.iter().map(|r| r.trajectory()[k]).collect();
            let seconds: Vec<f64> = runs
                .iter()
                .map(|r| r.history[..k].iter().map(|h| h.wall_ms).sum::<f64>() / 1e3)
                .collect();
            TrajectorySummary {
                label: label.to_string(),
                step: k,
                mean_mocu: mean(&values),
                stderr_mocu: standard_error(&values),
                mean_cumulative_seconds: mean(&seconds),
            }
        })
        .collect()
}

pub fn summaries_to_csv(rows: &[TrajectorySummary]) -> String {
    let mut out = String::from("series,step,mean_mocu,stderr_mocu,mean_cumulative_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label, r.step, r.mean_mocu, r.stderr_mocu, r.mean_cumulative_seconds
        ));
    }
    out
}
