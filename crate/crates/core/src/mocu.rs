//! Sampling-based MOCU and expected remaining MOCU.
//!
//! M(A) is estimated as max_k ξ(a_k) − mean_k ξ(a_k) over K couplings drawn
//! uniformly from the class, with each ξ found by [`find_xi`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::control::{find_xi, make_ml_predicate, make_ode_predicate, SearchConfig, SyncPredicate};
use crate::error::{Error, Result};
use crate::kuramoto::{Pair, SimConfig};
use crate::parallel::{par_map_indexed, DEFAULT_BATCH_WIDTH};
use crate::surrogate::SurrogateClassifier;
use crate::uncertainty::{ExperimentOutcome, UncertaintyClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Ode,
    Ml,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Ode => "ode",
            BackendKind::Ml => "ml",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(BackendKind::Ode),
            "ml" => Ok(BackendKind::Ml),
            other => Err(Error::InvalidConfig(format!(
                "unknown backend '{other}' (expected ode or ml)"
            ))),
        }
    }
}

/// Where synchronization answers come from inside the ξ search.
#[derive(Clone, Debug)]
pub enum Backend {
    Ode(SimConfig),
    Ml(Arc<SurrogateClassifier>),
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Ode(_) => BackendKind::Ode,
            Backend::Ml(_) => BackendKind::Ml,
        }
    }

    pub fn predicate(&self, omega: &[f64]) -> Result<Box<dyn SyncPredicate>> {
        Ok(match self {
            Backend::Ode(sim) => Box::new(make_ode_predicate(omega, sim.clone())?),
            Backend::Ml(model) => Box::new(make_ml_predicate(model.clone(), omega)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MocuConfig {
    /// Sample count K.
    pub k: usize,
    pub search: SearchConfig,
    pub batch_width: usize,
    /// Score experiments by filtering the parent samples instead of drawing
    /// fresh ones from each reduced class.
    pub common_random_numbers: bool,
}

impl Default for MocuConfig {
    fn default() -> Self {
        MocuConfig {
            k: 2048,
            search: SearchConfig::default(),
            batch_width: DEFAULT_BATCH_WIDTH,
            common_random_numbers: false,
        }
    }
}

impl MocuConfig {
    pub fn with_k(k: usize) -> Self {
        MocuConfig {
            k,
            ..MocuConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MocuEstimate {
    pub value: f64,
    /// Robust cost: the largest sampled ξ.
    pub xi_star: f64,
    pub xi_mean: f64,
    pub k: usize,
    pub seed: u64,
    pub backend: BackendKind,
    /// Samples whose search never synchronized.
    pub excluded: usize,
    pub predicate_calls: usize,
    /// Monte-Carlo standard error of the mean term.
    pub stderr: f64,
}

impl MocuEstimate {
    fn from_xis(
        xis: &[f64],
        k: usize,
        seed: u64,
        backend: BackendKind,
        excluded: usize,
        calls: usize,
    ) -> Self {
        let m = xis.len() as f64;
        let xi_star = xis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xi_mean = xis.iter().sum::<f64>() / m;
        let stderr = if xis.len() > 1 {
            (xis.iter().map(|x| (x - xi_mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        MocuEstimate {
            value: xi_star - xi_mean,
            xi_star,
            xi_mean,
            k,
            seed,
            backend,
            excluded,
            predicate_calls: calls,
            stderr,
        }
    }
}

/// K sampled couplings and their ξ (`None` when the search failed to
/// synchronize).
struct XiSet {
    samples: Vec<Vec<f64>>,
    xi: Vec<Option<f64>>,
    calls: usize,
}

fn xi_set(
    class: &UncertaintyClass,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<XiSet> {
    config.validate()?;
    class.validate()?;
    let predicate = backend.predicate(&class.omega)?;
    let samples = class.sample(config.k, seed);
    let results = par_map_indexed(config.k, config.batch_width, |k| {
        match find_xi(&samples[k], predicate.as_ref(), &config.search) {
            Ok(r) => Ok((Some(r.xi), r.predicate_calls)),
            Err(Error::Unsynchronizable { expansions, .. }) => Ok((None, expansions + 2)),
            Err(e) => Err(e),
        }
    });
    let mut xi = Vec::with_capacity(config.k);
    let mut calls = 0;
    for r in results {
        let (x, c) = r?;
        xi.push(x);
        calls += c;
    }
    Ok(XiSet { samples, xi, calls })
}

fn summarize(
    xi: &[Option<f64>],
    k: usize,
    seed: u64,
    backend: BackendKind,
    calls: usize,
) -> Result<MocuEstimate> {
    let kept: Vec<f64> = xi.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::Unsynchronizable {
            last_upper: f64::NAN,
            expansions: 0,
        });
    }
    Ok(MocuEstimate::from_xis(
        &kept,
        k,
        seed,
        backend,
        xi.len() - kept.len(),
        calls,
    ))
}

/// MOCU of `class`; deterministic in (class, backend, config, seed).
///
/// Samples whose ξ search never synchronizes are dropped and counted in
/// `excluded`.
pub fn estimate_mocu(
    class: &UncertaintyClass,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<MocuEstimate> {
    let set = xi_set(class, backend, config, seed)?;
    summarize(&set.xi, config.k, seed, backend.kind(), set.calls)
}

/// MOCU of the class reduced by `outcome`, from fresh draws of the reduced box.
pub fn conditional_mocu(
    class: &UncertaintyClass,
    outcome: &ExperimentOutcome,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<MocuEstimate> {
    estimate_mocu(&class.update(outcome)?, backend, config, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentScore {
    pub pair: Pair,
    /// R(i,j) = p·M(A | sync) + (1 − p)·M(A | no sync).
    pub remaining_mocu: f64,
    pub p_sync: f64,
    /// `None` when the branch has probability zero and was skipped.
    pub mocu_sync: Option<f64>,
    pub mocu_nosync: Option<f64>,
    pub stderr: f64,
    pub informative: bool,
    pub predicate_calls: usize,
}

fn combine(
    pair: Pair,
    p: f64,
    sync: Option<&MocuEstimate>,
    nosync: Option<&MocuEstimate>,
    informative: bool,
) -> ExperimentScore {
    let part = |e: Option<&MocuEstimate>, w: f64| {
        e.map_or((0.0, 0.0, 0), |e| {
            (w * e.value, (w * e.stderr).powi(2), e.predicate_calls)
        })
    };
    let (rs, vs, cs) = part(sync, p);
    let (rn, vn, cn) = part(nosync, 1.0 - p);
    ExperimentScore {
        pair,
        remaining_mocu: rs + rn,
        p_sync: p,
        mocu_sync: sync.map(|e| e.value),
        mocu_nosync: nosync.map(|e| e.value),
        stderr: (vs + vn).sqrt(),
        informative,
        predicate_calls: cs + cn,
    }
}

/// Memo of estimates keyed by class bounds, seed and configuration.
///
/// Experiments that cannot move the class leave it bit-identical, so many
/// conditional estimates coincide. Use one cache per backend.
#[derive(Debug, Default)]
pub struct MocuCache {
    entries: Mutex<HashMap<CacheKey, MocuEstimate>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    bounds: Vec<u64>,
    seed: u64,
    k: usize,
    tolerance: u64,
    backend: BackendKind,
}

impl MocuCache {
    pub fn new() -> Self {
        MocuCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// [`estimate_mocu`] through the memo.
    pub fn estimate(
        &self,
        class: &UncertaintyClass,
        backend: &Backend,
        config: &MocuConfig,
        seed: u64,
    ) -> Result<MocuEstimate> {
        let key = CacheKey {
            bounds: class
                .omega
                .iter()
                .chain(&class.lower)
                .chain(&class.upper)
                .map(|x| x.to_bits())
                .collect(),
            seed,
            k: config.k,
            tolerance: config.search.tolerance.to_bits(),
            backend: backend.kind(),
        };
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let est = estimate_mocu(class, backend, config, seed)?;
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key, est.clone());
        Ok(est)
    }
}

/// R(i,j) for one pair. Branches with zero probability are not estimated.
pub fn expected_remaining_mocu(
    class: &UncertaintyClass,
    pair: Pair,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<ExperimentScore> {
    score_pairs(class, &[pair], backend, config, seed, &MocuCache::new()).map(|mut v| v.remove(0))
}

fn score_pairs(
    class: &UncertaintyClass,
    pairs: &[Pair],
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
    cache: &MocuCache,
) -> Result<Vec<ExperimentScore>> {
    for p in pairs {
        p.check(class.n())?;
    }
    if config.common_random_numbers {
        return score_pairs_crn(class, pairs, backend, config, seed);
    }
    pairs
        .iter()
        .map(|&pair| {
            let p = class.outcome_probability(pair);
            let branch = |synchronized: bool, weight: f64| -> Result<Option<MocuEstimate>> {
                if weight <= 0.0 {
                    return Ok(None);
                }
                let reduced = class.update(&ExperimentOutcome { pair, synchronized })?;
                cache.estimate(&reduced, backend, config, seed).map(Some)
            };
            let sync = branch(true, p)?;
            let nosync = branch(false, 1.0 - p)?;
            Ok(combine(
                pair,
                p,
                sync.as_ref(),
                nosync.as_ref(),
                class.is_informative(pair),
            ))
        })
        .collect()
}

/// Common-random-numbers scoring: one parent sample set; each branch keeps
/// the samples consistent with its outcome and is weighted by their share.
fn score_pairs_crn(
    class: &UncertaintyClass,
    pairs: &[Pair],
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<Vec<ExperimentScore>> {
    let set = xi_set(class, backend, config, seed)?;
    let kept: Vec<(&Vec<f64>, f64)> = set
        .samples
        .iter()
        .zip(&set.xi)
        .filter_map(|(a, x)| x.map(|x| (a, x)))
        .collect();
    if kept.is_empty() {
        return summarize(&set.xi, config.k, seed, backend.kind(), set.calls).map(|_| Vec::new());
    }
    let n = class.n();
    Ok(pairs
        .iter()
        .map(|&pair| {
            let idx = pair.index(n);
            let theta = class.sync_threshold(pair);
            let sync: Vec<f64> = kept
                .iter()
                .filter(|(a, _)| a[idx] >= theta)
                .map(|(_, x)| *x)
                .collect();
            let nosync: Vec<f64> = kept
                .iter()
                .filter(|(a, _)| a[idx] < theta)
                .map(|(_, x)| *x)
                .collect();
            let p = sync.len() as f64 / kept.len() as f64;
            let est = |xs: &[f64]| {
                (!xs.is_empty())
                    .then(|| MocuEstimate::from_xis(xs, config.k, seed, backend.kind(), 0, 0))
            };
            let mut score = combine(
                pair,
                p,
                est(&sync).as_ref(),
                est(&nosync).as_ref(),
                class.is_informative(pair),
            );
            score.predicate_calls = set.calls;
            score
        })
        .collect())
}

/// Scores every pair and sorts ascending by R, ties by pair order.
pub fn rank_experiments(
    class: &UncertaintyClass,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
) -> Result<Vec<ExperimentScore>> {
    rank_experiments_cached(class, backend, config, seed, &MocuCache::new())
}

pub fn rank_experiments_cached(
    class: &UncertaintyClass,
    backend: &Backend,
    config: &MocuConfig,
    seed: u64,
    cache: &MocuCache,
) -> Result<Vec<ExperimentScore>> {
    let mut scores = score_pairs(class, &class.pairs(), backend, config, seed, cache)?;
    sort_scores(&mut scores);
    Ok(scores)
}

pub fn sort_scores(scores: &mut [ExperimentScore]) {
    scores.sort_by(|x, y| {
        x.remaining_mocu
            .total_cmp(&y.remaining_mocu)
            .then(x.pair.cmp(&y.pair))
    });
}

pub fn scores_to_csv(scores: &[ExperimentScore]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("pair_i,pair_j,p_sync,mocu_sync,mocu_nosync,remaining_mocu\n");
    for s in scores {
        let (i, j) = (s.pair.i + 1, s.pair.j + 1);
        out.push_str(&format!(
            "{i},{j},{},{},{},{}\n",
            s.p_sync,
            opt(s.mocu_sync),
            opt(s.mocu_nosync),
            s.remaining_mocu
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{build_paper_class, Setup};

    fn ode() -> Backend {
        Backend::Ode(SimConfig::default())
    }

    fn small(k: usize) -> MocuConfig {
        MocuConfig {
            search: SearchConfig {
                tolerance: 1e-3,
                ..SearchConfig::default()
            },
            ..MocuConfig::with_k(k)
        }
    }

    fn class() -> UncertaintyClass {
        build_paper_class(Setup::FiveOsc)
    }

    #[test]
    fn single_sample_has_zero_mocu() {
        let e = estimate_mocu(&class(), &ode(), &small(1), 4).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.k, 1);
    }

    #[test]
    fn resolved_class_has_no_uncertainty() {
        let a = Setup::FiveOsc.true_model().unwrap();
        let c = UncertaintyClass::new(class().omega, a.clone(), a).unwrap();
        let cfg = small(8);
        let e = estimate_mocu(&c, &ode(), &cfg, 1).unwrap();
        assert!(e.value.abs() <= 2.0 * cfg.search.tolerance);
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let a = estimate_mocu(&class(), &ode(), &small(24), 9).unwrap();
        let b = estimate_mocu(&class(), &ode(), &small(24), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.value > 0.0);
        assert_eq!(a.excluded, 0);
        assert!(a.predicate_calls >= 24);
    }

    #[test]
    fn uninformative_outcome_leaves_estimate_unchanged() {
        let c = class();
        let pair = Pair::one_based(1, 3).unwrap();
        assert!(!c.is_informative(pair));
        let outcome = ExperimentOutcome {
            pair,
            synchronized: c.outcome_probability(pair) > 0.5,
        };
        let cond = conditional_mocu(&c, &outcome, &ode(), &small(16), 3).unwrap();
        assert_eq!(cond, estimate_mocu(&c, &ode(), &small(16), 3).unwrap());
    }

    #[test]
    fn degenerate_mixture_uses_one_branch() {
        let c = class();
        let pair = Pair::one_based(1, 3).unwrap();
        let s = expected_remaining_mocu(&c, pair, &ode(), &small(8), 2).unwrap();
        assert!(s.p_sync == 1.0 || s.p_sync == 0.0);
        assert!(s.mocu_sync.is_none() || s.mocu_nosync.is_none());
        let only = s.mocu_sync.or(s.mocu_nosync).unwrap();
        assert_eq!(s.remaining_mocu, only);
    }

    #[test]
    fn crn_scores_never_exceed_parent_mocu() {
        let c = class();
        let cfg = MocuConfig {
            common_random_numbers: true,
            ..small(32)
        };
        let m = estimate_mocu(&c, &ode(), &cfg, 5).unwrap();
        let ranked = rank_experiments(&c, &ode(), &cfg, 5).unwrap();
        assert_eq!(ranked.len(), 10);
        for s in &ranked {
            assert!(s.remaining_mocu <= m.value, "{s:?} vs {}", m.value);
            let p = s.p_sync;
            let mix = p * s.mocu_sync.unwrap_or(0.0) + (1.0 - p) * s.mocu_nosync.unwrap_or(0.0);
            assert!((mix - s.remaining_mocu).abs() < 1e-12);
        }
    }

    #[test]
    fn one_open_pair_ranks_first() {
        // only pair (1,2) has θ inside its interval
        let c = UncertaintyClass::new(
            vec![0.0, 2.0, 10.0],
            vec![0.5, 0.0, 0.0],
            vec![1.5, 1.0, 1.0],
        )
        .unwrap();
        assert!(c.is_informative(Pair::new(0, 1).unwrap()));
        let ranked = rank_experiments(&c, &ode(), &small(16), 1).unwrap();
        assert_eq!(ranked[0].pair, Pair::new(0, 1).unwrap());
        assert!(ranked[0].informative);
        assert!(ranked[1..].iter().all(|s| !s.informative));
        let mut pairs: Vec<Pair> = ranked.iter().map(|s| s.pair).collect();
        pairs.sort();
        assert_eq!(pairs, c.pairs());
        // ties broken by pair order
        assert!(ranked[1].pair < ranked[2].pair);
    }

    #[test]
    fn cache_reuses_identical_classes() {
        let c = class();
        let cache = MocuCache::new();
        let cfg = small(8);
        let ranked = rank_experiments_cached(&c, &ode(), &cfg, 1, &cache).unwrap();
        // five informative pairs give two classes each; the rest share the parent
        assert_eq!(cache.len(), 11);
        assert_eq!(ranked, rank_experiments(&c, &ode(), &cfg, 1).unwrap());
    }

    #[test]
    fn csv_has_one_row_per_pair() {
        let ranked = rank_experiments(&class(), &ode(), &small(4), 1).unwrap();
        let csv = scores_to_csv(&ranked);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("pair_i,pair_j,p_sync,mocu_sync,mocu_nosync,remaining_mocu")
        );
        assert_eq!(lines.count(), 10);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("ml".parse::<BackendKind>().unwrap(), BackendKind::Ml);
        assert!("gpu".parse::<BackendKind>().is_err());
    }
}
