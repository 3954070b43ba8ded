//! Minimal control coupling ξ(a) by bracketed bisection.
//!
//! A control oscillator at the mean natural frequency is coupled to every
//! oscillator with a common strength c. ξ(a) is the smallest c for which the
//! augmented network synchronizes; the decision "does it synchronize at c"
//! comes from a [`SyncPredicate`], backed either by the ODE solver or by the
//! surrogate classifier.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kuramoto::{
    augment_with_control_at, mean_frequency, simulate_sync, KuramotoModel, SimConfig,
};
use crate::surrogate::{Featurizer, SurrogateClassifier};

/// Decides whether the network with couplings `a`, plus a control
/// oscillator coupled with strength `c`, synchronizes.
///
/// Assumed monotone in `c`. Implementations are shared read-only across
/// worker threads.
pub trait SyncPredicate: Send + Sync {
    fn synchronizes(&self, a: &[f64], c: f64) -> Result<bool>;

    /// Natural frequencies of the uncontrolled network.
    fn omega(&self) -> &[f64];

    fn control_omega(&self) -> f64 {
        mean_frequency(self.omega())
    }

    /// Starting upper bracket for the search: max_i |ω_i − ω_c|.
    fn natural_scale(&self) -> f64 {
        let wc = self.control_omega();
        self.omega()
            .iter()
            .map(|w| (w - wc).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tolerance: f64,
    /// `None` picks the predicate's natural scale.
    pub initial_upper: Option<f64>,
    pub max_expansions: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tolerance: 2.5e-4,
            initial_upper: None,
            max_expansions: 30,
        }
    }
}

/// Result of one ξ search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XiSearch {
    /// Upper end of the final bracket; the predicate holds there.
    pub xi: f64,
    pub predicate_calls: usize,
    pub expansions: usize,
}

/// Finds ξ(a) to within `config.tolerance`.
///
/// Checks c = 0 first, then doubles the upper bracket until the predicate
/// holds, then bisects. Only values where the predicate held are ever
/// returned, so isolated non-monotone answers cannot make it report a
/// non-synchronizing coupling.
pub fn find_xi(
    a: &[f64],
    predicate: &dyn SyncPredicate,
    config: &SearchConfig,
) -> Result<XiSearch> {
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidConfig(
            "search tolerance must be positive".into(),
        ));
    }
    let mut calls = 1;
    if predicate.synchronizes(a, 0.0)? {
        return Ok(XiSearch {
            xi: 0.0,
            predicate_calls: calls,
            expansions: 0,
        });
    }

    let scale = config
        .initial_upper
        .unwrap_or_else(|| predicate.natural_scale());
    let mut upper = if scale > 0.0 { scale } else { 1.0 };
    let mut lower = 0.0;
    let mut expansions = 0;
    loop {
        calls += 1;
        if predicate.synchronizes(a, upper)? {
            break;
        }
        if expansions == config.max_expansions {
            return Err(Error::Unsynchronizable {
                last_upper: upper,
                expansions,
            });
        }
        lower = upper;
        upper *= 2.0;
        expansions += 1;
    }

    while upper - lower > config.tolerance {
        let mid = 0.5 * (lower + upper);
        calls += 1;
        if predicate.synchronizes(a, mid)? {
            upper = mid;
        } else {
            lower = mid;
        }
    }
    Ok(XiSearch {
        xi: upper,
        predicate_calls: calls,
        expansions,
    })
}

/// Integrates the augmented network and applies the short-horizon
/// synchronization check.
#[derive(Clone, Debug)]
pub struct OdePredicate {
    omega: Vec<f64>,
    control_omega: f64,
    sim: SimConfig,
}

/// ODE-backed predicate with the control oscillator at the mean frequency.
pub fn make_ode_predicate(omega: &[f64], sim: SimConfig) -> Result<OdePredicate> {
    OdePredicate::with_control_frequency(omega, mean_frequency(omega), sim)
}

impl OdePredicate {
    pub fn with_control_frequency(
        omega: &[f64],
        control_omega: f64,
        sim: SimConfig,
    ) -> Result<Self> {
        if omega.is_empty() || omega.iter().any(|w| !w.is_finite()) || !control_omega.is_finite() {
            return Err(Error::InvalidModel(
                "frequencies must be finite and nonempty".into(),
            ));
        }
        sim.validate()?;
        Ok(OdePredicate {
            omega: omega.to_vec(),
            control_omega,
            sim,
        })
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }
}

impl SyncPredicate for OdePredicate {
    fn synchronizes(&self, a: &[f64], c: f64) -> Result<bool> {
        let base = KuramotoModel::with_zero_phases(self.omega.clone(), a.to_vec())?;
        let model = augment_with_control_at(&base, c, self.control_omega);
        simulate_sync(&model, &self.sim)
    }

    fn omega(&self) -> &[f64] {
        &self.omega
    }

    fn control_omega(&self) -> f64 {
        self.control_omega
    }
}

/// Exact answer for one free oscillator plus control: the pair locks iff
/// c ≥ |ω − ω_c| / 2.
#[derive(Clone, Debug)]
pub struct TwoBodyPredicate {
    omega: [f64; 1],
    control_omega: f64,
}

impl TwoBodyPredicate {
    pub fn new(omega: f64, control_omega: f64) -> Self {
        TwoBodyPredicate {
            omega: [omega],
            control_omega,
        }
    }
}

impl SyncPredicate for TwoBodyPredicate {
    fn synchronizes(&self, _a: &[f64], c: f64) -> Result<bool> {
        Ok(c >= (self.omega[0] - self.control_omega).abs() / 2.0)
    }

    fn omega(&self) -> &[f64] {
        &self.omega
    }

    fn control_omega(&self) -> f64 {
        self.control_omega
    }
}

/// Classifier-backed predicate: featurize, then threshold the sigmoid
/// output at 0.5.
#[derive(Clone, Debug)]
pub struct MlPredicate {
    model: Arc<SurrogateClassifier>,
    featurizer: Featurizer,
    omega: Vec<f64>,
}

pub fn make_ml_predicate(model: Arc<SurrogateClassifier>, omega: &[f64]) -> Result<MlPredicate> {
    let n_total = omega.len() + 1;
    if model.schema.n_total != n_total {
        return Err(Error::SchemaMismatch {
            expected: model.schema.dim(),
            actual: crate::surrogate::FeatureSchema { n_total }.dim(),
        });
    }
    let featurizer = Featurizer::for_control(omega)?;
    Ok(MlPredicate {
        model,
        featurizer,
        omega: omega.to_vec(),
    })
}

impl SyncPredicate for MlPredicate {
    fn synchronizes(&self, a: &[f64], c: f64) -> Result<bool> {
        let x = self.featurizer.features(a, c)?;
        Ok(self.model.logit(&x)? >= 0.0)
    }

    fn omega(&self) -> &[f64] {
        &self.omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{build_paper_class, Setup};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Threshold {
        omega: Vec<f64>,
        at: f64,
        calls: AtomicUsize,
    }

    impl SyncPredicate for Threshold {
        fn synchronizes(&self, _a: &[f64], c: f64) -> Result<bool> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(c >= self.at)
        }
        fn omega(&self) -> &[f64] {
            &self.omega
        }
    }

    fn threshold(at: f64) -> Threshold {
        Threshold {
            omega: vec![-1.0, 1.0],
            at,
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn bisection_width_and_call_count() {
        let cfg = SearchConfig::default();
        for at in [0.01, 0.37, 0.999, 1.0, 3.3, 17.0] {
            let p = threshold(at);
            let r = find_xi(&[0.0], &p, &cfg).unwrap();
            assert!(r.xi >= at && r.xi - at <= cfg.tolerance, "{at} -> {}", r.xi);
            let width = p.natural_scale() * 2f64.powi(r.expansions as i32);
            let halvings = (width / cfg.tolerance).log2().ceil() as usize;
            // c = 0 probe, one probe per bracket size, then the halvings
            assert!(r.predicate_calls <= 2 + r.expansions + halvings);
            assert_eq!(r.predicate_calls, p.calls.load(Ordering::Relaxed));
        }
    }

    #[test]
    fn self_synchronizing_returns_zero() {
        let r = find_xi(&[0.0], &threshold(0.0), &SearchConfig::default()).unwrap();
        assert_eq!(r.xi, 0.0);
        assert_eq!(r.predicate_calls, 1);
    }

    #[test]
    fn never_synchronizing_is_an_error() {
        let cfg = SearchConfig {
            max_expansions: 5,
            ..SearchConfig::default()
        };
        assert!(matches!(
            find_xi(&[0.0], &threshold(f64::INFINITY), &cfg),
            Err(Error::Unsynchronizable { expansions: 5, .. })
        ));
    }

    #[test]
    fn two_body_closed_form() {
        let cfg = SearchConfig::default();
        for (w, wc) in [(2.0, -1.0), (0.3, 0.29), (-4.0, 5.0)] {
            let r = find_xi(&[], &TwoBodyPredicate::new(w, wc), &cfg).unwrap();
            assert!((r.xi - (w - wc).abs() / 2.0).abs() <= cfg.tolerance);
        }
    }

    struct Flaky;

    impl SyncPredicate for Flaky {
        // true above 1.0, plus spurious answers on a comb below it
        fn synchronizes(&self, _a: &[f64], c: f64) -> Result<bool> {
            Ok(c >= 1.0 || (c * 1000.0).floor() as i64 % 7 == 3)
        }
        fn omega(&self) -> &[f64] {
            &[0.0, 2.0]
        }
    }

    #[test]
    fn non_monotone_predicate_still_terminates_on_a_true_point() {
        let r = find_xi(&[0.0], &Flaky, &SearchConfig::default()).unwrap();
        assert!(Flaky.synchronizes(&[0.0], r.xi).unwrap());
    }

    #[test]
    fn ode_predicate_on_five_osc_class() {
        let class = build_paper_class(Setup::FiveOsc);
        let p = make_ode_predicate(&class.omega, SimConfig::default()).unwrap();
        let a = Setup::FiveOsc.true_model().unwrap();
        assert!(!p.synchronizes(&a, 0.0).unwrap());
        assert!(p.synchronizes(&a, 10.0 * p.natural_scale()).unwrap());
    }

    #[test]
    fn ode_xi_stable_under_step_refinement() {
        let class = build_paper_class(Setup::FiveOsc);
        let a = Setup::FiveOsc.true_model().unwrap();
        let cfg = SearchConfig::default();
        let coarse = make_ode_predicate(&class.omega, SimConfig::default()).unwrap();
        let fine = make_ode_predicate(
            &class.omega,
            SimConfig {
                solver_substeps: 2,
                ..SimConfig::default()
            },
        )
        .unwrap();
        let x1 = find_xi(&a, &coarse, &cfg).unwrap().xi;
        let x2 = find_xi(&a, &fine, &cfg).unwrap().xi;
        assert!(x1 > 0.0);
        assert!((x1 - x2).abs() <= 2.0 * cfg.tolerance, "{x1} vs {x2}");
    }
}
