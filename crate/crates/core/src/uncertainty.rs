//! Box uncertainty classes over pairwise couplings.
//!
//! Each coupling a_{i,j} is known only to lie in [a^L_{i,j}, a^U_{i,j}] under
//! a uniform prior. A pairwise synchronization experiment on (i, j) reveals
//! whether a_{i,j} ≥ |ω_i − ω_j| / 2, which cuts that interval in two.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kuramoto::{pair_count, Pair};
use crate::parallel::substream;

/// Per-pair coupling intervals plus the (known) natural frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyClass {
    pub omega: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Observed result of a pairwise synchronization experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub pair: Pair,
    pub synchronized: bool,
}

impl UncertaintyClass {
    pub fn new(omega: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let class = UncertaintyClass {
            omega,
            lower,
            upper,
        };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omega.len();
        if n < 2 {
            return Err(Error::InvalidModel(
                "an uncertainty class needs at least two oscillators".into(),
            ));
        }
        let m = pair_count(n);
        if self.lower.len() != m || self.upper.len() != m {
            return Err(Error::InvalidModel(format!(
                "bound vectors have {} and {} entries, expected {m}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("non-finite frequency".into()));
        }
        for (k, p) in Pair::all(n).into_iter().enumerate() {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::InvalidModel(format!(
                    "pair {p}: bounds [{lo}, {hi}] violate 0 <= lower <= upper"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn pairs(&self) -> Vec<Pair> {
        Pair::all(self.n())
    }

    pub fn interval(&self, pair: Pair) -> (f64, f64) {
        let k = pair.index(self.n());
        (self.lower[k], self.upper[k])
    }

    pub fn width(&self, pair: Pair) -> f64 {
        let (lo, hi) = self.interval(pair);
        hi - lo
    }

    pub fn is_resolved(&self, pair: Pair) -> bool {
        self.width(pair) == 0.0
    }

    /// θ_{i,j} = |ω_i − ω_j| / 2, the coupling at which an isolated pair
    /// starts to synchronize.
    pub fn sync_threshold(&self, pair: Pair) -> f64 {
        pairwise_sync_threshold(&self.omega, pair)
    }

    /// An experiment on `pair` can only change the class when the threshold
    /// falls strictly inside the interval.
    pub fn is_informative(&self, pair: Pair) -> bool {
        let (lo, hi) = self.interval(pair);
        let theta = self.sync_threshold(pair);
        lo < theta && theta < hi
    }

    /// Whether a coupling vector lies inside every interval.
    pub fn contains(&self, coupling: &[f64]) -> bool {
        coupling.len() == self.lower.len()
            && coupling
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(a, (lo, hi))| lo <= a && a <= hi)
    }

    /// Probability that the experiment on `pair` reports synchronization.
    pub fn outcome_probability(&self, pair: Pair) -> f64 {
        let (lo, hi) = self.interval(pair);
        let theta = self.sync_threshold(pair);
        if hi == lo {
            return if lo >= theta { 1.0 } else { 0.0 };
        }
        ((hi - theta) / (hi - lo)).clamp(0.0, 1.0)
    }

    /// Class after observing `outcome`.
    ///
    /// Synchronization means a ≥ θ, so the lower bound rises to θ; otherwise
    /// a < θ and the upper bound drops to θ. Observations that the class
    /// rules out are rejected.
    pub fn update(&self, outcome: &ExperimentOutcome) -> Result<UncertaintyClass> {
        let pair = outcome.pair;
        pair.check(self.n())?;
        let k = pair.index(self.n());
        let theta = self.sync_threshold(pair);
        let (lo, hi) = (self.lower[k], self.upper[k]);
        let mut next = self.clone();
        if outcome.synchronized {
            if theta > hi {
                return Err(Error::InconsistentObservation {
                    i: pair.i + 1,
                    j: pair.j + 1,
                    reason: format!(
                        "synchronization requires coupling >= {theta}, above the upper bound {hi}"
                    ),
                });
            }
            next.lower[k] = lo.max(theta);
        } else {
            if theta < lo {
                return Err(Error::InconsistentObservation {
                    i: pair.i + 1,
                    j: pair.j + 1,
                    reason: format!(
                        "no synchronization requires coupling < {theta}, below the lower bound {lo}"
                    ),
                });
            }
            next.upper[k] = hi.min(theta);
        }
        Ok(next)
    }

    /// `count` coupling vectors drawn uniformly from the box. Sample `k`
    /// depends only on `(seed, k)`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..count)
            .map(|k| self.sample_one(seed, k as u64))
            .collect()
    }

    pub fn sample_one(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = substream(seed, index);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                // one draw per pair even when resolved, so boxes that differ
                // in a few intervals share the rest of their samples
                let u: f64 = rng.gen();
                if hi > lo {
                    lo + (hi - lo) * u
                } else {
                    lo
                }
            })
            .collect()
    }
}

pub fn pairwise_sync_threshold(omega: &[f64], pair: Pair) -> f64 {
    (omega[pair.i] - omega[pair.j]).abs() / 2.0
}

/// The two published experimental setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    FiveOsc,
    SevenOsc,
}

impl Setup {
    pub fn name(&self) -> &'static str {
        match self {
            Setup::FiveOsc => "five_osc",
            Setup::SevenOsc => "seven_osc",
        }
    }

    pub fn class(&self) -> UncertaintyClass {
        build_paper_class(*self)
    }

    /// Published true coupling vector, where one exists.
    pub fn true_model(&self) -> Option<Vec<f64>> {
        match self {
            Setup::FiveOsc => Some(FIVE_TRUE.to_vec()),
            Setup::SevenOsc => None,
        }
    }

    /// Hidden-layer width as a multiple of the feature dimension.
    pub fn hidden_multiplier(&self) -> usize {
        match self {
            Setup::FiveOsc => 3,
            Setup::SevenOsc => 4,
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "five_osc" => Ok(Setup::FiveOsc),
            "seven_osc" => Ok(Setup::SevenOsc),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

/// A setup on disk: the class, an optional true model and the classifier
/// width multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupFile {
    pub name: String,
    #[serde(flatten)]
    pub class: UncertaintyClass,
    #[serde(default)]
    pub true_model: Option<Vec<f64>>,
    #[serde(default = "default_multiplier")]
    pub hidden_multiplier: usize,
}

fn default_multiplier() -> usize {
    3
}

impl SetupFile {
    pub fn from_preset(setup: Setup) -> Self {
        SetupFile {
            name: setup.name().to_string(),
            class: setup.class(),
            true_model: setup.true_model(),
            hidden_multiplier: setup.hidden_multiplier(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.class.validate()?;
        if let Some(a) = &self.true_model {
            if !self.class.contains(a) {
                return Err(Error::InvalidModel(
                    "true model lies outside the class bounds".into(),
                ));
            }
        }
        if self.hidden_multiplier == 0 {
            return Err(Error::InvalidConfig(
                "hidden multiplier must be positive".into(),
            ));
        }
        Ok(())
    }
}

const FIVE_OMEGA: [f64; 5] = [-2.50, -0.6667, 1.1667, 2.0, 5.8333];
const FIVE_UPPER: [f64; 10] = [
    1.0541, 0.6325, 0.7762, 1.4375, 1.0542, 0.69, 1.6819, 0.4791, 2.6833, 2.2041,
];
const FIVE_LOWER: [f64; 10] = [
    0.7791, 0.4675, 0.5737, 1.0625, 0.7792, 0.51, 1.2431, 0.3541, 1.9833, 1.6291,
];
const FIVE_TRUE: [f64; 10] = [
    0.9166, 0.55, 0.675, 1.25, 0.9167, 0.6, 1.4625, 0.4166, 2.3333, 1.9166,
];

const SEVEN_OMEGA: [f64; 7] = [-3.4600, -1.9611, -0.6754, -0.3806, -0.3675, 6.1161, 8.3287];
const SEVEN_UPPER: [f64; 21] = [
    0.848, 0.988, 1.446, 1.607, 3.82, 0.915, 0.4, //
    0.85, 0.419, 4.162, 1.09, 0.122, 0.039, 2.124, //
    0.872, 0.007, 2.737, 1.804, 1.36, 0.744, 1.174,
];
const SEVEN_LOWER: [f64; 21] = [
    0.073, 0.172, 0.153, 0.054, 0.501, 0.463, 0.043, //
    0.015, 0.096, 0.501, 0.103, 0.007, 0.009, 0.139, //
    0.408, 0.0, 0.131, 0.119, 0.300, 0.286, 0.131,
];

/// The published uncertainty class of a setup, transcribed verbatim.
pub fn build_paper_class(setup: Setup) -> UncertaintyClass {
    let (omega, lower, upper): (&[f64], &[f64], &[f64]) = match setup {
        Setup::FiveOsc => (&FIVE_OMEGA, &FIVE_LOWER, &FIVE_UPPER),
        Setup::SevenOsc => (&SEVEN_OMEGA, &SEVEN_LOWER, &SEVEN_UPPER),
    };
    UncertaintyClass {
        omega: omega.to_vec(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_osc(omega: [f64; 2], lo: f64, hi: f64) -> UncertaintyClass {
        UncertaintyClass::new(omega.to_vec(), vec![lo], vec![hi]).unwrap()
    }

    fn p12() -> Pair {
        Pair::new(0, 1).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(pairwise_sync_threshold(&[0.3, 0.3], p12()), 0.0);
        assert!((pairwise_sync_threshold(&[-2.50, -0.6667], p12()) - 0.91665).abs() < 1e-12);
        assert_eq!(pairwise_sync_threshold(&[1.0, -1.0], p12()), 1.0);
    }

    #[test]
    fn outcome_probability_examples() {
        // θ = 1.0, 0.25, 2.0 against [0.5, 1.5]
        assert!((two_osc([1.0, -1.0], 0.5, 1.5).outcome_probability(p12()) - 0.5).abs() < 1e-12);
        assert_eq!(
            two_osc([0.25, -0.25], 0.5, 1.5).outcome_probability(p12()),
            1.0
        );
        assert_eq!(
            two_osc([2.0, -2.0], 0.5, 1.5).outcome_probability(p12()),
            0.0
        );
        assert_eq!(
            two_osc([1.0, -1.0], 1.0, 1.0).outcome_probability(p12()),
            1.0
        );
        assert_eq!(
            two_osc([1.0, -1.0], 0.9, 0.9).outcome_probability(p12()),
            0.0
        );
    }

    #[test]
    fn update_examples() {
        let class = two_osc([1.0, -1.0], 0.5, 1.5);
        let sync = ExperimentOutcome {
            pair: p12(),
            synchronized: true,
        };
        let nosync = ExperimentOutcome {
            pair: p12(),
            synchronized: false,
        };
        assert_eq!(class.update(&sync).unwrap().interval(p12()), (1.0, 1.5));
        assert_eq!(class.update(&nosync).unwrap().interval(p12()), (0.5, 1.0));

        let wide = two_osc([0.3, -0.3], 0.5, 1.5);
        assert_eq!(wide.update(&sync).unwrap(), wide);
    }

    #[test]
    fn impossible_observations_are_rejected() {
        let above = two_osc([2.0, -2.0], 0.5, 1.5);
        let sync = ExperimentOutcome {
            pair: p12(),
            synchronized: true,
        };
        assert!(matches!(
            above.update(&sync),
            Err(Error::InconsistentObservation { .. })
        ));
        let below = two_osc([0.2, -0.2], 0.5, 1.5);
        let nosync = ExperimentOutcome {
            pair: p12(),
            synchronized: false,
        };
        assert!(matches!(
            below.update(&nosync),
            Err(Error::InconsistentObservation { .. })
        ));
    }

    #[test]
    fn bad_pairs_are_rejected() {
        let class = build_paper_class(Setup::FiveOsc);
        let outcome = ExperimentOutcome {
            pair: Pair { i: 2, j: 5 },
            synchronized: true,
        };
        assert!(matches!(
            class.update(&outcome),
            Err(Error::InvalidPair(3, 6))
        ));
    }

    #[test]
    fn paper_classes() {
        let five = build_paper_class(Setup::FiveOsc);
        five.validate().unwrap();
        assert_eq!(five.upper[0], 1.0541);
        assert_eq!(five.lower[0], 0.7791);
        assert!(five.lower.iter().zip(&five.upper).all(|(l, u)| l < u));
        assert!(five.contains(&Setup::FiveOsc.true_model().unwrap()));

        let seven = build_paper_class(Setup::SevenOsc);
        seven.validate().unwrap();
        assert_eq!(seven.upper.len(), 21);
        assert_eq!(seven.upper[0], 0.848);
        assert_eq!(seven.lower[0], 0.073);
    }

    #[test]
    fn five_osc_informative_pairs() {
        let five = build_paper_class(Setup::FiveOsc);
        let informative: Vec<String> = five
            .pairs()
            .into_iter()
            .filter(|p| five.is_informative(*p))
            .map(|p| p.to_string())
            .collect();
        assert_eq!(informative, ["(1,2)", "(2,3)", "(3,4)", "(3,5)", "(4,5)"]);
    }

    #[test]
    fn samples_stay_in_support_and_are_seeded() {
        let class = build_paper_class(Setup::SevenOsc);
        let a = class.sample(64, 9);
        assert!(a.iter().all(|s| class.contains(s)));
        assert_eq!(a, class.sample(64, 9));
        assert_ne!(a, class.sample(64, 10));
        // prefix-stable: sample k does not depend on the total count
        assert_eq!(a[..10], class.sample(10, 9)[..]);
    }

    #[test]
    fn resolved_class_samples_are_identical() {
        let c = build_paper_class(Setup::FiveOsc);
        let resolved =
            UncertaintyClass::new(c.omega.clone(), c.lower.clone(), c.lower.clone()).unwrap();
        let s = resolved.sample(20, 1);
        assert!(s.iter().all(|v| *v == resolved.lower));
    }

    #[test]
    fn sample_means_converge_to_midpoints() {
        let class = build_paper_class(Setup::FiveOsc);
        let k = 20_480;
        let samples = class.sample(k, 3);
        for p in 0..class.lower.len() {
            let mean = samples.iter().map(|s| s[p]).sum::<f64>() / k as f64;
            let mid = 0.5 * (class.lower[p] + class.upper[p]);
            assert!((mean - mid).abs() < 0.01 * mid, "pair {p}: {mean} vs {mid}");
        }
    }

    #[test]
    fn setup_names_round_trip() {
        for s in [Setup::FiveOsc, Setup::SevenOsc] {
            assert_eq!(s.name().parse::<Setup>().unwrap(), s);
        }
        assert!("nine_osc".parse::<Setup>().is_err());
    }

    #[test]
    fn setup_file_round_trip() {
        let f = SetupFile::from_preset(Setup::FiveOsc);
        f.validate().unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"omega\""));
        assert_eq!(serde_json::from_str::<SetupFile>(&text).unwrap(), f);
        let mut bad = f.clone();
        bad.true_model = Some(vec![0.0; 10]);
        assert!(bad.validate().is_err());
    }
}
