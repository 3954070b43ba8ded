//! Long-horizon labeling oracle for training data.
//!
//! A system counts as synchronized when, over the final window of a long
//! simulation, (A) all instantaneous frequencies agree after rounding and
//! (B) the coherence r(t) has essentially stopped changing. Systems where
//! the two tests disagree are excluded.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kuramoto::{augment_with_control, coherence, KuramotoModel, Rk4};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub freq_round_decimals: i32,
    pub stability_window_s: f64,
    pub coherence_change_bound: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            duration_s: 400.0,
            sample_rate_hz: 160.0,
            freq_round_decimals: 6,
            stability_window_s: 20.0,
            coherence_change_bound: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Synchronized,
    Unsynchronized,
    Excluded(String),
}

impl Label {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Label::Synchronized => Some(true),
            Label::Unsynchronized => Some(false),
            Label::Excluded(_) => None,
        }
    }
}

/// Labels an arbitrary network (control oscillator already included, if any).
pub fn label_model(model: &KuramotoModel, config: &LabelingConfig) -> Label {
    if !(config.stability_window_s > 0.0 && config.stability_window_s <= config.duration_s) {
        return Label::Excluded("stability window must lie within the simulation".into());
    }
    let fs = config.sample_rate_hz;
    let last = (config.duration_s * fs).round() as usize;
    let first = ((config.duration_s - config.stability_window_s) * fs).round() as usize;
    let scale = 10f64.powi(config.freq_round_decimals);

    let mut rk = Rk4::new(model, 1.0 / fs);
    let mut theta = model.theta0().to_vec();
    let mut prev = theta.clone();
    let mut freqs_equal = true;
    let mut coherence_change = 0.0;
    let mut prev_r: Option<f64> = None;

    // frequencies at instants first..=last need one step past `last`
    for k in 1..=last + 1 {
        if k > first {
            prev.copy_from_slice(&theta);
        }
        rk.step(&mut theta);
        if theta.iter().any(|t| !t.is_finite()) {
            return Label::Excluded(Error::IntegrationDiverged { step: k }.to_string());
        }
        if k <= first {
            continue;
        }
        // instant k-1 is inside the window
        if freqs_equal {
            let mut rounded = theta
                .iter()
                .zip(&prev)
                .map(|(c, p)| ((c - p) * fs * scale).round());
            let head = rounded.next().unwrap_or(0.0);
            freqs_equal = rounded.all(|f| f == head);
        }
        let r = coherence(prev.iter().copied());
        if let Some(p) = prev_r {
            coherence_change += (r - p).abs();
        }
        prev_r = Some(r);
    }

    let stable = coherence_change < config.coherence_change_bound;
    match (freqs_equal, stable) {
        (true, true) => Label::Synchronized,
        (false, false) => Label::Unsynchronized,
        (a, b) => Label::Excluded(format!(
            "criteria disagree: equal frequencies {a}, stable coherence {b}"
        )),
    }
}

/// Labels the network `(omega, a)` with a control oscillator at the mean
/// frequency coupled with strength `c`.
pub fn label_oracle(omega: &[f64], a: &[f64], c: f64, config: &LabelingConfig) -> Label {
    match KuramotoModel::with_zero_phases(omega.to_vec(), a.to_vec()) {
        Ok(base) => label_model(&augment_with_control(&base, c), config),
        Err(e) => Label::Excluded(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> LabelingConfig {
        LabelingConfig {
            duration_s: 60.0,
            ..LabelingConfig::default()
        }
    }

    #[test]
    fn identical_oscillators_are_synchronized() {
        let m = KuramotoModel::with_zero_phases(vec![0.9; 4], vec![0.3; 6]).unwrap();
        assert_eq!(label_model(&m, &short()), Label::Synchronized);
    }

    #[test]
    fn far_apart_pair_is_unsynchronized() {
        // |Δω| = 4a
        let m = KuramotoModel::with_zero_phases(vec![1.0, -1.0], vec![0.5]).unwrap();
        assert_eq!(label_model(&m, &short()), Label::Unsynchronized);
    }

    #[test]
    fn locked_pair_is_synchronized() {
        let m = KuramotoModel::with_zero_phases(vec![1.0, -1.0], vec![2.0]).unwrap();
        assert_eq!(
            label_model(&m, &LabelingConfig::default()),
            Label::Synchronized
        );
    }

    #[test]
    fn strong_control_synchronizes_paper_network() {
        let omega = [-2.5, -0.6667, 1.1667, 2.0, 5.8333];
        let a = [
            0.9166, 0.55, 0.675, 1.25, 0.9167, 0.6, 1.4625, 0.4166, 2.3333, 1.9166,
        ];
        assert_eq!(
            label_oracle(&omega, &a, 20.0, &short()),
            Label::Synchronized
        );
        assert_eq!(
            label_oracle(&omega, &a, 0.0, &short()),
            Label::Unsynchronized
        );
    }

    #[test]
    fn bad_systems_are_excluded() {
        assert!(matches!(
            label_oracle(&[1.0, 2.0], &[-1.0], 0.0, &short()),
            Label::Excluded(_)
        ));
        let diverging =
            KuramotoModel::with_zero_phases(vec![f64::MAX, -f64::MAX], vec![0.0]).unwrap();
        assert!(matches!(
            label_model(&diverging, &short()),
            Label::Excluded(_)
        ));
    }
}
