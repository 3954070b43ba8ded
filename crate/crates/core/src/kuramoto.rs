//! Kuramoto network simulation.
//!
//! dθ_i/dt = ω_i + Σ_j a_{i,j} sin(θ_j − θ_i), integrated with fixed-step
//! classic RK4 at h = 1/f_s. Phases are accumulated without wrapping so
//! that one-step increments are free of 2π jumps.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of unordered oscillator pairs in an `n`-oscillator network.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// An unordered oscillator pair, stored zero-based with `i < j`.
///
/// Serialized one-based as `[i, j]`, matching the `a_{1,2}, a_{1,3}, …`
/// numbering used by every file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    /// Zero-based constructor; the order of the arguments does not matter.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidPair(a + 1, b + 1));
        }
        Ok(Pair {
            i: a.min(b),
            j: a.max(b),
        })
    }

    /// One-based constructor, as used on the command line and over HTTP.
    pub fn one_based(i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 {
            return Err(Error::InvalidPair(i, j));
        }
        Pair::new(i - 1, j - 1)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.i >= self.j || self.j >= n {
            return Err(Error::InvalidPair(self.i + 1, self.j + 1));
        }
        Ok(())
    }

    /// Position of this pair in the upper-triangular coupling vector.
    pub fn index(&self, n: usize) -> usize {
        // rows 0..i contribute (n-1) + (n-2) + ... + (n-i) entries
        self.i * (2 * n - self.i - 1) / 2 + (self.j - self.i - 1)
    }

    /// All pairs of an `n`-oscillator network in coupling-vector order.
    pub fn all(n: usize) -> Vec<Pair> {
        let mut out = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(Pair { i, j });
            }
        }
        out
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i + 1, self.j + 1)
    }
}

impl Serialize for Pair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.i + 1, self.j + 1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [i, j] = <[usize; 2]>::deserialize(d)?;
        Pair::one_based(i, j).map_err(serde::de::Error::custom)
    }
}

/// A Kuramoto network: natural frequencies, upper-triangular couplings and
/// initial phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KuramotoModel {
    omega: Vec<f64>,
    coupling: Vec<f64>,
    #[serde(default)]
    theta0: Vec<f64>,
}

impl KuramotoModel {
    pub fn new(omega: Vec<f64>, coupling: Vec<f64>, theta0: Vec<f64>) -> Result<Self> {
        let model = KuramotoModel {
            omega,
            coupling,
            theta0,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model with every initial phase at zero.
    pub fn with_zero_phases(omega: Vec<f64>, coupling: Vec<f64>) -> Result<Self> {
        let n = omega.len();
        KuramotoModel::new(omega, coupling, vec![0.0; n])
    }

    /// Checks lengths and ranges. Deserialized models with no `theta0` get zeros.
    pub fn validate(&self) -> Result<()> {
        let n = self.omega.len();
        if n == 0 {
            return Err(Error::InvalidModel("no oscillators".into()));
        }
        if self.coupling.len() != pair_count(n) {
            return Err(Error::InvalidModel(format!(
                "coupling vector has {} entries, expected {} for {} oscillators",
                self.coupling.len(),
                pair_count(n),
                n
            )));
        }
        if self.theta0.len() != n {
            return Err(Error::InvalidModel(format!(
                "theta0 has {} entries, expected {}",
                self.theta0.len(),
                n
            )));
        }
        if let Some(w) = self.omega.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite frequency {w}")));
        }
        if let Some(a) = self
            .coupling
            .iter()
            .find(|a| !(a.is_finite() && **a >= 0.0))
        {
            return Err(Error::InvalidModel(format!(
                "coupling {a} is not a finite nonnegative value"
            )));
        }
        if let Some(t) = self.theta0.iter().find(|t| !(**t >= 0.0 && **t < TAU)) {
            return Err(Error::InvalidModel(format!(
                "initial phase {t} outside [0, 2π)"
            )));
        }
        Ok(())
    }

    /// Zero initial phases when none were given, as after deserializing
    /// a model without `theta0`.
    pub fn fill_default_phases(&mut self) {
        if self.theta0.is_empty() {
            self.theta0 = vec![0.0; self.omega.len()];
        }
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    /// Dense symmetric `n × n` coupling matrix, row-major, zero diagonal.
    pub fn coupling_matrix(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                m[i * n + j] = self.coupling[k];
                m[j * n + i] = self.coupling[k];
                k += 1;
            }
        }
        m
    }
}

/// Mean of the natural frequencies, the control oscillator's frequency.
pub fn mean_frequency(omega: &[f64]) -> f64 {
    omega.iter().sum::<f64>() / omega.len() as f64
}

/// Adds a control oscillator running at the mean natural frequency and
/// coupled to every original oscillator with strength `control_coupling`.
pub fn augment_with_control(model: &KuramotoModel, control_coupling: f64) -> KuramotoModel {
    augment_with_control_at(model, control_coupling, mean_frequency(&model.omega))
}

/// As [`augment_with_control`], with an explicit control frequency.
pub fn augment_with_control_at(
    model: &KuramotoModel,
    control_coupling: f64,
    control_omega: f64,
) -> KuramotoModel {
    debug_assert!(control_coupling >= 0.0);
    let n = model.n();
    let mut omega = Vec::with_capacity(n + 1);
    omega.extend_from_slice(&model.omega);
    omega.push(control_omega);

    let mut coupling = Vec::with_capacity(pair_count(n + 1));
    let mut k = 0;
    for i in 0..n {
        // row i: original partners i+1..n, then the control oscillator
        let row_len = n - i - 1;
        coupling.extend_from_slice(&model.coupling[k..k + row_len]);
        coupling.push(control_coupling);
        k += row_len;
    }

    let mut theta0 = Vec::with_capacity(n + 1);
    theta0.extend_from_slice(&model.theta0);
    theta0.push(0.0);

    KuramotoModel {
        omega,
        coupling,
        theta0,
    }
}

/// Integration and synchronization-check settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub sync_window: (f64, f64),
    pub sync_threshold: f64,
    /// Compare raw increments against the threshold instead of
    /// drift-compensated ones.
    #[serde(default)]
    pub raw_increment: bool,
    /// RK4 steps per sample; refines the solver without changing the
    /// sampling grid the criterion sees.
    #[serde(default = "one")]
    pub solver_substeps: usize,
}

fn one() -> usize {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sample_rate_hz: 160.0,
            duration_s: 5.0,
            sync_window: (2.5, 5.0),
            sync_threshold: 1e-3,
            raw_increment: false,
            solver_substeps: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let (start, end) = self.sync_window;
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        if self.solver_substeps == 0 {
            return Err(Error::InvalidConfig(
                "solver substeps must be at least 1".into(),
            ));
        }
        if !(self.sync_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "sync threshold must be positive".into(),
            ));
        }
        if !(0.0 <= start && start <= end && end <= self.duration_s) {
            return Err(Error::InvalidConfig(format!(
                "sync window [{start}, {end}] not inside [0, {}]",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Sampling interval.
    pub fn step(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    fn advance(&self, rk: &mut Rk4, theta: &mut [f64]) {
        for _ in 0..self.solver_substeps {
            rk.step(theta);
        }
    }

    fn solver(&self, model: &KuramotoModel) -> Rk4 {
        Rk4::new(model, self.step() / self.solver_substeps as f64)
    }

    /// RK4 steps taken by [`integrate_rk4`]: the duration plus one extra step
    /// so that the increment at the final window instant is defined.
    pub fn num_steps(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize + 1
    }

    /// Inclusive sample indices of the first and last window instants.
    pub fn window_indices(&self) -> (usize, usize) {
        let fs = self.sample_rate_hz;
        (
            (self.sync_window.0 * fs).round() as usize,
            (self.sync_window.1 * fs).round() as usize,
        )
    }
}

/// Sampled phases θ_i(t_k) for k = 0..=num_steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per oscillator.
    pub phases: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.phases.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn phases_at(&self, k: usize) -> Vec<f64> {
        self.phases.iter().map(|row| row[k]).collect()
    }

    /// CSV with header `t,theta_1,...,theta_n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.n() {
            out.push_str(&format!(",theta_{i}"));
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&format!("{}", self.times[k]));
            for row in &self.phases {
                out.push_str(&format!(",{}", row[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Reusable RK4 stepper for one network; holds all scratch buffers so the
/// hot loop does not allocate.
pub(crate) struct Rk4 {
    n: usize,
    h: f64,
    omega: Vec<f64>,
    matrix: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(model: &KuramotoModel, h: f64) -> Self {
        let n = model.n();
        Rk4 {
            n,
            h,
            omega: model.omega.clone(),
            matrix: model.coupling_matrix(),
            sin: vec![0.0; n],
            cos: vec![0.0; n],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Σ_j a_ij sin(θ_j − θ_i) = cos θ_i Σ_j a_ij sin θ_j − sin θ_i Σ_j a_ij cos θ_j
    fn derivative(
        n: usize,
        omega: &[f64],
        matrix: &[f64],
        sin: &mut [f64],
        cos: &mut [f64],
        theta: &[f64],
        out: &mut [f64],
    ) {
        for ((s, c), t) in sin.iter_mut().zip(cos.iter_mut()).zip(theta) {
            (*s, *c) = t.sin_cos();
        }
        for i in 0..n {
            let row = &matrix[i * n..(i + 1) * n];
            let mut ss = 0.0;
            let mut cc = 0.0;
            for j in 0..n {
                ss += row[j] * sin[j];
                cc += row[j] * cos[j];
            }
            out[i] = omega[i] + cos[i] * ss - sin[i] * cc;
        }
    }

    pub(crate) fn step(&mut self, theta: &mut [f64]) {
        let (n, h) = (self.n, self.h);
        let Rk4 {
            omega,
            matrix,
            sin,
            cos,
            k1,
            k2,
            k3,
            k4,
            tmp,
            ..
        } = self;
        Self::derivative(n, omega, matrix, sin, cos, theta, k1);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * h * k1[i];
        }
        Self::derivative(n, omega, matrix, sin, cos, tmp, k2);
        for i in 0..n {
            tmp[i] = theta[i] + 0.5 * h * k2[i];
        }
        Self::derivative(n, omega, matrix, sin, cos, tmp, k3);
        for i in 0..n {
            tmp[i] = theta[i] + h * k3[i];
        }
        Self::derivative(n, omega, matrix, sin, cos, tmp, k4);
        for i in 0..n {
            theta[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn all_finite(theta: &[f64]) -> bool {
    theta.iter().all(|t| t.is_finite())
}

/// Fixed-step RK4 over `config.num_steps()` steps.
pub fn integrate_rk4(model: &KuramotoModel, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = model.n();
    let steps = config.num_steps();
    let h = config.step();
    let mut rk = config.solver(model);
    let mut theta = model.theta0.clone();

    let mut phases: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(steps + 1);
            row.push(theta[i]);
            row
        })
        .collect();
    for k in 1..=steps {
        config.advance(&mut rk, &mut theta);
        if !all_finite(&theta) {
            return Err(Error::IntegrationDiverged { step: k });
        }
        for (row, t) in phases.iter_mut().zip(&theta) {
            row.push(*t);
        }
    }
    let times = (0..=steps).map(|k| k as f64 * h).collect();
    Ok(Trajectory { times, phases })
}

/// Largest one-step increment, drift-compensated unless `raw`.
fn max_increment(prev: &[f64], cur: &[f64], raw: bool) -> f64 {
    let drift = if raw {
        0.0
    } else {
        cur.iter().zip(prev).map(|(c, p)| c - p).sum::<f64>() / cur.len() as f64
    };
    cur.iter()
        .zip(prev)
        .map(|(c, p)| (c - p) - drift)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Synchronization criterion: the largest one-step phase increment over
/// every instant of the window stays below the threshold.
pub fn detect_sync(traj: &Trajectory, config: &SimConfig) -> Result<bool> {
    let (k0, k1) = config.window_indices();
    if traj.is_empty() || k1 + 1 >= traj.len() {
        return Err(Error::WindowOutOfBounds {
            start: config.sync_window.0,
            end: config.sync_window.1,
            available: traj.times.last().copied().unwrap_or(0.0),
        });
    }
    let mut prev = traj.phases_at(k0);
    for k in k0..=k1 {
        let cur = traj.phases_at(k + 1);
        if max_increment(&prev, &cur, config.raw_increment) >= config.sync_threshold {
            return Ok(false);
        }
        prev = cur;
    }
    Ok(true)
}

/// Integrates and applies [`detect_sync`] on the fly without storing the
/// trajectory, stopping at the first window violation.
///
/// Gives the same answer as `detect_sync(&integrate_rk4(..)?, ..)`.
pub fn simulate_sync(model: &KuramotoModel, config: &SimConfig) -> Result<bool> {
    let (k0, k1) = config.window_indices();
    if k1 + 1 > config.num_steps() {
        return Err(Error::WindowOutOfBounds {
            start: config.sync_window.0,
            end: config.sync_window.1,
            available: config.num_steps() as f64 * config.step(),
        });
    }
    config.validate()?;
    let mut rk = config.solver(model);
    let mut theta = model.theta0.clone();
    let mut prev = theta.clone();
    for k in 1..=k1 + 1 {
        if k > k0 {
            prev.copy_from_slice(&theta);
        }
        config.advance(&mut rk, &mut theta);
        if !all_finite(&theta) {
            return Err(Error::IntegrationDiverged { step: k });
        }
        if k > k0 && max_increment(&prev, &theta, config.raw_increment) >= config.sync_threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Coherence r(t_k) = |(1/n) Σ_i exp(iθ_i(t_k))| for every sample.
pub fn order_parameter(traj: &Trajectory) -> Vec<f64> {
    (0..traj.len())
        .map(|k| coherence(traj.phases.iter().map(|row| row[k])))
        .collect()
}

pub(crate) fn coherence(phases: impl Iterator<Item = f64>) -> f64 {
    let (mut re, mut im, mut n) = (0.0, 0.0, 0usize);
    for t in phases {
        let (s, c) = t.sin_cos();
        re += c;
        im += s;
        n += 1;
    }
    let n = n as f64;
    ((re / n).powi(2) + (im / n).powi(2)).sqrt().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn model(omega: &[f64], coupling: &[f64]) -> KuramotoModel {
        KuramotoModel::with_zero_phases(omega.to_vec(), coupling.to_vec()).unwrap()
    }

    #[test]
    fn pair_index_matches_enumeration_order() {
        for n in 2..9 {
            for (k, p) in Pair::all(n).iter().enumerate() {
                assert_eq!(p.index(n), k);
            }
        }
    }

    #[test]
    fn pair_serializes_one_based() {
        let p = Pair::new(0, 4).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,5]");
        let q: Pair = serde_json::from_str("[1,5]").unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<Pair>("[0,2]").is_err());
        assert!(serde_json::from_str::<Pair>("[3,3]").is_err());
    }

    #[test]
    fn rejects_bad_models() {
        assert!(KuramotoModel::with_zero_phases(vec![1.0, 2.0], vec![]).is_err());
        assert!(KuramotoModel::with_zero_phases(vec![1.0, 2.0], vec![-0.1]).is_err());
        assert!(KuramotoModel::new(vec![1.0], vec![], vec![TAU]).is_err());
    }

    #[test]
    fn augment_five_and_seven_oscillator_presets() {
        let m5 = model(&[-2.50, -0.6667, 1.1667, 2.0, 5.8333], &[0.0; 10]);
        let a5 = augment_with_control(&m5, 0.7);
        assert_eq!(a5.n(), 6);
        assert!((a5.omega()[5] - 1.1667).abs() < 5e-5);

        let m7 = model(
            &[-3.4600, -1.9611, -0.6754, -0.3806, -0.3675, 6.1161, 8.3287],
            &[0.0; 21],
        );
        let a7 = augment_with_control(&m7, 0.7);
        assert!((a7.omega()[7] - 1.0857).abs() < 5e-5);
    }

    #[test]
    fn augment_places_control_coupling_last_in_each_row() {
        let coupling: Vec<f64> = (1..=6).map(|x| x as f64).collect();
        let m = model(&[0.0, 1.0, 2.0, 3.0], &coupling);
        let a = augment_with_control(&m, 9.0);
        let mat = a.coupling_matrix();
        let n = 5;
        for i in 0..4 {
            assert_eq!(mat[i * n + 4], 9.0);
            for j in 0..4 {
                if i != j {
                    let p = Pair::new(i, j).unwrap();
                    assert_eq!(mat[i * n + j], coupling[p.index(4)]);
                }
            }
        }
        assert_eq!(a.theta0()[4], 0.0);
    }

    #[test]
    fn zero_control_leaves_original_dynamics() {
        let m = model(&[-1.0, 0.3, 2.0], &[0.4, 0.1, 0.9]);
        let cfg = SimConfig::default();
        let base = integrate_rk4(&m, &cfg).unwrap();
        let aug = integrate_rk4(&augment_with_control(&m, 0.0), &cfg).unwrap();
        for i in 0..3 {
            assert_eq!(base.phases[i], aug.phases[i]);
        }
    }

    #[test]
    fn uncoupled_oscillator_is_linear() {
        let m = model(&[2.0], &[]);
        let traj = integrate_rk4(&m, &SimConfig::default()).unwrap();
        let k = 800;
        assert!((traj.times[k] - 5.0).abs() < 1e-12);
        assert!((traj.phases[0][k] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_pair_moves_together() {
        let m = model(&[1.0, 1.0], &[0.5]);
        let traj = integrate_rk4(&m, &SimConfig::default()).unwrap();
        for k in 0..traj.len() {
            assert_eq!(traj.phases[0][k], traj.phases[1][k]);
            assert!((traj.phases[0][k] - traj.times[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn two_oscillator_sync_follows_pairwise_threshold() {
        let cfg = SimConfig::default();
        let locked = integrate_rk4(&model(&[1.0, -1.0], &[1.5]), &cfg).unwrap();
        assert!(detect_sync(&locked, &cfg).unwrap());
        let drifting = integrate_rk4(&model(&[1.0, -1.0], &[0.5]), &cfg).unwrap();
        assert!(!detect_sync(&drifting, &cfg).unwrap());
    }

    #[test]
    fn identical_oscillators_are_synchronized() {
        let m = model(&[0.7; 4], &[0.2; 6]);
        let cfg = SimConfig::default();
        assert!(detect_sync(&integrate_rk4(&m, &cfg).unwrap(), &cfg).unwrap());
    }

    #[test]
    fn raw_increment_mode_rejects_common_drift() {
        let m = model(&[0.7; 4], &[0.2; 6]);
        let cfg = SimConfig {
            raw_increment: true,
            ..SimConfig::default()
        };
        // 0.7 rad/s common rotation is 0.0044 rad per step
        assert!(!detect_sync(&integrate_rk4(&m, &cfg).unwrap(), &cfg).unwrap());
        let still = model(&[0.0; 4], &[0.2; 6]);
        assert!(detect_sync(&integrate_rk4(&still, &cfg).unwrap(), &cfg).unwrap());
    }

    #[test]
    fn streaming_check_matches_stored_trajectory() {
        let cfg = SimConfig::default();
        let omega = [-2.5, -0.6667, 1.1667, 2.0, 5.8333];
        let a = [0.9, 0.5, 0.6, 1.2, 0.9, 0.6, 1.4, 0.4, 2.3, 1.9];
        for c in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 6.0] {
            let m = augment_with_control(&model(&omega, &a), c);
            let stored = detect_sync(&integrate_rk4(&m, &cfg).unwrap(), &cfg).unwrap();
            assert_eq!(stored, simulate_sync(&m, &cfg).unwrap(), "c = {c}");
        }
    }

    #[test]
    fn window_past_trajectory_is_an_error() {
        let m = model(&[1.0], &[]);
        let cfg = SimConfig::default();
        let mut traj = integrate_rk4(&m, &cfg).unwrap();
        traj.times.truncate(700);
        for row in &mut traj.phases {
            row.truncate(700);
        }
        assert!(matches!(
            detect_sync(&traj, &cfg),
            Err(Error::WindowOutOfBounds { .. })
        ));
    }

    #[test]
    fn divergence_names_the_step() {
        let m = model(&[f64::MAX, -f64::MAX], &[0.0]);
        match integrate_rk4(&m, &SimConfig::default()) {
            Err(Error::IntegrationDiverged { step }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn order_parameter_special_configurations() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            phases: vec![
                vec![0.3, 0.0, 0.0],
                vec![0.3, PI, 0.5 * PI],
                vec![0.3, 0.0, PI],
                vec![0.3, PI, 1.5 * PI],
            ],
        };
        let r = order_parameter(&traj);
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12);
        assert!(r[2].abs() < 1e-12);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let traj = integrate_rk4(&model(&[1.0, 2.0], &[0.1]), &SimConfig::default()).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,theta_1,theta_2"));
        assert_eq!(csv.lines().count(), traj.len() + 1);
    }

    #[test]
    fn model_json_defaults_missing_phases() {
        let mut m: KuramotoModel =
            serde_json::from_str(r#"{"omega":[1.0,2.0],"coupling":[0.5]}"#).unwrap();
        m.fill_default_phases();
        m.validate().unwrap();
        assert_eq!(m.theta0(), &[0.0, 0.0]);
    }
}
