//! Balanced labeled datasets for training the surrogate.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureSchema};
use super::labeling::{label_oracle, LabelingConfig};
use crate::control::{find_xi, make_ode_predicate, SearchConfig, SyncPredicate};
use crate::error::{Error, Result};
use crate::kuramoto::{mean_frequency, pair_count, Pair, SimConfig};
use crate::parallel::{par_map_indexed, substream};
use crate::uncertainty::{Setup, UncertaintyClass};

/// Raw system behind a sample: network frequencies (control excluded),
/// network couplings and control coupling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub omega: Vec<f64>,
    pub coupling: Vec<f64>,
    pub control: f64,
}

impl Provenance {
    pub fn features(&self) -> Result<Vec<f64>> {
        let mut full = self.omega.clone();
        full.push(mean_frequency(&self.omega));
        featurize(&full, &self.coupling, self.control)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: bool,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<LabeledSample>,
    pub seed: u64,
    /// Systems drawn (labeled or not) to fill both classes.
    pub attempts: usize,
}

/// Distribution over controlled systems to label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSampler {
    /// Frequencies uniform on (−range, range); each coupling uniform on
    /// [lo·|ω_i − ω_j|, hi·|ω_i − ω_j|]; control coupling uniform on
    /// [0, control_factor · max_i |ω_i − ω̄|].
    RandomFrequencies {
        n: usize,
        freq_range: f64,
        coupling_factors: (f64, f64),
        control_factor: f64,
    },
    /// Fixed frequencies, couplings uniform on the class box, control
    /// coupling uniform on [0, control_max], or near the draw's own
    /// threshold when `focus` is set.
    FromClass {
        class: UncertaintyClass,
        control_max: f64,
        #[serde(default)]
        focus: Option<BoundaryFocus>,
    },
}

/// Places a fraction of control couplings in a window around the threshold
/// found by the short-horizon search for the drawn couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFocus {
    pub sim: SimConfig,
    pub fraction: f64,
    pub below: f64,
    pub above: f64,
}

impl BoundaryFocus {
    pub fn new(sim: &SimConfig) -> Self {
        BoundaryFocus {
            sim: sim.clone(),
            fraction: 0.75,
            below: 0.1,
            above: 0.3,
        }
    }

    fn threshold(&self, omega: &[f64], coupling: &[f64]) -> Option<f64> {
        let predicate = make_ode_predicate(omega, self.sim.clone()).ok()?;
        find_xi(coupling, &predicate, &SearchConfig::default())
            .ok()
            .map(|x| x.xi)
    }
}

impl SystemSampler {
    /// Sampling protocol of a published setup: couplings uniform on the
    /// setup's class box; control coupling uniform on [0, c_max] (c_max is
    /// the search bracket that synchronizes the upper-bound network) for a
    /// quarter of the draws and near the draw's threshold for the rest.
    pub fn for_setup(setup: Setup, sim: &SimConfig) -> Result<Self> {
        let mut sampler = SystemSampler::from_class(&setup.class(), sim)?;
        if let SystemSampler::FromClass { focus, .. } = &mut sampler {
            *focus = Some(BoundaryFocus::new(sim));
        }
        Ok(sampler)
    }

    /// Frequencies uniform on (−2π, 2π), couplings on [0.25, 2.35]·|Δω|.
    pub fn random_frequencies(n: usize) -> Self {
        SystemSampler::RandomFrequencies {
            n,
            freq_range: TAU,
            coupling_factors: (0.25, 2.35),
            control_factor: 2.0,
        }
    }

    pub fn from_class(class: &UncertaintyClass, sim: &SimConfig) -> Result<Self> {
        Ok(SystemSampler::FromClass {
            class: class.clone(),
            control_max: bracket_upper(class, sim)?,
            focus: None,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        let n = match self {
            SystemSampler::RandomFrequencies { n, .. } => *n,
            SystemSampler::FromClass { class, .. } => class.n(),
        };
        FeatureSchema { n_total: n + 1 }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Provenance {
        match self {
            SystemSampler::RandomFrequencies {
                n,
                freq_range,
                coupling_factors: (lo, hi),
                control_factor,
            } => {
                let omega: Vec<f64> = (0..*n)
                    .map(|_| rng.gen_range(-freq_range..*freq_range))
                    .collect();
                let coupling = Pair::all(*n)
                    .into_iter()
                    .map(|p| {
                        let dw = (omega[p.i] - omega[p.j]).abs();
                        if dw > 0.0 {
                            rng.gen_range(lo * dw..hi * dw)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let mean = mean_frequency(&omega);
                let scale = omega.iter().map(|w| (w - mean).abs()).fold(0.0, f64::max);
                let control = rng.gen::<f64>() * control_factor * scale;
                Provenance {
                    omega,
                    coupling,
                    control,
                }
            }
            SystemSampler::FromClass {
                class,
                control_max,
                focus,
            } => {
                let coupling: Vec<f64> = class
                    .lower
                    .iter()
                    .zip(&class.upper)
                    .map(|(&lo, &hi)| {
                        if hi > lo {
                            lo + (hi - lo) * rng.gen::<f64>()
                        } else {
                            lo
                        }
                    })
                    .collect();
                let (pick, u) = (rng.gen::<f64>(), rng.gen::<f64>());
                let near = focus
                    .as_ref()
                    .filter(|f| pick < f.fraction)
                    .and_then(|f| f.threshold(&class.omega, &coupling).map(|xi| (f, xi)));
                let control = match near {
                    Some((f, xi)) => {
                        let lo = (xi - f.below).max(0.0);
                        lo + u * (xi + f.above - lo)
                    }
                    None => u * control_max,
                };
                Provenance {
                    omega: class.omega.clone(),
                    coupling,
                    control,
                }
            }
        }
    }
}

/// Upper end of the expanded search bracket for the class's upper-bound
/// coupling vector.
fn bracket_upper(class: &UncertaintyClass, sim: &SimConfig) -> Result<f64> {
    let predicate = make_ode_predicate(&class.omega, sim.clone())?;
    let found = find_xi(&class.upper, &predicate, &SearchConfig::default())?;
    Ok(predicate.natural_scale() * 2f64.powi(found.expansions as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub per_class: usize,
    pub seed: u64,
    pub labeling: LabelingConfig,
    /// Give up after this many draws.
    pub max_attempts: usize,
    pub batch_width: usize,
}

impl GenerationConfig {
    pub fn new(per_class: usize, seed: u64) -> Self {
        GenerationConfig {
            per_class,
            seed,
            labeling: LabelingConfig::default(),
            max_attempts: 50 * 2 * per_class.max(1),
            batch_width: 256,
        }
    }
}

/// Draws and labels systems until each label has `per_class` samples.
///
/// Draw `k` uses substream `(seed, k)`; draws are accepted strictly in index
/// order, so the result depends only on the configuration.
pub fn generate_dataset(sampler: &SystemSampler, config: &GenerationConfig) -> Result<Dataset> {
    if config.per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be at least 1".into()));
    }
    let schema = sampler.schema();
    let mut samples = Vec::with_capacity(2 * config.per_class);
    let (mut n_sync, mut n_unsync) = (0, 0);
    let mut next = 0usize;
    while n_sync < config.per_class || n_unsync < config.per_class {
        if next >= config.max_attempts {
            return Err(Error::ClassStarvation {
                synchronized: n_sync,
                unsynchronized: n_unsync,
                attempts: next,
            });
        }
        let batch = config.batch_width.min(config.max_attempts - next);
        let start = next;
        let labeled = par_map_indexed(batch, batch, |k| {
            let mut rng = substream(config.seed, (start + k) as u64);
            let prov = sampler.draw(&mut rng);
            let label = label_oracle(&prov.omega, &prov.coupling, prov.control, &config.labeling);
            (prov, label)
        });
        for (prov, label) in labeled {
            next += 1;
            let Some(sync) = label.as_bool() else {
                continue;
            };
            let count = if sync { &mut n_sync } else { &mut n_unsync };
            if *count >= config.per_class {
                continue;
            }
            *count += 1;
            samples.push(LabeledSample {
                features: prov.features()?,
                label: sync,
                provenance: prov,
            });
            if n_sync == config.per_class && n_unsync == config.per_class {
                break;
            }
        }
    }
    Ok(Dataset {
        schema,
        samples,
        seed: config.seed,
        attempts: next,
    })
}

/// Labeled samples as `f_1,...,f_D,label`.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let d = dataset.schema.dim();
    let mut out: String = (1..=d).map(|k| format!("f_{k},")).collect();
    out.push_str("label\n");
    for s in &dataset.samples {
        for f in &s.features {
            out.push_str(&format!("{f},"));
        }
        out.push_str(if s.label { "1\n" } else { "0\n" });
    }
    out
}

/// Sidecar metadata written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub schema: FeatureSchema,
    pub seed: u64,
    pub attempts: usize,
    pub sampler: SystemSampler,
    pub provenance: Vec<Provenance>,
}

pub fn sidecar(dataset: &Dataset, sampler: &SystemSampler) -> DatasetSidecar {
    DatasetSidecar {
        schema: dataset.schema,
        seed: dataset.seed,
        attempts: dataset.attempts,
        sampler: sampler.clone(),
        provenance: dataset
            .samples
            .iter()
            .map(|s| s.provenance.clone())
            .collect(),
    }
}

/// Rebuilds a dataset from its CSV and sidecar.
pub fn dataset_from_csv(csv: &str, meta: &DatasetSidecar, path: &str) -> Result<Dataset> {
    let d = meta.schema.dim();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: format!("{path}:{line}"),
        message,
    };
    let mut lines = csv.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.split(',').count() == d + 1 => {}
        _ => {
            return Err(parse_err(
                1,
                format!("expected a header with {} columns", d + 1),
            ))
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + 1 {
            return Err(parse_err(
                idx + 1,
                format!("expected {} columns, found {}", d + 1, cols.len()),
            ));
        }
        let features = cols[..d]
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(idx + 1, e.to_string()))?;
        let label = match cols[d].trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(idx + 1, format!("label '{other}' is not 0 or 1"))),
        };
        samples.push(LabeledSample {
            features,
            label,
            provenance: Provenance::default(),
        });
    }
    if meta.provenance.len() == samples.len() {
        for (s, p) in samples.iter_mut().zip(&meta.provenance) {
            s.provenance = p.clone();
        }
    }
    Ok(Dataset {
        schema: meta.schema,
        samples,
        seed: meta.seed,
        attempts: meta.attempts,
    })
}

/// Checks a sample's coupling vector length against its frequencies.
pub fn check_provenance(p: &Provenance) -> Result<()> {
    if p.coupling.len() != pair_count(p.omega.len()) {
        return Err(Error::SchemaMismatch {
            expected: pair_count(p.omega.len()),
            actual: p.coupling.len(),
        });
    }
    Ok(())
}
