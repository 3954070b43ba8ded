//! Canonical feature vectors for a controlled network.
//!
//! Oscillators are reordered by natural frequency (descending, stable), then
//! the vector is `[sorted ω; |ω_p − ω_q| for p < q; a_{p,q} for p < q]` with
//! pairs in lexicographic order of the sorted indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kuramoto::{mean_frequency, pair_count, Pair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    /// Oscillator count including the control oscillator.
    pub n_total: usize,
}

impl FeatureSchema {
    pub fn dim(&self) -> usize {
        self.n_total + 2 * pair_count(self.n_total)
    }
}

/// Features of an `n_total`-oscillator network given its full upper-triangular
/// coupling vector.
pub fn featurize_full(omega: &[f64], coupling: &[f64]) -> Result<Vec<f64>> {
    let n = omega.len();
    if coupling.len() != pair_count(n) {
        return Err(Error::SchemaMismatch {
            expected: pair_count(n),
            actual: coupling.len(),
        });
    }
    let order = descending_order(omega);
    let mut out = Vec::with_capacity(FeatureSchema { n_total: n }.dim());
    out.extend(order.iter().map(|&k| omega[k]));
    for p in 0..n {
        for q in (p + 1)..n {
            out.push((omega[order[p]] - omega[order[q]]).abs());
        }
    }
    for p in 0..n {
        for q in (p + 1)..n {
            let pair = Pair::new(order[p], order[q])?;
            out.push(coupling[pair.index(n)]);
        }
    }
    Ok(out)
}

/// Features of `omega` (full, control last), network couplings `a` among
/// the first `n_total − 1` oscillators, and control coupling `c`.
pub fn featurize(omega: &[f64], a: &[f64], c: f64) -> Result<Vec<f64>> {
    let n_total = omega.len();
    if n_total < 2 || a.len() != pair_count(n_total - 1) {
        return Err(Error::SchemaMismatch {
            expected: pair_count(n_total.saturating_sub(1)),
            actual: a.len(),
        });
    }
    let mut full = Vec::with_capacity(pair_count(n_total));
    let mut k = 0;
    for i in 0..n_total - 1 {
        let row = n_total - 2 - i;
        full.extend_from_slice(&a[k..k + row]);
        full.push(c);
        k += row;
    }
    featurize_full(omega, &full)
}

fn descending_order(omega: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..omega.len()).collect();
    // sort_by is stable, so ties keep the original index order
    order.sort_by(|&x, &y| omega[y].total_cmp(&omega[x]));
    order
}

#[derive(Clone, Copy, Debug)]
enum Source {
    Network(usize),
    Control,
}

/// Precomputed layout for repeated featurization with fixed frequencies,
/// as inside a bisection loop.
#[derive(Clone, Debug)]
pub struct Featurizer {
    prefix: Vec<f64>,
    coupling_sources: Vec<Source>,
    n_network_pairs: usize,
}

impl Featurizer {
    /// Layout for a network with frequencies `omega` plus a control oscillator
    /// at their mean.
    pub fn for_control(omega: &[f64]) -> Result<Self> {
        let mut full = omega.to_vec();
        full.push(mean_frequency(omega));
        Featurizer::new(&full)
    }

    /// `omega` includes the control oscillator as its last entry.
    pub fn new(omega: &[f64]) -> Result<Self> {
        let n = omega.len();
        if n < 2 {
            return Err(Error::InvalidModel(
                "need at least one oscillator plus control".into(),
            ));
        }
        let control = n - 1;
        let order = descending_order(omega);
        let mut prefix: Vec<f64> = order.iter().map(|&k| omega[k]).collect();
        let mut coupling_sources = Vec::with_capacity(pair_count(n));
        for p in 0..n {
            for q in (p + 1)..n {
                prefix.push((omega[order[p]] - omega[order[q]]).abs());
                let (x, y) = (order[p], order[q]);
                coupling_sources.push(if x == control || y == control {
                    Source::Control
                } else {
                    Source::Network(Pair::new(x, y)?.index(n - 1))
                });
            }
        }
        Ok(Featurizer {
            prefix,
            coupling_sources,
            n_network_pairs: pair_count(n - 1),
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        let n_total = self.prefix.len() - self.coupling_sources.len();
        FeatureSchema { n_total }
    }

    pub fn features(&self, a: &[f64], c: f64) -> Result<Vec<f64>> {
        if a.len() != self.n_network_pairs {
            return Err(Error::SchemaMismatch {
                expected: self.n_network_pairs,
                actual: a.len(),
            });
        }
        let mut out = Vec::with_capacity(self.prefix.len() + self.coupling_sources.len());
        out.extend_from_slice(&self.prefix);
        out.extend(self.coupling_sources.iter().map(|s| match *s {
            Source::Network(k) => a[k],
            Source::Control => c,
        }));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schema_dimensions() {
        assert_eq!(FeatureSchema { n_total: 6 }.dim(), 36);
        assert_eq!(FeatureSchema { n_total: 8 }.dim(), 64);
    }

    #[test]
    fn five_osc_features_have_expected_length() {
        let omega = [-2.5, -0.6667, 1.1667, 2.0, 5.8333, 1.1667];
        let f = featurize(&omega, &[0.5; 10], 0.8).unwrap();
        assert_eq!(f.len(), 36);
        assert_eq!(&f[..6], &[5.8333, 2.0, 1.1667, 1.1667, -0.6667, -2.5]);
    }

    #[test]
    fn uniform_network_features() {
        let f = featurize(&[0.4; 4], &[0.7; 3], 0.7).unwrap();
        assert!(f[4..10].iter().all(|x| *x == 0.0));
        assert!(f[10..].iter().all(|x| *x == 0.7));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(featurize(&[0.0, 1.0, 2.0], &[0.5; 2], 0.1).is_err());
        assert!(featurize_full(&[0.0, 1.0, 2.0], &[0.5; 2]).is_err());
    }

    #[test]
    fn featurizer_matches_direct_path() {
        let omega = [-3.46, -1.9611, -0.6754, -0.3806, -0.3675, 6.1161, 8.3287];
        let fz = Featurizer::for_control(&omega).unwrap();
        assert_eq!(fz.schema(), FeatureSchema { n_total: 8 });
        let mut full = omega.to_vec();
        full.push(mean_frequency(&omega));
        let a: Vec<f64> = (0..21).map(|k| 0.1 * k as f64).collect();
        assert_eq!(
            fz.features(&a, 1.25).unwrap(),
            featurize(&full, &a, 1.25).unwrap()
        );
    }

    fn permuted(omega: &[f64], coupling: &[f64], perm: &[usize]) -> (Vec<f64>, Vec<f64>) {
        // new oscillator k is old oscillator perm[k]
        let n = omega.len();
        let w: Vec<f64> = perm.iter().map(|&k| omega[k]).collect();
        let mut a = vec![0.0; pair_count(n)];
        for p in Pair::all(n) {
            let old = Pair::new(perm[p.i], perm[p.j]).unwrap();
            a[p.index(n)] = coupling[old.index(n)];
        }
        (w, a)
    }

    proptest! {
        #[test]
        fn invariant_under_relabeling(
            omega in prop::collection::vec(-6.0f64..6.0, 6),
            coupling in prop::collection::vec(0.0f64..3.0, 15),
            perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let (w, a) = permuted(&omega, &coupling, &perm);
            prop_assert_eq!(featurize_full(&omega, &coupling).unwrap(), featurize_full(&w, &a).unwrap());
        }
    }
}
