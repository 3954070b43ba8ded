//! Single-hidden-layer classifier: ReLU hidden layer, sigmoid output,
//! binary cross-entropy, Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::features::FeatureSchema;
use crate::error::{Error, Result};
use crate::parallel::substream;

/// Trained synchronization classifier. Takes raw (unscaled) features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateClassifier {
    pub schema: FeatureSchema,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the mean loss, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// −[y log σ(z) + (1−y) log(1−σ(z))], computed without overflow.
fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

impl SurrogateClassifier {
    /// Randomly initialized network; hidden weights uniform on ±√(6/fan_in),
    /// output weights on ±1/√fan_in.
    pub fn init(schema: FeatureSchema, hidden: usize, seed: u64) -> Self {
        let d = schema.dim();
        let mut rng = substream(seed, 0);
        let r1 = (6.0 / d as f64).sqrt();
        let r2 = 1.0 / (hidden as f64).sqrt();
        SurrogateClassifier {
            schema,
            w1: (0..hidden)
                .map(|_| (0..d).map(|_| rng.gen_range(-r1..r1)).collect())
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.gen_range(-r2..r2)).collect(),
            b2: 0.0,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.b1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.schema.dim();
        let h = self.b1.len();
        if self.w1.len() != h || self.w2.len() != h || self.w1.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidModel(format!(
                "classifier weights do not match {d} inputs and {h} hidden units"
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.schema.dim() {
            return Err(Error::SchemaMismatch {
                expected: self.schema.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.logit_unchecked(x))
    }

    fn logit_unchecked(&self, x: &[f64]) -> f64 {
        let mut z = self.b2;
        for ((row, b), w) in self.w1.iter().zip(&self.b1).zip(&self.w2) {
            let pre = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            if pre > 0.0 {
                z += w * pre;
            }
        }
        z
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(self.logit(x)? >= 0.0)
    }

    /// Mean cross-entropy and its gradient over `(xs, ys)`.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<(f64, Gradient)> {
        let h = self.hidden_width();
        let d = self.schema.dim();
        let mut g = Gradient {
            w1: vec![vec![0.0; d]; h],
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        };
        let mut loss = 0.0;
        let mut pre = vec![0.0; h];
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            let mut z = self.b2;
            for k in 0..h {
                pre[k] = self.b1[k]
                    + self.w1[k]
                        .iter()
                        .zip(x.iter())
                        .map(|(w, x)| w * x)
                        .sum::<f64>();
                if pre[k] > 0.0 {
                    z += self.w2[k] * pre[k];
                }
            }
            loss += bce_with_logit(z, y);
            let delta = sigmoid(z) - if y { 1.0 } else { 0.0 };
            g.b2 += delta;
            for k in 0..h {
                if pre[k] > 0.0 {
                    g.w2[k] += delta * pre[k];
                    let back = delta * self.w2[k];
                    g.b1[k] += back;
                    for (gw, xv) in g.w1[k].iter_mut().zip(x.iter()) {
                        *gw += back * xv;
                    }
                }
            }
        }
        let scale = 1.0 / xs.len().max(1) as f64;
        g.b2 *= scale;
        g.b1.iter_mut()
            .chain(g.w2.iter_mut())
            .for_each(|v| *v *= scale);
        g.w1.iter_mut().flatten().for_each(|v| *v *= scale);
        Ok((loss * scale, g))
    }

    pub fn loss(&self, xs: &[Vec<f64>], ys: &[bool]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            total += bce_with_logit(self.logit(x)?, y);
        }
        Ok(total / xs.len().max(1) as f64)
    }
}

/// Confusion counts and accuracy of a classifier on a labeled set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

pub fn evaluate(model: &SurrogateClassifier, dataset: &Dataset) -> Result<Metrics> {
    if model.schema != dataset.schema {
        return Err(Error::SchemaMismatch {
            expected: model.schema.dim(),
            actual: dataset.schema.dim(),
        });
    }
    let mut m = Metrics::default();
    for s in &dataset.samples {
        match (model.predict(&s.features)?, s.label) {
            (true, true) => m.true_positive += 1,
            (false, false) => m.true_negative += 1,
            (true, false) => m.false_positive += 1,
            (false, true) => m.false_negative += 1,
        }
    }
    let total = dataset.samples.len();
    m.accuracy = if total == 0 {
        0.0
    } else {
        (m.true_positive + m.true_negative) as f64 / total as f64
    };
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Hidden width as the setup's multiple of the feature dimension.
    pub fn for_schema(schema: FeatureSchema, multiplier: usize, seed: u64) -> Self {
        TrainConfig {
            hidden: multiplier * schema.dim(),
            batch_size: 256,
            max_epochs: 2000,
            learning_rate: 1e-3,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_accuracy: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Epoch cap hit before every training sample was classified correctly.
    pub reached_cap: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Flat parameter layout used during training: W1 row-major, b1, W2, b2.
struct Flat {
    d: usize,
    h: usize,
    p: Vec<f64>,
}

impl Flat {
    fn from_model(m: &SurrogateClassifier) -> Self {
        let (d, h) = (m.schema.dim(), m.hidden_width());
        let mut p = Vec::with_capacity(h * d + 2 * h + 1);
        m.w1.iter().for_each(|row| p.extend_from_slice(row));
        p.extend_from_slice(&m.b1);
        p.extend_from_slice(&m.w2);
        p.push(m.b2);
        Flat { d, h, p }
    }

    fn to_model(&self, schema: FeatureSchema) -> SurrogateClassifier {
        let (d, h) = (self.d, self.h);
        SurrogateClassifier {
            schema,
            w1: self.p[..h * d].chunks(d).map(|c| c.to_vec()).collect(),
            b1: self.p[h * d..h * d + h].to_vec(),
            w2: self.p[h * d + h..h * d + 2 * h].to_vec(),
            b2: self.p[h * d + 2 * h],
        }
    }

    /// Accumulates the batch-mean gradient into `grad`; returns mean loss.
    fn batch_gradient(&self, xs: &[&[f64]], ys: &[bool], grad: &mut [f64], pre: &mut [f64]) -> f64 {
        let (d, h) = (self.d, self.h);
        let (w1, rest) = self.p.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (gw1, grest) = grad.split_at_mut(h * d);
        let (gb1, grest) = grest.split_at_mut(h);
        let (gw2, gb2) = grest.split_at_mut(h);
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let mut z = b2[0];
            for k in 0..h {
                let row = &w1[k * d..(k + 1) * d];
                pre[k] = b1[k] + row.iter().zip(x.iter()).map(|(w, x)| w * x).sum::<f64>();
                if pre[k] > 0.0 {
                    z += w2[k] * pre[k];
                }
            }
            loss += bce_with_logit(z, y);
            let delta = sigmoid(z) - if y { 1.0 } else { 0.0 };
            gb2[0] += delta;
            for k in 0..h {
                if pre[k] > 0.0 {
                    gw2[k] += delta * pre[k];
                    let back = delta * w2[k];
                    gb1[k] += back;
                    for (g, xv) in gw1[k * d..(k + 1) * d].iter_mut().zip(x.iter()) {
                        *g += back * xv;
                    }
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        loss * scale
    }
}

/// Per-feature affine scaling applied during training and folded into the
/// first layer afterwards.
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(xs: &[Vec<f64>], d: usize) -> Self {
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for x in xs {
            var.iter_mut()
                .zip(x.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
        }
        let inv_std = var
            .iter()
            .map(|v| if *v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, inv_std }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.inv_std))
            .map(|(v, (m, s))| (v - m) * s)
            .collect()
    }

    /// W·((x − μ)∘s) + b = (W∘s)·x + (b − (W∘s)·μ)
    fn fold_into(&self, model: &mut SurrogateClassifier) {
        for (row, b) in model.w1.iter_mut().zip(model.b1.iter_mut()) {
            for ((w, s), m) in row.iter_mut().zip(&self.inv_std).zip(&self.mean) {
                *w *= s;
                *b -= *w * m;
            }
        }
    }
}

/// Trains until every training sample is classified correctly or the epoch
/// cap is reached.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(SurrogateClassifier, TrainReport)> {
    if dataset.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let schema = dataset.schema;
    let d = schema.dim();
    if let Some(s) = dataset.samples.iter().find(|s| s.features.len() != d) {
        return Err(Error::SchemaMismatch {
            expected: d,
            actual: s.features.len(),
        });
    }
    let raw: Vec<Vec<f64>> = dataset.samples.iter().map(|s| s.features.clone()).collect();
    let ys: Vec<bool> = dataset.samples.iter().map(|s| s.label).collect();
    let scaler = Standardizer::fit(&raw, d);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| scaler.apply(x)).collect();

    let mut flat = Flat::from_model(&SurrogateClassifier::init(
        schema,
        config.hidden,
        config.seed,
    ));
    let mut adam = Adam::new(flat.p.len());
    let mut grad = vec![0.0; flat.p.len()];
    let mut pre = vec![0.0; config.hidden];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = substream(config.seed, 1);
    let batch = config.batch_size.max(1);

    let mut report = TrainReport {
        epochs: 0,
        final_accuracy: 0.0,
        epoch_losses: Vec::new(),
        reached_cap: false,
    };
    loop {
        let model = flat.to_model(schema);
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| (model.logit_unchecked(x) >= 0.0) == **y)
            .count();
        report.final_accuracy = correct as f64 / xs.len() as f64;
        if correct == xs.len() || report.epochs == config.max_epochs {
            report.reached_cap = correct != xs.len();
            break;
        }

        // Fisher-Yates with the training stream
        for k in (1..order.len()).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&k| xs[k].as_slice()).collect();
            let by: Vec<bool> = chunk.iter().map(|&k| ys[k]).collect();
            epoch_loss += flat.batch_gradient(&bx, &by, &mut grad, &mut pre);
            adam.step(&mut flat.p, &grad, config.learning_rate);
            batches += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
        report.epochs += 1;
    }

    let mut model = flat.to_model(schema);
    scaler.fold_into(&mut model);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::dataset::{LabeledSample, Provenance};

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let schema = FeatureSchema { n_total: 2 }; // 4 features
        let mut rng = substream(seed, 0);
        let samples = (0..n)
            .map(|_| {
                let mut features: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // keep a small margin around the separating plane
                features[0] += 0.05 * features[0].signum();
                LabeledSample {
                    label: features[0] > 0.0,
                    features,
                    provenance: Provenance::default(),
                }
            })
            .collect();
        Dataset {
            schema,
            samples,
            seed,
            attempts: n,
        }
    }

    fn random_net(seed: u64) -> (SurrogateClassifier, Vec<Vec<f64>>, Vec<bool>) {
        let schema = FeatureSchema { n_total: 3 }; // 9 features
        let mut net = SurrogateClassifier::init(schema, 7, seed);
        let mut rng = substream(seed, 5);
        net.b1
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-0.5..0.5));
        net.b2 = rng.gen_range(-0.5..0.5);
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let ys = (0..12).map(|_| rng.gen_bool(0.5)).collect();
        (net, xs, ys)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (net, xs, ys) = random_net(3);
        let (_, g) = net.loss_and_gradient(&xs, &ys).unwrap();
        let eps = 1e-6;
        let fd = |perturb: &dyn Fn(&mut SurrogateClassifier, f64)| {
            let mut plus = net.clone();
            perturb(&mut plus, eps);
            let mut minus = net.clone();
            perturb(&mut minus, -eps);
            (plus.loss(&xs, &ys).unwrap() - minus.loss(&xs, &ys).unwrap()) / (2.0 * eps)
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-3);
        assert!(close(g.b2, fd(&|m, e| m.b2 += e)));
        for k in 0..7 {
            assert!(close(g.w2[k], fd(&|m, e| m.w2[k] += e)));
            assert!(close(g.b1[k], fd(&|m, e| m.b1[k] += e)));
            for q in 0..9 {
                assert!(close(g.w1[k][q], fd(&|m, e| m.w1[k][q] += e)));
            }
        }
    }

    #[test]
    fn flat_training_gradient_matches_reference() {
        let (net, xs, ys) = random_net(11);
        let (loss, g) = net.loss_and_gradient(&xs, &ys).unwrap();
        let flat = Flat::from_model(&net);
        let mut grad = vec![0.0; flat.p.len()];
        let mut pre = vec![0.0; 7];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let l2 = flat.batch_gradient(&refs, &ys, &mut grad, &mut pre);
        assert!((loss - l2).abs() < 1e-12);
        let back = Flat {
            d: 9,
            h: 7,
            p: grad,
        }
        .to_model(net.schema);
        assert!((back.b2 - g.b2).abs() < 1e-12);
        for k in 0..7 {
            assert!((back.w2[k] - g.w2[k]).abs() < 1e-12);
            assert!((back.b1[k] - g.b1[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let data = toy_dataset(512, 1);
        let cfg = TrainConfig {
            hidden: 12,
            batch_size: 256,
            max_epochs: 2000,
            learning_rate: 1e-2,
            seed: 4,
        };
        let (model, report) = train(&data, &cfg).unwrap();
        assert_eq!(report.final_accuracy, 1.0);
        assert!(!report.reached_cap);
        assert!(report.epochs <= 50, "took {} epochs", report.epochs);
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
    }

    #[test]
    fn epoch_losses_decrease_on_toy_problem() {
        let data = toy_dataset(512, 2);
        let cfg = TrainConfig {
            hidden: 12,
            batch_size: 256,
            max_epochs: 30,
            learning_rate: 1e-3,
            seed: 9,
        };
        let (_, report) = train(&data, &cfg).unwrap();
        let l = &report.epoch_losses;
        assert!(l.len() >= 5);
        // averaged over windows of five epochs
        let windows: Vec<f64> = l
            .chunks(5)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        assert!(windows.windows(2).all(|w| w[1] <= w[0]), "{windows:?}");
    }

    #[test]
    fn folded_standardization_preserves_predictions() {
        let data = toy_dataset(300, 3);
        let cfg = TrainConfig {
            hidden: 6,
            batch_size: 64,
            max_epochs: 3,
            learning_rate: 1e-2,
            seed: 2,
        };
        let (model, _) = train(&data, &cfg).unwrap();
        // re-derive the standardized-space network and compare logits
        let raw: Vec<Vec<f64>> = data.samples.iter().map(|s| s.features.clone()).collect();
        let scaler = Standardizer::fit(&raw, 4);
        let x = &raw[17];
        let direct = model.logit(x).unwrap();
        let mut unscaled = model.clone();
        for row in unscaled.w1.iter_mut() {
            for (w, s) in row.iter_mut().zip(&scaler.inv_std) {
                *w /= s;
            }
        }
        for (row, b) in unscaled.w1.iter().zip(unscaled.b1.iter_mut()) {
            for ((w, s), m) in row.iter().zip(&scaler.inv_std).zip(&scaler.mean) {
                *b += w * s * m;
            }
        }
        let via_scaled = unscaled.logit(&scaler.apply(x)).unwrap();
        assert!((direct - via_scaled).abs() < 1e-9);
    }

    #[test]
    fn constant_predictor_scores_half_on_balanced_set() {
        let mut data = toy_dataset(200, 5);
        for (k, s) in data.samples.iter_mut().enumerate() {
            s.label = k % 2 == 0;
        }
        let mut model = SurrogateClassifier::init(data.schema, 3, 0);
        model.w2.iter_mut().for_each(|w| *w = 0.0);
        model.b2 = 1.0;
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 0.5);
    }

    #[test]
    fn schema_mismatch_and_empty_dataset() {
        let data = toy_dataset(10, 6);
        let other = SurrogateClassifier::init(FeatureSchema { n_total: 6 }, 3, 0);
        assert!(matches!(
            evaluate(&other, &data),
            Err(Error::SchemaMismatch { .. })
        ));
        assert!(other.logit(&[0.0; 4]).is_err());
        let empty = Dataset {
            samples: vec![],
            ..data
        };
        assert!(matches!(
            train(&empty, &TrainConfig::for_schema(empty.schema, 3, 0)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn five_osc_preset_width() {
        let cfg = TrainConfig::for_schema(FeatureSchema { n_total: 6 }, 3, 0);
        assert_eq!(cfg.hidden, 108);
        let cfg = TrainConfig::for_schema(FeatureSchema { n_total: 8 }, 4, 0);
        assert_eq!(cfg.hidden, 256);
    }

    #[test]
    fn json_uses_published_field_names() {
        let net = SurrogateClassifier::init(FeatureSchema { n_total: 2 }, 2, 0);
        let v: serde_json::Value = serde_json::to_value(&net).unwrap();
        for key in ["schema", "W1", "b1", "W2", "b2"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: SurrogateClassifier = serde_json::from_value(v).unwrap();
        assert_eq!(back, net);
    }
}
