//! Probe classifiers trained from scratch: multinomial logistic regression
//! and a one-hidden-layer ReLU MLP, both fit with Adam on mean
//! cross-entropy.
//!
//! Training is deterministic: weights are initialised from one seeded
//! ChaCha stream and minibatch order is drawn from a second stream of the
//! same seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ProbeKind::Linear),
            "mlp" => Ok(ProbeKind::Mlp),
            other => Err(Error::invalid(format!("unknown probe kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Standardize inputs with statistics of the training features.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 75,
            hidden_units: 256,
            batch_size: 128,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.epochs == 0 || self.hidden_units == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs, hidden_units and batch_size must be >= 1"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Dense layer, `weights` row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub format_version: u32,
    pub kind: ProbeKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// One layer for `linear`, hidden then output for `mlp`.
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub train_config: TrainConfig,
}

/// Scratch buffers reused across samples.
struct Workspace {
    x: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl ProbeModel {
    fn workspace(&self) -> Workspace {
        Workspace {
            x: vec![0.0; self.input_dim],
            hidden: vec![0.0; self.layers[0].outputs],
            logits: vec![0.0; self.num_classes],
        }
    }

    fn forward(&self, row: &[f64], ws: &mut Workspace) {
        for (k, x) in ws.x.iter_mut().enumerate() {
            *x = (row[k] - self.input_mean[k]) / self.input_scale[k];
        }
        match self.kind {
            ProbeKind::Linear => self.layers[0].forward(&ws.x, &mut ws.logits),
            ProbeKind::Mlp => {
                self.layers[0].forward(&ws.x, &mut ws.hidden);
                for h in ws.hidden.iter_mut() {
                    *h = h.max(0.0);
                }
                self.layers[1].forward(&ws.hidden, &mut ws.logits);
            }
        }
        softmax_in_place(&mut ws.logits);
    }

    /// Class probabilities for one feature row.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(row, &mut ws);
        ws.logits
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        let mut ws = self.workspace();
        features
            .iter()
            .map(|row| {
                if row.len() != self.input_dim {
                    return Err(Error::LengthMismatch {
                        expected: self.input_dim,
                        found: row.len(),
                    });
                }
                self.forward(row, &mut ws);
                Ok(argmax(&ws.logits))
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// All parameters flattened layer by layer (weights, then bias).
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("parameter count");
            }
        }
    }

    /// Mean cross-entropy over `rows` and its gradient in [`params`](Self::params)
    /// order.
    pub fn loss_and_gradient(&self, features: &[Vec<f64>], labels: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.num_params()];
        let mut ws = self.workspace();
        let mut loss = 0.0;
        let mut delta_hidden = vec![0.0; ws.hidden.len()];
        for &r in rows {
            self.forward(&features[r], &mut ws);
            let y = labels[r];
            loss -= ws.logits[y].max(f64::MIN_POSITIVE).ln();
            // dL/dlogits = p - onehot(y)
            ws.logits[y] -= 1.0;
            match self.kind {
                ProbeKind::Linear => accumulate(&self.layers[0], &ws.x, &ws.logits, &mut grad),
                ProbeKind::Mlp => {
                    let (first, second) = grad.split_at_mut(self.layers[0].num_params());
                    let out = &self.layers[1];
                    accumulate(out, &ws.hidden, &ws.logits, second);
                    for (h, d) in delta_hidden.iter_mut().enumerate() {
                        *d = if ws.hidden[h] > 0.0 {
                            (0..out.outputs)
                                .map(|c| out.weights[c * out.inputs + h] * ws.logits[c])
                                .sum()
                        } else {
                            0.0
                        };
                    }
                    accumulate(&self.layers[0], &ws.x, &delta_hidden, first);
                }
            }
        }
        let scale = 1.0 / rows.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Adds the gradient of one dense layer given its input and the loss
/// gradient at its output.
fn accumulate(layer: &Layer, input: &[f64], delta: &[f64], grad: &mut [f64]) {
    let (gw, gb) = grad.split_at_mut(layer.weights.len());
    for (o, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
        for (g, &x) in row.iter_mut().zip(input) {
            *g += d * x;
        }
        gb[o] += d;
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn check_features(features: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::Empty("features"));
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::invalid("probe needs at least one input feature"));
    }
    for (r, row) in features.iter().enumerate() {
        if row.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLatent {
                row: r,
                column: format!("x{c}"),
            });
        }
    }
    Ok(d)
}

/// Trains a probe with `max(label) + 1` classes.
pub fn train_probe(features: &[Vec<f64>], labels: &[usize], kind: ProbeKind, config: &TrainConfig) -> Result<ProbeModel> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    train_probe_with_classes(features, labels, classes, kind, config)
}

/// Trains a probe over an explicit number of classes (some may be absent
/// from `labels`, e.g. after a compositional split).
pub fn train_probe_with_classes(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    kind: ProbeKind,
    config: &TrainConfig,
) -> Result<ProbeModel> {
    config.validate()?;
    let d = check_features(features, labels)?;
    if labels.iter().any(|&y| y >= num_classes) {
        return Err(Error::invalid("label outside the class range"));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClass);
    }
    let n = features.len();

    let (input_mean, input_scale) = if config.standardize {
        let mean: Vec<f64> = (0..d)
            .map(|k| features.iter().map(|r| r[k]).sum::<f64>() / n as f64)
            .collect();
        let scale = (0..d)
            .map(|k| {
                let var = features.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n as f64;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scale)
    } else {
        (vec![0.0; d], vec![1.0; d])
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = match kind {
        ProbeKind::Linear => vec![Layer::init(d, num_classes, &mut init_rng)],
        ProbeKind::Mlp => vec![
            Layer::init(d, config.hidden_units, &mut init_rng),
            Layer::init(config.hidden_units, num_classes, &mut init_rng),
        ],
    };
    let mut model = ProbeModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        input_dim: d,
        num_classes,
        layers,
        input_mean,
        input_scale,
        train_config: config.clone(),
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let batch = config.batch_size.min(n);
    let mut params = model.params();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for rows in order.chunks(batch) {
            let (loss, grad) = model.loss_and_gradient(features, labels, rows);
            epoch_loss += loss * rows.len() as f64;
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            for (((p, g), a), b) in params.iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
                *a = config.beta1 * *a + (1.0 - config.beta1) * g;
                *b = config.beta2 * *b + (1.0 - config.beta2) * g * g;
                *p -= config.learning_rate * (*a / c1) / ((*b / c2).sqrt() + config.epsilon);
            }
            model.set_params(&params);
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(model)
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &ProbeModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::Empty("features"));
    }
    let predicted = model.predict(features)?;
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Probability that two independent draws from the label distribution
/// agree: `Σ_k (count_k / N)^2`.
pub fn chance_rate(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0u64; k];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.iter().map(|&c| (c as f64 / n).powi(2)).sum())
}

/// `max(0, (a - r) / (1 - r))`. A single-class chance rate (`r = 1`)
/// gives 0.
pub fn adjusted_accuracy(a: f64, r: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    ((a - r) / (1.0 - r)).clamp(0.0, 1.0)
}
