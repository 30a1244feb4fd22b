//! Multinomial linear softmax classifier trained by full-batch gradient
//! descent. Stands in for a fine-tuned multilingual model in simulations.

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    classes: usize,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.05,
            l2: 1e-3,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

impl ProbeModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ProbeModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), classes * dim);
        assert_eq!(bias.len(), classes);
        ProbeModel {
            classes,
            dim,
            weights,
            bias,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (c, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy plus `l2/2 * |W|^2`.
    pub fn loss(&self, data: &[(&[f64], usize)], l2: f64) -> f64 {
        let ce: f64 = data
            .iter()
            .map(|(x, y)| {
                let z = self.logits(x);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - z[*y]
            })
            .sum();
        let penalty = 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        ce / data.len() as f64 + penalty
    }

    /// Analytic gradient of [`ProbeModel::loss`] as `(d weights, d bias)`.
    pub fn gradient(&self, data: &[(&[f64], usize)], l2: f64) -> (Vec<f64>, Vec<f64>) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let n = data.len() as f64;
        for (x, y) in data {
            let mut p = self.predict_proba(x);
            p[*y] -= 1.0;
            for (c, &err) in p.iter().enumerate() {
                gb[c] += err / n;
                let row = &mut gw[c * self.dim..(c + 1) * self.dim];
                for (g, xi) in row.iter_mut().zip(x.iter()) {
                    *g += err * xi / n;
                }
            }
        }
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g += l2 * w;
        }
        (gw, gb)
    }

    fn step(&mut self, data: &[(&[f64], usize)], cfg: &TrainConfig) {
        let (gw, gb) = self.gradient(data, cfg.l2);
        for (w, g) in self.weights.iter_mut().zip(gw) {
            *w -= cfg.lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(gb) {
            *b -= cfg.lr * g;
        }
    }
}

/// Trains `model` on `annotated` and returns the updated model together
/// with the loss before training and after every epoch.
pub fn train_probe_with_history(
    model: &ProbeModel,
    annotated: &[(&[f64], usize)],
    cfg: &TrainConfig,
) -> Result<(ProbeModel, Vec<f64>), SimError> {
    if annotated.is_empty() {
        return Err(SimError::EmptyTrainingSet);
    }
    if let Some((x, y)) = annotated
        .iter()
        .find(|(x, y)| x.len() != model.dim || *y >= model.classes)
    {
        return Err(SimError::InvalidConfig(format!(
            "training example of dim {} / label {y} does not fit a {}x{} probe",
            x.len(),
            model.classes,
            model.dim
        )));
    }
    let mut model = model.clone();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    losses.push(model.loss(annotated, cfg.l2));
    for _ in 0..cfg.epochs {
        model.step(annotated, cfg);
        losses.push(model.loss(annotated, cfg.l2));
    }
    Ok((model, losses))
}

pub fn train_probe(
    model: &ProbeModel,
    annotated: &[(&[f64], usize)],
    cfg: &TrainConfig,
) -> Result<ProbeModel, SimError> {
    train_probe_with_history(model, annotated, cfg).map(|(m, _)| m)
}
