//! Multinomial logistic regression probe, trained by full-batch gradient
//! descent. Used to turn embeddings into a classification accuracy.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::embed::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient of the `½‖W‖²` penalty; the bias is not penalized.
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// Row-major `label_set.len() × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub label_set: Vec<String>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub classifier: LinearClassifier,
    /// Training loss before each epoch, then after the last one.
    pub losses: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(label_set: Vec<String>, dim: usize) -> Self {
        Self {
            weights: vec![0.0; label_set.len() * dim],
            bias: vec![0.0; label_set.len()],
            label_set,
            dim,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| crate::embed::dot(row, x) + b)
            .collect()
    }

    /// Index into `label_set` of the highest logit; the first label wins ties.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate().skip(1) {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn predict(&self, x: &[f64]) -> &str {
        &self.label_set[self.predict_index(x)]
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²`, with its gradient.
///
/// Returns `(loss, dL/dW row-major, dL/db)`.
pub fn loss_and_gradient(
    model: &LinearClassifier,
    xs: &[&[f64]],
    ys: &[usize],
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let k = model.label_set.len();
    let d = model.dim;
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; k * d];
    let mut grad_b = vec![0.0; k];
    for (x, &y) in xs.iter().zip(ys) {
        let log_p = log_softmax(&model.logits(x));
        loss -= log_p[y];
        for (c, lp) in log_p.iter().enumerate() {
            let residual = (lp.exp() - if c == y { 1.0 } else { 0.0 }) / n;
            grad_b[c] += residual;
            for (g, xi) in grad_w[c * d..(c + 1) * d].iter_mut().zip(x.iter()) {
                *g += residual * xi;
            }
        }
    }
    loss /= n;
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * penalty;
    for (g, w) in grad_w.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    (loss, grad_w, grad_b)
}

fn dims_and_labels(data: &[(EmbeddingVector, String)]) -> Result<(usize, Vec<&[f64]>), EvalError> {
    let dim = data.first().ok_or(EvalError::Empty)?.0.dim();
    let mut xs = Vec::with_capacity(data.len());
    for (v, _) in data {
        if v.dim() != dim {
            return Err(EvalError::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        xs.push(v.values());
    }
    Ok((dim, xs))
}

/// Fits weights for the sorted distinct labels of `train`, starting from
/// small uniform weights drawn from `hyper.seed`.
pub fn fit_classifier(
    train: &[(EmbeddingVector, String)],
    hyper: &Hyperparameters,
) -> Result<FitOutcome, EvalError> {
    let (dim, xs) = dims_and_labels(train)?;
    let label_set: Vec<String> = train
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if label_set.len() < 2 {
        return Err(EvalError::SingleLabel);
    }
    let ys: Vec<usize> = train
        .iter()
        .map(|(_, l)| label_set.binary_search(l).expect("label from this set"))
        .collect();

    let mut model = LinearClassifier::zeros(label_set, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    for w in &mut model.weights {
        *w = rng.gen_range(-0.01..0.01);
    }

    let mut losses = Vec::with_capacity(hyper.epochs + 1);
    for _ in 0..hyper.epochs {
        let (loss, grad_w, grad_b) = loss_and_gradient(&model, &xs, &ys, hyper.l2);
        losses.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= hyper.learning_rate * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad_b) {
            *b -= hyper.learning_rate * g;
        }
    }
    losses.push(loss_and_gradient(&model, &xs, &ys, hyper.l2).0);
    if model
        .weights
        .iter()
        .chain(&model.bias)
        .any(|p| !p.is_finite())
    {
        return Err(EvalError::InvalidConfig(
            "training diverged; lower the learning rate".into(),
        ));
    }
    Ok(FitOutcome {
        classifier: model,
        losses,
    })
}

/// Percentage of `test` rows whose predicted label equals their own. Labels
/// the classifier never saw count as misses.
pub fn accuracy(
    model: &LinearClassifier,
    test: &[(EmbeddingVector, String)],
) -> Result<f64, EvalError> {
    let (dim, xs) = dims_and_labels(test)?;
    if dim != model.dim {
        return Err(EvalError::DimensionMismatch {
            expected: model.dim,
            found: dim,
        });
    }
    let correct = xs
        .iter()
        .zip(test)
        .filter(|(x, (_, label))| model.predict(x) == label)
        .count();
    Ok(100.0 * correct as f64 / test.len() as f64)
}
