use serde::{Deserialize, Serialize};

use super::{LinearParams, TrainingSet};
use crate::feature::SparseBinaryVector;

/// Logistic model `sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Vec<f64>,
    bias: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// The training objective: mean logistic loss plus `l2/2 * |w|^2`.
/// The bias is not penalized.
pub struct LinearObjective<'a, 'b> {
    data: &'a TrainingSet<'b>,
    l2: f64,
}

impl<'a, 'b> LinearObjective<'a, 'b> {
    pub fn new(data: &'a TrainingSet<'b>, l2: f64) -> Self {
        LinearObjective { data, l2 }
    }

    pub fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let n = self.data.len() as f64;
        let data_loss: f64 = self
            .data
            .rows()
            .iter()
            .zip(self.data.targets())
            .map(|(x, &t)| {
                let s = x.dot(weights) + bias;
                softplus(s) - if t { s } else { 0.0 }
            })
            .sum();
        data_loss / n + 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient with respect to `(weights, bias)`.
    pub fn gradient(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let n = self.data.len() as f64;
        let mut grad = vec![0.0; weights.len()];
        let mut grad_bias = 0.0;
        for (x, &t) in self.data.rows().iter().zip(self.data.targets()) {
            let residual = sigmoid(x.dot(weights) + bias) - f64::from(u8::from(t));
            for i in x.iter() {
                grad[i] += residual;
            }
            grad_bias += residual;
        }
        for (g, w) in grad.iter_mut().zip(weights) {
            *g = *g / n + self.l2 * w;
        }
        (grad, grad_bias / n)
    }
}

impl LinearModel {
    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        LinearModel { weights, bias }
    }

    /// Full-batch gradient descent from zero weights.
    pub fn fit(data: &TrainingSet<'_>, params: &LinearParams) -> Self {
        let objective = LinearObjective::new(data, params.l2);
        let mut weights = vec![0.0; data.dimension()];
        let mut bias = 0.0;
        for _ in 0..params.epochs {
            let (grad, grad_bias) = objective.gradient(&weights, bias);
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= params.learning_rate * g;
            }
            bias -= params.learning_rate * grad_bias;
        }
        LinearModel { weights, bias }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub(super) fn score(&self, x: &SparseBinaryVector) -> f64 {
        sigmoid(x.dot(&self.weights) + self.bias).clamp(0.0, 1.0)
    }
}
