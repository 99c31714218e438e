use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, nn_target, side_from_nn_output, LabeledDataset, Prediction};
use crate::error::{Error, Result};

pub const MAX_HIDDEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after `patience` consecutive epochs improving the loss by less than this.
    pub min_improvement: f64,
    pub patience: usize,
    pub init_range: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            learning_rate: 0.1,
            max_epochs: 2000,
            min_improvement: 1e-7,
            patience: 50,
            init_range: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainInfo {
    pub epochs: usize,
    pub final_loss: f64,
    pub final_learning_rate: f64,
    pub rejected_steps: usize,
    pub seed: u64,
}

/// One hidden layer of logistic units and a logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_nodes: usize,
    /// hidden × input.
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub info: MlpTrainInfo,
}

/// Same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl MlpModel {
    /// Weights drawn uniformly from ±`range`.
    pub fn initialize(input_dim: usize, hidden_nodes: usize, range: f64, seed: u64) -> Result<Self> {
        if hidden_nodes == 0 || hidden_nodes > MAX_HIDDEN {
            return Err(Error::Config(format!(
                "hidden nodes must be in 1..={MAX_HIDDEN}, got {hidden_nodes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.random_range(-range..=range);
        let w1 = (0..hidden_nodes)
            .map(|_| (0..input_dim).map(|_| draw()).collect())
            .collect();
        let b1 = (0..hidden_nodes).map(|_| draw()).collect();
        let w2 = (0..hidden_nodes).map(|_| draw()).collect();
        let b2 = draw();
        Ok(MlpModel {
            input_dim,
            hidden_nodes,
            w1,
            b1,
            w2,
            b2,
            info: MlpTrainInfo {
                epochs: 0,
                final_loss: f64::NAN,
                final_learning_rate: 0.0,
                rejected_steps: 0,
                seed,
            },
        })
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(w, b)| sigmoid(w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b))
            .collect()
    }

    fn output_from_hidden(&self, h: &[f64]) -> f64 {
        sigmoid(self.w2.iter().zip(h).map(|(a, v)| a * v).sum::<f64>() + self.b2)
    }

    pub fn output(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, x.len())?;
        Ok(self.output_from_hidden(&self.hidden(x)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let o = self.output(x)?;
        Ok(Prediction {
            side: side_from_nn_output(o),
            score: o,
        })
    }

    /// Mean squared error (1/N)·Σ(o − t)².
    pub fn loss(&self, xs: &[Vec<f64>], targets: &[f64]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(targets)
            .map(|(x, t)| (self.output_from_hidden(&self.hidden(x)) - t).powi(2))
            .sum::<f64>()
            / n
    }

    /// Backpropagated gradient of [`MlpModel::loss`].
    pub fn gradient(&self, xs: &[Vec<f64>], targets: &[f64]) -> MlpGradient {
        let n = xs.len().max(1) as f64;
        let mut g = MlpGradient {
            w1: vec![vec![0.0; self.input_dim]; self.hidden_nodes],
            b1: vec![0.0; self.hidden_nodes],
            w2: vec![0.0; self.hidden_nodes],
            b2: 0.0,
        };
        for (x, t) in xs.iter().zip(targets) {
            let h = self.hidden(x);
            let o = self.output_from_hidden(&h);
            let d_out = 2.0 * (o - t) / n * o * (1.0 - o);
            g.b2 += d_out;
            for k in 0..self.hidden_nodes {
                g.w2[k] += d_out * h[k];
                let d_hidden = d_out * self.w2[k] * h[k] * (1.0 - h[k]);
                g.b1[k] += d_hidden;
                for (gw, xi) in g.w1[k].iter_mut().zip(x) {
                    *gw += d_hidden * xi;
                }
            }
        }
        g
    }

    /// Parameters flattened as w1 (row-major), b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.w1.iter().flatten().copied().collect();
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for row in &mut self.w1 {
            for w in row.iter_mut() {
                *w = it.next().expect("parameter vector too short");
            }
        }
        for b in &mut self.b1 {
            *b = it.next().expect("parameter vector too short");
        }
        for w in &mut self.w2 {
            *w = it.next().expect("parameter vector too short");
        }
        self.b2 = it.next().expect("parameter vector too short");
    }

    fn step(&self, g: &MlpGradient, lr: f64) -> MlpModel {
        let mut m = self.clone();
        for (row, grow) in m.w1.iter_mut().zip(&g.w1) {
            for (w, d) in row.iter_mut().zip(grow) {
                *w -= lr * d;
            }
        }
        for (b, d) in m.b1.iter_mut().zip(&g.b1) {
            *b -= lr * d;
        }
        for (w, d) in m.w2.iter_mut().zip(&g.w2) {
            *w -= lr * d;
        }
        m.b2 -= lr * g.b2;
        m
    }
}

impl MlpGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.w1.iter().flatten().copied().collect();
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }
}

/// Full-batch gradient descent on mean squared error. A step that raises
/// the loss is rejected and the learning rate halved, so accepted losses
/// never increase.
pub fn train_nn(
    data: &LabeledDataset,
    hidden_nodes: usize,
    cfg: &MlpConfig,
    seed: u64,
) -> Result<MlpModel> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    let targets: Vec<f64> = data.labels.iter().map(|&s| nn_target(s)).collect();
    let mut model = MlpModel::initialize(data.dim(), hidden_nodes, cfg.init_range, seed)?;
    let mut loss = model.loss(&data.features, &targets);
    let mut lr = cfg.learning_rate;
    let mut stalled = 0;
    let mut rejected = 0;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        epochs += 1;
        let g = model.gradient(&data.features, &targets);
        let candidate = model.step(&g, lr);
        let new_loss = candidate.loss(&data.features, &targets);
        if !new_loss.is_finite() {
            return Err(Error::Diverged { epoch: epochs });
        }
        if new_loss > loss {
            rejected += 1;
            lr *= 0.5;
            stalled += 1;
        } else {
            stalled = if loss - new_loss < cfg.min_improvement {
                stalled + 1
            } else {
                0
            };
            model = candidate;
            loss = new_loss;
        }
        if stalled >= cfg.patience {
            break;
        }
    }
    model.info = MlpTrainInfo {
        epochs,
        final_loss: loss,
        final_learning_rate: lr,
        rejected_steps: rejected,
        seed,
    };
    Ok(model)
}
