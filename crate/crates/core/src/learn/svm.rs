use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kernel::AnovaKernel;
use super::{check_dim, side_from_svm_label, svm_label, LabeledDataset, Prediction};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub tolerance: f64,
    /// `None` uses max(10⁷, 100·n).
    pub max_iterations: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainInfo {
    pub iterations: usize,
    pub max_violation: f64,
    pub n_train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: AnovaKernel,
    pub c: f64,
    pub tolerance: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢ·yᵢ per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub info: SvmTrainInfo,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let dim = self.support_vectors.first().map_or(x.len(), Vec::len);
        check_dim(dim, x.len())?;
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let f = self.decision(x)?;
        Ok(Prediction {
            side: side_from_svm_label(f),
            score: f,
        })
    }
}

/// Dual solution over the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function is Σ αᵢyᵢK(xᵢ, x) + bias.
    pub bias: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

/// SMO on a precomputed Gram matrix with maximal-violating-pair selection.
///
/// Solves min ½αᵀQα − eᵀα subject to 0 ≤ α ≤ C and yᵀα = 0, where
/// Q = (yyᵀ) ∘ K.
pub fn solve_smo(gram: &DMatrix<f64>, y: &[f64], cfg: &SvmConfig) -> Result<SmoSolution> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::Shape(format!("Gram matrix {:?} for {n} labels", gram.shape())));
    }
    if !(cfg.c > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::Config("SVM C and tolerance must be positive".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::InvalidInput("SVM training needs both classes".into()));
    }
    let c = cfg.c;
    let max_iter = cfg.max_iterations.unwrap_or((100 * n).max(10_000_000));
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let violation = loop {
        // i: maximal violator in the up set; j: second-order choice from the
        // low set (largest guaranteed objective decrease).
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if i != usize::MAX && b > 0.0 {
                let a = (q(i, i) + q(t, t) - 2.0 * y[i] * y[t] * q(i, t)).max(TAU);
                let obj = -b * b / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        let violation = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || violation < cfg.tolerance {
            break violation.max(0.0);
        }
        if iterations >= max_iter {
            return Err(Error::SvmNotConverged {
                iterations,
                violation,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    // Offset from free multipliers, or the midpoint of the feasible range.
    let (mut sum_free, mut n_free) = (0.0, 0);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        iterations,
        max_violation: violation,
    })
}

pub fn train_svm(
    data: &LabeledDataset,
    kernel: AnovaKernel,
    cfg: &SvmConfig,
    seed: u64,
) -> Result<SvmModel> {
    data.require_both_classes()?;
    let gram = kernel.gram(&data.features);
    let y: Vec<f64> = data.labels.iter().map(|&s| svm_label(s)).collect();
    let sol = solve_smo(&gram, &y, cfg)?;
    Ok(model_from_solution(data, &y, kernel, cfg, &sol, seed))
}

pub(crate) fn model_from_solution(
    data: &LabeledDataset,
    y: &[f64],
    kernel: AnovaKernel,
    cfg: &SvmConfig,
    sol: &SmoSolution,
    seed: u64,
) -> SvmModel {
    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(data.features[t].clone());
            coefficients.push(a * y[t]);
        }
    }
    SvmModel {
        kernel,
        c: cfg.c,
        tolerance: cfg.tolerance,
        support_vectors,
        coefficients,
        bias: sol.bias,
        info: SvmTrainInfo {
            iterations: sol.iterations,
            max_violation: sol.max_violation,
            n_train: data.len(),
            seed,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::Side;

    #[test]
    fn two_points_split_evenly() {
        let data = LabeledDataset::new(
            vec![vec![0.1, 0.1], vec![0.9, 0.9]],
            vec![Side::Left, Side::Right],
        )
        .unwrap();
        let k = AnovaKernel::new(1.0, 1).unwrap();
        let m = train_svm(&data, k, &SvmConfig::default(), 0).unwrap();
        assert!(m.decision(&[0.1, 0.1]).unwrap() < 0.0);
        assert!(m.decision(&[0.9, 0.9]).unwrap() > 0.0);
        assert!(m.coefficients.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_do_not_crash() {
        let data = LabeledDataset::new(
            vec![vec![0.5; 25]; 7],
            vec![Side::Left, Side::Right, Side::Left, Side::Right, Side::Left, Side::Left, Side::Right],
        )
        .unwrap();
        let m = train_svm(&data, AnovaKernel::new(4.0, 4).unwrap(), &SvmConfig::default(), 0).unwrap();
        let p = m.predict(&[0.5; 25]).unwrap();
        let acc = data.labels.iter().filter(|&&s| s == p.side).count() as f64 / 7.0;
        assert!((acc - 4.0 / 7.0).abs() < 1e-12 || (acc - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn one_class_rejected() {
        let data = LabeledDataset::new(vec![vec![0.1], vec![0.2]], vec![Side::Left; 2]).unwrap();
        assert!(train_svm(&data, AnovaKernel::new(1.0, 1).unwrap(), &SvmConfig::default(), 0).is_err());
    }
}
