//! Extended-infomax ICA with sphering, fitted on epoched montage data.
//!
//! Activations are `weights · sphere · (data − channel_means)`, scaled so
//! each component has unit variance on the fitting data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epoch::EpochedDataset;
use crate::error::{Error, Result};
use crate::linalg::{covariance, min_cost_assignment, rows_to_matrix, sym_inv_sqrt};

/// Fitting needs at least this many samples per squared channel count.
pub const MIN_SAMPLES_PER_CHANNEL_SQ: usize = 20;

const MAX_WEIGHT: f64 = 1e8;
const MIN_LEARNING_RATE: f64 = 1e-7;
const KURTOSIS_SUBSET: usize = 6000;
const EXT_MOMENTUM: f64 = 0.5;
const SIGNS_BIAS: f64 = 0.02;
const RESTART_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentOrder {
    /// One-to-one assignment of components to channels by scalp projection;
    /// component k projects most strongly to channel k.
    #[default]
    ChannelAssignment,
    /// Descending back-projected variance.
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub seed: u64,
    pub max_steps: usize,
    /// Stop once the squared weight change of a step falls below this.
    pub tolerance: f64,
    /// `None` uses 0.00065 / ln(channels).
    pub learning_rate: Option<f64>,
    pub anneal_degrees: f64,
    /// `None` uses 0.98 with `extended` and 0.9 without.
    pub anneal_factor: Option<f64>,
    pub extended: bool,
    pub order: ComponentOrder,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            seed: 7,
            max_steps: 2048,
            tolerance: 1e-6,
            learning_rate: None,
            anneal_degrees: 60.0,
            anneal_factor: None,
            extended: true,
            order: ComponentOrder::ChannelAssignment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub steps: usize,
    pub final_change: f64,
    pub learning_rate: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    pub labels: Vec<String>,
    pub weights: DMatrix<f64>,
    pub sphere: DMatrix<f64>,
    pub channel_means: Vec<f64>,
    pub convergence: Convergence,
}

impl IcaModel {
    pub fn n_channels(&self) -> usize {
        self.channel_means.len()
    }

    /// `weights · sphere`.
    pub fn unmixing(&self) -> DMatrix<f64> {
        &self.weights * &self.sphere
    }

    /// Scalp projections, one column per component.
    pub fn mixing(&self) -> Result<DMatrix<f64>> {
        self.unmixing()
            .try_inverse()
            .ok_or(Error::RankDeficient { ratio: 0.0 })
    }

    /// Components × samples for channels × samples `data`.
    pub fn activations(&self, data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if data.len() != self.n_channels() {
            return Err(Error::Shape(format!(
                "model has {} channels, data has {}",
                self.n_channels(),
                data.len()
            )));
        }
        let x = rows_to_matrix(data);
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.channel_means[i]);
        Ok(self.unmixing() * centered)
    }

    /// Activations of every epoch in `dataset`, concatenated in order.
    pub fn dataset_activations(&self, dataset: &EpochedDataset) -> Result<DMatrix<f64>> {
        if dataset.labels != self.labels {
            return Err(Error::Shape(format!(
                "dataset channels {:?} differ from model channels {:?}",
                dataset.labels, self.labels
            )));
        }
        self.activations(&dataset.concatenated())
    }

    /// Inverse of [`IcaModel::activations`].
    pub fn reconstruct(&self, activations: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
        let x = self.mixing()? * activations;
        Ok((0..x.nrows())
            .map(|i| x.row(i).iter().map(|v| v + self.channel_means[i]).collect())
            .collect())
    }
}

/// Fits one model to the concatenation of `datasets`, which must share
/// channel labels and sampling rate.
pub fn fit_datasets(datasets: &[&EpochedDataset], cfg: &IcaConfig) -> Result<IcaModel> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InvalidInput("no datasets to fit".into()))?;
    if datasets.iter().any(|d| d.labels != first.labels) {
        return Err(Error::Shape("datasets differ in channel labels".into()));
    }
    let mut rows = vec![Vec::new(); first.n_channels()];
    for d in datasets {
        for (row, ch) in rows.iter_mut().zip(d.concatenated()) {
            row.extend(ch);
        }
    }
    fit_ica(&first.labels, &rows, cfg)
}

/// Fits ICA to channels × samples `data`.
pub fn fit_ica(labels: &[String], data: &[Vec<f64>], cfg: &IcaConfig) -> Result<IcaModel> {
    let ch = data.len();
    if ch == 0 || labels.len() != ch {
        return Err(Error::Shape(format!("{} labels for {} channels", labels.len(), ch)));
    }
    let x = rows_to_matrix(data);
    let t = x.ncols();
    let needed = MIN_SAMPLES_PER_CHANNEL_SQ * ch * ch;
    if t < needed {
        return Err(Error::SignalTooShort { len: t, needed });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample in ICA input".into()));
    }
    let channel_means: Vec<f64> = (0..ch).map(|i| x.row(i).sum() / t as f64).collect();
    let centered = DMatrix::from_fn(ch, t, |i, j| x[(i, j)] - channel_means[i]);
    let (sphere, _) = sym_inv_sqrt(&covariance(&centered))?;
    let sphered = &sphere * &centered;

    let (mut weights, convergence) = infomax(&sphered, cfg)?;

    // Unit-variance activations on the fitting data.
    let acts = &weights * &sphered;
    for i in 0..ch {
        let row = acts.row(i);
        let mean = row.sum() / t as f64;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        weights.row_mut(i).scale_mut(1.0 / sd);
    }

    let mut model = IcaModel {
        labels: labels.to_vec(),
        weights,
        sphere,
        channel_means,
        convergence,
    };
    canonicalize(&mut model, cfg.order)?;
    Ok(model)
}

/// Fixes component order and sign.
fn canonicalize(model: &mut IcaModel, order: ComponentOrder) -> Result<()> {
    let ch = model.n_channels();
    let mixing = model.mixing()?;
    let (perm, flip): (Vec<usize>, Vec<bool>) = match order {
        ComponentOrder::ChannelAssignment => {
            // cost[component, channel]
            let cost = DMatrix::from_fn(ch, ch, |comp, chan| {
                let col = mixing.column(comp);
                -(col[chan].abs() / col.norm())
            });
            let assigned = min_cost_assignment(&cost);
            let mut perm = vec![0; ch];
            for (comp, &chan) in assigned.iter().enumerate() {
                perm[chan] = comp;
            }
            let flip = perm.iter().enumerate().map(|(chan, &comp)| mixing[(chan, comp)] < 0.0).collect();
            (perm, flip)
        }
        ComponentOrder::Variance => {
            let var: Vec<f64> = (0..ch).map(|j| mixing.column(j).norm_squared()).collect();
            let mut perm: Vec<usize> = (0..ch).collect();
            perm.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
            let flip = perm
                .iter()
                .map(|&comp| {
                    let row = model.weights.row(comp);
                    let mut best = 0;
                    for k in 1..ch {
                        if row[k].abs() > row[best].abs() {
                            best = k;
                        }
                    }
                    row[best] < 0.0
                })
                .collect();
            (perm, flip)
        }
    };
    let old = model.weights.clone();
    for (new_i, (&comp, &neg)) in perm.iter().zip(&flip).enumerate() {
        let s = if neg { -1.0 } else { 1.0 };
        model.weights.set_row(new_i, &(old.row(comp) * s));
    }
    Ok(())
}

/// Natural-gradient infomax on sphered data, restarting with a smaller
/// learning rate when the weights blow up.
fn infomax(x: &DMatrix<f64>, cfg: &IcaConfig) -> Result<(DMatrix<f64>, Convergence)> {
    let ch = x.nrows();
    let mut lrate = cfg
        .learning_rate
        .unwrap_or(0.00065 / (ch.max(2) as f64).ln());
    let mut restarts = 0;
    loop {
        match infomax_attempt(x, cfg, lrate) {
            Attempt::Converged(w, conv) => return Ok((w, Convergence { restarts, ..conv })),
            Attempt::BlewUp => {
                lrate *= RESTART_FACTOR;
                restarts += 1;
                if lrate < MIN_LEARNING_RATE {
                    return Err(Error::IcaNotConverged {
                        iterations: 0,
                        last_change: f64::NAN,
                        learning_rate: lrate,
                    });
                }
                log::debug!("ICA weights blew up; restarting with learning rate {lrate:.3e}");
            }
            Attempt::Failed(e) => return Err(e),
        }
    }
}

enum Attempt {
    Converged(DMatrix<f64>, Convergence),
    BlewUp,
    Failed(Error),
}

fn infomax_attempt(x: &DMatrix<f64>, cfg: &IcaConfig, mut lrate: f64) -> Attempt {
    let (ch, t) = x.shape();
    let block = ((t as f64 / 3.0).sqrt().floor() as usize).clamp(1, t);
    let n_blocks = t / block;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = DMatrix::<f64>::identity(ch, ch);
    let mut bias = DVector::<f64>::zeros(ch);
    let mut signs = vec![1.0; ch];
    let mut old_kurt: Option<Vec<f64>> = None;
    let mut old_delta: Option<DMatrix<f64>> = None;
    let mut old_change = 0.0;
    let mut change = f64::INFINITY;
    let mut perm: Vec<usize> = (0..t).collect();
    let mut xb = DMatrix::<f64>::zeros(ch, block);
    let bi = DMatrix::<f64>::identity(ch, ch) * block as f64;
    let anneal_cos = cfg.anneal_degrees.to_radians().cos();
    let anneal_factor = cfg
        .anneal_factor
        .unwrap_or(if cfg.extended { 0.98 } else { 0.9 });

    for step in 1..=cfg.max_steps {
        let w_old = w.clone();
        perm.shuffle(&mut rng);
        for b in 0..n_blocks {
            for (k, &col) in perm[b * block..(b + 1) * block].iter().enumerate() {
                xb.set_column(k, &x.column(col));
            }
            let mut u = &w * &xb;
            for mut c in u.column_iter_mut() {
                c += &bias;
            }
            // Score per component: logistic tanh(u/2) for super-Gaussian
            // rows, u - tanh(u) for sub-Gaussian rows.
            let mut score = u.clone();
            for (i, &s) in signs.iter().enumerate() {
                for v in score.row_mut(i).iter_mut() {
                    *v = if s > 0.0 { (0.5 * *v).tanh() } else { *v - v.tanh() };
                }
                bias[i] -= lrate * score.row(i).sum();
            }
            let grad = &bi - &score * u.transpose();
            w += lrate * grad * &w;
            if w.iter().any(|v| !v.is_finite() || v.abs() > MAX_WEIGHT) {
                return Attempt::BlewUp;
            }
        }
        if cfg.extended {
            signs = kurtosis_signs(&w, x, &mut rng, &mut old_kurt);
        }

        // Squared change relative to the mean squared row norm, so the
        // tolerance does not depend on the scale the score settles at.
        let delta = &w - &w_old;
        change = delta.norm_squared() / (w_old.norm_squared() / ch as f64);
        if !change.is_finite() {
            return Attempt::BlewUp;
        }
        match &old_delta {
            None => {
                old_delta = Some(delta);
                old_change = change;
            }
            Some(prev) if step > 2 => {
                let cos = delta.dot(prev) / (change * old_change).sqrt();
                if cos < anneal_cos {
                    lrate *= anneal_factor;
                    old_delta = Some(delta);
                    old_change = change;
                }
            }
            Some(_) => {}
        }
        if step > 2 && change < cfg.tolerance {
            return Attempt::Converged(
                w,
                Convergence {
                    steps: step,
                    final_change: change,
                    learning_rate: lrate,
                    restarts: 0,
                },
            );
        }
        if lrate < MIN_LEARNING_RATE {
            break;
        }
    }
    Attempt::Failed(Error::IcaNotConverged {
        iterations: cfg.max_steps,
        last_change: change,
        learning_rate: lrate,
    })
}

/// Sub/super-Gaussian switch from excess kurtosis on a random subset.
fn kurtosis_signs(
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    old: &mut Option<Vec<f64>>,
) -> Vec<f64> {
    let (ch, t) = x.shape();
    let n = KURTOSIS_SUBSET.min(t);
    let mut sub = DMatrix::<f64>::zeros(ch, n);
    for k in 0..n {
        sub.set_column(k, &x.column(rng.random_range(0..t)));
    }
    let acts = w * sub;
    let mut kurt: Vec<f64> = (0..ch)
        .map(|i| {
            let row = acts.row(i);
            let m2 = row.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let m4 = row.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64;
            m4 / (m2 * m2) - 3.0
        })
        .collect();
    if let Some(prev) = old.as_ref() {
        for (k, p) in kurt.iter_mut().zip(prev) {
            *k = EXT_MOMENTUM * p + (1.0 - EXT_MOMENTUM) * *k;
        }
    }
    let signs = kurt.iter().map(|k| if k + SIGNS_BIAS >= 0.0 { 1.0 } else { -1.0 }).collect();
    *old = Some(kurt);
    signs
}

/// Mean absolute excess kurtosis of the rows of `m`.
pub fn mean_abs_excess_kurtosis(m: &DMatrix<f64>) -> f64 {
    let t = m.ncols() as f64;
    let k: f64 = (0..m.nrows())
        .map(|i| {
            let row = m.row(i);
            let mean = row.sum() / t;
            let m2 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
            let m4 = row.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / t;
            if m2 > 0.0 {
                (m4 / (m2 * m2) - 3.0).abs()
            } else {
                0.0
            }
        })
        .sum();
    k / m.nrows().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::condition_number;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("E{i}")).collect()
    }

    fn laplace(r: &mut ChaCha8Rng) -> f64 {
        let u: f64 = r.random_range(-0.5..0.5);
        -u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    #[test]
    fn identity_mixture_gives_signed_permutation() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let t = 4000;
        let data: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let s: Vec<f64> = (0..t).map(|_| laplace(&mut r)).collect();
                let m = s.iter().sum::<f64>() / t as f64;
                let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64).sqrt();
                s.iter().map(|v| (v - m) / sd).collect()
            })
            .collect();
        let model = fit_ica(&labels(4), &data, &IcaConfig::default()).unwrap();
        let u = model.unmixing();
        for i in 0..4 {
            let row = u.row(i);
            let big = row.iter().filter(|v| v.abs() > 0.9).count();
            let small = row.iter().filter(|v| v.abs() < 0.1).count();
            assert_eq!((big, small), (1, 3), "row {i}: {row}");
        }
    }

    #[test]
    fn invariants_hold_for_gaussian_sources() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let t = 3000;
        let src: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..t).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let data: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..t).map(|k| src[i][k] + 0.5 * src[(i + 1) % 4][k] + 3.0).collect())
            .collect();
        let model = fit_ica(&labels(4), &data, &IcaConfig::default()).unwrap();
        let x = rows_to_matrix(&data);
        let centered = DMatrix::from_fn(4, t, |i, j| x[(i, j)] - model.channel_means[i]);
        let white = &model.sphere * covariance(&centered) * model.sphere.transpose();
        assert!((white - DMatrix::identity(4, 4)).abs().max() < 1e-6);
        assert!(condition_number(&model.weights) < 1e6);
    }

    #[test]
    fn too_few_samples_rejected() {
        let data = vec![vec![0.0; 100]; 4];
        assert!(matches!(
            fit_ica(&labels(4), &data, &IcaConfig::default()),
            Err(Error::SignalTooShort { needed: 320, .. })
        ));
    }

    #[test]
    fn constant_channel_is_rank_deficient() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<Vec<f64>> = (0..3).map(|_| (0..500).map(|_| laplace(&mut r)).collect()).collect();
        data.push(vec![1.0; 500]);
        assert!(matches!(
            fit_ica(&labels(4), &data, &IcaConfig::default()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn identity_model_activations_equal_data() {
        let model = IcaModel {
            labels: labels(2),
            weights: DMatrix::identity(2, 2),
            sphere: DMatrix::identity(2, 2),
            channel_means: vec![0.0, 0.0],
            convergence: Convergence {
                steps: 0,
                final_change: 0.0,
                learning_rate: 0.0,
                restarts: 0,
            },
        };
        let data = vec![vec![1.0, 2.0, 3.0], vec![-4.0, 5.0, 0.5]];
        let a = model.activations(&data).unwrap();
        assert_eq!(a, rows_to_matrix(&data));
        assert!(model.activations(&data[..1]).is_err());
    }
}
