//! Automatic EOG/EMG artifact removal by blind source separation.
//!
//! The decomposition is second-order blind identification: the data are
//! whitened, then a single rotation jointly diagonalizes the lagged
//! covariance matrices (Jacobi sweeps). Components are flagged by spectral
//! and spatial criteria and projected out of channel space.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsp::MultiChannelSignal;
use crate::error::{Error, Result};
use crate::linalg::{covariance, rows_to_matrix, row_means, subtract_row_means, sym_inv_sqrt};
use crate::spectrum::{welch, Psd};

pub const FRONTAL_ROW: [&str; 3] = ["FC3", "FCZ", "FC4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AarScope {
    #[default]
    Montage,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AarConfig {
    pub scope: AarScope,
    /// Largest covariance lag (samples) used by the joint diagonalization.
    pub max_lag: usize,
    /// Minimum share of power below `eog_cutoff_hz` for an EOG component.
    pub eog_threshold: f64,
    pub eog_cutoff_hz: f64,
    /// Minimum share of power above `emg_cutoff_hz` for an EMG component.
    pub emg_threshold: f64,
    pub emg_cutoff_hz: f64,
    /// Minimum log-log spectral slope for an EMG component (broadband).
    pub emg_min_slope: f64,
    pub frontal_labels: Vec<String>,
}

impl Default for AarConfig {
    fn default() -> Self {
        AarConfig {
            scope: AarScope::Montage,
            max_lag: 50,
            eog_threshold: 0.6,
            eog_cutoff_hz: 4.0,
            emg_threshold: 0.6,
            emg_cutoff_hz: 30.0,
            emg_min_slope: -0.5,
            frontal_labels: FRONTAL_ROW.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssDecomposition {
    pub labels: Vec<String>,
    pub fs: f64,
    pub channel_means: Vec<f64>,
    /// Channels × components.
    pub mixing: DMatrix<f64>,
    /// Components × channels.
    pub unmixing: DMatrix<f64>,
    /// Components × samples, unit variance.
    pub sources: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Eog,
    Emg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub stage: Stage,
    pub removed_component_indices: Vec<usize>,
    pub scores: Vec<BTreeMap<String, f64>>,
    pub variance_removed_fraction: f64,
}

/// Second-order blind identification over lags `1..=max_lag` (lag 0 is
/// consumed by whitening).
pub fn decompose(signal: &MultiChannelSignal, max_lag: usize) -> Result<BssDecomposition> {
    let n_ch = signal.n_channels();
    let n = signal.n_samples();
    if n_ch < 2 {
        return Err(Error::InvalidInput("BSS needs at least 2 channels".into()));
    }
    if n < 10 * n_ch {
        return Err(Error::SignalTooShort {
            len: n,
            needed: 10 * n_ch,
        });
    }
    let x = rows_to_matrix(&signal.data);
    let means = row_means(&x);
    let xc = subtract_row_means(&x, &means);
    let (whiten, dewhiten) = sym_inv_sqrt(&covariance(&xc))?;
    let z = &whiten * &xc;

    let max_lag = max_lag.min(n / 2).max(1);
    let mut lagged: Vec<DMatrix<f64>> = (1..=max_lag)
        .map(|lag| {
            let a = z.columns(lag, n - lag);
            let b = z.columns(0, n - lag);
            let r = a * b.transpose() / (n - lag) as f64;
            (&r + r.transpose()) * 0.5
        })
        .collect();
    let rotation = joint_diagonalize(&mut lagged);

    let mut unmixing = rotation.transpose() * &whiten;
    let mut mixing = dewhiten * &rotation;

    // Order by back-projected energy, largest first; largest scalp weight positive.
    let mut order: Vec<usize> = (0..n_ch).collect();
    let energy: Vec<f64> = (0..n_ch).map(|j| mixing.column(j).norm_squared()).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    let mixing_sorted = DMatrix::from_fn(n_ch, n_ch, |i, j| mixing[(i, order[j])]);
    let unmixing_sorted = DMatrix::from_fn(n_ch, n_ch, |i, j| unmixing[(order[i], j)]);
    mixing = mixing_sorted;
    unmixing = unmixing_sorted;
    for j in 0..n_ch {
        let col = mixing.column(j);
        let peak = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if peak < 0.0 {
            mixing.column_mut(j).neg_mut();
            unmixing.row_mut(j).neg_mut();
        }
    }
    let sources = &unmixing * &xc;
    Ok(BssDecomposition {
        labels: signal.labels.clone(),
        fs: signal.fs,
        channel_means: means,
        mixing,
        unmixing,
        sources,
    })
}

/// Jacobi joint diagonalization of symmetric matrices; returns the
/// orthogonal `V` such that `V^T M V` is as diagonal as possible for all `M`.
fn joint_diagonalize(mats: &mut [DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats.first().map_or(0, |m| m.nrows());
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = 1e-12;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut g00, mut g01, mut g11) = (0.0, 0.0, 0.0);
                for m in mats.iter() {
                    let h0 = m[(p, p)] - m[(q, q)];
                    let h1 = m[(p, q)] + m[(q, p)];
                    g00 += h0 * h0;
                    g01 += h0 * h1;
                    g11 += h1 * h1;
                }
                let ton = g00 - g11;
                let toff = 2.0 * g01;
                let theta = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, c) = theta.sin_cos();
                if s.abs() <= threshold {
                    continue;
                }
                rotated = true;
                for m in mats.iter_mut() {
                    rotate(m, p, q, c, s);
                }
                for k in 0..n {
                    let (vp, vq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vp + s * vq;
                    v[(k, q)] = c * vq - s * vp;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    v
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let (mp, mq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * mp + s * mq;
        m[(k, q)] = c * mq - s * mp;
    }
    for k in 0..n {
        let (mp, mq) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * mp + s * mq;
        m[(q, k)] = c * mq - s * mp;
    }
}

impl BssDecomposition {
    pub fn n_components(&self) -> usize {
        self.mixing.ncols()
    }

    fn source_psd(&self, j: usize) -> Psd {
        let row: Vec<f64> = self.sources.row(j).iter().copied().collect();
        welch(&row, self.fs, 4.0)
    }

    /// Channel label carrying the largest absolute scalp weight of component `j`.
    pub fn peak_channel(&self, j: usize) -> &str {
        let col = self.mixing.column(j);
        let i = (0..col.len())
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        &self.labels[i]
    }

    /// Per-component criterion values, keyed by name.
    pub fn scores(&self, cfg: &AarConfig) -> Vec<BTreeMap<String, f64>> {
        (0..self.n_components())
            .map(|j| {
                let psd = self.source_psd(j);
                let frontal = cfg
                    .frontal_labels
                    .iter()
                    .any(|l| crate::edf::normalize_label(l) == self.peak_channel(j));
                BTreeMap::from([
                    ("low_freq_fraction".to_string(), psd.fraction(0.0, cfg.eog_cutoff_hz)),
                    (
                        "high_freq_fraction".to_string(),
                        psd.fraction(cfg.emg_cutoff_hz, f64::INFINITY),
                    ),
                    (
                        "spectral_slope".to_string(),
                        psd.log_slope(cfg.eog_cutoff_hz, 0.9 * self.fs / 2.0),
                    ),
                    ("frontal_peak".to_string(), if frontal { 1.0 } else { 0.0 }),
                ])
            })
            .collect()
    }
}

/// Components dominated by slow activity whose largest scalp weight sits on a frontal channel.
pub fn flag_eog(dec: &BssDecomposition, cfg: &AarConfig) -> Vec<usize> {
    dec.scores(cfg)
        .iter()
        .enumerate()
        .filter(|(_, s)| s["low_freq_fraction"] >= cfg.eog_threshold && s["frontal_peak"] > 0.5)
        .map(|(j, _)| j)
        .collect()
}

/// Components dominated by high-frequency, broadband activity.
pub fn flag_emg(dec: &BssDecomposition, cfg: &AarConfig) -> Vec<usize> {
    dec.scores(cfg)
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s["high_freq_fraction"] >= cfg.emg_threshold && s["spectral_slope"] >= cfg.emg_min_slope
        })
        .map(|(j, _)| j)
        .collect()
}

/// Projects components out: `mixing · diag(keep) · unmixing · (x − means) + means`.
pub fn remove_components(
    signal: &MultiChannelSignal,
    dec: &BssDecomposition,
    indices: &[usize],
) -> Result<(MultiChannelSignal, f64)> {
    let k = dec.n_components();
    if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
        return Err(Error::ComponentIndex { index: bad, len: k });
    }
    if signal.n_channels() != dec.mixing.nrows() {
        return Err(Error::Shape(format!(
            "signal has {} channels, decomposition {}",
            signal.n_channels(),
            dec.mixing.nrows()
        )));
    }
    let x = rows_to_matrix(&signal.data);
    let xc = subtract_row_means(&x, &dec.channel_means);
    let mut kept_mixing = dec.mixing.clone();
    for &i in indices {
        kept_mixing.column_mut(i).fill(0.0);
    }
    let projected = kept_mixing * (&dec.unmixing * &xc);
    let before = xc.norm_squared();
    let after = projected.norm_squared();
    let fraction = if before > 0.0 {
        (1.0 - after / before).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let data = (0..projected.nrows())
        .map(|i| {
            projected
                .row(i)
                .iter()
                .map(|v| v + dec.channel_means[i])
                .collect()
        })
        .collect();
    let cleaned = MultiChannelSignal {
        labels: signal.labels.clone(),
        data,
        fs: signal.fs,
    };
    Ok((cleaned, fraction))
}

/// Two-stage cleaning: EOG components first, then EMG components among the
/// remaining ones, both from one decomposition of the input.
pub fn clean(
    signal: &MultiChannelSignal,
    cfg: &AarConfig,
) -> Result<(MultiChannelSignal, Vec<RemovalReport>)> {
    let dec = decompose(signal, cfg.max_lag)?;
    let scores = dec.scores(cfg);
    let eog = flag_eog(&dec, cfg);
    let (after_eog, eog_fraction) = remove_components(signal, &dec, &eog)?;
    let emg: Vec<usize> = flag_emg(&dec, cfg)
        .into_iter()
        .filter(|j| !eog.contains(j))
        .collect();
    let (cleaned, emg_fraction) = remove_components(&after_eog, &dec, &emg)?;
    let reports = vec![
        RemovalReport {
            stage: Stage::Eog,
            removed_component_indices: eog,
            scores: scores.clone(),
            variance_removed_fraction: eog_fraction,
        },
        RemovalReport {
            stage: Stage::Emg,
            removed_component_indices: emg,
            scores,
            variance_removed_fraction: emg_fraction,
        },
    ];
    Ok((cleaned, reports))
}
