//! Planted Laplacian mixtures: recovery, whitening and reconstruction.

use eegfist::ica::{fit_ica, mean_abs_excess_kurtosis, IcaConfig};
use eegfist::linalg::{covariance, rows_to_matrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CH: usize = 8;
const T: usize = 4000;

fn laplace(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random_range(-0.5..0.5);
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Best worst-case |correlation| over all one-to-one matchings, by exhaustive
/// search over permutations.
fn best_matching(c: &[[f64; CH]; CH]) -> f64 {
    fn rec(c: &[[f64; CH]; CH], k: usize, used: &mut [bool; CH], worst: f64, best: &mut f64) {
        if worst <= *best {
            return;
        }
        if k == CH {
            *best = worst;
            return;
        }
        for j in 0..CH {
            if !used[j] {
                used[j] = true;
                rec(c, k + 1, used, worst.min(c[k][j]), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(c, 0, &mut [false; CH], f64::INFINITY, &mut best);
    best
}

struct Trial {
    recovered: f64,
    whitening: f64,
    reconstruction: f64,
    kurt_gain: bool,
}

fn trial(seed: u64) -> Trial {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let sources: Vec<Vec<f64>> = (0..CH).map(|_| (0..T).map(|_| laplace(&mut r)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..CH)
        .map(|_| (0..CH).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let data: Vec<Vec<f64>> = (0..CH)
        .map(|i| {
            (0..T)
                .map(|t| 10.0 + (0..CH).map(|j| a[i][j] * sources[j][t]).sum::<f64>())
                .collect()
        })
        .collect();
    let labels: Vec<String> = (0..CH).map(|i| format!("E{i}")).collect();
    let cfg = IcaConfig {
        seed,
        ..IcaConfig::default()
    };
    let model = fit_ica(&labels, &data, &cfg).unwrap();
    let acts = model.activations(&data).unwrap();

    let mut c = [[0.0; CH]; CH];
    for (i, row) in c.iter_mut().enumerate() {
        let ai: Vec<f64> = acts.row(i).iter().copied().collect();
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = corr(&ai, &sources[j]).abs();
        }
    }

    let x = rows_to_matrix(&data);
    let centered = DMatrix::from_fn(CH, T, |i, j| x[(i, j)] - model.channel_means[i]);
    let white = &model.sphere * covariance(&centered) * model.sphere.transpose();
    let whitening = (white - DMatrix::<f64>::identity(CH, CH)).abs().max();

    let back = model.reconstruct(&acts).unwrap();
    let num: f64 = back.iter().flatten().zip(data.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = data.iter().flatten().map(|v| v * v).sum();

    let sphered = &model.sphere * &centered;
    Trial {
        recovered: best_matching(&c),
        whitening,
        reconstruction: (num / den).sqrt(),
        kurt_gain: mean_abs_excess_kurtosis(&acts) >= mean_abs_excess_kurtosis(&sphered),
    }
}

#[test]
fn planted_laplacian_mixtures() {
    let mut recovered = 0;
    for seed in 0..20 {
        let t = trial(seed);
        println!(
            "seed {seed}: min matched |corr| {:.4}, whitening {:.2e}, reconstruction {:.2e}",
            t.recovered, t.whitening, t.reconstruction
        );
        assert!(t.whitening <= 1e-6);
        assert!(t.reconstruction <= 1e-9);
        assert!(t.kurt_gain);
        if t.recovered >= 0.95 {
            recovered += 1;
        }
    }
    assert!(recovered >= 18, "recovered {recovered}/20");
}

#[test]
fn fitting_is_deterministic() {
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let data: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..1000).map(|t| laplace(&mut r) + 0.3 * (t as f64 * 0.01 * (i + 1) as f64).sin()).collect())
        .collect();
    let labels: Vec<String> = (0..4).map(|i| format!("E{i}")).collect();
    let a = fit_ica(&labels, &data, &IcaConfig::default()).unwrap();
    let b = fit_ica(&labels, &data, &IcaConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::from_str::<eegfist::ica::IcaModel>(&serde_json::to_string(&a).unwrap()).unwrap(), a);
}

#[test]
fn activations_are_uncorrelated_with_unit_variance() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let src: Vec<Vec<f64>> = (0..CH).map(|_| (0..T).map(|_| laplace(&mut r)).collect()).collect();
    let data: Vec<Vec<f64>> = (0..CH)
        .map(|i| (0..T).map(|t| src[i][t] + 0.4 * src[(i + 3) % CH][t]).collect())
        .collect();
    let labels: Vec<String> = (0..CH).map(|i| format!("E{i}")).collect();
    let model = fit_ica(&labels, &data, &IcaConfig::default()).unwrap();
    let acts = model.activations(&data).unwrap();
    let cov = covariance(&acts);
    for i in 0..CH {
        assert!((cov[(i, i)] - 1.0).abs() < 1e-9);
        for j in 0..CH {
            if i != j {
                assert!(cov[(i, j)].abs() <= 0.1);
            }
        }
    }
}
