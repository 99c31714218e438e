//! Planted-artifact checks for the EOG/EMG criteria.

use std::f64::consts::PI;

use eegfist::artifact::{decompose, flag_emg, flag_eog, remove_components, AarConfig};
use eegfist::dsp::{MultiChannelSignal, MOTOR_MONTAGE};
use eegfist::linalg::pearson;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FS: f64 = 160.0;
const N: usize = 160 * 60;

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Seven brain-like sources: two oscillations and five AR(1) processes with
/// distinct spectra, all unit variance.
fn brain_sources(r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (f, phase) in [(10.0, 0.3), (21.0, 1.1)] {
        let s: Vec<f64> = (0..N)
            .map(|i| {
                let t = i as f64 / FS;
                (2.0 * PI * f * t + phase).sin() * (1.0 + 0.3 * (2.0 * PI * 0.2 * t).sin())
                    + 0.2 * gauss(r)
            })
            .collect();
        out.push(s);
    }
    for phi in [0.5, 0.6, 0.7, 0.8, 0.9] {
        let mut prev = 0.0;
        out.push(
            (0..N)
                .map(|_| {
                    prev = phi * prev + gauss(r);
                    prev
                })
                .collect(),
        );
    }
    for s in &mut out {
        let m = s.iter().sum::<f64>() / N as f64;
        let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / N as f64).sqrt();
        s.iter_mut().for_each(|v| *v = (*v - m) / sd);
    }
    out
}

fn brain_mixing(r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..8)
        .map(|i| {
            (0..7)
                .map(|j| if i == j { 1.0 } else { r.random_range(0.0..0.4) })
                .collect()
        })
        .collect()
}

fn mix(sources: &[Vec<f64>], weights: &[Vec<f64>]) -> Vec<Vec<f64>> {
    weights
        .iter()
        .map(|w| {
            (0..N)
                .map(|t| w.iter().zip(sources).map(|(a, s)| a * s[t]).sum())
                .collect()
        })
        .collect()
}

fn montage(data: Vec<Vec<f64>>) -> MultiChannelSignal {
    MultiChannelSignal::new(MOTOR_MONTAGE.iter().map(|s| s.to_string()).collect(), data, FS)
        .unwrap()
}

fn blink_train() -> Vec<f64> {
    // 0.5 Hz biphasic pulses: a positive bump followed by a smaller negative one.
    (0..N)
        .map(|i| {
            let t = (i as f64 / FS) % 2.0;
            let bump = |c: f64, sigma: f64| (-(t - c).powi(2) / (2.0 * sigma * sigma)).exp();
            bump(0.8, 0.08) - 0.4 * bump(1.05, 0.1)
        })
        .collect()
}

#[test]
fn planted_blink_is_flagged_and_removed() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let brain = brain_sources(&mut r);
    let weights = brain_mixing(&mut r);
    let clean = mix(&brain, &weights);

    let blink = blink_train();
    let blink_weights = [6.0, 7.0, 6.0, 1.5, 1.2, 1.0, 1.2, 1.5];
    let dirty: Vec<Vec<f64>> = clean
        .iter()
        .zip(blink_weights)
        .map(|(ch, w)| ch.iter().zip(&blink).map(|(c, b)| c + w * b).collect())
        .collect();
    let signal = montage(dirty);
    let cfg = AarConfig::default();
    let dec = decompose(&signal, cfg.max_lag).unwrap();
    let flagged = flag_eog(&dec, &cfg);
    assert_eq!(flagged.len(), 1, "flagged {flagged:?}");
    let blink_corr = dec
        .sources
        .row(flagged[0])
        .iter()
        .copied()
        .collect::<Vec<_>>();
    let bc = pearson(&blink_corr, &blink).abs();
    println!("blink source corr {bc:.3}");
    assert!(bc > 0.95);

    let before = pearson(&signal.data[0], &clean[0]);
    let (cleaned, fraction) = remove_components(&signal, &dec, &flagged).unwrap();
    let after = pearson(&cleaned.data[0], &clean[0]);
    println!("FC3 correlation with ground truth: before {before:.3}, after {after:.3}");
    assert!(before <= 0.8);
    assert!(after >= 0.95);
    assert!(fraction > 0.0 && fraction < 1.0);
}

#[test]
fn sinusoidal_sources_raise_no_eog_flags() {
    let sources: Vec<Vec<f64>> = (0..8)
        .map(|k| {
            (0..N)
                .map(|i| (2.0 * PI * 10.0 * i as f64 / FS + k as f64).sin() * (1.0 + 0.1 * k as f64)
                    + 0.05 * ((i * (k + 3)) % 17) as f64)
                .collect()
        })
        .collect();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let weights: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| if i == j { 1.0 } else { r.random_range(0.0..0.3) }).collect())
        .collect();
    let dec = decompose(&montage(mix(&sources, &weights)), 50).unwrap();
    assert!(flag_eog(&dec, &AarConfig::default()).is_empty());
}

#[test]
fn white_noise_false_positive_rate() {
    let cfg = AarConfig::default();
    let mut flags = 0;
    for trial in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + trial);
        let data: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..N / 4).map(|_| gauss(&mut r)).collect())
            .collect();
        let dec = decompose(&montage(data), cfg.max_lag).unwrap();
        flags += flag_eog(&dec, &cfg).len();
    }
    assert!(flags <= 1, "{flags} EOG flags on white noise");
}

#[test]
fn planted_emg_burst_is_flagged() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut sources = brain_sources(&mut r);
    // White noise gated in alternating 1 s bursts.
    let burst: Vec<f64> = (0..N)
        .map(|i| if (i / FS as usize) % 2 == 0 { gauss(&mut r) } else { 0.0 })
        .collect();
    sources.push(burst.clone());
    let weights: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| if i == j { 1.0 } else { r.random_range(0.0..0.4) }).collect())
        .collect();
    let dec = decompose(&montage(mix(&sources, &weights)), 50).unwrap();
    let cfg = AarConfig::default();
    let flagged = flag_emg(&dec, &cfg);
    assert_eq!(flagged.len(), 1, "flagged {flagged:?}");
    let row: Vec<f64> = dec.sources.row(flagged[0]).iter().copied().collect();
    assert!(pearson(&row, &burst).abs() > 0.9);
}

#[test]
fn mu_source_not_flagged_as_emg_and_silence_flags_nothing() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let sources = brain_sources(&mut r);
    let mut sources8 = sources.clone();
    sources8.push((0..N).map(|i| (2.0 * PI * 10.0 * i as f64 / FS).cos() * 0.5 + 0.1 * gauss(&mut r)).collect());
    let weights: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| if i == j { 1.0 } else { r.random_range(0.0..0.4) }).collect())
        .collect();
    let dec = decompose(&montage(mix(&sources8, &weights)), 50).unwrap();
    assert!(flag_emg(&dec, &AarConfig::default()).is_empty());

    let mut silent = dec.clone();
    silent.sources.fill(0.0);
    assert!(flag_emg(&silent, &AarConfig::default()).is_empty());
    assert!(flag_eog(&silent, &AarConfig::default()).is_empty());
}

#[test]
fn removal_never_adds_energy_and_is_idempotent() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let mut sources = brain_sources(&mut r);
    sources.push(blink_train());
    let weights: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| if i == j { 1.0 } else { r.random_range(-0.4..0.4) }).collect())
        .collect();
    let signal = montage(mix(&sources, &weights));
    let dec = decompose(&signal, 50).unwrap();
    let energy = |s: &MultiChannelSignal| -> f64 {
        s.data
            .iter()
            .zip(&dec.channel_means)
            .map(|(ch, m)| ch.iter().map(|v| (v - m).powi(2)).sum::<f64>())
            .sum()
    };
    let original = energy(&signal);
    for idx in [vec![0], vec![2, 5], vec![1, 3, 7]] {
        let (once, _) = remove_components(&signal, &dec, &idx).unwrap();
        assert!(energy(&once) <= original + 1e-9 * original);
        let (twice, _) = remove_components(&once, &dec, &idx).unwrap();
        for (a, b) in once.data.iter().flatten().zip(twice.data.iter().flatten()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
