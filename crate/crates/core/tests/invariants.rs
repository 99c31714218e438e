//! Property checks that hold for every input, not just fixtures.

use eegfist::artifact::{decompose, remove_components};
use eegfist::dsp::{FilterKind, FilterMode, FilterSpec, MultiChannelSignal};
use eegfist::edf::writer::{encode_edf, EdfContent};
use eegfist::edf::{parse_record, Annotation, MovementEvent, RecordHeader, Side};
use eegfist::epoch::{extract_epochs, AnalysisType};
use eegfist::eval::{SplitMode, SplitPlan};
use eegfist::features::{compute_stats, Normalization, NORM_HIGH, NORM_LOW};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 160.0;

fn chain_filters() -> Vec<(&'static str, FilterSpec)> {
    vec![
        ("0.5-90 Hz", FilterSpec::design(FilterKind::Bandpass, &[0.5, 90.0], 4, FS).unwrap()),
        ("50 Hz notch", FilterSpec::notch(50.0, 35.0, FS).unwrap()),
        ("8-30 Hz", AnalysisType::Erd.rhythm_filter(FS).unwrap()),
        ("3 Hz lowpass", AnalysisType::Mrcp.rhythm_filter(FS).unwrap()),
    ]
}

fn noise(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

// ---- EDF -------------------------------------------------------------------

fn edf_content() -> impl Strategy<Value = EdfContent> {
    (1usize..4, prop::sample::select(vec![8usize, 16, 32]), 1usize..6, any::<u64>(), 0usize..6).prop_map(
        |(n_ch, fs, secs, seed, n_ann)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let n = fs * secs;
            let channels = (0..n_ch)
                .map(|c| (format!("Ch{c}"), (0..n).map(|_| r.random_range(-200.0..200.0)).collect()))
                .collect();
            let mut annotations: Vec<Annotation> = Vec::new();
            let mut t = 0.0;
            for k in 0..n_ann {
                let d = r.random_range(0.1..1.0);
                if t + d > secs as f64 {
                    break;
                }
                annotations.push(Annotation {
                    onset_s: t,
                    duration_s: Some(d),
                    label: ["T0", "T1", "T2"][k % 3].into(),
                });
                t += d;
            }
            EdfContent {
                patient_id: "X".into(),
                recording_id: "prop".into(),
                fs,
                channels,
                annotations,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edf_header_and_counts_are_consistent(content in edf_content()) {
        let bytes = encode_edf(&content).unwrap();
        let rec = parse_record(&bytes).unwrap();
        let header = RecordHeader::parse(&bytes).unwrap();
        prop_assert_eq!(&header.to_bytes()[..], &bytes[..header.header_bytes]);
        for (ch, sig) in rec.channels.iter().zip(header.signals.iter().filter(|s| !s.is_annotation())) {
            prop_assert_eq!(ch.samples.len(), header.n_data_records * sig.samples_per_record);
        }
        let length = rec.duration_s();
        for e in &rec.events {
            prop_assert!(e.onset_s + e.duration_s <= length + 1e-9);
        }
    }
}

// ---- filters ---------------------------------------------------------------

#[test]
fn impulse_responses_decay_within_a_minute() {
    let n = (70.0 * FS) as usize;
    let cutoff = (60.0 * FS) as usize;
    for (name, f) in chain_filters() {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        let h = f.filter_causal(&x);
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tail = h[cutoff..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(tail < 1e-8 * peak, "{name}: tail {tail:e} vs peak {peak:e}");
        for s in &f.sections {
            for p in s.poles() {
                assert!(p.norm() < 1.0, "{name}: pole {p}");
            }
        }
    }
}

#[test]
fn zero_phase_output_peaks_at_zero_lag() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for (name, f) in chain_filters() {
        // Band-limit white noise with the filter itself so most of the input
        // lies in the passband.
        let x = f.filter_causal(&noise(&mut r, 4000));
        let y = f.filter(&x, FilterMode::ZeroPhase).unwrap();
        let xcorr = |lag: i64| -> f64 {
            (0..x.len() as i64)
                .filter(|&i| i + lag >= 0 && i + lag < y.len() as i64)
                .map(|i| x[i as usize] * y[(i + lag) as usize])
                .sum()
        };
        let best = (-80..=80).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0, "{name}");
    }
}

#[test]
fn notch_removes_a_line_frequency_sine() {
    let f = FilterSpec::notch(50.0, 35.0, FS).unwrap();
    let x: Vec<f64> = (0..(20.0 * FS) as usize)
        .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / FS).sin())
        .collect();
    let y = f.filter(&x, FilterMode::ZeroPhase).unwrap();
    // Ignore the edges, where the reflection padding settles.
    let mid = &y[(2.0 * FS) as usize..y.len() - (2.0 * FS) as usize];
    assert!(rms(mid) <= 0.03 * rms(&x), "ratio {}", rms(mid) / rms(&x));
}

#[test]
fn broadband_filter_removes_dc() {
    let f = FilterSpec::design(FilterKind::Bandpass, &[0.5, 90.0], 4, FS).unwrap();
    let y = f.filter_causal(&vec![100.0; (60.0 * FS) as usize]);
    let tail = &y[(50.0 * FS) as usize..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(mean.abs() <= 1.0, "mean {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn filtering_is_linear(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0, which in 0usize..4) {
        let (_, f) = chain_filters().swap_remove(which);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = noise(&mut r, 800);
        let y = noise(&mut r, 800);
        for mode in [FilterMode::Causal, FilterMode::ZeroPhase] {
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = f.filter(&combo, mode).unwrap();
            let fx = f.filter(&x, mode).unwrap();
            let fy = f.filter(&y, mode).unwrap();
            let rhs: Vec<f64> = fx.iter().zip(&fy).map(|(p, q)| a * p + b * q).collect();
            let diff: f64 = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            prop_assert!(diff <= 1e-9 * scale, "relative error {}", diff / scale);
        }
    }
}

// ---- artifact removal ------------------------------------------------------

fn mixed_signal(seed: u64, n_ch: usize, n: usize) -> MultiChannelSignal {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let sources: Vec<Vec<f64>> = (0..n_ch)
        .map(|k| {
            let hz = 2.0 + 5.0 * k as f64 + r.random_range(0.0..1.0);
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * hz * i as f64 / FS).sin() + 0.3 * r.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let data = (0..n_ch)
        .map(|_| {
            let w: Vec<f64> = (0..n_ch).map(|_| r.random_range(-1.0..1.0)).collect();
            let offset = r.random_range(-20.0..20.0);
            (0..n).map(|i| offset + (0..n_ch).map(|k| w[k] * sources[k][i]).sum::<f64>()).collect()
        })
        .collect();
    MultiChannelSignal::new((0..n_ch).map(|c| format!("C{c}")).collect(), data, FS).unwrap()
}

fn centered_energy(s: &MultiChannelSignal) -> f64 {
    let means = s.channel_means();
    s.data
        .iter()
        .zip(&means)
        .map(|(ch, m)| ch.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn component_removal_is_an_idempotent_contraction(seed in any::<u64>(), mask in 0u8..16) {
        let signal = mixed_signal(seed, 4, 1200);
        let dec = decompose(&signal, 10).unwrap();
        let indices: Vec<usize> = (0..4).filter(|k| mask & (1 << k) != 0).collect();
        let (once, _) = remove_components(&signal, &dec, &indices).unwrap();
        let (twice, _) = remove_components(&once, &dec, &indices).unwrap();
        let scale = centered_energy(&signal).sqrt();
        for (a, b) in once.data.iter().flatten().zip(twice.data.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9 * scale.max(1.0));
        }
        prop_assert!(centered_energy(&once) <= centered_energy(&signal) + 1e-9 * scale * scale);
    }
}

// ---- epoching --------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn epoching_commutes_with_channel_selection(
        seed in any::<u64>(),
        onsets in prop::collection::vec(0.0f64..12.0, 1..8),
        pick in prop::collection::vec(0usize..5, 1..5),
        which in 0usize..3,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = (10.0 * FS) as usize;
        let labels: Vec<String> = (0..5).map(|c| format!("E{c}")).collect();
        let data = (0..5).map(|_| noise(&mut r, n)).collect();
        let signal = MultiChannelSignal::new(labels.clone(), data, FS).unwrap();
        let mut onsets = onsets;
        onsets.sort_by(f64::total_cmp);
        let events: Vec<MovementEvent> = onsets
            .iter()
            .enumerate()
            .map(|(k, &t)| MovementEvent {
                onset_s: t,
                duration_s: 0.1,
                side: if k % 2 == 0 { Side::Left } else { Side::Right },
            })
            .collect();
        let mut seen = [false; 5];
        let pick: Vec<usize> = pick.into_iter().filter(|&i| !std::mem::replace(&mut seen[i], true)).collect();
        let wanted: Vec<String> = pick.iter().map(|&i| labels[i].clone()).collect();
        let analysis = AnalysisType::ALL[which];

        let direct = extract_epochs(&signal.select_channels(&wanted).unwrap(), &events, analysis);
        let full = extract_epochs(&signal, &events, analysis);
        prop_assert_eq!(direct.epochs.len() + direct.skipped.len(), events.len());
        prop_assert_eq!(&direct.skipped, &full.skipped);
        prop_assert_eq!(direct.epochs.len(), full.epochs.len());
        for (d, f) in direct.epochs.iter().zip(&full.epochs) {
            let selected: Vec<Vec<f64>> = pick.iter().map(|&i| f.data[i].clone()).collect();
            prop_assert_eq!(&d.data, &selected);
            prop_assert!(d.start_sample + d.n_samples() <= n);
        }
    }
}

// ---- features --------------------------------------------------------------

fn loop_stats(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut mean, mut power, mut energy) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..a.nrows() {
        let mut s = 0.0;
        let mut e = 0.0;
        for j in 0..a.ncols() {
            s += a[(i, j)];
            e += a[(i, j)] * a[(i, j)];
        }
        mean.push(s / a.ncols() as f64);
        energy.push(e);
        power.push(e / a.ncols() as f64);
    }
    (mean, power, energy)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stats_match_loop_oracle(rows in 1usize..9, cols in 1usize..400, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| scale * r.random_range(-1.0..1.0));
        let s = compute_stats(&a).unwrap();
        let (mean, power, energy) = loop_stats(&a);
        prop_assert_eq!(s.n_samples, cols);
        for i in 0..rows {
            prop_assert!((s.mean[i] - mean[i]).abs() <= 1e-12 * scale);
            prop_assert!(close(s.power[i], power[i], 1e-12));
            prop_assert!(close(s.energy[i], energy[i], 1e-12));
            prop_assert!(close(s.power[i] * cols as f64, s.energy[i], 1e-9));
        }
    }

    #[test]
    fn normalization_is_monotone_and_idempotent(
        rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..30),
    ) {
        let norm = Normalization::fit(&rows).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| norm.apply(r)).collect();
        let again = Normalization::fit(&scaled).unwrap();
        for j in 0..4 {
            let constant = norm.max[j] == norm.min[j];
            for b in &scaled {
                prop_assert!(b[j] >= NORM_LOW - 1e-12 && b[j] <= NORM_HIGH + 1e-12);
            }
            if !constant {
                let lo = scaled.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                let hi = scaled.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((lo - NORM_LOW).abs() <= 1e-12 && (hi - NORM_HIGH).abs() <= 1e-12);
                for (ra, sa) in rows.iter().zip(&scaled) {
                    for (rb, sb) in rows.iter().zip(&scaled) {
                        if ra[j] < rb[j] {
                            prop_assert!(sa[j] < sb[j]);
                        }
                    }
                }
                for s in &scaled {
                    prop_assert!((again.apply_value(j, s[j]) - s[j]).abs() <= 1e-12);
                }
            }
        }
    }
}

// ---- splits ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_the_rows(
        sides in prop::collection::vec(any::<bool>(), 10..120),
        seed in any::<u64>(),
        stratified in any::<bool>(),
    ) {
        let labels: Vec<Side> = sides.iter().map(|&b| if b { Side::Left } else { Side::Right }).collect();
        let n_left = labels.iter().filter(|s| **s == Side::Left).count();
        prop_assume!(n_left >= 2 && labels.len() - n_left >= 2);
        let mode = if stratified { SplitMode::Stratified } else { SplitMode::Unstratified };
        let plan = SplitPlan::new(&labels, seed, mode, 5, 0.8).unwrap();
        let n = labels.len();
        let n_train = (0.8 * n as f64 + 0.5).floor() as usize;
        prop_assert_eq!(plan.splits.len(), 5);
        for s in &plan.splits {
            prop_assert_eq!(s.train.len(), n_train);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if stratified {
                let left = s.train.iter().filter(|&&i| labels[i] == Side::Left).count() as f64;
                let want = n_left as f64 * n_train as f64 / n as f64;
                prop_assert!((left - want).abs() <= 1.0, "left {left} want {want}");
            }
        }
        prop_assert_eq!(SplitPlan::new(&labels, seed, mode, 5, 0.8).unwrap(), plan);
    }
}
