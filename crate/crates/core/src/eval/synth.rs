//! Synthetic executed-fist recordings with planted, lateralized motor
//! responses. Class structure exists only through `erd_depth`, so the
//! generator doubles as an end-to-end oracle and a null control.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::grid::derive_seed;
use crate::dsp::MOTOR_MONTAGE;
use crate::edf::writer::{encode_edf, EdfContent};
use crate::edf::{parse_record, Annotation, RawRecord, RecordId, Side, EXECUTED_FIST_RUNS};
use crate::error::{Error, Result};

/// Labels as they appear in the dataset's headers.
const RAW_LABELS: [&str; 8] = ["Fc3.", "Fcz.", "Fc4.", "C3..", "C1..", "Cz..", "C2..", "C4.."];

/// Scalp projection of the left and right motor cortex, in montage order.
const LEFT_MOTOR: [f64; 8] = [0.5, 0.15, 0.0, 1.0, 0.7, 0.3, 0.1, 0.0];
const RIGHT_MOTOR: [f64; 8] = [0.0, 0.15, 0.5, 0.0, 0.1, 0.3, 0.7, 1.0];

const REST_S: f64 = 4.2;
const TASK_S: f64 = 4.1;
const RAMP_S: f64 = 0.25;
const MU_HZ: f64 = 10.0;
const BACKGROUND_SOURCES: usize = 6;
/// Bandwidth (Hz) of the background amplitude envelopes.
const ENVELOPE_HZ: f64 = 1.0;
/// Background bands as (low Hz, high Hz, envelope log-scale spread). The
/// slow band stays Gaussian so that slow-potential power is not swamped by
/// envelope bursts.
const BACKGROUND_BANDS: [(f64, f64, f64); 3] = [(0.0, 4.0, 0.0), (4.0, 30.0, 1.0), (30.0, f64::INFINITY, 1.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: u16,
    /// Executed-fist runs per subject, at most three.
    pub n_runs: usize,
    pub events_per_run: usize,
    pub fs: usize,
    /// RMS of each mu rhythm at rest (µV).
    pub mu_amplitude: f64,
    /// Fraction by which contralateral mu power drops before movement.
    pub erd_depth: f64,
    /// RMS of the background activity per channel (µV).
    pub noise_level: f64,
    /// Peak pre-movement negativity at full depth (µV).
    pub mrcp_amplitude: f64,
    pub line_amplitude: f64,
    pub line_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 6,
            n_runs: 3,
            events_per_run: 15,
            fs: 160,
            mu_amplitude: 10.0,
            erd_depth: 0.6,
            noise_level: 2.5,
            mrcp_amplitude: 8.0,
            line_amplitude: 2.0,
            line_hz: 50.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if !(0.0..1.0).contains(&self.erd_depth) {
            return bad(format!("erd_depth must lie in [0, 1), got {}", self.erd_depth));
        }
        if self.n_subjects == 0 || self.n_subjects > crate::edf::N_SUBJECTS {
            return bad(format!("n_subjects must be 1..=109, got {}", self.n_subjects));
        }
        if self.n_runs == 0 || self.n_runs > EXECUTED_FIST_RUNS.len() {
            return bad(format!("n_runs must be 1..=3, got {}", self.n_runs));
        }
        if self.events_per_run < 2 {
            return bad("need at least two events per run".into());
        }
        let highest = if self.line_amplitude > 0.0 { self.line_hz.max(30.0) } else { 30.0 };
        if (self.fs as f64) <= 2.0 * highest {
            return bad(format!("fs {} Hz does not exceed twice {highest} Hz", self.fs));
        }
        for (name, v) in [
            ("mu_amplitude", self.mu_amplitude),
            ("noise_level", self.noise_level),
            ("mrcp_amplitude", self.mrcp_amplitude),
            ("line_amplitude", self.line_amplitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn record_ids(&self) -> Vec<RecordId> {
        (1..=self.n_subjects)
            .flat_map(|subject| {
                EXECUTED_FIST_RUNS[..self.n_runs]
                    .iter()
                    .map(move |&run| RecordId { subject, run })
            })
            .collect()
    }

    fn duration_s(&self) -> usize {
        (REST_S + self.events_per_run as f64 * (REST_S + TASK_S)).ceil() as usize
    }
}

/// Per-subject anatomy shared by that subject's runs.
struct Subject {
    background: Vec<[f64; BACKGROUND_SOURCES]>,
    motor: [[f64; 8]; 2],
    mu_hz: [f64; 2],
    line_gain: [f64; 8],
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

impl Subject {
    fn draw(spec: &SynthSpec, subject: u16) -> Subject {
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[subject as u64]));
        let scale = spec.noise_level / (BACKGROUND_SOURCES as f64).sqrt();
        let background = (0..8)
            .map(|_| std::array::from_fn(|_| gauss(&mut r) * scale))
            .collect();
        let mut jitter = |p: &[f64; 8]| std::array::from_fn(|c| p[c] * r.random_range(0.8..1.2));
        let motor = [jitter(&LEFT_MOTOR), jitter(&RIGHT_MOTOR)];
        let mu_hz = [MU_HZ + r.random_range(-0.5..0.5), MU_HZ + r.random_range(-0.5..0.5)];
        let line_gain = std::array::from_fn(|_| r.random_range(0.5..1.0));
        Subject {
            background,
            motor,
            mu_hz,
            line_gain,
        }
    }
}

/// Noise with a 1/f power spectrum (flat below 1 Hz) restricted to `[lo, hi)` Hz.
fn pink_band(n: usize, fs: f64, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(gauss(r), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if k == 0 || f < lo || f >= hi {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z /= f.max(1.0).sqrt();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Unit-RMS pink background source. Each band carries its own slow
/// amplitude envelope, so the source is bursty rather than Gaussian while
/// power fluctuations stay independent between bands.
fn background_source(n: usize, fs: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (lo, hi, sigma) in BACKGROUND_BANDS {
        let band = pink_band(n, fs, lo, hi, r);
        let env = envelope(n, fs, sigma, r);
        for ((x, v), e) in x.iter_mut().zip(&band).zip(&env) {
            *x += v * e;
        }
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(f64::MIN_POSITIVE);
    x.into_iter().map(|v| v / rms).collect()
}

/// Unit-RMS log-normal amplitude envelope varying below `ENVELOPE_HZ`.
/// Modulating the background makes it bursty rather than Gaussian.
fn envelope(n: usize, fs: f64, sigma: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(gauss(r), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if k == 0 || f > ENVELOPE_HZ {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let sd = (buf.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64).sqrt().max(f64::MIN_POSITIVE);
    let e: Vec<f64> = buf.iter().map(|z| (sigma * z.re / sd).exp()).collect();
    let rms = (e.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    e.into_iter().map(|v| v / rms).collect()
}

/// 1 inside `[a, b]`, raised-cosine ramps of `RAMP_S` outside it, 0 beyond.
fn window(t: f64, a: f64, b: f64) -> f64 {
    if t >= a && t <= b {
        1.0
    } else if t > a - RAMP_S && t < a {
        0.5 - 0.5 * (PI * (t - a + RAMP_S) / RAMP_S).cos()
    } else if t > b && t < b + RAMP_S {
        0.5 + 0.5 * (PI * (t - b) / RAMP_S).cos()
    } else {
        0.0
    }
}

/// Pre-movement negativity that peaks at onset and recovers within 0.5 s.
fn mrcp_shape(tau: f64) -> f64 {
    if (-2.0..=0.0).contains(&tau) {
        -(0.25 * PI * (tau + 2.0)).sin().powi(2)
    } else if tau > 0.0 && tau < 0.5 {
        -(PI * tau).cos().powi(2)
    } else {
        0.0
    }
}

/// Hemisphere contralateral to the moving hand: 0 left motor, 1 right motor.
fn contralateral(side: Side) -> usize {
    match side {
        Side::Left => 1,
        Side::Right => 0,
    }
}

/// Shuffled sides with the odd event, if any, going left on even-numbered
/// records and right on odd ones, so that over a run set the per-side event
/// count carries no side information.
fn event_sides(n: usize, record_no: usize, r: &mut ChaCha8Rng) -> Vec<Side> {
    let n_left = if record_no % 2 == 0 { n - n / 2 } else { n / 2 };
    let mut sides: Vec<Side> = (0..n)
        .map(|i| if i < n_left { Side::Left } else { Side::Right })
        .collect();
    sides.shuffle(r);
    sides
}

fn synth_run(spec: &SynthSpec, subject: &Subject, id: RecordId, record_no: usize) -> Result<Vec<u8>> {
    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[id.subject as u64, id.run as u64]));
    let fs = spec.fs as f64;
    let n = spec.duration_s() * spec.fs;
    let sides = event_sides(spec.events_per_run, record_no, &mut r);
    let onsets: Vec<f64> = (0..sides.len())
        .map(|k| REST_S + k as f64 * (REST_S + TASK_S))
        .collect();

    let mut data = vec![vec![0.0; n]; 8];
    for b in 0..BACKGROUND_SOURCES {
        let s = background_source(n, fs, &mut r);
        for (c, row) in data.iter_mut().enumerate() {
            let w = subject.background[c][b];
            for (x, v) in row.iter_mut().zip(&s) {
                *x += w * v;
            }
        }
    }

    let depth = spec.erd_depth;
    let (erd_gain, ers_gain) = ((1.0 - depth).sqrt() - 1.0, (1.0 + depth).sqrt() - 1.0);
    for h in 0..2 {
        let mut phase = r.random_range(0.0..2.0 * PI);
        let drift_phase = r.random_range(0.0..2.0 * PI);
        let events: Vec<f64> = onsets
            .iter()
            .zip(&sides)
            .filter(|(_, s)| contralateral(**s) == h)
            .map(|(o, _)| *o)
            .collect();
        for i in 0..n {
            let t = i as f64 / fs;
            phase += 2.0 * PI * subject.mu_hz[h] / fs + 0.05 * gauss(&mut r);
            let slow = 1.0 + 0.2 * (2.0 * PI * 0.07 * t + drift_phase).sin();
            let mut gain = 1.0;
            for &o in &events {
                gain += erd_gain * window(t - o, -2.0, 0.0) + ers_gain * window(t - o, TASK_S, TASK_S + 1.0);
            }
            let v = spec.mu_amplitude * std::f64::consts::SQRT_2 * slow * gain * phase.sin();
            for (c, row) in data.iter_mut().enumerate() {
                row[i] += subject.motor[h][c] * v;
            }
        }
    }

    let mrcp = spec.mrcp_amplitude * depth;
    if mrcp > 0.0 {
        for (&o, &side) in onsets.iter().zip(&sides) {
            let pattern = subject.motor[contralateral(side)];
            let first = ((o - 2.0) * fs).floor().max(0.0) as usize;
            let last = (((o + 0.5) * fs).ceil() as usize).min(n);
            for i in first..last {
                let v = mrcp * mrcp_shape(i as f64 / fs - o);
                for (c, row) in data.iter_mut().enumerate() {
                    row[i] += pattern[c] * v;
                }
            }
        }
    }

    let line_phase = r.random_range(0.0..2.0 * PI);
    for (c, row) in data.iter_mut().enumerate() {
        let sensor = 0.05 * spec.noise_level;
        let gain = spec.line_amplitude * subject.line_gain[c];
        for (i, x) in row.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *x += sensor * gauss(&mut r) + gain * (2.0 * PI * spec.line_hz * t + line_phase).sin();
        }
    }

    let mut annotations = vec![Annotation {
        onset_s: 0.0,
        duration_s: Some(REST_S),
        label: "T0".into(),
    }];
    for (&o, &side) in onsets.iter().zip(&sides) {
        annotations.push(Annotation {
            onset_s: o,
            duration_s: Some(TASK_S),
            label: match side {
                Side::Left => "T1".into(),
                Side::Right => "T2".into(),
            },
        });
        annotations.push(Annotation {
            onset_s: o + TASK_S,
            duration_s: Some(REST_S),
            label: "T0".into(),
        });
    }

    encode_edf(&EdfContent {
        patient_id: format!("S{:03} X X synthetic", id.subject),
        recording_id: format!("Startdate 12-AUG-2009 X X {id}"),
        fs: spec.fs,
        channels: RAW_LABELS
            .iter()
            .map(|l| l.to_string())
            .zip(data)
            .collect(),
        annotations,
    })
}

/// Encoded EDF+ files, one per (subject, run), in subject-major order.
pub fn synth_edf(spec: &SynthSpec) -> Result<Vec<(RecordId, Vec<u8>)>> {
    spec.validate()?;
    debug_assert_eq!(RAW_LABELS.len(), MOTOR_MONTAGE.len());
    let mut out = Vec::new();
    for subject_no in 1..=spec.n_subjects {
        let subject = Subject::draw(spec, subject_no);
        for id in spec.record_ids().into_iter().filter(|id| id.subject == subject_no) {
            let record_no = out.len();
            out.push((id, synth_run(spec, &subject, id, record_no)?));
        }
    }
    Ok(out)
}

/// Synthetic records as the parser sees them.
pub fn synth_generate(spec: &SynthSpec) -> Result<Vec<(RecordId, RawRecord)>> {
    synth_edf(spec)?
        .into_iter()
        .map(|(id, bytes)| Ok((id, parse_record(&bytes)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::normalize_label;

    fn small() -> SynthSpec {
        SynthSpec {
            n_subjects: 1,
            n_runs: 1,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn records_parse_with_planted_events() {
        let recs = synth_generate(&small()).unwrap();
        assert_eq!(recs.len(), 1);
        let (id, rec) = &recs[0];
        assert_eq!(*id, RecordId { subject: 1, run: 3 });
        assert_eq!(rec.fs, 160.0);
        let labels: Vec<String> = rec.channels.iter().map(|c| normalize_label(&c.label)).collect();
        assert_eq!(labels, MOTOR_MONTAGE);
        assert_eq!(rec.events.len(), 15);
        let left = rec.events.iter().filter(|e| e.side == Side::Left).count();
        assert!(left == 7 || left == 8);
        assert!((rec.events[1].onset_s - 12.5).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_edf(&small()).unwrap();
        let b = synth_edf(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_edf(&SynthSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn window_ramps_are_continuous() {
        assert_eq!(window(-1.0, -2.0, 0.0), 1.0);
        assert!((window(-2.0 - RAMP_S + 1e-9, -2.0, 0.0)).abs() < 1e-6);
        assert!((window(RAMP_S - 1e-9, -2.0, 0.0)).abs() < 1e-6);
        assert!((window(0.5 * RAMP_S, -2.0, 0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SynthSpec { erd_depth: 1.0, ..small() }.validate().is_err());
        assert!(SynthSpec { fs: 90, ..small() }.validate().is_err());
        assert!(SynthSpec { n_runs: 4, ..small() }.validate().is_err());
    }
}
