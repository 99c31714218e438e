//! Butterworth and notch IIR design, realized as cascaded biquads.
//!
//! Analog Butterworth prototypes are frequency-transformed and mapped with a
//! prewarped bilinear transform. Poles are paired conjugate-wise into
//! second-order sections; the overall gain is normalized to unity at DC
//! (lowpass), Nyquist (highpass) or the geometric band centre (bandpass).

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 8;
pub const DEFAULT_NOTCH_Q: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Notch { q: f64 },
}

/// One biquad: `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z_inv * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub edges: Vec<f64>,
    pub order: usize,
    pub fs: f64,
    pub sections: Vec<Biquad>,
}

impl FilterSpec {
    /// Designs a filter.
    ///
    /// `order` is the Butterworth prototype order; a bandpass of order `n`
    /// has `n` sections. A bandpass whose upper edge is at or above Nyquist
    /// is realized as a highpass at its lower edge, since the band above
    /// Nyquist does not exist in the sampled signal. Notch filters are a
    /// single biquad and require `order == 2`.
    pub fn design(kind: FilterKind, edges: &[f64], order: usize, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::FilterDesign(format!("invalid sampling rate {fs}")));
        }
        let nyquist = fs / 2.0;
        let expect = match kind {
            FilterKind::Bandpass => 2,
            _ => 1,
        };
        if edges.len() != expect {
            return Err(Error::FilterDesign(format!(
                "{kind:?} needs {expect} edge(s), got {}",
                edges.len()
            )));
        }
        if edges.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::FilterDesign(format!("edges must be positive: {edges:?}")));
        }
        if expect == 2 && edges[0] >= edges[1] {
            return Err(Error::FilterDesign(format!(
                "edges must be strictly increasing: {edges:?}"
            )));
        }
        if edges[0] >= nyquist {
            return Err(Error::FilterDesign(format!(
                "edge {} Hz is at or above Nyquist ({nyquist} Hz)",
                edges[0]
            )));
        }
        let sections = match kind {
            FilterKind::Notch { q } => {
                if order != 2 {
                    return Err(Error::FilterDesign(format!(
                        "notch is a single biquad (order 2), got order {order}"
                    )));
                }
                if !(q.is_finite() && q > 0.0) {
                    return Err(Error::FilterDesign(format!("invalid notch Q {q}")));
                }
                vec![notch(edges[0], q, fs)]
            }
            _ => {
                if !(1..=MAX_ORDER).contains(&order) {
                    return Err(Error::FilterDesign(format!(
                        "order {order} outside supported range 1..={MAX_ORDER}"
                    )));
                }
                match kind {
                    FilterKind::Lowpass => butterworth(Band::Low(edges[0]), order, fs),
                    FilterKind::Highpass => butterworth(Band::High(edges[0]), order, fs),
                    FilterKind::Bandpass if edges[1] >= nyquist => {
                        butterworth(Band::High(edges[0]), order, fs)
                    }
                    FilterKind::Bandpass => {
                        butterworth(Band::Pass(edges[0], edges[1]), order, fs)
                    }
                    FilterKind::Notch { .. } => unreachable!(),
                }
            }
        };
        let spec = FilterSpec {
            kind,
            edges: edges.to_vec(),
            order,
            fs,
            sections,
        };
        if !spec.is_stable() {
            return Err(Error::FilterDesign(format!(
                "design produced an unstable filter ({kind:?} {edges:?} order {order})"
            )));
        }
        Ok(spec)
    }

    pub fn bandpass(low: f64, high: f64, order: usize, fs: f64) -> Result<Self> {
        Self::design(FilterKind::Bandpass, &[low, high], order, fs)
    }

    pub fn lowpass(edge: f64, order: usize, fs: f64) -> Result<Self> {
        Self::design(FilterKind::Lowpass, &[edge], order, fs)
    }

    pub fn notch(freq: f64, q: f64, fs: f64) -> Result<Self> {
        Self::design(FilterKind::Notch { q }, &[freq], 2, fs)
    }

    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * PI * freq / self.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq: f64) -> f64 {
        self.response(freq).norm()
    }

    pub fn magnitude_db(&self, freq: f64) -> f64 {
        20.0 * self.magnitude(freq).max(1e-300).log10()
    }

    pub fn poles(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.sections.iter().flat_map(|s| s.poles())
    }

    pub fn is_stable(&self) -> bool {
        self.poles().all(|p| p.norm() < 1.0)
    }

    /// Edge-padding length used by zero-phase filtering.
    pub fn warmup_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }
}

enum Band {
    Low(f64),
    High(f64),
    Pass(f64, f64),
}

fn notch(freq: f64, q: f64, fs: f64) -> Biquad {
    let w0 = 2.0 * PI * freq / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b: [1.0 / a0, -2.0 * cos / a0, 1.0 / a0],
        a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
    }
}

fn butterworth(band: Band, order: usize, fs: f64) -> Vec<Biquad> {
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let prototype: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let (analog_poles, zero_pair, ref_freq): (Vec<Complex64>, [f64; 3], f64) = match band {
        Band::Low(f) => {
            let wc = warp(f);
            (prototype.iter().map(|p| *p * wc).collect(), [1.0, 2.0, 1.0], 0.0)
        }
        Band::High(f) => {
            let wc = warp(f);
            (
                prototype.iter().map(|p| wc / *p).collect(),
                [1.0, -2.0, 1.0],
                fs / 2.0,
            )
        }
        Band::Pass(lo, hi) => {
            let (wl, wh) = (warp(lo), warp(hi));
            let bw = wh - wl;
            let w0_sq = wl * wh;
            let mut poles = Vec::with_capacity(2 * order);
            for p in &prototype {
                let pb = *p * bw;
                let disc = (pb * pb - 4.0 * w0_sq).sqrt();
                poles.push((pb + disc) / 2.0);
                poles.push((pb - disc) / 2.0);
            }
            // Digital frequency that the analog band centre maps to.
            let centre = fs / PI * (w0_sq.sqrt() / (2.0 * fs)).atan();
            (poles, [1.0, 0.0, -1.0], centre)
        }
    };

    let bilinear = |s: Complex64| (2.0 * fs + s) / (2.0 * fs - s);
    let digital: Vec<Complex64> = analog_poles.into_iter().map(bilinear).collect();

    let mut sections = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for p in &digital {
        if p.im > 1e-12 {
            sections.push(Biquad {
                b: zero_pair,
                a: [-2.0 * p.re, p.norm_sqr()],
            });
        } else if p.im.abs() <= 1e-12 {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| b.total_cmp(a));
    for pair in reals.chunks(2) {
        match *pair {
            [r1, r2] => sections.push(Biquad {
                b: zero_pair,
                a: [-(r1 + r2), r1 * r2],
            }),
            [r] => {
                // First-order section: one zero at the band's stop point.
                let b = match band {
                    Band::Low(_) => [1.0, 1.0, 0.0],
                    _ => [1.0, -1.0, 0.0],
                };
                sections.push(Biquad { b, a: [-r, 0.0] });
            }
            _ => unreachable!(),
        }
    }

    let w = 2.0 * PI * ref_freq / fs;
    let z_inv = Complex64::from_polar(1.0, -w);
    let gain = sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
        .norm();
    if let Some(first) = sections.first_mut() {
        for b in &mut first.b {
            *b /= gain;
        }
    }
    sections
}
