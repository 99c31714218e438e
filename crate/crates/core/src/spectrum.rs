//! Welch power spectral density and band-power summaries.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

#[derive(Debug, Clone)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

/// Hann-windowed Welch estimate with 50 % overlap. Segments are about
/// `seconds` long (rounded to a power of two) and never longer than `x`.
pub fn welch(x: &[f64], fs: f64, seconds: f64) -> Psd {
    let target = ((seconds * fs) as usize).max(8).next_power_of_two();
    let seg = if x.len() >= target {
        target
    } else {
        // Largest power of two that fits.
        let mut s = 1;
        while s * 2 <= x.len() {
            s *= 2;
        }
        s
    };
    if seg < 4 {
        return Psd {
            freqs: vec![],
            power: vec![],
        };
    }
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut power = vec![0.0; n_bins];
    let step = seg / 2;
    let mut count = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let norm = count.max(1) as f64;
    for p in &mut power {
        *p /= norm;
    }
    Psd {
        freqs: (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect(),
        power,
    }
}

impl Psd {
    fn total(&self) -> f64 {
        self.power.iter().skip(1).sum()
    }

    /// Share of non-DC power with frequency in `[lo, hi)`; zero for a silent signal.
    pub fn fraction(&self, lo: f64, hi: f64) -> f64 {
        let total = self.total();
        if total <= 0.0 {
            return 0.0;
        }
        let band: f64 = self
            .freqs
            .iter()
            .zip(&self.power)
            .skip(1)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| p)
            .sum();
        band / total
    }

    /// Least-squares slope of log10 power against log10 frequency over `[lo, hi]`.
    pub fn log_slope(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, p)| **f >= lo && **f <= hi && **f > 0.0 && **p > 0.0)
            .map(|(f, p)| (f.log10(), p.log10()))
            .collect();
        if pts.len() < 2 {
            return 0.0;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx == 0.0 {
            0.0
        } else {
            sxy / sxx
        }
    }
}
