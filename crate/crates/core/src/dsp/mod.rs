//! IIR filtering and channel handling.

mod apply;
mod design;
mod signal;

pub use apply::FilterMode;
pub use design::{Biquad, FilterKind, FilterSpec, DEFAULT_NOTCH_Q, MAX_ORDER};
pub use signal::{MultiChannelSignal, MOTOR_MONTAGE};

/// `(frequency Hz, magnitude dB)` on an evenly spaced grid over `[lo, hi]`.
pub fn response_table(spec: &FilterSpec, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let f = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (f, spec.magnitude_db(f))
        })
        .collect()
}
