use serde::{Deserialize, Serialize};

use super::design::FilterSpec;
use super::signal::MultiChannelSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Causal,
    #[default]
    ZeroPhase,
}

impl FilterSpec {
    /// Causal cascade (transposed direct form II), zero initial state.
    pub fn filter_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            run_section(s.b, s.a, &mut y, [0.0, 0.0]);
        }
        y
    }

    /// Forward-backward filtering with odd extension of `warmup_len` samples
    /// at each edge and steady-state initial conditions.
    pub fn filter_zero_phase(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.warmup_len();
        let n = x.len();
        if n <= pad {
            return Err(Error::SignalTooShort {
                len: n,
                needed: pad + 1,
            });
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.steady_state();
        self.run_with_state(&mut ext, &zi);
        ext.reverse();
        self.run_with_state(&mut ext, &zi);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }

    pub fn filter(&self, x: &[f64], mode: FilterMode) -> Result<Vec<f64>> {
        match mode {
            FilterMode::Causal => Ok(self.filter_causal(x)),
            FilterMode::ZeroPhase => self.filter_zero_phase(x),
        }
    }

    /// Applies the filter to every channel.
    pub fn apply(&self, signal: &MultiChannelSignal, mode: FilterMode) -> Result<MultiChannelSignal> {
        if (self.fs - signal.fs).abs() > 1e-9 * self.fs {
            return Err(Error::SampleRateMismatch {
                filter: self.fs,
                signal: signal.fs,
            });
        }
        let data = signal
            .data
            .iter()
            .map(|ch| self.filter(ch, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiChannelSignal {
            labels: signal.labels.clone(),
            data,
            fs: signal.fs,
        })
    }

    /// Per-section state reached after a long unit-step input.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = s.dc_gain();
                let state = [level * (g - s.b[0]), level * (s.b[2] - s.a[1] * g)];
                level *= g;
                state
            })
            .collect()
    }

    fn run_with_state(&self, x: &mut [f64], unit_state: &[[f64; 2]]) {
        let x0 = x[0];
        for (s, zi) in self.sections.iter().zip(unit_state) {
            run_section(s.b, s.a, x, [zi[0] * x0, zi[1] * x0]);
        }
    }
}

fn run_section(b: [f64; 3], a: [f64; 2], x: &mut [f64], state: [f64; 2]) {
    let [mut z1, mut z2] = state;
    for v in x.iter_mut() {
        let input = *v;
        let y = b[0] * input + z1;
        z1 = b[1] * input - a[0] * y + z2;
        z2 = b[2] * input - a[1] * y;
        *v = y;
    }
}
