//! Event-locked epochs for the ERD, ERS and MRCP analyses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{FilterKind, FilterMode, FilterSpec, MultiChannelSignal};
use crate::edf::{MovementEvent, RecordId, Side};
use crate::error::{Error, Result};

/// Rhythm-isolation filter order.
pub const RHYTHM_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisType {
    Erd,
    Ers,
    Mrcp,
}

impl AnalysisType {
    pub const ALL: [AnalysisType; 3] = [AnalysisType::Erd, AnalysisType::Ers, AnalysisType::Mrcp];

    /// Window relative to event onset, in seconds.
    pub fn window_s(self) -> (f64, f64) {
        match self {
            AnalysisType::Erd | AnalysisType::Mrcp => (-2.0, 0.0),
            AnalysisType::Ers => (4.1, 5.1),
        }
    }

    /// Numeric code used in the feature matrix.
    pub fn code(self) -> f64 {
        match self {
            AnalysisType::Erd => 1.0,
            AnalysisType::Ers => 2.0,
            AnalysisType::Mrcp => 3.0,
        }
    }

    pub fn rhythm_filter(self, fs: f64) -> Result<FilterSpec> {
        match self {
            AnalysisType::Erd | AnalysisType::Ers => {
                FilterSpec::design(FilterKind::Bandpass, &[8.0, 30.0], RHYTHM_ORDER, fs)
            }
            AnalysisType::Mrcp => FilterSpec::design(FilterKind::Lowpass, &[3.0], RHYTHM_ORDER, fs),
        }
    }

    /// Samples per epoch at `fs`.
    pub fn window_len(self, fs: f64) -> usize {
        let (start, end) = self.window_s();
        round_half_up((end - start) * fs) as usize
    }
}

impl fmt::Display for AnalysisType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnalysisType::Erd => "ERD",
            AnalysisType::Ers => "ERS",
            AnalysisType::Mrcp => "MRCP",
        })
    }
}

impl FromStr for AnalysisType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "erd" => Ok(AnalysisType::Erd),
            "ers" => Ok(AnalysisType::Ers),
            "mrcp" => Ok(AnalysisType::Mrcp),
            other => Err(Error::Config(format!("unknown analysis {other:?} (erd, ers, mrcp)"))),
        }
    }
}

pub(crate) fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    /// Channels × samples, in the signal's channel order.
    pub data: Vec<Vec<f64>>,
    pub side: Side,
    pub analysis: AnalysisType,
    pub event_index: usize,
    pub event: MovementEvent,
    pub start_sample: usize,
    pub fs: f64,
}

impl Epoch {
    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEvent {
    pub event_index: usize,
    pub onset_s: f64,
    pub window_start_sample: i64,
    pub window_end_sample: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub epochs: Vec<Epoch>,
    pub skipped: Vec<SkippedEvent>,
}

/// One epoch per event whose window lies inside the signal. Windows that
/// cross either edge are reported in `skipped`.
pub fn extract_epochs(
    signal: &MultiChannelSignal,
    events: &[MovementEvent],
    analysis: AnalysisType,
) -> Extraction {
    let fs = signal.fs;
    let (offset, _) = analysis.window_s();
    let width = analysis.window_len(fs) as i64;
    let n = signal.n_samples() as i64;
    let mut out = Extraction::default();
    for (event_index, event) in events.iter().enumerate() {
        let start = round_half_up(event.onset_s * fs) + round_half_up(offset * fs);
        let end = start + width;
        if start < 0 || end > n {
            out.skipped.push(SkippedEvent {
                event_index,
                onset_s: event.onset_s,
                window_start_sample: start,
                window_end_sample: end,
            });
            continue;
        }
        let (s, e) = (start as usize, end as usize);
        out.epochs.push(Epoch {
            data: signal.data.iter().map(|ch| ch[s..e].to_vec()).collect(),
            side: event.side,
            analysis,
            event_index,
            event: *event,
            start_sample: s,
            fs,
        });
    }
    out
}

/// Epochs of one run sharing side and analysis type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochedDataset {
    pub record: RecordId,
    pub analysis: AnalysisType,
    pub side: Side,
    pub labels: Vec<String>,
    pub fs: f64,
    pub epochs: Vec<Epoch>,
}

impl EpochedDataset {
    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    pub fn total_samples(&self) -> usize {
        self.epochs.iter().map(Epoch::n_samples).sum()
    }

    /// Channels × (all epochs concatenated in order).
    pub fn concatenated(&self) -> Vec<Vec<f64>> {
        (0..self.n_channels())
            .map(|c| {
                self.epochs
                    .iter()
                    .flat_map(|e| e.data[c].iter().copied())
                    .collect()
            })
            .collect()
    }
}

/// Splits epochs by side, keeping their order. Both sides must be present.
pub fn group_by_side(
    record: RecordId,
    labels: &[String],
    epochs: Vec<Epoch>,
) -> Result<(EpochedDataset, EpochedDataset)> {
    let first = epochs
        .first()
        .ok_or(Error::EmptySide(Side::Left))?;
    let (analysis, fs) = (first.analysis, first.fs);
    if epochs.iter().any(|e| e.analysis != analysis) {
        return Err(Error::InvalidInput("epochs mix analysis types".into()));
    }
    let (left, right): (Vec<Epoch>, Vec<Epoch>) =
        epochs.into_iter().partition(|e| e.side == Side::Left);
    let make = |side, epochs: Vec<Epoch>| {
        if epochs.is_empty() {
            return Err(Error::EmptySide(side));
        }
        Ok(EpochedDataset {
            record,
            analysis,
            side,
            labels: labels.to_vec(),
            fs,
            epochs,
        })
    };
    Ok((make(Side::Left, left)?, make(Side::Right, right)?))
}

/// Applies the analysis' rhythm filter (zero-phase) to every epoch.
pub fn isolate_rhythm(dataset: &EpochedDataset) -> Result<EpochedDataset> {
    let spec = dataset.analysis.rhythm_filter(dataset.fs)?;
    let mut out = dataset.clone();
    for epoch in &mut out.epochs {
        for ch in &mut epoch.data {
            *ch = spec.filter(ch, FilterMode::ZeroPhase)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn signal(n: usize) -> MultiChannelSignal {
        MultiChannelSignal::new(
            vec!["C3".into(), "C4".into()],
            vec![(0..n).map(|i| i as f64).collect(), (0..n).map(|i| -(i as f64)).collect()],
            160.0,
        )
        .unwrap()
    }

    fn ev(onset_s: f64, side: Side) -> MovementEvent {
        MovementEvent {
            onset_s,
            duration_s: 4.1,
            side,
        }
    }

    #[test]
    fn window_lengths() {
        assert_eq!(AnalysisType::Erd.window_len(160.0), 320);
        assert_eq!(AnalysisType::Ers.window_len(160.0), 160);
        assert_eq!(AnalysisType::Mrcp.window_len(160.0), 320);
    }

    #[test]
    fn extraction_indices_and_skips() {
        let s = signal(160 * 20);
        let events = [ev(1.0, Side::Left), ev(5.0, Side::Right), ev(16.0, Side::Left)];
        let erd = extract_epochs(&s, &events, AnalysisType::Erd);
        assert_eq!(erd.epochs.len(), 2);
        assert_eq!(erd.skipped.len(), 1);
        assert_eq!(erd.skipped[0].event_index, 0);
        assert_eq!(erd.epochs[0].start_sample, 480);
        assert_eq!(erd.epochs[0].data[0][0], 480.0);
        assert_eq!(erd.epochs[0].n_samples(), 320);

        // ERS of the event at 16 s ends at 21.1 s, beyond the 20 s record.
        let ers = extract_epochs(&s, &events, AnalysisType::Ers);
        assert_eq!(ers.epochs.len(), 2);
        assert_eq!(ers.skipped[0].event_index, 2);
        assert_eq!(ers.epochs[0].start_sample, 160 + 656);
    }

    #[test]
    fn round_half_up_on_ties() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(-2.5), -2);
        assert_eq!(round_half_up(656.0), 656);
        // 0.503125 s * 160 Hz = 80.5 samples rounds up.
        let s = signal(2000);
        let e = extract_epochs(&s, &[ev(2.503125, Side::Left)], AnalysisType::Erd);
        assert_eq!(e.epochs[0].start_sample, 401 - 320);
    }

    #[test]
    fn grouping_preserves_order() {
        let s = signal(160 * 30);
        let events: Vec<_> = (0..6)
            .map(|i| ev(3.0 + 4.0 * i as f64, if i % 2 == 0 { Side::Left } else { Side::Right }))
            .collect();
        let x = extract_epochs(&s, &events, AnalysisType::Erd);
        let (l, r) = group_by_side(RecordId { subject: 1, run: 3 }, &s.labels, x.epochs).unwrap();
        assert_eq!(l.epochs.iter().map(|e| e.event_index).collect::<Vec<_>>(), [0, 2, 4]);
        assert_eq!(r.epochs.iter().map(|e| e.event_index).collect::<Vec<_>>(), [1, 3, 5]);
        assert_eq!(l.total_samples(), 960);
    }

    #[test]
    fn grouping_requires_both_sides() {
        let s = signal(160 * 30);
        let x = extract_epochs(&s, &[ev(3.0, Side::Left), ev(8.0, Side::Left)], AnalysisType::Erd);
        let err = group_by_side(RecordId { subject: 1, run: 3 }, &s.labels, x.epochs).unwrap_err();
        assert!(matches!(err, Error::EmptySide(Side::Right)));
    }

    fn dft_power(x: &[f64], bin: usize) -> f64 {
        let n = x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * bin as f64 * t as f64 / n;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        re * re + im * im
    }

    fn two_tone(analysis: AnalysisType, f_keep: f64, f_stop: f64) -> (f64, f64) {
        let n = analysis.window_len(160.0);
        let tone = |f: f64| -> Vec<f64> { (0..n).map(|t| (2.0 * PI * f * t as f64 / 160.0).sin()).collect() };
        let (keep, stop) = (tone(f_keep), tone(f_stop));
        let mixed: Vec<f64> = keep.iter().zip(&stop).map(|(a, b)| a + b).collect();
        let epoch = Epoch {
            data: vec![mixed],
            side: Side::Left,
            analysis,
            event_index: 0,
            event: ev(3.0, Side::Left),
            start_sample: 0,
            fs: 160.0,
        };
        let ds = EpochedDataset {
            record: RecordId { subject: 1, run: 3 },
            analysis,
            side: Side::Left,
            labels: vec!["C3".into()],
            fs: 160.0,
            epochs: vec![epoch],
        };
        let out = isolate_rhythm(&ds).unwrap();
        let y = &out.epochs[0].data[0];
        let bin = |f: f64| (f * n as f64 / 160.0).round() as usize;
        let db = |before: f64, after: f64| 10.0 * (after / before).log10();
        (
            db(dft_power(&keep, bin(f_keep)), dft_power(y, bin(f_keep))),
            db(dft_power(&stop, bin(f_stop)), dft_power(y, bin(f_stop))),
        )
    }

    #[test]
    fn erd_two_tone() {
        let (keep, stop) = two_tone(AnalysisType::Erd, 10.0, 45.0);
        assert!(keep.abs() <= 1.0, "10 Hz changed by {keep} dB");
        assert!(stop <= -24.0, "45 Hz only {stop} dB");
    }

    #[test]
    fn mrcp_two_tone() {
        let (keep, stop) = two_tone(AnalysisType::Mrcp, 1.0, 20.0);
        assert!(keep.abs() <= 1.0, "1 Hz changed by {keep} dB");
        assert!(stop <= -24.0, "20 Hz only {stop} dB");
    }

    #[test]
    fn zero_epoch_stays_zero() {
        let ds = EpochedDataset {
            record: RecordId { subject: 1, run: 3 },
            analysis: AnalysisType::Ers,
            side: Side::Right,
            labels: vec!["C3".into()],
            fs: 160.0,
            epochs: vec![Epoch {
                data: vec![vec![0.0; 160]],
                side: Side::Right,
                analysis: AnalysisType::Ers,
                event_index: 0,
                event: ev(3.0, Side::Right),
                start_sample: 0,
                fs: 160.0,
            }],
        };
        assert!(isolate_rhythm(&ds).unwrap().epochs[0].data[0].iter().all(|v| *v == 0.0));
    }
}
