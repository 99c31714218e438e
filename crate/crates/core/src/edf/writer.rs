//! Minimal EDF+C encoder for fixtures and synthetic records (1 s data records,
//! one shared sampling rate, 16-bit full-range quantization).

use super::annotations::{encode_tal, Annotation};
use super::header::{RecordHeader, SignalHeader, StartDateTime, ANNOTATION_LABEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EdfContent {
    pub patient_id: String,
    pub recording_id: String,
    /// Samples per second; also samples per data record.
    pub fs: usize,
    pub channels: Vec<(String, Vec<f64>)>,
    pub annotations: Vec<Annotation>,
}

const START: StartDateTime = StartDateTime {
    year: 2009,
    month: 8,
    day: 12,
    hour: 0,
    minute: 0,
    second: 0,
};

pub fn encode_edf(content: &EdfContent) -> Result<Vec<u8>> {
    let fs = content.fs;
    if fs == 0 {
        return Err(Error::InvalidInput("sampling rate must be positive".into()));
    }
    let n = content.channels.first().map_or(0, |c| c.1.len());
    if content.channels.iter().any(|c| c.1.len() != n) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    if n % fs != 0 {
        return Err(Error::InvalidInput(format!(
            "{n} samples is not a whole number of 1 s records at {fs} Hz"
        )));
    }
    let n_records = n / fs;

    // Record k carries its timekeeping TAL plus annotations with onset in [k, k+1).
    let mut tals: Vec<Vec<u8>> = (0..n_records.max(1))
        .map(|k| encode_tal(k as f64, None, &[]))
        .collect();
    for a in &content.annotations {
        let k = (a.onset_s.max(0.0).floor() as usize).min(tals.len() - 1);
        tals[k].extend(encode_tal(a.onset_s, a.duration_s, &[a.label.as_str()]));
    }
    let ann_spr = tals.iter().map(|t| t.len().div_ceil(2)).max().unwrap_or(1).max(1);

    let mut signals = Vec::with_capacity(content.channels.len() + 1);
    for (label, samples) in &content.channels {
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let peak = if peak > 0.0 { peak } else { 1.0 };
        signals.push(SignalHeader::new(
            label,
            "uV",
            (-peak, peak),
            (-32768, 32767),
            fs,
        ));
    }
    signals.push(SignalHeader::new(
        ANNOTATION_LABEL,
        "",
        (-1.0, 1.0),
        (-32768, 32767),
        ann_spr,
    ));
    let header = RecordHeader::new(
        &content.patient_id,
        &content.recording_id,
        START,
        n_records,
        1.0,
        signals,
    );

    let mut out = header.to_bytes();
    // Re-read the formatted header so quantization uses the ranges actually stored.
    let stored = RecordHeader::parse(&out)?;
    out.reserve(n_records * stored.record_bytes());
    for (k, tal) in tals.iter().enumerate().take(n_records) {
        for (ch, (_, samples)) in content.channels.iter().enumerate() {
            let s = &stored.signals[ch];
            let gain = s.gain();
            for &x in &samples[k * fs..(k + 1) * fs] {
                let d = ((x - s.physical_min) / gain + s.digital_min as f64)
                    .round()
                    .clamp(s.digital_min as f64, s.digital_max as f64) as i16;
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        let mut block = tal.clone();
        block.resize(ann_spr * 2, 0);
        out.extend_from_slice(&block);
    }
    Ok(out)
}
