use serde::{Deserialize, Serialize};

use super::annotations::{decode_events, parse_tals, Annotation, MovementEvent};
use super::header::{parse_err, RecordHeader};
use crate::dsp::MultiChannelSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: String,
    /// Physical samples (µV for EEG).
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub header: RecordHeader,
    pub channels: Vec<Channel>,
    pub fs: f64,
    pub events: Vec<MovementEvent>,
    /// Every decoded annotation, including rest markers.
    pub annotations: Vec<Annotation>,
}

impl RawRecord {
    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn to_signal(&self) -> Result<MultiChannelSignal> {
        MultiChannelSignal::new(
            self.channels.iter().map(|c| c.label.clone()).collect(),
            self.channels.iter().map(|c| c.samples.clone()).collect(),
            self.fs,
        )
    }
}

/// Trims whitespace and trailing dots and uppercases, so `"Fc3."` becomes `"FC3"`.
pub fn normalize_label(label: &str) -> String {
    label
        .trim()
        .trim_end_matches('.')
        .trim()
        .to_ascii_uppercase()
}

/// Parses a complete EDF+ file into physical channels and movement events.
pub fn parse_record(bytes: &[u8]) -> Result<RawRecord> {
    let header = RecordHeader::parse(bytes)?;
    let record_bytes = header.record_bytes();
    let declared = header
        .n_data_records
        .checked_mul(record_bytes)
        .and_then(|n| n.checked_add(header.header_bytes))
        .ok_or_else(|| Error::Integrity("declared data size overflows".into()))?;
    if bytes.len() < declared {
        return Err(parse_err(
            bytes.len(),
            format!(
                "file truncated: header declares {} data records ({declared} bytes), file has {}",
                header.n_data_records,
                bytes.len()
            ),
        ));
    }
    if bytes.len() > declared {
        return Err(Error::Integrity(format!(
            "header declares {declared} bytes but file has {}",
            bytes.len()
        )));
    }

    let annotation_index = header
        .signals
        .iter()
        .position(|s| s.is_annotation())
        .ok_or(Error::MissingAnnotations)?;
    let data_signals: Vec<usize> = (0..header.signals.len())
        .filter(|&i| !header.signals[i].is_annotation())
        .collect();
    let first = *data_signals
        .first()
        .ok_or_else(|| Error::Integrity("record has no data signals".into()))?;
    if header.record_duration_s <= 0.0 {
        return Err(Error::Integrity("record duration must be positive".into()));
    }
    let spr = header.signals[first].samples_per_record;
    if spr == 0 {
        return Err(Error::Integrity("signal has zero samples per record".into()));
    }
    if let Some(&odd) = data_signals
        .iter()
        .find(|&&i| header.signals[i].samples_per_record != spr)
    {
        return Err(Error::Integrity(format!(
            "signal {} has {} samples per record, expected {spr}",
            header.signals[odd].label, header.signals[odd].samples_per_record
        )));
    }
    let fs = spr as f64 / header.record_duration_s;

    let mut labels = Vec::with_capacity(data_signals.len());
    for &i in &data_signals {
        let label = normalize_label(&header.signals[i].label);
        if labels.contains(&label) {
            return Err(Error::DuplicateChannel(label));
        }
        labels.push(label);
    }

    // Byte offset of each signal inside one data record.
    let mut signal_offsets = Vec::with_capacity(header.signals.len());
    let mut acc = 0;
    for s in &header.signals {
        signal_offsets.push(acc);
        acc += s.samples_per_record * 2;
    }

    let total = header.n_data_records * spr;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(total); data_signals.len()];
    let mut annotations = Vec::new();
    for r in 0..header.n_data_records {
        let record_start = header.header_bytes + r * record_bytes;
        for (k, &i) in data_signals.iter().enumerate() {
            let signal = &header.signals[i];
            let start = record_start + signal_offsets[i];
            let chunk = &bytes[start..start + spr * 2];
            samples[k].extend(
                chunk
                    .chunks_exact(2)
                    .map(|b| signal.to_physical(i16::from_le_bytes([b[0], b[1]]))),
            );
        }
        let ann = &header.signals[annotation_index];
        let start = record_start + signal_offsets[annotation_index];
        parse_tals(
            &bytes[start..start + ann.samples_per_record * 2],
            start,
            &mut annotations,
        )?;
    }

    let record_len_s = header.n_data_records as f64 * header.record_duration_s;
    let events = clip_to_record(decode_events(&annotations)?, record_len_s);

    let channels = labels
        .into_iter()
        .zip(samples)
        .map(|(label, samples)| Channel { label, samples })
        .collect();
    Ok(RawRecord {
        header,
        channels,
        fs,
        events,
        annotations,
    })
}

/// Drops events starting at or after the record end and shortens any that run past it.
fn clip_to_record(events: Vec<MovementEvent>, record_len_s: f64) -> Vec<MovementEvent> {
    events
        .into_iter()
        .filter(|e| e.onset_s < record_len_s)
        .map(|mut e| {
            e.duration_s = e.duration_s.min(record_len_s - e.onset_s);
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::writer::{encode_edf, EdfContent};
    use crate::edf::Side;

    fn content(n_seconds: usize) -> EdfContent {
        let fs = 16;
        let n = n_seconds * fs;
        EdfContent {
            patient_id: "X".into(),
            recording_id: "test".into(),
            fs,
            channels: vec![
                ("Fc3.".into(), (0..n).map(|i| (i as f64 * 0.3).sin() * 50.0).collect()),
                ("Cz..".into(), (0..n).map(|i| i as f64 - 40.0).collect()),
            ],
            annotations: vec![
                Annotation {
                    onset_s: 0.0,
                    duration_s: Some(2.0),
                    label: "T0".into(),
                },
                Annotation {
                    onset_s: 2.0,
                    duration_s: Some(1.5),
                    label: "T2".into(),
                },
            ],
        }
    }

    #[test]
    fn parses_written_record() {
        let bytes = encode_edf(&content(5)).unwrap();
        let rec = parse_record(&bytes).unwrap();
        assert_eq!(rec.fs, 16.0);
        assert_eq!(rec.channels.len(), 2);
        assert_eq!(rec.channels[0].label, "FC3");
        assert_eq!(rec.channels[1].label, "CZ");
        assert_eq!(rec.n_samples(), 80);
        assert_eq!(rec.annotations.len(), 2);
        assert_eq!(rec.events.len(), 1);
        assert_eq!(rec.events[0].side, Side::Right);
        let orig = &content(5).channels[1].1;
        let gain = rec.header.signals[1].gain();
        for (a, b) in rec.channels[1].samples.iter().zip(orig) {
            assert!((a - b).abs() <= gain * 0.5 + 1e-9);
        }
    }

    #[test]
    fn zero_records_gives_empty_channels() {
        let mut c = content(0);
        c.annotations.clear();
        let rec = parse_record(&encode_edf(&c).unwrap()).unwrap();
        assert!(rec.channels.iter().all(|ch| ch.samples.is_empty()));
        assert!(rec.events.is_empty());
    }

    #[test]
    fn truncated_data_names_offset() {
        let bytes = encode_edf(&content(3)).unwrap();
        let cut = bytes.len() - 7;
        match parse_record(&bytes[..cut]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_integrity_error() {
        let mut bytes = encode_edf(&content(3)).unwrap();
        bytes.extend([0, 0]);
        assert!(matches!(parse_record(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn missing_annotation_signal_rejected() {
        let bytes = encode_edf(&content(2)).unwrap();
        let mut header = RecordHeader::parse(&bytes).unwrap();
        let ann_bytes = header.signals[2].samples_per_record * 2;
        header.signals.truncate(2);
        let mut rebuilt = RecordHeader::new(
            &header.patient_id,
            &header.recording_id,
            header.start_datetime,
            header.n_data_records,
            header.record_duration_s,
            header.signals.clone(),
        )
        .to_bytes();
        let body = &bytes[256 * 4..];
        let rec_len = 2 * 16 * 2 + ann_bytes;
        for r in 0..2 {
            rebuilt.extend_from_slice(&body[r * rec_len..r * rec_len + 64]);
        }
        assert!(matches!(
            parse_record(&rebuilt),
            Err(Error::MissingAnnotations)
        ));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("Fc3."), "FC3");
        assert_eq!(normalize_label(" Fcz.. "), "FCZ");
        assert_eq!(normalize_label("T10."), "T10");
    }

    #[test]
    fn events_clipped_to_record_length() {
        let mut c = content(3);
        c.annotations[1].duration_s = Some(4.0);
        let rec = parse_record(&encode_edf(&c).unwrap()).unwrap();
        let e = rec.events[0];
        assert!(e.onset_s + e.duration_s <= rec.duration_s() + 1e-12);
    }
}
