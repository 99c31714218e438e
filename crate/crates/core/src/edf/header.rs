//! Fixed-width EDF/EDF+ header block.
//!
//! Every field keeps its trimmed text next to the parsed value so that
//! [`RecordHeader::to_bytes`] reproduces a standard (space-padded) header
//! byte for byte.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAIN_HEADER_LEN: usize = 256;
pub const SIGNAL_HEADER_LEN: usize = 256;
pub const ANNOTATION_LABEL: &str = "EDF Annotations";

/// Upper bound on the signal count accepted by the parser. EDF allows four
/// ASCII digits, so anything larger is malformed anyway.
const MAX_SIGNALS: usize = 9999;

// (width) of each per-signal field, in on-disk order.
const SIGNAL_FIELD_WIDTHS: [usize; 10] = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartDateTime {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl fmt::Display for StartDateTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

impl StartDateTime {
    fn parse(date: &str, time: &str, offset: usize) -> Result<Self> {
        let triple = |s: &str, at: usize| -> Result<[u8; 3]> {
            let parts: Vec<&str> = s.split('.').collect();
            if parts.len() != 3 {
                return Err(parse_err(at, format!("expected nn.nn.nn, found {s:?}")));
            }
            let mut out = [0u8; 3];
            for (slot, part) in out.iter_mut().zip(&parts) {
                *slot = part
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(at, format!("bad number {part:?} in {s:?}")))?;
            }
            Ok(out)
        };
        let [day, month, yy] = triple(date, offset)?;
        let [hour, minute, second] = triple(time, offset + 8)?;
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) || yy > 99 {
            return Err(parse_err(offset, format!("invalid start date {date:?}")));
        }
        if hour > 23 || minute > 59 || second > 59 {
            return Err(parse_err(offset + 8, format!("invalid start time {time:?}")));
        }
        // EDF clipping date: 85..99 -> 19xx, otherwise 20xx.
        let year = if yy >= 85 { 1900 + yy as u16 } else { 2000 + yy as u16 };
        Ok(StartDateTime {
            year,
            month,
            day,
            hour,
            minute,
            second,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
    pub reserved: String,
    text: SignalNumbers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SignalNumbers {
    physical_min: String,
    physical_max: String,
    digital_min: String,
    digital_max: String,
    samples_per_record: String,
}

impl SignalHeader {
    /// Builds a signal header from typed values, formatting the numeric fields.
    pub fn new(
        label: &str,
        physical_dimension: &str,
        physical_range: (f64, f64),
        digital_range: (i32, i32),
        samples_per_record: usize,
    ) -> Self {
        let (physical_min, physical_max) = physical_range;
        let (digital_min, digital_max) = digital_range;
        SignalHeader {
            label: label.to_string(),
            transducer: String::new(),
            physical_dimension: physical_dimension.to_string(),
            physical_min,
            physical_max,
            digital_min,
            digital_max,
            prefilter: String::new(),
            samples_per_record,
            reserved: String::new(),
            text: SignalNumbers {
                physical_min: format_number(physical_min, 8),
                physical_max: format_number(physical_max, 8),
                digital_min: digital_min.to_string(),
                digital_max: digital_max.to_string(),
                samples_per_record: samples_per_record.to_string(),
            },
        }
    }

    pub fn is_annotation(&self) -> bool {
        self.label.trim() == ANNOTATION_LABEL
    }

    /// Physical units per digital count.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max as f64 - self.digital_min as f64)
    }

    /// Linear digital-to-physical map; `digital_min` lands on `physical_min` exactly.
    pub fn to_physical(&self, digital: i16) -> f64 {
        self.physical_min + (digital as i64 - self.digital_min as i64) as f64 * self.gain()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub version_tag: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_datetime: StartDateTime,
    pub header_bytes: usize,
    pub reserved: String,
    /// `-1` in the file means "unknown"; the parser resolves it from the file size.
    pub n_data_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<SignalHeader>,
    text: MainText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MainText {
    start_date: String,
    start_time: String,
    header_bytes: String,
    n_data_records: String,
    record_duration: String,
}

impl RecordHeader {
    /// Builds an EDF+C header around the given signal headers.
    pub fn new(
        patient_id: &str,
        recording_id: &str,
        start: StartDateTime,
        n_data_records: usize,
        record_duration_s: f64,
        signals: Vec<SignalHeader>,
    ) -> Self {
        let header_bytes = MAIN_HEADER_LEN + SIGNAL_HEADER_LEN * signals.len();
        RecordHeader {
            version_tag: "0".to_string(),
            patient_id: patient_id.to_string(),
            recording_id: recording_id.to_string(),
            start_datetime: start,
            header_bytes,
            reserved: "EDF+C".to_string(),
            n_data_records,
            record_duration_s,
            signals,
            text: MainText {
                start_date: format!(
                    "{:02}.{:02}.{:02}",
                    start.day,
                    start.month,
                    start.year % 100
                ),
                start_time: format!("{:02}.{:02}.{:02}", start.hour, start.minute, start.second),
                header_bytes: header_bytes.to_string(),
                n_data_records: n_data_records.to_string(),
                record_duration: format_number(record_duration_s, 8),
            },
        }
    }

    /// Parses the header block at the start of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let main = take(bytes, 0, MAIN_HEADER_LEN)?;
        let field = |start: usize, len: usize| ascii_field(&main[start..start + len], start);

        let version_tag = field(0, 8)?;
        let patient_id = field(8, 80)?;
        let recording_id = field(88, 80)?;
        let start_date = field(168, 8)?;
        let start_time = field(176, 8)?;
        let header_bytes_text = field(184, 8)?;
        let reserved = field(192, 44)?;
        let n_records_text = field(236, 8)?;
        let duration_text = field(244, 8)?;
        let ns_text = field(252, 4)?;

        let start_datetime = StartDateTime::parse(&start_date, &start_time, 168)?;
        let header_bytes: usize = parse_int(&header_bytes_text, 184)?;
        let n_records_raw: i64 = parse_int(&n_records_text, 236)?;
        let record_duration_s = parse_float(&duration_text, 244)?;
        let n_signals: usize = parse_int(&ns_text, 252)?;
        if n_signals > MAX_SIGNALS {
            return Err(parse_err(252, format!("signal count {n_signals} out of range")));
        }
        if record_duration_s < 0.0 {
            return Err(parse_err(244, "negative record duration"));
        }
        if n_records_raw < -1 {
            return Err(parse_err(236, format!("invalid data record count {n_records_raw}")));
        }

        let expected_header = MAIN_HEADER_LEN + SIGNAL_HEADER_LEN * n_signals;
        if header_bytes != expected_header {
            return Err(Error::Integrity(format!(
                "header declares {header_bytes} bytes but {n_signals} signals need {expected_header}"
            )));
        }
        let block = take(bytes, MAIN_HEADER_LEN, SIGNAL_HEADER_LEN * n_signals)?;

        // Signal fields are stored column-wise: all labels, then all transducers, ...
        let mut columns: Vec<Vec<String>> = Vec::with_capacity(SIGNAL_FIELD_WIDTHS.len());
        let mut cursor = 0;
        for width in SIGNAL_FIELD_WIDTHS {
            let mut col = Vec::with_capacity(n_signals);
            for _ in 0..n_signals {
                col.push(ascii_field(
                    &block[cursor..cursor + width],
                    MAIN_HEADER_LEN + cursor,
                )?);
                cursor += width;
            }
            columns.push(col);
        }
        let column_offset = |col: usize, sig: usize| {
            MAIN_HEADER_LEN
                + SIGNAL_FIELD_WIDTHS[..col].iter().sum::<usize>() * n_signals
                + SIGNAL_FIELD_WIDTHS[col] * sig
        };

        let mut signals = Vec::with_capacity(n_signals);
        for i in 0..n_signals {
            let physical_min = parse_float(&columns[3][i], column_offset(3, i))?;
            let physical_max = parse_float(&columns[4][i], column_offset(4, i))?;
            let digital_min: i32 = parse_int(&columns[5][i], column_offset(5, i))?;
            let digital_max: i32 = parse_int(&columns[6][i], column_offset(6, i))?;
            let samples_per_record: usize = parse_int(&columns[8][i], column_offset(8, i))?;
            let label = columns[0][i].clone();
            if digital_max <= digital_min {
                return Err(Error::Integrity(format!(
                    "signal {i} ({label}): digital max {digital_max} <= digital min {digital_min}"
                )));
            }
            if !(-32768..=32767).contains(&digital_min) || !(-32768..=32767).contains(&digital_max)
            {
                return Err(Error::Integrity(format!(
                    "signal {i} ({label}): digital range exceeds 16 bits"
                )));
            }
            let signal = SignalHeader {
                label,
                transducer: columns[1][i].clone(),
                physical_dimension: columns[2][i].clone(),
                physical_min,
                physical_max,
                digital_min,
                digital_max,
                prefilter: columns[7][i].clone(),
                samples_per_record,
                reserved: columns[9][i].clone(),
                text: SignalNumbers {
                    physical_min: columns[3][i].clone(),
                    physical_max: columns[4][i].clone(),
                    digital_min: columns[5][i].clone(),
                    digital_max: columns[6][i].clone(),
                    samples_per_record: columns[8][i].clone(),
                },
            };
            if !signal.is_annotation() && signal.physical_max == signal.physical_min {
                return Err(Error::Integrity(format!(
                    "signal {i} ({}): degenerate physical range",
                    signal.label
                )));
            }
            signals.push(signal);
        }

        let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
        let record_bytes = record_samples
            .checked_mul(2)
            .ok_or_else(|| Error::Integrity("data record size overflows".into()))?;
        let data_len = bytes.len().saturating_sub(header_bytes);
        let n_data_records = if n_records_raw == -1 {
            if record_bytes == 0 || data_len % record_bytes != 0 {
                return Err(Error::Integrity(format!(
                    "unknown record count and {data_len} data bytes is not a multiple of the {record_bytes}-byte record"
                )));
            }
            data_len / record_bytes
        } else {
            n_records_raw as usize
        };

        Ok(RecordHeader {
            version_tag,
            patient_id,
            recording_id,
            start_datetime,
            header_bytes,
            reserved,
            n_data_records,
            record_duration_s,
            signals,
            text: MainText {
                start_date,
                start_time,
                header_bytes: header_bytes_text,
                n_data_records: n_records_text,
                record_duration: duration_text,
            },
        })
    }

    /// Serializes the header block back to its fixed-width form.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_bytes);
        let ns = self.signals.len().to_string();
        for (text, width) in [
            (self.version_tag.as_str(), 8),
            (&self.patient_id, 80),
            (&self.recording_id, 80),
            (&self.text.start_date, 8),
            (&self.text.start_time, 8),
            (&self.text.header_bytes, 8),
            (&self.reserved, 44),
            (&self.text.n_data_records, 8),
            (&self.text.record_duration, 8),
            (&ns, 4),
        ] {
            push_field(&mut out, text, width);
        }
        let getters: [fn(&SignalHeader) -> &str; 10] = [
            |s| &s.label,
            |s| &s.transducer,
            |s| &s.physical_dimension,
            |s| &s.text.physical_min,
            |s| &s.text.physical_max,
            |s| &s.text.digital_min,
            |s| &s.text.digital_max,
            |s| &s.prefilter,
            |s| &s.text.samples_per_record,
            |s| &s.reserved,
        ];
        for (get, width) in getters.iter().zip(SIGNAL_FIELD_WIDTHS) {
            for signal in &self.signals {
                push_field(&mut out, get(signal), width);
            }
        }
        out
    }

    /// Bytes in one data record (all signals).
    pub fn record_bytes(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_data_records as f64 * self.record_duration_s
    }

    pub fn is_edf_plus(&self) -> bool {
        self.reserved.starts_with("EDF+")
    }
}

fn push_field(out: &mut Vec<u8>, text: &str, width: usize) {
    let bytes = text.as_bytes();
    let n = bytes.len().min(width);
    out.extend_from_slice(&bytes[..n]);
    out.resize(out.len() + (width - n), b' ');
}

/// Formats a number into at most `width` characters, dropping precision as needed.
fn format_number(value: f64, width: usize) -> String {
    if value.fract() == 0.0 && value.abs() < 1e7 {
        return format!("{}", value as i64);
    }
    for decimals in (0..width).rev() {
        let s = format!("{value:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s.len() <= width {
            return s;
        }
    }
    format!("{}", value.round() as i64)
}

fn take(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    let end = start.checked_add(len).ok_or_else(|| parse_err(start, "length overflow"))?;
    bytes.get(start..end).ok_or_else(|| {
        parse_err(
            bytes.len(),
            format!("file truncated: need bytes {start}..{end}, have {}", bytes.len()),
        )
    })
}

fn ascii_field(raw: &[u8], offset: usize) -> Result<String> {
    if let Some(pos) = raw.iter().position(|b| !(0x20..=0x7e).contains(b)) {
        return Err(parse_err(
            offset + pos,
            format!("non-printable byte 0x{:02x} in header field", raw[pos]),
        ));
    }
    // Printable ASCII is valid UTF-8.
    let text = std::str::from_utf8(raw).unwrap_or_default();
    Ok(text.trim_end().to_string())
}

fn parse_int<T: std::str::FromStr>(text: &str, offset: usize) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| parse_err(offset, format!("expected an integer, found {text:?}")))
}

fn parse_float(text: &str, offset: usize) -> Result<f64> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| parse_err(offset, format!("expected a number, found {text:?}")))?;
    if !value.is_finite() {
        return Err(parse_err(offset, format!("non-finite number {text:?}")));
    }
    Ok(value)
}

pub(crate) fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}
