//! Time-stamped annotation lists (TALs) carried in the `EDF Annotations` signal.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::header::parse_err;
use crate::error::{Error, Result};

const TAL_END: u8 = 0x00;
const FIELD_SEP: u8 = 0x14;
const DURATION_SEP: u8 = 0x15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub onset_s: f64,
    pub duration_s: Option<f64>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    /// Numeric target code used in the feature matrix.
    pub fn code(self) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub onset_s: f64,
    pub duration_s: f64,
    pub side: Side,
}

/// Decodes every TAL in one data record's annotation bytes.
///
/// `base_offset` is the file offset of `bytes`, used in error messages.
pub fn parse_tals(bytes: &[u8], base_offset: usize, out: &mut Vec<Annotation>) -> Result<()> {
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos] == TAL_END {
            pos += 1;
            continue;
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == TAL_END)
            .map(|n| pos + n)
            .ok_or_else(|| parse_err(base_offset + pos, "unterminated annotation list"))?;
        parse_one(&bytes[pos..end], base_offset + pos, out)?;
        pos = end + 1;
    }
    Ok(())
}

fn parse_one(tal: &[u8], offset: usize, out: &mut Vec<Annotation>) -> Result<()> {
    let mut fields = tal.split(|&b| b == FIELD_SEP);
    let stamp = fields.next().unwrap_or_default();
    if !matches!(stamp.first(), Some(b'+') | Some(b'-')) {
        return Err(parse_err(offset, "annotation onset must start with '+' or '-'"));
    }
    let (onset_raw, duration_raw) = match stamp.iter().position(|&b| b == DURATION_SEP) {
        Some(i) => (&stamp[..i], Some(&stamp[i + 1..])),
        None => (stamp, None),
    };
    let number = |raw: &[u8]| -> Result<f64> {
        std::str::from_utf8(raw)
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                parse_err(
                    offset,
                    format!("bad annotation number {:?}", String::from_utf8_lossy(raw)),
                )
            })
    };
    let onset_s = number(onset_raw)?;
    let duration_s = duration_raw.map(number).transpose()?;
    for text in fields {
        if text.is_empty() {
            continue;
        }
        let label = std::str::from_utf8(text)
            .map_err(|_| parse_err(offset, "annotation text is not UTF-8"))?;
        out.push(Annotation {
            onset_s,
            duration_s,
            label: label.to_string(),
        });
    }
    Ok(())
}

/// Encodes one TAL: `+onset[\x15duration]\x14text\x14...\x00`.
pub fn encode_tal(onset_s: f64, duration_s: Option<f64>, labels: &[&str]) -> Vec<u8> {
    let mut out = format!("{onset_s:+}").into_bytes();
    if let Some(d) = duration_s {
        out.push(DURATION_SEP);
        out.extend_from_slice(format!("{d}").as_bytes());
    }
    out.push(FIELD_SEP);
    for label in labels {
        out.extend_from_slice(label.as_bytes());
        out.push(FIELD_SEP);
    }
    if labels.is_empty() {
        out.push(FIELD_SEP);
    }
    out.push(TAL_END);
    out
}

/// Maps executed-fist annotations to movement events: T1 is the left fist,
/// T2 the right fist, T0 (rest) is dropped. Output is sorted by onset.
pub fn decode_events(annotations: &[Annotation]) -> Result<Vec<MovementEvent>> {
    let mut events = Vec::new();
    for a in annotations {
        let side = match a.label.trim() {
            "T0" => continue,
            "T1" => Side::Left,
            "T2" => Side::Right,
            other => return Err(Error::UnknownAnnotation(other.to_string())),
        };
        let duration_s = a.duration_s.filter(|d| *d > 0.0).ok_or_else(|| {
            Error::InvalidInput(format!(
                "movement annotation {} at {} s has no positive duration",
                a.label, a.onset_s
            ))
        })?;
        if a.onset_s < 0.0 {
            return Err(Error::InvalidInput(format!(
                "movement annotation {} has negative onset {}",
                a.label, a.onset_s
            )));
        }
        events.push(MovementEvent {
            onset_s: a.onset_s,
            duration_s,
            side,
        });
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    for pair in events.windows(2) {
        if pair[0].onset_s + pair[0].duration_s > pair[1].onset_s + 1e-9 {
            return Err(Error::OverlappingEvents {
                first: pair[0].onset_s,
                second: pair[1].onset_s,
            });
        }
    }
    Ok(events)
}
