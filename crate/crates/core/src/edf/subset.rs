use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_SUBJECTS: u16 = 109;
/// Runs of the executed left/right fist task (two baselines, then four
/// tasks repeated three times).
pub const EXECUTED_FIST_RUNS: [u8; 3] = [3, 7, 11];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId {
    pub subject: u16,
    pub run: u8,
}

impl RecordId {
    /// Path below the data directory, mirroring the dataset layout.
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(format!("S{:03}", self.subject)).join(format!("{self}.edf"))
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{:03}R{:02}", self.subject, self.run)
    }
}

impl FromStr for RecordId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Subset(format!("bad record id {s:?}, expected SxxxRyy"));
        let rest = s.strip_prefix('S').ok_or_else(bad)?;
        let (subject, run) = rest.split_once('R').ok_or_else(bad)?;
        Ok(RecordId {
            subject: subject.parse().map_err(|_| bad())?,
            run: run.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    ExecutedFist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub subjects: Vec<u16>,
    pub runs: Vec<u8>,
    #[serde(default)]
    pub task: Task,
}

impl Default for SubsetSpec {
    /// Subjects S001..S006, all three executed-fist runs.
    fn default() -> Self {
        SubsetSpec {
            subjects: (1..=6).collect(),
            runs: EXECUTED_FIST_RUNS.to_vec(),
            task: Task::ExecutedFist,
        }
    }
}

impl SubsetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() || self.runs.is_empty() {
            return Err(Error::Subset("subject and run lists must be non-empty".into()));
        }
        if let Some(s) = self.subjects.iter().find(|s| !(1..=N_SUBJECTS).contains(*s)) {
            return Err(Error::Subset(format!(
                "unknown subject S{s:03} (dataset has S001..S{N_SUBJECTS:03})"
            )));
        }
        if let Some(r) = self.runs.iter().find(|r| !EXECUTED_FIST_RUNS.contains(r)) {
            return Err(Error::Subset(format!(
                "run {r} is not an executed-fist run {EXECUTED_FIST_RUNS:?}"
            )));
        }
        Ok(())
    }
}

/// Record identifiers for a subset, subject-major and in the order given.
pub fn resolve_subset(spec: &SubsetSpec) -> Result<Vec<RecordId>> {
    spec.validate()?;
    Ok(spec
        .subjects
        .iter()
        .flat_map(|&subject| spec.runs.iter().map(move |&run| RecordId { subject, run }))
        .collect())
}

/// Parses `S001..S006`, `S001,S004` or a mix of both.
pub fn parse_subjects(text: &str) -> Result<Vec<u16>> {
    let one = |s: &str| -> Result<u16> {
        let s = s.trim();
        s.strip_prefix('S')
            .or_else(|| s.strip_prefix('s'))
            .unwrap_or(s)
            .parse()
            .map_err(|_| Error::Subset(format!("bad subject id {s:?}")))
    };
    let mut out = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (one(a)?, one(b)?);
                if a > b {
                    return Err(Error::Subset(format!("empty subject range {part:?}")));
                }
                out.extend(a..=b);
            }
            None => out.push(one(part)?),
        }
    }
    Ok(out)
}

pub fn parse_runs(text: &str) -> Result<Vec<u8>> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Subset(format!("bad run index {p:?}")))
        })
        .collect()
}
