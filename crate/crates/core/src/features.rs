//! Mean, power and energy of ICA activations, assembled into the labelled
//! feature matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::edf::{RecordId, Side};
use crate::epoch::AnalysisType;
use crate::error::{Error, Result};

pub const N_COMPONENTS: usize = 8;
/// Power, mean and energy per component, plus the analysis type.
pub const N_INPUTS: usize = 3 * N_COMPONENTS + 1;
pub const TYPE_COLUMN: usize = 3 * N_COMPONENTS;
pub const NORM_LOW: f64 = 0.1;
pub const NORM_HIGH: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mean: Vec<f64>,
    pub power: Vec<f64>,
    pub energy: Vec<f64>,
    pub n_samples: usize,
}

/// Per-row statistics of a components × samples activation matrix.
pub fn compute_stats(activations: &DMatrix<f64>) -> Result<ComponentStats> {
    let t = activations.ncols();
    if t == 0 || activations.nrows() == 0 {
        return Err(Error::InvalidInput("empty activation matrix".into()));
    }
    let mut stats = ComponentStats {
        mean: Vec::with_capacity(activations.nrows()),
        power: Vec::with_capacity(activations.nrows()),
        energy: Vec::with_capacity(activations.nrows()),
        n_samples: t,
    };
    for row in activations.row_iter() {
        let energy: f64 = row.iter().map(|v| v * v).sum();
        stats.mean.push(row.sum() / t as f64);
        stats.energy.push(energy);
        stats.power.push(energy / t as f64);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub record: RecordId,
    pub analysis: AnalysisType,
    pub side: Side,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.record, self.analysis, self.side)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub key: RowKey,
    pub stats: ComponentStats,
}

impl FeatureVector {
    /// The 25 inputs in column order: power, mean, energy, type.
    pub fn inputs(&self) -> Result<Vec<f64>> {
        let s = &self.stats;
        if s.power.len() != N_COMPONENTS || s.mean.len() != N_COMPONENTS || s.energy.len() != N_COMPONENTS {
            return Err(Error::Shape(format!(
                "{} needs {N_COMPONENTS} components per statistic",
                self.key
            )));
        }
        let mut v = Vec::with_capacity(N_INPUTS);
        v.extend(&s.power);
        v.extend(&s.mean);
        v.extend(&s.energy);
        v.push(self.key.analysis.code());
        Ok(v)
    }
}

pub fn column_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_INPUTS + 1);
    for stat in ["power", "mean", "energy"] {
        names.extend((1..=N_COMPONENTS).map(|i| format!("{stat}_{i}")));
    }
    names.push("type".into());
    names.push("side".into());
    names
}

/// Per-column linear map onto [0.1, 0.9].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "normalization needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let width = rows[0].len();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::Shape("ragged feature rows".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Normalization { min, max })
    }

    pub fn apply_value(&self, column: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        if hi > lo {
            NORM_LOW + (NORM_HIGH - NORM_LOW) * (x - lo) / (hi - lo)
        } else {
            0.5 * (NORM_LOW + NORM_HIGH)
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &x)| self.apply_value(j, x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub keys: Vec<RowKey>,
    /// Activation samples behind each row.
    pub n_samples: Vec<usize>,
    /// Rows × 25 inputs.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Side>,
    pub normalization: Option<Normalization>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.inputs.len()
    }

    /// Input rows restricted to `subset`'s columns.
    pub fn subset_inputs(&self, subset: FeatureSubset) -> Vec<Vec<f64>> {
        let cols = subset.columns();
        self.inputs
            .iter()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect()
    }

    /// CSV with a header row; target column last.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for (row, side) in self.inputs.iter().zip(&self.targets) {
            for v in row {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{:?}\n", side.code()));
        }
        out
    }

    /// Reads [`FeatureMatrix::to_csv`] output. Row keys are not part of the
    /// CSV and come back as placeholders.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty feature CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if columns != column_names() {
            return Err(Error::InvalidInput(format!("unexpected CSV header {header:?}")));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("CSV row {}: {e}", i + 1)))?;
            if vals.len() != N_INPUTS + 1 {
                return Err(Error::Shape(format!("CSV row {} has {} fields", i + 1, vals.len())));
            }
            targets.push(match vals[N_INPUTS] {
                v if v == 0.0 => Side::Left,
                v if v == 1.0 => Side::Right,
                v => return Err(Error::InvalidInput(format!("CSV row {}: side {v}", i + 1))),
            });
            inputs.push(vals[..N_INPUTS].to_vec());
        }
        let n = inputs.len();
        Ok(FeatureMatrix {
            columns,
            keys: (0..n)
                .map(|i| RowKey {
                    record: RecordId {
                        subject: 0,
                        run: (i % 256) as u8,
                    },
                    analysis: AnalysisType::Erd,
                    side: targets[i],
                })
                .collect(),
            n_samples: vec![0; n],
            inputs,
            targets,
            normalization: None,
        })
    }
}

/// Builds the matrix with rows ordered by (subject, run, analysis, side).
pub fn assemble_matrix(mut vectors: Vec<FeatureVector>) -> Result<FeatureMatrix> {
    vectors.sort_by_key(|v| v.key);
    let mut seen = BTreeSet::new();
    for v in &vectors {
        if !seen.insert(v.key) {
            return Err(Error::DuplicateRow(v.key.to_string()));
        }
    }
    let inputs = vectors.iter().map(FeatureVector::inputs).collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        columns: column_names(),
        keys: vectors.iter().map(|v| v.key).collect(),
        n_samples: vectors.iter().map(|v| v.stats.n_samples).collect(),
        inputs,
        targets: vectors.iter().map(|v| v.key.side).collect(),
        normalization: None,
    })
}

/// Maps every input column onto [0.1, 0.9] using this matrix's own range.
pub fn normalize_columns(matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
    let norm = Normalization::fit(&matrix.inputs)?;
    let mut out = matrix.clone();
    out.inputs = matrix.inputs.iter().map(|r| norm.apply(r)).collect();
    out.normalization = Some(norm);
    Ok(out)
}

/// Feature-column groups: P power, M mean, E energy, X analysis type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubset {
    All,
    Px,
    Mx,
    Ex,
    Pmx,
    Mex,
    Pex,
}

impl FeatureSubset {
    /// Report order.
    pub const ALL: [FeatureSubset; 7] = [
        FeatureSubset::All,
        FeatureSubset::Px,
        FeatureSubset::Mx,
        FeatureSubset::Ex,
        FeatureSubset::Pmx,
        FeatureSubset::Mex,
        FeatureSubset::Pex,
    ];

    fn groups(self) -> (bool, bool, bool) {
        match self {
            FeatureSubset::All => (true, true, true),
            FeatureSubset::Px => (true, false, false),
            FeatureSubset::Mx => (false, true, false),
            FeatureSubset::Ex => (false, false, true),
            FeatureSubset::Pmx => (true, true, false),
            FeatureSubset::Mex => (false, true, true),
            FeatureSubset::Pex => (true, false, true),
        }
    }

    /// Input column indices, always including the type column.
    pub fn columns(self) -> Vec<usize> {
        let (p, m, e) = self.groups();
        let mut cols = Vec::new();
        for (on, base) in [(p, 0), (m, N_COMPONENTS), (e, 2 * N_COMPONENTS)] {
            if on {
                cols.extend(base..base + N_COMPONENTS);
            }
        }
        cols.push(TYPE_COLUMN);
        cols
    }

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            FeatureSubset::All => "All",
            FeatureSubset::Px => "P,X",
            FeatureSubset::Mx => "M,X",
            FeatureSubset::Ex => "E,X",
            FeatureSubset::Pmx => "P,M,X",
            FeatureSubset::Mex => "M,E,X",
            FeatureSubset::Pex => "P,E,X",
        }
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSubset::All => "all",
            FeatureSubset::Px => "px",
            FeatureSubset::Mx => "mx",
            FeatureSubset::Ex => "ex",
            FeatureSubset::Pmx => "pmx",
            FeatureSubset::Mex => "mex",
            FeatureSubset::Pex => "pex",
        })
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cleaned: String = s
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect::<String>()
            .to_ascii_lowercase();
        FeatureSubset::ALL
            .into_iter()
            .find(|f| f.to_string() == cleaned)
            .ok_or_else(|| Error::Config(format!("unknown feature subset {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(subject: u16, run: u8, analysis: AnalysisType, side: Side) -> RowKey {
        RowKey {
            record: RecordId { subject, run },
            analysis,
            side,
        }
    }

    fn vector(k: RowKey, base: f64) -> FeatureVector {
        FeatureVector {
            key: k,
            stats: ComponentStats {
                mean: vec![base; 8],
                power: vec![base + 1.0; 8],
                energy: vec![(base + 1.0) * 10.0; 8],
                n_samples: 10,
            },
        }
    }

    #[test]
    fn constant_row_closed_form() {
        let a = DMatrix::from_element(2, 7, 3.0);
        let s = compute_stats(&a).unwrap();
        assert_eq!(s.mean, vec![3.0, 3.0]);
        assert_eq!(s.energy, vec![63.0, 63.0]);
        assert_eq!(s.power, vec![9.0, 9.0]);
        assert!(compute_stats(&DMatrix::zeros(8, 0)).is_err());
    }

    #[test]
    fn normalization_examples() {
        let n = Normalization::fit(&[vec![0.0, 4.0], vec![5.0, 4.0], vec![10.0, 4.0]]).unwrap();
        let mapped: Vec<f64> = [0.0, 5.0, 10.0].iter().map(|&x| n.apply_value(0, x)).collect();
        assert!((mapped[0] - 0.1).abs() < 1e-15);
        assert!((mapped[1] - 0.5).abs() < 1e-15);
        assert!((mapped[2] - 0.9).abs() < 1e-15);
        assert_eq!(n.apply_value(1, 4.0), 0.5);
        assert!(Normalization::fit(&[vec![1.0]]).is_err());
    }

    #[test]
    fn one_run_gives_six_sorted_rows() {
        let mut vs = Vec::new();
        for a in AnalysisType::ALL.iter().rev() {
            for s in Side::BOTH {
                vs.push(vector(key(1, 3, *a, s), a.code()));
            }
        }
        let m = assemble_matrix(vs).unwrap();
        assert_eq!(m.n_rows(), 6);
        assert_eq!(m.columns.len(), 26);
        assert_eq!(m.keys[0], key(1, 3, AnalysisType::Erd, Side::Left));
        assert_eq!(m.keys[5], key(1, 3, AnalysisType::Mrcp, Side::Right));
        assert_eq!(m.inputs[2][TYPE_COLUMN], 2.0);
        assert_eq!(m.targets[1], Side::Right);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let k = key(2, 7, AnalysisType::Ers, Side::Left);
        let err = assemble_matrix(vec![vector(k, 0.0), vector(k, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateRow(_)));
    }

    #[test]
    fn subset_columns() {
        assert_eq!(FeatureSubset::All.columns().len(), 25);
        assert_eq!(FeatureSubset::Px.columns(), (0..8).chain([24]).collect::<Vec<_>>());
        assert_eq!(FeatureSubset::Pex.columns(), (0..8).chain(16..25).collect::<Vec<_>>());
        assert_eq!(FeatureSubset::Mex.columns(), (8..25).collect::<Vec<_>>());
        assert_eq!("P,E,X".parse::<FeatureSubset>().unwrap(), FeatureSubset::Pex);
        assert_eq!("all".parse::<FeatureSubset>().unwrap(), FeatureSubset::All);
    }

    #[test]
    fn csv_round_trip() {
        let vs: Vec<_> = Side::BOTH
            .iter()
            .map(|&s| vector(key(1, 3, AnalysisType::Erd, s), 0.1 + s.code() / 3.0))
            .collect();
        let m = normalize_columns(&assemble_matrix(vs).unwrap()).unwrap();
        let back = FeatureMatrix::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back.inputs, m.inputs);
        assert_eq!(back.targets, m.targets);
    }
}
