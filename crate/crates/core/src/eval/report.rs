use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grid::{Classifier, GridPoint, NormalizationMode};
use super::protocol::ResultTable;
use super::splits::SplitMode;
use crate::error::Result;
use crate::features::FeatureSubset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    /// Per-repetition accuracies of every grid point.
    Csv,
}

/// Published best results on the real 6-subject subset, kept beside ours
/// for comparison: (NN accuracy %, hidden nodes, SVM accuracy %, degree, gamma).
pub const REFERENCE: [(FeatureSubset, f64, usize, f64, u32, u32); 7] = [
    (FeatureSubset::All, 88.9, 3, 85.3, 1, 5),
    (FeatureSubset::Px, 80.4, 15, 88.2, 3, 4),
    (FeatureSubset::Mx, 68.5, 11, 91.2, 3, 10),
    (FeatureSubset::Ex, 82.1, 11, 94.1, 4, 5),
    (FeatureSubset::Pmx, 79.8, 3, 80.6, 8, 3),
    (FeatureSubset::Mex, 82.7, 9, 82.4, 5, 4),
    (FeatureSubset::Pex, 89.8, 4, 97.1, 4, 4),
];

fn reference(subset: FeatureSubset) -> (f64, usize, f64, u32, u32) {
    let r = REFERENCE.iter().find(|r| r.0 == subset).expect("every subset has a reference row");
    (r.1, r.2, r.3, r.4, r.5)
}

pub fn emit_report(table: &ResultTable, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Text => Ok(text_report(table)),
        ReportFormat::Json => table.to_json(),
        ReportFormat::Csv => Ok(csv_report(table)),
    }
}

fn header(table: &ResultTable) -> String {
    let mut out = String::new();
    let split = match table.split_mode {
        SplitMode::Stratified => "stratified by side",
        SplitMode::Unstratified => "unstratified",
        SplitMode::Diagnostic => "diagnostic (train = test)",
    };
    let _ = writeln!(out, "Left/right fist classification: best mean test accuracy");
    let _ = writeln!(
        out,
        "rows {}  repetitions {}  train fraction {}  splits {}  seed {}",
        table.n_rows, table.repetitions, table.train_fraction, split, table.seed
    );
    match table.normalization {
        NormalizationMode::Full => {
            let _ = writeln!(out, "NOTE: features were scaled to [0.1, 0.9] over the whole matrix before splitting.");
            let _ = writeln!(out, "      Test rows influence the scaling, so accuracies carry a mild train/test leakage.");
            let _ = writeln!(out, "      Run with train-only normalization for a leakage-free estimate.");
        }
        NormalizationMode::TrainOnly => {
            let _ = writeln!(out, "Features scaled with ranges fitted on each training set only.");
        }
    }
    out
}

fn cell_pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |a| format!("{:.1}", 100.0 * a))
}

fn text_report(table: &ResultTable) -> String {
    let mut out = header(table);
    out.push('\n');
    let mut subsets: Vec<FeatureSubset> = table.experiments.iter().map(|e| e.subset).collect();
    subsets.sort();
    subsets.dedup();

    let _ = writeln!(
        out,
        "{:<8} | {:>6} {:>6} | {:>6} {:>6} | {:>6} {:>6} {:>6} | {:>6} {:>6} {:>6}",
        "Inputs", "NN %", "hidden", "ref %", "hidden", "SVM %", "degree", "gamma", "ref %", "degree", "gamma"
    );
    let _ = writeln!(out, "{}", "-".repeat(94));
    for &subset in &subsets {
        let (r_nn, r_hidden, r_svm, r_deg, r_gamma) = reference(subset);
        let nn = table.get(subset, Classifier::Nn).and_then(|e| e.best_point());
        let svm = table.get(subset, Classifier::Svm).and_then(|e| e.best_point());
        let hidden = match nn.map(|p| p.point) {
            Some(GridPoint::Nn { hidden }) => hidden.to_string(),
            _ => "-".into(),
        };
        let (degree, gamma) = match svm.map(|p| p.point) {
            Some(GridPoint::Svm { degree, gamma }) => (degree.to_string(), gamma.to_string()),
            _ => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<8} | {:>6} {:>6} | {:>6.1} {:>6} | {:>6} {:>6} {:>6} | {:>6.1} {:>6} {:>6}",
            subset.label(),
            cell_pct(nn.map(|p| p.mean)),
            hidden,
            r_nn,
            r_hidden,
            cell_pct(svm.map(|p| p.mean)),
            degree,
            gamma,
            r_svm,
            r_deg,
            r_gamma,
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "P power, M mean, E energy, X analysis type. \"ref\" columns are published results on the real recordings.");

    let failures: usize = table.experiments.iter().map(|e| e.failures()).sum();
    if failures > 0 {
        let _ = writeln!(out, "WARNING: {failures} grid point(s) failed to train and were left out:");
        for e in &table.experiments {
            for p in e.points.iter().filter(|p| p.failure.is_some()) {
                let _ = writeln!(
                    out,
                    "  {} {} {}: {}",
                    e.subset.label(),
                    e.classifier,
                    p.point,
                    p.failure.as_deref().unwrap_or("")
                );
            }
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "Per-repetition accuracy % at the best grid point");
    for e in &table.experiments {
        let Some(best) = e.best_point() else {
            let _ = writeln!(out, "{:<6} {:<4} no successful grid point", e.subset.label(), e.classifier);
            continue;
        };
        let reps: Vec<String> = best.accuracies.iter().map(|a| format!("{:.1}", 100.0 * a)).collect();
        let _ = writeln!(
            out,
            "{:<6} {:<4} {:<20} mean {:.1} sd {:.1}: {}",
            e.subset.label(),
            e.classifier,
            best.point.to_string(),
            100.0 * best.mean,
            100.0 * best.std,
            reps.join(" ")
        );
    }
    out
}

fn csv_report(table: &ResultTable) -> String {
    let mut out = String::from("subset,classifier,hidden,degree,gamma,repetition,accuracy\n");
    for e in &table.experiments {
        for p in &e.points {
            let (h, d, g) = match p.point {
                GridPoint::Nn { hidden } => (hidden.to_string(), String::new(), String::new()),
                GridPoint::Svm { degree, gamma } => (String::new(), degree.to_string(), gamma.to_string()),
            };
            for (rep, acc) in p.accuracies.iter().enumerate() {
                let _ = writeln!(out, "{},{},{h},{d},{g},{rep},{acc:?}", e.subset, e.classifier);
            }
        }
    }
    out
}
