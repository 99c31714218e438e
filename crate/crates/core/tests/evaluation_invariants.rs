//! Protocol-level checks on features from the synthetic generator.

use eegfist::edf::Side;
use eegfist::eval::{evaluate, Classifier, EvalConfig, SynthSpec};
use eegfist::features::{normalize_columns, FeatureMatrix, FeatureSubset};
use eegfist::pipeline::{run_pipeline, PipelineConfig, PipelineStage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic_features(root: &std::path::Path) -> FeatureMatrix {
    let cfg = PipelineConfig {
        cache_dir: root.join("cache"),
        output_dir: root.join("out"),
        synthetic: Some(SynthSpec::default()),
        ..PipelineConfig::default()
    };
    run_pipeline(&cfg, PipelineStage::Features).unwrap().features.unwrap().raw
}

fn shuffled(matrix: &FeatureMatrix, seed: u64) -> FeatureMatrix {
    let mut out = matrix.clone();
    out.targets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    normalize_columns(&FeatureMatrix {
        normalization: None,
        ..out
    })
    .unwrap()
}

#[test]
fn shuffled_labels_stay_near_chance_and_results_are_consistent() {
    let root = tempfile::tempdir().unwrap();
    let raw = synthetic_features(root.path());
    assert_eq!(raw.n_rows(), 108);
    let lefts = raw.targets.iter().filter(|s| **s == Side::Left).count();
    assert_eq!(lefts, 54);

    let cfg = EvalConfig {
        subsets: vec![FeatureSubset::Pex, FeatureSubset::All],
        classifiers: vec![Classifier::Svm],
        ..EvalConfig::default()
    };
    let table = evaluate(&shuffled(&raw, 31), &cfg).unwrap();
    let n_points = cfg.grid.points(Classifier::Svm).len();
    assert_eq!(n_points, 100);
    for e in &table.experiments {
        // Exhaustive grid: every point is present, trained or flagged.
        assert_eq!(e.points.len(), n_points);
        let trained = e.points.iter().filter(|p| p.failure.is_none()).count();
        assert_eq!(trained + e.failures(), n_points);
        for p in e.points.iter().filter(|p| p.failure.is_none()) {
            assert_eq!(p.accuracies.len(), cfg.repetitions);
            let lo = p.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = p.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(p.mean >= lo && p.mean <= hi, "{}: {} outside [{lo}, {hi}]", p.point, p.mean);
        }
        let best = e.best_point().unwrap().mean;
        println!("{} shuffled best mean {best:.3}", e.subset.label());
        assert!((0.35..=0.65).contains(&best), "{}: {best}", e.subset.label());
    }
}
