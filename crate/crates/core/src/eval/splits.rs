use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edf::Side;
use crate::epoch::round_half_up;
use crate::error::{Error, Result};

pub const DEFAULT_REPETITIONS: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const MIN_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Class proportions preserved in every training set.
    #[default]
    Stratified,
    Unstratified,
    /// Training and test sets are both the full matrix.
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    /// `repetitions` random train/test partitions of the rows behind `labels`.
    pub fn new(
        labels: &[Side],
        seed: u64,
        mode: SplitMode,
        repetitions: usize,
        train_fraction: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if n < MIN_ROWS {
            return Err(Error::InvalidInput(format!(
                "{n} rows are too few to split (need at least {MIN_ROWS})"
            )));
        }
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
        }
        let n_train = round_half_up(train_fraction * n as f64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut splits = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let split = match mode {
                SplitMode::Diagnostic => Split {
                    train: (0..n).collect(),
                    test: (0..n).collect(),
                },
                SplitMode::Unstratified => {
                    let mut idx: Vec<usize> = (0..n).collect();
                    idx.shuffle(&mut rng);
                    finish(idx[..n_train].to_vec(), idx[n_train..].to_vec())
                }
                SplitMode::Stratified => {
                    let quotas = class_quotas(labels, n_train);
                    let mut train = Vec::with_capacity(n_train);
                    let mut test = Vec::with_capacity(n - n_train);
                    for (side, quota) in Side::BOTH.iter().zip(quotas) {
                        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == *side).collect();
                        idx.shuffle(&mut rng);
                        train.extend_from_slice(&idx[..quota]);
                        test.extend_from_slice(&idx[quota..]);
                    }
                    finish(train, test)
                }
            };
            splits.push(split);
        }
        Ok(SplitPlan {
            seed,
            mode,
            train_fraction,
            splits,
        })
    }
}

fn finish(mut train: Vec<usize>, mut test: Vec<usize>) -> Split {
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// Training rows per class (Left, Right) summing to `n_train`, by largest
/// remainder of the proportional share; ties go to Left.
fn class_quotas(labels: &[Side], n_train: usize) -> [usize; 2] {
    let n = labels.len() as f64;
    let counts = Side::BOTH.map(|s| labels.iter().filter(|&&l| l == s).count());
    let exact = counts.map(|c| n_train as f64 * c as f64 / n);
    let mut quotas = exact.map(|e| e.floor() as usize);
    let mut remaining = n_train - quotas.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(4) {
        if remaining == 0 {
            break;
        }
        if quotas[k] < counts[k] {
            quotas[k] += 1;
            remaining -= 1;
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(left: usize, right: usize) -> Vec<Side> {
        let mut v = vec![Side::Left; left];
        v.extend(vec![Side::Right; right]);
        v
    }

    #[test]
    fn sizes() {
        let p = SplitPlan::new(&labels(54, 54), 7, SplitMode::Stratified, 10, 0.8).unwrap();
        assert_eq!(p.splits.len(), 10);
        for s in &p.splits {
            assert_eq!((s.train.len(), s.test.len()), (86, 22));
        }
        let p = SplitPlan::new(&labels(5, 5), 7, SplitMode::Unstratified, 10, 0.8).unwrap();
        assert_eq!((p.splits[0].train.len(), p.splits[0].test.len()), (8, 2));
        assert!(SplitPlan::new(&labels(2, 2), 7, SplitMode::Stratified, 10, 0.8).is_err());
    }

    #[test]
    fn stratified_keeps_balance() {
        let l = labels(54, 54);
        let p = SplitPlan::new(&l, 3, SplitMode::Stratified, 10, 0.8).unwrap();
        for s in &p.splits {
            let left = s.train.iter().filter(|&&i| l[i] == Side::Left).count();
            assert_eq!(left, 43);
        }
        assert_eq!(class_quotas(&labels(7, 8), 12), [6, 6]);
        assert_eq!(class_quotas(&labels(1, 9), 8), [1, 7]);
    }

    #[test]
    fn diagnostic_uses_everything() {
        let p = SplitPlan::new(&labels(3, 3), 0, SplitMode::Diagnostic, 2, 0.8).unwrap();
        assert_eq!(p.splits[0].train, p.splits[0].test);
        assert_eq!(p.splits[0].train.len(), 6);
    }
}
