use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairTable};
use crate::error::{invalid, Result};
use crate::formula::Formula;
use crate::query::DataBinding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Blocking,
    Matching,
}

/// Cleaning quality of a blocking or matching formula on the training
/// pairs. Blocking fills `recall` and `cost`; matching fills `precision`,
/// `recall` and `f1`. Fields that do not apply are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub recall: f64,
    pub cost: f64,
    pub precision: f64,
    pub f1: f64,
    /// Set when the formula selected no pair, leaving precision undefined.
    pub precision_undefined: bool,
}

impl QualityReport {
    /// The headline number: recall for blocking, F1 for matching.
    pub fn headline(&self, task: Task) -> f64 {
        match task {
            Task::Blocking => self.recall,
            Task::Matching => self.f1,
        }
    }

    /// Builds the report from a per-pair selection and per-pair labels.
    pub fn from_selection(selected: &[bool], is_match: &[bool], task: Task) -> Result<Self> {
        let total = is_match.len();
        let positives = is_match.iter().filter(|&&m| m).count();
        if total == 0 {
            return Err(invalid("quality needs a non-empty pair table"));
        }
        if positives == 0 {
            return Err(invalid("quality needs at least one positive pair"));
        }
        let mut tp = 0usize;
        let mut chosen = 0usize;
        for (&s, &m) in selected.iter().zip(is_match) {
            if s {
                chosen += 1;
                if m {
                    tp += 1;
                }
            }
        }
        let recall = tp as f64 / positives as f64;
        Ok(match task {
            Task::Blocking => QualityReport {
                recall,
                cost: chosen as f64 / total as f64,
                ..Default::default()
            },
            Task::Matching => {
                let (precision, undefined) = if chosen == 0 {
                    (0.0, true)
                } else {
                    (tp as f64 / chosen as f64, false)
                };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                QualityReport {
                    recall,
                    precision,
                    f1,
                    precision_undefined: undefined,
                    ..Default::default()
                }
            }
        })
    }
}

/// Quality of `formula` (or of the empty output, which selects nothing).
pub fn quality_report(
    formula: Option<&Formula>,
    pairs: &PairTable,
    task: Task,
) -> Result<QualityReport> {
    let selected = match formula {
        Some(f) => pairs
            .pairs()
            .iter()
            .map(|p| f.eval_pair(pairs.schema(), &p.left, &p.right))
            .collect::<Result<Vec<_>>>()?,
        None => vec![false; pairs.len()],
    };
    let labels: Vec<bool> = pairs.pairs().iter().map(|p| p.label.is_match()).collect();
    QualityReport::from_selection(&selected, &labels, task)
}

impl DataBinding {
    /// Same as [`quality_report`] but through the memoized predicate columns.
    pub fn quality(&self, formula: Option<&Formula>, task: Task) -> Result<QualityReport> {
        let table = self.pair_table();
        let selected = match formula {
            Some(f) => self.pair_mask(f)?,
            None => vec![false; table.len()],
        };
        let labels: Vec<bool> = table.pairs().iter().map(|p| p.label.is_match()).collect();
        QualityReport::from_selection(&selected, &labels, task)
    }
}

/// Blocking cost over the full cross product `left x right`; quadratic, for
/// small datasets only.
pub fn cross_product_cost(formula: &Formula, left: &Dataset, right: &Dataset) -> Result<f64> {
    let total = left.len() * right.len();
    if total == 0 {
        return Err(invalid("cross product is empty"));
    }
    let mut hits = 0usize;
    for l in left.rows() {
        for r in right.rows() {
            if formula.eval_pair(left.schema(), l, r)? {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let labels = [true, true, false, false];
        let q = QualityReport::from_selection(&labels, &labels, Task::Matching).unwrap();
        assert_eq!((q.recall, q.precision, q.f1), (1.0, 1.0, 1.0));
        let b = QualityReport::from_selection(&labels, &labels, Task::Blocking).unwrap();
        assert_eq!((b.recall, b.cost), (1.0, 0.5));
    }

    #[test]
    fn half_right() {
        let labels = [true, true, false, false];
        let sel = [true, false, true, false];
        let q = QualityReport::from_selection(&sel, &labels, Task::Matching).unwrap();
        assert_eq!((q.recall, q.precision, q.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn selects_nothing() {
        let labels = [true, false];
        let q = QualityReport::from_selection(&[false, false], &labels, Task::Matching).unwrap();
        assert_eq!((q.recall, q.precision, q.f1), (0.0, 0.0, 0.0));
        assert!(q.precision_undefined);
    }

    #[test]
    fn degenerate_tables() {
        assert!(QualityReport::from_selection(&[], &[], Task::Blocking).is_err());
        assert!(QualityReport::from_selection(&[true], &[false], Task::Blocking).is_err());
    }
}
