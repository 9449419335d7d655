use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formula::SimilarityPredicate;
use crate::similarity::{Similarity, Transformation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    /// Blocking with counting queries.
    Bs1,
    /// Blocking with top-k and comparison queries.
    Bs2,
    /// Matching with counting queries.
    Ms1,
    /// Matching with top-k and comparison queries.
    Ms2,
}

impl StrategyKind {
    pub fn is_blocking(self) -> bool {
        matches!(self, StrategyKind::Bs1 | StrategyKind::Bs2)
    }

    pub fn uses_comparisons(self) -> bool {
        matches!(self, StrategyKind::Bs2 | StrategyKind::Ms2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeCount {
    Two,
    Three,
    All,
}

impl AttributeCount {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            AttributeCount::Two => 2.min(d),
            AttributeCount::Three => 3.min(d),
            AttributeCount::All => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdOrder {
    Ascending,
    Descending,
}

/// One axis of the candidate predicate grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Attribute,
    Transformation,
    Similarity,
    Threshold,
}

/// How a cleaner discounts noisy answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustStyle {
    Neutral,
    /// Credits match counts with `+alpha/5` and non-match counts with `-alpha/5`.
    Optimistic,
    /// The reverse of optimistic.
    Pessimistic,
}

impl TrustStyle {
    /// Shift added to a noisy match count; non-match counts get the negation.
    pub fn match_shift(self, alpha: f64) -> f64 {
        match self {
            TrustStyle::Neutral => 0.0,
            TrustStyle::Optimistic => alpha / 5.0,
            TrustStyle::Pessimistic => -alpha / 5.0,
        }
    }
}

/// The choices that distinguish one robot cleaner from another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CleanerModel {
    /// How many of the least-NULL attributes to keep.
    pub attributes: AttributeCount,
    pub transformations: Vec<Transformation>,
    pub similarities: Vec<Similarity>,
    pub theta_low: f64,
    pub theta_high: f64,
    pub theta_count: usize,
    pub theta_order: ThresholdOrder,
    /// Loop nesting of the candidate grid, outermost first.
    pub nesting: [Dimension; 4],
    /// Blocking: least fraction of remaining matches a predicate must add.
    /// Matching: least fraction of kept non-matches it must prune.
    pub match_fraction: f64,
    /// Blocking: largest fraction of remaining non-matches it may add.
    /// Matching: largest fraction of kept matches it may lose.
    pub nonmatch_fraction: f64,
    pub relaxation: u32,
    pub style: TrustStyle,
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

/// Draws every choice uniformly from its range. The ranges are the same for
/// all four strategy families.
pub fn sample_cleaner<R: Rng + ?Sized>(_kind: StrategyKind, rng: &mut R) -> CleanerModel {
    let attributes = *[
        AttributeCount::Two,
        AttributeCount::Three,
        AttributeCount::All,
    ]
    .choose(rng)
    .unwrap();
    let mut transformations = Transformation::CATALOG.to_vec();
    transformations.shuffle(rng);
    transformations.truncate(rng.random_range(1..=3));
    let mut similarities = Similarity::CATALOG.to_vec();
    similarities.shuffle(rng);
    similarities.truncate(rng.random_range(2..=6));
    let theta_low = open_unit(rng, 0.0, 0.5);
    let theta_high = open_unit(rng, 0.5, 1.0);
    let theta_count = rng.random_range(2..=6);
    let theta_order = if rng.random_bool(0.5) {
        ThresholdOrder::Ascending
    } else {
        ThresholdOrder::Descending
    };
    let mut nesting = [
        Dimension::Attribute,
        Dimension::Transformation,
        Dimension::Similarity,
        Dimension::Threshold,
    ];
    nesting.shuffle(rng);
    CleanerModel {
        attributes,
        transformations,
        similarities,
        theta_low,
        theta_high,
        theta_count,
        theta_order,
        nesting,
        match_fraction: rng.random_range(0.2..=0.5),
        nonmatch_fraction: rng.random_range(0.1..=0.2),
        relaxation: rng.random_range(2..=3),
        style: *[
            TrustStyle::Neutral,
            TrustStyle::Optimistic,
            TrustStyle::Pessimistic,
        ]
        .choose(rng)
        .unwrap(),
    }
}

impl CleanerModel {
    /// `theta_count` evenly spaced thresholds over `[theta_low, theta_high]`.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.theta_count.max(1);
        let mut out: Vec<f64> = if n == 1 {
            vec![self.theta_low]
        } else {
            let step = (self.theta_high - self.theta_low) / (n - 1) as f64;
            (0..n).map(|i| self.theta_low + step * i as f64).collect()
        };
        if self.theta_order == ThresholdOrder::Descending {
            out.reverse();
        }
        out
    }

    /// The candidate predicates over `attrs`, in the model's nesting order.
    pub fn candidates(&self, attrs: &[String]) -> Result<Vec<SimilarityPredicate>> {
        let thresholds = self.thresholds();
        let size = |d: Dimension| match d {
            Dimension::Attribute => attrs.len(),
            Dimension::Transformation => self.transformations.len(),
            Dimension::Similarity => self.similarities.len(),
            Dimension::Threshold => thresholds.len(),
        };
        let radix: Vec<usize> = self.nesting.iter().map(|&d| size(d)).collect();
        let total: usize = radix.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut digits = [0usize; 4];
        for _ in 0..total {
            let mut pick = [0usize; 4];
            for (slot, &d) in self.nesting.iter().enumerate() {
                pick[d as usize] = digits[slot];
            }
            out.push(SimilarityPredicate::new(
                attrs[pick[0]].clone(),
                self.transformations[pick[1]],
                self.similarities[pick[2]],
                thresholds[pick[3]],
            )?);
            // innermost dimension varies fastest
            for slot in (0..4).rev() {
                digits[slot] += 1;
                if digits[slot] < radix[slot] {
                    break;
                }
                digits[slot] = 0;
            }
        }
        Ok(out)
    }
}
