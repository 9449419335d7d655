//! String transformations and normalized similarity functions.
//!
//! Every transformation lowercases first and then produces a token
//! sequence: characters for `lowercase`, overlapping q-grams for `qgram`,
//! whitespace tokens for `space`. Sequence measures (edit distance, Jaro,
//! Smith-Waterman, length difference) run over that token sequence; set
//! measures (cosine, Jaccard, overlap) treat it as a multiset.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transformation {
    Lowercase,
    QGram(u8),
    SpaceTokenize,
}

impl Transformation {
    /// The transformation family offered to robot cleaners.
    pub const CATALOG: [Transformation; 3] = [
        Transformation::QGram(2),
        Transformation::QGram(3),
        Transformation::SpaceTokenize,
    ];

    pub fn apply(self, value: &str) -> Vec<String> {
        let lower = value.to_lowercase();
        match self {
            Transformation::Lowercase => lower.chars().map(String::from).collect(),
            Transformation::QGram(q) => qgrams(&lower, q as usize),
            Transformation::SpaceTokenize => lower.split_whitespace().map(str::to_string).collect(),
        }
    }
}

fn qgrams(s: &str, q: usize) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() <= q {
        return vec![chars.iter().collect()];
    }
    chars.windows(q).map(|w| w.iter().collect()).collect()
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transformation::Lowercase => f.write_str("lowercase"),
            Transformation::QGram(q) => write!(f, "qgram{q}"),
            Transformation::SpaceTokenize => f.write_str("space"),
        }
    }
}

impl FromStr for Transformation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowercase" => Ok(Transformation::Lowercase),
            "space" | "spaceTokenize" => Ok(Transformation::SpaceTokenize),
            "2grams" => Ok(Transformation::QGram(2)),
            "3grams" => Ok(Transformation::QGram(3)),
            other => other
                .strip_prefix("qgram")
                .and_then(|q| q.parse::<u8>().ok())
                .filter(|&q| q >= 1)
                .map(Transformation::QGram)
                .ok_or_else(|| Error::Formula(format!("unknown transformation `{other}`"))),
        }
    }
}

impl Serialize for Transformation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Transformation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Similarity {
    Levenshtein,
    Jaro,
    SmithWaterman,
    Cosine,
    Jaccard,
    Overlap,
    AbsDiffLen,
}

impl Similarity {
    pub const CATALOG: [Similarity; 7] = [
        Similarity::Levenshtein,
        Similarity::SmithWaterman,
        Similarity::Jaro,
        Similarity::Cosine,
        Similarity::Jaccard,
        Similarity::Overlap,
        Similarity::AbsDiffLen,
    ];

    /// Similarity in `[0, 1]` between two token sequences.
    pub fn score(self, a: &[String], b: &[String]) -> f64 {
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let s = match self {
            Similarity::Levenshtein => {
                let max = a.len().max(b.len()) as f64;
                1.0 - strsim::generic_levenshtein(&str_refs(a), &str_refs(b)) as f64 / max
            }
            Similarity::Jaro => strsim::generic_jaro(&str_refs(a), &str_refs(b)),
            Similarity::SmithWaterman => smith_waterman(a, b),
            Similarity::Cosine => {
                let (ca, cb) = (counts(a), counts(b));
                let dot: f64 = ca
                    .iter()
                    .filter_map(|(t, &x)| cb.get(t).map(|&y| (x * y) as f64))
                    .sum();
                let norm = |c: &HashMap<&str, usize>| {
                    c.values().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
                };
                dot / (norm(&ca) * norm(&cb))
            }
            Similarity::Jaccard => {
                let inter = multiset_intersection(a, b) as f64;
                inter / ((a.len() + b.len()) as f64 - inter)
            }
            Similarity::Overlap => multiset_intersection(a, b) as f64 / a.len().min(b.len()) as f64,
            Similarity::AbsDiffLen => {
                let (la, lb) = (a.len() as f64, b.len() as f64);
                1.0 - (la - lb).abs() / la.max(lb)
            }
        };
        s.clamp(0.0, 1.0)
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Similarity::Levenshtein => "levenshtein",
            Similarity::Jaro => "jaro",
            Similarity::SmithWaterman => "smithWaterman",
            Similarity::Cosine => "cosine",
            Similarity::Jaccard => "jaccard",
            Similarity::Overlap => "overlap",
            Similarity::AbsDiffLen => "absDiffLen",
        };
        f.write_str(s)
    }
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn multiset_intersection(a: &[String], b: &[String]) -> usize {
    let cb = counts(b);
    counts(a)
        .iter()
        .map(|(t, &x)| x.min(cb.get(t).copied().unwrap_or(0)))
        .sum()
}

const SW_MATCH: f64 = 1.0;
const SW_MISMATCH: f64 = -2.0;
const SW_GAP: f64 = -0.5;

/// Best local alignment score divided by the best attainable score for the
/// shorter sequence.
// strsim's generic forms need sized iterables
fn str_refs(xs: &[String]) -> Vec<&str> {
    xs.iter().map(String::as_str).collect()
}

fn smith_waterman(a: &[String], b: &[String]) -> f64 {
    let mut prev = vec![0.0f64; b.len() + 1];
    let mut cur = vec![0.0f64; b.len() + 1];
    let mut best = 0.0f64;
    for x in a {
        for (j, y) in b.iter().enumerate() {
            let diag = prev[j] + if x == y { SW_MATCH } else { SW_MISMATCH };
            let v = diag.max(prev[j + 1] + SW_GAP).max(cur[j] + SW_GAP).max(0.0);
            cur[j + 1] = v;
            best = best.max(v);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best / (a.len().min(b.len()) as f64 * SW_MATCH)
}
