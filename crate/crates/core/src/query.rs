//! Ground-truth evaluation of counting queries over bound data.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairTable, PublicCounts, Schema};
use crate::error::{Error, Result};
use crate::formula::{evaluate_predicate, Atom, Formula, FormulaKind, SimilarityPredicate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFilter {
    All,
    Positives,
    Negatives,
}

/// The table a counting query runs over.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum QueryTarget {
    BaseTable { dataset: String },
    Pairs { filter: PairFilter },
}

impl QueryTarget {
    pub fn positives() -> Self {
        QueryTarget::Pairs {
            filter: PairFilter::Positives,
        }
    }

    pub fn negatives() -> Self {
        QueryTarget::Pairs {
            filter: PairFilter::Negatives,
        }
    }

    pub fn all_pairs() -> Self {
        QueryTarget::Pairs {
            filter: PairFilter::All,
        }
    }

    pub fn base(dataset: impl Into<String>) -> Self {
        QueryTarget::BaseTable {
            dataset: dataset.into(),
        }
    }

    fn kind(&self) -> FormulaKind {
        match self {
            QueryTarget::BaseTable { .. } => FormulaKind::Record,
            QueryTarget::Pairs { .. } => FormulaKind::Pair,
        }
    }
}

/// Public, non-sensitive description of bound data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicMetadata {
    pub schema: Schema,
    pub base_tables: Vec<String>,
    pub pairs: usize,
    pub positives: usize,
}

/// The sensitive data a session is bound to: base tables plus the labeled
/// pair table. Per-predicate results over the pairs are memoized.
#[derive(Debug)]
pub struct DataBinding {
    base: Vec<(String, Dataset)>,
    pairs: PairTable,
    predicate_cache: RwLock<HashMap<SimilarityPredicate, Arc<Vec<bool>>>>,
}

impl DataBinding {
    pub fn new(pairs: PairTable, base: Vec<(String, Dataset)>) -> Result<Self> {
        for (id, ds) in &base {
            if ds.schema() != pairs.schema() {
                return Err(Error::Schema(format!(
                    "base table `{id}` schema differs from the pair table"
                )));
            }
        }
        Ok(Self {
            base,
            pairs,
            predicate_cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn schema(&self) -> &Schema {
        self.pairs.schema()
    }

    pub fn pair_table(&self) -> &PairTable {
        &self.pairs
    }

    pub fn public_counts(&self) -> PublicCounts {
        self.pairs.public_counts()
    }

    pub fn public_metadata(&self) -> PublicMetadata {
        let c = self.public_counts();
        PublicMetadata {
            schema: self.schema().clone(),
            base_tables: self.base.iter().map(|(id, _)| id.clone()).collect(),
            pairs: c.pairs,
            positives: c.positives,
        }
    }

    pub fn base_table(&self, id: &str) -> Result<&Dataset> {
        self.base
            .iter()
            .find(|(name, _)| name == id)
            .map(|(_, ds)| ds)
            .ok_or_else(|| Error::UnknownTarget(id.to_string()))
    }

    /// Sensitivity of a count over `target`: one base record changes a
    /// base-table count by 1 and a pair count by the table's stability.
    pub fn sensitivity(&self, target: &QueryTarget) -> u32 {
        match target {
            QueryTarget::BaseTable { .. } => 1,
            QueryTarget::Pairs { .. } => self.pairs.stability(),
        }
    }

    /// Validates that `formula` can be counted over `target`.
    pub fn check(&self, formula: &Formula, target: &QueryTarget) -> Result<()> {
        formula.validate(self.schema())?;
        if let QueryTarget::BaseTable { dataset } = target {
            self.base_table(dataset)?;
        }
        if formula.kind() != target.kind() {
            return Err(Error::KindMismatch(format!(
                "{:?} formula over {:?} target",
                formula.kind(),
                target.kind()
            )));
        }
        Ok(())
    }

    fn predicate_column(&self, p: &SimilarityPredicate) -> Result<Arc<Vec<bool>>> {
        if let Some(col) = self.predicate_cache.read().expect("cache poisoned").get(p) {
            return Ok(col.clone());
        }
        let schema = self.schema();
        let col = self
            .pairs
            .pairs()
            .iter()
            .map(|pair| evaluate_predicate(p, schema, &pair.left, &pair.right))
            .collect::<Result<Vec<bool>>>()?;
        let col = Arc::new(col);
        self.predicate_cache
            .write()
            .expect("cache poisoned")
            .insert(p.clone(), col.clone());
        Ok(col)
    }

    /// Per-pair truth values of `formula` over the whole pair table.
    pub fn pair_mask(&self, formula: &Formula) -> Result<Vec<bool>> {
        formula.validate(self.schema())?;
        let n = self.pairs.len();
        let mut out = vec![false; n];
        for clause in formula.clauses() {
            let mut acc = vec![true; n];
            for atom in clause {
                let Atom::Similar(p) = atom else {
                    return Err(Error::KindMismatch(
                        "NULL test applied to record pairs".into(),
                    ));
                };
                let col = self.predicate_column(p)?;
                for (a, &c) in acc.iter_mut().zip(col.iter()) {
                    *a &= c;
                }
            }
            for (o, a) in out.iter_mut().zip(acc) {
                *o |= a;
            }
        }
        Ok(out)
    }

    /// The exact count `q_phi(D)`.
    pub fn true_count(&self, formula: &Formula, target: &QueryTarget) -> Result<u64> {
        self.check(formula, target)?;
        match target {
            QueryTarget::BaseTable { dataset } => {
                let ds = self.base_table(dataset)?;
                let mut n = 0;
                for row in ds.rows() {
                    if formula.eval_record(ds.schema(), row)? {
                        n += 1;
                    }
                }
                Ok(n)
            }
            QueryTarget::Pairs { filter } => {
                let mask = self.pair_mask(formula)?;
                Ok(self
                    .pairs
                    .pairs()
                    .iter()
                    .zip(mask)
                    .filter(|(p, hit)| {
                        *hit && match filter {
                            PairFilter::All => true,
                            PairFilter::Positives => p.label.is_match(),
                            PairFilter::Negatives => !p.label.is_match(),
                        }
                    })
                    .count() as u64)
            }
        }
    }
}
