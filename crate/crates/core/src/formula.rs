//! Similarity predicates and the boolean formulas built from them.
//!
//! JSON grammar (shared by files, the HTTP service and the CLI):
//!
//! ```json
//! {"shape": "disjunction", "atoms": [{"attr": "name", "transform": "qgram2", "sim": "jaccard", "theta": 0.7}]}
//! {"shape": "dnf", "clauses": [[atom, atom], [atom]]}
//! {"shape": "conjunction", "atoms": [{"attr": "phone", "isNull": true}]}
//! ```

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::data::{Record, Schema};
use crate::error::{Error, Result};
use crate::similarity::{Similarity, Transformation};

/// `sim(t(left.A), t(right.A)) > theta`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPredicate {
    #[serde(rename = "attr")]
    pub attribute: String,
    #[serde(rename = "transform")]
    pub transformation: Transformation,
    #[serde(rename = "sim")]
    pub similarity: Similarity,
    #[serde(rename = "theta")]
    pub threshold: f64,
}

impl Eq for SimilarityPredicate {}

impl Hash for SimilarityPredicate {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.attribute.hash(state);
        self.transformation.hash(state);
        self.similarity.hash(state);
        self.threshold.to_bits().hash(state);
    }
}

impl SimilarityPredicate {
    pub fn new(
        attribute: impl Into<String>,
        transformation: Transformation,
        similarity: Similarity,
        threshold: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Formula(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        Ok(Self {
            attribute: attribute.into(),
            transformation,
            similarity,
            threshold,
        })
    }

    pub fn score_values(&self, left: &str, right: &str) -> f64 {
        self.similarity.score(
            &self.transformation.apply(left),
            &self.transformation.apply(right),
        )
    }
}

impl fmt::Display for SimilarityPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}({})) > {}",
            self.similarity, self.transformation, self.attribute, self.threshold
        )
    }
}

/// Evaluates one predicate on a record pair. Any NULL operand yields
/// `false`.
pub fn evaluate_predicate(
    p: &SimilarityPredicate,
    schema: &Schema,
    left: &Record,
    right: &Record,
) -> Result<bool> {
    let idx = schema.index_of(&p.attribute)?;
    Ok(match (&left[idx], &right[idx]) {
        (Some(l), Some(r)) => p.score_values(l, r) > p.threshold,
        _ => false,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    Similar(SimilarityPredicate),
    IsNull(String),
}

impl Atom {
    pub fn attribute(&self) -> &str {
        match self {
            Atom::Similar(p) => &p.attribute,
            Atom::IsNull(a) => a,
        }
    }

    pub fn kind(&self) -> FormulaKind {
        match self {
            Atom::Similar(_) => FormulaKind::Pair,
            Atom::IsNull(_) => FormulaKind::Record,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Similar(p) => p.fmt(f),
            Atom::IsNull(a) => write!(f, "isNull({a})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AtomRepr {
    attr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Transformation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim: Option<Similarity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    is_null: bool,
}

impl Serialize for Atom {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Atom::Similar(p) => AtomRepr {
                attr: p.attribute.clone(),
                transform: Some(p.transformation),
                sim: Some(p.similarity),
                theta: Some(p.threshold),
                is_null: false,
            },
            Atom::IsNull(a) => AtomRepr {
                attr: a.clone(),
                transform: None,
                sim: None,
                theta: None,
                is_null: true,
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = AtomRepr::deserialize(d)?;
        match (r.is_null, r.transform, r.sim, r.theta) {
            (true, None, None, None) => Ok(Atom::IsNull(r.attr)),
            (false, Some(t), Some(s), Some(theta)) => SimilarityPredicate::new(r.attr, t, s, theta)
                .map(Atom::Similar)
                .map_err(D::Error::custom),
            _ => Err(D::Error::custom(
                "atom needs either isNull or all of transform, sim, theta",
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disjunction,
    Conjunction,
    Dnf,
}

/// What a formula can be evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormulaKind {
    /// Similarity atoms over record pairs.
    Pair,
    /// NULL tests over single base records.
    Record,
}

/// A boolean formula kept internally in disjunctive normal form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Formula {
    shape: Shape,
    clauses: Vec<Vec<Atom>>,
}

impl Formula {
    pub fn disjunction(atoms: Vec<Atom>) -> Result<Self> {
        Self::build(
            Shape::Disjunction,
            atoms.into_iter().map(|a| vec![a]).collect(),
        )
    }

    pub fn conjunction(atoms: Vec<Atom>) -> Result<Self> {
        Self::build(Shape::Conjunction, vec![atoms])
    }

    pub fn dnf(clauses: Vec<Vec<Atom>>) -> Result<Self> {
        Self::build(Shape::Dnf, clauses)
    }

    pub fn atom(atom: Atom) -> Self {
        Self {
            shape: Shape::Disjunction,
            clauses: vec![vec![atom]],
        }
    }

    pub fn is_null(attribute: impl Into<String>) -> Self {
        Self::atom(Atom::IsNull(attribute.into()))
    }

    fn build(shape: Shape, clauses: Vec<Vec<Atom>>) -> Result<Self> {
        if clauses.is_empty() || clauses.iter().any(Vec::is_empty) {
            return Err(Error::Formula("formula needs at least one atom".into()));
        }
        let kind = clauses[0][0].kind();
        if clauses.iter().flatten().any(|a| a.kind() != kind) {
            return Err(Error::Formula(
                "formula mixes pair predicates with NULL tests".into(),
            ));
        }
        Ok(Self { shape, clauses })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn clauses(&self) -> &[Vec<Atom>] {
        &self.clauses
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.clauses.iter().flatten()
    }

    pub fn kind(&self) -> FormulaKind {
        self.clauses[0][0].kind()
    }

    /// Checks every attribute against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for atom in self.atoms() {
            schema.index_of(atom.attribute())?;
        }
        Ok(())
    }

    /// Generic evaluation given a per-atom truth function.
    pub fn eval_with<F>(&self, mut atom_value: F) -> Result<bool>
    where
        F: FnMut(&Atom) -> Result<bool>,
    {
        for clause in &self.clauses {
            let mut all = true;
            for atom in clause {
                if !atom_value(atom)? {
                    all = false;
                    break;
                }
            }
            if all {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn eval_pair(&self, schema: &Schema, left: &Record, right: &Record) -> Result<bool> {
        self.eval_with(|atom| match atom {
            Atom::Similar(p) => evaluate_predicate(p, schema, left, right),
            Atom::IsNull(_) => Err(Error::KindMismatch(
                "NULL test applied to a record pair".into(),
            )),
        })
    }

    pub fn eval_record(&self, schema: &Schema, record: &Record) -> Result<bool> {
        self.eval_with(|atom| match atom {
            Atom::IsNull(a) => Ok(record[schema.index_of(a)?].is_none()),
            Atom::Similar(_) => Err(Error::KindMismatch(
                "similarity predicate applied to a single record".into(),
            )),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("formula serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" OR ")?;
            }
            let paren = clause.len() > 1 && self.clauses.len() > 1;
            if paren {
                f.write_str("(")?;
            }
            for (j, atom) in clause.iter().enumerate() {
                if j > 0 {
                    f.write_str(" AND ")?;
                }
                atom.fmt(f)?;
            }
            if paren {
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormulaRepr {
    shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<Atom>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clauses: Option<Vec<Vec<Atom>>>,
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self.shape {
            Shape::Disjunction => FormulaRepr {
                shape: self.shape,
                atoms: Some(self.clauses.iter().map(|c| c[0].clone()).collect()),
                clauses: None,
            },
            Shape::Conjunction => FormulaRepr {
                shape: self.shape,
                atoms: Some(self.clauses[0].clone()),
                clauses: None,
            },
            Shape::Dnf => FormulaRepr {
                shape: self.shape,
                atoms: None,
                clauses: Some(self.clauses.clone()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = FormulaRepr::deserialize(d)?;
        let built = match (r.shape, r.atoms, r.clauses) {
            (Shape::Disjunction, Some(atoms), None) => Formula::disjunction(atoms),
            (Shape::Conjunction, Some(atoms), None) => Formula::conjunction(atoms),
            (Shape::Dnf, None, Some(clauses)) => Formula::dnf(clauses),
            (Shape::Dnf, _, _) => return Err(D::Error::custom("dnf formulas use `clauses`")),
            _ => return Err(D::Error::custom("disjunction/conjunction use `atoms`")),
        };
        built.map_err(D::Error::custom)
    }
}
