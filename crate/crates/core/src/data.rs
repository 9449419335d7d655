//! Tabular inputs: schemas, base datasets and the labeled pair table that
//! most queries run against.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered attribute names of a table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Schema {
    attributes: Vec<String>,
}

impl Schema {
    pub fn new<I, S>(attributes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let attributes: Vec<String> = attributes.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &attributes {
            if name.trim().is_empty() {
                return Err(Error::Schema("empty attribute name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{name}`")));
            }
        }
        Ok(Self { attributes })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }
}

impl TryFrom<Vec<String>> for Schema {
    type Error = Error;

    fn try_from(value: Vec<String>) -> Result<Self> {
        Schema::new(value)
    }
}

impl From<Schema> for Vec<String> {
    fn from(value: Schema) -> Self {
        value.attributes
    }
}

/// One row; `None` is NULL.
pub type Record = Vec<Option<String>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Record>) -> Result<Self> {
        let expected = schema.len();
        for (row, values) in rows.iter().enumerate() {
            if values.len() != expected {
                return Err(Error::Arity {
                    row,
                    found: values.len(),
                    expected,
                });
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses UTF-8 CSV with a header row. Empty cells become NULL. When
    /// `schema` is given the header must match it exactly.
    pub fn from_csv_reader<R: Read>(reader: R, schema: Option<&Schema>) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = Schema::new(csv.headers()?.iter().map(str::to_string))?;
        if let Some(expected) = schema {
            if expected != &header {
                return Err(Error::Schema(format!(
                    "header {:?} does not match schema {:?}",
                    header.attributes(),
                    expected.attributes()
                )));
            }
        }
        let mut rows = Vec::new();
        for (row, result) in csv.records().enumerate() {
            let rec = result?;
            if rec.len() != header.len() {
                return Err(Error::Arity {
                    row,
                    found: rec.len(),
                    expected: header.len(),
                });
            }
            rows.push(
                rec.iter()
                    .map(|v| {
                        if v.is_empty() {
                            None
                        } else {
                            Some(v.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(Self {
            schema: header,
            rows,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(self.schema.attributes())?;
        for row in &self.rows {
            csv.write_record(row.iter().map(|v| v.as_deref().unwrap_or("")))?;
        }
        csv.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Reads a dataset file; see [`Dataset::from_csv_reader`].
pub fn load_dataset(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_csv_reader(file, schema)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Match,
    #[serde(rename = "-")]
    NonMatch,
}

impl Label {
    pub fn is_match(self) -> bool {
        self == Label::Match
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Match => "+",
            Label::NonMatch => "-",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" => Ok(Label::Match),
            "-" => Ok(Label::NonMatch),
            other => Err(Error::Label(other.to_string())),
        }
    }
}

/// A `(leftIdx, rightIdx, label)` row of a label file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLabel {
    pub left: usize,
    pub right: usize,
    pub label: Label,
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<PairLabel>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for result in csv.records() {
        let rec = result?;
        if rec.len() != 3 {
            return Err(Error::Arity {
                row: out.len(),
                found: rec.len(),
                expected: 3,
            });
        }
        let parse_idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad record index `{s}`")))
        };
        out.push(PairLabel {
            left: parse_idx(&rec[0])?,
            right: parse_idx(&rec[1])?,
            label: rec[2].parse()?,
        });
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<PairLabel>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_labels(file)
}

pub fn write_labels<W: Write>(labels: &[PairLabel], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["leftIdx", "rightIdx", "label"])?;
    for l in labels {
        csv.write_record([l.left.to_string(), l.right.to_string(), l.label.to_string()])?;
    }
    csv.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

/// Sizes of the training view that are released as public knowledge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicCounts {
    pub pairs: usize,
    pub positives: usize,
}

impl PublicCounts {
    pub fn negatives(&self) -> usize {
        self.pairs - self.positives
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub left: Record,
    pub right: Record,
    pub label: Label,
}

/// The labeled training pairs. Each base record appears in at most
/// `stability` pairs, so any count over the table has that sensitivity.
#[derive(Clone, Debug)]
pub struct PairTable {
    left_id: String,
    right_id: String,
    schema: Schema,
    pairs: Vec<LabeledPair>,
    stability: u32,
    counts: PublicCounts,
}

impl PairTable {
    pub fn left_id(&self) -> &str {
        &self.left_id
    }

    pub fn right_id(&self) -> &str {
        &self.right_id
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn stability(&self) -> u32 {
        self.stability
    }

    pub fn public_counts(&self) -> PublicCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Builds a table directly from pairs; used by tests and generators.
    pub fn from_pairs(schema: Schema, pairs: Vec<LabeledPair>, stability: u32) -> Result<Self> {
        if stability == 0 {
            return Err(Error::InvalidParameter("stability must be >= 1".into()));
        }
        for (row, p) in pairs.iter().enumerate() {
            for rec in [&p.left, &p.right] {
                if rec.len() != schema.len() {
                    return Err(Error::Arity {
                        row,
                        found: rec.len(),
                        expected: schema.len(),
                    });
                }
            }
        }
        let positives = pairs.iter().filter(|p| p.label.is_match()).count();
        Ok(Self {
            left_id: "left".into(),
            right_id: "right".into(),
            schema,
            counts: PublicCounts {
                pairs: pairs.len(),
                positives,
            },
            pairs,
            stability,
        })
    }
}

fn check_references(
    side: &'static str,
    len: usize,
    indices: impl Iterator<Item = usize>,
    stability: u32,
) -> Result<()> {
    let mut uses = vec![0usize; len];
    for index in indices {
        let slot = uses
            .get_mut(index)
            .ok_or(Error::UnknownIndex { side, index, len })?;
        *slot += 1;
        if *slot > stability as usize {
            return Err(Error::StabilityViolation {
                side,
                index,
                count: *slot,
                stability,
            });
        }
    }
    Ok(())
}

/// Joins two datasets through a label list into a [`PairTable`] with
/// stability `m`.
pub fn build_pair_table(
    left_id: &str,
    left: &Dataset,
    right_id: &str,
    right: &Dataset,
    labels: &[PairLabel],
    m: u32,
) -> Result<PairTable> {
    if m == 0 {
        return Err(Error::InvalidParameter("stability must be >= 1".into()));
    }
    if left.schema() != right.schema() {
        return Err(Error::Schema(
            "left and right datasets must share one schema".into(),
        ));
    }
    check_references("left", left.len(), labels.iter().map(|l| l.left), m)?;
    check_references("right", right.len(), labels.iter().map(|l| l.right), m)?;
    let pairs = labels
        .iter()
        .map(|l| LabeledPair {
            left: left.rows[l.left].clone(),
            right: right.rows[l.right].clone(),
            label: l.label,
        })
        .collect();
    let mut table = PairTable::from_pairs(left.schema().clone(), pairs, m)?;
    table.left_id = left_id.to_string();
    table.right_id = right_id.to_string();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(n: usize) -> Schema {
        Schema::new((0..n).map(|i| format!("a{i}"))).unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_blanks() {
        assert!(Schema::new(["a", "a"]).is_err());
        assert!(Schema::new(["a", " "]).is_err());
        assert_eq!(Schema::new(["x", "y"]).unwrap().index_of("y").unwrap(), 1);
    }

    #[test]
    fn csv_empty_cells_are_null() {
        let data = "name,addr,city,phone,type\nfoo,,nyc,123,\n";
        let ds = Dataset::from_csv_reader(data.as_bytes(), None).unwrap();
        assert_eq!(ds.schema().len(), 5);
        assert_eq!(
            ds.rows()[0],
            vec![
                Some("foo".into()),
                None,
                Some("nyc".into()),
                Some("123".into()),
                None
            ]
        );
    }

    #[test]
    fn csv_four_attributes() {
        let data = "title,authors,venue,year\na,b,c,1999\n";
        let ds = Dataset::from_csv_reader(data.as_bytes(), None).unwrap();
        assert_eq!(ds.schema().len(), 4);
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn csv_header_only_is_empty() {
        let ds = Dataset::from_csv_reader("a,b\n".as_bytes(), None).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn csv_bad_arity() {
        let err = Dataset::from_csv_reader("a,b\n1,2,3\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Arity { found: 3, .. }));
    }

    #[test]
    fn csv_header_must_match_given_schema() {
        let s = Schema::new(["a", "c"]).unwrap();
        assert!(Dataset::from_csv_reader("a,b\n".as_bytes(), Some(&s)).is_err());
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(
            load_dataset("/nonexistent/file.csv", None),
            Err(Error::Io { .. })
        ));
    }

    fn two_tables(n: usize) -> (Dataset, Dataset) {
        let rows: Vec<Record> = (0..n).map(|i| vec![Some(format!("r{i}"))]).collect();
        (
            Dataset::new(schema(1), rows.clone()).unwrap(),
            Dataset::new(schema(1), rows).unwrap(),
        )
    }

    #[test]
    fn pair_table_counts() {
        for (n, pos) in [(100, 50), (1000, 500)] {
            let (l, r) = two_tables(n);
            let labels: Vec<PairLabel> = (0..n)
                .map(|i| PairLabel {
                    left: i,
                    right: i,
                    label: if i < pos {
                        Label::Match
                    } else {
                        Label::NonMatch
                    },
                })
                .collect();
            let t = build_pair_table("l", &l, "r", &r, &labels, 1).unwrap();
            assert_eq!(t.public_counts().pairs, n);
            assert_eq!(t.public_counts().positives, pos);
            assert_eq!(t.public_counts().negatives(), n - pos);
        }
    }

    #[test]
    fn pair_table_rejects_reuse_beyond_stability() {
        let (l, r) = two_tables(3);
        let labels = vec![
            PairLabel {
                left: 0,
                right: 0,
                label: Label::Match,
            },
            PairLabel {
                left: 0,
                right: 1,
                label: Label::NonMatch,
            },
        ];
        assert!(matches!(
            build_pair_table("l", &l, "r", &r, &labels, 1),
            Err(Error::StabilityViolation {
                side: "left",
                index: 0,
                ..
            })
        ));
        assert!(build_pair_table("l", &l, "r", &r, &labels, 2).is_ok());
    }

    #[test]
    fn pair_table_rejects_unknown_index() {
        let (l, r) = two_tables(2);
        let labels = vec![PairLabel {
            left: 0,
            right: 5,
            label: Label::Match,
        }];
        assert!(matches!(
            build_pair_table("l", &l, "r", &r, &labels, 1),
            Err(Error::UnknownIndex {
                side: "right",
                index: 5,
                ..
            })
        ));
    }

    #[test]
    fn labels_round_trip() {
        let labels = vec![
            PairLabel {
                left: 3,
                right: 4,
                label: Label::Match,
            },
            PairLabel {
                left: 1,
                right: 0,
                label: Label::NonMatch,
            },
        ];
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
        assert!(read_labels("l,r,label\n0,0,?\n".as_bytes()).is_err());
    }
}
