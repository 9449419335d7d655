//! Restaurant-style synthetic entity-resolution data: perturbed duplicates
//! for matches, unrelated records for non-matches.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_pair_table, load_dataset, load_labels, write_labels, Dataset, Label, PairLabel, Record,
    Schema,
};
use crate::error::{invalid, Error, Result};
use crate::query::DataBinding;

pub const ATTRIBUTES: [&str; 5] = ["name", "addr", "city", "phone", "type"];

const NAME_HEAD: [&str; 24] = [
    "golden", "blue", "red", "happy", "little", "royal", "lucky", "green", "silver", "old",
    "grand", "sunset", "harbor", "village", "corner", "ocean", "mountain", "river", "star", "jade",
    "imperial", "rustic", "urban", "crimson",
];
const NAME_TAIL: [&str; 20] = [
    "dragon",
    "lotus",
    "oak",
    "bistro",
    "kitchen",
    "grill",
    "cafe",
    "diner",
    "tavern",
    "house",
    "palace",
    "table",
    "spoon",
    "fork",
    "pantry",
    "garden",
    "terrace",
    "shack",
    "bar",
    "trattoria",
];
const STREETS: [&str; 24] = [
    "main",
    "oak",
    "pine",
    "maple",
    "cedar",
    "elm",
    "washington",
    "lake",
    "hill",
    "sunset",
    "park",
    "broadway",
    "market",
    "mission",
    "valencia",
    "church",
    "union",
    "howard",
    "folsom",
    "geary",
    "polk",
    "hayes",
    "castro",
    "divisadero",
];
const SUFFIXES: [(&str, &str); 4] = [
    ("st", "street"),
    ("ave", "avenue"),
    ("blvd", "boulevard"),
    ("rd", "road"),
];
const CITIES: [&str; 8] = [
    "san francisco",
    "los angeles",
    "new york",
    "atlanta",
    "las vegas",
    "chicago",
    "boston",
    "seattle",
];
const AREA_CODES: [&str; 6] = ["415", "213", "212", "404", "702", "312"];
const CUISINES: [(&str, &str); 12] = [
    ("american", "american (new)"),
    ("italian", "italian cuisine"),
    ("chinese", "asian"),
    ("french", "french (classic)"),
    ("japanese", "sushi"),
    ("mexican", "tex-mex"),
    ("indian", "south asian"),
    ("thai", "asian"),
    ("greek", "mediterranean"),
    ("steakhouse", "steak houses"),
    ("seafood", "fish"),
    ("californian", "american (new)"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SynthConfig {
    pub pairs: usize,
    pub positive_fraction: f64,
    pub seed: u64,
    /// Per-attribute NULL probability, in [`ATTRIBUTES`] order.
    pub null_rates: [f64; 5],
    /// Probability that a duplicate's value gets one or two character edits.
    pub typo_rate: f64,
    /// Probability that a duplicate's multi-token value has two tokens swapped.
    pub swap_rate: f64,
    /// Extra probability that a duplicate loses a field.
    pub drop_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            positive_fraction: 0.5,
            seed: 0,
            null_rates: [0.0, 0.1, 0.15, 0.05, 0.3],
            typo_rate: 0.4,
            swap_rate: 0.2,
            drop_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub left: Dataset,
    pub right: Dataset,
    pub labels: Vec<PairLabel>,
}

fn entity<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut name = format!(
        "{} {}",
        NAME_HEAD.choose(rng).unwrap(),
        NAME_TAIL.choose(rng).unwrap()
    );
    if rng.random_bool(0.3) {
        name.push(' ');
        name.push_str(NAME_TAIL.choose(rng).unwrap());
    }
    let addr = format!(
        "{} {} {}",
        rng.random_range(1..10_000),
        STREETS.choose(rng).unwrap(),
        SUFFIXES.choose(rng).unwrap().0
    );
    let phone = format!(
        "{}-{:03}-{:04}",
        AREA_CODES.choose(rng).unwrap(),
        rng.random_range(200..1000),
        rng.random_range(0..10_000)
    );
    vec![
        name,
        addr,
        CITIES.choose(rng).unwrap().to_string(),
        phone,
        CUISINES.choose(rng).unwrap().0.to_string(),
    ]
}

fn typo<R: Rng>(value: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    for _ in 0..rng.random_range(1..=2) {
        if chars.is_empty() {
            break;
        }
        let i = rng.random_range(0..chars.len());
        let letter = rng.random_range(b'a'..=b'z') as char;
        match rng.random_range(0..3) {
            0 => chars[i] = letter,
            1 => {
                chars.remove(i);
            }
            _ => chars.insert(i, letter),
        }
    }
    chars.into_iter().collect()
}

fn swap_tokens<R: Rng>(value: &str, rng: &mut R) -> String {
    let mut tokens: Vec<&str> = value.split(' ').collect();
    if tokens.len() >= 2 {
        let i = rng.random_range(0..tokens.len() - 1);
        tokens.swap(i, i + 1);
    }
    tokens.join(" ")
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.pairs < 2 {
            return Err(invalid("synthetic data needs at least 2 pairs"));
        }
        let rates = self.null_rates.iter().chain([
            &self.positive_fraction,
            &self.typo_rate,
            &self.swap_rate,
            &self.drop_rate,
        ]);
        if rates.into_iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(invalid("synthetic rates must lie in [0, 1]"));
        }
        Ok(())
    }

    fn duplicate<R: Rng>(&self, clean: &[String], rng: &mut R) -> Vec<String> {
        let mut out = clean.to_vec();
        let [name, addr, city, phone, kind] = &mut out[..] else {
            unreachable!("entity arity is fixed");
        };
        if rng.random_bool(self.swap_rate) {
            *name = swap_tokens(name, rng);
        }
        for v in [&mut *name, &mut *addr, &mut *city] {
            if rng.random_bool(self.typo_rate) {
                *v = typo(v, rng);
            }
        }
        if rng.random_bool(0.3) {
            if let Some((short, long)) = SUFFIXES.iter().find(|(s, _)| addr.ends_with(s)) {
                *addr = format!("{}{long}", &addr[..addr.len() - short.len()]);
            }
        }
        if rng.random_bool(0.3) {
            *phone = match rng.random_range(0..2) {
                0 => phone.replacen('-', "/", 1),
                _ => phone.replace('-', ""),
            };
        } else if rng.random_bool(self.typo_rate / 2.0) {
            *phone = typo(phone, rng);
        }
        if rng.random_bool(0.3) {
            if let Some((_, alt)) = CUISINES.iter().find(|(c, _)| c == kind) {
                *kind = alt.to_string();
            }
        }
        out
    }

    fn with_nulls<R: Rng>(&self, values: Vec<String>, extra: f64, rng: &mut R) -> Record {
        values
            .into_iter()
            .zip(self.null_rates)
            .map(|(v, rate)| (!rng.random_bool((rate + extra).min(1.0))).then_some(v))
            .collect()
    }

    /// Left and right tables of `pairs` records each. Pair `i` joins left
    /// record `i` to right record `i` for matches; non-matches pair distinct
    /// unrelated records through a derangement. Every record is used once.
    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.pairs;
        let positives = ((n as f64 * self.positive_fraction).round() as usize).min(n);
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for _ in 0..positives {
            let clean = entity(&mut rng);
            let dup = self.duplicate(&clean, &mut rng);
            left.push(self.with_nulls(clean, 0.0, &mut rng));
            right.push(self.with_nulls(dup, self.drop_rate, &mut rng));
        }
        for _ in positives..n {
            let a = entity(&mut rng);
            let b = entity(&mut rng);
            left.push(self.with_nulls(a, 0.0, &mut rng));
            right.push(self.with_nulls(b, 0.0, &mut rng));
        }
        let mut labels: Vec<PairLabel> = (0..positives)
            .map(|i| PairLabel {
                left: i,
                right: i,
                label: Label::Match,
            })
            .collect();
        let negatives = n - positives;
        if negatives > 0 {
            // rotate a shuffled cycle so that no record meets its own row
            let mut order: Vec<usize> = (positives..n).collect();
            order.shuffle(&mut rng);
            for (j, &l) in order.iter().enumerate() {
                labels.push(PairLabel {
                    left: l,
                    right: order[(j + 1) % negatives],
                    label: Label::NonMatch,
                });
            }
        }
        let schema = Schema::new(ATTRIBUTES)?;
        Ok(SyntheticData {
            left: Dataset::new(schema.clone(), left)?,
            right: Dataset::new(schema, right)?,
            labels,
        })
    }
}

impl SyntheticData {
    pub fn binding(&self) -> Result<DataBinding> {
        let pairs = build_pair_table("left", &self.left, "right", &self.right, &self.labels, 1)?;
        DataBinding::new(
            pairs,
            vec![
                ("left".into(), self.left.clone()),
                ("right".into(), self.right.clone()),
            ],
        )
    }

    /// Writes `left.csv`, `right.csv` and `labels.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })
        };
        self.left.write_csv(create("left.csv")?)?;
        self.right.write_csv(create("right.csv")?)?;
        write_labels(&self.labels, create("labels.csv")?)
    }
}

/// Where a session's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum DatasetSource {
    Synthetic(SynthConfig),
    #[serde(rename_all = "camelCase")]
    Files {
        left: PathBuf,
        right: PathBuf,
        labels: PathBuf,
        #[serde(default = "one")]
        stability: u32,
    },
}

fn one() -> u32 {
    1
}

impl DatasetSource {
    /// Loads the data; relative file paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<DataBinding> {
        match self {
            DatasetSource::Synthetic(cfg) => cfg.generate()?.binding(),
            DatasetSource::Files {
                left,
                right,
                labels,
                stability,
            } => {
                let resolve = |p: &PathBuf| match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                let l = load_dataset(resolve(left), None)?;
                let r = load_dataset(resolve(right), Some(l.schema()))?;
                let lab = load_labels(resolve(labels))?;
                let pairs = build_pair_table("left", &l, "right", &r, &lab, *stability)?;
                DataBinding::new(pairs, vec![("left".into(), l), ("right".into(), r)])
            }
        }
    }
}
