#![allow(dead_code)]

use std::sync::Arc;

use privclean_core::data::{Dataset, Label, LabeledPair, PairTable, Record, Schema};
use privclean_core::engine::{
    Answer, EngineResponse, QueryInterface, QueryRequest, ResponseStatus,
};
use privclean_core::formula::{Atom, Formula, SimilarityPredicate};
use privclean_core::mechanisms::Order;
use privclean_core::quality::{QualityReport, Task};
use privclean_core::query::{DataBinding, PairFilter, PublicMetadata, QueryTarget};
use privclean_core::similarity::{Similarity, Transformation};
use privclean_core::Result;
use rand::seq::IndexedRandom;
use rand::Rng;

const TOKENS: [&str; 10] = [
    "ab", "abc", "b", "cafe", "caffe", "bar", "x y", "rome", "roma", "luigi's",
];

const TRANSFORMS: [Transformation; 4] = [
    Transformation::Lowercase,
    Transformation::QGram(2),
    Transformation::QGram(3),
    Transformation::SpaceTokenize,
];

const THRESHOLDS: [f64; 6] = [0.0, 0.2, 0.25, 0.5, 0.75, 1.0];

fn random_value<R: Rng>(rng: &mut R) -> Option<String> {
    if rng.random_bool(0.2) {
        return None;
    }
    let n = rng.random_range(1..=3);
    let words: Vec<&str> = (0..n).map(|_| *TOKENS.choose(rng).unwrap()).collect();
    Some(words.join(" "))
}

fn random_record<R: Rng>(width: usize, rng: &mut R) -> Record {
    (0..width).map(|_| random_value(rng)).collect()
}

/// A random labeled instance with at most `max_rows` pairs, at least one of
/// each label, and a base table `left` holding the left records.
pub fn random_binding<R: Rng>(max_rows: usize, rng: &mut R) -> DataBinding {
    let width = rng.random_range(1..=4);
    let schema = Schema::new((0..width).map(|i| format!("a{i}"))).unwrap();
    let n = rng.random_range(2..=max_rows);
    let mut pairs: Vec<LabeledPair> = (0..n)
        .map(|_| LabeledPair {
            left: random_record(width, rng),
            right: random_record(width, rng),
            label: if rng.random_bool(0.4) {
                Label::Match
            } else {
                Label::NonMatch
            },
        })
        .collect();
    pairs[0].label = Label::Match;
    pairs[1].label = Label::NonMatch;
    let left = Dataset::new(
        schema.clone(),
        pairs.iter().map(|p| p.left.clone()).collect(),
    )
    .unwrap();
    let table = PairTable::from_pairs(schema, pairs, 1).unwrap();
    DataBinding::new(table, vec![("left".into(), left)]).unwrap()
}

pub fn random_predicate<R: Rng>(schema: &Schema, rng: &mut R) -> SimilarityPredicate {
    let attr = schema.attributes().choose(rng).unwrap().clone();
    let theta = if rng.random_bool(0.5) {
        *THRESHOLDS.choose(rng).unwrap()
    } else {
        rng.random_range(0.0..=1.0)
    };
    SimilarityPredicate::new(
        attr,
        *TRANSFORMS.choose(rng).unwrap(),
        *Similarity::CATALOG.choose(rng).unwrap(),
        theta,
    )
    .unwrap()
}

pub fn random_pair_formula<R: Rng>(schema: &Schema, rng: &mut R) -> Formula {
    let atoms = |n: usize, rng: &mut R| -> Vec<Atom> {
        (0..n)
            .map(|_| Atom::Similar(random_predicate(schema, rng)))
            .collect()
    };
    match rng.random_range(0..3) {
        0 => {
            let n = rng.random_range(1..=3);
            Formula::disjunction(atoms(n, rng)).unwrap()
        }
        1 => {
            let n = rng.random_range(1..=3);
            Formula::conjunction(atoms(n, rng)).unwrap()
        }
        _ => {
            let clauses = (0..rng.random_range(1..=3))
                .map(|_| {
                    let n = rng.random_range(1..=3);
                    atoms(n, rng)
                })
                .collect();
            Formula::dnf(clauses).unwrap()
        }
    }
}

pub fn random_record_formula<R: Rng>(schema: &Schema, rng: &mut R) -> Formula {
    let n = rng.random_range(1..=2);
    let atoms = (0..n)
        .map(|_| Atom::IsNull(schema.attributes().choose(rng).unwrap().clone()))
        .collect();
    if rng.random_bool(0.5) {
        Formula::disjunction(atoms).unwrap()
    } else {
        Formula::conjunction(atoms).unwrap()
    }
}

fn naive_atom(atom: &Atom, schema: &Schema, left: &Record, right: Option<&Record>) -> bool {
    let col = |a: &str| schema.attributes().iter().position(|x| x == a).unwrap();
    match (atom, right) {
        (Atom::Similar(p), Some(right)) => {
            let i = col(&p.attribute);
            match (&left[i], &right[i]) {
                (Some(l), Some(r)) => {
                    let s = p
                        .similarity
                        .score(&p.transformation.apply(l), &p.transformation.apply(r));
                    s > p.threshold
                }
                _ => false,
            }
        }
        (Atom::IsNull(a), None) => left[col(a)].is_none(),
        _ => panic!("atom kind does not fit the row"),
    }
}

fn naive_eval(f: &Formula, schema: &Schema, left: &Record, right: Option<&Record>) -> bool {
    f.clauses()
        .iter()
        .any(|clause| clause.iter().all(|a| naive_atom(a, schema, left, right)))
}

/// Full-scan count, one row at a time with no cached columns.
pub fn naive_count(data: &DataBinding, f: &Formula, target: &QueryTarget) -> u64 {
    let schema = data.schema();
    match target {
        QueryTarget::BaseTable { dataset } => data
            .base_table(dataset)
            .unwrap()
            .rows()
            .iter()
            .filter(|r| naive_eval(f, schema, r, None))
            .count() as u64,
        QueryTarget::Pairs { filter } => data
            .pair_table()
            .pairs()
            .iter()
            .filter(|p| match filter {
                PairFilter::All => true,
                PairFilter::Positives => p.label == Label::Match,
                PairFilter::Negatives => p.label != Label::Match,
            })
            .filter(|p| naive_eval(f, schema, &p.left, Some(&p.right)))
            .count() as u64,
    }
}

/// Quality by direct tallying over the pair list.
pub fn naive_quality(data: &DataBinding, f: Option<&Formula>, task: Task) -> QualityReport {
    let schema = data.schema();
    let (mut tp, mut chosen, mut positives) = (0usize, 0usize, 0usize);
    let pairs = data.pair_table().pairs();
    for p in pairs {
        let hit = f.is_some_and(|f| naive_eval(f, schema, &p.left, Some(&p.right)));
        let pos = p.label == Label::Match;
        positives += pos as usize;
        chosen += hit as usize;
        tp += (hit && pos) as usize;
    }
    let recall = tp as f64 / positives as f64;
    match task {
        Task::Blocking => QualityReport {
            recall,
            cost: chosen as f64 / pairs.len() as f64,
            ..Default::default()
        },
        Task::Matching => {
            let precision = if chosen == 0 {
                0.0
            } else {
                tp as f64 / chosen as f64
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
                precision_undefined: chosen == 0,
                ..Default::default()
            }
        }
    }
}

/// Compares `true_count` and `quality` against the naive scans on
/// `instances` random instances. Returns the first mismatch.
pub fn oracle_equivalence<R: Rng>(
    instances: usize,
    rng: &mut R,
) -> std::result::Result<(), String> {
    for inst in 0..instances {
        let data = random_binding(200, rng);
        let schema = data.schema().clone();
        for _ in 0..8 {
            let f = random_pair_formula(&schema, rng);
            for target in [
                QueryTarget::all_pairs(),
                QueryTarget::positives(),
                QueryTarget::negatives(),
            ] {
                let got = data.true_count(&f, &target).map_err(|e| e.to_string())?;
                let want = naive_count(&data, &f, &target);
                if got != want {
                    return Err(format!(
                        "instance {inst}: count {got} != {want} for {f} over {target:?}"
                    ));
                }
            }
            for task in [Task::Blocking, Task::Matching] {
                let got = data.quality(Some(&f), task).map_err(|e| e.to_string())?;
                let want = naive_quality(&data, Some(&f), task);
                if got != want {
                    return Err(format!(
                        "instance {inst}: quality {got:?} != {want:?} for {f}"
                    ));
                }
            }
        }
        let g = random_record_formula(&schema, rng);
        let base = QueryTarget::base("left");
        let got = data.true_count(&g, &base).map_err(|e| e.to_string())?;
        if got != naive_count(&data, &g, &base) {
            return Err(format!("instance {inst}: base count mismatch for {g}"));
        }
        for task in [Task::Blocking, Task::Matching] {
            if data.quality(None, task).map_err(|e| e.to_string())?
                != naive_quality(&data, None, task)
            {
                return Err(format!("instance {inst}: empty-output quality mismatch"));
            }
        }
    }
    Ok(())
}

/// Answers every query exactly and never charges anything. Stands in for a
/// session with vanishing tolerance.
pub struct ExactOracle {
    pub data: Arc<DataBinding>,
    pub asked: usize,
}

impl ExactOracle {
    pub fn new(data: Arc<DataBinding>) -> Self {
        Self { data, asked: 0 }
    }
}

impl QueryInterface for ExactOracle {
    fn metadata(&self) -> PublicMetadata {
        self.data.public_metadata()
    }

    fn submit(&mut self, req: &QueryRequest) -> Result<EngineResponse> {
        self.asked += 1;
        let answer = match req {
            QueryRequest::Lc {
                target, formula, ..
            } => Answer::Count(self.data.true_count(formula, target)? as f64),
            QueryRequest::Lcc {
                target,
                formula,
                c,
                direction,
                ..
            } => {
                let q = self.data.true_count(formula, target)? as f64;
                Answer::Decision(direction.holds(q, *c))
            }
            QueryRequest::Lct {
                target,
                formulas,
                k,
                order,
                ..
            } => {
                let mut scored = formulas
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Ok((self.data.true_count(f, target)? as f64, i)))
                    .collect::<Result<Vec<_>>>()?;
                let sign = if *order == Order::Largest { -1.0 } else { 1.0 };
                scored.sort_by(|a, b| (sign * a.0).total_cmp(&(sign * b.0)).then(a.1.cmp(&b.1)));
                Answer::TopK(scored.iter().take(*k).map(|&(_, i)| i).collect())
            }
        };
        Ok(EngineResponse {
            status: ResponseStatus::Answered,
            answer: Some(answer),
            spent_total: 0.0,
            estimate_checked: 0.0,
        })
    }
}

/// Two matches with near-identical names and two unrelated non-matches.
pub fn toy_binding() -> Arc<DataBinding> {
    let schema = Schema::new(["name", "city"]).unwrap();
    let row = |n: &str, c: Option<&str>| vec![Some(n.to_string()), c.map(str::to_string)];
    let pairs = vec![
        LabeledPair {
            left: row("alpha cafe", Some("rome")),
            right: row("alpha caffe", Some("rome")),
            label: Label::Match,
        },
        LabeledPair {
            left: row("beta bar", None),
            right: row("beta bar", Some("nice")),
            label: Label::Match,
        },
        LabeledPair {
            left: row("gamma", Some("oslo")),
            right: row("omega", None),
            label: Label::NonMatch,
        },
        LabeledPair {
            left: row("delta", None),
            right: row("zeta", Some("oslo")),
            label: Label::NonMatch,
        },
    ];
    let left = Dataset::new(
        schema.clone(),
        pairs.iter().map(|p| p.left.clone()).collect(),
    )
    .unwrap();
    let table = PairTable::from_pairs(schema, pairs, 1).unwrap();
    Arc::new(DataBinding::new(table, vec![("left".into(), left)]).unwrap())
}

pub const BUDGET_GRID: [f64; 7] = [0.004, 0.008, 0.02, 0.04, 0.1, 0.2, 0.5];

fn random_request<R: Rng>(data: &DataBinding, rng: &mut R) -> QueryRequest {
    use privclean_core::engine::Translator;
    use privclean_core::mechanisms::Direction;

    let schema = data.schema();
    // log-uniform tolerance so that both cheap and expensive queries appear
    let alpha = 10f64.powf(rng.random_range(-1.0..3.5));
    let pair_target = match rng.random_range(0..3) {
        0 => QueryTarget::all_pairs(),
        1 => QueryTarget::positives(),
        _ => QueryTarget::negatives(),
    };
    let req = match rng.random_range(0..4) {
        0 => QueryRequest::lc(
            QueryTarget::base("left"),
            random_record_formula(schema, rng),
            alpha,
        ),
        1 => QueryRequest::lc(pair_target, random_pair_formula(schema, rng), alpha),
        2 => {
            let translator = match rng.random_range(0..3) {
                0 => Translator::Default,
                1 => Translator::Lcmp {
                    fraction: rng.random_range(0.01..0.5),
                },
                _ => Translator::Lcmmp {
                    steps: rng.random_range(2..8),
                },
            };
            let direction = *[
                Direction::Greater,
                Direction::Less,
                Direction::GreaterEq,
                Direction::LessEq,
            ]
            .choose(rng)
            .unwrap();
            let c = rng.random_range(-5.0..(data.pair_table().len() as f64 + 5.0));
            QueryRequest::lcc(
                pair_target,
                random_pair_formula(schema, rng),
                alpha,
                c,
                direction,
                translator,
            )
        }
        _ => {
            let l = rng.random_range(1..=5);
            let formulas = (0..l).map(|_| random_pair_formula(schema, rng)).collect();
            let order = if rng.random_bool(0.5) {
                Order::Largest
            } else {
                Order::Smallest
            };
            QueryRequest::lct(pair_target, formulas, alpha, rng.random_range(1..=l), order)
        }
    };
    if rng.random_bool(0.3) {
        req.with_beta(rng.random_range(1e-6..0.4))
    } else {
        req
    }
}

/// Opens `sessions` random sessions and feeds each a random request stream.
/// Checks after every step that the analyzed loss stays within the budget
/// and that a denial changes nothing but the denial counter. Denials must
/// also leave the noise stream alone: a twin session fed only the answered
/// requests has to reproduce every answer.
pub fn engine_fuzz<R: Rng>(sessions: usize, rng: &mut R) -> std::result::Result<usize, String> {
    use privclean_core::accountant::{analyze_loss, AccountantMode, PrivacyParams};
    use privclean_core::engine::Session;

    let mut denials = 0;
    for s in 0..sessions {
        let data = Arc::new(random_binding(60, rng));
        let budget = *BUDGET_GRID.choose(rng).unwrap();
        let delta = 3e-7;
        let mode = match s % 3 {
            0 => AccountantMode::Sequential,
            1 => AccountantMode::moments(),
            _ => {
                AccountantMode::paper_literal(privclean_core::accountant::WIDE_LAMBDA_GRID.to_vec())
            }
        };
        let seed = rng.random();
        let privacy = PrivacyParams::new(budget, delta).unwrap();
        let open = |id: &str| {
            Session::open(id, "fuzz", data.clone(), privacy, mode.clone(), seed).unwrap()
        };
        let mut session = open("fuzz");
        let mut answered = Vec::new();
        for step in 0..rng.random_range(5..40) {
            let req = random_request(&data, rng);
            let before = session.status();
            let resp = session
                .submit(&req)
                .map_err(|e| format!("session {s} step {step}: {e}"))?;
            let after = session.status();
            let loss = analyze_loss(session.ledger().records(), delta, &mode)
                .map_err(|e| e.to_string())?;
            if loss > budget {
                return Err(format!(
                    "session {s} step {step}: loss {loss} exceeds budget {budget}"
                ));
            }
            if resp.is_answered() {
                if resp.estimate_checked > budget {
                    return Err(format!("session {s} step {step}: answered above budget"));
                }
                answered.push((req, resp));
            } else {
                denials += 1;
                let mut expected = before.clone();
                expected.denied += 1;
                if after != expected {
                    return Err(format!("session {s} step {step}: denial changed state"));
                }
            }
        }
        let mut twin = open("twin");
        for (i, (req, resp)) in answered.iter().enumerate() {
            let again = twin.submit(req).map_err(|e| e.to_string())?;
            if again.answer != resp.answer || again.spent_total != resp.spent_total {
                return Err(format!("session {s}: answer {i} moved after a denial"));
            }
        }
    }
    Ok(denials)
}
