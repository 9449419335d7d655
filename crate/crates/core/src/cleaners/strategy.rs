//! Robot cleaning engineers. A strategy holds nothing but a
//! [`QueryInterface`]; every number it acts on is a noisy answer or public
//! metadata.

use serde::{Deserialize, Serialize};

use super::model::{CleanerModel, StrategyKind};
use crate::engine::{EngineResponse, QueryInterface, QueryRequest, Translator};
use crate::error::{invalid, Result};
use crate::formula::{Atom, Formula, SimilarityPredicate};
use crate::mechanisms::{Direction, Order};
use crate::quality::{QualityReport, Task};
use crate::query::{DataBinding, QueryTarget};

/// Relaxation rounds allowed when a full pass accepts nothing.
pub const DEFAULT_MAX_RELAXATIONS: u32 = 3;

/// Blocking-cost cutoff as a fraction of `|D_t|` (55 of 100 pairs).
pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.55;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Blocking-cost cutoff in pairs; defaults to 0.55 |D_t|.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_cutoff: Option<f64>,
    /// Translator for comparison queries.
    #[serde(default)]
    pub translator: Translator,
    /// Base table profiled for NULLs.
    #[serde(default = "left")]
    pub profile_table: String,
    #[serde(default = "max_relax")]
    pub max_relaxations: u32,
}

fn left() -> String {
    "left".into()
}

fn max_relax() -> u32 {
    DEFAULT_MAX_RELAXATIONS
}

impl StrategyConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            beta: None,
            cost_cutoff: None,
            translator: Translator::Default,
            profile_table: left(),
            max_relaxations: DEFAULT_MAX_RELAXATIONS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub answered: u32,
    pub denied: u32,
}

impl QueryCounts {
    pub fn asked(&self) -> u32 {
        self.answered + self.denied
    }
}

/// What a strategy produced, before anyone looks at ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyOutcome {
    pub strategy: StrategyKind,
    pub model: CleanerModel,
    pub alpha: f64,
    /// Accepted predicates in acceptance order.
    pub predicates: Vec<SimilarityPredicate>,
    pub queries: QueryCounts,
    pub spent: f64,
    /// Set when a denial cut the run short.
    pub partial: bool,
}

impl StrategyOutcome {
    pub fn task(&self) -> Task {
        if self.strategy.is_blocking() {
            Task::Blocking
        } else {
            Task::Matching
        }
    }

    /// Disjunction for blocking, conjunction for matching; `None` when
    /// nothing was accepted (the empty output selects no pair).
    pub fn formula(&self) -> Option<Formula> {
        combine(self.strategy, &self.predicates).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyRun {
    #[serde(flatten)]
    pub outcome: StrategyOutcome,
    pub quality: QualityReport,
}

impl StrategyRun {
    /// Scores an outcome against the true labels. Only harness code that
    /// owns the data calls this.
    pub fn evaluate(outcome: StrategyOutcome, data: &DataBinding) -> Result<Self> {
        let quality = data.quality(outcome.formula().as_ref(), outcome.task())?;
        Ok(Self { outcome, quality })
    }
}

fn combine(kind: StrategyKind, preds: &[SimilarityPredicate]) -> Result<Formula> {
    let atoms = preds.iter().cloned().map(Atom::Similar).collect();
    if kind.is_blocking() {
        Formula::disjunction(atoms)
    } else {
        Formula::conjunction(atoms)
    }
}

/// Stops the run without error when the engine denies a query.
enum Step<T> {
    Answer(T),
    Denied,
}

struct Runner<'a> {
    iface: &'a mut dyn QueryInterface,
    kind: StrategyKind,
    model: &'a CleanerModel,
    cfg: &'a StrategyConfig,
    counts: QueryCounts,
    spent: f64,
}

impl Runner<'_> {
    fn ask(&mut self, req: QueryRequest) -> Result<Step<EngineResponse>> {
        let req = match self.cfg.beta {
            Some(b) => req.with_beta(b),
            None => req,
        };
        let resp = self.iface.submit(&req)?;
        self.spent = resp.spent_total;
        if resp.is_answered() {
            self.counts.answered += 1;
            Ok(Step::Answer(resp))
        } else {
            self.counts.denied += 1;
            Ok(Step::Denied)
        }
    }

    fn count(&mut self, target: QueryTarget, formula: Formula) -> Result<Step<f64>> {
        Ok(
            match self.ask(QueryRequest::lc(target, formula, self.cfg.alpha))? {
                Step::Answer(r) => {
                    Step::Answer(r.count().ok_or_else(|| invalid("count answer expected"))?)
                }
                Step::Denied => Step::Denied,
            },
        )
    }

    fn compare(
        &mut self,
        target: QueryTarget,
        formula: Formula,
        c: f64,
        direction: Direction,
    ) -> Result<Step<bool>> {
        let req = QueryRequest::lcc(
            target,
            formula,
            self.cfg.alpha,
            c,
            direction,
            self.cfg.translator,
        );
        Ok(match self.ask(req)? {
            Step::Answer(r) => Step::Answer(
                r.decision()
                    .ok_or_else(|| invalid("boolean answer expected"))?,
            ),
            Step::Denied => Step::Denied,
        })
    }

    /// Attributes ordered by fewest noisy NULLs, truncated to the model's
    /// attribute count.
    fn profile(&mut self, attrs: &[String]) -> Result<Step<Vec<String>>> {
        let keep = self.model.attributes.resolve(attrs.len());
        let target = QueryTarget::base(self.cfg.profile_table.clone());
        if self.kind.uses_comparisons() {
            let formulas = attrs.iter().map(|a| Formula::is_null(a.clone())).collect();
            let req = QueryRequest::lct(target, formulas, self.cfg.alpha, keep, Order::Smallest);
            return Ok(match self.ask(req)? {
                Step::Answer(r) => {
                    let idx = r.top_k().ok_or_else(|| invalid("top-k answer expected"))?;
                    Step::Answer(idx.iter().map(|&i| attrs[i].clone()).collect())
                }
                Step::Denied => Step::Denied,
            });
        }
        let mut nulls = Vec::with_capacity(attrs.len());
        for (i, a) in attrs.iter().enumerate() {
            match self.count(target.clone(), Formula::is_null(a.clone()))? {
                Step::Answer(x) => nulls.push((x, i)),
                Step::Denied => return Ok(Step::Denied),
            }
        }
        nulls.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(Step::Answer(
            nulls
                .iter()
                .take(keep)
                .map(|&(_, i)| attrs[i].clone())
                .collect(),
        ))
    }
}

/// What the cleaner believes about the current output. Blocking tracks the
/// matches and non-matches it catches; matching tracks those it keeps.
struct Beliefs {
    first: f64,
    second: f64,
}

/// Runs one strategy of the given family to completion.
pub fn run_strategy(
    kind: StrategyKind,
    model: &CleanerModel,
    iface: &mut dyn QueryInterface,
    cfg: &StrategyConfig,
) -> Result<StrategyOutcome> {
    if !(cfg.alpha > 0.0) {
        return Err(invalid(format!(
            "alpha must be positive, got {}",
            cfg.alpha
        )));
    }
    let meta = iface.metadata();
    let positives = meta.positives as f64;
    let negatives = (meta.pairs - meta.positives) as f64;
    let cutoff = cfg
        .cost_cutoff
        .unwrap_or(DEFAULT_CUTOFF_FRACTION * meta.pairs as f64);
    let mut r = Runner {
        iface,
        kind,
        model,
        cfg,
        counts: QueryCounts::default(),
        spent: 0.0,
    };
    let mut accepted: Vec<SimilarityPredicate> = Vec::new();
    let finish = |r: Runner, accepted, partial| StrategyOutcome {
        strategy: kind,
        model: model.clone(),
        alpha: cfg.alpha,
        predicates: accepted,
        queries: r.counts,
        spent: r.spent,
        partial,
    };

    let attrs = match r.profile(meta.schema.attributes())? {
        Step::Answer(a) => a,
        Step::Denied => return Ok(finish(r, accepted, true)),
    };
    let candidates = model.candidates(&attrs)?;
    let shift = model.style.match_shift(cfg.alpha);
    let (mut wide, mut narrow) = (model.match_fraction, model.nonmatch_fraction);
    // blocking: (caught matches, caught non-matches); matching: (kept, kept)
    let mut b = if kind.is_blocking() {
        Beliefs {
            first: 0.0,
            second: 0.0,
        }
    } else {
        Beliefs {
            first: positives,
            second: negatives,
        }
    };

    for round in 0..=cfg.max_relaxations {
        if round > 0 {
            wide /= model.relaxation as f64;
            narrow = (narrow * model.relaxation as f64).min(1.0);
        }
        for p in &candidates {
            if accepted.contains(p) {
                continue;
            }
            let done = if kind.is_blocking() {
                positives - b.first < 1.0
            } else {
                b.second < 1.0
            };
            if done {
                return Ok(finish(r, accepted, false));
            }
            let mut trial = accepted.clone();
            trial.push(p.clone());
            let f = combine(kind, &trial)?;
            let step = match kind {
                StrategyKind::Bs1 => bs1_step(
                    &mut r, f, &b, positives, negatives, wide, narrow, shift, cutoff,
                )?,
                StrategyKind::Bs2 => bs2_step(
                    &mut r, f, &b, positives, negatives, wide, narrow, shift, cutoff,
                )?,
                StrategyKind::Ms1 => ms1_step(&mut r, f, &b, wide, narrow, shift)?,
                StrategyKind::Ms2 => ms2_step(&mut r, f, &b, wide, narrow, shift)?,
            };
            match step {
                Step::Denied => return Ok(finish(r, accepted, true)),
                Step::Answer(Some(next)) => {
                    b = next;
                    accepted.push(p.clone());
                }
                Step::Answer(None) => {}
            }
        }
        if !accepted.is_empty() {
            break;
        }
    }
    Ok(finish(r, accepted, false))
}

type Decision = Step<Option<Beliefs>>;

/// Two counts: new matches must reach `wide` of the remaining ones, new
/// non-matches stay under `narrow` of theirs, and the belief cost stays
/// below the cutoff.
#[allow(clippy::too_many_arguments)]
fn bs1_step(
    r: &mut Runner,
    f: Formula,
    b: &Beliefs,
    positives: f64,
    negatives: f64,
    wide: f64,
    narrow: f64,
    shift: f64,
    cutoff: f64,
) -> Result<Decision> {
    let m = match r.count(QueryTarget::positives(), f.clone())? {
        Step::Answer(x) => x + shift,
        Step::Denied => return Ok(Step::Denied),
    };
    if m - b.first < wide * (positives - b.first) {
        return Ok(Step::Answer(None));
    }
    let n = match r.count(QueryTarget::negatives(), f)? {
        Step::Answer(x) => x - shift,
        Step::Denied => return Ok(Step::Denied),
    };
    if n - b.second > narrow * (negatives - b.second) || m + n >= cutoff {
        return Ok(Step::Answer(None));
    }
    Ok(Step::Answer(Some(Beliefs {
        first: m,
        second: n,
    })))
}

/// Same criteria as [`bs1_step`], asked as comparisons. Accepted thresholds
/// become the new beliefs. A comparison only bounds the non-matches from
/// above, so the cost is checked with a third comparison over all pairs
/// instead of from beliefs, whose upper bounds would pile up.
#[allow(clippy::too_many_arguments)]
fn bs2_step(
    r: &mut Runner,
    f: Formula,
    b: &Beliefs,
    positives: f64,
    negatives: f64,
    wide: f64,
    narrow: f64,
    shift: f64,
    cutoff: f64,
) -> Result<Decision> {
    let need = b.first + wide * (positives - b.first);
    let allow = b.second + narrow * (negatives - b.second);
    let checks = [
        (QueryTarget::positives(), need - shift, Direction::Greater),
        (QueryTarget::negatives(), allow + shift, Direction::Less),
        (QueryTarget::all_pairs(), cutoff, Direction::Less),
    ];
    for (target, c, direction) in checks {
        match r.compare(target, f.clone(), c, direction)? {
            Step::Answer(true) => {}
            Step::Answer(false) => return Ok(Step::Answer(None)),
            Step::Denied => return Ok(Step::Denied),
        }
    }
    Ok(Step::Answer(Some(Beliefs {
        first: need,
        second: allow,
    })))
}

/// Conjunction growth: matches lost stay under `narrow` of those kept and
/// non-matches pruned exceed `wide` of those kept.
fn ms1_step(
    r: &mut Runner,
    f: Formula,
    b: &Beliefs,
    wide: f64,
    narrow: f64,
    shift: f64,
) -> Result<Decision> {
    let m = match r.count(QueryTarget::positives(), f.clone())? {
        Step::Answer(x) => x + shift,
        Step::Denied => return Ok(Step::Denied),
    };
    if b.first - m >= narrow * b.first {
        return Ok(Step::Answer(None));
    }
    let n = match r.count(QueryTarget::negatives(), f)? {
        Step::Answer(x) => x - shift,
        Step::Denied => return Ok(Step::Denied),
    };
    if b.second - n <= wide * b.second {
        return Ok(Step::Answer(None));
    }
    Ok(Step::Answer(Some(Beliefs {
        first: m,
        second: n,
    })))
}

fn ms2_step(
    r: &mut Runner,
    f: Formula,
    b: &Beliefs,
    wide: f64,
    narrow: f64,
    shift: f64,
) -> Result<Decision> {
    let keep_m = (1.0 - narrow) * b.first;
    let keep_n = (1.0 - wide) * b.second;
    match r.compare(
        QueryTarget::positives(),
        f.clone(),
        keep_m - shift,
        Direction::Greater,
    )? {
        Step::Answer(true) => {}
        Step::Answer(false) => return Ok(Step::Answer(None)),
        Step::Denied => return Ok(Step::Denied),
    }
    Ok(
        match r.compare(QueryTarget::negatives(), f, keep_n + shift, Direction::Less)? {
            Step::Answer(true) => Step::Answer(Some(Beliefs {
                first: keep_m,
                second: keep_n,
            })),
            Step::Answer(false) => Step::Answer(None),
            Step::Denied => Step::Denied,
        },
    )
}
