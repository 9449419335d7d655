//! The budget-gated session loop: translate, estimate, answer or deny,
//! account.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{unbounded, AccountantMode, LossLedger, PrivacyParams};
use crate::error::{invalid, Error, Result};
use crate::formula::Formula;
use crate::mechanisms::{
    default_beta, run_lcm, run_lcmmp, run_lcmp, run_lm, run_ltm, Comparison, Direction, Mechanism,
    MechanismRecord, Order, Tolerance,
};
use crate::query::{DataBinding, PublicMetadata, QueryTarget};

/// How a comparison query is translated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Translator {
    #[default]
    Default,
    Lcmp {
        fraction: f64,
    },
    Lcmmp {
        steps: u32,
    },
}

/// A query as posed to a session. `beta` defaults to `e^-15`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum QueryRequest {
    #[serde(rename = "LC")]
    Lc {
        target: QueryTarget,
        formula: Formula,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    #[serde(rename = "LCC")]
    Lcc {
        target: QueryTarget,
        formula: Formula,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        c: f64,
        direction: Direction,
        #[serde(default)]
        translator: Translator,
    },
    #[serde(rename = "LCT")]
    Lct {
        target: QueryTarget,
        formulas: Vec<Formula>,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        k: usize,
        #[serde(default)]
        order: Order,
    },
}

impl QueryRequest {
    pub fn lc(target: QueryTarget, formula: Formula, alpha: f64) -> Self {
        QueryRequest::Lc {
            target,
            formula,
            alpha,
            beta: None,
        }
    }

    pub fn lcc(
        target: QueryTarget,
        formula: Formula,
        alpha: f64,
        c: f64,
        direction: Direction,
        translator: Translator,
    ) -> Self {
        QueryRequest::Lcc {
            target,
            formula,
            alpha,
            beta: None,
            c,
            direction,
            translator,
        }
    }

    pub fn lct(
        target: QueryTarget,
        formulas: Vec<Formula>,
        alpha: f64,
        k: usize,
        order: Order,
    ) -> Self {
        QueryRequest::Lct {
            target,
            formulas,
            alpha,
            beta: None,
            k,
            order,
        }
    }

    pub fn with_beta(mut self, b: f64) -> Self {
        match &mut self {
            QueryRequest::Lc { beta, .. }
            | QueryRequest::Lcc { beta, .. }
            | QueryRequest::Lct { beta, .. } => *beta = Some(b),
        }
        self
    }

    pub fn target(&self) -> &QueryTarget {
        match self {
            QueryRequest::Lc { target, .. }
            | QueryRequest::Lcc { target, .. }
            | QueryRequest::Lct { target, .. } => target,
        }
    }

    pub fn tolerance(&self) -> Result<Tolerance> {
        let (alpha, beta) = match self {
            QueryRequest::Lc { alpha, beta, .. }
            | QueryRequest::Lcc { alpha, beta, .. }
            | QueryRequest::Lct { alpha, beta, .. } => (*alpha, *beta),
        };
        Tolerance::new(alpha, beta.unwrap_or_else(default_beta))
    }

    /// The data-independent mechanism this request translates to.
    pub fn mechanism(&self) -> Result<Mechanism> {
        Ok(match self {
            QueryRequest::Lc { .. } => Mechanism::Laplace,
            QueryRequest::Lcc { c, translator, .. } => {
                if !c.is_finite() {
                    return Err(invalid(format!("threshold must be finite, got {c}")));
                }
                match *translator {
                    Translator::Default => Mechanism::Comparison,
                    Translator::Lcmp { fraction } => Mechanism::Poking { fraction },
                    Translator::Lcmmp { steps } => Mechanism::MultiPoking { steps },
                }
            }
            QueryRequest::Lct { formulas, k, .. } => Mechanism::TopK {
                components: formulas.len(),
                k: *k,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Answer {
    Count(f64),
    Decision(bool),
    /// Indices into the request's formula list, best first.
    TopK(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Answered,
    Denied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EngineResponse {
    pub status: ResponseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
    pub spent_total: f64,
    /// Worst-case loss that was compared against the budget.
    pub estimate_checked: f64,
}

impl EngineResponse {
    pub fn is_answered(&self) -> bool {
        self.status == ResponseStatus::Answered
    }

    pub fn count(&self) -> Option<f64> {
        match self.answer {
            Some(Answer::Count(x)) => Some(x),
            _ => None,
        }
    }

    pub fn decision(&self) -> Option<bool> {
        match self.answer {
            Some(Answer::Decision(x)) => Some(x),
            _ => None,
        }
    }

    pub fn top_k(&self) -> Option<&[usize]> {
        match &self.answer {
            Some(Answer::TopK(x)) => Some(x),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Exhausted,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionStatus {
    pub id: String,
    pub dataset: String,
    #[serde(with = "unbounded")]
    pub budget: f64,
    pub delta: f64,
    pub mode: AccountantMode,
    pub spent: f64,
    #[serde(with = "unbounded")]
    pub remaining: f64,
    pub answered: u64,
    pub denied: u64,
    pub state: SessionState,
    pub mechanisms: Vec<MechanismRecord>,
}

/// One line of a session trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "camelCase")]
pub enum TraceEvent {
    Open {
        dataset: String,
        privacy: PrivacyParams,
        mode: AccountantMode,
        seed: u64,
    },
    Query {
        request: QueryRequest,
        response: EngineResponse,
    },
}

/// What a cleaning strategy may use: public metadata and the query gate.
/// Implementors must not expose true counts.
pub trait QueryInterface {
    fn metadata(&self) -> PublicMetadata;
    fn submit(&mut self, req: &QueryRequest) -> Result<EngineResponse>;
}

/// A session answers queries over one data binding under a `(B, delta)`
/// constraint. Submissions are processed strictly in order; callers that
/// share a session across threads wrap it in a lock.
#[derive(Debug)]
pub struct Session {
    id: String,
    dataset: String,
    data: Arc<DataBinding>,
    privacy: PrivacyParams,
    ledger: LossLedger,
    rng: ChaCha8Rng,
    seed: u64,
    state: SessionState,
    answered: u64,
    denied: u64,
    trace: Vec<TraceEvent>,
}

/// Relative headroom below which a session counts as exhausted.
const EXHAUSTED_HEADROOM: f64 = 1e-9;

impl Session {
    pub fn open(
        id: impl Into<String>,
        dataset: impl Into<String>,
        data: Arc<DataBinding>,
        privacy: PrivacyParams,
        mode: AccountantMode,
        seed: u64,
    ) -> Result<Self> {
        let privacy = PrivacyParams::new(privacy.budget, privacy.delta)?;
        let dataset = dataset.into();
        let ledger = LossLedger::new(mode.clone(), privacy.delta)?;
        Ok(Self {
            id: id.into(),
            trace: vec![TraceEvent::Open {
                dataset: dataset.clone(),
                privacy,
                mode,
                seed,
            }],
            dataset,
            data,
            privacy,
            ledger,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            state: SessionState::Open,
            answered: 0,
            denied: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn privacy(&self) -> PrivacyParams {
        self.privacy
    }

    pub fn spent(&self) -> f64 {
        self.ledger.current_loss()
    }

    pub fn ledger(&self) -> &LossLedger {
        &self.ledger
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn close(&mut self) {
        self.state = SessionState::Closed;
    }

    fn validate(&self, req: &QueryRequest) -> Result<()> {
        let target = req.target();
        match req {
            QueryRequest::Lc { formula, .. } | QueryRequest::Lcc { formula, .. } => {
                self.data.check(formula, target)
            }
            QueryRequest::Lct { formulas, k, .. } => {
                if formulas.is_empty() {
                    return Err(invalid("top-k query needs at least one formula"));
                }
                if *k == 0 || *k > formulas.len() {
                    return Err(invalid(format!(
                        "top-k needs 1 <= k <= {}, got {k}",
                        formulas.len()
                    )));
                }
                formulas.iter().try_for_each(|f| self.data.check(f, target))
            }
        }
    }

    fn execute(
        &mut self,
        req: &QueryRequest,
        tol: &Tolerance,
        s: u32,
    ) -> Result<(Answer, MechanismRecord)> {
        let target = req.target();
        let rng = &mut self.rng;
        Ok(match req {
            QueryRequest::Lc { formula, .. } => {
                let q = self.data.true_count(formula, target)? as f64;
                let (x, rec) = run_lm(q, tol, s, rng)?;
                (Answer::Count(x), rec)
            }
            QueryRequest::Lcc {
                formula,
                c,
                direction,
                translator,
                ..
            } => {
                let cmp = Comparison {
                    count: self.data.true_count(formula, target)? as f64,
                    threshold: *c,
                    direction: *direction,
                };
                let (x, rec) = match *translator {
                    Translator::Default => run_lcm(cmp, tol, s, rng)?,
                    Translator::Lcmp { fraction } => run_lcmp(cmp, tol, fraction, s, rng)?,
                    Translator::Lcmmp { steps } => run_lcmmp(cmp, tol, steps, s, rng)?,
                };
                (Answer::Decision(x), rec)
            }
            QueryRequest::Lct {
                formulas, k, order, ..
            } => {
                let counts = formulas
                    .iter()
                    .map(|f| Ok(self.data.true_count(f, target)? as f64))
                    .collect::<Result<Vec<_>>>()?;
                let (idx, rec) = run_ltm(&counts, *k, *order, tol, s, rng)?;
                (Answer::TopK(idx), rec)
            }
        })
    }

    /// Runs `req` if its worst-case loss fits the budget; otherwise denies
    /// it without touching the ledger or the noise stream.
    pub fn submit(&mut self, req: &QueryRequest) -> Result<EngineResponse> {
        if self.state == SessionState::Closed {
            return Err(Error::SessionState("closed"));
        }
        self.validate(req)?;
        let tol = req.tolerance()?;
        let s = self.data.sensitivity(req.target());
        let preview = req.mechanism()?.preview(&tol, s)?;
        let estimate = self.ledger.estimate(&preview)?;

        let response = if estimate <= self.privacy.budget {
            let (answer, rec) = self.execute(req, &tol, s)?;
            let spent = self.ledger.append(rec)?;
            self.answered += 1;
            if self.privacy.budget - spent <= EXHAUSTED_HEADROOM * self.privacy.budget {
                self.state = SessionState::Exhausted;
            }
            EngineResponse {
                status: ResponseStatus::Answered,
                answer: Some(answer),
                spent_total: spent,
                estimate_checked: estimate,
            }
        } else {
            self.denied += 1;
            EngineResponse {
                status: ResponseStatus::Denied,
                answer: None,
                spent_total: self.spent(),
                estimate_checked: estimate,
            }
        };
        self.trace.push(TraceEvent::Query {
            request: req.clone(),
            response: response.clone(),
        });
        Ok(response)
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            id: self.id.clone(),
            dataset: self.dataset.clone(),
            budget: self.privacy.budget,
            delta: self.privacy.delta,
            mode: self.ledger.mode().clone(),
            spent: self.spent(),
            remaining: (self.privacy.budget - self.spent()).max(0.0),
            answered: self.answered,
            denied: self.denied,
            state: self.state,
            mechanisms: self.ledger.records().to_vec(),
        }
    }

    pub fn export_trace<W: Write>(&self, out: W) -> Result<()> {
        write_trace(&self.trace, out)
    }
}

impl QueryInterface for Session {
    fn metadata(&self) -> PublicMetadata {
        self.data.public_metadata()
    }

    fn submit(&mut self, req: &QueryRequest) -> Result<EngineResponse> {
        Session::submit(self, req)
    }
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<trace>".into(),
        source,
    }
}

pub fn write_trace<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}

/// Re-executes a trace against `data` and returns the replayed session.
/// Fails if any response differs from the recorded one.
pub fn replay(events: &[TraceEvent], data: Arc<DataBinding>) -> Result<Session> {
    let Some(TraceEvent::Open {
        dataset,
        privacy,
        mode,
        seed,
    }) = events.first()
    else {
        return Err(invalid("trace must start with an open event"));
    };
    let mut session = Session::open(
        "replay",
        dataset.clone(),
        data,
        *privacy,
        mode.clone(),
        *seed,
    )?;
    for (i, e) in events.iter().enumerate().skip(1) {
        let TraceEvent::Query { request, response } = e else {
            return Err(invalid(format!("trace line {} reopens the session", i + 1)));
        };
        let got = session.submit(request)?;
        if &got != response {
            return Err(invalid(format!("trace diverges at line {}", i + 1)));
        }
    }
    Ok(session)
}
