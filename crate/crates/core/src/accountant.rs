//! Privacy-loss composition over a session's mechanism log.
//!
//! Two bookkeeping modes: plain sequential composition of pure-DP epsilons,
//! and a moments (Rényi) accountant that sums per-order divergences of the
//! Laplace components and converts the total to `(eps, delta)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mechanisms::{CostPath, MechanismRecord};

/// Orders used by the moments accountant unless configured otherwise.
pub const DEFAULT_LAMBDA_GRID: [f64; 13] = [
    1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0,
];

/// The default grid plus high orders. Under the literal tail rule at
/// `delta = e^-15` the minimizing order for long query sequences sits in the
/// hundreds, past the default grid's end.
pub const WIDE_LAMBDA_GRID: [f64; 19] = [
    1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, 96.0, 128.0, 192.0,
    256.0, 384.0, 512.0,
];

/// Overall `(B, delta)` constraint of a session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// `null` on the wire means an unlimited budget.
    #[serde(with = "unbounded")]
    pub budget: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(budget: f64, delta: f64) -> Result<Self> {
        if !(budget > 0.0) {
            return Err(invalid(format!("budget must be positive, got {budget}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { budget, delta })
    }
}

/// Serializes non-finite reals as `null` and reads `null` back as infinity.
pub mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// How a total moment is turned into an epsilon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TailRule {
    /// `min_l mu(l) + ln(1/delta) / (l - 1)`: Rényi-DP conversion.
    #[default]
    RdpConversion,
    /// `min_l (mu(l) - ln delta) / l`. Not a sound bound for Laplace
    /// divergences (it vanishes as the order grows); kept for comparisons
    /// and only meaningful on a capped grid.
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase")]
pub enum AccountantMode {
    Sequential,
    #[serde(rename_all = "camelCase")]
    Moments {
        #[serde(default = "default_grid")]
        lambda_grid: Vec<f64>,
        #[serde(default)]
        tail_rule: TailRule,
    },
}

fn default_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}

impl Default for AccountantMode {
    fn default() -> Self {
        Self::moments()
    }
}

impl AccountantMode {
    pub fn moments() -> Self {
        AccountantMode::Moments {
            lambda_grid: default_grid(),
            tail_rule: TailRule::RdpConversion,
        }
    }

    pub fn paper_literal(lambda_grid: Vec<f64>) -> Self {
        AccountantMode::Moments {
            lambda_grid,
            tail_rule: TailRule::PaperLiteral,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let AccountantMode::Moments {
            lambda_grid,
            tail_rule,
        } = self
        {
            if lambda_grid.is_empty() {
                return Err(invalid("lambda grid is empty"));
            }
            if lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("lambda grid must be strictly ascending"));
            }
            let floor = match tail_rule {
                TailRule::RdpConversion => 1.0,
                TailRule::PaperLiteral => 0.0,
            };
            if lambda_grid
                .iter()
                .any(|&l| !(l.is_finite() && (l > floor || (floor == 0.0 && l >= 1.0))))
            {
                return Err(invalid(match tail_rule {
                    TailRule::RdpConversion => "RDP conversion needs every order > 1",
                    TailRule::PaperLiteral => "orders must be >= 1",
                }));
            }
        }
        Ok(())
    }
}

/// Rényi divergence of order `lambda` between Laplace distributions of
/// scale `b` shifted by one.
pub fn mu_laplace(b: f64, lambda: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid(format!("scale must be positive, got {b}")));
    }
    if !(lambda >= 1.0) {
        return Err(invalid(format!("order must be >= 1, got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(1.0 / b + (-1.0 / b).exp() - 1.0);
    }
    let denom = 2.0 * lambda - 1.0;
    let t1 = (lambda / denom).ln() + (lambda - 1.0) / b;
    let t2 = ((lambda - 1.0) / denom).ln() - lambda / b;
    let hi = t1.max(t2);
    let lse = hi + ((t1 - hi).exp() + (t2 - hi).exp()).ln();
    Ok((lse / (lambda - 1.0)).max(0.0))
}

/// Moment of one record at order `lambda`; top-k records count `L` copies.
pub fn mechanism_moment(rec: &MechanismRecord, lambda: f64, path: CostPath) -> Result<f64> {
    let mut total = 0.0;
    for spec in rec.specs(path) {
        total += mu_laplace(spec.unit_scale(), lambda)?;
    }
    Ok(total * rec.components as f64)
}

fn tail_bound(totals: &[f64], grid: &[f64], delta: f64, rule: TailRule) -> f64 {
    let log_inv_delta = -delta.ln();
    grid.iter()
        .zip(totals)
        .map(|(&l, &mu)| match rule {
            TailRule::RdpConversion => mu + log_inv_delta / (l - 1.0),
            TailRule::PaperLiteral => (mu + log_inv_delta) / l,
        })
        .fold(f64::INFINITY, f64::min)
}

/// Sum of executed epsilons, plus the worst case of `preview` if given.
pub fn sequential_loss(records: &[MechanismRecord], preview: Option<&MechanismRecord>) -> f64 {
    records
        .iter()
        .map(|r| r.epsilon(CostPath::Executed))
        .sum::<f64>()
        + preview.map_or(0.0, |p| p.epsilon(CostPath::WorstCase))
}

/// Moments-accountant epsilon of the executed records plus the worst case
/// of `preview`. An empty composition costs zero.
pub fn moments_loss(
    records: &[MechanismRecord],
    preview: Option<&MechanismRecord>,
    delta: f64,
    grid: &[f64],
    rule: TailRule,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    if records.is_empty() && preview.is_none() {
        return Ok(0.0);
    }
    let mut totals = vec![0.0; grid.len()];
    for (t, &l) in totals.iter_mut().zip(grid) {
        for r in records {
            *t += mechanism_moment(r, l, CostPath::Executed)?;
        }
        if let Some(p) = preview {
            *t += mechanism_moment(p, l, CostPath::WorstCase)?;
        }
    }
    Ok(tail_bound(&totals, grid, delta, rule))
}

/// Worst-case loss if `next` ran after everything already in `records`.
pub fn estimate_loss(
    records: &[MechanismRecord],
    next: &MechanismRecord,
    delta: f64,
    mode: &AccountantMode,
) -> Result<f64> {
    match mode {
        AccountantMode::Sequential => Ok(sequential_loss(records, Some(next))),
        AccountantMode::Moments {
            lambda_grid,
            tail_rule,
        } => moments_loss(records, Some(next), delta, lambda_grid, *tail_rule),
    }
}

/// Loss actually incurred along the executed paths.
pub fn analyze_loss(records: &[MechanismRecord], delta: f64, mode: &AccountantMode) -> Result<f64> {
    match mode {
        AccountantMode::Sequential => Ok(sequential_loss(records, None)),
        AccountantMode::Moments {
            lambda_grid,
            tail_rule,
        } => moments_loss(records, None, delta, lambda_grid, *tail_rule),
    }
}

/// Append-only mechanism log with running totals so that estimates stay
/// O(grid) per query.
#[derive(Clone, Debug)]
pub struct LossLedger {
    mode: AccountantMode,
    delta: f64,
    records: Vec<MechanismRecord>,
    sequential: f64,
    moments: Vec<f64>,
    current: f64,
}

impl LossLedger {
    pub fn new(mode: AccountantMode, delta: f64) -> Result<Self> {
        mode.validate()?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        let grid_len = match &mode {
            AccountantMode::Sequential => 0,
            AccountantMode::Moments { lambda_grid, .. } => lambda_grid.len(),
        };
        Ok(Self {
            mode,
            delta,
            records: Vec::new(),
            sequential: 0.0,
            moments: vec![0.0; grid_len],
            current: 0.0,
        })
    }

    pub fn mode(&self) -> &AccountantMode {
        &self.mode
    }

    pub fn records(&self) -> &[MechanismRecord] {
        &self.records
    }

    /// Loss of the executed log.
    pub fn current_loss(&self) -> f64 {
        self.current
    }

    fn loss_with(&self, extra: Option<(&MechanismRecord, CostPath)>) -> Result<f64> {
        match &self.mode {
            AccountantMode::Sequential => {
                Ok(self.sequential + extra.map_or(0.0, |(r, p)| r.epsilon(p)))
            }
            AccountantMode::Moments {
                lambda_grid,
                tail_rule,
            } => {
                if self.records.is_empty() && extra.is_none() {
                    return Ok(0.0);
                }
                let mut totals = self.moments.clone();
                if let Some((r, p)) = extra {
                    for (t, &l) in totals.iter_mut().zip(lambda_grid) {
                        *t += mechanism_moment(r, l, p)?;
                    }
                }
                Ok(tail_bound(&totals, lambda_grid, self.delta, *tail_rule))
            }
        }
    }

    /// Worst-case loss after running `next`.
    pub fn estimate(&self, next: &MechanismRecord) -> Result<f64> {
        self.loss_with(Some((next, CostPath::WorstCase)))
    }

    /// Appends an executed record and returns the new current loss.
    pub fn append(&mut self, rec: MechanismRecord) -> Result<f64> {
        let loss = self.loss_with(Some((&rec, CostPath::Executed)))?;
        self.sequential += rec.epsilon(CostPath::Executed);
        if let AccountantMode::Moments { lambda_grid, .. } = &self.mode {
            for (t, &l) in self.moments.iter_mut().zip(lambda_grid) {
                *t += mechanism_moment(&rec, l, CostPath::Executed)?;
            }
        }
        self.records.push(rec);
        // sums are monotone, the floor guards float noise in the min
        self.current = loss.max(self.current);
        Ok(self.current)
    }

    /// One JSON object per record; records hold only public parameters.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|source| Error::Io {
                path: "<ledger export>".into(),
                source,
            })?;
        }
        Ok(())
    }
}
