//! Tolerance/budget sweeps over repeated robot runs.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{sample_cleaner, CleanerModel, StrategyKind};
use super::strategy::{run_strategy, StrategyConfig, StrategyRun};
use super::synth::{DatasetSource, SynthConfig};
use crate::accountant::{unbounded, AccountantMode, PrivacyParams};
use crate::engine::{Session, TraceEvent, Translator};
use crate::error::{invalid, Result};
use crate::query::DataBinding;

/// A budget where `null` (JSON) or `inf` (TOML) means unlimited.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Budget(#[serde(with = "unbounded")] pub f64);

/// Which cleaner model each run uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum RobotChoice {
    /// One sampled robot for every run; runs differ only in noise.
    Fixed {
        seed: u64,
    },
    /// A fresh robot per run index, shared across cells.
    PerRun,
    Explicit {
        model: CleanerModel,
    },
}

impl Default for RobotChoice {
    fn default() -> Self {
        RobotChoice::Fixed { seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepConfig {
    pub strategy: StrategyKind,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSource,
    /// Tolerances as fractions of `|D_t|`.
    pub t_grid: Vec<f64>,
    #[serde(default = "unlimited")]
    pub budget_grid: Vec<Budget>,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub robot: RobotChoice,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub accountant: AccountantMode,
    #[serde(default)]
    pub translator: Translator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

fn default_dataset() -> DatasetSource {
    DatasetSource::Synthetic(SynthConfig::default())
}

fn unlimited() -> Vec<Budget> {
    vec![Budget(f64::INFINITY)]
}

fn default_delta() -> f64 {
    (-15f64).exp()
}

impl SweepConfig {
    pub fn new(
        strategy: StrategyKind,
        t_grid: Vec<f64>,
        budget_grid: Vec<f64>,
        runs: usize,
    ) -> Self {
        Self {
            strategy,
            dataset: default_dataset(),
            t_grid,
            budget_grid: budget_grid.into_iter().map(Budget).collect(),
            runs,
            seed: 0,
            robot: RobotChoice::default(),
            delta: default_delta(),
            accountant: AccountantMode::default(),
            translator: Translator::Default,
            cost_cutoff: None,
            beta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || self.budget_grid.is_empty() {
            return Err(invalid("sweep grids must be non-empty"));
        }
        if self.runs == 0 {
            return Err(invalid("sweep needs at least one run per cell"));
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("tolerances must be positive"));
        }
        if self.budget_grid.iter().any(|b| !(b.0 > 0.0)) {
            return Err(invalid("budgets must be positive"));
        }
        PrivacyParams::new(1.0, self.delta)?;
        self.accountant.validate()
    }
}

/// splitmix64 finalizer, for independent per-run streams.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One CSV row. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: usize,
    pub t: f64,
    pub alpha: f64,
    pub budget: f64,
    pub run: usize,
    pub noise_seed: u64,
    pub strategy: StrategyKind,
    pub recall: f64,
    pub cost: f64,
    pub precision: f64,
    pub f1: f64,
    pub quality: f64,
    pub answered: u32,
    pub denied: u32,
    pub spent: f64,
    pub predicates: usize,
    pub partial: bool,
}

pub const CSV_HEADER: &str = "cell,t,alpha,budget,run,noise_seed,strategy,recall,cost,precision,f1,quality,answered,denied,spent,predicates,partial";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellSummary {
    pub t: f64,
    pub alpha: f64,
    #[serde(with = "unbounded")]
    pub budget: f64,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    pub median_answered: f64,
    pub median_spent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub rows: Vec<RunRow>,
    #[serde(skip)]
    pub traces: Vec<Vec<TraceEvent>>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

struct Job {
    cell: usize,
    t: f64,
    budget: f64,
    run: usize,
}

fn robot_for(cfg: &SweepConfig, run: usize) -> CleanerModel {
    match &cfg.robot {
        RobotChoice::Fixed { seed } => {
            sample_cleaner(cfg.strategy, &mut ChaCha8Rng::seed_from_u64(*seed))
        }
        RobotChoice::PerRun => sample_cleaner(
            cfg.strategy,
            &mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, 2 * run as u64 + 1)),
        ),
        RobotChoice::Explicit { model } => model.clone(),
    }
}

fn run_job(
    cfg: &SweepConfig,
    data: &Arc<DataBinding>,
    job: &Job,
    keep_trace: bool,
) -> Result<(RunRow, Vec<TraceEvent>)> {
    let pairs = data.public_counts().pairs;
    let alpha = job.t * pairs as f64;
    // paired across cells: run r sees the same noise seed everywhere
    let noise_seed = mix(cfg.seed, 2 * job.run as u64);
    let mut session = Session::open(
        format!("sweep-{}-{}", job.cell, job.run),
        "sweep",
        data.clone(),
        PrivacyParams::new(job.budget, cfg.delta)?,
        cfg.accountant.clone(),
        noise_seed,
    )?;
    let model = robot_for(cfg, job.run);
    let scfg = StrategyConfig {
        beta: cfg.beta,
        cost_cutoff: cfg.cost_cutoff,
        translator: cfg.translator,
        ..StrategyConfig::new(alpha)
    };
    let outcome = run_strategy(cfg.strategy, &model, &mut session, &scfg)?;
    let run = StrategyRun::evaluate(outcome, data)?;
    let q = run.quality;
    let row = RunRow {
        cell: job.cell,
        t: job.t,
        alpha,
        budget: job.budget,
        run: job.run,
        noise_seed,
        strategy: cfg.strategy,
        recall: q.recall,
        cost: q.cost,
        precision: q.precision,
        f1: q.f1,
        quality: q.headline(run.outcome.task()),
        answered: run.outcome.queries.answered,
        denied: run.outcome.queries.denied,
        spent: run.outcome.spent,
        predicates: run.outcome.predicates.len(),
        partial: run.outcome.partial,
    };
    let trace = if keep_trace {
        session.trace().to_vec()
    } else {
        Vec::new()
    };
    Ok((row, trace))
}

/// Runs every `(t, B)` cell `runs` times. Cells are ordered `t`-major.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let data = Arc::new(cfg.dataset.load(None)?);
    run_sweep_on(cfg, data, false)
}

/// As [`run_sweep`] over already-loaded data, optionally keeping traces.
pub fn run_sweep_on(
    cfg: &SweepConfig,
    data: Arc<DataBinding>,
    keep_traces: bool,
) -> Result<SweepResult> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    let mut cell = 0;
    for &t in &cfg.t_grid {
        for b in &cfg.budget_grid {
            for run in 0..cfg.runs {
                jobs.push(Job {
                    cell,
                    t,
                    budget: b.0,
                    run,
                });
            }
            cell += 1;
        }
    }
    #[cfg(feature = "parallel")]
    let iter = jobs.par_iter();
    #[cfg(not(feature = "parallel"))]
    let iter = jobs.iter();
    let done: Vec<(RunRow, Vec<TraceEvent>)> = iter
        .map(|j| run_job(cfg, &data, j, keep_traces))
        .collect::<Result<_>>()?;
    let (rows, traces): (Vec<_>, Vec<_>) = done.into_iter().unzip();

    let cells = rows
        .chunks(cfg.runs)
        .map(|chunk| {
            let sorted = |f: &dyn Fn(&RunRow) -> f64| {
                let mut v: Vec<f64> = chunk.iter().map(f).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let quality = sorted(&|r| r.quality);
            CellSummary {
                t: chunk[0].t,
                alpha: chunk[0].alpha,
                budget: chunk[0].budget,
                runs: chunk.len(),
                median: quantile(&quality, 0.5),
                q1: quantile(&quality, 0.25),
                q3: quantile(&quality, 0.75),
                mean: quality.iter().sum::<f64>() / quality.len() as f64,
                median_answered: quantile(&sorted(&|r| r.answered as f64), 0.5),
                median_spent: quantile(&sorted(&|r| r.spent), 0.5),
            }
        })
        .collect();
    Ok(SweepResult {
        config: cfg.clone(),
        cells,
        rows,
        traces: if keep_traces { traces } else { Vec::new() },
    })
}

impl SweepResult {
    /// One row per run under [`CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| crate::error::Error::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn medians(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.median).collect()
    }
}
