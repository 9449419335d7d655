//! Batch subcommands. Each returns its report as text so that tests can
//! check it without spawning the binary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use privclean_core::cleaners::{
    run_sweep_on, DatasetSource, SweepConfig, SweepResult, SynthConfig,
};
use privclean_core::engine::{read_trace, replay, write_trace, Answer, TraceEvent};
use privclean_core::mechanisms::{CostPath, Mechanism, Tolerance};
use serde::Serialize;

use crate::config::{base_dir, load_file, ServiceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum QueryKind {
    #[value(name = "LC", alias = "lc")]
    Lc,
    #[value(name = "LCC", alias = "lcc")]
    Lcc,
    #[value(name = "LCT", alias = "lct")]
    Lct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TranslatorArg {
    #[default]
    Default,
    Lcmp,
    Lcmmp,
}

#[derive(Clone, Debug, clap::Args)]
pub struct TranslateArgs {
    #[arg(value_enum)]
    pub kind: QueryKind,
    pub alpha: f64,
    pub beta: f64,
    /// Sensitivity of the count.
    #[arg(long, default_value_t = 1)]
    pub sensitivity: u32,
    /// LCC only.
    #[arg(long, value_enum, default_value_t)]
    pub translator: TranslatorArg,
    /// Poke fraction for LCMP.
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    /// Poke count for LCMMP.
    #[arg(long, default_value_t = 5)]
    pub steps: u32,
    /// Number of formulas for LCT.
    #[arg(long = "formulas", short = 'l', default_value_t = 1)]
    pub components: usize,
    #[arg(long, short, default_value_t = 1)]
    pub k: usize,
}

/// The closed-form translation of one tolerance. Touches no data.
pub fn translate(args: &TranslateArgs) -> anyhow::Result<String> {
    let tol = Tolerance::new(args.alpha, args.beta)?;
    let mechanism = match (args.kind, args.translator) {
        (QueryKind::Lc, TranslatorArg::Default) => Mechanism::Laplace,
        (QueryKind::Lct, TranslatorArg::Default) => Mechanism::TopK {
            components: args.components,
            k: args.k,
        },
        (QueryKind::Lcc, TranslatorArg::Default) => Mechanism::Comparison,
        (QueryKind::Lcc, TranslatorArg::Lcmp) => Mechanism::Poking {
            fraction: args.fraction,
        },
        (QueryKind::Lcc, TranslatorArg::Lcmmp) => Mechanism::MultiPoking { steps: args.steps },
        (kind, _) => bail!("--translator only applies to LCC, not {kind:?}"),
    };
    let rec = mechanism.preview(&tol, args.sensitivity)?;
    let mut out = format!("mechanism={}", format!("{:?}", rec.kind).to_uppercase());
    match mechanism {
        Mechanism::TopK { components, k } => {
            write!(
                out,
                " formulas={components} k={k} b={:.4}",
                rec.worst_case[0].scale
            )?;
        }
        Mechanism::Poking { fraction } => {
            let (poke, esc) = (rec.worst_case[0], rec.worst_case[1]);
            write!(
                out,
                " fraction={fraction} b0={:.4} epsilon0={:.6} b1={:.4} epsilon1={:.4}",
                poke.scale, poke.epsilon, esc.scale, esc.epsilon
            )?;
        }
        Mechanism::MultiPoking { steps } => {
            write!(out, " steps={steps} bmin={:.4}", rec.worst_case[0].scale)?;
        }
        _ => write!(out, " b={:.4}", rec.worst_case[0].scale)?,
    }
    write!(out, " epsilon={:.4}", rec.epsilon(CostPath::WorstCase))?;
    Ok(out)
}

/// Runs a sweep config and writes `<stem>.csv` and `<stem>.json` into
/// `out_dir`. Returns the per-cell summary.
pub fn sweep(config: &Path, out_dir: &Path, traces: Option<&Path>) -> anyhow::Result<String> {
    let cfg: SweepConfig = load_file(config)?;
    cfg.validate()?;
    let data = Arc::new(cfg.dataset.load(Some(&base_dir(config)))?);
    let result = run_sweep_on(&cfg, data, traces.is_some())?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let stem = config
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep");
    let csv_path = out_dir.join(format!("{stem}.csv"));
    result.write_csv(BufWriter::new(create(&csv_path)?))?;
    let json_path = out_dir.join(format!("{stem}.json"));
    result.write_json(BufWriter::new(create(&json_path)?))?;
    if let Some(dir) = traces {
        std::fs::create_dir_all(dir)?;
        for (row, events) in result.rows.iter().zip(&result.traces) {
            let path = dir.join(format!("cell{}-run{}.jsonl", row.cell, row.run));
            write_trace(events, BufWriter::new(create(&path)?))?;
        }
    }
    Ok(summary(&result, &csv_path, &json_path))
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn summary(result: &SweepResult, csv: &Path, json: &Path) -> String {
    let mut out = String::from("t\talpha\tbudget\tmedian\tq1\tq3\tanswered\tspent\n");
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}\t{:.4}",
            c.t, c.alpha, c.budget, c.median, c.q1, c.q3, c.median_answered, c.median_spent
        );
    }
    let _ = write!(out, "wrote {} and {}", csv.display(), json.display());
    out
}

/// Writes synthetic `left.csv`, `right.csv` and `labels.csv` from a
/// generator spec.
pub fn gen_data(spec: &Path, out_dir: &Path) -> anyhow::Result<String> {
    let cfg: SynthConfig = load_file(spec)?;
    let data = cfg.generate()?;
    data.write(out_dir)?;
    let positives = data.labels.iter().filter(|l| l.label.is_match()).count();
    Ok(format!(
        "wrote {} pairs ({positives} matches) to {}",
        data.labels.len(),
        out_dir.display()
    ))
}

/// Where `replay` finds the data a trace ran on.
#[derive(Clone, Debug)]
pub enum ReplayData {
    /// A service config; the trace's dataset id picks the entry.
    Registry(PathBuf),
    /// A single dataset source file.
    Source(PathBuf),
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ReplayRow {
    seq: usize,
    #[serde(rename = "type")]
    kind: &'static str,
    status: &'static str,
    answer: String,
    spent_total: f64,
    estimate_checked: f64,
}

pub const REPLAY_HEADER: &str = "seq,type,status,answer,spentTotal,estimateChecked";

/// Re-executes a trace, fails on the first divergence, and renders the
/// responses as CSV under [`REPLAY_HEADER`].
pub fn replay_trace(trace: &Path, data: &ReplayData) -> anyhow::Result<String> {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let events = read_trace(BufReader::new(file))?;
    let Some(TraceEvent::Open { dataset, .. }) = events.first() else {
        bail!("{}: trace must start with an open event", trace.display());
    };
    let binding = match data {
        ReplayData::Registry(path) => {
            let cfg: ServiceConfig = load_file(path)?;
            let entry = cfg
                .datasets
                .iter()
                .find(|d| &d.id == dataset)
                .with_context(|| {
                    format!(
                        "dataset `{dataset}` is not registered in {}",
                        path.display()
                    )
                })?;
            entry.load(&base_dir(path))?
        }
        ReplayData::Source(path) => {
            let source: DatasetSource = load_file(path)?;
            source.load(Some(&base_dir(path)))?
        }
    };
    replay(&events, Arc::new(binding)).with_context(|| format!("replaying {}", trace.display()))?;
    responses_csv(&events)
}

/// The responses recorded in a trace, one CSV row per query.
pub fn responses_csv(events: &[TraceEvent]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (seq, e) in events.iter().enumerate() {
        let TraceEvent::Query { request, response } = e else {
            continue;
        };
        let kind = match request {
            privclean_core::engine::QueryRequest::Lc { .. } => "LC",
            privclean_core::engine::QueryRequest::Lcc { .. } => "LCC",
            privclean_core::engine::QueryRequest::Lct { .. } => "LCT",
        };
        let answer = match &response.answer {
            None => String::new(),
            Some(Answer::Count(x)) => x.to_string(),
            Some(Answer::Decision(b)) => b.to_string(),
            Some(Answer::TopK(idx)) => idx
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        };
        w.serialize(ReplayRow {
            seq,
            kind,
            status: if response.is_answered() {
                "answered"
            } else {
                "denied"
            },
            answer,
            spent_total: response.spent_total,
            estimate_checked: response.estimate_checked,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut out = String::from_utf8(bytes)?;
    if out.is_empty() {
        out = format!("{REPLAY_HEADER}\n");
    }
    Ok(out)
}
