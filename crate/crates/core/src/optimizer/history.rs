use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::bo::incumbent_on_grid;
use super::{IterationRecord, RunHistory};
use crate::acquisition::make_grid;
use crate::error::{Error, Result};
use crate::gp::NoiseConfig;
use crate::kernels::{CompositeKernelConfig, Fidelity};
use crate::sampling::BoxBounds;

/// Closing line of a history file. Carries what is needed to recompute the
/// incumbent from the logged observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub status: RunStatus,
    pub incumbent_x: Option<Vec<f64>>,
    /// Incumbent in physical units, when the caller knows them.
    pub incumbent_gains: Option<Vec<f64>>,
    pub incumbent_cost: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub dim: usize,
    pub max_real: usize,
    pub max_total: usize,
    pub grid_size: usize,
    pub kernel: Option<CompositeKernelConfig>,
    pub noise: NoiseConfig,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum HistoryLine {
    Iteration(IterationRecord),
    Summary(RunSummary),
}

impl RunSummary {
    pub fn new(
        history: &RunHistory,
        status: RunStatus,
        config_hash: impl Into<String>,
        grid_size: usize,
        noise: &NoiseConfig,
    ) -> Self {
        RunSummary {
            status,
            incumbent_x: history.incumbent.as_ref().map(|i| i.x.clone()),
            incumbent_gains: None,
            incumbent_cost: history.incumbent.as_ref().map(|i| i.predicted_cost),
            seed: history.seed,
            config_hash: config_hash.into(),
            dim: history.dim,
            max_real: history.budget.max_real,
            max_total: history.budget.max_total,
            grid_size,
            kernel: history.kernel.clone(),
            noise: noise.clone(),
            stopped_early: history.stopped_early,
        }
    }
}

/// One JSON object per line: every iteration record, then the summary.
pub fn write_history<W: Write>(mut out: W, records: &[IterationRecord], summary: &RunSummary) -> Result<()> {
    let io = |e: std::io::Error| Error::Evaluation(format!("writing history: {e}"));
    for r in records {
        let line = serde_json::to_string(&HistoryLine::Iteration(r.clone())).expect("records serialise");
        writeln!(out, "{line}").map_err(io)?;
    }
    let line = serde_json::to_string(&HistoryLine::Summary(summary.clone())).expect("summary serialises");
    writeln!(out, "{line}").map_err(io)?;
    Ok(())
}

pub fn read_history<R: BufRead>(input: R) -> Result<(Vec<IterationRecord>, Option<RunSummary>)> {
    let mut records = Vec::new();
    let mut summary = None;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(Error::invalid(format!("line {}: content after the summary record", n + 1)));
        }
        match serde_json::from_str::<HistoryLine>(&line) {
            Ok(HistoryLine::Iteration(r)) => records.push(r),
            Ok(HistoryLine::Summary(s)) => summary = Some(s),
            Err(e) => return Err(Error::invalid(format!("line {}: {e}", n + 1))),
        }
    }
    Ok((records, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub records: usize,
    pub real_records: usize,
    pub incumbent_checked: bool,
    pub incumbent_error: f64,
}

/// Replay a history: budget counters, record invariants, and the incumbent
/// recomputed from the logged observations (to 1e-9).
pub fn validate_history(records: &[IterationRecord], summary: &RunSummary) -> Result<ValidationReport> {
    let fail = |i: usize, msg: &str| Err(Error::invalid(format!("record {i}: {msg}")));
    let (mut real, mut total) = (0usize, 0usize);
    let mut last_elapsed = 0.0;
    for (i, r) in records.iter().enumerate() {
        if r.iter != i {
            return fail(i, "iteration indices must run 0, 1, 2, ...");
        }
        total += 1;
        if r.fidelity == Fidelity::Real {
            real += 1;
        }
        if (r.real_used, r.total_used) != (real, total) {
            return fail(i, "budget counters do not match the replayed counts");
        }
        if real > summary.max_real || total > summary.max_total {
            return fail(i, "budget exceeded");
        }
        if r.x.len() != summary.dim || !r.x.iter().all(|v| (0.0..=1.0).contains(v)) {
            return fail(i, "x must be a point of the unit box");
        }
        if !r.cost.is_finite() || r.repeats == 0 || r.falls > r.repeats {
            return fail(i, "cost must be finite with repeats >= 1 and falls <= repeats");
        }
        if r.elapsed_s < last_elapsed {
            return fail(i, "elapsed time decreased");
        }
        last_elapsed = r.elapsed_s;
        match (r.entropy_before, r.entropy_after) {
            (Some(b), Some(a)) if b.is_finite() && a.is_finite() && b >= -1e-12 => {}
            (None, None) => {}
            _ => return fail(i, "entropy fields must be both present and finite, or both absent"),
        }
    }

    let mut report =
        ValidationReport { records: records.len(), real_records: real, incumbent_checked: false, incumbent_error: 0.0 };
    let (Some(x), Some(cost), Some(kernel)) = (&summary.incumbent_x, summary.incumbent_cost, &summary.kernel) else {
        if summary.status == RunStatus::Completed {
            return Err(Error::invalid("completed run without an incumbent"));
        }
        return Ok(report);
    };
    let observations = records.iter().map(IterationRecord::observation).collect::<Result<Vec<_>>>()?;
    let grid = make_grid(&BoxBounds::unit(summary.dim), summary.grid_size, Fidelity::Real)?;
    let inc = incumbent_on_grid(&observations, kernel, &summary.noise, &grid)?;
    let err = inc.x.iter().zip(x).map(|(a, b)| (a - b).abs()).fold((inc.predicted_cost - cost).abs(), f64::max);
    if err > 1e-9 {
        return Err(Error::invalid(format!(
            "incumbent mismatch: logged {x:?} / {cost}, recomputed {:?} / {}",
            inc.x, inc.predicted_cost
        )));
    }
    report.incumbent_checked = true;
    report.incumbent_error = err;
    Ok(report)
}
