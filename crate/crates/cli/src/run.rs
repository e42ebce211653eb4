//! The subcommands. Each writes its artifacts into a fresh run directory.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use simreal_core::gait_sim::{write_trace_csv, GaitParams};
use simreal_core::optimizer::benchmark::{oracle, run_seed};
use simreal_core::optimizer::history::{read_history, validate_history, write_history, RunStatus, RunSummary, ValidationReport};
use simreal_core::optimizer::{
    evaluate_improvement, posterior_table, push_test, run_bo, BoFailure, EvalOutcome, Evaluator, GaitEvaluator,
    Improvement, PushTestResult, RunHistory,
};
use simreal_core::{rng, Fidelity};

use crate::operator::{CostSource, OperatorEvaluator};
use crate::{Failure, RunConfig};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const POSTERIOR_FILE: &str = "posterior_grid.csv";
pub const BENCHMARK_FILE: &str = "benchmark.csv";
pub const PUSH_FILE: &str = "push_test.csv";

/// Create `<base>/<timestamp>-<seed>`, waiting out a name collision.
pub fn run_directory(base: &Path, seed: u64) -> Result<PathBuf, Failure> {
    fs::create_dir_all(base)?;
    loop {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let dir = base.join(format!("{stamp}-{seed}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                std::thread::sleep(std::time::Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Gait evaluator that can also dump every rollout trace.
struct TracingEvaluator<'a> {
    inner: GaitEvaluator<'a>,
    trace_dir: Option<PathBuf>,
    error: Option<std::io::Error>,
}

impl Evaluator for TracingEvaluator<'_> {
    fn evaluate(&mut self, x: &[f64], fidelity: Fidelity, index: usize) -> simreal_core::Result<EvalOutcome> {
        let reports = self.inner.reports(x, fidelity, index);
        if let Some(dir) = &self.trace_dir {
            for (k, r) in reports.iter().enumerate() {
                let path = dir.join(format!("eval_{index:03}_{}_{k}.csv", fidelity.as_str()));
                let written = fs::File::create(&path)
                    .and_then(|f| write_trace_csv(std::io::BufWriter::new(f), &r.trace));
                if let Err(e) = written {
                    let msg = format!("writing {}: {e}", path.display());
                    self.error = Some(e);
                    return Err(simreal_core::Error::Evaluation(msg));
                }
            }
        }
        Ok(EvalOutcome::Cost(self.inner.summarize(&reports)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct OptimizeOptions {
    pub traces: bool,
}

#[derive(Debug, Serialize)]
struct IncumbentSummary {
    x: Vec<f64>,
    gains: GaitParams,
    predicted_cost: f64,
}

#[derive(Debug, Serialize)]
struct Summary {
    status: RunStatus,
    seed: u64,
    config_hash: String,
    incumbent: Option<IncumbentSummary>,
    default_gains: GaitParams,
    improvement: Option<Improvement>,
    real_used: usize,
    total_used: usize,
    real_falls: u32,
    stopped_early: bool,
    elapsed_s: f64,
    error: Option<String>,
}

/// Everything a finished (or failed) optimisation run leaves on disk.
fn persist_run(
    dir: &Path,
    cfg: &RunConfig,
    outcome: Result<RunHistory, Box<BoFailure>>,
) -> Result<RunHistory, Failure> {
    let (history, error) = match outcome {
        Ok(h) => (h, None),
        Err(f) => (f.history, Some(f.error)),
    };
    let status = match &error {
        None => RunStatus::Completed,
        Some(simreal_core::Error::Aborted) => RunStatus::Aborted,
        Some(_) => RunStatus::Failed,
    };
    let problem = cfg.problem();
    let mut run_summary = RunSummary::new(&history, status, cfg.fingerprint(), cfg.acquisition.grid_size, &cfg.gp.noise);
    let gains = history.incumbent.as_ref().map(|i| GaitParams::from_unit(&i.x, &problem.bounds));
    run_summary.incumbent_gains = gains.map(|g| g.as_vec());
    let file = fs::File::create(dir.join(HISTORY_FILE))?;
    write_history(std::io::BufWriter::new(file), &history.records, &run_summary)?;

    let default_gains = problem.bounds.midpoint();
    let improvement = match gains {
        Some(g) => Some(evaluate_improvement(
            &problem,
            &default_gains,
            &g,
            cfg.optimizer.objective,
            cfg.benchmark.improvement_episodes,
            rng::derive_seed(cfg.seed, "improvement", 0),
        )?),
        None => None,
    };
    let summary = Summary {
        status,
        seed: cfg.seed,
        config_hash: run_summary.config_hash.clone(),
        incumbent: history.incumbent.as_ref().zip(gains).map(|(i, g)| IncumbentSummary {
            x: i.x.clone(),
            gains: g,
            predicted_cost: i.predicted_cost,
        }),
        default_gains,
        improvement,
        real_used: history.budget.used_real,
        total_used: history.budget.used_total,
        real_falls: history.real_falls(),
        stopped_early: history.stopped_early,
        elapsed_s: history.records.last().map_or(0.0, |r| r.elapsed_s),
        error: error.as_ref().map(|e| e.to_string()),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    text.push('\n');
    fs::write(dir.join(SUMMARY_FILE), text)?;

    if history.kernel.is_some() {
        let table = posterior_table(&history, &cfg.gp.noise, cfg.acquisition.grid_size)?;
        let mut out = std::io::BufWriter::new(fs::File::create(dir.join(POSTERIOR_FILE))?);
        writeln!(out, "p_gain,d_gain,mean_real,std_real,mean_sim,std_sim")?;
        for row in table {
            let g = GaitParams::from_unit(&row.x, &problem.bounds);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                g.p_gain, g.d_gain, row.mean_real, row.std_real, row.mean_sim, row.std_sim
            )?;
        }
        out.flush()?;
    }

    match error {
        None => Ok(history),
        Some(e) => Err(e.into()),
    }
}

/// Run the optimisation against the surrogate plant.
pub fn optimize(cfg: &RunConfig, opts: &OptimizeOptions) -> Result<(PathBuf, RunHistory), Failure> {
    let dir = run_directory(&cfg.output_dir, cfg.seed)?;
    let trace_dir = if opts.traces {
        let t = dir.join("traces");
        fs::create_dir_all(&t)?;
        Some(t)
    } else {
        None
    };
    let problem = cfg.problem();
    let inner = GaitEvaluator::new(&problem, cfg.optimizer.objective, cfg.acquisition.sim_repeats, cfg.seed);
    let mut evaluator = TracingEvaluator { inner, trace_dir, error: None };
    let outcome = run_bo(&mut evaluator, 2, &cfg.bo(), cfg.seed);
    if let Some(e) = evaluator.error.take() {
        return Err(e.into());
    }
    let history = persist_run(&dir, cfg, outcome)?;
    Ok((dir, history))
}

/// Same loop, with real trials answered by an operator.
pub fn operator<S: CostSource>(cfg: &RunConfig, source: S) -> Result<(PathBuf, RunHistory), Failure> {
    let dir = run_directory(&cfg.output_dir, cfg.seed)?;
    let problem = cfg.problem();
    let sim = GaitEvaluator::new(&problem, cfg.optimizer.objective, cfg.acquisition.sim_repeats, cfg.seed);
    let mut evaluator = OperatorEvaluator { sim, source };
    let outcome = run_bo(&mut evaluator, 2, &cfg.bo(), cfg.seed);
    let history = persist_run(&dir, cfg, outcome)?;
    Ok((dir, history))
}

/// BO against random search and the lattice oracle over several seeds.
/// Completed seeds are kept when a later one fails.
pub fn benchmark(cfg: &RunConfig, seeds: &[u64], log: &mut dyn Write) -> Result<PathBuf, Failure> {
    if seeds.is_empty() {
        return Err(Failure::Other("benchmark needs at least one seed".into()));
    }
    let dir = run_directory(&cfg.output_dir, cfg.seed)?;
    let hist_dir = dir.join("histories");
    fs::create_dir_all(&hist_dir)?;
    let problem = cfg.problem();
    let objective = cfg.optimizer.objective;
    let bench = &cfg.benchmark;
    let best = oracle(&problem, objective, bench)?;
    writeln!(log, "oracle: P={} D={} cost={}", best.gains.p_gain, best.gains.d_gain, best.cost)?;

    let mut out = std::io::BufWriter::new(fs::File::create(dir.join(BENCHMARK_FILE))?);
    writeln!(
        out,
        "method,seed,p_gain,d_gain,real_cost,oracle_gap,within_tolerance,reduction_fraction,real_falls,real_used,total_used,elapsed_s"
    )?;
    let gap = |c: f64| c / best.cost - 1.0;
    let mut failed = None;
    let mut rs_rows = Vec::new();
    for &seed in seeds {
        match run_seed(&problem, objective, &cfg.bo(), bench, seed) {
            Ok((o, history)) => {
                let mut summary =
                    RunSummary::new(&history, RunStatus::Completed, cfg.fingerprint(), cfg.acquisition.grid_size, &cfg.gp.noise);
                summary.incumbent_gains = Some(o.bo_gains.as_vec());
                let f = fs::File::create(hist_dir.join(format!("seed_{seed}.jsonl")))?;
                write_history(std::io::BufWriter::new(f), &history.records, &summary)?;
                writeln!(
                    out,
                    "bo,{seed},{},{},{},{},{},{},{},{},{},{}",
                    o.bo_gains.p_gain,
                    o.bo_gains.d_gain,
                    o.bo_cost,
                    gap(o.bo_cost),
                    u8::from(gap(o.bo_cost) <= bench.oracle_tolerance),
                    o.improvement.reduction_fraction,
                    o.real_falls,
                    o.real_used,
                    o.total_used,
                    o.elapsed_s
                )?;
                let rs_elapsed = cfg.budgets.max_real as f64 * problem.sequence.duration();
                rs_rows.push(format!(
                    "random,{seed},{},{},{},{},{},,,{},{},{}",
                    o.random_gains.p_gain,
                    o.random_gains.d_gain,
                    o.random_cost,
                    gap(o.random_cost),
                    u8::from(gap(o.random_cost) <= bench.oracle_tolerance),
                    cfg.budgets.max_real,
                    cfg.budgets.max_real,
                    rs_elapsed
                ));
                writeln!(
                    log,
                    "seed {seed}: bo cost={} (gap {:+.2}%), random cost={}, reduction={:.3}, real falls={}",
                    o.bo_cost,
                    100.0 * gap(o.bo_cost),
                    o.random_cost,
                    o.improvement.reduction_fraction,
                    o.real_falls
                )?;
            }
            Err(f) => {
                writeln!(log, "seed {seed}: failed: {}", f.error)?;
                failed.get_or_insert(f.error);
            }
        }
    }
    for row in rs_rows {
        writeln!(out, "{row}")?;
    }
    writeln!(out, "oracle,,{},{},{},0,1,,,,,", best.gains.p_gain, best.gains.d_gain, best.cost)?;
    out.flush()?;
    match failed {
        None => Ok(dir),
        Some(e) => Err(Failure::Numerical(e.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct PushReport {
    pub dir: PathBuf,
    pub results: Vec<(String, GaitParams, PushTestResult)>,
}

/// Push ladder for the default gains and, if given, a tuned set.
pub fn push(cfg: &RunConfig, ladder: &[f64], tuned: Option<GaitParams>, log: &mut dyn Write) -> Result<PushReport, Failure> {
    let dir = run_directory(&cfg.output_dir, cfg.seed)?;
    let problem = cfg.problem();
    let mut sets = vec![("default".to_string(), problem.bounds.midpoint())];
    if let Some(g) = tuned {
        sets.push(("optimized".to_string(), g));
    }
    let seed = rng::derive_seed(cfg.seed, "push-test", 0);
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join(PUSH_FILE))?);
    writeln!(out, "gains,p_gain,d_gain,d,front_fell,back_fell")?;
    let mut results = Vec::new();
    for (name, g) in sets {
        let r = push_test(&problem, &g, ladder, cfg.push_test.fidelity, seed)?;
        for t in &r.trials {
            writeln!(
                out,
                "{name},{},{},{},{},{}",
                g.p_gain,
                g.d_gain,
                t.distance,
                u8::from(t.front_fell),
                u8::from(t.back_fell)
            )?;
        }
        match r.max_withstood {
            Some(d) => writeln!(log, "{name} (P={}, D={}): max withstood d = {d} m", g.p_gain, g.d_gain)?,
            None => writeln!(log, "{name} (P={}, D={}): falls at every d", g.p_gain, g.d_gain)?,
        }
        results.push((name, g, r));
    }
    out.flush()?;
    Ok(PushReport { dir, results })
}

/// Incumbent gains recorded in a history file.
pub fn incumbent_gains(history: &Path) -> Result<GaitParams, Failure> {
    let (_, summary) = read_history(BufReader::new(fs::File::open(history)?))?;
    let g = summary
        .and_then(|s| s.incumbent_gains)
        .filter(|g| g.len() == 2)
        .ok_or_else(|| Failure::Other(format!("{} has no incumbent", history.display())))?;
    Ok(GaitParams::new(g[0], g[1]))
}

pub fn validate(history: &Path) -> Result<ValidationReport, Failure> {
    let (records, summary) = read_history(BufReader::new(fs::File::open(history)?))?;
    let summary = summary.ok_or_else(|| Failure::Other("history has no summary record".into()))?;
    validate_history(&records, &summary).map_err(|e| Failure::Other(format!("validation failed: {e}")))
}
