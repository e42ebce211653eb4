use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simreal_cli::operator::Terminal;
use simreal_cli::run::{self, OptimizeOptions};
use simreal_cli::{configure_threads, parse_config, Failure, RunConfig};
use simreal_core::gait_sim::GaitParams;

#[derive(Parser)]
#[command(name = "simreal-opt", version, about = "Sim-to-real Bayesian optimisation of gait feedback gains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override `budgets.max_real`.
    #[arg(long)]
    max_real: Option<usize>,
    /// Parent directory for the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise against the surrogate real plant.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Write one CSV per rollout under `traces/`.
        #[arg(long)]
        traces: bool,
    },
    /// Optimise with real trials entered at the terminal.
    Operator {
        #[command(flatten)]
        common: Common,
    },
    /// BO against random search and the grid oracle.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma list and/or ranges, e.g. `1-10` or `1,4,7`.
        #[arg(long, default_value = "1-10")]
        seeds: String,
    },
    /// Push ladder for the default gains and optionally a tuned set.
    PushTest {
        #[command(flatten)]
        common: Common,
        /// Comma-separated retraction distances in metres.
        #[arg(long, value_delimiter = ',')]
        d: Option<Vec<f64>>,
        /// Tuned gains as `P,D`.
        #[arg(long, conflicts_with = "history")]
        gains: Option<String>,
        /// Take the tuned gains from a run's incumbent.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Replay a history file and re-check its invariants.
    Validate {
        #[arg(long)]
        history: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.max_real {
        cfg.budgets.max_real = n;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Other(format!("cannot parse seed list `{s}`"));
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn parse_gains(s: &str) -> Result<GaitParams, Failure> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| {
        Failure::Other(format!("--gains expects `P,D`, got `{s}`"))
    })?;
    match v.as_slice() {
        [p, d] => Ok(GaitParams::new(*p, *d)),
        _ => Err(Failure::Other(format!("--gains expects `P,D`, got `{s}`"))),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Optimize { common, traces } => {
            let cfg = load(&common)?;
            let (dir, history) = run::optimize(&cfg, &OptimizeOptions { traces })?;
            report_run(&dir, &history, &cfg);
        }
        Command::Operator { common } => {
            let cfg = load(&common)?;
            let stdin = std::io::stdin();
            let term = Terminal { input: stdin.lock(), output: std::io::stdout() };
            let (dir, history) = run::operator(&cfg, term)?;
            report_run(&dir, &history, &cfg);
        }
        Command::Benchmark { common, seeds } => {
            let cfg = load(&common)?;
            let seeds = parse_seeds(&seeds)?;
            let dir = run::benchmark(&cfg, &seeds, &mut std::io::stdout())?;
            println!("wrote {}", dir.join(run::BENCHMARK_FILE).display());
        }
        Command::PushTest { common, d, gains, history } => {
            let cfg = load(&common)?;
            let ladder = d.unwrap_or_else(|| cfg.push_test.ladder.clone());
            if let Some(bad) = ladder.iter().find(|d| !(0.0..1.5).contains(*d)) {
                return Err(Failure::Other(format!("push distance {bad} outside [0, 1.5)")));
            }
            let tuned = match (gains, history) {
                (Some(g), _) => Some(parse_gains(&g)?),
                (None, Some(h)) => Some(run::incumbent_gains(&h)?),
                (None, None) => None,
            };
            let report = run::push(&cfg, &ladder, tuned, &mut std::io::stdout())?;
            println!("wrote {}", report.dir.join(run::PUSH_FILE).display());
        }
        Command::Validate { history } => {
            let report = run::validate(&history)?;
            println!("{}: ok ({} records)", history.display(), report.records);
        }
    }
    Ok(())
}

fn report_run(dir: &std::path::Path, history: &simreal_core::optimizer::RunHistory, cfg: &RunConfig) {
    if let Some(inc) = &history.incumbent {
        let g = GaitParams::from_unit(&inc.x, &cfg.bounds);
        println!(
            "incumbent P={:.4} D={:.4} predicted cost {:.4} ({} real / {} total)",
            g.p_gain, g.d_gain, inc.predicted_cost, history.budget.used_real, history.budget.used_total
        );
    }
    println!("wrote {}", dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simreal-opt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
