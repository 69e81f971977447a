//! `dpim` command line: mine process trees under differential privacy,
//! compare against the non-private baseline, and inspect logs.
//!
//! Exit codes: 0 success, 1 usage or I/O failure, 2 rejection (the miner
//! returned ⊥, which is a legitimate differentially private outcome and
//! must not be silently retried).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dpim_core::conformance::QualityReport;
use dpim_core::dfr::build_dfr;
use dpim_core::event_log::{self, EventLog, LogFormat};
use dpim_core::miner::{
    auto_bounds_unsafe, mine_baseline, mine_dp_run, DpimConfig, MiningOutcome,
};
use dpim_core::process_tree::to_petri_net;
use dpim_core::RandomSource;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

#[derive(Parser)]
#[command(name = "dpim", version, about = "Differentially private process discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a process tree under ε-differential privacy.
    Mine(MineArgs),
    /// Run DPIM across privacy budgets and compare with the baseline miner.
    Compare(CompareArgs),
    /// Print trace/variant/event/activity counts of a log.
    Stats(StatsArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Path to the event log.
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<LogFormat>,
    /// CSV column holding the case identifier.
    #[arg(long, default_value = "case")]
    case_col: String,
    /// CSV column holding the activity label.
    #[arg(long, default_value = "activity")]
    activity_col: String,
    /// CSV column holding the within-case order (integer or timestamp).
    #[arg(long, default_value = "order")]
    order_col: String,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON file with the same keys as the flags; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Total privacy budget ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Rejection-coin budget ε₀.
    #[arg(long)]
    eps0: Option<f64>,
    /// Budget shares r1,r2,r3 (comma separated, summing to 1).
    #[arg(long)]
    shares: Option<String>,
    /// Fitness acceptance threshold t.
    #[arg(long)]
    threshold: Option<f64>,
    /// Abort-coin bias γ.
    #[arg(long)]
    gamma: Option<f64>,
    /// Lower bound on the number of selected pairs.
    #[arg(long)]
    lb: Option<usize>,
    /// Upper bound on the number of selected pairs.
    #[arg(long)]
    ub: Option<usize>,
    /// Derive lb/ub from the raw relation. NOT differentially private.
    #[arg(long = "auto-bounds-UNSAFE")]
    auto_bounds_unsafe: bool,
    /// Seed for reproducible (non-private) runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the mined tree as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the tree's Petri net as PNML.
    #[arg(long)]
    emit_pnml: Option<PathBuf>,
    /// Also export the tree's Petri net as DOT.
    #[arg(long)]
    emit_dot: Option<PathBuf>,
    /// Also dump the budget ledger entries as JSON.
    #[arg(long)]
    emit_ledger: Option<PathBuf>,
    /// Write a reproducibility manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Privacy budgets to evaluate.
    #[arg(long, default_value = "3.75,1.25,0.125")]
    eps_list: String,
    /// Seeded repetitions per budget.
    #[arg(long, default_value_t = 3)]
    runs: u64,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    shares: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lb: Option<usize>,
    #[arg(long)]
    ub: Option<usize>,
    /// Base seed; per-run seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the CSV report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
}

fn parse_format(s: &str) -> Result<LogFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "xes" => Ok(LogFormat::Xes),
        "csv" => Ok(LogFormat::Csv),
        other => Err(format!("unknown format {other:?}, expected xes or csv")),
    }
}

/// Optional JSON config mirroring the mine flags.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    eps: Option<f64>,
    eps0: Option<f64>,
    shares: Option<(f64, f64, f64)>,
    threshold: Option<f64>,
    gamma: Option<f64>,
    lb: Option<usize>,
    ub: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    input: String,
    format: String,
    eps: f64,
    eps0: f64,
    shares: (f64, f64, f64),
    threshold: f64,
    gamma: f64,
    lb: usize,
    ub: usize,
    seed: Option<u64>,
    outcome: String,
    noisy_fitness: Option<f64>,
    tree: Option<String>,
    metrics: Option<QualityReport>,
    ledger: Vec<dpim_core::dp_mech::LedgerEntry>,
    iterations: u64,
    wall_ms: u128,
}

pub fn run() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Mine(args) => report(cmd_mine(args)),
        Command::Compare(args) => report(cmd_compare(args)),
        Command::Stats(args) => report(cmd_stats(args)),
    };
    std::process::exit(code);
}

fn report(result: Result<i32>) -> i32 {
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            EXIT_USAGE
        }
    }
}

fn detect_format(input: &InputArgs) -> LogFormat {
    input.format.unwrap_or_else(|| {
        match input
            .input
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => LogFormat::Csv,
            _ => LogFormat::Xes,
        }
    })
}

fn load_log(input: &InputArgs) -> Result<EventLog> {
    let bytes = fs::read(&input.input)
        .with_context(|| format!("cannot read {}", input.input.display()))?;
    let format = detect_format(input);
    let parsed = match format {
        LogFormat::Xes => event_log::parse_xes(&bytes)?,
        LogFormat::Csv => event_log::ParsedLog {
            log: event_log::parse_csv(
                &bytes,
                &input.case_col,
                &input.activity_col,
                &input.order_col,
            )?,
            dropped_empty_traces: 0,
        },
    };
    if parsed.dropped_empty_traces > 0 {
        eprintln!(
            "warning: dropped {} empty trace(s)",
            parsed.dropped_empty_traces
        );
    }
    Ok(parsed.log)
}

fn parse_shares(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse shares {text:?}"))?;
    if parts.len() != 3 {
        bail!("--shares needs exactly three comma-separated values");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn resolve_seed(flag: Option<u64>) -> Option<u64> {
    flag.or_else(|| {
        std::env::var("DPIM_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
}

fn cmd_mine(args: MineArgs) -> Result<i32> {
    let file_cfg: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?,
        )
        .context("invalid config JSON")?,
        None => FileConfig::default(),
    };

    let log = load_log(&args.input)?;
    let shares = match args.shares.as_deref() {
        Some(text) => parse_shares(text)?,
        None => file_cfg.shares.unwrap_or((0.65, 0.25, 0.1)),
    };
    let (lb, ub) = if args.auto_bounds_unsafe {
        eprintln!(
            "warning: --auto-bounds-UNSAFE derives lb/ub from the raw relation; \
             the bounds themselves are NOT differentially private"
        );
        auto_bounds_unsafe(&log)
    } else {
        match (args.lb.or(file_cfg.lb), args.ub.or(file_cfg.ub)) {
            (Some(lb), Some(ub)) => (lb, ub),
            _ => bail!("either pass --lb and --ub or opt into --auto-bounds-UNSAFE"),
        }
    };
    let seed = resolve_seed(args.seed.or(file_cfg.seed));
    let cfg = DpimConfig {
        eps: args.eps.or(file_cfg.eps).context("--eps is required")?,
        eps0: args.eps0.or(file_cfg.eps0).unwrap_or(0.01),
        shares,
        threshold: args.threshold.or(file_cfg.threshold).unwrap_or(0.95),
        gamma: args.gamma.or(file_cfg.gamma).unwrap_or(0.01),
        lb,
        ub,
        rng: match seed {
            Some(s) => RandomSource::Seeded(s),
            None => RandomSource::Secure,
        },
    };

    let started = Instant::now();
    let run = mine_dp_run(&log, &cfg)?;
    let wall_ms = started.elapsed().as_millis();

    let (outcome_name, noisy_fitness, tree) = match &run.outcome {
        MiningOutcome::Accepted {
            tree,
            noisy_fitness,
        } => ("accepted", Some(*noisy_fitness), Some(tree.clone())),
        MiningOutcome::Bottom => ("bottom", None, None),
    };

    if let Some(tree) = &tree {
        if let Some(path) = &args.out {
            write_file(path, &serde_json::to_string_pretty(&tree.to_json())?)?;
        }
        if let Some(path) = &args.emit_pnml {
            write_file(path, &to_petri_net(tree).to_pnml())?;
        }
        if let Some(path) = &args.emit_dot {
            write_file(path, &to_petri_net(tree).to_dot())?;
        }
    }
    if let Some(path) = &args.emit_ledger {
        write_file(path, &run.ledger.to_json())?;
    }
    if let Some(path) = &args.manifest {
        let manifest = Manifest {
            input: args.input.input.display().to_string(),
            format: match detect_format(&args.input) {
                LogFormat::Xes => "xes".into(),
                LogFormat::Csv => "csv".into(),
            },
            eps: cfg.eps,
            eps0: cfg.eps0,
            shares: cfg.shares,
            threshold: cfg.threshold,
            gamma: cfg.gamma,
            lb: cfg.lb,
            ub: cfg.ub,
            seed,
            outcome: outcome_name.to_string(),
            noisy_fitness,
            tree: tree.as_ref().map(|t| t.serialize()),
            metrics: tree.as_ref().map(|t| QualityReport::evaluate(t, &log)),
            ledger: run.ledger.entries().to_vec(),
            iterations: run.iterations,
            wall_ms,
        };
        write_file(path, &serde_json::to_string_pretty(&manifest)?)?;
    }

    match &run.outcome {
        MiningOutcome::Accepted { noisy_fitness, .. } => {
            let tree = tree.expect("accepted outcome has a tree");
            println!("{}", tree.serialize());
            eprintln!(
                "accepted after {} iteration(s), released fitness {:.4}",
                run.iterations, noisy_fitness
            );
            Ok(EXIT_OK)
        }
        MiningOutcome::Bottom => {
            eprintln!(
                "rejected (⊥) after {} iteration(s); the budget is spent either way",
                run.iterations
            );
            Ok(EXIT_REJECTED)
        }
    }
}

fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let log = load_log(&args.input)?;
    let eps_list: Vec<f64> = args
        .eps_list
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse eps list {:?}", args.eps_list))?;
    let shares = match args.shares.as_deref() {
        Some(text) => parse_shares(text)?,
        None => (0.65, 0.25, 0.1),
    };
    let (lb, ub) = match (args.lb, args.ub) {
        (Some(lb), Some(ub)) => (lb, ub),
        _ => {
            eprintln!(
                "warning: deriving lb/ub from the raw relation (not differentially private); \
                 pass --lb/--ub to avoid this"
            );
            auto_bounds_unsafe(&log)
        }
    };
    let base_seed = resolve_seed(args.seed).unwrap_or(0);

    let mut out = String::from(
        "miner,eps,run,seed,accepted,noisy_fitness,fitness,precision,simplicity,generalization\n",
    );

    let baseline = mine_baseline(&log)?;
    let report = QualityReport::evaluate(&baseline, &log);
    out.push_str(&format!(
        "im,,,,true,,{:.6},{:.6},{:.6},{:.6}\n",
        report.fitness, report.precision, report.simplicity, report.generalization
    ));

    for (eps_index, eps) in eps_list.iter().enumerate() {
        for run_index in 0..args.runs {
            let seed = base_seed
                .wrapping_add(1_000_003u64.wrapping_mul(eps_index as u64 + 1))
                .wrapping_add(run_index);
            let cfg = DpimConfig {
                eps: *eps,
                eps0: args.eps0.unwrap_or(0.01),
                shares,
                threshold: args.threshold.unwrap_or(0.95),
                gamma: args.gamma.unwrap_or(0.01),
                lb,
                ub,
                rng: RandomSource::Seeded(seed),
            };
            let run = mine_dp_run(&log, &cfg)?;
            match &run.outcome {
                MiningOutcome::Accepted {
                    tree,
                    noisy_fitness,
                } => {
                    let m = QualityReport::evaluate(tree, &log);
                    out.push_str(&format!(
                        "dpim,{eps},{run_index},{seed},true,{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                        noisy_fitness, m.fitness, m.precision, m.simplicity, m.generalization
                    ));
                }
                MiningOutcome::Bottom => {
                    out.push_str(&format!("dpim,{eps},{run_index},{seed},false,,,,,\n"));
                }
            }
        }
    }

    write_file(&args.out, &out)?;
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

fn cmd_stats(args: StatsArgs) -> Result<i32> {
    let log = load_log(&args.input)?;
    let stats = event_log::statistics(&log);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    // A quick sanity line for humans; counts only, no trace content.
    let dfr = build_dfr(&log);
    eprintln!(
        "directly-follows pairs with positive count: {}",
        dfr.counts().values().filter(|c| **c > 0.0).count()
    );
    Ok(EXIT_OK)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    let mut file =
        fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    file.write_all(content.as_bytes())?;
    Ok(())
}
