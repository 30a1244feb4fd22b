//! `demux`: validate datasets, run selections, simulate, and correlate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use demux_core::io::{read_dataset_as, read_plan, validate_dataset, write_plan, DatasetIoError};
use demux_core::orchestrator::{DirectoryProvider, OrchestratorError};
use demux_core::selection::SelectError;
use demux_core::sim::{neighborhood_uncertainty_correlation, ExperimentConfig, SimError};
use demux_core::uncertainty::ScoreError;
use demux_core::{
    run_loop, run_round, ALConfig, Role, RoundState, Scorer, SelectionPlan, Strategy, TaskKind,
};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const INTERNAL: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn strategy_parser() -> impl TypedValueParser<Value = Strategy> {
    PossibleValuesParser::new(Strategy::ALL.map(Strategy::name))
        .map(|s| Strategy::parse(&s).expect("listed value"))
}

fn scorer_parser() -> impl TypedValueParser<Value = Scorer> {
    PossibleValuesParser::new(Scorer::ALL.map(Scorer::name))
        .map(|s| Scorer::parse(&s).expect("listed value"))
}

fn task_parser() -> impl TypedValueParser<Value = TaskKind> {
    PossibleValuesParser::new(TaskKind::ALL.map(TaskKind::name))
        .map(|s| TaskKind::parse(&s).expect("listed value"))
}

#[derive(Parser, Debug)]
#[command(
    name = "demux",
    version,
    about = "Budget-constrained data selection for cross-lingual transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset directory against every format invariant
    Validate(ValidateArgs),
    /// Select examples to annotate, inline or through a round handshake
    Select(SelectArgs),
    /// Compare strategies on synthetic worlds
    Simulate(SimulateArgs),
    /// Correlate target uncertainty with neighborhood uncertainty
    Correlate(CorrelateArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Selection strategy
    #[arg(long, value_name = "NAME", value_parser = strategy_parser())]
    strategy: Strategy,
    /// Task kind; taken from the source manifest when omitted in inline mode
    #[arg(long, value_name = "NAME", value_parser = task_parser())]
    task: Option<TaskKind>,
    /// Source pool directory (inline mode)
    #[arg(long, value_name = "DIR", conflicts_with = "workdir")]
    source: Option<PathBuf>,
    /// Target pool directory (inline mode)
    #[arg(long, value_name = "DIR", conflicts_with = "workdir")]
    target: Option<PathBuf>,
    /// Total annotation budget
    #[arg(long, value_name = "INT")]
    budget: usize,
    /// Number of acquisition rounds
    #[arg(long, value_name = "INT", default_value_t = 1)]
    rounds: usize,
    /// Neighborhood size (knn-uncertainty only)
    #[arg(long, value_name = "INT")]
    k: Option<usize>,
    /// Uncertainty scorer; defaults to the task's standard scorer
    #[arg(long, value_name = "NAME", value_parser = scorer_parser())]
    scorer: Option<Scorer>,
    /// Sampling seed; round r uses seed + r - 1
    #[arg(long, value_name = "INT", default_value_t = 0)]
    seed: u64,
    /// Output directory for plan files
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Handshake directory with round_<r>/ subdirectories (multi-round mode)
    #[arg(long, value_name = "DIR")]
    workdir: Option<PathBuf>,
    /// Reference plan for same-ratio, once per round
    #[arg(long, value_name = "FILE")]
    reference: Vec<PathBuf>,
    /// Seconds to wait for each round's READY file
    #[arg(long, value_name = "SECS", default_value_t = 3600)]
    timeout: u64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML experiment configuration
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Comma-separated strategies to compare
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        value_parser = strategy_parser(),
        default_value = "random,egalitarian,average-dist,uncertainty,knn-uncertainty,gold"
    )]
    arms: Vec<Strategy>,
    /// Number of seeded worlds
    #[arg(long, value_name = "INT", default_value_t = 25)]
    seeds: usize,
    /// Output directory for results.csv and summary.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Source pool directory
    #[arg(long, value_name = "DIR")]
    source: PathBuf,
    /// Target pool directory
    #[arg(long, value_name = "DIR")]
    target: PathBuf,
    /// Neighborhood size
    #[arg(long, value_name = "INT", default_value_t = 10)]
    k: usize,
    /// Uncertainty scorer; defaults to the task's standard scorer
    #[arg(long, value_name = "NAME", value_parser = scorer_parser())]
    scorer: Option<Scorer>,
}

fn io_failure(e: DatasetIoError) -> Failure {
    Failure::new(DATA, e.to_string())
}

fn write_failure(e: DatasetIoError) -> Failure {
    Failure::new(INTERNAL, format!("writing output: {e}"))
}

fn select_code(e: &SelectError) -> u8 {
    match e {
        SelectError::ZeroBudget
        | SelectError::NonPositiveK
        | SelectError::Score(ScoreError::ScorerTaskMismatch { .. }) => USAGE,
        _ => DATA,
    }
}

fn orchestrator_failure(e: OrchestratorError) -> Failure {
    let code = match &e {
        OrchestratorError::InvalidConfig(_) | OrchestratorError::BudgetExhausted { .. } => USAGE,
        OrchestratorError::Select(inner) => select_code(inner),
        OrchestratorError::ProviderFailure { .. } | OrchestratorError::Io(_) => DATA,
    };
    Failure::new(code, e.to_string())
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let report = validate_dataset(&args.dataset);
    for check in &report.checks {
        if check.passed {
            println!("PASS {}", check.name);
        } else {
            println!("FAIL {}: {}", check.name, check.detail);
        }
    }
    match &report.dataset {
        Some(ds) if report.ok() => {
            println!("OK: {} examples", ds.len());
            Ok(())
        }
        _ => Err(Failure::new(
            DATA,
            format!("{} is not a valid dataset", args.dataset.display()),
        )),
    }
}

fn describe(plan: &SelectionPlan) {
    println!(
        "round {}: {} chosen of {} requested{}",
        plan.round,
        plan.chosen.len(),
        plan.requested,
        if plan.shortfall { " (shortfall)" } else { "" }
    );
}

fn select(args: &SelectArgs) -> Result<(), Failure> {
    let usage = |m: &str| Failure::new(USAGE, m);
    if args.source.is_none() && args.workdir.is_none() {
        return Err(usage(
            "give --source for inline selection or --workdir for the round handshake",
        ));
    }
    let mut cfg = ALConfig::new(
        args.budget,
        args.rounds,
        args.strategy,
        args.task.unwrap_or(TaskKind::SequenceLevel),
    );
    cfg.k = args.k;
    cfg.seed = args.seed;
    if !args.reference.is_empty() && args.strategy != Strategy::SameRatio {
        return Err(usage("--reference only applies to same-ratio"));
    }
    // flag consistency first; scorer support is checked once the task is known
    let mut shape = cfg.clone();
    shape.reference = vec![SelectionPlan::empty(args.strategy, 1, 0, 0); args.rounds];
    shape.validate().map_err(orchestrator_failure)?;
    if args.strategy == Strategy::SameRatio && args.reference.len() != args.rounds {
        return Err(usage("same-ratio needs one --reference per round"));
    }
    if let Some(s) = args.scorer {
        if !args.strategy.uses_scorer() {
            return Err(usage("--scorer only applies to uncertainty strategies"));
        }
        cfg.scorer = Some(s);
    }
    cfg.reference = args
        .reference
        .iter()
        .map(|p| read_plan(p))
        .collect::<Result<_, _>>()
        .map_err(io_failure)?;

    if let Some(source_dir) = &args.source {
        if args.rounds != 1 {
            return Err(usage(
                "inline mode runs one round; use --workdir for several",
            ));
        }
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| usage("inline mode needs --out"))?;
        if args.strategy.needs_targets() && args.target.is_none() {
            return Err(usage(&format!("{} needs --target", args.strategy)));
        }
        let source = read_dataset_as(source_dir, Role::Source).map_err(io_failure)?;
        match args.task {
            Some(t) if t != source.task() => {
                return Err(Failure::new(
                    DATA,
                    format!(
                        "--task {t} but {} holds {} data",
                        source_dir.display(),
                        source.task()
                    ),
                ))
            }
            _ => cfg.task = source.task(),
        }
        let targets = args
            .target
            .as_ref()
            .map(|t| read_dataset_as(t, Role::Target))
            .transpose()
            .map_err(io_failure)?;
        let (plan, _) = run_round(&cfg, &source, targets.as_ref(), RoundState::default())
            .map_err(orchestrator_failure)?;
        write_plan(&plan, &out.join("plan.json")).map_err(write_failure)?;
        describe(&plan);
        return Ok(());
    }

    let workdir = args.workdir.as_ref().expect("checked above");
    if args.task.is_none() {
        return Err(usage("--workdir mode needs --task"));
    }
    let mut provider =
        DirectoryProvider::new(workdir).with_timeout(Duration::from_secs(args.timeout));
    let plans = run_loop(&cfg, &mut provider).map_err(orchestrator_failure)?;
    for plan in &plans {
        if let Some(out) = &args.out {
            write_plan(plan, &out.join(format!("plan_round_{}.json", plan.round)))
                .map_err(write_failure)?;
        }
        describe(plan);
    }
    Ok(())
}

fn sim_failure(e: SimError) -> Failure {
    let code = match &e {
        SimError::InvalidConfig(_) | SimError::DegenerateCovariance(_) => DATA,
        SimError::Orchestrator(OrchestratorError::InvalidConfig(_)) => DATA,
        _ => INTERNAL,
    };
    Failure::new(code, e.to_string())
}

fn read_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if args.seeds == 0 {
        return Err(Failure::new(USAGE, "--seeds must be at least 1"));
    }
    let cfg = read_config(&args.config)?;
    let table = cfg.run(&args.arms, args.seeds).map_err(sim_failure)?;
    let baseline = cfg.baseline.name();
    table
        .write(&args.out, baseline, cfg.permutations)
        .map_err(|e| Failure::new(INTERNAL, e.to_string()))?;
    let summary = table.summary(baseline, cfg.permutations);
    for group in &summary.groups {
        for (arm, stats) in &group.arms {
            let paired = group
                .paired
                .get(arm)
                .map(|p| format!(" diff={:+.4} p={:.4}", p.mean_diff, p.p_value))
                .unwrap_or_default();
            println!(
                "budget={} round={} {arm}: mean={:.4} std={:.4}{paired}",
                group.budget, group.round, stats.mean, stats.std
            );
        }
    }
    println!(
        "wrote {} rows to {}",
        table.rows.len(),
        args.out.join("results.csv").display()
    );
    Ok(())
}

fn correlate(args: &CorrelateArgs) -> Result<(), Failure> {
    if args.k == 0 {
        return Err(Failure::new(USAGE, "--k must be at least 1"));
    }
    let source = read_dataset_as(&args.source, Role::Source).map_err(io_failure)?;
    let targets = read_dataset_as(&args.target, Role::Target).map_err(io_failure)?;
    let scorer = args
        .scorer
        .unwrap_or_else(|| Scorer::default_for(source.task()));
    if !scorer.supports(source.task()) {
        return Err(Failure::new(
            USAGE,
            format!("scorer {scorer} cannot score {} data", source.task()),
        ));
    }
    let rho = neighborhood_uncertainty_correlation(&source, &targets, args.k, scorer)
        .map_err(|e| Failure::new(DATA, e.to_string()))?;
    println!("rho={rho:.6} n={}", targets.len());
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("DEMUX_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::new(
            USAGE,
            format!("DEMUX_THREADS must be a positive integer, got {value:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(INTERNAL, e.to_string()))
}

fn run() -> Result<(), Failure> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(Failure::new(code, String::new()))
            };
        }
    };
    configure_threads()?;
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Select(a) => select(a),
        Command::Simulate(a) => simulate(a),
        Command::Correlate(a) => correlate(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
