//! Command-line driver.
//!
//! Exit codes: 0 success, 2 usage or invalid input, 3 model infeasible,
//! 4 solver backend failure, 5 file could not be read, parsed or written.
//! The backend is chosen with `EVCFL_BACKEND` (`highs` or `exact-tiny`).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evcfl::batch::{run_batch, BatchConfig, BatchError};
use evcfl::domain::{validate_instance, Instance, ModelKind};
use evcfl::evaluator::VacancyRule;
use evcfl::instgen::{build_worstcase_instance, generate_instance, GenParams};
use evcfl::milp::{default_backend, make_scaling, write_lp, MilpError, SolveOptions, SolveStatus};
use evcfl::solution::{solve_instance, RunError, Solution};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Infeasible(String),
    Backend(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Backend(m) | CliError::Io(m) => m,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Model(e) => CliError::Usage(e.to_string()),
            RunError::Milp(MilpError::Backend(m)) => CliError::Backend(m),
            RunError::Milp(e) => CliError::Usage(e.to_string()),
            RunError::Extract(e) => CliError::Backend(e.to_string()),
            RunError::Eval(e) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Config(_) | BatchError::Gen(_) => CliError::Usage(e.to_string()),
            BatchError::Run(r) => r.into(),
            BatchError::Eval(_) => CliError::Usage(e.to_string()),
            BatchError::Io { .. } | BatchError::Instance { .. } | BatchError::Journal { .. } | BatchError::Csv(_) => {
                CliError::Io(e.to_string())
            }
        }
    }
}

type CliResult = Result<(), CliError>;

fn lambda_arg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("lambda must lie in [0, 1], got {v}"))
    }
}

#[derive(Parser)]
#[command(name = "evcfl", version, about = "EV charging station location: generate, solve, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances from a parameter file (one object or an array).
    Generate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the single-peak instance on which SP sizing loses 1 - 1/T of the demand.
    Worstcase {
        #[arg(long)]
        periods: usize,
        #[arg(long)]
        demand: u32,
        /// Peak period, 0-based.
        #[arg(long, default_value_t = 0)]
        peak: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an instance file and list problems.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Solve one model and write the solution plus run metadata.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = ["sp", "mp"])]
        model: String,
        #[arg(long, value_parser = lambda_arg)]
        lambda: f64,
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[arg(long)]
        threads: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the solution path with a `.meta.json` suffix.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Replay a solution period by period and report service statistics.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// JSON report destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Appends the report as a CSV row (header written for new files).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-period occupancy CSV.
        #[arg(long)]
        occupancy: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "full-window")]
        vacancy_rule: RuleArg,
    },
    /// Run a batch described by a JSON config.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config's `jobs`.
        #[arg(long)]
        jobs: Option<u32>,
    },
    /// Write a model in LP format for inspection.
    ExportLp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_parser = ["sp", "mp"])]
        model: String,
        #[arg(long, value_parser = lambda_arg)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RuleArg {
    FullWindow,
    SinglePeriod,
}

impl From<RuleArg> for VacancyRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::FullWindow => VacancyRule::FullWindow,
            RuleArg::SinglePeriod => VacancyRule::SinglePeriod,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let inst = Instance::from_json(&read(path)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let report = validate_instance(&inst);
    for issue in &report.issues {
        log::warn!("{}: {}", path.display(), issue.message);
    }
    if !report.is_valid() {
        return Err(CliError::Usage(format!("{}: instance is invalid", path.display())));
    }
    Ok(inst)
}

fn model_kind(s: &str) -> ModelKind {
    s.parse().expect("clap restricts the values")
}

fn cmd_generate(params: &Path, out_dir: &Path) -> CliResult {
    let text = read(params)?;
    let list: Vec<GenParams> = match serde_json::from_str::<GenParams>(&text) {
        Ok(p) => vec![p],
        Err(_) => serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", params.display())))?,
    };
    for p in &list {
        let inst = generate_instance(p).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = out_dir.join(p.file_name());
        write(&path, &inst.to_json())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_solve(
    instance: &Path,
    model: ModelKind,
    lambda: f64,
    time_limit: f64,
    threads: Option<u32>,
    out: &Path,
    meta: Option<PathBuf>,
) -> CliResult {
    if time_limit.is_nan() || time_limit <= 0.0 {
        return Err(CliError::Usage("time limit must be positive".into()));
    }
    let inst = load_instance(instance)?;
    let backend = default_backend().map_err(|e| CliError::Backend(e.to_string()))?;
    let mut options = SolveOptions::default().with_time_limit(time_limit);
    if let Some(t) = threads {
        options = options.with_threads(t);
    }
    let run = solve_instance(&inst, model, lambda, &options, backend.as_ref())?;
    let meta_path = meta.unwrap_or_else(|| out.with_extension("meta.json"));
    let meta = run.metadata(inst.name.clone(), &options);
    write(&meta_path, &(serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"))?;
    match (&run.solution, run.result.status) {
        (Some(sol), _) => {
            write(out, &sol.to_json())?;
            let (quick, fast) = sol.deployment.quick_fast(&inst);
            println!(
                "{} {model} lambda={lambda}: {} objective={:.6} gap={:.4}% stations={} quick={quick} fast={fast}",
                inst.name.as_deref().unwrap_or("instance"),
                run.result.status,
                sol.scaled_objective,
                run.result.gap_pct.unwrap_or(f64::NAN),
                sol.deployment.stations_open(),
            );
            Ok(())
        }
        (None, SolveStatus::Infeasible) => Err(CliError::Infeasible(format!("{model} model is infeasible"))),
        (None, status) => Err(CliError::Backend(format!(
            "solver ended with status {status}{}",
            run.result.message.map(|m| format!(": {m}")).unwrap_or_default()
        ))),
    }
}

fn cmd_evaluate(
    instance: &Path,
    solution: &Path,
    out: Option<PathBuf>,
    csv_path: Option<PathBuf>,
    occupancy_path: Option<PathBuf>,
    rule: VacancyRule,
) -> CliResult {
    let inst = load_instance(instance)?;
    let sol = Solution::from_json(&read(solution)?).map_err(|e| CliError::Io(format!("{}: {e}", solution.display())))?;
    sol.check_fits(&inst).map_err(|e| CliError::Usage(e.to_string()))?;
    let usage = |e: evcfl::evaluator::EvalError| CliError::Usage(e.to_string());
    let eval = sol.evaluate(&inst, rule).map_err(usage)?;
    for v in &eval.feasibility.violations {
        log::warn!("{} violated at {} by {}", v.constraint, v.at, v.residual);
    }
    let Some(report) = eval.report else {
        return Err(CliError::Usage(format!(
            "multi-period solution violates {} constraints",
            eval.feasibility.violations.len()
        )));
    };
    let ledger = eval.ledger;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match out {
        Some(p) => write(&p, &json)?,
        None => print!("{json}"),
    }
    if let Some(p) = csv_path {
        let fresh = !p.exists();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).map_err(usage)?;
        let text = String::from_utf8(buf).expect("csv is utf-8");
        let body = if fresh { text } else { text.lines().skip(1).map(|l| format!("{l}\n")).collect() };
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .and_then(|mut f| f.write_all(body.as_bytes()))
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    if let Some(p) = occupancy_path {
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).map_err(usage)?;
        write(&p, &String::from_utf8(buf).expect("csv is utf-8"))?;
    }
    Ok(())
}

fn cmd_batch(config: &Path, out_dir: &Path, jobs: Option<u32>) -> CliResult {
    let mut cfg = BatchConfig::from_json(&read(config)?)?;
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    let backend = default_backend().map_err(|e| CliError::Backend(e.to_string()))?;
    let base = config.parent().unwrap_or(Path::new("."));
    let outcome = run_batch(&cfg, base, out_dir, backend.as_ref())?;
    println!(
        "{} cells ({} solved now), {} result rows, {} skipped instances -> {}",
        outcome.cells.len(),
        outcome.solved_now,
        outcome.results.len(),
        outcome.skipped.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_export_lp(instance: &Path, model: ModelKind, lambda: f64, out: &Path) -> CliResult {
    let inst = load_instance(instance)?;
    let scaling = make_scaling(&inst).map_err(|e| CliError::Usage(e.to_string()))?;
    let milp = match model {
        ModelKind::Sp => evcfl::sp::build_sp(&inst, lambda, &scaling).map(|r| r.0),
        ModelKind::Mp => evcfl::mp::build_mp(&inst, lambda, &scaling).map(|r| r.0),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut buf = Vec::new();
    write_lp(&milp, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write(out, &String::from_utf8(buf).expect("lp text is utf-8"))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate { params, out_dir } => cmd_generate(&params, &out_dir),
        Command::Worstcase {
            periods,
            demand,
            peak,
            out,
        } => {
            let inst = build_worstcase_instance(periods, demand, peak).map_err(|e| CliError::Usage(e.to_string()))?;
            write(&out, &inst.to_json())
        }
        Command::Validate { instance } => {
            let inst = Instance::from_json(&read(&instance)?)
                .map_err(|e| CliError::Io(format!("{}: {e}", instance.display())))?;
            let report = validate_instance(&inst);
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for issue in &report.issues {
                let _ = writeln!(out, "{:?}: {}", issue.severity, issue.message);
            }
            if report.is_valid() {
                Ok(())
            } else {
                Err(CliError::Usage("instance is invalid".into()))
            }
        }
        Command::Solve {
            instance,
            model,
            lambda,
            time_limit,
            threads,
            out,
            meta,
        } => cmd_solve(&instance, model_kind(&model), lambda, time_limit, threads, &out, meta),
        Command::Evaluate {
            instance,
            solution,
            out,
            csv,
            occupancy,
            vacancy_rule,
        } => cmd_evaluate(&instance, &solution, out, csv, occupancy, vacancy_rule.into()),
        Command::Batch { config, out_dir, jobs } => cmd_batch(&config, &out_dir, jobs),
        Command::ExportLp {
            instance,
            model,
            lambda,
            out,
        } => cmd_export_lp(&instance, model_kind(&model), lambda, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
