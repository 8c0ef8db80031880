//! Batch experiments over instances, models and weights.
//!
//! Every `(instance, model, lambda)` cell is solved, evaluated and appended
//! as one JSON line to `cells.jsonl` in the output directory. A rerun reads
//! that journal first and only solves the missing cells, so an interrupted
//! batch resumes where it stopped. `results.csv` and `summary.csv` are
//! rebuilt from the journal at the end of every run.
//!
//! Instances for which no cell of either model is feasible are left out of
//! both tables and listed in `skipped.txt`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_instance, Instance, InstanceError, ModelKind};
use crate::evaluator::{EvalError, OccupancyLedger, VacancyRule};
use crate::instgen::{generate_instance, GenError, GenParams};
use crate::milp::{SolveOptions, SolveStatus, SolverBackend};
use crate::solution::{solve_instance, RunError};

pub const DEFAULT_LAMBDAS: [f64; 5] = [0.0001, 0.25, 0.5, 0.75, 0.9999];
pub const JOURNAL: &str = "cells.jsonl";
pub const RESULTS: &str = "results.csv";
pub const SUMMARY: &str = "summary.csv";
pub const SKIPPED: &str = "skipped.txt";
pub const OCCUPANCY_DIR: &str = "occupancy";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("bad batch configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Instance { path: PathBuf, source: InstanceError },
    #[error("journal line {line}: {source}")]
    Journal { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn default_lambdas() -> Vec<f64> {
    DEFAULT_LAMBDAS.to_vec()
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Sp, ModelKind::Mp]
}

fn default_time_limit() -> f64 {
    3600.0
}

fn default_one() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Instance files; relative paths are resolved against the config file.
    #[serde(default)]
    pub instances: Vec<PathBuf>,
    /// Instances generated on the fly.
    #[serde(default)]
    pub generate: Vec<GenParams>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    /// Solver threads per cell.
    #[serde(default = "default_one")]
    pub threads: u32,
    /// Cells solved concurrently.
    #[serde(default = "default_one")]
    pub jobs: u32,
    #[serde(default)]
    pub vacancy_rule: VacancyRule,
    #[serde(default = "default_true")]
    pub occupancy_csv: bool,
}

impl BatchConfig {
    pub fn new(generate: Vec<GenParams>) -> Self {
        Self {
            instances: Vec::new(),
            generate,
            lambdas: default_lambdas(),
            models: default_models(),
            time_limit_s: default_time_limit(),
            threads: 1,
            jobs: 1,
            vacancy_rule: VacancyRule::FullWindow,
            occupancy_csv: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BatchError> {
        serde_json::from_str(text).map_err(|e| BatchError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        let fail = |m: &str| Err(BatchError::Config(m.to_string()));
        if self.instances.is_empty() && self.generate.is_empty() {
            return fail("no instances to run");
        }
        if self.lambdas.is_empty() || self.models.is_empty() {
            return fail("lambda grid and model list must not be empty");
        }
        if self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return fail("every lambda must lie in [0, 1]");
        }
        if self.time_limit_s.is_nan() || self.time_limit_s <= 0.0 || self.threads == 0 || self.jobs == 0 {
            return fail("time limit, threads and jobs must be positive");
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions::default()
            .with_time_limit(self.time_limit_s)
            .with_threads(self.threads)
    }
}

/// One solved and evaluated cell, as journaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub instance: String,
    pub nodes: usize,
    pub candidates: usize,
    pub cap: u32,
    pub model: ModelKind,
    pub lambda: f64,
    pub status: SolveStatus,
    pub stations: Option<usize>,
    pub quick: Option<u32>,
    pub fast: Option<u32>,
    pub reall_pct: Option<f64>,
    pub lost_pct: Option<f64>,
    pub max_lost_pct: Option<f64>,
    pub cpu_s: f64,
    pub gap_pct: Option<f64>,
    pub objective: Option<f64>,
    /// Constraint violations found by the multi-period check (MP cells).
    pub violations: Option<usize>,
    /// Largest `occ - y` of the final occupancy.
    pub max_overload: Option<f64>,
    /// Largest per-(node, period) conservation residual (SP cells).
    pub conservation_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CellRecord {
    pub fn key(&self) -> CellKey {
        CellKey::new(&self.instance, self.model, self.lambda)
    }

    pub fn total_chargers(&self) -> Option<u32> {
        Some(self.quick? + self.fast?)
    }

    pub fn has_solution(&self) -> bool {
        self.status.has_solution()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey(String, ModelKind, u64);

impl CellKey {
    pub fn new(instance: &str, model: ModelKind, lambda: f64) -> Self {
        Self(instance.to_string(), model, lambda.to_bits())
    }
}

/// A row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    #[serde(rename = "I")]
    pub nodes: usize,
    #[serde(rename = "J")]
    pub candidates: usize,
    #[serde(rename = "u")]
    pub cap: u32,
    pub model: ModelKind,
    pub lambda: f64,
    pub status: SolveStatus,
    #[serde(rename = "Stations")]
    pub stations: Option<usize>,
    #[serde(rename = "Quick")]
    pub quick: Option<u32>,
    #[serde(rename = "Fast")]
    pub fast: Option<u32>,
    #[serde(rename = "Reall%")]
    pub reall_pct: Option<f64>,
    #[serde(rename = "Lost%")]
    pub lost_pct: Option<f64>,
    #[serde(rename = "MaxLost%")]
    pub max_lost_pct: Option<f64>,
    #[serde(rename = "CPU s")]
    pub cpu_s: f64,
    #[serde(rename = "Gap%")]
    pub gap_pct: Option<f64>,
}

impl From<&CellRecord> for ResultRow {
    fn from(c: &CellRecord) -> Self {
        Self {
            instance: c.instance.clone(),
            nodes: c.nodes,
            candidates: c.candidates,
            cap: c.cap,
            model: c.model,
            lambda: c.lambda,
            status: c.status,
            stations: c.stations,
            quick: c.quick,
            fast: c.fast,
            reall_pct: c.reall_pct,
            lost_pct: c.lost_pct,
            max_lost_pct: c.max_lost_pct,
            cpu_s: c.cpu_s,
            gap_pct: c.gap_pct,
        }
    }
}

/// A row of `summary.csv`: means over the cells of one `(lambda, I, model)`
/// group. Each mean skips cells where the value is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lambda: f64,
    #[serde(rename = "I")]
    pub nodes: usize,
    pub model: ModelKind,
    pub cells: usize,
    #[serde(rename = "Stations")]
    pub stations: Option<f64>,
    #[serde(rename = "Quick")]
    pub quick: Option<f64>,
    #[serde(rename = "Fast")]
    pub fast: Option<f64>,
    #[serde(rename = "Reall%")]
    pub reall_pct: Option<f64>,
    #[serde(rename = "Lost%")]
    pub lost_pct: Option<f64>,
    #[serde(rename = "MaxLost%")]
    pub max_lost_pct: Option<f64>,
    #[serde(rename = "CPU s")]
    pub cpu_s: Option<f64>,
    #[serde(rename = "Gap%")]
    pub gap_pct: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups rows by `(lambda, I, model)` in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(u64, usize, ModelKind)> = Vec::new();
    let mut groups: HashMap<(u64, usize, ModelKind), Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key = (r.lambda.to_bits(), r.nodes, r.model);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    let model_rank = |m: ModelKind| u8::from(m == ModelKind::Mp);
    order.sort_by(|a, b| {
        f64::from_bits(a.0)
            .total_cmp(&f64::from_bits(b.0))
            .then(a.1.cmp(&b.1))
            .then(model_rank(a.2).cmp(&model_rank(b.2)))
    });
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            SummaryRow {
                lambda: f64::from_bits(key.0),
                nodes: key.1,
                model: key.2,
                cells: g.len(),
                stations: mean(g.iter().map(|r| r.stations.map(|v| v as f64))),
                quick: mean(g.iter().map(|r| r.quick.map(f64::from))),
                fast: mean(g.iter().map(|r| r.fast.map(f64::from))),
                reall_pct: mean(g.iter().map(|r| r.reall_pct)),
                lost_pct: mean(g.iter().map(|r| r.lost_pct)),
                max_lost_pct: mean(g.iter().map(|r| r.max_lost_pct)),
                cpu_s: mean(g.iter().map(|r| Some(r.cpu_s))),
                gap_pct: mean(g.iter().map(|r| r.gap_pct)),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: io::Write>(rows: &[T], w: W) -> Result<(), BatchError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| BatchError::Csv(e.into()))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: io::Read>(r: R) -> Result<Vec<T>, BatchError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_journal(path: &Path) -> Result<Vec<CellRecord>, BatchError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push(rec),
            // A torn last line from an interrupted run is dropped and redone.
            Err(e) if e.is_eof() => log::warn!("{}: ignoring truncated line {}", path.display(), n + 1),
            Err(source) => return Err(BatchError::Journal { line: n + 1, source }),
        }
    }
    Ok(out)
}

/// An instance together with the label its cells are filed under.
#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub label: String,
    pub instance: Instance,
}

pub fn load_instances(cfg: &BatchConfig, base_dir: &Path) -> Result<Vec<LabeledInstance>, BatchError> {
    let mut out = Vec::new();
    for p in &cfg.instances {
        let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let instance = Instance::from_json(&text).map_err(|source| BatchError::Instance {
            path: path.clone(),
            source,
        })?;
        let report = validate_instance(&instance);
        if !report.is_valid() {
            let msgs: Vec<&str> = report.errors().map(|i| i.message.as_str()).collect();
            return Err(BatchError::Config(format!("{}: {}", path.display(), msgs.join("; "))));
        }
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("instance")
            .to_string();
        out.push(LabeledInstance { label, instance });
    }
    for params in &cfg.generate {
        let instance = generate_instance(params)?;
        let label = params.file_name().trim_end_matches(".json").to_string();
        out.push(LabeledInstance { label, instance });
    }
    let mut seen = std::collections::HashSet::new();
    for li in &out {
        if !seen.insert(li.label.clone()) {
            return Err(BatchError::Config(format!("duplicate instance label {}", li.label)));
        }
    }
    Ok(out)
}

fn occupancy_file(out_dir: &Path, key: &CellKey, lambda: f64) -> PathBuf {
    out_dir
        .join(OCCUPANCY_DIR)
        .join(format!("{}_{}_l{}.csv", key.0, key.1, lambda))
}

/// Solves and evaluates one cell.
pub fn run_cell(
    li: &LabeledInstance,
    model: ModelKind,
    lambda: f64,
    cfg: &BatchConfig,
    backend: &dyn SolverBackend,
) -> Result<(CellRecord, Option<OccupancyLedger>), BatchError> {
    let inst = &li.instance;
    let mut rec = CellRecord {
        instance: li.label.clone(),
        nodes: inst.num_nodes(),
        candidates: inst.num_stations(),
        cap: inst.stations.iter().map(|s| s.cap_total).max().unwrap_or(0),
        model,
        lambda,
        status: SolveStatus::Error,
        stations: None,
        quick: None,
        fast: None,
        reall_pct: None,
        lost_pct: None,
        max_lost_pct: None,
        cpu_s: 0.0,
        gap_pct: None,
        objective: None,
        violations: None,
        max_overload: None,
        conservation_error: None,
        message: None,
    };
    let run = match solve_instance(inst, model, lambda, &cfg.solve_options(), backend) {
        Ok(run) => run,
        Err(RunError::Milp(e)) => {
            log::error!("{} {model} lambda={lambda}: {e}", li.label);
            rec.message = Some(e.to_string());
            return Ok((rec, None));
        }
        Err(e) => return Err(e.into()),
    };
    rec.status = run.result.status;
    rec.cpu_s = run.result.wall_s;
    rec.gap_pct = run.result.gap_pct;
    rec.objective = run.result.objective;
    rec.message = run.result.message.clone();
    let Some(sol) = run.solution else {
        return Ok((rec, None));
    };
    let dep = &sol.deployment;
    let eval = sol.evaluate(inst, cfg.vacancy_rule)?;
    rec.conservation_error = eval.conservation_error;
    if model == ModelKind::Mp {
        let n = eval.feasibility.violations.len();
        rec.violations = Some(n);
        if n > 0 {
            log::warn!("{} mp lambda={lambda}: {n} violations", li.label);
        }
    }
    let (ledger, report) = (eval.ledger, eval.report);
    let (quick, fast) = dep.quick_fast(inst);
    rec.max_overload = Some(ledger.max_overload());
    rec.stations = Some(dep.stations_open());
    rec.quick = Some(quick);
    rec.fast = Some(fast);
    if let Some(report) = report {
        rec.reall_pct = Some(report.reall_pct);
        rec.lost_pct = Some(report.lost_pct);
        rec.max_lost_pct = Some(report.max_lost_pct);
    }
    Ok((rec, Some(ledger)))
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Every journaled cell of the configured grid, in grid order.
    pub cells: Vec<CellRecord>,
    pub results: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub skipped: Vec<String>,
    /// Cells solved during this call (the rest came from the journal).
    pub solved_now: usize,
}

/// Runs every missing cell of the grid and rewrites the tables.
pub fn run_batch(
    cfg: &BatchConfig,
    base_dir: &Path,
    out_dir: &Path,
    backend: &dyn SolverBackend,
) -> Result<BatchOutcome, BatchError> {
    cfg.validate()?;
    let instances = load_instances(cfg, base_dir)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if cfg.occupancy_csv {
        let d = out_dir.join(OCCUPANCY_DIR);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let journal_path = out_dir.join(JOURNAL);
    let mut done: HashMap<CellKey, CellRecord> = HashMap::new();
    for rec in read_journal(&journal_path)? {
        done.insert(rec.key(), rec);
    }

    let mut grid = Vec::new();
    for (n, li) in instances.iter().enumerate() {
        for &model in &cfg.models {
            for &lambda in &cfg.lambdas {
                grid.push((n, model, lambda, CellKey::new(&li.label, model, lambda)));
            }
        }
    }
    let todo: Vec<_> = grid.iter().filter(|c| !done.contains_key(&c.3)).cloned().collect();
    let solved_now = todo.len();
    log::info!("{} cells in grid, {} to solve", grid.len(), solved_now);

    let mut journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal_path)
        .map_err(io_err(&journal_path))?;
    let queue = Mutex::new(todo.into_iter());
    let (tx, rx) = mpsc::channel::<Result<CellRecord, BatchError>>();
    let mut first_error = None;
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs {
            let tx = tx.clone();
            let queue = &queue;
            let instances = &instances;
            scope.spawn(move || loop {
                let next = queue.lock().expect("queue lock").next();
                let Some((n, model, lambda, key)) = next else {
                    break;
                };
                let res = run_cell(&instances[n], model, lambda, cfg, backend).and_then(|(rec, ledger)| {
                    if let (true, Some(ledger)) = (cfg.occupancy_csv, ledger) {
                        let path = occupancy_file(out_dir, &key, lambda);
                        let f = File::create(&path).map_err(io_err(&path))?;
                        ledger.write_csv(f)?;
                    }
                    Ok(rec)
                });
                let failed = res.is_err();
                if tx.send(res).is_err() || failed {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: the journal only grows from this thread.
        for res in rx {
            match res {
                Ok(rec) => {
                    let line = serde_json::to_string(&rec).expect("record serializes");
                    if let Err(e) = writeln!(journal, "{line}").and_then(|_| journal.flush()) {
                        first_error.get_or_insert(io_err(&journal_path)(e));
                    }
                    log::info!("{} {} lambda={} -> {}", rec.instance, rec.model, rec.lambda, rec.status);
                    done.insert(rec.key(), rec);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }

    let cells: Vec<CellRecord> = grid.iter().map(|c| done[&c.3].clone()).collect();
    let mut by_instance: BTreeMap<&str, bool> = BTreeMap::new();
    for c in &cells {
        *by_instance.entry(&c.instance).or_insert(false) |= c.status != SolveStatus::Infeasible;
    }
    let skipped: Vec<String> = instances
        .iter()
        .filter(|li| !by_instance.get(li.label.as_str()).copied().unwrap_or(false))
        .map(|li| li.label.clone())
        .collect();
    for s in &skipped {
        log::warn!("{s}: infeasible for every model, left out of the tables");
    }
    let results: Vec<ResultRow> = cells
        .iter()
        .filter(|c| !skipped.contains(&c.instance))
        .map(ResultRow::from)
        .collect();
    let summary = summarize(&results);

    let write = |name: &str, f: &dyn Fn(File) -> Result<(), BatchError>| -> Result<(), BatchError> {
        let path = out_dir.join(name);
        f(File::create(&path).map_err(io_err(&path))?)
    };
    write(RESULTS, &|f| write_csv(&results, f))?;
    write(SUMMARY, &|f| write_csv(&summary, f))?;
    write(SKIPPED, &|mut f| {
        for s in &skipped {
            writeln!(f, "{s}").map_err(io_err(Path::new(SKIPPED)))?;
        }
        Ok(())
    })?;
    Ok(BatchOutcome {
        cells,
        results,
        summary,
        skipped,
        solved_now,
    })
}
