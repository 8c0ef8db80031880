//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Criteria 3, 4 and 8 share a desk-scale batch (8 instances x 5 lambdas x
//! 2 models, 60 s per solve). Its journal lives under the cargo target
//! tmpdir keyed by a hash of the solver and evaluator sources, so a rerun on
//! unchanged code resumes from it instead of re-solving. The first run takes
//! about an hour on one core.

mod common;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

use evcfl::batch::{run_batch, BatchConfig, CellRecord};
use evcfl::domain::{ModelKind, ZoneKind};
use evcfl::evaluator::{reallocate, VacancyRule};
use evcfl::instgen::{
    build_worstcase_instance, generate_instance, sample_in_zone, sample_profile, zone_node_counts, GenParams, Rays,
    UrbanModel, ZoneProfiles, DEFAULT_DAILY_TARGET,
};
use evcfl::milp::{default_backend, lp_relaxation, make_scaling, SolveOptions, SolveStatus, SolverBackend};
use evcfl::oracle::{brute_force_mp, brute_force_sp, OracleOutcome, TinyExactBackend};
use evcfl::solution::solve_instance;
use evcfl::sp::{build_sp_with, SpOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{make_uniform, rel_diff, tiny_instance, TinyShape};

const LAMBDAS: [f64; 5] = [0.0001, 0.25, 0.5, 0.75, 0.9999];

type Verdict = Result<String, String>;

fn options(time_limit: f64) -> SolveOptions {
    SolveOptions::default().with_time_limit(time_limit).with_threads(1)
}

fn worst_case_tightness(backend: &dyn SolverBackend) -> Verdict {
    let mut parts = Vec::new();
    for periods in [4usize, 8, 24] {
        let start = Instant::now();
        let inst = build_worstcase_instance(periods, periods as u32, periods / 2).map_err(|e| e.to_string())?;
        let run = solve_instance(&inst, ModelKind::Sp, 0.0001, &options(60.0), backend).map_err(|e| e.to_string())?;
        let sol = run.solution.ok_or_else(|| format!("T={periods}: no SP solution ({})", run.result.status))?;
        let x = sol.sp_assignment().expect("SP assignment");
        let out = reallocate(&inst, &sol.deployment, x, VacancyRule::FullWindow).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let want = 100.0 * (periods as f64 - 1.0) / periods as f64;
        if (out.lost_pct - want).abs() > 1e-6 {
            return Err(format!("T={periods}: Lost% {:.9}, want {want:.9}", out.lost_pct));
        }
        if secs >= 5.0 {
            return Err(format!("T={periods}: took {secs:.2} s"));
        }
        parts.push(format!("T={periods} Lost% {:.3} in {secs:.2}s", out.lost_pct));
    }
    Ok(parts.join(", "))
}

fn outcome_matches(what: &str, oracle: &OracleOutcome, milp: Option<f64>, status: SolveStatus) -> Result<bool, String> {
    match (oracle, milp) {
        (OracleOutcome::Infeasible { .. }, None) if status == SolveStatus::Infeasible => Ok(false),
        (OracleOutcome::Optimal(o), Some(v)) if status == SolveStatus::Optimal => {
            let d = rel_diff(v, o.objective);
            if d > 1e-6 {
                Err(format!("{what}: milp {v:.12} vs oracle {:.12} (rel {d:.2e})", o.objective))
            } else {
                Ok(true)
            }
        }
        _ => Err(format!("{what}: oracle {:?} vs milp {status} {milp:?}", oracle.objective())),
    }
}

fn oracle_equivalence(backend: &dyn SolverBackend) -> Verdict {
    let start = Instant::now();
    let exact = TinyExactBackend::default();
    let mut feasible = [0usize; 2];
    for (m, (model, shape)) in [(ModelKind::Sp, TinyShape::SP), (ModelKind::Mp, TinyShape::MP)].into_iter().enumerate() {
        for seed in 0..20u64 {
            let inst = tiny_instance(shape, 7_000 + 100 * m as u64 + seed);
            let lambda = LAMBDAS[seed as usize % LAMBDAS.len()];
            let scaling = make_scaling(&inst).map_err(|e| e.to_string())?;
            let oracle = match model {
                ModelKind::Sp => brute_force_sp(&inst, lambda, &scaling),
                ModelKind::Mp => brute_force_mp(&inst, lambda, &scaling),
            }
            .map_err(|e| format!("seed {seed}: {e}"))?;
            let what = format!("{model} seed {seed}");
            let run = solve_instance(&inst, model, lambda, &options(60.0), backend).map_err(|e| e.to_string())?;
            let value = run.solution.as_ref().map(|s| s.scaled_objective);
            if outcome_matches(&what, &oracle, value, run.result.status)? {
                feasible[m] += 1;
            }
            // The exact rational backend is a second route where the model fits.
            if model == ModelKind::Sp {
                let run = solve_instance(&inst, model, lambda, &options(60.0), &exact).map_err(|e| e.to_string())?;
                let value = run.solution.as_ref().map(|s| s.scaled_objective);
                outcome_matches(&format!("{what} exact"), &oracle, value, run.result.status)?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!(
        "20 SP ({} feasible) and 20 MP ({} feasible) match in {secs:.1}s",
        feasible[0], feasible[1]
    ))
}

fn lp_tightening(backend: &dyn SolverBackend) -> Verdict {
    let mut gains = Vec::new();
    for seed in 0..20u64 {
        let model = if seed % 2 == 0 { UrbanModel::Concentric } else { UrbanModel::Sector };
        let params = GenParams::new(model, 12 + seed as usize % 9, 4 + seed as usize % 3, 6 + 4 * (seed as u32 % 3), seed);
        let inst = generate_instance(&params).map_err(|e| e.to_string())?;
        let lambda = LAMBDAS[seed as usize % LAMBDAS.len()];
        let scaling = make_scaling(&inst).map_err(|e| e.to_string())?;
        let mut values = [0.0; 2];
        for (slot, strengthening) in [false, true].into_iter().enumerate() {
            let (milp, _) =
                build_sp_with(&inst, lambda, &scaling, SpOptions { strengthening }).map_err(|e| e.to_string())?;
            let res = backend.solve(&lp_relaxation(&milp), &options(60.0)).map_err(|e| e.to_string())?;
            if res.status != SolveStatus::Optimal {
                return Err(format!("seed {seed}: LP status {}", res.status));
            }
            values[slot] = res.objective.expect("optimal LP has a value");
        }
        if values[1] < values[0] - 1e-9 {
            return Err(format!("seed {seed}: strengthened {} < plain {}", values[1], values[0]));
        }
        gains.push(values[1] - values[0]);
    }
    let tighter = gains.iter().filter(|&&g| g > 1e-9).count();
    Ok(format!("20 instances, strictly tighter on {tighter}"))
}

fn model_coincidence(backend: &dyn SolverBackend) -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let model = if seed % 2 == 0 { UrbanModel::Concentric } else { UrbanModel::Sector };
        let params = GenParams::new(model, 6 + seed as usize % 3, 3, 4 + seed as u32 % 3, 50 + seed).with_periods(8);
        let mut inst = generate_instance(&params).map_err(|e| e.to_string())?;
        make_uniform(&mut inst, |i| 1 + (i as u32 + seed as u32) % 2);
        let lambda = LAMBDAS[seed as usize % LAMBDAS.len()];
        let mut values = [0.0; 2];
        for (slot, m) in [ModelKind::Sp, ModelKind::Mp].into_iter().enumerate() {
            let run = solve_instance(&inst, m, lambda, &options(120.0), backend).map_err(|e| e.to_string())?;
            if run.result.status != SolveStatus::Optimal {
                return Err(format!("seed {seed} {m}: status {}", run.result.status));
            }
            values[slot] = run.solution.expect("optimal run has a solution").scaled_objective;
        }
        let d = (values[0] - values[1]).abs();
        if d > 1e-6 {
            return Err(format!("seed {seed}: SP {} vs MP {}", values[0], values[1]));
        }
        worst = worst.max(d);
    }
    Ok(format!("10 instances, max |MP - SP| = {worst:.2e}"))
}

fn generator_statistics() -> Verdict {
    let profiles = ZoneProfiles::defaults(24).expect("24-period profiles");
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let mut means = Vec::new();
    for kind in [ZoneKind::Commercial, ZoneKind::Residential, ZoneKind::Industrial] {
        let n = 10_000;
        let mut total = 0u64;
        for _ in 0..n {
            let p = sample_profile(profiles.get(kind), DEFAULT_DAILY_TARGET, &mut rng).map_err(|e| e.to_string())?;
            total += p.iter().map(|&d| d as u64).sum::<u64>();
        }
        let mean = total as f64 / n as f64;
        if (mean - 10.0).abs() > 0.5 {
            return Err(format!("{} mean daily total {mean}", kind.name()));
        }
        means.push(mean);
    }
    for nodes in 3..=500 {
        let c = zone_node_counts(nodes);
        let (lo, hi) = (c.iter().min().unwrap(), c.iter().max().unwrap());
        if hi - lo > 1 || c.iter().sum::<usize>() != nodes {
            return Err(format!("{nodes} nodes split as {c:?}"));
        }
    }
    for (seed, nodes) in [(1u64, 50usize), (2, 100), (3, 31)] {
        for model in [UrbanModel::Concentric, UrbanModel::Sector] {
            let inst = generate_instance(&GenParams::new(model, nodes, 10, 10, seed)).map_err(|e| e.to_string())?;
            let mut per_zone = [0usize; 3];
            for n in &inst.nodes {
                per_zone[n.zone] += 1;
            }
            if per_zone.iter().max().unwrap() - per_zone.iter().min().unwrap() > 1 {
                return Err(format!("generated {nodes}-node instance split as {per_zone:?}"));
            }
        }
    }
    let rays = Rays::default();
    let n = 100_000;
    let radius: f64 = (0..n)
        .map(|_| sample_in_zone(UrbanModel::Concentric, &rays, ZoneKind::Commercial, &mut rng).radius())
        .sum::<f64>()
        / n as f64;
    let want = 2.0 * rays.inner / 3.0;
    if rel_diff(radius, want) > 0.01 {
        return Err(format!("commercial mean radius {radius:.2}, want {want:.2}"));
    }
    Ok(format!(
        "daily means {:.3}/{:.3}/{:.3}, zone splits within 1, commercial radius {radius:.2} m",
        means[0], means[1], means[2]
    ))
}

/// Sources whose behavior the cached batch depends on.
fn source_fingerprint(cfg: &BatchConfig) -> u64 {
    let mut h = DefaultHasher::new();
    for src in [
        include_str!("../src/batch.rs"),
        include_str!("../src/domain.rs"),
        include_str!("../src/evaluator.rs"),
        include_str!("../src/formulation.rs"),
        include_str!("../src/instgen.rs"),
        include_str!("../src/milp/mod.rs"),
        include_str!("../src/milp/highs_backend.rs"),
        include_str!("../src/mp.rs"),
        include_str!("../src/solution.rs"),
        include_str!("../src/sp.rs"),
        include_str!("../data/profiles_t24.json"),
        include_str!("../data/profiles_t8.json"),
    ] {
        src.hash(&mut h);
    }
    format!("{cfg:?}").hash(&mut h);
    std::env::var("EVCFL_BACKEND").unwrap_or_default().hash(&mut h);
    h.finish()
}

fn desk_batch(backend: &dyn SolverBackend) -> Result<Vec<CellRecord>, String> {
    let mut generate = Vec::new();
    for (idx, (nodes, stations, cap)) in [50usize, 100]
        .into_iter()
        .flat_map(|i| [10usize, 20].into_iter().map(move |j| (i, j)))
        .flat_map(|(i, j)| [10u32, 30].into_iter().map(move |u| (i, j, u)))
        .enumerate()
    {
        let model = if idx % 2 == 0 { UrbanModel::Concentric } else { UrbanModel::Sector };
        generate.push(GenParams::new(model, nodes, stations, cap, 100 + idx as u64));
    }
    let mut cfg = BatchConfig::new(generate);
    cfg.lambdas = LAMBDAS.to_vec();
    cfg.time_limit_s = 60.0;
    cfg.threads = 1;
    cfg.jobs = 1;
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("desk-batch-{:016x}", source_fingerprint(&cfg)));
    eprintln!("desk batch journal: {}", dir.display());
    let start = Instant::now();
    let out = run_batch(&cfg, &dir, &dir, backend).map_err(|e| e.to_string())?;
    eprintln!(
        "desk batch: {} cells, {} solved now in {:.0} s",
        out.cells.len(),
        out.solved_now,
        start.elapsed().as_secs_f64()
    );
    Ok(out.cells)
}

fn mp_feasibility(cells: &[CellRecord]) -> Verdict {
    let mut checked = 0;
    for c in cells.iter().filter(|c| c.model == ModelKind::Mp && c.has_solution()) {
        let v = c.violations.ok_or_else(|| format!("{} l={}: not checked", c.instance, c.lambda))?;
        let over = c.max_overload.unwrap_or(f64::INFINITY);
        if v != 0 || over > 1e-6 {
            return Err(format!("{} l={}: {v} violations, overload {over:e}", c.instance, c.lambda));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err("no MP cell produced a solution".into());
    }
    Ok(format!("{checked} MP solutions, no violations, occupancy within capacity"))
}

fn sp_deficiency(cells: &[CellRecord]) -> Verdict {
    let low: Vec<&CellRecord> = cells
        .iter()
        .filter(|c| c.model == ModelKind::Sp && c.lambda <= 0.5 && c.has_solution())
        .collect();
    if low.is_empty() {
        return Err("no SP cells at lambda <= 0.5".into());
    }
    let mean = |f: fn(&CellRecord) -> Option<f64>| low.iter().filter_map(|c| f(c)).sum::<f64>() / low.len() as f64;
    let lost = mean(|c| c.lost_pct);
    let max_lost = mean(|c| c.max_lost_pct);

    let mut by_cell: HashMap<(String, u64), [Option<u32>; 2]> = HashMap::new();
    for c in cells.iter().filter(|c| c.has_solution()) {
        let slot = if c.model == ModelKind::Sp { 0 } else { 1 };
        by_cell.entry((c.instance.clone(), c.lambda.to_bits())).or_default()[slot] = c.total_chargers();
    }
    let pairs: Vec<(u32, u32)> = by_cell
        .values()
        .filter_map(|v| match v {
            [Some(sp), Some(mp)] => Some((*sp, *mp)),
            _ => None,
        })
        .collect();
    let fewer = pairs.iter().filter(|(sp, mp)| sp < mp).count();
    let share = fewer as f64 / pairs.len().max(1) as f64;
    let detail = format!(
        "mean Lost% {lost:.2}, mean MaxLost% {max_lost:.2} over {} SP cells; SP fewer chargers on {fewer}/{} cells",
        low.len(),
        pairs.len()
    );
    if lost > 10.0 && max_lost > 40.0 && !pairs.is_empty() && share >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn conservation(cells: &[CellRecord]) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for c in cells.iter().filter(|c| c.model == ModelKind::Sp && c.has_solution()) {
        let e = c
            .conservation_error
            .ok_or_else(|| format!("{} l={}: no conservation record", c.instance, c.lambda))?;
        worst = worst.max(e);
        n += 1;
    }
    if n == 0 {
        return Err("no SP cell produced a solution".into());
    }
    if worst > 1e-9 {
        return Err(format!("max |served + reallocated + lost - demand| = {worst:e}"));
    }
    Ok(format!("{n} SP cells, max residual {worst:.1e}"))
}

fn main() {
    // Lets `cargo test -- --list` and filtered runs skip the gate.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }

    let backend = default_backend().expect("backend from EVCFL_BACKEND");
    let backend = backend.as_ref();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, v: Verdict| {
        match &v {
            Ok(d) => println!("criterion {n} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {d}")
            }
        }
    };

    // Quick criteria first; the batch behind 3, 4 and 8 can take an hour.
    report(1, "worst-case tightness", worst_case_tightness(backend));
    report(2, "oracle equivalence", oracle_equivalence(backend));
    report(5, "LP tightening", lp_tightening(backend));
    report(6, "model coincidence", model_coincidence(backend));
    report(7, "generator statistics", generator_statistics());
    match desk_batch(backend) {
        Ok(cells) => {
            report(3, "MP feasibility invariant", mp_feasibility(&cells));
            report(4, "SP deficiency", sp_deficiency(&cells));
            report(8, "conservation", conservation(&cells));
        }
        Err(e) => {
            for (n, name) in [(3, "MP feasibility invariant"), (4, "SP deficiency"), (8, "conservation")] {
                report(n, name, Err(e.clone()));
            }
        }
    }

    if failed > 0 {
        println!("acceptance: {failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 8 criteria passed");
}
