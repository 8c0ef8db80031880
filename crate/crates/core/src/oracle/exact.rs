//! Exact rational LP and a tiny branch-and-bound on top of it.
//!
//! The simplex is a dense two-phase tableau over `BigRational` with Bland's
//! rule, so it cannot cycle and its answers carry no rounding error beyond
//! the conversion of the final values to `f64`. It is meant for models with
//! at most a few dozen variables.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::milp::{
    ConstraintSense, MilpError, MilpModel, SolveOptions, SolveResult, SolveStatus, SolverBackend,
};

type Q = BigRational;

fn q(v: f64) -> Result<Q, MilpError> {
    Q::from_float(v).ok_or_else(|| MilpError::Config(format!("non-finite coefficient {v}")))
}

fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: Q, values: Vec<Q> },
    Infeasible,
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> &Q {
        &self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = &*v - &f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · x` over the current basis, entering only `allowed`
    /// columns. Returns false if the objective is unbounded.
    fn optimize(&mut self, cost: &[Q], allowed: &[bool]) -> bool {
        loop {
            let mut entering = None;
            for j in 0..self.ncols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for (i, row) in self.rows.iter().enumerate() {
                    if !row[j].is_zero() {
                        d -= &cost[self.basis[i]] * &row[j];
                    }
                }
                if d.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(Q, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c].is_positive() {
                    let ratio = self.rhs(i) / &row[c];
                    let better = match &best {
                        None => true,
                        Some((b, _, bi)) => ratio < *b || (ratio == *b && self.basis[i] < *bi),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                Some((_, r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn value(&self, cost: &[Q]) -> Q {
        self.basis
            .iter()
            .enumerate()
            .fold(Q::zero(), |acc, (i, &b)| acc + &cost[b] * self.rhs(i))
    }
}

/// Solves the continuous relaxation of `model` with the given bounds, which
/// must all be finite.
pub fn solve_lp_exact(model: &MilpModel, lb: &[Q], ub: &[Q]) -> Result<LpOutcome, MilpError> {
    let n = model.num_vars();
    if lb.iter().zip(ub).any(|(l, u)| l > u) {
        return Ok(LpOutcome::Infeasible);
    }
    // Shifted variables x' = x - lb >= 0; rows as (coefficients, sense, rhs).
    let mut rows: Vec<(Vec<Q>, ConstraintSense, Q)> = Vec::new();
    for c in model.constraints() {
        let mut a = vec![Q::zero(); n];
        for &(v, coef) in &c.terms {
            a[v.0] += q(coef)?;
        }
        let shift = a.iter().zip(lb).fold(Q::zero(), |acc, (ai, l)| acc + ai * l);
        rows.push((a, c.sense, q(c.rhs)? - shift));
    }
    for j in 0..n {
        let mut a = vec![Q::zero(); n];
        a[j] = Q::one();
        rows.push((a, ConstraintSense::Le, &ub[j] - &lb[j]));
    }
    for (a, sense, b) in rows.iter_mut() {
        if b.is_negative() {
            for v in a.iter_mut() {
                *v = -v.clone();
            }
            *b = -b.clone();
            *sense = match *sense {
                ConstraintSense::Le => ConstraintSense::Ge,
                ConstraintSense::Ge => ConstraintSense::Le,
                ConstraintSense::Eq => ConstraintSense::Eq,
            };
        }
    }
    let m = rows.len();
    let slacks = rows.iter().filter(|r| r.1 != ConstraintSense::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != ConstraintSense::Le).count();
    let ncols = n + slacks + artificials;
    let first_art = n + slacks;
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        ncols,
    };
    let (mut s, mut art) = (n, first_art);
    for (a, sense, b) in rows {
        let mut row = a;
        row.resize(ncols + 1, Q::zero());
        row[ncols] = b;
        match sense {
            ConstraintSense::Le => {
                row[s] = Q::one();
                tab.basis.push(s);
                s += 1;
            }
            ConstraintSense::Ge => {
                row[s] = -Q::one();
                s += 1;
                row[art] = Q::one();
                tab.basis.push(art);
                art += 1;
            }
            ConstraintSense::Eq => {
                row[art] = Q::one();
                tab.basis.push(art);
                art += 1;
            }
        }
        tab.rows.push(row);
    }

    if artificials > 0 {
        let cost: Vec<Q> = (0..ncols).map(|j| if j >= first_art { Q::one() } else { Q::zero() }).collect();
        let all = vec![true; ncols];
        tab.optimize(&cost, &all);
        if tab.value(&cost).is_positive() {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive zero-valued artificials out of the basis, dropping redundant rows.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= first_art {
                match (0..first_art).find(|&j| !tab.rows[r][j].is_zero()) {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    let mut cost = vec![Q::zero(); ncols];
    for (j, &c) in model.objective().iter().enumerate() {
        cost[j] = q(c)?;
    }
    let allowed: Vec<bool> = (0..ncols).map(|j| j < first_art).collect();
    if !tab.optimize(&cost, &allowed) {
        return Err(MilpError::Backend("relaxation is unbounded despite finite bounds".into()));
    }
    let mut values = lb.to_vec();
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            values[b] += tab.rhs(i);
        }
    }
    let objective = values
        .iter()
        .zip(&cost)
        .fold(Q::zero(), |acc, (v, c)| acc + v * c);
    Ok(LpOutcome::Optimal { objective, values })
}

/// Exact branch-and-bound for tiny models. Selected with
/// `EVCFL_BACKEND=exact-tiny`; refuses models beyond its size budget.
#[derive(Debug, Clone)]
pub struct TinyExactBackend {
    pub max_vars: usize,
    pub max_rows: usize,
    pub max_nodes: usize,
}

impl Default for TinyExactBackend {
    fn default() -> Self {
        Self {
            max_vars: 80,
            max_rows: 160,
            max_nodes: 20_000,
        }
    }
}

fn floor(v: &Q) -> Q {
    Q::from_integer(v.floor().to_integer())
}

fn is_integer(v: &Q) -> bool {
    v.denom() == &BigInt::one()
}

impl SolverBackend for TinyExactBackend {
    fn id(&self) -> &'static str {
        "exact-tiny"
    }

    fn solve(&self, model: &MilpModel, options: &SolveOptions) -> Result<SolveResult, MilpError> {
        let start = Instant::now();
        if model.num_vars() > self.max_vars || model.num_constraints() > self.max_rows {
            return Err(MilpError::Config(format!(
                "model with {} variables and {} rows exceeds the exact backend budget ({} / {})",
                model.num_vars(),
                model.num_constraints(),
                self.max_vars,
                self.max_rows
            )));
        }
        let mut lb = Vec::with_capacity(model.num_vars());
        let mut ub = Vec::with_capacity(model.num_vars());
        let mut integral = Vec::with_capacity(model.num_vars());
        for v in model.vars() {
            let (l, u) = v.kind.bounds();
            if !l.is_finite() || !u.is_finite() {
                return Err(MilpError::Config(format!("variable {} needs finite bounds", v.name)));
            }
            let (mut l, mut u) = (q(l)?, q(u)?);
            if v.kind.is_integral() {
                l = Q::from_integer(l.ceil().to_integer());
                u = floor(&u);
            }
            lb.push(l);
            ub.push(u);
            integral.push(v.kind.is_integral());
        }

        let mut incumbent: Option<(Q, Vec<Q>)> = None;
        let mut stack = vec![(lb, ub)];
        let mut nodes = 0usize;
        let mut stopped = None;
        while let Some((lb, ub)) = stack.pop() {
            if nodes >= self.max_nodes {
                stopped = Some("node limit reached");
                break;
            }
            if start.elapsed().as_secs_f64() > options.time_limit_s {
                stopped = Some("time limit reached");
                break;
            }
            nodes += 1;
            let LpOutcome::Optimal { objective, values } = solve_lp_exact(model, &lb, &ub)? else {
                continue;
            };
            if let Some((best, _)) = &incumbent {
                if objective >= *best {
                    continue;
                }
            }
            match (0..values.len()).find(|&j| integral[j] && !is_integer(&values[j])) {
                None => incumbent = Some((objective, values)),
                Some(j) => {
                    let f = floor(&values[j]);
                    let mut up_lb = lb.clone();
                    up_lb[j] = &f + Q::one();
                    let mut down_ub = ub.clone();
                    down_ub[j] = f;
                    stack.push((up_lb, ub));
                    stack.push((lb, down_ub));
                }
            }
        }

        let wall = start.elapsed();
        Ok(match (incumbent, stopped) {
            (Some((obj, values)), stopped) => {
                let objective = to_f64(&obj);
                let status = if stopped.is_some() { SolveStatus::Feasible } else { SolveStatus::Optimal };
                SolveResult {
                    status,
                    values: values.iter().map(to_f64).collect(),
                    objective: Some(objective),
                    bound: stopped.is_none().then_some(objective),
                    gap_pct: stopped.is_none().then_some(0.0),
                    wall_s: wall.as_secs_f64(),
                    message: stopped.map(str::to_string),
                }
            }
            (None, None) => SolveResult::without_solution(SolveStatus::Infeasible, wall, None),
            (None, Some(why)) => SolveResult::without_solution(SolveStatus::Error, wall, Some(why.to_string())),
        })
    }
}
