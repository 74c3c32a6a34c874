//! Two-phase primal revised simplex for bounded variables.
//!
//! The working form is `[A | −I] (x, s) = 0` with one logical `s_r` per row
//! carrying the row's activity bounds, so the all-logical basis is always
//! available. Phase 1 minimizes the sum of basic bound violations; phase 2
//! minimizes the objective. Pricing is Dantzig's rule with lowest-index tie
//! breaking, falling back to Bland's rule after a run of degenerate pivots.
//! The ratio test is Harris' two-pass test with a small bound relaxation.

use std::time::Instant;

use thiserror::Error;

use crate::factor::Factor;
use crate::model::LpModel;
use crate::presolve::{self, Reduced};
use crate::solution::{Basis, LpSolution, SolveStatistics, Status, VarStatus};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("warm-start basis has {got} rows, model has {expected}")]
    BasisMismatch { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
pub struct SolveOptions<F> {
    /// Absolute primal feasibility tolerance on bounds and row activities.
    pub feasibility_tolerance: F,
    /// Reduced-cost tolerance, relative to the largest objective coefficient.
    pub optimality_tolerance: F,
    /// Number of eta updates between basis refactorizations.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Defaults to `100·(rows + columns) + 10 000`.
    pub max_iterations: Option<usize>,
    pub presolve: bool,
}

impl<F: Scalar> Default for SolveOptions<F> {
    fn default() -> Self {
        Self {
            feasibility_tolerance: F::default_tolerance(),
            optimality_tolerance: F::default_tolerance(),
            refactor_interval: 100,
            bland_after: 1000,
            max_iterations: None,
            presolve: true,
        }
    }
}

impl<F: Scalar> SolveOptions<F> {
    pub fn without_presolve(mut self) -> Self {
        self.presolve = false;
        self
    }
}

/// Solves `model` from the all-logical basis.
pub fn solve<F: Scalar>(
    model: &LpModel<F>,
    options: &SolveOptions<F>,
) -> Result<LpSolution<F>, SolverError> {
    run(model, options, None)
}

/// Solves `model` starting from `basis`, which must come from a model with the
/// same rows. Columns appended since then start nonbasic. Presolve is skipped.
pub fn solve_from<F: Scalar>(
    model: &LpModel<F>,
    options: &SolveOptions<F>,
    basis: &Basis,
) -> Result<LpSolution<F>, SolverError> {
    if basis.rows.len() != model.num_rows() {
        return Err(SolverError::BasisMismatch {
            expected: model.num_rows(),
            got: basis.rows.len(),
        });
    }
    run(model, options, Some(basis))
}

fn run<F: Scalar>(
    model: &LpModel<F>,
    options: &SolveOptions<F>,
    warm: Option<&Basis>,
) -> Result<LpSolution<F>, SolverError> {
    let started = Instant::now();
    let mut statistics = SolveStatistics {
        rows: model.num_rows(),
        columns: model.num_vars(),
        nonzeros: model.num_nonzeros(),
        ..Default::default()
    };
    let reduced = if options.presolve && warm.is_none() {
        match presolve::presolve(model, options.feasibility_tolerance) {
            Ok(r) => r,
            Err(_) => {
                statistics.solve_seconds = started.elapsed().as_secs_f64();
                let values = model
                    .vars()
                    .map(|v| {
                        let (l, u) = model.bounds(v);
                        if l.is_finite() {
                            l
                        } else if u.is_finite() {
                            u
                        } else {
                            F::zero()
                        }
                    })
                    .collect();
                return Ok(LpSolution {
                    status: Status::Infeasible,
                    objective: F::nan(),
                    values,
                    duals: None,
                    basis: None,
                    statistics,
                });
            }
        }
    } else {
        presolve::identity(model)
    };
    statistics.presolved_rows = reduced.m;
    statistics.presolved_columns = reduced.n;

    let mut simplex = Simplex::new(&reduced, options);
    if let Some(basis) = warm {
        simplex.load_basis(basis);
    }
    let status = simplex.iterate()?;
    statistics.iterations = simplex.iterations;

    let values = reduced.postsolve(&simplex.x[..reduced.n]);
    let objective = model.objective_value(&values);
    let identity = reduced.is_identity(model);
    let duals = (status == Status::Optimal && !reduced.rows_removed(model)).then(|| {
        let mut y = vec![F::zero(); model.num_rows()];
        for (k, &r) in reduced.row_map.iter().enumerate() {
            y[r] = simplex.y[k];
        }
        y
    });
    let basis = identity.then(|| simplex.export_basis());
    statistics.solve_seconds = started.elapsed().as_secs_f64();
    Ok(LpSolution {
        status,
        objective,
        values,
        duals,
        basis,
        statistics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Zero,
}

struct Step<F> {
    t: F,
    /// Basis position leaving and whether it leaves at its upper bound;
    /// `None` means the entering column moves to its opposite bound.
    leave: Option<(usize, bool)>,
}

struct Simplex<'p, F> {
    p: &'p Reduced<F>,
    n: usize,
    m: usize,
    lo: Vec<F>,
    hi: Vec<F>,
    cost: Vec<F>,
    x: Vec<F>,
    state: Vec<State>,
    head: Vec<usize>,
    factor: Factor<F>,
    ftol: F,
    otol: F,
    harris: F,
    refactor_interval: usize,
    bland_after: usize,
    max_iterations: usize,
    iterations: usize,
    degenerate_run: usize,
    repairs: usize,
    y: Vec<F>,
    alpha: Vec<F>,
}

impl<'p, F: Scalar> Simplex<'p, F> {
    fn new(p: &'p Reduced<F>, options: &SolveOptions<F>) -> Self {
        let (n, m) = (p.n, p.m);
        let mut lo = p.lower.clone();
        let mut hi = p.upper.clone();
        lo.extend_from_slice(&p.row_lo);
        hi.extend_from_slice(&p.row_hi);
        let mut cost = p.cost.clone();
        cost.resize(n + m, F::zero());
        let mut state = vec![State::Lower; n + m];
        for j in 0..n {
            state[j] = resting_state(lo[j], hi[j]);
        }
        let head: Vec<usize> = (n..n + m).collect();
        for &j in &head {
            state[j] = State::Basic;
        }
        Self {
            p,
            n,
            m,
            lo,
            hi,
            cost,
            x: vec![F::zero(); n + m],
            state,
            head,
            factor: Factor::default(),
            ftol: options.feasibility_tolerance,
            otol: options.optimality_tolerance,
            harris: options.feasibility_tolerance * F::lit(0.1),
            refactor_interval: options.refactor_interval.max(1),
            bland_after: options.bland_after,
            max_iterations: options
                .max_iterations
                .unwrap_or(100 * (n + m) + 10_000),
            iterations: 0,
            degenerate_run: 0,
            repairs: 0,
            y: vec![F::zero(); m],
            alpha: vec![F::zero(); m],
        }
    }

    fn load_basis(&mut self, basis: &Basis) {
        let basic = basis
            .columns
            .iter()
            .take(self.n)
            .chain(&basis.rows)
            .filter(|s| **s == VarStatus::Basic)
            .count();
        if basic != self.m {
            return;
        }
        let mut head = Vec::with_capacity(self.m);
        for j in 0..self.n + self.m {
            let status = if j < self.n {
                basis.columns.get(j).copied().unwrap_or(VarStatus::AtLower)
            } else {
                basis.rows[j - self.n]
            };
            self.state[j] = match status {
                VarStatus::Basic => {
                    head.push(j);
                    State::Basic
                }
                VarStatus::AtLower if self.lo[j].is_finite() => State::Lower,
                VarStatus::AtUpper if self.hi[j].is_finite() => State::Upper,
                _ => resting_state(self.lo[j], self.hi[j]),
            };
        }
        self.head = head;
    }

    fn export_basis(&self) -> Basis {
        let conv = |s: State| match s {
            State::Basic => VarStatus::Basic,
            State::Lower => VarStatus::AtLower,
            State::Upper => VarStatus::AtUpper,
            State::Zero => VarStatus::Zero,
        };
        Basis {
            columns: self.state[..self.n].iter().map(|&s| conv(s)).collect(),
            rows: self.state[self.n..].iter().map(|&s| conv(s)).collect(),
        }
    }

    fn scatter_column(&self, j: usize, out: &mut [F]) {
        out.fill(F::zero());
        if j < self.n {
            for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                out[self.p.col_idx[k]] = self.p.col_val[k];
            }
        } else {
            out[j - self.n] = -F::one();
        }
    }

    fn dot_column(&self, j: usize, y: &[F]) -> F {
        if j < self.n {
            let mut s = F::zero();
            for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                s += self.p.col_val[k] * y[self.p.col_idx[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn refactor(&mut self) -> Result<(), SolverError> {
        loop {
            let mut start = Vec::with_capacity(self.m + 1);
            let mut idx = Vec::new();
            let mut val = Vec::new();
            start.push(0);
            for &j in &self.head {
                if j < self.n {
                    for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                        idx.push(self.p.col_idx[k]);
                        val.push(self.p.col_val[k]);
                    }
                } else {
                    idx.push(j - self.n);
                    val.push(-F::one());
                }
                start.push(idx.len());
            }
            match Factor::factorize(self.m, &start, &idx, &val) {
                Ok(f) => {
                    self.factor = f;
                    return Ok(());
                }
                Err(singular) => {
                    self.repairs += 1;
                    if self.repairs > 50 {
                        return Err(SolverError::NumericalBreakdown(
                            "basis repeatedly singular".into(),
                        ));
                    }
                    for (&pos, &row) in singular.positions.iter().zip(&singular.rows) {
                        let old = self.head[pos];
                        self.state[old] = nearest_state(self.x[old], self.lo[old], self.hi[old]);
                        let logical = self.n + row;
                        self.head[pos] = logical;
                        self.state[logical] = State::Basic;
                    }
                }
            }
        }
    }

    fn nonbasic_value(&self, j: usize) -> F {
        match self.state[j] {
            State::Lower => self.lo[j],
            State::Upper => self.hi[j],
            State::Zero | State::Basic => F::zero(),
        }
    }

    fn compute_basics(&mut self) -> Result<(), SolverError> {
        let mut rhs = vec![F::zero(); self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == State::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == F::zero() {
                continue;
            }
            if j < self.n {
                for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                    rhs[self.p.col_idx[k]] -= self.p.col_val[k] * v;
                }
            } else {
                rhs[j - self.n] += v;
            }
        }
        self.factor.ftran(&mut rhs);
        for (pos, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[pos];
        }
        // Consistency of the recomputed point with A x − s = 0.
        let mut resid = vec![F::zero(); self.m];
        let mut scale = F::one();
        for j in 0..self.n + self.m {
            let v = self.x[j];
            if !v.is_finite() {
                return Err(SolverError::NumericalBreakdown(
                    "non-finite basic solution".into(),
                ));
            }
            scale = scale.max(v.abs());
            if j < self.n {
                for k in self.p.col_start[j]..self.p.col_start[j + 1] {
                    resid[self.p.col_idx[k]] += self.p.col_val[k] * v;
                }
            } else {
                resid[j - self.n] -= v;
            }
        }
        let worst = resid.iter().fold(F::zero(), |a, r| a.max(r.abs()));
        if worst > F::lit(1e-6) * scale {
            return Err(SolverError::NumericalBreakdown(format!(
                "primal residual {worst} after refactorization"
            )));
        }
        Ok(())
    }

    fn violation(&self, j: usize) -> F {
        let v = self.x[j];
        if v < self.lo[j] - self.ftol {
            self.lo[j] - v
        } else if v > self.hi[j] + self.ftol {
            v - self.hi[j]
        } else {
            F::zero()
        }
    }

    fn iterate(&mut self) -> Result<Status, SolverError> {
        self.refactor()?;
        self.compute_basics()?;
        let cmax = self
            .cost
            .iter()
            .fold(F::zero(), |a, c| a.max(c.abs()));
        let phase2_tol = if cmax > F::zero() {
            self.otol * cmax
        } else {
            self.otol
        };
        let mut cb = vec![F::zero(); self.m];
        let mut dj = vec![F::zero(); self.n + self.m];
        loop {
            if self.factor.num_etas() >= self.refactor_interval {
                self.refactor()?;
                self.compute_basics()?;
            }
            let phase1 = self.head.iter().any(|&j| self.violation(j) > F::zero());
            for (pos, &j) in self.head.iter().enumerate() {
                cb[pos] = if phase1 {
                    let v = self.x[j];
                    if v < self.lo[j] - self.ftol {
                        -F::one()
                    } else if v > self.hi[j] + self.ftol {
                        F::one()
                    } else {
                        F::zero()
                    }
                } else {
                    self.cost[j]
                };
            }
            self.y.copy_from_slice(&cb);
            self.factor.btran(&mut self.y);

            let tol = if phase1 { self.otol } else { phase2_tol };
            let bland = self.degenerate_run >= self.bland_after;
            let entering = self.price(phase1, tol, bland, &mut dj);
            let Some((q, dir)) = entering else {
                if self.factor.num_etas() > 0 {
                    self.refactor()?;
                    self.compute_basics()?;
                    continue;
                }
                return Ok(if phase1 {
                    Status::Infeasible
                } else {
                    Status::Optimal
                });
            };

            if self.iterations >= self.max_iterations {
                return Err(SolverError::IterationLimit(self.max_iterations));
            }
            self.iterations += 1;

            let mut alpha = std::mem::take(&mut self.alpha);
            self.scatter_column(q, &mut alpha);
            self.factor.ftran(&mut alpha);
            let step = self.ratio_test(q, dir, &alpha, bland);
            let Some(step) = step else {
                self.alpha = alpha;
                if phase1 {
                    if self.factor.num_etas() > 0 {
                        self.refactor()?;
                        self.compute_basics()?;
                        continue;
                    }
                    return Err(SolverError::NumericalBreakdown(
                        "unbounded phase-1 direction".into(),
                    ));
                }
                return Ok(Status::Unbounded);
            };
            if step.t <= F::lit(1e-12) {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.apply(q, dir, &alpha, step);
            self.alpha = alpha;
        }
    }

    fn price(&self, phase1: bool, tol: F, bland: bool, dj: &mut [F]) -> Option<(usize, F)> {
        let mut best: Option<(usize, F)> = None;
        let mut best_score = F::zero();
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == State::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let c = if phase1 { F::zero() } else { self.cost[j] };
            let d = c - self.dot_column(j, &self.y);
            dj[j] = d;
            let dir = match st {
                State::Lower if d < -tol => F::one(),
                State::Upper if d > tol => -F::one(),
                State::Zero if d.abs() > tol => {
                    if d < F::zero() {
                        F::one()
                    } else {
                        -F::one()
                    }
                }
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: F, alpha: &[F], bland: bool) -> Option<Step<F>> {
        let piv_tol = F::ratio_pivot_tolerance();
        let flip = if self.lo[q].is_finite() && self.hi[q].is_finite() {
            Some(self.hi[q] - self.lo[q])
        } else {
            None
        };
        // Pass 1: smallest step with bounds relaxed by the Harris tolerance.
        let mut t_max = F::infinity();
        let blocking = |pos: usize| -> Option<(F, F, bool)> {
            let a = alpha[pos];
            if a.abs() <= piv_tol {
                return None;
            }
            let j = self.head[pos];
            let rate = -dir * a;
            let v = self.x[j];
            let (lo, hi) = (self.lo[j], self.hi[j]);
            if rate < F::zero() {
                let (bound, upper) = if v > hi + self.ftol {
                    (hi, true)
                } else if v < lo - self.ftol || !lo.is_finite() {
                    return None;
                } else {
                    (lo, false)
                };
                Some((v - bound, -rate, upper))
            } else {
                let (bound, upper) = if v < lo - self.ftol {
                    (lo, false)
                } else if v > hi + self.ftol || !hi.is_finite() {
                    return None;
                } else {
                    (hi, true)
                };
                Some((bound - v, rate, upper))
            }
        };
        if bland {
            let mut best: Option<(F, usize, usize, bool)> = None;
            for pos in 0..self.m {
                if let Some((dist, rate, upper)) = blocking(pos) {
                    let t = dist.max(F::zero()) / rate;
                    let j = self.head[pos];
                    let better = match best {
                        None => true,
                        Some((bt, _, bj, _)) => t < bt || (t == bt && j < bj),
                    };
                    if better {
                        best = Some((t, pos, j, upper));
                    }
                }
            }
            return match (best, flip) {
                (Some((t, _, _, _)), Some(f)) if f <= t => Some(Step { t: f, leave: None }),
                (Some((t, pos, _, upper)), _) => Some(Step {
                    t,
                    leave: Some((pos, upper)),
                }),
                (None, Some(f)) => Some(Step { t: f, leave: None }),
                (None, None) => None,
            };
        }
        for pos in 0..self.m {
            if let Some((dist, rate, _)) = blocking(pos) {
                let t = (dist.max(F::zero()) + self.harris) / rate;
                if t < t_max {
                    t_max = t;
                }
            }
        }
        if let Some(f) = flip {
            if f <= t_max {
                return Some(Step { t: f, leave: None });
            }
        }
        if !t_max.is_finite() {
            return None;
        }
        // Pass 2: among steps within the relaxed bound, the largest pivot.
        let mut best: Option<(F, usize, F, bool)> = None;
        for pos in 0..self.m {
            if let Some((dist, rate, upper)) = blocking(pos) {
                let t = dist.max(F::zero()) / rate;
                if t > t_max {
                    continue;
                }
                let mag = alpha[pos].abs();
                let better = match best {
                    None => true,
                    Some((bm, bpos, _, _)) => {
                        mag > bm || (mag == bm && self.head[pos] < self.head[bpos])
                    }
                };
                if better {
                    best = Some((mag, pos, t, upper));
                }
            }
        }
        best.map(|(_, pos, t, upper)| Step {
            t,
            leave: Some((pos, upper)),
        })
    }

    fn apply(&mut self, q: usize, dir: F, alpha: &[F], step: Step<F>) {
        let t = step.t;
        if t != F::zero() {
            self.x[q] += dir * t;
            for (pos, &a) in alpha.iter().enumerate() {
                if a != F::zero() {
                    let j = self.head[pos];
                    self.x[j] -= dir * t * a;
                }
            }
        }
        match step.leave {
            None => {
                if dir > F::zero() {
                    self.state[q] = State::Upper;
                    self.x[q] = self.hi[q];
                } else {
                    self.state[q] = State::Lower;
                    self.x[q] = self.lo[q];
                }
            }
            Some((pos, upper)) => {
                let leaving = self.head[pos];
                if upper {
                    self.state[leaving] = State::Upper;
                    self.x[leaving] = self.hi[leaving];
                } else {
                    self.state[leaving] = State::Lower;
                    self.x[leaving] = self.lo[leaving];
                }
                self.head[pos] = q;
                self.state[q] = State::Basic;
                self.factor.push_eta(pos, alpha);
            }
        }
    }
}

fn resting_state<F: Scalar>(lo: F, hi: F) -> State {
    if lo.is_finite() {
        State::Lower
    } else if hi.is_finite() {
        State::Upper
    } else {
        State::Zero
    }
}

fn nearest_state<F: Scalar>(x: F, lo: F, hi: F) -> State {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if (x - lo).abs() <= (hi - x).abs() {
                State::Lower
            } else {
                State::Upper
            }
        }
        (true, false) => State::Lower,
        (false, true) => State::Upper,
        (false, false) => State::Zero,
    }
}
