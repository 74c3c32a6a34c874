//! Compact single-period program.
//!
//! Allocations are the decision variables (`k = a / ΣPⁿ`), so the key bounds
//! become column bounds `[ΣPⁿ·max(0, K−X), ΣPⁿ·min(1, K+X)]` and the
//! singleton rows of the full model become column bounds too. `v` exists only
//! for net consumers and `y` only for net producers.

use std::time::Instant;

use keyshare_lp::{solve, solve_from, Basis, LpModel, Relation, Scalar, SolveOptions, Status, Var};

use super::{Instance, SettlementError, SettlementResult, SettlementStatistics};

#[derive(Clone, Debug, Default)]
pub(crate) struct BlockStats {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub iterations: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

impl BlockStats {
    pub fn accumulate(&self, s: &mut SettlementStatistics) {
        s.rows += self.rows;
        s.columns += self.columns;
        s.nonzeros += self.nonzeros;
        s.presolved_rows += self.rows;
        s.presolved_columns += self.columns;
        s.iterations += self.iterations;
        s.subproblems += 1;
        s.build_seconds += self.build_seconds;
        s.solve_seconds += self.solve_seconds;
    }
}

/// One period's flows, dense over members.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BlockPoint<F> {
    pub a: Vec<F>,
    pub v: Vec<F>,
    pub y: Vec<F>,
    pub up: F,
    pub down: F,
}

impl<F: Scalar> BlockPoint<F> {
    pub fn zeros(members: usize) -> Self {
        Self {
            a: vec![F::zero(); members],
            v: vec![F::zero(); members],
            y: vec![F::zero(); members],
            up: F::zero(),
            down: F::zero(),
        }
    }

    /// Adds `w·other` to `self`.
    pub fn add_scaled(&mut self, w: F, other: &Self) {
        for (d, s) in [(&mut self.a, &other.a), (&mut self.v, &other.v), (&mut self.y, &other.y)] {
            for (x, &o) in d.iter_mut().zip(s) {
                *x += w * o;
            }
        }
        self.up += w * other.up;
        self.down += w * other.down;
    }

    pub fn store(&self, inst: &Instance<'_, F>, t: usize, out: &mut SettlementResult<F>) {
        let supply = inst.supply[t];
        for i in 0..inst.members() {
            out.allocated.set(t, i, self.a[i]);
            let (lo, hi) = inst.key_range(t, i);
            out.keys.set(t, i, (self.a[i] / supply).max(lo).min(hi));
            out.verified.set(t, i, self.v[i]);
            out.local_sales.set(t, i, self.y[i]);
        }
        out.deviation_up[t] = self.up;
        out.deviation_down[t] = self.down;
    }
}

pub(crate) struct PeriodBlock<F> {
    model: LpModel<F>,
    a: Vec<Var>,
    v: Vec<Option<Var>>,
    y: Vec<Option<Var>>,
    up: Var,
    down: Var,
    basis: Option<Basis>,
}

impl<F: Scalar> PeriodBlock<F> {
    pub fn build(inst: &Instance<'_, F>, t: usize) -> Result<Self, SettlementError> {
        let n = inst.members();
        let supply = inst.supply[t];
        let cn = inst.series.net_consumption().row(t);
        let pn = inst.series.net_production().row(t);
        let consumers = cn.iter().filter(|&&c| c > F::zero()).count();
        let producers = pn.iter().filter(|&&p| p > F::zero()).count();
        let mut m = LpModel::with_capacity(2 * n + 2, 3 * n + 2, 8 * n);
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = inst.key_range(t, i);
            a.push(m.add_variable("a", supply * lo, supply * hi, F::zero())?);
        }
        let mut v = vec![None; n];
        let mut y = vec![None; n];
        if consumers > 0 {
            for i in 0..n {
                if cn[i] > F::zero() {
                    v[i] = Some(m.add_variable("v", F::zero(), cn[i], inst.v_cost[i])?);
                }
            }
            for i in 0..n {
                if pn[i] > F::zero() {
                    y[i] = Some(m.add_variable("y", F::zero(), pn[i], inst.y_cost[i])?);
                }
            }
        }
        let up = m.add_variable("a+", F::zero(), F::infinity(), inst.deviation_cost)?;
        let down = m.add_variable("a-", F::zero(), F::infinity(), inst.deviation_cost)?;

        let all: Vec<(Var, F)> = a.iter().map(|&x| (x, F::one())).collect();
        m.add_constraint(&all, Relation::Le, supply)?;
        if consumers > 0 {
            let mut balance = Vec::with_capacity(consumers + producers);
            balance.extend(v.iter().flatten().map(|&x| (x, F::one())));
            balance.extend(y.iter().flatten().map(|&x| (x, -F::one())));
            m.add_constraint(&balance, Relation::Eq, F::zero())?;
        }
        for i in 0..n {
            if let Some(vi) = v[i] {
                m.add_constraint(&[(vi, F::one()), (a[i], -F::one())], Relation::Le, F::zero())?;
            }
        }
        for i in 0..n {
            let target = inst.initial.get(t, i);
            m.add_constraint(&[(a[i], F::one()), (up, -F::one())], Relation::Le, target)?;
            m.add_constraint(&[(a[i], -F::one()), (down, -F::one())], Relation::Le, -target)?;
        }
        Ok(Self {
            model: m,
            a,
            v,
            y,
            up,
            down,
            basis: None,
        })
    }

    /// Solves with the base costs, or with `v` costs shifted by `-price`
    /// (`price` dense over members). `phase_one` zeroes every other cost.
    pub fn solve(
        &mut self,
        inst: &Instance<'_, F>,
        options: &SolveOptions<F>,
        price: Option<(&[F], bool)>,
    ) -> Result<(BlockPoint<F>, BlockStats), SettlementError> {
        let (shift, phase_one) = match price {
            Some((p, one)) => (Some(p), one),
            None => (None, false),
        };
        for i in 0..inst.members() {
            if let Some(vi) = self.v[i] {
                let base = if phase_one { F::zero() } else { inst.v_cost[i] };
                let adj = shift.map_or(F::zero(), |p| p[i]);
                self.model.set_cost(vi, base - adj);
            }
            if let Some(yi) = self.y[i] {
                self.model.set_cost(yi, if phase_one { F::zero() } else { inst.y_cost[i] });
            }
        }
        let dev = if phase_one { F::zero() } else { inst.deviation_cost };
        self.model.set_cost(self.up, dev);
        self.model.set_cost(self.down, dev);

        let started = Instant::now();
        let opts = options.clone().without_presolve();
        let sol = match &self.basis {
            Some(b) => solve_from(&self.model, &opts, b)?,
            None => solve(&self.model, &opts)?,
        };
        match sol.status {
            Status::Optimal => {}
            Status::Unbounded => return Err(SettlementError::Unbounded),
            Status::Infeasible => {
                return Err(SettlementError::Verification(
                    "single-period program reported infeasible".into(),
                ))
            }
        }
        self.basis = sol.basis.clone();
        let n = inst.members();
        let clamp = |x: F| x.max(F::zero());
        let mut point = BlockPoint::zeros(n);
        for i in 0..n {
            point.a[i] = clamp(sol.value(self.a[i]));
            if let Some(vi) = self.v[i] {
                point.v[i] = clamp(sol.value(vi));
            }
            if let Some(yi) = self.y[i] {
                point.y[i] = clamp(sol.value(yi));
            }
        }
        point.up = clamp(sol.value(self.up));
        point.down = clamp(sol.value(self.down));
        let stats = BlockStats {
            rows: self.model.num_rows(),
            columns: self.model.num_vars(),
            nonzeros: self.model.num_nonzeros(),
            iterations: sol.statistics.iterations,
            build_seconds: 0.0,
            solve_seconds: started.elapsed().as_secs_f64(),
        };
        Ok((point, stats))
    }

    /// Objective of `point` under the costs last installed by [`Self::solve`].
    pub fn current_objective(&self, point: &BlockPoint<F>) -> F {
        let mut c = self.model.cost(self.up) * point.up + self.model.cost(self.down) * point.down;
        for i in 0..point.a.len() {
            if let Some(vi) = self.v[i] {
                c += self.model.cost(vi) * point.v[i];
            }
            if let Some(yi) = self.y[i] {
                c += self.model.cost(yi) * point.y[i];
            }
        }
        c
    }
}
