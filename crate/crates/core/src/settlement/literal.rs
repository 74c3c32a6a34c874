//! The full settlement program, one row per constraint instance.

use std::time::Instant;

use keyshare_lp::{solve, Con, LpModel, Relation, Scalar, Status, Var};
use serde::Serialize;

use super::{
    InfeasibilityReport, Instance, SettleOptions, SettlementError, SettlementResult, Shortfall, SolveStrategy,
    ELASTIC_PENALTY,
};
use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;

/// Columns of one active period.
#[derive(Clone, Debug)]
pub struct PeriodVars {
    pub t: usize,
    pub k: Vec<Var>,
    pub a: Vec<Var>,
    pub v: Vec<Var>,
    pub y: Vec<Var>,
    /// `a⁺ₜ`
    pub up: Var,
    /// `a⁻ₜ`
    pub down: Var,
}

#[derive(Clone, Debug)]
pub struct LiteralModel<F> {
    pub model: LpModel<F>,
    /// Active periods only; periods without production are not modeled.
    pub periods: Vec<PeriodVars>,
    /// `ssrᵢ`, absent for members without consumption.
    pub ssr: Vec<Option<Var>>,
    pub floor_rows: Vec<Option<Con>>,
    /// Floor slack, present only in the diagnostic variant.
    pub elastic: Vec<Option<Var>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ModelSize {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
}

/// Builds the full program for `series` under `contracts` from keys `keys`.
pub fn build_lp<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
) -> Result<LiteralModel<F>, SettlementError> {
    let inst = Instance::new(series, contracts, keys)?;
    build(&inst, false)
}

/// Size of the model [`build_lp`] would produce, without building it.
pub fn literal_size<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
) -> Result<ModelSize, SettlementError> {
    Ok(size_of(&Instance::new(series, contracts, keys)?))
}

pub(crate) fn size_of<F: Scalar>(inst: &Instance<'_, F>) -> ModelSize {
    let n = inst.members();
    let t = inst.active.len();
    let with_ssr = inst.total_consumption.iter().filter(|&&c| c > F::zero()).count();
    ModelSize {
        rows: t * (8 * n + 2) + 2 * with_ssr,
        columns: t * (4 * n + 2) + with_ssr,
        nonzeros: t * 15 * n + with_ssr * (2 + t),
    }
}

pub(crate) fn build<F: Scalar>(inst: &Instance<'_, F>, elastic: bool) -> Result<LiteralModel<F>, SettlementError> {
    let n = inst.members();
    let size = size_of(inst);
    let mut m = LpModel::with_capacity(size.columns + n, size.rows, size.nonzeros + n);
    m.set_objective_offset(inst.offset);
    let one = F::one();
    let zero = F::zero();
    let cn = inst.series.net_consumption();
    let pn = inst.series.net_production();

    let mut periods = Vec::with_capacity(inst.active.len());
    for &t in &inst.active {
        let mut k = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            k.push(m.add_variable(format!("k[{t},{i}]"), zero, one, zero)?);
            a.push(m.add_variable(format!("a[{t},{i}]"), zero, F::infinity(), zero)?);
            v.push(m.add_variable(format!("v[{t},{i}]"), zero, F::infinity(), inst.v_cost[i])?);
            y.push(m.add_variable(format!("y[{t},{i}]"), zero, F::infinity(), inst.y_cost[i])?);
        }
        let up = m.add_variable(format!("a+[{t}]"), zero, F::infinity(), inst.deviation_cost)?;
        let down = m.add_variable(format!("a-[{t}]"), zero, F::infinity(), inst.deviation_cost)?;
        let supply = inst.supply[t];

        for i in 0..n {
            m.add_constraint(&[(a[i], one), (k[i], -supply)], Relation::Eq, zero)?;
        }
        let balance: Vec<(Var, F)> = v
            .iter()
            .map(|&x| (x, one))
            .chain(y.iter().map(|&x| (x, -one)))
            .collect();
        m.add_constraint(&balance, Relation::Eq, zero)?;
        for i in 0..n {
            m.add_constraint(&[(y[i], one)], Relation::Le, pn.get(t, i))?;
        }
        for i in 0..n {
            m.add_constraint(&[(a[i], one), (up, -one)], Relation::Le, inst.initial.get(t, i))?;
        }
        for i in 0..n {
            m.add_constraint(&[(a[i], -one), (down, -one)], Relation::Le, -inst.initial.get(t, i))?;
        }
        for i in 0..n {
            m.add_constraint(&[(v[i], one), (a[i], -one)], Relation::Le, zero)?;
        }
        for i in 0..n {
            m.add_constraint(&[(v[i], one)], Relation::Le, cn.get(t, i))?;
        }
        let keysum: Vec<(Var, F)> = k.iter().map(|&x| (x, one)).collect();
        m.add_constraint(&keysum, Relation::Le, one)?;
        for i in 0..n {
            let x = inst.contracts.get(i).tolerance[t];
            m.add_constraint(&[(k[i], one)], Relation::Le, inst.keys.get(t, i) + x)?;
        }
        for i in 0..n {
            let x = inst.contracts.get(i).tolerance[t];
            m.add_constraint(&[(k[i], -one)], Relation::Le, x - inst.keys.get(t, i))?;
        }
        periods.push(PeriodVars {
            t,
            k,
            a,
            v,
            y,
            up,
            down,
        });
    }

    let mut ssr = vec![None; n];
    let mut floor_rows = vec![None; n];
    let mut slack = vec![None; n];
    for i in 0..n {
        let total = inst.total_consumption[i];
        if !(total > zero) {
            continue;
        }
        let s = m.add_variable(format!("ssr[{i}]"), zero, F::infinity(), zero)?;
        let mut row = Vec::with_capacity(periods.len() + 1);
        row.push((s, total));
        row.extend(periods.iter().map(|p| (p.v[i], -one)));
        m.add_constraint(&row, Relation::Eq, inst.behind_meter[i])?;
        let floor = inst.contracts.get(i).ssr_floor;
        let con = if elastic && floor > zero {
            let e = m.add_variable(format!("slack[{i}]"), zero, F::infinity(), F::lit(ELASTIC_PENALTY))?;
            slack[i] = Some(e);
            m.add_constraint(&[(s, one), (e, one)], Relation::Ge, floor)?
        } else {
            m.add_constraint(&[(s, one)], Relation::Ge, floor)?
        };
        ssr[i] = Some(s);
        floor_rows[i] = Some(con);
    }
    Ok(LiteralModel {
        model: m,
        periods,
        ssr,
        floor_rows,
        elastic: slack,
    })
}

pub(crate) fn settle_monolithic<F: Scalar>(
    inst: &Instance<'_, F>,
    options: &SettleOptions<F>,
) -> Result<SettlementResult<F>, SettlementError> {
    let started = Instant::now();
    let lit = build(inst, false)?;
    let build_seconds = started.elapsed().as_secs_f64();
    let sol = solve(&lit.model, &options.solver)?;
    match sol.status {
        Status::Optimal => {}
        Status::Unbounded => return Err(SettlementError::Unbounded),
        Status::Infeasible => return Err(SettlementError::Infeasible(diagnose(inst, options)?)),
    }
    let mut result = inst.empty_result(SolveStrategy::Monolithic);
    let clamp = |x: F| x.max(F::zero());
    for p in &lit.periods {
        let t = p.t;
        for i in 0..inst.members() {
            let (lo, hi) = inst.key_range(t, i);
            result.keys.set(t, i, sol.value(p.k[i]).max(lo).min(hi));
            result.allocated.set(t, i, clamp(sol.value(p.a[i])));
            result.verified.set(t, i, clamp(sol.value(p.v[i])));
            result.local_sales.set(t, i, clamp(sol.value(p.y[i])));
        }
        result.deviation_up[t] = clamp(sol.value(p.up));
        result.deviation_down[t] = clamp(sol.value(p.down));
    }
    inst.finish(&mut result);
    result.objective = sol.objective;
    let s = &sol.statistics;
    result.statistics.rows = s.rows;
    result.statistics.columns = s.columns;
    result.statistics.nonzeros = s.nonzeros;
    result.statistics.presolved_rows = s.presolved_rows;
    result.statistics.presolved_columns = s.presolved_columns;
    result.statistics.iterations = s.iterations;
    result.statistics.subproblems = 1;
    result.statistics.build_seconds = build_seconds;
    result.statistics.solve_seconds = s.solve_seconds;
    Ok(result)
}

/// Re-solves with penalized slack on every floor and names the members whose
/// slack stays positive.
pub(crate) fn diagnose<F: Scalar>(
    inst: &Instance<'_, F>,
    options: &SettleOptions<F>,
) -> Result<InfeasibilityReport, SettlementError> {
    let lit = build(inst, true)?;
    let sol = solve(&lit.model, &options.solver)?;
    if sol.status != Status::Optimal {
        return Err(SettlementError::Verification(
            "elastic diagnostic program did not solve to optimality".into(),
        ));
    }
    let tol = options.solver.feasibility_tolerance;
    let members = lit
        .elastic
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let missing = sol.value((*e)?);
            (missing > tol).then(|| Shortfall {
                member: inst.series.members()[i].clone(),
                floor: inst.contracts.get(i).ssr_floor.as_f64(),
                missing: missing.as_f64(),
            })
        })
        .collect();
    Ok(InfeasibilityReport { members })
}
