//! Optimal repartition keys.
//!
//! A settlement minimizes the community's total bill plus a small penalty on
//! the largest per-period key deviation, subject to each member's tolerance
//! around its initial key and optional self-sufficiency floors. Three solve
//! paths share one model:
//!
//! * [`SolveStrategy::Monolithic`] builds the full program with [`build_lp`].
//! * [`SolveStrategy::Decomposed`] solves each period independently, valid
//!   when no floor couples the periods.
//! * [`SolveStrategy::ColumnGeneration`] prices per-period proposals against a
//!   small master program holding the floors.

mod block;
mod colgen;
mod literal;
mod verify;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use keyshare_lp::{ModelError, Scalar, SolveOptions, SolverError};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;
use crate::table::PeriodTable;

pub use colgen::CoupledSolver;
pub use literal::{build_lp, literal_size, LiteralModel, ModelSize, PeriodVars};
pub use verify::verify;

/// Penalty per unit of floor shortfall in the infeasibility diagnostic, €.
pub const ELASTIC_PENALTY: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SettlementError {
    #[error("inconsistent inputs: {0}")]
    Shape(String),
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
    #[error("solver failure: {0}")]
    Solver(#[from] SolverError),
    #[error("model construction failed: {0}")]
    Model(#[from] ModelError),
    #[error("settlement program is unbounded")]
    Unbounded,
    #[error("settlement failed verification: {0}")]
    Verification(String),
    #[error("self-sufficiency floors couple the periods; the decomposed path cannot honor them")]
    CoupledFloors,
    #[error("column generation did not converge in {0} rounds")]
    NoConvergence(usize),
}

/// A member whose floor cannot be met.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Shortfall {
    pub member: String,
    pub floor: f64,
    /// Missing self-sufficiency, as a fraction of total consumption.
    pub missing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub members: Vec<Shortfall>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "self-sufficiency floors cannot all be met")?;
        for (n, s) in self.members.iter().enumerate() {
            let sep = if n == 0 { ": " } else { ", " };
            write!(f, "{sep}{} (floor {:.4}, short by {:.6})", s.member, s.floor, s.missing)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStrategy {
    /// Monolithic for small instances, otherwise decomposed or column
    /// generation depending on whether any floor binds.
    #[default]
    Auto,
    Monolithic,
    Decomposed,
    ColumnGeneration,
}

impl FromStr for SolveStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "monolithic" => Ok(Self::Monolithic),
            "decomposed" => Ok(Self::Decomposed),
            "column-generation" => Ok(Self::ColumnGeneration),
            _ => Err(format!("unknown solve strategy `{s}`")),
        }
    }
}

impl fmt::Display for SolveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Monolithic => "monolithic",
            Self::Decomposed => "decomposed",
            Self::ColumnGeneration => "column-generation",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SettleOptions<F> {
    pub strategy: SolveStrategy,
    pub solver: SolveOptions<F>,
    /// Largest full model, in rows, that `Auto` solves monolithically.
    pub monolithic_row_limit: usize,
    /// Solve independent periods on the rayon pool.
    pub parallel: bool,
    /// Round limit for column generation.
    pub max_rounds: usize,
    /// Relative optimality gap at which column generation stops.
    pub gap_tolerance: F,
    /// Check every invariant of the result before returning it.
    pub verify: bool,
}

impl<F: Scalar> Default for SettleOptions<F> {
    fn default() -> Self {
        Self {
            strategy: SolveStrategy::Auto,
            solver: SolveOptions::default(),
            monolithic_row_limit: 4000,
            parallel: true,
            max_rounds: 500,
            gap_tolerance: F::lit(1e-9),
            verify: true,
        }
    }
}

impl<F: Scalar> SettleOptions<F> {
    pub fn with_strategy(mut self, strategy: SolveStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SettlementStatistics {
    /// Active (positive production) periods.
    pub active_periods: usize,
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub presolved_rows: usize,
    pub presolved_columns: usize,
    pub iterations: usize,
    /// Per-period programs solved.
    pub subproblems: usize,
    /// Column generation rounds, zero on the other paths.
    pub rounds: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SettlementResult<F> {
    /// Optimized keys `k`.
    pub keys: PeriodTable<F>,
    /// Allocated production `a = k·ΣPⁿ`.
    pub allocated: PeriodTable<F>,
    /// Verified allocation `v`.
    pub verified: PeriodTable<F>,
    /// Local sales `y`.
    pub local_sales: PeriodTable<F>,
    /// Largest positive key deviation per period, as energy (`a⁺`).
    pub deviation_up: Vec<F>,
    /// Largest negative key deviation per period, as energy (`a⁻`).
    pub deviation_down: Vec<F>,
    pub ssr: Vec<F>,
    /// Total cost including the constant part, €.
    pub objective: F,
    /// Constant part of the objective, `Σ ξᵇ·Cⁿ − ξˢ·Pⁿ`.
    pub objective_offset: F,
    /// Initial allocation `A = K·ΣPⁿ`.
    pub initial_allocation: PeriodTable<F>,
    /// Path actually taken (never `Auto`).
    pub strategy: SolveStrategy,
    pub statistics: SettlementStatistics,
}

/// Everything the solve paths need, precomputed once.
pub(crate) struct Instance<'a, F> {
    pub series: &'a MeterSeries<F>,
    pub contracts: &'a Contracts<F>,
    pub keys: &'a KeyMatrix<F>,
    /// `ΣᵢPⁿ[t][i]` per period.
    pub supply: Vec<F>,
    pub active: Vec<usize>,
    /// Objective coefficient of `v`, `ξˡ⁻ − ξᵇ`.
    pub v_cost: Vec<F>,
    /// Objective coefficient of `y`, `ξˢ − ξˡ⁺`.
    pub y_cost: Vec<F>,
    /// `Σᵢ ξᵈᵢ`.
    pub deviation_cost: F,
    pub offset: F,
    /// `Σₜ C[t][i]`.
    pub total_consumption: Vec<F>,
    /// `Σₜ min(P[t][i], C[t][i])`.
    pub behind_meter: Vec<F>,
    pub initial: PeriodTable<F>,
}

impl<'a, F: Scalar> Instance<'a, F> {
    pub fn new(
        series: &'a MeterSeries<F>,
        contracts: &'a Contracts<F>,
        keys: &'a KeyMatrix<F>,
    ) -> Result<Self, SettlementError> {
        let (t_len, i_len) = (series.num_periods(), series.num_members());
        if contracts.len() != i_len {
            return Err(SettlementError::Shape(format!(
                "{} contracts for {} members",
                contracts.len(),
                i_len
            )));
        }
        if keys.periods() != t_len || keys.members() != i_len {
            return Err(SettlementError::Shape(format!(
                "key matrix is {}x{}, series is {}x{}",
                keys.periods(),
                keys.members(),
                t_len,
                i_len
            )));
        }
        if let Some(i) = contracts.iter().position(|c| c.tolerance.len() != t_len) {
            return Err(SettlementError::Shape(format!(
                "member `{}` has {} tolerance periods, series has {}",
                series.members()[i],
                contracts.get(i).tolerance.len(),
                t_len
            )));
        }
        let supply: Vec<F> = (0..t_len).map(|t| series.net_production().row_sum(t)).collect();
        let active = (0..t_len).filter(|&t| supply[t] > F::zero()).collect();
        let v_cost = contracts.iter().map(|c| c.prices.local_buy - c.prices.buy).collect();
        let y_cost = contracts.iter().map(|c| c.prices.sell - c.prices.local_sell).collect();
        let mut offset = F::zero();
        for t in 0..t_len {
            for (i, c) in contracts.iter().enumerate() {
                offset += c.prices.buy * series.net_consumption().get(t, i)
                    - c.prices.sell * series.net_production().get(t, i);
            }
        }
        let total_consumption = (0..i_len).map(|i| series.consumption().column_sum(i)).collect();
        let behind_meter = (0..i_len)
            .map(|i| {
                (0..t_len)
                    .map(|t| series.production().get(t, i).min(series.consumption().get(t, i)))
                    .sum()
            })
            .collect();
        Ok(Self {
            series,
            contracts,
            keys,
            initial: initial_allocation(series, keys),
            supply,
            active,
            v_cost,
            y_cost,
            deviation_cost: contracts.total_deviation_price(),
            offset,
            total_consumption,
            behind_meter,
        })
    }

    pub fn members(&self) -> usize {
        self.series.num_members()
    }

    pub fn periods(&self) -> usize {
        self.series.num_periods()
    }

    /// Admissible key interval `[max(0, K−X), min(1, K+X)]`.
    pub fn key_range(&self, t: usize, i: usize) -> (F, F) {
        let k = self.keys.get(t, i);
        let x = self.contracts.get(i).tolerance[t];
        ((k - x).max(F::zero()), (k + x).min(F::one()))
    }

    /// Energy that `Σₜ v[t][i]` must reach for each member's floor; `None`
    /// when the floor is met without any community allocation or the member
    /// has no consumption.
    pub fn floor_requirements(&self, floors: &[F]) -> Vec<Option<F>> {
        (0..self.members())
            .map(|i| {
                let total = self.total_consumption[i];
                if !(total > F::zero()) {
                    return None;
                }
                let need = floors[i] * total - self.behind_meter[i];
                (need > F::lit(1e-12) * total.max(F::one())).then_some(need)
            })
            .collect()
    }

    /// Cost of one period's flows, excluding the constant part.
    pub fn period_cost(&self, v: &[F], y: &[F], up: F, down: F) -> F {
        let mut c = self.deviation_cost * (up + down);
        for i in 0..self.members() {
            c += self.v_cost[i] * v[i] + self.y_cost[i] * y[i];
        }
        c
    }

    /// Result skeleton with inactive periods filled in: keys pass through,
    /// flows are zero.
    pub fn empty_result(&self, strategy: SolveStrategy) -> SettlementResult<F> {
        let (t_len, i_len) = (self.periods(), self.members());
        SettlementResult {
            keys: self.keys.table().clone(),
            allocated: PeriodTable::zeros(t_len, i_len),
            verified: PeriodTable::zeros(t_len, i_len),
            local_sales: PeriodTable::zeros(t_len, i_len),
            deviation_up: vec![F::zero(); t_len],
            deviation_down: vec![F::zero(); t_len],
            ssr: Vec::new(),
            objective: self.offset,
            objective_offset: self.offset,
            initial_allocation: self.initial.clone(),
            strategy,
            statistics: SettlementStatistics {
                active_periods: self.active.len(),
                ..Default::default()
            },
        }
    }

    /// Members with identical readings, contracts and initial keys, in
    /// groups of two or more.
    fn twin_groups(&self) -> Vec<Vec<usize>> {
        let same = |i: usize, j: usize| {
            self.contracts.get(i) == self.contracts.get(j)
                && (0..self.periods()).all(|t| {
                    self.series.consumption().get(t, i) == self.series.consumption().get(t, j)
                        && self.series.production().get(t, i) == self.series.production().get(t, j)
                        && self.keys.get(t, i) == self.keys.get(t, j)
                })
        };
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.members() {
            match groups.iter_mut().find(|g| same(g[0], i)) {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        groups.retain(|g| g.len() > 1);
        groups
    }

    /// Replaces the flows of twin members by their group average, which is
    /// optimal whenever the stored flows are, and equal across twins.
    fn symmetrize(&self, result: &mut SettlementResult<F>) {
        for group in self.twin_groups() {
            let n = F::lit(group.len() as f64);
            for &t in &self.active {
                for table in [
                    &mut result.keys,
                    &mut result.allocated,
                    &mut result.verified,
                    &mut result.local_sales,
                ] {
                    let mean = group.iter().map(|&i| table.get(t, i)).sum::<F>() / n;
                    group.iter().for_each(|&i| table.set(t, i, mean));
                }
            }
        }
    }

    /// Evens out twin members, then fills `ssr` and `objective` from the
    /// flows already stored.
    pub fn finish(&self, result: &mut SettlementResult<F>) {
        self.symmetrize(result);
        result.ssr = compute_ssr(self.series, &result.verified);
        let mut obj = self.offset;
        for t in 0..self.periods() {
            obj += self.period_cost(
                result.verified.row(t),
                result.local_sales.row(t),
                result.deviation_up[t],
                result.deviation_down[t],
            );
        }
        result.objective = obj;
    }
}

/// `A[t][i] = K[t][i]·Σⱼ Pⁿ[t][j]`.
pub fn initial_allocation<F: Scalar>(series: &MeterSeries<F>, keys: &KeyMatrix<F>) -> PeriodTable<F> {
    PeriodTable::from_fn(series.num_periods(), series.num_members(), |t, i| {
        keys.get(t, i) * series.net_production().row_sum(t)
    })
}

/// `Σₜ min(P + v, C) / Σₜ C` per member; members without consumption get 1.
pub fn compute_ssr<F: Scalar>(series: &MeterSeries<F>, verified: &PeriodTable<F>) -> Vec<F> {
    (0..series.num_members())
        .map(|i| {
            let mut covered = F::zero();
            let mut total = F::zero();
            for t in 0..series.num_periods() {
                let c = series.consumption().get(t, i);
                covered += (series.production().get(t, i) + verified.get(t, i)).min(c);
                total += c;
            }
            if total > F::zero() {
                covered / total
            } else {
                F::one()
            }
        })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
#[error("verified allocation {v} exceeds net consumption {net} at period {t}, member {i}")]
pub struct LinearizationError {
    pub t: usize,
    pub i: usize,
    pub v: f64,
    pub net: f64,
}

/// `min(P, C) + v`, which equals `min(P + v, C)` whenever `v ≤ Cⁿ`.
pub fn linearized_ssr_numerator<F: Scalar>(
    series: &MeterSeries<F>,
    verified: &PeriodTable<F>,
    t: usize,
    i: usize,
) -> Result<F, LinearizationError> {
    let v = verified.get(t, i);
    let net = series.net_consumption().get(t, i);
    if v > net {
        return Err(LinearizationError {
            t,
            i,
            v: v.as_f64(),
            net: net.as_f64(),
        });
    }
    let p = series.production().get(t, i);
    let c = series.consumption().get(t, i);
    Ok(p.min(c) + v)
}

/// Optimal settlement of `series` under `contracts`, starting from keys `keys`.
pub fn settle<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
    options: &SettleOptions<F>,
) -> Result<SettlementResult<F>, SettlementError> {
    let inst = Instance::new(series, contracts, keys)?;
    let floors = contracts.floors();
    let coupled = inst.floor_requirements(&floors).iter().any(Option::is_some);
    let strategy = match options.strategy {
        SolveStrategy::Auto => {
            if literal::size_of(&inst).rows <= options.monolithic_row_limit {
                SolveStrategy::Monolithic
            } else if coupled {
                SolveStrategy::ColumnGeneration
            } else {
                SolveStrategy::Decomposed
            }
        }
        s => s,
    };
    let result = match strategy {
        SolveStrategy::Monolithic => literal::settle_monolithic(&inst, options)?,
        SolveStrategy::Decomposed if coupled => return Err(SettlementError::CoupledFloors),
        SolveStrategy::Decomposed => settle_decomposed(&inst, options)?,
        SolveStrategy::ColumnGeneration => {
            let mut solver = CoupledSolver::from_instance(inst, options.clone());
            let result = solver.settle(&floors)?;
            if options.verify {
                verify(series, contracts, keys, &result)?;
            }
            return Ok(result);
        }
        SolveStrategy::Auto => unreachable!("resolved above"),
    };
    if options.verify {
        verify(series, contracts, keys, &result)?;
    }
    Ok(result)
}

/// Independent per-period solves, ignoring floors.
fn settle_decomposed<F: Scalar>(
    inst: &Instance<'_, F>,
    options: &SettleOptions<F>,
) -> Result<SettlementResult<F>, SettlementError> {
    let mut result = inst.empty_result(SolveStrategy::Decomposed);
    let solve_one = |&t: &usize| -> Result<(block::BlockPoint<F>, block::BlockStats), SettlementError> {
        let started = Instant::now();
        let mut b = block::PeriodBlock::build(inst, t)?;
        let built = started.elapsed().as_secs_f64();
        let (point, mut stats) = b.solve(inst, &options.solver, None)?;
        stats.build_seconds = built;
        Ok((point, stats))
    };
    let outcomes: Vec<_> = if options.parallel {
        inst.active.par_iter().map(solve_one).collect()
    } else {
        inst.active.iter().map(solve_one).collect()
    };
    for (&t, outcome) in inst.active.iter().zip(outcomes) {
        let (point, stats) = outcome?;
        point.store(inst, t, &mut result);
        stats.accumulate(&mut result.statistics);
    }
    inst.finish(&mut result);
    Ok(result)
}
