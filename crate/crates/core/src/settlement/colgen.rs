//! Column generation for settlements whose floors couple the periods.
//!
//! The floors are the only rows spanning several periods. The master program
//! keeps them, with each period represented by a convex combination of
//! proposals generated by its own single-period program:
//!
//! ```text
//! min  Σ c_j λ_j
//! s.t. Σ_j v_ij λ_j + s_i ≥ need_i     (one row per member with a binding floor)
//!      Σ_{j ∈ t} λ_j = 1               (one row per period that can move a floor)
//!      λ ≥ 0, s ≥ 0
//! ```
//!
//! Phase one minimizes `Σ s` and proves infeasibility through the Lagrangian
//! bound; phase two fixes `s = 0` and minimizes cost. Each round prices every
//! period against the master's duals and stops when the Lagrangian bound meets
//! the master objective.

use std::time::Instant;

use keyshare_lp::{solve, solve_from, Basis, Con, LpModel, Relation, Scalar, Status, Var, VarStatus};
use rayon::prelude::*;

use super::block::{BlockPoint, BlockStats, PeriodBlock};
use super::{
    InfeasibilityReport, Instance, SettleOptions, SettlementError, SettlementResult, Shortfall, SolveStrategy,
};
use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;

/// Rounds a column may stay nonbasic before it is dropped from the master.
const IDLE_LIMIT: usize = 6;

struct Column<F> {
    slot: usize,
    point: BlockPoint<F>,
    cost: F,
    idle: usize,
}

enum Outcome<F> {
    Feasible(Option<Vec<F>>),
    Infeasible(InfeasibilityReport),
}

/// Settles with coupling floors; keeps its per-period programs and proposals
/// between calls, so repeated solves with different floors reuse earlier work.
pub struct CoupledSolver<'a, F> {
    inst: Instance<'a, F>,
    options: SettleOptions<F>,
    blocks: Vec<Option<PeriodBlock<F>>>,
    base: Vec<Option<BlockPoint<F>>>,
    pool: Vec<Column<F>>,
    stats: BlockStats,
    subproblems: usize,
    rounds: usize,
    master_rows: usize,
    master_columns: usize,
    master_nonzeros: usize,
    last_pool: Vec<(usize, F)>,
}

impl<'a, F: Scalar> CoupledSolver<'a, F> {
    pub fn new(
        series: &'a MeterSeries<F>,
        contracts: &'a Contracts<F>,
        keys: &'a KeyMatrix<F>,
        options: SettleOptions<F>,
    ) -> Result<Self, SettlementError> {
        Ok(Self::from_instance(Instance::new(series, contracts, keys)?, options))
    }

    pub(crate) fn from_instance(inst: Instance<'a, F>, options: SettleOptions<F>) -> Self {
        let slots = inst.active.len();
        Self {
            inst,
            options,
            blocks: (0..slots).map(|_| None).collect(),
            base: vec![None; slots],
            pool: Vec::new(),
            stats: BlockStats::default(),
            subproblems: 0,
            rounds: 0,
            master_rows: 0,
            master_columns: 0,
            master_nonzeros: 0,
            last_pool: Vec::new(),
        }
    }

    /// Whether floors `floors` (one per member) can all be met.
    pub fn feasible(&mut self, floors: &[F]) -> Result<bool, SettlementError> {
        Ok(matches!(self.run(floors, true)?, Outcome::Feasible(_)))
    }

    /// Optimal settlement under floors `floors`.
    pub fn settle(&mut self, floors: &[F]) -> Result<SettlementResult<F>, SettlementError> {
        let started = Instant::now();
        let before = self.stats.clone();
        let (sub_before, rounds_before) = (self.subproblems, self.rounds);
        let weights = match self.run(floors, false)? {
            Outcome::Feasible(w) => w,
            Outcome::Infeasible(report) => return Err(SettlementError::Infeasible(report)),
        };
        let inst = &self.inst;
        let mut result = inst.empty_result(SolveStrategy::ColumnGeneration);
        let members = inst.members();
        let mut points: Vec<Option<BlockPoint<F>>> = vec![None; inst.active.len()];
        if let Some(w) = weights {
            for (&(col, _), &lambda) in self.last_pool.iter().zip(&w) {
                let c = &self.pool[col];
                if lambda > F::zero() {
                    points[c.slot]
                        .get_or_insert_with(|| BlockPoint::zeros(members))
                        .add_scaled(lambda, &c.point);
                }
            }
        }
        for (slot, &t) in inst.active.iter().enumerate() {
            let p = points[slot].as_ref().or(self.base[slot].as_ref());
            p.expect("every active period has a base point").store(inst, t, &mut result);
        }
        inst.finish(&mut result);
        let s = &mut result.statistics;
        s.rows = self.stats.rows - before.rows + self.master_rows;
        s.columns = self.stats.columns - before.columns + self.master_columns;
        s.nonzeros = self.stats.nonzeros - before.nonzeros + self.master_nonzeros;
        s.presolved_rows = s.rows;
        s.presolved_columns = s.columns;
        s.iterations = self.stats.iterations - before.iterations;
        s.subproblems = self.subproblems - sub_before;
        s.rounds = self.rounds - rounds_before;
        s.build_seconds = self.stats.build_seconds - before.build_seconds;
        s.solve_seconds = (started.elapsed().as_secs_f64() - s.build_seconds).max(0.0);
        Ok(result)
    }

    /// Solves every period once with its own costs.
    fn ensure_base(&mut self) -> Result<(), SettlementError> {
        if self.base.iter().all(Option::is_some) {
            return Ok(());
        }
        let inst = &self.inst;
        let opts = &self.options.solver;
        let work = |(slot, (block, base)): (usize, (&mut Option<PeriodBlock<F>>, &mut Option<BlockPoint<F>>))| {
            if base.is_some() {
                return Ok(BlockStats::default());
            }
            let started = Instant::now();
            let b = match block {
                Some(b) => b,
                None => block.insert(PeriodBlock::build(inst, inst.active[slot])?),
            };
            let built = started.elapsed().as_secs_f64();
            let (point, mut stats) = b.solve(inst, opts, None)?;
            stats.build_seconds = built;
            *base = Some(point);
            Ok::<_, SettlementError>(stats)
        };
        let it = self.blocks.iter_mut().zip(self.base.iter_mut()).enumerate();
        let results: Vec<_> = if self.options.parallel {
            it.collect::<Vec<_>>().into_par_iter().map(work).collect()
        } else {
            it.map(work).collect()
        };
        for r in results {
            let st = r?;
            if st.rows > 0 {
                self.add_stats(&st);
            }
        }
        Ok(())
    }

    fn add_stats(&mut self, st: &BlockStats) {
        self.stats.rows += st.rows;
        self.stats.columns += st.columns;
        self.stats.nonzeros += st.nonzeros;
        self.stats.iterations += st.iterations;
        self.stats.build_seconds += st.build_seconds;
        self.stats.solve_seconds += st.solve_seconds;
        self.subproblems += 1;
    }

    fn run(&mut self, floors: &[F], phase_one_only: bool) -> Result<Outcome<F>, SettlementError> {
        self.ensure_base()?;
        self.last_pool.clear();
        let need = self.inst.floor_requirements(floors);
        let linked: Vec<usize> = (0..need.len()).filter(|&i| need[i].is_some()).collect();
        if linked.is_empty() {
            return Ok(Outcome::Feasible(None));
        }
        let inst = &self.inst;
        let cn = inst.series.net_consumption();
        let relevant: Vec<usize> = (0..inst.active.len())
            .filter(|&slot| linked.iter().any(|&i| cn.get(inst.active[slot], i) > F::zero()))
            .collect();
        let mut slot_row = vec![None; inst.active.len()];
        for (r, &slot) in relevant.iter().enumerate() {
            slot_row[slot] = Some(r);
        }
        for &slot in &relevant {
            if !self.pool.iter().any(|c| c.slot == slot) {
                let point = self.base[slot].clone().expect("base computed");
                let cost = self.inst.period_cost(&point.v, &point.y, point.up, point.down);
                self.pool.push(Column {
                    slot,
                    point,
                    cost,
                    idle: 0,
                });
            }
        }

        let ftol = self.options.solver.feasibility_tolerance;
        let master_opts = self.options.solver.clone().without_presolve();
        let mut phase_one = true;
        let mut basis: Option<Basis> = None;
        let mut in_master: Vec<usize> = Vec::new();
        let members = self.inst.members();

        loop {
            if self.rounds >= self.options.max_rounds {
                return Err(SettlementError::NoConvergence(self.options.max_rounds));
            }
            self.rounds += 1;

            // Master over the current pool.
            in_master.clear();
            in_master.extend((0..self.pool.len()).filter(|&c| slot_row[self.pool[c].slot].is_some()));
            let (master, slack, link_rows, conv_rows, lambda) =
                self.build_master(&linked, &need, &relevant, &slot_row, &in_master, phase_one)?;
            let sol = match &basis {
                Some(b) => solve_from(&master, &master_opts, b)?,
                None => solve(&master, &master_opts)?,
            };
            self.stats.iterations += sol.statistics.iterations;
            self.master_rows = master.num_rows();
            self.master_columns = master.num_vars();
            self.master_nonzeros = master.num_nonzeros();
            if sol.status != Status::Optimal {
                return Err(SettlementError::Verification(format!(
                    "coupling master program ended {:?}",
                    sol.status
                )));
            }
            let duals = sol.duals.clone().expect("duals of an unreduced optimal solve");
            let master_basis = sol.basis.clone().expect("basis of an unreduced solve");
            let objective = sol.objective;
            let shortfall: Vec<F> = slack.iter().map(|&s| sol.value(s)).collect();
            let max_short = shortfall.iter().copied().fold(F::zero(), F::max);

            if phase_one && max_short <= ftol {
                if phase_one_only {
                    return Ok(Outcome::Feasible(None));
                }
                phase_one = false;
                basis = Some(master_basis);
                continue;
            }

            // Price every relevant period.
            let mut price = vec![F::zero(); members];
            for (r, &i) in linked.iter().enumerate() {
                price[i] = duals[link_rows[r].index()];
            }
            let conv_dual: Vec<F> = conv_rows.iter().map(|c| duals[c.index()]).collect();
            let inst = &self.inst;
            let opts = &self.options.solver;
            let work = |(slot, block): (usize, &mut Option<PeriodBlock<F>>)| {
                let b = block.as_mut().expect("relevant blocks are built");
                let (point, stats) = b.solve(inst, opts, Some((&price, phase_one)))?;
                let value = b.current_objective(&point);
                Ok::<_, SettlementError>((slot, point, value, stats))
            };
            let chosen = self
                .blocks
                .iter_mut()
                .enumerate()
                .filter(|(slot, _)| slot_row[*slot].is_some());
            let priced: Vec<_> = if self.options.parallel {
                chosen.collect::<Vec<_>>().into_par_iter().map(work).collect()
            } else {
                chosen.map(work).collect()
            };

            let mut bound = objective;
            let mut added = 0;
            for r in priced {
                let (slot, point, value, stats) = r?;
                self.add_stats(&stats);
                let mu = conv_dual[slot_row[slot].expect("relevant")];
                let rc = value - mu;
                if rc < F::zero() {
                    bound += rc;
                }
                if rc < -F::lit(1e-9) * mu.abs().max(F::one()) {
                    let cost = self.inst.period_cost(&point.v, &point.y, point.up, point.down);
                    self.pool.push(Column {
                        slot,
                        point,
                        cost,
                        idle: 0,
                    });
                    added += 1;
                }
            }

            if phase_one {
                if bound > ftol || added == 0 {
                    let names = self.inst.series.members();
                    let members = linked
                        .iter()
                        .zip(&shortfall)
                        .filter(|(_, &s)| s > ftol)
                        .map(|(&i, &s)| Shortfall {
                            member: names[i].clone(),
                            floor: floors[i].as_f64(),
                            missing: (s / self.inst.total_consumption[i]).as_f64(),
                        })
                        .collect();
                    return Ok(Outcome::Infeasible(InfeasibilityReport { members }));
                }
            } else {
                let gap = objective - bound;
                if added == 0 || gap <= self.options.gap_tolerance * objective.abs().max(F::one()) {
                    self.last_pool = in_master
                        .iter()
                        .zip(&lambda)
                        .map(|(&c, &v)| (c, sol.value(v)))
                        .collect();
                    let weights = self.last_pool.iter().map(|&(_, w)| w.max(F::zero())).collect();
                    return Ok(Outcome::Feasible(Some(weights)));
                }
            }

            // Age columns and carry the basis over to the next master.
            let mut keep = vec![true; self.pool.len()];
            for (pos, &c) in in_master.iter().enumerate() {
                let col = &mut self.pool[c];
                if master_basis.columns[slack.len() + pos] == VarStatus::Basic {
                    col.idle = 0;
                } else {
                    col.idle += 1;
                    keep[c] = col.idle <= IDLE_LIMIT;
                }
            }
            let mut columns: Vec<VarStatus> = master_basis.columns[..slack.len()].to_vec();
            for (pos, &c) in in_master.iter().enumerate() {
                if keep[c] {
                    columns.push(master_basis.columns[slack.len() + pos]);
                }
            }
            let mut idx = 0;
            self.pool.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
            basis = Some(Basis {
                columns,
                rows: master_basis.rows,
            });
        }
    }

    #[allow(clippy::type_complexity)]
    fn build_master(
        &self,
        linked: &[usize],
        need: &[Option<F>],
        relevant: &[usize],
        slot_row: &[Option<usize>],
        in_master: &[usize],
        phase_one: bool,
    ) -> Result<(LpModel<F>, Vec<Var>, Vec<Con>, Vec<Con>, Vec<Var>), SettlementError> {
        let nnz: usize = in_master.len() * (linked.len() + 1);
        let mut m = LpModel::with_capacity(linked.len() + in_master.len(), linked.len() + relevant.len(), nnz);
        let slack_hi = if phase_one { F::infinity() } else { F::zero() };
        let slack_cost = if phase_one { F::one() } else { F::zero() };
        let slack: Vec<Var> = linked
            .iter()
            .map(|_| m.add_variable("s", F::zero(), slack_hi, slack_cost))
            .collect::<Result<_, _>>()?;
        let lambda: Vec<Var> = in_master
            .iter()
            .map(|&c| {
                let cost = if phase_one { F::zero() } else { self.pool[c].cost };
                m.add_variable("lambda", F::zero(), F::infinity(), cost)
            })
            .collect::<Result<_, _>>()?;
        let mut link_entries: Vec<Vec<(Var, F)>> = slack.iter().map(|&s| vec![(s, F::one())]).collect();
        let mut conv_entries: Vec<Vec<(Var, F)>> = vec![Vec::new(); relevant.len()];
        for (pos, &c) in in_master.iter().enumerate() {
            let col = &self.pool[c];
            for (r, &i) in linked.iter().enumerate() {
                let v = col.point.v[i];
                if v != F::zero() {
                    link_entries[r].push((lambda[pos], v));
                }
            }
            conv_entries[slot_row[col.slot].expect("relevant")].push((lambda[pos], F::one()));
        }
        let link_rows = linked
            .iter()
            .zip(&link_entries)
            .map(|(&i, e)| m.add_constraint(e, Relation::Ge, need[i].expect("linked")))
            .collect::<Result<Vec<_>, _>>()?;
        let conv_rows = conv_entries
            .iter()
            .map(|e| m.add_constraint(e, Relation::Eq, F::one()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((m, slack, link_rows, conv_rows, lambda))
    }
}
