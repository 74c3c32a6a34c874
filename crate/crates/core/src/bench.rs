//! Timed settlements of synthetic communities.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::contract::{ContractError, Contracts, Prices};
use crate::feasibility::priority_floors;
use crate::keygen::{proportional_static_keys, KeyError};
use crate::settlement::{literal_size, settle, SettleOptions, SettlementError, SolveStrategy};
use crate::synthetic::{synthetic_community, CommunitySpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark needs at least one period and one member, got {periods}x{members}")]
    Size { periods: usize, members: usize },
    #[error(transparent)]
    Keys(#[from] KeyError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Settlement(#[from] SettlementError),
}

/// How self-sufficiency floors are set for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloorPlan {
    /// No floors; periods decouple.
    None,
    /// [`priority_floors`] for the given share of consuming members.
    Priority(f64),
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub periods: usize,
    pub members: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub floors: FloorPlan,
    pub options: SettleOptions<f64>,
}

impl BenchConfig {
    pub fn new(periods: usize, members: usize) -> Self {
        Self {
            periods,
            members,
            seed: 1,
            tolerance: 1.0,
            floors: FloorPlan::None,
            options: SettleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub periods: usize,
    pub members: usize,
    /// Size of the full single-program formulation.
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub strategy: SolveStrategy,
    pub floored_members: usize,
    /// Members that end exactly at their floor.
    pub binding_floors: usize,
    pub objective: f64,
    /// Time spent deriving floors, not counted in build or solve.
    pub setup_seconds: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchRow, BenchError> {
    let (periods, members) = (config.periods, config.members);
    if periods == 0 || members == 0 {
        return Err(BenchError::Size { periods, members });
    }
    let series = synthetic_community::<f64>(&CommunitySpec::new(periods, members, config.seed));
    let keys = proportional_static_keys(&series)?;
    let contracts = Contracts::uniform(&series, Prices::reference(), config.tolerance, 0.0)?;

    let started = Instant::now();
    let floors = match config.floors {
        FloorPlan::None => vec![0.0; members],
        FloorPlan::Priority(share) => priority_floors(&series, &contracts, &keys, share, 1e-6, &config.options)?,
    };
    let setup_seconds = started.elapsed().as_secs_f64();
    let contracts = contracts.with_floors(&floors);
    let size = literal_size(&series, &contracts, &keys)?;

    let started = Instant::now();
    let result = settle(&series, &contracts, &keys, &config.options)?;
    let total = started.elapsed().as_secs_f64();
    let solve_seconds = result.statistics.solve_seconds.min(total);
    let binding_floors = floors
        .iter()
        .zip(&result.ssr)
        .filter(|(&f, &s)| f > 0.0 && s <= f + 1e-6)
        .count();
    Ok(BenchRow {
        periods,
        members,
        rows: size.rows,
        columns: size.columns,
        nonzeros: size.nonzeros,
        strategy: result.strategy,
        floored_members: floors.iter().filter(|&&f| f > 0.0).count(),
        binding_floors,
        objective: result.objective,
        setup_seconds,
        build_seconds: total - solve_seconds,
        solve_seconds,
    })
}
