//! Largest self-sufficiency floor every member can be granted at once.

use keyshare_lp::Scalar;
use serde::Serialize;

use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;
use crate::settlement::{settle, CoupledSolver, SettleOptions, SettlementError, SolveStrategy};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorSearch {
    /// Largest floor found feasible.
    pub floor: f64,
    /// Smallest floor found infeasible, or `None` when a floor of 1 is feasible.
    pub infeasible_at: Option<f64>,
    pub probes: usize,
}

/// Bisects on a uniform floor in `[0, 1]` until the feasible and infeasible
/// probes are within `tolerance`. Floors already in `contracts` are ignored.
///
/// Probes share one [`CoupledSolver`], so proposals generated for one floor
/// seed the next probe.
pub fn max_uniform_ssr<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
    tolerance: F,
    options: &SettleOptions<F>,
) -> Result<FloorSearch, SettlementError> {
    let members = series.num_members();
    let mut solver = CoupledSolver::new(series, contracts, keys, options.clone())?;
    let mut probes = 0;
    let mut probe = |s: F| {
        probes += 1;
        solver.feasible(&vec![s; members])
    };
    if probe(F::one())? {
        return Ok(FloorSearch {
            floor: 1.0,
            infeasible_at: None,
            probes,
        });
    }
    let (mut lo, mut hi) = (F::zero(), F::one());
    while hi - lo > tolerance {
        let mid = (lo + hi) / F::lit(2.0);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FloorSearch {
        floor: lo.as_f64(),
        infeasible_at: Some(hi.as_f64()),
        probes,
    })
}

/// Per-member floors that are attainable but bind under the original prices.
///
/// The `share` of consuming members with the lowest self-sufficiency in the
/// floor-free optimum are re-settled with a local purchase price of zero.
/// Their self-sufficiency in that run, less `margin`, becomes their floor;
/// everyone else gets zero. Prices do not enter the constraints, so the
/// favored run is a witness that the floors can all be met at once.
pub fn priority_floors<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
    share: f64,
    margin: F,
    options: &SettleOptions<F>,
) -> Result<Vec<F>, SettlementError> {
    let free = contracts.with_uniform_floor(F::zero());
    let decomposed = options.clone().with_strategy(SolveStrategy::Decomposed);
    let base = settle(series, &free, keys, &decomposed)?;
    let consumption = series.consumption();
    let mut consumers: Vec<usize> = (0..series.num_members()).filter(|&i| consumption.column_sum(i) > F::zero()).collect();
    consumers.sort_by(|&a, &b| base.ssr[a].partial_cmp(&base.ssr[b]).expect("finite").then(a.cmp(&b)));
    let favored = &consumers[..((consumers.len() as f64 * share).ceil() as usize).min(consumers.len())];

    let members = free
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut c = c.clone();
            if favored.contains(&i) {
                c.prices.local_buy = F::zero();
            }
            c
        })
        .collect();
    let tilted = Contracts::new(members, series, false).expect("lowering a price keeps contracts valid");
    let witness = settle(series, &tilted, keys, &decomposed)?;
    let mut floors = vec![F::zero(); series.num_members()];
    for &i in favored {
        floors[i] = (witness.ssr[i] - margin).max(F::zero());
    }
    Ok(floors)
}
