//! Brute-force settlement over a key grid, for checking the solver on toy
//! instances.
//!
//! For a fixed key vector the best flows are explicit when trading locally
//! never costs more than trading with the retailer: every member takes
//! `v = min(a, Cⁿ)`, and producers fill `Σv` in order of their local margin
//! `ξˡ⁺ − ξˢ`, lowest index first on ties. Periods are independent without
//! floors, so each is scanned separately, and only members that consume in a
//! period span the search grid.

use keyshare_lp::Scalar;
use rayon::prelude::*;
use thiserror::Error;

use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;
use crate::table::PeriodTable;

pub const MAX_PERIODS: usize = 2;
pub const MAX_MEMBERS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance has {periods} periods and up to {members} consuming members per period; the oracle handles at most {MAX_PERIODS} and {MAX_MEMBERS}")]
    TooLarge { periods: usize, members: usize },
    #[error("grid step {0} must be positive and divide 1")]
    Step(f64),
    #[error("member {0} has local prices less favorable than retail; greedy flows would not be optimal")]
    PriceRegime(usize),
    #[error("self-sufficiency floors couple the periods; the oracle does not model them")]
    Floors,
    #[error("key matrix or contracts do not match the series")]
    Shape,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult<F> {
    /// Objective including the constant part, €.
    pub objective: F,
    pub keys: PeriodTable<F>,
    /// Bound on how far the grid optimum can exceed the true optimum, per unit step.
    pub lipschitz: F,
    pub evaluated: usize,
}

/// Minimum objective over keys on the grid `{0, step, …, 1}` (plus the ends
/// of each member's tolerance interval) with `Σk ≤ 1`. Only members with
/// net consumption in a period are searched; the others get their best key
/// in closed form.
pub fn grid_search_settle<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
    step: F,
) -> Result<OracleResult<F>, OracleError> {
    let (periods, members) = (series.num_periods(), series.num_members());
    let cn = series.net_consumption();
    let holders = (0..periods)
        .map(|t| cn.row(t).iter().filter(|&&c| c > F::zero()).count())
        .max()
        .unwrap_or(0);
    if periods > MAX_PERIODS || holders > MAX_MEMBERS {
        return Err(OracleError::TooLarge { periods, members: holders });
    }
    if contracts.len() != members || keys.periods() != periods || keys.members() != members {
        return Err(OracleError::Shape);
    }
    let steps = (F::one() / step).round();
    if !(step > F::zero()) || (steps * step - F::one()).abs() > F::lit(1e-9) {
        return Err(OracleError::Step(step.as_f64()));
    }
    if let Some(i) = (0..members).find(|&i| !contracts.get(i).prices.favors_local()) {
        return Err(OracleError::PriceRegime(i));
    }
    if contracts.iter().any(|c| c.ssr_floor > F::zero()) {
        return Err(OracleError::Floors);
    }
    let steps = steps.to_usize().ok_or(OracleError::Step(step.as_f64()))?;
    let deviation: F = contracts.total_deviation_price();
    let mut margin_order: Vec<usize> = (0..members).collect();
    margin_order.sort_by(|&a, &b| {
        let ma = contracts.get(a).prices.local_sell - contracts.get(a).prices.sell;
        let mb = contracts.get(b).prices.local_sell - contracts.get(b).prices.sell;
        mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });

    let mut objective = F::zero();
    let mut best_keys = keys.table().clone();
    let mut evaluated = 0;
    let mut lipschitz = F::zero();
    for t in 0..periods {
        let cn = series.net_consumption().row(t);
        let pn = series.net_production().row(t);
        for i in 0..members {
            let p = &contracts.get(i).prices;
            objective += p.buy * cn[i] - p.sell * pn[i];
        }
        let supply: F = pn.iter().copied().sum();
        if supply == F::zero() {
            continue;
        }
        let mut l = deviation + deviation;
        let mut worst_y = F::zero();
        for i in 0..members {
            let p = &contracts.get(i).prices;
            l += (p.local_buy - p.buy).abs();
            worst_y = worst_y.max((p.sell - p.local_sell).abs());
        }
        lipschitz += supply * (l + F::lit(members as f64) * worst_y);

        let range = |i: usize| {
            let k = keys.get(t, i);
            let x = contracts.get(i).tolerance[t];
            ((k - x).max(F::zero()), (k + x).min(F::one()))
        };
        let (active, passive): (Vec<usize>, Vec<usize>) = (0..members).partition(|&i| cn[i] > F::zero());
        let candidates: Vec<Vec<F>> = active
            .iter()
            .map(|&i| {
                let (lo, hi) = range(i);
                let mut c: Vec<F> = (0..=steps)
                    .map(|s| F::lit(s as f64) * step)
                    .filter(|&g| g >= lo && g <= hi)
                    .collect();
                c.push(lo);
                c.push(hi);
                c.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                c.dedup();
                c
            })
            .collect();
        let passive_range: Vec<(F, F)> = passive.iter().map(|&i| (range(i).0, keys.get(t, i))).collect();
        let slack = F::lit(1e-12);
        let initial: Vec<F> = (0..members).map(|i| keys.get(t, i) * supply).collect();
        // Keys of members without net consumption only matter through the key
        // budget and the downward deviation, so they stay at K unless the
        // budget forces a cut, and the cut is spread to keep its largest
        // share small. Returns that largest cut, or `None` if no cut fits.
        let passive_cut = |budget: F| -> Option<F> {
            let floor: F = passive_range.iter().map(|r| r.0).sum();
            if floor > budget + slack {
                return None;
            }
            let at = |d: F| -> F { passive_range.iter().map(|&(lo, k)| (k - d).max(lo)).sum() };
            if at(F::zero()) <= budget + slack {
                return Some(F::zero());
            }
            let (mut lo, mut hi) = (F::zero(), F::one());
            for _ in 0..200 {
                let mid = (lo + hi) / F::lit(2.0);
                if at(mid) <= budget {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        };
        let eval = |k: &[F]| -> Option<(F, F)> {
            let used: F = k.iter().copied().sum();
            let cut = passive_cut(F::one() - used)?;
            let mut cost = F::zero();
            let mut traded = F::zero();
            let mut up = F::zero();
            let mut down = F::zero();
            for (n, &i) in active.iter().enumerate() {
                let a = k[n] * supply;
                let v = a.min(cn[i]);
                let p = &contracts.get(i).prices;
                cost += (p.local_buy - p.buy) * v;
                traded += v;
                up = up.max(a - initial[i]);
                down = down.max(initial[i] - a);
            }
            for &(lo, kp) in &passive_range {
                down = down.max((kp - (kp - cut).max(lo)) * supply);
            }
            for &j in &margin_order {
                let y = traded.min(pn[j]);
                traded -= y;
                let p = &contracts.get(j).prices;
                cost += (p.sell - p.local_sell) * y;
            }
            Some((cost + deviation * (up + down), cut))
        };
        let sizes: Vec<usize> = candidates.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let decode = |mut n: usize| {
            let mut k = [F::zero(); MAX_MEMBERS];
            for (d, c) in candidates.iter().enumerate() {
                k[d] = c[n % sizes[d]];
                n /= sizes[d];
            }
            k
        };
        let dims = active.len();
        let (best, cut, n) = (0..total)
            .into_par_iter()
            .filter_map(|n| {
                let k = decode(n);
                eval(&k[..dims]).map(|(c, cut)| (c, cut, n))
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.2.cmp(&b.2)))
            .expect("the lower ends of the tolerance intervals are always admissible");
        evaluated += total;
        objective += best;
        let k = decode(n);
        for (d, &i) in active.iter().enumerate() {
            best_keys.set(t, i, k[d]);
        }
        for (&i, &(lo, kp)) in passive.iter().zip(&passive_range) {
            best_keys.set(t, i, (kp - cut).max(lo));
        }
    }
    Ok(OracleResult {
        objective,
        keys: best_keys,
        lipschitz,
        evaluated,
    })
}
