//! Independent check of a settlement against every constraint it must satisfy.

use keyshare_lp::Scalar;

use super::{compute_ssr, Instance, SettlementError, SettlementResult};
use crate::contract::Contracts;
use crate::keygen::KeyMatrix;
use crate::metering::MeterSeries;

/// Returns the first violated invariant of `result`, if any. Tolerances are
/// the solver's default, scaled by the period's supply for energy quantities.
pub fn verify<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    keys: &KeyMatrix<F>,
    result: &SettlementResult<F>,
) -> Result<(), SettlementError> {
    let inst = Instance::new(series, contracts, keys)?;
    let tol = F::default_tolerance();
    let fail = |msg: String| Err(SettlementError::Verification(msg));
    let names = series.members();
    let cn = series.net_consumption();
    let pn = series.net_production();

    for t in 0..inst.periods() {
        let supply = inst.supply[t];
        let etol = tol * supply.max(F::one());
        let mut key_sum = F::zero();
        let mut v_sum = F::zero();
        let mut y_sum = F::zero();
        for i in 0..inst.members() {
            let k = result.keys.get(t, i);
            let a = result.allocated.get(t, i);
            let v = result.verified.get(t, i);
            let y = result.local_sales.get(t, i);
            let x = contracts.get(i).tolerance[t];
            if k < -tol || k > F::one() + tol {
                return fail(format!("key {k} of `{}` at period {t} outside [0, 1]", names[i]));
            }
            if (k - keys.get(t, i)).abs() > x + tol {
                return fail(format!("key of `{}` at period {t} deviates beyond its tolerance", names[i]));
            }
            if (a - k * supply).abs() > etol {
                return fail(format!("allocation of `{}` at period {t} is not key times supply", names[i]));
            }
            if v < -etol || y < -etol {
                return fail(format!("negative flow for `{}` at period {t}", names[i]));
            }
            if v > a.min(cn.get(t, i)) + etol {
                return fail(format!(
                    "verified allocation of `{}` at period {t} exceeds allocation or net consumption",
                    names[i]
                ));
            }
            if y > pn.get(t, i) + etol {
                return fail(format!("local sale of `{}` at period {t} exceeds net production", names[i]));
            }
            let target = inst.initial.get(t, i);
            if a - target > result.deviation_up[t] + etol || target - a > result.deviation_down[t] + etol {
                return fail(format!("deviation bound at period {t} is below the deviation of `{}`", names[i]));
            }
            key_sum += k;
            v_sum += v;
            y_sum += y;
        }
        if key_sum > F::one() + tol {
            return fail(format!("keys at period {t} sum to {key_sum}"));
        }
        if (v_sum - y_sum).abs() > etol {
            return fail(format!("verified allocations and local sales differ at period {t}"));
        }
        if supply == F::zero() && (0..inst.members()).any(|i| result.keys.get(t, i) != keys.get(t, i)) {
            return fail(format!("keys changed at period {t}, which has no production"));
        }
    }

    let ssr = compute_ssr(series, &result.verified);
    for i in 0..inst.members() {
        if result.ssr.get(i).is_none_or(|s| (*s - ssr[i]).abs() > tol) {
            return fail(format!("reported self-sufficiency of `{}` is stale", names[i]));
        }
        let floor = contracts.get(i).ssr_floor;
        if inst.total_consumption[i] > F::zero() && ssr[i] < floor - tol {
            return fail(format!("self-sufficiency {} of `{}` is below its floor {floor}", ssr[i], names[i]));
        }
    }

    let mut objective = inst.offset;
    for t in 0..inst.periods() {
        objective += inst.period_cost(
            result.verified.row(t),
            result.local_sales.row(t),
            result.deviation_up[t],
            result.deviation_down[t],
        );
    }
    if (objective - result.objective).abs() > F::lit(1e-6) * objective.abs().max(F::one()) {
        return fail(format!(
            "objective {} does not match the cost of the reported flows {objective}",
            result.objective
        ));
    }
    Ok(())
}
