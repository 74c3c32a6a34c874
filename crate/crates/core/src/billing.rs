//! Per-member, per-period electricity bills.

use keyshare_lp::Scalar;
use serde::Serialize;
use thiserror::Error;

use crate::contract::Contracts;
use crate::metering::MeterSeries;
use crate::settlement::SettlementResult;
use crate::table::PeriodTable;

#[derive(Debug, Error, PartialEq)]
pub enum BillingError {
    #[error("{what} of member {member} at period {period} is outside its bounds by {excess}")]
    Corrupt {
        what: &'static str,
        member: usize,
        period: usize,
        excess: f64,
    },
    #[error("bill tables have different shapes")]
    Shape,
}

/// One member's bill for one period, €.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BillLine<F> {
    pub member: usize,
    pub period: usize,
    /// `ξᵇ·(Cⁿ − v)`
    pub grid_purchase: F,
    /// `ξˡ⁻·v`
    pub local_purchase: F,
    /// `ξˡ⁺·y`
    pub local_sale: F,
    /// `ξˢ·(Pⁿ − y)`
    pub grid_sale: F,
}

impl<F: Scalar> BillLine<F> {
    pub fn net(&self) -> F {
        self.grid_purchase + self.local_purchase - self.local_sale - self.grid_sale
    }
}

/// Bills for every period and member, period-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Bills<F> {
    periods: usize,
    members: usize,
    lines: Vec<BillLine<F>>,
}

impl<F: Scalar> Bills<F> {
    pub fn get(&self, t: usize, i: usize) -> &BillLine<F> {
        &self.lines[t * self.members + i]
    }

    pub fn lines(&self) -> &[BillLine<F>] {
        &self.lines
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn member_total(&self, i: usize) -> F {
        (0..self.periods).map(|t| self.get(t, i).net()).sum()
    }

    pub fn total(&self) -> F {
        self.lines.iter().map(BillLine::net).sum()
    }
}

fn compute<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    flows: impl Fn(usize, usize) -> (F, F),
) -> Bills<F> {
    let (periods, members) = (series.num_periods(), series.num_members());
    let mut lines = Vec::with_capacity(periods * members);
    for t in 0..periods {
        for i in 0..members {
            let p = &contracts.get(i).prices;
            let (v, y) = flows(t, i);
            let cn = series.net_consumption().get(t, i);
            let pn = series.net_production().get(t, i);
            lines.push(BillLine {
                member: i,
                period: t,
                grid_purchase: p.buy * (cn - v),
                local_purchase: p.local_buy * v,
                local_sale: p.local_sell * y,
                grid_sale: p.sell * (pn - y),
            });
        }
    }
    Bills {
        periods,
        members,
        lines,
    }
}

/// Bills under a settlement. Rejects results whose flows exceed net
/// consumption or production by more than the solver tolerance.
pub fn bill<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    result: &SettlementResult<F>,
) -> Result<Bills<F>, BillingError> {
    bill_flows(series, contracts, &result.verified, &result.local_sales)
}

/// Bills from verified allocations `v` and local sales `y`, with the same
/// checks as [`bill`].
pub fn bill_flows<F: Scalar>(
    series: &MeterSeries<F>,
    contracts: &Contracts<F>,
    verified: &PeriodTable<F>,
    local_sales: &PeriodTable<F>,
) -> Result<Bills<F>, BillingError> {
    let (periods, members) = (series.num_periods(), series.num_members());
    if contracts.len() != members
        || [verified, local_sales]
            .iter()
            .any(|m| m.periods() != periods || m.members() != members)
    {
        return Err(BillingError::Shape);
    }
    let tol = F::default_tolerance();
    for t in 0..periods {
        for i in 0..members {
            let checks = [
                ("verified allocation", verified.get(t, i), series.net_consumption().get(t, i)),
                ("local sale", local_sales.get(t, i), series.net_production().get(t, i)),
            ];
            for (what, x, bound) in checks {
                if x > bound + tol || x < -tol {
                    return Err(BillingError::Corrupt {
                        what,
                        member: i,
                        period: t,
                        excess: if x < F::zero() { (-x).as_f64() } else { (x - bound).as_f64() },
                    });
                }
            }
        }
    }
    Ok(compute(series, contracts, |t, i| (verified.get(t, i), local_sales.get(t, i))))
}

/// Bills without community trading.
pub fn baseline_bill<F: Scalar>(series: &MeterSeries<F>, contracts: &Contracts<F>) -> Bills<F> {
    compute(series, contracts, |_, _| (F::zero(), F::zero()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberSavings {
    pub member: String,
    pub community_total: f64,
    pub baseline_total: f64,
    /// `100·(community − baseline)/|baseline|`; absent when the baseline is zero.
    pub delta_percent: Option<f64>,
}

pub fn savings_report<F: Scalar>(
    series: &MeterSeries<F>,
    bills: &Bills<F>,
    baseline: &Bills<F>,
) -> Result<Vec<MemberSavings>, BillingError> {
    if bills.periods != baseline.periods || bills.members != baseline.members || bills.members != series.num_members()
    {
        return Err(BillingError::Shape);
    }
    Ok((0..bills.members)
        .map(|i| {
            let rec = bills.member_total(i).as_f64();
            let base = baseline.member_total(i).as_f64();
            MemberSavings {
                member: series.members()[i].clone(),
                community_total: rec,
                baseline_total: base,
                delta_percent: delta_percent(rec, base),
            }
        })
        .collect())
}

pub fn delta_percent(community: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        (community == 0.0).then_some(0.0)
    } else {
        Some(100.0 * (community - baseline) / baseline.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentage_delta() {
        assert_eq!(delta_percent(70.0, 100.0), Some(-30.0));
        assert_eq!(delta_percent(5.0, 5.0), Some(0.0));
        assert_eq!(delta_percent(0.0, 0.0), Some(0.0));
        assert_eq!(delta_percent(1.0, 0.0), None);
        let d = delta_percent(-0.04748, -0.03).unwrap();
        assert!((d + 58.2666).abs() < 1e-3);
    }
}
