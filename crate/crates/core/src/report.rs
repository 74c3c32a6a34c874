//! CSV and JSON artifacts.
//!
//! Quantities are written with six fractional digits and money with four,
//! both rounded half to even from the exact binary value, so identical
//! inputs give byte-identical files.

use std::io::Write;

use keyshare_lp::Scalar;
use serde::Serialize;

use crate::billing::{Bills, MemberSavings};
use crate::metering::{format_timestamp, MeterError, MeterSeries};
use crate::settlement::{ModelSize, SettlementResult, SettlementStatistics, SolveStrategy};
use crate::table::PeriodTable;

pub const QUANTITY_DIGITS: usize = 6;
pub const MONEY_DIGITS: usize = 4;

/// Fixed-point text with `digits` fractional digits; negative zero prints
/// without its sign.
pub fn fmt_fixed(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

pub fn fmt_quantity(x: f64) -> String {
    fmt_fixed(x, QUANTITY_DIGITS)
}

pub fn fmt_money(x: f64) -> String {
    fmt_fixed(x, MONEY_DIGITS)
}

/// `x` rounded the way [`fmt_fixed`] prints it.
pub fn round_to(x: f64, digits: usize) -> f64 {
    fmt_fixed(x, digits).parse().expect("formatted float parses")
}

/// Writes a `timestamp,<member>,...` matrix.
pub fn write_matrix<F: Scalar, W: Write>(
    table: &PeriodTable<F>,
    series: &MeterSeries<F>,
    out: W,
) -> Result<(), MeterError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.members().iter().cloned());
    w.write_record(&header)?;
    for t in 0..table.periods() {
        let mut rec = Vec::with_capacity(table.members() + 1);
        rec.push(format_timestamp(series.grid().timestamp(t)));
        rec.extend(table.row(t).iter().map(|x| fmt_quantity(x.as_f64())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `timestamp,member,grid_purchase,local_purchase,local_sale,grid_sale,net`.
pub fn write_bills<F: Scalar, W: Write>(bills: &Bills<F>, series: &MeterSeries<F>, out: W) -> Result<(), MeterError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "timestamp",
        "member",
        "grid_purchase",
        "local_purchase",
        "local_sale",
        "grid_sale",
        "net",
    ])?;
    for line in bills.lines() {
        w.write_record([
            format_timestamp(series.grid().timestamp(line.period)),
            series.members()[line.member].clone(),
            fmt_money(line.grid_purchase.as_f64()),
            fmt_money(line.local_purchase.as_f64()),
            fmt_money(line.local_sale.as_f64()),
            fmt_money(line.grid_sale.as_f64()),
            fmt_money(line.net().as_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberSummary {
    pub member: String,
    pub ssr: f64,
    pub ssr_floor: f64,
    pub community_bill: f64,
    pub baseline_bill: f64,
    pub delta_percent: Option<f64>,
}

/// Counts that do not depend on timing, for reproducible summaries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStatistics {
    pub active_periods: usize,
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub iterations: usize,
    pub subproblems: usize,
    pub rounds: usize,
    /// Size of the full single-program formulation.
    pub full_model: ModelSize,
}

impl SummaryStatistics {
    pub fn new(s: &SettlementStatistics, full_model: ModelSize) -> Self {
        Self {
            active_periods: s.active_periods,
            rows: s.rows,
            columns: s.columns,
            nonzeros: s.nonzeros,
            iterations: s.iterations,
            subproblems: s.subproblems,
            rounds: s.rounds,
            full_model,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SettlementSummary {
    pub strategy: SolveStrategy,
    pub periods: usize,
    pub members: usize,
    /// Total cost including the constant part, €.
    pub objective: f64,
    pub objective_offset: f64,
    pub deviation_penalty: f64,
    pub community_total: f64,
    pub baseline_total: f64,
    pub per_member: Vec<MemberSummary>,
    pub statistics: SummaryStatistics,
}

impl SettlementSummary {
    pub fn new<F: Scalar>(
        series: &MeterSeries<F>,
        floors: &[F],
        result: &SettlementResult<F>,
        deviation_price: F,
        savings: &[MemberSavings],
        full_model: ModelSize,
    ) -> Self {
        let money = |x: f64| round_to(x, MONEY_DIGITS);
        let qty = |x: f64| round_to(x, QUANTITY_DIGITS);
        let penalty: F = result
            .deviation_up
            .iter()
            .zip(&result.deviation_down)
            .map(|(&u, &d)| deviation_price * (u + d))
            .sum();
        let per_member = savings
            .iter()
            .enumerate()
            .map(|(i, s)| MemberSummary {
                member: s.member.clone(),
                ssr: qty(result.ssr[i].as_f64()),
                ssr_floor: qty(floors[i].as_f64()),
                community_bill: money(s.community_total),
                baseline_bill: money(s.baseline_total),
                delta_percent: s.delta_percent.map(|d| round_to(d, 2)),
            })
            .collect();
        Self {
            strategy: result.strategy,
            periods: series.num_periods(),
            members: series.num_members(),
            objective: money(result.objective.as_f64()),
            objective_offset: money(result.objective_offset.as_f64()),
            deviation_penalty: money(penalty.as_f64()),
            community_total: money(savings.iter().map(|s| s.community_total).sum()),
            baseline_total: money(savings.iter().map(|s| s.baseline_total).sum()),
            per_member,
            statistics: SummaryStatistics::new(&result.statistics, full_model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_round_to_even() {
        assert_eq!(fmt_fixed(0.125, 2), "0.12");
        assert_eq!(fmt_fixed(0.375, 2), "0.38");
        assert_eq!(fmt_fixed(2.5, 0), "2");
        assert_eq!(fmt_money(0.00015), "0.0001");
        assert_eq!(fmt_money(-0.04748), "-0.0475");
    }

    #[test]
    fn negative_zero_loses_its_sign() {
        assert_eq!(fmt_quantity(-0.0), "0.000000");
        assert_eq!(fmt_quantity(-1e-9), "0.000000");
        assert_eq!(fmt_quantity(-1e-3), "-0.001000");
    }
}
