//! Initial repartition keys.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::FixedOffset;
use keyshare_lp::Scalar;
use thiserror::Error;

use crate::metering::{MeterError, MeterSeries, RawTable};
use crate::table::PeriodTable;

/// Slack allowed on the per-period key sum.
pub const KEY_SUM_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("total net consumption is zero; proportional keys are undefined")]
    Degenerate,
    #[error("key for member `{member}` at period {period} is {value}, outside [0, 1]")]
    OutOfRange {
        member: String,
        period: usize,
        value: f64,
    },
    #[error("keys at period {period} sum to {sum}, above 1")]
    SumExceedsOne { period: usize, sum: f64 },
    #[error("key file members {found:?} do not match meter members {expected:?}")]
    MemberMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("unknown key strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Meter(#[from] MeterError),
}

/// Per-period, per-member key fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyMatrix<F> {
    values: PeriodTable<F>,
}

impl<F: Scalar> KeyMatrix<F> {
    /// Validates range and per-period sums. `members` is used for messages only.
    pub fn new(values: PeriodTable<F>, members: &[String]) -> Result<Self, KeyError> {
        let slack = F::lit(KEY_SUM_SLACK);
        for t in 0..values.periods() {
            for i in 0..values.members() {
                let k = values.get(t, i);
                if !(k >= F::zero() && k <= F::one()) {
                    return Err(KeyError::OutOfRange {
                        member: members.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
                        period: t,
                        value: k.as_f64(),
                    });
                }
            }
            let sum = values.row_sum(t);
            if sum > F::one() + slack {
                return Err(KeyError::SumExceedsOne {
                    period: t,
                    sum: sum.as_f64(),
                });
            }
        }
        Ok(Self { values })
    }

    /// All keys zero.
    pub fn zeros(periods: usize, members: usize) -> Self {
        Self {
            values: PeriodTable::zeros(periods, members),
        }
    }

    pub fn get(&self, t: usize, i: usize) -> F {
        self.values.get(t, i)
    }

    pub fn row(&self, t: usize) -> &[F] {
        self.values.row(t)
    }

    pub fn table(&self) -> &PeriodTable<F> {
        &self.values
    }

    pub fn periods(&self) -> usize {
        self.values.periods()
    }

    pub fn members(&self) -> usize {
        self.values.members()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyStrategy {
    Uniform,
    ProportionalStatic,
    ProportionalDynamic,
    Explicit(String),
}

impl FromStr for KeyStrategy {
    type Err = KeyError;

    /// Accepts `uniform`, `proportional-static`, `proportional-dynamic`, or
    /// `explicit:<path>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "proportional-static" | "static" => Ok(Self::ProportionalStatic),
            "proportional-dynamic" | "dynamic" => Ok(Self::ProportionalDynamic),
            _ => match s.strip_prefix("explicit:") {
                Some(path) if !path.is_empty() => Ok(Self::Explicit(path.to_string())),
                _ => Err(KeyError::UnknownStrategy(s.to_string())),
            },
        }
    }
}

impl fmt::Display for KeyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::ProportionalStatic => f.write_str("proportional-static"),
            Self::ProportionalDynamic => f.write_str("proportional-dynamic"),
            Self::Explicit(p) => write!(f, "explicit:{p}"),
        }
    }
}

/// Equal shares among the members with positive net consumption in each period.
pub fn uniform_keys<F: Scalar>(series: &MeterSeries<F>) -> KeyMatrix<F> {
    let cn = series.net_consumption();
    let mut values = PeriodTable::zeros(series.num_periods(), series.num_members());
    for t in 0..series.num_periods() {
        let n = cn.row(t).iter().filter(|&&c| c > F::zero()).count();
        if n == 0 {
            continue;
        }
        let share = F::one() / F::lit(n as f64);
        for i in 0..series.num_members() {
            if cn.get(t, i) > F::zero() {
                values.set(t, i, share);
            }
        }
    }
    KeyMatrix { values }
}

/// Shares proportional to each member's total net consumption, repeated in
/// every period.
pub fn proportional_static_keys<F: Scalar>(series: &MeterSeries<F>) -> Result<KeyMatrix<F>, KeyError> {
    let cn = series.net_consumption();
    let totals: Vec<F> = (0..series.num_members()).map(|i| cn.column_sum(i)).collect();
    let grand: F = totals.iter().copied().sum();
    if !(grand > F::zero()) {
        return Err(KeyError::Degenerate);
    }
    let shares: Vec<F> = totals.iter().map(|&s| s / grand).collect();
    let values = PeriodTable::from_fn(series.num_periods(), series.num_members(), |_, i| shares[i]);
    Ok(KeyMatrix { values })
}

/// Shares proportional to each period's net consumption.
pub fn proportional_dynamic_keys<F: Scalar>(series: &MeterSeries<F>) -> KeyMatrix<F> {
    let cn = series.net_consumption();
    let mut values = PeriodTable::zeros(series.num_periods(), series.num_members());
    for t in 0..series.num_periods() {
        let total = cn.row_sum(t);
        if total > F::zero() {
            for i in 0..series.num_members() {
                values.set(t, i, cn.get(t, i) / total);
            }
        }
    }
    KeyMatrix { values }
}

/// Reads a key CSV laid out like the meter files and validates it. Rows
/// whose sum exceeds one only by print rounding are rescaled to sum to one.
pub fn read_explicit_keys<F: Scalar, R: Read>(
    reader: R,
    series: &MeterSeries<F>,
    zone: Option<FixedOffset>,
) -> Result<KeyMatrix<F>, KeyError> {
    let raw = RawTable::read(reader, zone)?;
    if raw.members != series.members() {
        return Err(KeyError::MemberMismatch {
            expected: series.members().to_vec(),
            found: raw.members,
        });
    }
    raw.align(series.grid())?;
    let mut values = PeriodTable::from_fn(raw.values.len(), raw.members.len(), |t, i| F::lit(raw.values[t][i]));
    // Keys printed with six decimals can sum to slightly more than one.
    let rounding = F::lit(0.5e-6 * raw.members.len() as f64);
    for t in 0..values.periods() {
        let sum = values.row_sum(t);
        if sum > F::one() && sum <= F::one() + rounding {
            values.row_mut(t).iter_mut().for_each(|k| *k = *k / sum);
        }
    }
    KeyMatrix::new(values, series.members())
}

/// Keys for a strategy. Explicit strategies read their file from disk.
pub fn generate_keys<F: Scalar>(
    strategy: &KeyStrategy,
    series: &MeterSeries<F>,
    zone: Option<FixedOffset>,
) -> Result<KeyMatrix<F>, KeyError> {
    match strategy {
        KeyStrategy::Uniform => Ok(uniform_keys(series)),
        KeyStrategy::ProportionalStatic => proportional_static_keys(series),
        KeyStrategy::ProportionalDynamic => Ok(proportional_dynamic_keys(series)),
        KeyStrategy::Explicit(path) => {
            let file = std::fs::File::open(path).map_err(MeterError::from)?;
            read_explicit_keys(file, series, zone)
        }
    }
}

/// Writes a key matrix in the explicit-key CSV layout.
pub fn write_keys<F: Scalar, W: Write>(keys: &KeyMatrix<F>, series: &MeterSeries<F>, out: W) -> Result<(), MeterError> {
    crate::report::write_matrix(keys.table(), series, out)
}
