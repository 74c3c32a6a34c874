//! Member tariffs, self-sufficiency floors and key tolerances.

use std::collections::BTreeMap;
use std::io::Read;

use keyshare_lp::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metering::MeterSeries;

/// Default cap on the deviation price, €/kWh.
pub const MAX_DEVIATION_PRICE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("no price entry for member `{0}`")]
    MissingMember(String),
    #[error("price entry for unknown member `{0}`")]
    UnknownMember(String),
    #[error("{field} price for member `{member}` is {value}; prices must be finite and non-negative")]
    InvalidPrice {
        member: String,
        field: &'static str,
        value: f64,
    },
    #[error("deviation price for member `{member}` is {value} €/kWh, above the {limit} €/kWh cap")]
    DeviationPriceTooHigh { member: String, value: f64, limit: f64 },
    #[error("self-sufficiency floor for member `{member}` is {value}, outside [0, 1]")]
    InvalidFloor { member: String, value: f64 },
    #[error("tolerance for member `{member}` at period {period} is {value}, outside [0, 1]")]
    InvalidTolerance {
        member: String,
        period: usize,
        value: f64,
    },
    #[error("expected {expected} contracts, found {found}")]
    Count { expected: usize, found: usize },
    #[error("member `{member}` has {found} tolerance periods, expected {expected}")]
    TolerancePeriods {
        member: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid price file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-member prices in €/kWh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prices<F> {
    /// ξᵇ, retail purchase.
    pub buy: F,
    /// ξˢ, retail sale.
    pub sell: F,
    /// ξˡ⁻, purchase from the community.
    pub local_buy: F,
    /// ξˡ⁺, sale to the community.
    pub local_sell: F,
    /// ξᵈ, penalty on key deviations.
    pub deviation: F,
}

impl<F: Scalar> Prices<F> {
    /// Converts €/MWh quotes to €/kWh.
    pub fn from_mwh(buy: f64, sell: f64, local_buy: f64, local_sell: f64, deviation: f64) -> Self {
        let k = |x: f64| F::lit(x / 1000.0);
        Self {
            buy: k(buy),
            sell: k(sell),
            local_buy: k(local_buy),
            local_sell: k(local_sell),
            deviation: k(deviation),
        }
    }

    /// 220 / 60 / 100 / 98 / 0.1 €/MWh.
    pub fn reference() -> Self {
        Self::from_mwh(220.0, 60.0, 100.0, 98.0, 0.1)
    }

    /// Whether trading locally never costs more than trading with the retailer.
    pub fn favors_local(&self) -> bool {
        self.local_buy <= self.buy && self.local_sell >= self.sell
    }

    fn fields(&self) -> [(&'static str, F); 5] {
        [
            ("buy", self.buy),
            ("sell", self.sell),
            ("local_buy", self.local_buy),
            ("local_sell", self.local_sell),
            ("deviation", self.deviation),
        ]
    }
}

/// JSON price entry, €/MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceQuote {
    pub buy: f64,
    pub sell: f64,
    pub local_buy: f64,
    pub local_sell: f64,
    pub deviation: f64,
}

/// Parses a JSON object mapping member name to a [`PriceQuote`].
pub fn read_price_table<R: Read>(reader: R) -> Result<BTreeMap<String, PriceQuote>, ContractError> {
    Ok(serde_json::from_reader(reader)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemberContract<F> {
    pub prices: Prices<F>,
    /// Minimum self-sufficiency rate, a fraction.
    pub ssr_floor: F,
    /// Allowed deviation of optimized keys from initial keys, one value per period.
    pub tolerance: Vec<F>,
}

impl<F: Scalar> MemberContract<F> {
    pub fn new(prices: Prices<F>, periods: usize) -> Self {
        Self {
            prices,
            ssr_floor: F::zero(),
            tolerance: vec![F::one(); periods],
        }
    }

    pub fn with_tolerance(mut self, x: F) -> Self {
        self.tolerance.iter_mut().for_each(|v| *v = x);
        self
    }

    pub fn with_floor(mut self, floor: F) -> Self {
        self.ssr_floor = floor;
        self
    }
}

/// Contracts for every member of a series, in member order.
#[derive(Clone, Debug, PartialEq)]
pub struct Contracts<F> {
    members: Vec<MemberContract<F>>,
}

impl<F: Scalar> Contracts<F> {
    /// Validates `members` against the series shape. With `cap_deviation`
    /// the deviation price must not exceed [`MAX_DEVIATION_PRICE`].
    pub fn new(
        members: Vec<MemberContract<F>>,
        series: &MeterSeries<F>,
        cap_deviation: bool,
    ) -> Result<Self, ContractError> {
        if members.len() != series.num_members() {
            return Err(ContractError::Count {
                expected: series.num_members(),
                found: members.len(),
            });
        }
        for (c, name) in members.iter().zip(series.members()) {
            for (field, value) in c.prices.fields() {
                if !value.is_finite() || value < F::zero() {
                    return Err(ContractError::InvalidPrice {
                        member: name.clone(),
                        field,
                        value: value.as_f64(),
                    });
                }
            }
            // Compare in f64 so the cap is independent of the scalar's rounding.
            if cap_deviation && c.prices.deviation.as_f64() > MAX_DEVIATION_PRICE * (1.0 + 1e-6) {
                return Err(ContractError::DeviationPriceTooHigh {
                    member: name.clone(),
                    value: c.prices.deviation.as_f64(),
                    limit: MAX_DEVIATION_PRICE,
                });
            }
            if !(c.ssr_floor >= F::zero() && c.ssr_floor <= F::one()) {
                return Err(ContractError::InvalidFloor {
                    member: name.clone(),
                    value: c.ssr_floor.as_f64(),
                });
            }
            if c.tolerance.len() != series.num_periods() {
                return Err(ContractError::TolerancePeriods {
                    member: name.clone(),
                    expected: series.num_periods(),
                    found: c.tolerance.len(),
                });
            }
            if let Some((t, x)) = c
                .tolerance
                .iter()
                .enumerate()
                .find(|(_, x)| !(**x >= F::zero() && **x <= F::one()))
            {
                return Err(ContractError::InvalidTolerance {
                    member: name.clone(),
                    period: t,
                    value: x.as_f64(),
                });
            }
        }
        Ok(Self { members })
    }

    /// One contract per member with the same prices, tolerance `x` and floor.
    pub fn uniform(series: &MeterSeries<F>, prices: Prices<F>, x: F, floor: F) -> Result<Self, ContractError> {
        let t = series.num_periods();
        let members = (0..series.num_members())
            .map(|_| MemberContract::new(prices, t).with_tolerance(x).with_floor(floor))
            .collect();
        Self::new(members, series, true)
    }

    /// Builds contracts from a JSON price table in €/MWh. Every member needs
    /// an entry and every entry must name a member.
    pub fn from_price_table(
        table: &BTreeMap<String, PriceQuote>,
        series: &MeterSeries<F>,
        x: F,
        floor: F,
        cap_deviation: bool,
    ) -> Result<Self, ContractError> {
        if let Some(extra) = table.keys().find(|k| series.member_index(k).is_none()) {
            return Err(ContractError::UnknownMember(extra.clone()));
        }
        let t = series.num_periods();
        let members = series
            .members()
            .iter()
            .map(|name| {
                let q = table
                    .get(name)
                    .ok_or_else(|| ContractError::MissingMember(name.clone()))?;
                let prices = Prices::from_mwh(q.buy, q.sell, q.local_buy, q.local_sell, q.deviation);
                Ok(MemberContract::new(prices, t).with_tolerance(x).with_floor(floor))
            })
            .collect::<Result<Vec<_>, ContractError>>()?;
        Self::new(members, series, cap_deviation)
    }

    pub fn get(&self, i: usize) -> &MemberContract<F> {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemberContract<F>> {
        self.members.iter()
    }

    pub fn floors(&self) -> Vec<F> {
        self.members.iter().map(|c| c.ssr_floor).collect()
    }

    /// Same contracts with every floor replaced by `floor`.
    pub fn with_uniform_floor(&self, floor: F) -> Self {
        let mut out = self.clone();
        out.members.iter_mut().for_each(|c| c.ssr_floor = floor);
        out
    }

    /// Same contracts with member `i` given floor `floors[i]`.
    ///
    /// # Panics
    /// If `floors` does not have one entry per member.
    pub fn with_floors(&self, floors: &[F]) -> Self {
        assert_eq!(floors.len(), self.members.len(), "one floor per member");
        let mut out = self.clone();
        out.members.iter_mut().zip(floors).for_each(|(c, &f)| c.ssr_floor = f);
        out
    }

    /// Same contracts with every tolerance replaced by `x`.
    pub fn with_uniform_tolerance(&self, x: F) -> Self {
        let mut out = self.clone();
        out.members
            .iter_mut()
            .for_each(|c| c.tolerance.iter_mut().for_each(|v| *v = x));
        out
    }

    /// `Σᵢ ξᵈᵢ`, the effective per-period penalty on `a⁺ + a⁻`.
    pub fn total_deviation_price(&self) -> F {
        self.members.iter().map(|c| c.prices.deviation).sum()
    }
}
