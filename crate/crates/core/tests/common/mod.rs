#![allow(dead_code)]

use keyshare::contract::{Contracts, MemberContract, Prices};
use keyshare::keygen::{proportional_dynamic_keys, proportional_static_keys, uniform_keys, KeyMatrix};
use keyshare::metering::{ingest_signed, MeterSeries, PeriodGrid};
use keyshare::synthetic::{random_favorable_prices, random_series};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FOUR_MEMBERS: &str = "timestamp,User1,User2,User3,User4\n\
    2017-03-01T00:00:00Z,0.17,0.21,-0.50,0.08\n\
    2017-03-01T00:15:00Z,0.21,0.23,-0.30,-0.02\n";

pub fn grid(periods: usize) -> PeriodGrid {
    use chrono::{TimeZone, Utc};
    PeriodGrid::new(Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).unwrap(), 900, periods).unwrap()
}

pub fn four_members() -> (MeterSeries<f64>, Contracts<f64>, KeyMatrix<f64>) {
    let s: MeterSeries<f64> = ingest_signed(FOUR_MEMBERS.as_bytes(), &grid(2), None).unwrap();
    let c = Contracts::uniform(&s, Prices::reference(), 1.0, 0.0).unwrap();
    let k = proportional_static_keys(&s).unwrap();
    (s, c, k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Keys {
    Uniform,
    Static,
    Dynamic,
}

pub fn keys_for(series: &MeterSeries<f64>, kind: Keys) -> KeyMatrix<f64> {
    match kind {
        Keys::Uniform => uniform_keys(series),
        Keys::Static => proportional_static_keys(series).unwrap_or_else(|_| uniform_keys(series)),
        Keys::Dynamic => proportional_dynamic_keys(series),
    }
}

/// Random signed readings with per-member favorable prices and tolerance `x`.
pub struct Instance {
    pub series: MeterSeries<f64>,
    pub contracts: Contracts<f64>,
    pub keys: KeyMatrix<f64>,
}

pub fn random_instance(seed: u64, periods: usize, members: usize, x: f64, kind: Keys) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: MeterSeries<f64> = random_series(&mut rng, periods, members);
    let contracts = random_contracts(&mut rng, &series, x);
    let keys = keys_for(&series, kind);
    Instance {
        series,
        contracts,
        keys,
    }
}

pub fn random_contracts<R: Rng>(rng: &mut R, series: &MeterSeries<f64>, x: f64) -> Contracts<f64> {
    let members = (0..series.num_members())
        .map(|_| {
            let p: Prices<f64> = random_favorable_prices(rng);
            MemberContract::new(p, series.num_periods()).with_tolerance(x)
        })
        .collect();
    Contracts::new(members, series, true).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
