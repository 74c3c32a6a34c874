//! Seeded synthetic communities for demonstrations, benchmarks and tests.

use chrono::{TimeZone, Timelike, Utc};
use keyshare_lp::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contract::Prices;
use crate::metering::{MeterSeries, PeriodGrid};
use crate::table::PeriodTable;

/// Shape of a synthetic community.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunitySpec {
    pub periods: usize,
    pub members: usize,
    pub seed: u64,
    /// Fraction of households with rooftop panels.
    pub prosumer_share: f64,
    /// Peak output of the community-owned generator, kW; zero for none.
    pub shared_plant_kw: f64,
    pub cadence_seconds: i64,
}

impl CommunitySpec {
    pub fn new(periods: usize, members: usize, seed: u64) -> Self {
        Self {
            periods,
            members,
            seed,
            prosumer_share: 0.4,
            shared_plant_kw: 2.0 * members as f64,
            cadence_seconds: PeriodGrid::DEFAULT_CADENCE,
        }
    }
}

/// Household loads and solar output on a 15-minute grid starting
/// 2017-03-01 00:00 UTC. The last member is the shared plant when
/// `shared_plant_kw > 0`; households get heterogeneous load scales and panel
/// sizes so that self-sufficiency varies widely across members.
pub fn synthetic_community<F: Scalar>(spec: &CommunitySpec) -> MeterSeries<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).unwrap();
    let grid = PeriodGrid::new(start, spec.cadence_seconds, spec.periods.max(1)).expect("valid grid");
    let hours = spec.cadence_seconds as f64 / 3600.0;
    let plant = spec.shared_plant_kw > 0.0 && spec.members > 1;
    let households = if plant { spec.members - 1 } else { spec.members };

    struct Household {
        base_kw: f64,
        peak_kw: f64,
        evening: f64,
        panel_kw: f64,
    }
    let homes: Vec<Household> = (0..households)
        .map(|_| Household {
            base_kw: rng.gen_range(0.15..0.6),
            peak_kw: rng.gen_range(0.5..3.0),
            evening: rng.gen_range(17.0..21.0),
            panel_kw: if rng.gen_bool(spec.prosumer_share) {
                rng.gen_range(1.0..8.0)
            } else {
                0.0
            },
        })
        .collect();
    let days = (spec.periods as f64 * hours / 24.0).ceil() as usize + 1;
    let clearness: Vec<f64> = (0..days).map(|_| rng.gen_range(0.3..1.0)).collect();

    let mut consumption = PeriodTable::zeros(grid.len(), spec.members);
    let mut production = PeriodTable::zeros(grid.len(), spec.members);
    for t in 0..grid.len() {
        let ts = grid.timestamp(t);
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let day = ((ts - start).num_seconds() / 86_400) as usize;
        let sun = solar_shape(hour) * clearness[day.min(days - 1)];
        for (i, h) in homes.iter().enumerate() {
            let morning = (-((hour - 7.5) / 1.2).powi(2)).exp();
            let evening = (-((hour - h.evening) / 1.8).powi(2)).exp();
            let noise = rng.gen_range(0.7..1.3);
            let load = (h.base_kw + h.peak_kw * (0.5 * morning + evening)) * noise;
            let pv = h.panel_kw * sun * rng.gen_range(0.9..1.1);
            consumption.set(t, i, F::lit(round6(load * hours)));
            production.set(t, i, F::lit(round6(pv * hours)));
        }
        if plant {
            let pv = spec.shared_plant_kw * sun * rng.gen_range(0.9..1.1);
            production.set(t, spec.members - 1, F::lit(round6(pv * hours)));
        }
    }
    let names = member_names(spec.members, plant);
    MeterSeries::from_channels(grid, names, consumption, production).expect("generated channels are valid")
}

fn member_names(members: usize, plant: bool) -> Vec<String> {
    (0..members)
        .map(|i| {
            if plant && i + 1 == members {
                "plant".to_string()
            } else {
                format!("home{:03}", i + 1)
            }
        })
        .collect()
}

/// Clear-sky shape, zero outside 06:00–20:00, peak 1 at 13:00.
fn solar_shape(hour: f64) -> f64 {
    if !(6.0..=20.0).contains(&hour) {
        return 0.0;
    }
    let x = (hour - 6.0) / 14.0 * std::f64::consts::PI;
    x.sin().powf(1.5)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Small random series from signed readings in `[-1, 1]` kWh, with roughly
/// one reading in six exactly zero.
pub fn random_series<F: Scalar, R: Rng>(rng: &mut R, periods: usize, members: usize) -> MeterSeries<F> {
    let start = Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).unwrap();
    let grid = PeriodGrid::new(start, PeriodGrid::DEFAULT_CADENCE, periods).expect("valid grid");
    let signed = PeriodTable::from_fn(periods, members, |_, _| {
        if rng.gen_ratio(1, 6) {
            F::zero()
        } else {
            F::lit((rng.gen_range(-1.0..1.0) * 1e4f64).round() / 1e4)
        }
    });
    let names = (0..members).map(|i| format!("m{}", i + 1)).collect();
    MeterSeries::from_signed(grid, names, &signed).expect("generated readings are valid")
}

/// Random prices in €/kWh with `ξˡ⁻ ≤ ξᵇ` and `ξˡ⁺ ≥ ξˢ`.
pub fn random_favorable_prices<F: Scalar, R: Rng>(rng: &mut R) -> Prices<F> {
    let buy = rng.gen_range(150.0..300.0);
    let sell = rng.gen_range(20.0..80.0);
    let local_buy = rng.gen_range(sell..buy);
    let local_sell = rng.gen_range(sell..=local_buy);
    let deviation = rng.gen_range(0.01..0.1);
    Prices::from_mwh(buy, sell, local_buy, local_sell, deviation)
}
