mod common;

use common::{grid, random_instance, Keys};
use keyshare::contract::{Contracts, Prices};
use keyshare::feasibility::{max_uniform_ssr, priority_floors};
use keyshare::keygen::uniform_keys;
use keyshare::metering::ingest_signed;
use keyshare::settlement::{settle, SettleOptions, SettlementError};
use keyshare::MeterSeries;
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn bisection_finds_the_edge(seed in any::<u64>(), x in 0.2f64..=1.0) {
        let inst = random_instance(seed, 4, 4, x, Keys::Uniform);
        let opts = SettleOptions::default();
        let search = max_uniform_ssr(&inst.series, &inst.contracts, &inst.keys, TOL, &opts).unwrap();
        let at = |s: f64| settle(&inst.series, &inst.contracts.with_uniform_floor(s), &inst.keys, &opts);
        let free = at(0.0).unwrap();
        let best = at(search.floor).unwrap();
        prop_assert!(min(&best.ssr) >= min(&free.ssr) - 1e-9);
        prop_assert!(best.objective >= free.objective - 1e-9);
        if let Some(bad) = search.infeasible_at {
            prop_assert!(bad - search.floor <= TOL);
            prop_assert!(matches!(at(bad), Err(SettlementError::Infeasible(_))));
            prop_assert!(matches!(at(search.floor + TOL), Err(SettlementError::Infeasible(_))));
        }
    }

    #[test]
    fn priority_floors_are_attainable(seed in any::<u64>(), x in 0.0f64..=1.0) {
        let inst = random_instance(seed, 5, 5, x, Keys::Static);
        let opts = SettleOptions::default();
        let floors = priority_floors(&inst.series, &inst.contracts, &inst.keys, 0.4, 1e-9, &opts).unwrap();
        let r = settle(&inst.series, &inst.contracts.with_floors(&floors), &inst.keys, &opts).unwrap();
        for (s, f) in r.ssr.iter().zip(&floors) {
            prop_assert!(*s >= f - 1e-7);
        }
    }
}

fn series(csv: &str, periods: usize) -> MeterSeries<f64> {
    ingest_signed(csv.as_bytes(), &grid(periods), None).unwrap()
}

#[test]
fn ample_production_allows_full_coverage() {
    let s = series("timestamp,C,P\n2017-03-01T00:00:00Z,0.3,-0.5\n2017-03-01T00:15:00Z,0.2,-0.2\n", 2);
    let c = Contracts::uniform(&s, Prices::reference(), 1.0, 0.0).unwrap();
    let k = uniform_keys(&s);
    let search = max_uniform_ssr(&s, &c, &k, TOL, &SettleOptions::default()).unwrap();
    assert_eq!(search.floor, 1.0);
    assert_eq!(search.infeasible_at, None);
    let r = settle(&s, &c.with_uniform_floor(1.0), &k, &SettleOptions::default()).unwrap();
    assert!((r.ssr[0] - 1.0).abs() < 1e-9);
}

#[test]
fn no_production_leaves_no_room() {
    let s = series("timestamp,A,B\n2017-03-01T00:00:00Z,0.3,0.1\n", 1);
    let c = Contracts::uniform(&s, Prices::reference(), 1.0, 0.0).unwrap();
    let k = uniform_keys(&s);
    let search = max_uniform_ssr(&s, &c, &k, TOL, &SettleOptions::default()).unwrap();
    assert!(search.floor < TOL);
    assert!(search.infeasible_at.unwrap() <= TOL);
}
