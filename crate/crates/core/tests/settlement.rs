mod common;

use common::{random_instance, rel_close, Instance, Keys};
use keyshare::billing::bill;
use keyshare::contract::Contracts;
use keyshare::keygen::KeyMatrix;
use keyshare::metering::MeterSeries;
use keyshare::settlement::{settle, verify, SettleOptions, SettlementError, SettlementResult, SolveStrategy};
use keyshare::PeriodTable;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = Keys> {
    prop_oneof![Just(Keys::Uniform), Just(Keys::Static), Just(Keys::Dynamic)]
}

fn with(strategy: SolveStrategy) -> SettleOptions<f64> {
    SettleOptions::default().with_strategy(strategy)
}

fn run(inst: &Instance, contracts: &Contracts<f64>, strategy: SolveStrategy) -> Result<SettlementResult<f64>, SettlementError> {
    settle(&inst.series, contracts, &inst.keys, &with(strategy))
}

fn permuted(inst: &Instance, order: &[usize]) -> Instance {
    cloned(inst, order)
}

/// Members drawn from `inst` by index; repeats are renamed. Keys are
/// rescaled per period when repeats push their sum above one.
fn cloned(inst: &Instance, order: &[usize]) -> Instance {
    let s = &inst.series;
    let pick = |tab: &PeriodTable<f64>| PeriodTable::from_fn(tab.periods(), order.len(), |t, i| tab.get(t, order[i]));
    let names: Vec<String> = order.iter().enumerate().map(|(j, &i)| format!("{}#{j}", s.members()[i])).collect();
    let series =
        MeterSeries::from_channels(s.grid().clone(), names.clone(), pick(s.consumption()), pick(s.production()))
            .unwrap();
    let contracts = Contracts::new(order.iter().map(|&i| inst.contracts.get(i).clone()).collect(), &series, true).unwrap();
    let mut keys = pick(inst.keys.table());
    for t in 0..keys.periods() {
        let sum = keys.row_sum(t);
        if sum > 1.0 {
            keys.row_mut(t).iter_mut().for_each(|k| *k /= sum);
        }
    }
    let keys = KeyMatrix::new(keys, &names).unwrap();
    Instance {
        series,
        contracts,
        keys,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn every_path_reaches_the_same_optimum(
        seed in any::<u64>(), kind in kind(), periods in 1usize..6, members in 1usize..6, x in 0.0f64..=1.0,
    ) {
        let inst = random_instance(seed, periods, members, x, kind);
        let mono = run(&inst, &inst.contracts, SolveStrategy::Monolithic).unwrap();
        for strategy in [SolveStrategy::Decomposed, SolveStrategy::ColumnGeneration, SolveStrategy::Auto] {
            let r = run(&inst, &inst.contracts, strategy).unwrap();
            prop_assert!(rel_close(r.objective, mono.objective, 1e-9), "{:?}: {} vs {}", strategy, r.objective, mono.objective);
            verify(&inst.series, &inst.contracts, &inst.keys, &r).unwrap();
        }
    }

    #[test]
    fn objective_reconciles_with_bills(seed in any::<u64>(), kind in kind(), x in 0.0f64..=1.0) {
        let inst = random_instance(seed, 4, 4, x, kind);
        let r = run(&inst, &inst.contracts, SolveStrategy::Auto).unwrap();
        let bills = bill(&inst.series, &inst.contracts, &r).unwrap();
        let penalty: f64 = r.deviation_up.iter().zip(&r.deviation_down).map(|(u, d)| u + d).sum::<f64>()
            * inst.contracts.total_deviation_price();
        prop_assert!(rel_close(bills.total() + penalty, r.objective, 1e-12), "{} + {} vs {}", bills.total(), penalty, r.objective);
    }

    #[test]
    fn relaxing_the_tolerance_never_costs(seed in any::<u64>(), kind in kind()) {
        let inst = random_instance(seed, 3, 4, 0.0, kind);
        let mut last = f64::INFINITY;
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let r = run(&inst, &inst.contracts.with_uniform_tolerance(x), SolveStrategy::Auto).unwrap();
            prop_assert!(r.objective <= last + 1e-9 * last.abs().max(1.0));
            last = r.objective;
        }
    }

    #[test]
    fn member_order_does_not_matter(seed in any::<u64>(), kind in kind(), members in 2usize..6, x in 0.0f64..=1.0) {
        let inst = random_instance(seed, 3, members, x, kind);
        let order: Vec<usize> = (0..members).rev().collect();
        let flipped = permuted(&inst, &order);
        let a = run(&inst, &inst.contracts, SolveStrategy::Monolithic).unwrap();
        let b = run(&flipped, &flipped.contracts, SolveStrategy::Monolithic).unwrap();
        prop_assert!(rel_close(a.objective, b.objective, 1e-9));
    }

    #[test]
    fn identical_members_get_identical_keys(seed in any::<u64>(), kind in kind(), members in 1usize..5, twins in 2usize..4, x in 0.0f64..=1.0) {
        let base = random_instance(seed, 4, members, x, kind);
        // Repeat member 0 so that `twins` members share its readings and contract.
        let mut order: Vec<usize> = (0..members).collect();
        order.extend(std::iter::repeat(0).take(twins - 1));
        let inst = cloned(&base, &order);
        for strategy in [SolveStrategy::Monolithic, SolveStrategy::Decomposed] {
            let r = run(&inst, &inst.contracts, strategy).unwrap();
            for t in 0..4 {
                for j in members..order.len() {
                    prop_assert!((r.keys.get(t, j) - r.keys.get(t, 0)).abs() <= 1e-6,
                        "{:?} t={} keys {:?}", strategy, t, r.keys.row(t));
                }
            }
        }
    }

    #[test]
    fn floors_agree_between_full_and_coupled_paths(seed in any::<u64>(), kind in kind(), floor in 0.0f64..=1.0) {
        let inst = random_instance(seed, 4, 4, 0.5, kind);
        let c = inst.contracts.with_uniform_floor(floor);
        let mono = run(&inst, &c, SolveStrategy::Monolithic);
        let cg = run(&inst, &c, SolveStrategy::ColumnGeneration);
        match (mono, cg) {
            (Ok(a), Ok(b)) => {
                prop_assert!(rel_close(a.objective, b.objective, 1e-8), "{} vs {}", a.objective, b.objective);
                verify(&inst.series, &c, &inst.keys, &b).unwrap();
            }
            (Err(SettlementError::Infeasible(_)), Err(SettlementError::Infeasible(_))) => {}
            (a, b) => prop_assert!(false, "paths disagree: {:?} vs {:?}", a.map(|r| r.objective), b.map(|r| r.objective)),
        }
    }

    #[test]
    fn raising_the_floor_never_saves(seed in any::<u64>(), kind in kind()) {
        let inst = random_instance(seed, 3, 4, 0.5, kind);
        let mut last = f64::NEG_INFINITY;
        let mut infeasible = false;
        for floor in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
            match run(&inst, &inst.contracts.with_uniform_floor(floor), SolveStrategy::Auto) {
                Ok(r) => {
                    prop_assert!(!infeasible, "feasible again at floor {}", floor);
                    prop_assert!(r.objective >= last - 1e-9 * last.abs().max(1.0));
                    last = r.objective;
                }
                Err(SettlementError::Infeasible(report)) => {
                    prop_assert!(!report.members.is_empty());
                    infeasible = true;
                }
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }
}
