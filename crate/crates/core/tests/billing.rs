mod common;

use common::{random_instance, four_members, Keys};
use keyshare::billing::{baseline_bill, bill, savings_report, BillingError};
use keyshare::settlement::{settle, SettleOptions};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = Keys> {
    prop_oneof![Just(Keys::Uniform), Just(Keys::Static), Just(Keys::Dynamic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn no_line_costs_more_than_retail(
        seed in any::<u64>(), kind in kind(), periods in 1usize..6, members in 1usize..7, x in 0.0f64..=1.0,
    ) {
        let inst = random_instance(seed, periods, members, x, kind);
        let r = settle(&inst.series, &inst.contracts, &inst.keys, &SettleOptions::default()).unwrap();
        let bills = bill(&inst.series, &inst.contracts, &r).unwrap();
        let base = baseline_bill(&inst.series, &inst.contracts);
        for (line, b) in bills.lines().iter().zip(base.lines()) {
            prop_assert!(line.net() <= b.net() + 1e-12, "{:?} vs {:?}", line, b);
        }
        let report = savings_report(&inst.series, &bills, &base).unwrap();
        for m in &report {
            prop_assert!(m.community_total <= m.baseline_total + 1e-12);
        }
    }
}

#[test]
fn four_members_bills_split_the_flows() {
    let (s, c, k) = four_members();
    let r = settle(&s, &c, &k, &SettleOptions::default()).unwrap();
    let bills = bill(&s, &c, &r).unwrap();
    // User1 at period one buys what the community cannot cover from the retailer.
    let line = bills.get(1, 0);
    let v = r.verified.get(1, 0);
    assert!((line.local_purchase - 0.1 * v).abs() < 1e-12);
    assert!((line.grid_purchase - 0.22 * (0.21 - v)).abs() < 1e-12);
    // User3 sells 0.46 locally and 0.04 to the retailer at period zero.
    let line = bills.get(0, 2);
    assert!((line.local_sale - 0.098 * 0.46).abs() < 1e-3 * 0.098);
    assert!((line.grid_sale - 0.06 * 0.04).abs() < 1e-3 * 0.06);
    assert!(bills.total() < baseline_bill(&s, &c).total());
}

#[test]
fn corrupt_results_are_rejected() {
    let (s, c, k) = four_members();
    let mut r = settle(&s, &c, &k, &SettleOptions::default()).unwrap();
    r.verified.set(0, 0, 1.0);
    assert!(matches!(bill(&s, &c, &r), Err(BillingError::Corrupt { member: 0, period: 0, .. })));
}
