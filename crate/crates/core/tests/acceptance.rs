//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{random_contracts, random_instance, four_members, Keys};
use keyshare::bench::{run_bench, BenchConfig, FloorPlan};
use keyshare::billing::{baseline_bill, bill};
use keyshare::contract::{Contracts, Prices};
use keyshare::feasibility::max_uniform_ssr;
use keyshare::keygen::{proportional_dynamic_keys, proportional_static_keys};
use keyshare::metering::MeterSeries;
use keyshare::oracle::grid_search_settle;
use keyshare::settlement::{linearized_ssr_numerator, settle, SettleOptions, SettlementError, SolveStrategy};
use keyshare::synthetic::{random_series, synthetic_community, CommunitySpec};
use keyshare::PeriodTable;
use keyshare_lp::vertex::vertex_minimum;
use keyshare_lp::{solve, LpModel, Relation, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "golden four-member settlement", golden_settlement),
    (2, "initial proportional keys", initial_keys),
    (3, "linearized self-sufficiency", linearization),
    (4, "grid-search oracle optimality", oracle_optimality),
    (5, "monotonicity in tolerance and floor", monotonicity),
    (6, "dynamic keys waste nothing", wasteless),
    (7, "pointwise savings", pointwise_savings),
    (8, "self-sufficiency redistribution", redistribution),
    (9, "performance at 2880 periods x 100 members", performance),
    (10, "solver correctness", solver_correctness),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        if !result.pass {
            failed += 1;
        }
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n:>2} {name}: {} [{secs:.2} s]", result.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn golden_settlement() -> Outcome {
    let started = Instant::now();
    let (s, c, k) = four_members();
    let r = settle(&s, &c, &k, &SettleOptions::default()).expect("settles");
    let secs = started.elapsed().as_secs_f64();
    let grid_sales = PeriodTable::from_fn(2, 4, |t, i| s.net_production().get(t, i) - r.local_sales.get(t, i));
    let checks = [
        ("keys t0", r.keys.row(0), [0.39, 0.45, 0.0, 0.16]),
        ("keys t1", r.keys.row(1), [0.47, 0.53, 0.0, 0.0]),
        ("verified t0", r.verified.row(0), [0.17, 0.21, 0.0, 0.08]),
        ("verified t1", r.verified.row(1), [0.15, 0.17, 0.0, 0.0]),
        ("local sales t0", r.local_sales.row(0), [0.0, 0.0, 0.46, 0.0]),
        ("local sales t1", r.local_sales.row(1), [0.0, 0.0, 0.30, 0.02]),
        ("grid sales t0", grid_sales.row(0), [0.0, 0.0, 0.04, 0.0]),
        ("grid sales t1", grid_sales.row(1), [0.0; 4]),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !within(got, want, 0.01))
        .map(|(what, got, _)| format!("{what} {got:.4?}"))
        .collect();
    let pass = bad.is_empty() && secs < 1.0;
    let detail = if bad.is_empty() {
        format!(
            "keys t0 {:.3?}, t1 {:.3?}, all within 0.01, runtime {secs:.4} s",
            r.keys.row(0),
            r.keys.row(1)
        )
    } else {
        format!("mismatch: {}; runtime {secs:.4} s", bad.join("; "))
    };
    outcome(pass, detail)
}

fn initial_keys() -> Outcome {
    let (s, _, _) = four_members();
    let k = proportional_static_keys(&s).expect("keys");
    let exact = [0.38 / 0.9, 0.44 / 0.9, 0.0, 0.08 / 0.9];
    let four = [0.4222, 0.4889, 0.0, 0.0889];
    let printed = [0.42, 0.49, 0.0, 0.089];
    let row = k.row(0);
    let same_rows = (0..2).all(|t| k.row(t) == row);
    let close = within(row, &exact, 1e-15) && within(row, &four, 5e-5);
    let rounded = (0..3).all(|i| (row[i] * 100.0).round() / 100.0 == printed[i])
        && (row[3] * 1000.0).round() / 1000.0 == printed[3];
    outcome(same_rows && close && rounded, format!("keys {row:.4?} in both periods"))
}

fn linearization() -> Outcome {
    // Values on a binary grid keep every sum exact, so equality is checked bit for bit.
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let unit = 2f64.powi(-16);
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.gen_ratio(1, 8) {
            0.0
        } else {
            rng.gen_range(0u32..1 << 17) as f64 * unit
        }
    };
    let c = PeriodTable::from_fn(n, 1, |_, _| draw(&mut rng));
    let p = PeriodTable::from_fn(n, 1, |_, _| draw(&mut rng));
    let v = PeriodTable::from_fn(n, 1, |t, _| {
        let room = (c.get(t, 0) - p.get(t, 0)).max(0.0);
        (rng.gen_range(0.0..=1.0) * room / unit).floor() * unit
    });
    let grid = common::grid(n);
    let s = MeterSeries::from_channels(grid, vec!["m".into()], c.clone(), p.clone()).expect("series");
    let mut mismatches = 0;
    let mut tight = 0;
    for t in 0..n {
        let (ct, pt, vt) = (c.get(t, 0), p.get(t, 0), v.get(t, 0));
        if vt == (ct - pt).max(0.0) {
            tight += 1;
        }
        let lhs = linearized_ssr_numerator(&s, &v, t, 0).expect("v within net consumption");
        if lhs.to_bits() != (pt + vt).min(ct).to_bits() {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{n} cases ({tight} with v at its bound), {mismatches} mismatches"),
    )
}

fn oracle_optimality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gap = 0.0f64;
    let mut worst_slack = f64::INFINITY;
    let mut failures = Vec::new();
    for n in 0..200 {
        let periods = rng.gen_range(1..=2);
        let members = if rng.gen_ratio(3, 4) { 3 } else { rng.gen_range(1..=2) };
        let x = if rng.gen_ratio(1, 10) { 0.0 } else { rng.gen_range(0.0..=1.0) };
        let kind = [Keys::Uniform, Keys::Static, Keys::Dynamic][rng.gen_range(0..3)];
        let inst = random_instance(rng.gen(), periods, members, x, kind);
        let lp = settle(&inst.series, &inst.contracts, &inst.keys, &SettleOptions::default()).expect("settles");
        let grid = grid_search_settle(&inst.series, &inst.contracts, &inst.keys, 0.01).expect("oracle applies");
        let gap = grid.objective - lp.objective;
        let bound = grid.lipschitz * 0.01;
        worst_gap = worst_gap.max(gap);
        worst_slack = worst_slack.min(bound - gap);
        if lp.objective > grid.objective + 1e-6 || gap > bound {
            failures.push(n);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 60.0,
        format!(
            "200 instances, largest oracle-minus-LP gap {worst_gap:.3e}, smallest margin to bound {worst_slack:.3e}, failures {failures:?}, {secs:.1} s"
        ),
    )
}

fn monotonicity() -> Outcome {
    let opts = SettleOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let mut infeasible_runs = 0;
    for n in 0..50 {
        let kind = [Keys::Uniform, Keys::Static, Keys::Dynamic][n % 3];
        let inst = random_instance(rng.gen(), 6, 4, 0.0, kind);
        let mut last = f64::INFINITY;
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let r = settle(&inst.series, &inst.contracts.with_uniform_tolerance(x), &inst.keys, &opts).expect("settles");
            if r.objective > last + 1e-9 * last.abs().max(1.0) {
                problems.push(format!("instance {n}: objective rose at X={x}"));
            }
            last = r.objective;
        }
        let c = inst.contracts.with_uniform_tolerance(0.5);
        let mut last = f64::NEG_INFINITY;
        let mut infeasible = false;
        for step in 0..=20 {
            let floor = step as f64 * 0.05;
            match settle(&inst.series, &c.with_uniform_floor(floor), &inst.keys, &opts) {
                Ok(r) => {
                    if infeasible {
                        problems.push(format!("instance {n}: feasible again at floor {floor}"));
                    }
                    if r.objective < last - 1e-9 * last.abs().max(1.0) {
                        problems.push(format!("instance {n}: objective fell at floor {floor}"));
                    }
                    last = r.objective;
                }
                Err(SettlementError::Infeasible(_)) => {
                    if !infeasible {
                        infeasible_runs += 1;
                    }
                    infeasible = true;
                }
                Err(e) => problems.push(format!("instance {n}: {e}")),
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "50 instances, {infeasible_runs} reach infeasibility along the floor grid; {}",
            if problems.is_empty() { "no violations".to_string() } else { problems.join("; ") }
        ),
    )
}

fn wasteless() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let series: MeterSeries<f64> = random_series(&mut rng, 8, 5);
        let contracts = random_contracts(&mut rng, &series, 0.0);
        let keys = proportional_dynamic_keys(&series);
        let r = settle(&series, &contracts, &keys, &SettleOptions::default()).expect("settles");
        for t in 0..8 {
            let (c, p) = series.totals(t);
            let v: f64 = r.verified.row(t).iter().sum();
            worst = worst.max((v - c.min(p)).abs());
        }
    }
    outcome(worst <= 1e-7, format!("50 instances, largest |Σv − min(ΣCⁿ, ΣPⁿ)| {worst:.2e}"))
}

fn pointwise_savings() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    let mut lines = 0;
    let mut saved = 0.0;
    for n in 0..50 {
        let series: MeterSeries<f64> = random_series(&mut rng, 6, 5);
        let contracts = if n % 10 == 0 {
            // Local prices equal to retail: trading is neutral.
            Contracts::uniform(&series, Prices::from_mwh(220.0, 60.0, 220.0, 60.0, 0.1), 1.0, 0.0).expect("valid")
        } else {
            let x = rng.gen_range(0.0..=1.0);
            random_contracts(&mut rng, &series, x)
        };
        let keys = common::keys_for(&series, [Keys::Uniform, Keys::Static, Keys::Dynamic][n % 3]);
        let r = settle(&series, &contracts, &keys, &SettleOptions::default()).expect("settles");
        let community = bill(&series, &contracts, &r).expect("bills");
        let baseline = baseline_bill(&series, &contracts);
        for (a, b) in community.lines().iter().zip(baseline.lines()) {
            worst = worst.max(a.net() - b.net());
            lines += 1;
        }
        saved += baseline.total() - community.total();
    }
    // Only rounding in the bill arithmetic is tolerated.
    outcome(
        worst <= 1e-12,
        format!("{lines} bill lines, largest excess over retail {worst:.2e} €, total saved {saved:.4} €"),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn redistribution() -> Outcome {
    let s: MeterSeries<f64> = synthetic_community(&CommunitySpec::new(96 * 14, 24, 2017));
    let k = proportional_static_keys(&s).expect("keys");
    let c = Contracts::uniform(&s, Prices::reference(), 1.0, 0.0).expect("contracts");
    let opts = SettleOptions::default();
    let free = settle(&s, &c, &k, &opts).expect("settles without floors");
    let spread = free.ssr.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - free.ssr.iter().cloned().fold(f64::INFINITY, f64::min);
    let search = max_uniform_ssr(&s, &c, &k, 1e-4, &opts).expect("search runs");
    let at = settle(&s, &c.with_uniform_floor(search.floor), &k, &opts);
    let above = settle(&s, &c.with_uniform_floor(search.floor + 1e-4), &k, &opts);
    let Ok(at) = at else {
        return outcome(false, format!("s* = {:.4} is not feasible", search.floor));
    };
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let raised = min(&at.ssr) > min(&free.ssr) + 1e-6;
    let costlier = at.objective >= free.objective - 1e-9;
    let infeasible_above = matches!(above, Err(SettlementError::Infeasible(_)));
    outcome(
        raised && costlier && infeasible_above && search.infeasible_at.is_some(),
        format!(
            "s* = {:.4} after {} probes; ssr spread {:.3}; min ssr {:.4} -> {:.4}; mean ssr {:.4} -> {:.4}; objective {:.4} -> {:.4} €; infeasible at s*+1e-4: {infeasible_above}",
            search.floor,
            search.probes,
            spread,
            min(&free.ssr),
            min(&at.ssr),
            mean(&free.ssr),
            mean(&at.ssr),
            free.objective,
            at.objective
        ),
    )
}

fn performance() -> Outcome {
    let mut decomposed = BenchConfig::new(2880, 100);
    decomposed.options = SettleOptions::default().with_strategy(SolveStrategy::Decomposed);
    let d = run_bench(&decomposed).expect("decomposed bench runs");
    let d_secs = d.build_seconds + d.solve_seconds;

    let mut full = BenchConfig::new(2880, 100);
    full.floors = FloorPlan::Priority(0.25);
    let f = run_bench(&full).expect("coupled bench runs");
    let f_secs = f.build_seconds + f.solve_seconds;
    let pass = d_secs <= 30.0 && f_secs <= 240.0 && f.binding_floors > 0;
    outcome(
        pass,
        format!(
            "full model {} rows x {} columns; decomposed {d_secs:.1} s; with {} binding floors ({:?}) {f_secs:.1} s plus {:.1} s to derive the floors",
            f.rows, f.columns, f.binding_floors, f.strategy, f.setup_seconds
        ),
    )
}

fn random_lp(rng: &mut ChaCha8Rng) -> LpModel<f64> {
    let n = rng.gen_range(1..=8);
    let m = rng.gen_range(1..=8);
    let mut model = LpModel::new();
    let vars: Vec<_> = (0..n)
        .map(|j| {
            let lo = rng.gen_range(-5..=0) as f64;
            let width = rng.gen_range(0..=10) as f64;
            let cost = rng.gen_range(-5..=5) as f64;
            model.add_variable(format!("x{j}"), lo, lo + width, cost).expect("variable")
        })
        .collect();
    for _ in 0..m {
        let row: Vec<_> = vars
            .iter()
            .filter_map(|&v| {
                let a = rng.gen_range(-5i32..=5);
                (a != 0).then_some((v, a as f64))
            })
            .collect();
        if row.is_empty() {
            continue;
        }
        let rel = [Relation::Le, Relation::Eq, Relation::Ge][rng.gen_range(0..3)];
        model.add_constraint(&row, rel, rng.gen_range(-10..=10) as f64).expect("row");
    }
    model
}

fn solver_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = SolveOptions::default();
    let (mut optimal, mut infeasible) = (0, 0);
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for n in 0..500 {
        let model = random_lp(&mut rng);
        let a = solve(&model, &opts).expect("solves");
        let b = solve(&model, &opts).expect("solves");
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if a.status != b.status || bits(&a.values) != bits(&b.values) || a.objective.to_bits() != b.objective.to_bits() {
            problems.push(format!("{n}: repeated solves differ"));
        }
        match vertex_minimum(&model) {
            None if a.status == Status::Infeasible => infeasible += 1,
            Some((obj, _)) if a.status == Status::Optimal => {
                optimal += 1;
                worst = worst.max((a.objective - obj).abs());
                if (a.objective - obj).abs() > 1e-6 {
                    problems.push(format!("{n}: objective {} vs {obj}", a.objective));
                }
            }
            reference => problems.push(format!("{n}: status {:?} vs reference {:?}", a.status, reference.map(|r| r.0))),
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "500 programs ({optimal} optimal, {infeasible} infeasible), largest objective error {worst:.1e}, repeats bit-identical{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}
