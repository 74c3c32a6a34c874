use keyshare_lp::vertex::vertex_minimum;
use keyshare_lp::{solve, LpModel, Relation, SolveOptions, Status};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Spec {
    vars: Vec<(i32, i32, i32)>,
    rows: Vec<(Vec<i32>, u8, i32)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(n, m)| {
        let vars = proptest::collection::vec((-5i32..=0, 0i32..=10, -5i32..=5), n);
        let rows = proptest::collection::vec(
            (proptest::collection::vec(-5i32..=5, n), 0u8..3, -10i32..=10),
            m,
        );
        (vars, rows).prop_map(|(vars, rows)| Spec { vars, rows })
    })
}

fn build(spec: &Spec, cost_scale: f64) -> LpModel<f64> {
    let mut m = LpModel::new();
    let vars: Vec<_> = spec
        .vars
        .iter()
        .enumerate()
        .map(|(j, &(lo, width, c))| {
            m.add_variable(
                format!("x{j}"),
                lo as f64,
                (lo + width) as f64,
                c as f64 * cost_scale,
            )
            .unwrap()
        })
        .collect();
    for (coefs, rel, rhs) in &spec.rows {
        let row: Vec<_> = vars
            .iter()
            .zip(coefs)
            .filter(|(_, &a)| a != 0)
            .map(|(&v, &a)| (v, a as f64))
            .collect();
        if row.is_empty() {
            continue;
        }
        let rel = [Relation::Le, Relation::Eq, Relation::Ge][*rel as usize];
        m.add_constraint(&row, rel, *rhs as f64).unwrap();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_vertex_enumeration(spec in spec(), presolve in any::<bool>()) {
        let model = build(&spec, 1.0);
        let mut opts = SolveOptions::default();
        opts.presolve = presolve;
        let sol = solve(&model, &opts).unwrap();
        match vertex_minimum(&model) {
            None => prop_assert_eq!(sol.status, Status::Infeasible),
            Some((obj, _)) => {
                prop_assert_eq!(sol.status, Status::Optimal);
                prop_assert!((sol.objective - obj).abs() <= 1e-6, "{} vs {}", sol.objective, obj);
                prop_assert!(model.max_row_violation(&sol.values) <= 1e-7);
                prop_assert!(model.max_bound_violation(&sol.values) <= 1e-7);
            }
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical(spec in spec()) {
        let model = build(&spec, 1.0);
        let opts = SolveOptions::default();
        let a = solve(&model, &opts).unwrap();
        let b = solve(&model, &opts).unwrap();
        prop_assert_eq!(a.status, b.status);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.values), bits(&b.values));
    }

    #[test]
    fn objective_scaling_keeps_the_argmin(spec in spec(), k in -3i32..=6) {
        let scale = 2f64.powi(k);
        let base = build(&spec, 1.0);
        let scaled = build(&spec, scale);
        let opts = SolveOptions::default();
        let a = solve(&base, &opts).unwrap();
        let b = solve(&scaled, &opts).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == Status::Optimal {
            prop_assert_eq!(&a.values, &b.values);
            let rel = (b.objective - scale * a.objective).abs() / (1.0 + (scale * a.objective).abs());
            prop_assert!(rel <= 1e-9);
        }
    }
}
