//! Exhaustive vertex enumeration for tiny, fully bounded models.
//!
//! Every vertex of `{x : rows hold, lo ≤ x ≤ hi}` has each column either at a
//! bound or determined by a square set of active rows. All such systems are
//! solved densely and the feasible point of least cost is kept. Used only as a
//! reference in tests.

use crate::model::{LpModel, Relation};

const FEAS_TOL: f64 = 1e-9;

/// Optimal objective (with offset) and a minimizing vertex, or `None` when the
/// model is infeasible. Panics if a column has an infinite bound or the model
/// has more than 12 columns.
pub fn vertex_minimum(model: &LpModel<f64>) -> Option<(f64, Vec<f64>)> {
    let n = model.num_vars();
    assert!(n <= 12, "vertex enumeration is limited to 12 columns");
    let bounds: Vec<(f64, f64)> = model.vars().map(|v| model.bounds(v)).collect();
    assert!(
        bounds.iter().all(|(l, u)| l.is_finite() && u.is_finite()),
        "vertex enumeration needs finite bounds"
    );
    let rows: Vec<(Vec<f64>, Relation, f64)> = model
        .cons()
        .map(|c| {
            let mut dense = vec![0.0; n];
            let (idx, val) = model.row(c);
            for (&j, &a) in idx.iter().zip(val) {
                dense[j] = a;
            }
            (dense, model.relation(c), model.rhs(c))
        })
        .collect();
    let equalities: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].1 == Relation::Eq)
        .collect();
    let inequalities: Vec<usize> = (0..rows.len())
        .filter(|&r| rows[r].1 != Relation::Eq)
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut states = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&j| states[j] == 2).collect();
        let valid = (0..n).all(|j| states[j] != 1 || bounds[j].0 != bounds[j].1);
        if valid && free.len() >= equalities.len() {
            let need = free.len() - equalities.len();
            for subset in combinations(inequalities.len(), need) {
                let active: Vec<usize> = equalities
                    .iter()
                    .copied()
                    .chain(subset.iter().map(|&k| inequalities[k]))
                    .collect();
                if let Some(x) = solve_active(&rows, &bounds, &states, &free, &active) {
                    if feasible(&rows, &bounds, &x) {
                        let obj = model.objective_value(&x);
                        if best.as_ref().is_none_or(|b| obj < b.0) {
                            best = Some((obj, x));
                        }
                    }
                }
            }
        }
        // Next state assignment in base 3.
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            states[j] += 1;
            if states[j] < 3 {
                break;
            }
            states[j] = 0;
            j += 1;
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_active(
    rows: &[(Vec<f64>, Relation, f64)],
    bounds: &[(f64, f64)],
    states: &[u8],
    free: &[usize],
    active: &[usize],
) -> Option<Vec<f64>> {
    let n = bounds.len();
    let mut x = vec![0.0; n];
    for j in 0..n {
        match states[j] {
            0 => x[j] = bounds[j].0,
            1 => x[j] = bounds[j].1,
            _ => {}
        }
    }
    let k = free.len();
    if k == 0 {
        return Some(x);
    }
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, &r) in active.iter().enumerate() {
        let (coef, _, rhs) = &rows[r];
        let mut b = *rhs;
        for j in 0..n {
            if states[j] != 2 {
                b -= coef[j] * x[j];
            }
        }
        for (c, &j) in free.iter().enumerate() {
            a[i][c] = coef[j];
        }
        a[i][k] = b;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    for (c, &j) in free.iter().enumerate() {
        x[j] = a[c][k] / a[c][c];
    }
    Some(x)
}

fn feasible(rows: &[(Vec<f64>, Relation, f64)], bounds: &[(f64, f64)], x: &[f64]) -> bool {
    let in_bounds = x
        .iter()
        .zip(bounds)
        .all(|(&v, &(l, u))| v >= l - FEAS_TOL && v <= u + FEAS_TOL);
    in_bounds
        && rows.iter().all(|(coef, rel, rhs)| {
            let act: f64 = coef.iter().zip(x).map(|(a, v)| a * v).sum();
            match rel {
                Relation::Le => act <= rhs + FEAS_TOL,
                Relation::Ge => act >= rhs - FEAS_TOL,
                Relation::Eq => (act - rhs).abs() <= FEAS_TOL,
            }
        })
}
