//! Cheap reductions applied before the simplex: fixed columns are substituted
//! out and singleton rows become column bounds. Repeated to a fixpoint.

use crate::model::LpModel;
use crate::Scalar;

/// Column-compressed problem `min cᵀx` s.t. `row_lo ≤ A x ≤ row_hi`, `lo ≤ x ≤ hi`.
#[derive(Debug, Clone)]
pub(crate) struct Reduced<F> {
    pub n: usize,
    pub m: usize,
    pub col_start: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub col_val: Vec<F>,
    pub lower: Vec<F>,
    pub upper: Vec<F>,
    pub cost: Vec<F>,
    pub row_lo: Vec<F>,
    pub row_hi: Vec<F>,
    /// Reduced column → model variable.
    pub col_map: Vec<usize>,
    /// Reduced row → model row.
    pub row_map: Vec<usize>,
    /// Values of columns removed as fixed, by model variable.
    pub fixed: Vec<Option<F>>,
}

impl<F: Scalar> Reduced<F> {
    pub fn rows_removed(&self, model: &LpModel<F>) -> bool {
        self.m != model.num_rows()
    }

    pub fn is_identity(&self, model: &LpModel<F>) -> bool {
        self.m == model.num_rows() && self.n == model.num_vars()
    }

    /// Expands a reduced solution to model variables.
    pub fn postsolve(&self, x: &[F]) -> Vec<F> {
        let mut out: Vec<F> = self.fixed.iter().map(|v| v.unwrap_or_default()).collect();
        for (k, &j) in self.col_map.iter().enumerate() {
            out[j] = x[k];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PresolveInfeasible;

/// Builds the problem without any reductions.
pub(crate) fn identity<F: Scalar>(model: &LpModel<F>) -> Reduced<F> {
    let n = model.num_vars();
    let m = model.num_rows();
    let keep_cols = vec![true; n];
    let keep_rows = vec![true; m];
    let (row_lo, row_hi): (Vec<F>, Vec<F>) = model
        .cons()
        .map(|c| model.relation(c).row_bounds(model.rhs(c)))
        .unzip();
    assemble(
        model,
        &keep_cols,
        &keep_rows,
        model.lower_bounds().to_vec(),
        model.upper_bounds().to_vec(),
        row_lo,
        row_hi,
        vec![None; n],
    )
}

pub(crate) fn presolve<F: Scalar>(
    model: &LpModel<F>,
    tol: F,
) -> Result<Reduced<F>, PresolveInfeasible> {
    let n = model.num_vars();
    let m = model.num_rows();
    let mut lo = model.lower_bounds().to_vec();
    let mut hi = model.upper_bounds().to_vec();
    let (mut rlo, mut rhi): (Vec<F>, Vec<F>) = model
        .cons()
        .map(|c| model.relation(c).row_bounds(model.rhs(c)))
        .unzip();

    // Column-wise adjacency for propagation.
    let mut col_count = vec![0usize; n + 1];
    for con in model.cons() {
        for &j in model.row(con).0 {
            col_count[j + 1] += 1;
        }
    }
    for j in 0..n {
        col_count[j + 1] += col_count[j];
    }
    let col_start = col_count;
    let mut fill = col_start.clone();
    let mut col_rows = vec![0usize; model.num_nonzeros()];
    let mut col_coef = vec![F::zero(); model.num_nonzeros()];
    for con in model.cons() {
        let (idx, val) = model.row(con);
        for (&j, &a) in idx.iter().zip(val) {
            col_rows[fill[j]] = con.index();
            col_coef[fill[j]] = a;
            fill[j] += 1;
        }
    }

    let mut fixed: Vec<Option<F>> = vec![None; n];
    let mut live_count: Vec<usize> = model
        .cons()
        .map(|c| {
            let (_, val) = model.row(c);
            val.iter().filter(|a| **a != F::zero()).count()
        })
        .collect();
    let mut row_dead = vec![false; m];
    let mut queue: Vec<usize> = (0..m).rev().collect();

    let fix_col = |j: usize,
                   v: F,
                   fixed: &mut Vec<Option<F>>,
                   rlo: &mut Vec<F>,
                   rhi: &mut Vec<F>,
                   live_count: &mut Vec<usize>,
                   queue: &mut Vec<usize>| {
        fixed[j] = Some(v);
        for k in col_start[j]..col_start[j + 1] {
            let (r, a) = (col_rows[k], col_coef[k]);
            if a == F::zero() {
                continue;
            }
            rlo[r] -= a * v;
            rhi[r] -= a * v;
            live_count[r] -= 1;
            queue.push(r);
        }
    };

    for j in 0..n {
        if lo[j] == hi[j] {
            fix_col(
                j,
                lo[j],
                &mut fixed,
                &mut rlo,
                &mut rhi,
                &mut live_count,
                &mut queue,
            );
        }
    }

    while let Some(r) = queue.pop() {
        if row_dead[r] {
            continue;
        }
        match live_count[r] {
            0 => {
                if rlo[r] > tol || rhi[r] < -tol {
                    return Err(PresolveInfeasible);
                }
                row_dead[r] = true;
            }
            1 => {
                let con = crate::model::Con(r);
                let (idx, val) = model.row(con);
                let Some((j, a)) = idx
                    .iter()
                    .zip(val)
                    .find(|(j, a)| fixed[**j].is_none() && **a != F::zero())
                    .map(|(j, a)| (*j, *a))
                else {
                    continue;
                };
                let (blo, bhi) = if a > F::zero() {
                    (rlo[r] / a, rhi[r] / a)
                } else {
                    (rhi[r] / a, rlo[r] / a)
                };
                if blo > lo[j] {
                    lo[j] = blo;
                }
                if bhi < hi[j] {
                    hi[j] = bhi;
                }
                row_dead[r] = true;
                if lo[j] > hi[j] + tol {
                    return Err(PresolveInfeasible);
                }
                if lo[j] >= hi[j] {
                    let v = if lo[j].is_finite() { lo[j] } else { hi[j] };
                    hi[j] = v;
                    lo[j] = v;
                    fix_col(
                        j,
                        v,
                        &mut fixed,
                        &mut rlo,
                        &mut rhi,
                        &mut live_count,
                        &mut queue,
                    );
                }
            }
            _ => {}
        }
    }

    let keep_cols: Vec<bool> = fixed.iter().map(Option::is_none).collect();
    let keep_rows: Vec<bool> = row_dead.iter().map(|d| !d).collect();
    Ok(assemble(
        model, &keep_cols, &keep_rows, lo, hi, rlo, rhi, fixed,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble<F: Scalar>(
    model: &LpModel<F>,
    keep_cols: &[bool],
    keep_rows: &[bool],
    lo: Vec<F>,
    hi: Vec<F>,
    rlo: Vec<F>,
    rhi: Vec<F>,
    fixed: Vec<Option<F>>,
) -> Reduced<F> {
    let n_all = model.num_vars();
    let mut new_col = vec![usize::MAX; n_all];
    let mut col_map = Vec::new();
    for j in 0..n_all {
        if keep_cols[j] {
            new_col[j] = col_map.len();
            col_map.push(j);
        }
    }
    let mut row_map = Vec::new();
    let mut counts = vec![0usize; col_map.len() + 1];
    for con in model.cons() {
        if !keep_rows[con.index()] {
            continue;
        }
        row_map.push(con.index());
        for &j in model.row(con).0 {
            if keep_cols[j] {
                counts[new_col[j] + 1] += 1;
            }
        }
    }
    for k in 0..col_map.len() {
        counts[k + 1] += counts[k];
    }
    let nnz = counts[col_map.len()];
    let mut fill = counts.clone();
    let mut col_idx = vec![0usize; nnz];
    let mut col_val = vec![F::zero(); nnz];
    for (new_r, &r) in row_map.iter().enumerate() {
        let (idx, val) = model.row(crate::model::Con(r));
        for (&j, &a) in idx.iter().zip(val) {
            if keep_cols[j] && a != F::zero() {
                let c = new_col[j];
                col_idx[fill[c]] = new_r;
                col_val[fill[c]] = a;
                fill[c] += 1;
            }
        }
    }
    // Zero coefficients were skipped; compact the column ranges.
    let mut start = vec![0usize; col_map.len() + 1];
    let mut w = 0;
    for c in 0..col_map.len() {
        for k in counts[c]..fill[c] {
            col_idx[w] = col_idx[k];
            col_val[w] = col_val[k];
            w += 1;
        }
        start[c + 1] = w;
    }
    col_idx.truncate(w);
    col_val.truncate(w);

    Reduced {
        n: col_map.len(),
        m: row_map.len(),
        col_start: start,
        col_idx,
        col_val,
        lower: col_map.iter().map(|&j| lo[j]).collect(),
        upper: col_map.iter().map(|&j| hi[j]).collect(),
        cost: col_map.iter().map(|&j| model.costs()[j]).collect(),
        row_lo: row_map.iter().map(|&r| rlo[r]).collect(),
        row_hi: row_map.iter().map(|&r| rhi[r]).collect(),
        col_map,
        row_map,
        fixed,
    }
}
