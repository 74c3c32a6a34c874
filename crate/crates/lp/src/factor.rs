//! Sparse LU factorization of the simplex basis with a product-form eta file
//! for the updates between refactorizations.
//!
//! Pivots are chosen by Markowitz cost with threshold partial pivoting;
//! singleton rows and columns are taken first, which covers nearly all of the
//! basis for the network-like rows produced by the settlement models.

use crate::Scalar;

/// Relative threshold for accepting a pivot against the largest entry of its column.
const THRESHOLD: f64 = 0.01;
/// Number of candidate columns examined per Markowitz search.
const SEARCH_COLUMNS: usize = 4;

/// The basis could not be fully factorized. Positions and rows that were left
/// without a pivot are reported so the caller can patch in logical columns.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Factor<F> {
    m: usize,
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<F>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<F>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<F>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<F>,
    eta_start: Vec<usize>,
    eta_idx: Vec<usize>,
    eta_val: Vec<F>,
    work: Vec<F>,
}

struct Active<F> {
    rows: Vec<Vec<(usize, F)>>,
    cols: Vec<Vec<usize>>,
    col_count: Vec<usize>,
    row_alive: Vec<bool>,
    col_alive: Vec<bool>,
    col_bucket: Vec<Vec<usize>>,
    row_bucket: Vec<Vec<usize>>,
}

impl<F: Scalar> Active<F> {
    fn value(&self, row: usize, col: usize) -> Option<F> {
        self.rows[row].iter().find(|e| e.0 == col).map(|e| e.1)
    }

    fn column_entries(&self, col: usize, out: &mut Vec<(usize, F)>) {
        out.clear();
        for &r in &self.cols[col] {
            if self.row_alive[r] {
                if let Some(v) = self.value(r, col) {
                    out.push((r, v));
                }
            }
        }
    }

    fn bump_col(&mut self, col: usize) {
        let c = self.col_count[col];
        if c < self.col_bucket.len() {
            self.col_bucket[c].push(col);
        }
    }

    fn bump_row(&mut self, row: usize) {
        let c = self.rows[row].len();
        if c < self.row_bucket.len() {
            self.row_bucket[c].push(row);
        }
    }
}

impl<F: Scalar> Factor<F> {
    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    /// Factorizes the `m × m` matrix whose column `j` holds the entries
    /// `idx[start[j]..start[j+1]]` / `val[..]` (row indices).
    pub fn factorize(
        m: usize,
        start: &[usize],
        idx: &[usize],
        val: &[F],
    ) -> Result<Self, Singular> {
        let drop = F::drop_tolerance();
        let threshold = F::lit(THRESHOLD);
        let mut act = Active {
            rows: vec![Vec::new(); m],
            cols: vec![Vec::new(); m],
            col_count: vec![0; m],
            row_alive: vec![true; m],
            col_alive: vec![true; m],
            col_bucket: vec![Vec::new(); m + 1],
            row_bucket: vec![Vec::new(); m + 1],
        };
        for j in 0..m {
            for k in start[j]..start[j + 1] {
                let v = val[k];
                if v.abs() <= drop {
                    continue;
                }
                let r = idx[k];
                act.rows[r].push((j, v));
                act.cols[j].push(r);
            }
            act.col_count[j] = act.cols[j].len();
        }
        for j in 0..m {
            act.bump_col(j);
        }
        for r in 0..m {
            act.bump_row(r);
        }

        let mut f = Factor {
            m,
            l_start: vec![0],
            u_start: vec![0],
            eta_start: vec![0],
            work: vec![F::zero(); m],
            ..Default::default()
        };
        let mut entries: Vec<(usize, F)> = Vec::new();
        let mut scatter = vec![F::zero(); m];
        let mut in_pivot_row = vec![usize::MAX; m];
        let mut touched = vec![usize::MAX; m];
        let mut stamp = 0usize;

        for step in 0..m {
            let Some((pr, pc)) = Self::choose_pivot(&mut act, &mut entries, threshold, drop)
            else {
                break;
            };
            // U row and pivot.
            let row = std::mem::take(&mut act.rows[pr]);
            let mut pivot = F::zero();
            for &(c, v) in &row {
                if c == pc {
                    pivot = v;
                } else {
                    f.u_idx.push(c);
                    f.u_val.push(v);
                    scatter[c] = v;
                    in_pivot_row[c] = step;
                    act.col_count[c] -= 1;
                    act.bump_col(c);
                }
            }
            f.u_start.push(f.u_idx.len());
            f.piv_row.push(pr);
            f.piv_col.push(pc);
            f.piv_val.push(pivot);
            act.row_alive[pr] = false;
            act.col_alive[pc] = false;

            // Eliminate column pc from the remaining rows.
            let col_rows = std::mem::take(&mut act.cols[pc]);
            for &i in &col_rows {
                if !act.row_alive[i] {
                    continue;
                }
                let Some(pos) = act.rows[i].iter().position(|e| e.0 == pc) else {
                    continue;
                };
                let a_ic = act.rows[i].swap_remove(pos).1;
                let l = a_ic / pivot;
                if l != F::zero() {
                    f.l_idx.push(i);
                    f.l_val.push(l);
                    stamp += 1;
                    for e in act.rows[i].iter_mut() {
                        if in_pivot_row[e.0] == step {
                            e.1 -= l * scatter[e.0];
                            touched[e.0] = stamp;
                        }
                    }
                    let ustart = f.u_start[step];
                    for k in ustart..f.u_idx.len() {
                        let c = f.u_idx[k];
                        if touched[c] != stamp {
                            act.rows[i].push((c, -l * f.u_val[k]));
                            act.cols[c].push(i);
                            act.col_count[c] += 1;
                            act.bump_col(c);
                        }
                    }
                }
                act.bump_row(i);
            }
            f.l_start.push(f.l_idx.len());
        }

        if f.piv_row.len() < m {
            let positions = (0..m).filter(|&j| act.col_alive[j]).collect();
            let rows = (0..m).filter(|&r| act.row_alive[r]).collect();
            return Err(Singular { positions, rows });
        }
        Ok(f)
    }

    fn choose_pivot(
        act: &mut Active<F>,
        entries: &mut Vec<(usize, F)>,
        threshold: F,
        drop: F,
    ) -> Option<(usize, usize)> {
        // Column singletons.
        while let Some(c) = act.col_bucket[1].pop() {
            if !act.col_alive[c] || act.col_count[c] != 1 {
                continue;
            }
            act.column_entries(c, entries);
            if let Some(&(r, v)) = entries.first() {
                if v.abs() > drop {
                    return Some((r, c));
                }
            }
        }
        // Row singletons, subject to the stability threshold.
        while let Some(r) = act.row_bucket[1].pop() {
            if !act.row_alive[r] || act.rows[r].len() != 1 {
                continue;
            }
            let (c, v) = act.rows[r][0];
            if v.abs() <= drop {
                continue;
            }
            act.column_entries(c, entries);
            let cmax = entries.iter().fold(F::zero(), |m, e| m.max(e.1.abs()));
            if v.abs() >= threshold * cmax {
                return Some((r, c));
            }
        }
        // Markowitz search over the sparsest columns.
        let mut best: Option<(usize, usize, usize)> = None;
        let mut searched = 0;
        for cnt in 2..act.col_bucket.len() {
            if act.col_bucket[cnt].is_empty() {
                continue;
            }
            let mut bucket = std::mem::take(&mut act.col_bucket[cnt]);
            bucket.retain(|&c| act.col_alive[c] && act.col_count[c] == cnt);
            bucket.sort_unstable();
            bucket.dedup();
            for &c in &bucket {
                act.column_entries(c, entries);
                let cmax = entries.iter().fold(F::zero(), |m, e| m.max(e.1.abs()));
                if cmax <= drop {
                    continue;
                }
                searched += 1;
                for &(r, v) in entries.iter() {
                    if v.abs() < threshold * cmax || v.abs() <= drop {
                        continue;
                    }
                    let cost = (act.rows[r].len() - 1) * (cnt - 1);
                    if best.is_none_or(|b| cost < b.0) {
                        best = Some((cost, r, c));
                    }
                }
                if searched >= SEARCH_COLUMNS && best.is_some() {
                    break;
                }
            }
            act.col_bucket[cnt] = bucket;
            if let Some(b) = best {
                if searched >= SEARCH_COLUMNS || b.0 <= (cnt - 1) * (cnt - 1) {
                    break;
                }
            }
        }
        best.map(|(_, r, c)| (r, c))
    }

    /// Solves `B x = b` in place: `rhs` enters indexed by row and leaves indexed
    /// by basis position.
    pub fn ftran(&mut self, rhs: &mut [F]) {
        let m = self.m;
        for k in 0..m {
            let br = rhs[self.piv_row[k]];
            if br != F::zero() {
                for e in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_idx[e]] -= self.l_val[e] * br;
                }
            }
        }
        let x = &mut self.work;
        for k in (0..m).rev() {
            let mut s = rhs[self.piv_row[k]];
            for e in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[e] * x[self.u_idx[e]];
            }
            x[self.piv_col[k]] = s / self.piv_val[k];
        }
        rhs.copy_from_slice(x);
        for e in 0..self.eta_pos.len() {
            let p = self.eta_pos[e];
            let xp = rhs[p] / self.eta_piv[e];
            rhs[p] = xp;
            if xp != F::zero() {
                for k in self.eta_start[e]..self.eta_start[e + 1] {
                    rhs[self.eta_idx[k]] -= self.eta_val[k] * xp;
                }
            }
        }
    }

    /// Solves `Bᵀ y = d` in place: `rhs` enters indexed by basis position and
    /// leaves indexed by row.
    pub fn btran(&mut self, rhs: &mut [F]) {
        let m = self.m;
        for e in (0..self.eta_pos.len()).rev() {
            let p = self.eta_pos[e];
            let mut s = rhs[p];
            for k in self.eta_start[e]..self.eta_start[e + 1] {
                s -= self.eta_val[k] * rhs[self.eta_idx[k]];
            }
            rhs[p] = s / self.eta_piv[e];
        }
        let z = &mut self.work;
        for k in 0..m {
            let zr = rhs[self.piv_col[k]] / self.piv_val[k];
            z[self.piv_row[k]] = zr;
            if zr != F::zero() {
                for e in self.u_start[k]..self.u_start[k + 1] {
                    rhs[self.u_idx[e]] -= self.u_val[e] * zr;
                }
            }
        }
        for k in (0..m).rev() {
            let mut s = F::zero();
            for e in self.l_start[k]..self.l_start[k + 1] {
                s += self.l_val[e] * z[self.l_idx[e]];
            }
            z[self.piv_row[k]] -= s;
        }
        rhs.copy_from_slice(z);
    }

    /// Records the basis change at `position` given the FTRAN'd entering column.
    pub fn push_eta(&mut self, position: usize, alpha: &[F]) {
        let drop = F::drop_tolerance();
        self.eta_pos.push(position);
        self.eta_piv.push(alpha[position]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != position && a.abs() > drop {
                self.eta_idx.push(i);
                self.eta_val.push(a);
            }
        }
        self.eta_start.push(self.eta_idx.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_csc(a: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let m = a.len();
        let mut start = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for j in 0..m {
            for (i, row) in a.iter().enumerate() {
                if row[j] != 0.0 {
                    idx.push(i);
                    val.push(row[j]);
                }
            }
            start.push(idx.len());
        }
        (start, idx, val)
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    fn matvec_t(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m).map(|j| (0..m).map(|i| a[i][j] * y[i]).sum()).collect()
    }

    fn sample() -> Vec<Vec<f64>> {
        vec![
            vec![4.0, 0.0, 1.0, 0.0, 2.0],
            vec![1.0, 3.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 5.0, 1.0, 0.0],
            vec![2.0, 0.0, 0.0, 6.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0, 7.0],
        ]
    }

    #[test]
    fn ftran_and_btran_invert_the_matrix() {
        let a = sample();
        let (s, i, v) = dense_to_csc(&a);
        let mut f = Factor::factorize(5, &s, &i, &v).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut b = matvec(&a, &x_true);
        f.ftran(&mut b);
        for (p, q) in b.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut d = matvec_t(&a, &x_true);
        f.btran(&mut d);
        for (p, q) in d.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = sample();
        let (s, i, v) = dense_to_csc(&a);
        let mut f = Factor::factorize(5, &s, &i, &v).unwrap();
        let newcol = [0.0, 2.0, 0.0, 1.0, 3.0];
        let mut alpha: Vec<f64> = newcol.to_vec();
        f.ftran(&mut alpha);
        f.push_eta(2, &alpha);
        for (r, row) in a.iter_mut().enumerate() {
            row[2] = newcol[r];
        }
        let x_true = [0.3, 1.0, -4.0, 2.0, 0.25];
        let mut b = matvec(&a, &x_true);
        f.ftran(&mut b);
        for (p, q) in b.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
        let mut d = matvec_t(&a, &x_true);
        f.btran(&mut d);
        for (p, q) in d.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_columns() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let (s, i, v) = dense_to_csc(&a);
        let err = Factor::factorize(3, &s, &i, &v).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
