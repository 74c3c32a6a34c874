use thiserror::Error;

use crate::Scalar;

/// Handle to a model column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a model row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Con(pub(crate) usize);

impl Con {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    /// Row activity interval `[lo, hi]` for a right-hand side.
    pub fn row_bounds<F: Scalar>(self, rhs: F) -> (F, F) {
        match self {
            Relation::Le => (F::neg_infinity(), rhs),
            Relation::Eq => (rhs, rhs),
            Relation::Ge => (rhs, F::infinity()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("constraint row is empty")]
    EmptyRow,
    #[error("constraint references unknown variable #{0}")]
    UnknownVariable(usize),
    #[error("variable `{0}` appears more than once in a row")]
    DuplicateVariable(String),
}

/// Sparse linear program `min cᵀx + offset` subject to row relations and
/// column bounds. Rows are stored contiguously in insertion order.
#[derive(Clone, Debug)]
pub struct LpModel<F> {
    names: Vec<String>,
    lower: Vec<F>,
    upper: Vec<F>,
    cost: Vec<F>,
    offset: F,
    row_start: Vec<usize>,
    row_var: Vec<usize>,
    row_coef: Vec<F>,
    relation: Vec<Relation>,
    rhs: Vec<F>,
}

impl<F: Scalar> Default for LpModel<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> LpModel<F> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            cost: Vec::new(),
            offset: F::zero(),
            row_start: vec![0],
            row_var: Vec::new(),
            row_coef: Vec::new(),
            relation: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_capacity(vars: usize, rows: usize, nonzeros: usize) -> Self {
        let mut model = Self::new();
        model.names.reserve(vars);
        model.lower.reserve(vars);
        model.upper.reserve(vars);
        model.cost.reserve(vars);
        model.row_start.reserve(rows);
        model.relation.reserve(rows);
        model.rhs.reserve(rows);
        model.row_var.reserve(nonzeros);
        model.row_coef.reserve(nonzeros);
        model
    }

    /// Registers a column with bounds `[lo, hi]` (either may be infinite
    /// on its own side) and objective coefficient `cost`.
    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lo: F,
        hi: F,
        cost: F,
    ) -> Result<Var, ModelError> {
        let name = name.into();
        if lo.is_nan() || hi.is_nan() || lo == F::infinity() || hi == F::neg_infinity() {
            return Err(ModelError::NonFinite(format!("bounds of `{name}`")));
        }
        if !cost.is_finite() {
            return Err(ModelError::NonFinite(format!("cost of `{name}`")));
        }
        if lo > hi {
            return Err(ModelError::InvalidBounds {
                name,
                lower: lo.as_f64(),
                upper: hi.as_f64(),
            });
        }
        self.names.push(name);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.push(cost);
        Ok(Var(self.names.len() - 1))
    }

    /// Appends the row `Σ coef·var  (relation)  rhs`.
    pub fn add_constraint(
        &mut self,
        row: &[(Var, F)],
        relation: Relation,
        rhs: F,
    ) -> Result<Con, ModelError> {
        if row.is_empty() {
            return Err(ModelError::EmptyRow);
        }
        if !rhs.is_finite() {
            return Err(ModelError::NonFinite("right-hand side".into()));
        }
        for &(var, coef) in row {
            if var.0 >= self.names.len() {
                return Err(ModelError::UnknownVariable(var.0));
            }
            if !coef.is_finite() {
                return Err(ModelError::NonFinite(format!(
                    "coefficient of `{}`",
                    self.names[var.0]
                )));
            }
        }
        let mut seen: Vec<usize> = row.iter().map(|(v, _)| v.0).collect();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateVariable(self.names[w[0]].clone()));
        }
        for &(var, coef) in row {
            self.row_var.push(var.0);
            self.row_coef.push(coef);
        }
        self.row_start.push(self.row_var.len());
        self.relation.push(relation);
        self.rhs.push(rhs);
        Ok(Con(self.relation.len() - 1))
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.relation.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.row_var.len()
    }

    pub fn var_name(&self, var: Var) -> &str {
        &self.names[var.0]
    }

    pub fn bounds(&self, var: Var) -> (F, F) {
        (self.lower[var.0], self.upper[var.0])
    }

    pub fn cost(&self, var: Var) -> F {
        self.cost[var.0]
    }

    pub fn set_cost(&mut self, var: Var, cost: F) {
        self.cost[var.0] = cost;
    }

    pub fn set_bounds(&mut self, var: Var, lo: F, hi: F) -> Result<(), ModelError> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(ModelError::InvalidBounds {
                name: self.names[var.0].clone(),
                lower: lo.as_f64(),
                upper: hi.as_f64(),
            });
        }
        self.lower[var.0] = lo;
        self.upper[var.0] = hi;
        Ok(())
    }

    pub fn set_rhs(&mut self, con: Con, rhs: F) {
        self.rhs[con.0] = rhs;
    }

    /// Constant added to every reported objective value.
    pub fn objective_offset(&self) -> F {
        self.offset
    }

    pub fn set_objective_offset(&mut self, offset: F) {
        self.offset = offset;
    }

    pub fn relation(&self, con: Con) -> Relation {
        self.relation[con.0]
    }

    pub fn rhs(&self, con: Con) -> F {
        self.rhs[con.0]
    }

    /// Column indices and coefficients of one row.
    pub fn row(&self, con: Con) -> (&[usize], &[F]) {
        let range = self.row_start[con.0]..self.row_start[con.0 + 1];
        (&self.row_var[range.clone()], &self.row_coef[range])
    }

    pub(crate) fn lower_bounds(&self) -> &[F] {
        &self.lower
    }

    pub(crate) fn upper_bounds(&self) -> &[F] {
        &self.upper
    }

    pub(crate) fn costs(&self) -> &[F] {
        &self.cost
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.num_vars()).map(Var)
    }

    pub fn cons(&self) -> impl Iterator<Item = Con> {
        (0..self.num_rows()).map(Con)
    }

    /// Row activity `Σ coef·x` for a full column assignment.
    pub fn row_activity(&self, con: Con, x: &[F]) -> F {
        let (idx, val) = self.row(con);
        idx.iter().zip(val).map(|(&j, &a)| a * x[j]).sum()
    }

    /// `cᵀx + offset`.
    pub fn objective_value(&self, x: &[F]) -> F {
        self.cost.iter().zip(x).map(|(&c, &v)| c * v).sum::<F>() + self.offset
    }

    /// Largest violation of any row relation by `x`.
    pub fn max_row_violation(&self, x: &[F]) -> F {
        self.cons()
            .map(|con| {
                let act = self.row_activity(con, x);
                let (lo, hi) = self.relation(con).row_bounds(self.rhs(con));
                (lo - act).max(act - hi).max(F::zero())
            })
            .fold(F::zero(), F::max)
    }

    /// Largest violation of any column bound by `x`.
    pub fn max_bound_violation(&self, x: &[F]) -> F {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(F::zero()))
            .fold(F::zero(), F::max)
    }
}
