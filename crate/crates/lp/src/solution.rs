use crate::model::{Con, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Position of a column or row logical in a simplex basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column held at zero.
    Zero,
}

/// A basis in model coordinates, usable to warm-start a later solve of a
/// model with the same rows (columns may have been appended).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub columns: Vec<VarStatus>,
    pub rows: Vec<VarStatus>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStatistics {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub presolved_rows: usize,
    pub presolved_columns: usize,
    pub iterations: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct LpSolution<F> {
    pub status: Status,
    /// `cᵀx + offset` at `values`; meaningful only when optimal.
    pub objective: F,
    pub values: Vec<F>,
    /// Row multipliers `y` with reduced costs `c − Aᵀy`. Present when the
    /// solve was optimal and presolve removed no rows.
    pub duals: Option<Vec<F>>,
    pub basis: Option<Basis>,
    pub statistics: SolveStatistics,
}

impl<F: Copy> LpSolution<F> {
    pub fn value(&self, var: Var) -> F {
        self.values[var.index()]
    }

    pub fn dual(&self, con: Con) -> Option<F> {
        self.duals.as_ref().map(|d| d[con.index()])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
