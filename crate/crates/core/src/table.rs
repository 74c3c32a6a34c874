use keyshare_lp::Scalar;

/// Dense `periods × members` table stored period-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodTable<F> {
    periods: usize,
    members: usize,
    data: Vec<F>,
}

impl<F: Scalar> PeriodTable<F> {
    pub fn zeros(periods: usize, members: usize) -> Self {
        Self {
            periods,
            members,
            data: vec![F::zero(); periods * members],
        }
    }

    /// Panics when `data.len() != periods * members`.
    pub fn from_vec(periods: usize, members: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), periods * members, "table shape mismatch");
        Self {
            periods,
            members,
            data,
        }
    }

    pub fn from_fn(periods: usize, members: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(periods * members);
        for t in 0..periods {
            for i in 0..members {
                data.push(f(t, i));
            }
        }
        Self {
            periods,
            members,
            data,
        }
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> F {
        self.data[t * self.members + i]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, v: F) {
        self.data[t * self.members + i] = v;
    }

    pub fn row(&self, t: usize) -> &[F] {
        &self.data[t * self.members..(t + 1) * self.members]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [F] {
        &mut self.data[t * self.members..(t + 1) * self.members]
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn row_sum(&self, t: usize) -> F {
        self.row(t).iter().copied().sum()
    }

    pub fn column_sum(&self, i: usize) -> F {
        (0..self.periods).map(|t| self.get(t, i)).sum()
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            periods: self.periods,
            members: self.members,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), F::max)
    }
}
