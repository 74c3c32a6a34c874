use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solver and the settlement engine are generic over.
///
/// The tolerances are absolute and sized for problems whose data are O(1).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Primal feasibility and reduced-cost tolerance.
    fn default_tolerance() -> Self;

    /// Smallest pivot magnitude accepted in the ratio test.
    fn ratio_pivot_tolerance() -> Self;

    /// Pivot magnitude below which a freshly refactorized basis is declared broken.
    fn breakdown_tolerance() -> Self;

    /// Entries below this magnitude are treated as structurally zero by the LU.
    fn drop_tolerance() -> Self;

    /// Converts an `f64` literal. Panics only on unrepresentable input, which
    /// cannot happen for the finite constants used in this workspace.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn default_tolerance() -> Self {
        1e-7
    }
    fn ratio_pivot_tolerance() -> Self {
        1e-9
    }
    fn breakdown_tolerance() -> Self {
        1e-10
    }
    fn drop_tolerance() -> Self {
        1e-13
    }
}

impl Scalar for f32 {
    fn default_tolerance() -> Self {
        1e-4
    }
    fn ratio_pivot_tolerance() -> Self {
        1e-5
    }
    fn breakdown_tolerance() -> Self {
        1e-6
    }
    fn drop_tolerance() -> Self {
        1e-7
    }
}
