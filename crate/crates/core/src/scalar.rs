use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the working
/// precision live here so that solvers and certificates stay meaningful in
/// single precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short type name used in summaries.
    const NAME: &'static str;

    /// Default tolerance on KKT residuals of the small QP solvers.
    fn kkt_tol() -> Self;

    /// Two margins closer than this are treated as tied.
    fn tie_tol() -> Self;

    /// Gradient-norm stopping threshold for Newton solves.
    fn grad_tol() -> Self;

    /// Literal conversion; every `f64` constant used by the core is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal converts to scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn kkt_tol() -> Self {
        1e-10
    }

    fn tie_tol() -> Self {
        1e-9
    }

    fn grad_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn kkt_tol() -> Self {
        2e-5
    }

    fn tie_tol() -> Self {
        1e-4
    }

    fn grad_tol() -> Self {
        1e-4
    }
}
