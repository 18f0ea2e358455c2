//! Real scalar abstraction shared by the dense linear-algebra layer.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the quantum-object layer is generic over: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync {
    /// Absolute tolerance used for Hermiticity and positivity checks on
    /// internally constructed objects.
    const STRUCTURE_TOL: f64;

    /// Converts an `f64` literal. Panics only on non-finite input.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn structure_tol() -> Self {
        Self::lit(Self::STRUCTURE_TOL)
    }
}

impl Scalar for f32 {
    const STRUCTURE_TOL: f64 = 1e-4;
}

impl Scalar for f64 {
    const STRUCTURE_TOL: f64 = 1e-9;
}
