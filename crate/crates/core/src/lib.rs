//! Construction, optimization and statistical certification of nonprojective
//! qudit measurements realized by multiport beamsplitters.
//!
//! The dense linear-algebra layer ([`linalg`]) is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix it to `f64`, which is what the
//! optimization and statistics modules use.

pub mod builtin;
pub mod error;
pub mod game;
pub mod linalg;
pub mod mbs;
pub mod moments;
pub mod photonics;
pub mod random;
pub mod scalar;
pub mod sdp;
pub mod seesaw;
pub mod serial;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Complex64 = num_complex::Complex<f64>;
pub type ComplexMatrix = linalg::CMatrix<f64>;
pub type ComplexVector = linalg::CVector<f64>;
pub type Ket = linalg::Ket<f64>;
pub type Povm = linalg::Povm<f64>;

pub type ComplexMatrix32 = linalg::CMatrix<f32>;
pub type Ket32 = linalg::Ket<f32>;
pub type Povm32 = linalg::Povm<f32>;
