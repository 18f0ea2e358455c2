//! Dense complex linear algebra and validated quantum objects (kets, POVMs).
//!
//! Everything here is generic over the real scalar type; the crate root
//! exports `f64` aliases that the rest of the toolkit uses.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Eigenvalues at or below this are excluded from positive-eigenspace projectors.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// Top eigenvalues closer than this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn identity<T: Scalar>(n: usize) -> CMatrix<T> {
    CMatrix::identity(n, n)
}

pub fn require_square<T: Scalar>(a: &CMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Largest entry modulus of `A - A^H`.
pub fn hermiticity_deviation<T: Scalar>(a: &CMatrix<T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm_sqr().sqrt();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

fn max_modulus<T: Scalar>(a: &CMatrix<T>) -> T {
    a.iter()
        .map(|z| z.norm_sqr().sqrt())
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

/// Checks Hermiticity with the structural tolerance, scaled by the entry size
/// for matrices whose entries exceed one.
pub fn require_hermitian<T: Scalar>(a: &CMatrix<T>) -> Result<()> {
    require_square(a)?;
    let scale = T::one().max(max_modulus(a));
    let dev = hermiticity_deviation(a);
    if dev > T::structure_tol() * scale {
        return Err(Error::NonHermitian {
            deviation: dev.as_f64(),
        });
    }
    Ok(())
}

pub fn hermitian_part<T: Scalar>(a: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(T::lit(0.5), T::zero());
    (a + a.adjoint()) * half
}

/// Real part of `tr(A^H B)`, the Frobenius inner product.
pub fn trace_inner<T: Scalar>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + x.re * y.re + x.im * y.im)
}

pub fn outer<T: Scalar>(v: &CVector<T>) -> CMatrix<T> {
    v * v.adjoint()
}

/// `‖A A^H - I‖_F`.
pub fn unitarity_deviation<T: Scalar>(a: &CMatrix<T>) -> Result<T> {
    let n = require_square(a)?;
    Ok((a * a.adjoint() - identity::<T>(n)).norm())
}

/// Spectral decomposition of a Hermitian matrix with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen<T: Scalar> {
    pub values: Vec<T>,
    /// Orthonormal eigenvectors stored as columns, ordered like `values`.
    pub vectors: CMatrix<T>,
}

impl<T: Scalar> Eigen<T> {
    pub fn vector(&self, i: usize) -> CVector<T> {
        self.vectors.column(i).into_owned()
    }

    pub fn reconstruct(&self) -> CMatrix<T> {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (i, &l) in self.values.iter().enumerate() {
            let v = self.vector(i);
            out += outer(&v) * Complex::new(l, T::zero());
        }
        out
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }
}

pub fn hermitian_eigendecomposition<T: Scalar>(a: &CMatrix<T>) -> Result<Eigen<T>> {
    require_hermitian(a)?;
    Ok(eigh_unchecked(&hermitian_part(a)))
}

/// Eigendecomposition without the Hermiticity gate; the caller guarantees `a`
/// is exactly Hermitian.
pub(crate) fn eigh_unchecked<T: Scalar>(a: &CMatrix<T>) -> Eigen<T> {
    let n = a.nrows();
    if n == 0 {
        return Eigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Eigen { values, vectors }
}

pub fn min_eigenvalue<T: Scalar>(a: &CMatrix<T>) -> Result<T> {
    Ok(hermitian_eigendecomposition(a)?.min())
}

/// Projector onto the span of eigenvectors with eigenvalue `> zero_tol`.
///
/// This is the maximizer of `tr(A E)` over `0 <= E <= I`.
pub fn positive_eigenspace_projector<T: Scalar>(a: &CMatrix<T>, zero_tol: T) -> Result<CMatrix<T>> {
    let eig = hermitian_eigendecomposition(a)?;
    let n = a.nrows();
    let mut p = CMatrix::zeros(n, n);
    for (i, &l) in eig.values.iter().enumerate() {
        if l > zero_tol {
            p += outer(&eig.vector(i));
        }
    }
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct TopEigen<T: Scalar> {
    pub ket: Ket<T>,
    pub value: T,
    /// Set when the top eigenvalue is (numerically) degenerate; `ket` is then
    /// one arbitrary unit vector of the top eigenspace.
    pub degenerate: bool,
}

pub fn top_eigenvector<T: Scalar>(a: &CMatrix<T>) -> Result<TopEigen<T>> {
    let eig = hermitian_eigendecomposition(a)?;
    let n = eig.values.len();
    if n == 0 {
        return Err(Error::InvalidDims("empty matrix".into()));
    }
    let value = eig.values[n - 1];
    let degenerate = n > 1 && value - eig.values[n - 2] <= T::lit(DEGENERACY_TOL);
    let ket = Ket::normalize(eig.vector(n - 1))?;
    Ok(TopEigen {
        ket,
        value,
        degenerate,
    })
}

/// Polar factor of `a`: the unitary closest to `a` in Frobenius norm.
pub fn nearest_unitary<T: Scalar>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    require_square(a)?;
    let svd = a.clone().svd(true, true);
    let smallest =
        svd.singular_values
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::one()), |m, v| {
                if v < m {
                    v
                } else {
                    m
                }
            });
    if smallest < T::lit(1e-12) {
        return Err(Error::SingularInput {
            smallest: smallest.as_f64(),
        });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(u * v_t)
}

/// Unit vector in `C^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket<T: Scalar> {
    amps: CVector<T>,
}

impl<T: Scalar> Ket<T> {
    /// Wraps amplitudes that must already have unit norm (within 1e-9 for f64).
    pub fn new(amps: CVector<T>) -> Result<Self> {
        let norm = amps.norm();
        if (norm - T::one()).abs() > T::structure_tol() {
            return Err(Error::NotNormalized {
                norm: norm.as_f64(),
            });
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalize(amps: CVector<T>) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > T::zero()) {
            return Err(Error::NotNormalized {
                norm: norm.as_f64(),
            });
        }
        let inv = Complex::new(T::one() / norm, T::zero());
        Ok(Self { amps: amps * inv })
    }

    pub fn from_slice(amps: &[Complex<T>]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = CVector::zeros(dim);
        amps[index] = Complex::new(T::one(), T::zero());
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector<T> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector<T> {
        self.amps
    }

    pub fn projector(&self) -> CMatrix<T> {
        outer(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket<T>) -> Complex<T> {
        self.amps.dotc(&other.amps)
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Ket<T>) -> T {
        self.inner(other).norm_sqr()
    }

    /// `Re ⟨self|A|self⟩`.
    pub fn expectation(&self, a: &CMatrix<T>) -> T {
        self.amps.dotc(&(a * &self.amps)).re
    }

    pub fn with_phase(&self, theta: T) -> Self {
        let ph = Complex::new(theta.cos(), theta.sin());
        Self {
            amps: &self.amps * ph,
        }
    }
}

/// Ordered list of positive semidefinite operators summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm<T: Scalar> {
    elements: Vec<CMatrix<T>>,
    tolerance: T,
}

impl<T: Scalar> Povm<T> {
    /// Validates Hermiticity and positivity at the structural tolerance and
    /// completeness at `tolerance` (Frobenius norm of `Σ E_i - I`).
    pub fn new(elements: Vec<CMatrix<T>>, tolerance: T) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidDims("POVM needs at least one element".into()))?;
        let dim = require_square(first)?;
        for (i, e) in elements.iter().enumerate() {
            let n = require_square(e)?;
            if n != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: n,
                });
            }
            require_hermitian(e)?;
            let min = eigh_unchecked(&hermitian_part(e)).min();
            if min < -T::structure_tol() {
                return Err(Error::NotPositive {
                    index: i,
                    min_eigenvalue: min.as_f64(),
                });
            }
        }
        let povm = Self {
            elements,
            tolerance,
        };
        let deviation = povm.completeness_deviation();
        if deviation > tolerance {
            return Err(Error::CompletenessViolation {
                deviation: deviation.as_f64(),
                tolerance: tolerance.as_f64(),
            });
        }
        Ok(povm)
    }

    /// Rank-one POVM `{|v⟩⟨v|}` from (unnormalized) vectors.
    pub fn from_vectors(vectors: &[CVector<T>], tolerance: T) -> Result<Self> {
        Self::new(vectors.iter().map(outer).collect(), tolerance)
    }

    /// Two-outcome measurement `[I - E, E]`, i.e. outcome index 1 is `E`.
    pub fn dichotomic(effect: CMatrix<T>, tolerance: T) -> Result<Self> {
        let n = require_square(&effect)?;
        let complement = identity::<T>(n) - &effect;
        Self::new(vec![complement, effect], tolerance)
    }

    /// `n` copies of `I / n`.
    pub fn uniform(dim: usize, n: usize) -> Self {
        let w = Complex::new(T::one() / T::from_usize(n).expect("count"), T::zero());
        Self {
            elements: vec![identity::<T>(dim) * w; n],
            tolerance: T::structure_tol(),
        }
    }

    pub fn computational_basis(dim: usize) -> Self {
        Self {
            elements: (0..dim)
                .map(|i| Ket::<T>::basis(dim, i).projector())
                .collect(),
            tolerance: T::structure_tol(),
        }
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix<T>] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &CMatrix<T> {
        &self.elements[i]
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    pub fn into_elements(self) -> Vec<CMatrix<T>> {
        self.elements
    }

    pub fn completeness_deviation(&self) -> T {
        let dim = self.dim();
        let total = self
            .elements
            .iter()
            .fold(CMatrix::<T>::zeros(dim, dim), |acc, e| acc + e);
        (total - identity::<T>(dim)).norm()
    }

    /// Born probabilities `⟨ψ|E_i|ψ⟩`.
    pub fn probabilities(&self, ket: &Ket<T>) -> Result<Vec<T>> {
        if ket.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: ket.dim(),
            });
        }
        Ok(self.elements.iter().map(|e| ket.expectation(e)).collect())
    }
}

/// True iff every element is idempotent and distinct elements are mutually
/// orthogonal, both within `tol` in Frobenius norm.
pub fn is_projective<T: Scalar>(p: &Povm<T>, tol: T) -> bool {
    let els = p.elements();
    for (i, a) in els.iter().enumerate() {
        if (a * a - a).norm() > tol {
            return false;
        }
        for b in &els[i + 1..] {
            if (a * b).norm() > tol {
                return false;
            }
        }
    }
    true
}
