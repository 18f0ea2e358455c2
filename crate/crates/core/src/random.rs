//! Seeded random kets, unitaries and projectors.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMatrix, CVector, Ket};
use crate::scalar::Scalar;

/// Independent deterministic stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re), T::lit(im))
}

/// Haar-distributed pure state: normalized complex Gaussian vector.
pub fn haar_ket<T: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Ket<T> {
    loop {
        let v = CVector::from_fn(dim, |_, _| gaussian(rng));
        if let Ok(k) = Ket::normalize(v) {
            return k;
        }
    }
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase fix on R's diagonal.
pub fn haar_unitary<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix<T> {
    let z: CMatrix<T> = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let m = d.norm_sqr().sqrt();
        if m > T::zero() {
            let ph = d / Complex::new(m, T::zero());
            for i in 0..n {
                q[(i, j)] *= ph;
            }
        }
    }
    q
}

/// Rank-`rank` orthogonal projector onto a Haar-random subspace.
pub fn random_projector<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    rank: usize,
) -> CMatrix<T> {
    let u = haar_unitary::<T, R>(rng, dim);
    let v = u.columns(0, rank);
    &v * v.adjoint()
}

/// Hermitian matrix with independent Gaussian entries (GUE up to scale).
pub fn random_hermitian<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix<T> {
    let z: CMatrix<T> = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let half = Complex::new(T::lit(0.5), T::zero());
    (&z + z.adjoint()) * half
}

/// Random effect `0 <= E <= I`: Haar eigenbasis with uniform eigenvalues in [0, 1].
pub fn random_effect<T: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix<T> {
    let u = haar_unitary::<T, R>(rng, dim);
    let d = CMatrix::from_diagonal(&CVector::from_fn(dim, |_, _| {
        Complex::new(T::lit(rng.random::<f64>()), T::zero())
    }));
    &u * d * u.adjoint()
}
