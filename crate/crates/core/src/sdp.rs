//! Dense primal-dual interior-point solver for small complex Hermitian SDPs.
//!
//! Primal: `min ⟨C, X⟩  s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0`
//! Dual:   `max b·y     s.t. S = C − Σ y_i A_i ⪰ 0`
//!
//! `⟨A, B⟩ = Re tr(A† B)`. Search directions are HKM with a Mehrotra
//! predictor-corrector; the iteration starts from the infeasible point
//! `X = S = I, y = 0`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, identity, trace_inner};
use crate::ComplexMatrix;

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub c: ComplexMatrix,
    pub constraints: Vec<ComplexMatrix>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    /// Relative gap and relative residual target.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iters: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationLimit,
    /// A Cholesky factorization of X, S or the Schur complement failed; the
    /// last iterate is returned.
    NumericalLimit,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub x: ComplexMatrix,
    pub s: ComplexMatrix,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `‖b − A(X)‖`
    pub primal_residual: f64,
    /// `‖C − Aᵀ(y) − S‖_F`
    pub dual_residual: f64,
    /// `|p − d| / (1 + |p| + |d|)`
    pub relative_gap: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl SdpSolution {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Complex matrix held as separate real and imaginary parts so products go
/// through the optimized real kernel.
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn new(a: &ComplexMatrix) -> Self {
        Self {
            re: a.map(|z| z.re),
            im: a.map(|z| z.im),
        }
    }

    fn mul(&self, o: &Split) -> Split {
        Split {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    fn write_flat(&self, out: &mut [f64]) {
        let n2 = self.re.len();
        out[..n2].copy_from_slice(self.re.as_slice());
        out[n2..].copy_from_slice(self.im.as_slice());
    }
}

fn mul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let p = Split::new(a).mul(&Split::new(b));
    ComplexMatrix::from_fn(p.re.nrows(), p.re.ncols(), |i, j| {
        Complex::new(p.re[(i, j)], p.im[(i, j)])
    })
}

/// Constraint operator stored as an m × 2n² real matrix of flattened `[Re; Im]`.
struct Constraints {
    n: usize,
    flat: DMatrix<f64>,
}

impl Constraints {
    fn new(n: usize, mats: &[ComplexMatrix]) -> Self {
        let n2 = n * n;
        let mut flat = DMatrix::zeros(mats.len(), 2 * n2);
        for (i, a) in mats.iter().enumerate() {
            for (k, z) in a.iter().enumerate() {
                flat[(i, k)] = z.re;
                flat[(i, n2 + k)] = z.im;
            }
        }
        Self { n, flat }
    }

    fn flatten(&self, x: &ComplexMatrix) -> DVector<f64> {
        let n2 = self.n * self.n;
        let mut v = DVector::zeros(2 * n2);
        for (k, z) in x.iter().enumerate() {
            v[k] = z.re;
            v[n2 + k] = z.im;
        }
        v
    }

    /// `A(X)_i = ⟨A_i, X⟩`
    fn apply(&self, x: &ComplexMatrix) -> DVector<f64> {
        &self.flat * self.flatten(x)
    }

    /// `Aᵀ(y) = Σ y_i A_i`
    fn adjoint(&self, y: &DVector<f64>) -> ComplexMatrix {
        let v = self.flat.tr_mul(y);
        let n2 = self.n * self.n;
        ComplexMatrix::from_fn(self.n, self.n, |i, j| {
            let k = i + j * self.n;
            Complex::new(v[k], v[n2 + k])
        })
    }
}

/// Largest `α ≤ 1` with `X + α dX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &Cholesky<Complex<f64>, nalgebra::Dyn>, dx: &ComplexMatrix) -> Option<f64> {
    let l = chol.l();
    let y = l.solve_lower_triangular(dx)?;
    let z = l.solve_lower_triangular(&y.adjoint())?;
    let ev = hermitian_part(&z).symmetric_eigenvalues();
    let mn = ev.iter().copied().fold(f64::INFINITY, f64::min);
    Some(if mn >= 0.0 { 1.0 } else { (-1.0 / mn).min(1.0) })
}

enum SchurFactor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn new(m: DMatrix<f64>) -> Self {
        match Cholesky::new(m.clone()) {
            Some(c) => SchurFactor::Chol(c),
            None => SchurFactor::Lu(m.lu()),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            SchurFactor::Chol(c) => Some(c.solve(rhs)),
            SchurFactor::Lu(l) => l.solve(rhs),
        }
    }
}

/// Iterations without a better merit value before giving up.
const STALL_ITERS: usize = 50;

pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    let n = p.c.nrows();
    if p.c.ncols() != n {
        return Err(Error::NonSquare {
            rows: n,
            cols: p.c.ncols(),
        });
    }
    if p.constraints.len() != p.b.len() {
        return Err(Error::DimensionMismatch {
            expected: p.constraints.len(),
            found: p.b.len(),
        });
    }
    if let Some(a) = p.constraints.iter().find(|a| a.shape() != (n, n)) {
        return Err(Error::ShapeMismatch(format!(
            "constraint of shape {:?} in a {n}x{n} problem",
            a.shape()
        )));
    }
    let ops = Constraints::new(n, &p.constraints);
    let splits: Vec<Split> = p.constraints.iter().map(Split::new).collect();
    let b = DVector::from_column_slice(&p.b);
    let m = p.b.len();
    let nf = n as f64;
    let b_scale = 1.0 + b.norm();
    let c_scale = 1.0 + p.c.norm();

    let mut x = identity::<f64>(n);
    let mut s = identity::<f64>(n);
    let mut y = DVector::<f64>::zeros(m);
    let mut stop = StopReason::IterationLimit;
    let mut iterations = 0;
    // Near the optimum the Schur complement loses accuracy and later iterates
    // can be worse than earlier ones; unconverged runs return the best seen.
    let mut best = (f64::INFINITY, 0, x.clone(), y.clone(), s.clone());
    let half = |a: ComplexMatrix| hermitian_part(&a);
    let cplx = |v: f64| Complex::new(v, 0.0);

    for it in 0..opts.max_iters {
        iterations = it;
        let rp = &b - ops.apply(&x);
        let rd = half(&p.c - ops.adjoint(&y) - &s);
        let mu = trace_inner(&x, &s) / nf;
        let pobj = trace_inner(&p.c, &x);
        let dobj = b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = gap.max(rp.norm() / b_scale).max(rd.norm() / c_scale);
        if merit < best.0 {
            best = (merit, it, x.clone(), y.clone(), s.clone());
        } else if it >= best.1 + STALL_ITERS {
            stop = StopReason::NumericalLimit;
            break;
        }
        if gap < opts.tolerance
            && rp.norm() < opts.tolerance * b_scale
            && rd.norm() < opts.tolerance * c_scale
        {
            stop = StopReason::Converged;
            break;
        }
        let (Some(cx), Some(cs)) = (Cholesky::new(x.clone()), Cholesky::new(s.clone())) else {
            stop = StopReason::NumericalLimit;
            break;
        };
        let si = half(cs.inverse());

        // Schur complement M_ij = ⟨A_i, X A_j S⁻¹⟩
        let xs = Split::new(&x);
        let sis = Split::new(&si);
        let mut g = DMatrix::<f64>::zeros(2 * n * n, m);
        for (j, a) in splits.iter().enumerate() {
            let prod = xs.mul(a).mul(&sis);
            prod.write_flat(g.column_mut(j).as_mut_slice());
        }
        let schur = &ops.flat * g;
        let schur = (&schur + schur.transpose()) * 0.5;
        let factor = SchurFactor::new(schur);

        let direction = |sigma: f64,
                         corr: Option<&ComplexMatrix>|
         -> Option<(ComplexMatrix, DVector<f64>, ComplexMatrix)> {
            let target = &si * cplx(sigma * mu);
            let mut r = &target - &x - half(mul(&mul(&x, &rd), &si));
            if let Some(c) = corr {
                r -= c;
            }
            let rhs = &rp - ops.apply(&r);
            let dy = factor.solve(&rhs)?;
            let ds = half(&rd - ops.adjoint(&dy));
            let mut dx = &target - &x - mul(&mul(&x, &ds), &si);
            if let Some(c) = corr {
                dx -= c;
            }
            Some((half(dx), dy, ds))
        };

        let Some((dxa, _, dsa)) = direction(0.0, None) else {
            stop = StopReason::NumericalLimit;
            break;
        };
        let (Some(ap), Some(ad)) = (max_step(&cx, &dxa), max_step(&cs, &dsa)) else {
            stop = StopReason::NumericalLimit;
            break;
        };
        let mu_aff = trace_inner(&(&x + &dxa * cplx(ap)), &(&s + &dsa * cplx(ad))) / nf;
        let sigma = (mu_aff / mu).max(0.0).powi(3);
        let corr = half(mul(&mul(&dxa, &dsa), &si));
        let Some((dx, dy, ds)) = direction(sigma, Some(&corr)) else {
            stop = StopReason::NumericalLimit;
            break;
        };
        let (Some(ap), Some(ad)) = (max_step(&cx, &dx), max_step(&cs, &ds)) else {
            stop = StopReason::NumericalLimit;
            break;
        };
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        x = half(&x + dx * cplx(ap));
        y += dy * ad;
        s = half(&s + ds * cplx(ad));
        iterations = it + 1;
    }

    if stop != StopReason::Converged && best.0.is_finite() {
        (_, _, x, y, s) = best;
    }
    let primal_residual = (&b - ops.apply(&x)).norm();
    let dual_residual = (&p.c - ops.adjoint(&y) - &s).norm();
    let primal_objective = trace_inner(&p.c, &x);
    let dual_objective = b.dot(&y);
    let relative_gap = (primal_objective - dual_objective).abs()
        / (1.0 + primal_objective.abs() + dual_objective.abs());
    Ok(SdpSolution {
        x,
        s,
        y: y.iter().copied().collect(),
        primal_objective,
        dual_objective,
        primal_residual,
        dual_residual,
        relative_gap,
        iterations,
        stop,
    })
}

/// Orthonormal basis of d×d Hermitian matrices under `⟨·,·⟩`.
pub fn hermitian_basis(d: usize) -> Vec<ComplexMatrix> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in i..d {
            if i == j {
                let mut h = ComplexMatrix::zeros(d, d);
                h[(i, i)] = Complex::new(1.0, 0.0);
                out.push(h);
            } else {
                let mut h = ComplexMatrix::zeros(d, d);
                h[(i, j)] = Complex::new(r, 0.0);
                h[(j, i)] = Complex::new(r, 0.0);
                out.push(h);
                let mut h = ComplexMatrix::zeros(d, d);
                h[(i, j)] = Complex::new(0.0, r);
                h[(j, i)] = Complex::new(0.0, -r);
                out.push(h);
            }
        }
    }
    out
}

/// Places `blocks` on the diagonal of a square matrix.
pub fn block_diagonal(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Maximizes `Σ_x ⟨T_x, N_x⟩` over k-outcome POVMs `{N_x}` on C^d.
///
/// Returns the raw diagonal blocks of the primal optimizer together with the
/// solver report; callers clean them up as needed.
pub fn max_linear_povm(
    targets: &[ComplexMatrix],
    opts: &SdpOptions,
) -> Result<(Vec<ComplexMatrix>, SdpSolution)> {
    let k = targets.len();
    let d = targets
        .first()
        .ok_or_else(|| Error::InvalidDims("no POVM targets".into()))?
        .nrows();
    let neg: Vec<ComplexMatrix> = targets.iter().map(|t| -t).collect();
    let c = block_diagonal(&neg);
    let basis = hermitian_basis(d);
    let b = basis
        .iter()
        .map(|h| (0..d).map(|i| h[(i, i)].re).sum())
        .collect();
    let constraints = basis
        .iter()
        .map(|h| block_diagonal(&vec![h.clone(); k]))
        .collect();
    let sol = solve(&SdpProblem { c, constraints, b }, opts)?;
    let blocks = (0..k)
        .map(|x| hermitian_part(&sol.x.view((x * d, x * d), (d, d)).into_owned()))
        .collect();
    Ok((blocks, sol))
}
