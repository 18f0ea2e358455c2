//! Upper bound on the projective-model score from sampled moment matrices.
//!
//! Moment matrices `Γ_{u,v} = tr(u† v)` over a fixed list of operator words
//! are sampled from random four-dimensional projective realizations, averaged
//! over the relabeling group S4 of the first four inputs, and orthonormalized.
//! Their affine span intersected with the PSD cone is a relaxation of the set
//! of realizable moment matrices, so maximizing the (linear) score over it
//! gives an upper bound.

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{DIM, INPUTS};
use crate::linalg::{eigh_unchecked, identity};
use crate::random::{haar_ket, haar_unitary, random_projector, stream_rng};
use crate::sdp::{solve, SdpOptions, SdpProblem};
use crate::ComplexMatrix;

/// Labels moved by the symmetry group; labels 5..7 stay fixed.
pub const SYMMETRIC_LABELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MonomialWord {
    Identity,
    State(usize),
    Effect(usize),
    Direction(usize),
    StateEffect(usize, usize),
    StateDirection(usize),
}

impl MonomialWord {
    pub fn relabel(self, perm: &[usize; SYMMETRIC_LABELS]) -> Self {
        let f = |i: usize| if i < SYMMETRIC_LABELS { perm[i] } else { i };
        match self {
            MonomialWord::Identity => MonomialWord::Identity,
            MonomialWord::State(x) => MonomialWord::State(f(x)),
            MonomialWord::Effect(y) => MonomialWord::Effect(f(y)),
            MonomialWord::Direction(b) => MonomialWord::Direction(f(b)),
            MonomialWord::StateEffect(x, y) => MonomialWord::StateEffect(f(x), f(y)),
            MonomialWord::StateDirection(x) => MonomialWord::StateDirection(f(x)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            MonomialWord::Identity => "1".into(),
            MonomialWord::State(x) => format!("psi{}", x + 1),
            MonomialWord::Effect(y) => format!("E{}", y + 1),
            MonomialWord::Direction(b) => format!("phi{}", b + 1),
            MonomialWord::StateEffect(x, y) => format!("psi{}E{}", x + 1, y + 1),
            MonomialWord::StateDirection(x) => format!("psi{}phi{}", x + 1, x + 1),
        }
    }
}

/// Canonical word list: `1, ψ_x, E_{1|y}, φ_b, ψ_x E_{1|y}, ψ_x φ_x` (x ≤ 4
/// in the last group). Only `b = 1` effects appear since `E_0 = 1 − E_1`.
pub fn monomial_words() -> Vec<MonomialWord> {
    let mut w = vec![MonomialWord::Identity];
    w.extend((0..INPUTS).map(MonomialWord::State));
    w.extend((0..INPUTS).map(MonomialWord::Effect));
    w.extend((0..SYMMETRIC_LABELS).map(MonomialWord::Direction));
    for x in 0..INPUTS {
        w.extend((0..INPUTS).map(|y| MonomialWord::StateEffect(x, y)));
    }
    w.extend((0..SYMMETRIC_LABELS).map(MonomialWord::StateDirection));
    w
}

static WORDS: LazyLock<Vec<MonomialWord>> = LazyLock::new(monomial_words);

fn word_index(w: MonomialWord) -> usize {
    WORDS
        .iter()
        .position(|&v| v == w)
        .expect("word list is closed under relabeling")
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Index maps of all 24 relabelings on the word list.
static PERMS: LazyLock<Vec<Vec<usize>>> = LazyLock::new(|| {
    permutations(SYMMETRIC_LABELS)
        .into_iter()
        .map(|p| {
            let perm: [usize; SYMMETRIC_LABELS] = p.try_into().expect("length 4");
            WORDS.iter().map(|w| word_index(w.relabel(&perm))).collect()
        })
        .collect()
});

/// Projective realization on C^4: pure states, projective effects and an
/// orthonormal basis `{|φ_b⟩⟨φ_b|}`.
#[derive(Clone, Debug)]
pub struct Realization {
    pub states: Vec<ComplexMatrix>,
    pub effects: Vec<ComplexMatrix>,
    pub directions: Vec<ComplexMatrix>,
}

impl Realization {
    pub fn operator(&self, w: MonomialWord) -> ComplexMatrix {
        match w {
            MonomialWord::Identity => identity(DIM),
            MonomialWord::State(x) => self.states[x].clone(),
            MonomialWord::Effect(y) => self.effects[y].clone(),
            MonomialWord::Direction(b) => self.directions[b].clone(),
            MonomialWord::StateEffect(x, y) => &self.states[x] * &self.effects[y],
            MonomialWord::StateDirection(x) => &self.states[x] * &self.directions[x],
        }
    }

    /// Game score with final elements `φ_1..φ_4` and empty outcomes 5..7.
    pub fn score(&self) -> f64 {
        let mut finals = self.directions.clone();
        finals.resize(INPUTS, ComplexMatrix::zeros(DIM, DIM));
        crate::game::score_density(&self.states, &self.effects, &finals)
            .expect("shapes fixed by construction")
    }
}

/// Haar states, effects of uniformly random rank in {0..4}, Haar basis.
pub fn random_realization<R: Rng + ?Sized>(rng: &mut R) -> Realization {
    let states = (0..INPUTS)
        .map(|_| haar_ket::<f64, R>(rng, DIM).projector())
        .collect();
    let effects = (0..INPUTS)
        .map(|_| {
            let rank = rng.random_range(0..=DIM);
            random_projector::<f64, R>(rng, DIM, rank)
        })
        .collect();
    let u = haar_unitary::<f64, R>(rng, DIM);
    let directions = (0..DIM)
        .map(|b| {
            let c = u.column(b);
            &c * c.adjoint()
        })
        .collect();
    Realization {
        states,
        effects,
        directions,
    }
}

/// `Γ_{u,v} = tr(u† v)` over [`monomial_words`].
pub fn moment_matrix(r: &Realization) -> ComplexMatrix {
    let ops: Vec<ComplexMatrix> = WORDS.iter().map(|&w| r.operator(w)).collect();
    let n = ops.len();
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: Complex<f64> = ops[i]
                .iter()
                .zip(ops[j].iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

/// Average of `Γ` over the 24 simultaneous relabelings of inputs, effects and
/// basis elements 1..4.
pub fn symmetrize(g: &ComplexMatrix) -> ComplexMatrix {
    let n = g.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    for p in PERMS.iter() {
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] += g[(p[i], p[j])];
            }
        }
    }
    out / Complex::new(PERMS.len() as f64, 0.0)
}

/// Game score read off moment-matrix entries.
pub fn objective(g: &ComplexMatrix) -> f64 {
    let one = word_index(MonomialWord::Identity);
    let mut w = 0.0;
    for x in 0..INPUTS {
        let px = word_index(MonomialWord::State(x));
        for y in 0..INPUTS {
            let t = g[(px, word_index(MonomialWord::Effect(y)))].re;
            w += if x == y { 2.0 * t } else { g[(one, px)].re - t };
        }
    }
    for x in 0..SYMMETRIC_LABELS {
        let px = word_index(MonomialWord::State(x));
        w += 3.0 * g[(px, word_index(MonomialWord::Direction(x)))].re;
    }
    w
}

/// Entry fixed to 1 in every realization: `tr(ψ_1)`.
fn normalization(g: &ComplexMatrix) -> f64 {
    g[(
        word_index(MonomialWord::Identity),
        word_index(MonomialWord::State(0)),
    )]
        .re
}

/// Isometric real coordinates of a Hermitian matrix (upper triangle, off-diagonal scaled by √2).
fn hvec(g: &ComplexMatrix) -> DVector<f64> {
    let n = g.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut v = DVector::zeros(n * n);
    let mut k = 0;
    for j in 0..n {
        v[k] = g[(j, j)].re;
        k += 1;
        for i in 0..j {
            v[k] = r2 * g[(i, j)].re;
            v[k + 1] = r2 * g[(i, j)].im;
            k += 2;
        }
    }
    v
}

fn unhvec(v: &DVector<f64>, n: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = ComplexMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        g[(j, j)] = Complex::new(v[k], 0.0);
        k += 1;
        for i in 0..j {
            let z = Complex::new(s * v[k], s * v[k + 1]);
            g[(i, j)] = z;
            g[(j, i)] = z.conj();
            k += 2;
        }
    }
    g
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisOptions {
    /// Maximum number of sampled realizations.
    pub budget: usize,
    /// Relative residual norm above which a sample counts as independent.
    pub rank_tol: f64,
    /// Consecutive dependent samples that declare saturation.
    pub stall_limit: usize,
    pub symmetrize: bool,
    pub seed: u64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            budget: 3000,
            rank_tol: 1e-7,
            stall_limit: 50,
            symmetrize: true,
            seed: 0,
        }
    }
}

/// Orthonormal basis (trace inner product) of the span of sampled moment matrices.
#[derive(Clone, Debug)]
pub struct AffineBasis {
    /// Rows are `hvec` coordinates of the orthonormal basis matrices.
    coords: Vec<DVector<f64>>,
    size: usize,
    pub samples_used: usize,
    /// False when the budget ran out before `stall_limit` dependent samples in a row.
    pub saturated: bool,
    pub symmetrized: bool,
    pub seed: u64,
    /// Rank after each sample.
    pub rank_history: Vec<usize>,
}

impl AffineBasis {
    pub fn rank(&self) -> usize {
        self.coords.len()
    }

    pub fn matrix_size(&self) -> usize {
        self.size
    }

    pub fn matrices(&self) -> Vec<ComplexMatrix> {
        self.coords.iter().map(|v| unhvec(v, self.size)).collect()
    }

    /// Starts an empty basis for matrices of the canonical word list.
    pub fn empty(symmetrized: bool, seed: u64) -> Self {
        Self {
            coords: Vec::new(),
            size: WORDS.len(),
            samples_used: 0,
            saturated: false,
            symmetrized,
            seed,
            rank_history: Vec::new(),
        }
    }

    /// Adds one sample; returns whether it raised the rank.
    pub fn push(&mut self, g: &ComplexMatrix, rank_tol: f64) -> bool {
        let v = hvec(g);
        let norm = v.norm();
        let mut r = v;
        for _ in 0..2 {
            for q in &self.coords {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        self.samples_used += 1;
        let rn = r.norm();
        let added = rn > rank_tol * norm;
        if added {
            self.coords.push(r / rn);
        }
        self.rank_history.push(self.coords.len());
        added
    }
}

/// Sampled moment matrix for one realization, symmetrized if requested.
pub fn sample_moment_matrix<R: Rng + ?Sized>(rng: &mut R, symmetrized: bool) -> ComplexMatrix {
    let g = moment_matrix(&random_realization(rng));
    if symmetrized {
        symmetrize(&g)
    } else {
        g
    }
}

/// Gram–Schmidt over sampled (symmetrized) moment matrices until the rank
/// stalls for `stall_limit` samples or the budget is spent.
pub fn build_affine_basis(opts: &BasisOptions) -> Result<AffineBasis> {
    if opts.budget == 0 {
        return Err(Error::InvalidConfig(
            "sample budget must be at least 1".into(),
        ));
    }
    let mut rng = stream_rng(opts.seed, 0);
    let mut basis = AffineBasis::empty(opts.symmetrize, opts.seed);
    let mut stall = 0;
    while basis.samples_used < opts.budget {
        let g = sample_moment_matrix(&mut rng, opts.symmetrize);
        if basis.push(&g, opts.rank_tol) {
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_limit {
                basis.saturated = true;
                break;
            }
        }
    }
    Ok(basis)
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverResiduals {
    pub primal: f64,
    pub dual: f64,
    pub relative_gap: f64,
    /// Smallest eigenvalue of the returned moment matrix (negative = PSD violation).
    pub min_eigenvalue: f64,
    pub iterations: usize,
    /// Added to the primal value to keep it a valid bound despite the primal residual.
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    /// Primal value plus residual slack: an upper bound on every projective realization.
    pub bound: f64,
    /// Score of the best feasible moment matrix found (dual side).
    pub attained: f64,
    pub basis_rank: usize,
    pub samples_used: usize,
    pub saturated: bool,
    pub symmetrized: bool,
    pub solver_residuals: SolverResiduals,
    pub seed: u64,
    pub matrix_size: usize,
}

/// Feasibility and gap limits for accepting an interior-point solution.
pub const BOUND_GAP_TOL: f64 = 1e-5;
pub const BOUND_FEAS_TOL: f64 = 1e-7;
pub const BOUND_SLACK_TOL: f64 = 1e-4;

/// Maximizes [`objective`] over PSD matrices in the affine span of the samples.
pub fn solve_upper_bound(basis: &AffineBasis) -> Result<BoundReport> {
    let rank = basis.rank();
    if rank == 0 {
        return Err(Error::InvalidConfig("empty moment-matrix basis".into()));
    }
    let n = basis.matrix_size();
    let mats = basis.matrices();
    let nu = DVector::from_iterator(rank, mats.iter().map(normalization));
    let nn = nu.norm_squared();
    if nn <= 0.0 {
        return Err(Error::InvalidConfig(
            "basis does not reach the normalization entry".into(),
        ));
    }

    // Householder reflector mapping e_1 to the unit normal; its other columns
    // are an orthonormal basis of the directions keeping normalization fixed.
    let unit = &nu / nn.sqrt();
    let mut u = unit.clone();
    u[0] -= 1.0;
    let h = if u.norm() < 1e-14 {
        DMatrix::identity(rank, rank)
    } else {
        let un2 = u.norm_squared();
        DMatrix::identity(rank, rank) - (&u * u.transpose()) * (2.0 / un2)
    };
    let combine = |c: &DVector<f64>| -> ComplexMatrix {
        let mut v = DVector::zeros(basis.coords[0].len());
        for (k, q) in basis.coords.iter().enumerate() {
            v.axpy(c[k], q, 1.0);
        }
        unhvec(&v, n)
    };
    let anchor = combine(&(&nu / nn));
    let directions: Vec<ComplexMatrix> = (1..rank)
        .map(|i| combine(&h.column(i).into_owned()))
        .collect();
    let f0 = objective(&anchor);
    let anchor_norm = anchor.norm();

    if directions.is_empty() {
        let min_eigenvalue = eigh_unchecked(&anchor).min();
        return Ok(BoundReport {
            bound: f0,
            attained: f0,
            basis_rank: rank,
            samples_used: basis.samples_used,
            saturated: basis.saturated,
            symmetrized: basis.symmetrized,
            solver_residuals: SolverResiduals {
                primal: 0.0,
                dual: 0.0,
                relative_gap: 0.0,
                min_eigenvalue,
                iterations: 0,
                slack: 0.0,
            },
            seed: basis.seed,
            matrix_size: n,
        });
    }

    let b: Vec<f64> = directions.iter().map(objective).collect();
    let problem = SdpProblem {
        c: anchor.clone(),
        constraints: directions.iter().map(|d| -d).collect(),
        b,
    };
    let sol = solve(&problem, &SdpOptions::default())?;
    let gamma = directions
        .iter()
        .zip(&sol.y)
        .fold(anchor, |acc, (d, &y)| acc + d * Complex::new(y, 0.0));
    let min_eigenvalue = eigh_unchecked(&crate::linalg::hermitian_part(&gamma)).min();
    // For a realizable Γ with coordinates y, f(Γ) − f0 = ⟨b, y⟩ ≤ tr(CX) + ‖b − A(X)‖·‖y‖,
    // and ‖y‖ = ‖Γ − anchor‖_F with every entry of Γ bounded by DIM.
    let radius = DIM as f64 * n as f64 + anchor_norm;
    let slack = sol.primal_residual * radius;
    let residuals = SolverResiduals {
        primal: sol.primal_residual,
        dual: sol.dual_residual,
        relative_gap: sol.relative_gap,
        min_eigenvalue,
        iterations: sol.iterations,
        slack,
    };
    let acceptable = sol.relative_gap <= BOUND_GAP_TOL
        && slack <= BOUND_SLACK_TOL
        && sol.dual_residual <= BOUND_FEAS_TOL
        && min_eigenvalue >= -BOUND_FEAS_TOL;
    if !acceptable {
        return Err(Error::SolverNotConverged(format!(
            "moment SDP stopped ({:?}) with gap {:e}, primal residual {:e}, dual residual {:e}, min eigenvalue {:e}",
            sol.stop, sol.relative_gap, sol.primal_residual, sol.dual_residual, min_eigenvalue
        )));
    }
    Ok(BoundReport {
        bound: f0 + sol.primal_objective + slack,
        attained: f0 + sol.dual_objective,
        basis_rank: rank,
        samples_used: basis.samples_used,
        saturated: basis.saturated,
        symmetrized: basis.symmetrized,
        solver_residuals: residuals,
        seed: basis.seed,
        matrix_size: n,
    })
}
