//! Alternating (see-saw) maximization of the game score.
//!
//! Each half-step solves one block exactly with the others frozen: states by
//! a top eigenvector, dichotomic measurements by a positive-eigenspace
//! projector, and the final measurement by a small SDP.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{score, state_operator, Strategy, DIM, INPUTS};
use crate::linalg::{
    eigh_unchecked, hermitian_part, identity, is_projective, positive_eigenspace_projector,
    top_eigenvector, DEFAULT_ZERO_TOL,
};
use crate::random::{haar_ket, stream_rng};
use crate::sdp::{max_linear_povm, SdpOptions};
use crate::serial::PovmDoc;
use crate::{ComplexMatrix, Ket, Povm};

/// Tolerance for the projectivity test of a converged final measurement.
pub const PROJECTIVITY_TOL: f64 = 1e-6;

/// Allowed gap between the returned final measurement and the SDP dual bound.
pub const FINAL_POVM_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeesawMode {
    /// Final measurement frozen; only states and dichotomic measurements move.
    FixedFinal,
    /// Final measurement optimized over four-outcome POVMs (outcomes 5..7 empty).
    ProjectiveRelaxed,
    /// Final measurement optimized over all seven-outcome POVMs.
    Free,
}

impl SeesawMode {
    fn final_outcomes(self) -> usize {
        match self {
            SeesawMode::ProjectiveRelaxed => 4,
            _ => INPUTS,
        }
    }
}

impl std::str::FromStr for SeesawMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fixed_final" | "fixed" => Ok(SeesawMode::FixedFinal),
            "projective_relaxed" | "projective" => Ok(SeesawMode::ProjectiveRelaxed),
            "free" => Ok(SeesawMode::Free),
            other => Err(Error::InvalidConfig(format!(
                "unknown see-saw mode '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeesawConfig {
    pub mode: SeesawMode,
    pub restarts: usize,
    pub max_iters: usize,
    /// A restart stops once one full sweep gains less than this.
    pub tolerance: f64,
    pub seed: u64,
    /// Frozen final measurement for [`SeesawMode::FixedFinal`].
    #[serde(skip)]
    pub fixed_final: Option<Povm>,
}

impl SeesawConfig {
    pub fn new(mode: SeesawMode, seed: u64) -> Self {
        Self {
            mode,
            restarts: 50,
            max_iters: 500,
            tolerance: 1e-9,
            seed,
            fixed_final: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "convergence tolerance must be positive".into(),
            ));
        }
        if let Some(f) = &self.fixed_final {
            if f.len() != INPUTS || f.dim() != DIM {
                return Err(Error::InvalidConfig(
                    "fixed final measurement must have 7 outcomes on C^4".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectivityReport {
    pub projective: bool,
    pub tolerance: f64,
    /// `max_i ‖M_i² − M_i‖_F`
    pub idempotence_defect: f64,
    /// `max_{i≠j} ‖M_i M_j‖_F`
    pub overlap_defect: f64,
}

pub fn projectivity_report(p: &Povm, tol: f64) -> ProjectivityReport {
    let els = p.elements();
    let mut idem: f64 = 0.0;
    let mut overlap: f64 = 0.0;
    for (i, a) in els.iter().enumerate() {
        idem = idem.max((a * a - a).norm());
        for b in &els[i + 1..] {
            overlap = overlap.max((a * b).norm());
        }
    }
    ProjectivityReport {
        projective: is_projective(p, tol),
        tolerance: tol,
        idempotence_defect: idem,
        overlap_defect: overlap,
    }
}

#[derive(Clone, Debug)]
pub struct SeesawTrace {
    /// Score after initialization and after every half-step of the winning restart.
    pub values: Vec<f64>,
    pub strategy: Strategy,
    pub converged: bool,
    pub sweeps: usize,
    pub restart: usize,
    pub projectivity: ProjectivityReport,
    /// State updates whose top eigenvalue was degenerate.
    pub degenerate_updates: usize,
    /// Final-measurement solves rejected (non-converged or non-improving).
    pub rejected_final_updates: usize,
    /// Best score of every restart, by restart index.
    pub restart_scores: Vec<f64>,
}

impl SeesawTrace {
    pub fn best_score(&self) -> f64 {
        *self.values.last().expect("trace is never empty")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "best_score": self.best_score(),
            "restart": self.restart,
            "converged": self.converged,
            "sweeps": self.sweeps,
            "values": self.values,
            "projectivity": self.projectivity,
            "degenerate_updates": self.degenerate_updates,
            "rejected_final_updates": self.rejected_final_updates,
            "restart_scores": self.restart_scores,
            "strategy": self.strategy.to_doc(),
            "final_povm": PovmDoc::from_povm(self.strategy.final_povm()),
        })
    }
}

/// `E_{1|y}` = projector onto the positive part of `2ρ_y − Σ_{x≠y} ρ_x`.
pub fn update_dichotomic(states: &[Ket]) -> Result<Vec<Povm>> {
    let rhos: Vec<ComplexMatrix> = states.iter().map(|k| k.projector()).collect();
    let dim = states[0].dim();
    let total = rhos
        .iter()
        .fold(ComplexMatrix::zeros(dim, dim), |acc, r| acc + r);
    rhos.iter()
        .map(|r| {
            let a = r * Complex::new(3.0, 0.0) - &total;
            let e = positive_eigenspace_projector(&a, DEFAULT_ZERO_TOL)?;
            Povm::dichotomic(e, 1e-8)
        })
        .collect()
}

/// Top eigenvectors of `B_x = 2E_{1|x} + Σ_{y≠x} E_{0|y} + 3M_x`, plus the
/// number of degenerate top eigenvalues encountered.
pub fn update_states(dichotomic: &[Povm], final_povm: &Povm) -> Result<(Vec<Ket>, usize)> {
    let effects: Vec<ComplexMatrix> = dichotomic.iter().map(|d| d.element(1).clone()).collect();
    let mut degenerate = 0;
    let mut states = Vec::with_capacity(INPUTS);
    for x in 0..INPUTS {
        let b = hermitian_part(&state_operator(&effects, final_povm.element(x), x));
        let top = top_eigenvector(&b)?;
        degenerate += usize::from(top.degenerate);
        states.push(top.ket);
    }
    Ok((states, degenerate))
}

/// Best `n_outcomes`-outcome measurement for `Σ_x ⟨ψ_x|N_x|ψ_x⟩`, padded
/// with zero elements to seven outcomes.
pub fn update_final_povm(states: &[Ket], n_outcomes: usize) -> Result<Povm> {
    if n_outcomes == 0 || n_outcomes > states.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot build a {n_outcomes}-outcome final measurement"
        )));
    }
    let dim = states[0].dim();
    let targets: Vec<ComplexMatrix> = states[..n_outcomes].iter().map(|k| k.projector()).collect();
    let opts = SdpOptions {
        tolerance: 1e-11,
        ..SdpOptions::default()
    };
    let (blocks, sol) = max_linear_povm(&targets, &opts)?;

    // Project onto the POVM set: clip negative eigenvalues, then restore Σ N = I.
    let clipped: Vec<ComplexMatrix> = blocks
        .iter()
        .map(|n| {
            let e = eigh_unchecked(n);
            let mut out = ComplexMatrix::zeros(dim, dim);
            for (i, &l) in e.values.iter().enumerate() {
                if l > 0.0 {
                    let v = e.vector(i);
                    out += &v * v.adjoint() * Complex::new(l, 0.0);
                }
            }
            out
        })
        .collect();
    let sum = clipped
        .iter()
        .fold(ComplexMatrix::zeros(dim, dim), |a, n| a + n);
    let e = eigh_unchecked(&hermitian_part(&sum));
    if e.min() <= 1e-12 {
        return Err(Error::SolverNotConverged(format!(
            "final measurement blocks are rank deficient (min eigenvalue {:e})",
            e.min()
        )));
    }
    let mut inv_sqrt = ComplexMatrix::zeros(dim, dim);
    for (i, &l) in e.values.iter().enumerate() {
        let v = e.vector(i);
        inv_sqrt += &v * v.adjoint() * Complex::new(1.0 / l.sqrt(), 0.0);
    }
    let mut elements: Vec<ComplexMatrix> = clipped
        .iter()
        .map(|n| hermitian_part(&(&inv_sqrt * n * &inv_sqrt)))
        .collect();
    elements.resize(INPUTS, ComplexMatrix::zeros(dim, dim));

    let value: f64 = states[..n_outcomes]
        .iter()
        .zip(&elements)
        .map(|(k, n)| k.expectation(n))
        .sum();
    let upper = -sol.dual_objective;
    if sol.dual_residual > 1e-7 || upper - value > FINAL_POVM_GAP {
        return Err(Error::SolverNotConverged(format!(
            "final measurement gap {:e}, dual residual {:e}, {} iterations",
            upper - value,
            sol.dual_residual,
            sol.iterations
        )));
    }
    Povm::new(elements, 1e-8)
}

struct RestartOutcome {
    values: Vec<f64>,
    strategy: Strategy,
    converged: bool,
    sweeps: usize,
    degenerate: usize,
    rejected: usize,
}

fn run_restart(
    cfg: &SeesawConfig,
    restart: usize,
    initial: Option<&Strategy>,
    fixed: Option<&Povm>,
) -> Result<RestartOutcome> {
    let mut rng = stream_rng(cfg.seed, restart as u64);
    let mut states: Vec<Ket> = match initial {
        Some(s) if restart == 0 => s.states().to_vec(),
        _ => (0..INPUTS).map(|_| haar_ket(&mut rng, DIM)).collect(),
    };
    let n_out = cfg.mode.final_outcomes();
    let mut dich = update_dichotomic(&states)?;
    let mut rejected = 0;
    let mut fin = match fixed {
        Some(f) => f.clone(),
        None => match update_final_povm(&states, n_out) {
            Ok(p) => p,
            Err(Error::SolverNotConverged(_)) => {
                rejected += 1;
                let mut els = Povm::uniform(DIM, n_out).into_elements();
                els.resize(INPUTS, ComplexMatrix::zeros(DIM, DIM));
                Povm::new(els, 1e-8)?
            }
            Err(e) => return Err(e),
        },
    };
    let eval = |st: &[Ket], d: &[Povm], f: &Povm| -> Result<f64> {
        Ok(score(&Strategy::new(st.to_vec(), d.to_vec(), f.clone())?))
    };

    let mut values = vec![eval(&states, &dich, &fin)?];
    let mut degenerate = 0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iters {
        let start = *values.last().expect("nonempty");
        let (s, deg) = update_states(&dich, &fin)?;
        states = s;
        degenerate += deg;
        values.push(eval(&states, &dich, &fin)?);
        dich = update_dichotomic(&states)?;
        values.push(eval(&states, &dich, &fin)?);
        if fixed.is_none() {
            let current = *values.last().expect("nonempty");
            match update_final_povm(&states, n_out) {
                Ok(candidate) => {
                    let w = eval(&states, &dich, &candidate)?;
                    if w >= current {
                        fin = candidate;
                        values.push(w);
                    } else {
                        rejected += 1;
                        values.push(current);
                    }
                }
                Err(Error::SolverNotConverged(_)) => {
                    rejected += 1;
                    values.push(current);
                }
                Err(e) => return Err(e),
            }
        }
        sweeps += 1;
        if values.last().expect("nonempty") - start < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(RestartOutcome {
        values,
        strategy: Strategy::new(states, dich, fin)?,
        converged,
        sweeps,
        degenerate,
        rejected,
    })
}

/// Best-of-restarts see-saw. With `initial`, restart 0 starts from its states.
pub fn run_seesaw(cfg: &SeesawConfig, initial: Option<&Strategy>) -> Result<SeesawTrace> {
    cfg.validate()?;
    let fixed = match cfg.mode {
        SeesawMode::FixedFinal => Some(
            cfg.fixed_final
                .clone()
                .or_else(|| initial.map(|s| s.final_povm().clone()))
                .ok_or_else(|| {
                    Error::InvalidConfig("FIXED_FINAL mode needs a final measurement".into())
                })?,
        ),
        _ => None,
    };
    let outcomes = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(cfg, r, initial, fixed.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let restart_scores: Vec<f64> = outcomes
        .iter()
        .map(|o| *o.values.last().expect("nonempty"))
        .collect();
    let mut best = 0;
    for (r, &w) in restart_scores.iter().enumerate() {
        if w > restart_scores[best] {
            best = r;
        }
    }
    let o = outcomes.into_iter().nth(best).expect("index in range");
    let projectivity = projectivity_report(o.strategy.final_povm(), PROJECTIVITY_TOL);
    Ok(SeesawTrace {
        values: o.values,
        strategy: o.strategy,
        converged: o.converged,
        sweeps: o.sweeps,
        restart: best,
        projectivity,
        degenerate_updates: o.degenerate,
        rejected_final_updates: o.rejected,
        restart_scores,
    })
}

/// Value of the dichotomic block `Σ_x (1+δ) p(b=δ|x,y)` for one `y`.
pub fn dichotomic_block_value(states: &[Ket], y: usize, effect: &ComplexMatrix) -> f64 {
    let id = identity::<f64>(effect.nrows());
    states
        .iter()
        .enumerate()
        .map(|(x, k)| {
            if x == y {
                2.0 * k.expectation(effect)
            } else {
                k.expectation(&(&id - effect))
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_effect;

    #[test]
    fn dichotomic_for_orthonormal_states() {
        let states: Vec<Ket> = (0..INPUTS).map(|x| Ket::basis(DIM, x.min(3))).collect();
        let d = update_dichotomic(&states).unwrap();
        assert!((d[0].element(1) - Ket::basis(DIM, 0).projector()).norm() < 1e-12);
    }

    #[test]
    fn identical_states_give_empty_effect() {
        let k = Ket::basis(DIM, 2);
        let d = update_dichotomic(&vec![k; INPUTS]).unwrap();
        for p in &d {
            assert!(p.element(1).norm() < 1e-12);
        }
    }

    #[test]
    fn dichotomic_update_beats_random_effects() {
        let mut rng = stream_rng(21, 0);
        let states: Vec<Ket> = (0..INPUTS).map(|_| haar_ket(&mut rng, DIM)).collect();
        let d = update_dichotomic(&states).unwrap();
        for y in 0..INPUTS {
            let best = dichotomic_block_value(&states, y, d[y].element(1));
            for _ in 0..200 {
                let e = random_effect::<f64, _>(&mut rng, DIM);
                assert!(dichotomic_block_value(&states, y, &e) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn state_update_orthogonal_to_shared_effect() {
        let e0 = Ket::basis(DIM, 0).projector();
        let dich: Vec<Povm> = (0..INPUTS)
            .map(|_| Povm::dichotomic(e0.clone(), 1e-12).unwrap())
            .collect();
        let zero = Povm::new(
            {
                let mut v = vec![identity::<f64>(DIM)];
                v.resize(INPUTS, ComplexMatrix::zeros(DIM, DIM));
                v
            },
            1e-12,
        )
        .unwrap();
        let (states, deg) = update_states(&dich, &zero).unwrap();
        // x ≥ 1 has M_x = 0: B_x = 2|0⟩⟨0| + 6(I − |0⟩⟨0|), top eigenvalue 6 (threefold)
        assert!(states[3].amplitudes()[0].norm() < 1e-12);
        assert!(deg >= 1);
    }

    #[test]
    fn final_update_for_orthonormal_states() {
        let states: Vec<Ket> = (0..INPUTS).map(|x| Ket::basis(DIM, x.min(3))).collect();
        let p = update_final_povm(&states, 4).unwrap();
        for x in 0..4 {
            assert!((p.element(x) - states[x].projector()).norm() < 1e-6);
        }
        for x in 4..INPUTS {
            assert!(p.element(x).norm() < 1e-15);
        }
    }

    #[test]
    fn monotone_and_deterministic() {
        let mut cfg = SeesawConfig::new(SeesawMode::Free, 5);
        cfg.restarts = 2;
        cfg.max_iters = 30;
        let a = run_seesaw(&cfg, None).unwrap();
        let b = run_seesaw(&cfg, None).unwrap();
        assert_eq!(a.values, b.values);
        for w in a.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn fixed_mode_requires_final() {
        let cfg = SeesawConfig::new(SeesawMode::FixedFinal, 0);
        assert!(matches!(
            run_seesaw(&cfg, None),
            Err(Error::InvalidConfig(_))
        ));
        assert!("projective-relaxed".parse::<SeesawMode>().is_ok());
        assert!("nope".parse::<SeesawMode>().is_err());
    }
}
