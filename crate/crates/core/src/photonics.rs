//! Shot-noise model of the four-core fiber setup: modulator-parametrized
//! preparations, projective analysis through the four-port Hadamard coupler,
//! the seven-outcome beamsplitter stage and Poissonian detection.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Strategy, DIM, INPUTS};
use crate::linalg::{eigh_unchecked, hermitian_part};
use crate::random::stream_rng;
use crate::stats::{CountMetadata, CountTable, Setting, PROJ_OUTCOMES};
use crate::{ComplexMatrix, ComplexVector, Ket, Povm};

/// Amplitudes below this are treated as switched off.
const AMPLITUDE_EPS: f64 = 1e-12;

/// Alice's intensity and phase modulators, one per core.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparationSetting {
    pub alpha: [f64; DIM],
    pub phases: [f64; DIM],
}

/// Bob's modulators in front of the analysis coupler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSetting {
    pub beta: [f64; DIM],
    pub phases: [f64; DIM],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Mean photon number per pulse; only documents the count scale.
    pub mu: f64,
    /// Mean detected counts per setting.
    pub shots: u64,
    /// Interference contrast: `p → v p + (1 − v)/n`.
    pub visibility: f64,
    /// Standard deviation of Gaussian noise on each preparation phase (radians).
    pub phase_jitter: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            mu: 0.2,
            shots: 10_000,
            visibility: 0.997,
            phase_jitter: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if self.shots == 0 {
            return Err(Error::InvalidConfig("shots must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidConfig(format!(
                "visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        if !(self.phase_jitter >= 0.0) {
            return Err(Error::InvalidConfig(
                "phase jitter must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn check_transmissivities(v: &[f64; DIM]) -> Result<()> {
    if let Some(a) = v.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::InvalidConfig(format!(
            "transmissivity {a} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `|χ⟩ ∝ Σ_j α_j e^{iφ_j} |j⟩`.
pub fn prepared_state(s: &PreparationSetting) -> Result<Ket> {
    check_transmissivities(&s.alpha)?;
    if s.alpha.iter().all(|&a| a <= AMPLITUDE_EPS) {
        return Err(Error::ZeroState);
    }
    let v = ComplexVector::from_iterator(
        DIM,
        (0..DIM).map(|j| Complex::from_polar(s.alpha[j], s.phases[j])),
    );
    Ket::normalize(v)
}

fn modulus_and_phase(k: &Ket) -> ([f64; DIM], [f64; DIM]) {
    let amps = k.amplitudes();
    let max = amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut mag = [0.0; DIM];
    let mut ph = [0.0; DIM];
    for j in 0..DIM {
        let z = amps[j];
        if z.norm() > AMPLITUDE_EPS {
            mag[j] = z.norm() / max;
            ph[j] = z.arg();
        }
    }
    (mag, ph)
}

/// Inverse of [`prepared_state`] up to a global phase: `α_j = |c_j|/max|c|`, `φ_j = arg c_j`.
pub fn settings_for_state(target: &Ket) -> PreparationSetting {
    let (alpha, phases) = modulus_and_phase(target);
    PreparationSetting { alpha, phases }
}

/// Analysis setting whose first basis vector is `|e⟩`.
pub fn settings_for_projector(e: &Ket) -> AnalysisSetting {
    let (beta, phases) = modulus_and_phase(e);
    AnalysisSetting { beta, phases }
}

/// Orthonormal analysis basis: Gram–Schmidt of `|ζ_j⟩ ∝ Σ_k u_{kj} β_k e^{iφ_k} |k⟩`
/// in detector order, completed by standard basis vectors when the modulated
/// columns are linearly dependent.
pub fn analysis_basis(a: &AnalysisSetting) -> Result<Vec<Ket>> {
    check_transmissivities(&a.beta)?;
    if a.beta.iter().all(|&b| b <= AMPLITUDE_EPS) {
        return Err(Error::ZeroTransmission);
    }
    let u = crate::builtin::builtin_matrices().u4.matrix();
    let candidates = (0..DIM)
        .map(|j| {
            ComplexVector::from_iterator(
                DIM,
                (0..DIM).map(|k| u[(k, j)] * Complex::from_polar(a.beta[k], a.phases[k])),
            )
        })
        .chain((0..DIM).map(|k| Ket::basis(DIM, k).into_amplitudes()));
    let mut basis: Vec<ComplexVector> = Vec::with_capacity(DIM);
    for mut v in candidates {
        if basis.len() == DIM {
            break;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
        }
        if v.norm() > 1e-9 {
            let n = v.norm();
            basis.push(v / Complex::new(n, 0.0));
        }
    }
    basis.into_iter().map(Ket::normalize).collect()
}

/// Detector probabilities behind the analysis coupler; detector 1 is `b = 1`.
pub fn projective_probs(state: &Ket, a: &AnalysisSetting) -> Result<[f64; PROJ_OUTCOMES]> {
    if state.dim() != DIM {
        return Err(Error::DimensionMismatch {
            expected: DIM,
            found: state.dim(),
        });
    }
    let basis = analysis_basis(a)?;
    let mut p = [0.0; PROJ_OUTCOMES];
    for (j, z) in basis.iter().enumerate() {
        p[j] = z.fidelity(state);
    }
    Ok(p)
}

/// Literal modulator-then-coupler model with loss renormalization:
/// `p_j ∝ |(U4 · diag(β e^{−iφ}) χ)_j|²`. Agrees with [`projective_probs`]
/// when all `β_k` are equal.
pub fn modulator_probs(state: &Ket, a: &AnalysisSetting) -> Result<[f64; PROJ_OUTCOMES]> {
    check_transmissivities(&a.beta)?;
    let u = crate::builtin::builtin_matrices().u4.matrix();
    let c = state.amplitudes();
    let m = ComplexVector::from_iterator(
        DIM,
        (0..DIM).map(|k| Complex::from_polar(a.beta[k], -a.phases[k]) * c[k]),
    );
    let norm2 = m.norm_squared();
    if norm2 <= AMPLITUDE_EPS * AMPLITUDE_EPS {
        return Err(Error::ZeroTransmission);
    }
    let out = u.transpose() * m;
    let mut p = [0.0; PROJ_OUTCOMES];
    for j in 0..DIM {
        p[j] = out[j].norm_sqr() / norm2;
    }
    Ok(p)
}

/// Born probabilities `⟨χ|Π_b|χ⟩`, clipped at zero.
pub fn povm_probs(state: &Ket, p: &Povm) -> Result<Vec<f64>> {
    Ok(p.probabilities(state)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect())
}

/// Unit vector of a rank-one projector `E = |e⟩⟨e|`.
pub fn projector_direction(e: &ComplexMatrix, index: usize) -> Result<Ket> {
    let eig = eigh_unchecked(&hermitian_part(e));
    let n = eig.values.len();
    let second = if n > 1 { eig.values[n - 2] } else { 0.0 };
    if second > 1e-6 || (eig.max() - 1.0).abs() > 1e-6 {
        return Err(Error::NotRankOne { index, second });
    }
    Ket::normalize(eig.vector(n - 1))
}

fn mix(p: &mut [f64], visibility: f64) {
    let total: f64 = p.iter().sum();
    let n = p.len() as f64;
    for v in p.iter_mut() {
        *v = visibility * (*v / total) + (1.0 - visibility) / n;
    }
}

fn draw_counts<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], shots: u64) -> Vec<u64> {
    probs
        .iter()
        .map(|&p| {
            let mean = shots as f64 * p;
            if mean <= 0.0 {
                0
            } else {
                Poisson::new(mean)
                    .expect("positive finite mean")
                    .sample(rng) as u64
            }
        })
        .collect()
}

fn jittered<R: Rng + ?Sized>(rng: &mut R, psi: &Ket, sigma: f64) -> Result<Ket> {
    let mut s = settings_for_state(psi);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for ph in s.phases.iter_mut() {
            *ph += normal.sample(rng);
        }
    }
    prepared_state(&s)
}

/// Simulates every PROJ and POVM setting of the game. Setting `i` (in
/// [`Setting::all`] order) draws from its own stream, so tables are
/// reproducible per seed. Projective measurements must be rank one.
pub fn simulate_counts(strategy: &Strategy, noise: &NoiseModel, seed: u64) -> Result<CountTable> {
    noise.validate()?;
    if strategy.dim() != DIM {
        return Err(Error::DimensionMismatch {
            expected: DIM,
            found: strategy.dim(),
        });
    }
    let analysis = (0..INPUTS)
        .map(|y| projector_direction(strategy.effect(y), y).map(|e| settings_for_projector(&e)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = CountTable::new(CountMetadata {
        shots_per_setting: noise.shots,
        source: "simulation".into(),
        seed: Some(seed),
    });
    for (i, setting) in Setting::all().into_iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let chi = jittered(
            &mut rng,
            &strategy.states()[setting.x - 1],
            noise.phase_jitter,
        )?;
        let mut probs = match setting.y {
            Some(y) => projective_probs(&chi, &analysis[y - 1])?.to_vec(),
            None => povm_probs(&chi, strategy.final_povm())?,
        };
        mix(&mut probs, noise.visibility);
        let counts = draw_counts(&mut rng, &probs, noise.shots);
        table.insert(setting, counts)?;
    }
    Ok(table)
}
