//! POVMs realized by a D-port multiport beamsplitter acting on d input ports.
//!
//! Feeding a d-dimensional path-encoded system into ports `k_1..k_d` of a
//! D×D unitary `U` and detecting all D outputs realizes the rank-one POVM
//! `Π_j = |η_j⟩⟨η_j|` with `|η_j⟩ = Φ† M |j⟩`, where `M` is the d×D block of
//! `U†` formed by rows `k_1..k_d` and `Φ = diag(e^{iθ})` holds the input phases.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigh_unchecked, hermitian_part, nearest_unitary, unitarity_deviation};
use crate::{ComplexMatrix, ComplexVector, Ket, Povm};

/// Completeness tolerance for objects built from exactly unitary input.
pub const INTERNAL_TOL: f64 = 1e-8;

/// Rank-one test: second-largest eigenvalue of an element must not exceed this.
pub const RANK_ONE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiportUnitary {
    label: String,
    matrix: ComplexMatrix,
    tolerance: f64,
}

impl MultiportUnitary {
    /// `tolerance` bounds `‖U U† − I‖_F`; use [`INTERNAL_TOL`] for computed
    /// unitaries and a looser data tolerance for transcribed ones.
    pub fn new(label: impl Into<String>, matrix: ComplexMatrix, tolerance: f64) -> Result<Self> {
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Parse("unitary has non-finite entries".into()));
        }
        let deviation = unitarity_deviation(&matrix)?;
        if deviation > tolerance {
            return Err(Error::NotUnitary {
                deviation,
                tolerance,
            });
        }
        Ok(Self {
            label: label.into(),
            matrix,
            tolerance,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn ports(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn unitarity_deviation(&self) -> f64 {
        unitarity_deviation(&self.matrix).expect("square by construction")
    }

    /// Replaces the matrix by its polar factor and tightens the tolerance.
    pub fn cleaned(&self) -> Result<Self> {
        let u = nearest_unitary(&self.matrix)?;
        Self::new(format!("{}-polar", self.label), u, INTERNAL_TOL)
    }
}

/// Choice of input ports (1-based) and the phases applied on them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PovmSpec {
    subset: Vec<usize>,
    phases: Vec<f64>,
}

impl PovmSpec {
    pub fn new(subset: Vec<usize>, phases: Vec<f64>, ports: usize) -> Result<Self> {
        if subset.is_empty() || subset.len() > ports {
            return Err(Error::InvalidDims(format!(
                "{} input ports requested on a {ports}-port device",
                subset.len()
            )));
        }
        if phases.len() != subset.len() {
            return Err(Error::DimensionMismatch {
                expected: subset.len(),
                found: phases.len(),
            });
        }
        for (i, &k) in subset.iter().enumerate() {
            if k == 0 || k > ports {
                return Err(Error::IndexOutOfRange { index: k, ports });
            }
            if subset[..i].contains(&k) {
                return Err(Error::InvalidDims(format!("port {k} listed twice")));
            }
        }
        Ok(Self { subset, phases })
    }

    pub fn zero_phase(subset: Vec<usize>, ports: usize) -> Result<Self> {
        let n = subset.len();
        Self::new(subset, vec![0.0; n], ports)
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn dim(&self) -> usize {
        self.subset.len()
    }
}

/// The d×D matrix `Φ† M`; column j is the unnormalized vector `|η_j⟩`.
pub fn measurement_matrix(u: &MultiportUnitary, spec: &PovmSpec) -> Result<ComplexMatrix> {
    let ports = u.ports();
    let spec = PovmSpec::new(spec.subset.clone(), spec.phases.clone(), ports)?;
    let adj = u.matrix().adjoint();
    let mut m = ComplexMatrix::zeros(spec.dim(), ports);
    for (i, (&k, &theta)) in spec.subset.iter().zip(&spec.phases).enumerate() {
        let ph = Complex::from_polar(1.0, -theta);
        for j in 0..ports {
            m[(i, j)] = ph * adj[(k - 1, j)];
        }
    }
    Ok(m)
}

/// Rank-one POVM `{|c_j⟩⟨c_j|}` from the columns of a d×D matrix.
pub fn povm_from_columns(m: &ComplexMatrix, tolerance: f64) -> Result<Povm> {
    let cols: Vec<ComplexVector> = m.column_iter().map(|c| c.into_owned()).collect();
    Povm::from_vectors(&cols, tolerance)
}

/// D-outcome POVM on C^d; completeness is checked at the unitary's tolerance
/// (never tighter than [`INTERNAL_TOL`]).
pub fn build_povm(u: &MultiportUnitary, spec: &PovmSpec) -> Result<Povm> {
    let m = measurement_matrix(u, spec)?;
    povm_from_columns(&m, u.tolerance().max(INTERNAL_TOL))
}

/// All d-element subsets of `1..=ports` in lexicographic order.
pub fn enumerate_subsets(ports: usize, d: usize) -> Result<Vec<Vec<usize>>> {
    if d == 0 || d > ports {
        return Err(Error::InvalidDims(format!(
            "need 1 <= d <= D, got d={d}, D={ports}"
        )));
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=d).collect();
    loop {
        out.push(cur.clone());
        let mut i = d;
        while i > 0 && cur[i - 1] == ports - d + i {
            i -= 1;
        }
        if i == 0 {
            return Ok(out);
        }
        cur[i - 1] += 1;
        for j in i..d {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// `M_b = β_b |φ_b⟩⟨φ_b|` with a fixed element gauge.
#[derive(Clone, Debug)]
pub struct Rank1Form {
    pub weights: Vec<f64>,
    pub directions: Vec<Ket>,
}

impl Rank1Form {
    pub fn reconstruct(&self) -> Vec<ComplexMatrix> {
        self.weights
            .iter()
            .zip(&self.directions)
            .map(|(&b, k)| k.projector() * Complex::new(b, 0.0))
            .collect()
    }
}

/// Gauge: the first amplitude with modulus above this is rotated real positive.
const GAUGE_EPS: f64 = 1e-9;

pub fn fix_gauge(v: &ComplexVector) -> ComplexVector {
    match v.iter().find(|z| z.norm() > GAUGE_EPS) {
        Some(z) => {
            let ph = z.conj() / z.norm();
            v * ph
        }
        None => v.clone(),
    }
}

pub fn canonical_rank1_form(p: &Povm) -> Result<Rank1Form> {
    let dim = p.dim();
    let mut weights = Vec::with_capacity(p.len());
    let mut directions = Vec::with_capacity(p.len());
    for (index, e) in p.elements().iter().enumerate() {
        let eig = eigh_unchecked(&hermitian_part(e));
        let top = eig.max();
        let second = if dim > 1 { eig.values[dim - 2] } else { 0.0 };
        if second > RANK_ONE_TOL {
            return Err(Error::NotRankOne { index, second });
        }
        let beta: f64 = (0..dim).map(|i| e[(i, i)].re).sum();
        let dir = if top > GAUGE_EPS {
            Ket::normalize(fix_gauge(&eig.vector(dim - 1)))?
        } else {
            Ket::basis(dim, 0)
        };
        weights.push(beta);
        directions.push(dir);
    }
    Ok(Rank1Form {
        weights,
        directions,
    })
}

/// Largest Frobenius distance between corresponding elements.
pub fn povm_distance(p: &Povm, q: &Povm) -> Result<f64> {
    if p.dim() != q.dim() || p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} outcomes on C^{} vs {} outcomes on C^{}",
            p.len(),
            p.dim(),
            q.len(),
            q.dim()
        )));
    }
    Ok(p.elements()
        .iter()
        .zip(q.elements())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

/// Element-wise operator comparison, insensitive to per-element phases of `|η_b⟩`.
pub fn povm_equivalent(p: &Povm, q: &Povm, tol: f64) -> Result<bool> {
    Ok(povm_distance(p, q)? <= tol)
}

/// A printed d×D measurement matrix: row k = input port, column j = outcome.
#[derive(Clone, Debug)]
pub struct PrintedPovm {
    pub label: String,
    pub subset: Vec<usize>,
    pub matrix: ComplexMatrix,
}

#[derive(Clone, Debug, Serialize)]
pub struct PovmComparison {
    pub label: String,
    pub subset: Vec<usize>,
    /// `‖Σ_j |c_j⟩⟨c_j| − I‖_F` of the printed matrix.
    pub completeness_deviation: f64,
    /// Largest element-wise entry modulus mismatch against the rebuilt matrix.
    pub magnitude_deviation: f64,
    /// Largest element-wise operator distance against the rebuilt POVM.
    pub operator_deviation: f64,
    pub equivalent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DataQualityReport {
    pub unitary: String,
    pub unitarity_deviation: f64,
    pub tolerance: f64,
    pub comparisons: Vec<PovmComparison>,
    /// Labels whose operators differ from the rebuilt ones beyond `tolerance`.
    pub discrepancies: Vec<String>,
}

/// Compares printed measurement matrices with the POVMs rebuilt from `u`.
pub fn compare_with_printed(
    u: &MultiportUnitary,
    printed: &[PrintedPovm],
    tolerance: f64,
) -> Result<DataQualityReport> {
    let mut comparisons = Vec::with_capacity(printed.len());
    for a in printed {
        let spec = PovmSpec::zero_phase(a.subset.clone(), u.ports())?;
        let rebuilt = measurement_matrix(u, &spec)?;
        if rebuilt.shape() != a.matrix.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{} has shape {:?}",
                a.label,
                a.matrix.shape()
            )));
        }
        let gram = &a.matrix * a.matrix.adjoint();
        let completeness_deviation =
            (gram - ComplexMatrix::identity(spec.dim(), spec.dim())).norm();
        let magnitude_deviation = a
            .matrix
            .iter()
            .zip(rebuilt.iter())
            .map(|(x, y)| (x.norm() - y.norm()).abs())
            .fold(0.0, f64::max);
        let operator_deviation = a
            .matrix
            .column_iter()
            .zip(rebuilt.column_iter())
            .map(|(x, y)| (x * x.adjoint() - y * y.adjoint()).norm())
            .fold(0.0, f64::max);
        comparisons.push(PovmComparison {
            label: a.label.clone(),
            subset: a.subset.clone(),
            completeness_deviation,
            magnitude_deviation,
            operator_deviation,
            equivalent: operator_deviation <= tolerance,
        });
    }
    let discrepancies = comparisons
        .iter()
        .filter(|c| !c.equivalent)
        .map(|c| c.label.clone())
        .collect();
    Ok(DataQualityReport {
        unitary: u.label().to_string(),
        unitarity_deviation: u.unitarity_deviation(),
        tolerance,
        comparisons,
        discrepancies,
    })
}
