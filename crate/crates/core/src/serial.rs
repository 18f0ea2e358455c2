//! JSON documents for matrices, kets and POVMs.
//!
//! Complex numbers are `[re, im]` pairs; matrices are row-major nested arrays.

use std::fs;
use std::path::Path;

use num_complex::Complex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, Ket, Povm};
use crate::scalar::Scalar;

fn to_pair<T: Scalar>(z: &Complex<T>) -> [f64; 2] {
    [z.re.as_f64(), z.im.as_f64()]
}

fn from_pair<T: Scalar>(p: &[f64; 2]) -> Result<Complex<T>> {
    if !p[0].is_finite() || !p[1].is_finite() {
        return Err(Error::Parse(format!(
            "non-finite entry [{}, {}]",
            p[0], p[1]
        )));
    }
    Ok(Complex::new(T::lit(p[0]), T::lit(p[1])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Scalar>(m: &CMatrix<T>) -> Self {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| to_pair(&m[(i, j)])).collect())
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<CMatrix<T>> {
        if self.entries.len() != self.rows || self.entries.iter().any(|r| r.len() != self.cols) {
            return Err(Error::ShapeMismatch(format!(
                "declared {}x{} but entries disagree",
                self.rows, self.cols
            )));
        }
        let mut m = CMatrix::zeros(self.rows, self.cols);
        for (i, row) in self.entries.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                m[(i, j)] = from_pair(p)?;
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KetDoc {
    pub dim: usize,
    pub amplitudes: Vec<[f64; 2]>,
}

impl KetDoc {
    pub fn from_ket<T: Scalar>(k: &Ket<T>) -> Self {
        Self {
            dim: k.dim(),
            amplitudes: k.amplitudes().iter().map(to_pair).collect(),
        }
    }

    pub fn to_vector<T: Scalar>(&self) -> Result<CVector<T>> {
        if self.amplitudes.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.amplitudes.len(),
            });
        }
        let amps = self
            .amplitudes
            .iter()
            .map(from_pair)
            .collect::<Result<Vec<Complex<T>>>>()?;
        Ok(CVector::from_vec(amps))
    }

    /// Strict: the stored amplitudes must already be normalized.
    pub fn to_ket<T: Scalar>(&self) -> Result<Ket<T>> {
        Ket::new(self.to_vector()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmDoc {
    pub dim: usize,
    /// Completeness tolerance; absent means the strict internal default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub elements: Vec<MatrixDoc>,
}

impl PovmDoc {
    pub fn from_povm<T: Scalar>(p: &Povm<T>) -> Self {
        Self {
            dim: p.dim(),
            tolerance: Some(p.tolerance().as_f64()),
            elements: p.elements().iter().map(MatrixDoc::from_matrix).collect(),
        }
    }

    pub fn to_povm<T: Scalar>(&self) -> Result<Povm<T>> {
        let elements = self
            .elements
            .iter()
            .map(|e| e.to_matrix())
            .collect::<Result<Vec<CMatrix<T>>>>()?;
        if let Some(e) = elements.iter().find(|e| e.nrows() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: e.nrows(),
            });
        }
        let tol = T::lit(self.tolerance.unwrap_or(1e-8));
        Povm::new(elements, tol)
    }
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
