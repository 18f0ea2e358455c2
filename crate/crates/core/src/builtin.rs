//! Embedded reference data: the four- and seven-port unitaries, the 35 printed
//! measurement matrices, the reference protocol and the probability tables.
//!
//! All of it is transcribed at four to six decimals, so it carries a data
//! tolerance instead of the strict internal one.

use std::sync::LazyLock;

use num_complex::Complex;
use serde::Deserialize;

use crate::error::Result;
use crate::game::{ProbabilityTables, Strategy};
use crate::mbs::{povm_from_columns, MultiportUnitary, PrintedPovm};
use crate::serial::MatrixDoc;
use crate::{ComplexMatrix, ComplexVector, Ket, Povm};

const U4_JSON: &str = include_str!("../assets/u4.json");
const U7_JSON: &str = include_str!("../assets/u7.json");
const POVMS_JSON: &str = include_str!("../assets/printed_povms.json");
const PROTOCOL_JSON: &str = include_str!("../assets/reference_protocol.json");
const THEORY_CSV: &str = include_str!("../assets/tables_theory.csv");
const EXPERIMENT_CSV: &str = include_str!("../assets/tables_experiment.csv");

/// Tolerance for objects transcribed from four-decimal printouts.
pub const DATA_TOL: f64 = 2e-2;

#[derive(Deserialize)]
struct UnitaryAsset {
    label: String,
    data_tolerance: f64,
    matrix: MatrixDoc,
}

#[derive(Deserialize)]
struct PovmAsset {
    label: String,
    subset: Vec<usize>,
    matrix: MatrixDoc,
}

#[derive(Deserialize)]
struct PovmListAsset {
    povms: Vec<PovmAsset>,
}

#[derive(Deserialize)]
struct ProtocolAsset {
    data_tolerance: f64,
    state_bras: Vec<Vec<[f64; 2]>>,
    projector_bras: Vec<Vec<[f64; 2]>>,
    direction_bras: Vec<Vec<[f64; 2]>>,
    weights: Vec<f64>,
}

pub struct BuiltinMatrices {
    pub u4: MultiportUnitary,
    pub u7: MultiportUnitary,
    /// Printed measurement matrices in lexicographic subset order.
    pub printed: Vec<PrintedPovm>,
}

impl BuiltinMatrices {
    pub fn printed_povm(&self, label: &str) -> Option<&PrintedPovm> {
        self.printed.iter().find(|p| p.label == label)
    }

    /// The printed matrix for input cores 4, 5, 6, 7.
    pub fn m4567(&self) -> &ComplexMatrix {
        &self
            .printed_povm("M4567")
            .expect("M4567 is embedded")
            .matrix
    }
}

fn load_unitary(text: &str) -> MultiportUnitary {
    let a: UnitaryAsset = serde_json::from_str(text).expect("embedded unitary parses");
    let m = a
        .matrix
        .to_matrix()
        .expect("embedded unitary is well formed");
    MultiportUnitary::new(a.label, m, a.data_tolerance)
        .expect("embedded unitary within its data tolerance")
}

static BUILTIN: LazyLock<BuiltinMatrices> = LazyLock::new(|| {
    let list: PovmListAsset = serde_json::from_str(POVMS_JSON).expect("embedded POVM list parses");
    let printed = list
        .povms
        .into_iter()
        .map(|p| PrintedPovm {
            label: p.label,
            subset: p.subset,
            matrix: p
                .matrix
                .to_matrix()
                .expect("embedded POVM matrix is well formed"),
        })
        .collect();
    BuiltinMatrices {
        u4: load_unitary(U4_JSON),
        u7: load_unitary(U7_JSON),
        printed,
    }
});

pub fn builtin_matrices() -> &'static BuiltinMatrices {
    &BUILTIN
}

/// Rank-one POVM from the columns of a printed measurement matrix.
pub fn printed_povm(p: &PrintedPovm) -> Result<Povm> {
    povm_from_columns(&p.matrix, DATA_TOL)
}

pub fn m4567_povm() -> Povm {
    povm_from_columns(builtin_matrices().m4567(), DATA_TOL).expect("M4567 is a valid POVM")
}

fn ket_from_bra(row: &[[f64; 2]]) -> Ket {
    let v = ComplexVector::from_iterator(row.len(), row.iter().map(|p| Complex::new(p[0], -p[1])));
    Ket::normalize(v).expect("embedded vectors are nonzero")
}

/// The reference protocol in rank-one form.
pub struct ReferenceProtocol {
    pub states: Vec<Ket>,
    /// Unit vectors `|e_y⟩` with `E_{1|y} = |e_y⟩⟨e_y|`.
    pub projectors: Vec<Ket>,
    pub directions: Vec<Ket>,
    pub weights: Vec<f64>,
    pub data_tolerance: f64,
}

static PROTOCOL: LazyLock<ReferenceProtocol> = LazyLock::new(|| {
    let a: ProtocolAsset = serde_json::from_str(PROTOCOL_JSON).expect("embedded protocol parses");
    ReferenceProtocol {
        states: a.state_bras.iter().map(|r| ket_from_bra(r)).collect(),
        projectors: a.projector_bras.iter().map(|r| ket_from_bra(r)).collect(),
        directions: a.direction_bras.iter().map(|r| ket_from_bra(r)).collect(),
        weights: a.weights,
        data_tolerance: a.data_tolerance,
    }
});

pub fn reference_protocol() -> &'static ReferenceProtocol {
    &PROTOCOL
}

/// Reference strategy: printed states, rank-one projectors and the
/// seven-outcome measurement `β_b |φ_b⟩⟨φ_b|`.
pub fn reference_strategy() -> Strategy {
    let p = reference_protocol();
    let finals = p
        .weights
        .iter()
        .zip(&p.directions)
        .map(|(&b, k)| k.projector() * Complex::new(b, 0.0))
        .collect();
    let fin =
        Povm::new(finals, p.data_tolerance).expect("reference measurement within data tolerance");
    let effects = p.projectors.iter().map(|k| k.projector()).collect();
    Strategy::from_effects(p.states.clone(), effects, fin, 1e-8)
        .expect("reference strategy is valid")
}

/// Printed theory and experimental tables, in that order.
pub fn golden_tables() -> (ProbabilityTables, ProbabilityTables) {
    let theory =
        ProbabilityTables::read_csv(THEORY_CSV.as_bytes()).expect("embedded theory table parses");
    let experiment = ProbabilityTables::read_csv(EXPERIMENT_CSV.as_bytes())
        .expect("embedded experiment table parses");
    (theory, experiment)
}

/// Raw CSV text of the embedded tables (theory, experiment).
pub fn golden_tables_csv() -> (&'static str, &'static str) {
    (THEORY_CSV, EXPERIMENT_CSV)
}
