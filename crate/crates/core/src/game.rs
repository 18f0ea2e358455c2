//! The seven-input prepare-and-measure game and its score
//!
//! `W = Σ_{x,y} (1+δ_{xy}) p(b=δ_{xy}|x,y) + 3 Σ_x p(b'=x|x)`.
//!
//! Labels are 1-based in files and reports and 0-based in code.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{identity, trace_inner};
use crate::serial::{KetDoc, PovmDoc};
use crate::{ComplexMatrix, Ket, Povm};

pub const INPUTS: usize = 7;
pub const DIM: usize = 4;
/// Maximum attainable score: 14 + 42 + 21.
pub const MAX_SCORE: f64 = 77.0;

/// Seven preparations, seven dichotomic measurements and one seven-outcome
/// measurement. Dichotomic POVMs are ordered `[E_{0|y}, E_{1|y}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    states: Vec<Ket>,
    dichotomic: Vec<Povm>,
    final_povm: Povm,
}

impl Strategy {
    pub fn new(states: Vec<Ket>, dichotomic: Vec<Povm>, final_povm: Povm) -> Result<Self> {
        for (what, n) in [
            ("states", states.len()),
            ("dichotomic measurements", dichotomic.len()),
        ] {
            if n != INPUTS {
                return Err(Error::InvalidDims(format!(
                    "expected {INPUTS} {what}, got {n}"
                )));
            }
        }
        if final_povm.len() != INPUTS {
            return Err(Error::InvalidDims(format!(
                "final measurement needs {INPUTS} outcomes, got {}",
                final_povm.len()
            )));
        }
        let dim = final_povm.dim();
        for s in &states {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
        }
        for d in &dichotomic {
            if d.len() != 2 {
                return Err(Error::InvalidDims(format!(
                    "dichotomic measurement has {} outcomes",
                    d.len()
                )));
            }
            if d.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.dim(),
                });
            }
        }
        Ok(Self {
            states,
            dichotomic,
            final_povm,
        })
    }

    /// Builds the dichotomic measurements `[I − E_y, E_y]` from the effects `E_{1|y}`.
    pub fn from_effects(
        states: Vec<Ket>,
        effects: Vec<ComplexMatrix>,
        final_povm: Povm,
        tolerance: f64,
    ) -> Result<Self> {
        let dichotomic = effects
            .into_iter()
            .map(|e| Povm::dichotomic(e, tolerance))
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, dichotomic, final_povm)
    }

    pub fn dim(&self) -> usize {
        self.final_povm.dim()
    }

    pub fn states(&self) -> &[Ket] {
        &self.states
    }

    pub fn dichotomic(&self) -> &[Povm] {
        &self.dichotomic
    }

    pub fn final_povm(&self) -> &Povm {
        &self.final_povm
    }

    /// `E_{1|y}` for 0-based `y`.
    pub fn effect(&self, y: usize) -> &ComplexMatrix {
        self.dichotomic[y].element(1)
    }

    pub fn effects(&self) -> Vec<ComplexMatrix> {
        (0..INPUTS).map(|y| self.effect(y).clone()).collect()
    }

    /// Relabels inputs and final outcomes by `perm` (a permutation of the first
    /// four labels, 0-based); labels 5..7 stay fixed.
    pub fn relabeled(&self, perm: &[usize; 4]) -> Self {
        let map = |i: usize| if i < 4 { perm[i] } else { i };
        let mut states = self.states.clone();
        let mut dichotomic = self.dichotomic.clone();
        let mut finals = self.final_povm.elements().to_vec();
        for i in 0..INPUTS {
            states[map(i)] = self.states[i].clone();
            dichotomic[map(i)] = self.dichotomic[i].clone();
            finals[map(i)] = self.final_povm.element(i).clone();
        }
        let final_povm =
            Povm::new(finals, self.final_povm.tolerance()).expect("relabeling preserves validity");
        Self {
            states,
            dichotomic,
            final_povm,
        }
    }

    pub fn to_doc(&self) -> StrategyDoc {
        StrategyDoc {
            states: self.states.iter().map(KetDoc::from_ket).collect(),
            dichotomic: self.dichotomic.iter().map(PovmDoc::from_povm).collect(),
            final_povm: PovmDoc::from_povm(&self.final_povm),
        }
    }

    pub fn from_doc(doc: &StrategyDoc) -> Result<Self> {
        let states = doc
            .states
            .iter()
            .map(|k| k.to_ket())
            .collect::<Result<Vec<_>>>()?;
        let dichotomic = doc
            .dichotomic
            .iter()
            .map(|p| p.to_povm())
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, dichotomic, doc.final_povm.to_povm()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_doc(&crate::serial::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::serial::write_json(path, &self.to_doc())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyDoc {
    pub states: Vec<KetDoc>,
    pub dichotomic: Vec<PovmDoc>,
    #[serde(rename = "final")]
    pub final_povm: PovmDoc,
}

/// `proj[x][y] = p(b=δ_{xy}|x,y)` and `povm[x] = p(b'=x|x)`, 0-based, with
/// optional standard deviations of the same shape.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ProbabilityTables {
    pub proj: [[f64; INPUTS]; INPUTS],
    pub povm: [f64; INPUTS],
    pub proj_sigma: Option<[[f64; INPUTS]; INPUTS]>,
    pub povm_sigma: Option<[f64; INPUTS]>,
}

const PROB_SLACK: f64 = 1e-9;

impl ProbabilityTables {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v);
        for x in 0..INPUTS {
            for y in 0..INPUTS {
                if !ok(self.proj[x][y]) {
                    return Err(Error::InvalidConfig(format!(
                        "proj[{}][{}] = {} outside [0, 1]",
                        x + 1,
                        y + 1,
                        self.proj[x][y]
                    )));
                }
            }
            if !ok(self.povm[x]) {
                return Err(Error::InvalidConfig(format!(
                    "povm[{}] = {} outside [0, 1]",
                    x + 1,
                    self.povm[x]
                )));
            }
        }
        Ok(())
    }

    /// Reads the `table,x,y,value,sigma` CSV format. Every proj and povm entry
    /// must be present; sigma columns are all-or-nothing per table.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut proj = [[None; INPUTS]; INPUTS];
        let mut povm = [None; INPUTS];
        for rec in rdr.deserialize::<TableRow>() {
            let row = rec?;
            let x = label(row.x, "x")?;
            match row.table.as_str() {
                "proj" => {
                    let y = label(
                        row.y.ok_or_else(|| {
                            Error::Parse(format!("proj row x={} missing y", x + 1))
                        })?,
                        "y",
                    )?;
                    if proj[x][y].replace((row.value, row.sigma)).is_some() {
                        return Err(Error::Parse(format!(
                            "duplicate proj entry ({}, {})",
                            x + 1,
                            y + 1
                        )));
                    }
                }
                "povm" => {
                    if povm[x].replace((row.value, row.sigma)).is_some() {
                        return Err(Error::Parse(format!("duplicate povm entry {}", x + 1)));
                    }
                }
                other => return Err(Error::Parse(format!("unknown table '{other}'"))),
            }
        }
        let mut t = ProbabilityTables::default();
        let mut ps = [[0.0; INPUTS]; INPUTS];
        let mut proj_has_sigma = true;
        for x in 0..INPUTS {
            for y in 0..INPUTS {
                let (v, s) = proj[x][y]
                    .ok_or_else(|| Error::MissingEntry(format!("proj x={} y={}", x + 1, y + 1)))?;
                t.proj[x][y] = v;
                match s {
                    Some(s) => ps[x][y] = s,
                    None => proj_has_sigma = false,
                }
            }
        }
        let mut qs = [0.0; INPUTS];
        let mut povm_has_sigma = true;
        for x in 0..INPUTS {
            let (v, s) = povm[x].ok_or_else(|| Error::MissingEntry(format!("povm x={}", x + 1)))?;
            t.povm[x] = v;
            match s {
                Some(s) => qs[x] = s,
                None => povm_has_sigma = false,
            }
        }
        t.proj_sigma = proj_has_sigma.then_some(ps);
        t.povm_sigma = povm_has_sigma.then_some(qs);
        t.validate()?;
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for x in 0..INPUTS {
            for y in 0..INPUTS {
                w.serialize(TableRow {
                    table: "proj".into(),
                    x: x + 1,
                    y: Some(y + 1),
                    value: self.proj[x][y],
                    sigma: self.proj_sigma.map(|s| s[x][y]),
                })?;
            }
        }
        for x in 0..INPUTS {
            w.serialize(TableRow {
                table: "povm".into(),
                x: x + 1,
                y: None,
                value: self.povm[x],
                sigma: self.povm_sigma.map(|s| s[x]),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn label(v: usize, name: &str) -> Result<usize> {
    if (1..=INPUTS).contains(&v) {
        Ok(v - 1)
    } else {
        Err(Error::Parse(format!("{name} = {v} outside 1..={INPUTS}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    table: String,
    x: usize,
    y: Option<usize>,
    value: f64,
    sigma: Option<f64>,
}

#[inline]
fn weight(x: usize, y: usize) -> f64 {
    if x == y {
        2.0
    } else {
        1.0
    }
}

pub fn score_breakdown(s: &Strategy) -> ProbabilityTables {
    let mut t = ProbabilityTables::default();
    for (x, psi) in s.states.iter().enumerate() {
        for y in 0..INPUTS {
            let p1 = psi.expectation(s.effect(y));
            t.proj[x][y] = if x == y { p1 } else { 1.0 - p1 };
        }
        t.povm[x] = psi.expectation(s.final_povm.element(x));
    }
    t
}

pub fn score(s: &Strategy) -> f64 {
    score_from_probabilities(&score_breakdown(s)).w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoreEstimate {
    pub w: f64,
    /// Gaussian propagation of the table standard deviations, when present.
    pub sigma: Option<f64>,
}

pub fn score_from_probabilities(t: &ProbabilityTables) -> ScoreEstimate {
    let mut w = 0.0;
    for x in 0..INPUTS {
        for y in 0..INPUTS {
            w += weight(x, y) * t.proj[x][y];
        }
        w += 3.0 * t.povm[x];
    }
    let sigma = match (&t.proj_sigma, &t.povm_sigma) {
        (Some(ps), Some(qs)) => {
            let mut var = 0.0;
            for x in 0..INPUTS {
                for y in 0..INPUTS {
                    var += (weight(x, y) * ps[x][y]).powi(2);
                }
                var += 9.0 * qs[x] * qs[x];
            }
            Some(var.sqrt())
        }
        _ => None,
    };
    ScoreEstimate { w, sigma }
}

/// Score for mixed preparations `ρ_x`, effects `E_{1|y}` and final elements `M_x`.
pub fn score_density(
    rhos: &[ComplexMatrix],
    effects: &[ComplexMatrix],
    finals: &[ComplexMatrix],
) -> Result<f64> {
    if rhos.len() != INPUTS || effects.len() != INPUTS || finals.len() != INPUTS {
        return Err(Error::InvalidDims(
            "need seven states, effects and final elements".into(),
        ));
    }
    let dim = rhos[0].nrows();
    for m in rhos.iter().chain(effects).chain(finals) {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.nrows(),
            });
        }
    }
    let id = identity::<f64>(dim);
    let mut w = 0.0;
    for (x, rho) in rhos.iter().enumerate() {
        for (y, e) in effects.iter().enumerate() {
            w += if x == y {
                2.0 * trace_inner(e, rho)
            } else {
                trace_inner(&(&id - e), rho)
            };
        }
        w += 3.0 * trace_inner(&finals[x], rho);
    }
    Ok(w)
}

/// `Σ_y` block of the objective as an operator: `B_x = 2E_x + Σ_{y≠x}(I − E_y) + 3M_x`.
pub fn state_operator(
    effects: &[ComplexMatrix],
    final_element: &ComplexMatrix,
    x: usize,
) -> ComplexMatrix {
    let dim = final_element.nrows();
    let id = identity::<f64>(dim);
    let mut b = final_element * Complex::new(3.0, 0.0);
    for (y, e) in effects.iter().enumerate() {
        if y == x {
            b += e * Complex::new(2.0, 0.0);
        } else {
            b += &id - e;
        }
    }
    b
}
