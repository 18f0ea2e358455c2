//! Detector counts to probabilities, error propagation and significance.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::game::{score_from_probabilities, ProbabilityTables, INPUTS};

/// Detectors behind the four-output analysis interferometer.
pub const PROJ_OUTCOMES: usize = 4;
/// Detectors behind the seven-output beamsplitter.
pub const POVM_OUTCOMES: usize = INPUTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SettingKind {
    Proj,
    Povm,
}

/// One measurement configuration; `y` is present only for `Proj`. 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Setting {
    pub kind: SettingKind,
    pub x: usize,
    pub y: Option<usize>,
}

impl Setting {
    pub fn proj(x: usize, y: usize) -> Self {
        Self {
            kind: SettingKind::Proj,
            x,
            y: Some(y),
        }
    }

    pub fn povm(x: usize) -> Self {
        Self {
            kind: SettingKind::Povm,
            x,
            y: None,
        }
    }

    pub fn outcomes(&self) -> usize {
        match self.kind {
            SettingKind::Proj => PROJ_OUTCOMES,
            SettingKind::Povm => POVM_OUTCOMES,
        }
    }

    fn describe(&self) -> String {
        match self.y {
            Some(y) => format!("PROJ x={} y={}", self.x, y),
            None => format!("POVM x={}", self.x),
        }
    }

    /// All 49 + 7 settings in file order.
    pub fn all() -> Vec<Setting> {
        let mut v = Vec::with_capacity(INPUTS * INPUTS + INPUTS);
        for x in 1..=INPUTS {
            for y in 1..=INPUTS {
                v.push(Setting::proj(x, y));
            }
        }
        v.extend((1..=INPUTS).map(Setting::povm));
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountMetadata {
    pub shots_per_setting: u64,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Counts per setting, indexed by 1-based detector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountTable {
    counts: BTreeMap<Setting, Vec<u64>>,
    pub metadata: CountMetadata,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountRow {
    kind: SettingKind,
    x: usize,
    y: Option<usize>,
    outcome: usize,
    counts: u64,
}

impl CountTable {
    pub fn new(metadata: CountMetadata) -> Self {
        Self {
            counts: BTreeMap::new(),
            metadata,
        }
    }

    /// Stores all detector counts of one setting.
    pub fn insert(&mut self, setting: Setting, counts: Vec<u64>) -> Result<()> {
        check_setting(&setting)?;
        if counts.len() != setting.outcomes() {
            return Err(Error::DimensionMismatch {
                expected: setting.outcomes(),
                found: counts.len(),
            });
        }
        if self.counts.insert(setting, counts).is_some() {
            return Err(Error::Parse(format!(
                "duplicate setting {}",
                setting.describe()
            )));
        }
        Ok(())
    }

    pub fn get(&self, setting: &Setting) -> Option<&[u64]> {
        self.counts.get(setting).map(|v| v.as_slice())
    }

    pub fn settings(&self) -> impl Iterator<Item = (&Setting, &Vec<u64>)> {
        self.counts.iter()
    }

    pub fn read_csv<R: Read>(reader: R, metadata: CountMetadata) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut partial: BTreeMap<Setting, Vec<Option<u64>>> = BTreeMap::new();
        for rec in rdr.deserialize::<CountRow>() {
            let row = rec?;
            let setting = match row.kind {
                SettingKind::Proj => Setting::proj(
                    row.x,
                    row.y
                        .ok_or_else(|| Error::Parse(format!("PROJ row x={} without y", row.x)))?,
                ),
                SettingKind::Povm => {
                    if row.y.is_some() {
                        return Err(Error::Parse(format!("POVM row x={} has a y value", row.x)));
                    }
                    Setting::povm(row.x)
                }
            };
            check_setting(&setting)?;
            let slots = partial
                .entry(setting)
                .or_insert_with(|| vec![None; setting.outcomes()]);
            if row.outcome == 0 || row.outcome > slots.len() {
                return Err(Error::IndexOutOfRange {
                    index: row.outcome,
                    ports: slots.len(),
                });
            }
            if slots[row.outcome - 1].replace(row.counts).is_some() {
                return Err(Error::Parse(format!(
                    "duplicate outcome {} for {}",
                    row.outcome,
                    setting.describe()
                )));
            }
        }
        let mut table = CountTable::new(metadata);
        for (setting, slots) in partial {
            let counts = slots
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    c.ok_or_else(|| {
                        Error::MissingEntry(format!("{} outcome {}", setting.describe(), i + 1))
                    })
                })
                .collect::<Result<Vec<u64>>>()?;
            table.counts.insert(setting, counts);
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (s, counts) in &self.counts {
            for (i, &c) in counts.iter().enumerate() {
                w.serialize(CountRow {
                    kind: s.kind,
                    x: s.x,
                    y: s.y,
                    outcome: i + 1,
                    counts: c,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar metadata path: `counts.csv` → `counts.meta.json`.
    pub fn metadata_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }

    /// Loads the CSV and, when present, its metadata sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = Self::metadata_path(path);
        let metadata = if meta_path.exists() {
            crate::serial::read_json(&meta_path)?
        } else {
            CountMetadata::default()
        };
        Self::read_csv(std::fs::File::open(path)?, metadata)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)?;
        crate::serial::write_json(&Self::metadata_path(path), &self.metadata)
    }
}

fn check_setting(s: &Setting) -> Result<()> {
    for v in std::iter::once(s.x).chain(s.y) {
        if v == 0 || v > INPUTS {
            return Err(Error::IndexOutOfRange {
                index: v,
                ports: INPUTS,
            });
        }
    }
    Ok(())
}

/// First-order standard deviation of `k / n` with independent Poisson
/// counts `k` and `n − k`: `sqrt(p (1 − p) / n)`.
pub fn ratio_sigma(hits: u64, total: u64) -> f64 {
    let n = total as f64;
    let p = hits as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityEstimate {
    pub tables: ProbabilityTables,
    /// Settings whose estimate sits at 0 or 1, where the propagated σ is 0.
    pub degenerate: Vec<String>,
}

/// Probabilities `p(b=δ_{xy})` (detector 1 is `b = 1`, detectors 2..4 are
/// `b = 0`) and `p(b'=x)` with Poisson-propagated standard deviations.
pub fn counts_to_probabilities(t: &CountTable) -> Result<ProbabilityEstimate> {
    let mut tables = ProbabilityTables::default();
    let mut ps = [[0.0; INPUTS]; INPUTS];
    let mut qs = [0.0; INPUTS];
    let mut degenerate = Vec::new();
    for s in Setting::all() {
        let counts = t
            .get(&s)
            .ok_or_else(|| Error::MissingEntry(format!("no counts for {}", s.describe())))?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptySetting(s.describe()));
        }
        let x = s.x - 1;
        let hits = match s.y {
            Some(y) if y == s.x => counts[0],
            Some(_) => total - counts[0],
            None => counts[x],
        };
        if hits == 0 || hits == total {
            degenerate.push(s.describe());
        }
        let p = hits as f64 / total as f64;
        let sigma = ratio_sigma(hits, total);
        match s.y {
            Some(y) => {
                tables.proj[x][y - 1] = p;
                ps[x][y - 1] = sigma;
            }
            None => {
                tables.povm[x] = p;
                qs[x] = sigma;
            }
        }
    }
    tables.proj_sigma = Some(ps);
    tables.povm_sigma = Some(qs);
    Ok(ProbabilityEstimate { tables, degenerate })
}

/// One-sided upper tail `P(Z > z)` of the standard normal.
pub fn normal_tail(z: f64) -> f64 {
    Normal::standard().sf(z)
}

/// `z = (W − bound)/σ` and its one-sided p-value.
pub fn certification_pvalue(w: f64, sigma: f64, bound: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::NonpositiveSigma(sigma));
    }
    let z = (w - bound) / sigma;
    Ok((z, normal_tail(z)))
}

#[derive(Clone, Debug, Serialize)]
pub struct Certification {
    #[serde(rename = "W")]
    pub w: f64,
    pub sigma: f64,
    pub z: f64,
    pub p: f64,
    pub bound: f64,
    pub threshold: f64,
    pub certified: bool,
}

/// Scores a table with σ entries and tests it against `bound` at `threshold`.
pub fn certify(t: &ProbabilityTables, bound: f64, threshold: f64) -> Result<Certification> {
    let est = score_from_probabilities(t);
    let sigma = est.sigma.ok_or_else(|| {
        Error::MissingEntry("standard deviations are required for certification".into())
    })?;
    let (z, p) = certification_pvalue(est.w, sigma, bound)?;
    Ok(Certification {
        w: est.w,
        sigma,
        z,
        p,
        bound,
        threshold,
        certified: p < threshold,
    })
}

/// Printed theory and experimental tables (theory first).
pub fn golden_tables() -> (ProbabilityTables, ProbabilityTables) {
    crate::builtin::golden_tables()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: erfc by its continued fraction, halved.
    fn tail_oracle(z: f64) -> f64 {
        let x = z / std::f64::consts::SQRT_2;
        if x < 2.0 {
            // Maclaurin series of erf
            let mut sum = 0.0;
            let mut term = x;
            let mut n = 0.0;
            while term.abs() > 1e-18 {
                sum += term / (2.0 * n + 1.0);
                n += 1.0;
                term *= -x * x / n;
            }
            0.5 * (1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum)
        } else {
            let mut f = 0.0;
            for k in (1..200).rev() {
                f = (k as f64 / 2.0) / (x + f);
            }
            0.5 * (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
        }
    }

    #[test]
    fn tail_matches_oracle() {
        assert!((normal_tail(1.0) - 0.158655).abs() < 1e-6);
        for i in 0..=60 {
            let z = i as f64 * 0.1;
            let (a, b) = (normal_tail(z), tail_oracle(z));
            assert!(((a - b) / b).abs() < 1e-6, "z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn pvalue_edge_cases() {
        let (z, p) = certification_pvalue(1.0, 0.5, 1.0).unwrap();
        assert_eq!(z, 0.0);
        assert!((p - 0.5).abs() < 1e-15);
        assert!(matches!(
            certification_pvalue(1.0, 0.0, 0.0),
            Err(Error::NonpositiveSigma(_))
        ));
        let (_, p1) = certification_pvalue(2.0, 1.0, 0.0).unwrap();
        let (_, p2) = certification_pvalue(3.0, 1.0, 0.0).unwrap();
        assert!(p2 < p1);
    }

    fn full_table(proj: [u64; 4], povm: [u64; 7]) -> CountTable {
        let mut t = CountTable::new(CountMetadata::default());
        for s in Setting::all() {
            let c = if s.y.is_some() {
                proj.to_vec()
            } else {
                povm.to_vec()
            };
            t.insert(s, c).unwrap();
        }
        t
    }

    #[test]
    fn ratio_sigma_closed_form() {
        let t = full_table([9000, 400, 300, 300], [100; 7]);
        let est = counts_to_probabilities(&t).unwrap();
        assert!((est.tables.proj[0][0] - 0.9).abs() < 1e-15);
        assert!((est.tables.proj_sigma.unwrap()[0][0] - 0.003).abs() < 1e-12);
        assert!((est.tables.proj[0][1] - 0.1).abs() < 1e-15);
        assert!((est.tables.povm[3] - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_empty_settings() {
        let t = full_table([10, 0, 0, 0], [5, 5, 5, 5, 5, 5, 5]);
        let est = counts_to_probabilities(&t).unwrap();
        assert_eq!(est.tables.proj_sigma.unwrap()[0][0], 0.0);
        assert!(!est.degenerate.is_empty());
        let z = full_table([0; 4], [1; 7]);
        assert!(matches!(
            counts_to_probabilities(&z),
            Err(Error::EmptySetting(_))
        ));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let t = full_table([1, 2, 3, 4], [5, 6, 7, 8, 9, 10, 11]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("kind,x,y,outcome,counts\n"));
        assert!(text.contains("POVM,1,,1,5"));
        let back = CountTable::read_csv(buf.as_slice(), CountMetadata::default()).unwrap();
        assert_eq!(back, t);
        let dup = format!("{text}PROJ,1,1,1,7\n");
        assert!(CountTable::read_csv(dup.as_bytes(), CountMetadata::default()).is_err());
        let missing: String = text
            .lines()
            .filter(|l| *l != "PROJ,2,3,4,4")
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            CountTable::read_csv(missing.as_bytes(), CountMetadata::default()),
            Err(Error::MissingEntry(_))
        ));
    }
}
