use std::path::PathBuf;

use mbs_cert::builtin::{
    builtin_matrices, golden_tables, m4567_povm, printed_povm, reference_strategy, DATA_TOL,
};
use mbs_cert::game::{score, score_from_probabilities, ProbabilityTables, Strategy};
use mbs_cert::linalg::is_projective;
use mbs_cert::mbs::{build_povm, compare_with_printed, enumerate_subsets, PovmSpec};
use mbs_cert::photonics::{simulate_counts, NoiseModel};
use mbs_cert::seesaw::{run_seesaw, update_states, SeesawConfig, SeesawMode};
use mbs_cert::serial::PovmDoc;
use mbs_cert::stats::{counts_to_probabilities, CountTable};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

#[test]
fn shipped_strategy_matches_embedded_one() {
    let file = Strategy::load(&shipped("reference_strategy.json")).unwrap();
    let embedded = reference_strategy();
    assert_eq!(
        serde_json::to_value(file.to_doc()).unwrap(),
        serde_json::to_value(embedded.to_doc()).unwrap()
    );
}

#[test]
fn strategy_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = reference_strategy();
    s.save(&path).unwrap();
    let back = Strategy::load(&path).unwrap();
    assert_eq!(
        serde_json::to_value(back.to_doc()).unwrap(),
        serde_json::to_value(s.to_doc()).unwrap()
    );
    assert_eq!(score(&back), score(&s));
}

#[test]
fn shipped_tables_round_trip() {
    for name in ["tables_theory.csv", "tables_experiment.csv"] {
        let t = ProbabilityTables::load(&shipped(name)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ProbabilityTables::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.proj, t.proj);
        assert_eq!(back.povm, t.povm);
        assert_eq!(back.proj_sigma, t.proj_sigma);
    }
    let (theory, experiment) = golden_tables();
    assert_eq!(
        ProbabilityTables::load(&shipped("tables_theory.csv"))
            .unwrap()
            .proj,
        theory.proj
    );
    assert_eq!(
        ProbabilityTables::load(&shipped("tables_experiment.csv"))
            .unwrap()
            .povm,
        experiment.povm
    );
}

#[test]
fn theory_tables_reproduce_protocol_score() {
    let (theory, _) = golden_tables();
    assert!((score_from_probabilities(&theory).w - 62.6982).abs() < 2e-3);
}

#[test]
fn printed_povms_agree_with_u7_up_to_element_phases() {
    let m = builtin_matrices();
    assert_eq!(m.printed.len(), 35);
    let report = compare_with_printed(&m.u7, &m.printed, DATA_TOL).unwrap();
    assert!(
        report.discrepancies.is_empty(),
        "{:?}",
        report.discrepancies
    );
    for c in &report.comparisons {
        assert!(c.magnitude_deviation < DATA_TOL, "{}", c.label);
    }
    for a in &m.printed {
        let p = printed_povm(a).unwrap();
        assert!(!is_projective(&p, 1e-6), "{} is projective", a.label);
    }
}

#[test]
fn cleaned_u7_gives_exactly_complete_povms() {
    let u = builtin_matrices().u7.cleaned().unwrap();
    let subsets = enumerate_subsets(7, 4).unwrap();
    assert_eq!(subsets.len(), 35);
    for s in subsets {
        let p = build_povm(&u, &PovmSpec::zero_phase(s, 7).unwrap()).unwrap();
        assert!(p.completeness_deviation() <= 1e-8);
    }
}

#[test]
fn u4_gives_one_projective_measurement() {
    let u = &builtin_matrices().u4;
    let subsets = enumerate_subsets(4, 4).unwrap();
    assert_eq!(subsets, vec![vec![1, 2, 3, 4]]);
    let p = build_povm(u, &PovmSpec::zero_phase(subsets[0].clone(), 4).unwrap()).unwrap();
    assert!(is_projective(&p, 1e-9));
}

#[test]
fn optimal_states_for_printed_measurements_match_printed_states() {
    let s = reference_strategy();
    let (states, _) = update_states(s.dichotomic(), s.final_povm()).unwrap();
    for (a, b) in states.iter().zip(s.states()) {
        assert!(a.fidelity(b) > 1.0 - 2e-2);
    }
}

#[test]
fn fixed_final_seesaw_from_reference_does_not_lose_score() {
    let mut cfg = SeesawConfig::new(SeesawMode::FixedFinal, 0);
    cfg.restarts = 1;
    let start = reference_strategy();
    let t = run_seesaw(&cfg, Some(&start)).unwrap();
    assert!(t.best_score() >= score(&start) - 1e-3);
    assert!((t.best_score() - 62.6982).abs() < 1e-3);
}

#[test]
fn m4567_povm_round_trips_through_json() {
    let p = m4567_povm();
    let back = PovmDoc::from_povm(&p).to_povm().unwrap();
    for (a, b) in p.elements().iter().zip(back.elements()) {
        assert_eq!(a, b);
    }
}

#[test]
fn count_tables_round_trip_and_reproduce_scores() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    let noise = NoiseModel {
        visibility: 1.0,
        shots: 200_000,
        ..NoiseModel::default()
    };
    let t = simulate_counts(&reference_strategy(), &noise, 7).unwrap();
    t.save(&path).unwrap();
    let back = CountTable::load(&path).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    t.write_csv(&mut a).unwrap();
    back.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let est = counts_to_probabilities(&back).unwrap();
    let w = score_from_probabilities(&est.tables);
    let sigma = w.sigma.unwrap();
    assert!(
        (w.w - 62.6982).abs() < 5.0 * sigma + 1e-3,
        "W = {} ± {sigma}",
        w.w
    );
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let noise = NoiseModel::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    simulate_counts(&reference_strategy(), &noise, 11)
        .unwrap()
        .write_csv(&mut a)
        .unwrap();
    simulate_counts(&reference_strategy(), &noise, 11)
        .unwrap()
        .write_csv(&mut b)
        .unwrap();
    assert_eq!(a, b);
}
