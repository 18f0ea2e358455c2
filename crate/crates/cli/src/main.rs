use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mbs_cert::builtin::{
    builtin_matrices, golden_tables, golden_tables_csv, m4567_povm, reference_strategy, DATA_TOL,
};
use mbs_cert::game::{score_breakdown, score_from_probabilities, ProbabilityTables, Strategy};
use mbs_cert::mbs::{
    build_povm, compare_with_printed, enumerate_subsets, MultiportUnitary, PovmSpec,
};
use mbs_cert::moments::{build_affine_basis, solve_upper_bound, BasisOptions};
use mbs_cert::photonics::{simulate_counts, NoiseModel};
use mbs_cert::seesaw::{run_seesaw, SeesawConfig, SeesawMode};
use mbs_cert::serial::{read_json, write_json, MatrixDoc, PovmDoc};
use mbs_cert::stats::{certify, counts_to_probabilities, CountTable};
use mbs_cert::{Error, Povm, Result};

const DEFAULT_BOUND: f64 = 62.5152;

#[derive(Parser, Debug)]
#[command(
    name = "mbscert",
    version,
    about = "Multiport-beamsplitter POVM construction and certification"
)]
struct Cli {
    /// Where to write the run manifest (defaults next to the outputs, else ./<command>.manifest.json).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build every d-port POVM of a multiport unitary and compare with the printed list.
    EnumeratePovms(EnumerateArgs),
    /// Score a strategy or a probability table.
    Score(ScoreArgs),
    /// See-saw lower bound on the score.
    Seesaw(SeesawArgs),
    /// Moment-matrix upper bound on projective models.
    Bound(BoundArgs),
    /// Simulate detector counts for a strategy.
    Simulate(SimulateArgs),
    /// Significance of a score against a bound.
    Certify(CertifyArgs),
    /// Write the embedded reference strategy and tables to a directory.
    Export(ExportArgs),
}

#[derive(Args, Debug, Serialize)]
struct EnumerateArgs {
    /// `builtin:U7`, `builtin:U4` or a JSON file with a `matrix` document.
    #[arg(long, default_value = "builtin:U7")]
    unitary: String,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    /// Replace the unitary by its nearest unitary first.
    #[arg(long)]
    clean: bool,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    /// Strategy JSON file or `builtin:reference`.
    #[arg(long, conflicts_with = "tables")]
    strategy: Option<String>,
    /// Probability table CSV or `builtin:theory` / `builtin:experiment`.
    #[arg(long)]
    tables: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct SeesawArgs {
    /// fixed-final, projective-relaxed or free.
    #[arg(long, default_value = "projective-relaxed")]
    mode: String,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, env = "MBSCERT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Strategy JSON whose states seed restart 0.
    #[arg(long)]
    initial: Option<String>,
    /// Frozen final measurement for fixed-final mode: POVM JSON or `builtin:M4567`.
    #[arg(long = "final")]
    final_povm: Option<String>,
    /// Write the best strategy here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BoundArgs {
    /// Sample budget.
    #[arg(long, default_value_t = 3000)]
    samples: usize,
    #[arg(long, env = "MBSCERT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-7)]
    rank_tol: f64,
    #[arg(long, default_value_t = 50)]
    stall: usize,
    /// Skip group averaging (rank only; the SDP is not solved).
    #[arg(long)]
    no_symmetrize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "builtin:reference")]
    strategy: String,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 0.997)]
    visibility: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.2)]
    mu: f64,
    #[arg(long, env = "MBSCERT_SEED", default_value_t = 0)]
    seed: u64,
    /// Count table CSV; metadata goes to the `.meta.json` sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CertifyArgs {
    /// Probability table CSV with sigma column, or `builtin:experiment`.
    #[arg(long, conflicts_with = "counts")]
    tables: Option<String>,
    /// Count table CSV.
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BOUND)]
    bound: f64,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    tool_version: &'static str,
    wall_time_seconds: f64,
}

struct Outcome {
    result: Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<PathBuf>,
    /// Directory or file the manifest is placed next to.
    anchor: Option<PathBuf>,
}

fn load_strategy(spec: &str) -> Result<Strategy> {
    match spec {
        "builtin:reference" => Ok(reference_strategy()),
        s if s.starts_with("builtin:") => Err(Error::InvalidConfig(format!(
            "unknown builtin strategy '{s}'"
        ))),
        path => Strategy::load(Path::new(path)),
    }
}

fn load_tables(spec: &str) -> Result<ProbabilityTables> {
    match spec {
        "builtin:theory" => Ok(golden_tables().0),
        "builtin:experiment" => Ok(golden_tables().1),
        s if s.starts_with("builtin:") => {
            Err(Error::InvalidConfig(format!("unknown builtin table '{s}'")))
        }
        path => ProbabilityTables::load(Path::new(path)),
    }
}

fn load_povm(spec: &str) -> Result<Povm> {
    match spec {
        "builtin:M4567" => Ok(m4567_povm()),
        s if s.starts_with("builtin:") => {
            Err(Error::InvalidConfig(format!("unknown builtin POVM '{s}'")))
        }
        path => read_json::<PovmDoc>(Path::new(path))?.to_povm(),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum UnitaryFile {
    Tagged {
        label: Option<String>,
        data_tolerance: Option<f64>,
        matrix: MatrixDoc,
    },
    Bare(MatrixDoc),
}

fn load_unitary(spec: &str) -> Result<MultiportUnitary> {
    match spec {
        "builtin:U7" => Ok(builtin_matrices().u7.clone()),
        "builtin:U4" => Ok(builtin_matrices().u4.clone()),
        s if s.starts_with("builtin:") => Err(Error::InvalidConfig(format!(
            "unknown builtin unitary '{s}'"
        ))),
        path => {
            let (label, tol, doc) = match read_json::<UnitaryFile>(Path::new(path))? {
                UnitaryFile::Tagged {
                    label,
                    data_tolerance,
                    matrix,
                } => (label, data_tolerance, matrix),
                UnitaryFile::Bare(m) => (None, None, m),
            };
            MultiportUnitary::new(
                label.unwrap_or_else(|| path.to_string()),
                doc.to_matrix()?,
                tol.unwrap_or(mbs_cert::mbs::INTERNAL_TOL),
            )
        }
    }
}

fn subset_label(s: &[usize]) -> String {
    let digits: Vec<String> = s.iter().map(|k| k.to_string()).collect();
    if s.iter().all(|&k| k < 10) {
        format!("M{}", digits.concat())
    } else {
        format!("M{}", digits.join("-"))
    }
}

fn cmd_enumerate(a: &EnumerateArgs) -> Result<Outcome> {
    let mut u = load_unitary(&a.unitary)?;
    if a.clean {
        u = u.cleaned()?;
    }
    let subsets = enumerate_subsets(u.ports(), a.dim)?;
    std::fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for s in &subsets {
        let spec = PovmSpec::zero_phase(s.clone(), u.ports())?;
        let p = build_povm(&u, &spec)?;
        let label = subset_label(s);
        let path = a.out.join(format!("{label}.json"));
        write_json(&path, &PovmDoc::from_povm(&p))?;
        entries.push(json!({
            "label": label,
            "subset": s,
            "completeness_deviation": p.completeness_deviation(),
            "projective": mbs_cert::linalg::is_projective(&p, 1e-6),
        }));
        outputs.push(path);
    }
    let printed = &builtin_matrices().printed;
    let comparison = if u.ports() == 7 && a.dim == 4 {
        Some(compare_with_printed(&u, printed, DATA_TOL)?)
    } else {
        None
    };
    let max_dev = entries
        .iter()
        .map(|e| e["completeness_deviation"].as_f64().unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    Ok(Outcome {
        result: json!({
            "unitary": u.label(),
            "ports": u.ports(),
            "dim": a.dim,
            "unitarity_deviation": u.unitarity_deviation(),
            "count": subsets.len(),
            "max_completeness_deviation": max_dev,
            "povms": entries,
            "comparison_with_printed": comparison,
        }),
        seed: None,
        inputs: vec![a.unitary.clone()],
        outputs,
        anchor: Some(a.out.clone()),
    })
}

fn tables_json(t: &ProbabilityTables) -> Value {
    json!({ "proj": t.proj, "povm": t.povm, "proj_sigma": t.proj_sigma, "povm_sigma": t.povm_sigma })
}

fn cmd_score(a: &ScoreArgs) -> Result<Outcome> {
    let (result, input) = match (&a.strategy, &a.tables) {
        (Some(s), None) => {
            let strategy = load_strategy(s)?;
            let t = score_breakdown(&strategy);
            let est = score_from_probabilities(&t);
            (
                json!({ "W": est.w, "source": "strategy", "breakdown": tables_json(&t) }),
                s.clone(),
            )
        }
        (None, Some(p)) => {
            let t = load_tables(p)?;
            let est = score_from_probabilities(&t);
            (
                json!({ "W": est.w, "sigma": est.sigma, "source": "tables" }),
                p.clone(),
            )
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --strategy or --tables".into(),
            ))
        }
    };
    Ok(Outcome {
        result,
        seed: None,
        inputs: vec![input],
        outputs: vec![],
        anchor: None,
    })
}

fn cmd_seesaw(a: &SeesawArgs) -> Result<Outcome> {
    let mode: SeesawMode = a.mode.parse()?;
    let mut cfg = SeesawConfig::new(mode, a.seed);
    cfg.restarts = a.restarts;
    cfg.max_iters = a.max_iters;
    cfg.tolerance = a.tolerance;
    let mut inputs = Vec::new();
    if let Some(f) = &a.final_povm {
        cfg.fixed_final = Some(load_povm(f)?);
        inputs.push(f.clone());
    } else if mode == SeesawMode::FixedFinal && a.initial.is_none() {
        cfg.fixed_final = Some(m4567_povm());
        inputs.push("builtin:M4567".into());
    }
    let initial = match &a.initial {
        Some(s) => {
            inputs.push(s.clone());
            Some(load_strategy(s)?)
        }
        None => None,
    };
    let trace = run_seesaw(&cfg, initial.as_ref())?;
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        trace.strategy.save(out)?;
        outputs.push(out.clone());
    }
    let mut result = trace.to_json();
    result["config"] = serde_json::to_value(&cfg)?;
    Ok(Outcome {
        result,
        seed: Some(a.seed),
        inputs,
        outputs,
        anchor: a.out.clone(),
    })
}

fn cmd_bound(a: &BoundArgs) -> Result<Outcome> {
    let opts = BasisOptions {
        budget: a.samples,
        rank_tol: a.rank_tol,
        stall_limit: a.stall,
        symmetrize: !a.no_symmetrize,
        seed: a.seed,
    };
    let basis = build_affine_basis(&opts)?;
    let result = if a.no_symmetrize {
        json!({
            "basis_rank": basis.rank(),
            "samples_used": basis.samples_used,
            "saturated": basis.saturated,
            "symmetrized": false,
            "seed": a.seed,
            "matrix_size": basis.matrix_size(),
        })
    } else {
        serde_json::to_value(solve_upper_bound(&basis)?)?
    };
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        write_json(out, &result)?;
        outputs.push(out.clone());
    }
    Ok(Outcome {
        result,
        seed: Some(a.seed),
        inputs: vec![],
        outputs,
        anchor: a.out.clone(),
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let strategy = load_strategy(&a.strategy)?;
    let noise = NoiseModel {
        mu: a.mu,
        shots: a.shots,
        visibility: a.visibility,
        phase_jitter: a.jitter,
    };
    let table = simulate_counts(&strategy, &noise, a.seed)?;
    table.save(&a.out)?;
    let total: u64 = table.settings().map(|(_, c)| c.iter().sum::<u64>()).sum();
    let meta = CountTable::metadata_path(&a.out);
    Ok(Outcome {
        result: json!({
            "out": a.out,
            "metadata": meta,
            "settings": table.settings().count(),
            "total_counts": total,
            "noise": noise,
            "seed": a.seed,
        }),
        seed: Some(a.seed),
        inputs: vec![a.strategy.clone()],
        outputs: vec![a.out.clone(), meta],
        anchor: Some(a.out.clone()),
    })
}

fn cmd_certify(a: &CertifyArgs) -> Result<Outcome> {
    let (tables, input, degenerate) = match (&a.tables, &a.counts) {
        (Some(t), None) => (load_tables(t)?, t.clone(), vec![]),
        (None, Some(c)) => {
            let est = counts_to_probabilities(&CountTable::load(c)?)?;
            (est.tables, c.display().to_string(), est.degenerate)
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --tables or --counts".into(),
            ))
        }
    };
    let cert = certify(&tables, a.bound, a.threshold)?;
    let mut result = serde_json::to_value(&cert)?;
    if !degenerate.is_empty() {
        result["degenerate_settings"] = json!(degenerate);
    }
    Ok(Outcome {
        result,
        seed: None,
        inputs: vec![input],
        outputs: vec![],
        anchor: None,
    })
}

fn cmd_export(a: &ExportArgs) -> Result<Outcome> {
    std::fs::create_dir_all(&a.out)?;
    let strategy_path = a.out.join("reference_strategy.json");
    reference_strategy().save(&strategy_path)?;
    let (theory, experiment) = golden_tables_csv();
    let theory_path = a.out.join("tables_theory.csv");
    let experiment_path = a.out.join("tables_experiment.csv");
    std::fs::write(&theory_path, theory)?;
    std::fs::write(&experiment_path, experiment)?;
    let outputs = vec![strategy_path, theory_path, experiment_path];
    Ok(Outcome {
        result: json!({ "outputs": outputs }),
        seed: None,
        inputs: vec![],
        outputs,
        anchor: Some(a.out.clone()),
    })
}

fn manifest_path(cli: &Cli, name: &str, anchor: Option<&Path>) -> PathBuf {
    if let Some(p) = &cli.manifest {
        return p.clone();
    }
    let file = format!("{name}.manifest.json");
    match anchor {
        Some(a) if a.is_dir() => a.join(file),
        Some(a) => a.with_extension("manifest.json"),
        None => PathBuf::from(file),
    }
}

fn run(cli: &Cli) -> Result<Value> {
    let start = Instant::now();
    let (name, config, outcome) = match &cli.command {
        Command::EnumeratePovms(a) => (
            "enumerate-povms",
            serde_json::to_value(a)?,
            cmd_enumerate(a)?,
        ),
        Command::Score(a) => ("score", serde_json::to_value(a)?, cmd_score(a)?),
        Command::Seesaw(a) => ("seesaw", serde_json::to_value(a)?, cmd_seesaw(a)?),
        Command::Bound(a) => ("bound", serde_json::to_value(a)?, cmd_bound(a)?),
        Command::Simulate(a) => ("simulate", serde_json::to_value(a)?, cmd_simulate(a)?),
        Command::Certify(a) => ("certify", serde_json::to_value(a)?, cmd_certify(a)?),
        Command::Export(a) => ("export", serde_json::to_value(a)?, cmd_export(a)?),
    };
    let manifest = Manifest {
        command: name,
        config,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(
        &manifest_path(cli, name, outcome.anchor.as_deref()),
        &manifest,
    )?;
    Ok(outcome.result)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverNotConverged(_) => 3,
        e if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            // A closed pipe downstream is not an error of ours.
            let _ = writeln!(
                std::io::stdout(),
                "{}",
                serde_json::to_string_pretty(&v).expect("JSON values serialize")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = match exit_code(&e) {
                3 => "solver",
                2 => "validation",
                _ => "io",
            };
            eprintln!(
                "{}",
                json!({ "error": { "kind": kind, "message": e.to_string() } })
            );
            ExitCode::from(exit_code(&e))
        }
    }
}
