//! Subcommand implementations. Each returns the paths it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use transient_clv::experiments::{
    direction_test, find_orbit_point, perturb_and_evolve, run_transient_clv, PerturbationSpec,
};
use transient_clv::ginelli::{
    backward_pass, compose_vectors, forward_pass, seed_coefficients, SystemInfo,
};
use transient_clv::integrate::integrate_until;
use transient_clv::{Error as CoreError, ForwardRecord, Orbit, RunConfig, TransientRun, Vectors};

use crate::checkpoint;
use crate::config::{Config, FrameMode};
use crate::error::{CliError, PipelineContext};
use crate::output::{orbit_csv, vectors_csv, write_json, write_text};
use crate::plot;

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
}

impl Options {
    pub fn load_config(&self) -> Result<Config, CliError> {
        match &self.config {
            Some(p) => Config::load(p),
            None => Ok(Config::default()),
        }
    }

    pub fn out_dir(&self, cfg: &Config) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.out_dir.clone())
    }
}

/// `orbit.csv`: the base orbit from `run.u0` over `orbit.steps` steps.
pub fn cmd_orbit(cfg: &Config, out: &Path) -> Result<PathBuf, CliError> {
    let rc = cfg.run_config(None);
    let sys = rc.build_system().stage("system")?;
    let traj = integrate_until(
        sys.as_ref(),
        &rc.u0,
        rc.t0,
        0,
        rc.dt,
        rc.substeps,
        cfg.orbit_steps(),
        |_| false,
    )
    .stage("orbit")?;
    let path = out.join("orbit.csv");
    write_text(&path, &orbit_csv(&traj))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct Tolerances {
    equilibrium: Option<f64>,
    alignment: f64,
}

#[derive(Debug, Serialize)]
struct AlignmentSummary {
    targets: Vec<Vec<f64>>,
    tail_window: [usize; 2],
    min_over_tail: Vec<f64>,
    at_n1: Vec<f64>,
    first_exceeding: Vec<Option<usize>>,
    settled_from: Vec<Option<usize>>,
}

#[derive(Debug, Serialize)]
struct ExponentsReport {
    system: String,
    params: BTreeMap<String, f64>,
    u0: Vec<f64>,
    dt: f64,
    substeps: usize,
    n1: usize,
    n2: usize,
    frame: FrameMode,
    backward_seed: u64,
    window: [usize; 2],
    exponents: Vec<f64>,
    ordered: bool,
    tolerances: Tolerances,
    residual_at_n1: f64,
    alignment: Option<AlignmentSummary>,
}

/// Steps over which the alignment summary takes its minimum.
pub const ALIGNMENT_TAIL: usize = 1_000;

fn exponents_report(cfg: &Config, rc: &RunConfig, run: &TransientRun) -> ExponentsReport {
    let rec = &run.record;
    let a = &run.alignment;
    let lo = rec.n1().saturating_sub(ALIGNMENT_TAIL);
    ExponentsReport {
        system: rec.system().name.clone(),
        params: rec.system().params.iter().cloned().collect(),
        u0: rc.u0.clone(),
        dt: rc.dt,
        substeps: rc.substeps,
        n1: rc.n1,
        n2: rc.n2,
        frame: cfg.run.frame,
        backward_seed: rc.backward_seed,
        window: [run.exponents.window.0, run.exponents.window.1],
        exponents: run.exponents.values.clone(),
        ordered: run.exponents.is_ordered(),
        tolerances: Tolerances {
            equilibrium: rc.equilibrium_tol,
            alignment: rc.alignment_tol,
        },
        residual_at_n1: rec
            .state(rec.n1())
            .iter()
            .fold(0.0, |m: f64, x| m.max(x.abs())),
        alignment: (!a.targets.is_empty()).then(|| AlignmentSummary {
            targets: a.targets.clone(),
            tail_window: [lo, rec.n1()],
            min_over_tail: a.min_over(lo, rec.n1()),
            at_n1: a.last(),
            first_exceeding: a.first_exceeding.clone(),
            settled_from: a.settled_from.clone(),
        }),
    }
}

/// `vectors.csv` and `exponents.json`, plus a checkpoint when requested.
pub fn cmd_clv(
    cfg: &Config,
    out: &Path,
    seed: Option<u64>,
    checkpoint_path: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let rc = cfg.run_config(seed);
    let run = run_transient_clv(&rc).stage("clv")?;
    let vec_path = out.join("vectors.csv");
    write_text(&vec_path, &vectors_csv(&run.vectors))?;
    let json_path = out.join("exponents.json");
    write_json(&json_path, &exponents_report(cfg, &rc, &run))?;
    let mut written = vec![vec_path, json_path];
    if let Some(p) = checkpoint_path {
        checkpoint::write(p, &run.record)?;
        written.push(p.to_path_buf());
    }
    Ok(written)
}

/// Fails unless `rec` was produced by the run `rc` describes.
pub fn check_record_matches(
    path: &Path,
    rec: &ForwardRecord<f64>,
    rc: &RunConfig,
) -> Result<(), CliError> {
    let sys = rc.build_system().stage("system")?;
    let want = SystemInfo::of(sys.as_ref());
    let mut diffs = Vec::new();
    if rec.system().name != want.name {
        diffs.push(format!("system {} vs {}", rec.system().name, want.name));
    } else if rec.system().params != want.params {
        diffs.push("system parameters".to_string());
    }
    let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
    if !same(rec.dt(), rc.dt) {
        diffs.push(format!("dt {} vs {}", rec.dt(), rc.dt));
    }
    if !same(rec.t0(), rc.t0) {
        diffs.push(format!("t0 {} vs {}", rec.t0(), rc.t0));
    }
    if rec.substeps() != rc.substeps {
        diffs.push(format!("substeps {} vs {}", rec.substeps(), rc.substeps));
    }
    if (rec.n1(), rec.n2()) != (rc.n1, rc.n2) {
        diffs.push(format!(
            "N1/N2 {}/{} vs {}/{}",
            rec.n1(),
            rec.n2(),
            rc.n1,
            rc.n2
        ));
    }
    let u0 = rec.state(0);
    if u0.len() != rc.u0.len() || u0.iter().zip(&rc.u0).any(|(&a, &b)| !same(a, b)) {
        diffs.push("initial state".to_string());
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(CliError::checkpoint(
            path,
            format!(
                "checkpoint (format v{}) does not match config: {}",
                checkpoint::VERSION,
                diffs.join(", ")
            ),
        ))
    }
}

/// The forward record: read from `checkpoint_path` when given, else computed.
pub fn load_or_run_forward(
    rc: &RunConfig,
    checkpoint_path: Option<&Path>,
) -> Result<ForwardRecord<f64>, CliError> {
    if let Some(p) = checkpoint_path {
        let rec = checkpoint::read(p)?;
        check_record_matches(p, &rec, rc)?;
        return Ok(rec);
    }
    let sys = rc.build_system().stage("system")?;
    let q0 = rc.initial_frame(sys.dim());
    forward_pass(sys.as_ref(), &rc.u0, &q0, &rc.forward_config()).stage("forward pass")
}

/// Canonicalized vectors on `0..=N1` from a seeded backward pass.
pub fn vectors_for(rec: &ForwardRecord<f64>, seed: u64) -> Result<Vectors, CliError> {
    let back = backward_pass(rec, &seed_coefficients(rec.dim(), seed)).stage("backward pass")?;
    Ok(compose_vectors(rec, &back, 0..=rec.n1())
        .stage("vectors")?
        .canonicalized())
}

#[derive(Debug, Serialize)]
pub struct DirectionEntry {
    pub file: String,
    pub j: usize,
    pub step: usize,
    pub time: f64,
    pub base_state: Vec<f64>,
    pub amplitude: f64,
    pub steps_integrated: usize,
    pub final_xy_radius: f64,
    pub target: Option<[f64; 2]>,
    pub radius: f64,
    pub threshold: f64,
    pub cosine: Option<f64>,
    pub cosine_e1: Option<f64>,
    pub cosine_e2: Option<f64>,
    pub passed: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Serialize)]
struct DirectionReport {
    system: String,
    backward_seed: u64,
    runs: Vec<DirectionEntry>,
}

fn exit_cosine(traj: &Orbit, target: [f64; 2], radius: f64) -> Result<Option<f64>, CliError> {
    match direction_test(traj, target, radius) {
        Ok(c) => Ok(Some(c)),
        Err(CoreError::RadiusNotReached { .. }) => Ok(None),
        Err(e) => Err(e).stage("direction test"),
    }
}

/// `perturbed_<k>.csv` per perturbation (1-based `k`) and `direction.json`.
pub fn cmd_perturb(
    cfg: &Config,
    out: &Path,
    seed: Option<u64>,
    checkpoint_path: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let rc = cfg.run_config(seed);
    let rec = load_or_run_forward(&rc, checkpoint_path)?;
    let sys = rc.build_system().stage("system")?;
    let vf = vectors_for(&rec, rc.backward_seed)?;
    let mut written = Vec::new();
    let mut runs = Vec::new();
    for (k, p) in cfg.perturbation.iter().enumerate() {
        let step = match (p.step, p.z_target) {
            (Some(s), _) => s,
            (None, Some(z)) => find_orbit_point(&rec, z).stage("orbit point")?,
            (None, None) => unreachable!("validated config"),
        };
        let spec = PerturbationSpec {
            step,
            column: p.j - 1,
            amplitude: p.amplitude,
            length: p.length(),
        };
        let traj = perturb_and_evolve(sys.as_ref(), &rec, &vf, &spec).stage("perturbation")?;
        let name = format!("perturbed_{}.csv", k + 1);
        let path = out.join(&name);
        write_text(&path, &orbit_csv(&traj))?;
        written.push(path);

        let target = p.target();
        let cosine = match target {
            Some(t) => exit_cosine(&traj, t, p.radius)?,
            None => None,
        };
        let last = traj.last();
        let final_xy_radius = if last.len() >= 2 {
            last[0].hypot(last[1])
        } else {
            0.0
        };
        let note = match (target, cosine) {
            (None, _) => Some("no target direction for this vector".to_string()),
            (Some(_), None) => Some(format!(
                "xy radius {} never reached (max {final_xy_radius:e} at end)",
                p.radius
            )),
            _ => None,
        };
        runs.push(DirectionEntry {
            file: name,
            j: p.j,
            step,
            time: rec.time(step),
            base_state: rec.state(step).to_vec(),
            amplitude: p.amplitude,
            steps_integrated: traj.len() - 1,
            final_xy_radius,
            target,
            radius: p.radius,
            threshold: p.threshold,
            cosine,
            cosine_e1: exit_cosine(&traj, [1.0, 0.0], p.radius)?,
            cosine_e2: exit_cosine(&traj, [0.0, 1.0], p.radius)?,
            passed: target.map(|_| cosine.is_some_and(|c| c > p.threshold)),
            note,
        });
    }
    let json = out.join("direction.json");
    write_json(
        &json,
        &DirectionReport {
            system: rec.system().name.clone(),
            backward_seed: rc.backward_seed,
            runs,
        },
    )?;
    written.push(json);
    Ok(written)
}

/// Default plot inputs: `vectors.csv` plus every `perturbed_*.csv` in `out`.
pub fn default_artifacts(out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = vec![out.join("vectors.csv")];
    let entries = std::fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
    let mut perturbed = Vec::new();
    for e in entries {
        let e = e.map_err(|e| CliError::io(out, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.starts_with("perturbed_") && name.ends_with(".csv") {
            perturbed.push(e.path());
        }
    }
    perturbed.sort();
    found.extend(perturbed);
    Ok(found)
}

/// One `.gp` script next to each CSV. Every input is checked before any
/// script is written.
pub fn cmd_plot(cfg: &Config, artifacts: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let summaries = artifacts
        .iter()
        .map(|p| plot::inspect(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut written = Vec::new();
    for s in &summaries {
        let script = plot::script_for(s, cfg.plot.stride, cfg.plot.arrow_length);
        let path = plot::script_path(&s.path);
        write_text(&path, &script)?;
        written.push(path);
    }
    Ok(written)
}
