//! Drives the `tclv` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn tclv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclv"))
        .args(args)
        .output()
        .expect("spawn tclv")
}

fn ok(args: &[&str]) -> Output {
    let out = tclv(args);
    assert!(
        out.status.success(),
        "tclv {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// One reference `clv` run with a checkpoint, shared by several tests.
fn reference() -> &'static (TempDir, PathBuf) {
    static REF: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    REF.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("run.ckpt");
        ok(&["clv", "--out", s(dir.path()), "--checkpoint", s(&ckpt)]);
        (dir, ckpt)
    })
}

/// Asserts a single-line `error[CODE]: ...` on stderr and the exit status.
fn assert_error(out: &Output, code: &str, status: i32) -> String {
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(out.status.code(), Some(status), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{code}]: ")), "{err}");
    err
}

#[test]
fn orbit_csv_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["orbit", "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,x3");
    assert_eq!(lines.len() - 1, 30_001);
    let row0: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row0, [0.0, 0.0, 0.0, 1000.0]);
    let last: Vec<f64> = lines[30_001]
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((last[0] - 3000.0).abs() < 1e-9);

    let cfg = write_config(dir.path(), "one.toml", "[orbit]\nsteps = 1\n");
    let out2 = dir.path().join("one");
    ok(&["orbit", "--config", s(&cfg), "--out", s(&out2)]);
    let text = fs::read_to_string(out2.join("orbit.csv")).unwrap();
    assert_eq!(text.lines().count() - 1, 2);
}

#[test]
fn orbit_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["orbit", "--out", s(a.path())]);
    ok(&["orbit", "--out", s(b.path())]);
    assert_eq!(
        fs::read(a.path().join("orbit.csv")).unwrap(),
        fs::read(b.path().join("orbit.csv")).unwrap()
    );
}

#[test]
fn clv_reports_reference_exponents() {
    let (dir, _) = reference();
    let report = json(&dir.path().join("exponents.json"));
    let lam: Vec<f64> = report["exponents"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (got, want) in lam.iter().zip([2.0, 1.0, -1.0]) {
        assert!((got - want).abs() < 1e-3, "{lam:?}");
    }
    assert_eq!(report["window"], serde_json::json!([15000, 30000]));
    assert_eq!(report["tolerances"]["alignment"], 0.999);
    for c in report["alignment"]["min_over_tail"].as_array().unwrap() {
        assert!(c.as_f64().unwrap() > 0.999);
    }

    let text = fs::read_to_string(dir.path().join("vectors.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,t,x1,x2,x3,v1_1,v1_2,v1_3,v2_1,v2_2,v2_3,v3_1,v3_2,v3_3"
    );
    assert_eq!(lines.count(), 15_001);
}

#[test]
fn clv_outputs_are_deterministic() {
    let (dir, ckpt) = reference();
    let again = tempfile::tempdir().unwrap();
    let ckpt2 = again.path().join("run.ckpt");
    ok(&["clv", "--out", s(again.path()), "--checkpoint", s(&ckpt2)]);
    for name in ["vectors.csv", "exponents.json"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(again.path().join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(fs::read(ckpt).unwrap(), fs::read(ckpt2).unwrap());
}

#[test]
fn random_initial_frame_gives_same_exponents() {
    let (dir, _) = reference();
    let alt = tempfile::tempdir().unwrap();
    let cfg = write_config(
        alt.path(),
        "r.toml",
        "[run]\nframe = \"random\"\nframe_seed = 5\n",
    );
    ok(&["clv", "--config", s(&cfg), "--out", s(alt.path())]);
    let a = json(&dir.path().join("exponents.json"));
    let b = json(&alt.path().join("exponents.json"));
    assert_eq!(b["frame"], "random");
    for k in 0..3 {
        let (x, y) = (
            a["exponents"][k].as_f64().unwrap(),
            b["exponents"][k].as_f64().unwrap(),
        );
        assert!((x - y).abs() < 1e-3);
    }
}

#[test]
fn seed_flag_changes_only_the_backward_seed() {
    let (_, ckpt) = reference();
    let other = tempfile::tempdir().unwrap();
    ok(&[
        "perturb",
        "--out",
        s(other.path()),
        "--checkpoint",
        s(ckpt),
        "--seed",
        "99",
    ]);
    let report = json(&other.path().join("direction.json"));
    assert_eq!(report["backward_seed"], 99);
    for r in report["runs"].as_array().unwrap() {
        assert_eq!(r["passed"], true, "{r}");
    }
}

#[test]
fn perturb_reports_steering_from_checkpoint() {
    let (_, ckpt) = reference();
    let dir = tempfile::tempdir().unwrap();
    ok(&["perturb", "--out", s(dir.path()), "--checkpoint", s(ckpt)]);
    let report = json(&dir.path().join("direction.json"));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["target"], serde_json::json!([1.0, 0.0]));
    assert_eq!(runs[1]["target"], serde_json::json!([0.0, 1.0]));
    for r in runs {
        assert_eq!(r["passed"], true, "{r}");
        assert_eq!(r["radius"], 1.0);
        assert!(r["cosine"].as_f64().unwrap() > 0.99);
    }
    let c1 = runs[1]["cosine_e1"].as_f64().unwrap();
    let c2 = runs[1]["cosine_e2"].as_f64().unwrap();
    assert!(c2 > c1);

    // same result without the checkpoint
    let fresh = tempfile::tempdir().unwrap();
    ok(&["perturb", "--out", s(fresh.path())]);
    assert_eq!(
        fs::read(dir.path().join("direction.json")).unwrap(),
        fs::read(fresh.path().join("direction.json")).unwrap()
    );
}

#[test]
fn zero_amplitude_reproduces_base_orbit_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.toml",
        "[[perturbation]]\nj = 2\nz_target = 66.302\namplitude = 0.0\nsteps = 2000\n",
    );
    ok(&["orbit", "--config", s(&cfg), "--out", s(dir.path())]);
    ok(&["perturb", "--config", s(&cfg), "--out", s(dir.path())]);
    let step = json(&dir.path().join("direction.json"))["runs"][0]["step"]
        .as_u64()
        .unwrap() as usize;
    let base = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    let pert = fs::read_to_string(dir.path().join("perturbed_1.csv")).unwrap();
    let base: Vec<&str> = base.lines().collect();
    let pert: Vec<&str> = pert.lines().collect();
    assert_eq!(pert[0], base[0]);
    assert_eq!(pert.len() - 1, 2001);
    assert_eq!(&pert[1..], &base[1 + step..1 + step + 2001]);
}

#[test]
fn checkpoint_mismatch_is_rejected() {
    let (_, ckpt) = reference();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dt.toml", "[run]\ndt = 0.05\n");
    let out = tclv(&[
        "perturb",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--checkpoint",
        s(ckpt),
    ]);
    let err = assert_error(&out, "E_CHECKPOINT", 5);
    assert!(err.contains("dt"), "{err}");

    let cfg = write_config(
        dir.path(),
        "sys.toml",
        "[system]\nname = \"paper3d\"\nparams = { A = 3.0 }\n",
    );
    let out = tclv(&[
        "perturb",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--checkpoint",
        s(ckpt),
    ]);
    assert_error(&out, "E_CHECKPOINT", 5);

    let mut bytes = fs::read(ckpt).unwrap();
    bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
    let bad = dir.path().join("v7.ckpt");
    fs::write(&bad, bytes).unwrap();
    let out = tclv(&["perturb", "--out", s(dir.path()), "--checkpoint", s(&bad)]);
    let err = assert_error(&out, "E_CHECKPOINT", 5);
    assert!(err.contains("version 7"), "{err}");
    assert!(!dir.path().join("direction.json").exists());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "noname.toml",
        "[system]\nparams = { A = 2.0 }\n",
    );
    let out = tclv(&["clv", "--config", s(&cfg), "--out", s(dir.path())]);
    let err = assert_error(&out, "E_CONFIG", 3);
    assert!(
        err.contains("system.name") && err.contains("noname.toml"),
        "{err}"
    );

    let cfg = write_config(dir.path(), "typo.toml", "[run]\nn_1 = 10\n");
    let out = tclv(&["orbit", "--config", s(&cfg), "--out", s(dir.path())]);
    let err = assert_error(&out, "E_CONFIG", 3);
    assert!(err.contains("n_1"), "{err}");
    assert!(!dir.path().join("orbit.csv").exists());
}

#[test]
fn pipeline_and_io_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "short.toml", "[run]\nn1 = 1000\nn2 = 2000\n");
    let out = tclv(&["clv", "--config", s(&cfg), "--out", s(dir.path())]);
    let err = assert_error(&out, "E_PIPELINE_NOT_NEAR_EQUILIBRIUM", 6);
    assert!(err.contains("1000"), "{err}");

    let cfg = write_config(dir.path(), "sys.toml", "[system]\nname = \"lorenz\"\n");
    let out = tclv(&["orbit", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_error(&out, "E_PIPELINE_NOT_FOUND", 6);

    let out = tclv(&["orbit", "--config", s(&dir.path().join("absent.toml"))]);
    let err = assert_error(&out, "E_IO", 4);
    assert!(err.contains("absent.toml"));

    let out = tclv(&["orbit", "--seed", "abc"]);
    assert_error(&out, "E_USAGE", 2);
}

#[test]
fn plot_emits_scripts_next_to_csvs() {
    let (src, _) = reference();
    let dir = tempfile::tempdir().unwrap();
    fs::copy(
        src.path().join("vectors.csv"),
        dir.path().join("vectors.csv"),
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "p.toml",
        "[[perturbation]]\nj = 1\nsteps = 50\n",
    );
    ok(&["perturb", "--config", s(&cfg), "--out", s(dir.path())]);
    ok(&["plot", "--config", s(&cfg), "--out", s(dir.path())]);
    let vec_gp = fs::read_to_string(dir.path().join("vectors.gp")).unwrap();
    assert!(vec_gp.contains("splot 'vectors.csv'"));
    assert_eq!(vec_gp.matches("with vectors").count(), 3);
    let pert_gp = fs::read_to_string(dir.path().join("perturbed_1.gp")).unwrap();
    assert!(pert_gp.contains("layout 1,2"));
    assert!(pert_gp.contains("splot 'perturbed_1.csv'"));
    assert!(pert_gp.contains("plot 'perturbed_1.csv' skip 1 using 2:3"));
}

#[test]
fn plot_rejects_empty_and_missing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "t,x1,x2,x3\n0,0,0,1\n").unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "t,x1,x2,x3\n").unwrap();
    let out = tclv(&["plot", s(&good), s(&empty)]);
    let err = assert_error(&out, "E_ARTIFACT", 7);
    assert!(err.contains("empty.csv"));
    assert!(!dir.path().join("good.gp").exists());
    assert!(!dir.path().join("empty.gp").exists());

    let out = tclv(&["plot", "--out", s(dir.path())]);
    let err = assert_error(&out, "E_ARTIFACT", 7);
    assert!(err.contains("vectors.csv"), "{err}");
}
