//! TOML run configuration. Every key is optional except `system.name` when a
//! `[system]` table is present; defaults reproduce the reference run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transient_clv::experiments::{EvolveLength, FrameInit};
use transient_clv::RunConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default = "default_perturbations")]
    pub perturbation: Vec<PerturbationSection>,
    #[serde(default)]
    pub plot: PlotSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Required whenever a `[system]` table is present.
    pub name: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameMode {
    Identity,
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub u0: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
    pub substeps: usize,
    pub n1: usize,
    pub n2: usize,
    pub frame: FrameMode,
    pub frame_seed: u64,
    pub backward_seed: u64,
    /// Largest `|u_N1|` accepted as "near the equilibrium"; 0 disables the check.
    pub equilibrium_tol: f64,
    pub alignment_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    /// Defaults to `run.n2`.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSection {
    /// Vector index, 1-based.
    pub j: usize,
    /// Base-orbit point: the step whose last coordinate is closest to this.
    pub z_target: Option<f64>,
    /// Base-orbit point as a step index; overrides `z_target`.
    pub step: Option<usize>,
    pub amplitude: f64,
    /// Fixed length in steps; otherwise integrate until `stop_radius`.
    pub steps: Option<usize>,
    pub stop_radius: f64,
    pub max_steps: usize,
    /// Direction-test radius and threshold.
    pub radius: f64,
    pub threshold: f64,
    /// `(x, y)` direction; defaults to `e_j` for `j` in {1, 2}.
    pub target: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotSection {
    /// Draw vector glyphs every `stride` steps.
    pub stride: usize,
    /// Glyph length in plot units.
    pub arrow_length: f64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_perturbations() -> Vec<PerturbationSection> {
    vec![
        PerturbationSection::default(),
        PerturbationSection {
            j: 2,
            ..PerturbationSection::default()
        },
    ]
}

impl Default for Config {
    fn default() -> Self {
        Config {
            out_dir: default_out_dir(),
            system: SystemSection::default(),
            run: RunSection::default(),
            orbit: OrbitSection::default(),
            perturbation: default_perturbations(),
            plot: PlotSection::default(),
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            name: Some("paper3d".into()),
            params: BTreeMap::new(),
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            u0: vec![0.0, 0.0, 1000.0],
            t0: 0.0,
            dt: 0.1,
            substeps: 1,
            n1: 15_000,
            n2: 30_000,
            frame: FrameMode::Identity,
            frame_seed: 0,
            backward_seed: 1,
            equilibrium_tol: 1e-8,
            alignment_tol: 0.999,
        }
    }
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            j: 1,
            z_target: Some(66.302),
            step: None,
            amplitude: 1e-12,
            steps: None,
            stop_radius: 10.0,
            max_steps: 5_000,
            radius: 1.0,
            threshold: 0.99,
            target: None,
        }
    }
}

impl Default for PlotSection {
    fn default() -> Self {
        PlotSection {
            stride: 100,
            arrow_length: 20.0,
        }
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let detail = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}: {}", e.message())
                }
                None => e.message().to_string(),
            };
            CliError::config(origin, detail)
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn validate(&self, origin: &str) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::config(origin, format!("`{key}` {why}")));
        match self.system.name.as_deref() {
            None => return bad("system.name", "is required"),
            Some(n) if n.trim().is_empty() => return bad("system.name", "must not be empty"),
            Some(_) => {}
        }
        let r = &self.run;
        if !(r.dt.is_finite() && r.dt > 0.0) {
            return bad("run.dt", "must be positive and finite");
        }
        if r.substeps == 0 {
            return bad("run.substeps", "must be at least 1");
        }
        if r.n1 == 0 || r.n2 <= r.n1 {
            return bad("run.n2", "must exceed run.n1, which must be at least 1");
        }
        if !(r.equilibrium_tol.is_finite() && r.equilibrium_tol >= 0.0) {
            return bad("run.equilibrium_tol", "must be finite and non-negative");
        }
        if self.orbit.steps == Some(0) {
            return bad("orbit.steps", "must be at least 1");
        }
        if self.plot.stride == 0 {
            return bad("plot.stride", "must be at least 1");
        }
        for (k, p) in self.perturbation.iter().enumerate() {
            let key = |f: &str| format!("perturbation[{k}].{f}");
            if p.j == 0 {
                return bad(&key("j"), "is 1-based");
            }
            if p.step.is_none() && p.z_target.is_none() {
                return bad(&key("z_target"), "or `step` is required");
            }
            if !p.amplitude.is_finite() {
                return bad(&key("amplitude"), "must be finite");
            }
            if !(p.radius > 0.0 && p.stop_radius > 0.0) {
                return bad(&key("radius"), "and `stop_radius` must be positive");
            }
            if p.steps.is_none() && p.max_steps == 0 {
                return bad(&key("max_steps"), "must be at least 1");
            }
        }
        Ok(())
    }

    /// Core run settings; `seed` overrides `run.backward_seed`.
    pub fn run_config(&self, seed: Option<u64>) -> RunConfig {
        let r = &self.run;
        RunConfig {
            system: self.system.name.clone().unwrap_or_default(),
            params: self.system.params.clone(),
            u0: r.u0.clone(),
            t0: r.t0,
            dt: r.dt,
            substeps: r.substeps,
            n1: r.n1,
            n2: r.n2,
            frame_init: match r.frame {
                FrameMode::Identity => FrameInit::Identity,
                FrameMode::Random => FrameInit::Random { seed: r.frame_seed },
            },
            backward_seed: seed.unwrap_or(r.backward_seed),
            equilibrium_tol: (r.equilibrium_tol > 0.0).then_some(r.equilibrium_tol),
            alignment_tol: r.alignment_tol,
            targets: None,
        }
    }

    pub fn orbit_steps(&self) -> usize {
        self.orbit.steps.unwrap_or(self.run.n2)
    }
}

impl PerturbationSection {
    pub fn length(&self) -> EvolveLength<f64> {
        match self.steps {
            Some(n) => EvolveLength::Steps(n),
            None => EvolveLength::UntilRadius {
                radius: self.stop_radius,
                max_steps: self.max_steps,
            },
        }
    }

    pub fn target(&self) -> Option<[f64; 2]> {
        self.target.or(match self.j {
            1 => Some([1.0, 0.0]),
            2 => Some([0.0, 1.0]),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_reference_run() {
        let cfg = Config::parse("", "inline").unwrap();
        assert_eq!(cfg, Config::default());
        let rc = cfg.run_config(None);
        assert_eq!(rc, RunConfig::default());
        assert_eq!(cfg.orbit_steps(), 30_000);
        assert_eq!(cfg.perturbation.len(), 2);
        assert_eq!(cfg.perturbation[1].target(), Some([0.0, 1.0]));
    }

    #[test]
    fn reference_file_matches_defaults() {
        let text = include_str!("../configs/reference.toml");
        let cfg = Config::parse(text, "reference.toml").unwrap();
        assert_eq!(cfg.run, RunSection::default());
        assert_eq!(cfg.plot, PlotSection::default());
        assert_eq!(cfg.out_dir, default_out_dir());
        assert_eq!(cfg.run_config(None).system, "paper3d");
        for (p, d) in cfg.perturbation.iter().zip(default_perturbations()) {
            assert_eq!(p.target(), d.target());
            assert_eq!(p.length(), d.length());
            assert_eq!((p.j, p.amplitude, p.z_target), (d.j, d.amplitude, d.z_target));
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Config::parse("[run]\ndtt = 0.2\n", "inline").unwrap_err();
        assert!(err.to_string().contains("dtt"), "{err}");
        let err = Config::parse("colour = 1\n", "inline").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = Config::parse("\n\n[run]\ndtt = 0.2\n", "inline").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        let err = Config::parse("[[perturbation]]\nj = 1\nsigma = 2\n", "inline").unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn system_table_requires_name() {
        let err = Config::parse("[system]\nparams = { a = 3.0 }\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("`system.name`") && msg.contains("cfg.toml"),
            "{msg}"
        );
        assert_eq!(err.code(), "E_CONFIG");
    }

    #[test]
    fn overrides_and_seed() {
        let text = r#"
            [system]
            name = "diag-linear"
            params = { lambda1 = 0.5, lambda2 = -0.5 }
            [run]
            u0 = [1.0, 1.0]
            n1 = 10
            n2 = 20
            frame = "random"
            frame_seed = 9
            equilibrium_tol = 0.0
        "#;
        let cfg = Config::parse(text, "inline").unwrap();
        let rc = cfg.run_config(Some(77));
        assert_eq!(rc.system, "diag-linear");
        assert_eq!(rc.backward_seed, 77);
        assert_eq!(rc.frame_init, FrameInit::Random { seed: 9 });
        assert_eq!(rc.equilibrium_tol, None);
    }

    #[test]
    fn invalid_values_rejected() {
        for (text, key) in [
            ("[run]\ndt = -0.1\n", "run.dt"),
            ("[run]\nn1 = 10\nn2 = 10\n", "run.n2"),
            ("[[perturbation]]\nj = 0\n", "perturbation[0].j"),
            ("[plot]\nstride = 0\n", "plot.stride"),
        ] {
            let err = Config::parse(text, "inline").unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
        }
    }
}
