//! End-to-end runs on a concrete system: tangent vectors along a transient,
//! their alignment with known eigenvectors, and steering experiments that
//! perturb the orbit along one vector and watch which way it leaves.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ginelli::{
    backward_pass, compose_vectors, forward_pass, lyapunov_exponents, seed_coefficients,
    BackwardRecord, ExponentEstimate, ForwardConfig, ForwardRecord, VectorField,
};
use crate::integrate::{integrate_until, Trajectory};
use crate::linalg::OrthoFrame;
use crate::scalar::{dot, norm2, Scalar};
use crate::systems::{build_system, DynamicalSystem};

/// How the initial tangent frame `Q_0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameInit {
    Identity,
    /// Orthogonal factor of a seeded random matrix.
    Random {
        seed: u64,
    },
}

/// Everything needed to reproduce one transient-vector computation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub system: String,
    pub params: BTreeMap<String, f64>,
    pub u0: Vec<T>,
    pub t0: T,
    pub dt: T,
    pub substeps: usize,
    pub n1: usize,
    pub n2: usize,
    pub frame_init: FrameInit,
    pub backward_seed: u64,
    pub equilibrium_tol: Option<T>,
    pub alignment_tol: T,
    /// Reference directions for the alignment report. `None` uses the
    /// coordinate axes for `paper3d` and `diag-linear`.
    pub targets: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> Default for RunConfig<T> {
    /// The reference run: `paper3d` from `(0, 0, 1000)`, `dt = 0.1`,
    /// `N1 = 15000`, `N2 = 30000`.
    fn default() -> Self {
        RunConfig {
            system: "paper3d".into(),
            params: BTreeMap::new(),
            u0: vec![T::zero(), T::zero(), T::lit(1000.0)],
            t0: T::zero(),
            dt: T::lit(0.1),
            substeps: 1,
            n1: 15_000,
            n2: 30_000,
            frame_init: FrameInit::Identity,
            backward_seed: 1,
            equilibrium_tol: Some(T::lit(1e-8)),
            alignment_tol: T::lit(0.999),
            targets: None,
        }
    }
}

impl<T: Scalar> RunConfig<T> {
    pub fn build_system(&self) -> Result<Box<dyn DynamicalSystem<T>>> {
        build_system(&self.system, &self.params)
    }

    pub fn forward_config(&self) -> ForwardConfig<T> {
        ForwardConfig {
            t0: self.t0,
            dt: self.dt,
            substeps: self.substeps,
            n1: self.n1,
            n2: self.n2,
            equilibrium_tol: self.equilibrium_tol,
        }
    }

    pub fn initial_frame(&self, dim: usize) -> OrthoFrame<T> {
        match self.frame_init {
            FrameInit::Identity => OrthoFrame::identity(dim),
            FrameInit::Random { seed } => OrthoFrame::random(dim, seed),
        }
    }

    fn alignment_targets(&self, dim: usize) -> Vec<Vec<T>> {
        match &self.targets {
            Some(t) => t.clone(),
            None if matches!(self.system.as_str(), "paper3d" | "diag-linear") => (0..dim)
                .map(|j| {
                    let mut e = vec![T::zero(); dim];
                    e[j] = T::one();
                    e
                })
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Per-step `|cos|` between each vector column and its target direction.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport<T> {
    pub tolerance: T,
    pub targets: Vec<Vec<T>>,
    /// Step index of each row of `cosines`.
    pub steps: Vec<usize>,
    /// `cosines[k][j]`: column `j` at `steps[k]`.
    pub cosines: Vec<Vec<T>>,
    /// First step at which column `j` exceeds the tolerance.
    pub first_exceeding: Vec<Option<usize>>,
    /// First step from which column `j` stays above the tolerance.
    pub settled_from: Vec<Option<usize>>,
}

impl<T: Scalar> AlignmentReport<T> {
    /// Smallest `|cos|` per column over steps in `[lo, hi]`.
    pub fn min_over(&self, lo: usize, hi: usize) -> Vec<T> {
        let mut mins = vec![T::one(); self.targets.len()];
        for (step, row) in self.steps.iter().zip(&self.cosines) {
            if (lo..=hi).contains(step) {
                for (m, &c) in mins.iter_mut().zip(row) {
                    *m = m.min(c);
                }
            }
        }
        mins
    }

    /// `|cos|` per column at the last reported step.
    pub fn last(&self) -> Vec<T> {
        self.cosines.last().cloned().unwrap_or_default()
    }
}

/// `|<a, b>| / (|a| |b|)`, clamped to `[0, 1]`.
pub fn abs_cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm2(a) * norm2(b);
    if denom == T::zero() {
        return T::zero();
    }
    (dot(a, b).abs() / denom).min(T::one())
}

/// Compares every column of every step in `vf` against `targets[j]`.
pub fn alignment<T: Scalar>(
    vf: &VectorField<T>,
    targets: &[Vec<T>],
    tolerance: T,
) -> AlignmentReport<T> {
    let mut steps = Vec::with_capacity(vf.entries.len());
    let mut cosines = Vec::with_capacity(vf.entries.len());
    let mut first_exceeding = vec![None; targets.len()];
    let mut settled_from = vec![None; targets.len()];
    for e in &vf.entries {
        let row: Vec<T> = targets
            .iter()
            .enumerate()
            .map(|(j, t)| abs_cosine(&e.column(j), t))
            .collect();
        for (j, &c) in row.iter().enumerate() {
            if c > tolerance {
                first_exceeding[j].get_or_insert(e.step);
                settled_from[j].get_or_insert(e.step);
            } else {
                settled_from[j] = None;
            }
        }
        steps.push(e.step);
        cosines.push(row);
    }
    AlignmentReport {
        tolerance,
        targets: targets.to_vec(),
        steps,
        cosines,
        first_exceeding,
        settled_from,
    }
}

/// Output of [`run_transient_clv`].
#[derive(Debug, Clone)]
pub struct TransientRun<T> {
    pub record: ForwardRecord<T>,
    pub backward: BackwardRecord<T>,
    /// Vectors on `[0, N1]`, sign-canonicalized.
    pub vectors: VectorField<T>,
    /// Estimated on `[N1, N2]`.
    pub exponents: ExponentEstimate<T>,
    pub alignment: AlignmentReport<T>,
}

/// Forward sweep, seeded backward sweep, composition on `[0, N1]`,
/// exponents on `[N1, N2]`, and alignment against the configured targets.
pub fn run_transient_clv<T: Scalar>(cfg: &RunConfig<T>) -> Result<TransientRun<T>> {
    let sys = cfg.build_system()?;
    run_with_system(sys.as_ref(), cfg)
}

/// As [`run_transient_clv`] with an explicitly supplied system.
pub fn run_with_system<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    cfg: &RunConfig<T>,
) -> Result<TransientRun<T>> {
    let dim = sys.dim();
    let record = forward_pass(sys, &cfg.u0, &cfg.initial_frame(dim), &cfg.forward_config())?;
    let backward = backward_pass(&record, &seed_coefficients(dim, cfg.backward_seed))?;
    let vectors = compose_vectors(&record, &backward, 0..=record.n1())?.canonicalized();
    let exponents = lyapunov_exponents(&record, (record.n1(), record.n2()))?;
    let targets = cfg.alignment_targets(dim);
    if targets.iter().any(|t| t.len() != dim) || targets.len() > dim {
        return Err(Error::InvalidArgument(format!(
            "alignment targets must be at most {dim} vectors of length {dim}"
        )));
    }
    let alignment = alignment(&vectors, &targets, cfg.alignment_tol);
    Ok(TransientRun {
        record,
        backward,
        vectors,
        exponents,
        alignment,
    })
}

/// Grid step whose last state component (`z` for three-dimensional systems)
/// is closest to `z_target`. Ties resolve to the earliest step.
pub fn find_orbit_point<T: Scalar>(rec: &ForwardRecord<T>, z_target: T) -> Result<usize> {
    let zi = rec.dim() - 1;
    let (lo, hi) = rec
        .states()
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), u| {
            (lo.min(u[zi]), hi.max(u[zi]))
        });
    if !(z_target >= lo && z_target <= hi) {
        return Err(Error::NotFound(format!(
            "z = {z_target} outside the orbit's range [{lo:e}, {hi:e}]"
        )));
    }
    let mut best = 0;
    let mut best_dist = T::infinity();
    for (n, u) in rec.states().iter().enumerate() {
        let d = (u[zi] - z_target).abs();
        if d < best_dist {
            best = n;
            best_dist = d;
        }
    }
    Ok(best)
}

/// How long to follow a perturbed orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvolveLength<T> {
    /// Fixed number of grid steps.
    Steps(usize),
    /// Until the `(x, y)` radius reaches `radius`, at most `max_steps` steps.
    UntilRadius { radius: T, max_steps: usize },
}

impl<T: Scalar> Default for EvolveLength<T> {
    fn default() -> Self {
        EvolveLength::UntilRadius {
            radius: T::lit(10.0),
            max_steps: 5_000,
        }
    }
}

/// Perturbation of the base orbit at `step` along vector `column` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec<T> {
    pub step: usize,
    pub column: usize,
    pub amplitude: T,
    pub length: EvolveLength<T>,
}

fn xy_radius<T: Scalar>(u: &[T]) -> T {
    u[0].hypot(u[1])
}

/// Integrates from `u_{n*} + s * V_{n*}[:, j]` on the record's grid.
///
/// With `s = 0` the result reproduces the base orbit bit for bit.
pub fn perturb_and_evolve<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    rec: &ForwardRecord<T>,
    vf: &VectorField<T>,
    spec: &PerturbationSpec<T>,
) -> Result<Trajectory<T>> {
    let entry = vf.get(spec.step).ok_or_else(|| {
        Error::InvalidArgument(format!("step {} is outside the vector range", spec.step))
    })?;
    if spec.step > rec.n1() {
        return Err(Error::InvalidArgument(format!(
            "perturbation step {} lies beyond N1 = {}",
            spec.step,
            rec.n1()
        )));
    }
    if spec.column >= rec.dim() {
        return Err(Error::InvalidArgument(format!(
            "column {} out of range for dimension {}",
            spec.column,
            rec.dim()
        )));
    }
    let dir = entry.column(spec.column);
    let start: Vec<T> = rec
        .state(spec.step)
        .iter()
        .zip(&dir)
        .map(|(&u, &v)| u + spec.amplitude * v)
        .collect();
    let (max_steps, radius) = match spec.length {
        EvolveLength::Steps(n) => (n, None),
        EvolveLength::UntilRadius { radius, max_steps } => {
            if rec.dim() < 2 {
                return Err(Error::InvalidArgument(
                    "radius stopping needs at least two dimensions".into(),
                ));
            }
            (max_steps, Some(radius))
        }
    };
    integrate_until(
        sys,
        &start,
        rec.t0(),
        spec.step,
        rec.dt(),
        rec.substeps(),
        max_steps,
        |u| radius.is_some_and(|r| xy_radius(u) >= r),
    )
}

/// `|cos|` between the `(x, y)` projection and `target` at the first state
/// whose `(x, y)` radius reaches `radius`.
pub fn direction_test<T: Scalar>(traj: &Trajectory<T>, target: [T; 2], radius: T) -> Result<T> {
    if norm2(&target) == T::zero() {
        return Err(Error::InvalidArgument("target direction is zero".into()));
    }
    let mut max_radius = T::zero();
    for u in &traj.states {
        if u.len() < 2 {
            return Err(Error::InvalidArgument("direction test needs (x, y)".into()));
        }
        let r = xy_radius(u);
        if r >= radius {
            return Ok(abs_cosine(&u[..2], &target));
        }
        max_radius = max_radius.max(r);
    }
    Err(Error::RadiusNotReached {
        radius: radius.as_f64(),
        max_radius: max_radius.as_f64(),
    })
}
