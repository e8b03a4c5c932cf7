//! Two-sweep construction of covariant tangent vectors along an orbit.
//!
//! The forward sweep carries an orthonormal frame along the orbit and
//! re-orthonormalizes it every grid step, `F(t_n, dt) Q_n = Q_{n+1} R_{n+1}`.
//! The backward sweep starts from a random upper triangular `C_{N2}` and
//! pulls it back through the stored triangles, `C_{n-1} = normalize(R_n^{-1} C_n)`.
//! Tangent vectors are the columns of `V_n = Q_n C_n`.
//!
//! Along an orbit that settles onto an equilibrium, `V_n` converges in
//! forward time to eigenvectors of the linearization there. Steps beyond
//! `N1` only serve to wash out the random seed and are flagged non-converged.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrate::{grid_time, propagate_tangent, Trajectory};
use crate::linalg::{
    coeff_unchecked, orthogonality_defect, pull_back, qr_positive, upper_unchecked, CoeffMatrix,
    DiagNorms, OrthoFrame, UpperTri,
};
use crate::matrix::SquareMatrix;
use crate::scalar::{all_finite, norm2, Scalar};
use crate::systems::{eval_field, DynamicalSystem};

/// Name and parameters of the system a record was produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInfo<T> {
    pub name: String,
    pub params: Vec<(String, T)>,
}

impl<T: Scalar> SystemInfo<T> {
    pub fn of(sys: &dyn DynamicalSystem<T>) -> Self {
        SystemInfo {
            name: sys.name().to_string(),
            params: sys.params(),
        }
    }
}

/// Grid and window settings for [`forward_pass`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardConfig<T> {
    pub t0: T,
    pub dt: T,
    /// RK4 steps per grid interval.
    pub substeps: usize,
    pub n1: usize,
    pub n2: usize,
    /// Required bound on `|g(u_{N1})|_inf`; `None` skips the check.
    pub equilibrium_tol: Option<T>,
}

impl<T: Scalar> Default for ForwardConfig<T> {
    fn default() -> Self {
        ForwardConfig {
            t0: T::zero(),
            dt: T::lit(0.1),
            substeps: 1,
            n1: 15_000,
            n2: 30_000,
            equilibrium_tol: Some(T::lit(1e-8)),
        }
    }
}

/// Stored history of the forward sweep: `u_n`, `Q_n` for `n = 0..=N2` and
/// `R_n` for `n = 1..=N2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord<T> {
    system: SystemInfo<T>,
    t0: T,
    dt: T,
    substeps: usize,
    n1: usize,
    n2: usize,
    states: Vec<Vec<T>>,
    frames: Vec<OrthoFrame<T>>,
    triangles: Vec<UpperTri<T>>,
}

impl<T: Scalar> ForwardRecord<T> {
    /// Reassembles a record, e.g. from a checkpoint. Validates shapes and
    /// the triangular structure of every `R_n`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        system: SystemInfo<T>,
        t0: T,
        dt: T,
        substeps: usize,
        n1: usize,
        n2: usize,
        states: Vec<Vec<T>>,
        frames: Vec<SquareMatrix<T>>,
        triangles: Vec<SquareMatrix<T>>,
    ) -> Result<Self> {
        if !(0 < n1 && n1 < n2) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < N1 < N2, got N1={n1}, N2={n2}"
            )));
        }
        if states.len() != n2 + 1 || frames.len() != n2 + 1 || triangles.len() != n2 {
            return Err(Error::InvalidArgument(format!(
                "record sizes ({}, {}, {}) do not match N2={n2}",
                states.len(),
                frames.len(),
                triangles.len()
            )));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim)
            || frames.iter().chain(&triangles).any(|m| m.dim() != dim)
        {
            return Err(Error::InvalidArgument(
                "inconsistent record dimensions".into(),
            ));
        }
        let triangles = triangles
            .into_iter()
            .map(UpperTri::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardRecord {
            system,
            t0,
            dt,
            substeps,
            n1,
            n2,
            states,
            frames: frames
                .into_iter()
                .map(OrthoFrame::new)
                .collect::<Result<Vec<_>>>()?,
            triangles,
        })
    }

    pub fn system(&self) -> &SystemInfo<T> {
        &self.system
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn time(&self, n: usize) -> T {
        grid_time(self.t0, self.dt, n)
    }

    /// `u_n`, `0 <= n <= N2`.
    pub fn state(&self, n: usize) -> &[T] {
        &self.states[n]
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    /// `Q_n`, `0 <= n <= N2`.
    pub fn q(&self, n: usize) -> &OrthoFrame<T> {
        &self.frames[n]
    }

    /// `R_n`, `1 <= n <= N2`.
    pub fn r(&self, n: usize) -> &UpperTri<T> {
        assert!(n >= 1, "R_0 does not exist");
        &self.triangles[n - 1]
    }

    /// The orbit `u_0..u_N2` as a trajectory.
    pub fn orbit(&self) -> Trajectory<T> {
        Trajectory {
            t0: self.t0,
            dt: self.dt,
            first_step: 0,
            states: self.states.clone(),
        }
    }

    /// Re-propagates `(u_n, Q_n)` one grid step, refactors, and returns the
    /// largest deviation from the stored `(u_{n+1}, Q_{n+1}, R_{n+1})`.
    pub fn replay_residual(&self, sys: &dyn DynamicalSystem<T>, n: usize) -> Result<T> {
        if n >= self.n2 {
            return Err(Error::InvalidArgument(format!("replay step {n} >= N2")));
        }
        let (u, m) = propagate_tangent(
            sys,
            self.state(n),
            self.time(n),
            self.q(n).matrix(),
            self.dt,
            self.substeps,
        )?;
        let (q, r) = qr_positive(&m)?;
        let du = u
            .iter()
            .zip(self.state(n + 1))
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        Ok(du
            .max(q.matrix().max_abs_diff(self.q(n + 1).matrix()))
            .max(r.matrix().max_abs_diff(self.r(n + 1).matrix())))
    }
}

/// Forward sweep: propagate the orbit and its tangent frame, re-factor every
/// grid step, and store the whole history.
///
/// Fails with [`Error::NotNearEquilibrium`] if the configured tolerance is
/// not met at step `N1`.
pub fn forward_pass<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u0: &[T],
    q0: &OrthoFrame<T>,
    cfg: &ForwardConfig<T>,
) -> Result<ForwardRecord<T>> {
    let ForwardConfig {
        t0,
        dt,
        substeps,
        n1,
        n2,
        equilibrium_tol,
    } = *cfg;
    if !(0 < n1 && n1 < n2) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < N1 < N2, got N1={n1}, N2={n2}"
        )));
    }
    if u0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: u0.len(),
        });
    }
    if q0.matrix().dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: q0.matrix().dim(),
        });
    }
    if orthogonality_defect(q0.matrix()) > T::lit(1e-10) {
        return Err(Error::InvalidArgument(
            "initial frame is not orthogonal".into(),
        ));
    }
    if !all_finite(u0) {
        return Err(Error::NonFinite {
            stage: "initial state".into(),
            step: Some(0),
        });
    }

    let mut states = Vec::with_capacity(n2 + 1);
    let mut frames = Vec::with_capacity(n2 + 1);
    let mut triangles = Vec::with_capacity(n2);
    states.push(u0.to_vec());
    frames.push(q0.clone());

    for n in 0..n2 {
        let t = grid_time(t0, dt, n);
        let (u_next, m) = propagate_tangent(sys, &states[n], t, frames[n].matrix(), dt, substeps)
            .map_err(|e| e.at_step(n))?;
        let (q, r) = qr_positive(&m).map_err(|e| e.at_step(n + 1))?;
        states.push(u_next);
        frames.push(q);
        triangles.push(r);

        if n + 1 == n1 {
            if let Some(tol) = equilibrium_tol {
                let g = eval_field(sys, &states[n1], grid_time(t0, dt, n1))
                    .map_err(|e| e.at_step(n1))?;
                let residual = g.iter().fold(T::zero(), |m, x| m.max(x.abs()));
                if !(residual < tol) {
                    return Err(Error::NotNearEquilibrium {
                        step: n1,
                        residual: residual.as_f64(),
                        tolerance: tol.as_f64(),
                    });
                }
            }
        }
    }

    Ok(ForwardRecord {
        system: SystemInfo::of(sys),
        t0,
        dt,
        substeps,
        n1,
        n2,
        states,
        frames,
        triangles,
    })
}

/// Seeded random starting point for the backward sweep.
///
/// Upper triangular with entries uniform(-1, 1) above the diagonal and
/// uniform(0.1, 1) on it, then column-normalized. Generated with ChaCha8 so
/// the matrix is identical on every platform.
pub fn seed_coefficients<T: Scalar>(n: usize, seed: u64) -> CoeffMatrix<T> {
    assert!(n >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = SquareMatrix::zeros(n);
    for j in 0..n {
        for i in 0..j {
            c[(i, j)] = T::lit(rng.gen_range(-1.0..1.0));
        }
        c[(j, j)] = T::lit(rng.gen_range(0.1..1.0));
    }
    CoeffMatrix::new(c).expect("positive diagonal keeps every column nonzero")
}

/// Coefficient history of the backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardRecord<T> {
    /// `C_n` for `n = 0..=N2`.
    pub coeffs: Vec<CoeffMatrix<T>>,
    /// `D_n` for `n = 0..N2` (the norms removed when forming `C_n`).
    pub norms: Vec<DiagNorms<T>>,
}

/// Backward sweep from `C_{N2}` down to `C_0`.
pub fn backward_pass<T: Scalar>(
    rec: &ForwardRecord<T>,
    c_end: &CoeffMatrix<T>,
) -> Result<BackwardRecord<T>> {
    let c = c_end.matrix();
    if c.dim() != rec.dim() {
        return Err(Error::DimensionMismatch {
            expected: rec.dim(),
            got: c.dim(),
        });
    }
    if !c.is_upper_triangular() {
        return Err(Error::InvalidArgument(
            "C_N2 must be upper triangular".into(),
        ));
    }
    let unit = (0..c.dim()).all(|j| (norm2(&c.column(j)) - T::one()).abs() <= T::lit(1e-10));
    if !unit {
        return Err(Error::InvalidArgument(
            "C_N2 columns must have unit norm".into(),
        ));
    }

    let n2 = rec.n2();
    let mut coeffs = vec![c_end.clone()];
    let mut norms = Vec::with_capacity(n2);
    for n in (1..=n2).rev() {
        let (prev, d) =
            pull_back(rec.r(n), coeffs.last().expect("nonempty")).map_err(|e| e.at_step(n))?;
        coeffs.push(prev);
        norms.push(d);
    }
    coeffs.reverse();
    norms.reverse();
    Ok(BackwardRecord { coeffs, norms })
}

/// Tangent vectors at one orbit point, stored as matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVectors<T> {
    pub step: usize,
    pub time: T,
    pub state: Vec<T>,
    pub vectors: SquareMatrix<T>,
    /// False for steps beyond `N1`, where the seed has not been washed out.
    pub converged: bool,
}

impl<T: Scalar> TangentVectors<T> {
    pub fn column(&self, j: usize) -> Vec<T> {
        self.vectors.column(j)
    }
}

/// Tangent vectors over a contiguous range of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    pub entries: Vec<TangentVectors<T>>,
}

impl<T: Scalar> VectorField<T> {
    pub fn first_step(&self) -> usize {
        self.entries.first().map_or(0, |e| e.step)
    }

    pub fn get(&self, step: usize) -> Option<&TangentVectors<T>> {
        step.checked_sub(self.first_step())
            .and_then(|k| self.entries.get(k))
    }

    /// Flips each column so its largest-magnitude component is positive.
    pub fn canonicalized(mut self) -> Self {
        for e in &mut self.entries {
            for j in 0..e.vectors.dim() {
                let mut col = e.vectors.column(j);
                canonicalize_sign(&mut col);
                e.vectors.set_column(j, &col);
            }
        }
        self
    }
}

/// Negates `v` if its largest-magnitude component (first on ties) is negative.
pub fn canonicalize_sign<T: Scalar>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign_negative = false;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < T::zero();
        }
    }
    if sign_negative {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn compose_range<T: Scalar>(
    rec: &ForwardRecord<T>,
    brec: &BackwardRecord<T>,
    range: RangeInclusive<usize>,
) -> Result<VectorField<T>> {
    if brec.coeffs.len() != rec.n2() + 1 {
        return Err(Error::InvalidArgument(
            "backward record does not match forward record".into(),
        ));
    }
    let entries = range
        .map(|n| TangentVectors {
            step: n,
            time: rec.time(n),
            state: rec.state(n).to_vec(),
            vectors: rec.q(n).matrix() * brec.coeffs[n].matrix(),
            converged: n <= rec.n1(),
        })
        .collect();
    Ok(VectorField { entries })
}

/// `V_n = Q_n C_n` for `n` in `range`, which must lie inside `[0, N1]`.
pub fn compose_vectors<T: Scalar>(
    rec: &ForwardRecord<T>,
    brec: &BackwardRecord<T>,
    range: RangeInclusive<usize>,
) -> Result<VectorField<T>> {
    if range.is_empty() || *range.end() > rec.n1() {
        return Err(Error::InvalidArgument(format!(
            "vector range {}..={} must be nonempty and within [0, N1={}]",
            range.start(),
            range.end(),
            rec.n1()
        )));
    }
    compose_range(rec, brec, range)
}

/// `V_n` for every step `0..=N2`, with steps past `N1` flagged non-converged.
pub fn compose_all<T: Scalar>(
    rec: &ForwardRecord<T>,
    brec: &BackwardRecord<T>,
) -> Result<VectorField<T>> {
    compose_range(rec, brec, 0..=rec.n2())
}

/// Time-averaged growth rates from the diagonals of `R_{n_a+1}..R_{n_b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentEstimate<T> {
    pub values: Vec<T>,
    pub window: (usize, usize),
}

impl<T: Scalar> ExponentEstimate<T> {
    /// True when the estimates are non-increasing.
    pub fn is_ordered(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }
}

/// `lambda_i = sum_{n=a+1}^{b} ln R_n[i][i] / ((b - a) dt)`.
pub fn lyapunov_exponents<T: Scalar>(
    rec: &ForwardRecord<T>,
    window: (usize, usize),
) -> Result<ExponentEstimate<T>> {
    let (a, b) = window;
    if !(a < b && b <= rec.n2()) {
        return Err(Error::InvalidArgument(format!(
            "exponent window [{a}, {b}] must satisfy a < b <= N2={}",
            rec.n2()
        )));
    }
    let dim = rec.dim();
    let mut sums = vec![T::zero(); dim];
    for n in a + 1..=b {
        let r = rec.r(n).matrix();
        for (i, s) in sums.iter_mut().enumerate() {
            *s = *s + r[(i, i)].ln();
        }
    }
    let span = T::from_count(b - a) * rec.dt();
    Ok(ExponentEstimate {
        values: sums.into_iter().map(|s| s / span).collect(),
        window,
    })
}

/// Raw constructors for records assembled by tests and loaders.
impl<T: Scalar> BackwardRecord<T> {
    pub fn identity(rec: &ForwardRecord<T>) -> Self {
        let n = rec.dim();
        BackwardRecord {
            coeffs: vec![coeff_unchecked(SquareMatrix::identity(n)); rec.n2() + 1],
            norms: vec![DiagNorms(vec![T::one(); n]); rec.n2()],
        }
    }
}

#[doc(hidden)]
pub fn record_with_triangles<T: Scalar>(
    dim: usize,
    dt: T,
    n1: usize,
    triangles: Vec<SquareMatrix<T>>,
) -> ForwardRecord<T> {
    let n2 = triangles.len();
    ForwardRecord {
        system: SystemInfo {
            name: "synthetic".into(),
            params: Vec::new(),
        },
        t0: T::zero(),
        dt,
        substeps: 1,
        n1,
        n2,
        states: vec![vec![T::zero(); dim]; n2 + 1],
        frames: vec![OrthoFrame::identity(dim); n2 + 1],
        triangles: triangles.into_iter().map(upper_unchecked).collect(),
    }
}
