//! Fixed-step classical Runge-Kutta propagation of states and tangent matrices.
//!
//! The state update is shared between [`rk4_step`] and [`rk4_tangent_step`],
//! so for the same `(u, t, dt)` both produce bit-identical states. The
//! tangent matrix is advanced with the Jacobian evaluated at each stage state.

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{all_finite, Scalar};
use crate::systems::{eval_field, eval_jacobian, DynamicalSystem};

/// States sampled on the grid `t_k = t0 + (first_step + k) * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub t0: T,
    pub dt: T,
    /// Grid index of `states[0]`.
    pub first_step: usize,
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time of `states[k]`.
    pub fn time(&self, k: usize) -> T {
        grid_time(self.t0, self.dt, self.first_step + k)
    }

    pub fn last(&self) -> &[T] {
        self.states.last().expect("trajectory is nonempty")
    }
}

#[inline]
pub(crate) fn grid_time<T: Scalar>(t0: T, dt: T, n: usize) -> T {
    t0 + T::from_count(n) * dt
}

fn check_dt<T: Scalar>(dt: T) -> Result<()> {
    if dt > T::zero() && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )))
    }
}

fn stage_field<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    stage: &str,
) -> Result<Vec<T>> {
    eval_field(sys, u, t).map_err(|e| match e {
        Error::NonFinite { step, .. } => Error::NonFinite {
            stage: format!("RK4 stage {stage}"),
            step,
        },
        other => other,
    })
}

fn stage_jacobian<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    stage: &str,
) -> Result<SquareMatrix<T>> {
    eval_jacobian(sys, u, t).map_err(|e| match e {
        Error::NonFinite { step, .. } => Error::NonFinite {
            stage: format!("RK4 tangent stage {stage}"),
            step,
        },
        other => other,
    })
}

fn offset<T: Scalar>(u: &[T], a: T, k: &[T]) -> Vec<T> {
    u.iter().zip(k).map(|(&x, &d)| x + a * d).collect()
}

fn combine<T: Scalar>(u: &[T], dt: T, k: [&[T]; 4]) -> Vec<T> {
    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    (0..u.len())
        .map(|i| u[i] + sixth * (k[0][i] + two * k[1][i] + two * k[2][i] + k[3][i]))
        .collect()
}

struct Stages<T> {
    states: [Vec<T>; 4],
    slopes: [Vec<T>; 4],
    times: [T; 4],
}

fn state_stages<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    dt: T,
) -> Result<Stages<T>> {
    let half = dt / T::lit(2.0);
    let t_half = t + half;
    let t_full = t + dt;
    let k1 = stage_field(sys, u, t, "k1")?;
    let u2 = offset(u, half, &k1);
    let k2 = stage_field(sys, &u2, t_half, "k2")?;
    let u3 = offset(u, half, &k2);
    let k3 = stage_field(sys, &u3, t_half, "k3")?;
    let u4 = offset(u, dt, &k3);
    let k4 = stage_field(sys, &u4, t_full, "k4")?;
    Ok(Stages {
        states: [u.to_vec(), u2, u3, u4],
        slopes: [k1, k2, k3, k4],
        times: [t, t_half, t_half, t_full],
    })
}

fn finish_state<T: Scalar>(u: &[T], dt: T, st: &Stages<T>) -> Result<Vec<T>> {
    let next = combine(
        u,
        dt,
        [&st.slopes[0], &st.slopes[1], &st.slopes[2], &st.slopes[3]],
    );
    if !all_finite(&next) {
        return Err(Error::NonFinite {
            stage: "RK4 update".into(),
            step: None,
        });
    }
    Ok(next)
}

/// One classical RK4 step of `u' = g(u, t)` from `t` to `t + dt`.
pub fn rk4_step<T: Scalar>(sys: &dyn DynamicalSystem<T>, u: &[T], t: T, dt: T) -> Result<Vec<T>> {
    check_dt(dt)?;
    let st = state_stages(sys, u, t, dt)?;
    finish_state(u, dt, &st)
}

/// One RK4 step of the augmented system `(u', M') = (g(u, t), J(u, t) M)`.
pub fn rk4_tangent_step<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    m: &SquareMatrix<T>,
    dt: T,
) -> Result<(Vec<T>, SquareMatrix<T>)> {
    check_dt(dt)?;
    if m.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: m.dim(),
        });
    }
    let st = state_stages(sys, u, t, dt)?;
    let half = dt / T::lit(2.0);

    let j1 = stage_jacobian(sys, &st.states[0], st.times[0], "K1")?;
    let k1 = &j1 * m;
    let j2 = stage_jacobian(sys, &st.states[1], st.times[1], "K2")?;
    let k2 = &j2 * &m.add_scaled(half, &k1);
    let j3 = stage_jacobian(sys, &st.states[2], st.times[2], "K3")?;
    let k3 = &j3 * &m.add_scaled(half, &k2);
    let j4 = stage_jacobian(sys, &st.states[3], st.times[3], "K4")?;
    let k4 = &j4 * &m.add_scaled(dt, &k3);

    let next_m = SquareMatrix::from_row_major(
        m.dim(),
        combine(
            m.as_slice(),
            dt,
            [k1.as_slice(), k2.as_slice(), k3.as_slice(), k4.as_slice()],
        ),
    )?;
    if !next_m.is_finite() {
        return Err(Error::NonFinite {
            stage: "RK4 tangent update".into(),
            step: None,
        });
    }
    let next_u = finish_state(u, dt, &st)?;
    Ok((next_u, next_m))
}

fn check_substeps(substeps: usize) -> Result<()> {
    if substeps == 0 {
        Err(Error::InvalidArgument("substeps must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Advances a state across one grid interval `[t, t + dt]` using `substeps`
/// equal RK4 steps.
pub fn propagate<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    dt: T,
    substeps: usize,
) -> Result<Vec<T>> {
    check_substeps(substeps)?;
    let h = dt / T::from_count(substeps);
    let mut cur = u.to_vec();
    for k in 0..substeps {
        cur = rk4_step(sys, &cur, t + T::from_count(k) * h, h)?;
    }
    Ok(cur)
}

/// Tangent counterpart of [`propagate`]; the state component is identical to
/// what [`propagate`] returns.
pub fn propagate_tangent<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    m: &SquareMatrix<T>,
    dt: T,
    substeps: usize,
) -> Result<(Vec<T>, SquareMatrix<T>)> {
    check_substeps(substeps)?;
    let h = dt / T::from_count(substeps);
    let mut cur = (u.to_vec(), m.clone());
    for k in 0..substeps {
        cur = rk4_tangent_step(sys, &cur.0, t + T::from_count(k) * h, &cur.1, h)?;
    }
    Ok(cur)
}

/// Integrates `steps` grid intervals from `u0` at `t0`.
pub fn integrate_orbit<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u0: &[T],
    t0: T,
    dt: T,
    steps: usize,
) -> Result<Trajectory<T>> {
    integrate_until(sys, u0, t0, 0, dt, 1, steps, |_| false)
}

/// General grid integration.
///
/// Starts at grid index `first_step` (time `t0 + first_step * dt`), takes at
/// most `max_steps` intervals of `substeps` RK4 steps each, and stops early
/// once `stop` returns true for a newly computed state. Numeric failures
/// carry the grid index of the failing interval.
#[allow(clippy::too_many_arguments)]
pub fn integrate_until<T, F>(
    sys: &dyn DynamicalSystem<T>,
    u0: &[T],
    t0: T,
    first_step: usize,
    dt: T,
    substeps: usize,
    max_steps: usize,
    mut stop: F,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> bool,
{
    if max_steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    check_dt(dt)?;
    if u0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: u0.len(),
        });
    }
    if !all_finite(u0) {
        return Err(Error::NonFinite {
            stage: "initial state".into(),
            step: Some(first_step),
        });
    }
    let mut states = Vec::with_capacity(max_steps + 1);
    states.push(u0.to_vec());
    for k in 0..max_steps {
        let n = first_step + k;
        let prev = states.last().expect("nonempty");
        let next =
            propagate(sys, prev, grid_time(t0, dt, n), dt, substeps).map_err(|e| e.at_step(n))?;
        let done = stop(&next);
        states.push(next);
        if done {
            break;
        }
    }
    Ok(Trajectory {
        t0,
        dt,
        first_step,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{DiagLinear, FnSystem, TwistedSaddle};

    fn decay() -> FnSystem<f64> {
        FnSystem::new("decay", 1, |u: &[f64], _, out: &mut [f64]| out[0] = -u[0])
            .with_jacobian(|_, _| SquareMatrix::from_diag(&[-1.0]))
    }

    /// RK4 applied to `u' = lambda u` multiplies by the degree-4 Taylor polynomial.
    fn rk4_factor(z: f64) -> f64 {
        1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0
    }

    #[test]
    fn zero_field_is_fixed() {
        let sys = FnSystem::new("zero", 3, |_: &[f64], _, out: &mut [f64]| out.fill(0.0));
        let u = [1.5, -2.0, 1e10];
        assert_eq!(rk4_step(&sys, &u, 0.0, 0.1).unwrap(), u.to_vec());
    }

    #[test]
    fn single_decay_step() {
        let got = rk4_step(&decay(), &[1.0], 0.0, 0.1).unwrap()[0];
        assert!((got - rk4_factor(-0.1)).abs() < 1e-15);
        assert!((got - 0.9048375).abs() < 1e-15);
        assert!((got - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let tr = integrate_orbit(&decay(), &[1.0], 0.0, dt, steps).unwrap();
            (tr.last()[0] - (-1.0f64).exp()).abs()
        };
        for base in [5, 10, 20] {
            let ratio = err(base) / err(2 * base);
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} at {base}");
        }
    }

    #[test]
    fn zero_tangent_stays_zero() {
        let sys = TwistedSaddle::<f64>::default();
        let u = [0.3, -0.1, 5.0];
        let (v, m) = rk4_tangent_step(&sys, &u, 0.0, &SquareMatrix::zeros(3), 0.1).unwrap();
        assert_eq!(m, SquareMatrix::zeros(3));
        assert_eq!(v, rk4_step(&sys, &u, 0.0, 0.1).unwrap());
    }

    #[test]
    fn tangent_step_on_diagonal_system() {
        let rates = [2.0, 1.0, -1.0];
        let sys = DiagLinear::new(rates.to_vec());
        let (_, m) =
            rk4_tangent_step(&sys, &[0.0; 3], 0.0, &SquareMatrix::identity(3), 0.1).unwrap();
        for (i, &r) in rates.iter().enumerate() {
            // stage arithmetic is exact up to roundoff
            assert!((m[(i, i)] - rk4_factor(0.1 * r)).abs() < 1e-15);
            // one step at dt = 0.1 carries the method's local error, 2.8e-6 for rate 2
            assert!((m[(i, i)] - (0.1 * r).exp()).abs() < 3e-6);
        }
        assert!(m.max_abs_diff(&SquareMatrix::from_diag(&m.diagonal())) == 0.0);

        let (_, m2) =
            propagate_tangent(&sys, &[0.0; 3], 0.0, &SquareMatrix::identity(3), 0.1, 2).unwrap();
        for (i, &r) in rates.iter().enumerate() {
            assert!((m2[(i, i)] - (0.1 * r).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn many_tangent_steps_track_exponentials() {
        let rates = [2.0, 1.0, -1.0];
        let sys = DiagLinear::new(rates.to_vec());
        let mut m = SquareMatrix::identity(3);
        let mut u = vec![0.0; 3];
        for n in 0..10 {
            let (nu, nm) = rk4_tangent_step(&sys, &u, 0.1 * n as f64, &m, 0.1).unwrap();
            u = nu;
            m = nm;
            let t = 0.1 * (n + 1) as f64;
            for (i, &r) in rates.iter().enumerate() {
                let exact = (r * t).exp();
                assert!(((m[(i, i)] - exact) / exact).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn state_part_matches_plain_step() {
        let sys = TwistedSaddle::<f64>::default();
        let u = [0.01, 0.02, 66.302];
        let plain = rk4_step(&sys, &u, 1.0, 0.1).unwrap();
        let (aug, _) = rk4_tangent_step(&sys, &u, 1.0, &SquareMatrix::identity(3), 0.1).unwrap();
        assert_eq!(
            plain.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            aug.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn orbit_grid_and_single_step() {
        let sys = TwistedSaddle::<f64>::default();
        let u0 = [0.1, 0.0, 3.0];
        let tr = integrate_orbit(&sys, &u0, 0.0, 0.1, 1).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.states[1], rk4_step(&sys, &u0, 0.0, 0.1).unwrap());
        assert_eq!(tr.time(1), 0.1);
    }

    #[test]
    fn orbit_rejects_zero_steps_and_bad_dt() {
        let sys = decay();
        assert!(integrate_orbit(&sys, &[1.0], 0.0, 0.1, 0).is_err());
        assert!(rk4_step(&sys, &[1.0], 0.0, 0.0).is_err());
        assert!(rk4_step(&sys, &[1.0], 0.0, -0.1).is_err());
    }

    #[test]
    fn blowup_reports_stage_and_step() {
        let sys = FnSystem::new("square", 1, |u: &[f64], _, out: &mut [f64]| {
            out[0] = u[0] * u[0]
        });
        let err = integrate_orbit(&sys, &[1e100], 0.0, 1.0, 10).unwrap_err();
        match err {
            Error::NonFinite { stage, step } => {
                assert!(stage.starts_with("RK4"), "{stage}");
                assert!(step.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonautonomous_time_grid() {
        // u' = t  =>  u(t) = t^2 / 2, integrated exactly by RK4
        let sys = FnSystem::new("ramp", 1, |_: &[f64], t, out: &mut [f64]| out[0] = t);
        let tr = integrate_until(&sys, &[0.0], 0.0, 0, 0.25, 3, 8, |_| false).unwrap();
        assert!((tr.last()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn early_stop() {
        let tr = integrate_until(&decay(), &[1.0], 0.0, 5, 0.1, 1, 1000, |u| u[0] < 0.5).unwrap();
        assert!(tr.last()[0] < 0.5);
        assert!(tr.len() < 20);
        assert_eq!(tr.first_step, 5);
    }
}
