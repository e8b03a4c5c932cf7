//! Vector fields `u' = g(u, t)` with their Jacobians, and the built-in systems.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::{all_finite, Scalar};

/// A finite-dimensional, possibly time-dependent vector field.
///
/// Implementations are immutable and stateless, so they can be shared across
/// threads. `jacobian` may return `None`, in which case callers fall back to
/// central differences via [`fd_jacobian`].
pub trait DynamicalSystem<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Named parameters, in a stable order.
    fn params(&self) -> Vec<(String, T)>;

    /// Writes `g(u, t)` into `out`. Both slices have length `dim()`.
    fn field(&self, u: &[T], t: T, out: &mut [T]);

    /// Analytic `dg/du` at `(u, t)`, when available.
    fn jacobian(&self, _u: &[T], _t: T) -> Option<SquareMatrix<T>> {
        None
    }
}

fn check_dim<T>(sys: &dyn DynamicalSystem<T>, u: &[T]) -> Result<()>
where
    T: Scalar,
{
    if u.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Evaluates `g(u, t)`.
pub fn eval_field<T: Scalar>(sys: &dyn DynamicalSystem<T>, u: &[T], t: T) -> Result<Vec<T>> {
    check_dim(sys, u)?;
    let mut out = vec![T::zero(); u.len()];
    sys.field(u, t, &mut out);
    if !all_finite(&out) {
        return Err(Error::NonFinite {
            stage: format!("field of {}", sys.name()),
            step: None,
        });
    }
    Ok(out)
}

/// Default central-difference step: `1e-6 * max(1, |u|_inf)`.
pub fn default_fd_step<T: Scalar>(u: &[T]) -> T {
    let scale = u.iter().fold(T::one(), |m, x| m.max(x.abs()));
    T::lit(1e-6) * scale
}

/// Central-difference Jacobian; column `j` is `(g(u + h e_j) - g(u - h e_j)) / 2h`.
pub fn fd_jacobian<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
    h: T,
) -> Result<SquareMatrix<T>> {
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_dim(sys, u)?;
    let n = u.len();
    let mut jac = SquareMatrix::zeros(n);
    let mut probe = u.to_vec();
    let two_h = h + h;
    for j in 0..n {
        probe[j] = u[j] + h;
        let plus = eval_field(sys, &probe, t)?;
        probe[j] = u[j] - h;
        let minus = eval_field(sys, &probe, t)?;
        probe[j] = u[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / two_h;
        }
    }
    Ok(jac)
}

/// Analytic Jacobian if the system provides one, else [`fd_jacobian`] with
/// [`default_fd_step`].
pub fn eval_jacobian<T: Scalar>(
    sys: &dyn DynamicalSystem<T>,
    u: &[T],
    t: T,
) -> Result<SquareMatrix<T>> {
    check_dim(sys, u)?;
    let jac = match sys.jacobian(u, t) {
        Some(j) => j,
        None => return fd_jacobian(sys, u, t, default_fd_step(u)),
    };
    if jac.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: jac.dim(),
        });
    }
    if !jac.is_finite() {
        return Err(Error::NonFinite {
            stage: format!("jacobian of {}", sys.name()),
            step: None,
        });
    }
    Ok(jac)
}

/// Parameters of [`TwistedSaddle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistedSaddleParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> Default for TwistedSaddleParams<T> {
    fn default() -> Self {
        TwistedSaddleParams {
            a: T::lit(2.0),
            b: T::lit(1.0),
            c: T::lit(-1.0),
            d: T::lit(0.2),
        }
    }
}

/// Three-dimensional saddle whose unstable plane is rotated by `arctan(D z)`:
///
/// ```text
/// x' = A x cos(atan(D z)) - B y sin(atan(D z))
/// y' = A x sin(atan(D z)) + B y cos(atan(D z))
/// z' = C atan(z)
/// ```
///
/// The origin is the only equilibrium, with Jacobian `diag(A, B, C)`. The
/// z-axis is invariant. Registered as `"paper3d"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistedSaddle<T> {
    pub params: TwistedSaddleParams<T>,
}

impl<T: Scalar> Default for TwistedSaddle<T> {
    fn default() -> Self {
        TwistedSaddle::new(TwistedSaddleParams::default())
    }
}

impl<T: Scalar> TwistedSaddle<T> {
    pub fn new(params: TwistedSaddleParams<T>) -> Self {
        TwistedSaddle { params }
    }
}

impl<T: Scalar> DynamicalSystem<T> for TwistedSaddle<T> {
    fn name(&self) -> &str {
        "paper3d"
    }

    fn dim(&self) -> usize {
        3
    }

    fn params(&self) -> Vec<(String, T)> {
        let p = self.params;
        vec![
            ("A".into(), p.a),
            ("B".into(), p.b),
            ("C".into(), p.c),
            ("D".into(), p.d),
        ]
    }

    fn field(&self, u: &[T], _t: T, out: &mut [T]) {
        let TwistedSaddleParams { a, b, c, d } = self.params;
        let (x, y, z) = (u[0], u[1], u[2]);
        let theta = (d * z).atan();
        let (s, co) = (theta.sin(), theta.cos());
        out[0] = a * x * co - b * y * s;
        out[1] = a * x * s + b * y * co;
        out[2] = c * z.atan();
    }

    fn jacobian(&self, u: &[T], _t: T) -> Option<SquareMatrix<T>> {
        let TwistedSaddleParams { a, b, c, d } = self.params;
        let (x, y, z) = (u[0], u[1], u[2]);
        let theta = (d * z).atan();
        let (s, co) = (theta.sin(), theta.cos());
        // d/dz atan(D z)
        let dtheta = d / (T::one() + d * d * z * z);
        let mut j = SquareMatrix::zeros(3);
        j[(0, 0)] = a * co;
        j[(0, 1)] = -(b * s);
        j[(0, 2)] = -(a * x * s + b * y * co) * dtheta;
        j[(1, 0)] = a * s;
        j[(1, 1)] = b * co;
        j[(1, 2)] = (a * x * co - b * y * s) * dtheta;
        j[(2, 2)] = c / (T::one() + z * z);
        Some(j)
    }
}

/// Linear system `u' = diag(rates) u`. Registered as `"diag-linear"`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagLinear<T> {
    pub rates: Vec<T>,
}

impl<T: Scalar> DiagLinear<T> {
    pub fn new(rates: Vec<T>) -> Self {
        assert!(!rates.is_empty(), "diag-linear needs at least one rate");
        DiagLinear { rates }
    }
}

impl<T: Scalar> DynamicalSystem<T> for DiagLinear<T> {
    fn name(&self) -> &str {
        "diag-linear"
    }

    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn params(&self) -> Vec<(String, T)> {
        self.rates
            .iter()
            .enumerate()
            .map(|(i, &r)| (format!("lambda{}", i + 1), r))
            .collect()
    }

    fn field(&self, u: &[T], _t: T, out: &mut [T]) {
        for ((o, &x), &r) in out.iter_mut().zip(u).zip(&self.rates) {
            *o = r * x;
        }
    }

    fn jacobian(&self, _u: &[T], _t: T) -> Option<SquareMatrix<T>> {
        Some(SquareMatrix::from_diag(&self.rates))
    }
}

/// Planar linear focus `u' = [[sigma, -omega], [omega, sigma]] u` with
/// eigenvalues `sigma +- i omega`. Registered as `"rotation-saddle"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSaddle<T> {
    pub sigma: T,
    pub omega: T,
}

impl<T: Scalar> Default for RotationSaddle<T> {
    fn default() -> Self {
        RotationSaddle {
            sigma: T::lit(0.5),
            omega: T::lit(2.0),
        }
    }
}

impl<T: Scalar> RotationSaddle<T> {
    fn matrix(&self) -> SquareMatrix<T> {
        SquareMatrix::from_rows(&[[self.sigma, -self.omega], [self.omega, self.sigma]])
    }
}

impl<T: Scalar> DynamicalSystem<T> for RotationSaddle<T> {
    fn name(&self) -> &str {
        "rotation-saddle"
    }

    fn dim(&self) -> usize {
        2
    }

    fn params(&self) -> Vec<(String, T)> {
        vec![("sigma".into(), self.sigma), ("omega".into(), self.omega)]
    }

    fn field(&self, u: &[T], _t: T, out: &mut [T]) {
        out[0] = self.sigma * u[0] - self.omega * u[1];
        out[1] = self.omega * u[0] + self.sigma * u[1];
    }

    fn jacobian(&self, _u: &[T], _t: T) -> Option<SquareMatrix<T>> {
        Some(self.matrix())
    }
}

type FieldFn<T> = dyn Fn(&[T], T, &mut [T]) + Send + Sync;
type JacobianFn<T> = dyn Fn(&[T], T) -> SquareMatrix<T> + Send + Sync;

/// A system assembled from closures. Without a Jacobian closure the
/// finite-difference fallback is used.
pub struct FnSystem<T> {
    name: String,
    dim: usize,
    params: Vec<(String, T)>,
    field: Box<FieldFn<T>>,
    jacobian: Option<Box<JacobianFn<T>>>,
}

impl<T: Scalar> FnSystem<T> {
    pub fn new<F>(name: impl Into<String>, dim: usize, field: F) -> Self
    where
        F: Fn(&[T], T, &mut [T]) + Send + Sync + 'static,
    {
        FnSystem {
            name: name.into(),
            dim,
            params: Vec::new(),
            field: Box::new(field),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[T], T) -> SquareMatrix<T> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn with_params(mut self, params: Vec<(String, T)>) -> Self {
        self.params = params;
        self
    }
}

impl<T: Scalar> DynamicalSystem<T> for FnSystem<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> Vec<(String, T)> {
        self.params.clone()
    }

    fn field(&self, u: &[T], t: T, out: &mut [T]) {
        (self.field)(u, t, out)
    }

    fn jacobian(&self, u: &[T], t: T) -> Option<SquareMatrix<T>> {
        self.jacobian.as_ref().map(|j| j(u, t))
    }
}

/// Names accepted by [`build_system`].
pub const BUILTIN_NAMES: [&str; 3] = ["paper3d", "diag-linear", "rotation-saddle"];

/// Every built-in system with default parameters.
pub fn builtin_systems<T: Scalar>() -> Vec<Box<dyn DynamicalSystem<T>>> {
    BUILTIN_NAMES
        .iter()
        .map(|name| build_system(name, &BTreeMap::new()).expect("builtin defaults are valid"))
        .collect()
}

fn take_param<T: Scalar>(params: &mut BTreeMap<String, f64>, key: &str, default: T) -> T {
    params.remove(key).map(T::lit).unwrap_or(default)
}

/// Instantiates a built-in system by name with parameter overrides.
///
/// * `paper3d`: `A`, `B`, `C`, `D` (defaults 2, 1, -1, 0.2).
/// * `diag-linear`: `lambda1`..`lambdaK`, contiguous; the count sets the
///   dimension. Defaults to rates (2, 1, -1).
/// * `rotation-saddle`: `sigma`, `omega` (defaults 0.5, 2).
///
/// Unknown names give [`Error::NotFound`]; unknown parameter keys give
/// [`Error::InvalidArgument`].
pub fn build_system<T: Scalar>(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<Box<dyn DynamicalSystem<T>>> {
    let mut rest = params.clone();
    let sys: Box<dyn DynamicalSystem<T>> = match name {
        "paper3d" => {
            let def = TwistedSaddleParams::<T>::default();
            Box::new(TwistedSaddle::new(TwistedSaddleParams {
                a: take_param(&mut rest, "A", def.a),
                b: take_param(&mut rest, "B", def.b),
                c: take_param(&mut rest, "C", def.c),
                d: take_param(&mut rest, "D", def.d),
            }))
        }
        "diag-linear" => {
            let mut rates = Vec::new();
            while let Some(v) = rest.remove(&format!("lambda{}", rates.len() + 1)) {
                rates.push(T::lit(v));
            }
            if rates.is_empty() {
                rates = vec![T::lit(2.0), T::lit(1.0), T::lit(-1.0)];
            }
            Box::new(DiagLinear::new(rates))
        }
        "rotation-saddle" => {
            let def = RotationSaddle::<T>::default();
            Box::new(RotationSaddle {
                sigma: take_param(&mut rest, "sigma", def.sigma),
                omega: take_param(&mut rest, "omega", def.omega),
            })
        }
        other => {
            return Err(Error::NotFound(format!(
                "system '{other}' (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    if let Some(key) = rest.keys().next() {
        return Err(Error::InvalidArgument(format!(
            "unknown parameter '{key}' for system '{name}'"
        )));
    }
    Ok(sys)
}
