//! Nonlinear maps `ℝⁿ → ℝⁿ` and finite-difference Jacobians.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A deterministic map `ℝⁿ → ℝⁿ`, optionally with an analytic Jacobian.
pub trait NonlinearMap: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian, if the map has one. `None` selects the
    /// central-difference fallback.
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

impl<M: NonlinearMap + ?Sized> NonlinearMap for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).jacobian(x)
    }
}

impl<M: NonlinearMap + ?Sized> NonlinearMap for Arc<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).jacobian(x)
    }
}

impl<M: NonlinearMap + ?Sized> NonlinearMap for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).jacobian(x)
    }
}

type EvalFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Closure-backed map.
#[derive(Clone)]
pub struct FnMap {
    dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacFn>>,
}

impl FnMap {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Componentwise application of a scalar function and its derivative.
    pub fn componentwise<F, D>(dim: usize, f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + Copy + 'static,
        D: Fn(f64) -> f64 + Send + Sync + Copy + 'static,
    {
        Self::new(dim, move |x| x.map(f))
            .with_jacobian(move |x| DMatrix::from_diagonal(&x.map(df)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, |x| x.clone()).with_jacobian(move |x| DMatrix::identity(x.len(), x.len()))
    }

    pub fn linear(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "linear map needs a square matrix");
        let dim = a.nrows();
        let jac = a.clone();
        Self::new(dim, move |x| &a * x).with_jacobian(move |_| jac.clone())
    }
}

impl std::fmt::Debug for FnMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnMap")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl NonlinearMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

/// Central-difference step `ε^{1/3}·max(1, ‖x‖)`.
pub fn default_fd_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * x.norm().max(1.0)
}

/// Central-difference Jacobian with step `h`.
pub fn jacobian_fd<M: NonlinearMap + ?Sized>(map: &M, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let n = map.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = map.eval(&xp);
        xp[j] = orig - h;
        let fm = map.eval(&xp);
        xp[j] = orig;
        if fp.len() != n || fm.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: fp.len() });
        }
        let col = (fp - fm) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("finite-difference column {j}")));
        }
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Analytic Jacobian when available, otherwise central differences.
pub fn jacobian_or_fd<M: NonlinearMap + ?Sized>(map: &M, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match map.jacobian(x) {
        Some(j) => {
            if j.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("analytic Jacobian".into()));
            }
            Ok(j)
        }
        None => jacobian_fd(map, x, default_fd_step(x)),
    }
}

/// Largest entrywise relative deviation `|a − b| / max(1, |b|)`.
pub fn max_relative_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn fd_of_identity_is_identity() {
        let id = FnMap::new(3, |x| x.clone());
        let x = dvector![0.3, -2.0, 7.5];
        let j = jacobian_fd(&id, &x, default_fd_step(&x)).unwrap();
        assert!((j - DMatrix::identity(3, 3)).abs().max() < 1e-10);
    }

    #[test]
    fn fd_of_linear_map_is_exact() {
        let a = dmatrix![1.0, -2.0; 3.5, 0.25];
        let map = FnMap::new(2, {
            let a = a.clone();
            move |x| &a * x
        });
        let x = dvector![4.0, -1.0];
        let j = jacobian_fd(&map, &x, default_fd_step(&x)).unwrap();
        assert!((j - a).abs().max() < 1e-8);
    }

    #[test]
    fn fd_rejects_bad_step_and_propagates_nan() {
        let id = FnMap::identity(2);
        let x = dvector![1.0, 1.0];
        assert!(matches!(jacobian_fd(&id, &x, 0.0), Err(Error::InvalidInput(_))));
        let bad = FnMap::new(1, |x| x.map(|v| if v > 1.0 { f64::NAN } else { v }));
        let err = jacobian_fd(&bad, &dvector![1.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn analytic_takes_precedence() {
        let m = FnMap::new(1, |x| x.map(|v| v * v)).with_jacobian(|_| dmatrix![42.0]);
        assert_eq!(jacobian_or_fd(&m, &dvector![1.0]).unwrap()[(0, 0)], 42.0);
    }
}
