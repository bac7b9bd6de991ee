use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ForcingFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// Right-hand side `y: [0, 1] → ℝ^dim`.
#[derive(Clone)]
pub struct Forcing {
    dim: usize,
    f: Arc<ForcingFn>,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Forcing {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, f: Arc::new(f) }
    }

    pub fn scalar<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(1, move |t, out| out[0] = f(t))
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        Self::new(dim, move |_, out| out.copy_from_slice(&value))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, out| out.fill(0.0))
    }

    /// Scalar polynomial `Σ cᵢ tⁱ`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::scalar(move |t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
    }

    /// Scalar piecewise-linear interpolant of `(tᵢ, yᵢ)`, constant outside
    /// the table. Abscissae must be strictly increasing.
    pub fn tabulated(ts: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if ts.len() != ys.len() || ts.is_empty() {
            return Err(Error::invalid("tabulated forcing needs equally many, nonempty t and y samples"));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tabulated forcing needs strictly increasing t"));
        }
        if ts.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated forcing has non-finite samples"));
        }
        Ok(Self::scalar(move |t| interpolate(&ts, &ys, t)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Samples at `ts`, point-major.
    pub fn sample(&self, ts: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ts.len() * self.dim];
        for (t, chunk) in ts.iter().zip(out.chunks_mut(self.dim)) {
            self.eval_into(*t, chunk);
        }
        out
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: f64, other: &Forcing) -> Result<Forcing> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(Forcing::new(self.dim, move |t, out| {
            a.eval_into(t, out);
            let mut tmp = vec![0.0; out.len()];
            b.eval_into(t, &mut tmp);
            for (o, v) in out.iter_mut().zip(tmp) {
                *o += s * v;
            }
        }))
    }
}

pub(crate) fn interpolate(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return ys[0];
    }
    let last = ts.len() - 1;
    if t >= ts[last] {
        return ys[last];
    }
    let k = ts.partition_point(|s| *s <= t).min(last);
    let (t0, t1) = (ts[k - 1], ts[k]);
    let w = (t - t0) / (t1 - t0);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}
