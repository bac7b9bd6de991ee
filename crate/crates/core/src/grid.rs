//! Grid functions on `[0, 1]` with `x(0) = 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodal samples `x(tᵢ)`, `tᵢ = i/n_cells`, of an `ℝ^dim`-valued function
/// with `x(0) = 0`. Values are stored node-major.
///
/// The derivative is the piecewise-constant forward difference on each cell,
/// so `x ↔ x′` is a bijection once `x(0) = 0` is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    n_cells: usize,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(n_cells: usize, dim: usize) -> Result<Self> {
        Self::check_shape(n_cells, dim)?;
        Ok(Self {
            n_cells,
            dim,
            values: vec![0.0; (n_cells + 1) * dim],
        })
    }

    /// Builds from node-major values; the first node must be exactly zero.
    pub fn from_values(n_cells: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(n_cells, dim)?;
        if values.len() != (n_cells + 1) * dim {
            return Err(Error::DimensionMismatch {
                expected: (n_cells + 1) * dim,
                got: values.len(),
            });
        }
        if values[..dim].iter().any(|v| *v != 0.0) {
            return Err(Error::invalid("grid function must vanish at t = 0"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function values".into()));
        }
        Ok(Self { n_cells, dim, values })
    }

    /// Samples a scalar function; `f(0)` must be zero.
    pub fn from_fn(n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / n_cells.max(1) as f64;
        let mut values: Vec<f64> = (0..=n_cells).map(|i| f(i as f64 * h)).collect();
        if values[0].abs() > 1e-14 {
            return Err(Error::invalid(format!("x(0) = {} but must be 0", values[0])));
        }
        values[0] = 0.0;
        Self::from_values(n_cells, 1, values)
    }

    /// Reconstructs nodal values from cell derivatives by cumulative summation.
    pub fn from_derivatives(n_cells: usize, dim: usize, derivatives: &[f64]) -> Result<Self> {
        Self::check_shape(n_cells, dim)?;
        if derivatives.len() != n_cells * dim {
            return Err(Error::DimensionMismatch {
                expected: n_cells * dim,
                got: derivatives.len(),
            });
        }
        let h = 1.0 / n_cells as f64;
        let mut values = vec![0.0; (n_cells + 1) * dim];
        for j in 0..n_cells {
            for c in 0..dim {
                values[(j + 1) * dim + c] = values[j * dim + c] + h * derivatives[j * dim + c];
            }
        }
        Self::from_values(n_cells, dim, values)
    }

    /// Builds from the free nodal values `x(t₁), …, x(t_n)`.
    pub fn from_free(n_cells: usize, dim: usize, free: &[f64]) -> Result<Self> {
        if free.len() != n_cells * dim {
            return Err(Error::DimensionMismatch {
                expected: n_cells * dim,
                got: free.len(),
            });
        }
        let mut values = vec![0.0; dim];
        values.extend_from_slice(free);
        Self::from_values(n_cells, dim, values)
    }

    fn check_shape(n_cells: usize, dim: usize) -> Result<()> {
        if n_cells == 0 || dim == 0 {
            return Err(Error::invalid("grid needs at least one cell and dimension >= 1"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Values at nodes `1..=n_cells`, the unknowns of variational problems.
    pub fn free_values(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values[self.dim..])
    }

    /// Forward differences `(x_{j+1} − x_j)/h`, cell-major.
    pub fn derivatives(&self) -> Vec<f64> {
        let inv_h = self.n_cells as f64;
        (0..self.n_cells)
            .flat_map(|j| {
                (0..self.dim).map(move |c| (j, c))
            })
            .map(|(j, c)| (self.values[(j + 1) * self.dim + c] - self.values[j * self.dim + c]) * inv_h)
            .collect()
    }

    /// Pointwise Euclidean magnitude `|x(tᵢ)|`.
    pub fn node_norms(&self) -> Vec<f64> {
        self.values.chunks(self.dim).map(euclid).collect()
    }

    /// Euclidean magnitude of each cell derivative.
    pub fn derivative_norms(&self) -> Vec<f64> {
        self.derivatives().chunks(self.dim).map(euclid).collect()
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid shapes differ");
        self.values
            .chunks(self.dim)
            .zip(other.values.chunks(self.dim))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &GridFunction) -> GridFunction {
        assert_eq!(self.values.len(), other.values.len(), "grid shapes differ");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        GridFunction { values, ..*self }
    }

    pub fn scale(&self, s: f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|v| v * s).collect(),
            ..*self
        }
    }

    /// Restriction to every `factor`-th node of a finer grid.
    pub fn restrict(&self, factor: usize) -> Result<GridFunction> {
        if factor == 0 || self.n_cells % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot restrict {} cells by factor {factor}",
                self.n_cells
            )));
        }
        let coarse = self.n_cells / factor;
        let values = (0..=coarse)
            .flat_map(|i| self.node(i * factor).to_vec())
            .collect();
        GridFunction::from_values(coarse, self.dim, values)
    }
}

impl Eq for GridFunction {}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_nonzero_origin() {
        assert!(GridFunction::from_values(2, 1, vec![1.0, 0.0, 0.0]).is_err());
        assert!(GridFunction::from_fn(4, |t| t + 1.0).is_err());
    }

    #[test]
    fn identity_has_unit_derivative() {
        let x = GridFunction::from_fn(8, |t| t).unwrap();
        for d in x.derivatives() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn restrict_picks_coarse_nodes() {
        let x = GridFunction::from_fn(8, |t| t * t).unwrap();
        let c = x.restrict(4).unwrap();
        assert_eq!(c.n_cells(), 2);
        assert_eq!(c.node(1)[0], x.node(4)[0]);
        assert!(x.restrict(3).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_reconstruct_values(
            vals in proptest::collection::vec(-10.0f64..10.0, 1..40),
            dim in 1usize..3,
        ) {
            let n_cells = vals.len();
            let mut v = vec![0.0; dim];
            for x in &vals {
                for c in 0..dim {
                    v.push(x * (c as f64 + 1.0));
                }
            }
            let g = GridFunction::from_values(n_cells, dim, v).unwrap();
            let back = GridFunction::from_derivatives(n_cells, dim, &g.derivatives()).unwrap();
            prop_assert!(g.sup_distance(&back) <= 1e-12 * (1.0 + n_cells as f64));
        }
    }
}
