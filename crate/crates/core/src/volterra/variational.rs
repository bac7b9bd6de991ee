//! Minimization of the Bielecki-weighted functional
//! `φ(x) = (1/p)∫₀¹ e^{−kt}|x′(t) − y(t) + ∫₀ᵗΦ(t, τ, x(τ))dτ|ᵖ dt`
//! over the free nodal values of a grid function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bielecki::{cell_weights, BieleckiParams};
use crate::error::{Error, Result};
use crate::eta::{NormalizationFunctional, PowerNorm};
use crate::grid::GridFunction;
use crate::map::NonlinearMap;
use crate::quadrature::midpoints;
use crate::solver::{solve_from, SolveConfig, SolveResult};

use super::forcing::Forcing;
use super::forward::memory_at_midpoint;
use super::kernel::Kernel;

/// Discrete operator `x ↦ (x′_j + ∫₀^{m_j}Φ)_j` on the free nodal values
/// `x(t₁), …, x(t_n)`; its Jacobian is lower block-Hessenberg with the
/// `±1/h` difference stencil on the diagonal.
pub struct VariationalMap<'a> {
    kernel: &'a dyn Kernel,
    n_cells: usize,
}

impl<'a> VariationalMap<'a> {
    pub fn new(kernel: &'a dyn Kernel, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::GridTooCoarse { n_cells, min: 2 });
        }
        Ok(Self { kernel, n_cells })
    }

    fn grid(&self, z: &DVector<f64>) -> GridFunction {
        GridFunction::from_free(self.n_cells, self.kernel.dim(), z.as_slice())
            .unwrap_or_else(|_| {
                // non-finite trial points from a line search: evaluate to NaN so the step is rejected
                GridFunction::zeros(self.n_cells, self.kernel.dim()).expect("valid shape")
            })
    }

    /// Forcing samples at the cell midpoints, the solve target.
    pub fn target(&self, y: &Forcing) -> DVector<f64> {
        DVector::from_vec(y.sample(&midpoints(self.n_cells)))
    }
}

impl NonlinearMap for VariationalMap<'_> {
    fn dim(&self) -> usize {
        self.n_cells * self.kernel.dim()
    }

    fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        if z.iter().any(|v| !v.is_finite()) {
            return DVector::from_element(z.len(), f64::NAN);
        }
        let x = self.grid(z);
        let dim = x.dim();
        let d = x.derivatives();
        let mut out = DVector::zeros(self.dim());
        let mut q = vec![0.0; dim];
        for j in 0..self.n_cells {
            memory_at_midpoint(self.kernel, &x, j, &mut q);
            for c in 0..dim {
                out[j * dim + c] = d[j * dim + c] + q[c];
            }
        }
        out
    }

    fn jacobian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        let x = self.grid(z);
        let dim = x.dim();
        let n = self.n_cells;
        let h = x.h();
        let mut jac = DMatrix::zeros(n * dim, n * dim);
        let mut px = vec![0.0; dim * dim];
        // adds w·block to the (cell j, node i) block; node 0 is fixed
        let add = |jac: &mut DMatrix<f64>, j: usize, i: usize, w: f64, block: &[f64]| {
            if i == 0 {
                return;
            }
            for r in 0..dim {
                for c in 0..dim {
                    jac[(j * dim + r, (i - 1) * dim + c)] += w * block[r * dim + c];
                }
            }
        };
        let mut eye = vec![0.0; dim * dim];
        for c in 0..dim {
            eye[c * dim + c] = 1.0;
        }
        for j in 0..n {
            let m = (j as f64 + 0.5) * h;
            add(&mut jac, j, j + 1, 1.0 / h, &eye);
            add(&mut jac, j, j, -1.0 / h, &eye);
            if j > 0 {
                for i in 1..=j {
                    let w = if i == j { 0.5 * h } else { h };
                    self.kernel.phi_x(m, i as f64 * h, x.node(i), &mut px);
                    add(&mut jac, j, i, w, &px);
                }
            }
            self.kernel.phi_x(m, j as f64 * h, x.node(j), &mut px);
            add(&mut jac, j, j, 0.25 * h, &px);
            let mid: Vec<f64> = x.node(j).iter().zip(x.node(j + 1)).map(|(a, b)| 0.5 * (a + b)).collect();
            self.kernel.phi_x(m, m, &mid, &mut px);
            add(&mut jac, j, j, 0.125 * h, &px);
            add(&mut jac, j, j + 1, 0.125 * h, &px);
        }
        Some(jac)
    }
}

fn weighted_eta(kernel: &dyn Kernel, n_cells: usize, params: &BieleckiParams) -> Result<PowerNorm> {
    PowerNorm::weighted(params.p(), kernel.dim(), cell_weights(n_cells, params.k()))
}

/// Discretized `φ(x)` and its gradient with respect to the free nodal values.
pub fn variational_functional(
    x: &GridFunction,
    y: &Forcing,
    kernel: &dyn Kernel,
    params: &BieleckiParams,
) -> Result<(f64, Vec<f64>)> {
    if x.dim() != kernel.dim() || y.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: x.dim() });
    }
    let map = VariationalMap::new(kernel, x.n_cells())?;
    let eta = weighted_eta(kernel, x.n_cells(), params)?;
    let z = x.free_values();
    let r = map.eval(&z) - map.target(y);
    let jac = map.jacobian(&z).expect("analytic Jacobian");
    let g = jac.transpose() * eta.gradient(&r);
    Ok((eta.value(&r), g.as_slice().to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalSolution {
    pub x: GridFunction,
    pub result: SolveResult,
    pub p: f64,
    pub k: f64,
    /// `φ` at the returned point.
    pub phi: f64,
    /// `(p·φ)^{1/p}`, the Bielecki norm of the residual.
    pub residual_weighted_norm: f64,
}

/// Minimizes the discretized functional from the first configured start
/// (zero when none is configured).
pub fn solve_variational(
    kernel: &dyn Kernel,
    y: &Forcing,
    params: &BieleckiParams,
    n_cells: usize,
    cfg: &SolveConfig,
) -> Result<VariationalSolution> {
    let map = VariationalMap::new(kernel, n_cells)?;
    let initial = match cfg.starts.points(map.dim())?.into_iter().next() {
        Some(z) => GridFunction::from_free(n_cells, kernel.dim(), z.as_slice())?,
        None => GridFunction::zeros(n_cells, kernel.dim())?,
    };
    solve_variational_from(kernel, y, params, cfg, &initial)
}

pub fn solve_variational_from(
    kernel: &dyn Kernel,
    y: &Forcing,
    params: &BieleckiParams,
    cfg: &SolveConfig,
    initial: &GridFunction,
) -> Result<VariationalSolution> {
    if y.dim() != kernel.dim() || initial.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: y.dim() });
    }
    let n_cells = initial.n_cells();
    let map = VariationalMap::new(kernel, n_cells)?;
    let eta = weighted_eta(kernel, n_cells, params)?;
    let target = map.target(y);
    let result = solve_from(&map, &target, &eta, cfg, initial.free_values())?;
    let x = GridFunction::from_free(n_cells, kernel.dim(), &result.root)?;
    let phi = result.phi;
    Ok(VariationalSolution {
        x,
        p: params.p(),
        k: params.k(),
        phi,
        residual_weighted_norm: (params.p() * phi).powf(1.0 / params.p()),
        result,
    })
}
