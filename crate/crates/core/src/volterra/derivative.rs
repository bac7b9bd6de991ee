//! Finite-difference probes of the derivative of the solution operator
//! `y ↦ x` in a direction `δy`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

use super::forcing::Forcing;
use super::forward::solve_forward;
use super::kernel::Kernel;

/// Band for successive sup-norm ratios of the difference quotients.
pub const RICHARDSON_BAND: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub eps: Vec<f64>,
    /// `(x(y + ε·δy) − x(y))/ε` for each `ε`.
    pub estimates: Vec<GridFunction>,
    pub sup_norms: Vec<f64>,
    /// `‖D_{ε_i}‖/‖D_{ε_{i+1}}‖`.
    pub ratios: Vec<f64>,
    /// Sup distances between successive quotients.
    pub successive_differences: Vec<f64>,
    pub consistent: bool,
    /// First-order Richardson extrapolation from the two smallest steps.
    pub extrapolated: GridFunction,
}

pub fn solution_operator_derivative(
    kernel: &dyn Kernel,
    y: &Forcing,
    dy: &Forcing,
    eps: &[f64],
    n_cells: usize,
) -> Result<DerivativeReport> {
    if eps.len() < 2 {
        return Err(Error::invalid("need at least two step sizes"));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::invalid("step sizes must be positive"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("step sizes must be strictly decreasing"));
    }
    let base = solve_forward(kernel, y, n_cells)?;
    let estimates = eps
        .par_iter()
        .map(|&e| {
            let x = solve_forward(kernel, &y.add_scaled(e, dy)?, n_cells)?;
            Ok(x.axpy(-1.0, &base).scale(1.0 / e))
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_norms: Vec<f64> = estimates.iter().map(|d| d.node_norms().into_iter().fold(0.0, f64::max)).collect();
    let ratios: Vec<f64> = sup_norms
        .windows(2)
        .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 1.0 } else { w[0] / w[1] })
        .collect();
    let successive_differences = estimates.windows(2).map(|w| w[0].sup_distance(&w[1])).collect();
    let consistent = ratios.iter().all(|r| (RICHARDSON_BAND.0..=RICHARDSON_BAND.1).contains(r));
    let m = eps.len();
    let (ea, eb) = (eps[m - 2], eps[m - 1]);
    let (da, db) = (&estimates[m - 2], &estimates[m - 1]);
    let extrapolated = db.axpy(eb / (ea - eb), &db.axpy(-1.0, da));
    Ok(DerivativeReport {
        eps: eps.to_vec(),
        estimates,
        sup_norms,
        ratios,
        successive_differences,
        consistent,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volterra::kernel::{log_power_kernel, LinearKernel};

    #[test]
    fn linear_kernel_derivative_is_exact_solution() {
        // x′ + c∫x = δy with δy = 1 and x(0)=0 gives x = sin(√c t)/√c
        let k = LinearKernel { coeff: 4.0, dim: 1 };
        let rep = solution_operator_derivative(&k, &Forcing::scalar(|t| t), &Forcing::constant(vec![1.0]), &[1e-1, 1e-2, 1e-3], 256).unwrap();
        assert!(rep.consistent);
        for i in 0..=256 {
            let t = rep.extrapolated.t(i);
            assert!((rep.extrapolated.node(i)[0] - (2.0 * t).sin() / 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn log_power_kernel_ratios_in_band() {
        let k = log_power_kernel(1.0, 2.0).unwrap();
        let rep = solution_operator_derivative(&k, &Forcing::scalar(|t| 1.0 + t), &Forcing::scalar(|t| t.sin()), &[1e-2, 1e-3, 1e-4, 1e-5], 64).unwrap();
        assert!(rep.consistent, "{:?}", rep.ratios);
        assert!(rep.successive_differences.windows(2).all(|w| w[1] <= w[0] * 1.01 + 1e-9));
    }

    #[test]
    fn rejects_bad_steps() {
        let k = LinearKernel { coeff: 1.0, dim: 1 };
        let y = Forcing::zero(1);
        assert!(solution_operator_derivative(&k, &y, &y, &[1e-3], 16).is_err());
        assert!(solution_operator_derivative(&k, &y, &y, &[1e-3, 1e-2], 16).is_err());
    }
}
