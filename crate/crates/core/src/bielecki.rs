//! Exponentially weighted (Bielecki) norms on grid functions with `x(0) = 0`,
//! and the inequalities relating them.
//!
//! With weight `e^{−kt}`:
//! - `‖x‖_{W,k} = (∫₀¹ e^{−kt}|x′|ᵖ)^{1/p}`, equal to the plain Sobolev
//!   seminorm at `k = 0`;
//! - `‖x‖_k = (∫₀¹ e^{−kt}|x|ᵖ)^{1/p}`.
//!
//! Derivatives are cell-constant, so `‖·‖_{W,k}` uses per-cell weights
//! `h(e^{−kt_j} + e^{−kt_{j+1}})/2`; `‖·‖_k` is a nodal trapezoid rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_exponent, Error, Result};
use crate::grid::{euclid, GridFunction};
use crate::quadrature::{cumulative_trapezoid, midpoints, trapezoid_weights};
use crate::volterra::{Forcing, Kernel};

/// Default relative margin of `select_k` above the coercivity threshold.
pub const K_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BieleckiParams {
    p: f64,
    k: f64,
}

impl BieleckiParams {
    pub fn new(p: f64, k: f64) -> Result<Self> {
        check_exponent(p)?;
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid(format!("weight rate k must be finite and >= 0, got {k}")));
        }
        Ok(Self { p, k })
    }

    /// `k` from [`select_k`] for the kernel's `ā(p)`.
    pub fn auto(kernel: &dyn Kernel, p: f64) -> Result<Self> {
        check_exponent(p)?;
        Self::new(p, select_k(kernel.a_bar(p), p)?)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Conjugate exponent `p/(p−1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `1 − ā/k^{2/p}`; positive exactly when the memory term is dominated.
    pub fn coercivity_factor(&self, a_bar: f64) -> f64 {
        1.0 - a_bar / self.k.powf(2.0 / self.p)
    }
}

/// Cell weights `h(e^{−kt_j} + e^{−kt_{j+1}})/2`.
pub fn cell_weights(n_cells: usize, k: f64) -> Vec<f64> {
    let h = 1.0 / n_cells as f64;
    (0..n_cells)
        .map(|j| 0.5 * h * ((-k * j as f64 * h).exp() + (-k * (j + 1) as f64 * h).exp()))
        .collect()
}

/// Nodal trapezoid weights times `e^{−kt_i}`.
pub fn node_weights(n_cells: usize, k: f64) -> Vec<f64> {
    let h = 1.0 / n_cells as f64;
    trapezoid_weights(n_cells + 1, h)
        .into_iter()
        .enumerate()
        .map(|(i, w)| w * (-k * i as f64 * h).exp())
        .collect()
}

fn weighted_p_norm(weights: &[f64], magnitudes: &[f64], p: f64) -> f64 {
    weights
        .iter()
        .zip(magnitudes)
        .map(|(w, m)| w * m.powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `(∫₀¹|x′|ᵖ)^{1/p}`.
pub fn sobolev_norm(x: &GridFunction, p: f64) -> Result<f64> {
    bielecki_sobolev_norm(x, &BieleckiParams::new(p, 0.0)?)
}

/// `(∫₀¹ e^{−kt}|x′|ᵖ)^{1/p}`.
pub fn bielecki_sobolev_norm(x: &GridFunction, params: &BieleckiParams) -> Result<f64> {
    Ok(weighted_p_norm(&cell_weights(x.n_cells(), params.k), &x.derivative_norms(), params.p))
}

/// `(∫₀¹ e^{−kt}|x|ᵖ)^{1/p}` by the nodal trapezoid rule.
pub fn bielecki_lp_norm(x: &GridFunction, params: &BieleckiParams) -> Result<f64> {
    Ok(bielecki_lp_norm_of_samples(&x.node_norms(), params))
}

/// Same as [`bielecki_lp_norm`] for nodal magnitudes `|x(t_i)|`, `i = 0..=n`.
pub fn bielecki_lp_norm_of_samples(magnitudes: &[f64], params: &BieleckiParams) -> f64 {
    let n = magnitudes.len().saturating_sub(1).max(1);
    weighted_p_norm(&node_weights(n, params.k), magnitudes, params.p)
}

/// Norm of cell-midpoint magnitudes with the cell weights of `‖·‖_{W,k}`.
pub fn bielecki_midpoint_norm(magnitudes: &[f64], params: &BieleckiParams) -> f64 {
    weighted_p_norm(&cell_weights(magnitudes.len(), params.k), magnitudes, params.p)
}

/// One inequality `lhs ≤ rhs`, accepted when `rhs − lhs ≥ −tolerance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        Self { lhs, rhs, slack, tolerance, holds: slack >= -tolerance }
    }
}

/// Absolute tolerance: round-off `1e−9(1 + |lhs| + |rhs|)` plus a trapezoid
/// error term `h²(1 + k)²p²(|lhs| + |rhs|)` for checks mixing quadratures.
pub fn quadrature_tolerance(n_cells: usize, params: &BieleckiParams, lhs: f64, rhs: f64, mixed: bool) -> f64 {
    let scale = lhs.abs() + rhs.abs();
    let mut tol = 1e-9 * (1.0 + scale);
    if mixed {
        let h = 1.0 / n_cells as f64;
        tol += h * h * (1.0 + params.k).powi(2) * params.p * params.p * scale;
    }
    tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    /// `e^{−k/p}‖x‖_W ≤ ‖x‖_{W,k}`.
    pub lower: InequalityCheck,
    /// `‖x‖_{W,k} ≤ ‖x‖_W`.
    pub upper: InequalityCheck,
    pub holds: bool,
}

pub fn check_equivalence(x: &GridFunction, params: &BieleckiParams) -> Result<EquivalenceCheck> {
    let plain = sobolev_norm(x, params.p)?;
    let weighted = bielecki_sobolev_norm(x, params)?;
    let low = (-params.k / params.p).exp() * plain;
    let n = x.n_cells();
    let lower = InequalityCheck::new(low, weighted, quadrature_tolerance(n, params, low, weighted, false));
    let upper = InequalityCheck::new(weighted, plain, quadrature_tolerance(n, params, weighted, plain, false));
    Ok(EquivalenceCheck { lower, upper, holds: lower.holds && upper.holds })
}

fn require_positive_k(params: &BieleckiParams) -> Result<()> {
    if params.k > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("this inequality needs k > 0"))
    }
}

/// `‖x‖_k ≤ ‖x‖_{W,k}/k^{1/p}`.
pub fn check_poincare_bielecki(x: &GridFunction, params: &BieleckiParams) -> Result<InequalityCheck> {
    require_positive_k(params)?;
    let lhs = bielecki_lp_norm(x, params)?;
    let rhs = bielecki_sobolev_norm(x, params)? / params.k.powf(1.0 / params.p);
    Ok(InequalityCheck::new(lhs, rhs, quadrature_tolerance(x.n_cells(), params, lhs, rhs, true)))
}

/// `‖∫₀^·|x|‖_k ≤ ‖x‖_{W,k}/k^{2/p}`, the running integral by cumulative
/// trapezoid.
pub fn check_integral_bound(x: &GridFunction, params: &BieleckiParams) -> Result<InequalityCheck> {
    require_positive_k(params)?;
    let running = cumulative_trapezoid(&x.node_norms(), x.h());
    let lhs = bielecki_lp_norm_of_samples(&running, params);
    let rhs = bielecki_sobolev_norm(x, params)? / params.k.powf(2.0 / params.p);
    Ok(InequalityCheck::new(lhs, rhs, quadrature_tolerance(x.n_cells(), params, lhs, rhs, true)))
}

/// `max{1, ā^{p/2}}·(1 + K_MARGIN)`.
pub fn select_k(a_bar: f64, p: f64) -> Result<f64> {
    select_k_with_margin(a_bar, p, K_MARGIN)
}

pub fn select_k_with_margin(a_bar: f64, p: f64, margin: f64) -> Result<f64> {
    check_exponent(p)?;
    if !(a_bar.is_finite() && a_bar >= 0.0) {
        return Err(Error::invalid(format!("a_bar must be finite and >= 0, got {a_bar}")));
    }
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::invalid("k margin must be positive"));
    }
    Ok(a_bar.powf(p / 2.0).max(1.0) * (1.0 + margin))
}

/// Both sides of the coercivity estimate
/// `(pφ(x))^{1/p} ≥ (1 − ā/k^{2/p})‖x‖_{W,k} − ‖y‖_k − ‖∫₀^·b(·,τ)dτ‖_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityBound {
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Subintervals for `∫₀^{m}b(m,τ)dτ` per midpoint.
const ENVELOPE_PANELS: usize = 64;

/// Evaluates both sides at cell midpoints, where the discrete functional
/// measures the residual.
pub fn coercivity_lower_bound(
    x: &GridFunction,
    y: &Forcing,
    kernel: &dyn Kernel,
    params: &BieleckiParams,
) -> Result<CoercivityBound> {
    let residual = crate::volterra::residual(x, y, kernel)?;
    let dim = x.dim();
    let mags: Vec<f64> = residual.chunks(dim).map(euclid).collect();
    let lhs = bielecki_midpoint_norm(&mags, params);

    let mids = midpoints(x.n_cells());
    let y_mags: Vec<f64> = y.sample(&mids).chunks(dim).map(euclid).collect();
    let b_mags: Vec<f64> = mids
        .iter()
        .map(|&m| {
            let hb = m / ENVELOPE_PANELS as f64;
            let vals: Vec<f64> = (0..=ENVELOPE_PANELS).map(|i| kernel.envelope_b(m, i as f64 * hb)).collect();
            crate::quadrature::trapezoid(&vals, hb)
        })
        .collect();
    let wk = bielecki_sobolev_norm(x, params)?;
    let rhs = params.coercivity_factor(kernel.a_bar(params.p)) * wk
        - bielecki_midpoint_norm(&y_mags, params)
        - bielecki_midpoint_norm(&b_mags, params);
    let tolerance = quadrature_tolerance(x.n_cells(), params, lhs, rhs.abs() + wk, true);
    Ok(CoercivityBound { lhs, rhs, tolerance, holds: lhs - rhs >= -tolerance })
}

/// Shapes used by [`random_grid_function`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomShape {
    /// Independent Gaussian cell derivatives.
    Rough,
    /// Random Fourier series with decaying coefficients.
    Smooth,
    /// Random cubic through the origin.
    Polynomial,
}

/// Scalar grid function with `x(0) = 0`; the shape cycles with `seed`.
pub fn random_grid_function(n_cells: usize, seed: u64) -> Result<GridFunction> {
    let shape = match seed % 3 {
        0 => RandomShape::Rough,
        1 => RandomShape::Smooth,
        _ => RandomShape::Polynomial,
    };
    random_grid_function_of(shape, n_cells, seed)
}

pub fn random_grid_function_of(shape: RandomShape, n_cells: usize, seed: u64) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = 10f64.powf(rng.gen_range(-2.0..2.0));
    match shape {
        RandomShape::Rough => {
            let d: Vec<f64> = (0..n_cells).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            GridFunction::from_derivatives(n_cells, 1, &d)
        }
        RandomShape::Smooth => {
            let modes: Vec<(f64, f64)> = (1..=8)
                .map(|m| (rng.sample::<f64, _>(StandardNormal) / m as f64, rng.gen_range(0.0..std::f64::consts::TAU)))
                .collect();
            GridFunction::from_fn(n_cells, |t| {
                scale
                    * modes
                        .iter()
                        .enumerate()
                        .map(|(m, (c, ph))| c * ((m as f64 + 1.0) * std::f64::consts::PI * t + ph).sin() - c * ph.sin())
                        .sum::<f64>()
            })
        }
        RandomShape::Polynomial => {
            let c: Vec<f64> = (0..3).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            GridFunction::from_fn(n_cells, |t| t * (c[0] + t * (c[1] + t * c[2])))
        }
    }
}

/// Outcome of the full inequality suite over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub functions: usize,
    pub exponents: Vec<f64>,
    pub rates: Vec<f64>,
    pub n_cells: usize,
    pub seed: u64,
    pub checks: usize,
    pub violations: Vec<SuiteViolation>,
    /// Smallest `slack + tolerance` seen per inequality.
    pub min_equivalence_margin: f64,
    pub min_poincare_margin: f64,
    pub min_integral_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteViolation {
    pub inequality: String,
    pub function: usize,
    pub p: f64,
    pub k: f64,
    pub slack: f64,
    pub tolerance: f64,
}

/// Runs equivalence, Poincaré-type and integral bounds on `functions` random
/// grid functions (seeds `seed..seed+functions`) for every `(p, k)` pair.
pub fn inequality_suite(functions: usize, exponents: &[f64], rates: &[f64], n_cells: usize, seed: u64) -> Result<SuiteSummary> {
    use rayon::prelude::*;
    if n_cells < 2 {
        return Err(Error::GridTooCoarse { n_cells, min: 2 });
    }
    let params: Vec<BieleckiParams> = exponents
        .iter()
        .flat_map(|&p| rates.iter().map(move |&k| BieleckiParams::new(p, k)))
        .collect::<Result<_>>()?;
    for pr in &params {
        require_positive_k(pr)?;
    }
    let per_function = (0..functions)
        .into_par_iter()
        .map(|i| {
            let x = random_grid_function(n_cells, seed.wrapping_add(i as u64))?;
            let mut out = Vec::new();
            for pr in &params {
                let eq = check_equivalence(&x, pr)?;
                out.push((i, *pr, "equivalence_lower", eq.lower));
                out.push((i, *pr, "equivalence_upper", eq.upper));
                out.push((i, *pr, "poincare", check_poincare_bielecki(&x, pr)?));
                out.push((i, *pr, "integral", check_integral_bound(&x, pr)?));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = SuiteSummary {
        functions,
        exponents: exponents.to_vec(),
        rates: rates.to_vec(),
        n_cells,
        seed,
        checks: 0,
        violations: Vec::new(),
        min_equivalence_margin: f64::INFINITY,
        min_poincare_margin: f64::INFINITY,
        min_integral_margin: f64::INFINITY,
        passed: true,
    };
    for (i, pr, name, c) in per_function.into_iter().flatten() {
        summary.checks += 1;
        let margin = c.slack + c.tolerance;
        let slot = match name {
            "poincare" => &mut summary.min_poincare_margin,
            "integral" => &mut summary.min_integral_margin,
            _ => &mut summary.min_equivalence_margin,
        };
        *slot = slot.min(margin);
        if !c.holds {
            summary.violations.push(SuiteViolation {
                inequality: name.to_string(),
                function: i,
                p: pr.p,
                k: pr.k,
                slack: c.slack,
                tolerance: c.tolerance,
            });
        }
    }
    summary.passed = summary.violations.is_empty();
    Ok(summary)
}
