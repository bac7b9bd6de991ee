//! Memory kernels `Φ(t, τ, x)` on `P_Δ = {0 ≤ τ ≤ t ≤ 1}` and their growth data.
//!
//! The growth data follows three conditions:
//! * smoothness: `Φ(t, τ, ·)` is C¹;
//! * linear growth: `|Φ(t, τ, x)| ≤ a(t, τ)|x| + b(t, τ)` with `∫₀ᵗ aᵖ dτ ≤ āᵖ`;
//! * derivative growth: `|Φ_x(t, τ, x)| ≤ c(t, τ)·α(|x|)` with `∫₀ᵗ c^q dτ ≤ C`.
//!
//! `α` in the derivative bound is a growth *function* ([`Kernel::alpha_growth`]); it is unrelated
//! to the scalar coefficient of [`LogPowerKernel`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_exponent, Error, Result};
use crate::grid::euclid;
use crate::hypothesis::{worst_sample, CertificateReport, ConditionId, Witness};
use crate::quadrature::trapezoid;
use crate::sampling::halton;

use super::forcing::interpolate;

pub trait Kernel: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> String;

    fn phi(&self, t: f64, tau: f64, x: &[f64], out: &mut [f64]);

    /// `∂Φ/∂x`, row-major `dim × dim`.
    fn phi_x(&self, t: f64, tau: f64, x: &[f64], out: &mut [f64]);

    fn envelope_a(&self, t: f64, tau: f64) -> f64;

    fn envelope_b(&self, t: f64, tau: f64) -> f64;

    fn envelope_c(&self, t: f64, tau: f64) -> f64;

    fn alpha_growth(&self, s: f64) -> f64;

    /// `ā = sup_t (∫₀ᵗ a(t, τ)ᵖ dτ)^{1/p}`.
    fn a_bar(&self, p: f64) -> f64;

    /// `C = sup_t ∫₀ᵗ c(t, τ)^q dτ`.
    fn c_const(&self, p: f64) -> f64;
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroKernel {
    pub dim: usize,
}

impl Kernel for ZeroKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        "zero".into()
    }
    fn phi(&self, _: f64, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn phi_x(&self, _: f64, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn envelope_a(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn envelope_b(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn envelope_c(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn alpha_growth(&self, _: f64) -> f64 {
        0.0
    }
    fn a_bar(&self, _: f64) -> f64 {
        0.0
    }
    fn c_const(&self, _: f64) -> f64 {
        0.0
    }
}

/// `Φ(t, τ, x) = λx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearKernel {
    pub coeff: f64,
    pub dim: usize,
}

impl Kernel for LinearKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn name(&self) -> String {
        format!("linear(coeff={})", self.coeff)
    }
    fn phi(&self, _: f64, _: f64, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.coeff * v;
        }
    }
    fn phi_x(&self, _: f64, _: f64, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = self.coeff;
        }
    }
    fn envelope_a(&self, _: f64, _: f64) -> f64 {
        self.coeff.abs()
    }
    fn envelope_b(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn envelope_c(&self, _: f64, _: f64) -> f64 {
        self.coeff.abs()
    }
    fn alpha_growth(&self, _: f64) -> f64 {
        1.0
    }
    fn a_bar(&self, _: f64) -> f64 {
        self.coeff.abs()
    }
    fn c_const(&self, p: f64) -> f64 {
        self.coeff.abs().powf(conjugate(p))
    }
}

/// `Φ(t, τ, x) = x²` componentwise, declared with the linear envelope
/// `a ≡ 1, b ≡ 0`. Violates the linear-growth condition for `|x| > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticKernel;

impl Kernel for QuadraticKernel {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        "quadratic".into()
    }
    fn phi(&self, _: f64, _: f64, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0];
    }
    fn phi_x(&self, _: f64, _: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0];
    }
    fn envelope_a(&self, _: f64, _: f64) -> f64 {
        1.0
    }
    fn envelope_b(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn envelope_c(&self, _: f64, _: f64) -> f64 {
        1.0
    }
    fn alpha_growth(&self, s: f64) -> f64 {
        2.0 * s
    }
    fn a_bar(&self, _: f64) -> f64 {
        1.0
    }
    fn c_const(&self, _: f64) -> f64 {
        1.0
    }
}

/// `Φ(t, τ, x) = α(t − τ)^{5/2} ln(1 + (t − τ)²x²)`.
///
/// Envelopes: `a = b = α s^{5/2}` (from `ln(1 + s²z²) ≤ |s| + |z|` and
/// `s ≤ 1`), and, with `s = t − τ`,
/// `|Φ_x| = α s^{5/2}·2s²|x|/(1 + s²x²) ≤ 2α s^{5/2}|x|`, written as
/// `c = 2^{1−p} s^{5/2}` times `α(r) = α 2ᵖ r` so that
/// `sup_t ∫₀ᵗ c^q = 2^{1−p}/(5q + 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPowerKernel {
    pub alpha: f64,
    pub p: f64,
}

pub fn log_power_kernel(alpha: f64, p: f64) -> Result<LogPowerKernel> {
    check_exponent(p)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("kernel coefficient must be positive, got {alpha}")));
    }
    Ok(LogPowerKernel { alpha, p })
}

impl LogPowerKernel {
    /// `∬_{P_Δ} aᵖ = αᵖ·4/((5p + 2)(5p + 4))`.
    pub fn a_lp_norm_p_closed_form(&self, p: f64) -> f64 {
        self.alpha.powf(p) * 4.0 / ((5.0 * p + 2.0) * (5.0 * p + 4.0))
    }

    /// `2^{1−p}/(5q + 2)`.
    pub fn c_bound_closed_form(&self) -> f64 {
        2f64.powf(1.0 - self.p) / (5.0 * conjugate(self.p) + 2.0)
    }
}

impl Kernel for LogPowerKernel {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        format!("log_power(alpha={}, p={})", self.alpha, self.p)
    }
    fn phi(&self, t: f64, tau: f64, x: &[f64], out: &mut [f64]) {
        let s = (t - tau).max(0.0);
        out[0] = self.alpha * s.powf(2.5) * (s * s * x[0] * x[0]).ln_1p();
    }
    fn phi_x(&self, t: f64, tau: f64, x: &[f64], out: &mut [f64]) {
        let s = (t - tau).max(0.0);
        let s2 = s * s;
        out[0] = self.alpha * s.powf(2.5) * 2.0 * s2 * x[0] / (1.0 + s2 * x[0] * x[0]);
    }
    fn envelope_a(&self, t: f64, tau: f64) -> f64 {
        self.alpha * (t - tau).max(0.0).powf(2.5)
    }
    fn envelope_b(&self, t: f64, tau: f64) -> f64 {
        self.envelope_a(t, tau)
    }
    fn envelope_c(&self, t: f64, tau: f64) -> f64 {
        2f64.powf(1.0 - self.p) * (t - tau).max(0.0).powf(2.5)
    }
    fn alpha_growth(&self, r: f64) -> f64 {
        self.alpha * 2f64.powf(self.p) * r
    }
    fn a_bar(&self, p: f64) -> f64 {
        self.alpha * (2.0 / (5.0 * p + 2.0)).powf(1.0 / p)
    }
    fn c_const(&self, p: f64) -> f64 {
        let q = conjugate(p);
        2f64.powf((1.0 - self.p) * q) * 2.0 / (5.0 * q + 2.0)
    }
}

/// Convolution kernel `Φ(t, τ, x) = g(t − τ)·x` with `g` piecewise linear
/// through tabulated `(sᵢ, gᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionKernel {
    s: Vec<f64>,
    g: Vec<f64>,
}

impl ConvolutionKernel {
    pub fn new(s: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if s.len() != g.len() || s.len() < 2 {
            return Err(Error::invalid("tabulated kernel needs at least two (s, g) pairs"));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) || s[0] > 0.0 || *s.last().unwrap() < 1.0 {
            return Err(Error::invalid("tabulated kernel abscissae must increase and cover [0, 1]"));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated kernel has non-finite values"));
        }
        Ok(Self { s, g })
    }

    fn g(&self, s: f64) -> f64 {
        interpolate(&self.s, &self.g, s)
    }

    fn g_power_integral(&self, power: f64) -> f64 {
        let n = 4000;
        let samples: Vec<f64> = (0..=n).map(|i| self.g(i as f64 / n as f64).abs().powf(power)).collect();
        trapezoid(&samples, 1.0 / n as f64)
    }
}

impl Kernel for ConvolutionKernel {
    fn dim(&self) -> usize {
        1
    }
    fn name(&self) -> String {
        format!("tabulated({} nodes)", self.s.len())
    }
    fn phi(&self, t: f64, tau: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.g(t - tau) * x[0];
    }
    fn phi_x(&self, t: f64, tau: f64, _: &[f64], out: &mut [f64]) {
        out[0] = self.g(t - tau);
    }
    fn envelope_a(&self, t: f64, tau: f64) -> f64 {
        self.g(t - tau).abs()
    }
    fn envelope_b(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn envelope_c(&self, t: f64, tau: f64) -> f64 {
        self.g(t - tau).abs()
    }
    fn alpha_growth(&self, _: f64) -> f64 {
        1.0
    }
    fn a_bar(&self, p: f64) -> f64 {
        // ∫₀ᵗ |g(t − τ)|ᵖ dτ = ∫₀ᵗ |g|ᵖ is nondecreasing in t
        self.g_power_integral(p).powf(1.0 / p)
    }
    fn c_const(&self, p: f64) -> f64 {
        self.g_power_integral(conjugate(p))
    }
}

/// Integrals of the growth envelopes over `P_Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub p: f64,
    pub q: f64,
    pub n_cells: usize,
    /// `∬_{P_Δ} aᵖ`.
    pub a_lp_norm_p: f64,
    /// `sup_t ∫₀ᵗ aᵖ dτ`, to compare with `āᵖ`.
    pub a_row_sup_p: f64,
    /// `sup_t ∫₀ᵗ c^q dτ`.
    pub c_row_sup_q: f64,
}

impl KernelConstants {
    /// `(sup_t ∫₀ᵗ aᵖ)^{1/p}`, a quadrature estimate of `ā`.
    pub fn a_bar_check(&self) -> f64 {
        self.a_row_sup_p.powf(1.0 / self.p)
    }
}

/// Nested trapezoidal quadrature of the envelopes on an `n_cells` grid.
pub fn kernel_constants(kernel: &dyn Kernel, p: f64, n_cells: usize) -> Result<KernelConstants> {
    check_exponent(p)?;
    if n_cells < 2 {
        return Err(Error::GridTooCoarse { n_cells, min: 2 });
    }
    let q = conjugate(p);
    let h = 1.0 / n_cells as f64;
    let rows: Vec<(f64, f64)> = (0..=n_cells)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * h;
            let a: Vec<f64> = (0..=i).map(|j| kernel.envelope_a(t, j as f64 * h).powf(p)).collect();
            let c: Vec<f64> = (0..=i).map(|j| kernel.envelope_c(t, j as f64 * h).powf(q)).collect();
            (trapezoid(&a, h), trapezoid(&c, h))
        })
        .collect();
    let a_rows: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(KernelConstants {
        p,
        q,
        n_cells,
        a_lp_norm_p: trapezoid(&a_rows, h),
        a_row_sup_p: a_rows.iter().copied().fold(0.0, f64::max),
        c_row_sup_q: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    })
}

/// Sample counts and `x`-range for [`check_hypotheses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSampling {
    pub pairs: usize,
    pub x_samples: usize,
    pub x_max: f64,
    pub seed: u64,
}

impl Default for KernelSampling {
    fn default() -> Self {
        Self { pairs: 200, x_samples: 40, x_max: 10.0, seed: 9 }
    }
}

fn operator_norm(m: &[f64], dim: usize) -> f64 {
    if dim == 1 {
        m[0].abs()
    } else {
        DMatrix::from_row_slice(dim, dim, m).svd(false, false).singular_values.max()
    }
}

/// Relative round-off allowed on envelope slacks.
pub const ENVELOPE_ROUNDOFF: f64 = 1e-12;

/// Sampling verification of the smoothness and envelope conditions on
/// `{τ ≤ t} × [−x_max, x_max]^dim`. Envelope margins are relative to
/// `1 + envelope`.
pub fn check_hypotheses(kernel: &dyn Kernel, plan: KernelSampling) -> Result<Vec<CertificateReport>> {
    if plan.pairs == 0 || plan.x_samples == 0 || !(plan.x_max > 0.0) {
        return Err(Error::invalid("kernel sampling needs positive counts and x_max"));
    }
    let dim = kernel.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut pairs = vec![(1.0, 0.0), (1.0, 1.0), (0.5, 0.0), (0.5, 0.5)];
    for i in 0..plan.pairs {
        let (u, v) = if i % 2 == 0 {
            (halton(i / 2 + 1, 2), halton(i / 2 + 1, 3))
        } else {
            (rng.gen::<f64>(), rng.gen::<f64>())
        };
        pairs.push((u.max(v), u.min(v)));
    }
    let mut xs: Vec<Vec<f64>> = [0.0, 0.1, -0.1, 1.0, -1.0, plan.x_max, -plan.x_max]
        .iter()
        .map(|v| vec![*v; dim])
        .collect();
    for _ in 0..plan.x_samples {
        xs.push((0..dim).map(|_| rng.gen_range(-plan.x_max..=plan.x_max)).collect());
    }
    let samples: Vec<(f64, f64, &Vec<f64>)> = pairs
        .iter()
        .flat_map(|(t, tau)| xs.iter().map(move |x| (*t, *tau, x)))
        .collect();

    let evaluated: Vec<[f64; 3]> = samples
        .par_iter()
        .map(|(t, tau, x)| {
            let mut phi = vec![0.0; dim];
            let mut jac = vec![0.0; dim * dim];
            kernel.phi(*t, *tau, x, &mut phi);
            kernel.phi_x(*t, *tau, x, &mut jac);
            let xn = euclid(x);
            // envelope slacks are relative to 1 + envelope so equality cases survive round-off
            let env8 = kernel.envelope_a(*t, *tau) * xn + kernel.envelope_b(*t, *tau);
            let a8 = (env8 - euclid(&phi)) / (1.0 + env8);
            let jn = operator_norm(&jac, dim);
            let env9 = kernel.envelope_c(*t, *tau) * kernel.alpha_growth(xn);
            let a9 = (env9 - jn) / (1.0 + env9);
            // central differences in x
            let step = f64::EPSILON.cbrt() * xn.max(1.0);
            let mut err: f64 = 0.0;
            let mut xp = x.to_vec();
            let (mut fp, mut fm) = (vec![0.0; dim], vec![0.0; dim]);
            for col in 0..dim {
                xp[col] = x[col] + step;
                kernel.phi(*t, *tau, &xp, &mut fp);
                xp[col] = x[col] - step;
                kernel.phi(*t, *tau, &xp, &mut fm);
                xp[col] = x[col];
                for row in 0..dim {
                    let fd = (fp[row] - fm[row]) / (2.0 * step);
                    err = err.max((fd - jac[row * dim + col]).abs());
                }
            }
            let a7 = 1e-5 * jn.max(1.0) - err;
            [a7, a8, a9]
        })
        .collect();
    if evaluated.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("kernel {} on the sampled domain", kernel.name())));
    }

    let ids = [
        ConditionId::KernelMeasurableC1,
        ConditionId::KernelLinearGrowth,
        ConditionId::KernelDerivativeGrowth,
    ];
    let reports = ids
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let worst = worst_sample(evaluated.par_iter().enumerate().map(|(i, e)| {
                let (t, tau, x) = &samples[i];
                let mut point = vec![*t, *tau];
                point.extend_from_slice(x);
                (i, e[c], point, e[c])
            }))
            .expect("nonempty");
            let mut params = std::collections::BTreeMap::new();
            params.insert("x_max".to_string(), plan.x_max);
            params.insert("pairs".to_string(), pairs.len() as f64);
            params.insert("x_samples".to_string(), xs.len() as f64);
            CertificateReport {
                condition_id: *id,
                passed: worst.1 >= -ENVELOPE_ROUNDOFF,
                margin: worst.1,
                witnesses: vec![Witness { point: worst.2, value: worst.3 }],
                samples_used: samples.len(),
                parameters: params,
                seed: plan.seed,
                note: Some(format!(
                    "kernel {}; witness point is (t, tau, x...); sampled x-range is a box, not all of R^n",
                    kernel.name()
                )),
            }
        })
        .collect();
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_power_kernel_values() {
        let k = log_power_kernel(1.0, 2.0).unwrap();
        let mut out = [1.0];
        k.phi(1.0, 0.0, &[0.0], &mut out);
        assert_eq!(out[0], 0.0);
        assert!((k.a_bar(2.0) - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!(log_power_kernel(0.0, 2.0).is_err());
        assert!(log_power_kernel(1.0, 1.5).is_err());
    }

    #[test]
    fn log_inequality_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let s: f64 = rng.gen_range(-50.0..50.0);
            let z: f64 = rng.gen_range(-50.0..50.0);
            assert!((s * s * z * z).ln_1p() <= s.abs() + z.abs());
        }
    }

    #[test]
    fn constants_for_log_power_kernel() {
        let k = log_power_kernel(1.0, 2.0).unwrap();
        let c = kernel_constants(&k, 2.0, 2000).unwrap();
        assert!((c.a_lp_norm_p - 1.0 / 42.0).abs() < 1e-6);
        assert!((k.a_lp_norm_p_closed_form(2.0) - 1.0 / 42.0).abs() < 1e-17);
        assert!((c.a_bar_check() - k.a_bar(2.0)).abs() < 1e-6);
        assert!(c.c_row_sup_q <= k.c_bound_closed_form() + 1e-6);
        let k2 = log_power_kernel(2.0, 2.0).unwrap();
        let c2 = kernel_constants(&k2, 2.0, 2000).unwrap();
        assert!((c2.a_lp_norm_p - 4.0 / 42.0).abs() < 4e-6);
    }

    #[test]
    fn constants_for_zero_kernel() {
        let c = kernel_constants(&ZeroKernel { dim: 1 }, 2.0, 64).unwrap();
        assert_eq!((c.a_lp_norm_p, c.a_row_sup_p, c.c_row_sup_q), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hypotheses_pass_for_admissible_kernels() {
        for k in [&log_power_kernel(1.0, 2.0).unwrap() as &dyn Kernel, &ZeroKernel { dim: 2 }, &LinearKernel { coeff: -3.0, dim: 2 }] {
            for r in check_hypotheses(k, KernelSampling::default()).unwrap() {
                assert!(r.passed, "{} {:?}", k.name(), r);
            }
        }
    }

    #[test]
    fn quadratic_kernel_fails_linear_growth() {
        let reps = check_hypotheses(&QuadraticKernel, KernelSampling::default()).unwrap();
        let a8 = reps.iter().find(|r| r.condition_id == ConditionId::KernelLinearGrowth).unwrap();
        assert!(!a8.passed);
        assert!(a8.witnesses[0].point[2].abs() > 1.0);
    }

    #[test]
    fn tabulated_kernel_constants() {
        let k = ConvolutionKernel::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((k.a_bar(2.0) - 1.0).abs() < 1e-12);
        assert!(ConvolutionKernel::new(vec![0.0, 0.5], vec![1.0, 1.0]).is_err());
        for r in check_hypotheses(&k, KernelSampling::default()).unwrap() {
            assert!(r.passed);
        }
    }
}
