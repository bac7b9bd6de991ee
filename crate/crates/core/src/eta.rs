//! Normalization functionals `η` and the discrete p-energy on grid functions.
//!
//! Every `η` here satisfies `η(v) ≥ 0` with equality only at `v = 0`, and its
//! gradient vanishes only at `v = 0`. Under these conditions the global
//! minimizers of `x ↦ η(f(x) − y)` are exactly the solutions of `f(x) = y`
//! whenever `f′` is everywhere invertible.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_exponent, Error, Result};
use crate::grid::{euclid, GridFunction};
use crate::quadrature::trapezoid_weights;

pub trait NormalizationFunctional: Send + Sync {
    fn value(&self, v: &DVector<f64>) -> f64;

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Homogeneity exponent: `η(s·v) = |s|^p η(v)`.
    fn exponent(&self) -> f64;

    /// True when `⟨η′(v), v⟩ > 0` for all `v ≠ 0`, so that for a square,
    /// invertible `f′` the Newton direction `−f′⁻¹(f − y)` is a descent
    /// direction of `η(f − y)`.
    fn newton_compatible(&self) -> bool {
        false
    }
}

/// `η(v) = ½‖v‖²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quadratic;

impl NormalizationFunctional for Quadratic {
    fn value(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.norm_squared()
    }
    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
    fn exponent(&self) -> f64 {
        2.0
    }
    fn newton_compatible(&self) -> bool {
        true
    }
}

/// Weighted p-power functional `η(v) = (1/p) Σⱼ wⱼ |vⱼ|ᵖ`, where `vⱼ` are
/// consecutive blocks of length `block` and `|·|` is Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNorm {
    p: f64,
    block: usize,
    weights: Option<Vec<f64>>,
}

impl PowerNorm {
    /// Unweighted `(1/p) Σ |vᵢ|ᵖ`.
    pub fn new(p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self { p, block: 1, weights: None })
    }

    /// Quadrature-weighted version over blocks of `block` components.
    pub fn weighted(p: f64, block: usize, weights: Vec<f64>) -> Result<Self> {
        check_exponent(p)?;
        if block == 0 {
            return Err(Error::invalid("block size must be positive"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("power-norm weights must be positive and finite"));
        }
        Ok(Self { p, block, weights: Some(weights) })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    fn check_len(&self, v: &DVector<f64>) {
        if let Some(w) = &self.weights {
            assert_eq!(w.len() * self.block, v.len(), "power-norm weights do not match vector length");
        }
    }
}

impl NormalizationFunctional for PowerNorm {
    fn value(&self, v: &DVector<f64>) -> f64 {
        self.check_len(v);
        v.as_slice()
            .chunks(self.block)
            .enumerate()
            .map(|(j, b)| self.weight(j) * euclid(b).powf(self.p))
            .sum::<f64>()
            / self.p
    }

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        self.check_len(v);
        let mut g = DVector::zeros(v.len());
        for (j, b) in v.as_slice().chunks(self.block).enumerate() {
            let m = euclid(b);
            if m == 0.0 {
                continue;
            }
            let s = self.weight(j) * m.powf(self.p - 2.0);
            for (c, bc) in b.iter().enumerate() {
                g[j * self.block + c] = s * bc;
            }
        }
        g
    }

    fn exponent(&self) -> f64 {
        self.p
    }

    fn newton_compatible(&self) -> bool {
        true
    }
}

/// `(½‖v‖², v)`.
pub fn eta_quadratic(v: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("eta_quadratic needs a finite vector"));
    }
    Ok((Quadratic.value(v), Quadratic.gradient(v)))
}

/// `(1/p)∫₀¹|u|ᵖ` for nodal samples on the uniform grid, together with the
/// gradient with respect to the samples, `ωᵢ|uᵢ|^{p−2}uᵢ` (ωᵢ trapezoid weights).
pub fn eta_pnorm(u: &[f64], p: f64) -> Result<(f64, Vec<f64>)> {
    check_exponent(p)?;
    if u.len() < 2 {
        return Err(Error::GridTooCoarse { n_cells: u.len().saturating_sub(1), min: 1 });
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("eta_pnorm needs finite samples"));
    }
    let w = trapezoid_weights(u.len(), 1.0 / (u.len() - 1) as f64);
    let value = u.iter().zip(&w).map(|(ui, wi)| wi * ui.abs().powf(p)).sum::<f64>() / p;
    let grad = u
        .iter()
        .zip(&w)
        .map(|(ui, wi)| if *ui == 0.0 { 0.0 } else { wi * ui.abs().powf(p - 2.0) * ui })
        .collect();
    Ok((value, grad))
}

/// Discrete energy `h(x) = (1/p)∫₀¹|x′|ᵖ` and its gradient with respect to the
/// free nodal values `x(t₁), …, x(t_n)` (node-major, length `n_cells·dim`).
///
/// The gradient is the discrete duality map: summation by parts gives
/// `∂h/∂xᵢ = ψ(x′_{i−1}) − ψ(x′ᵢ)` with `ψ(d) = |d|^{p−2}d` and `x′_n := 0`.
pub fn sobolev_energy(x: &GridFunction, p: f64) -> Result<(f64, Vec<f64>)> {
    check_exponent(p)?;
    let n = x.n_cells();
    if n < 2 {
        return Err(Error::GridTooCoarse { n_cells: n, min: 2 });
    }
    let dim = x.dim();
    let h = x.h();
    let d = x.derivatives();
    let mut value = 0.0;
    let mut psi = vec![0.0; d.len()];
    for (j, cell) in d.chunks(dim).enumerate() {
        let m = euclid(cell);
        value += h * m.powf(p);
        if m > 0.0 {
            let s = m.powf(p - 2.0);
            for c in 0..dim {
                psi[j * dim + c] = s * cell[c];
            }
        }
    }
    let mut grad = vec![0.0; n * dim];
    for i in 1..=n {
        for c in 0..dim {
            let left = psi[(i - 1) * dim + c];
            let right = if i < n { psi[i * dim + c] } else { 0.0 };
            grad[(i - 1) * dim + c] = left - right;
        }
    }
    Ok((value / p, grad))
}

/// Sampling check of the normalization conditions: `η(0) = 0`, `η′(0) = 0`,
/// and `η(v) > 0`, `η′(v) ≠ 0` at `samples` random nonzero vectors.
pub fn check_normalization<E: NormalizationFunctional + ?Sized>(
    eta: &E,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<()> {
    let zero = DVector::zeros(dim);
    if eta.value(&zero) != 0.0 || eta.gradient(&zero).norm() != 0.0 {
        return Err(Error::invalid("normalization functional does not vanish at 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let v = DVector::from_fn(dim, |_, _| scale * rng.gen_range(-1.0..1.0));
        if v.norm() == 0.0 {
            continue;
        }
        if !(eta.value(&v) > 0.0) || !(eta.gradient(&v).norm() > 0.0) {
            return Err(Error::invalid(format!(
                "normalization functional vanishes at nonzero v (|v| = {:e})",
                v.norm()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, v: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(v.len(), |i, _| {
            let mut p = v.clone();
            let mut m = v.clone();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
    }

    #[test]
    fn quadratic_values() {
        let (v, g) = eta_quadratic(&dvector![0.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, dvector![0.0, 0.0]);
        let (v, g) = eta_quadratic(&dvector![3.0, 4.0]).unwrap();
        assert_eq!(v, 12.5);
        assert_eq!(g, dvector![3.0, 4.0]);
        let x = dvector![1.0, 2.0];
        let fd = fd_gradient(|v| Quadratic.value(v), &x);
        assert!((fd - Quadratic.gradient(&x)).norm() < 1e-6);
        assert!(eta_quadratic(&dvector![f64::NAN]).is_err());
    }

    #[test]
    fn pnorm_examples() {
        let ones = vec![1.0; 11];
        let (v, _) = eta_pnorm(&ones, 3.0).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let zeros = vec![0.0; 11];
        let (v, g) = eta_pnorm(&zeros, 4.5).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        let t: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let (v, _) = eta_pnorm(&t, 2.0).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-4);
        assert!(matches!(eta_pnorm(&t, 1.5), Err(Error::UnsupportedExponent(_))));
    }

    #[test]
    fn sobolev_energy_examples() {
        let z = GridFunction::zeros(16, 1).unwrap();
        assert_eq!(sobolev_energy(&z, 3.0).unwrap().0, 0.0);
        let id = GridFunction::from_fn(16, |t| t).unwrap();
        assert!((sobolev_energy(&id, 2.0).unwrap().0 - 0.5).abs() < 1e-14);
        let coarse = GridFunction::from_fn(1, |t| t).unwrap();
        assert!(matches!(sobolev_energy(&coarse, 2.0), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn sobolev_gradient_matches_fd_vector_valued() {
        let n = 12;
        let free: Vec<f64> = (0..2 * n).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let x = GridFunction::from_free(n, 2, &free).unwrap();
        let (_, g) = sobolev_energy(&x, 3.0).unwrap();
        let f = |v: &DVector<f64>| {
            sobolev_energy(&GridFunction::from_free(n, 2, v.as_slice()).unwrap(), 3.0).unwrap().0
        };
        let fd = fd_gradient(f, &DVector::from_vec(free));
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn weighted_power_gradient() {
        let eta = PowerNorm::weighted(3.0, 2, vec![0.5, 2.0]).unwrap();
        let v = dvector![1.0, -2.0, 0.3, 0.7];
        let fd = fd_gradient(|v| eta.value(v), &v);
        assert!((fd - eta.gradient(&v)).norm() < 1e-6);
        assert!(PowerNorm::weighted(2.0, 1, vec![0.0]).is_err());
        assert!(PowerNorm::new(1.9).is_err());
    }

    #[test]
    fn normalization_checks_pass_for_builtins() {
        check_normalization(&Quadratic, 3, 100, 1).unwrap();
        check_normalization(&PowerNorm::new(3.0).unwrap(), 3, 100, 2).unwrap();
    }

    /// Flat inside the unit ball.
    struct DeadZone;
    impl NormalizationFunctional for DeadZone {
        fn value(&self, v: &DVector<f64>) -> f64 {
            (v.norm() - 1.0).max(0.0).powi(2)
        }
        fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
            let n = v.norm();
            if n <= 1.0 {
                DVector::zeros(v.len())
            } else {
                v * (2.0 * (n - 1.0) / n)
            }
        }
        fn exponent(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn normalization_check_catches_dead_zone() {
        assert!(matches!(check_normalization(&DeadZone, 2, 50, 3), Err(Error::InvalidInput(_))));
    }
}
