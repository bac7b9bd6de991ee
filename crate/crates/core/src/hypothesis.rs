//! Sampling certificates for the hypotheses that make `φ(x) = Ax − F(x)` a
//! global diffeomorphism of `ℝⁿ`: a growth condition on `F` at infinity
//! (linear or power-type), and `det(A − F′(x)) ≠ 0` everywhere.
//!
//! These are surrogates, not proofs: every quantifier over an unbounded set is
//! replaced by a finite, reproducible sample, and the report records the
//! sampled domain and the seed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{jacobian_or_fd, NonlinearMap};
use crate::sampling::{annulus_points, sphere_points, BoxDomain, SamplingPlan};

/// Smallest `|det|` that still counts as nonsingular.
pub const DET_TOLERANCE: f64 = 1e-12;

/// Default growth exponent a coercivity tail must exceed.
pub const COERCIVITY_EXPONENT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    GrowthISmall,
    GrowthILarge,
    GrowthIia,
    GrowthIib,
    JacobianNonsingular,
    CoercivityWitness,
    KernelMeasurableC1,
    KernelLinearGrowth,
    KernelDerivativeGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Outcome of one hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub condition_id: ConditionId,
    pub passed: bool,
    /// Worst-case slack over the samples.
    pub margin: f64,
    pub witnesses: Vec<Witness>,
    pub samples_used: usize,
    pub parameters: BTreeMap<String, f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CertificateReport {
    fn new(condition_id: ConditionId, seed: u64) -> Self {
        Self {
            condition_id,
            passed: false,
            margin: f64::INFINITY,
            witnesses: Vec::new(),
            samples_used: 0,
            parameters: BTreeMap::new(),
            seed,
            note: None,
        }
    }

    pub(crate) fn param(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }
}

/// Running minimum of `(slack, point, measured)` with ties broken by sample
/// index, so the result does not depend on evaluation order.
pub(crate) fn worst_sample<I>(items: I) -> Option<(usize, f64, Vec<f64>, f64)>
where
    I: ParallelIterator<Item = (usize, f64, Vec<f64>, f64)>,
{
    items.reduce_with(|a, b| {
        // NaN slack counts as the worst possible sample
        let keep_a = match (a.1.is_nan(), b.1.is_nan()) {
            (true, true) => a.0 <= b.0,
            (true, false) => true,
            (false, true) => false,
            (false, false) => a.1 < b.1 || (a.1 == b.1 && a.0 <= b.0),
        };
        if keep_a {
            a
        } else {
            b
        }
    })
}

/// Extreme singular values of a nonzero matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularValueBounds {
    pub min: f64,
    pub max: f64,
}

/// `(δ_min, δ_max)`: square roots of the extreme eigenvalues of `AᵀA`, so that
/// `δ_min‖x‖ ≤ ‖Ax‖ ≤ δ_max‖x‖`.
pub fn singular_value_bounds(a: &DMatrix<f64>) -> Result<SingularValueBounds> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    if a.iter().all(|v| *v == 0.0) || a.is_empty() {
        return Err(Error::invalid("singular value bounds need a nonzero matrix"));
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    // a rectangular A with more columns than rows has a nontrivial kernel
    let min = if a.ncols() > a.nrows() { 0.0 } else { sv.min() };
    Ok(SingularValueBounds { min, max })
}

fn growth_check(
    f: &dyn NonlinearMap,
    id: ConditionId,
    radius: f64,
    plan: SamplingPlan,
    slack: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<CertificateReport> {
    plan.validate()?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("growth radius R must be positive"));
    }
    let dim = f.dim();
    let points = annulus_points(dim, radius, 10.0 * radius, plan.samples, plan.seed);
    let worst = worst_sample(points.par_iter().enumerate().map(|(i, x)| {
        let fx = f.eval(x).norm();
        (i, slack(x.norm(), fx), x.as_slice().to_vec(), fx)
    }))
    .expect("at least one sample");
    let mut report = CertificateReport::new(id, plan.seed)
        .param("r_min", radius)
        .param("r_max", 10.0 * radius);
    if !worst.1.is_finite() {
        return Err(Error::NonFinite(format!("growth check at sample {}", worst.0)));
    }
    report.margin = worst.1;
    report.passed = worst.1 >= 0.0;
    report.witnesses.push(Witness { point: worst.2, value: worst.3 });
    report.samples_used = plan.samples;
    Ok(report)
}

/// `‖F(x)‖ ≤ a‖x‖` on `‖x‖ ∈ [R, 10R]`; margin `min(a‖x‖ − ‖F(x)‖)`.
pub fn check_growth_small(f: &dyn NonlinearMap, a: f64, radius: f64, plan: SamplingPlan) -> Result<CertificateReport> {
    if !(a > 0.0) {
        return Err(Error::invalid("growth constant a must be positive"));
    }
    Ok(growth_check(f, ConditionId::GrowthISmall, radius, plan, |r, fx| a * r - fx)?.param("a", a))
}

/// `‖F(x)‖ ≥ b‖x‖` on `‖x‖ ∈ [R, 10R]`; margin `min(‖F(x)‖ − b‖x‖)`.
pub fn check_growth_large(f: &dyn NonlinearMap, b: f64, radius: f64, plan: SamplingPlan) -> Result<CertificateReport> {
    if !(b > 0.0) {
        return Err(Error::invalid("growth constant b must be positive"));
    }
    Ok(growth_check(f, ConditionId::GrowthILarge, radius, plan, |r, fx| fx - b * r)?.param("b", b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// `‖F(x)‖ ≤ α‖x‖^γ`, `0 < γ < 1`.
    Iia,
    /// `‖F(x)‖ ≥ β‖x‖^θ`, `θ > 1`.
    Iib,
}

pub fn check_growth_power(
    f: &dyn NonlinearMap,
    mode: PowerMode,
    coeff: f64,
    expo: f64,
    radius: f64,
    plan: SamplingPlan,
) -> Result<CertificateReport> {
    if !(coeff > 0.0) {
        return Err(Error::invalid("power-growth coefficient must be positive"));
    }
    let report = match mode {
        PowerMode::Iia => {
            if !(expo > 0.0 && expo < 1.0) {
                return Err(Error::invalid(format!("mode iia needs 0 < exponent < 1, got {expo}")));
            }
            growth_check(f, ConditionId::GrowthIia, radius, plan, |r, fx| coeff * r.powf(expo) - fx)?
        }
        PowerMode::Iib => {
            if !(expo > 1.0 && expo.is_finite()) {
                return Err(Error::invalid(format!("mode iib needs exponent > 1, got {expo}")));
            }
            growth_check(f, ConditionId::GrowthIib, radius, plan, |r, fx| fx - coeff * r.powf(expo))?
        }
    };
    Ok(report.param("coeff", coeff).param("exponent", expo))
}

/// Sample layout for the Jacobian check: a tensor grid plus seeded points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPlan {
    pub grid_per_axis: usize,
    pub random: usize,
    pub seed: u64,
}

/// `min |det(A − F′(x))|` over grid and random samples in `domain`.
pub fn check_jacobian_nonsingular(
    f: &dyn NonlinearMap,
    a: &DMatrix<f64>,
    domain: &BoxDomain,
    plan: GridPlan,
) -> Result<CertificateReport> {
    let dim = f.dim();
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: a.nrows() });
    }
    if domain.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: domain.dim() });
    }
    let mut points = domain.grid(plan.grid_per_axis);
    points.extend(domain.random(plan.random, plan.seed));
    if points.is_empty() {
        return Err(Error::invalid("Jacobian check needs at least one sample"));
    }
    let dets: Vec<Result<f64>> = points
        .par_iter()
        .map(|x| jacobian_or_fd(f, x).map(|j| (a - j).determinant().abs()))
        .collect();
    let mut measured = Vec::with_capacity(dets.len());
    for d in dets {
        measured.push(d?);
    }
    let worst = worst_sample(
        measured
            .par_iter()
            .enumerate()
            .map(|(i, d)| (i, *d, points[i].as_slice().to_vec(), *d)),
    )
    .expect("nonempty");
    let mut report = CertificateReport::new(ConditionId::JacobianNonsingular, plan.seed)
        .param("det_tolerance", DET_TOLERANCE)
        .param("grid_per_axis", plan.grid_per_axis as f64)
        .param("random_samples", plan.random as f64);
    for (c, (l, u)) in domain.lower.iter().zip(&domain.upper).enumerate() {
        report = report.param(&format!("lower_{c}"), *l).param(&format!("upper_{c}"), *u);
    }
    report.margin = worst.1;
    report.passed = worst.1 > DET_TOLERANCE;
    report.witnesses.push(Witness { point: worst.2, value: worst.3 });
    report.samples_used = points.len();
    report.note = Some("sampling surrogate: nonsingularity is checked at finitely many points, not proved".into());
    Ok(report)
}

/// Empirical radial growth of `‖φ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityTable {
    /// `(r, min over sphere samples of ‖φ(x)‖)`.
    pub rows: Vec<(f64, f64)>,
    /// Local growth exponents `ln(m_{i+1}/m_i) / ln(r_{i+1}/r_i)`.
    pub exponents: Vec<f64>,
    pub tail_monotone: bool,
    /// Tail is increasing with growth exponent above the threshold.
    pub coercive: bool,
    pub threshold: f64,
    pub samples_per_radius: usize,
    pub seed: u64,
}

impl CoercivityTable {
    /// `margin = min tail exponent − threshold`.
    pub fn to_report(&self) -> CertificateReport {
        let tail = self.tail_exponents();
        let margin = tail.iter().copied().fold(f64::INFINITY, f64::min) - self.threshold;
        let mut report = CertificateReport::new(ConditionId::CoercivityWitness, self.seed)
            .param("threshold", self.threshold)
            .param("samples_per_radius", self.samples_per_radius as f64);
        report.margin = margin;
        report.passed = self.coercive;
        report.samples_used = self.rows.len() * self.samples_per_radius;
        report.witnesses = self
            .rows
            .iter()
            .map(|(r, m)| Witness { point: vec![*r], value: *m })
            .collect();
        report.note = Some("witness points are radii; values are min ‖φ‖ on each sampled sphere".into());
        report
    }

    fn tail_exponents(&self) -> &[f64] {
        let n = self.exponents.len();
        &self.exponents[n.saturating_sub(2)..]
    }
}

fn local_exponent(r0: f64, m0: f64, r1: f64, m1: f64) -> f64 {
    if m0 <= 0.0 {
        return if m1 > 0.0 { f64::MAX } else { 0.0 };
    }
    if m1 <= 0.0 {
        return -f64::MAX;
    }
    (m1 / m0).ln() / (r1 / r0).ln()
}

pub fn coercivity_witness(
    phi: &dyn NonlinearMap,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<CoercivityTable> {
    if radii.len() < 2 {
        return Err(Error::invalid("coercivity witness needs at least two radii"));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be positive and strictly increasing"));
    }
    if samples_per_radius == 0 {
        return Err(Error::invalid("samples_per_radius must be positive"));
    }
    let dim = phi.dim();
    let mut rows = Vec::with_capacity(radii.len());
    for (k, r) in radii.iter().enumerate() {
        let pts = sphere_points(dim, *r, samples_per_radius, seed.wrapping_add(k as u64));
        let norms: Vec<f64> = pts.par_iter().map(|x| phi.eval(x).norm()).collect();
        if norms.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coercivity witness at radius {r}")));
        }
        rows.push((*r, norms.into_iter().fold(f64::INFINITY, f64::min)));
    }
    let exponents: Vec<f64> = rows
        .windows(2)
        .map(|w| local_exponent(w[0].0, w[0].1, w[1].0, w[1].1))
        .collect();
    let tail_start = rows.len().saturating_sub(3);
    let tail_monotone = rows[tail_start..].windows(2).all(|w| w[1].1 > w[0].1);
    let threshold = COERCIVITY_EXPONENT_THRESHOLD;
    let mut table = CoercivityTable {
        rows,
        exponents,
        tail_monotone,
        coercive: false,
        threshold,
        samples_per_radius,
        seed,
    };
    table.coercive = tail_monotone && table.tail_exponents().iter().all(|e| *e > threshold);
    Ok(table)
}

/// `‖Ax‖/‖x‖` at a point; helper for bracketing tests.
pub fn stretch(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (a * x).norm() / x.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::FnMap;
    use nalgebra::dmatrix;

    fn plan() -> SamplingPlan {
        SamplingPlan::new(400, 17)
    }

    #[test]
    fn singular_values_examples() {
        let s = singular_value_bounds(&DMatrix::identity(2, 2)).unwrap();
        assert!((s.min - 1.0).abs() < 1e-14 && (s.max - 1.0).abs() < 1e-14);
        let s = singular_value_bounds(&dmatrix![2.0, 0.0; 0.0, 5.0]).unwrap();
        assert!((s.min - 2.0).abs() < 1e-14 && (s.max - 5.0).abs() < 1e-14);
        let s = singular_value_bounds(&dmatrix![-2.0, 1.0; 6.0, -3.0]).unwrap();
        assert!(s.min < 1e-12);
        assert!((s.max - 50f64.sqrt()).abs() < 1e-12);
        assert!(singular_value_bounds(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn growth_small_examples() {
        let zero = FnMap::new(2, |x| DVector::zeros(x.len()));
        let r = check_growth_small(&zero, 0.5, 3.0, plan()).unwrap();
        assert!(r.passed && r.margin >= 1.5 - 1e-12);
        let id = FnMap::identity(2);
        let r = check_growth_small(&id, 0.5, 3.0, plan()).unwrap();
        assert!(!r.passed && r.margin <= -1.5 + 1e-12);
        let sin = FnMap::componentwise(3, f64::sin, f64::cos);
        let r = check_growth_small(&sin, 0.1, 100.0, plan()).unwrap();
        assert!(r.passed);
        assert!(check_growth_small(&sin, 0.1, 100.0, SamplingPlan::new(0, 1)).is_err());
    }

    #[test]
    fn growth_large_examples() {
        let ten = FnMap::new(2, |x| x * 10.0);
        assert!(check_growth_large(&ten, 2.0, 1.0, plan()).unwrap().passed);
        let zero = FnMap::new(2, |x| DVector::zeros(x.len()));
        assert!(!check_growth_large(&zero, 1.0, 1.0, plan()).unwrap().passed);
    }

    #[test]
    fn growth_power_examples() {
        let cbrt = FnMap::componentwise(2, f64::cbrt, |v| 1.0 / (3.0 * v.abs().cbrt().powi(2)));
        let r = check_growth_power(&cbrt, PowerMode::Iia, 2.0, 0.5, 10.0, plan()).unwrap();
        assert!(r.passed);
        let id = FnMap::identity(1);
        let r = check_growth_power(&id, PowerMode::Iib, 1.0, 2.0, 2.0, plan()).unwrap();
        assert!(!r.passed);
        assert!(check_growth_power(&id, PowerMode::Iia, 1.0, 1.5, 2.0, plan()).is_err());
        assert!(check_growth_power(&id, PowerMode::Iib, 1.0, 0.5, 2.0, plan()).is_err());
    }

    #[test]
    fn witnesses_lie_in_sampled_annulus() {
        let sin = FnMap::componentwise(2, f64::sin, f64::cos);
        let r = check_growth_small(&sin, 0.1, 7.0, plan()).unwrap();
        for w in &r.witnesses {
            let n = DVector::from_vec(w.point.clone()).norm();
            assert!(n >= 7.0 - 1e-9 && n <= 70.0 + 1e-9);
        }
    }

    #[test]
    fn jacobian_check_simple_cases() {
        let zero = FnMap::new(2, |x| DVector::zeros(x.len())).with_jacobian(|_| DMatrix::zeros(2, 2));
        let dom = BoxDomain::cube(2, 3.0).unwrap();
        let gp = GridPlan { grid_per_axis: 11, random: 50, seed: 3 };
        let r = check_jacobian_nonsingular(&zero, &DMatrix::identity(2, 2), &dom, gp).unwrap();
        assert!(r.passed && (r.margin - 1.0).abs() < 1e-14);
        let id = FnMap::identity(1);
        let dom1 = BoxDomain::cube(1, 3.0).unwrap();
        let r = check_jacobian_nonsingular(&id, &dmatrix![1.0], &dom1, gp).unwrap();
        assert!(!r.passed && r.margin == 0.0);
        assert!(dom1.contains(&r.witnesses[0].point));
    }

    #[test]
    fn coercivity_examples() {
        let id = FnMap::identity(2);
        let t = coercivity_witness(&id, &[1.0, 2.0, 4.0], 32, 5).unwrap();
        for ((r, m), want) in t.rows.iter().zip([1.0, 2.0, 4.0]) {
            assert!((r - want).abs() < 1e-15 && (m - want).abs() < 1e-12);
        }
        assert!(t.coercive && t.to_report().passed);
        let atan = FnMap::componentwise(2, f64::atan, |v| 1.0 / (1.0 + v * v));
        let t = coercivity_witness(&atan, &[1.0, 10.0, 100.0], 32, 5).unwrap();
        assert!(t.rows.iter().all(|(_, m)| *m < std::f64::consts::PI));
        assert!(!t.coercive);
        let rep = t.to_report();
        assert!(!rep.passed && rep.margin <= 0.0);
        assert!(coercivity_witness(&id, &[2.0, 1.0], 4, 0).is_err());
    }
}
