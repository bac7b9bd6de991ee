//! Solving `f(x) = y` by minimizing `φ(x) = η(f(x) − y)`.
//!
//! Each iteration first tries the Newton (Gauss–Newton) direction
//! `f′(x)Δ = −(f(x) − y)` when `η` admits it, and otherwise, or when that step
//! fails the sufficient-decrease test, falls back to steepest descent on
//! `∇φ = f′(x)ᵀ η′(f(x) − y)`. Both directions use Armijo backtracking, so `φ`
//! never increases along accepted iterates.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eta::{check_normalization, NormalizationFunctional};
use crate::map::{jacobian_or_fd, NonlinearMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// Initial points: explicit, or `count` seeded uniform points in a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Starts {
    Points(Vec<Vec<f64>>),
    Random {
        count: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
        seed: u64,
    },
}

impl Starts {
    /// Resolves to concrete points; the i-th random start depends only on
    /// `(seed, i)`.
    pub fn points(&self, dim: usize) -> Result<Vec<DVector<f64>>> {
        match self {
            Starts::Points(pts) => pts
                .iter()
                .map(|p| {
                    if p.len() != dim {
                        Err(Error::DimensionMismatch { expected: dim, got: p.len() })
                    } else {
                        Ok(DVector::from_column_slice(p))
                    }
                })
                .collect(),
            Starts::Random { count, lower, upper, seed } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: lower.len() });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::invalid("start box needs lower <= upper"));
                }
                Ok((0..*count)
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                        DVector::from_fn(dim, |c, _| {
                            if lower[c] == upper[c] {
                                lower[c]
                            } else {
                                rng.gen_range(lower[c]..=upper[c])
                            }
                        })
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Stop when `‖f(x) − y‖ ≤ tol_residual`.
    pub tol_residual: f64,
    /// Stop (unconverged) when `‖∇φ‖/(‖J‖_F·‖η′(r)‖)` drops below this.
    pub tol_gradient: f64,
    pub max_iters: usize,
    pub line_search: LineSearch,
    pub starts: Starts,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            tol_gradient: 1e-8,
            max_iters: 500,
            line_search: LineSearch::default(),
            starts: Starts::Points(Vec::new()),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || !(self.tol_gradient > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(Error::invalid("line-search shrink factor must lie in (0, 1)"));
        }
        if !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) {
            return Err(Error::invalid("sufficient-decrease constant must lie in (0, 1)"));
        }
        if ls.max_backtracks == 0 {
            return Err(Error::invalid("max_backtracks must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Residual,
    Stationary,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub phi: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub root: Vec<f64>,
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub phi: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub trajectory_summary: Vec<TrajectoryPoint>,
    pub newton_steps: usize,
    pub gradient_steps: usize,
    /// Iterations where the Jacobian could not be factored.
    pub singular_jacobian_events: usize,
}

impl SolveResult {
    pub fn root_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.root)
    }

    /// `iter,phi,residual` rows with a header line.
    pub fn trajectory_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "phi", "residual"]).expect("in-memory write");
        for p in &self.trajectory_summary {
            w.write_record(&[p.iter.to_string(), format!("{:e}", p.phi), format!("{:e}", p.residual)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Solves from the first configured start (the origin when none is given).
pub fn solve<M, E>(f: &M, y: &DVector<f64>, eta: &E, cfg: &SolveConfig) -> Result<SolveResult>
where
    M: NonlinearMap + ?Sized,
    E: NormalizationFunctional + ?Sized,
{
    let x0 = cfg
        .starts
        .points(f.dim())?
        .into_iter()
        .next()
        .unwrap_or_else(|| DVector::zeros(f.dim()));
    solve_from(f, y, eta, cfg, x0)
}

/// `‖Jᵀη′(r)‖ / (‖J‖_F·‖η′(r)‖)`, a scale-free measure that vanishes at
/// critical points of `φ` with nonzero residual and stays bounded below by
/// `σ_min(J)/‖J‖_F` near roots where `J` is nonsingular.
fn stationarity(grad_norm: f64, jac_norm: f64, eta_grad_norm: f64) -> f64 {
    let scale = jac_norm * eta_grad_norm;
    if scale == 0.0 {
        0.0
    } else {
        grad_norm / scale
    }
}

fn eval_residual<M: NonlinearMap + ?Sized>(f: &M, x: &DVector<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let r = f.eval(x) - y;
    r.iter().all(|v| v.is_finite()).then_some(r)
}

/// Armijo backtracking along `dir`; returns the accepted `(x, r, φ, step)`.
#[allow(clippy::too_many_arguments)]
fn backtrack<M, E>(
    f: &M,
    y: &DVector<f64>,
    eta: &E,
    ls: &LineSearch,
    x: &DVector<f64>,
    phi: f64,
    slope: f64,
    dir: &DVector<f64>,
    mut step: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64, f64)>
where
    M: NonlinearMap + ?Sized,
    E: NormalizationFunctional + ?Sized,
{
    if !(slope < 0.0) {
        return None;
    }
    for _ in 0..ls.max_backtracks {
        let xt = x + dir * step;
        if let Some(rt) = eval_residual(f, &xt, y) {
            let pt = eta.value(&rt);
            if pt <= phi + ls.sufficient_decrease * step * slope {
                return Some((xt, rt, pt, step));
            }
        }
        step *= ls.shrink;
    }
    None
}

pub fn solve_from<M, E>(
    f: &M,
    y: &DVector<f64>,
    eta: &E,
    cfg: &SolveConfig,
    x0: DVector<f64>,
) -> Result<SolveResult>
where
    M: NonlinearMap + ?Sized,
    E: NormalizationFunctional + ?Sized,
{
    cfg.validate()?;
    let n = f.dim();
    if y.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { x0.len() },
        });
    }
    check_normalization(eta, n, 16, 0x5eed)?;

    let mut x = x0;
    let mut r = eval_residual(f, &x, y).ok_or_else(|| Error::NonFinite("residual at the initial point".into()))?;
    let mut phi = eta.value(&r);
    let mut trajectory = vec![TrajectoryPoint { iter: 0, phi, residual: r.norm() }];
    let mut grad_norm = f64::INFINITY;
    let mut grad_step = 1.0;
    let mut newton_steps = 0;
    let mut gradient_steps = 0;
    let mut singular = 0;
    let mut iterations = 0;
    let ls = cfg.line_search;

    let termination = loop {
        if r.norm() <= cfg.tol_residual {
            break Termination::Residual;
        }
        if iterations >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        let jac = jacobian_or_fd(f, &x)?;
        let eg = eta.gradient(&r);
        let g = jac.transpose() * &eg;
        grad_norm = g.norm();
        if stationarity(grad_norm, jac.norm(), eg.norm()) <= cfg.tol_gradient {
            break Termination::Stationary;
        }

        let mut accepted = None;
        if eta.newton_compatible() {
            match jac.clone().lu().solve(&(-&r)) {
                Some(dir) if dir.iter().all(|v| v.is_finite()) => {
                    accepted = backtrack(f, y, eta, &ls, &x, phi, g.dot(&dir), &dir, 1.0);
                    if accepted.is_some() {
                        newton_steps += 1;
                    }
                }
                _ => singular += 1,
            }
        }
        if accepted.is_none() {
            let dir = -&g;
            accepted = backtrack(f, y, eta, &ls, &x, phi, -grad_norm * grad_norm, &dir, grad_step);
            match &accepted {
                Some((_, _, _, step)) => {
                    gradient_steps += 1;
                    grad_step = (step * 2.0).min(1e6);
                }
                None => break Termination::LineSearchFailed,
            }
        }
        let (xn, rn, pn, _) = accepted.expect("accepted step");
        debug_assert!(pn <= phi);
        x = xn;
        r = rn;
        phi = pn;
        iterations += 1;
        trajectory.push(TrajectoryPoint { iter: iterations, phi, residual: r.norm() });
    };

    if termination == Termination::Residual {
        if let Ok(jac) = jacobian_or_fd(f, &x) {
            grad_norm = (jac.transpose() * eta.gradient(&r)).norm();
        }
    }
    let residual_norm = r.norm();
    Ok(SolveResult {
        root: x.as_slice().to_vec(),
        residual_norm,
        gradient_norm: grad_norm,
        phi,
        iterations,
        converged: residual_norm <= cfg.tol_residual,
        termination,
        trajectory_summary: trajectory,
        newton_steps,
        gradient_steps,
        singular_jacobian_events: singular,
    })
}

/// Multistart evidence for injectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub results: Vec<SolveResult>,
    /// `None` when some start did not converge.
    pub clustered: Option<bool>,
    /// Clustering verdict restricted to the converged starts.
    pub clustered_among_converged: bool,
    pub max_pairwise_distance: f64,
    pub mean_root: Vec<f64>,
    pub converged_count: usize,
    pub nonconverged_starts: Vec<usize>,
    pub cluster_radius: f64,
}

/// Runs [`solve_from`] from every start; roots cluster when they all lie
/// within `10·tol_residual` of their mean. Non-converged starts are excluded
/// from the statistics and make the verdict undetermined.
pub fn multistart_uniqueness<M, E>(f: &M, y: &DVector<f64>, eta: &E, cfg: &SolveConfig) -> Result<UniquenessReport>
where
    M: NonlinearMap + ?Sized,
    E: NormalizationFunctional + ?Sized,
{
    let starts = cfg.starts.points(f.dim())?;
    if starts.len() < 2 {
        return Err(Error::invalid("multistart needs at least two starts"));
    }
    let results = starts
        .into_par_iter()
        .map(|x0| solve_from(f, y, eta, cfg, x0))
        .collect::<Result<Vec<_>>>()?;

    let roots: Vec<DVector<f64>> = results
        .iter()
        .filter(|r| r.converged)
        .map(SolveResult::root_vector)
        .collect();
    let nonconverged_starts: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged)
        .map(|(i, _)| i)
        .collect();
    let cluster_radius = 10.0 * cfg.tol_residual;
    let (mean, max_pair, within) = if roots.is_empty() {
        (DVector::from_element(f.dim(), f64::NAN), f64::NAN, false)
    } else {
        let mean = roots.iter().fold(DVector::zeros(f.dim()), |acc, r| acc + r) / roots.len() as f64;
        let mut max_pair: f64 = 0.0;
        for i in 0..roots.len() {
            for j in i + 1..roots.len() {
                max_pair = max_pair.max((&roots[i] - &roots[j]).norm());
            }
        }
        let within = roots.iter().all(|r| (r - &mean).norm() <= cluster_radius);
        (mean, max_pair, within)
    };
    Ok(UniquenessReport {
        clustered: nonconverged_starts.is_empty().then_some(within),
        clustered_among_converged: within,
        max_pairwise_distance: max_pair,
        mean_root: mean.as_slice().to_vec(),
        converged_count: roots.len(),
        nonconverged_starts,
        cluster_radius,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSolution {
    pub target: Vec<f64>,
    pub result: Option<SolveResult>,
    pub error: Option<String>,
}

/// Solves for each target in order, warm-starting from the last converged
/// root. Per-target failures are recorded and the batch continues.
pub fn invert_on_targets<M, E>(f: &M, targets: &[DVector<f64>], eta: &E, cfg: &SolveConfig) -> Result<Vec<TargetSolution>>
where
    M: NonlinearMap + ?Sized,
    E: NormalizationFunctional + ?Sized,
{
    cfg.validate()?;
    let mut warm = cfg
        .starts
        .points(f.dim())?
        .into_iter()
        .next()
        .unwrap_or_else(|| DVector::zeros(f.dim()));
    let mut out = Vec::with_capacity(targets.len());
    for y in targets {
        match solve_from(f, y, eta, cfg, warm.clone()) {
            Ok(res) => {
                if res.converged {
                    warm = res.root_vector();
                }
                out.push(TargetSolution { target: y.as_slice().to_vec(), result: Some(res), error: None });
            }
            Err(e) => out.push(TargetSolution {
                target: y.as_slice().to_vec(),
                result: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::{PowerNorm, Quadratic};
    use crate::map::FnMap;
    use nalgebra::{dmatrix, dvector};

    fn cubic() -> FnMap {
        FnMap::componentwise(1, |v| v * v * v + v, |v| 3.0 * v * v + 1.0)
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn identity_solves_in_one_step() {
        let res = solve(&FnMap::identity(2), &dvector![1.0, 2.0], &Quadratic, &SolveConfig::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.root, vec![1.0, 2.0]);
        assert_eq!(res.residual_norm, 0.0);
    }

    #[test]
    fn cubic_root_matches_bisection() {
        let oracle = bisect(|x| x * x * x + x - 2.0, 0.0, 3.0);
        let res = solve(&cubic(), &dvector![2.0], &Quadratic, &SolveConfig::default()).unwrap();
        assert!(res.converged);
        assert!((res.root[0] - oracle).abs() < 1e-8);
        assert!((res.root[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn descent_invariant_holds() {
        let cfg = SolveConfig {
            starts: Starts::Points(vec![vec![40.0]]),
            ..SolveConfig::default()
        };
        let eta = PowerNorm::new(3.0).unwrap();
        let res = solve(&cubic(), &dvector![-7.0], &eta, &cfg).unwrap();
        assert!(res.converged, "{res:?}");
        for w in res.trajectory_summary.windows(2) {
            assert!(w[1].phi <= w[0].phi);
        }
    }

    #[test]
    fn gradient_descent_fallback_for_plain_eta() {
        struct Plain;
        impl NormalizationFunctional for Plain {
            fn value(&self, v: &DVector<f64>) -> f64 {
                0.5 * v.norm_squared()
            }
            fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
                v.clone()
            }
            fn exponent(&self) -> f64 {
                2.0
            }
        }
        let a = dmatrix![2.0, 0.5; 0.5, 1.0];
        let cfg = SolveConfig { tol_residual: 1e-9, tol_gradient: 1e-13, max_iters: 5000, ..SolveConfig::default() };
        let res = solve(&FnMap::linear(a), &dvector![1.0, -1.0], &Plain, &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.newton_steps, 0);
        assert!(res.gradient_steps > 0);
    }

    #[test]
    fn singular_jacobian_is_recorded_and_survived() {
        // f′(0, 0) = [[1, 1], [1, 1]] is exactly singular but ∇φ(0, 0) ≠ 0
        let f = FnMap::new(2, |v| dvector![v[0] + v[1], v[0] + v[1] + v[0].powi(3)])
            .with_jacobian(|v| dmatrix![1.0, 1.0; 1.0 + 3.0 * v[0] * v[0], 1.0]);
        let res = solve(&f, &dvector![0.0, 1.0], &Quadratic, &SolveConfig::default()).unwrap();
        assert!(res.singular_jacobian_events >= 1);
        assert!(res.converged, "{res:?}");
        assert!((res.root_vector() - dvector![1.0, -1.0]).norm() < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let f = FnMap::componentwise(1, |v| v * v, |v| 2.0 * v);
        let cfg = SolveConfig { starts: Starts::Points(vec![vec![1.0]]), ..SolveConfig::default() };
        let res = solve(&f, &dvector![-1.0], &Quadratic, &cfg).unwrap();
        assert!(!res.converged);
        assert!(res.residual_norm > 0.5);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SolveConfig::default();
        cfg.line_search.shrink = 1.0;
        assert!(solve(&FnMap::identity(1), &dvector![0.0], &Quadratic, &cfg).is_err());
        let cfg = SolveConfig { tol_residual: 0.0, ..SolveConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn multistart_identity_clusters() {
        let cfg = SolveConfig {
            starts: Starts::Random { count: 16, lower: vec![-5.0; 3], upper: vec![5.0; 3], seed: 11 },
            ..SolveConfig::default()
        };
        let rep = multistart_uniqueness(&FnMap::identity(3), &dvector![1.0, 0.0, -2.0], &Quadratic, &cfg).unwrap();
        assert_eq!(rep.clustered, Some(true));
        assert!(rep.max_pairwise_distance <= 1e-9);
    }

    #[test]
    fn multistart_square_does_not_cluster() {
        let f = FnMap::componentwise(1, |v| v * v, |v| 2.0 * v);
        let cfg = SolveConfig { starts: Starts::Points(vec![vec![-2.0], vec![2.0]]), ..SolveConfig::default() };
        let rep = multistart_uniqueness(&f, &dvector![1.0], &Quadratic, &cfg).unwrap();
        assert_eq!(rep.clustered, Some(false));
        assert!((rep.max_pairwise_distance - 2.0).abs() < 1e-8);
    }

    #[test]
    fn multistart_needs_two_starts() {
        let cfg = SolveConfig { starts: Starts::Points(vec![vec![0.0]]), ..SolveConfig::default() };
        assert!(multistart_uniqueness(&FnMap::identity(1), &dvector![0.0], &Quadratic, &cfg).is_err());
    }

    #[test]
    fn continuation_over_cubic_targets() {
        let targets = [dvector![0.0], dvector![2.0], dvector![10.0]];
        let out = invert_on_targets(&cubic(), &targets, &Quadratic, &SolveConfig::default()).unwrap();
        for (sol, want) in out.iter().zip([0.0, 1.0, 2.0]) {
            let res = sol.result.as_ref().unwrap();
            assert!(res.converged);
            assert!((res.root[0] - want).abs() < 1e-6);
        }
        let id = invert_on_targets(&FnMap::identity(2), &[dvector![0.0, 0.0], dvector![1.0, 1.0]], &Quadratic, &SolveConfig::default()).unwrap();
        assert_eq!(id[1].result.as_ref().unwrap().root, vec![1.0, 1.0]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let res = solve(&cubic(), &dvector![2.0], &Quadratic, &SolveConfig::default()).unwrap();
        let csv = res.trajectory_csv();
        assert!(csv.starts_with("iter,phi,residual\n"));
        assert_eq!(csv.lines().count(), res.trajectory_summary.len() + 1);
    }
}
