//! The algebraic problem `Ax = F(x)` with `A` possibly singular, and the
//! worked two-dimensional instance with a cubic `F`.

use std::sync::Arc;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eta::Quadratic;
use crate::hypothesis::{
    check_growth_large, check_growth_power, check_jacobian_nonsingular, coercivity_witness, CertificateReport,
    GridPlan, PowerMode,
};
use crate::map::{jacobian_or_fd, NonlinearMap};
use crate::sampling::{BoxDomain, SamplingPlan};
use crate::solver::{multistart_uniqueness, SolveConfig, Starts, UniquenessReport};

/// Root of `Av = F(v)` for the example problem, from bisection on the
/// decoupled cubics `x³ + 2x + 1 = 0` and `y³ + 4y + 1 = 0`.
pub const EXAMPLE_ROOT: [f64; 2] = [-0.453397651516, -0.246266172168];

pub const EXAMPLE_SEED: u64 = 47;

/// `Ax = F(x)` and its residual map `φ(x) = Ax − F(x)`.
#[derive(Clone)]
pub struct AlgebraicProblem {
    a: DMatrix<f64>,
    f: Arc<dyn NonlinearMap>,
}

impl std::fmt::Debug for AlgebraicProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgebraicProblem").field("a", &self.a).finish_non_exhaustive()
    }
}

impl AlgebraicProblem {
    pub fn new(a: DMatrix<f64>, f: Arc<dyn NonlinearMap>) -> Result<Self> {
        if !a.is_square() || a.nrows() != f.dim() {
            return Err(Error::DimensionMismatch { expected: f.dim(), got: a.nrows() });
        }
        Ok(Self { a, f })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn f(&self) -> &dyn NonlinearMap {
        self.f.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn residual_map(&self) -> ResidualMap<'_> {
        ResidualMap(self)
    }
}

/// `φ(x) = Ax − F(x)` with Jacobian `A − F′(x)`.
#[derive(Debug, Clone, Copy)]
pub struct ResidualMap<'a>(&'a AlgebraicProblem);

impl NonlinearMap for ResidualMap<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0.a * x - self.0.f.eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        jacobian_or_fd(self.0.f.as_ref(), x).ok().map(|j| &self.0.a - j)
    }
}

/// `F(x, y) = (x³ + y + 1, 6x + y + y³ + 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicExampleMap;

impl NonlinearMap for CubicExampleMap {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (v[0], v[1]);
        dvector![x * x * x + y + 1.0, 6.0 * x + y + y * y * y + 1.0]
    }
    fn jacobian(&self, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (x, y) = (v[0], v[1]);
        Some(dmatrix![3.0 * x * x, 1.0; 6.0, 1.0 + 3.0 * y * y])
    }
}

pub fn example_matrix() -> DMatrix<f64> {
    dmatrix![-2.0, 1.0; 6.0, -3.0]
}

pub fn example_problem() -> AlgebraicProblem {
    AlgebraicProblem::new(example_matrix(), Arc::new(CubicExampleMap)).expect("2x2 example")
}

/// Hypothesis reports for the example: Jacobian nonsingularity on
/// `[−10, 10]²`, radial coercivity on radii `{5, 10, 20, 40}`, cubic growth
/// `‖F(v)‖ ≥ 0.4‖v‖³` for `‖v‖ ≥ 10`, and linear growth with `b = 8 > δ_max(A)`.
pub fn certify_example() -> Result<Vec<CertificateReport>> {
    certify_problem(&example_problem(), &CertifySettings::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifySettings {
    pub box_half_width: f64,
    pub grid: GridPlan,
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub growth_radius: f64,
    pub growth_samples: SamplingPlan,
    pub power_coeff: f64,
    pub power_exponent: f64,
    pub linear_b: Option<f64>,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            box_half_width: 10.0,
            grid: GridPlan { grid_per_axis: 101, random: 10_000, seed: EXAMPLE_SEED },
            radii: vec![5.0, 10.0, 20.0, 40.0],
            samples_per_radius: 256,
            growth_radius: 10.0,
            growth_samples: SamplingPlan::new(2000, EXAMPLE_SEED),
            power_coeff: 0.4,
            power_exponent: 3.0,
            linear_b: Some(8.0),
        }
    }
}

pub fn certify_problem(problem: &AlgebraicProblem, s: &CertifySettings) -> Result<Vec<CertificateReport>> {
    let dom = BoxDomain::cube(problem.dim(), s.box_half_width)?;
    let mut reports = vec![check_jacobian_nonsingular(problem.f(), problem.a(), &dom, s.grid)?];
    let table = coercivity_witness(&problem.residual_map(), &s.radii, s.samples_per_radius, s.grid.seed)?;
    reports.push(table.to_report());
    reports.push(check_growth_power(
        problem.f(),
        PowerMode::Iib,
        s.power_coeff,
        s.power_exponent,
        s.growth_radius,
        s.growth_samples,
    )?);
    if let Some(b) = s.linear_b {
        reports.push(check_growth_large(problem.f(), b, s.growth_radius, s.growth_samples)?);
    }
    Ok(reports)
}

/// Multistart solve of `Av − F(v) = 0`: 64 seeded starts in `[−5, 5]²`.
pub fn solve_example() -> Result<UniquenessReport> {
    let problem = example_problem();
    let cfg = example_solve_config();
    multistart_uniqueness(&problem.residual_map(), &DVector::zeros(2), &Quadratic, &cfg)
}

pub fn example_solve_config() -> SolveConfig {
    SolveConfig {
        starts: Starts::Random { count: 64, lower: vec![-5.0; 2], upper: vec![5.0; 2], seed: EXAMPLE_SEED },
        ..SolveConfig::default()
    }
}

/// Lower bound `½r³ − (6√2 + ‖A‖)r − √2` on `‖Av − F(v)‖` at `‖v‖ = r`.
pub fn example_coercivity_bound(r: f64) -> f64 {
    let norm_a = 50f64.sqrt();
    0.5 * r.powi(3) - (6.0 * 2f64.sqrt() + norm_a) * r - 2f64.sqrt()
}
