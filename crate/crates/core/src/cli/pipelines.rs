use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use super::config::{
    BieleckiCheckParams, CertifyParams, EtaSpec, ForcingSpec, KChoice, KernelSpec, MapSpec, ScalarFunction,
    SolveParams, StartSpec, VolterraParams,
};
use super::Finding;
use crate::algebraic::{
    certify_problem, example_coercivity_bound, example_matrix, example_problem, example_solve_config, AlgebraicProblem,
    CertifySettings, CubicExampleMap, EXAMPLE_ROOT,
};
use crate::bielecki::{inequality_suite, BieleckiParams};
use crate::error::{Error, Result};
use crate::eta::{NormalizationFunctional, PowerNorm, Quadratic};
use crate::grid::GridFunction;
use crate::hypothesis::{CertificateReport, ConditionId, GridPlan};
use crate::map::{FnMap, NonlinearMap};
use crate::sampling::SamplingPlan;
use crate::solver::{self, multistart_uniqueness, SolveConfig, Starts};
use crate::volterra::{
    check_hypotheses, kernel_constants, log_power_kernel, nodal_residual, solution_operator_derivative, solve_forward,
    solve_variational_from, ConvolutionKernel, Forcing, Kernel, LinearKernel, QuadraticKernel, ZeroKernel,
};

/// `v ↦ Av − F(v)` owning its problem.
struct OwnedResidual(AlgebraicProblem);

impl NonlinearMap for OwnedResidual {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.residual_map().eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.0.residual_map().jacobian(x)
    }
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied())
}

fn scalar_pair(f: ScalarFunction) -> (fn(f64) -> f64, fn(f64) -> f64) {
    match f {
        ScalarFunction::Identity => (|x| x, |_| 1.0),
        ScalarFunction::Square => (|x| x * x, |x| 2.0 * x),
        ScalarFunction::Cube => (|x| x * x * x, |x| 3.0 * x * x),
        ScalarFunction::CubePlusLinear => (|x| x * x * x + x, |x| 3.0 * x * x + 1.0),
        ScalarFunction::Arctan => (f64::atan, |x| 1.0 / (1.0 + x * x)),
        ScalarFunction::Sinh => (f64::sinh, f64::cosh),
    }
}

fn build_map(spec: &MapSpec) -> Result<Arc<dyn NonlinearMap>> {
    Ok(match spec {
        MapSpec::CubicExample => Arc::new(CubicExampleMap),
        MapSpec::ExampleResidual => Arc::new(OwnedResidual(example_problem())),
        MapSpec::Componentwise { function, dim } => {
            let (f, df) = scalar_pair(*function);
            Arc::new(FnMap::componentwise(*dim, f, df))
        }
        MapSpec::Linear { matrix: m } => Arc::new(FnMap::linear(matrix(m))),
        MapSpec::Residual { a, f } => Arc::new(OwnedResidual(AlgebraicProblem::new(matrix(a), build_map(f)?)?)),
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn failed_reports(reports: &[CertificateReport]) -> Vec<String> {
    reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{:?} failed with margin {:e}", r.condition_id, r.margin))
        .collect()
}

pub(crate) fn certify(p: &CertifyParams, seed: u64) -> Result<Finding> {
    let f = build_map(&p.map)?;
    let a = p.a.as_deref().map(matrix).unwrap_or_else(example_matrix);
    let problem = AlgebraicProblem::new(a, f)?;
    let settings = CertifySettings {
        box_half_width: p.box_half_width,
        grid: GridPlan { grid_per_axis: p.grid_per_axis, random: p.random_samples, seed },
        radii: p.radii.clone(),
        samples_per_radius: p.samples_per_radius,
        growth_radius: p.growth_radius,
        growth_samples: SamplingPlan::new(p.growth_samples, seed),
        power_coeff: p.power_coeff,
        power_exponent: p.power_exponent,
        linear_b: p.linear_b,
    };
    let reports = certify_problem(&problem, &settings)?;
    let diagnostics = failed_reports(&reports);
    Ok(Finding {
        checks_passed: diagnostics.is_empty(),
        result: json!({ "reports": reports }),
        diagnostics,
        csv: Vec::new(),
    })
}

pub(crate) fn solve(p: &SolveParams, seed: u64) -> Result<Finding> {
    let f = build_map(&p.map)?;
    let dim = f.dim();
    let target = DVector::from_vec(p.target.clone().unwrap_or_else(|| vec![0.0; dim]));
    let starts = match &p.starts {
        StartSpec::Points(pts) => Starts::Points(pts.clone()),
        StartSpec::Random { count, half_width } => Starts::Random {
            count: *count,
            lower: vec![-half_width; dim],
            upper: vec![*half_width; dim],
            seed,
        },
    };
    let cfg = SolveConfig {
        tol_residual: p.tol_residual,
        tol_gradient: p.tol_gradient,
        max_iters: p.max_iters,
        starts,
        ..SolveConfig::default()
    };
    let eta: Box<dyn NormalizationFunctional> = match p.eta {
        EtaSpec::Quadratic => Box::new(Quadratic),
        EtaSpec::Power { p } => Box::new(PowerNorm::new(p)?),
    };
    let mut diagnostics = Vec::new();
    if cfg.starts.points(dim)?.len() < 2 {
        let r = solver::solve(f.as_ref(), &target, eta.as_ref(), &cfg)?;
        if !r.converged {
            diagnostics.push(format!("numerical: solve stopped without converging ({:?})", r.termination));
        }
        let csv = vec![("trajectory.csv".to_string(), r.trajectory_csv())];
        return Ok(Finding { checks_passed: r.converged, result: json!({ "solve": r }), diagnostics, csv });
    }
    let rep = multistart_uniqueness(f.as_ref(), &target, eta.as_ref(), &cfg)?;
    if rep.converged_count == 0 {
        diagnostics.push("numerical: no start converged".to_string());
    } else if !rep.clustered_among_converged {
        diagnostics.push(format!(
            "uniqueness surrogate failed: converged roots spread {:e} > cluster radius {:e}",
            rep.max_pairwise_distance, rep.cluster_radius
        ));
    } else if !rep.nonconverged_starts.is_empty() {
        diagnostics.push(format!("numerical: starts {:?} did not converge", rep.nonconverged_starts));
    }
    let csv = vec![("trajectory.csv".to_string(), rep.results[0].trajectory_csv())];
    Ok(Finding { checks_passed: rep.clustered == Some(true), result: json!({ "uniqueness": rep }), diagnostics, csv })
}

fn read_two_columns(path: &Path, a: &str, b: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::invalid(format!("{}: missing column `{name}`", path.display())))
    };
    let (ia, ib) = (col(a)?, col(b)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        xs.push(parse(ia)?);
        ys.push(parse(ib)?);
    }
    Ok((xs, ys))
}

fn build_kernel(spec: &KernelSpec, p: f64) -> Result<Box<dyn Kernel>> {
    Ok(match spec {
        KernelSpec::LogPower { alpha } => Box::new(log_power_kernel(*alpha, p)?),
        KernelSpec::Zero { dim } => Box::new(ZeroKernel { dim: *dim }),
        KernelSpec::Linear { coeff, dim } => Box::new(LinearKernel { coeff: *coeff, dim: *dim }),
        KernelSpec::Quadratic => Box::new(QuadraticKernel),
        KernelSpec::Tabulated { s, g } => Box::new(ConvolutionKernel::new(s.clone(), g.clone())?),
        KernelSpec::TabulatedCsv { path } => {
            let (s, g) = read_two_columns(path, "s", "g")?;
            Box::new(ConvolutionKernel::new(s, g)?)
        }
    })
}

fn build_forcing(spec: &ForcingSpec) -> Result<Forcing> {
    match spec {
        ForcingSpec::Constant { value } => {
            if value.is_empty() {
                return Err(Error::invalid("constant forcing needs at least one component"));
            }
            Ok(Forcing::constant(value.clone()))
        }
        ForcingSpec::Polynomial { coeffs } => Ok(Forcing::polynomial(coeffs.clone())),
        ForcingSpec::Tabulated { t, y } => Forcing::tabulated(t.clone(), y.clone()),
        ForcingSpec::Csv { path } => {
            let (t, y) = read_two_columns(path, "t", "y")?;
            Forcing::tabulated(t, y)
        }
    }
}

fn volterra_csv(x: &GridFunction, residual: &[f64], variational: Option<&GridFunction>) -> String {
    let dim = x.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let names = |base: &str| -> Vec<String> {
        if dim == 1 {
            vec![base.to_string()]
        } else {
            (0..dim).map(|c| format!("{base}{c}")).collect()
        }
    };
    let mut header = vec!["t".to_string()];
    header.extend(names("x"));
    header.extend(names("residual"));
    if variational.is_some() {
        header.extend(names("x_variational"));
    }
    w.write_record(&header).expect("in-memory write");
    for i in 0..=x.n_cells() {
        let mut row = vec![format!("{:e}", x.t(i))];
        row.extend(x.node(i).iter().map(|v| format!("{v:e}")));
        row.extend(residual[i * dim..(i + 1) * dim].iter().map(|v| format!("{v:e}")));
        if let Some(xv) = variational {
            row.extend(xv.node(i).iter().map(|v| format!("{v:e}")));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub(crate) fn volterra(p: &VolterraParams) -> Result<Finding> {
    let kernel = build_kernel(&p.kernel, p.p)?;
    let kernel = kernel.as_ref();
    let y = build_forcing(&p.forcing)?;
    if y.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: y.dim() });
    }
    let params = match p.k {
        KChoice::Auto => BieleckiParams::auto(kernel, p.p)?,
        KChoice::Fixed(k) => BieleckiParams::new(p.p, k)?,
    };
    let mut diagnostics = Vec::new();
    let mut passed = true;

    let constants = kernel_constants(kernel, p.p, p.n_cells.max(512))?;
    let hypotheses = check_hypotheses(kernel, p.hypotheses)?;
    let failed = failed_reports(&hypotheses);
    passed &= failed.is_empty();
    diagnostics.extend(failed);
    let coercivity_factor = params.coercivity_factor(kernel.a_bar(p.p));
    if coercivity_factor <= 0.0 {
        passed = false;
        diagnostics.push(format!("k = {} leaves coercivity factor {coercivity_factor:e} <= 0", params.k()));
    }

    let x = solve_forward(kernel, &y, p.n_cells)?;
    let residual = nodal_residual(&x, &y, kernel)?;

    let convergence = if p.convergence {
        let x2 = solve_forward(kernel, &y, 2 * p.n_cells)?;
        let x4 = solve_forward(kernel, &y, 4 * p.n_cells)?;
        let e1 = x2.restrict(2)?.sup_distance(&x);
        let e2 = x4.restrict(2)?.sup_distance(&x2);
        Some(json!({
            "cells": [p.n_cells, 2 * p.n_cells, 4 * p.n_cells],
            "successive_differences": [e1, e2],
            "observed_order": (e1 / e2).log2(),
        }))
    } else {
        None
    };

    let variational = if p.variational {
        let cfg = SolveConfig { tol_residual: p.tol_residual, max_iters: p.max_iters, ..SolveConfig::default() };
        let start = GridFunction::zeros(p.n_cells, kernel.dim())?;
        let sol = solve_variational_from(kernel, &y, &params, &cfg, &start)?;
        let distance = sol.x.sup_distance(&x);
        if !sol.result.converged {
            diagnostics.push(format!("numerical: variational solve stopped with {:?}", sol.result.termination));
        } else if distance > p.agreement_tolerance {
            passed = false;
            diagnostics.push(format!(
                "marching and variational solutions differ by {distance:e} > {:e}",
                p.agreement_tolerance
            ));
        }
        Some(sol)
    } else {
        None
    };

    let derivative = match &p.derivative {
        Some(d) => {
            let dy = build_forcing(&d.direction)?;
            let rep = solution_operator_derivative(kernel, &y, &dy, &d.eps, p.n_cells)?;
            if !rep.consistent {
                passed = false;
                diagnostics.push(format!("difference-quotient ratios {:?} leave the consistency band", rep.ratios));
            }
            Some(json!({
                "eps": rep.eps,
                "sup_norms": rep.sup_norms,
                "ratios": rep.ratios,
                "successive_differences": rep.successive_differences,
                "consistent": rep.consistent,
            }))
        }
        None => None,
    };

    let csv = vec![("volterra.csv".to_string(), volterra_csv(&x, &residual, variational.as_ref().map(|s| &s.x)))];
    let result = json!({
        "kernel": kernel.name(),
        "k": params.k(),
        "p": params.p(),
        "a_bar": kernel.a_bar(p.p),
        "coercivity_factor": coercivity_factor,
        "constants": constants,
        "hypotheses": hypotheses,
        "forward": {
            "x_at_1": x.node(p.n_cells),
            "max_abs_nodal_residual": residual.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        },
        "convergence": convergence,
        "variational": variational.as_ref().map(|s| json!({
            "converged": s.result.converged,
            "termination": s.result.termination,
            "iterations": s.result.iterations,
            "phi": s.phi,
            "residual_weighted_norm": s.residual_weighted_norm,
            "residual_norm": s.result.residual_norm,
            "sup_distance_to_marching": s.x.sup_distance(&x),
        })),
        "derivative": derivative,
    });
    Ok(Finding { result, diagnostics, checks_passed: passed, csv })
}

pub(crate) fn bielecki_check(p: &BieleckiCheckParams, seed: u64) -> Result<Finding> {
    let s = inequality_suite(p.functions, &p.exponents, &p.rates, p.n_cells, seed)?;
    let diagnostics = s
        .violations
        .iter()
        .map(|v| format!("{} violated for function {} (p={}, k={}): slack {:e}", v.inequality, v.function, v.p, v.k, v.slack))
        .collect();
    Ok(Finding { checks_passed: s.passed, result: to_value(&s), diagnostics, csv: Vec::new() })
}

pub(crate) fn example(seed: u64) -> Result<Finding> {
    let problem = example_problem();
    let mut settings = CertifySettings::default();
    settings.grid.seed = seed;
    settings.growth_samples.seed = seed;
    let reports = certify_problem(&problem, &settings)?;
    let mut diagnostics = failed_reports(&reports);

    let mut cfg = example_solve_config();
    if let Starts::Random { seed: s, .. } = &mut cfg.starts {
        *s = seed;
    }
    let rep = multistart_uniqueness(&problem.residual_map(), &DVector::zeros(2), &Quadratic, &cfg)?;
    let oracle_error = rep
        .mean_root
        .iter()
        .zip(EXAMPLE_ROOT)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let max_residual = rep.results.iter().map(|r| r.residual_norm).fold(0.0, f64::max);
    if rep.clustered != Some(true) {
        diagnostics.push("multistart roots do not form a single cluster".to_string());
    }
    if !(oracle_error <= 1e-6) {
        diagnostics.push(format!("root differs from the bisection oracle by {oracle_error:e}"));
    }
    if !(max_residual <= 1e-10) {
        diagnostics.push(format!("largest residual {max_residual:e} exceeds 1e-10"));
    }
    let jac = reports.iter().find(|r| r.condition_id == ConditionId::JacobianNonsingular);
    let bounds: Vec<Value> = settings
        .radii
        .iter()
        .map(|&r| json!({ "radius": r, "analytic_lower_bound": example_coercivity_bound(r) }))
        .collect();
    Ok(Finding {
        checks_passed: diagnostics.is_empty(),
        result: json!({
            "reports": reports,
            "jacobian_min_abs_det": jac.map(|r| r.margin),
            "jacobian_min_abs_det_analytic": 8.0,
            "coercivity_bounds": bounds,
            "mean_root": rep.mean_root,
            "oracle_root": EXAMPLE_ROOT,
            "oracle_error": oracle_error,
            "max_residual": max_residual,
            "converged_count": rep.converged_count,
            "max_pairwise_distance": rep.max_pairwise_distance,
            "clustered": rep.clustered,
        }),
        diagnostics,
        csv: vec![("trajectory.csv".to_string(), rep.results[0].trajectory_csv())],
    })
}
