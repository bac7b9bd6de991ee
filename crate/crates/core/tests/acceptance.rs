//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use globinv::algebraic::{example_matrix, solve_example, CubicExampleMap};
use globinv::bielecki::{inequality_suite, BieleckiParams};
use globinv::eta::{eta_pnorm, eta_quadratic, sobolev_energy};
use globinv::hypothesis::{check_jacobian_nonsingular, coercivity_witness, ConditionId, GridPlan};
use globinv::sampling::BoxDomain;
use globinv::volterra::{
    check_hypotheses, convergence_orders, kernel_constants, log_power_kernel, solution_operator_derivative,
    solve_forward, solve_variational, variational_functional, Forcing, KernelSampling, LinearKernel, QuadraticKernel,
    ZeroKernel,
};
use globinv::{FnMap, GridFunction};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

/// Real root of a strictly increasing cubic by bisection on [-10, 10].
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn example_reproduction() -> Verdict {
    let rep = solve_example().expect("example solve");
    let oracle = [bisect(|x| x * x * x + 2.0 * x + 1.0), bisect(|y| y * y * y + 4.0 * y + 1.0)];
    let all_converged = rep.converged_count == 64 && rep.results.len() == 64;
    let worst_residual = rep.results.iter().map(|r| r.residual_norm).fold(0.0, f64::max);
    let oracle_err = rep.mean_root.iter().zip(oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(
        all_converged && rep.max_pairwise_distance <= 1e-8 && oracle_err <= 1e-6 && worst_residual <= 1e-10,
        format!(
            "converged {}/64, pairwise {:.2e}, oracle error {:.2e}, max residual {:.2e}",
            rep.converged_count, rep.max_pairwise_distance, oracle_err, worst_residual
        ),
    )
}

fn jacobian_certificate() -> Verdict {
    let dom = BoxDomain::cube(2, 10.0).unwrap();
    let plan = GridPlan { grid_per_axis: 101, random: 10_000, seed: 47 };
    let rep = check_jacobian_nonsingular(&CubicExampleMap, &example_matrix(), &dom, plan).unwrap();
    let expected = 12.0;
    verdict(
        (rep.margin - expected).abs() <= 1e-9,
        format!("min |det(A - F')| = {} (expected {expected}); witness {:?}", rep.margin, rep.witnesses[0].point),
    )
}

fn bielecki_suite() -> Verdict {
    let s = inequality_suite(100, &[2.0, 3.0], &[0.5, 1.0, 5.0], 512, 2024).unwrap();
    verdict(
        s.passed,
        format!(
            "{} checks, {} violations; min margins eq {:.2e}, poincare {:.2e}, integral {:.2e}",
            s.checks,
            s.violations.len(),
            s.min_equivalence_margin,
            s.min_poincare_margin,
            s.min_integral_margin
        ),
    )
}

fn kernel_constants_check() -> Verdict {
    let k = log_power_kernel(1.0, 2.0).unwrap();
    let c = kernel_constants(&k, 2.0, 2000).unwrap();
    // α^p·4/((5p+2)(5p+4)) at α=1 against the exact ∬ a² = 1/42, in integers
    let p_int: i64 = 2;
    let closed_form_exact = 4 * 42 == (5 * p_int + 2) * (5 * p_int + 4);
    let a_err = (c.a_lp_norm_p - 1.0 / 42.0).abs();
    let c_bound = 2f64.powf(1.0 - 2.0) / (5.0 * 2.0 + 2.0);
    verdict(
        a_err <= 1e-6 && closed_form_exact && c.c_row_sup_q <= c_bound + 1e-6,
        format!(
            "double integral {:.9} (error {:.1e}), closed form exact: {closed_form_exact}, sup int c^q {:.6} <= {:.6}",
            c.a_lp_norm_p, a_err, c.c_row_sup_q, c_bound
        ),
    )
}

fn volterra_convergence() -> Verdict {
    let k = LinearKernel { coeff: 1.0, dim: 1 };
    let (errors, orders) = convergence_orders(&k, &Forcing::constant(vec![1.0]), &[64, 128, 256, 512], &f64::sin).unwrap();
    let ok = orders.iter().all(|o| *o >= 1.8) && errors[3] <= 2e-5;
    verdict(ok, format!("errors {:?}, orders {orders:.3?}", errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()))
}

fn cross_solver() -> Verdict {
    let k = log_power_kernel(1.0, 2.0).unwrap();
    let y = Forcing::constant(vec![1.0]);
    let params = BieleckiParams::auto(&k, 2.0).unwrap();
    let fwd = solve_forward(&k, &y, 256).unwrap();
    let var = solve_variational(&k, &y, &params, 256, &Default::default()).unwrap();
    let d = var.x.sup_distance(&fwd);
    verdict(
        var.result.converged && d <= 1e-3,
        format!("k = {}, variational converged: {}, sup distance {d:.2e}", params.k(), var.result.converged),
    )
}

fn differentiability() -> Verdict {
    let eps = [1e-2, 1e-3, 1e-4];
    let k = log_power_kernel(1.0, 2.0).unwrap();
    let rep = solution_operator_derivative(&k, &Forcing::constant(vec![1.0]), &Forcing::scalar(|t| t), &eps, 256).unwrap();
    let in_band = rep.ratios.iter().all(|r| (0.9..=1.1).contains(r));
    // zero kernel: the derivative is t ↦ ∫₀ᵗ dy; dy = 1 + t integrates exactly under the trapezoid rule
    let zero = solution_operator_derivative(
        &ZeroKernel { dim: 1 },
        &Forcing::scalar(|t| (3.0 * t).cos()),
        &Forcing::polynomial(vec![1.0, 1.0]),
        &eps,
        256,
    )
    .unwrap();
    let zero_err = zero
        .estimates
        .iter()
        .flat_map(|d| (0..=256).map(move |i| (d.node(i)[0] - (d.t(i) + 0.5 * d.t(i) * d.t(i))).abs()))
        .fold(0.0, f64::max);
    verdict(
        in_band && zero_err <= 1e-10,
        format!("log-power ratios {:.6?}, zero-kernel max error {zero_err:.1e}", rep.ratios),
    )
}

/// Worst `‖g_fd − g‖∞ / max(‖g‖∞, 1e-8)` over central differences.
fn fd_relative_error(f: impl Fn(&[f64]) -> f64, x: &[f64], g: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        worst = worst.max(((fp - fm) / (2.0 * h) - g[i]).abs() / gmax);
    }
    worst
}

fn gradient_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = [0.0f64; 4];
    for _ in 0..50 {
        let dim = rng.gen_range(2..12);
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (_, g) = eta_quadratic(&DVector::from_vec(v.clone())).unwrap();
        worst[0] = worst[0].max(fd_relative_error(
            |z| eta_quadratic(&DVector::from_column_slice(z)).unwrap().0,
            &v,
            g.as_slice(),
        ));

        let p = rng.gen_range(2.0..5.0);
        let (_, g) = eta_pnorm(&v, p).unwrap();
        worst[1] = worst[1].max(fd_relative_error(|z| eta_pnorm(z, p).unwrap().0, &v, &g));

        let n = rng.gen_range(4..40);
        let free: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = GridFunction::from_free(n, 1, &free).unwrap();
        let (_, g) = sobolev_energy(&x, p).unwrap();
        worst[2] = worst[2].max(fd_relative_error(
            |z| sobolev_energy(&GridFunction::from_free(n, 1, z).unwrap(), p).unwrap().0,
            &free,
            &g,
        ));

        let kernel = log_power_kernel(rng.gen_range(0.5..2.0), p).unwrap();
        let params = BieleckiParams::new(p, rng.gen_range(0.0..5.0)).unwrap();
        let y = Forcing::polynomial(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let (_, g) = variational_functional(&x, &y, &kernel, &params).unwrap();
        worst[3] = worst[3].max(fd_relative_error(
            |z| variational_functional(&GridFunction::from_free(n, 1, z).unwrap(), &y, &kernel, &params).unwrap().0,
            &free,
            &g,
        ));
    }
    verdict(
        worst.iter().all(|w| *w <= 1e-5),
        format!(
            "worst relative errors: quadratic {:.1e}, p-norm {:.1e}, Sobolev energy {:.1e}, discretized functional {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn negative_controls() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("square.json");
    std::fs::write(
        &cfg,
        r#"{"parameters": {"map": {"kind": "componentwise", "function": "square"}, "target": [1.0],
            "starts": {"points": [[2.0], [-2.0]]}}}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_globinv"))
        .args(["solve", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    let square_exit = out.status.code();

    let arctan = FnMap::componentwise(2, f64::atan, |x| 1.0 / (1.0 + x * x));
    let table = coercivity_witness(&arctan, &[5.0, 10.0, 20.0, 40.0], 256, 47).unwrap();

    let reports = check_hypotheses(&QuadraticKernel, KernelSampling::default()).unwrap();
    let growth = reports.iter().find(|r| r.condition_id == ConditionId::KernelLinearGrowth).unwrap();

    verdict(
        square_exit == Some(1) && !table.coercive && !growth.passed,
        format!(
            "x^2 solve exit {square_exit:?} (want 1), arctan coercive {} (want false), x^2 kernel linear growth passed {} (want false)",
            table.coercive, growth.passed
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict, Duration); 9] = [
        ("example reproduction", example_reproduction, Duration::from_secs(1)),
        ("Jacobian certificate", jacobian_certificate, Duration::from_secs(1)),
        ("Bielecki inequality suite", bielecki_suite, Duration::from_secs(5)),
        ("kernel constants", kernel_constants_check, Duration::from_secs(1)),
        ("Volterra convergence", volterra_convergence, Duration::from_secs(2)),
        ("cross-solver equivalence", cross_solver, Duration::from_secs(30)),
        ("solution-operator differentiability", differentiability, Duration::from_secs(5)),
        ("gradient fidelity", gradient_fidelity, Duration::from_secs(5)),
        ("negative controls", negative_controls, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let ok = v.passed && in_time;
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s of {}s budget{}]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
