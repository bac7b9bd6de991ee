//! Time marching and discrete residuals.

use crate::error::{Error, Result};
use crate::grid::GridFunction;

use super::forcing::Forcing;
use super::kernel::Kernel;

pub const MIN_FORWARD_CELLS: usize = 8;

fn check_dims(kernel: &dyn Kernel, y: &Forcing) -> Result<()> {
    if kernel.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: y.dim() });
    }
    Ok(())
}

/// Trapezoidal product integration with one predictor–corrector pass per
/// step. Returns the nodal solution and nodal derivative samples `x′(tᵢ)`.
pub(crate) fn march(kernel: &dyn Kernel, y: &Forcing, n_cells: usize) -> Result<(GridFunction, Vec<f64>)> {
    check_dims(kernel, y)?;
    if n_cells < MIN_FORWARD_CELLS {
        return Err(Error::GridTooCoarse { n_cells, min: MIN_FORWARD_CELLS });
    }
    let dim = kernel.dim();
    let h = 1.0 / n_cells as f64;
    let mut x = vec![0.0; (n_cells + 1) * dim];
    let mut xp = vec![0.0; (n_cells + 1) * dim];
    y.eval_into(0.0, &mut xp[..dim]);

    let mut partial = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut y1 = vec![0.0; dim];
    let mut pred = vec![0.0; dim];
    let mut xp_pred = vec![0.0; dim];
    for i in 0..n_cells {
        let t1 = (i + 1) as f64 * h;
        // ∫₀^{t_{i+1}} without the (unknown) endpoint contribution
        partial.fill(0.0);
        for j in 0..=i {
            let w = if j == 0 { 0.5 * h } else { h };
            kernel.phi(t1, j as f64 * h, &x[j * dim..(j + 1) * dim], &mut buf);
            for c in 0..dim {
                partial[c] += w * buf[c];
            }
        }
        y.eval_into(t1, &mut y1);
        let (head, tail) = x.split_at_mut((i + 1) * dim);
        let xi = &head[i * dim..];
        let xpi = xp[i * dim..(i + 1) * dim].to_vec();
        for c in 0..dim {
            pred[c] = xi[c] + h * xpi[c];
        }
        kernel.phi(t1, t1, &pred, &mut buf);
        for c in 0..dim {
            xp_pred[c] = y1[c] - partial[c] - 0.5 * h * buf[c];
        }
        let x1 = &mut tail[..dim];
        for c in 0..dim {
            x1[c] = xi[c] + 0.5 * h * (xpi[c] + xp_pred[c]);
        }
        kernel.phi(t1, t1, x1, &mut buf);
        for c in 0..dim {
            xp[(i + 1) * dim + c] = y1[c] - partial[c] - 0.5 * h * buf[c];
        }
        if x1.iter().chain(&xp[(i + 1) * dim..(i + 2) * dim]).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: i + 1 });
        }
    }
    Ok((GridFunction::from_values(n_cells, dim, x)?, xp))
}

/// Solves `x′ + ∫₀ᵗΦ(t, τ, x(τ))dτ = y`, `x(0) = 0`, by time marching.
pub fn solve_forward(kernel: &dyn Kernel, y: &Forcing, n_cells: usize) -> Result<GridFunction> {
    march(kernel, y, n_cells).map(|(x, _)| x)
}

/// `∫₀^{m_j} Φ(m_j, τ, x(τ)) dτ` at the midpoint `m_j` of cell `j`: trapezoid
/// over nodes `0..=j`, then one half-cell trapezoid to `m_j` using the
/// midpoint value `(x_j + x_{j+1})/2`.
pub fn memory_at_midpoint(kernel: &dyn Kernel, x: &GridFunction, j: usize, out: &mut [f64]) {
    let dim = x.dim();
    let h = x.h();
    let m = (j as f64 + 0.5) * h;
    let mut buf = vec![0.0; dim];
    out.fill(0.0);
    if j > 0 {
        for i in 0..=j {
            let w = if i == 0 || i == j { 0.5 * h } else { h };
            kernel.phi(m, i as f64 * h, x.node(i), &mut buf);
            for c in 0..dim {
                out[c] += w * buf[c];
            }
        }
    }
    kernel.phi(m, j as f64 * h, x.node(j), &mut buf);
    for c in 0..dim {
        out[c] += 0.25 * h * buf[c];
    }
    let mid: Vec<f64> = x.node(j).iter().zip(x.node(j + 1)).map(|(a, b)| 0.5 * (a + b)).collect();
    kernel.phi(m, m, &mid, &mut buf);
    for c in 0..dim {
        out[c] += 0.25 * h * buf[c];
    }
}

/// Cell residuals `x′_j + ∫₀^{m_j}Φ − y(m_j)` at the cell midpoints
/// (cell-major, `n_cells·dim` values). Second-order consistent.
pub fn residual(x: &GridFunction, y: &Forcing, kernel: &dyn Kernel) -> Result<Vec<f64>> {
    check_dims(kernel, y)?;
    if x.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: x.dim() });
    }
    let dim = x.dim();
    let h = x.h();
    let d = x.derivatives();
    let mut r = vec![0.0; x.n_cells() * dim];
    let mut q = vec![0.0; dim];
    let mut yv = vec![0.0; dim];
    for j in 0..x.n_cells() {
        memory_at_midpoint(kernel, x, j, &mut q);
        y.eval_into((j as f64 + 0.5) * h, &mut yv);
        for c in 0..dim {
            r[j * dim + c] = d[j * dim + c] + q[c] - yv[c];
        }
    }
    Ok(r)
}

/// Residual at the nodes, with second-order nodal derivatives (central in
/// the interior, one-sided at the ends) and nodal trapezoidal memory terms.
pub fn nodal_residual(x: &GridFunction, y: &Forcing, kernel: &dyn Kernel) -> Result<Vec<f64>> {
    check_dims(kernel, y)?;
    let n = x.n_cells();
    if n < 2 {
        return Err(Error::GridTooCoarse { n_cells: n, min: 2 });
    }
    let dim = x.dim();
    let h = x.h();
    let mut r = vec![0.0; (n + 1) * dim];
    let mut buf = vec![0.0; dim];
    let mut yv = vec![0.0; dim];
    for i in 0..=n {
        let t = i as f64 * h;
        y.eval_into(t, &mut yv);
        let mut q = vec![0.0; dim];
        if i > 0 {
            for j in 0..=i {
                let w = if j == 0 || j == i { 0.5 * h } else { h };
                kernel.phi(t, j as f64 * h, x.node(j), &mut buf);
                for c in 0..dim {
                    q[c] += w * buf[c];
                }
            }
        }
        for c in 0..dim {
            let v = |k: usize| x.node(k)[c];
            let deriv = if i == 0 {
                (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
            } else if i == n {
                (3.0 * v(n) - 4.0 * v(n - 1) + v(n - 2)) / (2.0 * h)
            } else {
                (v(i + 1) - v(i - 1)) / (2.0 * h)
            };
            r[i * dim + c] = deriv + q[c] - yv[c];
        }
    }
    Ok(r)
}

/// Empirical orders `log₂(e_k/e_{k+1})` of successive sup-norm errors against
/// `exact`, for grids that double in size.
pub fn convergence_orders(
    kernel: &dyn Kernel,
    y: &Forcing,
    cells: &[usize],
    exact: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut errors = Vec::with_capacity(cells.len());
    for &n in cells {
        let x = solve_forward(kernel, y, n)?;
        let e = (0..=n)
            .map(|i| (x.node(i)[0] - exact(x.t(i))).abs())
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let orders = errors
        .windows(2)
        .zip(cells.windows(2))
        .map(|(e, n)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect();
    Ok((errors, orders))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volterra::kernel::{LinearKernel, ZeroKernel};

    #[test]
    fn zero_kernel_integrates_forcing() {
        let x = solve_forward(&ZeroKernel { dim: 1 }, &Forcing::constant(vec![1.0]), 16).unwrap();
        for i in 0..=16 {
            assert!((x.node(i)[0] - x.t(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_kernel_gives_sine() {
        let k = LinearKernel { coeff: 1.0, dim: 1 };
        let x = solve_forward(&k, &Forcing::constant(vec![1.0]), 1000).unwrap();
        for i in 0..=1000 {
            assert!((x.node(i)[0] - x.t(i).sin()).abs() < 5e-4);
        }
        let z = solve_forward(&k, &Forcing::zero(1), 64).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn too_coarse_and_mismatch() {
        let k = ZeroKernel { dim: 1 };
        assert!(matches!(
            solve_forward(&k, &Forcing::zero(1), 4),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(solve_forward(&k, &Forcing::zero(2), 16).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let k = LinearKernel { coeff: -1e200, dim: 1 };
        match solve_forward(&k, &Forcing::constant(vec![1e200]), 16) {
            Err(Error::Divergence { step }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn residual_examples() {
        let zero = ZeroKernel { dim: 1 };
        let x = GridFunction::from_fn(32, |t| t).unwrap();
        let r = residual(&x, &Forcing::constant(vec![1.0]), &zero).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-13));

        let lin = LinearKernel { coeff: 1.0, dim: 1 };
        let z = GridFunction::zeros(32, 1).unwrap();
        assert!(residual(&z, &Forcing::zero(1), &lin).unwrap().iter().all(|v| *v == 0.0));

        // x = sin t: x′ + ∫₀ᵗ sin = cos t + 1 − cos t = 1
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128] {
            let x = GridFunction::from_fn(n, f64::sin).unwrap();
            let r = residual(&x, &Forcing::zero(1), &lin).unwrap();
            let err = r.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            assert!(err < 0.1 / (n * n) as f64, "n={n} err={err}");
            assert!(err < prev);
            prev = err;
            let rn = nodal_residual(&x, &Forcing::zero(1), &lin).unwrap();
            let errn = rn.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            assert!(errn < 1.0 / (n * n) as f64, "nodal n={n} err={errn}");
        }
    }
}
