//! Composite trapezoidal rules on the uniform grid `tᵢ = i/n` of `[0, 1]`.

/// Trapezoid weights for `n_cells + 1` nodes of spacing `h`.
pub fn trapezoid_weights(n_nodes: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n_nodes];
    if let Some(first) = w.first_mut() {
        *first = 0.5 * h;
    }
    if n_nodes > 1 {
        w[n_nodes - 1] = 0.5 * h;
    }
    if n_nodes == 1 {
        w[0] = 0.0;
    }
    w
}

/// `∫` of nodal samples with spacing `h`.
pub fn trapezoid(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = samples[1..n - 1].iter().sum();
            h * (0.5 * (samples[0] + samples[n - 1]) + interior)
        }
    }
}

/// Running integral `∫₀^{tᵢ}` of nodal samples; first entry is zero.
pub fn cumulative_trapezoid(samples: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * h * (samples[i - 1] + s);
        }
        out.push(acc);
    }
    out
}

/// Nodes `i/n_cells` for `i = 0..=n_cells`.
pub fn nodes(n_cells: usize) -> Vec<f64> {
    (0..=n_cells).map(|i| i as f64 / n_cells as f64).collect()
}

/// Cell midpoints `(i + ½)/n_cells`.
pub fn midpoints(n_cells: usize) -> Vec<f64> {
    (0..n_cells).map(|i| (i as f64 + 0.5) / n_cells as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_linear_integrands() {
        let n = 10;
        let t = nodes(n);
        let s: Vec<f64> = t.iter().map(|t| 3.0 * t + 1.0).collect();
        assert!((trapezoid(&s, 0.1) - 2.5).abs() < 1e-14);
        let c = cumulative_trapezoid(&s, 0.1);
        for (ti, ci) in t.iter().zip(&c) {
            assert!((ci - (1.5 * ti * ti + ti)).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_sum_to_length() {
        let w = trapezoid_weights(101, 0.01);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
