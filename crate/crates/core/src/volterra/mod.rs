//! The initial-value problem
//!
//! ```text
//! x′(t) + ∫₀ᵗ Φ(t, τ, x(τ)) dτ = y(t),   x(0) = 0,   t ∈ [0, 1]
//! ```
//!
//! solved two independent ways: trapezoidal time marching ([`solve_forward`])
//! and minimization of the Bielecki-weighted functional
//! `φ(x) = (1/p)∫₀¹ e^{−kt}|x′ − y + ∫₀ᵗΦ|ᵖ dt` ([`solve_variational`]).

mod derivative;
mod forcing;
mod forward;
mod kernel;
mod variational;

pub use derivative::{solution_operator_derivative, DerivativeReport, RICHARDSON_BAND};
pub use forcing::Forcing;
pub use forward::{convergence_orders, memory_at_midpoint, nodal_residual, residual, solve_forward, MIN_FORWARD_CELLS};
pub use kernel::{
    check_hypotheses, kernel_constants, log_power_kernel, ConvolutionKernel, Kernel, KernelConstants, KernelSampling,
    LinearKernel, LogPowerKernel, QuadraticKernel, ZeroKernel,
};
pub use variational::{
    solve_variational, solve_variational_from, variational_functional, VariationalMap, VariationalSolution,
};
