//! Optimal consumption and dividend strategies when cash flows are
//! discounted by an exponential Cox–Ingersoll–Ross process.
//!
//! The discounting state `r` follows the square-root diffusion
//!
//! ```text
//! dr_t = (a r_t + b) dt + δ √r_t dW_t ,     a, b, δ > 0,
//! ```
//!
//! so `e^{-r_t}` is the (stochastic) discount factor and `r_t → ∞` almost
//! surely.  The crate computes the closed-form value functions and optimal
//! barrier policies for two payout models and cross-checks every analytic
//! object by independent Monte-Carlo simulation:
//!
//! * a deterministic income stream `x + μt`, where the optimal policy is a
//!   barrier rule on the discounting state (`spend` when `r ≤ r*`, `wait`
//!   otherwise), degenerating to "always spend" in the low-volatility
//!   regime `δ² ≤ 2a`;
//! * a Brownian surplus with ruin (`δ² = 2a`), where the optimal policy is
//!   a constant dividend barrier on the surplus.
//!
//! Module map:
//!
//! * [`params`] — process parameters and regime classification
//! * [`cir`] — Laplace functional, transition density, exact transition
//!   sampling, Euler path simulation
//! * [`special`] — incomplete gamma and log-space Bessel machinery
//! * [`quad`] — adaptive Gauss–Kronrod, Chebyshev series, Brent solver
//! * [`integrals`] — the hitting/occupation functionals ψ₁, φ₁, φ₂
//! * [`barrier`] — optimal waiting barrier `r*` and the smooth-fit constant
//! * [`value`] — value-function assembly and pointwise HJB verification
//! * [`mc`] — Monte-Carlo strategy valuation (the verification arm)
//! * [`brownian`] — the Brownian risk model with `δ² = 2a`

pub mod barrier;
pub mod brownian;
pub mod cir;
pub mod error;
pub mod integrals;
pub mod mc;
pub mod params;
pub mod quad;
pub mod rng;
pub mod special;
pub mod value;

pub use barrier::{solve_rstar, BarrierRoot, BarrierSolution};
pub use brownian::{barrier_varrho, BrownianModel, HjbBrownianReport};
pub use integrals::{h_ratio, weight_integral, Functionals};
pub use cir::{laplace_m, sample_transition, simulate_path, transition_density, CirPath};
pub use mc::{
    estimate_value, hitting_stats, last_exit_expectation, last_exit_mc, two_sample_ks,
    McConfig, McEstimate, Strategy,
};
pub use value::{h_performance, value_h, zero_barrier_value, Branch, HjbReport, ValueFunction, ZeroBarrierValue};
pub use error::{Error, Result};
pub use params::{CirParams, Regime};
