//! Location of the optimal waiting barrier `r*` in the high-volatility
//! regime `δ² > 2a`, plus the smooth-fit constant that glues the two
//! value-function pieces together.
//!
//! `r*` is the unique root of `h(r) + 1 = 0` on `(0, R]`, where
//! `h = φ₁'/φ₁` and `R = b/(δ²/2 − a)`: there the return probability and
//! its slope balance, `φ₁(r*) = -φ₁'(r*) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{h_ratio, Functionals};
use crate::params::CirParams;
use crate::quad::brent;

/// Root of `h(r) + 1` together with solver diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BarrierRoot {
    /// The optimal barrier, in `(0, R]`.
    pub rstar: f64,
    /// Bracket the root was isolated in.
    pub bracket: (f64, f64),
    /// Brent iterations spent.
    pub iterations: u32,
    /// `|h(r*) + 1|` at the returned point.
    pub residual: f64,
}

/// Barrier plus the smooth-fit constant `F̃` for a given income rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BarrierSolution {
    pub rstar: f64,
    /// `F̃ = μ φ₂'(r*) e^{-r*} − μ ψ₁'(r*) ≥ 0`, the value of all future
    /// spending when starting exactly at the barrier with nothing in hand.
    pub tilde_f: f64,
    pub bracket: (f64, f64),
    pub iterations: u32,
    pub residual: f64,
}

const X_TOL: f64 = 1e-12;
const MAX_ITER: u32 = 200;

/// Solve `h(r*) = -1` by bracketed Brent iteration.
///
/// Fails with a regime error when `δ² ≤ 2a` (the barrier sits at infinity
/// and the max-spend value function applies), and with a numerical error if
/// the bracket cannot be established — never silently clamped.
pub fn solve_rstar(params: &CirParams) -> Result<BarrierRoot> {
    let r_cap = params.barrier_cap().map_err(|_| {
        Error::Regime(format!(
            "no finite waiting barrier: delta^2 = {} <= 2a = {}; spending everything \
             immediately is optimal and the max-spend value function applies",
            params.delta_sq(),
            2.0 * params.a
        ))
    })?;

    let f = |r: f64| h_ratio(params, r).map(|h| h + 1.0).unwrap_or(f64::NAN);

    // h(0+) = -infinity analytically; verify on the actual machine and
    // shrink the left endpoint a few times rather than trust the formula.
    let mut lo = (1e-8_f64).min(r_cap / 1e6);
    let mut f_lo = f(lo);
    let mut shrinks = 0;
    while !(f_lo < 0.0) && shrinks < 5 {
        lo *= 0.1;
        f_lo = f(lo);
        shrinks += 1;
    }
    if !(f_lo < 0.0) {
        return Err(Error::Numerical(format!(
            "could not establish h + 1 < 0 near zero (h({lo}) + 1 = {f_lo}); \
             bracket for the barrier root not found"
        )));
    }
    let f_hi = f(r_cap);
    if !(f_hi >= 0.0) {
        return Err(Error::Numerical(format!(
            "h + 1 is negative at the cap R = {r_cap} (value {f_hi}); \
             bracket for the barrier root not found"
        )));
    }

    let root = brent(f, lo, r_cap, X_TOL, MAX_ITER)?;
    let residual = (h_ratio(params, root.root)? + 1.0).abs();
    Ok(BarrierRoot {
        rstar: root.root,
        bracket: (lo, r_cap),
        iterations: root.iterations,
        residual,
    })
}

/// Smooth-fit constant `F̃ = μ(φ₂'(r*) e^{-r*} − ψ₁'(r*))`.
///
/// `functionals` must have been built at the solved barrier.
pub fn smooth_fit_constant(functionals: &Functionals, mu: f64) -> Result<f64> {
    if mu < 0.0 {
        return Err(Error::Domain(format!("income rate must be >= 0, got {mu}")));
    }
    let rstar = functionals.rstar();
    if rstar <= 0.0 {
        return Err(Error::Domain(
            "smooth fit needs a positive barrier; the zero barrier is never optimal".into(),
        ));
    }
    let phi2_slope = functionals.phi2_prime(rstar)?;
    let psi1_slope = functionals.psi1_prime(rstar)?;
    Ok(mu * (phi2_slope * (-rstar).exp() - psi1_slope))
}

/// Convenience: solve the barrier and assemble the full solution for a
/// given income rate.
pub fn solve(params: &CirParams, mu: f64) -> Result<(BarrierSolution, Functionals)> {
    let root = solve_rstar(params)?;
    let functionals = Functionals::new(params, root.rstar)?;
    let tilde_f = smooth_fit_constant(&functionals, mu)?;
    Ok((
        BarrierSolution {
            rstar: root.rstar,
            tilde_f,
            bracket: root.bracket,
            iterations: root.iterations,
            residual: root.residual,
        },
        functionals,
    ))
}
