//! Value functions of the deterministic-income model and pointwise
//! verification of the variational inequality
//!
//! ```text
//! max{ μV_x + (ar+b)V_r + (δ²r/2)V_rr ,  e^{-r} − V_x } = 0 .
//! ```
//!
//! Low volatility (`δ² ≤ 2a`): `H(r,x) = x e^{-r} + μ∫₀^∞ M(r,s) ds` and
//! maximal spending is optimal.  High volatility: the value is `F` below
//! the barrier and `G` above it,
//!
//! ```text
//! F(r,x) = x e^{-r} + μ ψ₁(r) + F̃
//! G(r,x) = x φ₁(r) e^{-r*} + μ φ₂(r) e^{-r*} + F̃ φ₁(r) ,
//! ```
//!
//! glued by the smooth-fit constant `F̃` so that value and `r`-slope match
//! at `r*` for every wealth level.

use serde::{Deserialize, Serialize};

use crate::barrier::{solve, BarrierSolution};
use crate::cir::laplace_m;
use crate::error::{Error, Result};
use crate::integrals::Functionals;
use crate::mc::last_exit_expectation;
use crate::params::{CirParams, Regime};
use crate::quad::gauss_legendre;

/// Which side of the free boundary a point was evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Consumption region (`r ≤ r*`, or everywhere in the low-vol regime).
    Spend,
    /// Waiting region (`r > r*`).
    Wait,
    /// Beyond the evaluation cap `r* + 100`; the value is below tolerance
    /// and reported as zero.
    Capped,
}

/// Pointwise HJB diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HjbReport {
    pub r: f64,
    pub x: f64,
    /// `𝓛v = μ v_x + (ar+b) v_r + (δ²r/2) v_rr` by central differences.
    pub generator_part: f64,
    /// `e^{-r} − v_x`.
    pub gradient_part: f64,
    pub active: Branch,
}

impl HjbReport {
    /// The variational inequality at tolerance `tol`: both branches are
    /// nonpositive and the active one vanishes.
    pub fn satisfies(&self, tol: f64) -> bool {
        let active_residual = match self.active {
            Branch::Spend => self.gradient_part,
            Branch::Wait => self.generator_part,
            Branch::Capped => return true,
        };
        self.generator_part <= tol && self.gradient_part <= tol && active_residual.abs() <= tol
    }
}

/// Fixed-node quadrature of `∫₀^∞ M(r, s) ds`: geometric panels with
/// Gauss–Legendre nodes, frozen at construction so the result is a smooth
/// function of `r` (safe to finite-difference).
#[derive(Debug, Clone)]
struct DiscountIntegral {
    nodes: Vec<(f64, f64)>,
}

impl DiscountIntegral {
    fn new(params: &CirParams) -> Self {
        // M(r, s) decays like e^{-κs} with κ = 2ab/δ².
        let kappa = 2.0 * params.a * params.b / params.delta_sq();
        let s_max = 36.0 / kappa;
        let (xs, ws) = gauss_legendre(32);
        let mut nodes = Vec::new();
        let mut lo = 0.0;
        let mut hi = 1.0 / kappa;
        while lo < s_max {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in xs.iter().zip(&ws) {
                nodes.push((mid + half * x, half * w));
            }
            lo = hi;
            hi = (2.0 * hi).min(s_max.max(hi + 1.0));
            if nodes.len() > 4096 {
                break;
            }
        }
        DiscountIntegral { nodes }
    }

    fn eval(&self, params: &CirParams, r: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&(s, w)| w * laplace_m(params, r, s).expect("s >= 0"))
            .sum()
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Low(DiscountIntegral),
    High {
        solution: BarrierSolution,
        functionals: Functionals,
    },
}

/// The assembled value function for one parameter set and income rate.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    params: CirParams,
    mu: f64,
    inner: Inner,
}

/// Margin (in multiples of the finite-difference step) kept between an
/// evaluation stencil and the free boundary.
const CAP_EXTRA: f64 = 100.0;

impl ValueFunction {
    /// Dispatch on the volatility regime; solves the barrier when needed.
    pub fn new(params: &CirParams, mu: f64) -> Result<Self> {
        if mu < 0.0 {
            return Err(Error::Domain(format!("income rate must be >= 0, got {mu}")));
        }
        let inner = match params.regime() {
            Regime::LowVol => Inner::Low(DiscountIntegral::new(params)),
            Regime::HighVol => {
                let (solution, functionals) = solve(params, mu)?;
                Inner::High {
                    solution,
                    functionals,
                }
            }
        };
        Ok(ValueFunction {
            params: *params,
            mu,
            inner,
        })
    }

    pub fn params(&self) -> &CirParams {
        &self.params
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn regime(&self) -> Regime {
        self.params.regime()
    }

    /// Barrier solution (high-volatility regime only).
    pub fn barrier(&self) -> Option<&BarrierSolution> {
        match &self.inner {
            Inner::High { solution, .. } => Some(solution),
            Inner::Low(_) => None,
        }
    }

    /// The functional evaluators behind `F`/`G` (high volatility only).
    pub fn functionals(&self) -> Option<&Functionals> {
        match &self.inner {
            Inner::High { functionals, .. } => Some(functionals),
            Inner::Low(_) => None,
        }
    }

    /// The value function itself.
    pub fn evaluate(&self, r: f64, x: f64) -> Result<f64> {
        Ok(self.evaluate_with_branch(r, x)?.0)
    }

    /// Value plus the branch it came from.
    pub fn evaluate_with_branch(&self, r: f64, x: f64) -> Result<(f64, Branch)> {
        if r < 0.0 || x < 0.0 {
            return Err(Error::Domain(format!("need r, x >= 0, got ({r}, {x})")));
        }
        match &self.inner {
            Inner::Low(integral) => {
                Ok((x * (-r).exp() + self.mu * integral.eval(&self.params, r), Branch::Spend))
            }
            Inner::High { solution, .. } => {
                if r <= solution.rstar {
                    Ok((self.f_piece(r, x)?, Branch::Spend))
                } else if r <= solution.rstar + CAP_EXTRA {
                    Ok((self.g_piece(r, x)?, Branch::Wait))
                } else {
                    Ok((0.0, Branch::Capped)) // below tolerance out here
                }
            }
        }
    }

    fn high(&self) -> Result<(&BarrierSolution, &Functionals)> {
        match &self.inner {
            Inner::High {
                solution,
                functionals,
            } => Ok((solution, functionals)),
            Inner::Low(_) => Err(Error::Regime(
                "the F/G pieces exist only in the high-volatility regime delta^2 > 2a".into(),
            )),
        }
    }

    /// `F(r,x) = x e^{-r} + μψ₁(r) + F̃` on `[0, r*]`.
    pub fn value_f(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, _) = self.high()?;
        if r > solution.rstar * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "F is defined on [0, r*] = [0, {}], got {r}",
                solution.rstar
            )));
        }
        self.f_piece(r, x)
    }

    /// `G(r,x) = x φ₁ e^{-r*} + μ φ₂ e^{-r*} + F̃ φ₁` on `[r*, ∞)`.
    pub fn value_g(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, _) = self.high()?;
        if r < solution.rstar * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "G is defined on [r*, inf) = [{}, inf), got {r}",
                solution.rstar
            )));
        }
        self.g_piece(r, x)
    }

    fn f_piece(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, functionals) = self.high()?;
        Ok(x * (-r).exp() + self.mu * functionals.psi1(r.min(solution.rstar))? + solution.tilde_f
            + if r > solution.rstar {
                // analytic extension for stencils that poke past the barrier
                self.mu
                    * (functionals.psi1_prime(solution.rstar)? * (r - solution.rstar)
                        + 0.5
                            * functionals.psi1_second(solution.rstar)?
                            * (r - solution.rstar)
                            * (r - solution.rstar))
            } else {
                0.0
            })
    }

    fn g_piece(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, functionals) = self.high()?;
        let disc = (-solution.rstar).exp();
        if r >= solution.rstar {
            Ok((x * disc + solution.tilde_f) * functionals.phi1(r)?
                + self.mu * disc * functionals.phi2(r)?)
        } else {
            // quadratic extension below the barrier, same stencil use
            let dr = r - solution.rstar;
            let g0 = x * disc + solution.tilde_f;
            let g1 = (x * disc + solution.tilde_f) * functionals.phi1_prime(solution.rstar)?
                + self.mu * disc * functionals.phi2_prime(solution.rstar)?;
            let g2 = (x * disc + solution.tilde_f) * functionals.phi1_second(solution.rstar)?
                + self.mu * disc * functionals.phi2_second(solution.rstar)?;
            Ok(g0 + g1 * dr + 0.5 * g2 * dr * dr)
        }
    }

    /// Analytic `∂F/∂r` (closed-form ψ₁').
    pub fn value_f_r(&self, r: f64, x: f64) -> Result<f64> {
        let (_, functionals) = self.high()?;
        Ok(-x * (-r).exp() + self.mu * functionals.psi1_prime(r)?)
    }

    /// Analytic `∂G/∂r`.
    pub fn value_g_r(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, functionals) = self.high()?;
        let disc = (-solution.rstar).exp();
        Ok((x * disc + solution.tilde_f) * functionals.phi1_prime(r)?
            + self.mu * disc * functionals.phi2_prime(r)?)
    }

    /// `∂²F/∂r²` through the ψ₁ ODE.
    pub fn value_f_rr(&self, r: f64, x: f64) -> Result<f64> {
        let (_, functionals) = self.high()?;
        Ok(x * (-r).exp() + self.mu * functionals.psi1_second(r)?)
    }

    /// `∂²G/∂r²` through the φ ODEs.
    pub fn value_g_rr(&self, r: f64, x: f64) -> Result<f64> {
        let (solution, functionals) = self.high()?;
        let disc = (-solution.rstar).exp();
        Ok((x * disc + solution.tilde_f) * functionals.phi1_second(r)?
            + self.mu * disc * functionals.phi2_second(r)?)
    }

    /// Both HJB branch values at `(r, x)` with central differences on the
    /// piece the point belongs to (step `1e-4·max(1,r)`, halved once for a
    /// Richardson check).
    pub fn hjb_check(&self, r: f64, x: f64) -> Result<HjbReport> {
        if r <= 0.0 {
            return Err(Error::Domain(
                "hjb_check needs r > 0; the generator degenerates on the boundary".into(),
            ));
        }
        let (_, active) = self.evaluate_with_branch(r, x)?;
        if active == Branch::Capped {
            return Ok(HjbReport {
                r,
                x,
                generator_part: 0.0,
                gradient_part: (-r).exp(),
                active,
            });
        }
        let eval = |rr: f64, xx: f64| -> Result<f64> {
            match &self.inner {
                Inner::Low(integral) => {
                    Ok(xx * (-rr).exp() + self.mu * integral.eval(&self.params, rr))
                }
                Inner::High { .. } => match active {
                    Branch::Spend => self.f_piece(rr, xx),
                    _ => self.g_piece(rr, xx),
                },
            }
        };
        let generator = |h: f64| -> Result<f64> {
            let f0 = eval(r, x)?;
            let v_r = (eval(r + h, x)? - eval(r - h, x)?) / (2.0 * h);
            let v_rr = (eval(r + h, x)? - 2.0 * f0 + eval(r - h, x)?) / (h * h);
            let hx = 1e-4 * x.abs().max(1.0);
            let v_x = (eval(r, x + hx)? - eval(r, x - hx)?) / (2.0 * hx);
            Ok(self.mu * v_x
                + (self.params.a * r + self.params.b) * v_r
                + 0.5 * self.params.delta_sq() * r * v_rr)
        };
        // central differences are O(h²): one halving gives a Richardson
        // extrapolation and a consistency check in the same two evaluations
        let h = 1e-4 * r.abs().max(1.0);
        let coarse = generator(h)?;
        let fine = generator(0.5 * h)?;
        let generator_part = (4.0 * fine - coarse) / 3.0;

        let hx = 1e-4 * x.abs().max(1.0);
        let v_x = (eval(r, x + hx)? - eval(r, x - hx)?) / (2.0 * hx);
        let gradient_part = (-r).exp() - v_x;
        Ok(HjbReport {
            r,
            x,
            generator_part,
            gradient_part,
            active,
        })
    }
}

/// Performance of always-spending, `H(r,x) = x e^{-r} + μ ∫₀^∞ M(r,s) ds`,
/// with no regime restriction (in the high-volatility regime it is *not*
/// the value function and is dominated by the barrier value).
pub fn h_performance(params: &CirParams, mu: f64, r: f64, x: f64) -> Result<f64> {
    if r < 0.0 || x < 0.0 || mu < 0.0 {
        return Err(Error::Domain(format!(
            "need r, x, mu >= 0, got ({r}, {x}, {mu})"
        )));
    }
    let integral = DiscountIntegral::new(params);
    Ok(x * (-r).exp() + mu * integral.eval(params, r))
}

/// `H` as the value function: only valid in the low-volatility regime.
pub fn value_h(params: &CirParams, mu: f64, r: f64, x: f64) -> Result<f64> {
    if params.regime() == Regime::HighVol {
        return Err(Error::Regime(format!(
            "H is not the value function when delta^2 = {} > 2a = {}: it fails the \
             variational inequality above R and is dominated by the barrier value",
            params.delta_sq(),
            2.0 * params.a
        )));
    }
    h_performance(params, mu, r, x)
}

/// Return function of the zero-barrier strategy (spend only at `r = 0`):
/// `V⁰(r,x) = (x + μE₀[λ₀]) φ̂₁(r) + μ φ̂₂(r)`.
///
/// Requires `2b < δ²` (zero attainable) and `δ² > 2a` (otherwise max-spend
/// is already optimal and the comparison is moot).
#[derive(Debug, Clone)]
pub struct ZeroBarrierValue {
    mu: f64,
    /// `Ṽ⁰ = μ E₀[λ₀]`.
    pub v_tilde: f64,
    functionals: Functionals,
}

impl ZeroBarrierValue {
    pub fn new(params: &CirParams, mu: f64) -> Result<Self> {
        if params.regime() == Regime::LowVol {
            return Err(Error::Regime(
                "the zero-barrier comparison lives in the high-volatility regime delta^2 > 2a"
                    .into(),
            ));
        }
        if !params.zero_attainable() {
            return Err(Error::Regime(format!(
                "the zero-barrier strategy needs 2b < delta^2 (got 2b = {}, delta^2 = {})",
                2.0 * params.b,
                params.delta_sq()
            )));
        }
        let functionals = Functionals::new(params, 0.0)?;
        let v_tilde = mu * last_exit_expectation(params)?;
        Ok(ZeroBarrierValue {
            mu,
            v_tilde,
            functionals,
        })
    }

    /// `φ̂₁(r)`, exposed for the suboptimality witness `e^{-r} > φ̂₁(r)`.
    pub fn phi1_hat(&self, r: f64) -> Result<f64> {
        self.functionals.phi1(r)
    }

    pub fn evaluate(&self, r: f64, x: f64) -> Result<f64> {
        if r < 0.0 || x < 0.0 {
            return Err(Error::Domain(format!("need r, x >= 0, got ({r}, {x})")));
        }
        Ok((x + self.v_tilde) * self.functionals.phi1(r)?
            + self.mu * self.functionals.phi2(r)?)
    }
}

/// One-shot convenience for [`ZeroBarrierValue`].
pub fn zero_barrier_value(params: &CirParams, mu: f64, r: f64, x: f64) -> Result<f64> {
    ZeroBarrierValue::new(params, mu)?.evaluate(r, x)
}
