//! The Brownian risk model: surplus `X_t = x + μt + σB_t` paying dividends,
//! stopped at ruin, discounted by an exponential CIR factor with `δ² = 2a`.
//!
//! Under that coupling `β(t) ≡ 1`, so `e^{bt} e^{-r_t}` is a martingale and
//! the problem collapses to the classical constant-rate dividend problem.
//! The optimal policy is a constant reflecting barrier at
//!
//! ```text
//! ϱ = (ln(b − μζ) − ln(b − μθ)) / (θ − ζ),
//! ```
//!
//! where `θ > 0 > ζ` solve `(σ²/2)s² + μs − b = 0`, and the value is
//!
//! ```text
//! F(r,x) = (x − ϱ + μ/b) e^{-r}                     for x ≥ ϱ,
//! G(r,x) = e^{-r} (e^{θx} − e^{ζx}) / (θe^{θϱ} − ζe^{ζϱ})   for x ≤ ϱ.
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{McConfig, McEstimate};
use crate::params::CirParams;
use crate::quad::pairwise_sum;
use crate::rng::PathRng;
use crate::value::Branch;

/// Dividend barrier `ϱ` and the root pair `(θ, ζ)` in rationalized,
/// cancellation-free form (safe down to tiny `σ`).
pub fn barrier_varrho(mu: f64, sigma: f64, b: f64) -> Result<(f64, f64, f64)> {
    for (name, v) in [("mu", mu), ("sigma", sigma), ("b", b)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let disc = (mu * mu + 2.0 * sigma * sigma * b).sqrt();
    let theta = 2.0 * b / (mu + disc); // == (-mu + disc)/sigma², rationalized
    let zeta = -(mu + disc) / (sigma * sigma);
    // b − μθ = 2σ²b²/(μ+D)², b − μζ = b + μ(μ+D)/σ²: both manifestly > 0,
    // no subtractive cancellation even for tiny sigma
    let b_minus_mu_theta = 2.0 * sigma * sigma * b * b / ((mu + disc) * (mu + disc));
    let b_minus_mu_zeta = b + mu * (mu + disc) / (sigma * sigma);
    if !(b_minus_mu_theta > 0.0 && b_minus_mu_theta.is_finite()) {
        return Err(Error::Numerical(format!(
            "b - mu*theta = {b_minus_mu_theta} underflowed; sigma too extreme"
        )));
    }
    let varrho = (b_minus_mu_zeta.ln() - b_minus_mu_theta.ln()) / (theta - zeta);
    Ok((theta, zeta, varrho))
}

/// The assembled model. The CIR drift slope is derived as `a = δ²/2`, so
/// the coupling `δ² = 2a` holds by construction and cannot be violated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BrownianModel {
    /// Surplus drift (money/time).
    pub mu: f64,
    /// Surplus volatility (money/√time).
    pub sigma: f64,
    /// CIR drift intercept, which acts as the effective discount rate.
    pub b: f64,
    /// CIR volatility; the drift slope is `a = δ²/2`.
    pub delta: f64,
    /// Positive root of `(σ²/2)s² + μs − b = 0` (1/money).
    pub theta: f64,
    /// Negative root (1/money).
    pub zeta: f64,
    /// Dividend barrier on the surplus (money).
    pub varrho: f64,
}

impl BrownianModel {
    pub fn new(mu: f64, sigma: f64, b: f64, delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        let (theta, zeta, varrho) = barrier_varrho(mu, sigma, b)?;
        Ok(BrownianModel {
            mu,
            sigma,
            b,
            delta,
            theta,
            zeta,
            varrho,
        })
    }

    /// The discounting process parameters; `a = δ²/2` exactly.
    pub fn cir(&self) -> CirParams {
        CirParams {
            a: 0.5 * self.delta * self.delta,
            b: self.b,
            delta: self.delta,
        }
    }

    /// `θe^{θϱ} − ζe^{ζϱ}`, the normalization of the waiting piece.
    fn denom(&self) -> f64 {
        self.theta * (self.theta * self.varrho).exp()
            - self.zeta * (self.zeta * self.varrho).exp()
    }

    /// Value function: `F` above the barrier, `G` below.
    pub fn value(&self, r: f64, x: f64) -> Result<f64> {
        if r < 0.0 || x < 0.0 {
            return Err(Error::Domain(format!("need r, x >= 0, got ({r}, {x})")));
        }
        Ok(self.piece(x >= self.varrho, r, x))
    }

    /// Evaluate one piece's formula (both are globally smooth, so the HJB
    /// stencils never straddle a kink).
    fn piece(&self, pay: bool, r: f64, x: f64) -> f64 {
        if pay {
            (x - self.varrho + self.mu / self.b) * (-r).exp()
        } else {
            (-r).exp() * ((self.theta * x).exp() - (self.zeta * x).exp()) / self.denom()
        }
    }

    /// Pointwise check of the variational inequality
    /// `max{μV_x + (σ²/2)V_xx + (ar+b)V_r + arV_rr, e^{-r} − V_x} = 0`
    /// by central differences on the active piece.
    pub fn hjb_check(&self, r: f64, x: f64) -> Result<HjbBrownianReport> {
        if r <= 0.0 || x < 0.0 {
            return Err(Error::Domain(format!(
                "hjb_check needs r > 0 and x >= 0, got ({r}, {x})"
            )));
        }
        let pay = x >= self.varrho;
        let a = 0.5 * self.delta * self.delta;
        let f = |rr: f64, xx: f64| self.piece(pay, rr, xx);
        let hr = 3e-4 * r.max(1.0);
        let hx = 3e-4 * x.max(1.0);
        let v_r = (f(r + hr, x) - f(r - hr, x)) / (2.0 * hr);
        let v_rr = (f(r + hr, x) - 2.0 * f(r, x) + f(r - hr, x)) / (hr * hr);
        let v_x = (f(r, x + hx) - f(r, x - hx)) / (2.0 * hx);
        let v_xx = (f(r, x + hx) - 2.0 * f(r, x) + f(r, x - hx)) / (hx * hx);
        let generator_part = self.mu * v_x
            + 0.5 * self.sigma * self.sigma * v_xx
            + (a * r + self.b) * v_r
            + a * r * v_rr;
        let gradient_part = (-r).exp() - v_x;
        Ok(HjbBrownianReport {
            r,
            x,
            generator_part,
            gradient_part,
            active: if pay { Branch::Spend } else { Branch::Wait },
        })
    }

    /// Monte-Carlo dividends of the reflected-at-`ϱ` strategy with ruin:
    /// Euler the free surplus, take the overflow as the dividend, reset to
    /// the barrier, absorb at zero. Ruin is checked before reflection and
    /// at grid times only. Discounting uses an independent CIR stream.
    pub fn mc_dividends(&self, r0: f64, x0: f64, cfg: &McConfig) -> Result<McEstimate> {
        self.mc_dividends_at_barrier(self.varrho, r0, x0, cfg)
    }

    /// Same strategy with an arbitrary (suboptimal) barrier, for dominance
    /// comparisons.
    pub fn mc_dividends_at_barrier(
        &self,
        barrier: f64,
        r0: f64,
        x0: f64,
        cfg: &McConfig,
    ) -> Result<McEstimate> {
        if r0 < 0.0 || x0 < 0.0 || barrier <= 0.0 {
            return Err(Error::Domain(format!(
                "need r0, x0 >= 0 and barrier > 0, got ({r0}, {x0}, {barrier})"
            )));
        }
        if !(cfg.n_paths > 0) || !(cfg.dt > 0.0) || cfg.dt >= cfg.horizon {
            return Err(Error::Config(format!(
                "need n_paths > 0 and 0 < dt < horizon, got n_paths = {}, dt = {}, horizon = {}",
                cfg.n_paths, cfg.dt, cfg.horizon
            )));
        }
        let n_steps = (cfg.horizon / cfg.dt).round() as u64;
        let (a, b, delta) = (0.5 * self.delta * self.delta, self.b, self.delta);
        let (mu, sigma) = (self.mu, self.sigma);
        let sqrt_dt = cfg.dt.sqrt();
        // future dividends are worth at most (x + μ/b) e^{-r}; once r has
        // drifted past this cutoff the remainder is below 1e-16
        let r_cut = cfg.r_cut.unwrap_or(45.0);

        const LANES: usize = 8; // two streams per path
        let mut values = vec![0.0f64; cfg.n_paths];
        values
            .par_chunks_mut(LANES)
            .enumerate()
            .for_each(|(chunk_idx, chunk)| {
                let k_lanes = chunk.len();
                let mut rng_x: [PathRng; LANES] = std::array::from_fn(|j| {
                    PathRng::new(cfg.seed, 2 * (chunk_idx * LANES + j) as u64)
                });
                let mut rng_r: [PathRng; LANES] = std::array::from_fn(|j| {
                    PathRng::new(cfg.seed, 2 * (chunk_idx * LANES + j) as u64 + 1)
                });
                let mut surplus = [x0; LANES];
                let mut level = [r0; LANES]; // full-truncation state
                let mut total = [0.0f64; LANES];
                let mut live = [false; LANES];
                let mut n_live = 0;
                for j in 0..k_lanes {
                    if x0 <= 0.0 {
                        continue; // absorbed at start
                    }
                    if surplus[j] > barrier {
                        total[j] += (surplus[j] - barrier) * (-r0).exp();
                        surplus[j] = barrier;
                    }
                    live[j] = true;
                    n_live += 1;
                }
                let mut step = 0u64;
                while n_live > 0 && step < n_steps {
                    for j in 0..k_lanes {
                        if !live[j] {
                            continue;
                        }
                        let zx: f64 = rng_x[j].sample(StandardNormal);
                        let zr: f64 = rng_r[j].sample(StandardNormal);
                        let lp = if level[j] > 0.0 { level[j] } else { 0.0 };
                        level[j] += (a * lp + b) * cfg.dt + delta * lp.sqrt() * sqrt_dt * zr;
                        surplus[j] += mu * cfg.dt + sigma * sqrt_dt * zx;
                        if surplus[j] <= 0.0 {
                            live[j] = false; // ruin, checked before reflection
                            n_live -= 1;
                            continue;
                        }
                        if surplus[j] > barrier {
                            let lp_now = if level[j] > 0.0 { level[j] } else { 0.0 };
                            total[j] += (surplus[j] - barrier) * (-lp_now).exp();
                            surplus[j] = barrier;
                        }
                        if level[j] >= r_cut {
                            live[j] = false;
                            n_live -= 1;
                        }
                    }
                    step += 1;
                }
                chunk.copy_from_slice(&total[..k_lanes]);
            });

        let n = values.len() as f64;
        let mean = pairwise_sum(&values) / n;
        let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&centered) / (n - 1.0);
        Ok(McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            n_paths: cfg.n_paths,
            dt: cfg.dt,
            horizon: cfg.horizon,
            seed: cfg.seed,
        })
    }
}

/// HJB diagnostics for the Brownian model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HjbBrownianReport {
    pub r: f64,
    pub x: f64,
    pub generator_part: f64,
    pub gradient_part: f64,
    pub active: Branch,
}
