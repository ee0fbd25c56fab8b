//! CIR parameter triple and regime classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volatility regime of the discounting process.
///
/// The split is at `δ² = 2a`: below it `e^{-r_t}` is a supermartingale and
/// immediate spending is optimal; above it a finite waiting barrier exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `δ² ≤ 2a` — spend everything immediately, the barrier sits at infinity.
    LowVol,
    /// `δ² > 2a` — wait above a finite barrier `r* ∈ (0, R]`.
    HighVol,
}

/// Parameters `(a, b, δ)` of the CIR process
/// `dr = (a r + b) dt + δ √r dW` with `a, b, δ > 0`.
///
/// The process is deliberately *non*-mean-reverting (`a > 0`), so
/// `r_t → ∞` almost surely and discounted quantities stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    /// Drift slope (1/time).
    pub a: f64,
    /// Drift intercept (level/time).
    pub b: f64,
    /// Volatility coefficient (level^{1/2}/time^{1/2}).
    pub delta: f64,
}

impl CirParams {
    /// Validate and build a parameter triple. All three must be positive
    /// and finite.
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("delta", delta)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "CIR parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { a, b, delta })
    }

    /// `δ²`.
    #[inline]
    pub fn delta_sq(&self) -> f64 {
        self.delta * self.delta
    }

    /// Bessel order `q = 2b/δ² − 1 > −1` of the transition density.
    #[inline]
    pub fn q(&self) -> f64 {
        self.weight_power() - 1.0
    }

    /// Exponent `p = 2b/δ²` of the weight function `w(y) = y^{-p} e^{-cy}`.
    #[inline]
    pub fn weight_power(&self) -> f64 {
        2.0 * self.b / self.delta_sq()
    }

    /// Rate `c = 2a/δ²` of the weight function `w(y) = y^{-p} e^{-cy}`.
    #[inline]
    pub fn weight_rate(&self) -> f64 {
        2.0 * self.a / self.delta_sq()
    }

    /// Volatility regime (`LowVol` iff `δ² ≤ 2a`).
    pub fn regime(&self) -> Regime {
        if self.delta_sq() <= 2.0 * self.a {
            Regime::LowVol
        } else {
            Regime::HighVol
        }
    }

    /// Whether the process can reach zero: `2b < δ²`.
    pub fn zero_attainable(&self) -> bool {
        2.0 * self.b < self.delta_sq()
    }

    /// Upper bound `R = b/(δ²/2 − a)` for the optimal barrier; only defined
    /// in the high-volatility regime.
    pub fn barrier_cap(&self) -> Result<f64> {
        match self.regime() {
            Regime::HighVol => Ok(self.b / (self.delta_sq() / 2.0 - self.a)),
            Regime::LowVol => Err(Error::Regime(format!(
                "barrier cap R = b/(delta^2/2 - a) requires delta^2 > 2a; \
                 got delta^2 = {} <= 2a = {}",
                self.delta_sq(),
                2.0 * self.a
            ))),
        }
    }
}
