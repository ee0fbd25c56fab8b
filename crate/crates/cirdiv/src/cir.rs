//! The CIR discounting process: closed-form Laplace functional, transition
//! density, exact transition sampling and Euler path simulation.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CirParams;
use crate::rng::PathRng;
use crate::special::ln_bessel_i;

/// A discretized realization of the process on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CirPath {
    /// Strictly increasing grid starting at 0.
    pub times: Vec<f64>,
    /// Nonnegative levels at those times.
    pub values: Vec<f64>,
    /// Seed the path was generated from.
    pub seed: u64,
}

/// `β(t) = 1 / (δ²/2a + (1 − δ²/2a) e^{−at})`; equals 1 at `t = 0` and
/// decreases to `2a/δ²` (increases, in the low-volatility regime).
pub fn beta(params: &CirParams, t: f64) -> f64 {
    let g = params.delta_sq() / (2.0 * params.a);
    1.0 / (g + (1.0 - g) * (-params.a * t).exp())
}

/// Laplace functional `M(r, t) = E_r[e^{−r_t}]
/// = e^{−(2ab/δ²)t} β(t)^{2b/δ²} e^{−rβ(t)}`.
///
/// Always in `(0, 1]`; strictly decreasing in `t` when `δ² ≤ 2a`.
pub fn laplace_m(params: &CirParams, r: f64, t: f64) -> Result<f64> {
    if r < 0.0 || t < 0.0 || !r.is_finite() || !t.is_finite() {
        return Err(Error::Domain(format!(
            "laplace_m requires r >= 0 and t >= 0, got r = {r}, t = {t}"
        )));
    }
    if t == 0.0 {
        return Ok((-r).exp());
    }
    let p = params.weight_power(); // 2b/δ²
    let bt = beta(params, t);
    Ok((-(params.a * p) * t + p * bt.ln() - r * bt).exp())
}

/// `c(t) = 2a / ((e^{at} − 1) δ²)`, the scale constant of the transition law.
fn transition_scale(params: &CirParams, t: f64) -> f64 {
    2.0 * params.a / (params.delta_sq() * (params.a * t).exp_m1())
}

/// Log of the transition density of `r_t` started from `r`, in log space so
/// small times (huge Bessel arguments) stay finite.
pub fn ln_transition_density(params: &CirParams, r: f64, t: f64, y: f64) -> Result<f64> {
    if r <= 0.0 || t <= 0.0 || y <= 0.0 {
        return Err(Error::Domain(format!(
            "transition density requires r > 0, t > 0, y > 0, got ({r}, {t}, {y})"
        )));
    }
    let q = params.q();
    let c = transition_scale(params, t);
    let u = c * r * (params.a * t).exp();
    let v = c * y;
    let z = 2.0 * (u * v).sqrt();
    Ok(c.ln() - u - v + 0.5 * q * (v.ln() - u.ln()) + ln_bessel_i(q, z))
}

/// Transition density `f(y)` of `r_t` given `r_0 = r`.
///
/// Nonnegative; integrates to 1 over `(0, ∞)` when `2b ≥ δ²` and to less
/// than 1 otherwise (the defect is the mass the process parks at zero).
pub fn transition_density(params: &CirParams, r: f64, t: f64, y: f64) -> Result<f64> {
    Ok(ln_transition_density(params, r, t, y)?.exp())
}

/// Draw `r_t` exactly from the transition law: `2c·r_t` is noncentral χ²
/// with `4b/δ²` degrees of freedom and noncentrality `2c·r·e^{at}`,
/// realized as a Poisson mixture of gamma variates (valid for any positive,
/// non-integer degrees of freedom).
pub fn sample_transition<R: Rng + ?Sized>(
    params: &CirParams,
    r: f64,
    t: f64,
    rng: &mut R,
) -> Result<f64> {
    if r < 0.0 || t <= 0.0 {
        return Err(Error::Domain(format!(
            "sample_transition requires r >= 0 and t > 0, got r = {r}, t = {t}"
        )));
    }
    let c = transition_scale(params, t);
    let half_noncentrality = c * r * (params.a * t).exp();
    let mixture = if half_noncentrality > 0.0 {
        let poisson = Poisson::new(half_noncentrality)
            .map_err(|e| Error::Numerical(format!("Poisson mixing failed: {e}")))?;
        poisson.sample(rng)
    } else {
        0.0
    };
    let shape = params.weight_power() + mixture;
    let gamma = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Numerical(format!("Gamma sampling failed: {e}")))?;
    Ok(gamma.sample(rng) / c)
}

/// One full-truncation Euler step: drift `a·x⁺ + b`, diffusion `δ√(x⁺)`.
/// The internal state may dip below zero; only the coefficient arguments
/// are truncated, never the state itself.
#[inline(always)]
pub(crate) fn full_truncation_step(
    x: f64,
    a: f64,
    b: f64,
    delta: f64,
    dt: f64,
    sqrt_dt: f64,
    z: f64,
) -> f64 {
    let xp = if x > 0.0 { x } else { 0.0 };
    x + (a * xp + b) * dt + delta * xp.sqrt() * sqrt_dt * z
}

/// Simulate a grid path by full-truncation Euler with its own seeded
/// generator; the reported levels are the nonnegative parts of the state.
pub fn simulate_path(
    params: &CirParams,
    r0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<CirPath> {
    let mut rng = PathRng::new(seed, 0);
    simulate_path_with(params, r0, horizon, dt, seed, &mut rng)
}

/// Same as [`simulate_path`] but drawing from a caller-provided stream.
pub fn simulate_path_with<R: Rng + ?Sized>(
    params: &CirParams,
    r0: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    rng: &mut R,
) -> Result<CirPath> {
    if r0 < 0.0 {
        return Err(Error::Domain(format!("initial level must be >= 0, got {r0}")));
    }
    if dt <= 0.0 || horizon < dt {
        return Err(Error::Config(format!(
            "need dt > 0 and horizon >= dt, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let n_steps = (horizon / dt).round() as usize;
    let sqrt_dt = dt.sqrt();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = r0;
    times.push(0.0);
    values.push(r0);
    for k in 1..=n_steps {
        let z: f64 = rng.sample(StandardNormal);
        x = full_truncation_step(x, params.a, params.b, params.delta, dt, sqrt_dt, z);
        times.push(k as f64 * dt);
        values.push(x.max(0.0));
    }
    Ok(CirPath { times, values, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use approx::assert_relative_eq;
    use statrs::function::gamma::ln_gamma;

    fn fig_params() -> CirParams {
        CirParams::new(0.001, 0.002, 0.07).unwrap()
    }

    fn lowvol_params() -> CirParams {
        CirParams::new(0.1, 0.05, 0.2).unwrap()
    }

    #[test]
    fn laplace_at_t_zero_is_exp_minus_r() {
        let p = fig_params();
        assert_eq!(laplace_m(&p, 1.0, 0.0).unwrap(), (-1.0_f64).exp());
        assert_eq!(laplace_m(&p, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn laplace_stays_in_unit_interval() {
        let p = CirParams::new(0.001, 0.002, 0.07).unwrap();
        let m = laplace_m(&p, 0.5, 10.0).unwrap();
        assert!(m > 0.0 && m < 1.0, "M = {m}");
        assert!(laplace_m(&p, -0.1, 1.0).is_err());
        assert!(laplace_m(&p, 0.1, -1.0).is_err());
    }

    #[test]
    fn laplace_strictly_decreasing_in_t_for_low_volatility() {
        let p = lowvol_params();
        for &r in &[0.0, 0.3, 1.0, 4.0] {
            let mut prev = laplace_m(&p, r, 0.0).unwrap();
            for i in 1..=50 {
                let t = i as f64;
                let m = laplace_m(&p, r, t).unwrap();
                assert!(m < prev, "M not decreasing at r = {r}, t = {t}: {m} >= {prev}");
                prev = m;
            }
        }
    }

    #[test]
    fn laplace_solves_the_generator_pde() {
        // (ar+b) M_r + (δ²r/2) M_rr − M_t = 0, finite differences, step 1e-4.
        let h = 1e-4;
        for params in [fig_params(), lowvol_params()] {
            for &r in &[0.2, 0.5, 1.0, 2.0] {
                for &t in &[0.5, 1.0, 5.0] {
                    let m = |rr: f64, tt: f64| laplace_m(&params, rr, tt).unwrap();
                    let m_r = (m(r + h, t) - m(r - h, t)) / (2.0 * h);
                    let m_rr = (m(r + h, t) - 2.0 * m(r, t) + m(r - h, t)) / (h * h);
                    let m_t = (m(r, t + h) - m(r, t - h)) / (2.0 * h);
                    let residual = (params.a * r + params.b) * m_r
                        + 0.5 * params.delta_sq() * r * m_rr
                        - m_t;
                    assert!(
                        residual.abs() < 1e-5,
                        "PDE residual {residual} at r = {r}, t = {t}"
                    );
                }
            }
        }
    }

    /// Independent oracle: direct log-sum-exp summation of the density
    /// series  f = c e^{−u−v} Σ_m u^m v^{m+q} / (m! Γ(m+q+1)).
    fn density_series_oracle(params: &CirParams, r: f64, t: f64, y: f64, terms: usize) -> f64 {
        let q = params.q();
        let c = 2.0 * params.a / (params.delta_sq() * (params.a * t).exp_m1());
        let u = c * r * (params.a * t).exp();
        let v = c * y;
        let ln_terms: Vec<f64> = (0..terms)
            .map(|m| {
                let m = m as f64;
                m * u.ln() + (m + q) * v.ln() - ln_gamma(m + 1.0) - ln_gamma(m + q + 1.0)
            })
            .collect();
        let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = ln_terms.iter().map(|lt| (lt - max).exp()).sum();
        (c.ln() - u - v + max + sum.ln()).exp()
    }

    #[test]
    fn density_matches_series_oracle_and_reference() {
        let p = CirParams::new(0.001, 0.002, 0.09).unwrap();
        let (r, t, y) = (0.1, 1.0, 0.1);
        // 40-digit reference for these arguments.
        let reference = 14.01296508933863786;
        let direct = transition_density(&p, r, t, y).unwrap();
        let oracle = density_series_oracle(&p, r, t, y, 120);
        assert!(direct.is_finite() && direct > 0.0);
        assert_relative_eq!(direct, reference, max_relative = 1e-10);
        assert_relative_eq!(oracle, reference, max_relative = 1e-10);
        assert!(transition_density(&p, 0.0, 1.0, 0.1).is_err());
        assert!(transition_density(&p, 0.1, 0.0, 0.1).is_err());
    }

    #[test]
    fn density_normalizes_when_zero_is_unattainable() {
        // 2b = 0.1 >= δ² = 0.04: total mass 1.
        let p = lowvol_params();
        let mass = integrate(
            |y| transition_density(&p, 0.3, 1.0, y).unwrap(),
            1e-12,
            6.0,
            1e-9,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn density_laplace_transform_matches_laplace_m() {
        for p in [lowvol_params(), CirParams::new(0.001, 0.002, 0.09).unwrap()] {
            let (r, t) = (0.3, 1.0);
            let m_quad = integrate(
                |y| (-y).exp() * transition_density(&p, r, t, y).unwrap(),
                1e-14,
                8.0,
                1e-9,
                1e-12,
            )
            .unwrap();
            let m = laplace_m(&p, r, t).unwrap();
            // the quadrature misses exactly the defective mass at zero, which
            // is discounted at e^0 = 1
            let defect = 1.0
                - integrate(
                    |y| transition_density(&p, r, t, y).unwrap(),
                    1e-14,
                    8.0,
                    1e-9,
                    1e-12,
                )
                .unwrap();
            assert_relative_eq!(m_quad + defect.max(0.0), m, epsilon = 2e-6);
        }
    }

    #[test]
    fn defective_mass_nonincreasing_in_b() {
        // larger b pushes the process harder off zero, shrinking the defect
        let (a, delta, r, t) = (0.001, 0.09, 0.05, 2.0);
        let mass = |b: f64| {
            let p = CirParams::new(a, b, delta).unwrap();
            1.0 - integrate(
                |y| transition_density(&p, r, t, y).unwrap(),
                1e-14,
                4.0,
                1e-9,
                1e-12,
            )
            .unwrap()
        };
        let lo_b = mass(0.001);
        let hi_b = mass(0.003);
        assert!(lo_b > 0.0, "defect should be positive when 2b < delta^2");
        assert!(hi_b <= lo_b + 1e-9, "defect increased with b: {lo_b} -> {hi_b}");
    }

    #[test]
    fn exact_sampler_matches_mean_and_laplace_transform() {
        let p = CirParams::new(0.001, 0.002, 0.09).unwrap();
        let (r, t) = (0.1, 1.0);
        let n = 1_000_000;
        let mut rng = PathRng::new(7, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut lap_sum = 0.0;
        let mut lap_sq = 0.0;
        for _ in 0..n {
            let x = sample_transition(&p, r, t, &mut rng).unwrap();
            sum += x;
            sum_sq += x * x;
            let e = (-x).exp();
            lap_sum += e;
            lap_sq += e * e;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let se = ((sum_sq / nf - mean * mean) / nf).sqrt();
        // E_r[r_t] = r e^{at} + (b/a)(e^{at} − 1), by differentiating the
        // generalized Laplace transform at zero.
        let expected = r * (p.a * t).exp() + p.b / p.a * (p.a * t).exp_m1();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs expected {expected} (3se = {})",
            3.0 * se
        );
        let lap_mean = lap_sum / nf;
        let lap_se = ((lap_sq / nf - lap_mean * lap_mean) / nf).sqrt();
        let m = laplace_m(&p, r, t).unwrap();
        assert!(
            (lap_mean - m).abs() < 3.0 * lap_se,
            "Laplace mean {lap_mean} vs M {m} (3se = {})",
            3.0 * lap_se
        );
    }

    #[test]
    fn exact_sampler_degenerates_at_short_times() {
        let p = fig_params();
        let mut rng = PathRng::new(11, 0);
        let r = 0.5;
        let draws: Vec<f64> = (0..20_000)
            .map(|_| sample_transition(&p, r, 1e-4, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - r).abs() < 5e-4, "short-time mean {mean}");
        assert!(var < 1e-5, "short-time variance {var}");
    }

    #[test]
    fn paths_diverge_and_can_touch_zero() {
        let p = CirParams::new(0.01, 0.02, 0.25).unwrap(); // 2b < δ², high vol
        assert!(p.zero_attainable());
        let n = 400;
        let k_level = 20.0;
        let frac_above = |horizon: f64, seed0: u64| {
            let mut hits = 0;
            for i in 0..n {
                let path = simulate_path(&p, 0.1, horizon, 0.05, seed0 + i).unwrap();
                if *path.values.last().unwrap() > k_level {
                    hits += 1;
                }
            }
            hits as f64 / n as f64
        };
        let f_short = frac_above(200.0, 1000);
        let f_long = frac_above(1500.0, 2000);
        assert!(
            f_long > f_short && f_long > 0.95,
            "divergence fractions: short {f_short}, long {f_long}"
        );

        let mut touched = 0;
        for i in 0..n {
            let path = simulate_path(&p, 0.1, 100.0, 0.01, 5000 + i).unwrap();
            if path.values.iter().any(|&v| v <= 1e-4) {
                touched += 1;
            }
        }
        assert!(touched > 0, "no path touched zero although 2b < delta^2");
    }

    #[test]
    fn hitting_probability_stable_under_dt_refinement() {
        let p = CirParams::new(0.001, 0.002, 0.09).unwrap();
        let barrier = 0.05;
        let estimate = |dt: f64, seed0: u64| {
            let n = 3000;
            let mut hits = 0;
            for i in 0..n {
                let path = simulate_path(&p, 0.15, 400.0, dt, seed0 + i).unwrap();
                if path.values.iter().any(|&v| v <= barrier) {
                    hits += 1;
                }
            }
            let phat = hits as f64 / n as f64;
            (phat, (phat * (1.0 - phat) / n as f64).sqrt())
        };
        let (p1, se1) = estimate(0.05, 1);
        let (p2, se2) = estimate(0.025, 30_000);
        let joint = (se1 * se1 + se2 * se2).sqrt();
        assert!(
            (p1 - p2).abs() < 3.0 * joint,
            "hitting estimates moved too much under dt halving: {p1} vs {p2} (3se = {})",
            3.0 * joint
        );
    }

    #[test]
    fn path_grid_is_well_formed() {
        let p = fig_params();
        let path = simulate_path(&p, 0.3, 10.0, 0.01, 42).unwrap();
        assert_eq!(path.times.len(), path.values.len());
        assert_eq!(path.times[0], 0.0);
        assert!(path.times.windows(2).all(|w| w[1] > w[0]));
        assert!(path.values.iter().all(|&v| v >= 0.0));
        assert_eq!(path.seed, 42);
        assert!(simulate_path(&p, -0.1, 1.0, 0.01, 0).is_err());
        assert!(simulate_path(&p, 0.1, 0.005, 0.01, 0).is_err());
    }
}
