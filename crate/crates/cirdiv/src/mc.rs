//! Monte-Carlo valuation of consumption strategies — the independent
//! verification arm for the analytic value functions.
//!
//! Paths use full-truncation Euler (exact transition sampling cannot see
//! inter-grid barrier hits).  The payout rule is the discrete reading of
//! the singular-control strategies: while the spend condition holds at the
//! left endpoint of a step, the step's income `μ·dt` is consumed there and
//! the accumulated pot is flushed on entry, every payment discounted by
//! `e^{-r}` at the paying step's left endpoint.  The discretization bias is
//! O(dt) and is quantified by dt-halving in the test suites.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::solve_rstar;
use crate::error::{Error, Result};
use crate::params::CirParams;
use crate::quad::{integrate, pairwise_sum};
use crate::rng::PathRng;

/// Admissible consumption policies of the deterministic-income model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Always consume everything: `C_t = x + μt`.
    MaxSpend,
    /// Consume exactly while `r ≤ barrier`, wait otherwise.
    BarrierR(f64),
    /// Consume only at (numerical) zero; only admissible when `2b < δ²`.
    ZeroBarrier,
}

/// Simulation configuration shared by all estimators.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// Hard time cap per path.
    pub horizon: f64,
    /// Experiment seed; stream `i` of this seed drives path `i`.
    pub seed: u64,
    /// Stop a path once the level exceeds this cutoff (the return
    /// probability, and with it the dropped value, is then negligible —
    /// callers size it so the bias stays below a tenth of the standard
    /// error). `None` keeps simulating until the horizon.
    pub r_cut: Option<f64>,
    /// Average antithetic pairs (same stream, mirrored normals).
    pub antithetic: bool,
    /// Override for the zero-barrier hit width (default `1e-4·r*`).
    pub zero_eps: Option<f64>,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        McConfig {
            n_paths,
            dt,
            horizon,
            seed,
            r_cut: None,
            antithetic: false,
            zero_eps: None,
        }
    }

    pub fn with_r_cut(mut self, r_cut: f64) -> Self {
        self.r_cut = Some(r_cut);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt >= self.horizon {
            return Err(Error::Config(format!(
                "need 0 < dt < horizon, got dt = {}, horizon = {}",
                self.dt, self.horizon
            )));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Config("antithetic pairing needs an even n_paths".into()));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate with its sampling error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over √n (over pairs when antithetic).
    pub std_error: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl McEstimate {
    fn from_values(values: &[f64], cfg: &McConfig) -> Self {
        let n = values.len() as f64;
        let mean = pairwise_sum(values) / n;
        let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if values.len() > 1 {
            pairwise_sum(&centered) / (n - 1.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            n_paths: cfg.n_paths,
            dt: cfg.dt,
            horizon: cfg.horizon,
            seed: cfg.seed,
        }
    }
}

/// Paths per work unit; lanes advance in lock step inside one thread so
/// independent updates pipeline instead of serializing on the RNG.
const LANES: usize = 16;

/// Expected discounted consumption `V^C(r₀, x₀)` of a strategy.
pub fn estimate_value(
    params: &CirParams,
    mu: f64,
    strategy: Strategy,
    r0: f64,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    if r0 < 0.0 || x0 < 0.0 || mu < 0.0 {
        return Err(Error::Domain(format!(
            "need r0, x0, mu >= 0, got ({r0}, {x0}, {mu})"
        )));
    }
    let spend_level = match strategy {
        Strategy::MaxSpend => f64::INFINITY,
        Strategy::BarrierR(level) => {
            if level < 0.0 {
                return Err(Error::Domain(format!("barrier must be >= 0, got {level}")));
            }
            level
        }
        Strategy::ZeroBarrier => {
            if !params.zero_attainable() {
                return Err(Error::Regime(format!(
                    "the zero-barrier strategy needs 2b < delta^2 so the process can \
                     reach zero (got 2b = {}, delta^2 = {})",
                    2.0 * params.b,
                    params.delta_sq()
                )));
            }
            match cfg.zero_eps {
                Some(eps) => eps,
                // operational width of the {r = 0} set on a grid
                None => 1e-4 * solve_rstar(params)?.rstar,
            }
        }
    };

    let n_slots = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let n_steps = (cfg.horizon / cfg.dt).round() as u64;
    let r_cut = cfg.r_cut.unwrap_or(f64::INFINITY);
    if r_cut <= spend_level && r_cut.is_finite() && spend_level.is_finite() {
        return Err(Error::Config(format!(
            "r_cut = {r_cut} must lie above the spend level {spend_level}"
        )));
    }

    let mut values = vec![0.0f64; n_slots];
    values
        .par_chunks_mut(BLOCK)
        .enumerate()
        .for_each(|(block_idx, chunk)| {
            let base = block_idx * BLOCK;
            if cfg.antithetic {
                let mut plus = vec![0.0f64; chunk.len()];
                consumption_block(
                    params, mu, spend_level, r0, x0, cfg.dt, n_steps, r_cut, 1.0, cfg.seed,
                    base, &mut plus,
                );
                consumption_block(
                    params, mu, spend_level, r0, x0, cfg.dt, n_steps, r_cut, -1.0, cfg.seed,
                    base, chunk,
                );
                for (out, p) in chunk.iter_mut().zip(&plus) {
                    *out = 0.5 * (*out + p);
                }
            } else {
                consumption_block(
                    params, mu, spend_level, r0, x0, cfg.dt, n_steps, r_cut, 1.0, cfg.seed,
                    base, chunk,
                );
            }
        });
    Ok(McEstimate::from_values(&values, cfg))
}

/// Work-block size per rayon task; lanes are refilled from the block as
/// paths finish, so the pipeline stays full until the block drains.
const BLOCK: usize = 256;

/// `e^{-u}` for `u ∈ [0, 0.8]`: degree-11 Taylor expansion about 0.4 in
/// Horner form. The remainder is below 1.6e-14 relative on the whole
/// interval, far under the Monte-Carlo noise floor, and the FMA chain
/// pipelines across lanes where a libm call would not.
#[inline(always)]
fn exp_neg_short(u: f64) -> f64 {
    const C: f64 = 0.67032004603563930074; // e^{-0.4}
    let v = 0.4 - u; // |v| <= 0.4
    let mut acc = 1.0 / 39_916_800.0; // 1/11!
    acc = acc * v + 1.0 / 3_628_800.0;
    acc = acc * v + 1.0 / 362_880.0;
    acc = acc * v + 1.0 / 40_320.0;
    acc = acc * v + 1.0 / 5_040.0;
    acc = acc * v + 1.0 / 720.0;
    acc = acc * v + 1.0 / 120.0;
    acc = acc * v + 1.0 / 24.0;
    acc = acc * v + 1.0 / 6.0;
    acc = acc * v + 0.5;
    acc = acc * v + 1.0;
    acc = acc * v + 1.0;
    C * acc
}

/// Simulate one block of paths on `LANES` interleaved lanes. Every path
/// draws from its own `(seed, path index)` stream, so results do not
/// depend on lane scheduling or thread count.
#[allow(clippy::too_many_arguments)]
fn consumption_block(
    params: &CirParams,
    mu: f64,
    spend_level: f64,
    r0: f64,
    x0: f64,
    dt: f64,
    n_steps: u64,
    r_cut: f64,
    sign: f64,
    seed: u64,
    base: usize,
    out: &mut [f64],
) {
    let a_dt = params.a * dt;
    let b_dt = params.b * dt;
    let diff_dt = params.delta * dt.sqrt() * sign;
    let step_income = mu * dt;
    let n_block = out.len();
    // barrier-type strategies discount only at levels in [0, spend_level];
    // when that interval sits inside the short-exp domain the cheap
    // polynomial is exact to 2e-14
    let short_exp = spend_level <= 0.8;

    const EMPTY: usize = usize::MAX;
    let mut slot_path = [EMPTY; LANES];
    let mut rngs: [PathRng; LANES] = std::array::from_fn(|_| PathRng::new(0, 0));
    let mut x = [0.0f64; LANES];
    let mut pot = [0.0f64; LANES];
    let mut total = [0.0f64; LANES];
    let mut steps_left = [0u64; LANES];

    let mut next = 0usize;
    let mut n_live = 0usize;
    for j in 0..LANES.min(n_block) {
        slot_path[j] = next;
        rngs[j] = PathRng::new(seed, (base + next) as u64);
        x[j] = r0;
        pot[j] = x0;
        total[j] = 0.0;
        steps_left[j] = n_steps;
        next += 1;
        n_live += 1;
    }

    while n_live > 0 {
        for j in 0..LANES {
            if slot_path[j] == EMPTY {
                continue;
            }
            let level = x[j].max(0.0);
            let mut done = steps_left[j] == 0;
            if !done {
                if level <= spend_level {
                    let disc = if short_exp { exp_neg_short(level) } else { (-level).exp() };
                    total[j] += (pot[j] + step_income) * disc;
                    pot[j] = 0.0;
                } else {
                    pot[j] += step_income;
                }
                // dropped value is the documented truncation bias
                done = level >= r_cut;
            }
            if done {
                out[slot_path[j]] = total[j];
                if next < n_block {
                    slot_path[j] = next;
                    rngs[j] = PathRng::new(seed, (base + next) as u64);
                    x[j] = r0;
                    pot[j] = x0;
                    total[j] = 0.0;
                    steps_left[j] = n_steps;
                    next += 1;
                } else {
                    slot_path[j] = EMPTY;
                    n_live -= 1;
                }
                continue;
            }
            let z: f64 = rngs[j].sample(StandardNormal);
            x[j] += a_dt * level + b_dt + diff_dt * level.sqrt() * z;
            steps_left[j] -= 1;
        }
    }
}

/// One recorded strategy path: grid times, discount level, ex-consumption
/// wealth and accumulated consumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsumptionTrace {
    pub path_id: u64,
    pub times: Vec<f64>,
    pub levels: Vec<f64>,
    pub wealth: Vec<f64>,
    pub consumed: Vec<f64>,
    /// The discounted payout of this path, computed with the same
    /// arithmetic as the estimator kernel.
    pub discounted_total: f64,
}

/// Re-run path `path_id` of an [`estimate_value`] experiment and record it.
///
/// This is the plain reference implementation of the lane kernel: same
/// streams, same update order, bit-identical payout (asserted in tests).
pub fn trace_path(
    params: &CirParams,
    mu: f64,
    strategy: Strategy,
    r0: f64,
    x0: f64,
    cfg: &McConfig,
    path_id: u64,
) -> Result<ConsumptionTrace> {
    cfg.validate()?;
    let spend_level = match strategy {
        Strategy::MaxSpend => f64::INFINITY,
        Strategy::BarrierR(level) => level,
        Strategy::ZeroBarrier => match cfg.zero_eps {
            Some(eps) => eps,
            None => 1e-4 * solve_rstar(params)?.rstar,
        },
    };
    let n_steps = (cfg.horizon / cfg.dt).round() as u64;
    let r_cut = cfg.r_cut.unwrap_or(f64::INFINITY);
    let short_exp = spend_level <= 0.8;
    let mut rng = PathRng::new(cfg.seed, path_id);
    let step_income = mu * cfg.dt;
    let sqrt_dt = cfg.dt.sqrt();
    let (mut x, mut pot, mut consumed) = (r0, x0, 0.0);
    let mut total = 0.0;
    let mut trace = ConsumptionTrace {
        path_id,
        times: vec![0.0],
        levels: vec![r0.max(0.0)],
        wealth: vec![x0],
        consumed: vec![0.0],
        discounted_total: 0.0,
    };
    for k in 0..n_steps {
        let level = x.max(0.0);
        if level <= spend_level {
            let disc = if short_exp { exp_neg_short(level) } else { (-level).exp() };
            total += (pot + step_income) * disc;
            consumed += pot + step_income;
            pot = 0.0;
        } else {
            pot += step_income;
        }
        if level >= r_cut {
            break;
        }
        let z: f64 = rng.sample(StandardNormal);
        x += params.a * cfg.dt * level
            + params.b * cfg.dt
            + params.delta * sqrt_dt * level.sqrt() * z;
        trace.times.push((k + 1) as f64 * cfg.dt);
        trace.levels.push(x.max(0.0));
        trace.wealth.push(pot);
        trace.consumed.push(consumed);
    }
    trace.discounted_total = total;
    Ok(trace)
}

/// Estimates of the hitting probability φ₁ and the hitting-time functional
/// φ₂ = E[ρ 1{ρ<∞}] for a down-crossing of `target` from `r0`.
pub fn hitting_stats(
    params: &CirParams,
    r0: f64,
    target: f64,
    cfg: &McConfig,
) -> Result<(McEstimate, McEstimate)> {
    cfg.validate()?;
    if !(0.0..=r0).contains(&target) {
        return Err(Error::Domain(format!(
            "need 0 <= target <= r0, got target = {target}, r0 = {r0}"
        )));
    }
    let n_steps = (cfg.horizon / cfg.dt).round() as u64;
    let r_cut = cfg.r_cut.unwrap_or(f64::INFINITY);
    let (a, b, delta) = (params.a, params.b, params.delta);
    let sqrt_dt = cfg.dt.sqrt();

    let mut hit_flags = vec![0.0f64; cfg.n_paths];
    let mut hit_times = vec![0.0f64; cfg.n_paths];
    hit_flags
        .par_chunks_mut(LANES)
        .zip(hit_times.par_chunks_mut(LANES))
        .enumerate()
        .for_each(|(chunk_idx, (flags, times))| {
            for j in 0..flags.len() {
                let mut rng = PathRng::new(cfg.seed, (chunk_idx * LANES + j) as u64);
                let mut x = r0;
                for k in 0..=n_steps {
                    let level = if x > 0.0 { x } else { 0.0 };
                    if level <= target {
                        flags[j] = 1.0;
                        times[j] = k as f64 * cfg.dt;
                        break;
                    }
                    if level >= r_cut || k == n_steps {
                        break;
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    x += (a * level + b) * cfg.dt + delta * level.sqrt() * sqrt_dt * z;
                }
            }
        });
    Ok((
        McEstimate::from_values(&hit_flags, cfg),
        McEstimate::from_values(&hit_times, cfg),
    ))
}

/// Expected last exit time from zero, `E₀[λ₀]`, by quadrature of the
/// closed-form density ratio
/// `E₀[λ₀] = ∫₀^∞ t (e^{at}−1)^{-2b/δ²} dt / ∫₀^∞ (e^{az}−1)^{-2b/δ²} dz`;
/// finite exactly when `2b < δ²`.
pub fn last_exit_expectation(params: &CirParams) -> Result<f64> {
    last_exit_expectation_with_tol(params, 1e-10)
}

/// Same with an explicit relative quadrature tolerance (used by the
/// self-consistency refinement tests).
pub fn last_exit_expectation_with_tol(params: &CirParams, tol: f64) -> Result<f64> {
    if !params.zero_attainable() {
        return Err(Error::Regime(format!(
            "the last exit time from zero has infinite expectation unless 2b < delta^2 \
             (got 2b = {}, delta^2 = {})",
            2.0 * params.b,
            params.delta_sq()
        )));
    }
    let a = params.a;
    let e = params.weight_power(); // 2b/δ² < 1
    let density = |t: f64| ((a * t).exp_m1()).powf(-e);
    // (e^{at}-1)^{-e} ~ (at)^{-e} at zero (integrable) and e^{-e·a·t} in the
    // tail; truncate when the exponential factor is below e^{-60}.
    let t_max = 60.0 / (e * a);
    let mut num = 0.0;
    let mut den = 0.0;
    let breaks = [0.0, 0.5 / a, 4.0 / a, 15.0 / a, t_max];
    for win in breaks.windows(2) {
        num += integrate(|t| t * density(t), win[0], win[1], tol, 0.0)?;
        den += integrate(&density, win[0], win[1], tol, 0.0)?;
    }
    Ok(num / den)
}

/// Monte-Carlo arm of the last-exit law: mean of the last grid time the
/// path sits at level ≤ `eps`, started from zero, truncated at `r_cut`.
pub fn last_exit_mc(params: &CirParams, eps: f64, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !params.zero_attainable() {
        return Err(Error::Regime("last exit from zero needs 2b < delta^2".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let n_steps = (cfg.horizon / cfg.dt).round() as u64;
    let r_cut = cfg.r_cut.unwrap_or(f64::INFINITY);
    let (a, b, delta) = (params.a, params.b, params.delta);
    let sqrt_dt = cfg.dt.sqrt();

    let mut values = vec![0.0f64; cfg.n_paths];
    values
        .par_chunks_mut(LANES)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            let k_lanes = chunk.len();
            let mut rngs: [PathRng; LANES] =
                std::array::from_fn(|j| PathRng::new(cfg.seed, (chunk_idx * LANES + j) as u64));
            let mut x = [0.0f64; LANES];
            let mut last = [0.0f64; LANES];
            let mut live = [false; LANES];
            live[..k_lanes].fill(true);
            let mut n_live = k_lanes;
            let mut k = 0u64;
            while n_live > 0 {
                for j in 0..k_lanes {
                    if !live[j] {
                        continue;
                    }
                    let level = if x[j] > 0.0 { x[j] } else { 0.0 };
                    if level <= eps {
                        last[j] = k as f64 * cfg.dt;
                    } else if level >= r_cut {
                        live[j] = false;
                        n_live -= 1;
                        continue;
                    }
                    let z: f64 = rngs[j].sample(StandardNormal);
                    x[j] += (a * level + b) * cfg.dt + delta * level.sqrt() * sqrt_dt * z;
                }
                k += 1;
                if k > n_steps {
                    break;
                }
            }
            chunk.copy_from_slice(&last[..k_lanes]);
        });
    Ok(McEstimate::from_values(&values, cfg))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_n − G_m|`.
pub fn two_sample_ks(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Critical value of the two-sample KS test at level `alpha`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
