//! Acceptance suite: one check per shipped guarantee, each printed as a
//! PASS/FAIL line with its runtime (`--nocapture` shows them live).
//!
//! The checks run sequentially inside a single test so every Monte-Carlo
//! stage gets the whole machine and the per-check wall-clock budgets mean
//! something.

use std::fmt::Write as _;
use std::time::Instant;

use cirdiv::value::{h_performance, Branch, ZeroBarrierValue};
use cirdiv::{
    barrier, h_ratio, last_exit_expectation, last_exit_mc, mc, BrownianModel, CirParams,
    Functionals, McConfig, McEstimate, Strategy, ValueFunction,
};

const FIG_A: f64 = 0.001;
const FIG_B: f64 = 0.002;

struct Outcome {
    label: &'static str,
    passed: bool,
    seconds: f64,
    budget: f64,
    detail: String,
}

fn fig_params(delta: f64) -> CirParams {
    CirParams::new(FIG_A, FIG_B, delta).unwrap()
}

fn within(text: &mut String, name: &str, lhs: f64, rhs: f64, tol: f64, ok: &mut bool) {
    let diff = (lhs - rhs).abs();
    let pass = diff <= tol;
    *ok &= pass;
    let _ = writeln!(text, "    {name}: |{lhs:.6} - {rhs:.6}| = {diff:.3e} (tol {tol:.3e})");
}

fn check(text: &mut String, name: &str, cond: bool, detail: String, ok: &mut bool) {
    *ok &= cond;
    let _ = writeln!(text, "    {name}: {} ({detail})", if cond { "ok" } else { "VIOLATED" });
}

fn se_gap(a: &McEstimate, b: &McEstimate) -> f64 {
    (a.std_error * a.std_error + b.std_error * b.std_error).sqrt()
}

/// 1. Existence/uniqueness of the waiting barrier at the example
///    parameters: tight root residual inside (0, R].
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = fig_params(0.07);
    let r_cap = p.b / (p.delta_sq() / 2.0 - p.a);
    within(&mut text, "R arithmetic", r_cap, 1.3793103448275862, 1e-12, &mut ok);
    match barrier::solve_rstar(&p) {
        Ok(root) => {
            check(
                &mut text,
                "residual |h(r*)+1| < 1e-10",
                root.residual < 1e-10,
                format!("residual {:.3e}, iterations {}", root.residual, root.iterations),
                &mut ok,
            );
            check(
                &mut text,
                "0 < r* <= R",
                root.rstar > 0.0 && root.rstar <= r_cap,
                format!("r* = {:.12}", root.rstar),
                &mut ok,
            );
        }
        Err(e) => check(&mut text, "solver", false, format!("{e}"), &mut ok),
    }
    Outcome { label: "barrier existence/uniqueness", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 1.0, detail: text }
}

/// 2. Smooth fit at r*: value and r-slope glue for every wealth level,
///    second derivatives glue only at zero wealth.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let vf = ValueFunction::new(&fig_params(0.07), 0.5).unwrap();
    let rstar = vf.barrier().unwrap().rstar;
    for &x in &[0.0, 1.0, 5.0] {
        let f = vf.value_f(rstar, x).unwrap();
        let g = vf.value_g(rstar, x).unwrap();
        within(&mut text, &format!("|F-G| at x={x}"), f, g, 1e-5, &mut ok);
        let fr = vf.value_f_r(rstar, x).unwrap();
        let gr = vf.value_g_r(rstar, x).unwrap();
        within(&mut text, &format!("|F_r-G_r| at x={x}"), fr, gr, 1e-5, &mut ok);
    }
    let d0 = (vf.value_f_rr(rstar, 0.0).unwrap() - vf.value_g_rr(rstar, 0.0).unwrap()).abs();
    check(&mut text, "|F_rr-G_rr| < 1e-4 at x=0", d0 < 1e-4, format!("{d0:.3e}"), &mut ok);
    let d1 = (vf.value_f_rr(rstar, 1.0).unwrap() - vf.value_g_rr(rstar, 1.0).unwrap()).abs();
    check(&mut text, "|F_rr-G_rr| > 1e-3 at x=1", d1 > 1e-3, format!("{d1:.3e}"), &mut ok);

    Outcome { label: "smooth fit", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 5.0, detail: text }
}

/// 3. The variational inequality holds on a 30x10 grid with the correct
///    active branch on each side of the barrier.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let vf = ValueFunction::new(&fig_params(0.07), 0.5).unwrap();
    let rstar = vf.barrier().unwrap().rstar;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..30 {
        let r = (rstar + 3.0) * i as f64 / 29.0;
        for j in 0..10 {
            let x = 5.0 * j as f64 / 9.0;
            if r == 0.0 {
                // the generator degenerates on the boundary; only the
                // gradient branch is asserted there
                let h = 1e-6;
                let vx = (vf.evaluate(0.0, x + h).unwrap() - vf.evaluate(0.0, x).unwrap()) / h;
                let grad: f64 = 1.0 - vx;
                ok &= grad.abs() <= 1e-4;
                worst = worst.max(grad.abs());
                continue;
            }
            let rep = vf.hjb_check(r, x).unwrap();
            let spend_expected = r <= rstar;
            if !(rep.satisfies(1e-4) && (rep.active == Branch::Spend) == spend_expected) {
                ok = false;
                let _ = writeln!(
                    text,
                    "    violation at ({r:.4}, {x:.3}): gen {:.3e}, grad {:.3e}, branch {:?}",
                    rep.generator_part, rep.gradient_part, rep.active
                );
            }
            worst = worst
                .max(rep.generator_part.max(0.0))
                .max(rep.gradient_part.max(0.0))
                .max(match rep.active {
                    Branch::Spend => rep.gradient_part.abs(),
                    _ => rep.generator_part.abs(),
                });
            checked += 1;
        }
    }
    let _ = writeln!(text, "    {checked} interior points, worst residual {worst:.3e} (tol 1e-4)");
    Outcome { label: "HJB verification on grid", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 10.0, detail: text }
}

/// 4. The barrier-policy simulation reproduces the analytic value function
///    on both sides of the barrier: 1e5 paths, dt = 1e-2, 3 SE.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = fig_params(0.07);
    let mu = 0.5;
    let vf = ValueFunction::new(&p, mu).unwrap();
    let rstar = vf.barrier().unwrap().rstar;
    // r_cut = 20: dropped value is bounded by (pot e^{-r*} + F~)phi1 + mu phi2
    // < 0.06, under a tenth of the ~1.1 standard error; horizon bias < 0.07
    // (measured by same-seed horizon doubling during calibration).
    let cfg = McConfig::new(100_000, 1e-2, 10_000.0, 20240801).with_r_cut(20.0);
    let points = [(rstar / 2.0, 1.0), (rstar + 0.3, 1.0)];
    let (est_low, est_high) = rayon::join(
        || mc::estimate_value(&p, mu, Strategy::BarrierR(rstar), points[0].0, points[0].1, &cfg),
        || mc::estimate_value(&p, mu, Strategy::BarrierR(rstar), points[1].0, points[1].1, &cfg),
    );
    for ((r0, x0), est) in points.iter().zip([est_low.unwrap(), est_high.unwrap()]) {
        let analytic = vf.evaluate(*r0, *x0).unwrap();
        let gap = (est.mean - analytic).abs();
        check(
            &mut text,
            &format!("MC vs v at ({r0:.4}, {x0})"),
            gap <= 3.0 * est.std_error,
            format!("mc {:.4} vs {analytic:.4}, gap {gap:.3} <= 3se {:.3}", est.mean, 3.0 * est.std_error),
            &mut ok,
        );
    }
    Outcome { label: "MC vs analytic (barrier policy)", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 300.0, detail: text }
}

/// 5. Low volatility: maximal spending matches its closed form and is not
///    beaten by a waiting barrier.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = CirParams::new(0.1, 0.05, 0.2).unwrap();
    let mu = 0.5;
    let (r0, x0) = (0.3, 1.0);
    let analytic = cirdiv::value_h(&p, mu, r0, x0).unwrap();
    let cfg = McConfig::new(100_000, 1e-2, 160.0, 51_001);
    let max_spend = mc::estimate_value(&p, mu, Strategy::MaxSpend, r0, x0, &cfg).unwrap();
    check(
        &mut text,
        "max-spend MC vs H",
        (max_spend.mean - analytic).abs() <= 3.0 * max_spend.std_error,
        format!("mc {:.5} vs {analytic:.5} (3se {:.5})", max_spend.mean, 3.0 * max_spend.std_error),
        &mut ok,
    );
    let waiting_cfg = McConfig::new(100_000, 1e-2, 400.0, 51_002).with_r_cut(10.0);
    let waiting = mc::estimate_value(&p, mu, Strategy::BarrierR(0.5), r0, x0, &waiting_cfg).unwrap();
    let joint = se_gap(&max_spend, &waiting);
    check(
        &mut text,
        "max-spend dominates barrier 0.5",
        max_spend.mean >= waiting.mean - 3.0 * joint,
        format!("{:.5} vs {:.5} (3 joint se {:.5})", max_spend.mean, waiting.mean, 3.0 * joint),
        &mut ok,
    );
    Outcome { label: "low-volatility optimality", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 300.0, detail: text }
}

/// 6. The zero barrier is never optimal: local HJB violation at the origin,
///    dominance of the optimal barrier, and the closed-form return function
///    matches its own simulation.
fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = fig_params(0.09);
    let mu = 0.5;
    let zb = ZeroBarrierValue::new(&p, mu).unwrap();
    let r_eps = 1e-4;
    let witness = (-r_eps as f64).exp() - zb.phi1_hat(r_eps).unwrap();
    check(&mut text, "e^-r - phi1_hat(r) > 0 at r = 1e-4", witness > 0.0, format!("{witness:.6e}"), &mut ok);

    let root = barrier::solve_rstar(&p).unwrap();
    let (r0, x0) = (0.2, 1.0);
    // horizon sized so the surviving-path mass is ~1e-5 of the value scale;
    // r_cut bound: pot*phi1_hat(45) < 0.04
    let cfg = McConfig::new(60_000, 2e-2, 25_000.0, 60_601).with_r_cut(45.0);
    let (zero_est, barrier_est) = rayon::join(
        || mc::estimate_value(&p, mu, Strategy::ZeroBarrier, r0, x0, &cfg),
        || mc::estimate_value(&p, mu, Strategy::BarrierR(root.rstar), r0, x0, &cfg),
    );
    let zero_est = zero_est.unwrap();
    let barrier_est = barrier_est.unwrap();
    let joint = se_gap(&zero_est, &barrier_est);
    check(
        &mut text,
        "zero-barrier below optimal barrier",
        zero_est.mean <= barrier_est.mean + 3.0 * joint,
        format!("{:.3} vs {:.3} (3 joint se {:.3})", zero_est.mean, barrier_est.mean, 3.0 * joint),
        &mut ok,
    );

    // analytic V0 against its own simulation, dt allowance measured by
    // halving dt on a smaller run
    let v0 = zb.evaluate(r0, x0).unwrap();
    let half = McConfig::new(20_000, 1e-2, 25_000.0, 60_602).with_r_cut(45.0);
    let zero_half = mc::estimate_value(&p, mu, Strategy::ZeroBarrier, r0, x0, &half).unwrap();
    let dt_allowance = (zero_est.mean - zero_half.mean).abs();
    let tol = 3.0 * se_gap(&zero_est, &zero_half) + dt_allowance;
    check(
        &mut text,
        "V0 vs zero-barrier MC",
        (v0 - zero_est.mean).abs() <= tol,
        format!("analytic {v0:.3} vs mc {:.3} (tol {tol:.3}, dt allowance {dt_allowance:.3})", zero_est.mean),
        &mut ok,
    );
    // hit-width sensitivity: a ten times tighter zero band moves the
    // estimate by less than its own noise
    let tight = McConfig {
        zero_eps: Some(1e-5 * root.rstar),
        ..McConfig::new(10_000, 2e-2, 25_000.0, 60_603).with_r_cut(45.0)
    };
    let tight_est = mc::estimate_value(&p, mu, Strategy::ZeroBarrier, r0, x0, &tight).unwrap();
    let _ = writeln!(
        text,
        "    eps_hit sensitivity: default {:.3}, eps/10 {:.3} (se {:.3})",
        zero_est.mean, tight_est.mean, tight_est.std_error
    );

    Outcome { label: "zero-barrier suboptimality", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 300.0, detail: text }
}

/// 7. The last-exit law: the quadrature is internally stable and the path
///    statistic reproduces it.
fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = fig_params(0.09);
    let coarse = mc::last_exit_expectation_with_tol(&p, 1e-8).unwrap();
    let fine = mc::last_exit_expectation_with_tol(&p, 1e-12).unwrap();
    check(
        &mut text,
        "two refinements agree to 1e-8 relative",
        (coarse - fine).abs() <= 1e-8 * fine.abs(),
        format!("{coarse:.10} vs {fine:.10}"),
        &mut ok,
    );
    check(&mut text, "finite expectation", fine.is_finite() && fine > 0.0, format!("{fine:.4}"), &mut ok);

    let quadrature = last_exit_expectation(&p).unwrap();
    let cfg = McConfig::new(50_000, 1e-2, 35_000.0, 70_701).with_r_cut(40.0);
    let est = last_exit_mc(&p, 1e-3, &cfg).unwrap();
    check(
        &mut text,
        "MC last-exit mean within 3 SE (eps = 1e-3)",
        (est.mean - quadrature).abs() <= 3.0 * est.std_error,
        format!("mc {:.2} vs quadrature {quadrature:.2} (3se {:.2})", est.mean, 3.0 * est.std_error),
        &mut ok,
    );
    Outcome { label: "last-exit law", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 300.0, detail: text }
}

/// 8. Brownian risk model: root identities, smooth-fit identity, dividend
///    simulation against the closed form, and barrier-grid dominance.
fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let (mu, sigma, b) = (1.0, 1.0, 0.05);
    let model = BrownianModel::new(mu, sigma, b, 0.3).unwrap();
    let quad = |s: f64| 0.5 * sigma * sigma * s * s + mu * s - b;
    check(
        &mut text,
        "root identities to 1e-12",
        quad(model.theta).abs() < 1e-12
            && quad(model.zeta).abs() < 1e-12 * model.zeta * model.zeta
            && (model.theta + model.zeta + 2.0 * mu / (sigma * sigma)).abs() < 1e-12 * (model.theta.abs() + model.zeta.abs()),
        format!("theta {:.12}, zeta {:.6}", model.theta, model.zeta),
        &mut ok,
    );
    let num = (model.theta * model.varrho).exp() - (model.zeta * model.varrho).exp();
    let den = model.theta * (model.theta * model.varrho).exp()
        - model.zeta * (model.zeta * model.varrho).exp();
    within(&mut text, "smooth-fit identity = mu/b", num / den, mu / b, 1e-10 * (mu / b), &mut ok);

    let r0 = 0.5;
    let target = mu / b * (-r0 as f64).exp();
    let cfg = McConfig::new(100_000, 1e-3, 250.0, 80_801).with_r_cut(45.0);
    let est = model.mc_dividends(r0, model.varrho, &cfg).unwrap();
    check(
        &mut text,
        "dividend MC vs (mu/b)e^{-1/2}",
        (est.mean - target).abs() <= 3.0 * est.std_error,
        format!("mc {:.4} vs {target:.4} (3se {:.4})", est.mean, 3.0 * est.std_error),
        &mut ok,
    );

    let small = McConfig::new(20_000, 1e-3, 250.0, 80_802).with_r_cut(45.0);
    let at_optimum = model.mc_dividends(r0, model.varrho, &small).unwrap();
    for factor in [0.5, 0.8, 1.2, 2.0] {
        let alt = model
            .mc_dividends_at_barrier(factor * model.varrho, r0, model.varrho, &small)
            .unwrap();
        let joint = se_gap(&at_optimum, &alt);
        check(
            &mut text,
            &format!("dominates barrier {factor}x"),
            at_optimum.mean >= alt.mean - 3.0 * joint,
            format!("{:.4} vs {:.4}", at_optimum.mean, alt.mean),
            &mut ok,
        );
    }
    Outcome { label: "Brownian risk model", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 600.0, detail: text }
}

/// 9. Probabilistic facts: exact transition sampling agrees in law with the
///    Euler path, the Laplace functional decreases in the low-vol regime
///    and solves its PDE.
fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let p = CirParams::new(0.1, 0.05, 0.2).unwrap();
    let (r0, horizon) = (0.3, 2.0);
    let n = 10_000usize;
    let dt = horizon / 1000.0;
    let exact: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = cirdiv::rng::PathRng::new(90_901, i as u64);
            cirdiv::sample_transition(&p, r0, horizon, &mut rng).unwrap()
        })
        .collect();
    let euler: Vec<f64> = (0..n)
        .map(|i| {
            let path = cirdiv::simulate_path(&p, r0, horizon, dt, 1_090_000 + i as u64).unwrap();
            *path.values.last().unwrap()
        })
        .collect();
    let d = mc::two_sample_ks(&exact, &euler);
    let crit = mc::ks_critical_value(0.01, n, n);
    check(&mut text, "KS below the 1% critical value", d < crit, format!("D {d:.5} vs {crit:.5}"), &mut ok);

    let mut monotone = true;
    for &r in &[0.0, 0.3, 1.0, 4.0] {
        let mut prev = f64::INFINITY;
        for i in 0..=50 {
            let m = cirdiv::laplace_m(&p, r, i as f64).unwrap();
            monotone &= m < prev || i == 0;
            prev = m;
        }
    }
    check(&mut text, "M strictly decreasing in t (low vol)", monotone, "grid 4 x 50".into(), &mut ok);

    let mut worst: f64 = 0.0;
    let h = 1e-4;
    for &r in &[0.2, 0.5, 1.0, 2.0] {
        for &t in &[0.5, 1.0, 5.0] {
            let m = |rr: f64, tt: f64| cirdiv::laplace_m(&p, rr, tt).unwrap();
            let m_r = (m(r + h, t) - m(r - h, t)) / (2.0 * h);
            let m_rr = (m(r + h, t) - 2.0 * m(r, t) + m(r - h, t)) / (h * h);
            let m_t = (m(r, t + h) - m(r, t - h)) / (2.0 * h);
            worst = worst.max(((p.a * r + p.b) * m_r + 0.5 * p.delta_sq() * r * m_rr - m_t).abs());
        }
    }
    check(&mut text, "PDE residual of M < 1e-5", worst < 1e-5, format!("worst {worst:.3e}"), &mut ok);

    Outcome { label: "probabilistic facts", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 120.0, detail: text }
}

/// 10. The barrier falls strictly as volatility rises, and the sweep is
///     emitted as the plot-source CSV.
fn criterion_10() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut text = String::new();

    let mut csv = String::from("delta,delta_sq,rstar\n");
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for i in 0..=14 {
        let delta = 0.05 + 0.005 * i as f64;
        let p = fig_params(delta);
        let root = barrier::solve_rstar(&p).unwrap();
        monotone &= root.rstar < prev;
        prev = root.rstar;
        let _ = writeln!(csv, "{:.17e},{:.17e},{:.17e}", delta, delta * delta, root.rstar);
    }
    check(&mut text, "r* strictly decreasing over delta in [0.05, 0.12]", monotone, "15 points".into(), &mut ok);

    let out = std::env::temp_dir().join("cirdiv_barrier_sweep.csv");
    std::fs::write(&out, &csv).unwrap();
    let reread = std::fs::read_to_string(&out).unwrap();
    check(
        &mut text,
        "plot-source CSV emitted",
        reread.lines().count() == 16 && reread.starts_with("delta,"),
        format!("{}", out.display()),
        &mut ok,
    );

    Outcome { label: "barrier-volatility sweep", passed: ok, seconds: start.elapsed().as_secs_f64(), budget: 30.0, detail: text }
}

#[test]
fn acceptance_criteria() {
    let checks: [fn() -> Outcome; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut failures = Vec::new();
    for (i, run) in checks.iter().enumerate() {
        let outcome = run();
        let in_budget = outcome.seconds < outcome.budget;
        let verdict = if outcome.passed && in_budget { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} [{verdict}] {:<38} {:>7.1}s / {:>5.0}s budget",
            i + 1,
            outcome.label,
            outcome.seconds,
            outcome.budget
        );
        print!("{}", outcome.detail);
        if !(outcome.passed && in_budget) {
            failures.push(format!(
                "criterion {} ({}): checks {}, runtime {:.1}s vs budget {:.0}s",
                i + 1,
                outcome.label,
                if outcome.passed { "passed" } else { "FAILED" },
                outcome.seconds,
                outcome.budget
            ));
        }
    }
    assert!(failures.is_empty(), "acceptance failures:\n{}", failures.join("\n"));
}
