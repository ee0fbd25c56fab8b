//! `cirdiv` — optimal consumption/dividend policies under exponential CIR
//! discounting, on the command line.
//!
//! Data goes to stdout (or `--output`), logs and structured errors go to
//! stderr. Exit codes: 0 success, 2 validation/regime error, 3 numerical
//! failure. All output is deterministic for a fixed invocation and seed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cirdiv::value::Branch;
use cirdiv::{
    barrier, mc, BrownianModel, CirParams, Error, McConfig, Strategy, ValueFunction,
};

/// Output schema tag; golden files key on it surviving additive changes.
const SCHEMA: &str = "cirdiv/1";

#[derive(Parser)]
#[command(name = "cirdiv", version, about = "Consumption and dividend barriers under exponential CIR discounting")]
struct Cli {
    /// Worker threads for the Monte-Carlo commands
    /// (falls back to the CIRDIV_THREADS environment variable).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the data stream to a file instead of stdout.
    #[arg(long, global = true)]
    output: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProcessArgs {
    /// Drift slope a > 0 of dr = (ar+b)dt + delta sqrt(r) dW.
    #[arg(long)]
    a: f64,
    /// Drift intercept b > 0.
    #[arg(long)]
    b: f64,
    /// Volatility coefficient delta > 0.
    #[arg(long)]
    delta: f64,
}

impl ProcessArgs {
    fn params(&self) -> Result<CirParams, Error> {
        CirParams::new(self.a, self.b, self.delta)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal waiting barrier r* and the smooth-fit constant.
    Barrier {
        #[command(flatten)]
        process: ProcessArgs,
        /// Income rate for the smooth-fit constant.
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
    },
    /// Evaluate the value function on a point or grid (CSV: r,x,v,branch).
    Value {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long)]
        mu: f64,
        /// Single evaluation level, or a grid as lo:hi:n.
        #[arg(long, allow_hyphen_values = true)]
        r: String,
        /// Single wealth, or a grid as lo:hi:n.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Pointwise HJB diagnostics on a grid (CSV: r,x,Lv,grad,active).
    Hjb {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long)]
        mu: f64,
        #[arg(long, allow_hyphen_values = true)]
        r: String,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Monte-Carlo valuation of a consumption strategy (JSON estimate).
    Simulate {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long)]
        mu: f64,
        /// One of: max | barrier:<level> | zero.
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        x0: f64,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        seed: u64,
        /// Stop paths above this level (default: run to the horizon).
        #[arg(long)]
        r_cut: Option<f64>,
        /// Average antithetic pairs.
        #[arg(long)]
        antithetic: bool,
        /// Zero-barrier hit width override.
        #[arg(long)]
        zero_eps: Option<f64>,
        /// Also dump the first few paths as CSV (path_id,t,r,X,C).
        #[arg(long)]
        emit_paths: Option<std::path::PathBuf>,
        /// How many paths to dump into --emit-paths.
        #[arg(long, default_value_t = 3)]
        emit_count: u64,
    },
    /// Brownian risk model: roots, dividend barrier, value, optional MC.
    Brownian {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        r0: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Run the dividend simulation: paths dt horizon seed.
        #[arg(long, num_args = 4, value_names = ["PATHS", "DT", "HORIZON", "SEED"])]
        simulate: Option<Vec<f64>>,
    },
    /// Expected last exit time from zero (quadrature, optional MC arm).
    LastExit {
        #[command(flatten)]
        process: ProcessArgs,
        /// Run the path-statistic check: paths dt horizon seed eps.
        #[arg(long, num_args = 5, value_names = ["PATHS", "DT", "HORIZON", "SEED", "EPS"])]
        mc: Option<Vec<f64>>,
    },
    /// Simulate one path of the discounting process (CSV: t,r).
    Path {
        #[command(flatten)]
        process: ProcessArgs,
        #[arg(long, default_value_t = 0.0)]
        r0: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Plot-source tables (CSV).
    Table {
        /// Value-function surface v(r,x) with the piece labeled.
        #[arg(long, conflicts_with_all = ["fig2_right", "fig1"])]
        fig2_left: bool,
        /// Barrier level r* against delta^2.
        #[arg(long, conflicts_with = "fig1")]
        fig2_right: bool,
        /// Three sample paths at delta in {0.09, 0.045, 0.02}.
        #[arg(long)]
        fig1: bool,
        #[arg(long, default_value_t = 0.001)]
        a: f64,
        #[arg(long, default_value_t = 0.002)]
        b: f64,
        #[arg(long, default_value_t = 0.07)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// 17 significant digits: round-trippable f64 text for CSV cells.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse "lo:hi:n" or a single number into a grid.
fn parse_grid(spec: &str, name: &str) -> Result<Vec<f64>, Error> {
    let bad = |msg: String| Error::Config(format!("--{name}: {msg}"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [single] => single
            .parse::<f64>()
            .map(|v| vec![v])
            .map_err(|e| bad(format!("{e}"))),
        [lo, hi, n] => {
            let lo: f64 = lo.parse().map_err(|e| bad(format!("{e}")))?;
            let hi: f64 = hi.parse().map_err(|e| bad(format!("{e}")))?;
            let n: usize = n.parse().map_err(|e| bad(format!("{e}")))?;
            if n < 2 || hi <= lo {
                return Err(bad("grid needs hi > lo and n >= 2".into()));
            }
            Ok((0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect())
        }
        _ => Err(bad("expected a number or lo:hi:n".into())),
    }
}

fn parse_strategy(spec: &str) -> Result<Strategy, Error> {
    if spec == "max" {
        return Ok(Strategy::MaxSpend);
    }
    if spec == "zero" {
        return Ok(Strategy::ZeroBarrier);
    }
    if let Some(level) = spec.strip_prefix("barrier:") {
        let level: f64 = level
            .parse()
            .map_err(|e| Error::Config(format!("--strategy barrier:<level>: {e}")))?;
        return Ok(Strategy::BarrierR(level));
    }
    Err(Error::Config(format!(
        "unknown strategy {spec:?}; expected max | barrier:<level> | zero"
    )))
}

fn branch_name(branch: Branch) -> &'static str {
    match branch {
        Branch::Spend => "spend",
        Branch::Wait => "wait",
        Branch::Capped => "capped",
    }
}

fn run(cli: &Cli) -> Result<String, Error> {
    match &cli.command {
        Command::Barrier { process, mu } => {
            let params = process.params()?;
            let (solution, _functionals) = barrier::solve(&params, *mu)?;
            let r_cap = params.barrier_cap()?;
            Ok(serde_json::to_string_pretty(&json!({
                "schema": SCHEMA,
                "a": params.a, "b": params.b, "delta": params.delta, "mu": mu,
                "rstar": solution.rstar,
                "tildeF": solution.tilde_f,
                "R": r_cap,
                "residual": solution.residual,
                "iterations": solution.iterations,
                "bracket": [solution.bracket.0, solution.bracket.1],
            }))
            .expect("serializable") + "\n")
        }
        Command::Value { process, mu, r, x } => {
            let params = process.params()?;
            let vf = ValueFunction::new(&params, *mu)?;
            let mut out = String::from("r,x,v,branch\n");
            for r in parse_grid(r, "r")? {
                for &x in &parse_grid(x, "x")? {
                    let (v, branch) = vf.evaluate_with_branch(r, x)?;
                    let _ = writeln!(out, "{},{},{},{}", fmt17(r), fmt17(x), fmt17(v), branch_name(branch));
                }
            }
            Ok(out)
        }
        Command::Hjb { process, mu, r, x } => {
            let params = process.params()?;
            let vf = ValueFunction::new(&params, *mu)?;
            let mut out = String::from("r,x,Lv,grad,active\n");
            for r in parse_grid(r, "r")? {
                for &x in &parse_grid(x, "x")? {
                    let rep = vf.hjb_check(r, x)?;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        fmt17(r),
                        fmt17(x),
                        fmt17(rep.generator_part),
                        fmt17(rep.gradient_part),
                        branch_name(rep.active)
                    );
                }
            }
            Ok(out)
        }
        Command::Simulate {
            process,
            mu,
            strategy,
            r0,
            x0,
            paths,
            dt,
            horizon,
            seed,
            r_cut,
            antithetic,
            zero_eps,
            emit_paths,
            emit_count,
        } => {
            let params = process.params()?;
            let strategy = parse_strategy(strategy)?;
            let cfg = McConfig {
                n_paths: *paths,
                dt: *dt,
                horizon: *horizon,
                seed: *seed,
                r_cut: *r_cut,
                antithetic: *antithetic,
                zero_eps: *zero_eps,
            };
            let estimate = mc::estimate_value(&params, *mu, strategy, *r0, *x0, &cfg)?;
            if let Some(path) = emit_paths {
                let mut csv = String::from("path_id,t,r,X,C\n");
                for id in 0..*emit_count {
                    let trace = mc::trace_path(&params, *mu, strategy, *r0, *x0, &cfg, id)?;
                    for i in 0..trace.times.len() {
                        let _ = writeln!(
                            csv,
                            "{},{},{},{},{}",
                            id,
                            fmt17(trace.times[i]),
                            fmt17(trace.levels[i]),
                            fmt17(trace.wealth[i]),
                            fmt17(trace.consumed[i])
                        );
                    }
                }
                std::fs::write(path, csv)
                    .map_err(|e| Error::Config(format!("cannot write --emit-paths file: {e}")))?;
            }
            Ok(serde_json::to_string_pretty(&json!({
                "schema": SCHEMA,
                "strategy": format!("{strategy:?}"),
                "r0": r0, "x0": x0, "mu": mu,
                "estimate": estimate,
            }))
            .expect("serializable") + "\n")
        }
        Command::Brownian {
            mu,
            sigma,
            b,
            delta,
            r0,
            x0,
            simulate,
        } => {
            let model = BrownianModel::new(*mu, *sigma, *b, *delta)?;
            let value = model.value(*r0, *x0)?;
            let mc_part = match simulate {
                None => serde_json::Value::Null,
                Some(args) => {
                    let cfg = McConfig::new(args[0] as usize, args[1], args[2], args[3] as u64);
                    serde_json::to_value(model.mc_dividends(*r0, *x0, &cfg)?).expect("serializable")
                }
            };
            Ok(serde_json::to_string_pretty(&json!({
                "schema": SCHEMA,
                "mu": mu, "sigma": sigma, "b": b, "delta": delta,
                "a": 0.5 * delta * delta,
                "theta": model.theta,
                "zeta": model.zeta,
                "varrho": model.varrho,
                "r0": r0, "x0": x0,
                "value": value,
                "mc": mc_part,
            }))
            .expect("serializable") + "\n")
        }
        Command::LastExit { process, mc: mc_args } => {
            let params = process.params()?;
            let expectation = mc::last_exit_expectation(&params)?;
            let mc_part = match mc_args {
                None => serde_json::Value::Null,
                Some(args) => {
                    let cfg = McConfig::new(args[0] as usize, args[1], args[2], args[3] as u64)
                        .with_r_cut(40.0);
                    serde_json::to_value(mc::last_exit_mc(&params, args[4], &cfg)?)
                        .expect("serializable")
                }
            };
            Ok(serde_json::to_string_pretty(&json!({
                "schema": SCHEMA,
                "a": params.a, "b": params.b, "delta": params.delta,
                "expectation": expectation,
                "mc": mc_part,
            }))
            .expect("serializable") + "\n")
        }
        Command::Path {
            process,
            r0,
            horizon,
            dt,
            seed,
        } => {
            let params = process.params()?;
            let path = cirdiv::simulate_path(&params, *r0, *horizon, *dt, *seed)?;
            let mut out = String::from("t,r\n");
            for (t, r) in path.times.iter().zip(&path.values) {
                let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*r));
            }
            Ok(out)
        }
        Command::Table {
            fig2_left,
            fig2_right,
            fig1,
            a,
            b,
            delta,
            mu,
            seed,
        } => {
            if *fig1 {
                let mut out = String::from("delta,t,r\n");
                for (i, d) in [0.09, 0.045, 0.02].iter().enumerate() {
                    let params = CirParams::new(*a, *b, *d)?;
                    let path = cirdiv::simulate_path(&params, 0.0, 2_000.0, 0.1, seed + i as u64)?;
                    for (t, r) in path.times.iter().zip(&path.values) {
                        let _ = writeln!(out, "{},{},{}", fmt17(*d), fmt17(*t), fmt17(*r));
                    }
                }
                return Ok(out);
            }
            if *fig2_right {
                let mut out = String::from("delta,delta_sq,rstar\n");
                for i in 0..=28 {
                    let d = 0.05 + 0.0025 * i as f64;
                    let params = CirParams::new(*a, *b, d)?;
                    let root = barrier::solve_rstar(&params)?;
                    let _ = writeln!(out, "{},{},{}", fmt17(d), fmt17(d * d), fmt17(root.rstar));
                }
                return Ok(out);
            }
            if *fig2_left {
                let params = CirParams::new(*a, *b, *delta)?;
                let vf = ValueFunction::new(&params, *mu)?;
                let rstar = vf.barrier().map(|s| s.rstar).unwrap_or(0.0);
                let mut out = String::from("r,x,v,branch\n");
                let r_hi = (rstar + 3.0).max(1.0);
                for i in 0..=120 {
                    let r = r_hi * i as f64 / 120.0;
                    for x in [0.0, 1.0, 2.0] {
                        let (v, branch) = vf.evaluate_with_branch(r, x)?;
                        let _ = writeln!(out, "{},{},{},{}", fmt17(r), fmt17(x), fmt17(v), branch_name(branch));
                    }
                }
                return Ok(out);
            }
            Err(Error::Config(
                "table needs one of --fig2-left, --fig2-right, --fig1".into(),
            ))
        }
    }
}

fn zero_barrier_guard(cli: &Cli) -> Result<(), Error> {
    // surface the regime requirement before any heavy work
    if let Command::Simulate {
        process, strategy, ..
    } = &cli.command
    {
        if strategy == "zero" {
            let params = process.params()?;
            if !params.zero_attainable() {
                return Err(Error::Regime(format!(
                    "the zero-barrier strategy requires 2b < delta^2 so the discounting \
                     process can reach zero; got 2b = {} >= delta^2 = {}",
                    2.0 * params.b,
                    params.delta_sq()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("CIRDIV_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }

    let result = zero_barrier_guard(&cli).and_then(|()| run(&cli));
    match result {
        Ok(data) => {
            let write_result = match &cli.output {
                Some(path) => std::fs::write(path, data).map_err(|e| e.to_string()),
                None => std::io::stdout()
                    .write_all(data.as_bytes())
                    .map_err(|e| e.to_string()),
            };
            if let Err(e) = write_result {
                eprintln!("{}", json!({"schema": SCHEMA, "error": {"kind": "io", "message": e}}));
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = match &e {
                Error::Domain(_) => "domain",
                Error::Regime(_) => "regime",
                Error::Numerical(_) => "numerical",
                Error::Config(_) => "config",
            };
            eprintln!(
                "{}",
                json!({"schema": SCHEMA, "error": {"kind": kind, "message": e.to_string()}})
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
