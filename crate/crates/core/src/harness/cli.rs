//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or run error (the message names
//! the violated invariant), 2 usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::methods::MethodKind;
use crate::theory::verify_theory;

use super::bench::{bench, BenchOptions, DEFAULT_BENCH_SIZES};
use super::config::{ConfigFile, SimConfig};
use super::output::{self, num};
use super::protocols::{
    compare_methods, conserve, flocking, simulate, sweep, SweepAxis, SweepSpec,
};

#[derive(Debug, Parser)]
#[command(
    name = "flockrbm",
    version,
    about = "Cucker-Smale flocking with random batch methods"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method, write per-replication metrics and the aggregate.
    Simulate(RunArgs),
    /// Mean SSD_V decay against the predicted flocking rate.
    Flocking {
        #[command(flatten)]
        args: RunArgs,
        /// Fit the decay rate over [0, this time].
        #[arg(long, default_value_t = 4.0)]
        fit_horizon: f64,
    },
    /// Error against the full system for each batch size in --values.
    SweepP(RunArgs),
    /// Error against the full system for each τ in --values (dt = min τ).
    SweepTau(RunArgs),
    /// RBM-1, RBM-r and MC from shared initial data and seeds.
    Compare(RunArgs),
    /// Momentum drift and velocity-diameter monotonicity for every method.
    Conserve(RunArgs),
    /// Check the combinatorial identities and inequalities numerically.
    VerifyTheory {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median wall time per window over the N grid in --values.
    Bench(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<MethodKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// constant:<value> or invpow:<beta>
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<Kernel>,
    /// Comma-separated sweep values (p, τ, or N for bench).
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    /// Worker threads for replications.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write particle snapshots at every window.
    #[arg(long)]
    pub snapshots: bool,
}

fn parse_method(s: &str) -> std::result::Result<MethodKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kernel(s: &str) -> std::result::Result<Kernel, String> {
    Kernel::parse(s).map_err(|e| e.to_string())
}

impl RunArgs {
    /// `base`, then the config file, then flags. `dt` follows `τ` unless it
    /// was given explicitly.
    pub fn resolve(&self, base: SimConfig) -> Result<SimConfig> {
        let mut c = base;
        let mut dt_explicit = false;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            let file = ConfigFile::parse(&text)?;
            dt_explicit = file.time.as_ref().is_some_and(|t| t.dt.is_some());
            c.apply_file(&file)?;
        }
        macro_rules! over {
            ($($f:ident => $g:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$g = v;
                }
            )*};
        }
        over!(method => method, n => n, d => d, p => p, kappa => kappa, t_end => t_end,
              seed => seed, reps => replications, out => out, kernel => kernel);
        if let Some(tau) = self.tau {
            c.tau = tau;
            if !dt_explicit {
                c.dt = tau;
            }
        }
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        c.snapshots |= self.snapshots;
        Ok(c)
    }
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|k| {
            rows.iter()
                .map(|r| r[k].len())
                .chain(std::iter::once(header[k].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header.to_vec()));
    for r in rows {
        println!("{}", line(r.iter().map(String::as_str).collect()));
    }
}

fn short(x: f64) -> String {
    format!("{x:.6e}")
}

fn sweep_cmd(args: &RunArgs, axis: SweepAxis) -> Result<i32> {
    let fixed = args.resolve(SimConfig::default())?;
    let values = args.values.clone().unwrap_or_else(|| match axis {
        SweepAxis::P => vec![2.0, 4.0, 8.0, 16.0, 32.0],
        SweepAxis::Tau => vec![0.1, 0.05, 0.025, 0.0125],
        SweepAxis::N => vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0],
    });
    let spec = SweepSpec {
        axis,
        values,
        methods: vec![fixed.method],
        fixed: fixed.clone(),
    };
    let rep = sweep(&spec, &fixed.out)?;
    let t = 2.0f64.min(fixed.t_end);
    let rows: Vec<Vec<String>> = rep
        .points
        .iter()
        .map(|p| {
            vec![
                p.value.to_string(),
                p.method.to_string(),
                p.median_at(t).map(short).unwrap_or_default(),
                short(p.scale),
                p.scaled_at(t).map(short).unwrap_or_default(),
                p.failures.to_string(),
            ]
        })
        .collect();
    let t_label = format!("l2_median(t={t})");
    print_table(
        &[
            axis.as_str(),
            "method",
            &t_label,
            "scale",
            "scaled",
            "failures",
        ],
        &rows,
    );
    if let Some(r) = rep.collapse_ratio(fixed.method, t) {
        println!("max/min scaled error at t={t}: {r:.4}");
    }
    println!("wrote {}", rep.scaled_path.display());
    Ok(0)
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate(args) => {
            let c = args.resolve(SimConfig::default())?;
            let rep = simulate(&c, &c.out)?;
            let res = &rep.result;
            let rows: Vec<Vec<String>> = res
                .aggregate
                .iter()
                .filter(|r| {
                    let k = (r.t / c.tau).round() as usize;
                    k.is_multiple_of((c.windows().unwrap_or(1) / 10).max(1))
                })
                .map(|r| {
                    let get = |m: &str| r.stat(c.d, m).map(|s| short(s.mean)).unwrap_or_default();
                    vec![short(r.t), get("ssd_v"), get("d_v"), get("l2_error")]
                })
                .collect();
            print_table(&["t", "ssd_v_mean", "d_v_mean", "l2_error_mean"], &rows);
            println!(
                "{} replication(s), {} failure(s); wrote {}",
                res.outputs.len(),
                res.failures.len(),
                rep.aggregate_path.display()
            );
            Ok(if res.outputs.is_empty() { 1 } else { 0 })
        }
        Command::Flocking { args, fit_horizon } => {
            let base = SimConfig {
                kernel: Kernel::constant(1.0)?,
                ..SimConfig::default()
            };
            let c = args.resolve(base)?;
            let rep = flocking(&c, fit_horizon, &c.out)?;
            print_table(
                &[
                    "method",
                    "C1",
                    "predicted_rate",
                    "fitted_rate",
                    "max_bound_ratio",
                ],
                &[vec![
                    rep.method.to_string(),
                    short(rep.constants.c1),
                    short(rep.predicted_rate),
                    short(rep.fitted_rate),
                    short(rep.max_bound_ratio),
                ]],
            );
            Ok(0)
        }
        Command::SweepP(args) => sweep_cmd(&args, SweepAxis::P),
        Command::SweepTau(args) => sweep_cmd(&args, SweepAxis::Tau),
        Command::Compare(args) => {
            let c = args.resolve(SimConfig::default())?;
            let rep = compare_methods(&c, &c.out)?;
            let rows: Vec<Vec<String>> = rep
                .methods
                .iter()
                .map(|s| {
                    vec![
                        s.method.to_string(),
                        short(super::aggregate::median(&s.final_l2)),
                        short(s.max_momentum_drift),
                        s.failures.to_string(),
                    ]
                })
                .collect();
            print_table(
                &[
                    "method",
                    "final_l2_median",
                    "max_momentum_drift",
                    "failures",
                ],
                &rows,
            );
            println!(
                "rbm1 < rbmr_equiv in {}/{} untied pairs at t={}; sign-test p = {:.4}",
                rep.rbm1_wins, rep.untied, rep.t_end, rep.sign_test_p
            );
            Ok(0)
        }
        Command::Conserve(args) => {
            let c = args.resolve(SimConfig::default())?;
            let rows = conserve(&c, &c.out)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.method.to_string(),
                        r.runs.to_string(),
                        short(r.max_drift()),
                        r.count_above(1e-6).to_string(),
                        r.diameter_violations.to_string(),
                    ]
                })
                .collect();
            print_table(
                &["method", "runs", "max_drift", "drift>1e-6", "d_v_increases"],
                &table,
            );
            Ok(0)
        }
        Command::VerifyTheory { out } => {
            let checks = verify_theory();
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.clone(),
                        c.cases.to_string(),
                        short(c.max_rel_discrepancy),
                        c.violations.to_string(),
                        if c.passed() { "PASS" } else { "FAIL" }.to_string(),
                    ]
                })
                .collect();
            print_table(
                &[
                    "check",
                    "cases",
                    "max_rel_discrepancy",
                    "violations",
                    "status",
                ],
                &rows,
            );
            if let Some(dir) = out {
                let csv_rows: Vec<Vec<String>> = checks
                    .iter()
                    .map(|c| {
                        vec![
                            format!("\"{}\"", c.name),
                            c.cases.to_string(),
                            num(c.max_rel_discrepancy),
                            c.violations.to_string(),
                            num(c.tolerance),
                            c.passed().to_string(),
                        ]
                    })
                    .collect();
                output::write(
                    &dir,
                    "verify_theory.csv",
                    &output::table_csv(
                        "# flockrbm verify-theory",
                        &[
                            "check",
                            "cases",
                            "max_rel_discrepancy",
                            "violations",
                            "tolerance",
                            "passed",
                        ],
                        &csv_rows,
                    ),
                )?;
            }
            Ok(if checks.iter().all(|c| c.passed()) {
                0
            } else {
                1
            })
        }
        Command::Bench(args) => {
            let c = args.resolve(SimConfig::default())?;
            let sizes: Vec<usize> = match &args.values {
                Some(v) => v.iter().map(|&x| x as usize).collect(),
                None => DEFAULT_BENCH_SIZES.to_vec(),
            };
            let rep = bench(&c, &sizes, BenchOptions::default(), Some(&c.out))?;
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.method.to_string(),
                        short(r.median_ns_per_window),
                    ]
                })
                .collect();
            print_table(&["n", "method", "median_ns_per_window"], &rows);
            for (m, s) in &rep.slopes {
                println!("log-log slope {m}: {s:.3}");
            }
            Ok(0)
        }
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
