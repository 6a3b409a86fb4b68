//! Wall-time per window of the full system against the window-aligned
//! random batch stepper.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use crate::error::Result;
use crate::methods::{initial_ensemble, MethodKind, SelectionLedger, Stepper};
use crate::metrics::ols_slope;
use crate::sampling::{replication_stream, RngStream};

use super::aggregate::median;
use super::config::SimConfig;
use super::output::{self, num};

pub const DEFAULT_BENCH_SIZES: [usize; 4] = [256, 512, 1024, 2048];
pub const BENCH_METHODS: [MethodKind; 2] = [MethodKind::Ips, MethodKind::RbmrEquiv];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub method: MethodKind,
    pub median_ns_per_window: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Log-log slope of time against `N`, per method.
    pub slopes: Vec<(MethodKind, f64)>,
}

impl BenchReport {
    pub fn slope(&self, m: MethodKind) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == m).map(|s| s.1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    /// Timed blocks per `(N, method)`; the median block is reported.
    pub blocks: usize,
    /// Minimum wall time of one block; short windows are batched until a
    /// block lasts at least this long.
    pub min_block_ns: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            blocks: 7,
            min_block_ns: 2_000_000,
        }
    }
}

fn time_windows(
    stepper: &mut Stepper,
    method: MethodKind,
    e: &mut crate::dynamics::Ensemble,
    rng: &mut RngStream,
    ledger: &mut SelectionLedger,
    windows: usize,
) -> Result<u64> {
    let start = Instant::now();
    for _ in 0..windows {
        stepper.step(method, e, rng, ledger)?;
    }
    black_box(&*e);
    Ok(start.elapsed().as_nanos() as u64)
}

/// Median ns per window for one `(N, method)`. The state keeps evolving
/// across blocks; velocities are restarted from the initial data when they
/// have contracted enough to make the arithmetic denormal-prone.
pub fn bench_one(
    config: &SimConfig,
    n: usize,
    method: MethodKind,
    opts: BenchOptions,
) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.n = n;
    cfg.p = cfg.p.min(n);
    cfg.method = method;
    cfg.validate()?;
    let initial = initial_ensemble(
        n,
        cfg.d,
        cfg.init.box_length,
        cfg.init.velocity_range,
        cfg.seed,
    )?;
    let mut stepper = cfg.stepper()?;
    let mut rng = RngStream::new(cfg.seed, replication_stream(0));
    let mut ledger = SelectionLedger::new(n, cfg.tau);
    let mut e = initial.clone();

    // warm-up and calibration
    let mut per_block = 1usize;
    loop {
        let ns = time_windows(
            &mut stepper,
            method,
            &mut e,
            &mut rng,
            &mut ledger,
            per_block,
        )?;
        if ns >= opts.min_block_ns || per_block >= 1 << 20 {
            break;
        }
        let grow = (opts.min_block_ns as f64 / ns.max(1) as f64 * 1.2).ceil() as usize;
        per_block = (per_block * grow.clamp(2, 16)).min(1 << 20);
    }
    let mut samples = Vec::with_capacity(opts.blocks);
    for _ in 0..opts.blocks.max(1) {
        if e.v().iter().all(|v| v.abs() < 1e-100) {
            e = initial.clone();
        }
        let ns = time_windows(
            &mut stepper,
            method,
            &mut e,
            &mut rng,
            &mut ledger,
            per_block,
        )?;
        samples.push(ns as f64 / per_block as f64);
    }
    Ok(median(&samples))
}

pub fn bench(
    config: &SimConfig,
    sizes: &[usize],
    opts: BenchOptions,
    dir: Option<&Path>,
) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &n in sizes {
        for m in BENCH_METHODS {
            rows.push(BenchRow {
                n,
                method: m,
                median_ns_per_window: bench_one(config, n, m, opts)?,
            });
        }
    }
    let slopes = BENCH_METHODS
        .iter()
        .map(|&m| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| ((r.n as f64).ln(), r.median_ns_per_window.ln()))
                .collect();
            (
                m,
                if pts.len() >= 2 {
                    ols_slope(&pts)
                } else {
                    f64::NAN
                },
            )
        })
        .collect();
    let report = BenchReport { rows, slopes };
    if let Some(dir) = dir {
        let table: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.method.to_string(),
                    num(r.median_ns_per_window),
                ]
            })
            .collect();
        let comment = format!(
            "# flockrbm bench p={} tau={} dt={} d={} seed={} {}",
            config.p,
            config.tau,
            config.dt,
            config.d,
            config.seed,
            report
                .slopes
                .iter()
                .map(|(m, s)| format!("slope_{m}={s:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        output::write(
            dir,
            "bench.csv",
            &output::table_csv(&comment, &["n", "method", "median_ns_per_window"], &table),
        )?;
    }
    Ok(report)
}
