//! The experiment protocols behind the CLI subcommands. Each one runs,
//! writes its CSVs under `dir` and returns a report for the summary table.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::methods::{reference_trajectory, MethodKind};
use crate::metrics::{fit_decay_rate, rate_constants, scale_rbm1, scale_rbmr, RateConstants};

use super::aggregate::median;
use super::config::SimConfig;
use super::ensemble::{prepare, run_configured, run_ensemble, write_ensemble, EnsembleResult};
use super::output::{self, num};

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`: the one-sided sign-test p-value
/// for `k` successes out of `n` untied pairs.
pub fn sign_test_p_value(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // log C(n, j) accumulated incrementally keeps this exact enough for
    // n in the thousands.
    let mut log_c = 0.0f64;
    let mut total = 0.0;
    let half_n = n as f64 * std::f64::consts::LN_2;
    for j in 0..=n {
        if j > 0 {
            log_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= k {
            total += (log_c - half_n).exp();
        }
    }
    total.min(1.0)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub result: EnsembleResult,
    pub aggregate_path: PathBuf,
}

/// Runs the configured method; writes one metrics CSV per replication and
/// the aggregate.
pub fn simulate(config: &SimConfig, dir: &Path) -> Result<SimulateReport> {
    let result = run_configured(config)?;
    let prefix = format!("simulate_{}", config.method);
    let aggregate_path = write_ensemble(config, &result, dir, &prefix, true)?;
    Ok(SimulateReport {
        result,
        aggregate_path,
    })
}

// ---------------------------------------------------------------- flocking

#[derive(Debug, Clone)]
pub struct FlockingReport {
    pub method: MethodKind,
    pub constants: RateConstants,
    /// `(N/(N-1)) · C₁`, the predicted decay rate of the mean SSD_V.
    pub predicted_rate: f64,
    pub fitted_rate: f64,
    pub fit_horizon: f64,
    /// `max_t mean SSD_V(t) / (SSD_V(0) e^{-predicted t})`.
    pub max_bound_ratio: f64,
    /// `(t, mean SSD_V)` over the run.
    pub mean_ssd_v: Vec<(f64, f64)>,
    pub failures: usize,
}

/// Mean SSD_V decay against the predicted rate. The kernel's lower bound
/// times `κ` plays the role of `ψ₀`. The rate is fitted over
/// `[0, min(fit_horizon, T)]`.
pub fn flocking(config: &SimConfig, fit_horizon: f64, dir: &Path) -> Result<FlockingReport> {
    config.validate()?;
    let psi0 = config.kernel.psi0() * config.kappa;
    if !(psi0 > 0.0) {
        return Err(Error::config(
            "flocking needs a kernel with positive lower bound psi0 (e.g. --kernel constant:1)",
        ));
    }
    let constants = rate_constants(psi0, config.p, config.tau)?;
    let nf = config.n as f64;
    let predicted_rate = nf / (nf - 1.0) * constants.c1;

    let initial = config.initial_ensemble()?;
    let res = run_ensemble(config, config.method, &initial, None)?;
    let mean_ssd_v: Vec<(f64, f64)> = res
        .aggregate
        .iter()
        .filter_map(|r| Some((r.t, r.stat(config.d, "ssd_v")?.mean)))
        .collect();
    let Some(&(_, s0)) = mean_ssd_v.first() else {
        return Err(Error::Validation("all flocking replications failed".into()));
    };
    let horizon = fit_horizon.min(config.t_end);
    let fit_pts: Vec<(f64, f64)> = mean_ssd_v
        .iter()
        .copied()
        .filter(|(t, _)| *t <= horizon + 1e-9)
        .collect();
    let fitted_rate = fit_decay_rate(&fit_pts)?;
    let max_bound_ratio = mean_ssd_v
        .iter()
        .map(|&(t, s)| s / (s0 * (-predicted_rate * t).exp()))
        .fold(0.0, f64::max);

    let prefix = format!("flocking_{}", config.method);
    write_ensemble(config, &res, dir, &prefix, false)?;
    let rows: Vec<Vec<String>> = mean_ssd_v
        .iter()
        .map(|&(t, s)| vec![num(t), num(s), num(s0 * (-predicted_rate * t).exp())])
        .collect();
    let comment = format!(
        "{} c1={} c2={} c3={} predicted_rate={} fitted_rate={} fit_horizon={horizon}",
        config.header_comment(config.method, &format!("0,1..{}", config.replications)),
        num(constants.c1),
        num(constants.c2),
        num(constants.c3),
        num(predicted_rate),
        num(fitted_rate),
    );
    output::write(
        dir,
        &format!("{prefix}_decay.csv"),
        &output::table_csv(&comment, &["t", "mean_ssd_v", "predicted_bound"], &rows),
    )?;
    Ok(FlockingReport {
        method: config.method,
        constants,
        predicted_rate,
        fitted_rate,
        fit_horizon: horizon,
        max_bound_ratio,
        mean_ssd_v,
        failures: res.failures.len(),
    })
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    P,
    Tau,
    N,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::P => "p",
            SweepAxis::Tau => "tau",
            SweepAxis::N => "n",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub methods: Vec<MethodKind>,
    pub fixed: SimConfig,
}

impl SweepSpec {
    /// The configuration for one sweep value. A τ-sweep runs every value
    /// with `dt = min τ` so the integrator error is the same throughout.
    pub fn config_for(&self, value: f64, method: MethodKind) -> Result<SimConfig> {
        let mut c = self.fixed.clone();
        c.method = method;
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!(
                    "sweep value {v} is not a positive integer"
                )))
            }
        };
        match self.axis {
            SweepAxis::P => c.p = as_count(value)?,
            SweepAxis::N => c.n = as_count(value)?,
            SweepAxis::Tau => {
                c.tau = value;
                c.dt = self.values.iter().copied().fold(f64::INFINITY, f64::min);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep needs at least one value"));
        }
        for &m in &self.methods {
            for &v in &self.values {
                self.config_for(v, m)?;
            }
        }
        Ok(())
    }

    /// Divisor of the ℓ²-error for the scaled-error collapse.
    pub fn scale(&self, config: &SimConfig, method: MethodKind) -> Result<f64> {
        match self.axis {
            SweepAxis::Tau => Ok(config.tau.sqrt()),
            SweepAxis::N => Ok(1.0),
            SweepAxis::P => match method {
                MethodKind::Rbm1 => scale_rbm1(config.n, config.p),
                MethodKind::Rbmr | MethodKind::RbmrEquiv => scale_rbmr(config.n, config.p),
                other => Err(Error::config(format!(
                    "p-sweep error scaling is defined for rbm1, rbmr, rbmr_equiv; got {other}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub method: MethodKind,
    pub scale: f64,
    /// `(t, median ℓ²-error)` on the window grid.
    pub median_l2: Vec<(f64, f64)>,
    pub failures: usize,
    pub aggregate_path: PathBuf,
}

impl SweepPoint {
    pub fn median_at(&self, t: f64) -> Option<f64> {
        self.median_l2
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9)
            .map(|p| p.1)
    }

    /// Median error at `t` divided by the scale; `None` when the scale is 0.
    pub fn scaled_at(&self, t: f64) -> Option<f64> {
        (self.scale > 0.0).then(|| self.median_at(t).map(|m| m / self.scale))?
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub scaled_path: PathBuf,
}

impl SweepReport {
    /// Largest over smallest scaled median at `t` for `method`.
    pub fn collapse_ratio(&self, method: MethodKind, t: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.method == method)
            .filter_map(|p| p.scaled_at(t))
            .collect();
        if v.is_empty() {
            return None;
        }
        let max = v.iter().copied().fold(f64::MIN, f64::max);
        let min = v.iter().copied().fold(f64::MAX, f64::min);
        Some(max / min)
    }
}

fn value_label(axis: SweepAxis, v: f64) -> String {
    match axis {
        SweepAxis::Tau => format!("{v}"),
        _ => format!("{}", v as usize),
    }
}

/// Runs every `(value, method)` pair with shared initial data and writes one
/// aggregate per pair plus `sweep_{axis}_scaled.csv`.
pub fn sweep(spec: &SweepSpec, dir: &Path) -> Result<SweepReport> {
    spec.validate()?;
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &value in &spec.values {
        let base = spec.config_for(value, spec.methods[0])?;
        let initial = base.initial_ensemble()?;
        let reference = reference_trajectory(&base, &initial)?;
        for &method in &spec.methods {
            let c = spec.config_for(value, method)?;
            let res = run_ensemble(&c, method, &initial, Some(&reference))?;
            let prefix = format!(
                "sweep_{}_{}_{}{}",
                spec.axis.as_str(),
                method,
                spec.axis.as_str(),
                value_label(spec.axis, value)
            );
            let aggregate_path = write_ensemble(&c, &res, dir, &prefix, false)?;
            let scale = spec.scale(&c, method)?;
            let median_l2: Vec<(f64, f64)> = res
                .aggregate
                .iter()
                .filter_map(|r| Some((r.t, r.stat(c.d, "l2_error")?.q50)))
                .collect();
            for &(t, m) in &median_l2 {
                let scaled = if scale > 0.0 {
                    num(m / scale)
                } else {
                    String::new()
                };
                rows.push(vec![
                    value_label(spec.axis, value),
                    method.to_string(),
                    num(t),
                    num(m),
                    num(scale),
                    scaled,
                ]);
            }
            points.push(SweepPoint {
                value,
                method,
                scale,
                median_l2,
                failures: res.failures.len(),
                aggregate_path,
            });
        }
    }
    let comment = format!(
        "{} sweep={} values={}",
        spec.fixed.header_comment(
            spec.methods[0],
            &format!("0,1..{}", spec.fixed.replications)
        ),
        spec.axis.as_str(),
        spec.values
            .iter()
            .map(|v| value_label(spec.axis, *v))
            .collect::<Vec<_>>()
            .join(";"),
    );
    let scaled_path = output::write(
        dir,
        &format!("sweep_{}_scaled.csv", spec.axis.as_str()),
        &output::table_csv(
            &comment,
            &[
                spec.axis.as_str(),
                "method",
                "t",
                "l2_median",
                "scale",
                "scaled_l2_median",
            ],
            &rows,
        ),
    )?;
    Ok(SweepReport {
        axis: spec.axis,
        points,
        scaled_path,
    })
}

// ---------------------------------------------------------------- compare

pub const COMPARE_METHODS: [MethodKind; 3] =
    [MethodKind::Rbm1, MethodKind::RbmrEquiv, MethodKind::Mc];

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: MethodKind,
    /// `(t, median ℓ²-error)`.
    pub median_l2: Vec<(f64, f64)>,
    /// Per-replication final ℓ²-error, replication order.
    pub final_l2: Vec<f64>,
    pub max_momentum_drift: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub t_end: f64,
    pub methods: Vec<MethodSummary>,
    /// Pairs (same replication index) where RBM-1 beat RBM-r at `t_end`,
    /// the number of untied pairs, and the one-sided sign-test p-value.
    pub rbm1_wins: usize,
    pub untied: usize,
    pub sign_test_p: f64,
}

impl CompareReport {
    pub fn method(&self, m: MethodKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// RBM-1, RBM-r (window-aligned) and MC from the same initial data and
/// replication seeds, with their ℓ²-errors against one shared reference.
pub fn compare_methods(config: &SimConfig, dir: &Path) -> Result<CompareReport> {
    let mut base = config.clone();
    base.method = MethodKind::RbmrEquiv;
    let (initial, reference) = prepare(&base)?;
    let reference = reference.expect("reference for non-IPS method");
    let mut methods = Vec::new();
    for m in COMPARE_METHODS {
        let res = run_ensemble(&base, m, &initial, Some(&reference))?;
        write_ensemble(&base, &res, dir, &format!("compare_{m}"), false)?;
        methods.push(MethodSummary {
            method: m,
            median_l2: res
                .aggregate
                .iter()
                .filter_map(|r| Some((r.t, r.stat(base.d, "l2_error")?.q50)))
                .collect(),
            final_l2: res.values_at("l2_error", base.t_end),
            max_momentum_drift: res
                .outputs
                .iter()
                .map(|o| o.metrics.max_momentum_drift())
                .fold(0.0, f64::max),
            failures: res.failures.len(),
        });
    }
    let (a, b) = (&methods[0].final_l2, &methods[1].final_l2);
    let rbm1_wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let untied = a.iter().zip(b).filter(|(x, y)| x != y).count();

    let times: Vec<f64> = methods[0].median_l2.iter().map(|p| p.0).collect();
    let rows: Vec<Vec<String>> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut r = vec![num(t)];
            r.extend(
                methods
                    .iter()
                    .map(|s| s.median_l2.get(k).map(|p| num(p.1)).unwrap_or_default()),
            );
            r
        })
        .collect();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(methods.iter().map(|s| format!("{}_l2_median", s.method)))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let streams = format!("0,1..{}", base.replications);
    output::write(
        dir,
        "compare_l2.csv",
        &output::table_csv(
            &base.header_comment(MethodKind::RbmrEquiv, &streams),
            &header,
            &rows,
        ),
    )?;
    let summary_rows: Vec<Vec<String>> = methods
        .iter()
        .map(|s| {
            vec![
                s.method.to_string(),
                num(s.max_momentum_drift),
                num(median(&s.final_l2)),
                s.failures.to_string(),
            ]
        })
        .collect();
    output::write(
        dir,
        "compare_summary.csv",
        &output::table_csv(
            &base.header_comment(MethodKind::RbmrEquiv, &streams),
            &[
                "method",
                "max_momentum_drift",
                "final_l2_median",
                "failures",
            ],
            &summary_rows,
        ),
    )?;
    Ok(CompareReport {
        t_end: base.t_end,
        methods,
        rbm1_wins,
        untied,
        sign_test_p: sign_test_p_value(rbm1_wins, untied),
    })
}

// ---------------------------------------------------------------- conserve

pub const CONSERVE_METHODS: [MethodKind; 5] = [
    MethodKind::Ips,
    MethodKind::Rbm1,
    MethodKind::Rbmr,
    MethodKind::RbmrEquiv,
    MethodKind::Mc,
];

#[derive(Debug, Clone)]
pub struct ConservationRow {
    pub method: MethodKind,
    pub runs: usize,
    /// Per-replication `max_t |Σv(t) - Σv(0)|`.
    pub drifts: Vec<f64>,
    /// Replications whose velocity diameter grew by more than `1e-12`
    /// between consecutive recorded times.
    pub diameter_violations: usize,
    pub failures: usize,
}

impl ConservationRow {
    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().copied().fold(0.0, f64::max)
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.drifts.iter().filter(|&&d| d > threshold).count()
    }
}

pub const DIAMETER_TOLERANCE: f64 = 1e-12;

fn diameter_increases(res: &EnsembleResult) -> usize {
    res.outputs
        .iter()
        .filter(|o| {
            o.metrics
                .rows
                .windows(2)
                .any(|w| w[1].d_v > w[0].d_v + DIAMETER_TOLERANCE)
        })
        .count()
}

/// Momentum drift and velocity-diameter monotonicity for every method.
/// Methods that cannot run with the configured `p` (divisibility) are
/// skipped.
pub fn conserve(config: &SimConfig, dir: &Path) -> Result<Vec<ConservationRow>> {
    let mut base = config.clone();
    base.method = MethodKind::Rbmr;
    base.validate()?;
    let initial = base.initial_ensemble()?;
    let mut out = Vec::new();
    for m in CONSERVE_METHODS {
        if m.needs_divisibility() && !base.n.is_multiple_of(base.p) {
            continue;
        }
        let res = run_ensemble(&base, m, &initial, None)?;
        out.push(ConservationRow {
            method: m,
            runs: res.outputs.len(),
            drifts: res
                .outputs
                .iter()
                .map(|o| o.metrics.max_momentum_drift())
                .collect(),
            diameter_violations: diameter_increases(&res),
            failures: res.failures.len(),
        });
    }
    let rows: Vec<Vec<String>> = out
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.runs.to_string(),
                num(r.max_drift()),
                r.count_above(1e-6).to_string(),
                r.diameter_violations.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    output::write(
        dir,
        "conserve.csv",
        &output::table_csv(
            &base.header_comment(MethodKind::Rbmr, &format!("0,1..{}", base.replications)),
            &[
                "method",
                "runs",
                "max_momentum_drift",
                "runs_drift_above_1e-6",
                "diameter_increase_runs",
                "failures",
            ],
            &rows,
        ),
    )?;
    Ok(out)
}
