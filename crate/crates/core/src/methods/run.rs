use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::harness::config::SimConfig;
use crate::metrics::{MetricsRow, MetricsSeries};
use crate::sampling::{replication_stream, RngStream, INITIAL_DATA_STREAM};

use super::{MethodKind, SelectionLedger, Stepper};

/// Everything one replication produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub method: MethodKind,
    pub rep: u64,
    pub metrics: MetricsSeries,
    /// One state per recorded time, only when snapshots are requested.
    pub snapshots: Vec<Ensemble>,
    pub ledger: SelectionLedger,
}

/// Positions uniform on `[0, L]^d`, velocities uniform on `[-r, r]^d` with
/// the sample mean removed, drawn from the initial-data stream of `seed`.
pub fn initial_ensemble(
    n: usize,
    d: usize,
    box_length: f64,
    velocity_range: f64,
    seed: u64,
) -> Result<Ensemble> {
    if n < 1 || d < 1 {
        return Err(Error::config("initial data needs N >= 1 and d >= 1"));
    }
    if !(box_length > 0.0) || !(velocity_range > 0.0) {
        return Err(Error::config(
            "box length and velocity range must be positive",
        ));
    }
    let mut rng = RngStream::new(seed, INITIAL_DATA_STREAM);
    let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(0.0, box_length)).collect();
    let mut v: Vec<f64> = (0..n * d)
        .map(|_| rng.uniform(-velocity_range, velocity_range))
        .collect();
    for c in 0..d {
        let mean = (0..n).map(|i| v[i * d + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            v[i * d + c] -= mean;
        }
    }
    Ensemble::new(d, x, v, 0.0)
}

/// Full-system states at every window `t_k = kτ`, `k = 0..=windows`.
pub fn reference_trajectory(config: &SimConfig, initial: &Ensemble) -> Result<Vec<Ensemble>> {
    let windows = config.windows()?;
    let mut stepper = config.stepper()?;
    let mut e = initial.clone();
    let mut out = Vec::with_capacity(windows + 1);
    out.push(e.clone());
    for k in 1..=windows {
        stepper.step_ips(&mut e)?;
        e.t = k as f64 * config.tau;
        out.push(e.clone());
    }
    Ok(out)
}

fn rms_velocity_diff(a: &Ensemble, b: &Ensemble) -> f64 {
    let s: f64 = a
        .v()
        .iter()
        .zip(b.v())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    (s / a.n() as f64).sqrt()
}

/// Runs replication `rep` of `method` from `initial`, recording metrics at
/// every window. With a reference attached, the ℓ²-error is filled in; the
/// raw RBM-r stepper is compared at effective time, i.e. its step `k` is
/// matched with the full system at `k·p/N` windows when that is an integer.
pub fn run_replication(
    config: &SimConfig,
    method: MethodKind,
    initial: &Ensemble,
    rep: u64,
    reference: Option<&[Ensemble]>,
) -> Result<RunOutput> {
    let windows = config.windows()?;
    let n = config.n;
    let mut stepper: Stepper = config.stepper()?;
    let mut rng = RngStream::new(config.seed, replication_stream(rep));
    let mut ledger = SelectionLedger::new(n, config.tau);
    let mut e = initial.clone();
    let mut metrics = MetricsSeries::new(config.d);
    let mut snapshots = Vec::new();

    let l2_at = |e: &Ensemble, k: usize| -> Result<Option<f64>> {
        let Some(reference) = reference else {
            return Ok(None);
        };
        if method == MethodKind::Rbmr {
            let per = n / config.p;
            if !n.is_multiple_of(config.p) || !k.is_multiple_of(per) {
                return Ok(None);
            }
            let r = reference
                .get(k / per)
                .ok_or_else(|| Error::config("reference trajectory too short"))?;
            let t_eff = (k / per) as f64 * config.tau;
            if (r.t - t_eff).abs() > 1e-9 {
                return Err(Error::domain(
                    "reference grid misaligned with effective time",
                ));
            }
            return Ok(Some(rms_velocity_diff(e, r)));
        }
        let r = reference
            .get(k)
            .ok_or_else(|| Error::config("reference trajectory too short"))?;
        crate::metrics::l2_error(e, r).map(Some)
    };

    metrics.push(MetricsRow::of(&e, 0.0, l2_at(&e, 0)?));
    if config.snapshots {
        snapshots.push(e.clone());
    }
    for k in 1..=windows {
        stepper.step(method, &mut e, &mut rng, &mut ledger)?;
        e.t = k as f64 * config.tau;
        metrics.push(MetricsRow::of(&e, e.t, l2_at(&e, k)?));
        if config.snapshots {
            snapshots.push(e.clone());
        }
    }
    Ok(RunOutput {
        method,
        rep,
        metrics,
        snapshots,
        ledger,
    })
}

/// Replication 0 of the configured method, with the full-system reference
/// attached for the ℓ²-error column.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let initial = config.initial_ensemble()?;
    if config.method == MethodKind::Ips {
        let mut out = run_replication(config, MethodKind::Ips, &initial, 0, None)?;
        for row in &mut out.metrics.rows {
            row.l2_error = Some(0.0);
        }
        return Ok(out);
    }
    let reference = reference_trajectory(config, &initial)?;
    run_replication(config, config.method, &initial, 0, Some(&reference))
}
