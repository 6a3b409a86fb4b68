//! Replication orchestration.
//!
//! Replications run on a rayon pool. Each one owns its RNG stream and
//! returns its output by value; results are collected in replication-index
//! order, so files are identical whatever the worker count.

use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::methods::{reference_trajectory, run_replication, MethodKind, RunOutput};
use crate::sampling::replication_stream;

use super::aggregate::{aggregate, AggregateRow};
use super::config::SimConfig;
use super::output;

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub rep: u64,
    pub seed: u64,
    pub stream: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub method: MethodKind,
    /// Successful replications in index order.
    pub outputs: Vec<RunOutput>,
    pub failures: Vec<RunFailure>,
    pub aggregate: Vec<AggregateRow>,
    pub initial_hash: u64,
}

impl EnsembleResult {
    /// Values of `metric` at time `t` across successful replications, in
    /// replication order; replications without a value are skipped.
    pub fn values_at(&self, metric: &str, t: f64) -> Vec<f64> {
        self.outputs
            .iter()
            .filter_map(|o| o.metrics.at(t)?.value(metric))
            .collect()
    }
}

/// Runs `f` on a pool of `threads` workers, or the global pool when `None`.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `config.replications` replications of `method` from `initial`.
/// The full-system `reference`, when given, fills the ℓ²-error column.
pub fn run_ensemble(
    config: &SimConfig,
    method: MethodKind,
    initial: &Ensemble,
    reference: Option<&[Ensemble]>,
) -> Result<EnsembleResult> {
    let mut cfg = config.clone();
    cfg.method = method;
    cfg.validate()?;
    let reps = cfg.replications as u64;
    let results: Vec<Result<RunOutput>> = with_pool(cfg.threads, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| run_replication(&cfg, method, initial, rep, reference))
            .collect()
    })?;
    let mut outputs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => failures.push(RunFailure {
                rep: rep as u64,
                seed: cfg.seed,
                stream: replication_stream(rep as u64),
                message: e.to_string(),
            }),
        }
    }
    let series: Vec<_> = outputs.iter().map(|o| o.metrics.clone()).collect();
    Ok(EnsembleResult {
        method,
        aggregate: aggregate(&series)?,
        outputs,
        failures,
        initial_hash: output::state_hash(initial),
    })
}

/// Shared initial data plus, when `method` is not the full system itself,
/// the full-system reference on the window grid.
pub fn prepare(config: &SimConfig) -> Result<(Ensemble, Option<Vec<Ensemble>>)> {
    config.validate()?;
    let initial = config.initial_ensemble()?;
    let reference = if config.method == MethodKind::Ips {
        None
    } else {
        Some(reference_trajectory(config, &initial)?)
    };
    Ok((initial, reference))
}

/// `run_ensemble` for `config.method` with its own reference.
pub fn run_configured(config: &SimConfig) -> Result<EnsembleResult> {
    let (initial, reference) = prepare(config)?;
    let mut res = run_ensemble(config, config.method, &initial, reference.as_deref())?;
    if config.method == MethodKind::Ips {
        for o in &mut res.outputs {
            for r in &mut o.metrics.rows {
                r.l2_error = Some(0.0);
            }
        }
        let series: Vec<_> = res.outputs.iter().map(|o| o.metrics.clone()).collect();
        res.aggregate = aggregate(&series)?;
    }
    Ok(res)
}

fn comment(config: &SimConfig, res: &EnsembleResult, streams: &str) -> String {
    format!(
        "{} init_hash={:016x} failures={}",
        config.header_comment(res.method, streams),
        res.initial_hash,
        res.failures.len()
    )
}

/// Writes `{prefix}_rep{k}.csv` per replication (plus snapshots when
/// enabled) and `{prefix}_aggregate.csv`. Returns the aggregate path.
pub fn write_ensemble(
    config: &SimConfig,
    res: &EnsembleResult,
    dir: &Path,
    prefix: &str,
    per_run: bool,
) -> Result<std::path::PathBuf> {
    if per_run {
        for o in &res.outputs {
            let streams = format!("0,{}", replication_stream(o.rep));
            let c = comment(config, res, &streams);
            output::write(
                dir,
                &format!("{prefix}_rep{:04}.csv", o.rep),
                &output::metrics_csv(&c, &o.metrics),
            )?;
            if !o.snapshots.is_empty() {
                output::write(
                    dir,
                    &format!("{prefix}_rep{:04}_snapshots.csv", o.rep),
                    &output::snapshot_csv(&c, &o.snapshots),
                )?;
            }
        }
    }
    if !res.failures.is_empty() {
        let rows: Vec<Vec<String>> = res
            .failures
            .iter()
            .map(|f| {
                vec![
                    f.rep.to_string(),
                    f.seed.to_string(),
                    f.stream.to_string(),
                    format!("\"{}\"", f.message.replace('"', "'")),
                ]
            })
            .collect();
        output::write(
            dir,
            &format!("{prefix}_failures.csv"),
            &output::table_csv(
                &comment(config, res, "per-rep"),
                &["rep", "seed", "stream", "message"],
                &rows,
            ),
        )?;
    }
    let streams = format!("0,1..{}", config.replications);
    output::write(
        dir,
        &format!("{prefix}_aggregate.csv"),
        &output::aggregate_csv(&comment(config, res, &streams), config.d, &res.aggregate),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(reps: usize) -> SimConfig {
        SimConfig {
            n: 16,
            p: 2,
            tau: 0.1,
            dt: 0.05,
            t_end: 0.5,
            seed: 5,
            replications: reps,
            method: MethodKind::Rbm1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn single_replication_aggregate_equals_run() {
        let res = run_configured(&cfg(1)).unwrap();
        let run = &res.outputs[0].metrics;
        for (row, agg) in run.rows.iter().zip(&res.aggregate) {
            let s = agg.stat(1, "l2_error").unwrap();
            let v = row.l2_error.unwrap();
            assert_eq!((s.mean, s.q10, s.q50, s.q90), (v, v, v, v));
            assert_eq!(agg.stat(1, "ssd_v").unwrap().mean, row.ssd_v);
        }
    }

    #[test]
    fn replications_differ_but_share_initial_data() {
        let res = run_configured(&cfg(4)).unwrap();
        assert_eq!(res.outputs.len(), 4);
        assert!(res.failures.is_empty());
        let first: Vec<_> = res
            .outputs
            .iter()
            .map(|o| o.metrics.rows[0].clone())
            .collect();
        assert!(first.windows(2).all(|w| w[0] == w[1]));
        let last: Vec<f64> = res.values_at("l2_error", 0.5);
        assert_eq!(last.len(), 4);
        assert!(last[0] != last[1]);
        assert!(res.aggregate.iter().all(|r| r.count == 4));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut a = cfg(6);
        a.threads = Some(1);
        let mut b = cfg(6);
        b.threads = Some(3);
        let ra = run_configured(&a).unwrap();
        let rb = run_configured(&b).unwrap();
        assert_eq!(ra.aggregate, rb.aggregate);
    }

    #[test]
    fn failures_are_recorded() {
        let mut c = cfg(2);
        c.init.velocity_range = 1e306;
        c.kernel = crate::kernel::Kernel::constant(1.0).unwrap();
        c.dt = 0.1;
        c.kappa = 1e3;
        let (initial, _) = prepare(&SimConfig {
            method: MethodKind::Ips,
            ..c.clone()
        })
        .unwrap();
        let res = run_ensemble(&c, MethodKind::Rbm1, &initial, None).unwrap();
        assert_eq!(res.failures.len(), 2);
        assert_eq!(res.failures[1].stream, 2);
        assert!(res.outputs.is_empty());
        assert!(res.aggregate.is_empty());
    }
}
