//! The coupled triple used by the error analysis: RBM-r, the full system,
//! and `N` copies of the full system where copy `i` only runs while particle
//! `i` is in the current batch. RBM-r and the copies share one batch stream.

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::harness::config::SimConfig;
use crate::metrics::momentum;
use crate::sampling::{replication_stream, RngStream};

use super::{SelectionLedger, Stepper};

/// Memory guard: the triple holds `N + 2` ensembles of `N` particles.
pub const DEFAULT_TRIPLE_MAX_N: usize = 512;

#[derive(Debug, Clone)]
pub struct TripleState {
    pub rbmr: Ensemble,
    pub ips: Ensemble,
    pub ips_prime: Vec<Ensemble>,
    pub ledger: SelectionLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleRecord {
    /// RBM-r step count; RBM-r time is `step · τ`.
    pub step: u64,
    pub t: f64,
    /// `sqrt((1/N) Σ_i |Ṽ_i - V̂_ii|²)`
    pub w_v_rms: f64,
    pub w_v_max: f64,
    /// `sqrt((1/N) Σ_i |V̂_ii - V_i(pt/N)|²)`, recorded when `p | N` and the
    /// step lands on a full-system window.
    pub step2_rms: Option<f64>,
    pub momentum_drift_rbmr: f64,
    pub momentum_drift_ips: f64,
    /// Worst drift over all copies.
    pub momentum_drift_ips_prime: f64,
    pub mean_eta: f64,
}

#[derive(Debug, Clone)]
pub struct TripleReport {
    pub history: Vec<TripleRecord>,
    pub state: TripleState,
}

fn drift(e: &Ensemble, m0: &[f64]) -> f64 {
    momentum(e)
        .iter()
        .zip(m0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn record(state: &TripleState, step: u64, tau: f64, m0: &[f64], ips_aligned: bool) -> TripleRecord {
    let n = state.rbmr.n();
    let mut w_sum = 0.0;
    let mut w_max = 0.0f64;
    let mut s2_sum = 0.0;
    for i in 0..n {
        let own = state.ips_prime[i].vel(i);
        let w: f64 = state
            .rbmr
            .vel(i)
            .iter()
            .zip(own)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        w_sum += w;
        w_max = w_max.max(w.sqrt());
        if ips_aligned {
            s2_sum += own
                .iter()
                .zip(state.ips.vel(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    TripleRecord {
        step,
        t: step as f64 * tau,
        w_v_rms: (w_sum / n as f64).sqrt(),
        w_v_max: w_max,
        step2_rms: ips_aligned.then(|| (s2_sum / n as f64).sqrt()),
        momentum_drift_rbmr: drift(&state.rbmr, m0),
        momentum_drift_ips: drift(&state.ips, m0),
        momentum_drift_ips_prime: state
            .ips_prime
            .iter()
            .map(|e| drift(e, m0))
            .fold(0.0, f64::max),
        mean_eta: state.ledger.eta().iter().sum::<u64>() as f64 / n as f64,
    }
}

/// Runs `t_end / τ` raw RBM-r steps of replication 0 with the coupled full
/// system and its `N` time-changed copies.
pub fn run_triple(config: &SimConfig, max_n: usize) -> Result<TripleReport> {
    config.validate()?;
    if config.n > max_n {
        return Err(Error::config(format!(
            "triple run holds N + 2 ensembles; N = {} exceeds the guard {max_n}",
            config.n
        )));
    }
    let n = config.n;
    let steps = config.windows()?;
    let initial = config.initial_ensemble()?;
    let m0 = momentum(&initial);

    let mut batch_stepper = config.stepper()?;
    let mut full_stepper = Stepper::new(
        n,
        config.kernel.clone(),
        config.kappa,
        n,
        config.tau,
        config.dt,
    )?;
    let mut rng = RngStream::new(config.seed, replication_stream(0));

    let mut state = TripleState {
        rbmr: initial.clone(),
        ips: initial.clone(),
        ips_prime: vec![initial.clone(); n],
        ledger: SelectionLedger::new(n, config.tau),
    };
    let per_window = n.is_multiple_of(config.p).then_some(n / config.p);

    let mut history = Vec::with_capacity(steps + 1);
    history.push(record(&state, 0, config.tau, &m0, per_window.is_some()));
    for k in 1..=steps as u64 {
        batch_stepper.step_rbmr(&mut state.rbmr, &mut rng, &mut state.ledger)?;
        state.rbmr.t = k as f64 * config.tau;
        for &i in batch_stepper.last_batch() {
            full_stepper.step_ips(&mut state.ips_prime[i])?;
        }
        let aligned = match per_window {
            Some(per) if k % per as u64 == 0 => {
                full_stepper.step_ips(&mut state.ips)?;
                state.ips.t = (k / per as u64) as f64 * config.tau;
                true
            }
            _ => false,
        };
        history.push(record(&state, k, config.tau, &m0, aligned));
    }
    Ok(TripleReport { history, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::MethodKind;

    fn cfg(n: usize, p: usize, t_end: f64) -> SimConfig {
        SimConfig {
            n,
            p,
            tau: 0.1,
            dt: 0.05,
            t_end,
            method: MethodKind::Rbmr,
            seed: 11,
            ..SimConfig::default()
        }
    }

    #[test]
    fn starts_with_zero_discrepancy() {
        let rep = run_triple(&cfg(8, 2, 0.4), DEFAULT_TRIPLE_MAX_N).unwrap();
        let first = &rep.history[0];
        assert_eq!(first.w_v_rms, 0.0);
        assert_eq!(first.step2_rms, Some(0.0));
        assert_eq!(rep.history.len(), 5);
    }

    #[test]
    fn full_batch_couples_exactly() {
        let rep = run_triple(&cfg(6, 6, 1.0), DEFAULT_TRIPLE_MAX_N).unwrap();
        for r in &rep.history {
            assert_eq!(r.w_v_rms, 0.0);
            assert_eq!(r.step2_rms, Some(0.0));
        }
        assert!(rep.state.ledger.eta().iter().all(|&e| e == 10));
    }

    #[test]
    fn momentum_conserved_in_all_three_systems() {
        let rep = run_triple(&cfg(16, 2, 3.2), DEFAULT_TRIPLE_MAX_N).unwrap();
        for r in &rep.history {
            assert!(r.momentum_drift_rbmr <= 1e-12);
            assert!(r.momentum_drift_ips <= 1e-12);
            assert!(r.momentum_drift_ips_prime <= 1e-12);
        }
        // Σ_i η_i = p · steps exactly.
        let last = rep.history.last().unwrap();
        assert_eq!(last.mean_eta, 2.0 * 32.0 / 16.0);
        assert!(last.w_v_rms > 0.0);
    }

    #[test]
    fn frozen_copies_do_not_move() {
        let rep = run_triple(&cfg(8, 2, 0.5), DEFAULT_TRIPLE_MAX_N).unwrap();
        for (i, copy) in rep.state.ips_prime.iter().enumerate() {
            let eta = rep.state.ledger.eta()[i];
            if eta == 0 {
                assert_eq!(copy.t, 0.0);
            } else {
                assert!((copy.t - eta as f64 * 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn memory_guard() {
        assert!(matches!(
            run_triple(&cfg(16, 2, 0.1), 8),
            Err(Error::Config(_))
        ));
    }
}
