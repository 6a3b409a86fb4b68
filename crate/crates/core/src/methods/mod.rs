//! Time-stepping drivers for the full system and its random batch
//! approximations.
//!
//! Every method advances the state by one window of length `tau`, solved
//! with `tau / dt` forward-Euler sub-steps. All coupled updates go through the
//! same block routine, so with `p = N` every approximation reproduces the full
//! system bit for bit.

mod run;
mod triple;

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{
    check_finite, coupling_scale, euler_apply, neighbor_accumulate, pair_accumulate, substeps,
    Ensemble,
};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::sampling::{mc_neighbors_into, shuffle, BatchSampler, RngStream};

pub use run::{initial_ensemble, reference_trajectory, run, run_replication, RunOutput};
pub use triple::{run_triple, TripleRecord, TripleReport, TripleState, DEFAULT_TRIPLE_MAX_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    /// The full interacting particle system.
    Ips,
    /// Random partition into `N/p` batches each window.
    Rbm1,
    /// One batch per step, everyone else frozen. Its clock runs `N/p` times
    /// faster than the full system's.
    Rbmr,
    /// `N/p` sequential RBM-r batches per window, aligned with the full
    /// system's clock.
    RbmrEquiv,
    /// Per-particle neighbor resampling.
    Mc,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Ips,
        MethodKind::Rbm1,
        MethodKind::Rbmr,
        MethodKind::RbmrEquiv,
        MethodKind::Mc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Ips => "ips",
            MethodKind::Rbm1 => "rbm1",
            MethodKind::Rbmr => "rbmr",
            MethodKind::RbmrEquiv => "rbmr_equiv",
            MethodKind::Mc => "mc",
        }
    }

    /// Methods whose window needs `p | N`.
    pub fn needs_divisibility(self) -> bool {
        matches!(self, MethodKind::Rbm1 | MethodKind::RbmrEquiv)
    }

    pub fn is_random(self) -> bool {
        self != MethodKind::Ips
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ips" | "full" => Ok(MethodKind::Ips),
            "rbm1" | "rbm_1" => Ok(MethodKind::Rbm1),
            "rbmr" | "rbm_r" => Ok(MethodKind::Rbmr),
            "rbmr_equiv" | "rbmr_eq" => Ok(MethodKind::RbmrEquiv),
            "mc" => Ok(MethodKind::Mc),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-particle selection bookkeeping.
///
/// One ledger step is one batch draw of length `tau` on the RBM-r clock
/// (an RBM-1 window counts as a single step in which everyone is selected).
/// `eta[i]` counts the steps that selected `i`, `zeta[i]` lists them, and the
/// selected time `t^(i)` is `eta[i] * tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionLedger {
    tau: f64,
    steps: u64,
    eta: Vec<u64>,
    zeta: Vec<Vec<u64>>,
}

impl SelectionLedger {
    pub fn new(n: usize, tau: f64) -> Self {
        Self {
            tau,
            steps: 0,
            eta: vec![0; n],
            zeta: vec![Vec::new(); n],
        }
    }

    pub fn record(&mut self, members: &[usize]) {
        for &i in members {
            self.eta[i] += 1;
            self.zeta[i].push(self.steps);
        }
        self.steps += 1;
    }

    pub fn record_all(&mut self) {
        for (eta, zeta) in self.eta.iter_mut().zip(&mut self.zeta) {
            *eta += 1;
            zeta.push(self.steps);
        }
        self.steps += 1;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn elapsed(&self) -> f64 {
        self.steps as f64 * self.tau
    }

    pub fn eta(&self) -> &[u64] {
        &self.eta
    }

    pub fn zeta(&self, i: usize) -> &[u64] {
        &self.zeta[i]
    }

    pub fn t_selected(&self, i: usize) -> f64 {
        self.eta[i] as f64 * self.tau
    }
}

/// Advances a contiguous block of `m` particles by `k` Euler sub-steps with
/// coupling `scale = κ/(m-1)`.
#[allow(clippy::too_many_arguments)]
fn evolve_block(
    x: &mut [f64],
    v: &mut [f64],
    d: usize,
    kernel: &Kernel,
    scale: f64,
    dt: f64,
    k: usize,
    acc: &mut Vec<f64>,
    counter: &mut u64,
) -> Result<()> {
    acc.resize(v.len(), 0.0);
    for _ in 0..k {
        pair_accumulate(x, v, d, kernel, acc);
        euler_apply(x, v, acc, scale, dt);
        check_finite(x, v, *counter)?;
        *counter += 1;
    }
    Ok(())
}

/// Reusable stepping state for one replication: parameters, the batch
/// sampler's permutation buffer, and scratch arrays.
#[derive(Debug, Clone)]
pub struct Stepper {
    kernel: Kernel,
    kappa: f64,
    n: usize,
    p: usize,
    tau: f64,
    dt: f64,
    substeps: usize,
    sampler: BatchSampler,
    perm: Vec<usize>,
    batch: Vec<usize>,
    bx: Vec<f64>,
    bv: Vec<f64>,
    acc: Vec<f64>,
    neighbors: Vec<usize>,
    nb_tmp: Vec<usize>,
    substep_counter: u64,
}

impl Stepper {
    pub fn new(n: usize, kernel: Kernel, kappa: f64, p: usize, tau: f64, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!("need N >= 2 particles, got {n}")));
        }
        if p < 2 || p > n {
            return Err(Error::config(format!(
                "need 2 <= p <= N, got p = {p}, N = {n}"
            )));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::config(format!(
                "coupling kappa must be >= 0, got {kappa}"
            )));
        }
        let substeps = substeps(tau, dt)?;
        Ok(Self {
            kernel,
            kappa,
            n,
            p,
            tau,
            dt,
            substeps,
            sampler: BatchSampler::new(n),
            perm: (0..n).collect(),
            batch: Vec::with_capacity(p),
            bx: Vec::new(),
            bv: Vec::new(),
            acc: Vec::new(),
            neighbors: Vec::new(),
            nb_tmp: Vec::new(),
            substep_counter: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Members of the most recently evolved batch, sorted.
    pub fn last_batch(&self) -> &[usize] {
        &self.batch
    }

    fn check_shape(&self, e: &Ensemble) -> Result<()> {
        if e.n() != self.n {
            return Err(Error::domain(format!(
                "stepper built for N = {} but ensemble has {}",
                self.n,
                e.n()
            )));
        }
        Ok(())
    }

    fn check_divisible(&self) -> Result<()> {
        if !self.n.is_multiple_of(self.p) {
            return Err(Error::config(format!(
                "batch size p = {} must divide N = {}",
                self.p, self.n
            )));
        }
        Ok(())
    }

    /// Advances the full system by one window.
    pub fn step_ips(&mut self, e: &mut Ensemble) -> Result<()> {
        self.check_shape(e)?;
        let scale = coupling_scale(self.kappa, self.n);
        let d = e.d();
        evolve_block(
            &mut e.x,
            &mut e.v,
            d,
            &self.kernel,
            scale,
            self.dt,
            self.substeps,
            &mut self.acc,
            &mut self.substep_counter,
        )?;
        e.t += self.tau;
        Ok(())
    }

    /// Evolves the particles listed in `self.batch` (sorted) as an isolated
    /// subsystem over one window.
    fn evolve_current_batch(&mut self, e: &mut Ensemble) -> Result<()> {
        let d = e.d();
        let m = self.batch.len();
        self.bx.clear();
        self.bv.clear();
        for &i in &self.batch {
            self.bx.extend_from_slice(&e.x[i * d..(i + 1) * d]);
            self.bv.extend_from_slice(&e.v[i * d..(i + 1) * d]);
        }
        evolve_block(
            &mut self.bx,
            &mut self.bv,
            d,
            &self.kernel,
            coupling_scale(self.kappa, m),
            self.dt,
            self.substeps,
            &mut self.acc,
            &mut self.substep_counter,
        )?;
        for (slot, &i) in self.batch.iter().enumerate() {
            e.x[i * d..(i + 1) * d].copy_from_slice(&self.bx[slot * d..(slot + 1) * d]);
            e.v[i * d..(i + 1) * d].copy_from_slice(&self.bv[slot * d..(slot + 1) * d]);
        }
        Ok(())
    }

    /// RBM-1: draw a uniform partition into `N/p` batches and evolve every
    /// batch independently over the window, in batch order.
    pub fn step_rbm1(
        &mut self,
        e: &mut Ensemble,
        rng: &mut RngStream,
        ledger: &mut SelectionLedger,
    ) -> Result<()> {
        self.check_shape(e)?;
        self.check_divisible()?;
        shuffle(rng, &mut self.perm);
        for b in 0..self.n / self.p {
            self.batch.clear();
            self.batch
                .extend_from_slice(&self.perm[b * self.p..(b + 1) * self.p]);
            self.batch.sort_unstable();
            self.evolve_current_batch(e)?;
        }
        ledger.record_all();
        e.t += self.tau;
        Ok(())
    }

    /// RBM-r: one uniform batch evolves over the window; non-members are
    /// left untouched.
    pub fn step_rbmr(
        &mut self,
        e: &mut Ensemble,
        rng: &mut RngStream,
        ledger: &mut SelectionLedger,
    ) -> Result<()> {
        self.check_shape(e)?;
        self.rbmr_inner(e, rng, ledger)?;
        e.t += self.tau;
        Ok(())
    }

    fn rbmr_inner(
        &mut self,
        e: &mut Ensemble,
        rng: &mut RngStream,
        ledger: &mut SelectionLedger,
    ) -> Result<()> {
        let mut batch = std::mem::take(&mut self.batch);
        self.sampler.draw_into(rng, self.p, &mut batch);
        ledger.record(&batch);
        self.batch = batch;
        self.evolve_current_batch(e)
    }

    /// RBM-r on the full system's clock: `N/p` sequential batch draws, each
    /// evolved over the same window.
    pub fn step_rbmr_equiv(
        &mut self,
        e: &mut Ensemble,
        rng: &mut RngStream,
        ledger: &mut SelectionLedger,
    ) -> Result<()> {
        self.check_shape(e)?;
        self.check_divisible()?;
        for _ in 0..self.n / self.p {
            self.rbmr_inner(e, rng, ledger)?;
        }
        e.t += self.tau;
        Ok(())
    }

    /// Direct MC: each particle draws its own `p - 1` neighbors at the start
    /// of the window; all particles then move simultaneously.
    pub fn step_mc(&mut self, e: &mut Ensemble, rng: &mut RngStream) -> Result<()> {
        self.check_shape(e)?;
        let (n, p, d) = (self.n, self.p, e.d());
        let k = p - 1;
        self.neighbors.clear();
        for i in 0..n {
            mc_neighbors_into(rng, n, p, i, &mut self.nb_tmp);
            self.neighbors.extend_from_slice(&self.nb_tmp);
        }
        let scale = coupling_scale(self.kappa, p);
        self.acc.resize(n * d, 0.0);
        for _ in 0..self.substeps {
            neighbor_accumulate(
                &e.x,
                &e.v,
                d,
                &self.kernel,
                &self.neighbors,
                k,
                &mut self.acc,
            );
            euler_apply(&mut e.x, &mut e.v, &mut self.acc, scale, self.dt);
            check_finite(&e.x, &e.v, self.substep_counter)?;
            self.substep_counter += 1;
        }
        e.t += self.tau;
        Ok(())
    }

    /// Dispatches one window of `kind`.
    pub fn step(
        &mut self,
        kind: MethodKind,
        e: &mut Ensemble,
        rng: &mut RngStream,
        ledger: &mut SelectionLedger,
    ) -> Result<()> {
        match kind {
            MethodKind::Ips => self.step_ips(e),
            MethodKind::Rbm1 => self.step_rbm1(e, rng, ledger),
            MethodKind::Rbmr => self.step_rbmr(e, rng, ledger),
            MethodKind::RbmrEquiv => self.step_rbmr_equiv(e, rng, ledger),
            MethodKind::Mc => self.step_mc(e, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{full_rhs, integrate_interval};
    use crate::metrics::momentum;

    fn sample_ensemble(n: usize, seed: u64) -> Ensemble {
        initial_ensemble(n, 1, 1.0, 1.0, seed).unwrap()
    }

    fn invpow() -> Kernel {
        Kernel::inverse_power(0.25).unwrap()
    }

    fn max_abs(a: &[f64]) -> f64 {
        a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn method_names_round_trip() {
        for kind in MethodKind::ALL {
            assert_eq!(kind.as_str().parse::<MethodKind>().unwrap(), kind);
        }
        assert_eq!(
            "rbmr-equiv".parse::<MethodKind>().unwrap(),
            MethodKind::RbmrEquiv
        );
        assert!("rbm2".parse::<MethodKind>().is_err());
    }

    #[test]
    fn stepper_rejects_bad_parameters() {
        assert!(Stepper::new(4, invpow(), 1.0, 1, 0.1, 0.1).is_err());
        assert!(Stepper::new(4, invpow(), 1.0, 5, 0.1, 0.1).is_err());
        assert!(Stepper::new(4, invpow(), 1.0, 2, 0.1, 0.03).is_err());
        let mut s = Stepper::new(5, invpow(), 1.0, 2, 0.1, 0.1).unwrap();
        let mut e = sample_ensemble(5, 1);
        let mut rng = RngStream::new(1, 1);
        let mut ledger = SelectionLedger::new(5, 0.1);
        assert!(matches!(
            s.step_rbm1(&mut e, &mut rng, &mut ledger),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            s.step_rbmr_equiv(&mut e, &mut rng, &mut ledger),
            Err(Error::Config(_))
        ));
        // RBM-r and MC do not need divisibility.
        s.step_rbmr(&mut e, &mut rng, &mut ledger).unwrap();
        s.step_mc(&mut e, &mut rng).unwrap();
    }

    #[test]
    fn ips_matches_public_integrator() {
        let e0 = sample_ensemble(6, 2);
        let k = invpow();
        let mut s = Stepper::new(6, k.clone(), 1.0, 2, 0.1, 0.025).unwrap();
        let mut e = e0.clone();
        s.step_ips(&mut e).unwrap();
        let f = |e: &Ensemble| full_rhs(e, &k, 1.0);
        let expect = integrate_interval(&e0, f, 0.1, 0.025).unwrap();
        assert!(e.same_state(&expect));
    }

    #[test]
    fn uniform_velocity_translates() {
        let mut e = Ensemble::new(1, vec![0.0, 0.5, 2.0], vec![0.3; 3], 0.0).unwrap();
        let mut s = Stepper::new(3, invpow(), 1.0, 3, 0.1, 0.05).unwrap();
        s.step_ips(&mut e).unwrap();
        assert_eq!(e.v(), &[0.3, 0.3, 0.3]);
        assert!((e.x()[0] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn full_batch_degenerates_to_ips() {
        let n = 8;
        let e0 = sample_ensemble(n, 3);
        let mut reference = e0.clone();
        let mut s_ref = Stepper::new(n, invpow(), 1.0, n, 0.1, 0.05).unwrap();
        for _ in 0..5 {
            s_ref.step_ips(&mut reference).unwrap();
        }
        for kind in [
            MethodKind::Rbm1,
            MethodKind::Rbmr,
            MethodKind::RbmrEquiv,
            MethodKind::Mc,
        ] {
            let mut e = e0.clone();
            let mut s = Stepper::new(n, invpow(), 1.0, n, 0.1, 0.05).unwrap();
            let mut rng = RngStream::new(5, 1);
            let mut ledger = SelectionLedger::new(n, 0.1);
            for _ in 0..5 {
                s.step(kind, &mut e, &mut rng, &mut ledger).unwrap();
            }
            assert!(e.same_state(&reference), "{kind} differs from ips");
        }
    }

    #[test]
    fn rbm1_touches_every_particle_once() {
        let n = 4;
        let mut e = sample_ensemble(n, 4);
        let mut s = Stepper::new(n, invpow(), 1.0, 2, 0.1, 0.1).unwrap();
        let mut rng = RngStream::new(4, 1);
        let mut ledger = SelectionLedger::new(n, 0.1);
        s.step_rbm1(&mut e, &mut rng, &mut ledger).unwrap();
        assert_eq!(ledger.eta(), &[1, 1, 1, 1]);
        assert_eq!(ledger.steps(), 1);
    }

    #[test]
    fn rbmr_freezes_non_members() {
        let n = 10;
        let mut e = sample_ensemble(n, 5);
        let mut s = Stepper::new(n, invpow(), 1.0, 3, 0.1, 0.02).unwrap();
        let mut rng = RngStream::new(5, 1);
        let mut ledger = SelectionLedger::new(n, 0.1);
        for _ in 0..20 {
            let before = e.clone();
            let eta_before = ledger.eta().to_vec();
            s.step_rbmr(&mut e, &mut rng, &mut ledger).unwrap();
            let members: Vec<usize> = (0..n)
                .filter(|&i| ledger.eta()[i] > eta_before[i])
                .collect();
            assert_eq!(members.len(), 3);
            for i in (0..n).filter(|i| !members.contains(i)) {
                assert_eq!(e.pos(i)[0].to_bits(), before.pos(i)[0].to_bits());
                assert_eq!(e.vel(i)[0].to_bits(), before.vel(i)[0].to_bits());
            }
        }
        for i in 0..n {
            assert!(ledger.t_selected(i) <= ledger.elapsed() + 1e-12);
            assert_eq!(ledger.eta()[i] as usize, ledger.zeta(i).len());
        }
    }

    #[test]
    fn rbmr_equiv_draws_n_over_p_batches() {
        let n = 64;
        let mut e = sample_ensemble(n, 6);
        let mut s = Stepper::new(n, invpow(), 1.0, 2, 0.1, 0.1).unwrap();
        let mut rng = RngStream::new(6, 1);
        let mut ledger = SelectionLedger::new(n, 0.1);
        s.step_rbmr_equiv(&mut e, &mut rng, &mut ledger).unwrap();
        assert_eq!(ledger.steps(), 32);
        assert_eq!(ledger.eta().iter().sum::<u64>(), 64);
    }

    #[test]
    fn momentum_conserved_by_batch_methods() {
        let n = 16;
        for kind in [
            MethodKind::Ips,
            MethodKind::Rbm1,
            MethodKind::Rbmr,
            MethodKind::RbmrEquiv,
        ] {
            let mut e = sample_ensemble(n, 7);
            let m0 = momentum(&e)[0];
            let mut s = Stepper::new(n, invpow(), 1.0, 4, 0.1, 0.025).unwrap();
            let mut rng = RngStream::new(7, 1);
            let mut ledger = SelectionLedger::new(n, 0.1);
            for _ in 0..10 {
                s.step(kind, &mut e, &mut rng, &mut ledger).unwrap();
                let drift = (momentum(&e)[0] - m0).abs();
                assert!(
                    drift <= 1e-12 * n as f64 * max_abs(e.v()),
                    "{kind}: {drift}"
                );
            }
        }
    }

    #[test]
    fn mc_breaks_momentum_in_constructed_case() {
        // N = 4, p = 2, v = (1, -1, 0, 0). Whenever particle 0 draws 1 but 1
        // does not draw 0 the update is one-sided and momentum moves.
        let k = Kernel::constant(1.0).unwrap();
        let mut drifted = false;
        for seed in 0..20 {
            let mut e = Ensemble::new(1, vec![0.0; 4], vec![1.0, -1.0, 0.0, 0.0], 0.0).unwrap();
            let mut s = Stepper::new(4, k.clone(), 1.0, 2, 0.1, 0.1).unwrap();
            let mut rng = RngStream::new(seed, 1);
            s.step_mc(&mut e, &mut rng).unwrap();
            if momentum(&e)[0].abs() > 1e-3 {
                drifted = true;
            }
        }
        assert!(drifted);
    }

    #[test]
    fn mc_uniform_velocity_is_fixed_point() {
        let mut e = Ensemble::new(1, vec![0.0, 0.2, 0.9, 1.4], vec![-0.4; 4], 0.0).unwrap();
        let mut s = Stepper::new(4, invpow(), 1.0, 2, 0.1, 0.05).unwrap();
        let mut rng = RngStream::new(1, 1);
        s.step_mc(&mut e, &mut rng).unwrap();
        assert_eq!(e.v(), &[-0.4; 4]);
    }
}
