//! Right-hand sides of the Cucker–Smale system and forward-Euler stepping.
//!
//! All coupled updates funnel through [`pair_accumulate`], which visits every
//! unordered pair once and applies `+f` to one side and `-f` to the other, so
//! in-batch velocity increments are antisymmetric term by term.

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::sampling::{check_batch, Batch};

/// Positions and velocities of `n` particles in `d` dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    n: usize,
    d: usize,
    pub(crate) x: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub t: f64,
}

impl Ensemble {
    pub fn new(d: usize, x: Vec<f64>, v: Vec<f64>, t: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("dimension d must be >= 1"));
        }
        if x.len() != v.len() || !x.len().is_multiple_of(d) {
            return Err(Error::domain(format!(
                "position/velocity arrays of lengths {} and {} do not form N x {d} shapes",
                x.len(),
                v.len()
            )));
        }
        let n = x.len() / d;
        if n < 1 {
            return Err(Error::domain("ensemble needs at least one particle"));
        }
        if x.iter().chain(&v).any(|a| !a.is_finite()) || !t.is_finite() {
            return Err(Error::domain("ensemble entries must be finite"));
        }
        Ok(Self { n, d, x, v, t })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn pos(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn vel(&self, i: usize) -> &[f64] {
        &self.v[i * self.d..(i + 1) * self.d]
    }

    /// Bitwise equality of the state arrays, ignoring `t`.
    pub fn same_state(&self, other: &Ensemble) -> bool {
        self.d == other.d
            && self.x.len() == other.x.len()
            && self
                .x
                .iter()
                .chain(&self.v)
                .zip(other.x.iter().chain(&other.v))
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `(dx, dv)` evaluated at an [`Ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
}

/// Sums `ψ(|x_j - x_i|)(v_j - v_i)` over every `j != i` of a contiguous
/// block of `m = x.len() / d` particles, writing into `acc` (length `m·d`).
///
/// The accumulation into row `i` runs over `j` in ascending order, which is
/// the same order [`neighbor_accumulate`] uses; both routes therefore agree
/// bit for bit when the neighbor list of `i` is everyone else.
pub(crate) fn pair_accumulate(x: &[f64], v: &[f64], d: usize, kernel: &Kernel, acc: &mut [f64]) {
    let m = x.len() / d;
    acc.iter_mut().for_each(|a| *a = 0.0);
    if d == 1 {
        for i in 0..m {
            let (xi, vi) = (x[i], v[i]);
            for j in i + 1..m {
                let dx = x[j] - xi;
                let w = kernel.weight_sq(dx * dx);
                let f = w * (v[j] - vi);
                acc[i] += f;
                acc[j] -= f;
            }
        }
        return;
    }
    for i in 0..m {
        for j in i + 1..m {
            let r2 = sq_dist(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
            let w = kernel.weight_sq(r2);
            for c in 0..d {
                let f = w * (v[j * d + c] - v[i * d + c]);
                acc[i * d + c] += f;
                acc[j * d + c] -= f;
            }
        }
    }
}

/// Per-particle accumulation over explicit, sorted neighbor lists.
/// `neighbors` holds `k` entries per particle.
pub(crate) fn neighbor_accumulate(
    x: &[f64],
    v: &[f64],
    d: usize,
    kernel: &Kernel,
    neighbors: &[usize],
    k: usize,
    acc: &mut [f64],
) {
    let m = x.len() / d;
    acc.iter_mut().for_each(|a| *a = 0.0);
    for i in 0..m {
        for &j in &neighbors[i * k..(i + 1) * k] {
            // Same operand order as the pair loop sees from j's side.
            let r2 = if j < i {
                sq_dist(&x[j * d..(j + 1) * d], &x[i * d..(i + 1) * d])
            } else {
                sq_dist(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d])
            };
            let w = kernel.weight_sq(r2);
            for c in 0..d {
                acc[i * d + c] += w * (v[j * d + c] - v[i * d + c]);
            }
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum()
}

/// One explicit Euler update given the raw accumulator; `scale` is
/// `κ/(m-1)`. The accumulator is turned into `dv` in place.
#[inline]
pub(crate) fn euler_apply(x: &mut [f64], v: &mut [f64], acc: &mut [f64], scale: f64, dt: f64) {
    for a in acc.iter_mut() {
        *a *= scale;
    }
    for (xi, vi) in x.iter_mut().zip(v.iter()) {
        *xi += dt * *vi;
    }
    for (vi, dvi) in v.iter_mut().zip(acc.iter()) {
        *vi += dt * *dvi;
    }
}

pub(crate) fn coupling_scale(kappa: f64, m: usize) -> f64 {
    kappa / (m - 1) as f64
}

/// Full-system right-hand side:
/// `dv_i = κ/(N-1) Σ_j ψ(|x_j - x_i|)(v_j - v_i)`.
pub fn full_rhs(e: &Ensemble, kernel: &Kernel, kappa: f64) -> Result<Derivative> {
    if e.n < 2 {
        return Err(Error::domain("full_rhs needs N >= 2 particles"));
    }
    let mut dv = vec![0.0; e.v.len()];
    pair_accumulate(&e.x, &e.v, e.d, kernel, &mut dv);
    let scale = coupling_scale(kappa, e.n);
    dv.iter_mut().for_each(|a| *a *= scale);
    Ok(Derivative {
        dx: e.v.clone(),
        dv,
    })
}

/// Right-hand side of the batch subsystem: members interact with factor
/// `κ/(p-1)`, everyone else has zero derivative.
pub fn batch_rhs(e: &Ensemble, batch: &Batch, kernel: &Kernel, kappa: f64) -> Result<Derivative> {
    batch_rhs_indices(e, batch.indices(), kernel, kappa)
}

pub(crate) fn batch_rhs_indices(
    e: &Ensemble,
    sorted: &[usize],
    kernel: &Kernel,
    kappa: f64,
) -> Result<Derivative> {
    check_batch(sorted, e.n)?;
    let d = e.d;
    let p = sorted.len();
    let mut bx = Vec::with_capacity(p * d);
    let mut bv = Vec::with_capacity(p * d);
    for &i in sorted {
        bx.extend_from_slice(e.pos(i));
        bv.extend_from_slice(e.vel(i));
    }
    let mut acc = vec![0.0; p * d];
    pair_accumulate(&bx, &bv, d, kernel, &mut acc);
    let scale = coupling_scale(kappa, p);
    let mut dx = vec![0.0; e.x.len()];
    let mut dv = vec![0.0; e.v.len()];
    for (slot, &i) in sorted.iter().enumerate() {
        for c in 0..d {
            dx[i * d + c] = bv[slot * d + c];
            dv[i * d + c] = acc[slot * d + c] * scale;
        }
    }
    Ok(Derivative { dx, dv })
}

/// One explicit Euler step: the derivative is evaluated once at the pre-step
/// state. `step` only labels a blowup error.
pub fn euler_substep<F>(e: &Ensemble, deriv_fn: F, dt: f64, step: u64) -> Result<Ensemble>
where
    F: Fn(&Ensemble) -> Result<Derivative>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let der = deriv_fn(e)?;
    if der.dx.len() != e.x.len() || der.dv.len() != e.v.len() {
        return Err(Error::domain(
            "derivative shape does not match the ensemble",
        ));
    }
    let mut next = e.clone();
    for (xi, dxi) in next.x.iter_mut().zip(&der.dx) {
        *xi += dt * dxi;
    }
    for (vi, dvi) in next.v.iter_mut().zip(&der.dv) {
        *vi += dt * dvi;
    }
    next.t += dt;
    check_finite(&next.x, &next.v, step)?;
    Ok(next)
}

pub(crate) fn check_finite(x: &[f64], v: &[f64], step: u64) -> Result<()> {
    if let Some(bad) = x.iter().chain(v).find(|a| !a.is_finite()) {
        return Err(Error::Blowup {
            step,
            what: format!("state entry became {bad}"),
        });
    }
    Ok(())
}

/// Number of Euler sub-steps covering one window of length `tau`.
pub fn substeps(tau: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(tau > 0.0) || !dt.is_finite() || !tau.is_finite() {
        return Err(Error::config(format!(
            "need 0 < dt <= tau, got dt = {dt}, tau = {tau}"
        )));
    }
    let ratio = tau / dt;
    let k = ratio.round();
    if k < 1.0 || ((k * dt - tau) / tau).abs() > 1e-9 {
        return Err(Error::config(format!(
            "window tau = {tau} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

/// Advances `e` over a window of length `tau` with `tau/dt` Euler sub-steps.
/// The final time is `t + tau` exactly.
pub fn integrate_interval<F>(e: &Ensemble, deriv_fn: F, tau: f64, dt: f64) -> Result<Ensemble>
where
    F: Fn(&Ensemble) -> Result<Derivative>,
{
    let k = substeps(tau, dt)?;
    let t0 = e.t;
    let mut cur = e.clone();
    for s in 0..k {
        cur = euler_substep(&cur, &deriv_fn, dt, s as u64)?;
    }
    cur.t = t0 + tau;
    Ok(cur)
}

/// Classical fourth-order Runge–Kutta over one window, for reference
/// trajectories that should carry negligible integrator error.
pub fn integrate_interval_rk4(
    e: &Ensemble,
    kernel: &Kernel,
    kappa: f64,
    tau: f64,
    dt: f64,
) -> Result<Ensemble> {
    let k = substeps(tau, dt)?;
    let t0 = e.t;
    let mut cur = e.clone();
    let shifted = |base: &Ensemble, der: &Derivative, h: f64| {
        let mut s = base.clone();
        for (a, b) in s.x.iter_mut().zip(&der.dx) {
            *a += h * b;
        }
        for (a, b) in s.v.iter_mut().zip(&der.dv) {
            *a += h * b;
        }
        s
    };
    for s in 0..k {
        let k1 = full_rhs(&cur, kernel, kappa)?;
        let k2 = full_rhs(&shifted(&cur, &k1, dt / 2.0), kernel, kappa)?;
        let k3 = full_rhs(&shifted(&cur, &k2, dt / 2.0), kernel, kappa)?;
        let k4 = full_rhs(&shifted(&cur, &k3, dt), kernel, kappa)?;
        for idx in 0..cur.x.len() {
            cur.x[idx] +=
                dt / 6.0 * (k1.dx[idx] + 2.0 * k2.dx[idx] + 2.0 * k3.dx[idx] + k4.dx[idx]);
            cur.v[idx] +=
                dt / 6.0 * (k1.dv[idx] + 2.0 * k2.dv[idx] + 2.0 * k3.dv[idx] + k4.dv[idx]);
        }
        check_finite(&cur.x, &cur.v, s as u64)?;
    }
    cur.t = t0 + tau;
    Ok(cur)
}
