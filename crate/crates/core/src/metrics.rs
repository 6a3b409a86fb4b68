//! Scalar diagnostics: SSD, diameters, momentum, energy, ℓ²-error, the
//! error scaling factors, the flocking rate constants and a log-linear decay
//! fit.

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};

/// Scaled sum of squared differences `(1/N²) Σ_{i,j} |u_i - u_j|²` of an
/// `N x d` row-major array, via `2((1/N) Σ |u_i|² - |ū|²)`.
pub fn ssd(values: &[f64], d: usize) -> f64 {
    let n = values.len() / d;
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..n).map(|i| values[i * d + c]).sum::<f64>() / nf;
        // Centered second moment; algebraically equal to the identity above
        // but without cancellation.
        total += (0..n)
            .map(|i| (values[i * d + c] - mean).powi(2))
            .sum::<f64>()
            / nf;
    }
    (2.0 * total).max(0.0)
}

fn max_pairwise(values: &[f64], d: usize) -> f64 {
    let n = values.len() / d;
    if d == 1 {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
                (lo.min(a), hi.max(a))
            });
        return if n == 0 { 0.0 } else { hi - lo };
    }
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let r2: f64 = (0..d)
                .map(|c| (values[j * d + c] - values[i * d + c]).powi(2))
                .sum();
            best = best.max(r2);
        }
    }
    best.sqrt()
}

/// Position and velocity diameters `(D_X, D_V)`: largest pairwise Euclidean
/// distance.
pub fn diameters(e: &Ensemble) -> (f64, f64) {
    (max_pairwise(e.x(), e.d()), max_pairwise(e.v(), e.d()))
}

/// `Σ_i v_i`, one entry per dimension.
pub fn momentum(e: &Ensemble) -> Vec<f64> {
    let d = e.d();
    (0..d)
        .map(|c| (0..e.n()).map(|i| e.v()[i * d + c]).sum())
        .collect()
}

/// `Σ_i |v_i|²`.
pub fn energy(e: &Ensemble) -> f64 {
    e.v().iter().map(|a| a * a).sum()
}

/// Root-mean-square per-particle velocity error
/// `sqrt((1/N) Σ_i |ṽ_i - v_i|²)`.
pub fn l2_error(approx: &Ensemble, reference: &Ensemble) -> Result<f64> {
    if approx.n() != reference.n() || approx.d() != reference.d() {
        return Err(Error::domain(format!(
            "shape mismatch: {}x{} vs {}x{}",
            approx.n(),
            approx.d(),
            reference.n(),
            reference.d()
        )));
    }
    if (approx.t - reference.t).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "time stamps not aligned: {} vs {}",
            approx.t, reference.t
        )));
    }
    let sum: f64 = approx
        .v()
        .iter()
        .zip(reference.v())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / approx.n() as f64).sqrt())
}

fn check_scale_args(n: usize, p: usize) -> Result<()> {
    if n < 3 || p < 2 || p > n {
        return Err(Error::domain(format!(
            "scaling factor needs 2 <= p <= n and n >= 3, got n = {n}, p = {p}"
        )));
    }
    Ok(())
}

/// `sqrt(1 - p/N + 1/(p-1) - 1/(N-1))`, the batch-size factor of the RBM-r
/// error bound.
pub fn scale_rbmr(n: usize, p: usize) -> Result<f64> {
    check_scale_args(n, p)?;
    let (nf, pf) = (n as f64, p as f64);
    Ok((1.0 - pf / nf + 1.0 / (pf - 1.0) - 1.0 / (nf - 1.0))
        .max(0.0)
        .sqrt())
}

/// `sqrt(1/(p-1) - 1/(N-1))`, the RBM-1 counterpart; zero at `p = N`.
pub fn scale_rbm1(n: usize, p: usize) -> Result<f64> {
    check_scale_args(n, p)?;
    if p == n {
        return Ok(0.0);
    }
    let (nf, pf) = (n as f64, p as f64);
    Ok((1.0 / (pf - 1.0) - 1.0 / (nf - 1.0)).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `ψ₀τ >= 1`: `C₂ <= 0` and the `C₃` rate is vacuous.
    pub vacuous: bool,
}

/// `C₁ = 2ψ₀ / (1 + (2p/(p-1)) ψ₀ τ)`, `C₂ = ψ₀(1 - ψ₀τ)`,
/// `C₃ = min(C₁, 2C₂)`.
pub fn rate_constants(psi0: f64, p: usize, tau: f64) -> Result<RateConstants> {
    if !(psi0 > 0.0) || p < 2 || !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "rate constants need psi0 > 0, p >= 2, tau >= 0; got {psi0}, {p}, {tau}"
        )));
    }
    let pf = p as f64;
    let c1 = 2.0 * psi0 / (1.0 + 2.0 * pf / (pf - 1.0) * psi0 * tau);
    let c2 = psi0 * (1.0 - psi0 * tau);
    Ok(RateConstants {
        c1,
        c2,
        c3: c1.min(2.0 * c2),
        vacuous: psi0 * tau >= 1.0,
    })
}

/// Least-squares rate `λ` of `y ≈ y₀ e^{-λt}` on a log scale. Points with
/// `y < 1e-12 · y(first)` are dropped as floating-point floor.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::domain("decay fit needs at least 3 points"));
    }
    if let Some(&(t, y)) = series.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::domain(format!(
            "decay fit needs y > 0, got y({t}) = {y}"
        )));
    }
    let floor = 1e-12 * series[0].1;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, y)| *y >= floor)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::domain("fewer than 2 points above the noise floor"));
    }
    Ok(-ols_slope(&pts))
}

/// Ordinary least-squares slope of `(x, y)` pairs.
pub fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// One recorded time of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub ssd_v: f64,
    pub ssd_x: f64,
    pub d_x: f64,
    pub d_v: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub l2_error: Option<f64>,
}

impl MetricsRow {
    pub fn of(e: &Ensemble, t: f64, l2: Option<f64>) -> Self {
        let (d_x, d_v) = diameters(e);
        Self {
            t,
            ssd_v: ssd(e.v(), e.d()),
            ssd_x: ssd(e.x(), e.d()),
            d_x,
            d_v,
            momentum: momentum(e),
            energy: energy(e),
            l2_error: l2,
        }
    }

    /// Scalar metric by column name; `momentum_c` selects component `c`.
    pub fn value(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "ssd_v" => Some(self.ssd_v),
            "ssd_x" => Some(self.ssd_x),
            "d_x" => Some(self.d_x),
            "d_v" => Some(self.d_v),
            "energy" => Some(self.energy),
            "l2_error" => self.l2_error,
            _ => {
                let c: usize = name.strip_prefix("momentum_")?.parse().ok()?;
                self.momentum.get(c).copied()
            }
        }
    }
}

/// Time-indexed diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSeries {
    pub d: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsSeries {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    /// CSV column names in output order.
    pub fn header(d: usize) -> Vec<String> {
        let mut cols: Vec<String> = ["t", "ssd_v", "ssd_x", "d_x", "d_v"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((0..d).map(|c| format!("momentum_{c}")));
        cols.push("energy".into());
        cols.push("l2_error".into());
        cols
    }

    /// Largest `|Σv(t) - Σv(0)|` over the recorded times and dimensions.
    pub fn max_momentum_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        self.rows
            .iter()
            .flat_map(|r| {
                r.momentum
                    .iter()
                    .zip(&first.momentum)
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: fn(&MetricsRow) -> Option<f64> = match name {
            "t" => |r| Some(r.t),
            "ssd_v" => |r| Some(r.ssd_v),
            "ssd_x" => |r| Some(r.ssd_x),
            "d_x" => |r| Some(r.d_x),
            "d_v" => |r| Some(r.d_v),
            "energy" => |r| Some(r.energy),
            "l2_error" => |r| r.l2_error,
            _ => return None,
        };
        self.rows.iter().map(pick).collect()
    }

    /// Row whose time is within 1e-9 of `t`.
    pub fn at(&self, t: f64) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| (r.t - t).abs() <= 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ssd_double_loop(values: &[f64], d: usize) -> f64 {
        let n = values.len() / d;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (0..d)
                    .map(|c| (values[i * d + c] - values[j * d + c]).powi(2))
                    .sum::<f64>();
            }
        }
        s / (n * n) as f64
    }

    fn diameter_brute(values: &[f64], d: usize) -> f64 {
        let n = values.len() / d;
        let mut best = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let r = (0..d)
                    .map(|c| (values[i * d + c] - values[j * d + c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.max(r);
            }
        }
        best
    }

    #[test]
    fn ssd_examples() {
        assert_eq!(ssd(&[0.3, 0.3, 0.3], 1), 0.0);
        assert_eq!(ssd(&[1.0, -1.0], 1), 2.0);
        assert_eq!(ssd_double_loop(&[1.0, -1.0], 1), 2.0);
    }

    #[test]
    fn ssd_matches_double_loop_on_random_arrays() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!((ssd(&x, 2) - ssd_double_loop(&x, 2)).abs() < 1e-12);
        for _ in 0..1000 {
            let d = rng.random_range(1..4);
            let n = rng.random_range(1..20);
            let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (fast, slow) = (ssd(&x, d), ssd_double_loop(&x, d));
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn diameter_examples() {
        let single = Ensemble::new(2, vec![1.0, 2.0], vec![3.0, 4.0], 0.0).unwrap();
        assert_eq!(diameters(&single), (0.0, 0.0));
        let e = Ensemble::new(1, vec![0.0, 3.0, 1.0], vec![0.0; 3], 0.0).unwrap();
        assert_eq!(diameters(&e).0, 3.0);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(64);
        for d in [1, 2, 3] {
            let x: Vec<f64> = (0..64 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..64 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = Ensemble::new(d, x.clone(), v.clone(), 0.0).unwrap();
            let (dx, dv) = diameters(&e);
            assert!((dx - diameter_brute(&x, d)).abs() < 1e-14);
            assert!((dv - diameter_brute(&v, d)).abs() < 1e-14);
        }
    }

    #[test]
    fn momentum_and_energy() {
        let e = Ensemble::new(1, vec![0.0, 1.0], vec![1.0, -1.0], 0.0).unwrap();
        assert_eq!(energy(&e), 2.0);
        assert_eq!(momentum(&e), vec![0.0]);
    }

    #[test]
    fn l2_error_examples() {
        let a = Ensemble::new(1, vec![0.0, 0.0], vec![0.3, -0.4], 1.0).unwrap();
        let b = Ensemble::new(1, vec![0.0, 0.0], vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(l2_error(&b, &b).unwrap(), 0.0);
        assert!((l2_error(&a, &b).unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        assert!((l2_error(&a, &b).unwrap() - 0.35355339).abs() < 1e-8);
        let late = Ensemble::new(1, vec![0.0, 0.0], vec![0.0, 0.0], 1.1).unwrap();
        assert!(l2_error(&a, &late).is_err());
        let wide = Ensemble::new(1, vec![0.0; 3], vec![0.0; 3], 1.0).unwrap();
        assert!(l2_error(&a, &wide).is_err());
    }

    #[test]
    fn scaling_factors() {
        assert_eq!(scale_rbm1(64, 64).unwrap(), 0.0);
        let r = scale_rbmr(64, 2).unwrap();
        assert!((r - (1.0 - 2.0 / 64.0 + 1.0 - 1.0 / 63.0f64).sqrt()).abs() < 1e-15);
        assert!((r - 1.39746).abs() < 1e-5);
        let one = scale_rbm1(64, 2).unwrap();
        assert!((one - (1.0 - 1.0 / 63.0f64).sqrt()).abs() < 1e-15);
        assert!((one - 0.99203).abs() < 1e-5);
        assert!(scale_rbmr(64, 1).is_err());
        assert!(scale_rbm1(2, 2).is_err());
    }

    #[test]
    fn rate_constant_examples() {
        let rc = rate_constants(1.0, 2, 0.0).unwrap();
        assert_eq!((rc.c1, rc.c2, rc.c3), (2.0, 1.0, 2.0));
        let rc = rate_constants(1.0, 2, 0.1).unwrap();
        assert!((rc.c1 - 2.0 / 1.4).abs() < 1e-15);
        assert!((rc.c2 - 0.9).abs() < 1e-15);
        assert_eq!(rc.c3, rc.c1.min(2.0 * rc.c2));
        assert!(!rc.vacuous);
        assert!(rate_constants(2.0, 4, 0.5).unwrap().vacuous);
        assert!(rate_constants(0.0, 2, 0.1).is_err());
    }

    #[test]
    fn decay_fit_examples() {
        let exact: Vec<(f64, f64)> = (0..3)
            .map(|t| (t as f64, (-2.0 * t as f64).exp()))
            .collect();
        assert!((fit_decay_rate(&exact).unwrap() - 2.0).abs() < 1e-12);
        let flat = vec![(0.0, 3.0), (1.0, 3.0), (2.0, 3.0)];
        assert_eq!(fit_decay_rate(&flat).unwrap(), 0.0);
        assert!(fit_decay_rate(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]).is_err());
        assert!(fit_decay_rate(&[(0.0, 1.0), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn decay_fit_on_noisy_exponential() {
        use rand::SeedableRng;
        use rand_distr_free::normal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let truth = 1.3;
        let pts: Vec<(f64, f64)> = (0..1000)
            .map(|k| {
                let t = k as f64 * 0.005;
                (t, (-truth * t).exp() * (1.0 + 0.05 * normal(&mut rng)))
            })
            .collect();
        let fit = fit_decay_rate(&pts).unwrap();
        assert!((fit - truth).abs() < 0.05 * truth, "fit {fit}");
    }

    /// Box–Muller, enough for synthetic noise in tests.
    mod rand_distr_free {
        use rand::Rng;
        pub fn normal<R: Rng>(rng: &mut R) -> f64 {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    #[test]
    fn decay_fit_drops_floor_points() {
        let mut pts: Vec<(f64, f64)> = (0..10).map(|t| (t as f64, (-t as f64).exp())).collect();
        pts.push((10.0, 1e-300));
        assert!((fit_decay_rate(&pts).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ssd_bounded_by_squared_diameter(
            d in 1usize..=3,
            vals in prop::collection::vec(-10.0f64..10.0, 2..60),
        ) {
            let n = vals.len() / d;
            prop_assume!(n >= 1);
            let vals = &vals[..n * d];
            let e = Ensemble::new(d, vals.to_vec(), vals.to_vec(), 0.0).unwrap();
            let dv = diameters(&e).1;
            prop_assert!(ssd(vals, d) <= dv * dv * (1.0 + 1e-12) + 1e-12);
        }
    }
}
