//! Numerical checks of the binomial-sum identities behind the random time
//! change of RBM-r, and of the elementary exponential inequality used to
//! simplify the flocking rate.
//!
//! Sums are evaluated term by term in log space: `ln C(n, r)` from `ln Γ`,
//! then a max-shifted exponentiation so large `n` neither overflows nor
//! underflows.

use crate::error::{Error, Result};

/// Parameters of the weighted binomial sums
/// `Σ_r C(n,r) A^r m(r) q^r (1-q)^(n-r)` with `q = p/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialParams {
    pub n: u32,
    pub a: f64,
    pub ratio: f64,
}

impl BinomialParams {
    pub fn new(n: u32, a: f64, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::domain(format!(
                "ratio p/N must be in (0, 1], got {ratio}"
            )));
        }
        if !a.is_finite() {
            return Err(Error::domain("A must be finite"));
        }
        if n > 60 {
            return Err(Error::domain(format!("n = {n} exceeds the supported 60")));
        }
        Ok(Self { n, a, ratio })
    }

    /// `G = qA + 1 - q`.
    pub fn g(&self) -> f64 {
        self.ratio * self.a + 1.0 - self.ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    /// m(r) = r²
    Square,
    /// m(r) = r
    Linear,
    /// m(r) = 1
    Unit,
}

impl Moment {
    pub const ALL: [Moment; 3] = [Moment::Square, Moment::Linear, Moment::Unit];

    fn weight(self, r: u32) -> f64 {
        let r = r as f64;
        match self {
            Moment::Square => r * r,
            Moment::Linear => r,
            Moment::Unit => 1.0,
        }
    }
}

fn ln_choose(n: u32, r: u32) -> f64 {
    // Exact for the sizes involved: the product form keeps every factor a
    // small rational.
    let r = r.min(n - r);
    (0..r)
        .map(|k| ((n - k) as f64).ln() - ((k + 1) as f64).ln())
        .sum()
}

/// `k ln y`, with `0 · ln 0 = 0`.
fn xlogy(k: u32, y: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * y.ln()
    }
}

/// `Σ_r C(n,r) A^r m(r) q^r (1-q)^(n-r)` for an arbitrary real `m(r)`.
fn weighted_binomial_sum(params: &BinomialParams, m: impl Fn(u32) -> f64) -> f64 {
    let BinomialParams { n, a, ratio } = *params;
    let mut logs = Vec::with_capacity(n as usize + 1);
    for r in 0..=n {
        let mr = m(r);
        if mr == 0.0 || (a == 0.0 && r > 0) {
            continue;
        }
        let sign = if (a < 0.0 && r % 2 == 1) != (mr < 0.0) {
            -1.0
        } else {
            1.0
        };
        let l = ln_choose(n, r)
            + xlogy(r, a.abs())
            + xlogy(r, ratio)
            + xlogy(n - r, 1.0 - ratio)
            + mr.abs().ln();
        if l.is_finite() {
            logs.push((sign, l));
        }
    }
    let Some(lmax) = logs.iter().map(|t| t.1).reduce(f64::max) else {
        return 0.0;
    };
    let shifted: f64 = logs.iter().map(|(s, l)| s * (l - lmax).exp()).sum();
    shifted * lmax.exp()
}

/// Literal weighted binomial sum for the requested moment.
pub fn binomial_moment_sum(params: &BinomialParams, moment: Moment) -> f64 {
    weighted_binomial_sum(params, |r| moment.weight(r))
}

/// Closed forms: `G^n`, `A q n G^(n-1)` and
/// `A q n (G^(n-2) (n-1) A q + G^(n-1))`.
pub fn binomial_moment_closed(params: &BinomialParams, moment: Moment) -> Result<f64> {
    let BinomialParams { n, a, ratio: q } = *params;
    let g = params.g();
    let nf = n as f64;
    match moment {
        Moment::Unit => Ok(g.powi(n as i32)),
        Moment::Linear => {
            if n < 1 {
                return Err(Error::domain("first-moment closed form needs n >= 1"));
            }
            Ok(a * q * nf * g.powi(n as i32 - 1))
        }
        Moment::Square => {
            if n < 2 {
                return Err(Error::domain("second-moment closed form needs n >= 2"));
            }
            Ok(a * q * nf * (g.powi(n as i32 - 2) * (nf - 1.0) * a * q + g.powi(n as i32 - 1)))
        }
    }
}

/// Both sides of the time-change identity
/// `Σ_r C(n,r) A^r |rτ - t|² q^r (1-q)^(n-r)
///    = G^(n-2) (A-1)² t² (1-q)² + A G^(n-2) t τ (1-q)`
/// under the constraint `t = n q τ`.
pub fn time_change_identity(n: u32, a: f64, ratio: f64, tau: f64, t: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::domain("time-change identity needs n >= 2"));
    }
    let params = BinomialParams::new(n, a, ratio)?;
    let expected_t = n as f64 * ratio * tau;
    if (t - expected_t).abs() > 1e-12 * expected_t.abs().max(1.0) {
        return Err(Error::domain(format!(
            "identity requires t = n·(p/N)·τ = {expected_t}, got {t}"
        )));
    }
    let lhs = weighted_binomial_sum(&params, |r| (r as f64 * tau - t).powi(2));
    let g = params.g();
    let gn2 = g.powi(n as i32 - 2);
    let rhs =
        gn2 * (a - 1.0).powi(2) * t * t * (1.0 - ratio).powi(2) + a * gn2 * t * tau * (1.0 - ratio);
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `a + (1-a) e^{-x} <= exp(-(1-a) x / (1+b))` for `0 <= a <= 1`, `b > 0`,
/// `x ∈ [0, b]`.
pub fn mixture_bound_check(a: f64, b: f64, x: f64) -> Result<MixtureBound> {
    if !(0.0..=1.0).contains(&a) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "need 0 <= a <= 1 and b > 0, got a = {a}, b = {b}"
        )));
    }
    if !(0.0..=b).contains(&x) {
        return Err(Error::domain(format!("x = {x} outside [0, {b}]")));
    }
    let lhs = a + (1.0 - a) * (-x).exp();
    let rhs = (-(1.0 - a) / (1.0 + b) * x).exp();
    Ok(MixtureBound {
        lhs,
        rhs,
        holds: lhs <= rhs + 4.0 * f64::EPSILON,
    })
}

/// One row of the `verify-theory` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheck {
    pub name: String,
    pub cases: usize,
    pub max_rel_discrepancy: f64,
    pub violations: usize,
    pub tolerance: f64,
}

impl TheoryCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.max_rel_discrepancy <= self.tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Runs every identity grid and the inequality sweep.
pub fn verify_theory() -> Vec<TheoryCheck> {
    let mut out = Vec::new();

    let ratios = [1.0 / 32.0, 1.0 / 8.0, 0.5, 1.0];
    for moment in Moment::ALL {
        let mut worst = 0.0f64;
        let mut cases = 0;
        for n in 2..=40u32 {
            for a in [0.5, 0.9, 1.0] {
                for ratio in ratios {
                    let p = BinomialParams::new(n, a, ratio).expect("grid parameters are valid");
                    let closed = binomial_moment_closed(&p, moment).expect("n >= 2 on the grid");
                    worst = worst.max(rel(binomial_moment_sum(&p, moment), closed));
                    cases += 1;
                }
            }
        }
        let name = match moment {
            Moment::Square => "binomial sum, r^2 moment",
            Moment::Linear => "binomial sum, r moment",
            Moment::Unit => "binomial sum, unit moment",
        };
        out.push(TheoryCheck {
            name: name.into(),
            cases,
            max_rel_discrepancy: worst,
            violations: 0,
            tolerance: 1e-10,
        });
    }

    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 2..=40u32 {
        for a in [0.5, 0.9] {
            for ratio in [1.0 / 32.0, 1.0 / 8.0, 0.5] {
                for tau in [0.0125, 0.1, 1.0] {
                    let t = n as f64 * ratio * tau;
                    let (lhs, rhs) = time_change_identity(n, a, ratio, tau, t)
                        .expect("constraint holds by construction");
                    worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
                    cases += 1;
                }
            }
        }
    }
    out.push(TheoryCheck {
        name: "time-change identity |r tau - t|^2".into(),
        cases,
        max_rel_discrepancy: worst,
        violations: 0,
        tolerance: 1e-9,
    });

    let mut violations = 0;
    let mut cases = 0;
    for ai in 0..=4 {
        let a = ai as f64 * 0.25;
        for b in [0.1, 1.0, 10.0] {
            for k in 0..1000 {
                let x = b * k as f64 / 999.0;
                let check = mixture_bound_check(a, b, x.min(b)).expect("x in [0, b]");
                if !check.holds {
                    violations += 1;
                }
                cases += 1;
            }
        }
    }
    out.push(TheoryCheck {
        name: "a + (1-a)e^-x <= exp(-(1-a)x/(1+b))".into(),
        cases,
        max_rel_discrepancy: 0.0,
        violations,
        tolerance: 0.0,
    });
    out
}
