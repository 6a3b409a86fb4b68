//! Communication weights ψ(r).
//!
//! Every kernel is bounded, nonnegative and nonincreasing on `[0, ∞)`.
//! Singular weights such as `r^(-α)` are not representable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelShape {
    /// ψ(r) = c.
    Constant { value: f64 },
    /// ψ(r) = (1 + r²)^(-β).
    #[serde(alias = "invpow")]
    InversePower { beta: f64 },
    /// Piecewise-linear through `(grid[k], values[k])`, clamped outside the grid.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// A validated communication weight together with its declared bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    shape: KernelShape,
    psi0: f64,
    psi_m: f64,
    lip: f64,
}

impl Kernel {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::domain(format!(
                "constant kernel value must be finite and >= 0, got {value}"
            )));
        }
        Ok(Self {
            shape: KernelShape::Constant { value },
            psi0: value,
            psi_m: value,
            lip: 0.0,
        })
    }

    /// The decaying weight `(1 + r²)^(-β)`. Its infimum over `[0, ∞)` is 0
    /// for `β > 0`, so `psi0` is declared as 0.
    pub fn inverse_power(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::domain(format!(
                "inverse-power exponent must be finite and >= 0, got {beta}"
            )));
        }
        // sup |ψ'| is attained at r² = 1 / (2β + 1).
        let lip = if beta == 0.0 {
            0.0
        } else {
            let r2 = 1.0 / (2.0 * beta + 1.0);
            2.0 * beta * r2.sqrt() * (1.0 + r2).powf(-beta - 1.0)
        };
        Ok(Self {
            shape: KernelShape::InversePower { beta },
            psi0: if beta == 0.0 { 1.0 } else { 0.0 },
            psi_m: 1.0,
            lip,
        })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::domain(
                "tabulated kernel needs at least two (grid, value) pairs of equal length",
            ));
        }
        if grid.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::domain(
                "tabulated kernel contains non-finite entries",
            ));
        }
        if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain(
                "tabulated kernel grid must be nonnegative and strictly ascending",
            ));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::domain("tabulated kernel values must be >= 0"));
        }
        let psi0 = values.iter().copied().fold(f64::INFINITY, f64::min);
        let psi_m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lip = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(g, v)| ((v[1] - v[0]) / (g[1] - g[0])).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            shape: KernelShape::Tabulated { grid, values },
            psi0,
            psi_m,
            lip,
        })
    }

    pub fn from_shape(shape: KernelShape) -> Result<Self> {
        match shape {
            KernelShape::Constant { value } => Self::constant(value),
            KernelShape::InversePower { beta } => Self::inverse_power(beta),
            KernelShape::Tabulated { grid, values } => Self::tabulated(grid, values),
        }
    }

    /// Parses the CLI form `constant:<value>` or `invpow:<beta>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, arg) = spec
            .split_once(':')
            .ok_or_else(|| Error::config(format!("kernel spec `{spec}` is not `name:value`")))?;
        let value: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("kernel parameter `{arg}` is not a number")))?;
        match name.trim() {
            "constant" => Self::constant(value),
            "invpow" | "inverse_power" => Self::inverse_power(value),
            other => Err(Error::config(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    /// Declared lower bound ψ₀.
    pub fn psi0(&self) -> f64 {
        self.psi0
    }

    /// Declared upper bound ψ_M.
    pub fn psi_m(&self) -> f64 {
        self.psi_m
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// ψ(r), checked. The steppers use [`Kernel::weight`] instead.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::domain(format!(
                "kernel argument must be finite and >= 0, got {r}"
            )));
        }
        Ok(self.weight(r))
    }

    /// ψ(r) for a distance already known to be valid.
    #[inline]
    pub(crate) fn weight(&self, r: f64) -> f64 {
        match &self.shape {
            KernelShape::Constant { value } => *value,
            KernelShape::InversePower { beta } => (1.0 + r * r).powf(-beta),
            KernelShape::Tabulated { grid, values } => interpolate(grid, values, r),
        }
    }

    /// ψ as a function of the squared distance, avoiding a square root
    /// where the shape allows it.
    #[inline]
    pub(crate) fn weight_sq(&self, r2: f64) -> f64 {
        match &self.shape {
            KernelShape::Constant { value } => *value,
            KernelShape::InversePower { beta } => {
                if *beta == 0.25 {
                    (1.0 + r2).sqrt().sqrt().recip()
                } else {
                    (1.0 + r2).powf(-beta)
                }
            }
            KernelShape::Tabulated { grid, values } => interpolate(grid, values, r2.sqrt()),
        }
    }
}

fn interpolate(grid: &[f64], values: &[f64], r: f64) -> f64 {
    let last = grid.len() - 1;
    if r <= grid[0] {
        return values[0];
    }
    if r >= grid[last] {
        return values[last];
    }
    let k = grid.partition_point(|&g| g <= r) - 1;
    let s = (r - grid[k]) / (grid[k + 1] - grid[k]);
    values[k] + s * (values[k + 1] - values[k])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub min: f64,
    pub max: f64,
    /// Largest chord slope between adjacent grid points.
    pub lip_estimate: f64,
    /// `max(lip_estimate, declared Lipschitz constant)`.
    pub lip: f64,
    pub monotone: bool,
    /// ψ(r_max): the lower bound effective on any configuration whose
    /// pairwise distances stay below `r_max`.
    pub effective_lower_bound: f64,
    /// Observed values lie inside the declared `[psi0, psi_m]`.
    pub bounds_consistent: bool,
}

/// Samples ψ on `n_grid` equispaced points of `[0, r_max]`.
pub fn validate(kernel: &Kernel, r_max: f64, n_grid: usize) -> Result<ValidationReport> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::domain(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    if n_grid < 2 {
        return Err(Error::domain("validation grid needs at least 2 points"));
    }
    let h = r_max / (n_grid - 1) as f64;
    let mut samples = Vec::with_capacity(n_grid);
    for k in 0..n_grid {
        let r = if k == n_grid - 1 { r_max } else { k as f64 * h };
        let y = kernel.weight(r);
        if !y.is_finite() {
            return Err(Error::Validation(format!("ψ({r}) = {y}")));
        }
        if y < 0.0 {
            return Err(Error::Validation(format!("ψ({r}) = {y} is negative")));
        }
        samples.push((r, y));
    }
    let min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let max = samples
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let monotone = samples.windows(2).all(|w| w[1].1 <= w[0].1);
    let lip_estimate = samples
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max);
    Ok(ValidationReport {
        min,
        max,
        lip_estimate,
        lip: lip_estimate.max(kernel.lip),
        monotone,
        effective_lower_bound: samples[n_grid - 1].1,
        bounds_consistent: kernel.psi0 <= min && max <= kernel.psi_m,
    })
}
