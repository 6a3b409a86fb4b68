//! Simulation configuration.
//!
//! Config files are TOML with four optional sections; every key is optional
//! and command-line flags override file values:
//!
//! ```toml
//! [model]
//! n = 64
//! d = 1
//! p = 2
//! kappa = 1.0
//! kernel = { variant = "inverse_power", beta = 0.25 }   # or { variant = "constant", value = 1.0 }
//!
//! [time]
//! tau = 0.1
//! dt = 0.0125          # defaults to tau
//! t_end = 10.0
//!
//! [run]
//! method = "rbmr_equiv"  # ips | rbm1 | rbmr | rbmr_equiv | mc
//! seed = 7
//! replications = 100
//! threads = 4           # optional worker count
//!
//! [init]
//! box_length = 1.0      # positions uniform on [0, L]^d
//! velocity_range = 1.0  # velocities uniform on [-r, r]^d, then mean removed
//!
//! [output]
//! dir = "out"
//! snapshots = false
//! ```
//!
//! Initial data always comes from RNG stream 0 of `seed`; replication `k`
//! draws its batches from stream `1 + k`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{substeps, Ensemble};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelShape};
use crate::methods::{initial_ensemble, MethodKind, Stepper};

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub box_length: f64,
    pub velocity_range: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub tau: f64,
    pub dt: f64,
    pub kappa: f64,
    pub kernel: Kernel,
    pub method: MethodKind,
    pub t_end: f64,
    pub seed: u64,
    pub replications: usize,
    pub threads: Option<usize>,
    pub init: InitSpec,
    pub out: PathBuf,
    pub snapshots: bool,
}

impl Default for SimConfig {
    /// N = 64, p = 2, τ = dt = 0.1, κ = 1, ψ(r) = (1 + r²)^(-1/4), T = 10.
    fn default() -> Self {
        Self {
            n: 64,
            d: 1,
            p: 2,
            tau: 0.1,
            dt: 0.1,
            kappa: 1.0,
            kernel: Kernel::inverse_power(0.25).expect("valid exponent"),
            method: MethodKind::RbmrEquiv,
            t_end: 10.0,
            seed: 0,
            replications: 1,
            threads: None,
            init: InitSpec {
                box_length: 1.0,
                velocity_range: 1.0,
            },
            out: PathBuf::from("out"),
            snapshots: false,
        }
    }
}

impl SimConfig {
    /// Checks every invariant; the message names the one violated.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!(
                "invariant N >= 2 violated (N = {})",
                self.n
            )));
        }
        if self.d < 1 {
            return Err(Error::config("invariant d >= 1 violated"));
        }
        if self.p < 2 {
            return Err(Error::config(format!(
                "invariant p >= 2 violated (p = {})",
                self.p
            )));
        }
        if self.p > self.n {
            return Err(Error::config(format!(
                "invariant N >= p violated (N = {}, p = {})",
                self.n, self.p
            )));
        }
        if !(self.dt > 0.0 && self.dt <= self.tau * (1.0 + 1e-12)) {
            return Err(Error::config(format!(
                "invariant 0 < dt <= tau violated (dt = {}, tau = {})",
                self.dt, self.tau
            )));
        }
        substeps(self.tau, self.dt)?;
        if self.method.needs_divisibility() && !self.n.is_multiple_of(self.p) {
            return Err(Error::config(format!(
                "invariant p | N violated for method {} (N = {}, p = {})",
                self.method, self.n, self.p
            )));
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::config(format!(
                "invariant kappa >= 0 violated ({})",
                self.kappa
            )));
        }
        if self.replications < 1 {
            return Err(Error::config("invariant replications >= 1 violated"));
        }
        if !(self.init.box_length > 0.0) || !(self.init.velocity_range > 0.0) {
            return Err(Error::config(
                "invariant box_length > 0 and velocity_range > 0 violated",
            ));
        }
        self.windows()?;
        Ok(())
    }

    /// Number of windows `T / τ`; `T` must be a multiple of `τ`.
    pub fn windows(&self) -> Result<usize> {
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::config(format!(
                "invariant t_end >= 0 violated ({})",
                self.t_end
            )));
        }
        let w = (self.t_end / self.tau).round();
        if (w * self.tau - self.t_end).abs() > 1e-9 * self.t_end.max(self.tau) {
            return Err(Error::config(format!(
                "invariant tau | t_end violated (t_end = {}, tau = {})",
                self.t_end, self.tau
            )));
        }
        Ok(w as usize)
    }

    pub fn stepper(&self) -> Result<Stepper> {
        Stepper::new(
            self.n,
            self.kernel.clone(),
            self.kappa,
            self.p,
            self.tau,
            self.dt,
        )
    }

    pub fn initial_ensemble(&self) -> Result<Ensemble> {
        initial_ensemble(
            self.n,
            self.d,
            self.init.box_length,
            self.init.velocity_range,
            self.seed,
        )
    }

    /// Short `name:param` label of the kernel.
    pub fn kernel_label(&self) -> String {
        match self.kernel.shape() {
            KernelShape::Constant { value } => format!("constant:{value}"),
            KernelShape::InversePower { beta } => format!("invpow:{beta}"),
            KernelShape::Tabulated { grid, .. } => format!("tabulated:{}", grid.len()),
        }
    }

    /// Description written as the first row of every CSV.
    pub fn header_comment(&self, method: MethodKind, streams: &str) -> String {
        format!(
            "# flockrbm method={method} n={} d={} p={} tau={} dt={} kappa={} kernel={} t_end={} \
             seed={} streams={streams} box_length={} velocity_range={}",
            self.n,
            self.d,
            self.p,
            self.tau,
            self.dt,
            self.kappa,
            self.kernel_label(),
            self.t_end,
            self.seed,
            self.init.box_length,
            self.init.velocity_range,
        )
    }

    pub fn apply_file(&mut self, file: &ConfigFile) -> Result<()> {
        let mut dt_set = false;
        if let Some(m) = &file.model {
            set(&mut self.n, m.n);
            set(&mut self.d, m.d);
            set(&mut self.p, m.p);
            set(&mut self.kappa, m.kappa);
            if let Some(shape) = &m.kernel {
                self.kernel = Kernel::from_shape(shape.clone())?;
            }
        }
        if let Some(t) = &file.time {
            set(&mut self.tau, t.tau);
            if let Some(dt) = t.dt {
                self.dt = dt;
                dt_set = true;
            }
            set(&mut self.t_end, t.t_end);
        }
        if !dt_set {
            self.dt = self.tau;
        }
        if let Some(r) = &file.run {
            if let Some(m) = &r.method {
                self.method = m.parse()?;
            }
            set(&mut self.seed, r.seed);
            set(&mut self.replications, r.replications);
            if r.threads.is_some() {
                self.threads = r.threads;
            }
        }
        if let Some(i) = &file.init {
            set(&mut self.init.box_length, i.box_length);
            set(&mut self.init.velocity_range, i.velocity_range);
        }
        if let Some(o) = &file.output {
            if let Some(dir) = &o.dir {
                self.out = dir.clone();
            }
            set(&mut self.snapshots, o.snapshots);
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file = ConfigFile::parse(&text)?;
        let mut cfg = SimConfig::default();
        cfg.apply_file(&file)?;
        Ok(cfg)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<ModelSection>,
    pub time: Option<TimeSection>,
    pub run: Option<RunSection>,
    pub init: Option<InitSection>,
    pub output: Option<OutputSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub p: Option<usize>,
    pub kappa: Option<f64>,
    pub kernel: Option<KernelShape>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub tau: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub box_length: Option<f64>,
    pub velocity_range: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub snapshots: Option<bool>,
}
