//! Benchmark drift fields, the proportional diagonal diffusion term, and
//! Euler–Maruyama simulation of the resulting SDEs.

mod trajectory;

pub use trajectory::{Trajectory, TrajectoryMetadata};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldValue, VectorField};
use crate::points::{check_dim, Points};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Lorenz63,
    Hopf,
    Lorenz96,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Lorenz63, SystemKind::Hopf, SystemKind::Lorenz96];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz63 => "lorenz63",
            SystemKind::Hopf => "hopf",
            SystemKind::Lorenz96 => "lorenz96",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "lorenz63" | "l63" => Ok(SystemKind::Lorenz63),
            "hopf" => Ok(SystemKind::Hopf),
            "lorenz96" | "l96" => Ok(SystemKind::Lorenz96),
            _ => Err(Error::InvalidParameter(format!("unknown system `{s}`"))),
        }
    }
}

/// The deterministic part of one of the benchmark systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum System {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Hopf { p: f64 },
    Lorenz96 { forcing: f64, cells: usize },
}

impl System {
    pub fn kind(&self) -> SystemKind {
        match self {
            System::Lorenz63 { .. } => SystemKind::Lorenz63,
            System::Hopf { .. } => SystemKind::Hopf,
            System::Lorenz96 { .. } => SystemKind::Lorenz96,
        }
    }

    pub fn default_for(kind: SystemKind) -> System {
        match kind {
            SystemKind::Lorenz63 => System::Lorenz63 {
                sigma: 10.0,
                rho: 28.0,
                beta: 8.0 / 3.0,
            },
            SystemKind::Hopf => System::Hopf { p: 1.0 },
            SystemKind::Lorenz96 => System::Lorenz96 {
                forcing: 8.0,
                cells: 5,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::Lorenz63 { .. } => 3,
            System::Hopf { .. } => 2,
            System::Lorenz96 { cells, .. } => *cells,
        }
    }
}

/// A benchmark system together with the noise level of its diffusion term
/// `G(x)_i = noise * V(x)_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub system: System,
    pub noise: f64,
}

impl SystemSpec {
    pub fn new(system: System, noise: f64) -> Result<Self> {
        let spec = SystemSpec { system, noise };
        spec.validate()?;
        Ok(spec)
    }

    pub fn hopf(p: f64, noise: f64) -> Result<Self> {
        SystemSpec::new(System::Hopf { p }, noise)
    }

    pub fn lorenz63(sigma: f64, rho: f64, beta: f64, noise: f64) -> Result<Self> {
        SystemSpec::new(System::Lorenz63 { sigma, rho, beta }, noise)
    }

    pub fn lorenz96(forcing: f64, cells: usize, noise: f64) -> Result<Self> {
        SystemSpec::new(System::Lorenz96 { forcing, cells }, noise)
    }

    /// Builds a spec from named parameters, starting from the system's
    /// defaults. Accepted names: lorenz63 `sigma rho beta`; hopf `p` (alias
    /// `mu`); lorenz96 `F` (alias `forcing`) and `N` (alias `cells`).
    pub fn from_params(
        kind: SystemKind,
        params: &BTreeMap<String, f64>,
        noise: f64,
    ) -> Result<Self> {
        let mut system = System::default_for(kind);
        for (name, &value) in params {
            let unknown = || Error::UnknownParameter {
                system: kind.to_string(),
                name: name.clone(),
            };
            match &mut system {
                System::Lorenz63 { sigma, rho, beta } => match name.as_str() {
                    "sigma" => *sigma = value,
                    "rho" => *rho = value,
                    "beta" => *beta = value,
                    _ => return Err(unknown()),
                },
                System::Hopf { p } => match name.as_str() {
                    "p" | "mu" => *p = value,
                    _ => return Err(unknown()),
                },
                System::Lorenz96 { forcing, cells } => match name.as_str() {
                    "F" | "f" | "forcing" => *forcing = value,
                    "N" | "n" | "cells" => {
                        if value.fract() != 0.0 || value < 0.0 {
                            return Err(Error::InvalidParameter(format!(
                                "lorenz96 cell count must be a nonnegative integer, got {value}"
                            )));
                        }
                        *cells = value as usize;
                    }
                    _ => return Err(unknown()),
                },
            }
        }
        SystemSpec::new(system, noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and nonnegative, got {}",
                self.noise
            )));
        }
        let finite = match &self.system {
            System::Lorenz63 { sigma, rho, beta } => {
                [*sigma, *rho, *beta].iter().all(|v| v.is_finite())
            }
            System::Hopf { p } => p.is_finite(),
            System::Lorenz96 { forcing, cells } => {
                if *cells < 4 {
                    return Err(Error::InvalidParameter(format!(
                        "lorenz96 needs at least 4 cells, got {cells}"
                    )));
                }
                forcing.is_finite()
            }
        };
        if !finite {
            return Err(Error::InvalidParameter(
                "system parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn kind(&self) -> SystemKind {
        self.system.kind()
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// The conventional starting state: lorenz63 (1,1,1); hopf (2,0);
    /// lorenz96 all-F with +0.01 on coordinate 0.
    pub fn default_initial_state(&self) -> Vec<f64> {
        match &self.system {
            System::Lorenz63 { .. } => vec![1.0, 1.0, 1.0],
            System::Hopf { .. } => vec![2.0, 0.0],
            System::Lorenz96 { forcing, cells } => {
                let mut x = vec![*forcing; *cells];
                x[0] += 0.01;
                x
            }
        }
    }

    pub fn eval_drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut out);
        Ok(out)
    }

    /// Diagonal of the diffusion matrix at `x`.
    pub fn eval_diffusion(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.eval_drift(x)?;
        for v in &mut out {
            *v *= self.noise;
        }
        Ok(out)
    }

    /// Writes V(x) into `out`. Both slices must have length `dim()`.
    pub(crate) fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self.system {
            System::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            System::Hopf { p } => {
                let s = p - (x[0] * x[0] + x[1] * x[1]);
                out[0] = -x[1] + x[0] * s;
                out[1] = x[0] + x[1] * s;
            }
            System::Lorenz96 { forcing, cells } => {
                let n = cells;
                for i in 0..n {
                    let next = x[(i + 1) % n];
                    let prev = x[(i + n - 1) % n];
                    let prev2 = x[(i + n - 2) % n];
                    out[i] = (next - prev2) * prev - x[i] + forcing;
                }
            }
        }
    }
}

impl VectorField for SystemSpec {
    fn dim(&self) -> usize {
        SystemSpec::dim(self)
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        Ok(FieldValue::exact(self.eval_drift(x)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub n_samples: usize,
    pub dt: f64,
    pub seed: u64,
    /// Recorded samples discarded from the start of the path.
    pub burn_in: usize,
    /// Integration steps per recorded sample.
    pub substeps: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            n_samples: 10_000,
            dt: 0.01,
            seed: 0,
            burn_in: 100,
            substeps: 10,
        }
    }
}

/// Integrates `dX = V(X) dt + G(X) dW` by Euler–Maruyama with step
/// `dt / substeps`, recording the state every `dt`. Recorded index 0 is `x0`
/// itself; the first `burn_in` recorded states are dropped.
pub fn simulate(spec: &SystemSpec, x0: &[f64], opts: &SimulationOptions) -> Result<Trajectory> {
    spec.validate()?;
    check_dim(spec.dim(), x0.len())?;
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {}",
            opts.dt
        )));
    }
    if opts.n_samples < Trajectory::MIN_LEN {
        return Err(Error::TrajectoryTooShort {
            len: opts.n_samples,
            required: Trajectory::MIN_LEN,
        });
    }
    if opts.substeps == 0 {
        return Err(Error::InvalidParameter(
            "substeps must be at least 1".into(),
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { index: 0 });
    }

    let d = spec.dim();
    let h = opts.dt / opts.substeps as f64;
    let sqrt_h = h.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut state = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut points = Points::with_capacity(d, opts.n_samples);
    let total = opts.burn_in + opts.n_samples;

    for index in 0..total {
        if index > 0 {
            for _ in 0..opts.substeps {
                spec.drift_into(&state, &mut drift);
                for i in 0..d {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let g = spec.noise * drift[i];
                    state[i] = state[i] + drift[i] * h + g * sqrt_h * xi;
                }
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { index });
                }
            }
        }
        if index >= opts.burn_in {
            points.push(&state)?;
        }
    }
    Trajectory::new(opts.dt, points, Some(opts.seed))
}
