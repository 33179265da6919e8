use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SimulationOptions, SystemSpec};
use crate::error::{Error, Result};
use crate::points::Points;

/// A uniformly sampled sample path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    points: Points,
    seed: Option<u64>,
}

impl Trajectory {
    /// Shortest path the four-point increment stencil accepts.
    pub const MIN_LEN: usize = 4;

    pub fn new(dt: f64, points: Points, seed: Option<u64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if points.len() < Self::MIN_LEN {
            return Err(Error::TrajectoryTooShort {
                len: points.len(),
                required: Self::MIN_LEN,
            });
        }
        if !points.all_finite() {
            return Err(Error::InvalidParameter(
                "trajectory contains non-finite values".into(),
            ));
        }
        Ok(Trajectory { dt, points, seed })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// CSV text with header `t,x0,...,x{d-1}` and `t = index * dt`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 0..self.dim() {
            let _ = write!(out, ",x{j}");
        }
        out.push('\n');
        for (k, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{}", k as f64 * self.dt);
            for v in p {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV produced by [`Trajectory::to_csv`]. When `dt` is `None`
    /// it is taken from the first two time stamps.
    pub fn from_csv(text: &str, dt: Option<f64>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.len() < 2 || columns[0] != "t" {
            return Err(Error::Parse(format!("bad trajectory header `{header}`")));
        }
        for (j, name) in columns[1..].iter().enumerate() {
            if *name != format!("x{j}") {
                return Err(Error::Parse(format!(
                    "bad column name `{name}` at position {}",
                    j + 1
                )));
            }
        }
        let dim = columns.len() - 1;
        let mut times = Vec::new();
        let mut points = Points::with_capacity(dim, 0);
        let mut row = Vec::with_capacity(dim);
        for (lineno, line) in lines.enumerate() {
            let mut fields = line.split(',').map(str::trim);
            let t = parse_field(fields.next(), lineno + 2)?;
            row.clear();
            for field in fields {
                row.push(parse_field(Some(field), lineno + 2)?);
            }
            if row.len() != dim {
                return Err(Error::Parse(format!(
                    "line {}: expected {} state values, found {}",
                    lineno + 2,
                    dim,
                    row.len()
                )));
            }
            times.push(t);
            points.push(&row)?;
        }
        let dt = match dt {
            Some(dt) => dt,
            None if times.len() >= 2 => times[1] - times[0],
            None => {
                return Err(Error::TrajectoryTooShort {
                    len: times.len(),
                    required: Self::MIN_LEN,
                })
            }
        };
        Trajectory::new(dt, points, None)
    }

    /// Writes `path` and, when `meta` is given, the sidecar returned by
    /// [`metadata_path`].
    pub fn write(&self, path: &Path, meta: Option<&TrajectoryMetadata>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        if let Some(meta) = meta {
            fs::write(
                metadata_path(path),
                serde_json::to_string_pretty(meta)? + "\n",
            )?;
        }
        Ok(())
    }

    /// Reads a trajectory and its sidecar if one exists next to it.
    pub fn read(path: &Path) -> Result<(Trajectory, Option<TrajectoryMetadata>)> {
        let text = fs::read_to_string(path)?;
        let meta_path = metadata_path(path);
        let meta: Option<TrajectoryMetadata> = if meta_path.exists() {
            Some(serde_json::from_str(&fs::read_to_string(&meta_path)?)?)
        } else {
            None
        };
        let mut traj = Trajectory::from_csv(&text, meta.as_ref().map(|m| m.dt))?;
        traj.seed = meta.as_ref().map(|m| m.seed);
        Ok((traj, meta))
    }
}

fn parse_field(field: Option<&str>, line: usize) -> Result<f64> {
    let field = field.ok_or_else(|| Error::Parse(format!("line {line}: missing value")))?;
    field
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: `{field}`: {e}")))
}

/// `trajectory.csv` -> `trajectory.meta.json`.
pub fn metadata_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Provenance of a simulated trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub spec: SystemSpec,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    pub burn_in: usize,
    pub substeps: usize,
    pub n_samples: usize,
}

impl TrajectoryMetadata {
    pub fn new(spec: &SystemSpec, x0: &[f64], opts: &SimulationOptions) -> Self {
        TrajectoryMetadata {
            spec: spec.clone(),
            x0: x0.to_vec(),
            dt: opts.dt,
            seed: opts.seed,
            burn_in: opts.burn_in,
            substeps: opts.substeps,
            n_samples: opts.n_samples,
        }
    }

    pub fn options(&self) -> SimulationOptions {
        SimulationOptions {
            n_samples: self.n_samples,
            dt: self.dt,
            seed: self.seed,
            burn_in: self.burn_in,
            substeps: self.substeps,
        }
    }
}
