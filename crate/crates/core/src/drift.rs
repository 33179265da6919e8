//! Increment targets from sampled paths and the two drift estimators: one
//! conditional expectation per coordinate (dense), or a single shared unit
//! applied to every coordinate through a stencil (sparse).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::{CondExpParams, FitDiagnostics, Regression};
use crate::error::{Error, Result};
use crate::field::{FieldValue, VectorField};
use crate::kernels::KernelModel;
use crate::points::{check_dim, Points};
use crate::systems::Trajectory;

/// `(offset, weight)` pairs of the one-sided third-order difference.
pub const STENCIL_WEIGHTS: [(usize, f64); 4] = [(0, -11.0), (1, 18.0), (2, -9.0), (3, 2.0)];

/// First moment of [`STENCIL_WEIGHTS`]; the corrected target divides by it.
pub const STENCIL_NORMALIZATION: f64 = 6.0;

/// How the weighted difference is turned into a rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// Divide by `6 dt`: a linear path yields its slope.
    #[default]
    Corrected,
    /// Divide by `dt` only, which overestimates the rate sixfold.
    Literal,
}

impl TargetScaling {
    pub fn factor(self, dt: f64) -> f64 {
        match self {
            TargetScaling::Corrected => 1.0 / (STENCIL_NORMALIZATION * dt),
            TargetScaling::Literal => 1.0 / dt,
        }
    }
}

/// Weighted sum over differences from the base sample, which equals the
/// plain weighted sum because the weights sum to zero, and is exactly zero
/// on constant paths.
fn third_order(sample: impl Fn(usize) -> f64, factor: f64) -> f64 {
    let base = sample(0);
    STENCIL_WEIGHTS[1..]
        .iter()
        .map(|&(k, w)| w * (sample(k) - base))
        .sum::<f64>()
        * factor
}

fn check_length(traj: &Trajectory) -> Result<usize> {
    if traj.len() < Trajectory::MIN_LEN {
        return Err(Error::TrajectoryTooShort {
            len: traj.len(),
            required: Trajectory::MIN_LEN,
        });
    }
    Ok(traj.len() - 3)
}

/// Regression pairs `(x_n, z_n)` for `n = 0..N-3`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementPairs {
    pub inputs: Points,
    pub targets: Points,
}

pub fn increment_targets(traj: &Trajectory) -> Result<IncrementPairs> {
    increment_targets_scaled(traj, TargetScaling::Corrected)
}

pub fn increment_targets_scaled(
    traj: &Trajectory,
    scaling: TargetScaling,
) -> Result<IncrementPairs> {
    let count = check_length(traj)?;
    let pts = traj.points();
    let d = traj.dim();
    let factor = scaling.factor(traj.dt());
    let mut targets = Points::with_capacity(d, count);
    let mut z = vec![0.0; d];
    for n in 0..count {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = third_order(|k| pts.row(n + k)[i], factor);
        }
        targets.push(&z)?;
    }
    Ok(IncrementPairs {
        inputs: pts.select(&(0..count).collect::<Vec<_>>()),
        targets,
    })
}

#[derive(Deserialize)]
struct StencilRepr {
    left: Vec<Vec<usize>>,
}

/// For each coordinate `i` of a `d`-dimensional state, the ordered list
/// `Left(i)` of coordinates its drift component depends on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "StencilRepr")]
pub struct Stencil {
    left: Vec<Vec<usize>>,
}

impl TryFrom<StencilRepr> for Stencil {
    type Error = Error;

    fn try_from(repr: StencilRepr) -> Result<Self> {
        Stencil::new(repr.left)
    }
}

impl Stencil {
    pub fn new(left: Vec<Vec<usize>>) -> Result<Self> {
        let d = left.len();
        let width = left.first().map_or(0, Vec::len);
        if d == 0 || width == 0 {
            return Err(Error::InvalidStencil("stencil must be nonempty".into()));
        }
        for (i, l) in left.iter().enumerate() {
            if l.len() != width {
                return Err(Error::InvalidStencil(format!(
                    "Left({i}) has {} entries, expected {width}",
                    l.len()
                )));
            }
            if let Some(&bad) = l.iter().find(|&&j| j >= d) {
                return Err(Error::InvalidStencil(format!(
                    "Left({i}) refers to coordinate {bad} of {d}"
                )));
            }
            let mut sorted = l.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != width {
                return Err(Error::InvalidStencil(format!(
                    "Left({i}) repeats a coordinate"
                )));
            }
        }
        Ok(Stencil { left })
    }

    /// `Left(i) = (i + o) mod d` for each offset `o`.
    pub fn cyclic(d: usize, offsets: &[isize]) -> Result<Self> {
        let d_signed = d as isize;
        Stencil::new(
            (0..d_signed)
                .map(|i| {
                    offsets
                        .iter()
                        .map(|o| (i + o).rem_euclid(d_signed.max(1)) as usize)
                        .collect()
                })
                .collect(),
        )
    }

    /// `(i-2, i-1, i, i+1) mod d`.
    pub fn lorenz96(d: usize) -> Result<Self> {
        Stencil::cyclic(d, &[-2, -1, 0, 1])
    }

    /// The cyclic window of `width` coordinates ending one past `i`, i.e.
    /// offsets `-(width-2), ..., 0, 1`; for width 4 this is [`Stencil::lorenz96`].
    pub fn cyclic_window(d: usize, width: usize) -> Result<Self> {
        if width == 0 || width > d {
            return Err(Error::InvalidStencil(format!(
                "width {width} does not fit {d} coordinates"
            )));
        }
        let offsets: Vec<isize> = if width == 1 {
            vec![0]
        } else {
            (-(width as isize - 2)..=1).collect()
        };
        Stencil::cyclic(d, &offsets)
    }

    pub fn width(&self) -> usize {
        self.left[0].len()
    }

    pub fn dim(&self) -> usize {
        self.left.len()
    }

    pub fn left(&self, i: usize) -> &[usize] {
        &self.left[i]
    }

    /// `(x_j)_{j in Left(i)}`.
    pub fn project(&self, x: &[f64], i: usize) -> Vec<f64> {
        self.left[i].iter().map(|&j| x[j]).collect()
    }
}

/// Pooled `(inputs, target)` records of all coordinates, time-major: record
/// `t * d + i` belongs to base time `t` and coordinate `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub inputs: Points,
    pub targets: Vec<f64>,
    pub dim: usize,
    pub dt: f64,
    pub scaling: TargetScaling,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.inputs.dim()
    }

    /// Columns `in0..in{m-1},target`.
    pub fn to_csv(&self) -> String {
        let m = self.width();
        let mut out: Vec<String> = (0..m).map(|j| format!("in{j}")).collect();
        out.push("target".into());
        let mut text = out.join(",");
        text.push('\n');
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            for v in x {
                text.push_str(&format!("{v},"));
            }
            text.push_str(&format!("{y}\n"));
        }
        text
    }
}

pub fn extract_snapshots(traj: &Trajectory, stencil: &Stencil) -> Result<SnapshotSet> {
    extract_snapshots_scaled(traj, stencil, TargetScaling::Corrected)
}

pub fn extract_snapshots_scaled(
    traj: &Trajectory,
    stencil: &Stencil,
    scaling: TargetScaling,
) -> Result<SnapshotSet> {
    let count = check_length(traj)?;
    let d = traj.dim();
    if stencil.dim() != d {
        return Err(Error::InvalidStencil(format!(
            "stencil covers {} coordinates, trajectory has {d}",
            stencil.dim()
        )));
    }
    let pts = traj.points();
    let factor = scaling.factor(traj.dt());
    let mut inputs = Points::with_capacity(stencil.width(), count * d);
    let mut targets = Vec::with_capacity(count * d);
    for t in 0..count {
        let base = pts.row(t);
        for i in 0..d {
            inputs.push(&stencil.project(base, i))?;
            targets.push(third_order(|k| pts.row(t + k)[i], factor));
        }
    }
    Ok(SnapshotSet {
        inputs,
        targets,
        dim: d,
        dt: traj.dt(),
        scaling,
    })
}

/// Dense estimate: coordinate `i` of the drift is `sum_m A[i][m] k(x, c_m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub kernel: KernelModel,
    /// `d x M`; row `i` holds the coefficients of coordinate `i`.
    pub coefficients: Vec<Vec<f64>>,
    pub dt: f64,
    pub scaling: TargetScaling,
    pub diagnostics: Vec<FitDiagnostics>,
}

fn annotate(coordinate: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Coordinate {
        coordinate,
        source: Box::new(e),
    }
}

pub fn estimate_drift(traj: &Trajectory, params: &CondExpParams) -> Result<DriftModel> {
    estimate_drift_scaled(traj, params, TargetScaling::Corrected)
}

pub fn estimate_drift_scaled(
    traj: &Trajectory,
    params: &CondExpParams,
    scaling: TargetScaling,
) -> Result<DriftModel> {
    let pairs = increment_targets_scaled(traj, scaling)?;
    let regression = Regression::new(&pairs.inputs, params)?;
    let fits: Vec<(Vec<f64>, FitDiagnostics)> = (0..traj.dim())
        .into_par_iter()
        .map(|i| {
            regression
                .solve(&pairs.targets.column(i))
                .map_err(annotate(i))
        })
        .collect::<Result<_>>()?;
    let (coefficients, diagnostics) = fits.into_iter().unzip();
    Ok(DriftModel {
        kernel: regression.kernel().clone(),
        coefficients,
        dt: traj.dt(),
        scaling,
        diagnostics,
    })
}

pub fn predict_drift(model: &DriftModel, x: &[f64]) -> Result<FieldValue> {
    let section = model.kernel.section(x)?;
    Ok(FieldValue {
        value: model
            .coefficients
            .iter()
            .map(|a| section.row.dot(a))
            .collect(),
        extrapolated: section.extrapolated,
    })
}

impl VectorField for DriftModel {
    fn dim(&self) -> usize {
        self.coefficients.len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        predict_drift(self, x)
    }
}

/// Sparse estimate: `V_i(x) = W((x_j)_{j in Left(i)})` with one shared unit
/// `W(u) = sum_m a_m k(u, c_m)` on `R^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedDriftModel {
    pub kernel: KernelModel,
    pub coefficients: Vec<f64>,
    pub stencil: Stencil,
    pub dt: f64,
    pub scaling: TargetScaling,
    pub diagnostics: FitDiagnostics,
}

impl SharedDriftModel {
    /// The shared unit evaluated at a stencil-projected input.
    pub fn unit(&self, u: &[f64]) -> Result<crate::kernels::Evaluation> {
        self.kernel.evaluate_expansion(&self.coefficients, u)
    }
}

pub fn estimate_drift_sparse(
    snapshots: &SnapshotSet,
    stencil: &Stencil,
    params: &CondExpParams,
) -> Result<SharedDriftModel> {
    check_dim(stencil.width(), snapshots.width())?;
    check_dim(stencil.dim(), snapshots.dim)?;
    let regression = Regression::new(&snapshots.inputs, params)?;
    let (coefficients, diagnostics) = regression.solve(&snapshots.targets)?;
    Ok(SharedDriftModel {
        kernel: regression.kernel().clone(),
        coefficients,
        stencil: stencil.clone(),
        dt: snapshots.dt,
        scaling: snapshots.scaling,
        diagnostics,
    })
}

pub fn predict_drift_sparse(model: &SharedDriftModel, x: &[f64]) -> Result<FieldValue> {
    check_dim(model.stencil.dim(), x.len())?;
    let mut value = Vec::with_capacity(x.len());
    let mut extrapolated = false;
    for i in 0..x.len() {
        let e = model.unit(&model.stencil.project(x, i))?;
        value.push(e.value);
        extrapolated |= e.extrapolated;
    }
    Ok(FieldValue {
        value,
        extrapolated,
    })
}

impl VectorField for SharedDriftModel {
    fn dim(&self) -> usize {
        self.stencil.dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        predict_drift_sparse(self, x)
    }
}

/// Either kind of fitted drift, tagged by estimator when serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum DriftEstimate {
    Dense(DriftModel),
    Sparse(SharedDriftModel),
}

impl VectorField for DriftEstimate {
    fn dim(&self) -> usize {
        match self {
            DriftEstimate::Dense(m) => m.dim(),
            DriftEstimate::Sparse(m) => m.dim(),
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        match self {
            DriftEstimate::Dense(m) => m.evaluate(x),
            DriftEstimate::Sparse(m) => m.evaluate(x),
        }
    }
}
