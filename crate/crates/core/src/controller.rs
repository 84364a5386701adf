//! Nominal gradient-descent control and the projection filter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fd_step, GeometryError, Matrix, RobotParams, Vector, World};
use crate::penalty::{blend_weight, PenaltyParams};
use crate::sensing::SensingMode;

/// Tolerance on `| |eta| - 1 |` for readings marked valid.
pub const NORMAL_TOL: f64 = 1e-6;

/// Blend weights at or above `1 - SATURATION_MARGIN` are clamped in the
/// multi-obstacle solve.
pub const SATURATION_MARGIN: f64 = 1e-9;

/// Margins below `-FREE_SPACE_TOL` are outside the practical free space.
pub const FREE_SPACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("gain matrix is not symmetric")]
    NotSymmetric,
    #[error("gain matrix is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reading marked valid but |eta| = {0}")]
    InvalidNormal(f64),
    /// Some blend weight reached the clamp; `solution` uses the clamped weights.
    #[error("blend weight of reading {index} saturated; penalty clamped")]
    SaturatedPenalty { index: usize, solution: Vector },
    #[error("state is outside the practical free space (margin {margin})")]
    OutsidePracticalFreeSpace { margin: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Navigation potential with its derivatives.
pub trait Potential: Send + Sync {
    fn dimension(&self) -> usize;

    fn goal(&self) -> &Vector;

    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector;

    /// Central differences of the gradient unless overridden.
    fn hessian(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let h = fd_step(x);
        let mut hess = Matrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            hess.set_column(j, &((self.gradient(&xp) - self.gradient(&xm)) / (2.0 * h)));
        }
        (&hess + hess.transpose()) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSpec {
    goal: Vec<f64>,
    gain: Vec<Vec<f64>>,
}

/// `V(x) = 1/2 (x - x_d)^T P (x - x_d)` with symmetric positive-definite `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PotentialSpec", into = "PotentialSpec")]
pub struct QuadraticPotential {
    goal: Vector,
    gain: Matrix,
}

impl TryFrom<PotentialSpec> for QuadraticPotential {
    type Error = ControllerError;

    fn try_from(spec: PotentialSpec) -> Result<Self, Self::Error> {
        let n = spec.goal.len();
        if spec.gain.len() != n {
            return Err(ControllerError::DimensionMismatch {
                expected: n,
                got: spec.gain.len(),
            });
        }
        if let Some(row) = spec.gain.iter().find(|r| r.len() != n) {
            return Err(ControllerError::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        let gain = DMatrix::from_fn(n, n, |i, j| spec.gain[i][j]);
        QuadraticPotential::new(DVector::from_vec(spec.goal), gain)
    }
}

impl From<QuadraticPotential> for PotentialSpec {
    fn from(p: QuadraticPotential) -> Self {
        let n = p.goal.len();
        PotentialSpec {
            goal: p.goal.iter().copied().collect(),
            gain: (0..n)
                .map(|i| (0..n).map(|j| p.gain[(i, j)]).collect())
                .collect(),
        }
    }
}

impl QuadraticPotential {
    pub fn new(goal: Vector, gain: Matrix) -> Result<Self, ControllerError> {
        let n = goal.len();
        if gain.nrows() != n || gain.ncols() != n {
            return Err(ControllerError::DimensionMismatch {
                expected: n,
                got: gain.nrows(),
            });
        }
        if (&gain - gain.transpose()).amax() > 1e-12 {
            return Err(ControllerError::NotSymmetric);
        }
        let min_eig = gain.clone().symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(ControllerError::NotPositiveDefinite(min_eig));
        }
        Ok(Self { goal, gain })
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    /// Same goal, gain multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, ControllerError> {
        Self::new(self.goal.clone(), &self.gain * c)
    }
}

impl Potential for QuadraticPotential {
    fn dimension(&self) -> usize {
        self.goal.len()
    }

    fn goal(&self) -> &Vector {
        &self.goal
    }

    fn value(&self, x: &Vector) -> f64 {
        let e = x - &self.goal;
        0.5 * e.dot(&(&self.gain * &e))
    }

    fn gradient(&self, x: &Vector) -> Vector {
        &self.gain * (x - &self.goal)
    }

    fn hessian(&self, _x: &Vector) -> Matrix {
        self.gain.clone()
    }
}

/// Margin and outward normal as seen by the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorReading {
    pub margin: f64,
    pub normal: Vector,
    /// False when nothing was sensed; the filter then passes the nominal through.
    pub valid: bool,
}

impl SensorReading {
    pub fn new(margin: f64, normal: Vector) -> Self {
        Self {
            margin,
            normal,
            valid: true,
        }
    }

    pub fn invalid(dimension: usize) -> Self {
        Self {
            margin: f64::INFINITY,
            normal: Vector::zeros(dimension),
            valid: false,
        }
    }

    fn check(&self) -> Result<(), ControllerError> {
        if self.valid {
            let n = self.normal.norm();
            if !((n - 1.0).abs() <= NORMAL_TOL) {
                return Err(ControllerError::InvalidNormal(n));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDiagnostics {
    /// `nominal . eta`; NaN for invalid readings.
    pub s: f64,
    pub w: f64,
    pub nominal: Vector,
    pub filtered: Vector,
}

/// `-grad V(x)`.
pub fn nominal_control(potential: &dyn Potential, x: &Vector) -> Vector {
    -potential.gradient(x)
}

/// `u = nominal - w (eta . nominal) eta` with `w = phi_mu(d) phi_nu(s)`.
///
/// When `w` is exactly zero the nominal is returned unchanged.
pub fn spf_filter(
    nominal: &Vector,
    reading: &SensorReading,
    params: &PenaltyParams,
) -> Result<(Vector, FilterDiagnostics), ControllerError> {
    reading.check()?;
    let (s, w) = if reading.valid {
        if reading.normal.len() != nominal.len() {
            return Err(ControllerError::DimensionMismatch {
                expected: nominal.len(),
                got: reading.normal.len(),
            });
        }
        let s = nominal.dot(&reading.normal);
        (s, blend_weight(reading.margin, s, params))
    } else {
        (f64::NAN, 0.0)
    };
    let filtered = if w == 0.0 {
        nominal.clone()
    } else {
        nominal - &reading.normal * (w * s)
    };
    let diag = FilterDiagnostics {
        s,
        w,
        nominal: nominal.clone(),
        filtered: filtered.clone(),
    };
    Ok((filtered, diag))
}

/// Minimizer of `|u - nominal|^2 + sum_i psi_i (u . eta_i)^2`.
///
/// Solves `(I + sum_i psi_i eta_i eta_i^T) u = nominal` with
/// `psi_i = w_i / (1 - w_i)`. Weights within `SATURATION_MARGIN` of one are
/// clamped and reported through `SaturatedPenalty`, which carries the clamped
/// solution.
pub fn spf_filter_multi(
    nominal: &Vector,
    readings: &[SensorReading],
    params: &PenaltyParams,
) -> Result<Vector, ControllerError> {
    let n = nominal.len();
    let mut system = Matrix::identity(n, n);
    let mut saturated = None;
    for (i, r) in readings.iter().enumerate() {
        r.check()?;
        if !r.valid {
            continue;
        }
        if r.normal.len() != n {
            return Err(ControllerError::DimensionMismatch {
                expected: n,
                got: r.normal.len(),
            });
        }
        let mut w = blend_weight(r.margin, nominal.dot(&r.normal), params);
        if w == 0.0 {
            continue;
        }
        if w >= 1.0 - SATURATION_MARGIN {
            w = 1.0 - SATURATION_MARGIN;
            saturated.get_or_insert(i);
        }
        let psi = w / (1.0 - w);
        system.ger(psi, &r.normal, &r.normal, 1.0);
    }
    let solution = system
        .cholesky()
        .expect("identity plus positive semidefinite terms is positive definite")
        .solve(nominal);
    match saturated {
        Some(index) => Err(ControllerError::SaturatedPenalty { index, solution }),
        None => Ok(solution),
    }
}

/// One evaluation of the closed-loop vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub velocity: Vector,
    /// Sensed margin; `None` when every obstacle was provably beyond the
    /// activation band and no query was made.
    pub margin: Option<f64>,
    pub s: f64,
    pub w: f64,
}

/// `x' = kappa(x)`: sense, compute the nominal, filter.
pub fn closed_loop_field(
    potential: &dyn Potential,
    world: &World,
    robot: &RobotParams,
    penalty: &PenaltyParams,
    x: &Vector,
    sensing: &SensingMode,
) -> Result<Vector, ControllerError> {
    Ok(closed_loop_eval(potential, world, robot, penalty, x, sensing, FREE_SPACE_TOL)?.velocity)
}

/// [`closed_loop_field`] with diagnostics and a caller-chosen free-space tolerance.
///
/// If the bounding-sphere lower bound already places every obstacle beyond
/// the activation band (`d >= mu`), the weight is exactly zero for any sensing
/// mode and the distance query is skipped.
pub fn closed_loop_eval(
    potential: &dyn Potential,
    world: &World,
    robot: &RobotParams,
    penalty: &PenaltyParams,
    x: &Vector,
    sensing: &SensingMode,
    tol: f64,
) -> Result<FieldEval, ControllerError> {
    let nominal = nominal_control(potential, x);
    if x.len() != world.dimension() {
        return Err(GeometryError::DimensionMismatch {
            expected: world.dimension(),
            got: x.len(),
        }
        .into());
    }
    let far = world
        .obstacles()
        .iter()
        .all(|ob| ob.lower_bound(x) - robot.clearance() >= penalty.mu);
    if far {
        return Ok(FieldEval {
            velocity: nominal,
            margin: None,
            s: f64::NAN,
            w: 0.0,
        });
    }
    let reading = sensing.read(world, x, robot)?;
    if reading.valid && reading.margin < -tol {
        return Err(ControllerError::OutsidePracticalFreeSpace {
            margin: reading.margin,
        });
    }
    let (velocity, diag) = spf_filter(&nominal, &reading, penalty)?;
    Ok(FieldEval {
        velocity,
        margin: reading.valid.then_some(reading.margin),
        s: diag.s,
        w: diag.w,
    })
}
