//! Closed-loop integration of `x' = kappa(x)`.
//!
//! Each recorded step stores the state, the applied control, the exact
//! geometric margin `d` and alignment `s = kappa_0 . eta` (from the true
//! geometry, whatever the sensing mode), the blend weight `w` that was
//! actually applied, and the potential `V`.
//!
//! A step whose stages leave the practical free space is retried as two half
//! steps, recursively, down to `dt / 2^max_halvings`; if that still fails the
//! run ends with [`Termination::SafetyFault`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    closed_loop_eval, nominal_control, ControllerError, FieldEval, Potential, QuadraticPotential,
};
use crate::geometry::{Bounds, GeometryError, RobotParams, Vector, World};
use crate::penalty::PenaltyParams;
use crate::sensing::SensingMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("initial position {index} has negative margin {margin}")]
    InitialOutside { index: usize, margin: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedGoal,
    Timeout,
    Stalled,
    SafetyFault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub world: World,
    pub potential: QuadraticPotential,
    pub robot: RobotParams,
    pub penalty: PenaltyParams,
    pub sensing: SensingMode,
    pub initials: Vec<Vector>,
    pub dt: f64,
    pub t_max: f64,
    pub goal_tol: f64,
    pub integrator: Integrator,
    /// `|u|` below this for `stall_window` seconds ends the run as stalled.
    pub stall_speed: f64,
    pub stall_window: f64,
    /// Recorded margins below `-safety_tol` end the run as a safety fault.
    pub safety_tol: f64,
    /// Stage points whose sensed margin is below `-stage_tol` trigger halving.
    pub stage_tol: f64,
    pub max_halvings: u32,
}

impl SimConfig {
    pub fn new(
        world: World,
        potential: QuadraticPotential,
        robot: RobotParams,
        penalty: PenaltyParams,
    ) -> Self {
        Self {
            world,
            potential,
            robot,
            penalty,
            sensing: SensingMode::Oracle,
            initials: Vec::new(),
            dt: 1e-3,
            t_max: 60.0,
            goal_tol: 1e-2,
            integrator: Integrator::Rk4,
            stall_speed: 1e-6,
            stall_window: 1.0,
            safety_tol: 1e-6,
            stage_tol: 1e-9,
            max_halvings: 6,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.t_max >= self.dt) {
            return bad("t_max must be at least dt");
        }
        if !(self.goal_tol > 0.0) {
            return bad("goal tolerance must be positive");
        }
        if self.potential.dimension() != self.world.dimension() {
            return bad("potential and world dimensions differ");
        }
        for (index, x) in self.initials.iter().enumerate() {
            let margin = self.true_margin(x)?.0;
            if !(margin >= 0.0) {
                return Err(SimError::InitialOutside { index, margin });
            }
        }
        Ok(())
    }

    /// Exact margin and normal; `+inf` and no normal in an empty world.
    fn true_margin(&self, x: &Vector) -> Result<(f64, Option<Vector>), GeometryError> {
        match self.world.distance_to_obstacles(x) {
            Ok(q) => Ok((q.value - self.robot.clearance(), Some(q.normal))),
            Err(GeometryError::EmptyWorld) => Ok((f64::INFINITY, None)),
            Err(e) => Err(e),
        }
    }

    fn eval(&self, x: &Vector) -> Result<FieldEval, ControllerError> {
        closed_loop_eval(
            &self.potential,
            &self.world,
            &self.robot,
            &self.penalty,
            x,
            &self.sensing,
            self.stage_tol,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub termination: Termination,
    pub min_margin: f64,
    pub final_error: f64,
    pub path_length: f64,
    pub final_time: f64,
}

/// Column-oriented record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dimension: usize,
    pub times: Vec<f64>,
    /// Row-major `len x dimension`.
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub margins: Vec<f64>,
    pub alignments: Vec<f64>,
    pub weights: Vec<f64>,
    pub potentials: Vec<f64>,
    pub summary: Summary,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn control(&self, k: usize) -> &[f64] {
        &self.controls[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn final_state(&self) -> Vector {
        Vector::from_column_slice(self.state(self.len() - 1))
    }

    pub fn termination(&self) -> Termination {
        self.summary.termination
    }

    /// Largest `V_{k+1} - V_k`; `-inf` for single-sample runs.
    pub fn max_v_increase(&self) -> f64 {
        self.potentials
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Recorder {
    traj: Trajectory,
}

impl Recorder {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, t: f64, x: &Vector, u: &Vector, d: f64, s: f64, w: f64, v: f64) {
        let tr = &mut self.traj;
        tr.times.push(t);
        tr.states.extend(x.iter());
        tr.controls.extend(u.iter());
        tr.margins.push(d);
        tr.alignments.push(s);
        tr.weights.push(w);
        tr.potentials.push(v);
    }
}

type StepResult = Result<(Vector, FieldEval), ControllerError>;

fn advance(config: &SimConfig, x: &Vector, k1: &FieldEval, h: f64, depth: u32) -> StepResult {
    match try_step(config, x, k1, h) {
        Ok(r) => Ok(r),
        Err(e) if depth >= config.max_halvings => Err(e),
        Err(_) => {
            let (xm, em) = advance(config, x, k1, h / 2.0, depth + 1)?;
            advance(config, &xm, &em, h / 2.0, depth + 1)
        }
    }
}

fn try_step(config: &SimConfig, x: &Vector, k1: &FieldEval, h: f64) -> StepResult {
    let next = match config.integrator {
        Integrator::Euler => x + &k1.velocity * h,
        Integrator::Rk4 => {
            let k1v = &k1.velocity;
            let k2 = config.eval(&(x + k1v * (h / 2.0)))?.velocity;
            let k3 = config.eval(&(x + &k2 * (h / 2.0)))?.velocity;
            let k4 = config.eval(&(x + &k3 * h))?.velocity;
            x + (k1v + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    };
    let end = config.eval(&next)?;
    Ok((next, end))
}

/// One integration step of size `dt` from `x` (with halving on failure).
pub fn step(config: &SimConfig, x: &Vector, dt: f64) -> Result<Vector, ControllerError> {
    let k1 = config.eval(x)?;
    Ok(advance(config, x, &k1, dt, 0)?.0)
}

/// Integrate from `initial` until the goal, a stall, a safety fault or `t_max`.
pub fn simulate(config: &SimConfig, initial: &Vector) -> Trajectory {
    let n = initial.len();
    let goal = config.potential.goal().clone();
    let mut rec = Recorder {
        traj: Trajectory {
            dimension: n,
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            margins: Vec::new(),
            alignments: Vec::new(),
            weights: Vec::new(),
            potentials: Vec::new(),
            summary: Summary {
                termination: Termination::Timeout,
                min_margin: f64::INFINITY,
                final_error: f64::NAN,
                path_length: 0.0,
                final_time: 0.0,
            },
        },
    };

    let mut x = initial.clone();
    let mut eval = config.eval(&x);
    let mut k: u64 = 0;
    let mut stall_steps: u64 = 0;
    let mut path_length = 0.0;
    let mut min_margin = f64::INFINITY;
    let termination = loop {
        let t = k as f64 * config.dt;
        let (d, normal) = match config.true_margin(&x) {
            Ok(m) => m,
            Err(_) => (-config.robot.clearance(), None),
        };
        min_margin = min_margin.min(d);
        let nominal = nominal_control(&config.potential, &x);
        let s = normal.map_or(f64::NAN, |nrm| nominal.dot(&nrm));
        let v = config.potential.value(&x);
        let fe = match &eval {
            Ok(fe) => fe.clone(),
            Err(_) => {
                rec.push(t, &x, &Vector::from_element(n, f64::NAN), d, s, f64::NAN, v);
                break Termination::SafetyFault;
            }
        };
        rec.push(t, &x, &fe.velocity, d, s, fe.w, v);

        if (&x - &goal).norm() < config.goal_tol {
            break Termination::ReachedGoal;
        }
        if d < -config.safety_tol {
            break Termination::SafetyFault;
        }
        if fe.velocity.norm() < config.stall_speed {
            stall_steps += 1;
            if stall_steps as f64 * config.dt >= config.stall_window {
                break Termination::Stalled;
            }
        } else {
            stall_steps = 0;
        }
        if t >= config.t_max * (1.0 - 1e-12) {
            break Termination::Timeout;
        }

        match advance(config, &x, &fe, config.dt, 0) {
            Ok((next, end)) => {
                path_length += (&next - &x).norm();
                x = next;
                eval = Ok(end);
            }
            Err(e) => {
                log::debug!("step at t={t} failed after halving: {e}");
                break Termination::SafetyFault;
            }
        }
        k += 1;
    };

    let mut traj = rec.traj;
    traj.summary = Summary {
        termination,
        min_margin,
        final_error: (&x - &goal).norm(),
        path_length,
        final_time: k as f64 * config.dt,
    };
    traj
}

/// Independent runs in input order; deterministic regardless of scheduling.
pub fn batch_simulate(config: &SimConfig, initials: &[Vector]) -> Vec<Trajectory> {
    initials.par_iter().map(|x0| simulate(config, x0)).collect()
}

/// `count` seeded uniform samples from `bounds` with non-negative margin.
pub fn random_initials(
    world: &World,
    robot: &RobotParams,
    bounds: &Bounds,
    count: usize,
    seed: u64,
) -> Result<Vec<Vector>, SimError> {
    let dim = world.dimension();
    if bounds.min.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: bounds.min.len(),
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000_000 + 1000 * count {
            return Err(SimError::InvalidConfig(
                "bounds contain almost no free space".into(),
            ));
        }
        let x = Vector::from_fn(dim, |i, _| rng.random_range(bounds.min[i]..bounds.max[i]));
        let ok = match world.margin(&x, robot) {
            Ok(m) => m >= 0.0,
            Err(GeometryError::EmptyWorld) => true,
            Err(_) => false,
        };
        if ok {
            out.push(x);
        }
    }
    Ok(out)
}

/// Regular lattice: `counts[i]` points spanning `[min[i], max[i]]` on axis `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn points(&self) -> Vec<Vector> {
        let dim = self.counts.len();
        let total: usize = self.counts.iter().product();
        (0..total)
            .map(|mut idx| {
                Vector::from_fn(dim, |i, _| {
                    let c = self.counts[i];
                    let j = idx % c;
                    idx /= c;
                    if c == 1 {
                        self.min[i]
                    } else {
                        self.min[i] + (self.max[i] - self.min[i]) * j as f64 / (c - 1) as f64
                    }
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub point: Vector,
    pub velocity: Vector,
    pub w: f64,
}

/// Closed-loop field on the grid points with non-negative margin.
pub fn emit_vector_field(
    config: &SimConfig,
    grid: &GridSpec,
) -> Result<Vec<FieldSample>, SimError> {
    let dim = config.world.dimension();
    if grid.counts.len() != dim || grid.min.len() != dim || grid.max.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            got: grid.counts.len(),
        }
        .into());
    }
    if grid.counts.contains(&0) {
        return Err(SimError::InvalidConfig(
            "grid counts must be positive".into(),
        ));
    }
    Ok(grid
        .points()
        .into_par_iter()
        .filter_map(|x| {
            let (d, _) = config.true_margin(&x).ok()?;
            if !(d >= 0.0) {
                return None;
            }
            let fe = config.eval(&x).ok()?;
            Some(FieldSample {
                point: x,
                velocity: fe.velocity,
                w: fe.w,
            })
        })
        .collect())
}
