//! Smooth penalty-based safety filtering for single-integrator robots.
//!
//! The filter projects a nominal velocity command onto the tangent space of
//! the nearest obstacle with a smooth, state-dependent weight, so that the
//! dilated free space stays forward invariant while the robot follows the
//! nominal command away from obstacles.
//!
//! - [`geometry`]: obstacle worlds, distances, normals and distance Hessians.
//! - [`penalty`]: the smooth activation weight.
//! - [`controller`]: nominal control, the filter and the closed-loop field.
//! - [`sensing`]: simulated LiDAR and exact-geometry readings.
//! - [`simulation`]: integration, batches and vector-field sampling.
//! - [`analysis`]: undesired equilibria and their stability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod controller;
pub mod geometry;
pub mod penalty;
pub mod sensing;
pub mod simulation;

pub use analysis::{
    classify_equilibrium, curvature_levelset, curvature_obstacle, find_equilibria, jacobian_at,
    AnalysisError, Classification, EquilibriumReport,
};
pub use controller::{
    closed_loop_eval, closed_loop_field, nominal_control, spf_filter, spf_filter_multi,
    ControllerError, FieldEval, FilterDiagnostics, Potential, QuadraticPotential, SensorReading,
};
pub use geometry::{
    validate_feasibility, Bounds, DistanceQuery, FeasibilityReport, GeometryError, Matrix,
    Obstacle, Reach, RobotParams, Vector, Violation, World,
};
pub use penalty::{blend_weight, penalty_value, transition, Blend, PenaltyError, PenaltyParams};
pub use sensing::{
    extract_reading, oracle_reading, scan_2d, scan_3d, Lidar, LidarConfig, Scan, SensingError,
    SensingMode, SensorConfig, SensorKind,
};
pub use simulation::{
    batch_simulate, emit_vector_field, random_initials, simulate, FieldSample, GridSpec,
    Integrator, SimConfig, SimError, Summary, Termination, Trajectory,
};
