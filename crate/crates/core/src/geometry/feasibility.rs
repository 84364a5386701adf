//! Parameter feasibility against the obstacle layout.
//!
//! For convex analytic obstacles the reach of the free space is limited only
//! by how close obstacles come to each other, so `h = rho` is taken as half
//! the minimum pairwise clearance (infinite for a single obstacle). Splines
//! and implicit obstacles have no computable reach; their report is advisory.

use std::fmt;

use super::{GeometryError, Obstacle, RobotParams, World};
use crate::penalty::PenaltyParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reach {
    Known(f64),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Short name of the violated inequality.
    pub condition: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "feasibility condition violated [{}]: {}",
            self.condition, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// `min(h, rho)` when computable.
    pub reach: Reach,
    /// Smallest pairwise obstacle clearance (sampled for splines).
    pub min_clearance: Option<f64>,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_advisory(&self) -> bool {
        self.reach == Reach::Unknown
    }

    /// `Infeasible` on any violation; `UnknownReach` when the reach could not
    /// be computed and the caller did not accept an advisory result.
    pub fn check(&self, accept_unknown_reach: bool) -> Result<(), GeometryError> {
        if let Some(v) = self.violations.first() {
            return Err(GeometryError::Infeasible(v.to_string()));
        }
        if self.is_advisory() && !accept_unknown_reach {
            return Err(GeometryError::UnknownReach);
        }
        Ok(())
    }
}

pub fn validate_feasibility(
    world: &World,
    robot: &RobotParams,
    penalty: &PenaltyParams,
) -> FeasibilityReport {
    let mut violations = Vec::new();
    let mut fail = |condition: &'static str, message: String| {
        violations.push(Violation { condition, message })
    };

    if !(robot.radius > 0.0) {
        fail(
            "0 < R",
            format!("robot radius must be positive, got {}", robot.radius),
        );
    }
    if !(robot.epsilon > 0.0) {
        fail(
            "0 < epsilon < h - R",
            format!("epsilon must be positive, got {}", robot.epsilon),
        );
    }
    if !(penalty.mu > 0.0) {
        fail(
            "0 < mu < h - (R + epsilon)",
            format!("mu must be positive, got {}", penalty.mu),
        );
    }
    if !(penalty.nu > 0.0) {
        fail("0 < nu", format!("nu must be positive, got {}", penalty.nu));
    }

    let obstacles = world.obstacles();
    let analytic = obstacles.iter().all(Obstacle::is_analytic);
    let mut min_clearance: Option<f64> = None;
    let mut exact = true;
    for i in 0..obstacles.len() {
        for j in i + 1..obstacles.len() {
            match pair_clearance(&obstacles[i], &obstacles[j]) {
                Some(c) => min_clearance = Some(min_clearance.map_or(c, |m: f64| m.min(c))),
                None => exact = false,
            }
        }
    }

    let reach = if analytic && exact {
        Reach::Known(min_clearance.map_or(f64::INFINITY, |c| 0.5 * c))
    } else {
        Reach::Unknown
    };
    if let Some(c) = min_clearance {
        if !(c > 0.0) {
            fail(
                "disjoint obstacles",
                format!("obstacles overlap (clearance {c})"),
            );
        }
        let band = 2.0 * (robot.clearance() + penalty.mu);
        if c > 0.0 && reach == Reach::Unknown && !(c > band) {
            fail(
                "clearance > 2 (R + epsilon + mu)",
                format!("obstacle clearance {c} does not separate the dilated obstacles (needs > {band})"),
            );
        }
    }

    if let Reach::Known(h) = reach {
        if robot.epsilon > 0.0 && !(robot.epsilon < h - robot.radius) {
            fail(
                "0 < epsilon < h - R",
                format!(
                    "epsilon = {} must be below h - R = {}",
                    robot.epsilon,
                    h - robot.radius
                ),
            );
        }
        if penalty.mu > 0.0 && !(penalty.mu < h - robot.clearance()) {
            fail(
                "0 < mu < h - (R + epsilon)",
                format!(
                    "mu = {} must be below h - (R + epsilon) = {}",
                    penalty.mu,
                    h - robot.clearance()
                ),
            );
        }
    }

    FeasibilityReport {
        reach,
        min_clearance,
        violations,
    }
}

/// Minimum distance between two obstacles, `None` when no estimate exists.
fn pair_clearance(a: &Obstacle, b: &Obstacle) -> Option<f64> {
    use Obstacle::*;
    match (a, b) {
        (Disk(p), Disk(q)) | (Sphere(p), Sphere(q)) => {
            Some((&p.center - &q.center).norm() - p.radius - q.radius)
        }
        (Polygon(p), Polygon(q)) => Some(p.clearance_to(q)),
        (Disk(d), Polygon(p)) | (Polygon(p), Disk(d)) => {
            let c = nalgebra::Vector2::new(d.center[0], d.center[1]);
            Some(p.distance_from(&c) - d.radius)
        }
        (Disk(d), other) | (other, Disk(d)) | (Sphere(d), other) | (other, Sphere(d)) => {
            Some(other.distance(&d.center).unwrap_or(0.0) - d.radius)
        }
        (Spline(s), other) | (other, Spline(s)) => {
            let mut best = f64::INFINITY;
            for p in s.samples() {
                let x = super::Vector::from_column_slice(p.as_slice());
                best = best.min(other.distance(&x).unwrap_or(0.0));
            }
            Some(best)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::Blend;

    fn params(mu: f64) -> PenaltyParams {
        PenaltyParams {
            mu,
            nu: 1.0,
            blend: Blend::Cubic,
        }
    }

    fn two_disks() -> World {
        World::new(
            2,
            vec![
                Obstacle::disk([0.0, 0.0], 1.0).unwrap(),
                Obstacle::disk([6.0, 0.0], 1.0).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn two_disks_clearance_four_pass() {
        let r = validate_feasibility(&two_disks(), &RobotParams::new(0.34, 0.06), &params(0.6));
        assert!(r.passed(), "{:?}", r.violations);
        assert_eq!(r.reach, Reach::Known(2.0));
        assert!(r.check(false).is_ok());
    }

    #[test]
    fn zero_epsilon_fails() {
        let r = validate_feasibility(&two_disks(), &RobotParams::new(0.34, 0.0), &params(0.6));
        let err = r.check(false).unwrap_err().to_string();
        assert!(err.contains("feasibility condition violated"), "{err}");
        assert!(err.contains("epsilon must be positive"), "{err}");
    }

    #[test]
    fn mu_at_bound_fails() {
        // h - (R + eps) = 2 - 0.4
        let r = validate_feasibility(
            &two_disks(),
            &RobotParams::new(0.34, 0.06),
            &params(2.0 - 0.4),
        );
        assert!(!r.passed());
        assert!(r
            .violations
            .iter()
            .any(|v| v.condition == "0 < mu < h - (R + epsilon)"));
    }

    #[test]
    fn spline_worlds_are_advisory() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let w = World::new(
            2,
            vec![
                Obstacle::spline(&pts).unwrap(),
                Obstacle::disk([6.0, 0.0], 1.0).unwrap(),
            ],
            None,
        )
        .unwrap();
        let r = validate_feasibility(&w, &RobotParams::new(0.34, 0.06), &params(0.6));
        assert!(r.passed());
        assert_eq!(r.reach, Reach::Unknown);
        assert_eq!(r.check(false), Err(GeometryError::UnknownReach));
        assert!(r.check(true).is_ok());
        // the spline bulges slightly past its control square
        let c = r.min_clearance.unwrap();
        assert!(c > 3.7 && c < 4.0, "{c}");
    }
}
