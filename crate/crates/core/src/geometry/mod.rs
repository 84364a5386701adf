//! Obstacle world: distance, boundary projection, outward normal and
//! distance Hessian.
//!
//! All queries take points in the world's ambient dimension (2 or 3) as
//! [`Vector`]s. Per-obstacle work happens in fixed-size nalgebra types; only
//! the winning query is materialized as a dynamic vector.

mod feasibility;
mod implicit;
mod obstacle;
mod polygon;
mod spline;

pub use feasibility::{validate_feasibility, FeasibilityReport, Reach, Violation};
pub use implicit::{GradientMode, ImplicitObstacle, ImplicitShape};
pub use obstacle::{Obstacle, ObstacleSpec};
pub use polygon::ConvexPolygon;
pub use spline::{ClosedSpline, DEFAULT_SPLINE_SAMPLES};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative step for central finite differences: `h = FD_STEP * max(1, |x|)`.
pub const FD_STEP: f64 = 1e-5;

/// Points closer than this to a tie locus or a polygon Voronoi boundary have
/// no well-defined distance Hessian.
pub const SMOOTHNESS_TOL: f64 = 1e-9;

pub(crate) fn fd_step(x: &Vector) -> f64 {
    FD_STEP * x.norm().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point lies inside or on obstacle {index}")]
    InsideObstacle { index: usize },
    #[error("world contains no obstacles")]
    EmptyWorld,
    #[error("distance is not twice differentiable at this point (tie locus or Voronoi boundary)")]
    NonSmoothPoint,
    #[error("reach of spline/implicit obstacles is unknown; feasibility report is advisory")]
    UnknownReach,
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

/// Robot body radius `R` and safety margin `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    #[serde(rename = "R")]
    pub radius: f64,
    pub epsilon: f64,
}

impl RobotParams {
    pub fn new(radius: f64, epsilon: f64) -> Self {
        Self { radius, epsilon }
    }

    /// Total clearance `R + epsilon` between the robot center and obstacles.
    pub fn clearance(&self) -> f64 {
        self.radius + self.epsilon
    }
}

/// Result of a nearest-obstacle query.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceQuery {
    pub value: f64,
    pub nearest: Vector,
    /// Unit vector from the nearest boundary point toward the query point.
    pub normal: Vector,
    pub obstacle: usize,
}

/// Axis-aligned workspace box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn contains(&self, x: &Vector) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldSpec {
    dimension: usize,
    obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounds: Option<Bounds>,
}

/// A set of obstacles sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldSpec", into = "WorldSpec")]
pub struct World {
    dimension: usize,
    obstacles: Vec<Obstacle>,
    bounds: Option<Bounds>,
}

impl TryFrom<WorldSpec> for World {
    type Error = GeometryError;

    fn try_from(spec: WorldSpec) -> Result<Self, Self::Error> {
        World::new(spec.dimension, spec.obstacles, spec.bounds)
    }
}

impl From<World> for WorldSpec {
    fn from(w: World) -> Self {
        WorldSpec {
            dimension: w.dimension,
            obstacles: w.obstacles,
            bounds: w.bounds,
        }
    }
}

impl World {
    pub fn new(
        dimension: usize,
        obstacles: Vec<Obstacle>,
        bounds: Option<Bounds>,
    ) -> Result<Self, GeometryError> {
        if dimension != 2 && dimension != 3 {
            return Err(GeometryError::InvalidObstacle(format!(
                "world dimension must be 2 or 3, got {dimension}"
            )));
        }
        for ob in &obstacles {
            if ob.dimension() != dimension {
                return Err(GeometryError::DimensionMismatch {
                    expected: dimension,
                    got: ob.dimension(),
                });
            }
        }
        if let Some(b) = &bounds {
            if b.min.len() != dimension || b.max.len() != dimension {
                return Err(GeometryError::DimensionMismatch {
                    expected: dimension,
                    got: b.min.len().max(b.max.len()),
                });
            }
            if b.min.iter().zip(&b.max).any(|(lo, hi)| !(lo < hi)) {
                return Err(GeometryError::InvalidObstacle(
                    "bounds must satisfy min < max on every axis".into(),
                ));
            }
        }
        Ok(Self {
            dimension,
            obstacles,
            bounds,
        })
    }

    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            obstacles: Vec::new(),
            bounds: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    fn check_dim(&self, x: &Vector) -> Result<(), GeometryError> {
        if x.len() != self.dimension {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Distance to the obstacle set with nearest point and outward normal.
    ///
    /// Obstacles are visited in order of their bounding-sphere lower bound so
    /// that expensive primitives far from `x` are skipped. Ties go to the
    /// lowest obstacle index.
    pub fn distance_to_obstacles(&self, x: &Vector) -> Result<DistanceQuery, GeometryError> {
        self.check_dim(x)?;
        if self.obstacles.is_empty() {
            return Err(GeometryError::EmptyWorld);
        }
        let mut order: Vec<(f64, usize)> = self
            .obstacles
            .iter()
            .enumerate()
            .map(|(i, ob)| (ob.lower_bound(x), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut best: Option<(obstacle::Hit, usize)> = None;
        for (lb, i) in order {
            if let Some((hit, _)) = &best {
                if lb > hit.distance {
                    break;
                }
            }
            let hit = self.obstacles[i]
                .closest(x)
                .ok_or(GeometryError::InsideObstacle { index: i })?;
            let better = match &best {
                None => true,
                Some((b, bi)) => {
                    hit.distance < b.distance || (hit.distance == b.distance && i < *bi)
                }
            };
            if better {
                best = Some((hit, i));
            }
        }
        let (hit, index) = best.expect("non-empty world");
        Ok(DistanceQuery {
            value: hit.distance,
            nearest: hit.nearest,
            normal: hit.normal,
            obstacle: index,
        })
    }

    /// `d(x) = dist(x) - (R + epsilon)`; negative inside the dilation.
    pub fn margin(&self, x: &Vector, robot: &RobotParams) -> Result<f64, GeometryError> {
        Ok(self.distance_to_obstacles(x)?.value - robot.clearance())
    }

    /// Per-obstacle queries, one per obstacle in index order.
    pub fn distances_per_obstacle(&self, x: &Vector) -> Result<Vec<DistanceQuery>, GeometryError> {
        self.check_dim(x)?;
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, ob)| {
                let hit = ob
                    .closest(x)
                    .ok_or(GeometryError::InsideObstacle { index: i })?;
                Ok(DistanceQuery {
                    value: hit.distance,
                    nearest: hit.nearest,
                    normal: hit.normal,
                    obstacle: i,
                })
            })
            .collect()
    }

    /// Hessian of the obstacle distance at `x`.
    ///
    /// Fails with `NonSmoothPoint` within tolerance of the medial axis between
    /// two obstacles or of a polygon Voronoi boundary.
    pub fn distance_hessian(&self, x: &Vector) -> Result<Matrix, GeometryError> {
        let all = self.distances_per_obstacle(x)?;
        if all.is_empty() {
            return Err(GeometryError::EmptyWorld);
        }
        let mut best = 0;
        for (i, q) in all.iter().enumerate() {
            if q.value < all[best].value {
                best = i;
            }
        }
        let ob = &self.obstacles[best];
        let tie_tol = if ob.has_analytic_hessian() {
            SMOOTHNESS_TOL
        } else {
            2.0 * fd_step(x) + SMOOTHNESS_TOL
        };
        let tied = all
            .iter()
            .enumerate()
            .any(|(i, q)| i != best && q.value - all[best].value < tie_tol);
        if tied {
            return Err(GeometryError::NonSmoothPoint);
        }
        ob.hessian(x)
    }

    /// First boundary crossing along `origin + t * direction`, `t in (0, max_range]`.
    pub fn raycast(&self, origin: &Vector, direction: &Vector, max_range: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for ob in &self.obstacles {
            let limit = best.unwrap_or(max_range);
            if !ob.ray_may_hit(origin, direction, limit) {
                continue;
            }
            if let Some(t) = ob.raycast(origin, direction, limit) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn disk(c: [f64; 2], r: f64) -> Obstacle {
        Obstacle::disk(c, r).unwrap()
    }

    #[test]
    fn disk_distance_normal_and_nearest() {
        let w = World::new(2, vec![disk([0.0, 0.0], 1.0)], None).unwrap();
        let q = w.distance_to_obstacles(&dvector![3.0, 0.0]).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
        assert!((q.nearest - dvector![1.0, 0.0]).norm() < 1e-12);
        assert!((q.normal - dvector![1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn sphere_distance() {
        let w = World::new(3, vec![Obstacle::sphere([0.0; 3], 1.0).unwrap()], None).unwrap();
        let q = w.distance_to_obstacles(&dvector![0.0, 0.0, 2.0]).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
        assert!((q.normal - dvector![0.0, 0.0, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let w = World::new(2, vec![disk([-2.0, 0.0], 1.0), disk([2.0, 0.0], 1.0)], None).unwrap();
        let q = w.distance_to_obstacles(&dvector![0.0, 0.7]).unwrap();
        assert_eq!(q.obstacle, 0);
        let w = World::new(2, vec![disk([2.0, 0.0], 1.0), disk([-2.0, 0.0], 1.0)], None).unwrap();
        assert_eq!(
            w.distance_to_obstacles(&dvector![0.0, 0.7])
                .unwrap()
                .obstacle,
            0
        );
    }

    #[test]
    fn margin_arithmetic() {
        let w = World::new(2, vec![disk([0.0, 0.0], 1.0)], None).unwrap();
        let robot = RobotParams::new(0.34, 0.06);
        assert!((w.margin(&dvector![3.0, 0.0], &robot).unwrap() - 1.6).abs() < 1e-12);
        assert!(w.margin(&dvector![1.4, 0.0], &robot).unwrap().abs() < 1e-12);
        assert!((w.margin(&dvector![1.3, 0.0], &robot).unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let w = World::new(2, vec![disk([0.0, 0.0], 1.0)], None).unwrap();
        assert_eq!(
            w.distance_to_obstacles(&dvector![0.5, 0.0]),
            Err(GeometryError::InsideObstacle { index: 0 })
        );
        assert_eq!(
            w.distance_to_obstacles(&dvector![1.0, 0.0]),
            Err(GeometryError::InsideObstacle { index: 0 })
        );
        assert_eq!(
            World::empty(2).distance_to_obstacles(&dvector![0.0, 0.0]),
            Err(GeometryError::EmptyWorld)
        );
        assert!(matches!(
            World::new(3, vec![disk([0.0, 0.0], 1.0)], None),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hessians_of_round_primitives() {
        let w = World::new(2, vec![disk([0.0, 0.0], 1.0)], None).unwrap();
        let h = w.distance_hessian(&dvector![3.0, 0.0]).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0 / 3.0]);
        assert!((h - expected).norm() < 1e-12);

        let w = World::new(3, vec![Obstacle::sphere([0.0; 3], 1.0).unwrap()], None).unwrap();
        let h = w.distance_hessian(&dvector![0.0, 0.0, 2.0]).unwrap();
        let expected = Matrix::from_diagonal(&dvector![0.5, 0.5, 0.0]);
        assert!((h - expected).norm() < 1e-12);
    }

    #[test]
    fn hessian_rejects_tie_locus() {
        let w = World::new(2, vec![disk([-2.0, 0.0], 1.0), disk([2.0, 0.0], 1.0)], None).unwrap();
        assert_eq!(
            w.distance_hessian(&dvector![0.0, 0.3]),
            Err(GeometryError::NonSmoothPoint)
        );
    }

    #[test]
    fn raycast_disk() {
        let w = World::new(2, vec![disk([0.0, 0.0], 1.0)], None).unwrap();
        let t = w
            .raycast(&dvector![3.0, 0.0], &dvector![-1.0, 0.0], 3.0)
            .unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert_eq!(
            w.raycast(&dvector![3.0, 0.0], &dvector![1.0, 0.0], 3.0),
            None
        );
        assert_eq!(
            w.raycast(&dvector![3.0, 0.0], &dvector![0.0, 1.0], 3.0),
            None
        );
    }

    #[test]
    fn world_json_schema() {
        let doc = r#"{"dimension": 2, "obstacles": [{"type":"disk","center":[0,0],"radius":1.0}],
                      "bounds": {"min": [-5, -5], "max": [5, 5]}}"#;
        let w: World = serde_json::from_str(doc).unwrap();
        assert_eq!(w.obstacles().len(), 1);
        let again: World = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(w, again);

        let bad = r#"{"dimension": 2, "obstacles": [], "colour": "red"}"#;
        assert!(serde_json::from_str::<World>(bad).is_err());
        let bad = r#"{"dimension": 2, "obstacles": [{"type":"disk","center":[0,0],"radius":1.0,"mass":2}]}"#;
        assert!(serde_json::from_str::<World>(bad).is_err());
        let bad =
            r#"{"dimension": 2, "obstacles": [{"type":"disk","center":[0,0],"radius":-1.0}]}"#;
        assert!(serde_json::from_str::<World>(bad).is_err());
    }
}
