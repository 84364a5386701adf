use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::implicit::{GradientMode, ImplicitObstacle, ImplicitShape};
use super::polygon::ConvexPolygon;
use super::spline::{ClosedSpline, DEFAULT_SPLINE_SAMPLES};
use super::{fd_step, GeometryError, Matrix, Vector};

/// Closest-point data for a single obstacle.
#[derive(Debug, Clone)]
pub(crate) struct Hit {
    pub distance: f64,
    pub nearest: Vector,
    pub normal: Vector,
}

impl Hit {
    pub(crate) fn from_points(x: &Vector, nearest: Vector) -> Option<Hit> {
        let diff = x - &nearest;
        let distance = diff.norm();
        if !(distance > 0.0) {
            return None;
        }
        Some(Hit {
            distance,
            normal: diff / distance,
            nearest,
        })
    }
}

/// Disk (2D) or sphere (3D).
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vector,
    pub radius: f64,
}

impl Ball {
    fn new(center: &[f64], radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidObstacle(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            center: Vector::from_column_slice(center),
            radius,
        })
    }

    fn closest(&self, x: &Vector) -> Option<Hit> {
        let diff = x - &self.center;
        let r = diff.norm();
        if !(r > self.radius) {
            return None;
        }
        let normal = diff / r;
        Some(Hit {
            distance: r - self.radius,
            nearest: &self.center + &normal * self.radius,
            normal,
        })
    }

    /// `(I - n n^T) / |x - c|`.
    fn hessian(&self, x: &Vector) -> Matrix {
        let diff = x - &self.center;
        let r = diff.norm();
        let n = &diff / r;
        let dim = x.len();
        (Matrix::identity(dim, dim) - &n * n.transpose()) / r
    }

    pub(crate) fn raycast(
        center: &Vector,
        radius: f64,
        o: &Vector,
        dir: &Vector,
        max: f64,
    ) -> Option<f64> {
        let oc = o - center;
        let b = oc.dot(dir);
        let c = oc.norm_squared() - radius * radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Entry root first; an origin inside the ball reports its exit.
        let t = if -b - sq > 0.0 { -b - sq } else { -b + sq };
        (t > 0.0 && t <= max).then_some(t)
    }
}

/// A single obstacle primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObstacleSpec", into = "ObstacleSpec")]
pub enum Obstacle {
    Disk(Ball),
    Sphere(Ball),
    Polygon(ConvexPolygon),
    Spline(ClosedSpline),
    Implicit(ImplicitObstacle),
}

/// Serialized form of an [`Obstacle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    Spline {
        points: Vec<[f64; 2]>,
        #[serde(
            default = "default_samples",
            skip_serializing_if = "is_default_samples"
        )]
        samples: usize,
    },
    Implicit {
        shape: ImplicitShape,
        #[serde(default, skip_serializing_if = "GradientMode::is_analytic")]
        gradient: GradientMode,
    },
}

fn default_samples() -> usize {
    DEFAULT_SPLINE_SAMPLES
}

fn is_default_samples(n: &usize) -> bool {
    *n == DEFAULT_SPLINE_SAMPLES
}

impl TryFrom<ObstacleSpec> for Obstacle {
    type Error = GeometryError;

    fn try_from(spec: ObstacleSpec) -> Result<Self, Self::Error> {
        match spec {
            ObstacleSpec::Disk { center, radius } => Obstacle::disk(center, radius),
            ObstacleSpec::Sphere { center, radius } => Obstacle::sphere(center, radius),
            ObstacleSpec::Polygon { vertices } => {
                Ok(Obstacle::Polygon(ConvexPolygon::new(&vertices)?))
            }
            ObstacleSpec::Spline { points, samples } => Ok(Obstacle::Spline(
                ClosedSpline::with_samples(&points, samples)?,
            )),
            ObstacleSpec::Implicit { shape, gradient } => {
                Ok(Obstacle::Implicit(ImplicitObstacle::new(shape, gradient)?))
            }
        }
    }
}

impl From<Obstacle> for ObstacleSpec {
    fn from(ob: Obstacle) -> Self {
        match ob {
            Obstacle::Disk(b) => ObstacleSpec::Disk {
                center: [b.center[0], b.center[1]],
                radius: b.radius,
            },
            Obstacle::Sphere(b) => ObstacleSpec::Sphere {
                center: [b.center[0], b.center[1], b.center[2]],
                radius: b.radius,
            },
            Obstacle::Polygon(p) => ObstacleSpec::Polygon {
                vertices: p.input_vertices().to_vec(),
            },
            Obstacle::Spline(s) => ObstacleSpec::Spline {
                points: s.input_points().to_vec(),
                samples: s.sample_count(),
            },
            Obstacle::Implicit(i) => ObstacleSpec::Implicit {
                shape: i.shape().clone(),
                gradient: i.gradient_mode(),
            },
        }
    }
}

impl Obstacle {
    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self, GeometryError> {
        Ok(Obstacle::Disk(Ball::new(&center, radius)?))
    }

    pub fn sphere(center: [f64; 3], radius: f64) -> Result<Self, GeometryError> {
        Ok(Obstacle::Sphere(Ball::new(&center, radius)?))
    }

    pub fn polygon(vertices: &[[f64; 2]]) -> Result<Self, GeometryError> {
        Ok(Obstacle::Polygon(ConvexPolygon::new(vertices)?))
    }

    pub fn spline(points: &[[f64; 2]]) -> Result<Self, GeometryError> {
        Ok(Obstacle::Spline(ClosedSpline::new(points)?))
    }

    pub fn implicit(shape: ImplicitShape, gradient: GradientMode) -> Result<Self, GeometryError> {
        Ok(Obstacle::Implicit(ImplicitObstacle::new(shape, gradient)?))
    }

    pub fn dimension(&self) -> usize {
        match self {
            Obstacle::Disk(_) | Obstacle::Polygon(_) | Obstacle::Spline(_) => 2,
            Obstacle::Sphere(_) => 3,
            Obstacle::Implicit(i) => i.dimension(),
        }
    }

    /// True for primitives whose reach can be computed in closed form.
    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            Obstacle::Disk(_) | Obstacle::Sphere(_) | Obstacle::Polygon(_)
        )
    }

    pub(crate) fn has_analytic_hessian(&self) -> bool {
        self.is_analytic()
    }

    /// Center and radius of a sphere enclosing the obstacle, if bounded.
    pub fn bounding_sphere(&self) -> Option<(Vector, f64)> {
        match self {
            Obstacle::Disk(b) | Obstacle::Sphere(b) => Some((b.center.clone(), b.radius)),
            Obstacle::Polygon(p) => {
                let (c, r) = p.bounding_circle();
                Some((Vector::from_column_slice(c.as_slice()), r))
            }
            Obstacle::Spline(s) => {
                let (c, r) = s.bounding_circle();
                Some((Vector::from_column_slice(c.as_slice()), r))
            }
            Obstacle::Implicit(i) => i.bounding_sphere(),
        }
    }

    /// Lower bound on the distance from `x` to this obstacle.
    pub(crate) fn lower_bound(&self, x: &Vector) -> f64 {
        match self {
            Obstacle::Disk(b) | Obstacle::Sphere(b) => (x - &b.center).norm() - b.radius,
            Obstacle::Polygon(p) => {
                let (c, r) = p.bounding_circle();
                (Vector2::new(x[0], x[1]) - c).norm() - r
            }
            Obstacle::Spline(s) => {
                let (c, r) = s.bounding_circle();
                (Vector2::new(x[0], x[1]) - c).norm() - r
            }
            Obstacle::Implicit(i) => match i.bounding_sphere() {
                Some((c, r)) => (x - c).norm() - r,
                None => f64::NEG_INFINITY,
            },
        }
    }

    /// Closest boundary point; `None` if `x` is inside or on the obstacle.
    pub(crate) fn closest(&self, x: &Vector) -> Option<Hit> {
        match self {
            Obstacle::Disk(b) | Obstacle::Sphere(b) => b.closest(x),
            Obstacle::Polygon(p) => p.closest(x),
            Obstacle::Spline(s) => s.closest(x),
            Obstacle::Implicit(i) => i.closest(x),
        }
    }

    /// Distance from `x`, or `None` when `x` is inside.
    pub fn distance(&self, x: &Vector) -> Option<f64> {
        self.closest(x).map(|h| h.distance)
    }

    /// Hessian of this obstacle's distance function at `x`.
    pub fn hessian(&self, x: &Vector) -> Result<Matrix, GeometryError> {
        match self {
            Obstacle::Disk(b) | Obstacle::Sphere(b) => {
                b.closest(x)
                    .ok_or(GeometryError::InsideObstacle { index: 0 })?;
                Ok(b.hessian(x))
            }
            Obstacle::Polygon(p) => p.hessian(x),
            Obstacle::Spline(_) | Obstacle::Implicit(_) => self.fd_hessian(x),
        }
    }

    /// Central differences of the unit normal, step `h = 1e-5 * max(1, |x|)`.
    fn fd_hessian(&self, x: &Vector) -> Result<Matrix, GeometryError> {
        let n = x.len();
        let h = fd_step(x);
        let mut hess = Matrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let np = self
                .closest(&xp)
                .ok_or(GeometryError::NonSmoothPoint)?
                .normal;
            let nm = self
                .closest(&xm)
                .ok_or(GeometryError::NonSmoothPoint)?
                .normal;
            hess.set_column(j, &((np - nm) / (2.0 * h)));
        }
        Ok((&hess + hess.transpose()) * 0.5)
    }

    /// Cheap rejection test against the bounding sphere.
    pub(crate) fn ray_may_hit(&self, o: &Vector, dir: &Vector, max: f64) -> bool {
        match self.bounding_sphere() {
            None => true,
            Some((c, r)) => {
                let oc = &c - o;
                let along = oc.dot(dir);
                let perp2 = oc.norm_squared() - along * along;
                perp2 <= r * r && along + r >= 0.0 && along - r <= max
            }
        }
    }

    pub fn raycast(&self, o: &Vector, dir: &Vector, max: f64) -> Option<f64> {
        match self {
            Obstacle::Disk(b) | Obstacle::Sphere(b) => {
                Ball::raycast(&b.center, b.radius, o, dir, max)
            }
            Obstacle::Polygon(p) => p.raycast(o, dir, max),
            Obstacle::Spline(s) => s.raycast(o, dir, max),
            Obstacle::Implicit(i) => i.raycast(o, dir, max),
        }
    }

    /// Length of the periodic boundary parameter domain (2D, non-implicit).
    pub(crate) fn boundary_period(&self) -> Option<f64> {
        match self {
            Obstacle::Disk(_) => Some(1.0),
            Obstacle::Polygon(p) => Some(p.boundary_period()),
            Obstacle::Spline(s) => Some(s.segment_count() as f64),
            _ => None,
        }
    }

    /// Boundary point and outward unit normal at parameter `t`.
    pub(crate) fn boundary_point(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        match self {
            Obstacle::Disk(b) => {
                let a = std::f64::consts::TAU * t;
                let n = Vector2::new(a.cos(), a.sin());
                (Vector2::new(b.center[0], b.center[1]) + n * b.radius, n)
            }
            Obstacle::Polygon(p) => p.boundary_point(t),
            Obstacle::Spline(s) => s.boundary_point(t),
            _ => unreachable!("boundary_point on an obstacle without a 2D parametrization"),
        }
    }
}
