//! Level-set obstacles `{x : f(x) <= 0}`.
//!
//! Two shape families are supported: quadrics `f(x) = x^T A x + b^T x + c`
//! (ellipses, ellipsoids, hyperboloids, ...) and tori around the z axis.
//! With [`GradientMode::Analytic`] the closest point is computed with a
//! shape-specific solver; [`GradientMode::Numeric`] uses a generic projection
//! driven only by evaluations of `f` and finite-difference derivatives.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::obstacle::Hit;
use super::{GeometryError, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImplicitShape {
    /// `f(x) = x^T A x + b^T x + c` with symmetric `A`.
    Quadric {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        linear: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    /// Ring torus around the z axis through `center`.
    Torus {
        center: [f64; 3],
        major: f64,
        minor: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    Numeric,
}

impl GradientMode {
    pub fn is_analytic(&self) -> bool {
        *self == GradientMode::Analytic
    }
}

#[derive(Debug, Clone, PartialEq)]
struct QuadricData {
    a: Matrix,
    b: Vector,
    c: f64,
    /// Eigenbasis of `A` (columns) and its eigenvalues.
    basis: Matrix,
    eig: Vector,
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Quadric(QuadricData),
    Torus {
        center: Vector,
        major: f64,
        minor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitObstacle {
    shape: ImplicitShape,
    gradient: GradientMode,
    form: Form,
    bound: Option<(Vector, f64)>,
}

const PROJECTION_TOL: f64 = 1e-14;

impl ImplicitObstacle {
    pub fn new(shape: ImplicitShape, gradient: GradientMode) -> Result<Self, GeometryError> {
        let (form, bound) = match &shape {
            ImplicitShape::Quadric {
                matrix,
                linear,
                constant,
            } => {
                let n = matrix.len();
                if n != 2 && n != 3 || matrix.iter().any(|row| row.len() != n) {
                    return Err(GeometryError::InvalidObstacle(
                        "quadric matrix must be 2x2 or 3x3".into(),
                    ));
                }
                let a = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                if (&a - a.transpose()).amax() > 1e-12 {
                    return Err(GeometryError::InvalidObstacle(
                        "quadric matrix must be symmetric".into(),
                    ));
                }
                let b = if linear.is_empty() {
                    DVector::zeros(n)
                } else if linear.len() == n {
                    DVector::from_column_slice(linear)
                } else {
                    return Err(GeometryError::DimensionMismatch {
                        expected: n,
                        got: linear.len(),
                    });
                };
                if a.iter().chain(b.iter()).any(|v| !v.is_finite()) || !constant.is_finite() {
                    return Err(GeometryError::InvalidObstacle(
                        "quadric coefficients must be finite".into(),
                    ));
                }
                let SymmetricEigen {
                    eigenvectors,
                    eigenvalues,
                } = a.clone().symmetric_eigen();
                if eigenvalues.iter().all(|l| l.abs() < 1e-12) {
                    return Err(GeometryError::InvalidObstacle(
                        "quadric matrix must be nonzero".into(),
                    ));
                }
                let bound = if eigenvalues.min() > 0.0 {
                    let chol = a.clone().cholesky().expect("positive eigenvalues");
                    let center = chol.solve(&b) * -0.5;
                    let fmin = constant + 0.5 * b.dot(&center);
                    if !(fmin < 0.0) {
                        return Err(GeometryError::InvalidObstacle(
                            "quadric has an empty interior".into(),
                        ));
                    }
                    Some((center, (-fmin / eigenvalues.min()).sqrt()))
                } else {
                    None
                };
                let data = QuadricData {
                    a,
                    b,
                    c: *constant,
                    basis: eigenvectors,
                    eig: eigenvalues,
                };
                (Form::Quadric(data), bound)
            }
            ImplicitShape::Torus {
                center,
                major,
                minor,
            } => {
                if !(*minor > 0.0 && major > minor) || !major.is_finite() {
                    return Err(GeometryError::InvalidObstacle(
                        "torus needs major > minor > 0".into(),
                    ));
                }
                let c = Vector::from_column_slice(center);
                (
                    Form::Torus {
                        center: c.clone(),
                        major: *major,
                        minor: *minor,
                    },
                    Some((c, major + minor)),
                )
            }
        };
        Ok(Self {
            shape,
            gradient,
            form,
            bound,
        })
    }

    pub fn shape(&self) -> &ImplicitShape {
        &self.shape
    }

    pub fn gradient_mode(&self) -> GradientMode {
        self.gradient
    }

    pub fn dimension(&self) -> usize {
        match &self.form {
            Form::Quadric(q) => q.b.len(),
            Form::Torus { .. } => 3,
        }
    }

    pub fn bounding_sphere(&self) -> Option<(Vector, f64)> {
        self.bound.clone()
    }

    /// Level-set value `f(x)`, negative inside.
    pub fn value(&self, x: &Vector) -> f64 {
        match &self.form {
            Form::Quadric(q) => (x.transpose() * &q.a * x)[0] + q.b.dot(x) + q.c,
            Form::Torus {
                center,
                major,
                minor,
            } => {
                let r = x - center;
                let rho = (r[0] * r[0] + r[1] * r[1]).sqrt();
                (rho - major).powi(2) + r[2] * r[2] - minor * minor
            }
        }
    }

    fn gradient_at(&self, x: &Vector) -> Vector {
        match (self.gradient, &self.form) {
            (GradientMode::Analytic, Form::Quadric(q)) => &q.a * x * 2.0 + &q.b,
            (GradientMode::Analytic, Form::Torus { center, major, .. }) => {
                let r = x - center;
                let rho = (r[0] * r[0] + r[1] * r[1]).sqrt();
                let k = if rho > 0.0 {
                    2.0 * (rho - major) / rho
                } else {
                    0.0
                };
                Vector::from_column_slice(&[k * r[0], k * r[1], 2.0 * r[2]])
            }
            (GradientMode::Numeric, _) => {
                let h = 1e-6 * x.norm().max(1.0);
                Vector::from_fn(x.len(), |j, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    (self.value(&xp) - self.value(&xm)) / (2.0 * h)
                })
            }
        }
    }

    fn value_hessian(&self, x: &Vector) -> Matrix {
        if let (GradientMode::Analytic, Form::Quadric(q)) = (self.gradient, &self.form) {
            return &q.a * 2.0;
        }
        let n = x.len();
        let h = 1e-5 * x.norm().max(1.0);
        let mut hess = Matrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            hess.set_column(
                j,
                &((self.gradient_at(&xp) - self.gradient_at(&xm)) / (2.0 * h)),
            );
        }
        (&hess + hess.transpose()) * 0.5
    }

    pub(crate) fn closest(&self, x: &Vector) -> Option<Hit> {
        if !(self.value(x) > 0.0) {
            return None;
        }
        let nearest = match (self.gradient, &self.form) {
            (GradientMode::Analytic, Form::Quadric(q)) => {
                quadric_projection(q, x).unwrap_or_else(|| self.generic_projection(x))
            }
            (
                GradientMode::Analytic,
                Form::Torus {
                    center,
                    major,
                    minor,
                },
            ) => torus_projection(center, *major, *minor, x),
            (GradientMode::Numeric, _) => self.generic_projection(x),
        };
        Hit::from_points(x, nearest)
    }

    /// Newton steps along the gradient until `f(p) = 0`.
    fn drop_to_surface(&self, mut p: Vector) -> Vector {
        for _ in 0..100 {
            let f = self.value(&p);
            let g = self.gradient_at(&p);
            let g2 = g.norm_squared();
            if g2 == 0.0 {
                break;
            }
            let step = &g * (f / g2);
            p -= &step;
            if step.norm() < PROJECTION_TOL * p.norm().max(1.0) {
                break;
            }
        }
        p
    }

    /// Closest point using only `f`: alternate tangent-plane projection and
    /// surface re-projection, then polish with Newton on the Lagrange system
    /// `p - x + lambda grad f(p) = 0, f(p) = 0`.
    fn generic_projection(&self, x: &Vector) -> Vector {
        let n = x.len();
        let mut p = self.drop_to_surface(x.clone());
        for _ in 0..500 {
            let g = self.gradient_at(&p);
            let nrm = &g / g.norm();
            let off = x - &p;
            let tangent = &off - &nrm * nrm.dot(&off);
            let q = self.drop_to_surface(&p + &tangent);
            let moved = (&q - &p).norm();
            p = q;
            if moved < 1e-7 * x.norm().max(1.0) {
                break;
            }
        }
        let g = self.gradient_at(&p);
        let mut lambda = (x - &p).dot(&g) / g.norm_squared();
        for _ in 0..20 {
            let g = self.gradient_at(&p);
            let h = self.value_hessian(&p);
            let mut jac = Matrix::zeros(n + 1, n + 1);
            let top = Matrix::identity(n, n) + &h * lambda;
            jac.view_mut((0, 0), (n, n)).copy_from(&top);
            jac.view_mut((0, n), (n, 1)).copy_from(&g);
            jac.view_mut((n, 0), (1, n)).copy_from(&g.transpose());
            let mut rhs = Vector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(&p - x + &g * lambda));
            rhs[n] = self.value(&p);
            let Some(delta) = jac.lu().solve(&rhs) else {
                break;
            };
            p -= delta.rows(0, n);
            lambda -= delta[n];
            if delta.norm() < PROJECTION_TOL * x.norm().max(1.0) {
                break;
            }
        }
        p
    }

    /// Sphere tracing: advance by the current distance until within 1e-9.
    pub(crate) fn raycast(&self, o: &Vector, dir: &Vector, max: f64) -> Option<f64> {
        let mut t = 0.0;
        for _ in 0..10_000 {
            let p = o + dir * t;
            let Some(hit) = self.closest(&p) else {
                return (t > 0.0).then_some(t);
            };
            if hit.distance < 1e-9 {
                return (t > 0.0 && t <= max).then_some(t + hit.distance);
            }
            t += hit.distance;
            if t > max {
                return None;
            }
            if let Some((c, r)) = &self.bound {
                let rel = o + dir * t - c;
                if rel.norm() > *r && rel.dot(dir) > 0.0 {
                    return None;
                }
            }
        }
        None
    }
}

/// Exact closest point on a quadric.
///
/// The stationarity condition gives `p(lambda) = (I + 2 lambda A)^-1 (x - lambda b)`
/// and `g(lambda) = f(p(lambda))` is strictly decreasing while `I + 2 lambda A`
/// stays positive definite, which is where the global minimizer lives. The
/// root is bracketed on that interval and found by safeguarded Newton.
fn quadric_projection(q: &QuadricData, x: &Vector) -> Option<Vector> {
    let xt = q.basis.transpose() * x;
    let bt = q.basis.transpose() * &q.b;
    let eig = &q.eig;
    let n = xt.len();
    let point = |lambda: f64| {
        Vector::from_fn(n, |i, _| {
            (xt[i] - lambda * bt[i]) / (1.0 + 2.0 * lambda * eig[i])
        })
    };
    let g = |p: &Vector| {
        (0..n)
            .map(|i| eig[i] * p[i] * p[i] + bt[i] * p[i])
            .sum::<f64>()
            + q.c
    };
    let dg = |lambda: f64, p: &Vector| {
        -(0..n)
            .map(|i| (2.0 * eig[i] * p[i] + bt[i]).powi(2) / (1.0 + 2.0 * lambda * eig[i]))
            .sum::<f64>()
    };

    let a_min = eig.min();
    let pole = if a_min < 0.0 {
        -0.5 / a_min
    } else {
        f64::INFINITY
    };
    let mut lo = 0.0;
    let mut hi = if pole.is_finite() { pole } else { 1.0 };
    if pole.is_infinite() {
        let mut k = 0;
        while g(&point(hi)) >= 0.0 {
            lo = hi;
            hi *= 2.0;
            k += 1;
            if k > 200 {
                return None;
            }
        }
    } else {
        // Values near the pole diverge to -inf unless x sits on a symmetry plane.
        let probe = pole * (1.0 - 1e-12);
        if g(&point(probe)) >= 0.0 {
            return None;
        }
    }

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..200 {
        let p = point(lambda);
        let val = g(&p);
        if val == 0.0 {
            break;
        }
        if val > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - val / dg(lambda, &p);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - lambda).abs() <= 1e-16 * lambda.abs().max(1e-300) || hi - lo <= 1e-16 * hi {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Some(&q.basis * point(lambda))
}

fn torus_projection(center: &Vector, major: f64, minor: f64, x: &Vector) -> Vector {
    let r = x - center;
    let rho = (r[0] * r[0] + r[1] * r[1]).sqrt();
    let (cx, cy) = if rho > 0.0 {
        (r[0] / rho, r[1] / rho)
    } else {
        (1.0, 0.0)
    };
    let ring = center + Vector::from_column_slice(&[major * cx, major * cy, 0.0]);
    let diff = x - &ring;
    &ring + diff.normalize() * minor
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn ellipse() -> ImplicitShape {
        // (x/2)^2 + y^2 <= 1 shifted to center (1, -1)
        ImplicitShape::Quadric {
            matrix: vec![vec![0.25, 0.0], vec![0.0, 1.0]],
            linear: vec![-0.5, 2.0],
            constant: 0.25 + 1.0 - 1.0,
        }
    }

    #[test]
    fn circle_quadric_matches_disk() {
        let shape = ImplicitShape::Quadric {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            linear: vec![],
            constant: -1.0,
        };
        for mode in [GradientMode::Analytic, GradientMode::Numeric] {
            let ob = ImplicitObstacle::new(shape.clone(), mode).unwrap();
            let hit = ob.closest(&dvector![3.0, 4.0]).unwrap();
            assert!(
                (hit.distance - 4.0).abs() < 1e-12,
                "{mode:?}: {}",
                hit.distance
            );
            assert!((hit.normal - dvector![0.6, 0.8]).norm() < 1e-10);
        }
    }

    #[test]
    fn analytic_and_numeric_agree_on_ellipse() {
        let a = ImplicitObstacle::new(ellipse(), GradientMode::Analytic).unwrap();
        let n = ImplicitObstacle::new(ellipse(), GradientMode::Numeric).unwrap();
        for x in [
            dvector![4.0, 0.5],
            dvector![1.0, 1.5],
            dvector![-2.0, -3.0],
            dvector![3.1, -1.0],
        ] {
            let ha = a.closest(&x).unwrap();
            let hn = n.closest(&x).unwrap();
            assert!(
                (ha.distance - hn.distance).abs() < 1e-9,
                "{} vs {}",
                ha.distance,
                hn.distance
            );
            assert!(a.value(&ha.nearest).abs() < 1e-12);
            // normal is parallel to the level-set gradient at the nearest point
            let g = a.gradient_at(&ha.nearest).normalize();
            assert!((g - &ha.normal).norm() < 1e-9);
        }
        let (c, r) = a.bounding_sphere().unwrap();
        assert!((c - dvector![1.0, -1.0]).norm() < 1e-12);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hyperboloid_is_unbounded_and_exact_on_axis() {
        // x^2 + y^2 - z^2 <= 1
        let shape = ImplicitShape::Quadric {
            matrix: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, -1.0],
            ],
            linear: vec![],
            constant: -1.0,
        };
        let ob = ImplicitObstacle::new(shape, GradientMode::Analytic).unwrap();
        assert!(ob.bounding_sphere().is_none());
        let hit = ob.closest(&dvector![3.0, 0.0, 0.0]).unwrap();
        assert!((hit.distance - 2.0).abs() < 1e-12);
        let off = ob.closest(&dvector![3.0, 0.5, 2.0]).unwrap();
        let numeric = ImplicitObstacle::new(ob.shape().clone(), GradientMode::Numeric).unwrap();
        assert!(
            (numeric.closest(&dvector![3.0, 0.5, 2.0]).unwrap().distance - off.distance).abs()
                < 1e-9
        );
    }

    #[test]
    fn torus_distance() {
        let shape = ImplicitShape::Torus {
            center: [0.0; 3],
            major: 2.0,
            minor: 0.5,
        };
        let ob = ImplicitObstacle::new(shape.clone(), GradientMode::Analytic).unwrap();
        let hit = ob.closest(&dvector![0.5, 0.0, 0.0]).unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-14);
        assert!((hit.normal - dvector![-1.0, 0.0, 0.0]).norm() < 1e-14);
        assert!(ob.closest(&dvector![2.0, 0.0, 0.2]).is_none());
        let numeric = ImplicitObstacle::new(shape, GradientMode::Numeric).unwrap();
        let x = dvector![1.0, 1.5, 1.2];
        let d = (((1.0f64 + 2.25).sqrt() - 2.0).powi(2) + 1.44).sqrt() - 0.5;
        assert!((ob.closest(&x).unwrap().distance - d).abs() < 1e-14);
        assert!((numeric.closest(&x).unwrap().distance - d).abs() < 1e-9);
    }

    #[test]
    fn sphere_traced_raycast() {
        let ob = ImplicitObstacle::new(
            ImplicitShape::Torus {
                center: [0.0; 3],
                major: 2.0,
                minor: 0.5,
            },
            GradientMode::Analytic,
        )
        .unwrap();
        let t = ob
            .raycast(&dvector![0.0, 0.0, 0.0], &dvector![1.0, 0.0, 0.0], 5.0)
            .unwrap();
        assert!((t - 1.5).abs() < 1e-6);
        assert_eq!(
            ob.raycast(&dvector![0.0, 0.0, 0.0], &dvector![0.0, 0.0, 1.0], 5.0),
            None
        );
    }

    #[test]
    fn rejects_invalid_shapes() {
        let empty = ImplicitShape::Quadric {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            linear: vec![],
            constant: 1.0,
        };
        assert!(ImplicitObstacle::new(empty, GradientMode::Analytic).is_err());
        let asym = ImplicitShape::Quadric {
            matrix: vec![vec![1.0, 0.5], vec![0.0, 1.0]],
            linear: vec![],
            constant: -1.0,
        };
        assert!(ImplicitObstacle::new(asym, GradientMode::Analytic).is_err());
        let torus = ImplicitShape::Torus {
            center: [0.0; 3],
            major: 0.4,
            minor: 0.5,
        };
        assert!(ImplicitObstacle::new(torus, GradientMode::Analytic).is_err());
    }
}
