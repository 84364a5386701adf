//! Undesired equilibria on the dilated obstacle boundary and their stability.
//!
//! An undesired equilibrium is a point `x` with margin zero where
//! `grad V(x) = lambda eta(x)` for some `lambda > 0`. Near such a point the
//! saturated dynamics are `x' = -(I - eta eta^T) grad V`; restricted to the
//! tangent space their linearization is `lambda H_d - H_V`. A positive
//! eigenvalue makes the equilibrium unstable, and nonzero eigenvalues make it
//! isolated.

use nalgebra::{SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Potential;
use crate::geometry::{GeometryError, Matrix, Obstacle, RobotParams, Vector, World};

/// Eigenvalues within `ZETA` of zero are treated as undecided.
pub const ZETA: f64 = 1e-8;

/// Accepted `|margin|` and tangential-gradient residual for located equilibria.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

/// Multi-start seeds per obstacle for the generic search.
pub const SEARCH_SEEDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("world has no obstacle boundary")]
    NoBoundary,
    #[error("potential gradient vanishes at this point")]
    DegenerateGradient,
    #[error("direction is not tangent (|v . n| = {0})")]
    NotTangent(f64),
    #[error("tangent spectrum has an eigenvalue within tolerance of zero: {spectrum:?}")]
    IndefiniteResult { spectrum: Vec<f64> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub isolated: bool,
    pub unstable: bool,
    /// Eigenvalues of the tangent-restricted `lambda H_d - H_V`, ascending.
    pub spectrum: Vec<f64>,
    /// Unit eigenvectors in ambient coordinates, same order as `spectrum`.
    pub directions: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub location: Vec<f64>,
    pub lambda: f64,
    pub spectrum: Vec<f64>,
    pub isolated: bool,
    pub unstable: bool,
    /// Some eigenvalue lies within `ZETA` of zero, or the distance is not
    /// twice differentiable there; the verdicts are not decisive.
    pub indefinite: bool,
    pub residual: f64,
    pub obstacle: usize,
    /// Tangent direction of the largest eigenvalue when it is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_direction: Option<Vec<f64>>,
}

/// Orthonormal basis of the plane orthogonal to the unit vector `n`, as columns.
pub fn tangent_basis(n: &Vector) -> Matrix {
    let dim = n.len();
    if dim == 2 {
        return Matrix::from_column_slice(2, 1, &[-n[1], n[0]]);
    }
    let mut cols: Vec<Vector> = Vec::with_capacity(dim - 1);
    let mut axes: Vec<usize> = (0..dim).collect();
    axes.sort_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()));
    for &a in &axes {
        if cols.len() == dim - 1 {
            break;
        }
        let mut v = Vector::zeros(dim);
        v[a] = 1.0;
        v -= n * n[a];
        for c in &cols {
            let p = c.dot(&v);
            v -= c * p;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
    }
    Matrix::from_columns(&cols)
}

fn check_tangent(n: &Vector, v: &Vector) -> Result<(), AnalysisError> {
    let dot = n.dot(v).abs();
    if dot > 1e-9 * v.norm().max(1.0) {
        return Err(AnalysisError::NotTangent(dot));
    }
    Ok(())
}

/// Normal curvature of the obstacle boundary, `v^T H_d(x) v`.
pub fn curvature_obstacle(world: &World, x: &Vector, v: &Vector) -> Result<f64, AnalysisError> {
    let q = world.distance_to_obstacles(x)?;
    check_tangent(&q.normal, v)?;
    let h = world.distance_hessian(x)?;
    Ok(v.dot(&(&h * v)))
}

/// Normal curvature of the level set of `V`, `v^T H_V v / |grad V|`.
pub fn curvature_levelset(
    potential: &dyn Potential,
    x: &Vector,
    v: &Vector,
) -> Result<f64, AnalysisError> {
    let g = potential.gradient(x);
    let gn = g.norm();
    if gn < 1e-12 {
        return Err(AnalysisError::DegenerateGradient);
    }
    check_tangent(&(&g / gn), v)?;
    Ok(v.dot(&(potential.hessian(x) * v)) / gn)
}

fn jacobian_from(g: &Vector, eta: &Vector, hd: &Matrix, hv: &Matrix) -> Matrix {
    let row = g.transpose() * hd + eta.transpose() * hv;
    -hv + hd * eta.dot(g) + eta * row
}

/// Jacobian of the saturated field `-(I - eta eta^T) grad V` at `x`:
/// `-H_V + (eta . grad V) H_d + eta (grad V^T H_d + eta^T H_V)`.
pub fn jacobian_at(
    world: &World,
    potential: &dyn Potential,
    x: &Vector,
) -> Result<Matrix, AnalysisError> {
    let q = world.distance_to_obstacles(x)?;
    let hd = world.distance_hessian(x)?;
    Ok(jacobian_from(
        &potential.gradient(x),
        &q.normal,
        &hd,
        &potential.hessian(x),
    ))
}

fn classify_parts(eta: &Vector, lambda: f64, hd: &Matrix, hv: &Matrix) -> Classification {
    let basis = tangent_basis(eta);
    let m = hd * lambda - hv;
    let restricted = basis.transpose() * &m * &basis;
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = restricted.symmetric_eigen();
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    let directions = order
        .iter()
        .map(|&i| (&basis * eigenvectors.column(i)).normalize())
        .collect();
    let max = spectrum.last().copied().unwrap_or(f64::NEG_INFINITY);
    let min_abs = spectrum
        .iter()
        .map(|e| e.abs())
        .fold(f64::INFINITY, f64::min);
    Classification {
        isolated: min_abs > ZETA,
        unstable: max > ZETA,
        spectrum,
        directions,
    }
}

/// Eigen-analysis of `lambda H_d - H_V` on the tangent space at `x`.
///
/// Fails with `IndefiniteResult` when an eigenvalue is within `ZETA` of zero.
pub fn classify_equilibrium(
    world: &World,
    potential: &dyn Potential,
    x: &Vector,
    lambda: f64,
) -> Result<Classification, AnalysisError> {
    let q = world.distance_to_obstacles(x)?;
    let hd = world.distance_hessian(x)?;
    let c = classify_parts(&q.normal, lambda, &hd, &potential.hessian(x));
    if c.spectrum.iter().any(|e| e.abs() <= ZETA) {
        return Err(AnalysisError::IndefiniteResult {
            spectrum: c.spectrum,
        });
    }
    Ok(c)
}

/// Locate and classify every undesired equilibrium.
///
/// Obstacles with a periodic 2D boundary parametrization (disks, polygons,
/// splines) are scanned densely for sign changes of `grad V x eta` along the
/// dilated boundary and each bracket is bisected to machine precision. Other
/// obstacles use a damped Gauss-Newton search from [`SEARCH_SEEDS`]
/// deterministic seeds on the residual `[(I - eta eta^T) grad V; d - (R + eps)]`.
pub fn find_equilibria(
    world: &World,
    potential: &dyn Potential,
    robot: &RobotParams,
) -> Result<Vec<EquilibriumReport>, AnalysisError> {
    if world.is_empty() {
        return Err(AnalysisError::NoBoundary);
    }
    let delta = robot.clearance();
    let mut found: Vec<(Vector, usize)> = Vec::new();
    for (index, ob) in world.obstacles().iter().enumerate() {
        let candidates = if world.dimension() == 2 && ob.boundary_period().is_some() {
            scan_boundary(ob, potential, delta)
        } else {
            search_boundary(ob, potential, delta)
        };
        for x in candidates {
            if !found.iter().any(|(y, _)| (y - &x).norm() < 1e-6) {
                found.push((x, index));
            }
        }
    }

    let mut reports = Vec::new();
    for (x, index) in found {
        let Ok(q) = world.distance_to_obstacles(&x) else {
            continue;
        };
        let margin = q.value - delta;
        if q.obstacle != index || margin.abs() > EQUILIBRIUM_TOL {
            continue;
        }
        let g = potential.gradient(&x);
        let lambda = g.dot(&q.normal);
        let residual = (&g - &q.normal * lambda).norm();
        if !(lambda > 0.0) || residual > EQUILIBRIUM_TOL * g.norm().max(1.0) {
            continue;
        }
        let report = match world.distance_hessian(&x) {
            Ok(hd) => {
                let c = classify_parts(&q.normal, lambda, &hd, &potential.hessian(&x));
                let indefinite = c.spectrum.iter().any(|e| e.abs() <= ZETA);
                let unstable_direction = c.unstable.then(|| {
                    c.directions
                        .last()
                        .expect("nonempty tangent space")
                        .iter()
                        .copied()
                        .collect()
                });
                EquilibriumReport {
                    location: x.iter().copied().collect(),
                    lambda,
                    spectrum: c.spectrum,
                    isolated: c.isolated,
                    unstable: c.unstable,
                    indefinite,
                    residual,
                    obstacle: index,
                    unstable_direction,
                }
            }
            Err(GeometryError::NonSmoothPoint) => EquilibriumReport {
                location: x.iter().copied().collect(),
                lambda,
                spectrum: Vec::new(),
                isolated: false,
                unstable: false,
                indefinite: true,
                residual,
                obstacle: index,
                unstable_direction: None,
            },
            Err(e) => return Err(e.into()),
        };
        reports.push(report);
    }
    Ok(reports)
}

fn to_vector(p: Vector2<f64>) -> Vector {
    Vector::from_column_slice(p.as_slice())
}

/// Roots of `cross(grad V(B(t)), n(t))` on `B(t) = p(t) + delta n(t)`.
fn scan_boundary(ob: &Obstacle, potential: &dyn Potential, delta: f64) -> Vec<Vector> {
    let period = ob.boundary_period().expect("parametrized boundary");
    let samples = 4096usize.max((256.0 * period) as usize);
    let f = |t: f64| {
        let (p, n) = ob.boundary_point(t);
        let x = to_vector(p + n * delta);
        let g = potential.gradient(&x);
        (g[0] * n.y - g[1] * n.x, g[0] * n.x + g[1] * n.y)
    };
    let at = |k: usize| period * k as f64 / samples as f64;
    let mut roots = Vec::new();
    let mut prev = f(at(0));
    for k in 0..samples {
        let (t0, t1) = (at(k), at(k + 1));
        let next = f(t1);
        let (c0, c1) = (prev.0, next.0);
        if c0 == 0.0 {
            if prev.1 > 0.0 {
                roots.push(t0);
            }
        } else if c0 * c1 < 0.0 && (prev.1 > 0.0 || next.1 > 0.0) {
            let (mut lo, mut hi) = (t0, t1);
            let neg_lo = c0 < 0.0;
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let cm = f(mid).0;
                if cm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (cm < 0.0) == neg_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = if f(lo).0.abs() <= f(hi).0.abs() {
                lo
            } else {
                hi
            };
            roots.push(t);
        }
        prev = next;
    }
    roots
        .into_iter()
        .map(|t| {
            let (p, n) = ob.boundary_point(t);
            to_vector(p + n * delta)
        })
        .collect()
}

/// Deterministic low-discrepancy directions: golden-angle circle or Fibonacci sphere.
fn seed_directions(dim: usize, count: usize) -> Vec<Vector> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            if dim == 2 {
                let a = golden * i as f64;
                Vector::from_column_slice(&[a.cos(), a.sin()])
            } else {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                Vector::from_column_slice(&[r * a.cos(), r * a.sin(), z])
            }
        })
        .collect()
}

struct Probe {
    residual: Vector,
    jacobian: Matrix,
}

/// `scale` multiplies the tangential block so the iteration does not depend on
/// the magnitude of the potential.
fn probe(
    ob: &Obstacle,
    potential: &dyn Potential,
    delta: f64,
    scale: f64,
    x: &Vector,
) -> Option<Probe> {
    let hit = ob.closest(x)?;
    let hd = ob.hessian(x).ok()?;
    let n = x.len();
    let g = potential.gradient(x);
    let eta = &hit.normal;
    let tangential = &g - eta * eta.dot(&g);
    let mut residual = Vector::zeros(n + 1);
    residual.rows_mut(0, n).copy_from(&(tangential * scale));
    residual[n] = hit.distance - delta;
    let mut jacobian = Matrix::zeros(n + 1, n);
    let top = -jacobian_from(&g, eta, &hd, &potential.hessian(x)) * scale;
    jacobian.view_mut((0, 0), (n, n)).copy_from(&top);
    jacobian
        .view_mut((n, 0), (1, n))
        .copy_from(&eta.transpose());
    Some(Probe { residual, jacobian })
}

/// Multi-start damped Gauss-Newton on the equilibrium residual.
fn search_boundary(ob: &Obstacle, potential: &dyn Potential, delta: f64) -> Vec<Vector> {
    let dim = ob.dimension();
    let (center, radius) = match ob.bounding_sphere() {
        Some((c, r)) => (c, r + delta),
        None => {
            let goal = potential.goal().clone();
            let r = ob.distance(&goal).unwrap_or(1.0);
            (goal, 2.0 * r + delta)
        }
    };
    let mut out: Vec<Vector> = Vec::new();
    for dir in seed_directions(dim, SEARCH_SEEDS) {
        let seed = &center + dir * radius;
        let Some(hit) = ob.closest(&seed) else {
            continue;
        };
        let mut x = &hit.nearest + &hit.normal * delta;
        let gn = potential.gradient(&x).norm();
        let scale = if gn > 1e-12 { 1.0 / gn } else { 1.0 };
        let Some(mut cur) = probe(ob, potential, delta, scale, &x) else {
            continue;
        };
        let mut damping = 1e-3;
        for _ in 0..200 {
            let cost = cur.residual.norm_squared();
            if cost < 1e-30 {
                break;
            }
            let jt = cur.jacobian.transpose();
            let normal = &jt * &cur.jacobian;
            let rhs = &jt * &cur.residual;
            let mut accepted = false;
            for _ in 0..30 {
                let scaled = &normal
                    + Matrix::from_diagonal(&normal.diagonal()) * damping
                    + Matrix::identity(dim, dim) * (damping * 1e-12);
                let Some(step) = scaled.lu().solve(&rhs) else {
                    break;
                };
                let trial = &x - &step;
                if let Some(p) = probe(ob, potential, delta, scale, &trial) {
                    if p.residual.norm_squared() < cost {
                        x = trial;
                        cur = p;
                        damping = (damping * 0.3).max(1e-12);
                        accepted = true;
                        break;
                    }
                }
                damping *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        if !out.iter().any(|y| (y - &x).norm() < 1e-6) {
            out.push(x);
        }
    }
    out
}
