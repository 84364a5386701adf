//! Closed interpolating cubic spline obstacles.
//!
//! The boundary is the periodic C² cubic spline through the control points
//! with uniform parametrization, one unit of parameter per segment. Distance
//! queries scan dense boundary samples (pruned per segment by bounding
//! circles) and polish the best sample with Newton's method on the squared
//! distance.

use nalgebra::{DMatrix, DVector, Vector2};

use super::obstacle::Hit;
use super::{GeometryError, Vector};

pub const DEFAULT_SPLINE_SAMPLES: usize = 2048;

const MIN_SAMPLES_PER_SEGMENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cubic {
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
    d: Vector2<f64>,
}

impl Cubic {
    #[inline]
    fn eval(&self, t: f64) -> Vector2<f64> {
        self.a + (self.b + (self.c + self.d * t) * t) * t
    }

    #[inline]
    fn d1(&self, t: f64) -> Vector2<f64> {
        self.b + (self.c * 2.0 + self.d * (3.0 * t)) * t
    }

    #[inline]
    fn d2(&self, t: f64) -> Vector2<f64> {
        self.c * 2.0 + self.d * (6.0 * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedSpline {
    input: Vec<[f64; 2]>,
    sample_count: usize,
    segs: Vec<Cubic>,
    samples: Vec<Vector2<f64>>,
    sample_param: Vec<f64>,
    /// `seg_start[i]..seg_start[i + 1]` indexes the samples of segment `i`.
    seg_start: Vec<usize>,
    seg_bounds: Vec<(Vector2<f64>, f64)>,
    center: Vector2<f64>,
    radius: f64,
}

impl ClosedSpline {
    pub fn new(points: &[[f64; 2]]) -> Result<Self, GeometryError> {
        Self::with_samples(points, DEFAULT_SPLINE_SAMPLES)
    }

    pub fn with_samples(points: &[[f64; 2]], sample_count: usize) -> Result<Self, GeometryError> {
        let m = points.len();
        if m < 4 {
            return Err(GeometryError::InvalidObstacle(format!(
                "spline needs at least 4 control points, got {m}"
            )));
        }
        if sample_count < m * MIN_SAMPLES_PER_SEGMENT {
            return Err(GeometryError::InvalidObstacle(format!(
                "spline needs at least {} samples",
                m * MIN_SAMPLES_PER_SEGMENT
            )));
        }
        let mut pts: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        for i in 0..m {
            if (pts[(i + 1) % m] - pts[i]).norm() == 0.0 {
                return Err(GeometryError::InvalidObstacle(
                    "spline has repeated control points".into(),
                ));
            }
        }
        let area: f64 = (0..m)
            .map(|i| {
                let (p, q) = (pts[i], pts[(i + 1) % m]);
                p.x * q.y - q.x * p.y
            })
            .sum();
        if area == 0.0 {
            return Err(GeometryError::InvalidObstacle(
                "spline control polygon is degenerate".into(),
            ));
        }
        // Internally the boundary always runs counter-clockwise.
        if area < 0.0 {
            pts.reverse();
        }

        let segs = periodic_cubic(&pts);
        let total = segs.iter().map(segment_length).sum::<f64>();

        let mut samples = Vec::with_capacity(sample_count + m);
        let mut sample_param = Vec::with_capacity(sample_count + m);
        let mut seg_start = Vec::with_capacity(m + 1);
        let mut seg_counts = Vec::with_capacity(m);
        for (i, seg) in segs.iter().enumerate() {
            let share = sample_count as f64 * segment_length(seg) / total;
            let n = (share.round() as usize).max(MIN_SAMPLES_PER_SEGMENT);
            seg_start.push(samples.len());
            seg_counts.push(n);
            for j in 0..n {
                let t = j as f64 / n as f64;
                samples.push(seg.eval(t));
                sample_param.push(i as f64 + t);
            }
        }
        seg_start.push(samples.len());

        let mut seg_bounds = Vec::with_capacity(m);
        let mut global_spacing: f64 = 0.0;
        for i in 0..m {
            // Include the first sample of the next segment so the bound covers t = 1.
            let mut pts_i: Vec<Vector2<f64>> = samples[seg_start[i]..seg_start[i + 1]].to_vec();
            pts_i.push(segs[i].eval(1.0));
            let spacing = pts_i
                .windows(2)
                .map(|w| (w[1] - w[0]).norm())
                .fold(0.0, f64::max);
            global_spacing = global_spacing.max(spacing);
            let (c, r) = enclosing_circle(&pts_i);
            seg_bounds.push((c, r + spacing));
        }
        let (center, radius) = enclosing_circle(&samples);

        Ok(Self {
            input: points.to_vec(),
            sample_count,
            segs,
            samples,
            sample_param,
            seg_start,
            seg_bounds,
            center,
            radius: radius + global_spacing,
        })
    }

    pub fn input_points(&self) -> &[[f64; 2]] {
        &self.input
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn segment_count(&self) -> usize {
        self.segs.len()
    }

    pub(crate) fn samples(&self) -> &[Vector2<f64>] {
        &self.samples
    }

    pub(crate) fn bounding_circle(&self) -> (Vector2<f64>, f64) {
        (self.center, self.radius)
    }

    #[inline]
    fn locate(&self, u: f64) -> (&Cubic, f64) {
        let m = self.segs.len() as f64;
        let u = u.rem_euclid(m);
        let i = (u.floor() as usize).min(self.segs.len() - 1);
        (&self.segs[i], u - i as f64)
    }

    pub fn point(&self, u: f64) -> Vector2<f64> {
        let (seg, t) = self.locate(u);
        seg.eval(t)
    }

    /// Point and outward unit normal at global parameter `u`.
    pub(crate) fn boundary_point(&self, u: f64) -> (Vector2<f64>, Vector2<f64>) {
        let (seg, t) = self.locate(u);
        let tan = seg.d1(t);
        (seg.eval(t), Vector2::new(tan.y, -tan.x).normalize())
    }

    /// Global parameter of the closest boundary point to `p`.
    fn closest_param(&self, p: &Vector2<f64>) -> f64 {
        let m = self.segs.len();
        let mut order: Vec<(f64, usize)> = self
            .seg_bounds
            .iter()
            .enumerate()
            .map(|(i, (c, r))| ((p - c).norm() - r, i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best_d2 = f64::INFINITY;
        let mut best_idx = 0;
        for (lb, i) in order {
            if lb > 0.0 && lb * lb > best_d2 {
                break;
            }
            for k in self.seg_start[i]..self.seg_start[i + 1] {
                let d2 = (self.samples[k] - p).norm_squared();
                if d2 < best_d2 {
                    best_d2 = d2;
                    best_idx = k;
                }
            }
        }

        let seg = (self.sample_param[best_idx].floor() as usize).min(m - 1);
        let max_step = 1.0 / (self.seg_start[seg + 1] - self.seg_start[seg]) as f64;
        let mut u = self.sample_param[best_idx];
        for _ in 0..50 {
            let (cubic, t) = self.locate(u);
            let diff = cubic.eval(t) - p;
            let d1 = cubic.d1(t);
            let g = diff.dot(&d1);
            let h = d1.norm_squared() + diff.dot(&cubic.d2(t));
            let step = if h > 0.0 {
                g / h
            } else {
                g / d1.norm_squared()
            };
            let step = step.clamp(-max_step, max_step);
            u -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        u.rem_euclid(m as f64)
    }

    pub(crate) fn closest(&self, x: &Vector) -> Option<Hit> {
        let p = Vector2::new(x[0], x[1]);
        let u = self.closest_param(&p);
        let (q, n) = self.boundary_point(u);
        let diff = p - q;
        if !(diff.dot(&n) > 0.0) {
            return None;
        }
        Hit::from_points(x, Vector::from_column_slice(q.as_slice()))
    }

    /// Analytic ray/segment intersection: the cross product of the ray
    /// direction with `S(t) - o` is a cubic in `t` whose roots in `[0, 1]`
    /// are the crossings.
    pub(crate) fn raycast(&self, o: &Vector, dir: &Vector, max: f64) -> Option<f64> {
        let o = Vector2::new(o[0], o[1]);
        let d = Vector2::new(dir[0], dir[1]);
        let cross = |v: Vector2<f64>| d.x * v.y - d.y * v.x;
        let mut best: Option<f64> = None;
        for (seg, (c, r)) in self.segs.iter().zip(&self.seg_bounds) {
            let limit = best.unwrap_or(max);
            let oc = c - o;
            let along = oc.dot(&d);
            let perp2 = oc.norm_squared() - along * along;
            if perp2 > r * r || along + r < 0.0 || along - r > limit {
                continue;
            }
            let coeffs = [cross(seg.a - o), cross(seg.b), cross(seg.c), cross(seg.d)];
            for t in cubic_roots_unit(coeffs) {
                let lambda = (seg.eval(t) - o).dot(&d);
                if lambda > 0.0 && lambda <= limit && best.is_none_or(|b| lambda < b) {
                    best = Some(lambda);
                }
            }
        }
        best
    }
}

fn periodic_cubic(pts: &[Vector2<f64>]) -> Vec<Cubic> {
    let m = pts.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = 4.0;
        a[(i, (i + 1) % m)] += 1.0;
        a[(i, (i + m - 1) % m)] += 1.0;
    }
    let lu = a.lu();
    let mut second = vec![Vector2::zeros(); m];
    for axis in 0..2 {
        let rhs = DVector::from_iterator(
            m,
            (0..m).map(|i| {
                6.0 * (pts[(i + 1) % m][axis] - 2.0 * pts[i][axis] + pts[(i + m - 1) % m][axis])
            }),
        );
        let sol = lu
            .solve(&rhs)
            .expect("cyclic spline system is diagonally dominant");
        for i in 0..m {
            second[i][axis] = sol[i];
        }
    }
    (0..m)
        .map(|i| {
            let j = (i + 1) % m;
            Cubic {
                a: pts[i],
                b: pts[j] - pts[i] - (second[i] * 2.0 + second[j]) / 6.0,
                c: second[i] / 2.0,
                d: (second[j] - second[i]) / 6.0,
            }
        })
        .collect()
}

fn segment_length(seg: &Cubic) -> f64 {
    // 5-point Gauss-Legendre on |S'(t)|.
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(x, w)| 0.5 * w * seg.d1(0.5 * (x + 1.0)).norm())
        .sum()
}

fn enclosing_circle(pts: &[Vector2<f64>]) -> (Vector2<f64>, f64) {
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let c = (lo + hi) / 2.0;
    let r = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    (c, r)
}

/// Real roots in `[0, 1]` of `c0 + c1 t + c2 t^2 + c3 t^3`.
///
/// The interval is split at the critical points so every piece is monotone,
/// then each bracketed piece is bisected to machine precision.
pub(crate) fn cubic_roots_unit(c: [f64; 4]) -> Vec<f64> {
    let f = |t: f64| c[0] + (c[1] + (c[2] + c[3] * t) * t) * t;
    let mut cuts = vec![0.0];
    // f'(t) = c1 + 2 c2 t + 3 c3 t^2
    let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let mut crit = Vec::with_capacity(2);
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (qb + qb.signum() * sq);
            if q != 0.0 {
                crit.push(q / qa);
                crit.push(qc / q);
            } else {
                crit.push(0.0);
            }
        }
    } else if qb.abs() > 1e-300 {
        crit.push(-qc / qb);
    }
    crit.sort_by(f64::total_cmp);
    cuts.extend(crit.into_iter().filter(|t| *t > 0.0 && *t < 1.0));
    cuts.push(1.0);

    let mut roots = Vec::new();
    for w in cuts.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (mut flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi > 0.0 {
            continue;
        }
        if fhi == 0.0 {
            roots.push(hi);
            continue;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}
