use nalgebra::Vector2;

use super::obstacle::Hit;
use super::{GeometryError, Matrix, Vector, SMOOTHNESS_TOL};

/// Strictly convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    input: Vec<[f64; 2]>,
    verts: Vec<Vector2<f64>>,
    /// Unit edge directions, `tangents[i]` runs from vertex `i` to `i + 1`.
    tangents: Vec<Vector2<f64>>,
    /// Outward unit edge normals.
    normals: Vec<Vector2<f64>>,
    lengths: Vec<f64>,
    /// Exterior angle at each vertex.
    turns: Vec<f64>,
    center: Vector2<f64>,
    radius: f64,
}

enum Region {
    Face,
    Vertex(usize),
}

impl ConvexPolygon {
    pub fn new(vertices: &[[f64; 2]]) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::InvalidObstacle(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        let verts: Vec<Vector2<f64>> = vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect();
        let mut tangents = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        for i in 0..n {
            let e = verts[(i + 1) % n] - verts[i];
            let len = e.norm();
            if !(len > 0.0) {
                return Err(GeometryError::InvalidObstacle(
                    "polygon has repeated vertices".into(),
                ));
            }
            let t = e / len;
            tangents.push(t);
            normals.push(Vector2::new(t.y, -t.x));
            lengths.push(len);
        }
        let mut turns = Vec::with_capacity(n);
        for i in 0..n {
            let prev = tangents[(i + n - 1) % n];
            let next = tangents[i];
            let cross = prev.x * next.y - prev.y * next.x;
            if !(cross > 0.0) {
                return Err(GeometryError::InvalidObstacle(
                    "polygon must be strictly convex with counter-clockwise vertices".into(),
                ));
            }
            turns.push(cross.atan2(prev.dot(&next)));
        }
        let total: f64 = turns.iter().sum();
        if (total - std::f64::consts::TAU).abs() > 1e-9 {
            return Err(GeometryError::InvalidObstacle(
                "polygon is not simple".into(),
            ));
        }
        let center = verts.iter().sum::<Vector2<f64>>() / n as f64;
        let radius = verts
            .iter()
            .map(|v| (v - center).norm())
            .fold(0.0, f64::max);
        Ok(Self {
            input: vertices.to_vec(),
            verts,
            tangents,
            normals,
            lengths,
            turns,
            center,
            radius,
        })
    }

    pub fn input_vertices(&self) -> &[[f64; 2]] {
        &self.input
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.verts
    }

    pub(crate) fn bounding_circle(&self) -> (Vector2<f64>, f64) {
        (self.center, self.radius)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.normals
            .iter()
            .zip(&self.verts)
            .all(|(n, v)| n.dot(&(p - v)) <= 0.0)
    }

    /// Nearest edge index and the clamped arc position along it.
    fn nearest_edge(&self, p: &Vector2<f64>) -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for i in 0..self.verts.len() {
            let s = (p - self.verts[i])
                .dot(&self.tangents[i])
                .clamp(0.0, self.lengths[i]);
            let q = self.verts[i] + self.tangents[i] * s;
            let d = (p - q).norm();
            if d < best.2 {
                best = (i, s, d);
            }
        }
        best
    }

    pub(crate) fn closest(&self, x: &Vector) -> Option<Hit> {
        let p = Vector2::new(x[0], x[1]);
        if self.contains(&p) {
            return None;
        }
        let (i, s, _) = self.nearest_edge(&p);
        let q = self.verts[i] + self.tangents[i] * s;
        Hit::from_points(x, Vector::from_column_slice(q.as_slice()))
    }

    fn region(&self, p: &Vector2<f64>) -> Result<Region, GeometryError> {
        let n = self.verts.len();
        let (i, s, _) = self.nearest_edge(p);
        let vertex = if s <= 0.0 {
            i
        } else if s >= self.lengths[i] {
            (i + 1) % n
        } else {
            if s.min(self.lengths[i] - s) < SMOOTHNESS_TOL {
                return Err(GeometryError::NonSmoothPoint);
            }
            return Ok(Region::Face);
        };
        let rel = p - self.verts[vertex];
        let along_next = rel.dot(&self.tangents[vertex]).abs();
        let along_prev = rel.dot(&self.tangents[(vertex + n - 1) % n]).abs();
        if along_next.min(along_prev) < SMOOTHNESS_TOL {
            return Err(GeometryError::NonSmoothPoint);
        }
        Ok(Region::Vertex(vertex))
    }

    /// Zero on face regions, `(I - n n^T) / |x - v|` on vertex regions.
    pub(crate) fn hessian(&self, x: &Vector) -> Result<Matrix, GeometryError> {
        let p = Vector2::new(x[0], x[1]);
        if self.contains(&p) {
            return Err(GeometryError::InsideObstacle { index: 0 });
        }
        match self.region(&p)? {
            Region::Face => Ok(Matrix::zeros(2, 2)),
            Region::Vertex(v) => {
                let diff = p - self.verts[v];
                let r = diff.norm();
                let nrm = diff / r;
                let h = (nalgebra::Matrix2::identity() - nrm * nrm.transpose()) / r;
                Ok(Matrix::from_column_slice(2, 2, h.as_slice()))
            }
        }
    }

    pub(crate) fn raycast(&self, o: &Vector, dir: &Vector, max: f64) -> Option<f64> {
        let o = Vector2::new(o[0], o[1]);
        let d = Vector2::new(dir[0], dir[1]);
        let mut best: Option<f64> = None;
        for i in 0..self.verts.len() {
            let denom = self.normals[i].dot(&d);
            if denom >= 0.0 {
                continue;
            }
            let t = self.normals[i].dot(&(self.verts[i] - o)) / denom;
            if !(t > 0.0 && t <= max) {
                continue;
            }
            let s = (o + d * t - self.verts[i]).dot(&self.tangents[i]);
            let slack = 1e-12 * self.lengths[i];
            if s >= -slack && s <= self.lengths[i] + slack && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        best
    }

    /// Two unit-length pieces per vertex: the corner arc, then the face.
    pub(crate) fn boundary_period(&self) -> f64 {
        2.0 * self.verts.len() as f64
    }

    pub(crate) fn boundary_point(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let n = self.verts.len();
        let period = self.boundary_period();
        let t = t.rem_euclid(period);
        let piece = (t.floor() as usize).min(2 * n - 1);
        let frac = t - piece as f64;
        let i = piece / 2;
        if piece.is_multiple_of(2) {
            let prev = self.normals[(i + n - 1) % n];
            let a = prev.y.atan2(prev.x) + frac * self.turns[i];
            (self.verts[i], Vector2::new(a.cos(), a.sin()))
        } else {
            let p = self.verts[i] + self.tangents[i] * (frac * self.lengths[i]);
            (p, self.normals[i])
        }
    }

    /// Minimum distance between two disjoint convex polygons (zero if they overlap).
    pub(crate) fn clearance_to(&self, other: &ConvexPolygon) -> f64 {
        let mut best = f64::INFINITY;
        for (a, b) in [(self, other), (other, self)] {
            for v in &a.verts {
                if b.contains(v) {
                    return 0.0;
                }
                best = best.min(b.nearest_edge(v).2);
            }
        }
        best
    }

    pub(crate) fn distance_from(&self, p: &Vector2<f64>) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.nearest_edge(p).2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn square() -> ConvexPolygon {
        ConvexPolygon::new(&[[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(ConvexPolygon::new(&[[0.0, 0.0], [1.0, 0.0]]).is_err());
        // clockwise
        assert!(ConvexPolygon::new(&[[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]).is_err());
        // non-convex
        assert!(ConvexPolygon::new(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [1.0, 2.0]]).is_err());
    }

    #[test]
    fn face_and_vertex_distances() {
        let p = square();
        let h = p.closest(&dvector![3.0, 0.5]).unwrap();
        assert!((h.distance - 2.0).abs() < 1e-15);
        assert!((h.normal - dvector![1.0, 0.0]).norm() < 1e-15);
        let h = p.closest(&dvector![4.0, 5.0]).unwrap();
        assert!((h.distance - 5.0).abs() < 1e-14);
        assert!(p.closest(&dvector![0.2, 0.3]).is_none());
    }

    #[test]
    fn hessian_regions() {
        let p = square();
        assert_eq!(p.hessian(&dvector![3.0, 0.5]).unwrap(), Matrix::zeros(2, 2));
        let h = p.hessian(&dvector![4.0, 5.0]).unwrap();
        // tangent to the vertex circle is (-4, 3)/5
        let t = dvector![-0.8, 0.6];
        assert!(((t.transpose() * &h * &t)[0] - 0.2).abs() < 1e-14);
        assert_eq!(
            p.hessian(&dvector![3.0, 1.0]),
            Err(GeometryError::NonSmoothPoint)
        );
    }

    #[test]
    fn raycast_faces() {
        let p = square();
        let t = p
            .raycast(&dvector![-4.0, 0.3], &dvector![1.0, 0.0], 10.0)
            .unwrap();
        assert!((t - 3.0).abs() < 1e-14);
        assert_eq!(
            p.raycast(&dvector![-4.0, 1.5], &dvector![1.0, 0.0], 10.0),
            None
        );
    }

    #[test]
    fn boundary_parametrization_is_continuous() {
        let p = square();
        let steps = 4000;
        let period = p.boundary_period();
        let mut prev = p.boundary_point(0.0);
        for k in 1..=steps {
            let cur = p.boundary_point(period * k as f64 / steps as f64);
            assert!((cur.0 - prev.0).norm() < 0.01);
            assert!((cur.1 - prev.1).norm() < 0.01);
            assert!((cur.1.norm() - 1.0).abs() < 1e-12);
            prev = cur;
        }
    }
}
