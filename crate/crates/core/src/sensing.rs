//! Idealized LiDAR and exact-geometry sensing.
//!
//! A scan reduces to a reading by taking the shortest return: the margin is
//! that range minus `R + epsilon` and the normal points back along the ray.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::SensorReading;
use crate::geometry::{GeometryError, RobotParams, Vector, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("sensor range must be positive, got {0}")]
    InvalidRange(f64),
    #[error("angular resolution {0} deg must be positive and divide {1} deg evenly")]
    InvalidResolution(f64, u32),
}

/// Direction layout of the 3D sensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereSampling {
    /// Azimuth-elevation grid at the configured step, poles emitted once.
    #[default]
    Lattice,
    /// Golden-angle spiral with as many rays as the lattice.
    Fibonacci,
}

impl SphereSampling {
    pub fn is_lattice(&self) -> bool {
        *self == SphereSampling::Lattice
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig {
    pub max_range: f64,
    pub resolution_deg: f64,
    pub sampling: SphereSampling,
}

impl LidarConfig {
    pub fn new(max_range: f64, resolution_deg: f64) -> Self {
        Self {
            max_range,
            resolution_deg,
            sampling: SphereSampling::Lattice,
        }
    }

    fn steps(&self, span: u32) -> Result<usize, SensingError> {
        if !(self.max_range > 0.0) {
            return Err(SensingError::InvalidRange(self.max_range));
        }
        let err = SensingError::InvalidResolution(self.resolution_deg, span);
        if !(self.resolution_deg > 0.0) {
            return Err(err);
        }
        let n = span as f64 / self.resolution_deg;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-9 * n || rounded < 1.0 {
            return Err(err);
        }
        Ok(rounded as usize)
    }
}

/// Raw range returns; `ranges[i]` is `f64::INFINITY` when ray `i` hits nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub origin: Vector,
    pub directions: Vec<Vector>,
    pub ranges: Vec<f64>,
}

/// A LiDAR with its ray directions precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Lidar {
    config: LidarConfig,
    dimension: usize,
    dirs: Vec<[f64; 3]>,
}

impl Lidar {
    pub fn planar(config: LidarConfig) -> Result<Self, SensingError> {
        let n = config.steps(360)?;
        let step = config.resolution_deg.to_radians();
        let dirs = (0..n)
            .map(|k| {
                let a = k as f64 * step;
                [a.cos(), a.sin(), 0.0]
            })
            .collect();
        Ok(Self {
            config,
            dimension: 2,
            dirs,
        })
    }

    pub fn spherical(config: LidarConfig) -> Result<Self, SensingError> {
        let n_az = config.steps(360)?;
        let n_el = config.steps(180)?;
        let step = config.resolution_deg.to_radians();
        let mut dirs = Vec::with_capacity(n_az * (n_el - 1) + 2);
        dirs.push([0.0, 0.0, -1.0]);
        for j in 1..n_el {
            let el = -PI / 2.0 + j as f64 * step;
            for k in 0..n_az {
                let az = k as f64 * step;
                dirs.push([el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]);
            }
        }
        dirs.push([0.0, 0.0, 1.0]);
        if config.sampling == SphereSampling::Fibonacci {
            let n = dirs.len();
            let golden = PI * (3.0 - 5f64.sqrt());
            dirs = (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    [r * a.cos(), r * a.sin(), z]
                })
                .collect();
        }
        Ok(Self {
            config,
            dimension: 3,
            dirs,
        })
    }

    pub fn config(&self) -> &LidarConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ray_count(&self) -> usize {
        self.dirs.len()
    }

    fn direction(&self, i: usize) -> Vector {
        Vector::from_column_slice(&self.dirs[i][..self.dimension])
    }

    pub fn scan(&self, world: &World, origin: &Vector) -> Scan {
        let directions: Vec<Vector> = (0..self.dirs.len()).map(|i| self.direction(i)).collect();
        let ranges = directions
            .iter()
            .map(|d| {
                world
                    .raycast(origin, d, self.config.max_range)
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        Scan {
            origin: origin.clone(),
            directions,
            ranges,
        }
    }

    /// Shortest return without materializing the scan.
    ///
    /// Only rays inside the cone subtended by an obstacle's bounding sphere
    /// are cast against it, each limited by the best range so far. The result
    /// equals `extract_reading(&self.scan(..))`.
    pub fn nearest_return(&self, world: &World, origin: &Vector) -> Option<(f64, usize)> {
        let max = self.config.max_range;
        let mut best: Option<(f64, usize)> = None;
        for ob in world.obstacles() {
            let cone = ob.bounding_sphere().and_then(|(c, r)| {
                let rel = c - origin;
                let dist = rel.norm();
                if dist <= r {
                    None
                } else {
                    // widened slightly so rounding never drops a grazing ray
                    Some((rel / dist, (r / dist).asin() + 1e-12, dist - r))
                }
            });
            if let Some((_, _, gap)) = cone {
                if gap > max {
                    continue;
                }
            }
            let candidates: Box<dyn Iterator<Item = usize>> = match (&cone, self.dimension) {
                (None, _) => Box::new(0..self.dirs.len()),
                (Some((axis, half, _)), 2) => {
                    let step = self.config.resolution_deg.to_radians();
                    let n = self.dirs.len() as i64;
                    let center = axis[1].atan2(axis[0]);
                    let lo = ((center - half) / step).ceil() as i64;
                    let hi = ((center + half) / step).floor() as i64;
                    Box::new((lo..=hi).map(move |k| k.rem_euclid(n) as usize))
                }
                (Some((axis, half, _)), _) => {
                    let cos_half = half.cos();
                    let (ax, ay, az) = (axis[0], axis[1], axis[2]);
                    let dirs = &self.dirs;
                    Box::new((0..dirs.len()).filter(move |&i| {
                        dirs[i][0] * ax + dirs[i][1] * ay + dirs[i][2] * az >= cos_half
                    }))
                }
            };
            for i in candidates {
                let limit = best.map_or(max, |(t, _)| t);
                let dir = self.direction(i);
                if let Some(t) = ob.raycast(origin, &dir, limit) {
                    if best.is_none_or(|(bt, bi)| t < bt || (t == bt && i < bi)) {
                        best = Some((t, i));
                    }
                }
            }
        }
        best
    }

    pub fn read(&self, world: &World, x: &Vector, robot: &RobotParams) -> SensorReading {
        match self.nearest_return(world, x) {
            Some((t, i)) => SensorReading::new(t - robot.clearance(), -self.direction(i)),
            None => SensorReading::invalid(self.dimension),
        }
    }
}

/// How the controller obtains `(d, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SensingMode {
    /// Exact geometry.
    Oracle,
    Lidar(Lidar),
}

impl SensingMode {
    pub fn read(
        &self,
        world: &World,
        x: &Vector,
        robot: &RobotParams,
    ) -> Result<SensorReading, GeometryError> {
        match self {
            SensingMode::Oracle => oracle_reading(world, x, robot),
            SensingMode::Lidar(l) => Ok(l.read(world, x, robot)),
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, SensingMode::Oracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Oracle,
    Lidar2d,
    Lidar3d,
}

fn default_range() -> f64 {
    3.0
}

fn default_resolution() -> f64 {
    1.0
}

/// Serialized sensor block of a run document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub mode: SensorKind,
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_resolution")]
    pub resolution_deg: f64,
    #[serde(default, skip_serializing_if = "SphereSampling::is_lattice")]
    pub sampling: SphereSampling,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            mode: SensorKind::Oracle,
            range: default_range(),
            resolution_deg: default_resolution(),
            sampling: SphereSampling::Lattice,
        }
    }
}

impl SensorConfig {
    pub fn build(&self) -> Result<SensingMode, SensingError> {
        let config = LidarConfig {
            max_range: self.range,
            resolution_deg: self.resolution_deg,
            sampling: self.sampling,
        };
        Ok(match self.mode {
            SensorKind::Oracle => SensingMode::Oracle,
            SensorKind::Lidar2d => SensingMode::Lidar(Lidar::planar(config)?),
            SensorKind::Lidar3d => SensingMode::Lidar(Lidar::spherical(config)?),
        })
    }
}

pub fn raycast(world: &World, origin: &Vector, direction: &Vector, max_range: f64) -> Option<f64> {
    world.raycast(origin, direction, max_range)
}

pub fn scan_2d(world: &World, origin: &Vector, config: &LidarConfig) -> Result<Scan, SensingError> {
    Ok(Lidar::planar(*config)?.scan(world, origin))
}

pub fn scan_3d(world: &World, origin: &Vector, config: &LidarConfig) -> Result<Scan, SensingError> {
    Ok(Lidar::spherical(*config)?.scan(world, origin))
}

/// Shortest return to `(d, eta)`; invalid when nothing was hit.
pub fn extract_reading(scan: &Scan, robot: &RobotParams) -> SensorReading {
    let mut best: Option<(f64, usize)> = None;
    for (i, &r) in scan.ranges.iter().enumerate() {
        if r.is_finite() && best.is_none_or(|(b, _)| r < b) {
            best = Some((r, i));
        }
    }
    match best {
        Some((r, i)) => SensorReading::new(r - robot.clearance(), -&scan.directions[i]),
        None => SensorReading::invalid(scan.origin.len()),
    }
}

/// Exact margin and normal; invalid for an empty world.
pub fn oracle_reading(
    world: &World,
    x: &Vector,
    robot: &RobotParams,
) -> Result<SensorReading, GeometryError> {
    match world.distance_to_obstacles(x) {
        Ok(q) => Ok(SensorReading::new(q.value - robot.clearance(), q.normal)),
        Err(GeometryError::EmptyWorld) => Ok(SensorReading::invalid(world.dimension())),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Obstacle;
    use nalgebra::dvector;

    fn disk_world() -> World {
        World::new(2, vec![Obstacle::disk([0.0, 0.0], 1.0).unwrap()], None).unwrap()
    }

    #[test]
    fn raycast_examples() {
        let w = disk_world();
        assert!(
            (raycast(&w, &dvector![3.0, 0.0], &dvector![-1.0, 0.0], 3.0).unwrap() - 2.0).abs()
                < 1e-12
        );
        assert_eq!(
            raycast(&w, &dvector![3.0, 0.0], &dvector![1.0, 0.0], 3.0),
            None
        );
        assert_eq!(
            raycast(&w, &dvector![3.0, 0.0], &dvector![0.0, 1.0], 3.0),
            None
        );
    }

    #[test]
    fn ray_counts() {
        let w = World::empty(2);
        let s = scan_2d(&w, &dvector![0.0, 0.0], &LidarConfig::new(3.0, 1.0)).unwrap();
        assert_eq!(s.directions.len(), 360);
        assert!(s.ranges.iter().all(|r| r.is_infinite()));
        assert!(!extract_reading(&s, &RobotParams::new(0.34, 0.06)).valid);
        let l = Lidar::spherical(LidarConfig::new(3.0, 2.0)).unwrap();
        assert_eq!(l.ray_count(), 180 * 91 - 2 * 179);
        let f = Lidar::spherical(LidarConfig {
            sampling: SphereSampling::Fibonacci,
            ..LidarConfig::new(3.0, 2.0)
        })
        .unwrap();
        assert_eq!(f.ray_count(), l.ray_count());
        assert!(Lidar::planar(LidarConfig::new(3.0, 7.0)).is_err());
        assert!(Lidar::planar(LidarConfig::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn reading_from_scan() {
        let w = disk_world();
        let robot = RobotParams::new(0.34, 0.06);
        let s = scan_2d(&w, &dvector![3.0, 0.0], &LidarConfig::new(3.0, 1.0)).unwrap();
        let r = extract_reading(&s, &robot);
        assert!(r.valid);
        assert!((r.margin - 1.6).abs() < 1e-12);
        assert!((r.normal - dvector![1.0, 0.0]).norm() < 1e-12);
        let o = oracle_reading(&w, &dvector![3.0, 0.0], &robot).unwrap();
        assert!((o.margin - 1.6).abs() < 1e-12);
        assert!(
            !oracle_reading(&World::empty(2), &dvector![0.0, 0.0], &robot)
                .unwrap()
                .valid
        );
    }

    #[test]
    fn culled_reading_matches_full_scan() {
        let w = World::new(
            2,
            vec![
                Obstacle::disk([0.0, 0.0], 1.0).unwrap(),
                Obstacle::polygon(&[[2.0, 1.5], [3.0, 1.5], [3.0, 2.5], [2.0, 2.5]]).unwrap(),
                Obstacle::spline(&[[-1.0, 2.0], [0.0, 2.5], [-0.5, 3.5], [-1.5, 3.0]]).unwrap(),
            ],
            None,
        )
        .unwrap();
        let robot = RobotParams::new(0.34, 0.06);
        let lidar = Lidar::planar(LidarConfig::new(3.0, 1.0)).unwrap();
        for x in [
            dvector![1.3, 0.9],
            dvector![-1.2, 1.2],
            dvector![2.5, 0.2],
            dvector![0.7, 2.1],
        ] {
            let full = extract_reading(&lidar.scan(&w, &x), &robot);
            assert_eq!(lidar.read(&w, &x, &robot), full);
        }
        let w3 = World::new(3, vec![Obstacle::sphere([0.0; 3], 1.0).unwrap()], None).unwrap();
        let lidar = Lidar::spherical(LidarConfig::new(3.0, 2.0)).unwrap();
        let x = dvector![1.2, 0.7, 0.4];
        assert_eq!(
            lidar.read(&w3, &x, &robot),
            extract_reading(&lidar.scan(&w3, &x), &robot)
        );
    }

    #[test]
    fn disk_scan_is_mirror_symmetric() {
        let w = disk_world();
        // origin chosen so no ray is exactly tangent to the disk
        let s = scan_2d(&w, &dvector![2.3, 0.0], &LidarConfig::new(3.0, 1.0)).unwrap();
        for k in 1..180 {
            let (a, b) = (s.ranges[180 - k], s.ranges[180 + k]);
            assert!(a == b || (a - b).abs() < 1e-12, "{k}: {a} {b}");
        }
    }
}
