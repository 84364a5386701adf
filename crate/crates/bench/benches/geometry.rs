use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use spf_core::geometry::{GradientMode, ImplicitShape};
use spf_core::{Lidar, LidarConfig, Obstacle, RobotParams, World};

fn single(ob: Obstacle) -> World {
    World::new(ob.dimension(), vec![ob], None).unwrap()
}

fn queries(c: &mut Criterion) {
    let blob = [
        [1.2, 0.0],
        [0.8, 0.9],
        [0.0, 1.1],
        [-0.9, 0.7],
        [-1.0, -0.1],
        [-0.6, -0.9],
        [0.2, -1.0],
        [0.9, -0.7],
    ];
    let x2 = DVector::from_vec(vec![1.7, 1.1]);
    let x3 = DVector::from_vec(vec![1.7, 1.1, 0.4]);
    let torus = ImplicitShape::Torus {
        center: [0.0, 0.0, 0.0],
        major: 1.5,
        minor: 0.4,
    };
    let cases = [
        (
            "disk",
            single(Obstacle::disk([0.0, 0.0], 1.0).unwrap()),
            &x2,
        ),
        (
            "polygon",
            single(
                Obstacle::polygon(&[[-1.0, -1.0], [1.0, -1.0], [1.3, 0.8], [-0.7, 1.0]]).unwrap(),
            ),
            &x2,
        ),
        ("spline", single(Obstacle::spline(&blob).unwrap()), &x2),
        (
            "torus_analytic",
            single(Obstacle::implicit(torus.clone(), GradientMode::Analytic).unwrap()),
            &x3,
        ),
        (
            "torus_numeric",
            single(Obstacle::implicit(torus, GradientMode::Numeric).unwrap()),
            &x3,
        ),
    ];
    for (name, world, x) in &cases {
        c.bench_function(&format!("distance/{name}"), |b| {
            b.iter(|| world.distance_to_obstacles(black_box(x)).unwrap())
        });
    }

    let robot = RobotParams::new(0.34, 0.06);
    let spline_world = &cases[2].1;
    let planar = Lidar::planar(LidarConfig::new(3.0, 1.0)).unwrap();
    c.bench_function("lidar2d/read", |b| {
        b.iter(|| planar.read(spline_world, black_box(&x2), &robot))
    });
    let sphere_world = single(Obstacle::sphere([0.0, 0.0, 0.0], 1.0).unwrap());
    let spherical = Lidar::spherical(LidarConfig::new(3.0, 2.0)).unwrap();
    c.bench_function("lidar3d/read", |b| {
        b.iter(|| spherical.read(&sphere_world, black_box(&x3), &robot))
    });
}

criterion_group!(benches, queries);
criterion_main!(benches);
