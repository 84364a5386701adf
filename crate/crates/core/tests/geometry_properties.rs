use proptest::prelude::*;

use spf_core::geometry::{GradientMode, ImplicitShape};
use spf_core::{
    blend_weight, extract_reading, oracle_reading, scan_2d, spf_filter_multi, LidarConfig,
    Obstacle, PenaltyParams, RobotParams, SensorReading, Vector, World,
};

fn obstacles() -> Vec<Obstacle> {
    vec![
        Obstacle::disk([0.3, -0.2], 1.0).unwrap(),
        Obstacle::polygon(&[[-1.0, -1.0], [1.0, -1.0], [1.3, 0.8], [-0.7, 1.0]]).unwrap(),
        Obstacle::spline(&[
            [1.2, 0.0],
            [0.8, 0.9],
            [0.0, 1.1],
            [-0.9, 0.7],
            [-1.0, -0.1],
            [-0.6, -0.9],
            [0.2, -1.0],
            [0.9, -0.7],
        ])
        .unwrap(),
        Obstacle::sphere([0.0, 0.5, 0.0], 1.0).unwrap(),
        Obstacle::implicit(
            ImplicitShape::Quadric {
                matrix: vec![
                    vec![1.0 / 1.44, 0.0, 0.0],
                    vec![0.0, 1.0 / 0.49, 0.0],
                    vec![0.0, 0.0, 1.0 / 0.81],
                ],
                linear: vec![],
                constant: -1.0,
            },
            GradientMode::Analytic,
        )
        .unwrap(),
        Obstacle::implicit(
            ImplicitShape::Torus {
                center: [0.0, 0.0, 0.0],
                major: 1.5,
                minor: 0.4,
            },
            GradientMode::Numeric,
        )
        .unwrap(),
    ]
}

fn point(ob: &Obstacle, raw: [f64; 3], radius: f64) -> Vector {
    let n = ob.dimension();
    let dir = Vector::from_fn(n, |i, _| raw[i]);
    let dir = if dir.norm() < 1e-3 {
        Vector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 })
    } else {
        dir.normalize()
    };
    dir * radius
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn normal_is_distance_gradient(raw in prop::array::uniform3(-1.0f64..1.0), r in 2.1f64..3.5) {
        for ob in obstacles() {
            let x = point(&ob, raw, r);
            let world = World::new(ob.dimension(), vec![ob.clone()], None).unwrap();
            let q = world.distance_to_obstacles(&x).unwrap();
            let h = 1e-6;
            for i in 0..x.len() {
                let mut e = Vector::zeros(x.len());
                e[i] = h;
                let fd = (world.distance_to_obstacles(&(&x + &e)).unwrap().value
                    - world.distance_to_obstacles(&(&x - &e)).unwrap().value) / (2.0 * h);
                prop_assert!((fd - q.normal[i]).abs() < 1e-6, "{ob:?} at {x}: {fd} vs {}", q.normal[i]);
            }
            prop_assert!((q.normal.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_one_lipschitz(a in prop::array::uniform3(-3.0f64..3.0), b in prop::array::uniform3(-3.0f64..3.0)) {
        for ob in obstacles() {
            let n = ob.dimension();
            let world = World::new(n, vec![ob], None).unwrap();
            let (x, y) = (Vector::from_fn(n, |i, _| a[i]), Vector::from_fn(n, |i, _| b[i]));
            if let (Ok(dx), Ok(dy)) = (world.distance_to_obstacles(&x), world.distance_to_obstacles(&y)) {
                prop_assert!((dx.value - dy.value).abs() <= (x - y).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn hessian_annihilates_normal(raw in prop::array::uniform3(-1.0f64..1.0), r in 2.1f64..3.5) {
        for ob in obstacles() {
            let x = point(&ob, raw, r);
            // the torus axis is a tie locus; curvature blows up like 1/dist near it
            if matches!(ob, Obstacle::Implicit(_)) && x[0].hypot(x[1]) < 0.1 {
                continue;
            }
            let world = World::new(ob.dimension(), vec![ob.clone()], None).unwrap();
            let Ok(hd) = world.distance_hessian(&x) else { continue };
            let eta = world.distance_to_obstacles(&x).unwrap().normal;
            let tol = if ob.is_analytic() { 1e-9 } else { 1e-5 };
            prop_assert!((&hd * &eta).norm() < tol, "{ob:?}: |H eta| = {}", (&hd * &eta).norm());
            prop_assert!((&hd - hd.transpose()).amax() < tol);
        }
    }
}

#[test]
fn lidar_chord_bound_on_disks() {
    // The nearest of the 1 degree rays is at most half a step off the normal,
    // so the range error is (c / r) d (1 - cos 0.5 deg) for a disk of radius r
    // seen from center distance c = r + d. That is within d (1 - cos 1 deg)
    // whenever d <= 3 r.
    let robot = RobotParams::new(0.34, 0.06);
    let config = LidarConfig::new(3.0, 1.0);
    let half = 0.5f64.to_radians();
    let mut worst_ratio: f64 = 0.0;
    for k in 0..400 {
        let radius = [0.2, 0.5, 1.0, 2.0][k % 4];
        let d = 0.5 + 2.0 * ((k * 37) % 101) as f64 / 100.0;
        let bearing = k as f64 * 0.731;
        let world = World::new(2, vec![Obstacle::disk([0.0, 0.0], radius).unwrap()], None).unwrap();
        let x = Vector::from_vec(vec![
            (radius + d) * bearing.cos(),
            (radius + d) * bearing.sin(),
        ]);
        let oracle = oracle_reading(&world, &x, &robot).unwrap();
        let scanned = extract_reading(&scan_2d(&world, &x, &config).unwrap(), &robot);
        let err = (scanned.margin - oracle.margin).abs();
        let exact_bound = (radius + d) / radius * d * (1.0 - half.cos()) * 1.001 + 1e-9;
        assert!(
            err <= exact_bound,
            "r {radius} d {d}: {err} > {exact_bound}"
        );
        if d <= 3.0 * radius {
            assert!(err <= d * (1.0 - 1f64.to_radians().cos()) + 1e-9);
        }
        assert!(scanned.normal.dot(&oracle.normal).clamp(-1.0, 1.0).acos() <= half + 1e-9);
        worst_ratio = worst_ratio.max(err / (d * (1.0 - 1f64.to_radians().cos())));
    }
    // small disks far away do exceed the resolution-only bound
    assert!(worst_ratio > 1.0);
}

/// Plain gradient descent on `|u - k0|^2 / 2 + sum psi_i (eta_i . u)^2 / 2`.
fn descend(nominal: &Vector, terms: &[(f64, Vector)]) -> Vector {
    let lipschitz = 1.0 + terms.iter().map(|(p, _)| p).sum::<f64>();
    let mut u = nominal.clone();
    for _ in 0..200_000 {
        let mut g = &u - nominal;
        for (psi, eta) in terms {
            g += eta * (psi * eta.dot(&u));
        }
        if g.norm() < 1e-14 {
            break;
        }
        u -= g / lipschitz;
    }
    u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn multi_filter_minimizes_objective(
        n in 2usize..=3,
        nominal in prop::array::uniform3(-5.0f64..5.0),
        normals in prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), 0.0f64..0.8), 1..=4),
    ) {
        let params = PenaltyParams::new(0.6, 1.0).unwrap();
        let k0 = Vector::from_fn(n, |i, _| nominal[i]);
        let mut readings = Vec::new();
        let mut terms = Vec::new();
        for (raw, d) in normals {
            let v = Vector::from_fn(n, |i, _| raw[i]);
            prop_assume!(v.norm() > 1e-2);
            let eta = v.normalize();
            let w = blend_weight(d, k0.dot(&eta), &params);
            prop_assume!(w <= 0.99);
            if w > 0.0 {
                terms.push((w / (1.0 - w), eta.clone()));
            }
            readings.push(SensorReading::new(d, eta));
        }
        let u = spf_filter_multi(&k0, &readings, &params).unwrap();
        let reference = descend(&k0, &terms);
        prop_assert!((u - reference).amax() <= 1e-8);
    }
}
