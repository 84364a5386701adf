use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spf_core::geometry::{GradientMode, ImplicitShape};
use spf_core::{
    classify_equilibrium, find_equilibria, jacobian_at, simulate, Matrix, Obstacle, PenaltyParams,
    Potential, QuadraticPotential, RobotParams, SimConfig, Termination, Vector, World,
};

fn robot() -> RobotParams {
    RobotParams::new(0.34, 0.06)
}

fn worlds() -> Vec<(World, QuadraticPotential)> {
    let p2 = Matrix::from_row_slice(2, 2, &[0.4, 0.2, 0.2, 0.8]);
    let p3 = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.5, 2.0]);
    let goal2 = Vector::from_vec(vec![4.0, -1.0]);
    let goal3 = Vector::from_vec(vec![4.0, 7.0, 1.0]);
    let ellipsoid = ImplicitShape::Quadric {
        matrix: vec![
            vec![1.0 / 1.44, 0.0, 0.0],
            vec![0.0, 1.0 / 0.49, 0.0],
            vec![0.0, 0.0, 1.0 / 0.81],
        ],
        linear: vec![],
        constant: -1.0,
    };
    let torus = ImplicitShape::Torus {
        center: [0.0, 0.0, 0.0],
        major: 1.5,
        minor: 0.4,
    };
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
    vec![
        (
            World::new(2, vec![Obstacle::disk([0.0, 0.0], 1.0).unwrap()], None).unwrap(),
            QuadraticPotential::new(goal2.clone(), p2.clone()).unwrap(),
        ),
        (
            World::new(
                2,
                vec![
                    Obstacle::polygon(&[[-1.0, -1.0], [1.0, -1.0], [1.3, 0.8], [-0.7, 1.0]])
                        .unwrap(),
                ],
                None,
            )
            .unwrap(),
            QuadraticPotential::new(goal2.clone(), p2.clone()).unwrap(),
        ),
        (
            World::new(2, vec![Obstacle::spline(&blob).unwrap()], None).unwrap(),
            QuadraticPotential::new(goal2, p2).unwrap(),
        ),
        (
            World::new(
                3,
                vec![Obstacle::sphere([0.0, 0.0, 0.0], 1.0).unwrap()],
                None,
            )
            .unwrap(),
            QuadraticPotential::new(goal3.clone(), p3.clone()).unwrap(),
        ),
        (
            World::new(
                3,
                vec![Obstacle::implicit(ellipsoid, GradientMode::Analytic).unwrap()],
                None,
            )
            .unwrap(),
            QuadraticPotential::new(goal3.clone(), p3.clone()).unwrap(),
        ),
        (
            World::new(
                3,
                vec![Obstacle::implicit(torus, GradientMode::Analytic).unwrap()],
                None,
            )
            .unwrap(),
            QuadraticPotential::new(goal3, p3).unwrap(),
        ),
    ]
}

/// Random point on the dilated boundary: nearest boundary point of a random
/// probe, pushed out by the clearance.
fn boundary_point(world: &World, rng: &mut ChaCha8Rng) -> Option<Vector> {
    let n = world.dimension();
    let probe = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let q = world.distance_to_obstacles(&probe).ok()?;
    Some(&q.nearest + &q.normal * robot().clearance())
}

fn projected_field(world: &World, pot: &dyn Potential, x: &Vector) -> Vector {
    let eta = world.distance_to_obstacles(x).unwrap().normal;
    let g = pot.gradient(x);
    -(&g - &eta * eta.dot(&g))
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (world, pot) in worlds() {
        let mut checked = 0;
        while checked < 25 {
            let Some(x) = boundary_point(&world, &mut rng) else {
                continue;
            };
            // skip polygon corners' seams, where the Hessian jumps
            if world.distance_hessian(&x).is_err() {
                continue;
            }
            let j = jacobian_at(&world, &pot, &x).unwrap();
            let h = 1e-6;
            let n = x.len();
            let mut fd = Matrix::zeros(n, n);
            for c in 0..n {
                let mut e = Vector::zeros(n);
                e[c] = h;
                let col = (projected_field(&world, &pot, &(&x + &e))
                    - projected_field(&world, &pot, &(&x - &e)))
                    / (2.0 * h);
                fd.set_column(c, &col);
            }
            let err = (&j - &fd).amax();
            assert!(
                err < 1e-5,
                "{:?}: err {err} at {x}",
                world.obstacles()[0].dimension()
            );
            checked += 1;
        }
    }
}

#[test]
fn verdicts_are_invariant_under_gain_scaling() {
    for (world, pot) in worlds() {
        let base = find_equilibria(&world, &pot, &robot()).unwrap();
        for c in [0.1, 3.0, 25.0] {
            let scaled = pot.scaled(c).unwrap();
            let reports = find_equilibria(&world, &scaled, &robot()).unwrap();
            assert_eq!(reports.len(), base.len());
            for (a, b) in base.iter().zip(&reports) {
                assert!(
                    (DVector::from_column_slice(&a.location)
                        - DVector::from_column_slice(&b.location))
                    .norm()
                        < 1e-6
                );
                assert!((b.lambda - c * a.lambda).abs() < 1e-6 * c * a.lambda);
                assert_eq!((a.unstable, a.isolated), (b.unstable, b.isolated));
                for (ea, eb) in a.spectrum.iter().zip(&b.spectrum) {
                    assert!((eb - c * ea).abs() < 1e-6 * c.max(1.0) * ea.abs().max(1.0));
                }
            }
        }
    }
}

#[test]
fn planar_instability_implies_isolation() {
    for (world, pot) in worlds().into_iter().filter(|(w, _)| w.dimension() == 2) {
        for r in find_equilibria(&world, &pot, &robot()).unwrap() {
            if r.unstable {
                assert!(r.isolated);
            }
            let x = Vector::from_column_slice(&r.location);
            let c = classify_equilibrium(&world, &pot, &x, r.lambda).unwrap();
            assert_eq!(c.unstable, r.unstable);
            assert!(r.residual <= 1e-8);
            assert!(r.lambda > 0.0);
        }
    }
}

#[test]
fn unstable_equilibria_are_escaped() {
    let penalty = PenaltyParams::new(0.6, 1.0).unwrap();
    for (world, pot) in worlds() {
        let reports = find_equilibria(&world, &pot, &robot()).unwrap();
        let mut config = SimConfig::new(world.clone(), pot.clone(), robot(), penalty);
        // weakly unstable points (eigenvalue ~0.06) take ~100 s to leave
        config.t_max = 600.0;
        let stable: Vec<Vector> = reports
            .iter()
            .filter(|r| !r.unstable)
            .map(|r| Vector::from_column_slice(&r.location))
            .collect();
        for r in reports.iter().filter(|r| r.unstable) {
            let xbar = Vector::from_column_slice(&r.location);
            let v = Vector::from_column_slice(r.unstable_direction.as_ref().unwrap());
            let traj = simulate(&config, &(&xbar + v * 1e-4));
            let furthest = (0..traj.len())
                .map(|k| (Vector::from_column_slice(traj.state(k)) - &xbar).norm())
                .fold(0.0, f64::max);
            assert!(furthest > 0.1, "stuck near {xbar}");
            // leaving an unstable point either reaches the goal or slides
            // towards a stable undesired equilibrium (slowly when its
            // eigenvalue is small)
            let end = traj.final_state();
            match traj.termination() {
                Termination::ReachedGoal => {}
                Termination::Stalled | Termination::Timeout => assert!(
                    stable.iter().any(|y| (y - &end).norm() < 1e-2),
                    "from {xbar} ended at {end}"
                ),
                t => panic!("from {xbar}: {t:?}"),
            }
        }
    }
}
