//! Front evolution and the finite-volume solver against independent references.

use dataflow_sim::flux::{ModelParams, RateField};
use dataflow_sim::front::{self, FrontProfile, FrontShape};
use dataflow_sim::scenario::{self, InitialCondition};
use dataflow_sim::{Grid, MacroSolver, SolverOptions};

/// `min_{|y - x| <= c eta t} zeta0(y) + c t`, valid while every slope stays below `1 / eta`.
fn hopf_lax(shape: &FrontShape, x: f64, t: f64, c: f64, eta: f64) -> f64 {
    let reach = c * eta * t;
    let samples = 20_000;
    (0..=samples)
        .map(|k| shape.height(x - reach + 2.0 * reach * k as f64 / samples as f64))
        .fold(f64::INFINITY, f64::min)
        + c * t
}

fn evolve_error(shape: &FrontShape, n: usize, eta: f64, t: f64) -> f64 {
    let p = ModelParams::new(0.8, eta).unwrap();
    let c = 0.1 / 0.8;
    let z =
        front::front_evolve(&shape.profile(n).unwrap(), &RateField::Uniform(0.1), &p, t).unwrap();
    (0..n)
        .map(|i| (z.zeta[i] - hopf_lax(shape, z.x(i), t, c, eta)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn evolver_matches_hopf_lax_for_smooth_front() {
    let shape = FrontShape::Cosine {
        amplitude: 0.25,
        offset: 0.3,
    };
    let eta = 1.0 / (std::f64::consts::FRAC_PI_2 + 1.0);
    let errors: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| evolve_error(&shape, n, eta, 2.0))
        .collect();
    assert!(errors[2] < 2e-3, "{errors:?}");
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn evolver_matches_hopf_lax_for_v_front() {
    let shape = FrontShape::VShape { z0: 0.2 };
    let errors: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| evolve_error(&shape, n, 1.0 / 1.1, 2.0))
        .collect();
    assert!(errors[2] < 2e-3, "{errors:?}");
}

#[test]
fn closed_form_v_front_agrees_with_hopf_lax() {
    let p = ModelParams::new(0.8, 1.0 / 1.1).unwrap();
    let shape = FrontShape::VShape { z0: 0.2 };
    for k in 0..40 {
        let x = (k as f64 + 0.5) / 40.0;
        for t in [0.3, 1.0, 2.0] {
            let closed = front::front_vshape_solution(x, t, 0.2, 0.1, &p).unwrap();
            assert!((closed - hopf_lax(&shape, x, t, 0.125, p.eta)).abs() < 1e-6);
        }
    }
}

#[test]
fn evolver_reproduces_stalled_v_front() {
    let p = ModelParams::new(0.8, 10.0).unwrap();
    let z0 = FrontShape::VShape { z0: 0.2 }.profile(200).unwrap();
    for t in [0.25, 1.0, 2.0] {
        let z = front::front_evolve(&z0, &RateField::Uniform(0.1), &p, t).unwrap();
        let err = (0..200)
            .map(|i| {
                (z.zeta[i] - front::front_stalled_solution(z.x(i), t, 0.2, 0.1, &p).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 0.01, "t = {t}: {err}");
    }
}

#[test]
fn stalled_v_front_resolved_when_cells_are_wide_enough() {
    // eta dz / dx = 1 keeps the discrete throttle monotone
    let initial = InitialCondition::VFront { z0: 0.2 };
    let grid = Grid::new(20, 200).unwrap();
    let p = ModelParams::new(0.8, 10.0).unwrap();
    let solver = MacroSolver::new(grid, p.clone(), 0.5, SolverOptions::default()).unwrap();
    let state = solver.initial_state(&*initial.density(0.5)).unwrap();
    let out = solver.run(state, &[2.0]).unwrap();
    let f = front::extract_front(&out.snapshots[0], 0.5, &grid);
    let (reference, _) = scenario::reference_front(&initial, &p.alpha, &p, 20, 2.0)
        .unwrap()
        .unwrap();
    // half a column of arm slope at the corners
    assert!(f.linf_distance(&reference) <= 0.6 * grid.dx / 2.0 + 1e-9);
}

#[test]
fn arm_translates_before_tip_arrives() {
    // away from the tip the arm keeps its slope and rises at reduced speed
    let p = ModelParams::new(0.8, 0.5).unwrap();
    let shape = FrontShape::VShape { z0: 0.2 };
    let z0 = shape.profile(400).unwrap();
    let t = 0.2;
    let z = front::front_evolve(&z0, &RateField::Uniform(0.1), &p, t).unwrap();
    let speed = front::front_speed(0.6, 0.1, &p);
    for i in (20..80).chain(320..380) {
        assert!((z.zeta[i] - (z0.zeta[i] + speed * t)).abs() < 1e-12, "{i}");
    }
}

fn solver_front(
    initial: &InitialCondition,
    eta: f64,
    n: usize,
    t: f64,
) -> (FrontProfile, FrontProfile) {
    let grid = Grid::square(n).unwrap();
    let p = ModelParams::new(0.8, eta).unwrap();
    let solver = MacroSolver::new(grid, p.clone(), 0.5, SolverOptions::default()).unwrap();
    let state = solver.initial_state(&*initial.density(0.5)).unwrap();
    let out = solver.run(state, &[t]).unwrap();
    let f = front::extract_front(&out.snapshots[0], 0.5, &grid);
    let (reference, _) = scenario::reference_front(initial, &p.alpha, &p, n, t)
        .unwrap()
        .unwrap();
    (f, reference)
}

#[test]
fn constant_front_is_exact() {
    for n in [50, 100, 200] {
        let (f, reference) =
            solver_front(&InitialCondition::ConstantFront { zeta0: 0.2 }, 0.5, n, 2.0);
        assert!(f.linf_distance(&reference) < 1e-12, "{n}");
        assert!(reference.zeta.iter().all(|z| (z - 0.45).abs() < 1e-15));
    }
}

#[test]
fn v_front_converges_at_first_order() {
    let l1: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| {
            let (f, r) = solver_front(&InitialCondition::VFront { z0: 0.2 }, 1.0 / 1.1, n, 2.0);
            f.l1_distance(&r)
        })
        .collect();
    for w in l1.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 0.7, "{l1:?}");
    }
}

#[test]
fn smooth_front_converges_at_first_order() {
    let initial = InitialCondition::SmoothFront {
        amplitude: 0.25,
        offset: 0.3,
    };
    let eta = 1.0 / (std::f64::consts::FRAC_PI_2 + 1.0);
    let l1: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| {
            let (f, r) = solver_front(&initial, eta, n, 2.0);
            f.l1_distance(&r)
        })
        .collect();
    for w in l1.windows(2) {
        assert!((w[0] / w[1]).log2() > 0.7, "{l1:?}");
    }
}

#[test]
fn density_from_front_extracts_back() {
    let grid = Grid::square(64).unwrap();
    let z = FrontShape::Cosine {
        amplitude: 0.1,
        offset: 0.4,
    }
    .profile(64)
    .unwrap();
    let (rho, sigma) = front::density_from_front(&z, 0.5, &grid).unwrap();
    let p = ModelParams::new(0.8, 1.0).unwrap();
    let solver = MacroSolver::new(grid, p, 0.5, SolverOptions::default()).unwrap();
    let state = solver.state_from(rho, sigma, 0.0);
    let back = front::extract_front(&state, 0.5, &grid);
    assert!(back.linf_distance(&z) <= 0.5 * grid.dz + 1e-12);
}
