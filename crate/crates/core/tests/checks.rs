use std::f64::consts::PI;
use std::sync::Arc;

use lyhlab::checks::{
    check_l_evolution, check_lemma1, check_lemma2, check_lemma3, check_q_evolution_inequality,
    check_ricci_formula, fit_order, run_identity_suite,
};
use lyhlab::fields::{Grid, ScalarField};
use lyhlab::flow::{evolve_pair, heat_kernel_pair, FlowTrajectory, Schedule};
use lyhlab::geom::ManifoldModel;
use lyhlab::initial::Generator;

fn torus(res: usize) -> ManifoldModel {
    ManifoldModel::flat_torus(1, &[1.0, 1.0], res).unwrap()
}

fn real(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> ScalarField {
    let vals = (0..grid.len()).map(|p| f(&grid.real_coordinates(p))).collect();
    ScalarField::from_real(grid.clone(), vals).unwrap()
}

fn random_pair(model: &ManifoldModel, eps: f64, seed: u64) -> FlowTrajectory {
    let grid = Grid::new(model).unwrap();
    let u = Generator::RandomBandlimited { offset: 1.0, amplitude: 0.5, max_mode: 2 }
        .sample(&grid, seed, 0)
        .unwrap();
    let v = Generator::RandomBandlimited { offset: 0.0, amplitude: 0.3, max_mode: 2 }
        .sample(&grid, seed, 1)
        .unwrap();
    evolve_pair(model, 1.0, eps, &u, &v, &Schedule::new(0.01, 0.3, 2)).unwrap()
}

fn constant_pair(model: &ManifoldModel, eps: f64) -> FlowTrajectory {
    let grid = Grid::new(model).unwrap();
    let u = ScalarField::constant(&grid, 2.0);
    let v = ScalarField::constant(&grid, 0.5);
    evolve_pair(model, 1.0, eps, &u, &v, &Schedule::new(0.01, 0.3, 2)).unwrap()
}

#[test]
fn constants_give_vanishing_residuals_on_the_torus() {
    let traj = constant_pair(&torus(16), 0.0);
    for f in [check_l_evolution, check_lemma1, check_lemma3] {
        let r = f(&traj, 0.1, 1e-3).unwrap();
        assert!(r.abs_residual < 1e-12, "{} {}", r.identity, r.abs_residual);
    }
    // Q = g/t: ∂_tQ = −g/t² and the RHS reduces to (Q − 2g/t)Q = −g/t²
    let q = check_q_evolution_inequality(&traj, 0.1, 1e-3).unwrap();
    assert!(q.min_eigenvalue.unwrap().abs() < 1e-6, "{:?}", q.min_eigenvalue);
}

#[test]
fn cp1_constants_follow_the_scalar_curvature() {
    let traj = constant_pair(&ManifoldModel::fubini_study(16).unwrap(), 1.0);
    // L = ln 2 − ln(1 − 2t): a tiny step keeps the O(Δt²) term below 1e−10
    let l = check_l_evolution(&traj, 0.1, 2e-6).unwrap();
    assert!(l.rel_residual < 1e-10, "{}", l.rel_residual);
    let a = check_lemma1(&traj, 0.1, 1e-4).unwrap();
    assert!(a.abs_residual < 1e-8, "{}", a.abs_residual);
    let c = check_lemma3(&traj, 0.1, 1e-4).unwrap();
    assert!(c.abs_residual < 1e-10, "{}", c.abs_residual);
}

#[test]
fn torus_single_mode_l_evolution() {
    let model = torus(64);
    let grid = Grid::new(&model).unwrap();
    let u = real(&grid, |x| 2.0 + (2.0 * PI * x[0]).cos());
    let v = ScalarField::constant(&grid, 0.0);
    let traj = evolve_pair(&model, 1.0, 0.0, &u, &v, &Schedule::new(0.01, 0.3, 2)).unwrap();
    let r = check_l_evolution(&traj, 0.1, 1e-4).unwrap();
    assert!(r.rel_residual < 1e-6, "{}", r.rel_residual);
}

#[test]
fn lemma2_cancels_on_models() {
    let cp1 = ManifoldModel::fubini_study(16).unwrap();
    let r = check_lemma2(&cp1, 1.0, 1.0, 0.1, 1e-3).unwrap();
    assert!(r.abs_residual < 1e-8, "{}", r.abs_residual);
    let r = check_lemma2(&cp1, 1.0, 0.5, 0.1, 1e-3).unwrap();
    assert!(r.abs_residual < 1e-10, "{}", r.abs_residual);
    let r = check_lemma2(&torus(16), 1.0, 1.0, 0.1, 1e-3).unwrap();
    assert_eq!(r.abs_residual, 0.0);
    // probe window reaching past extinction
    assert!(check_lemma2(&cp1, 1.0, 1.0, 0.49, 0.02).is_err());
}

#[test]
fn ricci_formula_cancels_on_models() {
    let cp1 = ManifoldModel::fubini_study(16).unwrap();
    for a in [1.0, 3.0] {
        let r = check_ricci_formula(&cp1, a).unwrap();
        assert!(r.abs_residual < 1e-10, "a={a}: {}", r.abs_residual);
    }
    assert_eq!(check_ricci_formula(&torus(16), 1.0).unwrap().abs_residual, 0.0);
}

#[test]
fn lemma3_vanishes_for_proportional_pairs() {
    let model = torus(32);
    let grid = Grid::new(&model).unwrap();
    let u = Generator::RandomBandlimited { offset: 1.0, amplitude: 0.5, max_mode: 2 }
        .sample(&grid, 4, 0)
        .unwrap();
    let v = u.scale(0.4);
    let traj = evolve_pair(&model, 1.0, 0.0, &u, &v, &Schedule::new(0.01, 0.3, 2)).unwrap();
    let r = check_lemma3(&traj, 0.1, 1e-4).unwrap();
    assert!(r.abs_residual < 1e-10, "{}", r.abs_residual);
}

#[test]
fn lemma3_two_mode_pair() {
    let model = torus(64);
    let grid = Grid::new(&model).unwrap();
    let u = real(&grid, |x| 2.0 + (2.0 * PI * x[0]).cos());
    let v = real(&grid, |x| 0.5 * (2.0 * PI * x[1]).sin());
    let traj = evolve_pair(&model, 1.0, 0.0, &u, &v, &Schedule::new(0.01, 0.3, 2)).unwrap();
    let r = check_lemma3(&traj, 0.1, 1e-4).unwrap();
    assert!(r.rel_residual < 1e-5, "{}", r.rel_residual);
}

#[test]
fn random_torus_pairs_pass_the_suite() {
    for seed in [1, 2] {
        let traj = random_pair(&torus(64), 0.0, seed);
        for r in run_identity_suite(&traj, &[0.1], 1e-4).unwrap() {
            if r.identity == "q_inequality" {
                assert!(r.min_eigenvalue.unwrap() > -1e-5, "{r:?}");
            } else {
                assert!(r.rel_residual < 1e-5, "{r:?}");
            }
        }
    }
}

#[test]
fn random_cp1_pairs_pass_the_suite() {
    let model = ManifoldModel::fubini_study(64).unwrap();
    for eps in [0.0, 1.0] {
        let traj = random_pair(&model, eps, 1);
        for r in run_identity_suite(&traj, &[0.1], 1e-4).unwrap() {
            if r.identity == "q_inequality" {
                assert!(r.min_eigenvalue.unwrap() > -1e-5, "{r:?}");
            } else {
                assert!(r.rel_residual < 1e-5, "{r:?}");
            }
        }
    }
}

#[test]
fn residuals_converge_at_second_order() {
    let traj = random_pair(&torus(64), 0.0, 3);
    let dts = [4e-4, 2e-4, 1e-4];
    for check in [check_l_evolution, check_lemma1, check_lemma3] {
        let res: Vec<f64> = dts.iter().map(|&dt| check(&traj, 0.1, dt).unwrap().abs_residual).collect();
        let order = fit_order(&dts, &res).unwrap();
        assert!((1.8..=2.2).contains(&order), "order {order} from {res:?}");
        assert!((res[0] / res[1] - 4.0).abs() < 0.4, "{res:?}");
    }
}

#[test]
fn residuals_are_invariant_under_joint_rescaling() {
    let model = torus(32);
    let grid = Grid::new(&model).unwrap();
    let u = Generator::RandomBandlimited { offset: 1.0, amplitude: 0.5, max_mode: 2 }
        .sample(&grid, 5, 0)
        .unwrap();
    let v = Generator::RandomBandlimited { offset: 0.0, amplitude: 0.3, max_mode: 2 }
        .sample(&grid, 5, 1)
        .unwrap();
    let sched = Schedule::new(0.01, 0.3, 2);
    let base = evolve_pair(&model, 1.0, 0.0, &u, &v, &sched).unwrap();
    let scaled = evolve_pair(&model, 1.0, 0.0, &u.scale(7.0), &v.scale(7.0), &sched).unwrap();
    let a = run_identity_suite(&base, &[0.1], 1e-4).unwrap();
    let b = run_identity_suite(&scaled, &[0.1], 1e-4).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let scale = x.abs_residual.max(1e-9);
        assert!((x.abs_residual - y.abs_residual).abs() < 1e-3 * scale, "{x:?} {y:?}");
    }
}

#[test]
fn halved_grid_still_passes_on_band_limited_data() {
    let traj = random_pair(&torus(32), 0.0, 1);
    for r in run_identity_suite(&traj, &[0.1], 1e-4).unwrap() {
        if r.identity != "q_inequality" {
            assert!(r.rel_residual < 1e-5, "{r:?}");
        }
    }
}

#[test]
fn q_inequality_defect_is_bounded_by_lemma_residuals() {
    let traj = random_pair(&torus(64), 0.0, 2);
    let lemma = check_lemma1(&traj, 0.1, 1e-4).unwrap();
    let q = check_q_evolution_inequality(&traj, 0.1, 1e-4).unwrap();
    assert!(q.min_eigenvalue.unwrap() >= -10.0 * lemma.abs_residual);
}

#[test]
fn heat_kernel_saturates_lemma1_and_the_q_inequality() {
    let model = torus(256);
    let sched = Schedule { t_start: 0.02, ..Schedule::new(0.02, 0.05, 3) };
    let traj = heat_kernel_pair(&model, 1.0, 0.0, &sched).unwrap();
    // ∂_tA = g/t² has an FD truncation of Δt²/t⁴ relative
    let r = check_lemma1(&traj, 0.03, 2e-5).unwrap();
    assert!(r.rel_residual < 1e-5, "{}", r.rel_residual);
    // Q ≈ 0, so D is pure time-discretisation error of ∂_tA
    let q = check_q_evolution_inequality(&traj, 0.03, 2e-5).unwrap();
    let min = q.min_eigenvalue.unwrap();
    assert!(min >= -10.0 * r.abs_residual, "{min} vs {}", r.abs_residual);
    assert!(q.rel_residual < 1e-5, "{}", q.rel_residual);
}

#[test]
fn probes_outside_the_trajectory_are_rejected() {
    let traj = constant_pair(&torus(16), 0.0);
    assert!(check_l_evolution(&traj, 0.005, 1e-2).is_err());
    assert!(check_lemma1(&traj, 0.1, 0.0).is_err());
}
