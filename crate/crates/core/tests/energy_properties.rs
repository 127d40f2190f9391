mod common;

use common::{coupled_3d, gaussian, problem, random_smooth, reduced_1d};
use nodalflow_core::PenaltyState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn directional_derivative_error(p: &nodalflow_core::Problem, seed: u64, count: usize, spread: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let u = random_smooth(*p.grid(), &mut rng, spread, 1.5);
        let v = random_smooth(*p.grid(), &mut rng, spread, 1.0);
        let t = 1e-5;
        let fd = (p.energy(&u.lincomb(1.0, &v, t).unwrap()).unwrap().total
            - p.energy(&u.lincomb(1.0, &v, -t).unwrap()).unwrap().total)
            / (2.0 * t);
        let an = p.gradient(&u).unwrap().dot(&v).unwrap();
        worst = worst.max((fd - an).abs() / an.abs());
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_in_1d() {
    // spread past Λ_ε so that some draws switch the penalty on
    let worst = directional_derivative_error(&problem(reduced_1d(256)), 5, 50, 10.0);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn gradient_matches_finite_differences_in_3d() {
    let worst = directional_derivative_error(&problem(coupled_3d(32)), 6, 10, 4.0);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn penalty_is_zero_below_unit_mass_and_flat_at_the_threshold() {
    let beta = 2.125;
    for m in [0.0, 0.3, 0.999, 1.0] {
        let s = PenaltyState::from_mass(m, beta);
        assert_eq!((s.q, s.lambda), (0.0, 0.0));
    }
    let q = |m: f64| PenaltyState::from_mass(m, beta).q;
    // the one-sided excess makes the central difference h^{β−1}/2 → 0
    for h in [1e-3, 1e-5, 1e-7] {
        let fd = (q(1.0 + h) - q(1.0 - h)) / (2.0 * h);
        assert!(fd.abs() <= h.powf(beta - 1.0), "{h}: {fd}");
    }
    let h = 1e-6;
    // away from the threshold dQ/dmass = βκ = λ/2
    for m in [1.5, 3.0] {
        let fd = (q(m + h) - q(m - h)) / (2.0 * h);
        let half_lambda = 0.5 * PenaltyState::from_mass(m, beta).lambda;
        assert!((fd - half_lambda).abs() < 1e-6 * fd);
    }
}

#[test]
fn penalty_switches_on_outside_lambda_eps() {
    let p = problem(reduced_1d(256));
    let inside = gaussian(&p, 0.0, 1.0, 1.0);
    assert_eq!(p.penalty(&inside).q, 0.0);
    let outside = gaussian(&p, 12.0, 3.0, 1.0);
    let s = p.penalty(&outside);
    assert!(s.mass > 1.0 && s.q > 0.0 && s.lambda > 0.0);
    assert!(p.energy(&outside).unwrap().penalty > 0.0);
}

#[test]
fn functional_is_even() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in [problem(reduced_1d(256)), problem(coupled_3d(32))] {
        for _ in 0..3 {
            let u = random_smooth(*p.grid(), &mut rng, 4.0, 2.0);
            let a = p.energy(&u).unwrap().total;
            let b = p.energy(&u.neg()).unwrap().total;
            assert!((a - b).abs() <= 1e-12 * a.abs());
            let g = p.gradient(&u).unwrap();
            assert_eq!(p.gradient(&u.neg()).unwrap(), g.neg());
        }
    }
}

#[test]
fn dual_residual_vanishes_only_at_zero_here() {
    let p = problem(reduced_1d(256));
    assert_eq!(p.dual_residual(&nodalflow_core::Field::zeros(*p.grid())).unwrap(), 0.0);
    assert!(p.dual_residual(&gaussian(&p, 0.0, 1.0, 1.0)).unwrap() > 1e-3);
}
