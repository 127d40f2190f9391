mod common;

use common::{gaussian, problem, random_smooth, reduced_1d};
use nodalflow_core::flow::{apply_a, cone_distances, descend, Classification, FlowParams};
use nodalflow_core::grid::{h1_norm, split_signs};
use nodalflow_core::Problem;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dipole(p: &Problem, sep: f64, amp: f64) -> nodalflow_core::Field {
    gaussian(p, -sep, amp, 1.0).sub(&gaussian(p, sep, amp, 1.0)).unwrap()
}

#[test]
fn energy_decreases_on_every_accepted_step() {
    let p = problem(reduced_1d(256));
    let r = descend(&p, &dipole(&p, 3.0, 2.0), &FlowParams::default()).unwrap();
    assert_eq!(r.classification, Classification::SignChangingCritical);
    for pair in r.history.windows(2) {
        if !pair[1].roundoff {
            assert!(pair[1].energy < pair[0].energy, "{:?}", pair);
        } else {
            assert!(pair[1].residual < pair[0].residual);
        }
    }
}

#[test]
fn flow_commutes_with_negation() {
    let p = problem(reduced_1d(256));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = random_smooth(*p.grid(), &mut rng, 5.0, 2.0);
    let params = FlowParams { max_iters: 60, ..FlowParams::default() };
    let a = descend(&p, &u0, &params).unwrap();
    let b = descend(&p, &u0.neg(), &params).unwrap();
    assert_eq!(b.u_final, a.u_final.neg());
    assert_eq!(a.history.len(), b.history.len());
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!((x.energy, x.residual, x.step), (y.energy, y.residual, y.step));
        assert_eq!((x.dplus, x.dminus), (y.dminus, y.dplus));
    }
}

#[test]
fn gradient_is_controlled_by_the_fixed_point_defect() {
    // Φ'(u) = L_u (u − A(u)) with L_u = −Δ + V + λ(u)χ, so the dual norm of
    // the gradient is at most max(1, sup(V + λχ)) ‖u − A(u)‖_{H¹}.
    let p = problem(reduced_1d(256));
    let params = FlowParams::default();
    let two_beta_minus_two = 2.0 * p.beta() - 2.0;
    let v_max = p.v_field().iter().cloned().fold(0.0, f64::max);
    let chi_max = p.chi_field().iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut c_eff: f64 = 0.0;
    for i in 0..30 {
        let u = random_smooth(*p.grid(), &mut rng, 10.0, [0.2, 1.0, 3.0][i % 3]);
        let w = h1_norm(&u.sub(&apply_a(&p, &u, &params).unwrap()).unwrap());
        let g = p.dual_residual(&u).unwrap();
        let bound = (v_max + p.penalty(&u).lambda * chi_max).max(1.0);
        assert!(g <= bound * w * (1.0 + 1e-9), "{g} > {bound} · {w}");
        c_eff = c_eff.max((g / w - 1.0).max(0.0) / h1_norm(&u).powf(two_beta_minus_two));
    }
    println!("effective C in ‖Φ'(u)‖ ≤ ‖u − A(u)‖(1 + C‖u‖^(2β−2)) at ε = 0.5: {c_eff:.4e}");
    assert!(c_eff.is_finite());
}

#[test]
fn operator_contracts_the_positive_cone_boundary() {
    let p = problem(reduced_1d(256));
    let params = FlowParams::default();
    for sigma in [1e-2, 1e-3] {
        for amp in [1.0, 2.0, 4.0] {
            let neg = gaussian(&p, -2.0, -amp, 1.0).map(|v| if v.abs() < 1e-300 { 0.0 } else { v });
            let pos = p.field(|x| {
                let s = 1.0 - (x[0] - 3.0).powi(2) / 1.5f64.powi(2);
                if s > 0.0 {
                    s.powi(4)
                } else {
                    0.0
                }
            });
            let (_, neg_part) = split_signs(&neg);
            let u = neg_part.add(&pos.scale(sigma / h1_norm(&pos))).unwrap();
            let s = cone_distances(&u, sigma).dminus;
            let (ap, _) = split_signs(&apply_a(&p, &u, &params).unwrap());
            assert!(h1_norm(&ap) <= 0.5 * s + 1e-10, "sigma {sigma} amp {amp}: {}", h1_norm(&ap));
        }
    }
}

#[test]
fn signed_start_stays_signed() {
    let p = problem(reduced_1d(256));
    let r = descend(&p, &gaussian(&p, 0.5, 2.0, 1.0), &FlowParams::default()).unwrap();
    assert_eq!(r.classification, Classification::SignedCritical);
    assert!(r.u_final.values().iter().all(|&v| v >= 0.0));
}

#[test]
fn invalid_parameters_are_rejected() {
    let p = problem(reduced_1d(256));
    let u = gaussian(&p, 0.0, 1.0, 1.0);
    let bad = FlowParams { backtrack: 1.5, ..FlowParams::default() };
    assert!(descend(&p, &u, &bad).is_err());
}
