//! The auxiliary operator `A_ε` and the descending flow built on it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::grid::{h1_norm, split_signs, Field};
use crate::nodal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub max_iters: usize,
    /// Absolute stopping tolerance on `‖u − A(u)‖_{H¹}`.
    pub tol: f64,
    pub step0: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub min_step: f64,
    /// Relative residual target of the linear solve inside `A`.
    pub linear_tol: f64,
    pub linear_max_iters: usize,
    /// Rescale every nodal component to its energy-maximizing amplitude
    /// after each step.
    pub normalize: bool,
    /// Core threshold (fraction of `max|u|`) for the nodal decomposition.
    pub core_fraction: f64,
    /// `ρ_min = rho_fraction · ‖u‖_{H¹}` for the sign classification.
    pub rho_fraction: f64,
    pub energy_floor: f64,
    pub norm_cap: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-9,
            step0: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            min_step: 1e-12,
            linear_tol: 1e-12,
            linear_max_iters: 5000,
            normalize: true,
            core_fraction: 0.05,
            rho_fraction: 1e-3,
            energy_floor: -1e12,
            norm_cap: 1e10,
        }
    }
}

impl FlowParams {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("flow parameters: {m}")));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.step0 > 0.0 && self.step0 <= 1.0) {
            return bad("step0 must lie in (0, 1]");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return bad("linear_tol must lie in (0, 1)");
        }
        if !(self.core_fraction > 0.0 && self.core_fraction < 1.0) {
            return bad("core_fraction must lie in (0, 1)");
        }
        if !(self.rho_fraction > 0.0 && self.rho_fraction < 1.0) {
            return bad("rho_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Solve `(−Δ + V + φ_u + λχ_ε) v = K f(u)` by preconditioned conjugate
/// gradients with the spectral preconditioner `(−Δ + a1)^{-1}`.
pub fn apply_a(problem: &Problem, u: &Field, params: &FlowParams) -> Result<Field> {
    let phi = problem.phi(u)?;
    let lambda = problem.penalty(u).lambda;
    apply_a_with(problem, u, phi.as_ref(), lambda, params)
}

fn apply_a_with(
    problem: &Problem,
    u: &Field,
    phi: Option<&Field>,
    lambda: f64,
    params: &FlowParams,
) -> Result<Field> {
    let grid = *problem.grid();
    let nl = problem.nonlinearity();
    let coef: Vec<f64> = (0..grid.len())
        .map(|i| {
            problem.v_field()[i] + lambda * problem.chi_field()[i] + phi.map_or(0.0, |p| p.values()[i])
        })
        .collect();
    let b: Vec<f64> = u.values().iter().zip(problem.k_field()).map(|(&x, k)| k * nl.f(x)).collect();
    let spectral = problem.spectral();
    let a1 = problem.config().a1();
    let op = |x: &[f64]| -> Vec<f64> {
        let mut y = spectral.apply_symbol(x, |k2| k2);
        for i in 0..y.len() {
            y[i] += coef[i] * x[i];
        }
        y
    };
    // Where the penalty dominates the coefficient, rescale both sides by
    // `D = coef / c0` so the spectral preconditioner still sees an O(1)
    // problem there. `D ≡ 1` whenever the penalty is inactive.
    let c0 = (0..grid.len())
        .map(|i| problem.v_field()[i] + phi.map_or(0.0, |p| p.values()[i]))
        .fold(a1, f64::max);
    let scale: Vec<f64> = coef.iter().map(|&c| (c / c0).max(1.0).sqrt().recip()).collect();
    let precond = |r: &[f64]| {
        let s: Vec<f64> = r.iter().zip(&scale).map(|(x, d)| x * d).collect();
        let mut y = spectral.apply_symbol(&s, |k2| 1.0 / (k2 + a1));
        for (v, d) in y.iter_mut().zip(&scale) {
            *v *= d;
        }
        y
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(Field::from_vec(grid, x));
    }
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for _ in 0..params.linear_max_iters {
        let ap = op(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= params.linear_tol {
            return Ok(Field::from_vec(grid, x));
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver { iterations: params.linear_max_iters, residual: rel })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityCheck {
    /// `⟨Φ'(u), u − A(u)⟩`
    pub lhs: f64,
    /// `min{1, a1} ‖u − A(u)‖²_{H¹}`
    pub rhs: f64,
    pub slack: f64,
    pub ok: bool,
}

pub fn coercivity_check(problem: &Problem, u: &Field, params: &FlowParams) -> Result<CoercivityCheck> {
    let w = u.sub(&apply_a(problem, u, params)?)?;
    let g = problem.gradient(u)?;
    let lhs = g.dot(&w)?;
    let rhs = problem.config().coercivity() * h1_norm(&w).powi(2);
    let slack = 1e-8 * (lhs.abs() + rhs);
    Ok(CoercivityCheck { lhs, rhs, slack, ok: lhs >= rhs - slack })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeGeometry {
    pub sigma: f64,
    /// Surrogate distance to the positive cone, `‖u⁻‖_{H¹}`.
    pub dplus: f64,
    /// Surrogate distance to the negative cone, `‖u⁺‖_{H¹}`.
    pub dminus: f64,
}

impl ConeGeometry {
    pub fn in_plus(&self) -> bool {
        self.dplus < self.sigma
    }

    pub fn in_minus(&self) -> bool {
        self.dminus < self.sigma
    }

    pub fn sign_changing(&self) -> bool {
        self.dplus > 0.0 && self.dminus > 0.0
    }
}

pub fn cone_distances(u: &Field, sigma: f64) -> ConeGeometry {
    let (plus, minus) = split_signs(u);
    ConeGeometry { sigma, dplus: h1_norm(&minus), dminus: h1_norm(&plus) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    SignChangingCritical,
    SignedCritical,
    MaxIters,
    Diverged,
}

impl Classification {
    pub fn converged(self) -> bool {
        matches!(self, Self::SignChangingCritical | Self::SignedCritical)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
    pub dplus: f64,
    pub dminus: f64,
    pub mass: f64,
    /// Step length that produced this iterate (0 for the initial one).
    pub step: f64,
    /// Accepted on residual decrease because the predicted energy decrease
    /// was below round-off.
    pub roundoff: bool,
}

pub const HISTORY_HEADER: &str = "iteration,energy,residual,dplus,dminus,mass,step,roundoff";

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub u_final: Field,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<HistoryRow>,
    pub classification: Classification,
    /// Line search could not find an admissible step.
    pub stalled: bool,
}

impl FlowResult {
    pub fn residual_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.residual).collect()
    }

    pub fn energy_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.energy).collect()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from(HISTORY_HEADER);
        s.push('\n');
        for r in &self.history {
            let _ = writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.iteration, r.energy, r.residual, r.dplus, r.dminus, r.mass, r.step, r.roundoff as u8
            );
        }
        s
    }
}

/// State of one iterate with everything the line search needs.
struct Iterate {
    u: Field,
    energy: f64,
    magnitude: f64,
    w: Field,
    residual: f64,
    mass: f64,
}

fn evaluate(problem: &Problem, u: Field, params: &FlowParams) -> Result<Iterate> {
    let phi = problem.phi(&u)?;
    let e = problem.energy_with_phi(&u, phi.as_ref());
    let pen = problem.penalty(&u);
    let a = apply_a_with(problem, &u, phi.as_ref(), pen.lambda, params)?;
    let w = u.sub(&a)?;
    let residual = h1_norm(&w);
    Ok(Iterate {
        magnitude: 1.0 + e.total.abs() + e.kinetic + e.linear + e.nonlocal + e.nonlinear,
        energy: e.total,
        u,
        w,
        residual,
        mass: pen.mass,
    })
}

fn prepare(problem: &Problem, u: Field, params: &FlowParams) -> Result<Field> {
    if params.normalize {
        Ok(nodal::normalize(problem, &u, params.core_fraction)?.field)
    } else {
        Ok(u)
    }
}

/// Sign classification of a converged field.
pub fn classify(u: &Field, rho_fraction: f64) -> Classification {
    let total = h1_norm(u);
    let cone = cone_distances(u, 0.0);
    let rho = rho_fraction * total;
    if total > 0.0 && cone.dplus >= rho && cone.dminus >= rho && cone.sign_changing() {
        Classification::SignChangingCritical
    } else {
        Classification::SignedCritical
    }
}

/// Damped flow `u ← u − s (u − A(u))` with Armijo backtracking, each
/// iterate rescaled componentwise when `params.normalize` is set.
pub fn descend(problem: &Problem, u0: &Field, params: &FlowParams) -> Result<FlowResult> {
    params.check()?;
    u0.check_compatible(&Field::zeros(*problem.grid()))?;
    if !u0.is_finite() {
        return Err(Error::Config("initial field is not finite".into()));
    }
    let coercivity = problem.config().coercivity();
    let mut cur = evaluate(problem, prepare(problem, u0.clone(), params)?, params)?;
    let mut history = Vec::new();
    let row = |it: &Iterate, iteration: usize, step: f64, roundoff: bool| {
        let cone = cone_distances(&it.u, 0.0);
        HistoryRow {
            iteration,
            energy: it.energy,
            residual: it.residual,
            dplus: cone.dplus,
            dminus: cone.dminus,
            mass: it.mass,
            step,
            roundoff,
        }
    };
    history.push(row(&cur, 0, 0.0, false));
    let mut step = params.step0;
    let finish = |cur: Iterate, history: Vec<HistoryRow>, iterations, classification, stalled| FlowResult {
        u_final: cur.u,
        iterations,
        residual: cur.residual,
        history,
        classification,
        stalled,
    };
    for iter in 1..=params.max_iters {
        if cur.residual < params.tol {
            let class = classify(&cur.u, params.rho_fraction);
            return Ok(finish(cur, history, iter - 1, class, false));
        }
        if !cur.energy.is_finite()
            || cur.energy < params.energy_floor
            || !(cur.u.max_abs() < params.norm_cap)
        {
            return Ok(finish(cur, history, iter - 1, Classification::Diverged, false));
        }
        let mut s = (step / params.backtrack).min(params.step0);
        let mut next = None;
        while s >= params.min_step {
            let cand = prepare(problem, cur.u.lincomb(1.0, &cur.w, -s)?, params)?;
            let phi = problem.phi(&cand)?;
            let e = problem.energy_with_phi(&cand, phi.as_ref()).total;
            let required = params.armijo * s * coercivity * cur.residual * cur.residual;
            if e <= cur.energy - required && e < cur.energy {
                next = Some((evaluate(problem, cand, params)?, false));
                break;
            }
            if required < 1e-13 * cur.magnitude && e <= cur.energy + 1e-13 * cur.magnitude {
                let it = evaluate(problem, cand, params)?;
                if it.residual < cur.residual {
                    next = Some((it, true));
                    break;
                }
            }
            s *= params.backtrack;
        }
        match next {
            Some((it, roundoff)) => {
                step = s;
                history.push(row(&it, iter, s, roundoff));
                cur = it;
            }
            None => {
                let class = if cur.residual < params.tol {
                    classify(&cur.u, params.rho_fraction)
                } else {
                    Classification::MaxIters
                };
                return Ok(finish(cur, history, iter - 1, class, true));
            }
        }
    }
    let class = if cur.residual < params.tol {
        classify(&cur.u, params.rho_fraction)
    } else {
        Classification::MaxIters
    };
    Ok(finish(cur, history, params.max_iters, class, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::config_1d;
    use crate::model::PotentialSpec;

    fn problem() -> Problem {
        let mut cfg = config_1d();
        cfg.k = PotentialSpec::Constant { value: 1.0 };
        cfg.domain.radius = 4.0;
        cfg.n = 256;
        Problem::new(cfg).unwrap()
    }

    fn bump(p: &Problem, c: f64, a: f64) -> Field {
        p.field(|x| {
            let r2 = (x[0] - c).powi(2);
            if r2 < 9.0 { a * (1.0 - r2 / 9.0).powi(4) } else { 0.0 }
        })
    }

    #[test]
    fn zero_field_is_a_fixed_point() {
        let p = problem();
        let z = Field::zeros(*p.grid());
        let params = FlowParams::default();
        assert!(apply_a(&p, &z, &params).unwrap().is_zero());
        let r = descend(&p, &z, &params).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.classification, Classification::SignedCritical);
        let c = coercivity_check(&p, &z, &params).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        assert!(c.ok);
    }

    #[test]
    fn a_is_odd_and_solves_linear_problem() {
        let p = problem();
        let params = FlowParams::default();
        let u = bump(&p, -2.0, 1.5).add(&bump(&p, 3.0, -0.8)).unwrap();
        let v = apply_a(&p, &u, &params).unwrap();
        assert_eq!(apply_a(&p, &u.neg(), &params).unwrap(), v.neg());
        // u − A(u) and the gradient are related by the positive operator
        let c = coercivity_check(&p, &u, &params).unwrap();
        assert!(c.ok && c.rhs > 0.0, "{c:?}");
    }

    #[test]
    fn cone_distances_of_signed_and_odd_fields() {
        let p = problem();
        let b = bump(&p, 0.0, 1.0);
        let c = cone_distances(&b, 1e-2);
        assert_eq!(c.dplus, 0.0);
        assert!(c.dminus > 0.0 && c.in_plus() && !c.in_minus());
        let dip = bump(&p, -3.0, 1.0).sub(&bump(&p, 3.0, 1.0)).unwrap();
        let c = cone_distances(&dip, 1e-2);
        assert!((c.dplus - c.dminus).abs() < 1e-12 * c.dplus);
        let perturbed = b.add(&bump(&p, 5.0, -1e-5)).unwrap();
        assert!(cone_distances(&perturbed, 1e-2).in_plus());
    }

    #[test]
    fn single_bump_converges_to_signed_solution() {
        let p = problem();
        let r = descend(&p, &bump(&p, 0.0, 2.0), &FlowParams::default()).unwrap();
        assert_eq!(r.classification, Classification::SignedCritical, "{:?}", r.history.last());
        assert!(r.u_final.values().iter().all(|&v| v >= 0.0));
        assert!(p.dual_residual(&r.u_final).unwrap() < 1e-8);
    }

    #[test]
    fn dipole_converges_to_sign_changing_solution() {
        let p = problem();
        let u0 = bump(&p, -3.5, 1.0).sub(&bump(&p, 3.5, 1.0)).unwrap();
        let params = FlowParams::default();
        let r = descend(&p, &u0, &params).unwrap();
        assert_eq!(r.classification, Classification::SignChangingCritical, "{:?}", r.history.last());
        let e = r.energy_history();
        for (row, pair) in r.history[1..].iter().zip(e.windows(2)) {
            if !row.roundoff {
                assert!(pair[1] < pair[0]);
            }
        }
        let neg = descend(&p, &u0.neg(), &params).unwrap();
        assert_eq!(neg.u_final, r.u_final.neg());
        assert_eq!(neg.energy_history(), e);
        let fixed = apply_a(&p, &r.u_final, &params).unwrap();
        assert!(h1_norm(&fixed.sub(&r.u_final).unwrap()) <= params.tol * (1.0 + h1_norm(&r.u_final)));
    }
}
