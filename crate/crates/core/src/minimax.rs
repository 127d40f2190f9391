//! Multi-start search for sign-changing critical points over spheres
//! spanned by disjointly supported bumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::flow::{self, Classification, FlowParams, FlowResult};
use crate::grid::{h1_norm, norm3, Field};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Bump support radius in the rescaled frame.
    pub bump_radius: f64,
    /// Gap between neighbouring supports.
    pub bump_gap: f64,
    /// Amplitude `R`; found by a doubling sweep when absent.
    pub amplitude: Option<f64>,
    /// Starts run concurrently per round.
    pub batch: usize,
    /// Maximum starts per basis size. A size is abandoned early once a
    /// round produces nothing new.
    pub budget: usize,
    pub dedup_distance: f64,
    pub dedup_energy: f64,
    /// Certification bound on the dual residual of stored solutions.
    pub certify_tol: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            bump_radius: 2.5,
            bump_gap: 0.5,
            amplitude: None,
            batch: 8,
            budget: 64,
            dedup_distance: 1e-3,
            dedup_energy: 1e-6,
            certify_tol: 1e-8,
        }
    }
}

/// Disjointly supported bumps `v_1..v_n`, each of unit H¹ norm.
#[derive(Clone, Debug)]
pub struct BumpBasis {
    pub centers: Vec<[f64; 3]>,
    pub radius: f64,
    pub amplitude: f64,
    pub fields: Vec<Field>,
}

impl BumpBasis {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `R Σ t_i v_i`
    pub fn combine(&self, t: &[f64]) -> Field {
        let grid = *self.fields[0].grid();
        let mut values = vec![0.0; grid.len()];
        for (v, &ti) in self.fields.iter().zip(t) {
            for (acc, x) in values.iter_mut().zip(v.values()) {
                *acc += self.amplitude * ti * x;
            }
        }
        Field::from_vec(grid, values)
    }
}

/// Profile `(1 − r²/ρ²)⁴` on `r < ρ`, zero outside.
fn profile(r2: f64, radius: f64) -> f64 {
    let s = 1.0 - r2 / (radius * radius);
    if s > 0.0 { s.powi(4) } else { 0.0 }
}

/// `n` bumps on a line through the origin along the first axis, spaced
/// `2ρ + gap` apart and required to lie inside `Λ_ε`.
pub fn build_bumps(problem: &Problem, n: usize, amplitude: f64, radius: f64, gap: f64) -> Result<BumpBasis> {
    if n == 0 {
        return Err(Error::Config("bump basis needs n >= 1".into()));
    }
    if !(radius > 0.0 && gap >= 0.0 && amplitude > 0.0) {
        return Err(Error::Config(format!(
            "bump radius, gap and amplitude must be positive (got {radius}, {gap}, {amplitude})"
        )));
    }
    let spacing = 2.0 * radius + gap;
    let centers: Vec<[f64; 3]> =
        (0..n).map(|i| [(i as f64 - (n as f64 - 1.0) / 2.0) * spacing, 0.0, 0.0]).collect();
    let room = problem.config().lambda_eps_radius();
    let extent = centers.iter().map(norm3).fold(0.0, f64::max) + radius;
    if extent > room {
        return Err(Error::Config(format!(
            "{n} bumps of radius {radius} need a localization radius of {extent:.3} but Λ_ε has radius {room:.3}; use fewer bumps or a smaller eps"
        )));
    }
    let grid = *problem.grid();
    let h = grid.spacing();
    if radius < 2.0 * h {
        return Err(Error::Config(format!("bump radius {radius} is under-resolved on a grid with spacing {h}")));
    }
    let fields = centers
        .iter()
        .map(|c| {
            let f = problem.field(|x| {
                let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
                profile(r2, radius)
            });
            let norm = h1_norm(&f);
            f.scale(1.0 / norm)
        })
        .collect();
    Ok(BumpBasis { centers, radius, amplitude, fields })
}

/// First nonzero component positive.
fn canonical(mut t: Vec<f64>) -> Vec<f64> {
    if let Some(first) = t.iter().copied().find(|v| *v != 0.0) {
        if first < 0.0 {
            t.iter_mut().for_each(|v| *v = -*v);
        }
    }
    t
}

/// Coefficient vectors on the unit sphere of `ℝⁿ`: the alternating vector
/// `(1, −1, 1, …)/√n` followed by pseudo-random directions. Antipodal
/// duplicates are removed since the functional is even.
pub fn sphere_coefficients(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(m);
    if m == 0 || n == 0 {
        return out;
    }
    let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (n as f64).sqrt()).collect();
    out.push(alt);
    if n == 1 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0;
    while out.len() < m && attempts < 100 * m {
        attempts += 1;
        let t: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        let t = canonical(t.into_iter().map(|v| v / norm).collect());
        let duplicate = out.iter().any(|s| s.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < 1e-20);
        if !duplicate {
            out.push(t);
        }
    }
    out
}

pub fn sphere_starts(basis: &BumpBasis, m: usize, seed: u64) -> Vec<Field> {
    sphere_coefficients(basis.len(), m, seed).iter().map(|t| basis.combine(t)).collect()
}

/// Smallest `R = 2^j` for which `Φ_ε(R Σ t_i v_i) < 0` on every sampled
/// direction.
pub fn amplitude_threshold(problem: &Problem, basis: &BumpBasis, directions: usize, seed: u64) -> Result<f64> {
    let dirs = sphere_coefficients(basis.len(), directions, seed);
    let mut probe = basis.clone();
    let mut r = 1.0;
    for _ in 0..60 {
        probe.amplitude = r;
        let mut all_negative = true;
        for t in &dirs {
            if problem.energy(&probe.combine(t))?.total >= 0.0 {
                all_negative = false;
                break;
            }
        }
        if all_negative {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::Config("energy stays nonnegative on the bump sphere for all amplitudes tried".into()))
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Field,
    pub energy: f64,
    pub dual_residual: f64,
    /// Number of bumps in the start that produced it.
    pub basis_size: usize,
    pub coefficients: Vec<f64>,
    pub flow: FlowResult,
}

#[derive(Clone, Debug)]
pub struct SolutionSet {
    /// Sorted by energy.
    pub solutions: Vec<Solution>,
    pub requested: usize,
    pub starts_run: usize,
    /// Fewer than `requested` solutions were found within the budget.
    pub partial: bool,
}

impl SolutionSet {
    pub fn energies(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.energy).collect()
    }
}

fn l2_distance_mod_sign(a: &Field, b: &Field) -> f64 {
    let d1 = a.sub(b).map(|d| d.dot(&d).unwrap_or(f64::INFINITY)).unwrap_or(f64::INFINITY);
    let d2 = a.add(b).map(|d| d.dot(&d).unwrap_or(f64::INFINITY)).unwrap_or(f64::INFINITY);
    d1.min(d2).sqrt()
}

fn is_duplicate(a: &Solution, b: &Solution, params: &SearchParams) -> bool {
    let gap = (a.energy - b.energy).abs() / a.energy.abs().max(b.energy.abs()).max(1e-300);
    let na = a.u.dot(&a.u).unwrap_or(0.0).sqrt();
    let nb = b.u.dot(&b.u).unwrap_or(0.0).sqrt();
    gap <= params.dedup_energy && l2_distance_mod_sign(&a.u, &b.u) < params.dedup_distance * na.max(nb)
}

/// Run descents from bump-sphere starts with `n = 2, …, k + 1` bumps until
/// `k` distinct sign-changing critical points are found or the start budget
/// is spent.
pub fn find_solutions(
    problem: &Problem,
    k: usize,
    search: &SearchParams,
    flow_params: &FlowParams,
    seed: u64,
) -> Result<SolutionSet> {
    flow_params.check()?;
    let mut found: Vec<Solution> = Vec::new();
    let mut starts_run = 0;
    if k == 0 {
        return Ok(SolutionSet { solutions: found, requested: 0, starts_run, partial: false });
    }
    for n in 2..=k + 1 {
        let mut basis = build_bumps(problem, n, 1.0, search.bump_radius, search.bump_gap)?;
        basis.amplitude = match search.amplitude {
            Some(r) => r,
            None => amplitude_threshold(problem, &basis, 50, seed ^ 0x5eed)?,
        };
        let coeffs = sphere_coefficients(n, search.budget, seed.wrapping_add(n as u64));
        for round in coeffs.chunks(search.batch.max(1)) {
            starts_run += round.len();
            let runs: Vec<Result<FlowResult>> =
                round.par_iter().map(|t| flow::descend(problem, &basis.combine(t), flow_params)).collect();
            let before = found.len();
            for (t, run) in round.iter().zip(runs) {
                let result = match run {
                    Ok(r) => r,
                    Err(Error::Solver { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if result.classification != Classification::SignChangingCritical {
                    continue;
                }
                let dual_residual = problem.dual_residual(&result.u_final)?;
                if !(dual_residual < search.certify_tol) {
                    continue;
                }
                let energy = problem.energy(&result.u_final)?.total;
                let cand = Solution {
                    u: result.u_final.clone(),
                    energy,
                    dual_residual,
                    basis_size: n,
                    coefficients: t.clone(),
                    flow: result,
                };
                if !found.iter().any(|s| is_duplicate(s, &cand, search)) {
                    found.push(cand);
                }
            }
            if found.len() >= k || found.len() == before {
                break;
            }
        }
        if found.len() >= k {
            break;
        }
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    found.truncate(k);
    let set = SolutionSet { partial: found.len() < k, solutions: found, requested: k, starts_run };
    recertify(problem, &set, search, flow_params)?;
    Ok(set)
}

/// Re-check every stored solution; a failure is an internal inconsistency.
pub fn recertify(problem: &Problem, set: &SolutionSet, search: &SearchParams, flow_params: &FlowParams) -> Result<()> {
    for (j, s) in set.solutions.iter().enumerate() {
        let r = problem.dual_residual(&s.u)?;
        if !(r < search.certify_tol) {
            return Err(Error::Consistency(format!("solution {j}: dual residual {r:.3e} above tolerance")));
        }
        if flow::classify(&s.u, flow_params.rho_fraction) != Classification::SignChangingCritical {
            return Err(Error::Consistency(format!("solution {j} is not sign-changing")));
        }
    }
    for w in set.solutions.windows(2) {
        if w[1].energy < w[0].energy {
            return Err(Error::Consistency("solution energies are not sorted".into()));
        }
    }
    Ok(())
}
