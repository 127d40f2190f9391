//! A-posteriori certification of converged fields: penalty vanishing,
//! exponential decay, peak locations, exterior smallness and a local
//! Pohozaev identity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, Problem};
use crate::error::{Error, Result};
use crate::grid::{h1_norm, norm3, split_signs, Field, Grid};
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsParams {
    /// Physical depth δ for the concentration sets and exterior region.
    pub delta: f64,
    /// Decay fit uses points at least this far (rescaled) from the set.
    pub fit_start: f64,
    pub floor: f64,
    pub peak_fraction: f64,
    /// Minimum peak separation; `4h` when absent.
    pub peak_separation: Option<f64>,
    pub window_radius: f64,
    /// Pohozaev ball radius around the highest peak. When absent: half the
    /// distance to the nearest other peak, capped by the largest ball that
    /// fits in the grid.
    pub pohozaev_radius: Option<f64>,
}

impl Default for DiagnosticsParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            fit_start: 2.0,
            floor: 1e-12,
            peak_fraction: 0.1,
            peak_separation: None,
            window_radius: 2.0,
            pohozaev_radius: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyVerdict {
    pub mass: f64,
    pub verdict: bool,
}

/// The penalized equation reduces to the original one when `∫χ_ε u² ≤ 1`.
pub fn verify_unpenalized(problem: &Problem, u: &Field) -> PenaltyVerdict {
    let mass = problem.penalty(u).mass;
    PenaltyVerdict { mass, verdict: mass <= 1.0 }
}

/// Dual norm of the residual of the original system (penalty multiplier 0).
pub fn unpenalized_residual(problem: &Problem, u: &Field) -> Result<f64> {
    Ok(problem.dual_norm(&problem.gradient_with_multiplier(u, 0.0)?))
}

/// Radius (rescaled frame) of the ball around which solutions concentrate:
/// `B(δ/ε)` around the critical point when exactly one potential varies,
/// otherwise the interior set `U(δ)` scaled to `B((r − δ)/ε)`.
pub fn concentration_radius(cfg: &ModelConfig, delta: f64) -> f64 {
    if cfg.v.is_constant() != cfg.k.is_constant() {
        delta / cfg.eps
    } else {
        ((cfg.domain.radius - delta) / cfg.eps).max(0.0)
    }
}

/// Distance of a physical point to the critical set of the varying
/// potential. The builtin families are radial with their only critical
/// point at the origin; with both potentials constant the set is all of Λ.
pub fn critical_set_distance(cfg: &ModelConfig, x: &[f64; 3]) -> f64 {
    if cfg.v.is_constant() && cfg.k.is_constant() {
        (norm3(x) - cfg.domain.radius).max(0.0)
    } else {
        norm3(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate in `|u| ≈ C e^{−c·dist}`.
    pub c: f64,
    pub log_c: f64,
    pub r2: f64,
    pub points: usize,
    /// Radius of the ball distances are measured from.
    pub ball_radius: f64,
}

/// Least-squares fit of `ln|u|` against `−dist(x, B(ball_radius))`, using
/// the largest `|u|` in each distance shell of one grid spacing so that
/// nodal sets do not pollute the envelope. Returns `None` when fewer than
/// three shells qualify.
pub fn decay_fit_from(u: &Field, ball_radius: f64, fit_start: f64, floor: f64) -> Option<DecayFit> {
    let grid = u.grid();
    let h = grid.spacing();
    let mut shells: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
    for (i, &v) in u.values().iter().enumerate() {
        let d = (norm3(&grid.point(i)) - ball_radius).max(0.0);
        if d < fit_start {
            continue;
        }
        let bin = ((d - fit_start) / h) as usize;
        let e = shells.entry(bin).or_insert((d, 0.0));
        if v.abs() > e.1 {
            *e = (d, v.abs());
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        shells.values().filter(|(_, a)| *a >= floor).map(|(d, a)| (-d, a.ln())).unzip();
    let m = xs.len();
    if m < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let c = sxy / sxx;
    let log_c = my - c * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - log_c - c * x).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Some(DecayFit { c, log_c, r2, points: m, ball_radius })
}

pub fn decay_fit(problem: &Problem, u: &Field, delta: f64, params: &DiagnosticsParams) -> Option<DecayFit> {
    decay_fit_from(u, concentration_radius(problem.config(), delta), params.fit_start, params.floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    /// Rescaled-frame location `y`.
    pub y: [f64; 3],
    /// Physical location `εy`.
    pub eps_y: [f64; 3],
    pub value: f64,
    /// `dist(εy, 𝒜)`
    pub critical_distance: f64,
    /// `dist(εy, U(δ0))`
    pub interior_distance: f64,
    pub window_mass: f64,
}

/// Local maxima of `|u|` above `frac·‖u‖_∞`, greedily thinned so that kept
/// peaks are at least `separation` apart.
pub fn locate_peaks(problem: &Problem, u: &Field, frac: f64, separation: f64, window: f64, delta0: f64) -> Vec<Peak> {
    let grid = *u.grid();
    let vals = u.values();
    let max = u.max_abs();
    if max == 0.0 {
        return vec![];
    }
    let mut cands: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let a = vals[i].abs();
            a >= frac * max && stencil(&grid, i).all(|j| vals[j].abs() <= a)
        })
        .collect();
    cands.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        let x = grid.point(c);
        if kept.iter().all(|&k| dist(&grid.point(k), &x) >= separation) {
            kept.push(c);
        }
    }
    let cfg = problem.config();
    let vol = grid.cell_volume();
    let inner = (cfg.domain.radius - delta0).max(0.0);
    kept.into_iter()
        .map(|i| {
            let y = grid.point(i);
            let eps_y = cfg.physical(&y);
            let window_mass = vol
                * (0..grid.len())
                    .filter(|&j| dist(&grid.point(j), &y) < window)
                    .map(|j| vals[j] * vals[j])
                    .sum::<f64>();
            Peak {
                index: i,
                y,
                eps_y,
                value: vals[i],
                critical_distance: critical_set_distance(cfg, &eps_y),
                interior_distance: (norm3(&eps_y) - inner).max(0.0),
                window_mass,
            }
        })
        .collect()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Flat indices of the full `3^d` periodic neighbourhood (without the centre).
fn stencil(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let m = grid.unravel(idx);
    let n = grid.n();
    let d = grid.dim();
    (0..3usize.pow(d as u32)).filter(move |&code| code != (3usize.pow(d as u32) - 1) / 2).map(move |code| {
        let mut mm = m;
        let mut c = code;
        for axis in 0..d {
            mm[axis] = (mm[axis] + n + c % 3 - 1) % n;
            c /= 3;
        }
        grid.ravel(mm)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExteriorBound {
    pub delta: f64,
    pub sup: f64,
    pub ratio_eps3: f64,
    pub ratio_eps6: f64,
}

/// `sup |u|` over `|x| ≥ r/ε + δ` (rescaled), with ratios to `ε³` and `ε⁶`.
pub fn exterior_bound(problem: &Problem, u: &Field, delta: f64) -> ExteriorBound {
    let grid = u.grid();
    let r = problem.config().lambda_eps_radius() + delta;
    let sup = u
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| norm3(&grid.point(*i)) >= r)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let eps = problem.eps();
    ExteriorBound { delta, sup, ratio_eps3: sup / eps.powi(3), ratio_eps6: sup / eps.powi(6) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevResult {
    pub center: [f64; 3],
    pub radius: f64,
    pub direction: [f64; 3],
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Individual terms by name, for inspection.
    pub terms: Vec<(String, f64)>,
}

/// Tensor-product cubic Lagrange interpolation of grid samples at `x`; the
/// caller guarantees a two-cell margin to the box edge.
fn interpolate(grid: &Grid, values: &[f64], x: &[f64; 3]) -> f64 {
    let d = grid.dim();
    let h = grid.spacing();
    let mut base = [0usize; 3];
    let mut w = [[0.0; 4]; 3];
    for a in 0..d {
        let s = (x[a] + grid.half_width()) / h;
        let i = (s.floor() as usize).clamp(1, grid.n() - 3);
        base[a] = i - 1;
        let t = s - i as f64;
        // nodes at −1, 0, 1, 2
        w[a] = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
    }
    let mut acc = 0.0;
    for code in 0..4usize.pow(d as u32) {
        let mut m = base;
        let mut weight = 1.0;
        let mut c = code;
        for a in 0..d {
            m[a] += c % 4;
            weight *= w[a][c % 4];
            c /= 4;
        }
        acc += weight * values[grid.ravel(m)];
    }
    acc
}

/// Fourth-order central differences, lower order next to the box edge.
/// Used for `φ_u`, which is not periodic on the box.
fn finite_difference(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    (0..grid.len())
        .map(|i| {
            let m = grid.unravel(i);
            let at = |k: isize| {
                let mut mm = m;
                mm[axis] = (m[axis] as isize + k) as usize;
                values[grid.ravel(mm)]
            };
            let j = m[axis];
            if j >= 2 && j + 2 < n {
                (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
            } else if j >= 1 && j + 1 < n {
                (at(1) - at(-1)) / (2.0 * h)
            } else if j == 0 {
                (at(1) - at(0)) / h
            } else {
                (at(0) - at(-1)) / h
            }
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Surface nodes `(point, outward normal, weight)` on `∂B(center, radius)`.
fn sphere_nodes(dim: usize, center: &[f64; 3], radius: f64, h: f64) -> Vec<([f64; 3], [f64; 3], f64)> {
    match dim {
        1 => vec![
            ([center[0] + radius, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0),
            ([center[0] - radius, 0.0, 0.0], [-1.0, 0.0, 0.0], 1.0),
        ],
        2 => {
            let m = ((2.0 * PI * radius / h).ceil() as usize * 4).max(64);
            (0..m)
                .map(|i| {
                    let th = 2.0 * PI * i as f64 / m as f64;
                    let nu = [th.cos(), th.sin(), 0.0];
                    ([center[0] + radius * nu[0], center[1] + radius * nu[1], 0.0], nu, 2.0 * PI * radius / m as f64)
                })
                .collect()
        }
        _ => {
            let mt = ((PI * radius / h).ceil() as usize * 2).max(16);
            let mp = 2 * mt;
            let mut out = Vec::with_capacity(mt * mp);
            for (z, wz) in gauss_legendre(mt) {
                let s = (1.0 - z * z).sqrt();
                for j in 0..mp {
                    let ph = 2.0 * PI * j as f64 / mp as f64;
                    let nu = [s * ph.cos(), s * ph.sin(), z];
                    let x = [center[0] + radius * nu[0], center[1] + radius * nu[1], center[2] + radius * nu[2]];
                    out.push((x, nu, wz * 2.0 * PI / mp as f64 * radius * radius));
                }
            }
            out
        }
    }
}

/// Quadrature weights for the volume integral over the ball: exact
/// integration of the piecewise-linear interpolant in 1D, sub-sampled cell
/// fractions otherwise.
fn ball_weights(grid: &Grid, center: &[f64; 3], radius: f64) -> Vec<(usize, f64)> {
    let h = grid.spacing();
    if grid.dim() == 1 {
        let (a, b) = (center[0] - radius, center[0] + radius);
        let mut w = vec![0.0; grid.len()];
        for i in 0..grid.n() - 1 {
            let (x0, x1) = (grid.axis_coord(i), grid.axis_coord(i + 1));
            let (lo, hi) = (a.max(x0), b.min(x1));
            if hi <= lo {
                continue;
            }
            // ∫_lo^hi of the hat functions at x0 and x1
            let l0 = |x: f64| (x1 - x) / h;
            let l1 = |x: f64| (x - x0) / h;
            w[i] += 0.5 * (hi - lo) * (l0(lo) + l0(hi));
            w[i + 1] += 0.5 * (hi - lo) * (l1(lo) + l1(hi));
        }
        return w.into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect();
    }
    const SUB: usize = 8;
    let d = grid.dim();
    let vol = grid.cell_volume();
    let subs = SUB.pow(d as u32);
    (0..grid.len())
        .filter_map(|i| {
            let x = grid.point(i);
            let gap = dist(&x, center) - radius;
            if gap > h * (d as f64).sqrt() {
                return None;
            }
            if gap < -h * (d as f64).sqrt() {
                return Some((i, vol));
            }
            let inside = (0..subs)
                .filter(|&code| {
                    let mut c = code;
                    let mut y = x;
                    for yi in y.iter_mut().take(d) {
                        *yi += h * (((c % SUB) as f64 + 0.5) / SUB as f64 - 0.5);
                        c /= SUB;
                    }
                    dist(&y, center) < radius
                })
                .count();
            (inside > 0).then(|| (i, vol * inside as f64 / subs as f64))
        })
        .collect()
}

/// Both sides of the local Pohozaev identity on `B(center, radius)` with
/// direction `t = ∇V(ε·center)` (or `∇K` when that vanishes).
pub fn pohozaev_residual(problem: &Problem, u: &Field, center: &[f64; 3], radius: f64) -> Result<PohozaevResult> {
    let grid = *problem.grid();
    u.check_compatible(&Field::zeros(grid))?;
    let d = grid.dim();
    let h = grid.spacing();
    let lo = -grid.half_width() + 2.0 * h;
    let hi = grid.half_width() - 3.0 * h;
    for a in 0..d {
        if !(radius > 0.0) || center[a] - radius < lo || center[a] + radius > hi {
            return Err(Error::Geometry(format!(
                "ball of radius {radius} around {center:?} leaves the grid [{lo}, {hi}]"
            )));
        }
    }
    let cfg = problem.config();
    let eps = cfg.eps;
    let at = cfg.physical(center);
    let mut t = cfg.v.grad(&at);
    if norm3(&t) == 0.0 {
        t = cfg.k.grad(&at);
    }
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let nl = problem.nonlinearity();
    let xi = problem.penalty(u).lambda;
    let spectral = problem.spectral();
    let uv = u.values();
    let du: Vec<Vec<f64>> = (0..d).map(|a| spectral.derivative(uv, a)).collect();
    let phi = problem.phi(u)?;
    let dphi: Vec<Vec<f64>> = match &phi {
        Some(p) => (0..d).map(|a| finite_difference(&grid, p.values(), a)).collect(),
        None => vec![],
    };

    let mut vol_terms = [0.0; 4];
    for (i, w) in ball_weights(&grid, center, radius) {
        let x = grid.point(i);
        let px = cfg.physical(&x);
        let u2 = uv[i] * uv[i];
        vol_terms[0] += w * 0.5 * eps * u2 * dot(&cfg.v.grad(&px), &t);
        vol_terms[1] += w * 0.5 * xi * u2 * dot(&cfg.grad_chi_eps(&x), &t);
        vol_terms[2] += w * eps * nl.F(uv[i]) * dot(&cfg.k.grad(&px), &t);
        if !dphi.is_empty() {
            let gp: [f64; 3] = std::array::from_fn(|a| if a < d { dphi[a][i] } else { 0.0 });
            vol_terms[3] -= w * 0.5 * u2 * dot(&gp, &t);
        }
    }
    let mut surf = [0.0; 6];
    for (x, nu, w) in sphere_nodes(d, center, radius, h) {
        let tn = dot(&t, &nu);
        let uu = interpolate(&grid, uv, &x);
        let g: [f64; 3] = std::array::from_fn(|a| if a < d { interpolate(&grid, &du[a], &x) } else { 0.0 });
        let px = cfg.physical(&x);
        let u2 = uu * uu;
        let ph = phi.as_ref().map_or(0.0, |p| interpolate(&grid, p.values(), &x));
        surf[0] += w * 0.5 * ph * u2 * tn;
        surf[1] -= w * cfg.k.eval(&px) * nl.F(uu) * tn;
        surf[2] += w * 0.5 * dot(&g, &g) * tn;
        surf[3] -= w * dot(&g, &t) * dot(&g, &nu);
        surf[4] += w * 0.5 * cfg.v.eval(&px) * u2 * tn;
        surf[5] += w * 0.5 * xi * cfg.chi_eps(&x) * u2 * tn;
    }
    let lhs = vol_terms[0] + vol_terms[1];
    let rhs = vol_terms[2] + vol_terms[3] + surf.iter().sum::<f64>();
    let names = [
        "volume V", "volume chi", "volume K", "volume phi", "surface phi", "surface KF", "surface grad2",
        "surface grad t", "surface V", "surface chi",
    ];
    let terms = names
        .iter()
        .zip(vol_terms.iter().chain(surf.iter()))
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    Ok(PohozaevResult {
        center: *center,
        radius,
        direction: t,
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-12),
        terms,
    })
}

/// Largest ball around `center` that [`pohozaev_residual`] accepts.
pub fn largest_ball(grid: &Grid, center: &[f64; 3]) -> f64 {
    let h = grid.spacing();
    let lo = -grid.half_width() + 2.0 * h;
    let hi = grid.half_width() - 3.0 * h;
    (0..grid.dim()).map(|a| (center[a] - lo).min(hi - center[a])).fold(f64::INFINITY, f64::min) * (1.0 - 1e-9)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub energy: EnergyBreakdown,
    pub penalty_mass: f64,
    pub q_value: f64,
    pub unpenalized: bool,
    pub weak_residual: f64,
    pub unpenalized_residual: f64,
    pub plus_norm: f64,
    pub minus_norm: f64,
    pub h1: f64,
    pub linf: f64,
    pub exterior: ExteriorBound,
    pub decay: Option<DecayFit>,
    pub peaks: Vec<Peak>,
    pub max_peak_distance: Option<f64>,
    pub pohozaev: Option<PohozaevResult>,
    pub pohozaev_error: Option<String>,
    pub delta: f64,
    pub delta0: Option<f64>,
}

/// Full a-posteriori report for one converged field.
pub fn certify(problem: &Problem, u: &Field, delta0: Option<f64>, params: &DiagnosticsParams) -> Result<SolutionReport> {
    let delta = match delta0 {
        Some(d0) if params.delta >= d0 => 0.5 * d0,
        _ => params.delta,
    };
    let pen = problem.penalty(u);
    let (plus, minus) = split_signs(u);
    let grid = *problem.grid();
    let sep = params.peak_separation.unwrap_or(4.0 * grid.spacing());
    let peaks = locate_peaks(problem, u, params.peak_fraction, sep, params.window_radius, delta0.unwrap_or(delta));
    let max_peak_distance = peaks.iter().map(|p| p.critical_distance).reduce(f64::max);
    let (pohozaev, pohozaev_error) = match peaks.first() {
        Some(p) => {
            let radius = params.pohozaev_radius.unwrap_or_else(|| {
                let half_gap = peaks[1..].iter().map(|q| 0.5 * dist(&q.y, &p.y)).fold(f64::INFINITY, f64::min);
                largest_ball(&grid, &p.y).min(half_gap)
            });
            match pohozaev_residual(problem, u, &p.y, radius) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        None => (None, Some("no peaks".into())),
    };
    Ok(SolutionReport {
        energy: problem.energy(u)?,
        penalty_mass: pen.mass,
        q_value: pen.q,
        unpenalized: pen.mass <= 1.0,
        weak_residual: problem.dual_residual(u)?,
        unpenalized_residual: unpenalized_residual(problem, u)?,
        plus_norm: h1_norm(&plus),
        minus_norm: h1_norm(&minus),
        h1: h1_norm(u),
        linf: u.max_abs(),
        exterior: exterior_bound(problem, u, delta),
        decay: decay_fit(problem, u, delta, params),
        peaks,
        max_peak_distance,
        pohozaev,
        pohozaev_error,
        delta,
        delta0,
    })
}
