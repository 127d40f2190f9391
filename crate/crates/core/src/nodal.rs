//! Nodal-component decomposition and the per-component scaling that
//! maximizes Φ_ε over the cone `{Σ s_i u_i : s_i > 0}`.
//!
//! A field is split into disjointly supported pieces, one per significant
//! nodal lobe. Scaling each piece independently and maximizing the energy
//! over the scalings pins every lobe to its own Nehari-type constraint, which
//! turns the unstable radial direction of a mountain-pass critical point into
//! a maximization and leaves the remaining directions to the descending flow.

use std::collections::VecDeque;

use crate::energy::{PenaltyState, Problem};
use crate::error::Result;
use crate::grid::Field;

/// Labelling of a field into nodal pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// Piece index per grid point (`None` where the field vanishes).
    pub labels: Vec<Option<usize>>,
    /// Flat index of the largest `|u|` in each piece's core.
    pub peaks: Vec<usize>,
    /// Sign of each piece (+1 or −1).
    pub signs: Vec<f64>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn pieces(&self, u: &Field) -> Vec<Field> {
        (0..self.len())
            .map(|c| {
                Field::from_vec(
                    *u.grid(),
                    u.values()
                        .iter()
                        .zip(&self.labels)
                        .map(|(&v, l)| if *l == Some(c) { v } else { 0.0 })
                        .collect(),
                )
            })
            .collect()
    }
}

fn neighbours(grid: &crate::grid::Grid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let m = grid.unravel(idx);
    let n = grid.n();
    (0..grid.dim()).flat_map(move |axis| {
        [1usize, n - 1].into_iter().map(move |step| {
            let mut mm = m;
            mm[axis] = (mm[axis] + step) % n;
            grid.ravel(mm)
        })
    })
}

/// Split `u` into nodal pieces. Cores are the connected sets where
/// `|u| > core_fraction · max|u|` with constant sign; every other nonzero
/// point joins the nearest core (by peak distance) of its own sign.
pub fn decompose(u: &Field, core_fraction: f64) -> Decomposition {
    let grid = *u.grid();
    let vals = u.values();
    let max = u.max_abs();
    let mut labels = vec![None; grid.len()];
    if max == 0.0 {
        return Decomposition { labels, peaks: vec![], signs: vec![] };
    }
    let tau = core_fraction * max;
    let mut core = vec![usize::MAX; grid.len()];
    let mut peaks = Vec::new();
    let mut signs = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if core[start] != usize::MAX || vals[start].abs() <= tau {
            continue;
        }
        let id = peaks.len();
        let sign = vals[start].signum();
        let mut peak = start;
        core[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            if vals[i].abs() > vals[peak].abs() || (vals[i].abs() == vals[peak].abs() && i < peak) {
                peak = i;
            }
            for j in neighbours(&grid, i) {
                if core[j] == usize::MAX && vals[j].abs() > tau && vals[j].signum() == sign {
                    core[j] = id;
                    queue.push_back(j);
                }
            }
        }
        peaks.push(peak);
        signs.push(sign);
    }
    let peak_points: Vec<[f64; 3]> = peaks.iter().map(|&p| grid.point(p)).collect();
    for i in 0..grid.len() {
        let v = vals[i];
        if v == 0.0 {
            continue;
        }
        if core[i] != usize::MAX {
            labels[i] = Some(core[i]);
            continue;
        }
        let x = grid.point(i);
        let dist2 = |c: usize| {
            let p = &peak_points[c];
            (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2)
        };
        let nearest = |same_sign: bool| {
            (0..peaks.len())
                .filter(|&c| !same_sign || signs[c] == v.signum())
                .min_by(|&a, &b| dist2(a).total_cmp(&dist2(b)).then(a.cmp(&b)))
        };
        labels[i] = nearest(true).or_else(|| nearest(false));
    }
    Decomposition { labels, peaks, signs }
}

/// Energy of `Σ s_i u_i` as an explicit function of the scalings.
#[derive(Clone, Debug)]
pub struct ScaledEnergy {
    /// `⟨−Δu_i, u_j⟩ + ∫ V u_i u_j`
    quad: Vec<Vec<f64>>,
    /// `∫ φ_{u_i} u_j²` (zero without coupling)
    nonlocal: Vec<Vec<f64>>,
    /// `∫ χ_ε u_i²`
    mass: Vec<f64>,
    /// `∫ K F(u_i)`
    nonlinear: Vec<f64>,
    p: f64,
    beta: f64,
}

impl ScaledEnergy {
    pub fn new(problem: &Problem, pieces: &[Field]) -> Result<Self> {
        let n = pieces.len();
        let vol = problem.grid().cell_volume();
        let spectral = problem.spectral();
        let lap: Vec<Vec<f64>> = pieces.iter().map(|u| spectral.apply_symbol(u.values(), |k2| k2)).collect();
        let mut quad = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let uj = pieces[j].values();
                let mut s: f64 = lap[i].iter().zip(uj).map(|(a, b)| a * b).sum();
                if i == j {
                    s += uj.iter().zip(problem.v_field()).map(|(a, v)| v * a * a).sum::<f64>();
                }
                quad[i][j] = s * vol;
            }
        }
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (quad[i][j] + quad[j][i]);
                quad[i][j] = m;
                quad[j][i] = m;
            }
        }
        let mut nonlocal = vec![vec![0.0; n]; n];
        if let Some(solver) = problem.poisson() {
            let phis: Vec<Vec<f64>> = pieces
                .iter()
                .map(|u| solver.potential(&u.values().iter().map(|v| v * v).collect::<Vec<_>>()))
                .collect();
            for i in 0..n {
                for j in 0..n {
                    nonlocal[i][j] =
                        vol * phis[i].iter().zip(pieces[j].values()).map(|(f, a)| f * a * a).sum::<f64>();
                }
            }
            for i in 0..n {
                for j in 0..i {
                    let m = 0.5 * (nonlocal[i][j] + nonlocal[j][i]);
                    nonlocal[i][j] = m;
                    nonlocal[j][i] = m;
                }
            }
        }
        let nl = problem.nonlinearity();
        let mass = pieces
            .iter()
            .map(|u| vol * u.values().iter().zip(problem.chi_field()).map(|(a, c)| c * a * a).sum::<f64>())
            .collect();
        let nonlinear = pieces
            .iter()
            .map(|u| vol * u.values().iter().zip(problem.k_field()).map(|(a, k)| k * nl.F(*a)).sum::<f64>())
            .collect();
        Ok(Self { quad, nonlocal, mass, nonlinear, p: nl.p, beta: problem.beta() })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    fn total_mass(&self, s: &[f64]) -> f64 {
        s.iter().zip(&self.mass).map(|(x, m)| x * x * m).sum()
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        let n = self.len();
        let mut e = 0.0;
        for i in 0..n {
            for j in 0..n {
                e += 0.5 * s[i] * s[j] * self.quad[i][j] + 0.25 * s[i] * s[i] * s[j] * s[j] * self.nonlocal[i][j];
            }
            e -= s[i].abs().powf(self.p) * self.nonlinear[i];
        }
        e + PenaltyState::from_mass(self.total_mass(s), self.beta).q
    }

    pub fn gradient_hessian(&self, s: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.len();
        let pen = PenaltyState::from_mass(self.total_mass(s), self.beta);
        let excess = (pen.mass - 1.0).max(0.0);
        let curv = if excess > 0.0 {
            4.0 * self.beta * (self.beta - 1.0) * excess.powf(self.beta - 2.0)
        } else {
            0.0
        };
        let mut g = vec![0.0; n];
        let mut h = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut d_sum = 0.0;
            for j in 0..n {
                g[k] += self.quad[k][j] * s[j];
                d_sum += s[j] * s[j] * self.nonlocal[k][j];
            }
            g[k] += s[k] * d_sum + pen.lambda * s[k] * self.mass[k]
                - self.p * s[k].abs().powf(self.p - 2.0) * s[k] * self.nonlinear[k];
            for l in 0..n {
                h[k][l] = self.quad[k][l]
                    + 2.0 * s[k] * s[l] * self.nonlocal[k][l]
                    + curv * s[k] * self.mass[k] * s[l] * self.mass[l];
            }
            h[k][k] += d_sum + pen.lambda * self.mass[k]
                - self.p * (self.p - 1.0) * s[k].abs().powf(self.p - 2.0) * self.nonlinear[k];
        }
        (g, h)
    }

    /// Maximize over `s ∈ (0, ∞)^n` starting from `s = 1` by safeguarded
    /// Newton ascent. Returns `None` if no interior maximum is found.
    pub fn maximize(&self) -> Option<Vec<f64>> {
        let n = self.len();
        if n == 0 {
            return Some(vec![]);
        }
        if self.nonlinear.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let scale = 1.0 + (0..n).map(|i| self.quad[i][i].abs()).fold(0.0, f64::max);
        // decoupled Nehari scaling as a starting point
        let mut s: Vec<f64> = (0..n)
            .map(|i| {
                let a = self.quad[i][i];
                if a > 0.0 { (a / (self.p * self.nonlinear[i])).powf(1.0 / (self.p - 2.0)) } else { 1.0 }
            })
            .collect();
        let mut e = self.value(&s);
        for _ in 0..200 {
            let (g, h) = self.gradient_hessian(&s);
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gnorm <= 1e-13 * scale {
                return Some(s);
            }
            let neg_h: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
            let dir = match cholesky_solve(&neg_h, &g) {
                Some(d) => d,
                None => g
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v / h[k][k].abs().max(1e-300))
                    .collect(),
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = s.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
                if cand.iter().zip(&s).all(|(c, a)| *c > 0.2 * a && *c < 5.0 * a) {
                    let ec = self.value(&cand);
                    if ec >= e - 1e-14 * scale {
                        s = cand;
                        e = ec;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                let (g, _) = self.gradient_hessian(&s);
                let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                return (gnorm <= 1e-9 * scale).then_some(s);
            }
        }
        let (g, _) = self.gradient_hessian(&s);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (gnorm <= 1e-9 * scale).then_some(s)
    }
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

#[derive(Clone, Debug)]
pub struct Normalized {
    pub field: Field,
    pub scales: Vec<f64>,
    pub components: usize,
}

/// Rescale every nodal piece of `u` to the energy-maximizing amplitude.
/// Fields without an interior maximum (or the zero field) are returned as is.
pub fn normalize(problem: &Problem, u: &Field, core_fraction: f64) -> Result<Normalized> {
    let dec = decompose(u, core_fraction);
    if dec.is_empty() {
        return Ok(Normalized { field: u.clone(), scales: vec![], components: 0 });
    }
    let pieces = dec.pieces(u);
    let model = ScaledEnergy::new(problem, &pieces)?;
    let Some(scales) = model.maximize() else {
        return Ok(Normalized { field: u.clone(), scales: vec![], components: dec.len() });
    };
    let values = u
        .values()
        .iter()
        .zip(&dec.labels)
        .map(|(&v, l)| match l {
            Some(c) => scales[*c] * v,
            None => v,
        })
        .collect();
    Ok(Normalized { field: Field::from_vec(*u.grid(), values), scales, components: dec.len() })
}
