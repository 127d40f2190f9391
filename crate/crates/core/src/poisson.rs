//! Free-space Newtonian potential `φ_u = (4π|x|)^{-1} * u²` by zero-padded
//! FFT convolution on a doubled box, so periodic images never interact.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::spectral::fft_nd;

/// ∫ over the unit cube centred at 0 of 1/|x|.
pub const UNIT_CUBE_INVERSE_DISTANCE: f64 = 2.380_077_363_979_553;

#[derive(Clone, Debug)]
pub struct PoissonSolve {
    pub phi: Field,
    /// ‖−Δ_h φ − u²‖ / ‖u²‖ over interior points, with the 7-point stencil.
    pub residual: f64,
}

/// Convolution engine for one 3D grid; the kernel transform is computed once.
#[derive(Clone)]
pub struct PoissonSolver {
    grid: Grid,
    kernel_hat: Vec<Complex64>,
}

impl PoissonSolver {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::Unsupported(format!(
                "free-space Poisson solve needs dim = 3 (got {})",
                grid.dim()
            )));
        }
        let n = grid.n();
        let m = 2 * n;
        let h = grid.spacing();
        let vol = grid.cell_volume();
        let self_term = vol * UNIT_CUBE_INVERSE_DISTANCE / (4.0 * PI * h);
        let offset = |i: usize| -> f64 {
            let s = if i < n { i as f64 } else { i as f64 - m as f64 };
            s * h
        };
        let mut kernel = vec![Complex64::new(0.0, 0.0); m * m * m];
        for i in 0..m {
            let dx = offset(i);
            for j in 0..m {
                let dy = offset(j);
                for k in 0..m {
                    let dz = offset(k);
                    let r = (dx * dx + dy * dy + dz * dz).sqrt();
                    let g = if r == 0.0 { self_term } else { vol / (4.0 * PI * r) };
                    kernel[(i * m + j) * m + k] = Complex64::new(g, 0.0);
                }
            }
        }
        fft_nd(&mut kernel, 3, m, false);
        Ok(Self { grid, kernel_hat: kernel })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `G * rho` for an arbitrary density sampled on the grid.
    pub fn potential(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let m = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m * m];
        for i in 0..n {
            for j in 0..n {
                let src = (i * n + j) * n;
                let dst = (i * m + j) * m;
                for k in 0..n {
                    buf[dst + k] = Complex64::new(rho[src + k], 0.0);
                }
            }
        }
        fft_nd(&mut buf, 3, m, false);
        for (b, g) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= g;
        }
        fft_nd(&mut buf, 3, m, true);
        let mut out = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                let dst = (i * n + j) * n;
                let src = (i * m + j) * m;
                for k in 0..n {
                    out[dst + k] = buf[src + k].re;
                }
            }
        }
        out
    }

    pub fn phi(&self, u: &Field) -> Result<Field> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch("field and Poisson solver grids differ".into()));
        }
        let rho: Vec<f64> = u.values().iter().map(|v| v * v).collect();
        Ok(Field::from_vec(self.grid, self.potential(&rho)))
    }

    pub fn solve(&self, u: &Field) -> Result<PoissonSolve> {
        let phi = self.phi(u)?;
        let residual = interior_residual(&phi, u);
        Ok(PoissonSolve { phi, residual })
    }
}

fn interior_residual(phi: &Field, u: &Field) -> f64 {
    let g = *phi.grid();
    let n = g.n();
    let h2 = g.spacing() * g.spacing();
    let p = phi.values();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                let c = (i * n + j) * n + k;
                let lap = (p[c + n * n] + p[c - n * n] + p[c + n] + p[c - n] + p[c + 1] + p[c - 1]
                    - 6.0 * p[c])
                    / h2;
                let s = u.values()[c] * u.values()[c];
                num += (-lap - s).powi(2);
                den += s * s;
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Solve `−Δφ = u²` in free space (dim must be 3).
pub fn solve_phi(u: &Field) -> Result<PoissonSolve> {
    PoissonSolver::new(*u.grid())?.solve(u)
}

/// `¼ ∫ φ_u u²`.
pub fn nonlocal_energy(u: &Field, phi: &Field) -> Result<f64> {
    u.check_compatible(phi)?;
    let s: f64 = u.values().iter().zip(phi.values()).map(|(a, p)| p * a * a).sum();
    Ok(0.25 * s * u.grid().cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64) -> Grid {
        Grid::new(3, n, l).unwrap()
    }

    #[test]
    fn cube_constant_closed_form() {
        let closed = 3.0 * (2.0 + 3f64.sqrt()).ln() - PI / 2.0;
        assert!((closed - UNIT_CUBE_INVERSE_DISTANCE).abs() < 1e-14);
    }

    #[test]
    fn zero_source_gives_zero_potential() {
        let u = Field::zeros(grid(16, 4.0));
        let s = solve_phi(&u).unwrap();
        assert!(s.phi.is_zero());
        assert_eq!(nonlocal_energy(&u, &s.phi).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_3d() {
        let u = Field::zeros(Grid::new(1, 32, 4.0).unwrap());
        assert!(matches!(solve_phi(&u), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gaussian_matches_analytic_potential() {
        // u = exp(-r²) ⇒ u² = exp(-2r²) ⇒ φ(r) = (π/2)^{3/2} erf(√2 r) / (4π r)
        let g = grid(64, 6.0);
        let u = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let phi = solve_phi(&u).unwrap().phi;
        let center = g.ravel([32, 32, 32]);
        let exact0 = (PI / 2.0).powf(1.5) * 2.0 * 2f64.sqrt() / (4.0 * PI * PI.sqrt());
        let rel = (phi.values()[center] - exact0).abs() / exact0;
        assert!(rel < 5e-3, "rel {rel}");
    }

    #[test]
    fn quadratic_scaling_evenness_and_positivity() {
        let g = grid(16, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let u = Field::from_fn(g, |x| {
            let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
            (x[0] - 0.3) * (-r2).exp()
        });
        let solver = PoissonSolver::new(g).unwrap();
        let p1 = solver.phi(&u).unwrap();
        let p2 = solver.phi(&u.scale(2.0)).unwrap();
        for (a, b) in p1.values().iter().zip(p2.values()) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        assert_eq!(solver.phi(&u.neg()).unwrap(), p1);
        let max = p1.max_abs();
        assert!(p1.values().iter().all(|&v| v >= -1e-10 * max));
        let e1 = nonlocal_energy(&u, &p1).unwrap();
        let e2 = nonlocal_energy(&u.scale(2.0), &p2).unwrap();
        assert!((e2 - 16.0 * e1).abs() < 1e-12 * e2);
    }

    #[test]
    fn residual_is_small_for_resolved_source() {
        let g = grid(32, 6.0);
        let u = Field::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let s = solve_phi(&u).unwrap();
        assert!(s.residual < 0.1, "{}", s.residual);
    }
}
