//! Uniform periodic grids on the box `[-L, L)^dim` and real scalar fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Spectral;

/// Smallest admissible number of points per axis.
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3 (got {dim})")));
        }
        if n < MIN_POINTS {
            return Err(Error::Config(format!("grid too small: n = {n} < {MIN_POINTS}")));
        }
        if !n.is_power_of_two() {
            return Err(Error::Config(format!("points per axis must be a power of two (got {n})")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Config(format!("box half-width must be positive (got {half_width})")));
        }
        Ok(Self { dim, n, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of the `i`-th sample along any axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Per-axis indices of a flat (row-major) index; unused axes are 0.
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = idx;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn ravel(&self, multi: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.n + multi[axis])
    }

    /// Physical point of a flat index (unused coordinates are 0).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.axis_coord(m[axis]);
        }
        x
    }

    /// Flat index of the mirror point `x -> -x`.
    pub fn reflect(&self, idx: usize) -> usize {
        let mut m = self.unravel(idx);
        for v in m.iter_mut().take(self.dim) {
            *v = (self.n - *v) % self.n;
        }
        self.ravel(m)
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

pub(crate) fn norm3(x: &[f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Consistency(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Wrap values that are finite by construction.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64; 3]) -> f64>(grid: Grid, f: F) -> Self {
        let values = grid.points().map(|x| f(&x)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        Field::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(Field::from_vec(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn neg(&self) -> Field {
        self.map(|v| -v)
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |x, y| x - y)
    }

    /// Quadrature of the pointwise product (weight h^dim).
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_volume())
    }

    /// Quadrature of the field itself.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spectral Laplacian Δu on the periodic box.
pub fn laplacian(u: &Field) -> Field {
    let spectral = Spectral::new(*u.grid());
    Field::from_vec(*u.grid(), spectral.apply_symbol(u.values(), |k2| -k2))
}

/// Spectral gradient components (one field per axis).
pub fn gradient(u: &Field) -> Vec<Field> {
    let spectral = Spectral::new(*u.grid());
    (0..u.grid().dim())
        .map(|axis| Field::from_vec(*u.grid(), spectral.derivative(u.values(), axis)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    /// ‖∇u‖_{L²}; satisfies `h1² = grad² + l2²` exactly.
    pub grad: f64,
    pub h1: f64,
    pub linf: f64,
}

/// L², H¹ and L^∞ norms. The gradient part is the spectral quadratic form
/// ⟨−Δu, u⟩ so it integrates by parts exactly against [`laplacian`].
pub fn norms(u: &Field) -> Norms {
    let l2sq = u.dot(u).unwrap_or(0.0);
    let gradsq = grad_norm_sq(u);
    Norms {
        l2: l2sq.sqrt(),
        grad: gradsq.sqrt(),
        h1: (gradsq + l2sq).sqrt(),
        linf: u.max_abs(),
    }
}

pub fn grad_norm_sq(u: &Field) -> f64 {
    Spectral::new(*u.grid()).parseval(u.values(), |k2| k2)
}

pub fn h1_norm(u: &Field) -> f64 {
    Spectral::new(*u.grid()).parseval(u.values(), |k2| k2 + 1.0).sqrt()
}

/// H¹ inner product (∇u·∇v + uv), spectral.
pub fn h1_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_compatible(v)?;
    let s = Spectral::new(*u.grid());
    let a = s.forward(u.values());
    let b = s.forward(v.values());
    let total = u.grid().len() as f64;
    let sum: f64 = a
        .iter()
        .zip(&b)
        .zip(s.k_squared())
        .map(|((x, y), k2)| (k2 + 1.0) * (x * y.conj()).re)
        .sum();
    Ok(sum * u.grid().cell_volume() / total)
}

/// ‖u‖_{L^p} by grid quadrature; `p = 2` is bit-identical to `norms(u).l2`.
pub fn lp_norm(u: &Field, p: f64) -> f64 {
    if p == 2.0 {
        return u.dot(u).unwrap_or(0.0).sqrt();
    }
    let sum: f64 = u.values().iter().map(|v| v.abs().powf(p)).sum();
    (sum * u.grid().cell_volume()).powf(1.0 / p)
}

/// Pointwise split `u = u⁺ + u⁻` with `u⁺ = max(u, 0)`, `u⁻ = min(u, 0)`.
pub fn split_signs(u: &Field) -> (Field, Field) {
    let plus = u.map(|v| if v > 0.0 { v } else { 0.0 });
    let minus = u.map(|v| if v < 0.0 { v } else { 0.0 });
    (plus, minus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 8, 1.0).is_err());
        assert!(Grid::new(4, 32, 1.0).is_err());
        assert!(Grid::new(1, 48, 1.0).is_err());
        assert!(Grid::new(1, 32, 0.0).is_err());
        let g = Grid::new(2, 16, 4.0).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.spacing(), 0.5);
    }

    #[test]
    fn ravel_roundtrip_and_reflection() {
        let g = Grid::new(3, 16, 2.0).unwrap();
        for idx in [0, 1, 17, 300, 4095] {
            assert_eq!(g.ravel(g.unravel(idx)), idx);
            let x = g.point(idx);
            let r = g.point(g.reflect(idx));
            for a in 0..3 {
                let expect = if x[a] == -2.0 { -2.0 } else { -x[a] };
                assert!((r[a] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(2, 32, 3.0).unwrap();
        let u = Field::from_fn(g, |_| 1.0);
        assert!(laplacian(&u).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_sine_eigenfunction() {
        let l = 5.0;
        let g = Grid::new(1, 64, l).unwrap();
        let u = Field::from_fn(g, |x| (PI * x[0] / l).sin());
        let lap = laplacian(&u);
        let k2 = (PI / l).powi(2);
        let err = lap
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a + k2 * b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn laplacian_is_linear() {
        let g = Grid::new(1, 64, 6.0).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp());
        let v = Field::from_fn(g, |x| (-(x[0] - 1.0).powi(2)).exp() * x[0]);
        let lhs = laplacian(&u.lincomb(2.0, &v, -3.0).unwrap());
        let rhs = laplacian(&u).lincomb(2.0, &laplacian(&v), -3.0).unwrap();
        let diff = lhs.sub(&rhs).unwrap().max_abs();
        assert!(diff < 1e-12 * (1.0 + lhs.max_abs()), "{diff}");
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = Grid::new(1, 32, 2.0).unwrap();
        let n = norms(&Field::zeros(g));
        assert_eq!((n.l2, n.h1, n.linf, n.grad), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(lp_norm(&Field::zeros(g), 4.5), 0.0);
    }

    #[test]
    fn gaussian_l2_norm_matches_closed_form() {
        let g = Grid::new(1, 256, 16.0).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp());
        let l2sq = norms(&u).l2.powi(2);
        assert!((l2sq - (PI / 2.0).sqrt()).abs() < 1e-6, "{l2sq}");
    }

    #[test]
    fn h1_decomposes_into_gradient_and_l2() {
        let g = Grid::new(2, 32, 4.0).unwrap();
        let u = Field::from_fn(g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp() * (1.0 + x[0]));
        let n = norms(&u);
        assert!((n.h1 * n.h1 - (n.grad * n.grad + n.l2 * n.l2)).abs() < 1e-12 * n.h1 * n.h1);
        assert!((h1_norm(&u) - n.h1).abs() < 1e-12 * n.h1);
        assert!((h1_inner(&u, &u).unwrap() - n.h1 * n.h1).abs() < 1e-12 * n.h1 * n.h1);
    }

    #[test]
    fn lp_two_equals_l2() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let u = Field::from_fn(g, |x| x[0].sin() * (-x[0] * x[0]).exp());
        assert_eq!(lp_norm(&u, 2.0), norms(&u).l2);
    }

    #[test]
    fn split_signs_examples() {
        let g = Grid::new(1, 32, 2.0).unwrap();
        let u = Field::from_fn(g, |_| -3.0);
        let (p, m) = split_signs(&u);
        assert!(p.is_zero());
        assert!(m.values().iter().all(|&v| v == -3.0));

        let u = Field::from_fn(g, |x| x[0]);
        let (p, m) = split_signs(&u);
        for ((x, a), b) in g.points().zip(p.values()).zip(m.values()) {
            assert_eq!(*a, x[0].max(0.0));
            assert_eq!(*b, x[0].min(0.0));
        }
        assert_eq!(p.add(&m).unwrap(), u);
    }

    #[test]
    fn gradient_matches_derivative() {
        let g = Grid::new(1, 128, 10.0).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp());
        let du = &gradient(&u)[0];
        for (x, d) in g.points().zip(du.values()) {
            let exact = -2.0 * x[0] * (-x[0] * x[0]).exp();
            assert!((d - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_ops_reject_mismatched_grids() {
        let a = Field::zeros(Grid::new(1, 32, 2.0).unwrap());
        let b = Field::zeros(Grid::new(1, 64, 2.0).unwrap());
        assert!(matches!(a.add(&b), Err(Error::GridMismatch(_))));
        assert!(a.dot(&b).is_err());
    }
}
