//! Multi-dimensional FFT helpers on the periodic box.
//!
//! Transforms are unnormalized forward / normalized inverse. Plans are cached
//! process-wide by length so repeated construction of [`Spectral`] is cheap.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place n-dimensional FFT of a row-major cube with `dim` axes of length `n`.
pub(crate) fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let total = data.len();
    debug_assert_eq!(total, n.pow(dim as u32));
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim.saturating_sub(1) {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Angular wavenumbers in FFT order for a periodic axis of `n` points and
/// period `period`. The Nyquist entry carries `+n/2`.
pub(crate) fn wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let base = 2.0 * PI / period;
    (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            base * signed
        })
        .collect()
}

/// Spectral toolkit bound to one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    k: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let k = wavenumbers(grid.n(), 2.0 * grid.half_width());
        Self { grid, k }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, self.grid.dim(), self.grid.n(), false);
        data
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        fft_nd(&mut spectrum, self.grid.dim(), self.grid.n(), true);
        spectrum.into_iter().map(|c| c.re).collect()
    }

    /// |k|² for every mode in FFT order.
    pub fn k_squared(&self) -> Vec<f64> {
        let n = self.grid.n();
        let dim = self.grid.dim();
        let mut out = Vec::with_capacity(self.grid.len());
        for idx in 0..self.grid.len() {
            let mut rem = idx;
            let mut k2 = 0.0;
            for _ in 0..dim {
                let m = rem % n;
                rem /= n;
                k2 += self.k[m] * self.k[m];
            }
            out.push(k2);
        }
        out
    }

    /// Multiply the spectrum by a real function of |k|².
    pub fn apply_symbol<F: Fn(f64) -> f64>(&self, values: &[f64], symbol: F) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (c, k2) in spec.iter_mut().zip(self.k_squared()) {
            *c *= symbol(k2);
        }
        self.inverse(spec)
    }

    /// Weighted quadratic form sum_k w(|k|²) |û_k|² scaled so that w ≡ 1
    /// reproduces the grid quadrature of u².
    pub fn parseval<F: Fn(f64) -> f64>(&self, values: &[f64], weight: F) -> f64 {
        let spec = self.forward(values);
        let total = self.grid.len() as f64;
        let sum: f64 = spec
            .iter()
            .zip(self.k_squared())
            .map(|(c, k2)| weight(k2) * c.norm_sqr())
            .sum();
        sum * self.grid.cell_volume() / total
    }

    /// First derivative along `axis`; the Nyquist mode is dropped.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let n = self.grid.n();
        let dim = self.grid.dim();
        assert!(axis < dim, "axis out of range");
        let stride = n.pow((dim - 1 - axis) as u32);
        let mut spec = self.forward(values);
        for (idx, c) in spec.iter_mut().enumerate() {
            let m = (idx / stride) % n;
            let k = if n.is_multiple_of(2) && m == n / 2 { 0.0 } else { self.k[m] };
            *c *= Complex64::new(0.0, k);
        }
        self.inverse(spec)
    }
}
