//! Model ingredients: the power nonlinearity, the potentials `V` and `K`, the
//! localization domain `Λ`, the penalty cutoff `χ_ε` and a validator for the
//! structural hypotheses on a concrete instance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm3, Grid};

/// Power nonlinearity `f(t) = |t|^{p-2} t`, `F(t) = |t|^p / p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub p: f64,
}

impl Nonlinearity {
    pub fn new(p: f64) -> Self {
        Self { p }
    }

    /// Ambrosetti–Rabinowitz constant; for the power family `μ = p`.
    pub fn mu(&self) -> f64 {
        self.p
    }

    pub fn f(&self, t: f64) -> f64 {
        t.abs().powf(self.p - 2.0) * t
    }

    #[allow(non_snake_case)]
    pub fn F(&self, t: f64) -> f64 {
        t.abs().powf(self.p) / self.p
    }

    pub fn fprime(&self, t: f64) -> f64 {
        (self.p - 1.0) * t.abs().powf(self.p - 2.0)
    }
}

/// Named potential families. Parameters are in the physical frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    /// `high - (high - low) exp(-|x|²/width²)`: a well with minimum `low` at 0.
    GaussianWell {
        low: f64,
        high: f64,
        width: f64,
    },
    /// `low + (high - low) exp(-|x|²/width²)`: a bump with maximum `high` at 0.
    GaussianBump {
        low: f64,
        high: f64,
        width: f64,
    },
}

impl PotentialSpec {
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::GaussianWell { low, high, width } => {
                high - (high - low) * (-dot3(x, x) / (width * width)).exp()
            }
            Self::GaussianBump { low, high, width } => {
                low + (high - low) * (-dot3(x, x) / (width * width)).exp()
            }
        }
    }

    pub fn grad(&self, x: &[f64; 3]) -> [f64; 3] {
        let coef = match *self {
            Self::Constant { .. } => return [0.0; 3],
            Self::GaussianWell { low, high, width } => {
                2.0 * (high - low) / (width * width) * (-dot3(x, x) / (width * width)).exp()
            }
            Self::GaussianBump { low, high, width } => {
                -2.0 * (high - low) / (width * width) * (-dot3(x, x) / (width * width)).exp()
            }
        };
        [coef * x[0], coef * x[1], coef * x[2]]
    }

    /// `(inf, sup)` of the potential over space.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Constant { value } => (value, value),
            Self::GaussianWell { low, high, .. } | Self::GaussianBump { low, high, .. } => (low, high),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    fn check_parameters(&self, name: &str) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
            return Err(Error::Config(format!("{name}: bounds must be positive and finite (got {lo}, {hi})")));
        }
        match *self {
            Self::Constant { .. } => Ok(()),
            Self::GaussianWell { width, .. } | Self::GaussianBump { width, .. } => {
                if lo >= hi {
                    return Err(Error::Config(format!("{name}: need 0 < low < high (got {lo}, {hi})")));
                }
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::Config(format!("{name}: width must be positive (got {width})")));
                }
                Ok(())
            }
        }
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `Λ = B_radius(0)` in the physical frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub radius: f64,
}

/// Which pair of boundary conditions the instance is meant to satisfy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `V` traps (`n·∇V > 0` on `∂Λ`); concentration near critical points of `V`.
    #[default]
    Vk1,
    /// `K` traps (`n·∇K < 0` on `∂Λ`); concentration near critical points of `K`.
    Vk2,
}

/// Smooth monotone step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, symmetric about 1/2.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b))
    }
}

pub const DEFAULT_MARGIN: f64 = 8.0;
pub const DEFAULT_SIGMA: f64 = 1e-2;

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// Everything that defines the penalized problem on a concrete grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub eps: f64,
    pub dim: usize,
    /// Points per axis.
    pub n: usize,
    /// Box half-width in the rescaled frame; defaults to `radius/eps + margin`.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub nonlinearity: Nonlinearity,
    #[serde(rename = "V")]
    pub v: PotentialSpec,
    #[serde(rename = "K")]
    pub k: PotentialSpec,
    pub domain: DomainSpec,
    /// Penalty exponent; defaults to the midpoint of `(2, μ/2)`.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub coupling: bool,
    #[serde(default)]
    pub regime: Regime,
}

impl ModelConfig {
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| 0.5 * (2.0 + 0.5 * self.nonlinearity.mu()))
    }

    pub fn half_width(&self) -> f64 {
        self.half_width.unwrap_or(self.domain.radius / self.eps + self.margin)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.half_width())
    }

    /// Radius of `Λ_ε = {x : εx ∈ Λ}`.
    pub fn lambda_eps_radius(&self) -> f64 {
        self.domain.radius / self.eps
    }

    /// `a1 = inf V`.
    pub fn a1(&self) -> f64 {
        self.v.bounds().0
    }

    /// `min{1, a1}`, the coercivity constant of the linear part.
    pub fn coercivity(&self) -> f64 {
        self.a1().min(1.0)
    }

    /// `V(εx)` at a rescaled-frame point.
    pub fn v_at(&self, x: &[f64; 3]) -> f64 {
        self.v.eval(&self.physical(x))
    }

    pub fn k_at(&self, x: &[f64; 3]) -> f64 {
        self.k.eval(&self.physical(x))
    }

    pub fn physical(&self, x: &[f64; 3]) -> [f64; 3] {
        [self.eps * x[0], self.eps * x[1], self.eps * x[2]]
    }

    /// `dist(x, Λ_ε)` for a rescaled-frame point.
    pub fn dist_to_lambda_eps(&self, x: &[f64; 3]) -> f64 {
        (norm3(x) - self.lambda_eps_radius()).max(0.0)
    }

    /// Penalty cutoff `χ_ε(x) = ε^{-6} ς(dist(x, Λ_ε))`.
    pub fn chi_eps(&self, x: &[f64; 3]) -> f64 {
        let d = self.dist_to_lambda_eps(x);
        if d <= 0.0 {
            0.0
        } else {
            self.eps.powi(-6) * smooth_step(d)
        }
    }

    pub fn grad_chi_eps(&self, x: &[f64; 3]) -> [f64; 3] {
        let r = norm3(x);
        let d = r - self.lambda_eps_radius();
        if d <= 0.0 || d >= 1.0 || r == 0.0 {
            return [0.0; 3];
        }
        let c = self.eps.powi(-6) * smooth_step_derivative(d) / r;
        [c * x[0], c * x[1], c * x[2]]
    }

    /// Structural checks that make the problem well posed for the solver;
    /// hypothesis checks live in [`validate_assumptions`].
    pub fn check(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive (got {})", self.eps)));
        }
        if !(self.domain.radius.is_finite() && self.domain.radius > 0.0) {
            return Err(Error::Config(format!("domain radius must be positive (got {})", self.domain.radius)));
        }
        if self.coupling && self.dim != 3 {
            return Err(Error::Config(format!(
                "Poisson coupling requires dim = 3 (got dim = {})",
                self.dim
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive (got {})", self.sigma)));
        }
        let p = self.nonlinearity.p;
        if !(p.is_finite() && p > 2.0) {
            return Err(Error::Config(format!("nonlinearity exponent must exceed 2 (got {p})")));
        }
        let beta = self.beta();
        if !(beta.is_finite() && beta > 1.0) {
            return Err(Error::Config(format!("beta must exceed 1 (got {beta})")));
        }
        self.v.check_parameters("V")?;
        self.k.check_parameters("K")?;
        self.grid()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Physical-frame point where the condition is worst (if geometric).
    pub witness: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub regime: Regime,
    pub checks: Vec<Check>,
    /// Largest δ0 with `sup ∇K·∇V < 0` on `Λ^{δ0} \ U(δ0)`; `None` when one
    /// potential is constant and the condition does not apply.
    pub delta0: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let msg = self
            .failures()
            .map(|c| match c.witness {
                Some(w) => format!("{} ({}; witness {:?})", c.name, c.detail, w),
                None => format!("{} ({})", c.name, c.detail),
            })
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::Config(format!("validation failed: {msg}")))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "regime: {:?}", self.regime)?;
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            write!(f, "[{mark}] {}: {}", c.name, c.detail)?;
            if let (false, Some(w)) = (c.passed, c.witness) {
                write!(f, " (witness {:.4}, {:.4}, {:.4})", w[0], w[1], w[2])?;
            }
            writeln!(f)?;
        }
        match self.delta0 {
            Some(d) => writeln!(f, "delta0: {d:.6}"),
            None => writeln!(f, "delta0: n/a (single varying potential)"),
        }
    }
}

/// Deterministic unit directions in `dim` dimensions.
pub fn sphere_directions(dim: usize, count: usize) -> Vec<[f64; 3]> {
    match dim {
        1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                [th.cos(), th.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci lattice
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * i as f64;
                    [r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
    }
}

fn scaled(d: &[f64; 3], r: f64) -> [f64; 3] {
    [d[0] * r, d[1] * r, d[2] * r]
}

const BOUNDARY_SAMPLES: usize = 2048;
const SHELL_RADII: usize = 64;

/// Check the hypotheses of the existence theory on a concrete instance.
pub fn validate_assumptions(cfg: &ModelConfig) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String, witness: Option<[f64; 3]>| {
        checks.push(Check { name: name.to_string(), passed, detail, witness });
    };

    let p = cfg.nonlinearity.p;
    let mu = cfg.nonlinearity.mu();
    push("p range", p > 4.0 && p < 6.0, format!("need 4 < p < 6, p = {p}"), None);
    push("mu > 4", mu > 4.0, format!("mu = {mu}"), None);
    let beta = cfg.beta();
    push(
        "β range",
        beta > 2.0 && beta < mu / 2.0,
        format!("need 2 < beta < mu/2 = {}, beta = {beta}", mu / 2.0),
        None,
    );
    push("sigma", cfg.sigma > 0.0, format!("sigma = {}", cfg.sigma), None);
    push("eps", cfg.eps > 0.0, format!("eps = {}", cfg.eps), None);
    push(
        "coupling dimension",
        !cfg.coupling || cfg.dim == 3,
        format!("coupling = {}, dim = {}", cfg.coupling, cfg.dim),
        None,
    );
    match cfg.grid() {
        Ok(grid) => {
            let needed = cfg.lambda_eps_radius() + cfg.margin;
            push(
                "box size",
                grid.half_width() >= needed - 1e-12,
                format!("need L >= r/eps + margin = {needed}, L = {}", grid.half_width()),
                None,
            );
            for (name, spec) in [("V bounds", &cfg.v), ("K bounds", &cfg.k)] {
                let (lo, hi) = spec.bounds();
                let ok_params = spec.check_parameters(name).is_ok();
                let mut worst: Option<([f64; 3], f64)> = None;
                for x in grid.points() {
                    let val = spec.eval(&cfg.physical(&x));
                    if val < lo - 1e-12 || val > hi + 1e-12 {
                        worst = Some((cfg.physical(&x), val));
                        break;
                    }
                }
                push(
                    name,
                    ok_params && worst.is_none(),
                    match worst {
                        Some((_, v)) => format!("value {v} outside [{lo}, {hi}]"),
                        None => format!("0 < {lo} <= values <= {hi}"),
                    },
                    worst.map(|w| w.0),
                );
            }
        }
        Err(e) => push("grid", false, e.to_string(), None),
    }

    let r = cfg.domain.radius;
    if !(r > 0.0) {
        push("domain radius", false, format!("radius = {r}"), None);
        return ValidationReport { regime: cfg.regime, checks, delta0: None };
    }
    let dirs = sphere_directions(cfg.dim, BOUNDARY_SAMPLES);

    // Worst (largest) value of g over the boundary sphere.
    let sup_on_boundary = |g: &dyn Fn(&[f64; 3], &[f64; 3]) -> f64| {
        dirs.iter()
            .map(|d| {
                let x = scaled(d, r);
                (g(&x, d), x)
            })
            .fold((f64::NEG_INFINITY, [0.0; 3]), |acc, c| if c.0 > acc.0 { c } else { acc })
    };
    let cross = |x: &[f64; 3], _: &[f64; 3]| dot3(&cfg.k.grad(x), &cfg.v.grad(x));

    let (trap_name, trapping, partner_constant) = match cfg.regime {
        Regime::Vk1 => ("VK1 n·∇V > 0 on ∂Λ", &cfg.v, cfg.k.is_constant()),
        Regime::Vk2 => ("VK2 n·∇K < 0 on ∂Λ", &cfg.k, cfg.v.is_constant()),
    };
    let sign = if cfg.regime == Regime::Vk1 { -1.0 } else { 1.0 };
    // condition is sign * n·∇W < 0 everywhere
    let (worst, at) = sup_on_boundary(&|x, d| sign * dot3(d, &trapping.grad(x)));
    push(trap_name, worst < 0.0, format!("worst normal derivative {:.6e}", -sign * worst), Some(at));

    let mut delta0 = None;
    if !partner_constant {
        let (worst, at) = sup_on_boundary(&cross);
        push("∇K·∇V < 0 on ∂Λ", worst < 0.0, format!("sup = {worst:.6e}"), Some(at));
        if worst < 0.0 {
            let shell_ok = |delta: f64| {
                (0..=SHELL_RADII).all(|i| {
                    let rad = (r - delta) + 2.0 * delta * i as f64 / SHELL_RADII as f64;
                    let rad = rad.max(0.0);
                    dirs.iter().all(|d| {
                        let x = scaled(d, rad);
                        cross(&x, d) < 0.0
                    })
                })
            };
            let (mut lo, mut hi) = (0.0, r);
            if shell_ok(hi) {
                lo = hi;
            } else {
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if shell_ok(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            delta0 = Some(lo);
            push("delta0 > 0", lo > 0.0, format!("delta0 = {lo:.6}"), None);
        }
    }

    ValidationReport { regime: cfg.regime, checks, delta0 }
}
