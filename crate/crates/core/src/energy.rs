//! The penalized functional Φ_ε, its penalty term and its L² gradient.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Field, Grid};
use crate::model::{ModelConfig, Nonlinearity};
use crate::poisson::PoissonSolver;
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub linear: f64,
    pub nonlocal: f64,
    pub penalty: f64,
    pub nonlinear: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: &'static str = "kinetic,linear,nonlocal,penalty,nonlinear,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.kinetic, self.linear, self.nonlocal, self.penalty, self.nonlinear, self.total
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    /// `∫ χ_ε u²`
    pub mass: f64,
    /// `Q_ε(u) = (mass − 1)₊^β`
    pub q: f64,
    /// `κ(u) = (mass − 1)₊^{β−1}`
    pub kappa: f64,
    /// multiplier `2βκ(u)` in the Euler–Lagrange equation
    pub lambda: f64,
}

impl PenaltyState {
    pub fn from_mass(mass: f64, beta: f64) -> Self {
        let excess = (mass - 1.0).max(0.0);
        if excess == 0.0 {
            return Self { mass, q: 0.0, kappa: 0.0, lambda: 0.0 };
        }
        let kappa = excess.powf(beta - 1.0);
        Self { mass, q: excess.powf(beta), kappa, lambda: 2.0 * beta * kappa }
    }
}

/// A discretized instance of the penalized problem: configuration plus all
/// coefficient fields sampled on the grid.
#[derive(Clone)]
pub struct Problem {
    config: ModelConfig,
    grid: Grid,
    spectral: Spectral,
    nl: Nonlinearity,
    beta: f64,
    v: Vec<f64>,
    k: Vec<f64>,
    chi: Vec<f64>,
    poisson: Option<PoissonSolver>,
}

impl Problem {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.check()?;
        let grid = config.grid()?;
        let v = grid.points().map(|x| config.v_at(&x)).collect();
        let k = grid.points().map(|x| config.k_at(&x)).collect();
        let chi = grid.points().map(|x| config.chi_eps(&x)).collect();
        let poisson = if config.coupling { Some(PoissonSolver::new(grid)?) } else { None };
        Ok(Self {
            grid,
            spectral: Spectral::new(grid),
            nl: config.nonlinearity,
            beta: config.beta(),
            v,
            k,
            chi,
            poisson,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eps(&self) -> f64 {
        self.config.eps
    }

    /// `V(εx)` on the grid.
    pub fn v_field(&self) -> &[f64] {
        &self.v
    }

    /// `K(εx)` on the grid.
    pub fn k_field(&self) -> &[f64] {
        &self.k
    }

    /// `χ_ε(x)` on the grid.
    pub fn chi_field(&self) -> &[f64] {
        &self.chi
    }

    pub fn coupled(&self) -> bool {
        self.poisson.is_some()
    }

    pub fn poisson(&self) -> Option<&PoissonSolver> {
        self.poisson.as_ref()
    }

    pub fn field<F: Fn(&[f64; 3]) -> f64>(&self, f: F) -> Field {
        Field::from_fn(self.grid, f)
    }

    /// `φ_u` when the Poisson coupling is on.
    pub fn phi(&self, u: &Field) -> Result<Option<Field>> {
        u.check_compatible(&Field::zeros(self.grid))?;
        match &self.poisson {
            Some(p) => Ok(Some(p.phi(u)?)),
            None => Ok(None),
        }
    }

    pub fn penalty(&self, u: &Field) -> PenaltyState {
        let mass: f64 = u.values().iter().zip(&self.chi).map(|(a, c)| c * a * a).sum::<f64>()
            * self.grid.cell_volume();
        PenaltyState::from_mass(mass, self.beta)
    }

    pub fn energy(&self, u: &Field) -> Result<EnergyBreakdown> {
        let phi = self.phi(u)?;
        Ok(self.energy_with_phi(u, phi.as_ref()))
    }

    pub(crate) fn energy_with_phi(&self, u: &Field, phi: Option<&Field>) -> EnergyBreakdown {
        let vol = self.grid.cell_volume();
        let uv = u.values();
        let kinetic = 0.5 * self.spectral.parseval(uv, |k2| k2);
        let linear = 0.5 * vol * uv.iter().zip(&self.v).map(|(a, v)| v * a * a).sum::<f64>();
        let nonlocal = match phi {
            Some(p) => 0.25 * vol * uv.iter().zip(p.values()).map(|(a, f)| f * a * a).sum::<f64>(),
            None => 0.0,
        };
        let penalty = self.penalty(u).q;
        let nonlinear = vol * uv.iter().zip(&self.k).map(|(a, k)| k * self.nl.F(*a)).sum::<f64>();
        EnergyBreakdown {
            kinetic,
            linear,
            nonlocal,
            penalty,
            nonlinear,
            total: kinetic + linear + nonlocal + penalty - nonlinear,
        }
    }

    /// Strong-form residual `−Δu + V u + φ_u u + 2βκ χ u − K f(u)`.
    pub fn gradient(&self, u: &Field) -> Result<Field> {
        let lambda = self.penalty(u).lambda;
        self.gradient_with_multiplier(u, lambda)
    }

    /// Same residual with the penalty multiplier forced to `lambda`
    /// (`0` gives the residual of the unpenalized system).
    pub fn gradient_with_multiplier(&self, u: &Field, lambda: f64) -> Result<Field> {
        let phi = self.phi(u)?;
        Ok(self.gradient_parts(u, phi.as_ref(), lambda))
    }

    pub(crate) fn gradient_parts(&self, u: &Field, phi: Option<&Field>, lambda: f64) -> Field {
        let uv = u.values();
        let mut g = self.spectral.apply_symbol(uv, |k2| k2);
        for i in 0..g.len() {
            let mut c = self.v[i] + lambda * self.chi[i];
            if let Some(p) = phi {
                c += p.values()[i];
            }
            g[i] += c * uv[i] - self.k[i] * self.nl.f(uv[i]);
        }
        Field::from_vec(self.grid, g)
    }

    /// `‖w‖_{H¹}` where `(−Δ + 1) w = g`: the dual norm of a residual field.
    pub fn dual_norm(&self, g: &Field) -> f64 {
        self.spectral.parseval(g.values(), |k2| 1.0 / (k2 + 1.0)).sqrt()
    }

    pub fn dual_residual(&self, u: &Field) -> Result<f64> {
        Ok(self.dual_norm(&self.gradient(u)?))
    }
}
