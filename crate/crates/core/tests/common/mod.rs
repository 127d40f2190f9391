#![allow(dead_code)]

use nodalflow_core::config::RunConfig;
use nodalflow_core::{Field, Grid, ModelConfig, Problem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn model(json: &str) -> ModelConfig {
    RunConfig::from_json(json).expect("test config parses").model
}

/// Gaussian-well V, constant K, p = 4.5, Λ of radius 4 at ε = 0.5.
pub fn reduced_1d(n: usize) -> ModelConfig {
    model(&format!(
        r#"{{ "eps": 0.5, "dim": 1, "n": {n}, "coupling": false,
            "nonlinearity": {{ "p": 4.5 }},
            "V": {{ "family": "gaussian-well", "low": 1.0, "high": 2.0, "width": 2.0 }},
            "K": {{ "family": "constant", "value": 1.0 }},
            "domain": {{ "radius": 4.0 }} }}"#
    ))
}

pub fn coupled_3d(n: usize) -> ModelConfig {
    model(&format!(
        r#"{{ "eps": 0.5, "dim": 3, "n": {n}, "coupling": true, "margin": 2.4,
            "nonlinearity": {{ "p": 4.5 }},
            "V": {{ "family": "gaussian-well", "low": 1.0, "high": 2.0, "width": 2.0 }},
            "K": {{ "family": "constant", "value": 1.0 }},
            "domain": {{ "radius": 2.0 }} }}"#
    ))
}

pub fn problem(cfg: ModelConfig) -> Problem {
    Problem::new(cfg).expect("problem builds")
}

/// A few Gaussians with random centres, amplitudes and widths.
pub fn random_smooth(grid: Grid, rng: &mut ChaCha8Rng, spread: f64, amp: f64) -> Field {
    let terms: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let mut c = [0.0; 3];
            for a in c.iter_mut().take(grid.dim()) {
                *a = rng.gen_range(-spread..spread);
            }
            (c, rng.gen_range(-amp..amp), rng.gen_range(0.7..1.8))
        })
        .collect();
    Field::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(c, a, w)| {
                let r2: f64 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum()
    })
}

pub fn gaussian(problem: &Problem, center: f64, amp: f64, width: f64) -> Field {
    problem.field(|x| amp * (-((x[0] - center).powi(2) + x[1] * x[1] + x[2] * x[2]) / (width * width)).exp())
}
