use std::fmt::Write as _;
use std::path::PathBuf;

use nodalflow_core::config::RunConfig;
use nodalflow_core::diagnostics::SolutionReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// SHA-256 of the canonical JSON form of the parsed configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(canonical.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub energy: f64,
    pub penalty_mass: f64,
    pub plus_norm: f64,
    pub minus_norm: f64,
    pub residual: f64,
    pub certified: bool,
    pub field: PathBuf,
    pub report: PathBuf,
    pub history: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub eps: f64,
    pub k: usize,
    pub output_dir: PathBuf,
    pub partial: bool,
    pub starts_run: usize,
    pub solutions: Vec<ManifestEntry>,
    pub elapsed_seconds: f64,
}

pub const SUMMARY_HEADER: &str = "eps,j,energy,penalty_mass,q_value,residual,unpenalized_residual,plus_norm,minus_norm,decay_c,decay_r2,max_peak_distance,exterior_sup,pohozaev_residual";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub(crate) fn summary_row(eps: f64, j: usize, r: &SolutionReport) -> String {
    format!(
        "{eps},{j},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{:.12e},{}",
        r.energy.total,
        r.penalty_mass,
        r.q_value,
        r.weak_residual,
        r.unpenalized_residual,
        r.plus_norm,
        r.minus_norm,
        opt(r.decay.map(|d| d.c)),
        opt(r.decay.map(|d| d.r2)),
        opt(r.max_peak_distance),
        r.exterior.sup,
        opt(r.pohozaev.as_ref().map(|p| p.residual)),
    )
}
