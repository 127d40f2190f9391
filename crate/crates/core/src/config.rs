//! Run configuration: the model plus solver, search and diagnostics knobs.
//!
//! ```json
//! {
//!   "eps": 0.5, "dim": 1, "n": 256, "coupling": false,
//!   "nonlinearity": { "p": 4.5 },
//!   "V": { "family": "gaussian-well", "low": 1.0, "high": 2.0, "width": 2.0 },
//!   "K": { "family": "constant", "value": 1.0 },
//!   "domain": { "radius": 4.0 },
//!   "flow": { "tol": 1e-9 },
//!   "seed": 1
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsParams;
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::minimax::SearchParams;
use crate::model::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub diagnostics: DiagnosticsParams,
    #[serde(default)]
    pub seed: u64,
    /// Number of sign-changing solutions requested.
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Same run at another `ε`; the box follows unless pinned explicitly.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive (got {eps})")));
        }
        let mut c = self.clone();
        c.model.eps = eps;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "eps": 0.5, "dim": 1, "n": 128, "coupling": false,
        "nonlinearity": { "p": 4.5 },
        "V": { "family": "gaussian-well", "low": 1.0, "high": 2.0, "width": 2.0 },
        "K": { "family": "constant", "value": 1.0 },
        "domain": { "radius": 4.0 }
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.flow, FlowParams::default());
        assert_eq!(c.search, SearchParams::default());
        assert_eq!((c.seed, c.k), (0, 1));
        assert_eq!(c.model.half_width(), 16.0);
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_and_unknown_fields() {
        let missing = MINIMAL.replace(r#""n": 128,"#, "");
        assert!(matches!(RunConfig::from_json(&missing), Err(Error::Json(_))));
        let bad_family = MINIMAL.replace("gaussian-well", "gaussian-pit");
        assert!(RunConfig::from_json(&bad_family).is_err());
    }
}
