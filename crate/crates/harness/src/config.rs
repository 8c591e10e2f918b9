//! Harness settings, loadable from a TOML file.
//!
//! ```toml
//! k = 10
//! kappa_max = 1e4
//! tol = 1e-9
//! nc = 128
//! cell_size = 200
//! threads = 1
//! round_integers = false
//! seed = 0
//! format = "table"
//! ```

use std::path::Path;

use moments_sketch::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::output::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub k: usize,
    pub kappa_max: f64,
    pub tol: f64,
    pub nc: usize,
    pub max_degree: usize,
    pub cell_size: usize,
    pub threads: usize,
    pub round_integers: bool,
    pub seed: u64,
    pub format: Format,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            k: 10,
            kappa_max: solver.kappa_max,
            tol: solver.tol,
            nc: solver.n_c,
            max_degree: solver.max_degree,
            cell_size: 200,
            threads: 1,
            round_integers: false,
            seed: 0,
            format: Format::Table,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Solver settings, after checking every harness setting.
    pub fn solver(&self) -> Result<SolverConfig> {
        moments_sketch::MomentsSketch::new(self.k)?;
        if self.cell_size == 0 || self.threads == 0 {
            return Err(HarnessError::Config("cell_size and threads must be positive".into()));
        }
        let config = SolverConfig {
            tol: self.tol,
            kappa_max: self.kappa_max,
            n_c: self.nc,
            max_degree: self.max_degree.max(self.nc),
            ..SolverConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}
