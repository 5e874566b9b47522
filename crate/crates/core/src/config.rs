//! Lab configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! n_points = 4096
//! r_max = 30.0
//!
//! [tolerances]
//! shoot_tol = 1e-13
//! eig_tol = 1e-8
//! newton_tol = 1e-12
//! drift_budget = 1e-7
//!
//! [evolution]
//! dt = 5e-4
//! record_stride = 10
//! blowup_factor = 10.0
//!
//! [paths]
//! golden_constants = "golden/constants.json"
//! output_dir = "runs"
//!
//! [classify]
//! dt_ladder = [1e-3, 5e-4]
//! amplitudes = [0.01, -0.01]
//! order = 5
//! [[classify.cells]]
//! kind = "scaled_orbit"
//! theta = 1.2
//! ```
//!
//! Every section and key is optional; missing ones take the defaults above,
//! except that the default sweep is empty.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::evolve::EvolveOptions;
use crate::grid::RadialGrid;
use crate::ground_state::{solve_ground_state_with, GroundState, ShootOptions};
use crate::linearized::{solve_eigenpair, LinearizedPair, SpectralData};
use crate::sweep::SweepConfig;

pub const CONFIG_ENV: &str = "NLS_LAB_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub r_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_points: 4096,
            r_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub shoot_tol: f64,
    /// Relative eigen-residual bound.
    pub eig_tol: f64,
    /// Threshold restoration of perturbed data.
    pub newton_tol: f64,
    /// Energy drift per unit time; the mass budget is a tenth of it.
    pub drift_budget: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            shoot_tol: 1e-13,
            eig_tol: 1e-8,
            newton_tol: 1e-12,
            drift_budget: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub record_stride: usize,
    pub blowup_factor: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            record_stride: 10,
            blowup_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub golden_constants: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            golden_constants: "golden/constants.json".into(),
            output_dir: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub evolution: EvolutionConfig,
    pub paths: Paths,
    pub classify: SweepConfig,
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths in the file are relative to the file
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.paths.golden_constants, &mut cfg.paths.output_dir] {
                if p.is_relative() && !dir.as_os_str().is_empty() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// `explicit`, else `$NLS_LAB_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.grid.n_points < 256 {
            return bad(format!("grid.n_points = {} is below 256", self.grid.n_points));
        }
        if !(self.grid.r_max >= 20.0) {
            return bad(format!("grid.r_max = {} is below 20", self.grid.r_max));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("shoot_tol", t.shoot_tol),
            ("eig_tol", t.eig_tol),
            ("newton_tol", t.newton_tol),
            ("drift_budget", t.drift_budget),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerances.{name} = {v} must be positive"));
            }
        }
        let e = &self.evolution;
        if !(e.dt > 0.0 && e.dt.is_finite()) {
            return bad(format!("evolution.dt = {} must be positive", e.dt));
        }
        if e.record_stride == 0 {
            return bad("evolution.record_stride must be positive".into());
        }
        if !(e.blowup_factor > 1.0) {
            return bad(format!("evolution.blowup_factor = {} must exceed 1", e.blowup_factor));
        }
        self.classify.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            record_stride: self.evolution.record_stride,
            blowup_factor: self.evolution.blowup_factor,
            energy_budget: self.tolerances.drift_budget,
            mass_budget: 0.1 * self.tolerances.drift_budget,
            ..Default::default()
        }
    }

    pub fn build_lab(&self) -> Result<Lab> {
        let grid = RadialGrid::new(self.grid.n_points, self.grid.r_max)?;
        let gs = solve_ground_state_with(
            &grid,
            &ShootOptions {
                tol: self.tolerances.shoot_tol,
                ..Default::default()
            },
        )?;
        let lp = LinearizedPair::assemble(&gs);
        let sd = solve_eigenpair(&lp)?;
        Ok(Lab { gs, lp, sd })
    }
}

/// Ground state, linearized pair and eigenpair on one grid.
pub struct Lab {
    pub gs: GroundState,
    pub lp: LinearizedPair,
    pub sd: SpectralData,
}
