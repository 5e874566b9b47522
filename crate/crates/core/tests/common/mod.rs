#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use nls_radial::ground_state::{solve_ground_state, GroundState};
use nls_radial::linearized::{solve_eigenpair, LinearizedPair, SpectralData};
use nls_radial::RadialGrid;

/// Value recorded by the oracle binaries in `golden/constants.json`.
pub fn golden(key: &str) -> f64 {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../golden/constants.json");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v[key]["value"].as_f64().unwrap_or_else(|| panic!("no golden value for {key}"))
}

pub struct Setup {
    pub gs: GroundState,
    pub lp: LinearizedPair,
    pub sd: SpectralData,
}

pub fn setup(n: usize) -> Setup {
    let g: Arc<RadialGrid> = RadialGrid::new(n, 30.0).unwrap();
    let gs = solve_ground_state(&g, 1e-13).unwrap();
    let lp = LinearizedPair::assemble(&gs);
    let sd = solve_eigenpair(&lp).unwrap();
    Setup { gs, lp, sd }
}

pub fn default_setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(4096))
}

pub fn coarse_setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| setup(2048))
}
