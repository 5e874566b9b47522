//! Classification sweep over a list of data kinds and a dt ladder.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{classify_trajectory, prepare_threshold_data_with, ClassifyOptions, DataKind, Outcome, Side, Verdict};
use crate::config::Lab;
use crate::error::{LabError, Result};
use crate::evolve::{Drift, EvolveOptions};
use crate::report::{record, write_json, write_trace_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub data: DataKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Coarsest first.
    pub dt_ladder: Vec<f64>,
    /// Defaults to `8/e₀`.
    pub horizon_fwd: Option<f64>,
    /// Defaults to 4.
    pub horizon_bwd: Option<f64>,
    pub sample_every: f64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// One profile cell per amplitude, with `order` and `t0`.
    pub amplitudes: Vec<f64>,
    pub order: usize,
    pub t0: f64,
    pub cells: Vec<CellSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dt_ladder: vec![1e-3, 5e-4],
            horizon_fwd: None,
            horizon_bwd: None,
            sample_every: 0.01,
            workers: 0,
            amplitudes: Vec::new(),
            order: 5,
            t0: 0.0,
            cells: Vec::new(),
        }
    }
}

impl SweepConfig {
    /// Both profile signs, an orbit point and a perturbed datum.
    pub fn standard() -> Self {
        Self {
            amplitudes: vec![0.01, -0.01],
            cells: vec![
                CellSpec {
                    name: Some("orbit".into()),
                    data: DataKind::ScaledOrbit { theta: 1.2 },
                },
                CellSpec {
                    name: Some("perturbed_7".into()),
                    data: DataKind::Perturbed { seed: 7, size: 1e-2 },
                },
            ],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt_ladder.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(LabError::Config("classify.dt_ladder needs positive steps".into()));
        }
        if !(self.sample_every > 0.0) {
            return Err(LabError::Config("classify.sample_every must be positive".into()));
        }
        for h in [self.horizon_fwd, self.horizon_bwd].into_iter().flatten() {
            if !(h > 0.0 && h.is_finite()) {
                return Err(LabError::Config(format!("classify horizon {h} must be positive")));
            }
        }
        Ok(())
    }

    pub fn expanded_cells(&self) -> Vec<(String, DataKind)> {
        let mut out: Vec<(String, DataKind)> = self
            .amplitudes
            .iter()
            .map(|&a| {
                (
                    format!("profile_{a:+e}"),
                    DataKind::Profile {
                        a,
                        k: self.order,
                        t0: self.t0,
                    },
                )
            })
            .collect();
        for (i, c) in self.cells.iter().enumerate() {
            out.push((c.name.clone().unwrap_or_else(|| format!("cell_{i}")), c.data));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRun {
    pub dt: f64,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
    pub separation_held: Option<bool>,
    pub drift_fwd: Option<Drift>,
    pub drift_bwd: Option<Drift>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub name: String,
    pub data: DataKind,
    pub runs: Vec<CellRun>,
    /// Verdicts agree at the two finest steps.
    pub stable: Option<bool>,
    /// Profile cells: the side has the sign of `A`.
    pub side_matches_sign: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// Scattering is a proxy: `∫|u|⁴` collapse with bounded `H¹` and `δ`
    /// bounded below over the backward horizon.
    pub scattering_note: &'static str,
    pub cells: Vec<CellReport>,
}

impl SweepReport {
    pub fn all_separated(&self) -> bool {
        self.cells
            .iter()
            .flat_map(|c| &c.runs)
            .all(|r| r.separation_held != Some(false))
    }
}

fn same_call(a: &Verdict, b: &Verdict) -> bool {
    a.side == b.side && a.forward == b.forward && a.backward == b.backward
}

fn run_cell(
    name: &str,
    data: &DataKind,
    dt: f64,
    level: usize,
    lab: &Lab,
    cfg: &SweepConfig,
    evolve: &EvolveOptions,
    newton_tol: f64,
    out: Option<&Path>,
) -> CellRun {
    let go = || -> Result<CellRun> {
        let u0 = prepare_threshold_data_with(data, &lab.gs, &lab.sd, &lab.lp, newton_tol)?;
        let mut opts = ClassifyOptions::new(lab.sd.e0, dt);
        opts.evolve = evolve.clone();
        opts.sample_every = cfg.sample_every;
        if let Some(h) = cfg.horizon_fwd {
            opts.horizon_fwd = h;
        }
        if let Some(h) = cfg.horizon_bwd {
            opts.horizon_bwd = h;
        }
        let c = classify_trajectory(&u0, &lab.gs, &opts)?;
        let mut verdict = c.verdict;
        if let Some(dir) = out {
            for (tag, tr) in [("fwd", &c.forward), ("bwd", &c.backward)] {
                let file = PathBuf::from("traces").join(format!("{name}_dt{level}_{tag}.csv"));
                write_trace_csv(&dir.join(&file), tr)?;
                verdict.evidence.push(file.display().to_string());
            }
        }
        Ok(CellRun {
            dt,
            verdict: Some(verdict),
            error: None,
            separation_held: Some(c.separation_fwd.invariant_held && c.separation_bwd.invariant_held),
            drift_fwd: Some(c.forward.drift()),
            drift_bwd: Some(c.backward.drift()),
        })
    };
    go().unwrap_or_else(|e| CellRun {
        dt,
        verdict: None,
        error: Some(e.to_string()),
        separation_held: None,
        drift_fwd: None,
        drift_bwd: None,
    })
}

/// Runs every cell at every dt; failures are recorded per cell. With `out`,
/// trace CSVs go to `out/traces` and the manifest to `out/manifest.json`.
pub fn run_sweep(
    cfg: &SweepConfig,
    lab: &Lab,
    evolve: &EvolveOptions,
    newton_tol: f64,
    out: Option<&Path>,
    config_hash: &str,
) -> Result<SweepReport> {
    cfg.validate()?;
    let cells = cfg.expanded_cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.dt_ladder.len()).map(move |l| (c, l)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    let runs: Vec<CellRun> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, l)| {
                let (name, data) = &cells[c];
                info!("sweep cell {name} at dt = {}", cfg.dt_ladder[l]);
                run_cell(name, data, cfg.dt_ladder[l], l, lab, cfg, evolve, newton_tol, out)
            })
            .collect()
    });
    let mut runs = runs.into_iter();
    let mut reports = Vec::with_capacity(cells.len());
    for (name, data) in cells {
        let rs: Vec<CellRun> = runs.by_ref().take(cfg.dt_ladder.len()).collect();
        let stable = match rs.len() {
            0 | 1 => None,
            n => match (&rs[n - 2].verdict, &rs[n - 1].verdict) {
                (Some(a), Some(b)) => Some(same_call(a, b)),
                _ => Some(false),
            },
        };
        let side_matches_sign = match data {
            DataKind::Profile { a, .. } if a != 0.0 => Some(rs.iter().all(|r| {
                r.verdict.as_ref().is_some_and(|v| {
                    v.side == if a > 0.0 { Side::Supercritical } else { Side::Subcritical }
                })
            })),
            _ => None,
        };
        reports.push(CellReport {
            name,
            data,
            runs: rs,
            stable,
            side_matches_sign,
        });
    }
    let report = SweepReport {
        scattering_note: "scatter_proxy means the potential energy collapsed with bounded H1 norm; it is not a proof of scattering",
        cells: reports,
    };
    if let Some(dir) = out {
        write_json(&dir.join("manifest.json"), &record(config_hash, "classify_sweep", &report))?;
    }
    Ok(report)
}

impl CellReport {
    pub fn finest(&self) -> Option<&Verdict> {
        self.runs.last().and_then(|r| r.verdict.as_ref())
    }

    pub fn outcomes(&self) -> Option<(Side, Outcome, Outcome)> {
        self.finest().map(|v| (v.side, v.forward, v.backward))
    }
}
