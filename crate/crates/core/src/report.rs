//! JSON and CSV emission, trace bundles and the golden constants file.
//!
//! Floats are written with 17 significant digits so identical runs give
//! byte-identical files.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::EvolutionTrace;
use crate::grid::{RadialField, RadialGrid};
use crate::ground_state::GroundState;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct FixedDigits(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed float formatting; non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(Default::default()));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Record<'a, T: Serialize> {
    pub config_hash: &'a str,
    pub code_version: &'a str,
    pub kind: &'a str,
    pub data: T,
}

pub fn record<'a, T: Serialize>(config_hash: &'a str, kind: &'a str, data: T) -> Record<'a, T> {
    Record {
        config_hash,
        code_version: CODE_VERSION,
        kind,
        data,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = to_json(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(io::Error::other(e))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_f64(*x))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric columns of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (c, s) in cols.iter_mut().zip(rec.iter()) {
            c.push(s.trim().parse::<f64>().map_err(|e| {
                LabError::Config(format!("{}: bad number {s:?}: {e}", path.display()))
            })?);
        }
    }
    Ok((header, cols))
}

pub fn write_field_csv(path: &Path, u: &RadialField) -> Result<()> {
    let rows = u
        .grid()
        .nodes()
        .iter()
        .zip(u.re().iter().zip(u.im()))
        .map(|(r, (a, b))| vec![*r, *a, *b]);
    write_csv(path, &["r", "re", "im"], rows)
}

pub fn read_field_csv(path: &Path, grid: &std::sync::Arc<RadialGrid>) -> Result<RadialField> {
    let (_, cols) = read_csv(path)?;
    if cols.len() < 3 || cols[0].len() != grid.n_points() {
        return Err(LabError::GridMismatch(format!(
            "{} does not hold a field on a {}-point grid",
            path.display(),
            grid.n_points()
        )));
    }
    let (last_r, r_max) = (*cols[0].last().unwrap(), grid.r_max());
    if (last_r - r_max).abs() > 1e-12 * r_max {
        return Err(LabError::GridMismatch(format!(
            "{} ends at r = {last_r}, grid at {r_max}",
            path.display()
        )));
    }
    RadialField::new(grid.clone(), cols[1].clone(), cols[2].clone())
}

/// Diagnostic series of a trace, one column each.
pub fn write_trace_csv(path: &Path, trace: &EvolutionTrace) -> Result<()> {
    let rows = (0..trace.len()).map(|i| {
        vec![
            trace.times[i],
            trace.mass_series[i],
            trace.energy_series[i],
            trace.grad_series[i],
            trace.delta_series[i],
            trace.pot_series[i],
        ]
    });
    write_csv(path, &["t", "mass", "energy", "grad_sq", "delta", "pot"], rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub t: f64,
    pub file: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceBundle {
    pub n_points: usize,
    pub r_max: f64,
    pub dt: f64,
    pub series: PathBuf,
    pub snapshots: Vec<SnapshotEntry>,
}

/// Writes `series.csv`, `snapshots/snap_NNNNN.csv` and `trace.json` under
/// `dir`; returns the path of `trace.json`.
pub fn write_trace_bundle(dir: &Path, trace: &EvolutionTrace, config_hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("snapshots"))?;
    write_trace_csv(&dir.join("series.csv"), trace)?;
    let mut entries = Vec::with_capacity(trace.snapshots.len());
    for (k, (t, u)) in trace.snapshots.iter().enumerate() {
        let file = PathBuf::from(format!("snapshots/snap_{k:05}.csv"));
        write_field_csv(&dir.join(&file), u)?;
        entries.push(SnapshotEntry { t: *t, file });
    }
    let g = trace.grid();
    let bundle = TraceBundle {
        n_points: g.n_points(),
        r_max: g.r_max(),
        dt: trace.dt,
        series: "series.csv".into(),
        snapshots: entries,
    };
    let path = dir.join("trace.json");
    write_json(&path, &record(config_hash, "trace", bundle))?;
    Ok(path)
}

#[derive(Deserialize)]
struct BundleRecord {
    data: TraceBundle,
}

/// Reads a `trace.json` written by [`write_trace_bundle`] onto the grid of `gs`.
pub fn read_trace_bundle(path: &Path, gs: &GroundState) -> Result<EvolutionTrace> {
    let text = fs::read_to_string(path)?;
    let b: BundleRecord = serde_json::from_str(&text)?;
    let b = b.data;
    let g = gs.grid();
    if b.n_points != g.n_points() || (b.r_max - g.r_max()).abs() > 1e-12 * g.r_max() {
        return Err(LabError::GridMismatch(format!(
            "trace on ({}, {}), lab grid ({}, {})",
            b.n_points,
            b.r_max,
            g.n_points(),
            g.r_max()
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let snaps = b
        .snapshots
        .iter()
        .map(|e| Ok((e.t, read_field_csv(&dir.join(&e.file), g)?)))
        .collect::<Result<Vec<_>>>()?;
    EvolutionTrace::from_snapshots(snaps, gs, b.dt)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GoldenConstants {
    pub q0: f64,
    pub m_q: f64,
    pub e0: f64,
}

impl GoldenConstants {
    /// Reads the oracle output; entries without an oracle provenance note
    /// are rejected rather than filled in.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!(
                "golden constants {}: {e}; run oracle-shoot and oracle-dense-eig",
                path.display()
            ))
        })?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let get = |key: &str, oracle: &str| -> Result<f64> {
            let e = &v[key];
            let prov = e["provenance"].as_str().unwrap_or("");
            if !prov.contains(oracle) {
                return Err(LabError::Config(format!(
                    "golden {key} lacks a provenance note naming {oracle}"
                )));
            }
            e["value"]
                .as_f64()
                .ok_or_else(|| LabError::Config(format!("golden {key} has no numeric value")))
        };
        Ok(Self {
            q0: get("q0", "oracle-shoot")?,
            m_q: get("m_Q", "oracle-shoot")?,
            e0: get("e0", "oracle-dense-eig")?,
        })
    }
}
