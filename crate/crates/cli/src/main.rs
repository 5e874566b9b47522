//! `nls-lab`: command-line front end of the radial NLS lab.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or configuration
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use nls_radial::classify::{prepare_threshold_data_with, DataKind};
use nls_radial::config::{Lab, LabConfig};
use nls_radial::evolve::{distance_to_orbit, gradient_separation_monitor, integrate, separation_floor};
use nls_radial::linearized::{coercivity_minimum, Constraints};
use nls_radial::modulation::{comparability_report, default_delta0, frame_series};
use nls_radial::profiles::{build_profiles, mass_energy_deviation, residual_ladder};
use nls_radial::report::{
    read_field_csv, read_trace_bundle, record, to_json, write_csv, write_field_csv, write_json, write_trace_bundle,
    GoldenConstants,
};
use nls_radial::selftest::{format_table, run_selftest};
use nls_radial::sweep::run_sweep;
use nls_radial::virial::{localized_identity_check, virial_identity_check, VirialReport};
use nls_radial::LabError;

#[derive(Parser)]
#[command(name = "nls-lab", version, about = "Radial lab for threshold solutions of the 3D cubic focusing NLS")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// TOML configuration; falls back to $NLS_LAB_CONFIG, then defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to paths.output_dir of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the JSON record on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve for Q; with --out also writes q.csv.
    GroundState,
    /// Eigenpair (e0, Y) of the linearized operator and coercivity minima.
    Spectrum,
    /// Constrained and unconstrained minima of Phi.
    Coercivity,
    /// Profile expansion, residual ladder and mass/energy deviation.
    Profiles(ProfileArgs),
    /// Run the flow and write a trace bundle.
    Evolve(EvolveArgs),
    /// Modulation frames along a stored trace.
    Modulate(TraceArgs),
    /// Virial identities along a stored trace.
    Virial(VirialArgs),
    /// Classification sweep from the [classify] section of the config.
    Classify,
    /// Invariant checks with a pass/fail table.
    Selftest,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long = "A", allow_negative_numbers = true)]
    a: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
}

#[derive(Args)]
struct EvolveArgs {
    /// `ground`, `profile:A,k,t0` or `file:<csv of r,re,im>`.
    #[arg(long, default_value = "ground")]
    init: String,
    /// Start and end time, `a,b`.
    #[arg(long = "t-span", allow_hyphen_values = true)]
    t_span: String,
    /// Step size; the sign follows the span. Defaults to evolution.dt.
    #[arg(long)]
    dt: Option<f64>,
    /// Spacing of stored snapshots.
    #[arg(long, default_value_t = 0.01)]
    snapshot_every: f64,
}

#[derive(Args)]
struct TraceArgs {
    /// `trace.json` written by `evolve`.
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct VirialArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Cutoff radius for the localized identity.
    #[arg(long = "R")]
    radius: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    cfg: LabConfig,
    hash: String,
    out: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.cfg.paths.output_dir.clone())
    }

    fn emit<T: Serialize>(&self, kind: &str, data: T, text: impl FnOnce() -> String) -> Outcome {
        let rec = record(&self.hash, kind, data);
        if self.json {
            println!("{}", to_json(&rec)?);
        } else {
            print!("{}", text());
        }
        if let Some(dir) = &self.out {
            write_json(&dir.join(format!("{kind}.json")), &rec)?;
        }
        Ok(())
    }

    fn lab(&self) -> Result<Lab, Failure> {
        Ok(self.cfg.build_lab()?)
    }

    fn golden(&self) -> Option<GoldenConstants> {
        match GoldenConstants::load(&self.cfg.paths.golden_constants) {
            Ok(g) => Some(g),
            Err(e) => {
                warn!("{e}");
                None
            }
        }
    }
}

fn ground_state(ctx: &Ctx) -> Outcome {
    let lab = ctx.lab()?;
    let s = lab.gs.summary();
    if let Some(dir) = &ctx.out {
        write_field_csv(&dir.join("q.csv"), &lab.gs.q)?;
    }
    let data = json!({
        "q0": s.q0, "mass": s.mass, "grad_sq": s.grad_sq, "l4_4": s.l4_4,
        "energy": s.energy, "c_gn": s.c_gn, "residual": s.residual,
    });
    ctx.emit("ground_state", data, || {
        format!(
            "q0 {:.15}\nmass {:.15}\ngrad_sq {:.15}\nl4_4 {:.15}\nenergy {:.15}\nc_gn {:.15}\nresidual {:.3e}\n",
            s.q0, s.mass, s.grad_sq, s.l4_4, s.energy, s.c_gn, s.residual
        )
    })
}

fn spectrum(ctx: &Ctx) -> Outcome {
    let lab = ctx.lab()?;
    let sd = &lab.sd;
    let gp = coercivity_minimum(&lab.lp, sd, Constraints::GPerp)?;
    let gpp = coercivity_minimum(&lab.lp, sd, Constraints::GPerpPrime)?;
    if let Some(dir) = &ctx.out {
        let g = lab.gs.grid();
        let rows = (0..g.n_points()).map(|i| vec![g.nodes()[i], sd.y1.re()[i], sd.y2.re()[i]]);
        write_csv(&dir.join("eigenfunction.csv"), &["r", "y1", "y2"], rows)?;
    }
    let golden = ctx.golden();
    let (rp, rm) = sd.residuals();
    let data = json!({
        "e0": sd.e0, "b_norm": sd.b_norm,
        "residuals": {"plus": rp, "minus": rm},
        "coercivity": {"g_perp": gp.minimum, "g_perp_prime": gpp.minimum},
        "golden_e0": golden.map(|g| g.e0),
    });
    ctx.emit("spectrum", data, || {
        format!(
            "e0 {:.12}\nb_norm {:.6}\nresiduals {:.3e} {:.3e}\ncoercivity G_perp {:.6} G'_perp {:.6}\n",
            sd.e0, sd.b_norm, rp, rm, gp.minimum, gpp.minimum
        )
    })
}

fn coercivity(ctx: &Ctx) -> Outcome {
    let lab = ctx.lab()?;
    let reports = [Constraints::GPerp, Constraints::GPerpPrime, Constraints::None]
        .into_iter()
        .map(|c| coercivity_minimum(&lab.lp, &lab.sd, c))
        .collect::<Result<Vec<_>, _>>()?;
    let text = reports
        .iter()
        .map(|r| format!("{:?} {:.8} (L+ {:.8}, L- {:.8})\n", r.constraints, r.minimum, r.plus_part, r.minus_part))
        .collect::<String>();
    ctx.emit("coercivity", &reports, || text)
}

fn profiles(ctx: &Ctx, a: &ProfileArgs) -> Outcome {
    let lab = ctx.lab()?;
    let pe = build_profiles(a.a, a.k, &lab.sd, &lab.lp, &lab.gs)?;
    let slopes = (1..=a.k)
        .map(|j| {
            let p = build_profiles(a.a, j, &lab.sd, &lab.lp, &lab.gs)?;
            residual_ladder(&p, &lab.gs, &lab.lp, 0.1, 16)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dev = mass_energy_deviation(&pe, a.t0, &lab.gs);
    if let Some(dir) = &ctx.out {
        for (j, z) in pe.z.iter().enumerate() {
            write_field_csv(&dir.join(format!("z{}.csv", j + 1)), z)?;
        }
    }
    let text = slopes
        .iter()
        .map(|l| format!("k={} slope {:.4} expected {:.4}\n", l.order, l.fit.rate, l.expected))
        .chain([format!("deviation at t0: mass {:.3e} energy {:.3e}\n", dev.mass, dev.energy)])
        .collect::<String>();
    ctx.emit(
        "profiles",
        json!({"residual_slopes": slopes, "mass_energy_deviation": dev, "conditions": pe.conditions}),
        || text,
    )
}

fn parse_span(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Usage(format!("--t-span expects a,b; got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn initial_data(init: &str, lab: &Lab, cfg: &LabConfig) -> Result<nls_radial::RadialField, Failure> {
    if init == "ground" {
        return Ok(lab.gs.q.clone());
    }
    if let Some(rest) = init.strip_prefix("profile:") {
        let p: Vec<&str> = rest.split(',').collect();
        let parsed = (p.len() == 3)
            .then(|| Some((p[0].parse().ok()?, p[1].parse().ok()?, p[2].parse().ok()?)))
            .flatten();
        let (a, k, t0) = parsed.ok_or_else(|| Failure::Usage(format!("bad profile spec {rest:?}; expected A,k,t0")))?;
        let kind = DataKind::Profile { a, k, t0 };
        // profile data is given in the profile frame at time t0
        let u = prepare_threshold_data_with(&kind, &lab.gs, &lab.sd, &lab.lp, cfg.tolerances.newton_tol)?;
        return Ok(u.scale(Complex64::from_polar(1.0, -t0)));
    }
    if let Some(path) = init.strip_prefix("file:") {
        return Ok(read_field_csv(Path::new(path), lab.gs.grid())?);
    }
    Err(Failure::Usage(format!("unknown --init {init:?}; use ground, profile:A,k,t0 or file:<path>")))
}

fn evolve(ctx: &Ctx, a: &EvolveArgs) -> Outcome {
    let (t0, t1) = parse_span(&a.t_span)?;
    if t0 == t1 || !(a.snapshot_every > 0.0) {
        return Err(Failure::Usage("empty time span or nonpositive snapshot spacing".into()));
    }
    let lab = ctx.lab()?;
    let u0 = initial_data(&a.init, &lab, &ctx.cfg)?;
    let dt = a.dt.unwrap_or(ctx.cfg.evolution.dt).abs() * (t1 - t0).signum();
    let mut eo = ctx.cfg.evolve_options();
    let n = ((t1 - t0).abs() / a.snapshot_every).round().max(1.0) as usize;
    eo.snapshot_times = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
    let trace = integrate(&u0, t0, t1, dt, &lab.gs, &eo)?;
    let dir = ctx.out_dir().join("evolve");
    let bundle = write_trace_bundle(&dir, &trace, &ctx.hash)?;
    let sep = gradient_separation_monitor(&trace, &lab.gs, separation_floor(&lab.gs));
    let last = trace.snapshots.last().map(|(t, u)| distance_to_orbit(u, *t, &lab.gs));
    let drift = trace.drift();
    let data = json!({
        "trace": bundle, "steps": trace.steps, "dt": trace.dt, "min_step": trace.min_step,
        "final_time": trace.final_time(), "drift": drift, "flagged": trace.flagged,
        "blowup": trace.blowup, "separation": sep, "final_distance": last,
    });
    ctx.emit("evolve", data, || {
        format!(
            "trace {}\nsteps {} final t {:.6}\ndrift mass {:.2e} energy {:.2e}\nblowup {:?}\n",
            bundle.display(),
            trace.steps,
            trace.final_time(),
            drift.mass,
            drift.energy,
            trace.blowup
        )
    })
}

fn modulate(ctx: &Ctx, a: &TraceArgs) -> Outcome {
    let lab = ctx.lab()?;
    let trace = read_trace_bundle(&a.trace, &lab.gs)?;
    let frames = frame_series(&trace, &lab.gs, default_delta0(&lab.gs))?;
    let dir = ctx.out_dir().join("modulate");
    let rows = frames
        .iter()
        .map(|f| vec![f.t, f.theta, f.alpha, f.h_h1(), f.delta, f64::from(u8::from(f.valid))]);
    write_csv(&dir.join("modulation.csv"), &["t", "theta", "alpha", "h_h1", "delta", "valid"], rows)?;
    let report = comparability_report(&frames, &lab.gs, 1e-9 * lab.gs.grad_sq).ok();
    ctx.emit("modulate", json!({"frames": frames.len(), "comparability": report}), || {
        format!("{} frames -> {}\n", frames.len(), dir.join("modulation.csv").display())
    })
}

fn virial(ctx: &Ctx, a: &VirialArgs) -> Outcome {
    let lab = ctx.lab()?;
    let trace = read_trace_bundle(&a.trace, &lab.gs)?;
    let rep: VirialReport = match a.radius {
        Some(r) => localized_identity_check(&trace, &lab.gs, r)?,
        None => virial_identity_check(&trace, &lab.gs)?,
    };
    let dir = ctx.out_dir().join("virial");
    let rows = rep
        .points
        .iter()
        .map(|p| vec![p.t, p.y, p.y_rate, p.y_rate_fd_accel, p.minus4delta, p.a_r.unwrap_or(f64::NAN)]);
    write_csv(
        &dir.join("virial.csv"),
        &["t", "y", "y_rate", "y_rate_fd_accel", "minus4delta", "A_R"],
        rows,
    )?;
    let summary = json!({
        "applicable": rep.applicable, "reason": rep.reason,
        "radius_scale": rep.radius_scale, "max_mismatch": rep.max_mismatch,
    });
    ctx.emit("virial", summary, || match &rep.reason {
        Some(r) => format!("not applicable: {r}\n"),
        None => format!("max mismatch {:.3e}\n", rep.max_mismatch),
    })
}

fn classify(ctx: &Ctx) -> Outcome {
    let lab = ctx.lab()?;
    let dir = ctx.out_dir();
    let report = run_sweep(
        &ctx.cfg.classify,
        &lab,
        &ctx.cfg.evolve_options(),
        ctx.cfg.tolerances.newton_tol,
        Some(&dir),
        &ctx.hash,
    )?;
    let text = report
        .cells
        .iter()
        .map(|c| match c.outcomes() {
            Some((s, f, b)) => format!("{}: {s:?} forward {f:?} backward {b:?} stable {:?}\n", c.name, c.stable),
            None => format!("{}: failed\n", c.name),
        })
        .collect::<String>();
    let manifest = dir.join("manifest.json");
    if ctx.json {
        println!("{}", std::fs::read_to_string(&manifest).map_err(LabError::from)?);
    } else {
        println!("{text}manifest {}", manifest.display());
    }
    Ok(())
}

fn selftest(ctx: &Ctx) -> Outcome {
    let lab = ctx.lab()?;
    let golden = ctx.golden();
    let checks = run_selftest(&lab, golden.as_ref(), ctx.cfg.tolerances.eig_tol);
    let all = checks.iter().all(|c| c.pass) && golden.is_some();
    ctx.emit("selftest", json!({"checks": checks, "golden_loaded": golden.is_some(), "pass": all}), || {
        let mut t = format_table(&checks);
        if golden.is_none() {
            t.push_str("FAIL  golden constants unavailable\n");
        }
        t
    })?;
    if all {
        Ok(())
    } else {
        Err(Failure::Compute("selftest failed".into()))
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = LabConfig::resolve(cli.config.as_deref())?;
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: cli.out,
        json: cli.json,
    };
    match &cli.cmd {
        Cmd::GroundState => ground_state(&ctx),
        Cmd::Spectrum => spectrum(&ctx),
        Cmd::Coercivity => coercivity(&ctx),
        Cmd::Profiles(a) => profiles(&ctx, a),
        Cmd::Evolve(a) => evolve(&ctx, a),
        Cmd::Modulate(a) => modulate(&ctx, a),
        Cmd::Virial(a) => virial(&ctx, a),
        Cmd::Classify => classify(&ctx),
        Cmd::Selftest => selftest(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
