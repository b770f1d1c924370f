//! Batch command line front-end.
//!
//! Every command writes into `<out>/<command>/`. Files are written to a
//! temporary name and renamed into place. Outputs depend only on the
//! configuration and the seed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{equivariant_density, mixing_rate, verify_qr, Cocycle, DiagnosticsReport, Verdict};
use crate::config::ExperimentConfig;
use crate::dynamics::DriverState;
use crate::error::{Error, Result};
use crate::response::{epsilon_sweep, fd_oracle, ConvergenceReport, MixingSummary, ResponseSolver};
use crate::spectral::SpectralField;

/// Coefficients at or below this modulus are left out of field dumps.
pub const DUMP_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Parser)]
#[command(name = "quenched", version, about = "Quenched response of random expanding maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equivariant densities on sampled fibers and their equivariance residuals.
    Density(Common),
    /// Mixing-rate estimate on the zero-mass subspace.
    Mixing(Common),
    /// Uniform bounds, Lasota-Yorke fit and derivative remainders.
    VerifyQr(Common),
    /// First and second order response terms, with remainder sweep.
    Response(Common),
    /// Taylor-remainder sweep over the configured parameter grid.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for probe fields; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Density(c)
            | Command::Mixing(c)
            | Command::VerifyQr(c)
            | Command::Response(c)
            | Command::Sweep(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Density(_) => "density",
            Command::Mixing(_) => "mixing",
            Command::VerifyQr(_) => "verify_qr",
            Command::Response(_) => "response",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            for p in &outcome.files {
                println!("{}", p.display());
            }
            if let Some(note) = &outcome.failure {
                eprintln!("error: {note}");
                3
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Files written by a command, and a dynamical failure to report after
/// writing them.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failure: Option<String>,
}

pub fn execute(command: &Command) -> Result<Outcome> {
    let common = command.common();
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let root = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let dir = root.join(command.name());
    let work = || -> Result<Outcome> {
        let mut out = Writer::new(dir.clone());
        let failure = match command {
            Command::Density(_) => cmd_density(&cfg, &mut out)?,
            Command::Mixing(_) => cmd_mixing(&cfg, &mut out)?,
            Command::VerifyQr(_) => cmd_verify_qr(&cfg, &mut out)?,
            Command::Response(_) => cmd_response(&cfg, &mut out, true)?,
            Command::Sweep(_) => cmd_response(&cfg, &mut out, false)?,
        };
        Ok(Outcome {
            files: out.files,
            failure,
        })
    };
    match common.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(work)
        }
        None => work(),
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Fibers `sigma^j omega_0`; a single fiber for fiber-independent families.
fn fibers(cfg: &ExperimentConfig, cocycle: &Cocycle, origin: DriverState) -> Vec<DriverState> {
    let count = if cocycle.spec().family.is_fiber_dependent() {
        cfg.fibers
    } else {
        1
    };
    cocycle.driver().orbit(origin, 0, count)
}

#[derive(Serialize)]
struct ResidualRow {
    fiber: usize,
    state: DriverState,
    label: f64,
    iterations: usize,
    increment: f64,
    mass_drift: f64,
    residual: f64,
}

#[derive(Serialize)]
struct DensitySummary {
    family: String,
    driver: String,
    bandwidth: usize,
    eps: f64,
    tol: f64,
    fibers: usize,
    max_residual: f64,
    max_iterations: usize,
    max_mass_drift: f64,
    residuals: Vec<ResidualRow>,
}

fn cmd_density(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Option<String>> {
    let (cocycle, origin) = cfg.cocycle()?;
    let omegas = fibers(cfg, &cocycle, origin);
    let opts = cfg.density_options();
    let mut chain = omegas.clone();
    chain.push(cocycle.driver().forward(*omegas.last().expect("one fiber")));
    let densities = chain
        .par_iter()
        .map(|&w| equivariant_density(&cocycle, w, &opts))
        .collect::<Result<Vec<_>>>()?;
    let level = cocycle.spec().ladder.regularity(1);
    let mut rows = Vec::new();
    for (j, &w) in omegas.iter().enumerate() {
        let d = &densities[j];
        let pushed = cocycle.fiber_matrix(w)?.apply(&d.field);
        rows.push(ResidualRow {
            fiber: j,
            state: w,
            label: cocycle.label(w),
            iterations: d.iterations,
            increment: d.increment,
            mass_drift: d.mass_drift,
            residual: pushed.sub(&densities[j + 1].field).sobolev_norm(level),
        });
        out.write(&format!("fiber_{j:04}.csv"), &d.field.to_csv(DUMP_THRESHOLD))?;
        out.write(
            &format!("samples_fiber_{j:04}.csv"),
            &d.field.synthesize(cfg.sample_grid)?.to_csv(),
        )?;
    }
    let mut table = String::from("fiber,label,iterations,increment,mass_drift,residual\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.fiber, r.label, r.iterations, r.increment, r.mass_drift, r.residual
        ));
    }
    out.write("residuals.csv", &table)?;
    let spec = cocycle.spec();
    out.json(
        "summary.json",
        &DensitySummary {
            family: spec.family.describe(),
            driver: spec.driver.describe(),
            bandwidth: spec.bandwidth,
            eps: spec.eps,
            tol: opts.tol,
            fibers: rows.len(),
            max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
            max_iterations: rows.iter().map(|r| r.iterations).max().unwrap_or(0),
            max_mass_drift: rows.iter().map(|r| r.mass_drift).fold(0.0, f64::max),
            residuals: rows,
        },
    )?;
    Ok(None)
}

fn verdict_note(report: &DiagnosticsReport) -> Option<String> {
    (report.verdict == Verdict::NonMixing).then(|| {
        format!(
            "verdict non-mixing (rho = {}, threshold {})",
            report.rho, report.threshold
        )
    })
}

fn write_report(out: &mut Writer, report: &DiagnosticsReport) -> Result<()> {
    out.json("report.json", report)?;
    out.write("traces.csv", &report.traces_csv())
}

fn cmd_mixing(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Option<String>> {
    let (cocycle, origin) = cfg.cocycle()?;
    let report = mixing_rate(&cocycle, &cfg.probes(&cocycle), &cfg.mixing_options(origin))?;
    write_report(out, &report)?;
    Ok(verdict_note(&report))
}

fn cmd_verify_qr(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Option<String>> {
    let (cocycle, origin) = cfg.cocycle()?;
    let report = verify_qr(&cocycle, &cfg.probes(&cocycle), &cfg.qr_options(origin))?;
    write_report(out, &report)?;
    if let Some(q4) = &report.qr4 {
        out.write("qr4.csv", &q4.to_csv())?;
    }
    if let Some(q5) = &report.qr5 {
        out.write("qr5.csv", &q5.to_csv())?;
    }
    Ok(verdict_note(&report))
}

#[derive(Serialize)]
struct OracleCheck {
    fiber: usize,
    order: u32,
    eps: f64,
    difference: f64,
    relative: f64,
    fd_discretization_error: f64,
    fd_solver_error: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    rho: f64,
    n_trunc: usize,
    fibers: Vec<&'a ConvergenceReport>,
}

fn cmd_response(cfg: &ExperimentConfig, out: &mut Writer, expansions: bool) -> Result<Option<String>> {
    let (cocycle, origin) = cfg.cocycle()?;
    let zero = cocycle.spec().with_eps(0.0)?;
    let cocycle = Cocycle::new(zero);
    let diagnostics = verify_qr(&cocycle, &cfg.probes(&cocycle), &cfg.qr_options(origin))?;
    let solver = ResponseSolver::new(
        &cocycle,
        MixingSummary::from(&diagnostics),
        cfg.density_options(),
        cfg.tolerances.n_trunc,
    )?;
    let omegas = fibers(cfg, &cocycle, origin);
    let second = cocycle.spec().family.order() >= 2;
    let level = cocycle.spec().ladder.regularity(1);

    if expansions {
        let results = omegas
            .par_iter()
            .map(|&w| solver.expansion(w, second))
            .collect::<Result<Vec<_>>>()?;
        let mut checks = Vec::new();
        for (j, e) in results.iter().enumerate() {
            out.json(&format!("expansion_fiber_{j:04}.json"), e)?;
            out.write(&format!("v0_fiber_{j:04}.csv"), &e.v0.to_csv(DUMP_THRESHOLD))?;
            out.write(&format!("v1_fiber_{j:04}.csv"), &e.v1.to_csv(DUMP_THRESHOLD))?;
            if let Some(v2) = &e.v2 {
                out.write(&format!("v2_fiber_{j:04}.csv"), &v2.to_csv(DUMP_THRESHOLD))?;
            }
            if let Some(h) = cfg.fd_eps {
                let terms: Vec<(u32, &SpectralField)> =
                    std::iter::once((1, &e.v1)).chain(e.v2.iter().map(|v| (2, v))).collect();
                for (order, exact) in terms {
                    let fd = fd_oracle(&cocycle, e.fiber, h, order, solver.density_options())?;
                    let difference = fd.field.sub(exact).sobolev_norm(level);
                    let scale = exact.sobolev_norm(level);
                    checks.push(OracleCheck {
                        fiber: j,
                        order,
                        eps: h,
                        difference,
                        relative: if scale > 0.0 { difference / scale } else { difference },
                        fd_discretization_error: fd.discretization_error,
                        fd_solver_error: fd.solver_error,
                    });
                }
            }
        }
        if cfg.fd_eps.is_some() {
            out.json("oracle.json", &checks)?;
        }
    }

    let reports = omegas
        .par_iter()
        .map(|&w| epsilon_sweep(&solver, w, &cfg.eps_grid, Some(&diagnostics)))
        .collect::<Result<Vec<_>>>()?;
    for (j, r) in reports.iter().enumerate() {
        out.write(&format!("remainders_fiber_{j:04}.csv"), &r.to_csv())?;
    }
    out.json(
        "convergence.json",
        &SweepSummary {
            rho: diagnostics.rho,
            n_trunc: solver.n_trunc(),
            fibers: reports.iter().collect(),
        },
    )?;
    Ok(None)
}
