//! `qev`: slices, closed-form validation, entanglement and width sweeps.
//!
//! Exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O error,
//! validation mismatch or selftest failure.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use qev_core::io::{self, fmt_e12, Metadata};
use qev_core::numerics::{DEFAULT_ORDER_2D, DEFAULT_ORDER_4D};
use qev_core::oracle::{validate_closed_form_with, DEFAULT_ABS_FLOOR};
use qev_core::selftest::{run_selftest, SelftestOptions};
use qev_core::sweep::{run_sweep, sweep_csv, CrossingStatus, Relation, SweepConfig};
use qev_core::wigner::{count_extrema, refine_extrema, slice_extrema, GridSpec, Plane, WignerFunction};
use qev_core::{
    entanglement::entangle, log_negativity, symplectic_eigen_physical, ClosedFormWigner, CovarianceMatrix,
    MomentMethod, OracleWigner, Pipeline, QevError, QevParams, QevState, VortexSign,
};

#[derive(Parser, Debug)]
#[command(name = "qev", version, about = "Quantum elliptic vortex phase-space toolkit", args_override_self = true)]
struct Cli {
    /// Worker threads (default: all cores). Never changes output bytes.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// Flat key=value file of option defaults; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Gauss-Hermite order: closed-form normalization for paper-literal
    /// (default 32), inner transform for oracle slices (default 64), phase-space
    /// integrals for entangle/sweep (default 32).
    #[arg(long, global = true, value_name = "N")]
    quad_order: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the Wigner function on a plane through the origin.
    Slice(SliceArgs),
    /// Compare the closed form with the quadrature oracle at seeded points.
    Validate(ValidateArgs),
    /// Covariance matrix, symplectic spectrum and log-negativity.
    Entangle(EntangleArgs),
    /// Log-negativity versus zeta_x for several vortex orders.
    Sweep(SweepArgs),
    /// Run the built-in invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    /// Vortex order.
    #[arg(long, default_value_t = 0)]
    m: u32,
    /// Width in x; sigma = exp(2 zeta).
    #[arg(long, conflicts_with = "zeta_x")]
    sigma_x: Option<f64>,
    #[arg(long, conflicts_with = "zeta_y")]
    sigma_y: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    zeta_x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    zeta_y: Option<f64>,
    /// Vortex handedness, +1 or -1.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    sign: i32,
}

impl StateArgs {
    fn params(&self) -> qev_core::Result<QevParams> {
        let zeta = |s: Option<f64>, z: Option<f64>| match (s, z) {
            (_, Some(z)) => z,
            (Some(s), None) => s.ln() / 2.0,
            (None, None) => 0.0,
        };
        for (name, s) in [("sigma-x", self.sigma_x), ("sigma-y", self.sigma_y)] {
            if let Some(s) = s {
                if !(s.is_finite() && s > 0.0) {
                    return Err(QevError::Config(format!("--{name} must be positive, got {s}")));
                }
            }
        }
        let p = QevParams::new(self.m, zeta(self.sigma_x, self.zeta_x), zeta(self.sigma_y, self.zeta_y))?;
        Ok(p.with_sign(VortexSign::from_i32(self.sign)?))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum GridFormat {
    Csv,
    Pgm,
}

#[derive(Args, Debug)]
struct SliceArgs {
    #[command(flatten)]
    state: StateArgs,
    /// xy | pxpy | xpx | ypy | xpy | ypx
    #[arg(long, default_value = "xpx")]
    plane: Plane,
    /// Points per axis.
    #[arg(long, default_value_t = qev_core::wigner::DEFAULT_SLICE_POINTS)]
    n: usize,
    /// paper-literal | oracle
    #[arg(long, default_value = "paper-literal")]
    pipeline: Pipeline,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Output format (default: from the file extension, csv otherwise).
    #[arg(long, value_enum)]
    format: Option<GridFormat>,
    /// Half-width of the u axis (default: 4 sigma_max or 4/sigma_min).
    #[arg(long)]
    u_half: Option<f64>,
    #[arg(long)]
    v_half: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, default_value_t = 200)]
    n_points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative tolerance for MATCH.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Absolute difference that always counts as MATCH.
    #[arg(long, default_value_t = DEFAULT_ABS_FLOOR)]
    abs_floor: f64,
    /// JSON-lines report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Fixture {
    Vacuum,
    Tmsv,
}

#[derive(Args, Debug)]
struct EntangleArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long, default_value = "paper-literal")]
    pipeline: Pipeline,
    /// Oracle moment route: wigner4d | wavefunction
    #[arg(long, default_value = "wigner4d")]
    method: MomentMethod,
    /// Analytic covariance instead of a state.
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    /// Squeezing of the tmsv fixture.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    zeta_x_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    zeta_x_max: f64,
    #[arg(long, default_value_t = 100)]
    n_steps: usize,
    /// zeta: zeta_y = ln5/4 + zeta_x/2; sigma-proportional: sigma_y = sqrt5 sigma_x
    #[arg(long, default_value = "zeta")]
    relation: Relation,
    /// Override the relation intercept.
    #[arg(long, allow_negative_numbers = true)]
    c0: Option<f64>,
    /// Override the relation slope.
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    /// Comma-separated vortex orders.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    m_list: Vec<u32>,
    #[arg(long, default_value = "paper-literal")]
    pipeline: Pipeline,
    #[arg(long, default_value = "wigner4d")]
    method: MomentMethod,
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    sign: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Replace every tolerance (harness check; 0 must fail).
    #[arg(long)]
    tol: Option<f64>,
    /// Add a detail column.
    #[arg(short, long)]
    verbose: bool,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<QevError> for Failure {
    fn from(e: QevError) -> Self {
        let code = match e {
            QevError::Config(_) => 1,
            QevError::Domain(_) | QevError::Numeric(_) => 2,
            QevError::Io(_) => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn failure(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("qev: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(args: &[String]) -> CmdResult {
    let mut cmd = Cli::command();
    cmd.build();
    let args = match config::find_path(args) {
        Some(path) => {
            let entries = config::load(Path::new(&path)).map_err(|e| failure(3, format!("config {path}: {e}")))?;
            config::splice(&cmd, args, &entries).map_err(|e| failure(1, e))?
        }
        None => args.to_vec(),
    };
    let matches = match cmd.try_get_matches_from_mut(&args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return Ok(code);
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| failure(1, e.to_string()))?;
    if let Some(n) = cli.threads {
        set_threads(n as usize)?;
    }
    match &cli.command {
        Command::Slice(a) => cmd_slice(&cli, a),
        Command::Validate(a) => cmd_validate(&cli, a),
        Command::Entangle(a) => cmd_entangle(&cli, a),
        Command::Sweep(a) => cmd_sweep(&cli, a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| failure(1, format!("--threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_n: usize) -> Result<(), Failure> {
    Ok(())
}

fn push_params(meta: &mut Metadata, p: &QevParams) {
    meta.push("m", p.m)
        .push_f64("zeta_x", p.zeta_x)
        .push_f64("zeta_y", p.zeta_y)
        .push_f64("sigma_x", p.sigma_x())
        .push_f64("sigma_y", p.sigma_y())
        .push("sign", if p.sign == VortexSign::Plus { "+1" } else { "-1" });
}

fn cmd_slice(cli: &Cli, a: &SliceArgs) -> CmdResult {
    let params = a.state.params()?;
    let mut spec = GridSpec::default_window(&params, a.plane, a.n)?;
    for (half, axis) in [(a.u_half, &mut spec.u), (a.v_half, &mut spec.v)] {
        if let Some(h) = half {
            if !(h.is_finite() && h > 0.0) {
                return Err(failure(1, format!("window half-width must be positive, got {h}")));
            }
            *axis = qev_core::wigner::Axis::new(-h, h, a.n)?;
        }
    }
    let mut meta = Metadata::new();
    meta.push("command", "slice");
    push_params(&mut meta, &params);
    meta.push("plane", a.plane).push("pipeline", a.pipeline);
    let w: Box<dyn WignerFunction + Send> = match a.pipeline {
        Pipeline::PaperLiteral => {
            let order = cli.quad_order.unwrap_or(DEFAULT_ORDER_4D);
            let w = ClosedFormWigner::with_order(params, order)?;
            meta.push("normalization_order", order).push_f64("k_num", w.k_num()).push_f64("k_ratio", w.k_ratio());
            Box::new(w)
        }
        Pipeline::Oracle => {
            let order = cli.quad_order.unwrap_or(DEFAULT_ORDER_2D);
            meta.push("transform_order", order);
            Box::new(OracleWigner::with_order(QevState::new(params)?, order)?)
        }
    };
    let grid = qev_core::wigner::wigner_slice(w.as_ref(), a.plane, &spec)?;
    let raw = slice_extrema(&grid)?;
    let refined = refine_extrema(w.as_ref(), &grid, &raw)?;
    let (rc, fc) = (count_extrema(&raw), count_extrema(&refined));
    meta.push("grid_maxima", rc.maxima)
        .push("grid_minima", rc.minima)
        .push("maxima", fc.maxima)
        .push("minima", fc.minima);
    let format = a.format.unwrap_or(match a.out.extension().and_then(|e| e.to_str()) {
        Some("pgm") => GridFormat::Pgm,
        _ => GridFormat::Csv,
    });
    match format {
        GridFormat::Csv => io::write_grid_csv(&a.out, &grid, &meta)?,
        GridFormat::Pgm => io::write_grid_pgm(&a.out, &grid, &meta)?,
    }
    let mut s = String::new();
    let _ = writeln!(s, "plane={} n={} pipeline={}", a.plane, a.n, a.pipeline);
    let _ = writeln!(s, "grid extrema: {} maxima, {} minima", rc.maxima, rc.minima);
    let _ = writeln!(s, "extrema: {} maxima, {} minima", fc.maxima, fc.minima);
    for e in &refined {
        let kind = if e.kind == qev_core::wigner::ExtremumKind::Max { "max" } else { "min" };
        let _ = writeln!(s, "  {kind} u={} v={} W={}", fmt_e12(e.u), fmt_e12(e.v), fmt_e12(e.value));
    }
    print!("{s}");
    Ok(0)
}

fn cmd_validate(cli: &Cli, a: &ValidateArgs) -> CmdResult {
    let params = a.state.params()?;
    let order = cli.quad_order.unwrap_or(DEFAULT_ORDER_4D);
    let report = validate_closed_form_with(&params, a.n_points, a.seed, a.tol, a.abs_floor, order)?;
    io::write_validation(&a.out, &report)?;
    let s = &report.summary;
    println!(
        "{} MATCH, {} MISMATCH, max_rel_err={}, max_abs_err={}",
        s.n_match,
        s.n_mismatch,
        fmt_e12(s.max_rel_err),
        fmt_e12(s.max_abs_err)
    );
    Ok(if report.all_match() { 0 } else { 3 })
}

fn cmd_entangle(cli: &Cli, a: &EntangleArgs) -> CmdResult {
    let order = cli.quad_order.unwrap_or(DEFAULT_ORDER_4D);
    let mut meta = Metadata::new();
    meta.push("command", "entangle");
    let (cov, physical_nu_minus, report) = match a.fixture {
        Some(f) => {
            let cov = match f {
                Fixture::Vacuum => {
                    meta.push("fixture", "vacuum");
                    CovarianceMatrix::vacuum()
                }
                Fixture::Tmsv => {
                    if !a.r.is_finite() {
                        return Err(failure(1, "--r must be finite"));
                    }
                    meta.push("fixture", "tmsv").push_f64("r", a.r);
                    CovarianceMatrix::two_mode_squeezed(a.r)
                }
            };
            cov.check_physical()?;
            (cov, symplectic_eigen_physical(&cov)?.1, log_negativity(&cov)?)
        }
        None => {
            let params = a.state.params()?;
            push_params(&mut meta, &params);
            meta.push("pipeline", a.pipeline);
            meta.push(
                "moment_method",
                if a.pipeline == Pipeline::Oracle { a.method.to_string() } else { "closed-form".into() },
            );
            meta.push("quad_order", order);
            let r = entangle(&params, a.pipeline, a.method, order)?;
            meta.push(
                "label",
                if r.gaussian_approximation { "Gaussian-approximation" } else { "exact (Gaussian state)" },
            );
            (r.covariance, r.physical_nu_minus, r.report)
        }
    };
    let mut out = meta.render();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("delta_pt", fmt_e12(report.delta_pt));
    kv("nu_plus", fmt_e12(report.nu_plus));
    kv("nu_minus", fmt_e12(report.nu_minus));
    kv("nu_min", fmt_e12(report.nu_min));
    kv("physical_nu_minus", fmt_e12(physical_nu_minus));
    kv("separable", report.separable.to_string());
    kv("log_negativity", fmt_e12(report.log_negativity));
    kv("det_sigma", fmt_e12(cov.det()));
    const NAMES: [&str; 4] = ["x", "px", "y", "py"];
    for i in 0..4 {
        for j in i..4 {
            kv(&format!("sigma_{}_{}", NAMES[i], NAMES[j]), fmt_e12(cov.entries[i][j]));
        }
    }
    print!("{out}");
    if let Some(path) = &a.out {
        io::write_atomic(path, out.as_bytes())?;
    }
    Ok(0)
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> CmdResult {
    let (c0, c1) = a.relation.coefficients();
    let config = SweepConfig {
        zeta_x_min: a.zeta_x_min,
        zeta_x_max: a.zeta_x_max,
        n_steps: a.n_steps,
        c0: a.c0.unwrap_or(c0),
        c1: a.c1.unwrap_or(c1),
        m_list: a.m_list.clone(),
        pipeline: a.pipeline,
        method: a.method,
        sign: VortexSign::from_i32(a.sign)?,
        order: cli.quad_order.unwrap_or(DEFAULT_ORDER_4D),
    };
    let result = run_sweep(&config)?;
    io::write_atomic(&a.out, sweep_csv(&result).as_bytes())?;
    if let Some((i, msg)) = &result.failure {
        return Err(failure(2, format!("sweep failed at grid point {i}: {msg} (partial CSV written)")));
    }
    println!("rows={} ordering={}", result.rows.len(), result.global_ordering().name());
    for x in &result.crossings {
        let star = match (x.status, x.sigma_x_star) {
            (CrossingStatus::Found, Some(s)) => format!(" sigma_x*={}", fmt_e12(s)),
            _ => String::new(),
        };
        println!("crossing m={}/{}: {}{star}", x.m_low, x.m_high, x.status.name());
    }
    Ok(0)
}

fn cmd_selftest(a: &SelftestArgs) -> CmdResult {
    if let Some(t) = a.tol {
        if !(t >= 0.0) {
            return Err(failure(1, format!("--tol must be >= 0, got {t}")));
        }
    }
    let report = run_selftest(&SelftestOptions { tolerance_override: a.tol })?;
    print!("{}", report.table(a.verbose));
    Ok(if report.all_passed() { 0 } else { 3 })
}
