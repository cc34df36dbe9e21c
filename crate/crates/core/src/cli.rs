//! The `fbp-lab` command line.
//!
//! Every command writes into its own output directory and finishes with a
//! `manifest.json` that records the configuration, seeds, crate version and
//! checksums of inputs and outputs.

use crate::boundary::{self, extract_mu_at, DEFAULT_THETA};
use crate::diagnostics;
use crate::error::{FbpError, Result};
use crate::feynman_kac::{self, Barrier, MCConfig};
use crate::grid::{BoundaryPath, Grid1D, InitialCondition, Profile};
use crate::io::{self, Manifest};
use crate::kpp;
use crate::nbbm::{self, Density, ReplicaManifest};
use crate::report::{all_pass, Report};
use crate::sandwich::{self, Certificate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fbp-lab",
    version,
    about = "Fisher-KPP free boundary solver and cross-checks"
)]
pub struct Cli {
    /// Worker threads for parallel loops.
    #[arg(long, env = "KPP_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certified sandwich solve (or the penalized solver) to time t.
    Solve(SolveArgs),
    /// Penalized equation with a fixed exponent, recorded at several times.
    #[command(name = "un-solve")]
    UnSolve(UnSolveArgs),
    /// N-BBM replicas and their empirical tails.
    Nbbm(NbbmArgs),
    /// Feynman-Kac Monte Carlo estimate at one probe.
    Fk(FkArgs),
    /// Checks against a solve output directory.
    Check(CheckArgs),
    /// Moment identity along a long co-moving boundary path.
    Identity(IdentityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sandwich,
    Penalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Quick,
    Full,
}

#[derive(Debug, Clone, Args)]
pub struct IcArgs {
    /// step:X0, exp:RATE[@X0], uniform:A,B (tail of the uniform law) or file:PATH.
    #[arg(long)]
    pub ic: String,
    /// Exponential-moment abscissa of a tabulated datum.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub xmin: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub xmax: f64,
    #[arg(long)]
    pub dx: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub ic: IcArgs,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Half-width of the certificate interval [-A, A].
    #[arg(long = "A", default_value_t = 1.0)]
    pub half_width: f64,
    #[arg(long, value_enum, default_value_t = Solver::Sandwich)]
    pub solver: Solver,
    /// Exponent for the penalized solver.
    #[arg(long, default_value_t = 256)]
    pub n: u32,
    /// Time step for the penalized solver (default: the stability limit).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct UnSolveArgs {
    #[command(flatten)]
    pub ic: IcArgs,
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub t: f64,
    /// Extra output times before t, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct NbbmArgs {
    /// uniform:A,B or exp:RATE[@X0].
    #[arg(long)]
    pub phi: String,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub t: f64,
    /// Number of replicas.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Seed of the first replica; the others follow consecutively.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub amin: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub amax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub da: f64,
    /// Solve directory to compare the tails against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value = "nbbm-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FkArgs {
    /// X,T.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub probe: (f64, f64),
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Boundary CSV; the paths are stopped when they cross it.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Penalized field CSV; estimates u_n instead (needs --n).
    #[arg(long, conflicts_with = "boundary")]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<u32>,
    /// Initial datum; read from the manifest next to the input when omitted.
    #[arg(long)]
    pub ic: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for estimate.json and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Output directory of `solve`.
    pub dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Suite::Quick)]
    pub suite: Suite,
    /// Monte Carlo paths per probe in the full suite.
    #[arg(long, default_value_t = 20_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report array here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct IdentityArgs {
    #[command(flatten)]
    pub ic: IcArgs,
    /// The identity uses r = 1 - eps.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 50.0)]
    pub smax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
    #[arg(long, default_value_t = 0.001)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// What `solve` records in its manifest; `check` rebuilds the run from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub ic: String,
    pub gamma: Option<f64>,
    pub t: f64,
    pub delta: f64,
    pub steps: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub dx: f64,
    #[serde(rename = "A")]
    pub half_width: f64,
    pub solver: Solver,
    pub n: u32,
    pub dt: f64,
    pub theta: f64,
}

fn usage(msg: impl Into<String>) -> FbpError {
    FbpError::Precondition(msg.into())
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| FbpError::Parse(format!("{s:?} is not a number")))
}

fn rate_and_origin(s: &str) -> Result<(f64, f64)> {
    match s.split_once('@') {
        Some((r, x0)) => Ok((parse_f64(r)?, parse_f64(x0)?)),
        None => Ok((parse_f64(s)?, 0.0)),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    two_numbers(s).map_err(|e| e.to_string())
}

fn two_numbers(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| FbpError::Parse(format!("expected A,B, got {s:?}")))?;
    Ok((parse_f64(a)?, parse_f64(b)?))
}

pub fn parse_density(spec: &str) -> Result<Density> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| FbpError::Parse(format!("density {spec:?} has no kind")))?;
    let d = match kind {
        "uniform" => {
            let (a, b) = two_numbers(rest)?;
            Density::Uniform { a, b }
        }
        "exp" => {
            let (rate, x0) = rate_and_origin(rest)?;
            Density::Exponential { rate, x0 }
        }
        _ => return Err(FbpError::Parse(format!("unknown density kind {kind:?}"))),
    };
    d.validate()?;
    Ok(d)
}

/// Parses an initial-condition spec. Returns the file it was read from, if any.
pub fn parse_ic(spec: &str, gamma: Option<f64>) -> Result<(InitialCondition, Option<PathBuf>)> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| FbpError::Parse(format!("initial condition {spec:?} has no kind")))?;
    let analytic = |ic: InitialCondition| {
        if gamma.is_some() {
            warn("--gamma is ignored for analytic initial conditions");
        }
        Ok((ic, None))
    };
    match kind {
        "step" => analytic(InitialCondition::step(parse_f64(rest)?)),
        "exp" => {
            let (rate, x0) = rate_and_origin(rest)?;
            analytic(InitialCondition::exponential_at(rate, x0)?)
        }
        "uniform" => {
            let (a, b) = two_numbers(rest)?;
            let d = Density::Uniform { a, b };
            d.validate()?;
            analytic(d.to_initial_condition()?)
        }
        "file" => {
            let path = PathBuf::from(rest);
            if !path.is_file() {
                return Err(usage(format!("initial condition file {} not found", path.display())));
            }
            let path = path.canonicalize()?;
            let p = io::read_profile_csv(&path)?;
            let ic = InitialCondition::tabulated(p, gamma);
            if !ic.monotone {
                return Err(FbpError::NotMonotone);
            }
            if gamma.is_none() {
                warn("no --gamma for a tabulated initial condition; the moment identity check is disabled");
            }
            Ok((ic, Some(path)))
        }
        _ => Err(FbpError::Parse(format!("unknown initial condition kind {kind:?}"))),
    }
}

/// The spec with a file path made absolute, so later commands can find it.
fn canonical_spec(spec: &str, file: Option<&Path>) -> String {
    match file {
        Some(p) => format!("file:{}", p.display()),
        None => spec.to_string(),
    }
}

fn grid_of(w: &WindowArgs) -> Result<Grid1D> {
    Grid1D::with_spacing(w.xmin, w.xmax, w.dx)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Number of whole steps of size close to `delta` that reach `t`.
fn step_count(t: f64, delta: f64) -> Result<usize> {
    if !(t > 0.0 && t.is_finite()) || !(delta > 0.0) {
        return Err(usage(format!("need t > 0 and delta > 0, got t={t}, delta={delta}")));
    }
    let n = (t / delta).round().max(1.0) as usize;
    if (n as f64 * delta - t).abs() > 1e-9 * t {
        warn(&format!(
            "t={t} is not a multiple of delta={delta}; using delta={}",
            t / n as f64
        ));
    }
    Ok(n)
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let (ic, file) = parse_ic(&a.ic.ic, a.ic.gamma)?;
    let grid = grid_of(&a.window)?;
    let steps = step_count(a.t, a.delta)?;
    let delta = a.t / steps as f64;
    let dt = a.dt.unwrap_or_else(|| kpp::max_stable_dt(grid.dx()));
    let cfg = SolveConfig {
        ic: canonical_spec(&a.ic.ic, file.as_deref()),
        gamma: a.ic.gamma,
        t: a.t,
        delta,
        steps,
        xmin: grid.x_min(),
        xmax: grid.x_max(),
        dx: grid.dx(),
        half_width: a.half_width,
        solver: a.solver,
        n: a.n,
        dt,
        theta: a.theta,
    };
    prepare_out(&a.out)?;
    let mut manifest = Manifest::new("solve", serde_json::to_value(&cfg)?);
    if let Some(f) = &file {
        manifest.add_input(f)?;
    }
    match a.solver {
        Solver::Sandwich => {
            let run = sandwich::run_with_boundary(&ic, &grid, delta, steps, a.half_width, a.theta)?;
            if run.dropped > 0 {
                warn(&format!(
                    "{} boundary samples fell outside the window and were dropped",
                    run.dropped
                ));
            }
            let pair = run.pair;
            io::write_profile_csv(&a.out.join("lower.csv"), &pair.lower)?;
            io::write_profile_csv(&a.out.join("upper.csv"), &pair.upper)?;
            io::write_boundary_csv(&a.out.join("mu.csv"), &run.boundary)?;
            let cert = pair.certificate();
            io::write_json(&a.out.join("certificate.json"), &cert)?;
            manifest.finish(&a.out)?;
            eprintln!(
                "gap_L1 = {:.6e}, bound_L1 = {:.6e}, certified: {}",
                cert.gap_l1, cert.bound_l1, cert.pass
            );
            Ok(if cert.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
        }
        Solver::Penalized => {
            let times: Vec<f64> = (1..=steps).map(|k| k as f64 * delta).collect();
            let run = kpp::solve_un_at(&ic, &grid, a.n, &times, dt)?;
            let tracked =
                boundary::track_path_with(&run.field, a.theta, boundary::DEFAULT_JUMP_CONSTANT, Some(ic.mu0))?;
            io::write_profile_csv(&a.out.join("u.csv"), run.field.final_profile().expect("one time"))?;
            io::write_boundary_csv(&a.out.join("mu.csv"), &tracked.path)?;
            manifest.finish(&a.out)?;
            Ok(EXIT_PASS)
        }
    }
}

#[derive(Debug, Serialize)]
struct FieldMeta {
    n_exponent: u32,
    dt: f64,
    dx: f64,
}

fn cmd_un_solve(a: &UnSolveArgs) -> Result<i32> {
    let (ic, file) = parse_ic(&a.ic.ic, a.ic.gamma)?;
    let grid = grid_of(&a.window)?;
    let dt = a.dt.unwrap_or_else(|| kpp::max_stable_dt(grid.dx()));
    let mut times: Vec<f64> = a.times.iter().copied().filter(|&s| s > 0.0 && s < a.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times.push(a.t);
    let run = kpp::solve_un_at(&ic, &grid, a.n, &times, dt)?;
    prepare_out(&a.out)?;
    io::write_field_csv(&a.out.join("field.csv"), &run.field)?;
    io::write_json(
        &a.out.join("field.json"),
        &FieldMeta {
            n_exponent: run.n_exponent,
            dt: run.dt,
            dx: grid.dx(),
        },
    )?;
    let reports = run
        .field
        .times
        .iter()
        .zip(&run.field.profiles)
        .map(|(&t, p)| kpp::check_uchiyama(p, t))
        .collect::<Result<Vec<_>>>()?;
    io::write_json(&a.out.join("uchiyama.json"), &reports)?;
    let mut manifest = Manifest::new(
        "un-solve",
        json!({"ic": canonical_spec(&a.ic.ic, file.as_deref()), "gamma": a.ic.gamma, "n": a.n, "times": times, "xmin": grid.x_min(),
               "xmax": grid.x_max(), "dx": grid.dx(), "dt": run.dt}),
    );
    if let Some(f) = &file {
        manifest.add_input(f)?;
    }
    manifest.finish(&a.out)?;
    print_reports(&reports);
    Ok(exit_for(&reports))
}

fn print_reports(reports: &[Report]) {
    for r in reports {
        eprintln!("{}", r.line());
    }
}

fn exit_for(reports: &[Report]) -> i32 {
    if all_pass(reports) {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

/// The final pair of a sandwich solve directory.
pub struct SolveDir {
    pub config: SolveConfig,
    pub lower: Profile,
    pub upper: Profile,
    pub certificate: Certificate,
    pub boundary: BoundaryPath,
}

pub fn read_solve_dir(dir: &Path) -> Result<SolveDir> {
    let need = |name: &str| {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(usage(format!("{} is missing", p.display())))
        }
    };
    let manifest: Manifest = io::read_json(&need("manifest.json")?)?;
    let config: SolveConfig = serde_json::from_value(manifest.config)?;
    if config.solver != Solver::Sandwich {
        return Err(usage(format!("{} is not a sandwich run", dir.display())));
    }
    Ok(SolveDir {
        lower: io::read_profile_csv(&need("lower.csv")?)?,
        upper: io::read_profile_csv(&need("upper.csv")?)?,
        certificate: io::read_json(&need("certificate.json")?)?,
        boundary: io::read_boundary_csv(&need("mu.csv")?)?,
        config,
    })
}

fn midpoint(lower: &Profile, upper: &Profile) -> Result<(Profile, Profile)> {
    let mid: Vec<f64> = lower
        .values
        .iter()
        .zip(&upper.values)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let rad: Vec<f64> = lower
        .values
        .iter()
        .zip(&upper.values)
        .map(|(l, u)| 0.5 * (u - l).abs())
        .collect();
    let (lt, rt) = (
        0.5 * (lower.left_tail + upper.left_tail),
        0.5 * (lower.right_tail + upper.right_tail),
    );
    Ok((
        Profile::new(lower.grid, mid, lt, rt)?,
        Profile::new(lower.grid, rad, 0.0, 0.0)?,
    ))
}

fn cmd_nbbm(a: &NbbmArgs) -> Result<i32> {
    let phi = parse_density(&a.phi)?;
    if !(a.da > 0.0 && a.amax > a.amin) {
        return Err(usage("need amax > amin and da > 0"));
    }
    let cells = ((a.amax - a.amin) / a.da).round() as usize;
    let a_grid: Vec<f64> = (0..=cells).map(|k| a.amin + k as f64 * a.da).collect();
    let reference = a.compare.as_deref().map(read_solve_dir).transpose()?;
    prepare_out(&a.out)?;
    let mut tails = Vec::new();
    let mut seeds = Vec::new();
    for r in 0..a.seeds {
        let seed = a.seed + r;
        let start = Instant::now();
        let e = nbbm::evolve(&nbbm::init_ensemble(&phi, a.n, seed)?, a.t)?;
        let wall_time = start.elapsed().as_secs_f64();
        let tail = nbbm::empirical_tail(&e, &a_grid);
        io::write_tail_csv(&a.out.join(format!("tail_{seed}.csv")), &tail)?;
        io::write_json(
            &a.out.join(format!("replica_{seed}.json")),
            &ReplicaManifest {
                n: a.n,
                t: a.t,
                seed,
                events: e.events,
                wall_time,
            },
        )?;
        seeds.push(seed);
        tails.push(tail);
    }
    let mut manifest = Manifest::new(
        "nbbm",
        json!({"phi": a.phi, "N": a.n, "t": a.t, "seeds": a.seeds, "seed": a.seed,
               "amin": a.amin, "amax": a.amax, "da": a.da,
               "compare": a.compare.as_ref().map(|p| p.display().to_string())}),
    );
    manifest.seeds = seeds;
    let mut code = EXIT_PASS;
    if let (Some(run), Some(dir)) = (reference, &a.compare) {
        manifest.add_input(&dir.join("lower.csv"))?;
        manifest.add_input(&dir.join("upper.csv"))?;
        if run.config.ic != a.phi {
            warn(&format!("comparing against a run of --ic {}", run.config.ic));
        }
        let (mid, rad) = midpoint(&run.lower, &run.upper)?;
        let radius = a_grid.iter().map(|&x| rad.eval(x)).fold(0.0, f64::max);
        let mut reports = tails
            .iter()
            .map(|tail| nbbm::compare_to_u(tail, &mid, run.config.t, radius))
            .collect::<Result<Vec<_>>>()?;
        let mean = reports.iter().map(|r| r.observed).sum::<f64>() / reports.len() as f64;
        reports.push(
            Report::upper("nbbm_mean_gap", mean, nbbm::sampling_tolerance(a.n) + radius)
                .with_detail(format!("{} replicas", tails.len())),
        );
        io::write_json(&a.out.join("comparison.json"), &reports)?;
        print_reports(&reports);
        code = exit_for(&reports);
    }
    manifest.finish(&a.out)?;
    Ok(code)
}

/// Initial condition for `fk`: the flag, or the manifest beside `input`.
fn ic_for(flag: Option<&str>, gamma: Option<f64>, input: &Path) -> Result<InitialCondition> {
    if let Some(s) = flag {
        return Ok(parse_ic(s, gamma)?.0);
    }
    let m = input.parent().unwrap_or(Path::new(".")).join("manifest.json");
    if !m.is_file() {
        return Err(usage(format!("no --ic and no manifest next to {}", input.display())));
    }
    let manifest: Manifest = io::read_json(&m)?;
    let s = manifest.config["ic"]
        .as_str()
        .ok_or_else(|| usage(format!("{} has no ic entry", m.display())))?;
    let g = manifest.config["gamma"].as_f64();
    Ok(parse_ic(s, g)?.0)
}

fn cmd_fk(a: &FkArgs) -> Result<i32> {
    let cfg = MCConfig {
        paths: a.paths,
        h: a.h,
        seed: a.seed,
        probe: a.probe,
    };
    let (est, input) = match (&a.boundary, &a.field) {
        (Some(b), None) => {
            if !b.is_file() {
                return Err(usage(format!("{} not found", b.display())));
            }
            let ic = ic_for(a.ic.as_deref(), a.gamma, b)?;
            let path = io::read_boundary_csv(b)?;
            (
                feynman_kac::estimate_u_with(&cfg, Barrier::Path(&path), &ic)?,
                b.clone(),
            )
        }
        (None, Some(f)) => {
            if !f.is_file() {
                return Err(usage(format!("{} not found", f.display())));
            }
            let n = a.n.ok_or_else(|| usage("--field needs --n"))?;
            let ic = ic_for(a.ic.as_deref(), a.gamma, f)?;
            let field = io::read_field_csv(f)?;
            (feynman_kac::estimate_un(&cfg, &ic, n, &field)?, f.clone())
        }
        _ => return Err(usage("give exactly one of --boundary and --field")),
    };
    println!("{}", serde_json::to_string_pretty(&est)?);
    if let Some(out) = &a.out {
        prepare_out(out)?;
        io::write_json(&out.join("estimate.json"), &est)?;
        let mut manifest = Manifest::new(
            "fk",
            json!({"probe": [a.probe.0, a.probe.1], "paths": a.paths, "h": a.h, "n": a.n, "ic": a.ic, "gamma": a.gamma,
                   "input": input.display().to_string()}),
        );
        manifest.seeds = vec![a.seed];
        manifest.add_input(&input)?;
        manifest.finish(out)?;
    }
    Ok(EXIT_PASS)
}

fn push_or_fail(out: &mut Vec<Report>, name: &str, r: Result<Vec<Report>>) {
    match r {
        Ok(mut v) => out.append(&mut v),
        Err(e) => out.push(Report::new(name, f64::NAN, f64::NAN, false).with_detail(e.to_string())),
    }
}

fn manifest_checksums(dir: &Path) -> Result<Vec<Report>> {
    let m: Manifest = io::read_json(&dir.join("manifest.json"))?;
    let mut bad = Vec::new();
    for (name, sum) in &m.outputs {
        if io::sha256_file(&dir.join(name)).ok().as_deref() != Some(sum.as_str()) {
            bad.push(name.clone());
        }
    }
    for (path, sum) in &m.inputs {
        if io::sha256_file(Path::new(path)).ok().as_deref() != Some(sum.as_str()) {
            bad.push(path.clone());
        }
    }
    let r = Report::upper("manifest_checksums", bad.len() as f64, 0.0);
    Ok(vec![if bad.is_empty() {
        r
    } else {
        r.with_detail(format!("changed: {}", bad.join(", ")))
    }])
}

fn quick_checks(run: &SolveDir) -> Vec<Report> {
    let dx = run.lower.grid.dx();
    let cert = &run.certificate;
    let mut out = vec![Report::upper("certificate", cert.gap_l1, cert.bound_l1 + 10.0 * dx)
        .with_detail(format!("delta={}, n={}, A={}", cert.delta, cert.n, cert.a))];
    let violations = run
        .lower
        .values
        .iter()
        .zip(&run.upper.values)
        .filter(|(l, u)| l > u)
        .count();
    out.push(Report::upper("ordering", violations as f64, 0.0));
    out.push(boundary::check_increments(&run.boundary, 4.0 * dx));
    let shape = midpoint(&run.lower, &run.upper).and_then(|(mid, _)| {
        let est = extract_mu_at(&mid, run.config.theta, run.config.t, "midpoint")?;
        let mut v = vec![boundary::check_neumann(&mid, &est)];
        v.extend(boundary::check_density(&mid, &est));
        Ok(v)
    });
    push_or_fail(&mut out, "neumann", shape);
    out
}

/// Probes `offsets` to the right of the final boundary sample.
fn fk_checks(run: &SolveDir, ic: &InitialCondition, paths: usize, seed: u64) -> Result<Vec<Report>> {
    let t = run.config.t;
    let mu = run
        .boundary
        .mu_at(t)
        .ok_or_else(|| usage("boundary does not reach t"))?;
    let (mid, rad) = midpoint(&run.lower, &run.upper)?;
    let h = 1e-4_f64.min(run.config.delta);
    let mut out = Vec::new();
    for (i, off) in [0.25, 0.5, 1.0, 2.0, 3.0].into_iter().enumerate() {
        let x = mu + off;
        let cfg = MCConfig {
            paths,
            h,
            seed: seed + i as u64,
            probe: (x, t),
        };
        let est = feynman_kac::estimate_u(&cfg, &run.boundary, ic)?;
        let reference = mid.eval(x);
        let bound = 3.0 * est.stderr + rad.eval(x) + 0.01;
        out.push(
            Report::upper("feynman_kac", (est.mean - reference).abs(), bound)
                .with_detail(format!("x={x:.4}, mean={:.6}, midpoint={reference:.6}", est.mean)),
        );
    }
    Ok(out)
}

fn penalized_checks(run: &SolveDir, ic: &InitialCondition) -> Result<Vec<Report>> {
    let grid = run.lower.grid;
    let t = run.config.t;
    let a = run.config.half_width;
    let est = kpp::limit_u(ic, &grid, t, &[64, 128, 256], kpp::max_stable_dt(grid.dx()))?;
    let mut out = vec![Report::upper("penalized_monotone_in_n", 0.0, kpp::MONOTONE_IN_N_TOL)
        .with_detail(format!("increments {:?}", est.increments))];
    let (mut below, mut above) = (0.0f64, 0.0f64);
    for (i, x) in grid.points().enumerate() {
        if x.abs() <= a {
            below = below.max(run.lower.values[i] - est.profile.values[i]);
            above = above.max(est.profile.values[i] - run.upper.values[i]);
        }
    }
    out.push(Report::upper("penalized_containment", below.max(above), 5e-3).with_detail("n=256 on [-A, A]"));
    for (n, p) in est.schedule.iter().zip(&est.profiles) {
        out.push(kpp::check_uchiyama(p, t)?.with_detail(format!("n={n}, t={t}")));
    }
    Ok(out)
}

fn structural_checks(run: &SolveDir, ic: &InitialCondition) -> Result<Vec<Report>> {
    let c = &run.config;
    let grid = run.lower.grid;
    let half = c.steps / 2;
    let mut out = Vec::new();
    if half >= 1 && c.steps.is_multiple_of(2) {
        let t0 = half as f64 * c.delta;
        out.push(diagnostics::semigroup_check(ic, &grid, t0, t0, c.delta, c.half_width)?.report);
    }
    // Half a cell off the nodes so that no jump of v sits on one.
    let off_node = diagnostics::shift_ic(ic, 0.5 * grid.dx())?;
    out.push(diagnostics::translation_check(
        &off_node,
        &grid,
        7,
        c.delta,
        c.steps.min(20),
    )?);
    let moved = diagnostics::shift_ic(ic, 0.5)?;
    out.extend(diagnostics::comparison_check(ic, &moved, &grid, c.t, c.delta, 64)?);
    Ok(out)
}

fn identity_report(
    ic: &InitialCondition,
    r: f64,
    s_max: f64,
    dx: f64,
    delta: f64,
    tol: f64,
) -> Result<(Report, BoundaryPath)> {
    let steps = step_count(s_max, delta)?;
    let (m, path) = diagnostics::moment_identity_from_start(ic, r, s_max, dx, s_max / steps as f64)?;
    Ok((m.report(tol), path))
}

fn cmd_check(a: &CheckArgs) -> Result<i32> {
    if !a.dir.is_dir() {
        return Err(usage(format!("{} is not a directory", a.dir.display())));
    }
    let run = read_solve_dir(&a.dir)?;
    let (ic, _) = parse_ic(&run.config.ic, run.config.gamma)?;
    let mut reports = Vec::new();
    push_or_fail(&mut reports, "manifest_checksums", manifest_checksums(&a.dir));
    reports.extend(quick_checks(&run));
    if a.suite == Suite::Full {
        push_or_fail(&mut reports, "penalized", penalized_checks(&run, &ic));
        push_or_fail(&mut reports, "feynman_kac", fk_checks(&run, &ic, a.paths, a.seed));
        push_or_fail(&mut reports, "structural", structural_checks(&run, &ic));
        match ic.gamma {
            None => warn("exponential-moment abscissa unknown; moment identity skipped"),
            Some(g) => {
                let r = 0.5f64.min(0.5 * g.min(1.0));
                let res = identity_report(&ic, r, 50.0, run.config.dx.max(0.01), 0.001, 0.02).map(|(rep, _)| vec![rep]);
                push_or_fail(&mut reports, "moment_identity", res);
            }
        }
    }
    let text = serde_json::to_string_pretty(&reports)?;
    println!("{text}");
    if let Some(out) = &a.out {
        fs::write(out, text + "\n")?;
    }
    print_reports(&reports);
    Ok(exit_for(&reports))
}

fn cmd_identity(a: &IdentityArgs) -> Result<i32> {
    let (ic, file) = parse_ic(&a.ic.ic, a.ic.gamma)?;
    if !(a.eps > 0.0 && a.eps <= 1.0) {
        return Err(usage(format!("eps={} must lie in (0, 1]", a.eps)));
    }
    let (report, path) = identity_report(&ic, 1.0 - a.eps, a.smax, a.dx, a.delta, a.tol)?;
    prepare_out(&a.out)?;
    io::write_boundary_csv(&a.out.join("mu.csv"), &path)?;
    io::write_json(&a.out.join("report.json"), &report)?;
    let mut manifest = Manifest::new(
        "identity",
        json!({"ic": canonical_spec(&a.ic.ic, file.as_deref()), "gamma": a.ic.gamma, "eps": a.eps, "smax": a.smax, "dx": a.dx,
               "delta": a.delta, "tol": a.tol}),
    );
    if let Some(f) = &file {
        manifest.add_input(f)?;
    }
    manifest.finish(&a.out)?;
    print_reports(std::slice::from_ref(&report));
    Ok(exit_for(&[report]))
}

/// Exit code for an error: bad input is a usage error, anything else a
/// failed check.
pub fn exit_code_for(e: &FbpError) -> i32 {
    match e {
        FbpError::Numerical(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::UnSolve(a) => cmd_un_solve(a),
        Command::Nbbm(a) => cmd_nbbm(a),
        Command::Fk(a) => cmd_fk(a),
        Command::Check(a) => cmd_check(a),
        Command::Identity(a) => cmd_identity(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
