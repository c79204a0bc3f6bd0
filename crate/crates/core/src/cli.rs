//! Command-line front end. Every subcommand takes either flags or a JSON
//! config (`--config FILE`, unknown keys rejected) and writes its artifacts
//! into the output directory.

use crate::ancient::{
    construct_ancient, layer_rates, AncientOptions, AncientSolution, CoefficientVector,
};
use crate::error::{Error, Result};
use crate::export::{curves_svg, fmt17, profile_table, write_atomic, write_json, Cell, Table};
use crate::flow::{entropy_along, evolve, EvolveOptions, FlowTrajectory, Gauge};
use crate::geometry::{entropy, SupportFunction, DEFAULT_N};
use crate::shrinker::{circle_shrinker, eta, solve_shrinker, Shape, ShrinkerProfile};
use crate::spectrum::{boundary_eigs, spectrum, verify_spectrum, BoundaryCondition};
use crate::verify::{run_verification, VerifyOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const OUT_ENV: &str = "ANCIENTFLOW_OUT";

#[derive(Debug, Parser)]
#[command(name = "ancientflow", version, about = "Shrinkers, spectra, flows and ancient solutions of the power-curvature flow")]
pub struct Cli {
    /// Output directory (the ANCIENTFLOW_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Grid size (a power of two).
    #[arg(long = "n-grid", global = true)]
    pub n_grid: Option<usize>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for a circle or k-fold shrinker.
    Shrinker(ShrinkerArgs),
    /// Eigenvalues and eigenfunctions of the linearized operator.
    Spectrum(SpectrumArgs),
    /// Evolve a convex curve in raw or normalized time.
    Evolve(EvolveArgs),
    /// Construct an ancient solution converging to a shrinker.
    Ancient(AncientArgs),
    /// Entropy of a convex curve.
    Entropy(EntropyArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ShrinkerArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fold symmetry (k >= 3).
    #[arg(long)]
    pub k: Option<usize>,
    /// `circle`, `kN` or `N`.
    #[arg(long)]
    pub shape: Option<String>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub shape: Option<String>,
    /// Number of eigenpairs to report.
    #[arg(long)]
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeArg {
    Raw,
    Normalized,
}

impl From<GaugeArg> for Gauge {
    fn from(g: GaugeArg) -> Gauge {
        match g {
            GaugeArg::Raw => Gauge::Raw,
            GaugeArg::Normalized => Gauge::Normalized,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub gauge: Option<GaugeArg>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Scale factor applied to the initial curve.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "dt-out")]
    pub dt_out: Option<f64>,
    /// Record the entropy of every snapshot.
    #[arg(long)]
    pub entropy: bool,
}

#[derive(Debug, Args)]
pub struct AncientArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Unstable coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// CSV with columns `theta,h` holding support function samples.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run only the checks with this id or group (spectrum, shrinker, flow, entropy, ancient).
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negate the nonlinearity inside the expansion check.
    #[arg(long, hide = true)]
    pub inject_sign_fault: bool,
}

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    Fold(usize),
    Name(String),
}

impl ShapeSpec {
    pub fn parse(&self) -> Result<Shape> {
        match self {
            ShapeSpec::Fold(k) => Ok(Shape::KFold(*k)),
            ShapeSpec::Name(s) => parse_shape(s),
        }
    }
}

pub fn parse_shape(s: &str) -> Result<Shape> {
    let t = s.trim().to_ascii_lowercase();
    if t == "circle" {
        return Ok(Shape::Circle);
    }
    t.trim_start_matches('k')
        .parse::<usize>()
        .map(Shape::KFold)
        .map_err(|_| Error::Config(format!("unknown shape {s:?}: expected circle, kN or N")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkerConfig {
    pub alpha: f64,
    pub shape: ShapeSpec,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub alpha: f64,
    pub shape: ShapeSpec,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    24
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub alpha: f64,
    /// Initial curve: a circle or shrinker profile, scaled.
    pub shape: ShapeSpec,
    #[serde(default = "one")]
    pub scale: f64,
    /// Extra harmonics `[l, cos amplitude, sin amplitude]` added to the initial curve.
    #[serde(default)]
    pub harmonics: Vec<[f64; 3]>,
    pub gauge: GaugeArg,
    pub t_end: f64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub options: EvolveOptions,
}

fn one() -> f64 {
    1.0
}

/// Run configuration for `ancient`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AncientConfig {
    pub alpha: f64,
    pub k_or_circle: ShapeSpec,
    pub a: Vec<f64>,
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(rename = "T_max", default)]
    pub t_max: Option<f64>,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "default_tol_fix")]
    pub tol_fix: f64,
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub dtau: Option<f64>,
    /// Keep every `snapshot_stride`-th time sample in the snapshot table.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_tau0() -> f64 {
    -1.0
}

fn default_tol_fix() -> f64 {
    1e-10
}

fn default_stride() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    pub alpha: f64,
    #[serde(default)]
    pub shape: Option<ShapeSpec>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub n: Option<usize>,
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn shape_from_flags(shape: &Option<String>, k: Option<usize>) -> Result<ShapeSpec> {
    match (shape, k) {
        (Some(s), None) => Ok(ShapeSpec::Name(s.clone())),
        (None, Some(k)) => Ok(ShapeSpec::Fold(k)),
        (Some(_), Some(_)) => Err(Error::Config("give either --shape or --k, not both".into())),
        (None, None) => Err(Error::Config("missing --shape or --k".into())),
    }
}

fn require<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing --{name} (or --config)")))
}

fn check_grid(n: usize) -> Result<usize> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(n));
    }
    Ok(n)
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::DomainError(format!("alpha must be positive, got {alpha}")));
    }
    Ok(alpha)
}

pub fn build_profile(alpha: f64, shape: Shape, n: usize) -> Result<ShrinkerProfile> {
    check_alpha(alpha)?;
    match shape {
        Shape::Circle => circle_shrinker(alpha, n),
        Shape::KFold(k) => solve_shrinker(alpha, k, n),
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Resolved global settings.
#[derive(Debug, Clone)]
pub struct Globals {
    pub out: PathBuf,
    pub n: usize,
}

/// Outcome of a successful command: lines for stdout and the exit code
/// (nonzero only for a failed verification).
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub code: i32,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let out = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .or(cli.out)
        .unwrap_or_else(|| PathBuf::from("out"));
    let n = check_grid(cli.n_grid.unwrap_or(DEFAULT_N))?;
    if let Some(t) = cli.threads {
        crate::parallel::set_threads(t);
    }
    let g = Globals { out, n };
    match cli.command {
        Command::Shrinker(a) => cmd_shrinker(&g, a),
        Command::Spectrum(a) => cmd_spectrum(&g, a),
        Command::Evolve(a) => cmd_evolve(&g, a),
        Command::Ancient(a) => cmd_ancient(&g, a),
        Command::Entropy(a) => cmd_entropy(&g, a),
        Command::Verify(a) => cmd_verify(&g, a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
/// Errors go to stderr as a JSON object.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!(
                "{}",
                json!({ "error": "Usage", "message": e.to_string().trim(), "exit_code": 2 })
            );
            return 2;
        }
    };
    match run(cli) {
        Ok(outcome) => {
            for line in outcome.lines {
                println!("{line}");
            }
            outcome.code
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code })
            );
            code
        }
    }
}

#[derive(Debug, Serialize)]
struct ShrinkerMeta<'a> {
    alpha: f64,
    shape: String,
    k: Option<usize>,
    n: usize,
    r_star: f64,
    residual: f64,
    isoperimetric_ratio: f64,
    min_radius: f64,
    theta_table: &'a [(f64, f64)],
}

fn cmd_shrinker(g: &Globals, a: ShrinkerArgs) -> Result<Outcome> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => ShrinkerConfig {
            alpha: require(a.alpha, "alpha")?,
            shape: shape_from_flags(&a.shape, a.k)?,
            n: None,
        },
    };
    let n = check_grid(cfg.n.unwrap_or(g.n))?;
    let p = build_profile(cfg.alpha, cfg.shape.parse()?, n)?;
    let dir = &g.out;
    profile_table(&p.h).write(&dir.join("shrinker_profile.csv"))?;
    let meta = ShrinkerMeta {
        alpha: p.alpha,
        shape: p.shape.to_string(),
        k: p.shape.fold(),
        n,
        r_star: p.r_star,
        residual: p.residual,
        isoperimetric_ratio: p.isoperimetric_ratio(),
        min_radius: p.h.min_radius(),
        theta_table: &p.theta_table,
    };
    write_json(&dir.join("shrinker.json"), &meta)?;
    write_atomic(&dir.join("shrinker.svg"), curves_svg(&[&p.h])?.as_bytes())?;
    if p.shape.fold().is_some() {
        let e = eta(&p)?;
        let mut t = Table::new(&["theta", "eta", "eta_prime"]);
        for i in 0..e.theta.len() {
            t.push(&[e.theta[i].into(), e.samples[i].into(), e.derivative[i].into()]);
        }
        t.write(&dir.join("eta.csv"))?;
    }
    Ok(Outcome {
        lines: vec![format!(
            "shrinker {} alpha {}: r* {} residual {}",
            p.shape,
            p.alpha,
            fmt17(p.r_star),
            fmt17(p.residual)
        )],
        code: 0,
    })
}

fn cmd_spectrum(g: &Globals, a: SpectrumArgs) -> Result<Outcome> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => SpectrumConfig {
            alpha: require(a.alpha, "alpha")?,
            shape: shape_from_flags(&a.shape, a.k)?,
            n: None,
            modes: a.modes.unwrap_or_else(default_modes),
        },
    };
    let n = check_grid(cfg.n.unwrap_or(g.n))?;
    if cfg.modes == 0 || cfg.modes > n {
        return Err(Error::Config(format!("modes must lie in 1..={n}")));
    }
    let p = build_profile(cfg.alpha, cfg.shape.parse()?, n)?;
    let dec = spectrum(&p, n, cfg.modes)?;
    let groups = dec.group_of();
    let mut eig = Table::new(&["index", "lambda", "cluster", "nodal_count"]);
    for (j, l) in dec.eigenvalues.iter().enumerate() {
        let nodal = dec.nodal_counts[j].map_or(-1, |c| c as i64);
        eig.push(&[(j + 1).into(), (*l).into(), (groups[j] + 1).into(), Cell::Int(nodal)]);
    }
    eig.write(&g.out.join("eigenvalues.csv"))?;
    let mut header = vec!["theta".to_string()];
    header.extend((1..=dec.len()).map(|j| format!("phi_{j}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut funcs = Table::new(&header_refs);
    for (i, th) in p.h.theta().iter().enumerate() {
        let mut row = vec![Cell::Float(*th)];
        row.extend(dec.eigenfunctions.iter().map(|f| Cell::Float(f[i])));
        funcs.push(&row);
    }
    funcs.write(&g.out.join("eigenfunctions.csv"))?;
    let report = verify_spectrum(&dec, &p);
    let mut boundary = BTreeMap::new();
    if p.shape.fold().is_some() {
        for bc in BoundaryCondition::ALL {
            boundary.insert(format!("{bc:?}"), boundary_eigs(&p, bc, 3)?.eigenvalues);
        }
    }
    write_json(
        &g.out.join("spectrum.json"),
        &json!({
            "alpha": p.alpha,
            "shape": p.shape.to_string(),
            "n": n,
            "morse_index": dec.morse_index,
            "kernel_dim": dec.kernel_dim,
            "eigenvalues": dec.eigenvalues,
            "report": report,
            "all_pass": report.all_pass(),
            "boundary": boundary,
        }),
    )?;
    Ok(Outcome {
        lines: vec![format!(
            "spectrum {} alpha {}: Morse index {}, checks {}",
            p.shape,
            p.alpha,
            dec.morse_index,
            if report.all_pass() { "pass" } else { "fail" }
        )],
        code: 0,
    })
}

fn initial_curve(alpha: f64, shape: Shape, scale: f64, harmonics: &[[f64; 3]], n: usize) -> Result<SupportFunction> {
    let base = build_profile(alpha, shape, n)?.h.scaled(scale)?;
    let samples: Vec<f64> = base
        .theta()
        .iter()
        .zip(base.samples())
        .map(|(t, h)| h + harmonics.iter().map(|[l, c, s]| c * (l * t).cos() + s * (l * t).sin()).sum::<f64>())
        .collect();
    let u = base.with_samples(samples)?;
    u.check_convex()?;
    Ok(u)
}

fn trajectory_table(traj: &FlowTrajectory) -> Table {
    let mut t = Table::new(&["time", "theta", "u"]);
    for (time, u) in traj.times.iter().zip(&traj.snapshots) {
        for (th, v) in u.theta().iter().zip(u.samples()) {
            t.push(&[(*time).into(), (*th).into(), (*v).into()]);
        }
    }
    t
}

fn cmd_evolve(g: &Globals, a: EvolveArgs) -> Result<Outcome> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => {
            let mut options = EvolveOptions::default();
            if let Some(t) = a.tol {
                options.tol = t;
            }
            if let Some(d) = a.dt_out {
                options.dt_out = d;
            }
            options.compute_entropy = a.entropy;
            EvolveConfig {
                alpha: require(a.alpha, "alpha")?,
                shape: shape_from_flags(&a.shape, a.k)?,
                scale: a.scale.unwrap_or(1.0),
                harmonics: Vec::new(),
                gauge: a.gauge.unwrap_or(GaugeArg::Normalized),
                t_end: require(a.t_end, "t-end")?,
                n: None,
                options,
            }
        }
    };
    let n = check_grid(cfg.n.unwrap_or(g.n))?;
    let u0 = initial_curve(cfg.alpha, cfg.shape.parse()?, cfg.scale, &cfg.harmonics, n)?;
    let mut opts = cfg.options.clone();
    opts.stop_at_extinction = true;
    let traj = evolve(&u0, cfg.gauge.into(), cfg.t_end, &opts)?;
    trajectory_table(&traj).write(&g.out.join("snapshots.csv"))?;
    let entropy_series = if cfg.options.compute_entropy {
        Some(entropy_along(&traj)?)
    } else {
        None
    };
    write_json(
        &g.out.join("trajectory.json"),
        &json!({
            "alpha": cfg.alpha,
            "gauge": cfg.gauge,
            "times": traj.times,
            "step_stats": traj.step_stats,
            "extinction_time": traj.extinction_time,
            "entropy": entropy_series,
        }),
    )?;
    let picks: Vec<&SupportFunction> = {
        let m = traj.snapshots.len();
        let stride = (m / 6).max(1);
        traj.snapshots.iter().step_by(stride).collect()
    };
    write_atomic(&g.out.join("snapshots.svg"), curves_svg(&picks)?.as_bytes())?;
    let mut lines = vec![format!(
        "evolve: {} snapshots, {} steps accepted, final time {}",
        traj.snapshots.len(),
        traj.step_stats.accepted,
        fmt17(*traj.times.last().unwrap())
    )];
    if let Some(t) = traj.extinction_time {
        lines.push(format!("extinction at {}", fmt17(t)));
    }
    Ok(Outcome { lines, code: 0 })
}

fn ancient_tables(sol: &AncientSolution, stride: usize) -> (Table, Table) {
    let taus = sol.taus();
    let mut layers = Table::new(&["layer", "tau", "mode", "coefficient"]);
    for (report, coeffs) in sol.layers.iter().zip(&sol.layer_coefficients) {
        for c in (0..taus.len()).step_by(stride.max(1) / 5 + 1) {
            for &m in &report.modes {
                layers.push(&[report.layer.into(), taus[c].into(), (m + 1).into(), coeffs[(m, c)].into()]);
            }
        }
    }
    let mut snaps = Table::new(&["tau", "theta", "v"]);
    let theta = sol.h.theta();
    let mut idx: Vec<usize> = (0..taus.len()).step_by(stride.max(1)).collect();
    if idx.last() != Some(&(taus.len() - 1)) {
        idx.push(taus.len() - 1);
    }
    for c in idx {
        for (i, th) in theta.iter().enumerate() {
            snaps.push(&[taus[c].into(), (*th).into(), sol.field[(i, c)].into()]);
        }
    }
    (layers, snaps)
}

fn cmd_ancient(g: &Globals, a: AncientArgs) -> Result<Outcome> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => AncientConfig {
            alpha: require(a.alpha, "alpha")?,
            k_or_circle: shape_from_flags(&a.shape, a.k)?,
            a: require(a.a, "a")?,
            n: None,
            t_max: None,
            tau0: default_tau0(),
            tol_fix: default_tol_fix(),
            epsilon0: None,
            dtau: None,
            snapshot_stride: default_stride(),
        },
    };
    let n = check_grid(cfg.n.unwrap_or(g.n))?;
    let p = build_profile(cfg.alpha, cfg.k_or_circle.parse()?, n)?;
    let dec = spectrum(&p, n, n)?;
    if cfg.a.len() != dec.morse_index {
        return Err(Error::DomainError(format!(
            "a has {} entries but the Morse index is {}",
            cfg.a.len(),
            dec.morse_index
        )));
    }
    let defaults = AncientOptions::default();
    let opts = AncientOptions {
        epsilon0: cfg.epsilon0.unwrap_or(defaults.epsilon0),
        t_max: cfg.t_max,
        tau0: cfg.tau0,
        dtau: cfg.dtau.unwrap_or(defaults.dtau),
        tol_fix: cfg.tol_fix,
        max_iterations: defaults.max_iterations,
    };
    let sol = construct_ancient(&p, &dec, &CoefficientVector::new(cfg.a.clone()), &opts)?;
    let (layers, snaps) = ancient_tables(&sol, cfg.snapshot_stride);
    layers.write(&g.out.join("ancient_layers.csv"))?;
    snaps.write(&g.out.join("ancient_snapshots.csv"))?;
    let rates = match layer_rates(&sol) {
        Ok(r) => json!({ "rates": r }),
        Err(e) => json!({ "rates": null, "error": e.kind(), "message": e.to_string() }),
    };
    write_json(&g.out.join("layer_rates.json"), &rates)?;
    let last = sol.len() - 1;
    let endpoint: f64 = sol
        .layers
        .iter()
        .zip(&sol.layer_coefficients)
        .flat_map(|(l, c)| {
            let pinned: Vec<f64> = (0..n)
                .filter(|j| sol.eigenvalues[*j] < -l.delta && !l.modes.contains(j))
                .map(|j| c[(j, last)].abs())
                .collect();
            pinned
        })
        .fold(0.0, f64::max);
    let sup = sol.sup_norm();
    write_json(
        &g.out.join("ancient.json"),
        &json!({
            "alpha": sol.alpha,
            "shape": sol.shape.to_string(),
            "n": n,
            "a": sol.a.a,
            "time_shift": sol.shift,
            "partition": sol.partition,
            "layers": sol.layers,
            "sup_v": sup,
            "pde_residual": sol.pde_residual()?,
            "endpoint_projection": endpoint,
            "tau_range": [sol.taus()[0], sol.taus()[last]],
        }),
    )?;
    Ok(Outcome {
        lines: vec![format!(
            "ancient {} alpha {}: {} layers solved, sup|v| {}",
            sol.shape,
            sol.alpha,
            sol.layers.len(),
            fmt17(sup)
        )],
        code: 0,
    })
}

pub fn read_profile_csv(path: &Path, alpha: f64) -> Result<SupportFunction> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "h" || h == "u")
        .ok_or_else(|| Error::Config("input CSV needs an `h` or `u` column".into()))?;
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let v: f64 = rec[col]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad number {:?}", &rec[col])))?;
        samples.push(v);
    }
    check_grid(samples.len())?;
    SupportFunction::new(alpha, samples)
}

fn cmd_entropy(g: &Globals, a: EntropyArgs) -> Result<Outcome> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => EntropyConfig {
            alpha: require(a.alpha, "alpha")?,
            shape: if a.input.is_some() {
                None
            } else {
                Some(shape_from_flags(&a.shape, a.k)?)
            },
            scale: a.scale.unwrap_or(1.0),
            center: [0.0, 0.0],
            input: a.input.clone(),
            n: None,
        },
    };
    check_alpha(cfg.alpha)?;
    let n = check_grid(cfg.n.unwrap_or(g.n))?;
    let u = match (&cfg.input, &cfg.shape) {
        (Some(path), _) => read_profile_csv(path, cfg.alpha)?,
        (None, Some(shape)) => build_profile(cfg.alpha, shape.parse()?, n)?.h,
        (None, None) => return Err(Error::Config("need a shape or an input file".into())),
    };
    let u = u.scaled(cfg.scale)?.translated(cfg.center)?;
    let report = entropy(&u)?;
    write_json(&g.out.join("entropy.json"), &report)?;
    Ok(Outcome {
        lines: vec![fmt17(report.value)],
        code: 0,
    })
}

fn cmd_verify(g: &Globals, a: VerifyArgs) -> Result<Outcome> {
    let mut opts: VerifyOptions = match &a.config {
        Some(p) => read_config(p)?,
        None => VerifyOptions {
            n: g.n,
            ..Default::default()
        },
    };
    if a.filter.is_some() {
        opts.filter = a.filter.clone();
    }
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    opts.inject_sign_fault |= a.inject_sign_fault;
    check_grid(opts.n)?;
    let report = run_verification(&opts);
    write_json(&g.out.join("verify.json"), &report)?;
    let mut lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name))
        .collect();
    if report.checks.is_empty() {
        return Err(Error::Config(format!("filter {:?} matches no check", opts.filter)));
    }
    lines.push(if report.pass { "all checks passed".into() } else { "verification failed".into() });
    Ok(Outcome {
        lines,
        code: if report.pass { 0 } else { 1 },
    })
}
