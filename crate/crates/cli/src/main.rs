use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ci_euler::driver::{density_stage3, iterate, DensityConfig, DriverConfig, StepStatus};
use ci_euler::grid::{Point, SpaceTimeGrid};
use ci_euler::hull::{chain_any, SegmentChain};
use ci_euler::state::{
    hull_margin, k_residual_relative, lambda_max_vvs, lambda_min_vvs, Pressure, State,
};
use ci_euler::subsolutions::{verify_main_theorem_hypotheses, SubsolutionSpec};
use ci_euler::waves::{
    fd_order, localized_wave, time_slab_wave, verify_wave_properties, write_csv, Field,
    QuadratureGrid, WaveSpec,
};
use ci_euler::weak::compare_pressure;
use ci_euler::Error;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ci-euler", version, about = "Subsolutions, hull geometry and waves for the 2D Euler relaxation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses of the convex-integration theorem on a grid.
    VerifySubsolution(Common),
    /// Classify states against the convex hull of the constraint set.
    HullCheck(Common),
    /// Build the segment chain from a hull-interior state to the constraint set.
    Segment(Common),
    /// Build a localized plane wave, sample it and run its diagnostics.
    Wave(Common),
    /// Recover the pressure of a subsolution on a time slice.
    Pressure(Common),
    /// Run the perturbation driver.
    Iterate(Common),
    /// Run the finite-stage density pipeline.
    Density(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and fields.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override a configuration key, e.g. `--set subsolution.delta=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_verification_failure() {
            Failure::Verification(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(format!("config: {e}"))
    }
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    passed: bool,
}

fn check_le(name: &'static str, value: f64, threshold: f64) -> Check {
    Check { name, value, threshold, passed: value <= threshold }
}

fn check_ge(name: &'static str, value: f64, threshold: f64) -> Check {
    Check { name, value, threshold, passed: value >= threshold }
}

fn check_gt(name: &'static str, value: f64, threshold: f64) -> Check {
    Check { name, value, threshold, passed: value > threshold }
}

/// Parses `value` as JSON, falling back to a plain string.
fn parse_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

fn apply_override(config: &mut Value, spec: &str) -> Result<(), Failure> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("override `{spec}` is not key=value")))?;
    if key.is_empty() {
        return Err(Failure::Usage(format!("override `{spec}` has an empty key")));
    }
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if let Value::Array(items) = node {
            let idx: usize = part
                .parse()
                .map_err(|_| Failure::Usage(format!("`{part}` in `{key}` is not an index")))?;
            let len = items.len();
            node = items
                .get_mut(idx)
                .ok_or_else(|| Failure::Usage(format!("index {idx} out of range ({len}) in `{key}`")))?;
        } else {
            if node.is_null() {
                *node = Value::Object(Default::default());
            }
            let map = node
                .as_object_mut()
                .ok_or_else(|| Failure::Usage(format!("`{key}` descends into a scalar")))?;
            node = map.entry(part.to_string()).or_insert(Value::Null);
        }
        if i + 1 == parts.len() {
            *node = parse_value(value);
        }
    }
    Ok(())
}

fn load_config<T: DeserializeOwned>(c: &Common) -> Result<T, Failure> {
    let mut value = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for o in &c.overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(seed) = c.seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    Ok(serde_json::from_value(value)?)
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    fs::create_dir_all(out)?;
    Ok(BufWriter::new(fs::File::create(out.join(name))?))
}

/// Writes `report.json` and fails with exit code 2 when a check failed.
fn finish(out: &Path, command: &str, checks: Vec<Check>, details: Value) -> Result<(), Failure> {
    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "command": command,
        "passed": passed,
        "checks": checks,
        "details": details,
    });
    let mut w = create(out, "report.json")?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    for c in &checks {
        println!(
            "{:<40} {:>24e}  {}",
            c.name,
            c.value,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

/// A state given either as the flattened 7-vector
/// `(v1, v2, m1, m2, sigma_a, sigma_b, e)` or as an object.
#[derive(Deserialize)]
#[serde(untagged)]
enum StateInput {
    Flat([f64; 7]),
    Structured(State),
}

impl StateInput {
    fn state(&self) -> State {
        match self {
            StateInput::Flat(a) => State::from_array(*a),
            StateInput::Structured(s) => *s,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    subsolution: SubsolutionSpec,
    #[serde(default = "one")]
    eps: f64,
    #[serde(default = "verify_grid")]
    grid: [usize; 3],
    #[serde(default = "verify_time")]
    time: [f64; 2],
    #[serde(default = "k_tol")]
    k_tol: f64,
    #[serde(default = "jump_tol")]
    jump_tol: f64,
    #[serde(default)]
    #[allow(dead_code)]
    seed: u64,
}

fn one() -> f64 {
    1.0
}
fn verify_grid() -> [usize; 3] {
    [64, 64, 16]
}
fn verify_time() -> [f64; 2] {
    [1e-3, 1.0]
}
fn k_tol() -> f64 {
    1e-9
}
fn jump_tol() -> f64 {
    1e-6
}

fn verify_subsolution(c: &Common) -> Result<(), Failure> {
    let cfg: VerifyConfig = load_config(c)?;
    let field = cfg.subsolution.build()?;
    let [nx, ny, nt] = cfg.grid;
    let grid = SpaceTimeGrid::new(nx, ny, nt, cfg.time[0], cfg.time[1]);
    let r = verify_main_theorem_hypotheses(&*field, cfg.eps, &grid);
    let zone_margin = if r.zone_samples == 0 { f64::INFINITY } else { r.min_zone_margin };
    let checks = vec![
        check_gt("sufficient condition in zone", zone_margin, 0.0),
        check_le("constraints outside zone", r.max_k_violation_outside, cfg.k_tol),
        check_le("nonpositive dissipation", r.max_mu, 0.0),
        check_le("continuity across zone boundary", r.max_boundary_jump, cfg.jump_tol),
    ];
    finish(&c.out, "verify-subsolution", checks, serde_json::to_value(&r)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HullEntry {
    state: StateInput,
    #[serde(default)]
    pressure: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HullConfig {
    states: Vec<HullEntry>,
    #[serde(default)]
    pressure: f64,
    /// Relative width of the boundary band.
    #[serde(default = "boundary_tol")]
    tol: f64,
    #[serde(default)]
    #[allow(dead_code)]
    seed: u64,
}

fn boundary_tol() -> f64 {
    1e-12
}

fn hull_check(c: &Common) -> Result<(), Failure> {
    let cfg: HullConfig = load_config(c)?;
    let mut rows = Vec::with_capacity(cfg.states.len());
    let mut finite = true;
    for entry in &cfg.states {
        let z = entry.state.state();
        finite &= z.is_finite();
        let p = Pressure(entry.pressure.unwrap_or(cfg.pressure));
        let margin = hull_margin(&z);
        let band = cfg.tol * (1.0 + z.e.abs() + z.v.norm_sq());
        let class = if margin.abs() <= band {
            "boundary of hull"
        } else if margin > 0.0 {
            "interior of hull"
        } else {
            "outside hull"
        };
        rows.push(json!({
            "state": z.to_array(),
            "pressure": p.0,
            "lambda_max": lambda_max_vvs(&z),
            "lambda_min": lambda_min_vvs(&z),
            "margin": margin,
            "classification": class,
            "k_residual": k_residual_relative(&z, p),
        }));
    }
    for r in &rows {
        println!("{}  margin {}", r["classification"].as_str().unwrap_or(""), r["margin"]);
    }
    let checks = vec![Check {
        name: "finite states",
        value: cfg.states.len() as f64,
        threshold: 0.0,
        passed: finite,
    }];
    finish(&c.out, "hull-check", checks, json!({ "states": rows }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentConfig {
    state: StateInput,
    #[serde(default)]
    pressure: f64,
    /// Cap on terminal energies; unbounded when absent.
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(default = "membership_tol")]
    tol: f64,
    #[serde(default)]
    #[allow(dead_code)]
    seed: u64,
}

fn membership_tol() -> f64 {
    1e-8
}

fn segment(c: &Common) -> Result<(), Failure> {
    let cfg: SegmentConfig = load_config(c)?;
    let z = cfg.state.state();
    let p = Pressure(cfg.pressure);
    let margin = hull_margin(&z);
    if !(margin > 0.0) {
        return Err(Error::NotInHullInterior { margin }.into());
    }
    let chain: SegmentChain = chain_any(&z, p, cfg.gamma.unwrap_or(f64::INFINITY))?;
    let k_res = chain
        .terminals()
        .iter()
        .map(|t| k_residual_relative(t, p))
        .fold(0.0f64, f64::max);
    let sides = chain
        .segments()
        .map(|s| (-s.s1).min(s.s2))
        .fold(f64::INFINITY, f64::min);
    let checks = vec![
        check_le("terminal states in K", k_res, cfg.tol),
        check_gt("two-sided segments", sides, 0.0),
    ];
    finish(&c.out, "segment", checks, json!({ "hull_margin": margin, "chain": chain }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WaveConfig {
    direction: StateInput,
    frequency: u32,
    #[serde(default = "wave_center")]
    center: Point,
    #[serde(default = "wave_radius")]
    radius: f64,
    #[serde(default = "wave_margin")]
    cutoff_margin: f64,
    /// Half-width in time of a slab support.
    #[serde(default)]
    time_slab: Option<f64>,
    /// Nodes per axis of the CSV sample grid over the support box.
    #[serde(default = "wave_samples")]
    samples: usize,
    #[serde(default = "per_wavelength")]
    per_wavelength: usize,
    #[serde(default = "fd_points")]
    fd_points: usize,
    #[serde(default = "fd_order_min")]
    fd_order_min: f64,
    #[serde(default)]
    #[allow(dead_code)]
    seed: u64,
}

fn wave_center() -> Point {
    [0.5, 0.5, 0.5]
}
fn wave_radius() -> f64 {
    0.25
}
fn wave_margin() -> f64 {
    0.3
}
fn wave_samples() -> usize {
    32
}
fn per_wavelength() -> usize {
    8
}
fn fd_points() -> usize {
    16
}
fn fd_order_min() -> f64 {
    1.9
}

fn wave(c: &Common) -> Result<(), Failure> {
    let cfg: WaveConfig = load_config(c)?;
    if cfg.samples < 2 || cfg.fd_points == 0 {
        return Err(Failure::Usage("samples must be >= 2 and fd_points >= 1".into()));
    }
    let mut spec = WaveSpec::new(
        cfg.direction.state(),
        cfg.frequency,
        cfg.center,
        cfg.radius,
        cfg.cutoff_margin,
    )?;
    let w = match cfg.time_slab {
        Some(s) => {
            spec.time_slab = Some(s);
            time_slab_wave(spec)?
        }
        None => localized_wave(spec)?,
    };
    let (lo, hi) = w.support_box();
    let n = cfg.samples;
    let coord = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * i as f64 / (n - 1) as f64;
    let mut csv = create(&c.out, "wave.csv")?;
    let samples = (0..n).flat_map(|k| {
        (0..n).flat_map(move |j| (0..n).map(move |i| [coord(0, i), coord(1, j), coord(2, k)]))
    });
    write_csv(&mut csv, samples.map(|y| (y, w.eval(y))))?;
    csv.flush()?;

    let grid = QuadratureGrid::resolving(lo, hi, cfg.frequency as f64, cfg.per_wavelength);
    let diag = verify_wave_properties(&w, &spec.direction, spec.center, &grid);
    // points on a line through the centre, inside the support
    let m = cfg.fd_points;
    let points: Vec<Point> = (0..m)
        .map(|i| {
            let s = (i as f64 + 0.5) / m as f64 - 0.5;
            [
                spec.center[0] + 0.6 * s * (hi[0] - lo[0]),
                spec.center[1] + 0.37 * s * (hi[1] - lo[1]),
                spec.center[2] + 0.23 * s * (hi[2] - lo[2]),
            ]
        })
        .collect();
    let wavelength = 2.0 * std::f64::consts::PI / (cfg.frequency as f64 * spec.xi.norm().max(1e-300));
    let h = wavelength / 64.0;
    let (r_h, r_h2, order) = fd_order(&w, &points, h);
    // once round-off dominates the order is meaningless
    let scale = spec.direction.norm() * cfg.frequency as f64;
    let order_value = if r_h <= 1e-9 * scale { f64::INFINITY } else { order };
    let checks = vec![check_ge("finite-difference order of the linear system", order_value, cfg.fd_order_min)];
    finish(
        &c.out,
        "wave",
        checks,
        json!({
            "spec": spec,
            "support_box": [lo, hi],
            "diagnostics": diag,
            "fd_step": h,
            "fd_residual": [r_h, r_h2],
        }),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PressureConfig {
    subsolution: SubsolutionSpec,
    #[serde(default = "pressure_n")]
    n: usize,
    #[serde(default = "pressure_t")]
    t: f64,
    #[serde(default = "pressure_tol")]
    tolerance: f64,
    #[serde(default)]
    #[allow(dead_code)]
    seed: u64,
}

fn pressure_n() -> usize {
    128
}
fn pressure_t() -> f64 {
    0.5
}
fn pressure_tol() -> f64 {
    1e-3
}

fn pressure(c: &Common) -> Result<(), Failure> {
    let cfg: PressureConfig = load_config(c)?;
    let field = cfg.subsolution.build()?;
    let cmp = compare_pressure(&*field, cfg.n, cfg.t)?;
    let mut csv = create(&c.out, "pressure.csv")?;
    writeln!(csv, "x1,x2,recovered,prescribed")?;
    let h = 1.0 / cfg.n as f64;
    for j in 0..cfg.n {
        for i in 0..cfg.n {
            let idx = j * cfg.n + i;
            writeln!(
                csv,
                "{},{},{},{}",
                (i as f64 + 0.5) * h,
                (j as f64 + 0.5) * h,
                cmp.recovered[idx],
                cmp.prescribed[idx]
            )?;
        }
    }
    csv.flush()?;
    let checks = vec![check_le("pressure recovery", cmp.max_error, cfg.tolerance)];
    finish(&c.out, "pressure", checks, json!({ "n": cfg.n, "t": cfg.t, "max_error": cmp.max_error }))
}

fn run_iterate(c: &Common) -> Result<(), Failure> {
    let cfg: DriverConfig = load_config(c)?;
    let (log, _) = iterate(cfg)?;
    let mut w = create(&c.out, "iteration.jsonl")?;
    log.write_jsonl(&mut w)?;
    w.flush()?;
    let accepted: Vec<_> = log.steps.iter().filter(|s| s.status == StepStatus::Accepted).collect();
    let mut prev = log.initial_mean_dist2;
    let mut increase = 0.0f64;
    for s in &accepted {
        increase = increase.max(s.global_mean_dist2 - prev);
        prev = s.global_mean_dist2;
    }
    let interior = accepted.iter().all(|s| s.interior && s.min_margin > 0.0);
    let weak: Vec<f64> = accepted
        .iter()
        .filter_map(|s| Some(s.weak_residual? - s.weak_bound?))
        .collect();
    let drift = |f: fn(&&ci_euler::driver::StepRecord) -> f64| accepted.iter().map(f).fold(0.0f64, f64::max);
    let initial = drift(|s| s.initial_data_drift);
    let pressure = drift(|s| s.pressure_drift);
    let mu = drift(|s| s.mu_drift);
    let ratio = log.final_mean_dist2() / log.initial_mean_dist2;
    let mut checks = vec![
        Check { name: "strict hull interior", value: accepted.len() as f64, threshold: 0.0, passed: interior },
        check_le("nonincreasing mean squared distance", increase, 0.0),
    ];
    if !weak.is_empty() {
        // residual minus its bound
        checks.push(check_le("wave weak residual", weak.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0));
    }
    checks.extend([
        check_le("initial data drift", initial, 1e-9),
        check_le("pressure drift", pressure, 1e-9),
        check_le("dissipation drift", mu, 1e-6),
    ]);
    finish(
        &c.out,
        "iterate",
        checks,
        json!({
            "gamma": log.gamma,
            "steps": log.steps.len(),
            "accepted": accepted.len(),
            "initial_mean_dist2": log.initial_mean_dist2,
            "final_mean_dist2": log.final_mean_dist2(),
            "ratio": ratio,
        }),
    )
}

fn density(c: &Common) -> Result<(), Failure> {
    let cfg: DensityConfig = load_config(c)?;
    let (report, _) = density_stage3(&cfg)?;
    let mut w = create(&c.out, "density.jsonl")?;
    report.write_jsonl(&mut w)?;
    w.flush()?;
    let slack = report
        .stages
        .iter()
        .flat_map(|s| s.slack)
        .fold(f64::INFINITY, f64::min);
    let checks = vec![
        check_ge("mollified data margin", report.first_slack, 0.0),
        check_ge("stage inequalities", slack, 0.0),
        check_le("distance to the limit", report.final_error, report.chain_bound),
        check_le("density bound", report.chain_bound, report.bound),
    ];
    let mut details = serde_json::to_value(&report)?;
    if let Some(map) = details.as_object_mut() {
        map.remove("stages");
    }
    finish(&c.out, "density", checks, details)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::VerifySubsolution(c) => verify_subsolution(c),
        Command::HullCheck(c) => hull_check(c),
        Command::Segment(c) => segment(c),
        Command::Wave(c) => wave(c),
        Command::Pressure(c) => pressure(c),
        Command::Iterate(c) => run_iterate(c),
        Command::Density(c) => density(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
