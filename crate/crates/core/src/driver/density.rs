//! Finite-stage density pipeline over shear initial data: Fourier
//! mollification, time-slab perturbations on packed balls, and the
//! staged recursion with its inequality bookkeeping.
//!
//! Integrals over the `t = 0` slice use the periodic midpoint rule at a
//! resolution that separates the carrier frequencies of every pair of
//! waves, so products of oscillations are not aliased.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::PerturbedField;
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::hull::find_perturbation;
use crate::state::{gamma_eps, hull_margin, DistSearch, State};
use crate::subsolutions::{
    density_subsolution, verify_main_theorem_hypotheses, DensitySubsolution,
    DensitySubsolutionSpec, Dissipation, ShearProfile, Subsolution,
};
use crate::waves::{time_slab_wave, Field, LocalizedWave, Neumaier, WaveSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Shear profile of the target field `w = (f(x2), 0)`.
    pub shear: ShearProfile,
    pub delta: f64,
    #[serde(default = "defaults::mu")]
    pub mu: Dissipation,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::stages")]
    pub stages: usize,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::ball_radius")]
    pub ball_radius: f64,
    /// Carrier frequency `N = frequency_per_j * j`.
    #[serde(default = "defaults::frequency_per_j")]
    pub frequency_per_j: u32,
    #[serde(default = "defaults::cutoff_margin")]
    pub cutoff_margin: f64,
    #[serde(default = "defaults::shrink")]
    pub shrink: f64,
    /// New margin must stay above this fraction of the old one.
    #[serde(default = "defaults::margin_ratio")]
    pub margin_ratio: f64,
    #[serde(default = "defaults::max_cutoff")]
    pub max_cutoff: usize,
    #[serde(default = "defaults::j_max")]
    pub j_max: u64,
    /// Lattice of the distance search.
    #[serde(default = "defaults::dist_grid")]
    pub dist_grid: usize,
    /// Nodes per axis of the `t = 0` grid sampling `d(z, K)^2`.
    #[serde(default = "defaults::sample_grid")]
    pub sample_grid: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use crate::subsolutions::Dissipation;

    pub fn mu() -> Dissipation {
        Dissipation::Zero
    }
    pub fn horizon() -> f64 {
        1.0
    }
    pub fn stages() -> usize {
        5
    }
    pub fn eps() -> f64 {
        1.0
    }
    pub fn ball_radius() -> f64 {
        0.1
    }
    pub fn frequency_per_j() -> u32 {
        256
    }
    pub fn cutoff_margin() -> f64 {
        0.3
    }
    pub fn shrink() -> f64 {
        0.9
    }
    pub fn margin_ratio() -> f64 {
        0.1
    }
    pub fn max_cutoff() -> usize {
        4096
    }
    pub fn j_max() -> u64 {
        1 << 16
    }
    pub fn dist_grid() -> usize {
        64
    }
    pub fn sample_grid() -> usize {
        64
    }
}

impl DensityConfig {
    pub fn new(shear: ShearProfile, delta: f64) -> Self {
        serde_json::from_value(serde_json::json!({ "shear": shear, "delta": delta }))
            .expect("defaults deserialize")
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.stages == 0 {
            return bad("stages must be at least 1");
        }
        if !(self.ball_radius > 0.0 && self.ball_radius < 0.25) {
            return bad("ball_radius must lie in (0, 1/4)");
        }
        if self.frequency_per_j == 0 || self.j_max < 2 {
            return bad("frequency_per_j must be positive and j_max at least 2");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.margin_ratio) {
            return bad("margin_ratio must lie in [0, 1)");
        }
        if self.sample_grid == 0 || self.dist_grid == 0 {
            return bad("grids must be nonempty");
        }
        Ok(())
    }

    fn frequency(&self, j: u64) -> Result<u32> {
        u32::try_from(self.frequency_per_j as u64 * j)
            .map_err(|_| Error::Config(format!("frequency overflows at j = {j}")))
    }
}

/// Mollified data and the two closeness checks.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityStage1 {
    pub subsolution: DensitySubsolution,
    /// Highest retained Fourier mode.
    pub cutoff: usize,
    /// Parseval tail `||w - w_delta||^2`.
    pub tail: f64,
    /// `||w - v(., 0)||^2` by quadrature.
    pub mollification_error: f64,
    pub first_slack: f64,
    /// `int e(x, 0) - |v(x, 0)|^2 / 2 dx` by quadrature.
    pub initial_excess: f64,
    pub second_slack: f64,
}

/// Truncates `w` at the smallest cutoff whose Parseval tail is at most
/// `delta` and builds the density subsolution over it.
pub fn density_stage1(
    w: &ShearProfile,
    delta: f64,
    mu: Dissipation,
    horizon: f64,
    max_cutoff: usize,
) -> Result<DensityStage1> {
    let best = w.tail(max_cutoff);
    if !(best <= delta) {
        return Err(Error::MollificationFailed {
            delta,
            best,
            cutoff: max_cutoff,
        });
    }
    // tails decrease with the cutoff
    let (mut lo, mut hi) = (0usize, max_cutoff);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if w.tail(mid) <= delta {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let cutoff = lo;
    let truncated = w.truncate(cutoff);
    let subsolution = density_subsolution(DensitySubsolutionSpec {
        shear: truncated.clone(),
        delta,
        mu,
        horizon,
    })?;

    // breakpoints of the step profile sit on cell edges for even n
    let n = (16 * cutoff).clamp(4096, 1 << 18);
    let mut err = Neumaier::default();
    for j in 0..n {
        let x2 = -0.5 + (j as f64 + 0.5) / n as f64;
        let d = w.eval(x2) - truncated.eval(x2);
        err.add(d * d);
    }
    let mollification_error = err.value() / n as f64;

    let n1 = 16;
    let mut excess = Neumaier::default();
    for i in 0..n1 {
        let x1 = -0.5 + (i as f64 + 0.5) / n1 as f64;
        for j in 0..n {
            let x2 = -0.5 + (j as f64 + 0.5) / n as f64;
            let z = subsolution.sample([x1, x2, 0.0]).state;
            excess.add(z.e - 0.5 * z.v.norm_sq());
        }
    }
    let initial_excess = excess.value() / (n1 * n) as f64;
    Ok(DensityStage1 {
        subsolution,
        cutoff,
        tail: w.tail(cutoff),
        mollification_error,
        first_slack: delta - mollification_error,
        initial_excess,
        second_slack: delta - initial_excess,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
    /// `d(z(x_i, 0), K)^2` at the centre.
    pub dist2: f64,
    /// Fraction of the `find_perturbation` amplitude kept; zero when no
    /// wave was placed.
    pub scale: f64,
    /// `|zbar|` of the placed wave.
    pub amplitude: f64,
    /// `int |z_j(x, 0)|^2` over the ball.
    pub mass: f64,
    /// `mass / (|B| |zbar|^2)`, set by the cutoff profile alone.
    pub mass_ratio: f64,
    /// `mass / (|B| dist2)`.
    pub constant: f64,
}

/// One perturbation `z_j`: a time-slab wave per ball, vanishing for
/// `t >= 1/j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityStage2 {
    pub j: u64,
    pub frequency: u32,
    pub support: f64,
    pub waves: Vec<LocalizedWave>,
    pub balls: Vec<Ball>,
    /// `int d(z(x, 0), K)^2 dx` on the sample grid.
    pub dist_integral: f64,
    /// `2 sum |B_i| d_i^2 / int d^2`.
    pub covering_ratio: f64,
    /// `int |z_j(x, 0)|^2 dx`.
    pub mass: f64,
    /// `mass / dist_integral`.
    pub constant: f64,
}

/// Balls and distance data that do not depend on `j`.
struct Packing {
    balls: Vec<([f64; 2], f64)>,
    dist_integral: f64,
}

fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx - dx.round()).hypot(dy - dy.round())
}

fn pack_balls(field: &PerturbedField, gamma: f64, cfg: &DensityConfig) -> Packing {
    let search = DistSearch::new(cfg.dist_grid, 50);
    let d2 = |x: [f64; 2]| {
        let s = field.sample([x[0], x[1], 0.0]);
        search.nearest(&s.state, s.pressure, Some(gamma)).1
    };
    let r = cfg.ball_radius;
    let m = (2.0 / r).ceil() as usize;
    let mut candidates: Vec<([f64; 2], f64)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| {
            let x = [-0.5 + (i as f64 + 0.5) / m as f64, -0.5 + (j as f64 + 0.5) / m as f64];
            (x, d2(x))
        })
        .collect();
    // stable sort keeps lexicographic order among ties
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut balls: Vec<([f64; 2], f64)> = Vec::new();
    for (x, d) in candidates {
        if balls.iter().all(|(c, _)| torus_distance(*c, x) >= 2.0 * r) {
            balls.push((x, d));
        }
    }
    let n = cfg.sample_grid;
    let mut acc = Neumaier::default();
    for i in 0..n {
        for j in 0..n {
            acc.add(d2([-0.5 + (i as f64 + 0.5) / n as f64, -0.5 + (j as f64 + 0.5) / n as f64]));
        }
    }
    Packing {
        balls,
        dist_integral: acc.value() / (n * n) as f64,
    }
}

/// Samples on a lattice of spacing `r/8` inside the ball at times
/// spread over the slab. Each lattice point is repeated at eight shifts
/// along `xi` covering one carrier wavelength, so every phase of the
/// wave is seen.
fn ball_samples(wave: &LocalizedWave, center: [f64; 2], r: f64, support: f64) -> Vec<Point> {
    let xi = wave.spec.xi;
    let step = TAU / (8.0 * wave.spec.frequency as f64);
    let mut out = Vec::new();
    for a in -8..=8 {
        for b in -8..=8 {
            let d = [a as f64 * r / 8.0, b as f64 * r / 8.0];
            if d[0].hypot(d[1]) >= r {
                continue;
            }
            for k in 0..5 {
                for m in 0..8 {
                    let h = m as f64 * step;
                    out.push([
                        center[0] + d[0] + h * xi.x1,
                        center[1] + d[1] + h * xi.x2,
                        k as f64 * support / 5.0,
                    ]);
                }
            }
        }
    }
    out
}

fn ball_mass(wave: &LocalizedWave, center: [f64; 2], r: f64) -> f64 {
    // |z|^2 oscillates at twice the carrier; three nodes per carrier
    // wavelength keep that above the Nyquist rate of the grid
    let n = ((2.0 * r * wave.spec.frequency as f64 / TAU * 3.0).ceil() as usize).max(32);
    let h = 2.0 * r / n as f64;
    let mut acc = Neumaier::default();
    for a in 0..n {
        let x1 = center[0] - r + (a as f64 + 0.5) * h;
        for b in 0..n {
            let x2 = center[1] - r + (b as f64 + 0.5) * h;
            acc.add(wave.eval([x1, x2, 0.0]).norm_sq());
        }
    }
    acc.value() * h * h
}

fn place_waves(
    field: &PerturbedField,
    gamma: f64,
    j: u64,
    packing: &Packing,
    cfg: &DensityConfig,
) -> Result<DensityStage2> {
    let frequency = cfg.frequency(j)?;
    let support = 1.0 / j as f64;
    let r = cfg.ball_radius;
    let mut waves = Vec::new();
    let mut balls = Vec::new();
    for &(center, dist2) in &packing.balls {
        let mut ball = Ball {
            center,
            radius: r,
            dist2,
            scale: 0.0,
            amplitude: 0.0,
            mass: 0.0,
            mass_ratio: 0.0,
            constant: 0.0,
        };
        if dist2 <= 1e-14 {
            balls.push(ball);
            continue;
        }
        let s = field.sample([center[0], center[1], 0.0]);
        let zbar = find_perturbation(&s.state, s.pressure, gamma, cfg.shrink)?;
        let spec = WaveSpec {
            time_slab: Some(support),
            torus: true,
            ..WaveSpec::new(zbar, frequency, [center[0], center[1], 0.0], r, cfg.cutoff_margin)?
        };
        let wave = time_slab_wave(spec)?;
        let samples: Vec<(State, State)> = ball_samples(&wave, center, r, support)
            .into_iter()
            .filter(|y| wave.contains(*y))
            .map(|y| (field.sample(y).state, wave.eval(y)))
            .collect();
        let admissible = |t: f64| {
            samples.iter().all(|(old, w)| {
                let new = *old + *w * t;
                let m = hull_margin(&new);
                m > 0.0 && m >= cfg.margin_ratio * hull_margin(old) && new.e <= gamma
            })
        };
        // margins are concave along lines: admissible scales form [0, s*]
        let scale = if admissible(1.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if admissible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if scale < 1e-6 {
            balls.push(ball);
            continue;
        }
        let wave = wave.scaled(scale);
        let area = PI * r * r;
        ball.scale = scale;
        ball.amplitude = wave.spec.direction.norm();
        ball.mass = ball_mass(&wave, center, r);
        ball.mass_ratio = ball.mass / (area * ball.amplitude.powi(2));
        ball.constant = ball.mass / (area * dist2);
        balls.push(ball);
        waves.push(wave);
    }
    let mass: f64 = balls.iter().map(|b| b.mass).sum();
    let weighted: f64 = balls.iter().map(|b| PI * b.radius * b.radius * b.dist2).sum();
    let di = packing.dist_integral;
    let ratio = |a: f64| if di > 0.0 { a / di } else { 0.0 };
    Ok(DensityStage2 {
        j,
        frequency,
        support,
        waves,
        balls,
        dist_integral: di,
        covering_ratio: ratio(2.0 * weighted),
        mass,
        constant: ratio(mass),
    })
}

/// Perturbation `z_j` of `field` with time support `[0, 1/j)`, one wave
/// per ball of a greedy disjoint packing ordered by distance to `K`.
pub fn density_stage2(
    field: &PerturbedField,
    gamma: f64,
    j: u64,
    cfg: &DensityConfig,
) -> Result<DensityStage2> {
    cfg.validate()?;
    if j == 0 {
        return Err(Error::Config("j must be positive".into()));
    }
    let packing = pack_balls(field, gamma, cfg);
    place_waves(field, gamma, j, &packing, cfg)
}

/// Node index ranges of a wave's support box on the `n x n` slice,
/// unwrapped.
struct Footprint {
    rows: (i64, i64),
    cols: (i64, i64),
}

fn footprint(wave: &LocalizedWave, n: usize) -> Footprint {
    let (lo, hi) = wave.support_box();
    let span = |a: usize| {
        let f = n as f64;
        (((lo[a] + 0.5) * f - 0.5).floor() as i64, ((hi[a] + 0.5) * f - 0.5).ceil() as i64)
    };
    Footprint {
        rows: span(0),
        cols: span(1),
    }
}

fn in_span(i: i64, (lo, hi): (i64, i64), n: i64) -> bool {
    lo + (i - lo).rem_euclid(n) <= hi
}

/// Visits every node of the `n x n` midpoint grid at `t = 0` with the
/// summed states of `old` and `new` waves there.
fn slice_pass(
    old: &[LocalizedWave],
    new: &[LocalizedWave],
    n: usize,
    mut visit: impl FnMut(usize, usize, State, State),
) {
    let nn = n as i64;
    let node = |k: i64| -0.5 + (k.rem_euclid(nn) as f64 + 0.5) / n as f64;
    let feet: Vec<(Footprint, bool, &LocalizedWave)> = old
        .iter()
        .map(|w| (footprint(w, n), false, w))
        .chain(new.iter().map(|w| (footprint(w, n), true, w)))
        .collect();
    let mut row_old = vec![State::ZERO; n];
    let mut row_new = vec![State::ZERO; n];
    for i in 0..nn {
        row_old.fill(State::ZERO);
        row_new.fill(State::ZERO);
        let x1 = node(i);
        for (f, is_new, w) in &feet {
            if !in_span(i, f.rows, nn) {
                continue;
            }
            let row = if *is_new { &mut row_new } else { &mut row_old };
            for k in f.cols.0..=f.cols.1.min(f.cols.0 + nn - 1) {
                let j = k.rem_euclid(nn) as usize;
                row[j] += w.eval([x1, node(k), 0.0]);
            }
        }
        for j in 0..n {
            visit(i as usize, j, row_old[j], row_new[j]);
        }
    }
}

/// Slice resolution separating all carrier frequencies up to `n_max`.
fn slice_resolution(n_max: u32) -> usize {
    let needed = 1.2 * 2.0 * n_max as f64 / TAU + 64.0;
    ((needed / 16.0).ceil() as usize * 16).max(256)
}

/// Per-stage record of the recursion `z_{k+1} = z_k + z_{k, j(k)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityStageLog {
    pub stage: usize,
    pub j: u64,
    pub frequency: u32,
    /// Values of `j` rejected before the accepted one.
    pub rejected: Vec<u64>,
    pub balls: usize,
    pub waves: usize,
    /// The increment vanishes for `t >= support_bound`.
    pub support_bound: f64,
    /// `||z_{k+1}(., 0) - z_k(., 0)||^2`.
    pub z_increment: f64,
    pub z_norm: f64,
    pub z_norm_next: f64,
    /// `||w_{k+1} - w_k||^2`.
    pub w_increment: f64,
    pub w_norm: f64,
    pub w_norm_next: f64,
    /// `|int f_{k+1} - f_k dx|`.
    pub energy_change: f64,
    /// Slack of the three stage inequalities, in order.
    pub slack: [f64; 3],
    /// `int d(z_k(x, 0), K)^2 dx`.
    pub dist_integral: f64,
    /// `z_increment / dist_integral`.
    pub dist_constant: f64,
    pub covering_ratio: f64,
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub delta: f64,
    pub gamma: f64,
    pub cutoff: usize,
    pub mollification_error: f64,
    pub first_slack: f64,
    pub initial_excess: f64,
    pub second_slack: f64,
    /// `int f - |w_0|^2 / 2` at stage zero.
    pub nu: f64,
    pub stages: Vec<DensityStageLog>,
    /// `||w - w_K||^2` against the unmollified target.
    pub final_error: f64,
    /// `||w_0 - w_K||^2`.
    pub drift: f64,
    /// `2 ||w - w_0||^2 + 2 ||w_0 - w_K||^2`.
    pub chain_bound: f64,
    /// `nu 2^(1 - K)`, the inequality budget left after stage `K`.
    pub tail: f64,
    /// `20 delta + tail`.
    pub bound: f64,
}

impl DensityReport {
    /// All slacks nonnegative and the chain within `bound`.
    pub fn holds(&self) -> bool {
        self.first_slack >= 0.0
            && self.stages.iter().all(|s| s.slack.iter().all(|x| *x >= 0.0))
            && self.final_error <= self.chain_bound
            && self.chain_bound <= self.bound
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = serde_json::to_value(self)?;
        if let Some(map) = header.as_object_mut() {
            map.remove("stages");
        }
        writeln!(out, "{header}")?;
        for s in &self.stages {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }
}

/// Sums over the `t = 0` slice for one candidate increment.
#[derive(Default)]
struct StageSums {
    z_norm: Neumaier,
    z_next: Neumaier,
    z_inc: Neumaier,
    w_norm: Neumaier,
    w_next: Neumaier,
    w_inc: Neumaier,
    e_inc: Neumaier,
}

/// Runs stage one and then `cfg.stages` perturbation stages, each with
/// the smallest power of two `j >= max(2, k)` meeting the three stage
/// inequalities.
pub fn density_stage3(cfg: &DensityConfig) -> Result<(DensityReport, PerturbedField)> {
    cfg.validate()?;
    let s1 = density_stage1(&cfg.shear, cfg.delta, cfg.mu.clone(), cfg.horizon, cfg.max_cutoff)?;
    let base = s1.subsolution.clone();
    let n_s = cfg.sample_grid;
    let grid = SpaceTimeGrid::new(n_s, n_s, 8, 0.0, cfg.horizon);
    let report = verify_main_theorem_hypotheses(&base, cfg.eps, &grid);
    if !report.passes(1e-9, 1e-6) {
        return Err(Error::PreconditionViolated(format!(
            "subsolution fails the hypothesis check: {report:?}"
        )));
    }
    let emax = grid.nodes().fold(0.0f64, |m, (_, _, _, y)| m.max(base.sample(y).state.e));
    let gamma = gamma_eps(emax, cfg.eps);
    let mut field = PerturbedField {
        base: Box::new(base.clone()),
        waves: Vec::new(),
    };
    let nu = s1.initial_excess;
    let mut stages = Vec::new();
    for k in 0..cfg.stages {
        let packing = pack_balls(&field, gamma, cfg);
        let budget = 0.5f64.powi(k as i32);
        let mut j = (k as u64).max(2).next_power_of_two();
        let mut rejected = Vec::new();
        let log = loop {
            if j > cfg.j_max {
                return Err(Error::StageInequalityUnsatisfiable {
                    stage: k,
                    j_max: cfg.j_max,
                });
            }
            let s2 = place_waves(&field, gamma, j, &packing, cfg)?;
            let n_max = field
                .waves
                .iter()
                .chain(&s2.waves)
                .map(|w| w.spec.frequency)
                .max()
                .unwrap_or(1);
            let n = slice_resolution(n_max);
            let column: Vec<State> = (0..n)
                .map(|b| base.sample([0.0, -0.5 + (b as f64 + 0.5) / n as f64, 0.0]).state)
                .collect();
            let mut sums = StageSums::default();
            slice_pass(&field.waves, &s2.waves, n, |_, b, old, inc| {
                let z = column[b] + old;
                let next = z + inc;
                sums.z_norm.add(z.norm_sq());
                sums.z_next.add(next.norm_sq());
                sums.z_inc.add(inc.norm_sq());
                sums.w_norm.add(z.v.norm_sq());
                sums.w_next.add(next.v.norm_sq());
                sums.w_inc.add(inc.v.norm_sq());
                sums.e_inc.add(inc.e);
            });
            let area = 1.0 / (n * n) as f64;
            let v = |a: &Neumaier| a.value() * area;
            let (z_norm, z_next, z_inc) = (v(&sums.z_norm), v(&sums.z_next), v(&sums.z_inc));
            let (w_norm, w_next, w_inc) = (v(&sums.w_norm), v(&sums.w_next), v(&sums.w_inc));
            let energy_change = v(&sums.e_inc).abs();
            let slack = [
                z_next - z_norm + budget - z_inc,
                w_next - w_norm + nu * budget - w_inc,
                nu * budget - energy_change,
            ];
            if slack.iter().all(|x| *x >= 0.0) {
                let di = s2.dist_integral;
                let log = DensityStageLog {
                    stage: k,
                    j,
                    frequency: s2.frequency,
                    rejected: rejected.clone(),
                    balls: s2.balls.len(),
                    waves: s2.waves.len(),
                    support_bound: s2.support,
                    z_increment: z_inc,
                    z_norm,
                    z_norm_next: z_next,
                    w_increment: w_inc,
                    w_norm,
                    w_norm_next: w_next,
                    energy_change,
                    slack,
                    dist_integral: di,
                    dist_constant: if di > 0.0 { z_inc / di } else { 0.0 },
                    covering_ratio: s2.covering_ratio,
                    resolution: n,
                };
                field.waves.extend(s2.waves);
                break log;
            }
            rejected.push(j);
            j *= 2;
        };
        stages.push(log);
    }

    let n = slice_resolution(field.waves.iter().map(|w| w.spec.frequency).max().unwrap_or(1));
    let column: Vec<(f64, State)> = (0..n)
        .map(|b| {
            let x2 = -0.5 + (b as f64 + 0.5) / n as f64;
            (cfg.shear.eval(x2), base.sample([0.0, x2, 0.0]).state)
        })
        .collect();
    let mut error = Neumaier::default();
    let mut drift = Neumaier::default();
    let mut first = Neumaier::default();
    slice_pass(&[], &field.waves, n, |_, b, _, waves| {
        let (f, z0) = column[b];
        let w0 = z0.v;
        let wk = w0 + waves.v;
        error.add((wk.x1 - f).powi(2) + wk.x2 * wk.x2);
        drift.add(waves.v.norm_sq());
        first.add((w0.x1 - f).powi(2) + w0.x2 * w0.x2);
    });
    let area = 1.0 / (n * n) as f64;
    let tail = nu * 2.0f64.powi(1 - cfg.stages as i32);
    let final_error = error.value() * area;
    let drift = drift.value() * area;
    let chain_bound = 2.0 * first.value() * area + 2.0 * drift;
    let report = DensityReport {
        delta: cfg.delta,
        gamma,
        cutoff: s1.cutoff,
        mollification_error: s1.mollification_error,
        first_slack: s1.first_slack,
        initial_excess: s1.initial_excess,
        second_slack: s1.second_slack,
        nu,
        stages,
        final_error,
        drift,
        chain_bound,
        tail,
        bound: 20.0 * cfg.delta + tail,
    };
    Ok((report, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsolutions::SubsolutionSpec;
    use crate::waves::smoothstep;

    fn sine() -> ShearProfile {
        ShearProfile::Sine { amplitude: 0.8, k: 1 }
    }

    fn stage1_field(cfg: &DensityConfig) -> PerturbedField {
        let s1 = density_stage1(&cfg.shear, cfg.delta, cfg.mu.clone(), cfg.horizon, cfg.max_cutoff).unwrap();
        PerturbedField {
            base: Box::new(s1.subsolution),
            waves: Vec::new(),
        }
    }

    #[test]
    fn trigonometric_data_is_kept() {
        let s1 = density_stage1(&sine(), 0.1, Dissipation::Zero, 1.0, 64).unwrap();
        assert_eq!(s1.cutoff, 1);
        assert!(s1.mollification_error < 1e-25);
        assert!((s1.first_slack - 0.1).abs() < 1e-15);
        assert!((s1.initial_excess - 0.1).abs() < 1e-14);
    }

    #[test]
    fn cutoff_is_smallest_meeting_delta() {
        let m = 400;
        let sin: Vec<f64> = (1..=m).map(|k| 1.0 / k as f64).collect();
        let w = ShearProfile::Fourier { cos: vec![0.0; m], sin };
        let delta = 0.005;
        let tail = |k: usize| ((k + 1)..=m).map(|q| 0.5 / (q * q) as f64).sum::<f64>();
        let expected = (0..=m).find(|&k| tail(k) <= delta).unwrap();
        let s1 = density_stage1(&w, delta, Dissipation::Zero, 1.0, 1000).unwrap();
        assert_eq!(s1.cutoff, expected);
        assert!(tail(expected - 1) > delta);
        assert!((s1.tail - tail(expected)).abs() < 1e-12);
        assert!((s1.mollification_error - tail(expected)).abs() < 1e-9);
        assert!(s1.first_slack >= 0.0);
    }

    #[test]
    fn mollification_failure_is_reported() {
        let r = density_stage1(&ShearProfile::Step, 1e-4, Dissipation::Zero, 1.0, 8);
        assert!(matches!(r, Err(Error::MollificationFailed { cutoff: 8, .. })));
    }

    #[test]
    fn step_data_margin_is_delta() {
        let s1 = density_stage1(&ShearProfile::Step, 0.05, Dissipation::Zero, 1.0, 4096).unwrap();
        assert!(s1.tail <= 0.05 && s1.first_slack >= 0.0);
        assert!((s1.initial_excess - 0.05).abs() < 1e-14);
    }

    #[test]
    fn perturbation_support_is_exact() {
        let cfg = DensityConfig::new(sine(), 0.1);
        let field = stage1_field(&cfg);
        let gamma = gamma_eps(1.0, 1.0);
        let s2 = density_stage2(&field, gamma, 4, &cfg).unwrap();
        assert!(!s2.waves.is_empty());
        assert_eq!(s2.support, 0.25);
        let mut nonzero = 0;
        for w in &s2.waves {
            let c = w.spec.center;
            for k in 0..50 {
                let d = [0.002 * k as f64 - 0.05, 0.001 * k as f64 - 0.025];
                let x = [c[0] + d[0], c[1] + d[1]];
                for t in [0.25, 0.25 + 1e-12, 0.3, 0.9] {
                    assert_eq!(w.eval([x[0], x[1], t]), State::ZERO);
                }
                if w.eval([x[0], x[1], 0.0]) != State::ZERO {
                    nonzero += 1;
                }
            }
        }
        assert!(nonzero > 0);
    }

    #[test]
    fn constraint_states_get_no_perturbation() {
        let cfg = DensityConfig::new(sine(), 0.1);
        let field = PerturbedField {
            base: SubsolutionSpec::VortexSheet { delta: 0.5, horizon: 1.0 }.build().unwrap(),
            waves: Vec::new(),
        };
        let s2 = density_stage2(&field, 20.0, 2, &cfg).unwrap();
        assert!(s2.waves.is_empty());
        assert!(s2.balls.iter().all(|b| b.dist2 <= 1e-14 && b.mass == 0.0));
    }

    #[test]
    fn ball_masses_follow_the_cutoff() {
        let cfg = DensityConfig::new(sine(), 0.1);
        let field = stage1_field(&cfg);
        let gamma = gamma_eps(1.0, 1.0);
        let a = density_stage2(&field, gamma, 2, &cfg).unwrap();
        let b = density_stage2(&field, gamma, 4, &cfg).unwrap();
        assert_eq!(b.support, 0.5 * a.support);
        assert!((a.mass - b.mass).abs() <= 0.1 * a.mass);
        assert!(a.covering_ratio >= 1.0);

        // mean of cos^2 times the radial integral of chi^2
        let m = cfg.cutoff_margin;
        let n = 20_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) / n as f64;
                let chi = if s <= 1.0 - m { 1.0 } else { 1.0 - smoothstep((s - 1.0 + m) / m).0 };
                chi * chi * s
            })
            .sum::<f64>()
            / n as f64;
        for ball in a.balls.iter().filter(|b| b.scale > 0.0) {
            assert!((ball.mass_ratio - oracle).abs() < 0.03 * oracle, "{} vs {oracle}", ball.mass_ratio);
            assert!(ball.constant > 0.0);
        }
    }

    #[test]
    fn single_stage_has_positive_slack() {
        let mut cfg = DensityConfig::new(sine(), 0.1);
        cfg.stages = 1;
        let (r, _) = density_stage3(&cfg).unwrap();
        assert_eq!(r.stages.len(), 1);
        assert!(r.stages[0].slack.iter().all(|s| *s > 0.0));
        assert!((r.nu - 0.1).abs() < 1e-14);
        assert!(r.holds());
    }

    #[test]
    fn five_stages_on_step_data() {
        let cfg = DensityConfig::new(ShearProfile::Step, 0.1);
        let (r, field) = density_stage3(&cfg).unwrap();
        assert_eq!(r.stages.len(), 5);
        assert!(r.holds(), "{r:?}");
        for (k, s) in r.stages.iter().enumerate() {
            assert!(s.j >= (k as u64).max(2));
            assert_eq!(s.support_bound, 1.0 / s.j as f64);
            assert!(s.z_increment > 0.0);
        }
        assert!(r.final_error <= 20.0 * cfg.delta + r.tail);
        // the increments carry no velocity for t >= 1/j of their stage
        let last = r.stages.iter().map(|s| s.support_bound).fold(0.0, f64::max);
        let y = [0.1, 0.2, last];
        assert_eq!(field.sample(y), field.base.sample(y));
    }

    #[test]
    fn dissipative_run_holds() {
        let mut cfg = DensityConfig::new(sine(), 0.1);
        cfg.mu = Dissipation::Ramp { amplitude: 0.05, horizon: 1.0 };
        cfg.stages = 3;
        let (r, _) = density_stage3(&cfg).unwrap();
        assert!(r.holds());
    }

    #[test]
    fn report_jsonl_round_trips() {
        let mut cfg = DensityConfig::new(sine(), 0.1);
        cfg.stages = 2;
        let (r, _) = density_stage3(&cfg).unwrap();
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let s: DensityStageLog = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(s, r.stages[1]);
    }
}
