use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::hull::find_perturbation;
use crate::state::{gamma_eps, hull_margin, DistSearch, State, Vec2};
use crate::subsolutions::{verify_main_theorem_hypotheses, SubSample, Subsolution, SubsolutionSpec};
use crate::waves::{localized_wave, CutoffShape, time_slab_wave, Field, LocalizedWave, WaveSpec};
use crate::weak::{box_residuals, TestFunctionBattery, TestKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub subsolution: SubsolutionSpec,
    /// Energy cap; defaults to `gamma_eps` of the largest sampled energy.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    /// Nodes `[nx, ny, nt]` over the torus times `[t0, t1]`.
    #[serde(default = "defaults::grid")]
    pub grid: [usize; 3],
    #[serde(default = "defaults::time")]
    pub time: [f64; 2],
    /// Nodes per cell along each axis.
    #[serde(default = "defaults::cell")]
    pub cell: [usize; 3],
    #[serde(default = "defaults::budget")]
    pub budget: usize,
    #[serde(default = "defaults::shrink")]
    pub shrink: f64,
    /// `N_k = n0 2^floor(k / period)`.
    #[serde(default = "defaults::n0")]
    pub n0: u32,
    #[serde(default = "defaults::period")]
    pub period: usize,
    #[serde(default = "defaults::cutoff_margin")]
    pub cutoff_margin: f64,
    #[serde(default)]
    pub support: SupportShape,
    /// Support half extents as a multiple of the cell half extents.
    #[serde(default = "defaults::support_scale")]
    pub support_scale: f64,
    /// New margin must stay above this fraction of the old one.
    #[serde(default = "defaults::margin_ratio")]
    pub margin_ratio: f64,
    /// Base points tried per step: the cell centre and the farthest nodes.
    #[serde(default = "defaults::candidates")]
    pub candidates: usize,
    #[serde(default = "defaults::halvings")]
    pub halvings: usize,
    /// Grid of the distance search.
    #[serde(default = "defaults::dist_grid")]
    pub dist_grid: usize,
    /// Run the per-wave weak residual spot check.
    #[serde(default = "defaults::weak_check")]
    pub weak_check: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Cutoff of each driver wave.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportShape {
    /// Ellipsoid with the cell's aspect ratio.
    Ellipsoid,
    /// Disk in space times a time interval.
    Slab,
    /// Product of one-dimensional cutoffs with the cell's aspect ratio.
    #[default]
    Box,
}

mod defaults {
    pub fn eps() -> f64 {
        1.0
    }
    pub fn grid() -> [usize; 3] {
        [32, 32, 16]
    }
    pub fn time() -> [f64; 2] {
        [0.0, 1.0]
    }
    pub fn cell() -> [usize; 3] {
        [32, 1, 2]
    }
    pub fn budget() -> usize {
        50
    }
    pub fn shrink() -> f64 {
        0.97
    }
    pub fn n0() -> u32 {
        4096
    }
    pub fn period() -> usize {
        10
    }
    pub fn cutoff_margin() -> f64 {
        0.05
    }
    pub fn support_scale() -> f64 {
        1.3
    }
    pub fn margin_ratio() -> f64 {
        0.1
    }
    pub fn candidates() -> usize {
        4
    }
    pub fn halvings() -> usize {
        30
    }
    pub fn dist_grid() -> usize {
        64
    }
    pub fn weak_check() -> bool {
        true
    }
}

impl DriverConfig {
    pub fn new(subsolution: SubsolutionSpec) -> Self {
        serde_json::from_value(serde_json::json!({ "subsolution": subsolution }))
            .expect("defaults deserialize")
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.grid.iter().zip(&self.cell).any(|(g, c)| *c == 0 || g % c != 0) {
            return bad("cell sizes must be positive and divide the grid");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.time[0] < self.time[1]) {
            return bad("time interval is empty");
        }
        if self.n0 == 0 || self.period == 0 {
            return bad("n0 and period must be positive");
        }
        if !(self.support_scale > 0.0) {
            return bad("support_scale must be positive");
        }
        if !(0.0..1.0).contains(&self.margin_ratio) {
            return bad("margin_ratio must lie in [0, 1)");
        }
        Ok(())
    }

    /// `N_k` for step `k`.
    pub fn frequency(&self, k: usize) -> u32 {
        let doublings = (k / self.period).min(20) as u32;
        self.n0.saturating_mul(1 << doublings)
    }
}

/// Subsolution plus superposed waves. Waves carry no pressure or `mu`
/// and vanish at the initial time.
pub struct PerturbedField {
    pub base: Box<dyn Subsolution>,
    pub waves: Vec<LocalizedWave>,
}

impl PerturbedField {
    pub fn waves_at(&self, y: Point) -> State {
        self.waves
            .iter()
            .filter(|w| w.contains(y))
            .fold(State::ZERO, |acc, w| acc + w.eval(y))
    }
}

impl Subsolution for PerturbedField {
    fn sample(&self, y: Point) -> SubSample {
        let mut s = self.base.sample(y);
        s.state = s.state + self.waves_at(y);
        s
    }
    fn in_zone(&self, y: Point) -> bool {
        self.base.in_zone(y)
    }
    fn horizon(&self) -> f64 {
        self.base.horizon()
    }
    fn initial_velocity(&self, x: [f64; 2]) -> Vec2 {
        self.base.initial_velocity(x)
    }
    fn initial_energy(&self, x: [f64; 2]) -> f64 {
        self.base.initial_energy(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Accepted,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub cell: [usize; 3],
    pub status: StepStatus,
    pub frequency: u32,
    /// `|zbar|` after the amplitude search.
    pub amplitude: f64,
    pub cell_dist2_before: f64,
    pub cell_dist2_after: f64,
    pub global_mean_dist2: f64,
    /// Largest battery residual of the wave alone, and the bound it is
    /// checked against.
    pub weak_residual: Option<f64>,
    pub weak_bound: Option<f64>,
    pub interior: bool,
    pub min_margin: f64,
    pub initial_data_drift: f64,
    pub pressure_drift: f64,
    pub mu_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub gamma: f64,
    pub initial_mean_dist2: f64,
    pub steps: Vec<StepRecord>,
}

impl IterationLog {
    pub fn final_mean_dist2(&self) -> f64 {
        self.steps
            .iter()
            .rev()
            .find(|s| s.status == StepStatus::Accepted)
            .map_or(self.initial_mean_dist2, |s| s.global_mean_dist2)
    }

    /// One JSON record per line: a header, then the steps.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "gamma": self.gamma,
            "initial_mean_dist2": self.initial_mean_dist2,
        });
        writeln!(out, "{header}")?;
        for s in &self.steps {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }
}

struct Candidate {
    wave: LocalizedWave,
    touched: Vec<(usize, Point, State)>,
    amplitude: f64,
    dist: Vec<f64>,
    zbar: State,
    gain: f64,
}

/// Driver state: the field, its node samples and cached distances.
pub struct Driver {
    pub config: DriverConfig,
    pub grid: SpaceTimeGrid,
    pub gamma: f64,
    pub field: PerturbedField,
    base: Vec<SubSample>,
    states: Vec<State>,
    dist2: Vec<f64>,
    search: DistSearch,
    stalled: Vec<bool>,
    battery: TestFunctionBattery,
    baseline: Functionals,
}

/// Integrals that waves must leave unchanged.
#[derive(Clone, Debug, PartialEq)]
struct Functionals {
    initial: Vec<f64>,
    mu: Vec<f64>,
    pressure: Vec<f64>,
}

fn max_drift(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

impl Driver {
    pub fn new(config: DriverConfig) -> Result<Self> {
        config.validate()?;
        let base = config.subsolution.build()?;
        let [nx, ny, nt] = config.grid;
        let grid = SpaceTimeGrid::new(nx, ny, nt, config.time[0], config.time[1]);
        let report = verify_main_theorem_hypotheses(&*base, config.eps, &grid);
        if !report.passes(1e-9, 1e-6) {
            return Err(Error::PreconditionViolated(format!(
                "subsolution fails the hypothesis check: {report:?}"
            )));
        }
        let samples: Vec<SubSample> = grid.nodes().map(|(_, _, _, y)| base.sample(y)).collect();
        let gamma = match config.gamma {
            Some(g) => g,
            None => {
                let emax = samples.iter().fold(0.0f64, |m, s| m.max(s.state.e));
                gamma_eps(emax.max(f64::MIN_POSITIVE), config.eps)
            }
        };
        let search = DistSearch::new(config.dist_grid, 50);
        let states: Vec<State> = samples.iter().map(|s| s.state).collect();
        let dist2 = samples
            .iter()
            .map(|s| search.dist(&s.state, s.pressure, Some(gamma)).powi(2))
            .collect();
        let n_cells = (0..3).map(|a| config.grid[a] / config.cell[a]).product();
        let field = PerturbedField {
            base,
            waves: Vec::new(),
        };
        let mut d = Self {
            config,
            grid,
            gamma,
            field,
            base: samples,
            states,
            dist2,
            search,
            stalled: vec![false; n_cells],
            battery: TestFunctionBattery::default(),
            baseline: Functionals {
                initial: Vec::new(),
                mu: Vec::new(),
                pressure: Vec::new(),
            },
        };
        d.baseline = d.functionals();
        Ok(d)
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn mean_dist2(&self) -> f64 {
        self.dist2.iter().sum::<f64>() / self.dist2.len() as f64
    }

    fn cells(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.config.grid[a] / self.config.cell[a])
    }

    fn cell_index(&self, c: [usize; 3]) -> usize {
        let n = self.cells();
        (c[0] * n[1] + c[1]) * n[2] + c[2]
    }

    fn cell_nodes(&self, c: [usize; 3]) -> Vec<usize> {
        let b = self.config.cell;
        let mut out = Vec::with_capacity(b[0] * b[1] * b[2]);
        for i in c[0] * b[0]..(c[0] + 1) * b[0] {
            for j in c[1] * b[1]..(c[1] + 1) * b[1] {
                for k in c[2] * b[2]..(c[2] + 1) * b[2] {
                    out.push(self.grid.index(i, j, k));
                }
            }
        }
        out
    }

    fn node_point(&self, idx: usize) -> Point {
        let nt = self.grid.nt;
        let ny = self.grid.ny;
        let k = idx % nt;
        let j = (idx / nt) % ny;
        let i = idx / (nt * ny);
        self.grid.point(i, j, k)
    }

    /// Nodes in the box of half extents `half` around `centre`, with
    /// spatial wrap-around.
    fn nodes_near(&self, centre: Point, half: [f64; 3]) -> Vec<usize> {
        let g = &self.grid;
        let span = |c: f64, h: f64, step: f64, lo: f64| -> (i64, i64) {
            (((c - h - lo) / step - 0.5).floor() as i64, ((c + h - lo) / step - 0.5).ceil() as i64)
        };
        let (i0, i1) = span(centre[0], half[0], g.dx(), -0.5);
        let (j0, j1) = span(centre[1], half[1], g.dy(), -0.5);
        let (k0, k1) = span(centre[2], half[2], g.dt(), g.t0);
        let nx = g.nx as i64;
        let ny = g.ny as i64;
        let mut out = Vec::new();
        for i in i0..=i1.min(i0 + nx - 1) {
            for j in j0..=j1.min(j0 + ny - 1) {
                for k in k0.max(0)..=k1.min(g.nt as i64 - 1) {
                    out.push(g.index(i.rem_euclid(nx) as usize, j.rem_euclid(ny) as usize, k as usize));
                }
            }
        }
        out
    }

    fn cell_mean(&self, c: [usize; 3]) -> f64 {
        let nodes = self.cell_nodes(c);
        nodes.iter().map(|&n| self.dist2[n]).sum::<f64>() / nodes.len() as f64
    }

    /// Highest mean `dist^2` among cells not yet stalled; ties go to the
    /// lexicographically first cell.
    fn select_cell(&self) -> Option<([usize; 3], f64)> {
        let n = self.cells();
        let mut best: Option<([usize; 3], f64)> = None;
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let c = [i, j, k];
                    if self.stalled[self.cell_index(c)] {
                        continue;
                    }
                    let s = self.cell_mean(c);
                    if s > 0.0 && best.map_or(true, |(_, b)| s > b) {
                        best = Some((c, s));
                    }
                }
            }
        }
        best
    }

    /// Centre and half extents of a cell.
    fn cell_box(&self, c: [usize; 3]) -> (Point, [f64; 3]) {
        let b = self.config.cell;
        let h = [self.grid.dx(), self.grid.dy(), self.grid.dt()];
        let lo = [-0.5, -0.5, self.grid.t0];
        let mut centre = [0.0; 3];
        let mut half = [0.0; 3];
        for a in 0..3 {
            half[a] = 0.5 * b[a] as f64 * h[a];
            centre[a] = lo[a] + (c[a] * b[a]) as f64 * h[a] + half[a];
        }
        (centre, half)
    }

    fn functionals(&self) -> Functionals {
        let g = &self.grid;
        let area = g.dx() * g.dy();
        let mut initial = Vec::new();
        let mut mu = Vec::new();
        for m in &self.battery.members {
            let mut acc_i = 0.0;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let x = [g.x(i), g.y(j)];
                    let z = self.field.sample([x[0], x[1], g.t0]).state;
                    let (tau, _) = m.profile.eval(g.t0, g.t1);
                    acc_i += area
                        * tau
                        * match m.kind {
                            TestKind::Scalar => z.e * m.scalar(x).value,
                            TestKind::DivergenceFree => {
                                let p = m.vector(x).value;
                                z.v.x1 * p[0] + z.v.x2 * p[1]
                            }
                        };
                }
            }
            initial.push(acc_i);
            if m.kind == TestKind::Scalar {
                let mut acc = 0.0;
                for (n, (_, _, _, y)) in g.nodes().enumerate() {
                    let (tau, _) = m.profile.eval(y[2], g.t1);
                    acc += g.cell_volume() * self.base[n].mu * m.scalar([y[0], y[1]]).value * tau;
                }
                mu.push(acc);
            }
        }
        let pressure = g.nodes().map(|(_, _, _, y)| self.field.sample(y).pressure.0).collect();
        Functionals {
            initial,
            mu,
            pressure,
        }
    }

    /// Half extents of the support, shrunk until it holds no node with
    /// vanishing margin.
    fn support_size(&self, centre: Point, half: [f64; 3]) -> Option<[f64; 3]> {
        // spatial radii stay within half a period so the cutoff never
        // meets its own image on the torus
        let k = self.config.support_scale;
        let mut r = match self.config.support {
            SupportShape::Ellipsoid | SupportShape::Box => {
                [(half[0] * k).min(0.5), (half[1] * k).min(0.5), half[2] * k]
            }
            SupportShape::Slab => {
                let rho = (half[0].min(half[1]) * k).min(0.5);
                [rho, rho, half[2] * k]
            }
        };
        for _ in 0..40 {
            // normalised displacement of the worst offending node
            let mut worst: Option<[f64; 3]> = None;
            for n in self.nodes_near(centre, r) {
                if hull_margin(&self.states[n]) > 1e-12 {
                    continue;
                }
                let y = self.node_point(n);
                let d = [
                    crate::grid::wrap(y[0] - centre[0]) / r[0],
                    crate::grid::wrap(y[1] - centre[1]) / r[1],
                    (y[2] - centre[2]) / r[2],
                ];
                let inside = match self.config.support {
                    SupportShape::Ellipsoid => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < 1.0,
                    SupportShape::Slab => d[0].hypot(d[1]) < 1.0 && d[2].abs() < 1.0,
                    SupportShape::Box => d.iter().all(|x| x.abs() < 1.0),
                };
                if inside {
                    worst = Some(d);
                    break;
                }
            }
            let Some(d) = worst else {
                return Some(r);
            };
            // shrink along the axis where the offending node sits furthest out
            let a = (0..3)
                .max_by(|&i, &j| d[i].abs().total_cmp(&d[j].abs()))
                .unwrap_or(0);
            match (self.config.support, a) {
                (SupportShape::Slab, 0 | 1) => {
                    r[0] *= 0.8;
                    r[1] *= 0.8;
                }
                _ => r[a] *= 0.8,
            }
        }
        None
    }

    fn stall(&mut self, step: usize, cell: [usize; 3], before: f64, frequency: u32, note: &str) -> StepRecord {
        let idx = self.cell_index(cell);
        self.stalled[idx] = true;
        StepRecord {
            step,
            cell,
            status: StepStatus::Stalled,
            frequency,
            amplitude: 0.0,
            cell_dist2_before: before,
            cell_dist2_after: before,
            global_mean_dist2: self.mean_dist2(),
            weak_residual: None,
            weak_bound: None,
            interior: true,
            min_margin: self.min_zone_margin(),
            initial_data_drift: 0.0,
            pressure_drift: 0.0,
            mu_drift: 0.0,
            note: Some(note.into()),
        }
    }

    fn min_zone_margin(&self) -> f64 {
        self.states
            .iter()
            .zip(&self.base)
            .map(|(z, b)| (hull_margin(z), hull_margin(&b.state)))
            .filter(|(_, b)| *b > 1e-12)
            .fold(f64::INFINITY, |m, (z, _)| m.min(z))
    }

    /// One perturbation step on the worst cell. Returns `None` when no
    /// cell has positive distance left.
    pub fn step(&mut self, step: usize) -> Option<StepRecord> {
        let (cell, before) = self.select_cell()?;
        let frequency = self.config.frequency(step);
        let nodes = self.cell_nodes(cell);
        let (centre, half) = self.cell_box(cell);
        let Some(radii) = self.support_size(centre, half) else {
            return Some(self.stall(step, cell, before, frequency, "no support clear of constraint nodes"));
        };
        // base points: the cell centre, then the cell nodes farthest from K
        let mut bases = vec![self.field.sample(centre)];
        let mut ranked: Vec<usize> = nodes.clone();
        ranked.sort_by(|a, b| self.dist2[*b].total_cmp(&self.dist2[*a]));
        for &n in ranked.iter().take(self.config.candidates.saturating_sub(1)) {
            bases.push(SubSample {
                state: self.states[n],
                ..self.base[n]
            });
        }
        let mut best: Option<Candidate> = None;
        let mut last_err = String::from("zero perturbation");
        for b in &bases {
            match self.candidate(b, frequency, centre, radii, &nodes) {
                Ok(c) => {
                    if best.as_ref().map_or(true, |x| c.gain > x.gain) {
                        best = Some(c);
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        let Some(Candidate {
            wave,
            touched,
            amplitude: s,
            dist: new_dist,
            zbar,
            ..
        }) = best
        else {
            return Some(self.stall(step, cell, before, frequency, &last_err));
        };
        for ((n, _, w), d) in touched.iter().zip(&new_dist) {
            self.states[*n] = self.states[*n] + *w * s;
            self.dist2[*n] = *d;
        }
        let wave = wave.scaled(s);
        let (weak_residual, weak_bound) = if self.config.weak_check {
            let (r, b) = wave_weak_check(&wave, &self.battery, self.grid.t1);
            (Some(r), Some(b))
        } else {
            (None, None)
        };
        self.field.waves.push(wave);
        let after = self.cell_mean(cell);
        let now = self.functionals();
        let min_margin = self.min_zone_margin();
        let interior = min_margin > 0.0 && self.states.iter().all(|z| z.e <= self.gamma);
        Some(StepRecord {
            step,
            cell,
            status: StepStatus::Accepted,
            frequency,
            amplitude: zbar.norm() * s,
            cell_dist2_before: before,
            cell_dist2_after: after,
            global_mean_dist2: self.mean_dist2(),
            weak_residual,
            weak_bound,
            interior,
            min_margin,
            initial_data_drift: max_drift(&now.initial, &self.baseline.initial),
            pressure_drift: max_drift(&now.pressure, &self.baseline.pressure),
            mu_drift: max_drift(&now.mu, &self.baseline.mu),
            note: None,
        })
    }

    /// Wave from the perturbation direction at `base`, with its accepted
    /// amplitude.
    fn candidate(
        &self,
        base: &SubSample,
        frequency: u32,
        centre: Point,
        radii: [f64; 3],
        nodes: &[usize],
    ) -> Result<Candidate> {
        let zbar = find_perturbation(&base.state, base.pressure, self.gamma, self.config.shrink)?;
        if zbar.norm() == 0.0 {
            return Err(Error::PreconditionViolated("zero perturbation".into()));
        }
        let base_spec = WaveSpec::new(zbar, frequency, centre, radii[0], self.config.cutoff_margin)?;
        let wave = match self.config.support {
            SupportShape::Ellipsoid => localized_wave(WaveSpec {
                radii,
                torus: true,
                ..base_spec
            }),
            SupportShape::Box => localized_wave(WaveSpec {
                radii,
                torus: true,
                shape: CutoffShape::Box,
                ..base_spec
            }),
            SupportShape::Slab => time_slab_wave(WaveSpec {
                time_slab: Some(radii[2]),
                torus: true,
                ..base_spec
            }),
        }?;
        let touched: Vec<(usize, Point, State)> = self
            .nodes_near(centre, radii)
            .iter()
            .map(|&n| (n, self.node_point(n)))
            .filter(|(_, y)| wave.contains(*y))
            .map(|(n, y)| (n, y, wave.eval(y)))
            .collect();

        // Margins are concave along lines, so the admissible amplitudes
        // form an interval [0, s*]; bisect for s*, then halve until the
        // distance decreases.
        let mut s = if self.admissible(&touched, 1.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..self.config.halvings {
                let mid = 0.5 * (lo + hi);
                if self.admissible(&touched, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        while s > 1e-6 {
            if let Some(dist) = self.decrease(&touched, s, nodes) {
                let gain = touched
                    .iter()
                    .zip(&dist)
                    .map(|((n, _, _), d)| self.dist2[*n] - d)
                    .sum();
                return Ok(Candidate {
                    wave,
                    touched,
                    amplitude: s,
                    dist,
                    zbar,
                    gain,
                });
            }
            s *= 0.5;
        }
        Err(Error::PreconditionViolated("no admissible amplitude".into()))
    }

    /// Margin floor and energy cap at amplitude `s`.
    fn admissible(&self, touched: &[(usize, Point, State)], s: f64) -> bool {
        touched.iter().all(|(n, _, w)| {
            let old = self.states[*n];
            let new = old + *w * s;
            let m = hull_margin(&new);
            m > 0.0 && m >= self.config.margin_ratio * hull_margin(&old) && new.e <= self.gamma
        })
    }

    /// New squared distances of the touched nodes at amplitude `s`, if the
    /// cell mean decreases and the touched total does not increase.
    fn decrease(&self, touched: &[(usize, Point, State)], s: f64, nodes: &[usize]) -> Option<Vec<f64>> {
        let dist: Vec<f64> = touched
            .iter()
            .map(|(n, _, w)| {
                let new = self.states[*n] + *w * s;
                self.search.dist(&new, self.base[*n].pressure, Some(self.gamma)).powi(2)
            })
            .collect();
        let mut cell_delta = 0.0;
        let mut total_delta = 0.0;
        for ((n, _, _), d) in touched.iter().zip(&dist) {
            let change = d - self.dist2[*n];
            total_delta += change;
            if nodes.contains(n) {
                cell_delta += change;
            }
        }
        (cell_delta < 0.0 && total_delta <= 0.0).then_some(dist)
    }
}

/// Largest battery residual of a single wave on its support box at
/// spacing `h/2`, and the bound it must respect: twice the
/// discretization error at spacing `h`, estimated as
/// `max(r_h, |r_h - r_{h/2}|)`. Waves solve the homogeneous system
/// exactly, so both residuals are quadrature error only; the plain
/// Richardson difference is unreliable once `h` aliases the carrier.
pub fn wave_weak_check(wave: &LocalizedWave, battery: &TestFunctionBattery, horizon: f64) -> (f64, f64) {
    let (lo, hi) = wave.support_box();
    let spec = &wave.spec;
    let speed = (spec.xi.norm_sq() + spec.c * spec.c).sqrt();
    let wavelength = std::f64::consts::TAU / (spec.frequency as f64 * speed.max(1e-12));
    let n = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / wavelength * 8.0).ceil() as usize).clamp(16, 48));
    let eval = |y: Point| wave.eval(y);
    let coarse = box_residuals(&eval, battery, horizon, lo, hi, n);
    let fine = box_residuals(&eval, battery, horizon, lo, hi, n.map(|k| 2 * k));
    let r = fine.iter().fold(0.0f64, |m, e| m.max(e.residual));
    let r_coarse = coarse.iter().fold(0.0f64, |m, e| m.max(e.residual));
    let scale = fine.iter().fold(0.0f64, |m, e| m.max(e.magnitude));
    let diff = coarse
        .iter()
        .zip(&fine)
        .fold(0.0f64, |m, (c, f)| m.max((c.residual - f.residual).abs()));
    (r, 2.0 * r_coarse.max(diff) + 1e-13 * scale.max(1.0))
}

/// Runs the perturbation loop for `config.budget` steps.
pub fn iterate(config: DriverConfig) -> Result<(IterationLog, Driver)> {
    let mut driver = Driver::new(config)?;
    let mut log = IterationLog {
        gamma: driver.gamma,
        initial_mean_dist2: driver.mean_dist2(),
        steps: Vec::new(),
    };
    for k in 0..driver.config.budget {
        match driver.step(k) {
            Some(r) => log.steps.push(r),
            None => break,
        }
    }
    Ok((log, driver))
}
