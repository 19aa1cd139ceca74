use serde::{Deserialize, Serialize};

use super::battery::{TestFn, TestFunctionBattery, TestKind};
use crate::error::{Error, Result};
use crate::grid::{Point, SpaceTimeGrid};
use crate::subsolutions::Subsolution;
use crate::waves::Neumaier;

/// Bisection levels for cells crossed by a zone boundary.
const REFINEMENT_DEPTH: usize = 3;

/// Relative disagreement between two quadrature levels that is tolerated.
const LEVEL_AGREEMENT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Momentum,
    Divergence,
    Energy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub identity: Identity,
    pub test_index: usize,
    /// Absolute value of the weak identity.
    pub residual: f64,
    /// Sum of the absolute values of its terms.
    pub magnitude: f64,
    pub resolution: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakResidualReport {
    pub resolution: [usize; 3],
    pub quadrature: String,
    pub entries: Vec<ResidualEntry>,
    /// Relative disagreement with the half-resolution level.
    pub level_disagreement: f64,
}

impl WeakResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.residual))
    }

    pub fn max_for(&self, identity: Identity) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.identity == identity)
            .fold(0.0, |m, e| m.max(e.residual))
    }
}

/// Term accumulators of one test member.
#[derive(Clone, Copy, Debug, Default)]
struct Terms {
    // momentum: v.d_t Phi, sigma:grad Phi, initial
    // divergence: v.grad Psi
    // energy: e d_t Psi, m.grad Psi, initial, mu Psi
    t: [Neumaier; 4],
}

fn accumulate(
    field: &dyn Subsolution,
    battery: &TestFunctionBattery,
    horizon: f64,
    y: Point,
    w: f64,
    acc: &mut [(Terms, Terms)],
) {
    let s = field.sample(y);
    let z = s.state;
    let x = [y[0], y[1]];
    for (m, (first, second)) in battery.members.iter().zip(acc.iter_mut()) {
        let (tau, dtau) = m.profile.eval(y[2], horizon);
        add_member(m, x, &z, s.mu, tau, dtau, w, first, second);
    }
}

#[allow(clippy::too_many_arguments)]
fn add_member(
    m: &TestFn,
    x: [f64; 2],
    z: &crate::state::State,
    mu: f64,
    tau: f64,
    dtau: f64,
    w: f64,
    first: &mut Terms,
    second: &mut Terms,
) {
    match m.kind {
        TestKind::DivergenceFree => {
            let p = m.vector(x);
            let (a, b) = (z.sigma.a, z.sigma.b);
            let sig = [[a, b], [b, -a]];
            let vt = z.v.x1 * p.value[0] + z.v.x2 * p.value[1];
            let mut sg = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    sg += sig[i][j] * p.jac[i][j];
                }
            }
            first.t[0].add(w * vt * dtau);
            first.t[1].add(w * sg * tau);
        }
        TestKind::Scalar => {
            let p = m.scalar(x);
            let vg = z.v.x1 * p.grad[0] + z.v.x2 * p.grad[1];
            let mg = z.m.x1 * p.grad[0] + z.m.x2 * p.grad[1];
            first.t[0].add(w * vg * tau);
            second.t[0].add(w * z.e * p.value * dtau);
            second.t[1].add(w * mg * tau);
            second.t[3].add(w * mu * p.value * tau);
        }
    }
}

fn cell_is_mixed(field: &dyn Subsolution, y: Point, h: [f64; 3]) -> bool {
    let first = field.in_zone([y[0] - h[0], y[1] - h[1], y[2] - h[2]]);
    (1..8).any(|c| {
        let q = [
            y[0] + if c & 1 == 0 { -h[0] } else { h[0] },
            y[1] + if c & 2 == 0 { -h[1] } else { h[1] },
            y[2] + if c & 4 == 0 { -h[2] } else { h[2] },
        ];
        field.in_zone(q) != first
    })
}

/// Midpoint rule on the cell of centre `y` and half-widths `h`, bisected
/// along every axis while a zone boundary crosses it.
fn integrate_cell(
    field: &dyn Subsolution,
    battery: &TestFunctionBattery,
    horizon: f64,
    y: Point,
    h: [f64; 3],
    depth: usize,
    acc: &mut [(Terms, Terms)],
) {
    let vol = 8.0 * h[0] * h[1] * h[2];
    if depth == 0 || !cell_is_mixed(field, y, h) {
        accumulate(field, battery, horizon, y, vol, acc);
        return;
    }
    let g = [h[0] / 2.0, h[1] / 2.0, h[2] / 2.0];
    for c in 0..8 {
        let q = [
            y[0] + if c & 1 == 0 { -g[0] } else { g[0] },
            y[1] + if c & 2 == 0 { -g[1] } else { g[1] },
            y[2] + if c & 4 == 0 { -g[2] } else { g[2] },
        ];
        integrate_cell(field, battery, horizon, q, g, depth - 1, acc);
    }
}

/// Weak-form residuals on one grid, without the resolution check.
pub fn weak_residuals(
    field: &dyn Subsolution,
    battery: &TestFunctionBattery,
    grid: &SpaceTimeGrid,
) -> Vec<ResidualEntry> {
    let horizon = grid.t1;
    let mut acc = vec![(Terms::default(), Terms::default()); battery.members.len()];
    let h = [grid.dx() / 2.0, grid.dy() / 2.0, grid.dt() / 2.0];
    for (_, _, _, y) in grid.nodes() {
        integrate_cell(field, battery, horizon, y, h, REFINEMENT_DEPTH, &mut acc);
    }
    // initial data at t = t0
    let area = grid.dx() * grid.dy();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let x = [grid.x(i), grid.y(j)];
            let v0 = field.initial_velocity(x);
            let e0 = field.initial_energy(x);
            for (m, (first, second)) in battery.members.iter().zip(acc.iter_mut()) {
                let (tau, _) = m.profile.eval(grid.t0, horizon);
                match m.kind {
                    TestKind::DivergenceFree => {
                        let p = m.vector(x);
                        first.t[2].add(area * tau * (v0.x1 * p.value[0] + v0.x2 * p.value[1]));
                    }
                    TestKind::Scalar => {
                        second.t[2].add(area * tau * e0 * m.scalar(x).value);
                    }
                }
            }
        }
    }
    collect_entries(battery, &acc, [grid.nx, grid.ny, grid.nt])
}

/// Weak residuals of the linear system with pressure over `(t0, t1)`,
/// with `t1` taken as the horizon of the test functions. Fails with
/// [`Error::ResolutionTooCoarse`] when the half-resolution level disagrees
/// by more than ten percent.
pub fn linear_system_residual(
    field: &dyn Subsolution,
    battery: &TestFunctionBattery,
    grid: &SpaceTimeGrid,
) -> Result<WeakResidualReport> {
    if grid.nx < 4 || grid.ny < 4 || grid.nt < 4 {
        return Err(Error::Config("weak quadrature needs at least 4 nodes per axis".into()));
    }
    let fine = weak_residuals(field, battery, grid);
    let coarse_grid = SpaceTimeGrid::new(grid.nx / 2, grid.ny / 2, grid.nt / 2, grid.t0, grid.t1);
    let coarse = weak_residuals(field, battery, &coarse_grid);
    let scale = fine.iter().fold(0.0f64, |m, e| m.max(e.magnitude));
    let diff = fine
        .iter()
        .zip(&coarse)
        .fold(0.0f64, |m, (f, c)| m.max((f.magnitude - c.magnitude).abs()));
    let level_disagreement = if scale > 0.0 { diff / scale } else { 0.0 };
    if level_disagreement > LEVEL_AGREEMENT {
        return Err(Error::ResolutionTooCoarse {
            relative: level_disagreement,
        });
    }
    Ok(WeakResidualReport {
        resolution: [grid.nx, grid.ny, grid.nt],
        quadrature: "midpoint, zone-boundary cells bisected 3 levels".into(),
        entries: fine,
        level_disagreement,
    })
}

/// Weak residuals of a field with zero initial data and zero `mu`,
/// supported in the box `[lo, hi]`, by the midpoint rule on `n` nodes per
/// axis. `horizon` is the end time of the test functions.
pub fn box_residuals(
    eval: &dyn Fn(Point) -> crate::state::State,
    battery: &TestFunctionBattery,
    horizon: f64,
    lo: Point,
    hi: Point,
    n: [usize; 3],
) -> Vec<ResidualEntry> {
    let mut acc = vec![(Terms::default(), Terms::default()); battery.members.len()];
    let h = [0, 1, 2].map(|a| (hi[a] - lo[a]) / n[a] as f64);
    let w = h[0] * h[1] * h[2];
    for i in 0..n[0] {
        let x1 = lo[0] + (i as f64 + 0.5) * h[0];
        for j in 0..n[1] {
            let x2 = lo[1] + (j as f64 + 0.5) * h[1];
            for k in 0..n[2] {
                let t = lo[2] + (k as f64 + 0.5) * h[2];
                let z = eval([x1, x2, t]);
                if z == crate::state::State::ZERO {
                    continue;
                }
                for (m, (first, second)) in battery.members.iter().zip(acc.iter_mut()) {
                    let (tau, dtau) = m.profile.eval(t, horizon);
                    add_member(m, [x1, x2], &z, 0.0, tau, dtau, w, first, second);
                }
            }
        }
    }
    collect_entries(battery, &acc, n)
}

fn collect_entries(
    battery: &TestFunctionBattery,
    acc: &[(Terms, Terms)],
    resolution: [usize; 3],
) -> Vec<ResidualEntry> {
    let mut out = Vec::new();
    for (idx, (m, (first, second))) in battery.members.iter().zip(acc).enumerate() {
        let sum = |t: &Terms, n: usize| {
            let v: Vec<f64> = t.t[..n].iter().map(Neumaier::value).collect();
            (v.iter().sum::<f64>().abs(), v.iter().map(|x| x.abs()).sum::<f64>())
        };
        match m.kind {
            TestKind::DivergenceFree => {
                let (residual, magnitude) = sum(first, 3);
                out.push(ResidualEntry {
                    identity: Identity::Momentum,
                    test_index: idx,
                    residual,
                    magnitude,
                    resolution,
                });
            }
            TestKind::Scalar => {
                let (residual, magnitude) = sum(first, 1);
                out.push(ResidualEntry {
                    identity: Identity::Divergence,
                    test_index: idx,
                    residual,
                    magnitude,
                    resolution,
                });
                let (residual, magnitude) = sum(second, 4);
                out.push(ResidualEntry {
                    identity: Identity::Energy,
                    test_index: idx,
                    residual,
                    magnitude,
                    resolution,
                });
            }
        }
    }
    out
}
