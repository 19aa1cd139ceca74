use serde::{Deserialize, Serialize};

use super::battery::{TestFunctionBattery, TestKind};
use crate::grid::{Point, SpaceTimeGrid};
use crate::state::Vec2;
use crate::waves::Neumaier;

/// Dissipation measure tested against the scalar battery members:
/// `mu[Psi] = -int int [|v|^2/2 d_t Psi + (|v|^2/2 + p) v.grad Psi]
///            - int |v0|^2/2 Psi(0)`.
/// Entries are `(test_index, mu[Psi])`.
pub fn dissipation_extract(
    v_field: &dyn Fn(Point) -> Vec2,
    p_field: &dyn Fn(Point) -> f64,
    v0: &dyn Fn([f64; 2]) -> Vec2,
    battery: &TestFunctionBattery,
    grid: &SpaceTimeGrid,
) -> Vec<(usize, f64)> {
    let horizon = grid.t1;
    let scalars: Vec<(usize, _)> = battery
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == TestKind::Scalar)
        .collect();
    let mut acc = vec![Neumaier::default(); scalars.len()];
    let vol = grid.cell_volume();
    for (_, _, _, y) in grid.nodes() {
        let v = v_field(y);
        let p = p_field(y);
        let e = 0.5 * v.norm_sq();
        for ((_, m), a) in scalars.iter().zip(acc.iter_mut()) {
            let s = m.scalar([y[0], y[1]]);
            let (tau, dtau) = m.profile.eval(y[2], horizon);
            let vg = v.x1 * s.grad[0] + v.x2 * s.grad[1];
            a.add(-vol * (e * s.value * dtau + (e + p) * vg * tau));
        }
    }
    let area = grid.dx() * grid.dy();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let x = [grid.x(i), grid.y(j)];
            let e0 = 0.5 * v0(x).norm_sq();
            for ((_, m), a) in scalars.iter().zip(acc.iter_mut()) {
                let (tau, _) = m.profile.eval(grid.t0, horizon);
                a.add(-area * e0 * tau * m.scalar(x).value);
            }
        }
    }
    scalars.iter().zip(&acc).map(|((i, _), a)| (*i, a.value())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub initial_energy: f64,
    /// `(t, int |v(t)|^2 / 2)` per time slice.
    pub energy_trace: Vec<(f64, f64)>,
}

/// Checks `int |v(t)|^2 <= int |v0|^2` on every time slice of the grid,
/// with relative slack `rel_tol`.
pub fn admissibility_check(
    v_field: &dyn Fn(Point) -> Vec2,
    v0: &dyn Fn([f64; 2]) -> Vec2,
    grid: &SpaceTimeGrid,
    rel_tol: f64,
) -> AdmissibilityReport {
    let area = grid.dx() * grid.dy();
    let mut initial = Neumaier::default();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            initial.add(0.5 * area * v0([grid.x(i), grid.y(j)]).norm_sq());
        }
    }
    let initial_energy = initial.value();
    let mut energy_trace = Vec::with_capacity(grid.nt);
    for k in 0..grid.nt {
        let t = grid.t(k);
        let mut acc = Neumaier::default();
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                acc.add(0.5 * area * v_field([grid.x(i), grid.y(j), t]).norm_sq());
            }
        }
        energy_trace.push((t, acc.value()));
    }
    let bound = initial_energy * (1.0 + rel_tol) + rel_tol;
    let admissible = energy_trace.iter().all(|&(_, e)| e <= bound);
    AdmissibilityReport {
        admissible,
        initial_energy,
        energy_trace,
    }
}
