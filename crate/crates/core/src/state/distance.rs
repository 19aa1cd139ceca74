use super::types::{Pressure, State, Vec2};

/// Grid-plus-refinement minimiser of `|z - k(a)|` over velocities `a`.
///
/// The coarse stage evaluates a `grid x grid` lattice on the square
/// enclosing the search disk; the best few lattice points are then
/// refined by `refine_steps` damped Gauss-Newton steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistSearch {
    pub grid: usize,
    pub refine_steps: usize,
}

impl Default for DistSearch {
    fn default() -> Self {
        Self {
            grid: 256,
            refine_steps: 50,
        }
    }
}

const STARTS: usize = 4;

impl DistSearch {
    pub fn new(grid: usize, refine_steps: usize) -> Self {
        Self { grid, refine_steps }
    }

    pub fn dist(&self, z: &State, p: Pressure, gamma: Option<f64>) -> f64 {
        self.nearest(z, p, gamma).1.sqrt()
    }

    /// Nearest velocity and the squared distance.
    pub fn nearest(&self, z: &State, p: Pressure, gamma: Option<f64>) -> (Vec2, f64) {
        let cap = gamma.map(|g| (2.0 * g.max(0.0)).sqrt());
        // any minimiser satisfies |a| <= max(4|v|, 2 sqrt(2|e|), 2 |m|^(1/3)) up to
        // lower order; the floor of 4 covers small states
        let mut radius = 4.0f64
            .max(4.0 * z.v.norm())
            .max(2.0 * (2.0 * z.e.abs()).sqrt())
            .max(2.0 * z.m.norm().cbrt());
        if let Some(c) = cap {
            radius = radius.min(c);
        }
        let f = |a: Vec2| objective(z, p, a);
        let inside = |a: Vec2| a.norm() <= radius;

        let n = self.grid.max(2);
        let h = 2.0 * radius / (n - 1) as f64;
        let mut best: Vec<(f64, Vec2)> = Vec::with_capacity(STARTS + 1);
        let consider = |a: Vec2, best: &mut Vec<(f64, Vec2)>| {
            let v = f(a);
            if best.len() < STARTS || v < best[best.len() - 1].0 {
                // keep starts at least two cells apart
                if let Some(pos) = best.iter().position(|(_, b)| (*b - a).norm() < 2.0 * h) {
                    if v < best[pos].0 {
                        best[pos] = (v, a);
                    }
                } else {
                    best.push((v, a));
                }
                best.sort_by(|x, y| x.0.total_cmp(&y.0));
                best.truncate(STARTS);
            }
        };
        consider(Vec2::ZERO, &mut best);
        for i in 0..n {
            for j in 0..n {
                let a = Vec2::new(-radius + i as f64 * h, -radius + j as f64 * h);
                if inside(a) {
                    consider(a, &mut best);
                }
            }
        }

        let project = |a: Vec2| {
            let r = a.norm();
            if r > radius {
                a * (radius / r)
            } else {
                a
            }
        };
        let mut out = (best[0].1, best[0].0);
        for &(v0, a0) in &best {
            let (a, v) = refine(z, p, a0, v0, self.refine_steps, &project);
            if v < out.1 {
                out = (a, v);
            }
        }
        out
    }
}

/// Levenberg-Marquardt on the residual `k(a) - z`, projected onto the disk.
fn refine(
    z: &State,
    p: Pressure,
    mut a: Vec2,
    mut v: f64,
    steps: usize,
    project: &impl Fn(Vec2) -> Vec2,
) -> (Vec2, f64) {
    let mut lambda = 1e-3;
    for _ in 0..steps {
        let k = State::on_constraint(a, p.0);
        let r = (k - *z).to_array();
        let jac = jacobian(a, p.0);
        let (mut g0, mut g1) = (0.0, 0.0);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for i in 0..r.len() {
            g0 += jac[i][0] * r[i];
            g1 += jac[i][1] * r[i];
            h00 += jac[i][0] * jac[i][0];
            h01 += jac[i][0] * jac[i][1];
            h11 += jac[i][1] * jac[i][1];
        }
        if g0 == 0.0 && g1 == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..20 {
            let (d00, d11) = (h00 + lambda * (1.0 + h00), h11 + lambda * (1.0 + h11));
            let det = d00 * d11 - h01 * h01;
            let step = Vec2::new(-(d11 * g0 - h01 * g1) / det, -(d00 * g1 - h01 * g0) / det);
            let cand = project(a + step);
            let vc = objective(z, p, cand);
            if vc < v {
                a = cand;
                v = vc;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    (a, v)
}

/// Derivative of `k(a)` in the flattened order, one row per component.
fn jacobian(a: Vec2, p: f64) -> [[f64; 2]; 7] {
    let s = 0.5 * a.norm_sq() + p;
    [
        [1.0, 0.0],
        [0.0, 1.0],
        [a.x1 * a.x1 + s, a.x1 * a.x2],
        [a.x1 * a.x2, a.x2 * a.x2 + s],
        [a.x1, -a.x2],
        [a.x2, a.x1],
        [a.x1, a.x2],
    ]
}

fn objective(z: &State, p: Pressure, a: Vec2) -> f64 {
    (*z - State::on_constraint(a, p.0)).norm_sq()
}

/// Euclidean distance from `z` to `K_p`, or to its energy cap
/// `{e <= gamma}` when `gamma` is given, with the default search.
pub fn dist_to_k(z: &State, p: Pressure, gamma: Option<f64>) -> f64 {
    DistSearch::default().dist(z, p, gamma)
}
