use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Field, Point};
use crate::state::State;

pub const CSV_HEADER: &str = "x1,x2,t,v1,v2,m1,m2,sigma_a,sigma_b,e";

/// Central-difference residuals of the homogeneous linear system at `y`:
/// the two momentum components, `div v` and the energy balance.
pub fn linear_residual_fd<F: Field + ?Sized>(field: &F, y: Point, h: f64) -> [f64; 4] {
    let shift = |k: usize, s: f64| {
        let mut p = y;
        p[k] += s;
        field.eval(p)
    };
    let diff = |k: usize| (shift(k, h) - shift(k, -h)) * (0.5 / h);
    let (d1, d2, dt) = (diff(0), diff(1), diff(2));
    // div sigma for sigma = [[a, b], [b, -a]]
    let mom1 = dt.v.x1 + d1.sigma.a + d2.sigma.b + d1.e;
    let mom2 = dt.v.x2 + d1.sigma.b - d2.sigma.a + d2.e;
    let div_v = d1.v.x1 + d2.v.x2;
    let energy = dt.e + d1.m.x1 + d2.m.x2;
    [mom1, mom2, div_v, energy]
}

fn max_residual<F: Field + ?Sized>(field: &F, points: &[Point], h: f64) -> f64 {
    points
        .iter()
        .flat_map(|y| linear_residual_fd(field, *y, h))
        .fold(0.0, |a, r| a.max(r.abs()))
}

/// `(r(h), r(h/2), log2(r(h)/r(h/2)))` for the largest residual over
/// `points`.
pub fn fd_order<F: Field + ?Sized>(field: &F, points: &[Point], h: f64) -> (f64, f64, f64) {
    let r1 = max_residual(field, points, h);
    let r2 = max_residual(field, points, 0.5 * h);
    (r1, r2, (r1 / r2).log2())
}

/// Distance from `z` to the segment `[-zbar, zbar]`.
pub fn segment_distance(z: &State, zbar: &State) -> f64 {
    let n2 = zbar.norm_sq();
    if n2 == 0.0 {
        return z.norm();
    }
    let dot: f64 = z
        .to_array()
        .iter()
        .zip(zbar.to_array())
        .map(|(a, b)| a * b)
        .sum();
    let s = (dot / n2).clamp(-1.0, 1.0);
    (*z - *zbar * s).norm()
}

/// Tensor-product midpoint rule on a box. An axis with `lo == hi` is a
/// slice: one node and unit weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub lo: Point,
    pub hi: Point,
    pub n: [usize; 3],
}

impl QuadratureGrid {
    pub fn new(lo: Point, hi: Point, n: [usize; 3]) -> Self {
        Self { lo, hi, n }
    }

    /// At least `per_wavelength` nodes per period `2 pi / frequency` along
    /// each non-degenerate axis.
    pub fn resolving(lo: Point, hi: Point, frequency: f64, per_wavelength: usize) -> Self {
        let wl = std::f64::consts::TAU / frequency;
        let n = [0, 1, 2].map(|k| {
            if hi[k] == lo[k] {
                1
            } else {
                (((hi[k] - lo[k]) / wl) * per_wavelength as f64).ceil().max(2.0) as usize
            }
        });
        Self { lo, hi, n }
    }

    fn axis(&self, k: usize) -> (f64, f64) {
        if self.hi[k] == self.lo[k] {
            (self.lo[k], 0.0)
        } else {
            (self.lo[k], (self.hi[k] - self.lo[k]) / self.n[k] as f64)
        }
    }

    pub fn weight(&self) -> f64 {
        (0..3)
            .map(|k| {
                let (_, h) = self.axis(k);
                if h == 0.0 {
                    1.0
                } else {
                    h
                }
            })
            .product()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes in row-major order (`x1` slowest, `t` fastest).
    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        let ax = [self.axis(0), self.axis(1), self.axis(2)];
        let node = move |k: usize, i: usize| {
            let (lo, h) = ax[k];
            lo + (i as f64 + 0.5) * h
        };
        (0..self.n[0]).flat_map(move |i| {
            (0..self.n[1]).flat_map(move |j| {
                (0..self.n[2]).map(move |l| [node(0, i), node(1, j), node(2, l)])
            })
        })
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Smooth test functions of the displacement `d` from a centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestFunction {
    One,
    Linear,
    Cosine,
    Gaussian,
    Quadratic,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::One,
        TestFunction::Linear,
        TestFunction::Cosine,
        TestFunction::Gaussian,
        TestFunction::Quadratic,
    ];

    pub fn eval(self, d: Point) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Linear => 1.0 + d[0] - 0.5 * d[1] + 0.25 * d[2],
            TestFunction::Cosine => (1.3 * d[0] + 0.7 * d[1] + 0.9 * d[2]).cos(),
            TestFunction::Gaussian => (-(d[0] * d[0] + 2.0 * d[1] * d[1] + d[2] * d[2])).exp(),
            TestFunction::Quadratic => d[0] * d[1] - d[2] * d[2] + 0.5 * d[1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Largest distance of a sample to `[-zbar, zbar]`.
    pub sup_segment_distance: f64,
    /// `|int z phi|` for each [`TestFunction`].
    pub test_functionals: Vec<f64>,
    /// `int |z|^2`.
    pub mass: f64,
    /// `mass / |zbar|^2` (zero for `zbar = 0`).
    pub mass_ratio: f64,
    pub nodes: usize,
}

/// Samples the field on `grid` and reports the distance to the segment
/// `[-zbar, zbar]`, the test functionals against [`TestFunction::ALL`]
/// (centred at `center`) and the `L^2` mass.
pub fn verify_wave_properties<F: Field + ?Sized>(
    field: &F,
    zbar: &State,
    center: Point,
    grid: &QuadratureGrid,
) -> DiagnosticsReport {
    let w = grid.weight();
    let mut sup: f64 = 0.0;
    let mut mass = Neumaier::default();
    let mut funcs = [[Neumaier::default(); 7]; 5];
    for y in grid.nodes() {
        let z = field.eval(y);
        if z == State::ZERO {
            continue;
        }
        sup = sup.max(segment_distance(&z, zbar));
        mass.add(z.norm_sq() * w);
        let d = [y[0] - center[0], y[1] - center[1], y[2] - center[2]];
        let a = z.to_array();
        for (f, acc) in TestFunction::ALL.iter().zip(funcs.iter_mut()) {
            let phi = f.eval(d) * w;
            for c in 0..7 {
                acc[c].add(a[c] * phi);
            }
        }
    }
    let test_functionals = funcs
        .iter()
        .map(|acc| acc.iter().map(|s| s.value().powi(2)).sum::<f64>().sqrt())
        .collect();
    let mass = mass.value();
    let n2 = zbar.norm_sq();
    DiagnosticsReport {
        sup_segment_distance: sup,
        test_functionals,
        mass,
        mass_ratio: if n2 > 0.0 { mass / n2 } else { 0.0 },
        nodes: grid.len(),
    }
}

/// Writes samples as CSV with [`CSV_HEADER`]. Floats use the shortest
/// representation that round-trips.
pub fn write_csv<W: Write>(
    mut out: W,
    samples: impl IntoIterator<Item = (Point, State)>,
) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (y, z) in samples {
        let a = z.to_array();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            y[0], y[1], y[2], a[0], a[1], a[2], a[3], a[4], a[5], a[6]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{kernel_direction, State, SymTraceless2, Vec2};
    use crate::waves::{localized_wave, unlocalized_wave, WaveSpec};

    fn direction() -> State {
        State::on_constraint(Vec2::new(-0.1, 0.7), 0.2) - State::on_constraint(Vec2::new(0.4, -0.3), 0.2)
    }

    #[test]
    fn unlocalized_is_exact_solution() {
        let spec = WaveSpec::new(direction(), 16, [0.0; 3], 1.0, 0.3).unwrap();
        let w = unlocalized_wave(spec).unwrap();
        let pts = [[0.1, 0.2, 0.3], [-0.4, 0.05, 0.2]];
        let (r1, r2, order) = fd_order(&w, &pts, 0.2 / 16.0);
        assert!(r1 > r2);
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn localized_residual_converges_in_transition() {
        let spec = WaveSpec::new(direction(), 8, [0.0; 3], 0.5, 0.4).unwrap();
        let w = localized_wave(spec).unwrap();
        let pts = [[0.38, 0.0, 0.1], [-0.2, 0.3, -0.15], [0.0, 0.1, 0.42]];
        for p in pts {
            assert!(w.contains(p) && !w.in_plateau(p));
        }
        let (_, _, order) = fd_order(&w, &pts, 0.1 / 8.0);
        assert!(order > 1.9, "order {order}");
    }

    #[test]
    fn zero_direction_gives_zero_diagnostics() {
        let f = |_y: Point| State::ZERO;
        let g = QuadratureGrid::new([-1.0; 3], [1.0; 3], [4, 4, 4]);
        let r = verify_wave_properties(&f, &State::ZERO, [0.0; 3], &g);
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.sup_segment_distance, 0.0);
        assert!(r.test_functionals.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn quadrature_weights() {
        let g = QuadratureGrid::new([0.0, 0.0, 0.5], [2.0, 1.0, 0.5], [4, 2, 7]);
        assert_eq!(g.n, [4, 2, 7]);
        assert!((g.weight() - 0.25).abs() < 1e-15);
        let total: f64 = g.nodes().map(|_| g.weight()).sum::<f64>();
        // slice axis contributes a factor one per node
        assert!((total - 7.0 * 2.0).abs() < 1e-12);
        let ts: Vec<f64> = g.nodes().take(2).map(|p| p[2]).collect();
        assert_eq!(ts, vec![0.5, 0.5]);
    }

    #[test]
    fn segment_distance_examples() {
        let zbar = State::new(Vec2::new(1.0, 0.0), Vec2::ZERO, SymTraceless2::ZERO, 0.0);
        assert_eq!(segment_distance(&(zbar * 0.3), &zbar), 0.0);
        assert_eq!(segment_distance(&(zbar * 3.0), &zbar), 2.0);
        let _ = kernel_direction(&zbar).unwrap();
    }

    #[test]
    fn csv_round_trip() {
        let z = State::new(Vec2::new(0.1, 1.0 / 3.0), Vec2::new(-2e-17, 5.0), SymTraceless2::new(1e300, 0.0), 7.25);
        let mut buf = Vec::new();
        write_csv(&mut buf, [([0.5, 0.25, 1.0 / 7.0], z)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals[2], 1.0 / 7.0);
        assert_eq!(State::from_array(vals[3..].try_into().unwrap()), z);
    }
}
