use std::f64::consts::TAU;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{SubSample, Subsolution};
use crate::error::{Error, Result};
use crate::grid::{wrap, Point};
use crate::state::{Pressure, State, Vec2};

/// Shear profile `f` of a velocity `(f(x2), 0)` on `[-1/2, 1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ShearProfile {
    /// `amplitude sin(2 pi k x2)`.
    Sine { amplitude: f64, k: u32 },
    /// `sum_k cos[k-1] cos(2 pi k x2) + sin[k-1] sin(2 pi k x2)`, `k >= 1`.
    Fourier { cos: Vec<f64>, sin: Vec<f64> },
    /// `sgn(x2)`, the vortex-sheet profile.
    Step,
    /// Trigonometric interpolant of equispaced samples at
    /// `x2 = -1/2 + j / n`; the mean is discarded.
    Samples { values: Vec<f64> },
}

impl ShearProfile {
    pub fn eval(&self, x2: f64) -> f64 {
        let x2 = wrap(x2);
        match self {
            ShearProfile::Sine { amplitude, k } => amplitude * (TAU * *k as f64 * x2).sin(),
            ShearProfile::Fourier { cos, sin } => fourier_sum(cos, sin, x2),
            ShearProfile::Step => {
                if x2 >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ShearProfile::Samples { values } => {
                let (c, s) = sample_coefficients(values);
                fourier_sum(&c, &s, x2)
            }
        }
    }

    /// `int f^2 dx2`.
    pub fn norm_sq(&self) -> f64 {
        match self {
            ShearProfile::Sine { amplitude, k } => {
                if *k == 0 {
                    0.0
                } else {
                    amplitude * amplitude / 2.0
                }
            }
            ShearProfile::Fourier { cos, sin } => {
                cos.iter().chain(sin).map(|c| c * c).sum::<f64>() / 2.0
            }
            ShearProfile::Step => 1.0,
            ShearProfile::Samples { values } => {
                let (c, s) = sample_coefficients(values);
                c.iter().chain(&s).map(|x| x * x).sum::<f64>() / 2.0
            }
        }
    }

    /// Cosine and sine coefficients for `k = 1..=k_max`.
    pub fn coefficients(&self, k_max: usize) -> (Vec<f64>, Vec<f64>) {
        let (mut c, mut s) = match self {
            ShearProfile::Sine { amplitude, k } => {
                let mut s = vec![0.0; k_max];
                let k = *k as usize;
                if k >= 1 && k <= k_max {
                    s[k - 1] = *amplitude;
                }
                (vec![0.0; k_max], s)
            }
            ShearProfile::Fourier { cos, sin } => (cos.clone(), sin.clone()),
            ShearProfile::Step => {
                // b_k = 2 (1 - (-1)^k) / (pi k)
                let s = (1..=k_max)
                    .map(|k| {
                        if k % 2 == 1 {
                            4.0 / (std::f64::consts::PI * k as f64)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (vec![0.0; k_max], s)
            }
            ShearProfile::Samples { values } => sample_coefficients(values),
        };
        c.resize(k_max, 0.0);
        s.resize(k_max, 0.0);
        (c, s)
    }

    /// `int (f - f_K)^2 dx2` for the truncation to `k <= k_max`, via
    /// Parseval.
    pub fn tail(&self, k_max: usize) -> f64 {
        let (c, s) = self.coefficients(k_max);
        let kept: f64 = c.iter().chain(&s).map(|x| x * x).sum::<f64>() / 2.0;
        (self.norm_sq() - kept).max(0.0)
    }

    pub fn truncate(&self, k_max: usize) -> ShearProfile {
        let (cos, sin) = self.coefficients(k_max);
        ShearProfile::Fourier { cos, sin }
    }
}

fn fourier_sum(cos: &[f64], sin: &[f64], x2: f64) -> f64 {
    let mut f = 0.0;
    for (i, c) in cos.iter().enumerate() {
        f += c * (TAU * (i + 1) as f64 * x2).cos();
    }
    for (i, s) in sin.iter().enumerate() {
        f += s * (TAU * (i + 1) as f64 * x2).sin();
    }
    f
}

/// Real Fourier coefficients of equispaced samples, `k = 1..n/2`, with
/// the Nyquist mode halved so the interpolant is real.
fn sample_coefficients(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    if n == 0 {
        return (vec![], vec![]);
    }
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let kmax = n / 2;
    let mut c = Vec::with_capacity(kmax);
    let mut s = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        // nodes start at -1/2: shift by exp(i pi k)
        let shift = if k % 2 == 0 { 1.0 } else { -1.0 };
        let z = buf[k] * (shift / n as f64);
        let w = if 2 * k == n { 1.0 } else { 2.0 };
        c.push(w * z.re);
        s.push(-w * z.im);
    }
    (c, s)
}

/// Continuous dissipation density on `T^2 x [0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mu", rename_all = "snake_case")]
pub enum Dissipation {
    Zero,
    Constant { value: f64 },
    /// `-amplitude (1 + cos(2 pi k . x)) / 2`.
    Cosine { amplitude: f64, k: [i32; 2] },
    /// `-amplitude t / T`.
    Ramp { amplitude: f64, horizon: f64 },
    /// Node values at `x = -1/2 + i/nx`, `y = -1/2 + j/ny`,
    /// `t = k T/(nt - 1)`, index `(i ny + j) nt + k`; bilinear in space
    /// (periodic), linear in time.
    Table {
        nx: usize,
        ny: usize,
        nt: usize,
        horizon: f64,
        values: Vec<f64>,
    },
}

impl Dissipation {
    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        match self {
            Dissipation::Zero => 0.0,
            Dissipation::Constant { value } => *value,
            Dissipation::Cosine { amplitude, k } => {
                let ph = TAU * (k[0] as f64 * x[0] + k[1] as f64 * x[1]);
                -amplitude * (1.0 + ph.cos()) / 2.0
            }
            Dissipation::Ramp { amplitude, horizon } => -amplitude * t / horizon,
            Dissipation::Table {
                nx,
                ny,
                nt,
                horizon,
                values,
            } => {
                let (nx, ny, nt) = (*nx, *ny, *nt);
                let locate = |u: f64, n: usize| {
                    let s = (wrap(u) + 0.5) * n as f64;
                    let i = (s.floor() as usize).min(n - 1);
                    (i, (i + 1) % n, s - i as f64)
                };
                let (i0, i1, fx) = locate(x[0], nx);
                let (j0, j1, fy) = locate(x[1], ny);
                let s = if nt > 1 {
                    (t / horizon).clamp(0.0, 1.0) * (nt - 1) as f64
                } else {
                    0.0
                };
                let k0 = (s.floor() as usize).min(nt.saturating_sub(2));
                let k1 = (k0 + 1).min(nt - 1);
                let ft = s - k0 as f64;
                let at = |i: usize, j: usize| {
                    let a = values[(i * ny + j) * nt + k0];
                    let b = values[(i * ny + j) * nt + k1];
                    a + (b - a) * ft
                };
                let lo = at(i0, j0) * (1.0 - fy) + at(i0, j1) * fy;
                let hi = at(i1, j0) * (1.0 - fy) + at(i1, j1) * fy;
                lo * (1.0 - fx) + hi * fx
            }
        }
    }

    /// Checks `-delta/T < mu <= 0`. Closed forms are checked through their
    /// extreme values; tables through their nodes, which bound the
    /// interpolant.
    pub fn validate(&self, delta: f64, horizon: f64) -> Result<()> {
        let lo = -delta / horizon;
        let check = |value: f64, x: [f64; 2], t: f64| {
            if value > 0.0 || value <= lo {
                Err(Error::MuOutOfBand { value, x, t })
            } else {
                Ok(())
            }
        };
        match self {
            Dissipation::Zero => Ok(()),
            Dissipation::Constant { value } => check(*value, [0.0; 2], 0.0),
            // the range is [-amplitude, 0]
            Dissipation::Cosine { amplitude, .. } => check(-amplitude, [0.0; 2], 0.0),
            Dissipation::Ramp { amplitude, horizon: h } => {
                check(-amplitude * horizon / h, [0.0; 2], horizon)?;
                check(0.0, [0.0; 2], 0.0)
            }
            Dissipation::Table {
                nx,
                ny,
                nt,
                horizon: h,
                values,
            } => {
                if values.len() != nx * ny * nt || *nx == 0 || *ny == 0 || *nt == 0 {
                    return Err(Error::Config(format!(
                        "dissipation table has {} values, expected {}",
                        values.len(),
                        nx * ny * nt
                    )));
                }
                for i in 0..*nx {
                    for j in 0..*ny {
                        for k in 0..*nt {
                            let x = [-0.5 + i as f64 / *nx as f64, -0.5 + j as f64 / *ny as f64];
                            let t = if *nt > 1 {
                                k as f64 * h / (*nt - 1) as f64
                            } else {
                                0.0
                            };
                            check(values[(i * ny + j) * nt + k], x, t)?;
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// `int_0^t mu(x, s) ds` by adaptive Simpson quadrature.
    pub fn time_integral(&self, x: [f64; 2], t: f64) -> f64 {
        match self {
            Dissipation::Zero => 0.0,
            Dissipation::Constant { value } => value * t,
            _ => adaptive_simpson(&|s| self.eval(x, s), 0.0, t, 1e-10, 40),
        }
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySubsolutionSpec {
    pub shear: ShearProfile,
    pub delta: f64,
    pub mu: Dissipation,
    pub horizon: f64,
}

/// Subsolution over a stationary shear `(f(x2), 0)` with zero pressure:
/// `e = f^2/2 + delta + int_0^t mu`, `p = -delta - int_0^t mu`,
/// `m = (f^2/2) v`, `sigma = (v (x) v)°`. The turbulent zone is the whole
/// space-time domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySubsolution {
    pub spec: DensitySubsolutionSpec,
}

pub fn density_subsolution(spec: DensitySubsolutionSpec) -> Result<DensitySubsolution> {
    if !(spec.delta > 0.0) || !(spec.horizon > 0.0) {
        return Err(Error::Config("delta and horizon must be positive".into()));
    }
    spec.mu.validate(spec.delta, spec.horizon)?;
    Ok(DensitySubsolution { spec })
}

impl Subsolution for DensitySubsolution {
    fn sample(&self, y: Point) -> SubSample {
        let f = self.spec.shear.eval(y[1]);
        let v = Vec2::new(f, 0.0);
        let k = 0.5 * f * f;
        let x = [y[0], y[1]];
        let integral = self.spec.mu.time_integral(x, y[2].max(0.0));
        SubSample {
            state: State::new(v, v * k, v.outer(v).traceless(), k + self.spec.delta + integral),
            pressure: Pressure(-self.spec.delta - integral),
            mu: self.spec.mu.eval(x, y[2]),
        }
    }

    fn in_zone(&self, y: Point) -> bool {
        (0.0..=self.spec.horizon).contains(&y[2])
    }

    fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    fn initial_velocity(&self, x: [f64; 2]) -> Vec2 {
        Vec2::new(self.spec.shear.eval(x[1]), 0.0)
    }

    fn initial_energy(&self, x: [f64; 2]) -> f64 {
        // the subsolution starts strictly inside the hull
        self.sample([x[0], x[1], 0.0]).state.e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{flux_defect, hull_margin};

    fn spec(mu: Dissipation) -> DensitySubsolutionSpec {
        DensitySubsolutionSpec {
            shear: ShearProfile::Sine { amplitude: 0.8, k: 1 },
            delta: 0.1,
            mu,
            horizon: 1.0,
        }
    }

    #[test]
    fn zero_dissipation_has_constant_margin() {
        let d = density_subsolution(spec(Dissipation::Zero)).unwrap();
        for y in [[0.1, 0.2, 0.0], [-0.3, 0.4, 0.7]] {
            let s = d.sample(y);
            assert!((hull_margin(&s.state) - 0.1).abs() < 1e-15);
            assert!(flux_defect(&s.state, s.pressure).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_dissipation_halves_margin() {
        let d = density_subsolution(spec(Dissipation::Constant { value: -0.05 })).unwrap();
        let s = d.sample([0.0, 0.1, 1.0]);
        assert!((hull_margin(&s.state) - 0.05).abs() < 1e-15);
        assert!((s.state.e + s.pressure.0 - 0.5 * s.state.v.norm_sq()).abs() < 1e-15);
    }

    #[test]
    fn out_of_band_rejected() {
        assert!(matches!(
            density_subsolution(spec(Dissipation::Constant { value: -0.1 })),
            Err(Error::MuOutOfBand { .. })
        ));
        assert!(matches!(
            density_subsolution(spec(Dissipation::Constant { value: 0.01 })),
            Err(Error::MuOutOfBand { .. })
        ));
        let table = Dissipation::Table {
            nx: 2,
            ny: 1,
            nt: 2,
            horizon: 1.0,
            values: vec![0.0, -0.05, -0.02, 0.001],
        };
        match density_subsolution(spec(table)) {
            Err(Error::MuOutOfBand { value, x, t }) => {
                assert_eq!(value, 0.001);
                assert_eq!(x, [0.0, -0.5]);
                assert_eq!(t, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_interpolation_and_integral() {
        let table = Dissipation::Table {
            nx: 2,
            ny: 2,
            nt: 3,
            horizon: 1.0,
            values: vec![
                0.0, -0.02, -0.04, //
                0.0, -0.02, -0.04, //
                0.0, -0.02, -0.04, //
                0.0, -0.02, -0.04,
            ],
        };
        assert!((table.eval([0.1, 0.3], 0.25) + 0.01).abs() < 1e-15);
        // mu = -0.04 t, integral -0.02 t^2
        assert!((table.time_integral([0.2, -0.1], 0.8) + 0.02 * 0.64).abs() < 1e-12);
        let ramp = Dissipation::Ramp { amplitude: 0.04, horizon: 1.0 };
        assert!((ramp.time_integral([0.0; 2], 0.8) + 0.02 * 0.64).abs() < 1e-12);
    }

    #[test]
    fn adaptive_simpson_handles_kinks() {
        let f = |s: f64| (s - 0.3).abs();
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-10, 40);
        assert!((v - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn step_profile_tail() {
        let w = ShearProfile::Step;
        // sum over odd k > K of (4/(pi k))^2 / 2
        let direct: f64 = (6..200_000)
            .filter(|k| k % 2 == 1)
            .map(|k| 8.0 / (std::f64::consts::PI * k as f64).powi(2))
            .sum();
        assert!((w.tail(5) - direct).abs() < 1e-5);
        assert!(w.tail(1) > w.tail(3));
        let f3 = w.truncate(3);
        assert!((f3.eval(0.25) - (4.0 / std::f64::consts::PI) * (1.0 - 1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn sample_profile_round_trip() {
        let n = 16;
        let values: Vec<f64> = (0..n)
            .map(|j| {
                let x = -0.5 + j as f64 / n as f64;
                0.3 * (TAU * x).sin() - 0.2 * (TAU * 3.0 * x).cos()
            })
            .collect();
        let p = ShearProfile::Samples { values: values.clone() };
        for (j, v) in values.iter().enumerate() {
            assert!((p.eval(-0.5 + j as f64 / n as f64) - v).abs() < 1e-12);
        }
        assert!((p.norm_sq() - (0.09 + 0.04) / 2.0).abs() < 1e-12);
        assert!(p.tail(3) < 1e-12);
    }
}
