//! Localized plane waves: exact solutions of the homogeneous linear
//! system oscillating along a wave-cone direction.
//!
//! Fields are evaluated through potentials. A divergence-free
//! `W : R^3 -> R^3` on `(x1, x2, t)` gives
//!
//! ```text
//! v     = (d2 W3, -d1 W3) / 2
//! e     = (d2 W1 - d1 W2) / 2
//! sigma = ((d2 W1 + d1 W2) / 2, (d2 W2 - d1 W1) / 2)
//! m     = (dt W2, -dt W1) / 2 + grad^perp theta
//! ```
//!
//! and every such field solves the system. The wave uses
//! `W = curl(chi omega)` with `omega = a S(phi) / N^2`,
//! `theta = chi kappa S'(phi) / N`, `S = -cos` and `phi = N (xi, c) . y`.

mod cutoff;
mod diagnostics;

pub use cutoff::{smoothstep, Cutoff, Jet};
pub use diagnostics::{
    fd_order, linear_residual_fd, segment_distance, verify_wave_properties, write_csv,
    DiagnosticsReport, Neumaier, QuadratureGrid, TestFunction, CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{kernel_direction, kernel_residual, State, Vec2};
use crate::tolerances;

pub use crate::grid::Point;

/// Anything that can be sampled as a state-valued field.
pub trait Field {
    fn eval(&self, y: Point) -> State;
}

impl<F: Fn(Point) -> State> Field for F {
    fn eval(&self, y: Point) -> State {
        self(y)
    }
}

/// `sgn` with `sgn(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `kappa = -(c^2 C / 2 - m . xi^perp)`.
    pub theta_coeff: f64,
    /// `-((xi, c) x (A, B, C)) / |(xi, c)|^2`.
    pub gauge_vector: [f64; 3],
}

impl WaveCoefficients {
    pub fn w0(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

fn cross(u: [f64; 3], w: [f64; 3]) -> [f64; 3] {
    [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ]
}

fn dot3(u: [f64; 3], w: [f64; 3]) -> f64 {
    u[0] * w[0] + u[1] * w[1] + u[2] * w[2]
}

/// `C = -2 |v| sgn(xi^perp . v)`, `(A, B) = -c C xi - 2 e xi^perp`.
pub fn wave_coefficients(zbar: &State, xi: Vec2, c: f64) -> Result<WaveCoefficients> {
    let residual = kernel_residual(zbar, xi, c);
    let scale = 1.0 + zbar.norm();
    if residual > 1e-9 * scale || (xi.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::NotInKernel { residual });
    }
    let xp = xi.perp();
    let cc = -2.0 * zbar.v.norm() * sgn(xp.dot(zbar.v));
    let ab = xi * (-c * cc) - xp * (2.0 * zbar.e);
    let w0 = [ab.x1, ab.x2, cc];
    let eta = [xi.x1, xi.x2, c];
    let n2 = dot3(eta, eta);
    let g = cross(eta, w0);
    Ok(WaveCoefficients {
        a: ab.x1,
        b: ab.x2,
        c: cc,
        theta_coeff: -(c * c * cc / 2.0 - zbar.m.dot(xp)),
        gauge_vector: [-g[0] / n2, -g[1] / n2, -g[2] / n2],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    pub direction: State,
    pub xi: Vec2,
    pub c: f64,
    pub frequency: u32,
    pub center: Point,
    /// Semi-axes of the ellipsoidal support, or `(r, r, _)` for the slab.
    pub radii: [f64; 3],
    pub cutoff_margin: f64,
    /// When set, the support is `|x - x0| < r, |t - t0| < time_slab`.
    pub time_slab: Option<f64>,
    /// Measure spatial displacements on the unit torus.
    pub torus: bool,
    /// Shape of the cutoff when `time_slab` is unset.
    #[serde(default)]
    pub shape: CutoffShape,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    #[default]
    Ellipsoid,
    /// Product of one-dimensional profiles over the box of half-widths
    /// `radii`.
    Box,
}

impl WaveSpec {
    /// Spec for a direction with its canonical kernel vector.
    pub fn new(direction: State, frequency: u32, center: Point, radius: f64, margin: f64) -> Result<Self> {
        let k = kernel_direction(&direction)?;
        Ok(Self {
            direction,
            xi: k.xi,
            c: k.c,
            frequency,
            center,
            radii: [radius; 3],
            cutoff_margin: margin,
            time_slab: None,
            torus: false,
            shape: CutoffShape::Ellipsoid,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.frequency == 0 {
            return Err(Error::PreconditionViolated("frequency must be >= 1".into()));
        }
        if !(self.cutoff_margin > 0.0 && self.cutoff_margin < 1.0) {
            return Err(Error::PreconditionViolated(
                "cutoff margin must lie in (0, 1)".into(),
            ));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::PreconditionViolated("radii must be positive".into()));
        }
        if let Some(s) = self.time_slab {
            if !(s > 0.0) {
                return Err(Error::PreconditionViolated("time slab must be positive".into()));
            }
            if self.xi.norm() <= tolerances::LINALG {
                return Err(Error::DegenerateKernel);
            }
        }
        Ok(())
    }

    pub fn cutoff(&self) -> Cutoff {
        match self.time_slab {
            Some(half_width) => Cutoff::Slab {
                radius: self.radii[0],
                half_width,
                margin: self.cutoff_margin,
            },
            None => match self.shape {
                CutoffShape::Ellipsoid => Cutoff::Ellipsoid {
                    radii: self.radii,
                    margin: self.cutoff_margin,
                },
                CutoffShape::Box => Cutoff::Box {
                    radii: self.radii,
                    margin: self.cutoff_margin,
                },
            },
        }
    }

    /// Displacement `y - center`, wrapped to the nearest image in space on
    /// the torus.
    pub fn displacement(&self, y: Point) -> Point {
        let mut d = [y[0] - self.center[0], y[1] - self.center[1], y[2] - self.center[2]];
        if self.torus {
            d[0] -= d[0].round();
            d[1] -= d[1].round();
        }
        d
    }
}

/// `zbar S''(N (xi, c) . y)`, the wave before localization.
#[derive(Clone, Copy, Debug)]
pub struct UnlocalizedWave {
    pub spec: WaveSpec,
}

pub fn unlocalized_wave(spec: WaveSpec) -> Result<UnlocalizedWave> {
    spec.validate()?;
    wave_coefficients(&spec.direction, spec.xi, spec.c)?;
    Ok(UnlocalizedWave { spec })
}

impl UnlocalizedWave {
    pub fn phase(&self, y: Point) -> f64 {
        let d = self.spec.displacement(y);
        let n = self.spec.frequency as f64;
        n * (self.spec.xi.x1 * d[0] + self.spec.xi.x2 * d[1] + self.spec.c * d[2])
    }
}

impl Field for UnlocalizedWave {
    fn eval(&self, y: Point) -> State {
        self.spec.direction * self.phase(y).cos()
    }
}

/// `D(chi omega) + D^(chi theta)`, supported in the cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedWave {
    pub spec: WaveSpec,
    pub coeffs: WaveCoefficients,
    cutoff: Cutoff,
}

pub fn localized_wave(spec: WaveSpec) -> Result<LocalizedWave> {
    spec.validate()?;
    let coeffs = wave_coefficients(&spec.direction, spec.xi, spec.c)?;
    Ok(LocalizedWave {
        spec,
        coeffs,
        cutoff: spec.cutoff(),
    })
}

/// [`localized_wave`] with the space-time slab cutoff of half-width
/// `spec.time_slab`.
pub fn time_slab_wave(spec: WaveSpec) -> Result<LocalizedWave> {
    if spec.time_slab.is_none() {
        return Err(Error::PreconditionViolated("time_slab must be set".into()));
    }
    localized_wave(spec)
}

impl LocalizedWave {
    /// The same wave with `direction` multiplied by `s`. The field is
    /// linear in the direction for fixed `(xi, c)`.
    pub fn scaled(&self, s: f64) -> LocalizedWave {
        let k = &self.coeffs;
        LocalizedWave {
            spec: WaveSpec {
                direction: self.spec.direction * s,
                ..self.spec
            },
            coeffs: WaveCoefficients {
                a: k.a * s,
                b: k.b * s,
                c: k.c * s,
                theta_coeff: k.theta_coeff * s,
                gauge_vector: k.gauge_vector.map(|g| g * s),
            },
            cutoff: self.cutoff,
        }
    }

    pub fn contains(&self, y: Point) -> bool {
        self.cutoff.contains(self.spec.displacement(y))
    }

    /// Axis-aligned box `(lo, hi)` enclosing the support, unwrapped.
    pub fn support_box(&self) -> (Point, Point) {
        let h = self.cutoff.half_extent();
        let c = self.spec.center;
        (
            [c[0] - h[0], c[1] - h[1], c[2] - h[2]],
            [c[0] + h[0], c[1] + h[1], c[2] + h[2]],
        )
    }

    /// True where the cutoff is identically one, so the field equals
    /// `zbar S''(phi)`.
    pub fn in_plateau(&self, y: Point) -> bool {
        self.cutoff.in_plateau(self.spec.displacement(y))
    }

    pub fn phase(&self, y: Point) -> f64 {
        let d = self.spec.displacement(y);
        let n = self.spec.frequency as f64;
        n * (self.spec.xi.x1 * d[0] + self.spec.xi.x2 * d[1] + self.spec.c * d[2])
    }
}

impl Field for LocalizedWave {
    fn eval(&self, y: Point) -> State {
        let d = self.spec.displacement(y);
        let chi = self.cutoff.jet(d);
        if chi.value == 0.0 && chi.grad == [0.0; 3] {
            return State::ZERO;
        }
        let n = self.spec.frequency as f64;
        let eta = [self.spec.xi.x1, self.spec.xi.x2, self.spec.c];
        let phi = n * dot3(eta, d);
        let (sn, cs) = phi.sin_cos();
        // S = -cos, S' = sin, S'' = cos
        let (s0, s1, s2) = (-cs, sn, cs);
        let w0 = self.coeffs.w0();
        let a = self.coeffs.gauge_vector;
        let kappa = self.coeffs.theta_coeff;

        let omega = a.map(|ai| ai * s0 / (n * n));
        let curl_omega = w0.map(|wi| wi * s1 / n);

        // J[i][k] = d_k W_i for W = chi curl(omega) + grad(chi) x omega
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let d_omega = a.map(|ai| ai * s1 * eta[k] / n);
            let d_grad = [chi.hess[0][k], chi.hess[1][k], chi.hess[2][k]];
            let t1 = cross(d_grad, omega);
            let t2 = cross(chi.grad, d_omega);
            for i in 0..3 {
                jac[i][k] = chi.grad[k] * curl_omega[i]
                    + chi.value * w0[i] * s2 * eta[k]
                    + t1[i]
                    + t2[i];
            }
        }
        let theta = kappa * s1 / n;
        let d_theta = [0, 1, 2].map(|k| chi.grad[k] * theta + chi.value * kappa * s2 * eta[k]);

        State {
            v: Vec2::new(0.5 * jac[2][1], -0.5 * jac[2][0]),
            m: Vec2::new(0.5 * jac[1][2] - d_theta[1], -0.5 * jac[0][2] + d_theta[0]),
            sigma: crate::state::SymTraceless2::new(
                0.5 * (jac[0][1] + jac[1][0]),
                0.5 * (jac[1][1] - jac[0][0]),
            ),
            e: 0.5 * (jac[0][1] - jac[1][0]),
        }
    }
}
