//! Compactly supported cutoffs with closed-form gradient and Hessian.
//!
//! Transitions use `1 - S5(r)` where `S5` is the degree-11 smoothstep
//! whose first five derivatives vanish at both ends, so the cutoff is
//! `C^5`. Central differences of the localized fields then converge at
//! second order across the transition layer.

use serde::{Deserialize, Serialize};

/// Value, gradient and Hessian of a scalar function of `(x1, x2, t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl Jet {
    pub const ONE: Jet = Jet {
        value: 1.0,
        grad: [0.0; 3],
        hess: [[0.0; 3]; 3],
    };
    pub const ZERO: Jet = Jet {
        value: 0.0,
        grad: [0.0; 3],
        hess: [[0.0; 3]; 3],
    };

    fn product(a: &Jet, b: &Jet) -> Jet {
        let mut out = Jet {
            value: a.value * b.value,
            ..Jet::ZERO
        };
        for i in 0..3 {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
            for j in 0..3 {
                out.hess[i][j] = a.hess[i][j] * b.value
                    + a.grad[i] * b.grad[j]
                    + a.grad[j] * b.grad[i]
                    + a.value * b.hess[i][j];
            }
        }
        out
    }
}

/// Coefficients of `S5(x) = x^6 sum_k C(5+k,k) C(11,5-k) (-x)^k`,
/// lowest degree first.
fn smoothstep_coeffs() -> [f64; 12] {
    fn binom(n: u64, k: u64) -> f64 {
        (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
    }
    let mut c = [0.0; 12];
    for k in 0..=5u64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[6 + k as usize] = sign * binom(5 + k, k) * binom(11, 5 - k);
    }
    c
}

/// `(S5, S5', S5'')` at `x`, clamped to `[0, 1]`.
pub fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    if x > 0.5 {
        // S(x) = 1 - S(1 - x) keeps the cancellation near x = 1 small
        let (p, dp, ddp) = smoothstep(1.0 - x);
        return (1.0 - p, dp, -ddp);
    }
    let c = smoothstep_coeffs();
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for k in (0..12).rev() {
        ddp = ddp * x + dp * 2.0;
        dp = dp * x + p;
        p = p * x + c[k];
    }
    (p, dp, ddp)
}

/// Radial profile: 1 on `s <= 1 - eps`, 0 on `s >= 1`. Returns
/// `(chi, chi', chi'')` in `s`.
fn profile(s: f64, eps: f64) -> (f64, f64, f64) {
    let r = (s - (1.0 - eps)) / eps;
    let (p, dp, ddp) = smoothstep(r);
    (1.0 - p, -dp / eps, -ddp / (eps * eps))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    /// Ellipsoid `sum (d_i / r_i)^2 < 1` in `(x1, x2, t)`.
    Ellipsoid { radii: [f64; 3], margin: f64 },
    /// Product of a disk of radius `radius` in space and the interval
    /// `|t| < half_width`.
    Slab {
        radius: f64,
        half_width: f64,
        margin: f64,
    },
    /// Box `|d_i| < r_i`, a product of one-dimensional profiles.
    Box { radii: [f64; 3], margin: f64 },
}

impl Cutoff {
    /// Open support test on the displacement from the centre.
    pub fn contains(&self, d: [f64; 3]) -> bool {
        match *self {
            Cutoff::Ellipsoid { radii, .. } => {
                (0..3).map(|i| (d[i] / radii[i]).powi(2)).sum::<f64>() < 1.0
            }
            Cutoff::Slab {
                radius, half_width, ..
            } => d[0].hypot(d[1]) < radius && d[2].abs() < half_width,
            Cutoff::Box { radii, .. } => (0..3).all(|i| d[i].abs() < radii[i]),
        }
    }

    /// Half-widths of the axis-aligned box enclosing the support.
    pub fn half_extent(&self) -> [f64; 3] {
        match *self {
            Cutoff::Ellipsoid { radii, .. } => radii,
            Cutoff::Slab {
                radius, half_width, ..
            } => [radius, radius, half_width],
            Cutoff::Box { radii, .. } => radii,
        }
    }

    /// True where the cutoff is identically one.
    pub fn in_plateau(&self, d: [f64; 3]) -> bool {
        match *self {
            Cutoff::Ellipsoid { radii, margin } => {
                let q: f64 = (0..3).map(|i| (d[i] / radii[i]).powi(2)).sum();
                q.sqrt() <= 1.0 - margin
            }
            Cutoff::Slab {
                radius,
                half_width,
                margin,
            } => {
                d[0].hypot(d[1]) <= (1.0 - margin) * radius
                    && d[2].abs() <= (1.0 - margin) * half_width
            }
            Cutoff::Box { radii, margin } => (0..3).all(|i| d[i].abs() <= (1.0 - margin) * radii[i]),
        }
    }

    pub fn jet(&self, d: [f64; 3]) -> Jet {
        match *self {
            Cutoff::Ellipsoid { radii, margin } => {
                let w = [
                    1.0 / (radii[0] * radii[0]),
                    1.0 / (radii[1] * radii[1]),
                    1.0 / (radii[2] * radii[2]),
                ];
                radial_jet(d, w, margin)
            }
            Cutoff::Slab {
                radius,
                half_width,
                margin,
            } => {
                let ws = 1.0 / (radius * radius);
                let space = radial_jet(d, [ws, ws, 0.0], margin);
                if space.value == 0.0 {
                    return Jet::ZERO;
                }
                let wt = 1.0 / (half_width * half_width);
                let time = radial_jet(d, [0.0, 0.0, wt], margin);
                Jet::product(&space, &time)
            }
            Cutoff::Box { radii, margin } => {
                let mut out = Jet::ONE;
                for i in 0..3 {
                    let mut w = [0.0; 3];
                    w[i] = 1.0 / (radii[i] * radii[i]);
                    let f = radial_jet(d, w, margin);
                    if f.value == 0.0 {
                        return Jet::ZERO;
                    }
                    out = Jet::product(&out, &f);
                }
                out
            }
        }
    }
}

/// Jet of `profile(s)` with `s = sqrt(sum w_i d_i^2)`.
fn radial_jet(d: [f64; 3], w: [f64; 3], eps: f64) -> Jet {
    let q: f64 = (0..3).map(|i| w[i] * d[i] * d[i]).sum();
    let s = q.sqrt();
    if s >= 1.0 {
        return Jet::ZERO;
    }
    if s <= 1.0 - eps {
        return Jet::ONE;
    }
    let (f, df, ddf) = profile(s, eps);
    let mut ds = [0.0; 3];
    for i in 0..3 {
        ds[i] = w[i] * d[i] / s;
    }
    let mut out = Jet {
        value: f,
        ..Jet::ZERO
    };
    for i in 0..3 {
        out.grad[i] = df * ds[i];
        for j in 0..3 {
            let delta = if i == j { w[i] / s } else { 0.0 };
            let dds = delta - ds[i] * ds[j] / s;
            out.hess[i][j] = ddf * ds[i] * ds[j] + df * dds;
        }
    }
    out
}
