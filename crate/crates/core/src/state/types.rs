use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Dimension of the flattened state vector `(v1, v2, m1, m2, sigma_a, sigma_b, e)`.
pub const STATE_DIM: usize = 7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x1: f64,
    pub x2: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    /// Rotation by +90 degrees: `x^perp = (-x2, x1)`.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.x2, self.x1)
    }

    pub fn outer(self, other: Vec2) -> Sym2 {
        // symmetrized; callers only form u(x)w + w(x)u or u(x)u
        Sym2 {
            xx: self.x1 * other.x1,
            xy: 0.5 * (self.x1 * other.x2 + self.x2 * other.x1),
            yy: self.x2 * other.x2,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x1, -self.x2)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x1 * s, self.x2 * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// Traceless symmetric matrix `[[a, b], [b, -a]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTraceless2 {
    pub a: f64,
    pub b: f64,
}

impl SymTraceless2 {
    pub const ZERO: SymTraceless2 = SymTraceless2 { a: 0.0, b: 0.0 };

    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    /// `diag(d, -d)`.
    pub const fn diag(d: f64) -> Self {
        Self { a: d, b: 0.0 }
    }

    pub fn to_sym(self) -> Sym2 {
        Sym2 {
            xx: self.a,
            xy: self.b,
            yy: -self.a,
        }
    }

    /// Eigenvalues `(-r, r)` with `r = sqrt(a^2 + b^2)`.
    pub fn eigs(self) -> (f64, f64) {
        let r = self.a.hypot(self.b);
        (-r, r)
    }

    /// Euclidean length of the `(a, b)` pair, the norm used for `Z`.
    pub fn norm(self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn apply(self, u: Vec2) -> Vec2 {
        Vec2::new(self.a * u.x1 + self.b * u.x2, self.b * u.x1 - self.a * u.x2)
    }
}

impl Add for SymTraceless2 {
    type Output = SymTraceless2;
    fn add(self, o: Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b)
    }
}

impl Sub for SymTraceless2 {
    type Output = SymTraceless2;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a - o.a, self.b - o.b)
    }
}

impl Neg for SymTraceless2 {
    type Output = SymTraceless2;
    fn neg(self) -> Self {
        Self::new(-self.a, -self.b)
    }
}

impl Mul<f64> for SymTraceless2 {
    type Output = SymTraceless2;
    fn mul(self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s)
    }
}

/// General symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn identity(s: f64) -> Self {
        Self {
            xx: s,
            xy: 0.0,
            yy: s,
        }
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn traceless(self) -> SymTraceless2 {
        SymTraceless2::new(0.5 * (self.xx - self.yy), self.xy)
    }

    /// `(lambda_min, lambda_max)`, computed as half-trace plus the
    /// eigenvalues of the traceless part.
    pub fn eigs(self) -> (f64, f64) {
        let h = 0.5 * self.trace();
        let (lo, hi) = self.traceless().eigs();
        (h + lo, h + hi)
    }

    /// Unit eigenvector of the largest eigenvalue.
    pub fn top_eigenvector(self) -> Vec2 {
        let t = self.traceless();
        let r = t.norm();
        if r == 0.0 {
            return Vec2::new(1.0, 0.0);
        }
        // angle of the eigenvector is half the angle of (a, b)
        let phi = 0.5 * t.b.atan2(t.a);
        Vec2::new(phi.cos(), phi.sin())
    }

    pub fn quad(self, u: Vec2, w: Vec2) -> f64 {
        u.x1 * (self.xx * w.x1 + self.xy * w.x2) + u.x2 * (self.xy * w.x1 + self.yy * w.x2)
    }

    pub fn apply(self, u: Vec2) -> Vec2 {
        Vec2::new(
            self.xx * u.x1 + self.xy * u.x2,
            self.xy * u.x1 + self.yy * u.x2,
        )
    }

    pub fn frobenius(self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    /// Solves `S x = r` for an invertible matrix.
    pub fn solve(self, r: Vec2) -> Vec2 {
        let d = self.det();
        Vec2::new(
            (self.yy * r.x1 - self.xy * r.x2) / d,
            (self.xx * r.x2 - self.xy * r.x1) / d,
        )
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2 {
            xx: self.xx - o.xx,
            xy: self.xy - o.xy,
            yy: self.yy - o.yy,
        }
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        Sym2 {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }
}

impl From<SymTraceless2> for Sym2 {
    fn from(s: SymTraceless2) -> Sym2 {
        s.to_sym()
    }
}

/// Point `z = (v, m, sigma, e)` of the state space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub v: Vec2,
    pub m: Vec2,
    pub sigma: SymTraceless2,
    pub e: f64,
}

impl State {
    pub const ZERO: State = State {
        v: Vec2::ZERO,
        m: Vec2::ZERO,
        sigma: SymTraceless2::ZERO,
        e: 0.0,
    };

    pub const fn new(v: Vec2, m: Vec2, sigma: SymTraceless2, e: f64) -> Self {
        Self { v, m, sigma, e }
    }

    /// The constraint-set point over velocity `a` at pressure `p`:
    /// `(a, (|a|^2/2 + p) a, (a (x) a)°, |a|^2/2)`.
    pub fn on_constraint(a: Vec2, p: f64) -> Self {
        let e = 0.5 * a.norm_sq();
        Self {
            v: a,
            m: a * (e + p),
            sigma: a.outer(a).traceless(),
            e,
        }
    }

    /// Flattened as `(v1, v2, m1, m2, sigma_a, sigma_b, e)`.
    pub fn to_array(self) -> [f64; STATE_DIM] {
        [
            self.v.x1,
            self.v.x2,
            self.m.x1,
            self.m.x2,
            self.sigma.a,
            self.sigma.b,
            self.e,
        ]
    }

    pub fn from_array(x: [f64; STATE_DIM]) -> Self {
        Self {
            v: Vec2::new(x[0], x[1]),
            m: Vec2::new(x[2], x[3]),
            sigma: SymTraceless2::new(x[4], x[5]),
            e: x[6],
        }
    }

    pub fn norm_sq(self) -> f64 {
        self.to_array().iter().map(|c| c * c).sum()
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State {
            v: self.v + o.v,
            m: self.m + o.m,
            sigma: self.sigma + o.sigma,
            e: self.e + o.e,
        }
    }
}

impl AddAssign for State {
    fn add_assign(&mut self, o: State) {
        *self = *self + o;
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State {
            v: self.v - o.v,
            m: self.m - o.m,
            sigma: self.sigma - o.sigma,
            e: self.e - o.e,
        }
    }
}

impl SubAssign for State {
    fn sub_assign(&mut self, o: State) {
        *self = *self - o;
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        State {
            v: -self.v,
            m: -self.m,
            sigma: -self.sigma,
            e: -self.e,
        }
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, s: f64) -> State {
        State {
            v: self.v * s,
            m: self.m * s,
            sigma: self.sigma * s,
            e: self.e * s,
        }
    }
}

impl Mul<State> for f64 {
    type Output = State;
    fn mul(self, z: State) -> State {
        z * self
    }
}

/// Pressure value at a space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Pressure(pub f64);
