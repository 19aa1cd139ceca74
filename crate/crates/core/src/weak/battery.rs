use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// Time profile, vanishing at `t = T` with nonzero value at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeProfile {
    /// `(1 - t/T)^3`.
    Cubic,
    /// `(1 - t/T)^3 (1 + 3t/T)`.
    CubicLinear,
}

impl TimeProfile {
    /// `(tau, tau')`.
    pub fn eval(self, t: f64, horizon: f64) -> (f64, f64) {
        let s = t / horizon;
        let u = 1.0 - s;
        match self {
            TimeProfile::Cubic => (u * u * u, -3.0 * u * u / horizon),
            TimeProfile::CubicLinear => {
                let g = 1.0 + 3.0 * s;
                (u * u * u * g, (-3.0 * u * u * g + 3.0 * u * u * u) / horizon)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    /// `Psi = cos(2 pi k.x + theta) tau(t)`.
    Scalar,
    /// `Phi = grad^perp psi`, `psi = sin(2 pi k.x + theta) tau(t) / (2 pi)`;
    /// divergence free.
    DivergenceFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFn {
    pub kind: TestKind,
    pub k: [i32; 2],
    pub theta: f64,
    pub profile: TimeProfile,
}

/// Spatial part of a scalar member: value and gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarSpatial {
    pub value: f64,
    pub grad: [f64; 2],
}

/// Spatial part of a vector member: value and `jac[i][j] = d_j Phi_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VectorSpatial {
    pub value: [f64; 2],
    pub jac: [[f64; 2]; 2],
}

impl TestFn {
    fn phase(&self, x: [f64; 2]) -> f64 {
        TAU * (self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1]) + self.theta
    }

    pub fn scalar(&self, x: [f64; 2]) -> ScalarSpatial {
        let (s, c) = self.phase(x).sin_cos();
        let kk = [TAU * self.k[0] as f64, TAU * self.k[1] as f64];
        ScalarSpatial {
            value: c,
            grad: [-s * kk[0], -s * kk[1]],
        }
    }

    pub fn vector(&self, x: [f64; 2]) -> VectorSpatial {
        // psi = sin(phase) / (2 pi); Phi = (-d2 psi, d1 psi)
        let (s, c) = self.phase(x).sin_cos();
        let k = [self.k[0] as f64, self.k[1] as f64];
        let value = [-c * k[1], c * k[0]];
        // d_j of c = -s 2 pi k_j
        let jac = [
            [s * TAU * k[1] * k[0], s * TAU * k[1] * k[1]],
            [-s * TAU * k[0] * k[0], -s * TAU * k[0] * k[1]],
        ];
        VectorSpatial { value, jac }
    }
}

/// The fixed twelve-member battery: scalar and divergence-free members
/// for each frequency in `{(0,1), (1,1), (1,2)}` and each time profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionBattery {
    pub members: Vec<TestFn>,
}

impl Default for TestFunctionBattery {
    fn default() -> Self {
        let mut members = Vec::with_capacity(12);
        for kind in [TestKind::Scalar, TestKind::DivergenceFree] {
            for (n, k) in [[0, 1], [1, 1], [1, 2]].into_iter().enumerate() {
                for profile in [TimeProfile::Cubic, TimeProfile::CubicLinear] {
                    members.push(TestFn {
                        kind,
                        k,
                        theta: 0.3 + 0.4 * n as f64,
                        profile,
                    });
                }
            }
        }
        Self { members }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_shape() {
        let b = TestFunctionBattery::default();
        assert_eq!(b.members.len(), 12);
        let scalars = b.members.iter().filter(|m| m.kind == TestKind::Scalar).count();
        assert_eq!(scalars, 6);
    }

    #[test]
    fn profiles_vanish_at_horizon() {
        for p in [TimeProfile::Cubic, TimeProfile::CubicLinear] {
            assert_eq!(p.eval(2.0, 2.0).0, 0.0);
            assert_eq!(p.eval(0.0, 2.0).0, 1.0);
            let h = 1e-6;
            let fd = (p.eval(0.7 + h, 2.0).0 - p.eval(0.7 - h, 2.0).0) / (2.0 * h);
            assert!((fd - p.eval(0.7, 2.0).1).abs() < 1e-8);
        }
    }

    #[test]
    fn vector_members_are_divergence_free() {
        for m in TestFunctionBattery::default().members {
            let v = m.vector([0.13, -0.41]);
            assert!((v.jac[0][0] + v.jac[1][1]).abs() < 1e-12);
            let h = 1e-6;
            let p = m.vector([0.13 + h, -0.41]);
            let q = m.vector([0.13 - h, -0.41]);
            assert!(((p.value[0] - q.value[0]) / (2.0 * h) - v.jac[0][0]).abs() < 1e-6);
            let s = m.scalar([0.2, 0.1]);
            let sp = m.scalar([0.2, 0.1 + h]);
            let sm = m.scalar([0.2, 0.1 - h]);
            assert!(((sp.value - sm.value) / (2.0 * h) - s.grad[1]).abs() < 1e-6);
        }
    }
}
