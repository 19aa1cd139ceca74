use nalgebra::{Matrix2x3, Matrix4x3, Vector3};
use serde::{Deserialize, Serialize};

use super::types::State;
use crate::error::{Error, Result};
use crate::tolerances;

/// The 4x3 matrix whose kernel defines the wave cone. A vector `(xi, c)`
/// is in its kernel iff
/// `(sigma + e id) xi + c v = 0`, `v . xi = 0` and `m . xi + c e = 0`.
pub fn cone_matrix(z: &State) -> Matrix4x3<f64> {
    let (a, b) = (z.sigma.a, z.sigma.b);
    let (v, m, e) = (z.v, z.m, z.e);
    Matrix4x3::new(
        a + e, b, v.x1, //
        b, -a + e, v.x2, //
        v.x1, v.x2, 0.0, //
        m.x1, m.x2, e,
    )
}

/// Wave-cone membership: the smallest singular value of [`cone_matrix`] is
/// at most `tol` times the largest, and `(v, e)` is not zero.
pub fn wave_cone_contains(z: &State, tol: f64) -> bool {
    let ve = (z.v.norm_sq() + z.e * z.e).sqrt();
    if ve <= tol {
        return false;
    }
    let sv = cone_matrix(z).singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min <= tol * max
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDirection {
    /// Unit spatial frequency.
    pub xi: super::Vec2,
    /// Time frequency.
    pub c: f64,
    /// `|A (xi, c)|` for the returned vector.
    pub residual: f64,
}

/// A kernel vector `(xi, c)` of [`cone_matrix`] with `|xi| = 1`.
///
/// When the kernel has dimension above one, the vector maximising `|xi|`
/// within the kernel is chosen. The sign is fixed so that the component
/// of `xi` with the larger magnitude is positive.
pub fn kernel_direction(z: &State) -> Result<KernelDirection> {
    let tol = tolerances::CONE_RELATIVE;
    if !wave_cone_contains(z, tol) {
        return Err(Error::NotInCone);
    }
    let a = cone_matrix(z);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();

    let basis: Vec<Vector3<f64>> = (0..3)
        .filter(|&i| svd.singular_values[i] <= tol * smax)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if basis.is_empty() {
        return Err(Error::NotInCone);
    }

    // maximise |xi| over unit vectors of the kernel subspace
    let mut p = Matrix2x3::<f64>::zeros();
    for (j, b) in basis.iter().enumerate() {
        p[(0, j)] = b[0];
        p[(1, j)] = b[1];
    }
    let psvd = p.svd(false, true);
    let pv = psvd.v_t.expect("requested right singular vectors");
    let (imax, _) = psvd.singular_values.argmax();
    let w = pv.row(imax);
    let mut x = Vector3::zeros();
    for (j, b) in basis.iter().enumerate() {
        x += b * w[j];
    }

    let xi_norm = x[0].hypot(x[1]);
    if xi_norm <= tolerances::LINALG.sqrt() {
        return Err(Error::DegenerateKernel);
    }
    x /= xi_norm;
    let lead = if x[0].abs() >= x[1].abs() { x[0] } else { x[1] };
    if lead < 0.0 {
        x = -x;
    }
    let residual = (a * x).norm();
    Ok(KernelDirection {
        xi: super::Vec2::new(x[0], x[1]),
        c: x[2],
        residual,
    })
}

/// Residual `|A (xi, c)|` of a candidate kernel vector.
pub fn kernel_residual(z: &State, xi: super::Vec2, c: f64) -> f64 {
    (cone_matrix(z) * Vector3::new(xi.x1, xi.x2, c)).norm()
}
