//! Value-level algebra on the state space `Z`: constraint sets, hull
//! predicates, the `M`/`eta` decomposition, the wave cone and the
//! energy cap `gamma_eps`.
//!
//! All functions here are pure and operate on `Copy` values.

mod cone;
mod distance;
mod types;

pub use cone::{cone_matrix, kernel_direction, kernel_residual, wave_cone_contains, KernelDirection};
pub use distance::{dist_to_k, DistSearch};
pub use types::{Pressure, State, Sym2, SymTraceless2, Vec2, STATE_DIM};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances;

/// Closed-form eigenvalues `(lambda_min, lambda_max)` of a traceless
/// symmetric matrix.
pub fn sym0_eigs(s: SymTraceless2) -> (f64, f64) {
    s.eigs()
}

/// `v (x) v - sigma`. Not traceless: its trace is `|v|^2`.
pub fn vvs(z: &State) -> Sym2 {
    z.v.outer(z.v) - z.sigma.to_sym()
}

pub fn lambda_max_vvs(z: &State) -> f64 {
    vvs(z).eigs().1
}

pub fn lambda_min_vvs(z: &State) -> f64 {
    vvs(z).eigs().0
}

/// `m - (e + p) v`.
pub fn flux_defect(z: &State, p: Pressure) -> Vec2 {
    z.m - z.v * (z.e + p.0)
}

/// Frobenius norm of `v (x) v - sigma - e id`.
pub fn stress_defect(z: &State) -> f64 {
    (vvs(z) - Sym2::identity(z.e)).frobenius()
}

pub fn in_k(z: &State, p: Pressure, tol: f64) -> bool {
    stress_defect(z) <= tol && flux_defect(z, p).norm() <= tol
}

/// Distance-like residual `sqrt(stress_defect^2 + |flux_defect|^2)`
/// divided by `1 + |z|`, so that large constructed states are measured
/// at floating-point relative precision.
pub fn k_residual_relative(z: &State, p: Pressure) -> f64 {
    stress_defect(z).hypot(flux_defect(z, p).norm()) / (1.0 + z.norm())
}

pub fn in_k_gamma(z: &State, p: Pressure, gamma: f64, tol: f64) -> bool {
    in_k(z, p, tol) && z.e <= gamma + tol
}

/// `e - lambda_max(v (x) v - sigma)`; nonnegative exactly on the closed hull.
pub fn hull_margin(z: &State) -> f64 {
    z.e - lambda_max_vvs(z)
}

/// Membership in the (pressure independent) convex hull
/// `{lambda_max(v (x) v - sigma) <= e}`, open when `strict`.
pub fn in_hull(z: &State, strict: bool) -> bool {
    let margin = hull_margin(z);
    if strict {
        margin > 0.0
    } else {
        margin >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SufficientCondition {
    pub holds: bool,
    pub margin: f64,
}

/// `e - lambda_max(v (x) v - sigma) - eps |m - (e+p) v|`, positive when the
/// state lies in the interior of the `gamma_eps(e, eps)`-capped hull.
pub fn suff_condition(z: &State, p: Pressure, eps: f64) -> SufficientCondition {
    let margin = hull_margin(z) - eps * flux_defect(z, p).norm();
    SufficientCondition {
        holds: margin > 0.0,
        margin,
    }
}

/// Energy cap under which the sufficient condition with `eps` implies
/// interior membership in the capped hull.
pub fn gamma_eps(e: f64, eps: f64) -> f64 {
    let q = 2.0 * e + 0.5 + 4.0 / eps;
    (4.0 * e).max(0.5 * q * q)
}

/// Components of the traceless matrix
/// `M(z) = v (x) v - sigma - e id + (2e - |v|^2) eta (x) eta`
/// in the basis `Y1 = eta (x) eta - eta^perp (x) eta^perp`,
/// `Y2 = eta (x) eta^perp + eta^perp (x) eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MDecomposition {
    pub eta: Vec2,
    pub m1: f64,
    pub m2: f64,
    /// `sqrt(m1^2 + m2^2)`, the spectral norm of `M`.
    pub mnorm: f64,
    /// `|m - (e+p) v|`.
    pub flux: f64,
}

impl MDecomposition {
    pub fn matrix(&self) -> SymTraceless2 {
        let eta = self.eta;
        let perp = eta.perp();
        let y1 = eta.outer(eta) - perp.outer(perp);
        let y2 = eta.outer(perp) * 2.0;
        (y1 * self.m1 + y2 * self.m2).traceless()
    }
}

pub fn m_decomposition(z: &State, p: Pressure) -> Result<MDecomposition> {
    let f = flux_defect(z, p);
    let flux = f.norm();
    if flux <= tolerances::FLUX_ZERO * (1.0 + z.m.norm()) || flux == 0.0 {
        return Err(Error::DegenerateFlux);
    }
    let eta = f * (1.0 / flux);
    let m = m_matrix(z, eta);
    let m1 = m.quad(eta, eta);
    let m2 = m.quad(eta, eta.perp());
    Ok(MDecomposition {
        eta,
        m1,
        m2,
        mnorm: m1.hypot(m2),
        flux,
    })
}

fn m_matrix(z: &State, eta: Vec2) -> Sym2 {
    vvs(z) - Sym2::identity(z.e) + eta.outer(eta) * (2.0 * z.e - z.v.norm_sq())
}
