//! Flux-free states (`m = (e+p) v`) are handled inside the smaller cone
//! `{e' = 0, m' = (e+p) v'}` by an explicit two-level laminate.
//!
//! With `D = e id + sigma - v (x) v` (positive definite in the hull
//! interior) and a unit vector `u`, the direction
//! `v' = u`, `sigma' = (v (x) u + u (x) v - 2 (v.u) u (x) u)`, `m' = (e+p) u`
//! changes `D` by `-((s + v.u)^2 - (v.u)^2) u (x) u`. Taking `u` the top
//! eigenvector of `D` drives both endpoints to rank one. A rank-one
//! `D = mu w (x) w` is the average of `k(v + x1 w)` and `k(v + x2 w)`
//! with `x1, x2` the roots of `x^2 + 2 (v.w) x - mu`.

use crate::error::{Error, Result};
use crate::state::{flux_defect, in_k, Pressure, State, Sym2};
use crate::tolerances;

use super::segments::{quadratic_roots, state_scale};
use super::{LambdaSegment, SegmentChain};

/// `e id + sigma - v (x) v`.
pub fn defect_matrix(z: &State) -> Sym2 {
    Sym2::identity(z.e) + z.sigma.to_sym() - z.v.outer(z.v)
}

fn check_flux_free(z: &State, p: Pressure) -> Result<()> {
    let f = flux_defect(z, p).norm();
    if f > tolerances::MEMBERSHIP * (1.0 + z.m.norm()) {
        return Err(Error::PreconditionViolated(format!(
            "m - (e+p)v = {f:e} must vanish"
        )));
    }
    Ok(())
}

/// First laminate level: a segment from an interior flux-free state to
/// two hull-boundary states. On the boundary itself the second level is
/// returned instead, whose endpoints are in `K_p`.
pub fn classical_segment(z: &State, p: Pressure) -> Result<LambdaSegment> {
    check_flux_free(z, p)?;
    let d = defect_matrix(z);
    let (lmin, lmax) = d.eigs();
    let scale = tolerances::IDENTITY * state_scale(z);
    if lmin < -scale || lmax <= scale || in_k(z, p, tolerances::MEMBERSHIP) {
        return Err(Error::NotInHullInterior { margin: lmin });
    }
    if lmin <= scale {
        return boundary_segment(z, p, d);
    }
    let u = d.top_eigenvector();
    let vu = z.v.dot(u);
    // D - tau u (x) u is singular at tau = 1/(u^T D^-1 u), which equals lmax
    let tau = 1.0 / u.dot(d.solve(u));
    let sigma = (z.v.outer(u) * 2.0 - u.outer(u) * (2.0 * vu)).traceless();
    let direction = State::new(u, u * (z.e + p.0), sigma, 0.0);
    let (s1, s2) = quadratic_roots(-vu, tau);
    Ok(LambdaSegment {
        direction,
        s1,
        s2,
        base: *z,
        pressure: p,
    })
}

/// Second laminate level at a rank-one defect matrix `mu w (x) w`.
fn boundary_segment(z: &State, p: Pressure, d: Sym2) -> Result<LambdaSegment> {
    let w = d.top_eigenvector();
    let mu = 2.0 * z.e - z.v.norm_sq();
    if !(mu > 0.0) {
        return Err(Error::NotInHullInterior { margin: mu });
    }
    let vw = z.v.dot(w);
    let (x1, x2) = quadratic_roots(-vw, mu);
    let k1 = State::on_constraint(z.v + w * x1, p.0);
    let k2 = State::on_constraint(z.v + w * x2, p.0);
    // z = l1 k1 + l2 k2 with l1 = x2/(x2-x1), l2 = -x1/(x2-x1)
    let span = x2 - x1;
    Ok(LambdaSegment {
        direction: k2 - k1,
        s1: x1 / span,
        s2: x2 / span,
        base: *z,
        pressure: p,
    })
}

/// Both laminate levels for a flux-free state in the hull.
pub fn classical_chain(z: &State, p: Pressure) -> Result<SegmentChain> {
    let first = classical_segment(z, p)?;
    if first.direction.e != 0.0 {
        // already on the boundary: a single K-to-K segment
        return Ok(SegmentChain {
            stage2: None,
            stage1: vec![first],
        });
    }
    let stage1 = first
        .endpoints()
        .iter()
        .map(|end| {
            let d = defect_matrix(end);
            boundary_segment(end, p, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentChain {
        stage2: Some(first),
        stage1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{in_hull, wave_cone_contains, SymTraceless2, Vec2};
    use proptest::prelude::*;

    #[test]
    fn isotropic_state() {
        let p = Pressure(0.0);
        let z = State::new(Vec2::ZERO, Vec2::ZERO, SymTraceless2::ZERO, 0.5);
        let chain = classical_chain(&z, p).unwrap();
        let a = chain.stage2.unwrap();
        assert!((a.s1 + 0.5f64.sqrt()).abs() < 1e-14);
        assert!((a.s2 - 0.5f64.sqrt()).abs() < 1e-14);
        for t in chain.terminals() {
            assert!(in_k(&t, p, 1e-12));
            assert!((t.v.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_midpoint_recovers_endpoints() {
        let p = Pressure(0.2);
        let k1 = State::on_constraint(Vec2::new(1.0, 0.0), p.0);
        let k2 = State::on_constraint(Vec2::new(-1.0, 0.0), p.0);
        let z = (k1 + k2) * 0.5;
        let seg = classical_segment(&z, p).unwrap();
        assert!((seg.s2 - seg.s1 - 1.0).abs() < 1e-14);
        let ends = seg.endpoints();
        let found = |k: State| ends.iter().any(|e| (*e - k).norm() < 1e-12);
        assert!(found(k1) && found(k2));
    }

    #[test]
    fn k_state_rejected() {
        let z = State::on_constraint(Vec2::new(0.3, -0.4), 0.0);
        assert!(matches!(
            classical_segment(&z, Pressure(0.0)),
            Err(Error::NotInHullInterior { .. })
        ));
    }

    #[test]
    fn flux_must_vanish() {
        let z = State::new(Vec2::ZERO, Vec2::new(1.0, 0.0), SymTraceless2::ZERO, 1.0);
        assert!(matches!(
            classical_segment(&z, Pressure(0.0)),
            Err(Error::PreconditionViolated(_))
        ));
    }

    proptest! {
        #[test]
        fn interior_states_reach_k(
            v in prop::array::uniform2(-1.0f64..1.0),
            s in prop::array::uniform2(-1.0f64..1.0),
            slack in 1e-3f64..2.0,
            p in -1.0f64..1.0,
        ) {
            let v = Vec2::new(v[0], v[1]);
            let sigma = SymTraceless2::new(s[0], s[1]);
            let mut z = State::new(v, Vec2::ZERO, sigma, 0.0);
            z.e = crate::state::lambda_max_vvs(&z) + slack;
            z.m = v * (z.e + p);
            prop_assert!(in_hull(&z, true));
            let chain = classical_chain(&z, Pressure(p)).unwrap();
            let a = chain.stage2.unwrap();
            prop_assert!(a.s1 < 0.0 && a.s2 > 0.0);
            prop_assert!(wave_cone_contains(&a.direction, tolerances::CONE_RELATIVE));
            for seg in &chain.stage1 {
                prop_assert!(seg.s1 < 0.0 && seg.s2 > 0.0);
                prop_assert!(wave_cone_contains(&seg.direction, tolerances::CONE_RELATIVE));
            }
            for t in chain.terminals() {
                prop_assert!(in_k(&t, Pressure(p), 1e-8));
            }
        }
    }
}
