use crate::error::{Error, Result};
use crate::state::{
    flux_defect, hull_margin, m_decomposition, Pressure, State, Sym2, Vec2,
};
use crate::tolerances;

use super::LambdaSegment;

/// Scale used to make `|M(z)| <= tol` checks relative.
pub(crate) fn state_scale(z: &State) -> f64 {
    1.0 + z.e.abs() + z.v.norm_sq() + z.sigma.norm()
}

/// Segment through a state with `M(z) = 0` whose endpoints lie in `K_p`.
///
/// Direction: `e' = 1`, `v' = (2e - |v|^2)/|f| eta`,
/// `m' = v + (e + p + 2 beta) v'`, `sigma' = (v (x) v' + v' (x) v + 2 beta v' (x) v')°`
/// with `f = m - (e+p) v` and `beta = (1 - v.v')/|v'|^2`. The endpoints
/// are the roots of `s^2 - 2 beta s - |f|^2/(2e - |v|^2)`.
pub fn first_segment(z: &State, p: Pressure) -> Result<LambdaSegment> {
    let a = 2.0 * z.e - z.v.norm_sq();
    if !(a > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "2e - |v|^2 = {a:e} must be positive"
        )));
    }
    let d = m_decomposition(z, p)?;
    if d.mnorm > tolerances::IDENTITY * state_scale(z) {
        return Err(Error::PreconditionViolated(format!(
            "|M(z)| = {:e} must vanish",
            d.mnorm
        )));
    }
    let vbar = d.eta * (a / d.flux);
    let beta = (1.0 - z.v.dot(vbar)) / vbar.norm_sq();
    let q = d.flux * d.flux / a;
    let sigma = (z.v.outer(vbar) * 2.0 + vbar.outer(vbar) * (2.0 * beta)).traceless();
    let direction = State::new(vbar, z.v + vbar * (z.e + p.0 + 2.0 * beta), sigma, 1.0);
    let (s1, s2) = quadratic_roots(beta, q);
    Ok(LambdaSegment {
        direction,
        s1,
        s2,
        base: *z,
        pressure: p,
    })
}

/// Segment in `{e' = 0, m' = (e+p) v'}` along which `m - (e+p) v` is
/// constant and whose endpoints satisfy `M = 0`.
///
/// Direction: `v' = -(M2/|M|) eta + (M1/|M|) eta^perp`,
/// `sigma' = v (x) v' + v' (x) v + 2 (v.v') ((M1/|M|^2) M - eta (x) eta)`;
/// the endpoints are the roots of `s^2 + 2 (v.v') s - |M|^2/M1`.
pub fn second_segment(z: &State, p: Pressure) -> Result<LambdaSegment> {
    let d = m_decomposition(z, p)?;
    let margin = hull_margin(z);
    if !(margin > 0.0) {
        return Err(Error::NotInHullInterior { margin });
    }
    if d.mnorm <= tolerances::IDENTITY * state_scale(z) {
        return Err(Error::PreconditionViolated(
            "|M(z)| vanishes; the state already admits a first segment".into(),
        ));
    }
    let eta = d.eta;
    let vbar = eta * (-d.m2 / d.mnorm) + eta.perp() * (d.m1 / d.mnorm);
    let vv = z.v.dot(vbar);
    let m: Sym2 = d.matrix().to_sym();
    let sigma = (z.v.outer(vbar) * 2.0
        + (m * (d.m1 / (d.mnorm * d.mnorm)) - eta.outer(eta)) * (2.0 * vv))
        .traceless();
    let direction = State::new(vbar, vbar * (z.e + p.0), sigma, 0.0);
    let (s1, s2) = quadratic_roots(-vv, d.mnorm * d.mnorm / d.m1);
    Ok(LambdaSegment {
        direction,
        s1,
        s2,
        base: *z,
        pressure: p,
    })
}

/// The energy-cap condition
/// `|f (2 gamma - |v|^2) / ((gamma - e)(2e - |v|^2)) - v| <= sqrt(2 gamma)`
/// under which the first segment stays below `gamma`.
pub fn gamma_segment_check(z: &State, p: Pressure, gamma: f64) -> Result<bool> {
    if !(z.e < gamma) {
        return Err(Error::PreconditionViolated(format!(
            "e = {} must be below gamma = {gamma}",
            z.e
        )));
    }
    let a = 2.0 * z.e - z.v.norm_sq();
    if !(a > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "2e - |v|^2 = {a:e} must be positive"
        )));
    }
    let f = flux_defect(z, p);
    let w: Vec2 = f * ((2.0 * gamma - z.v.norm_sq()) / ((gamma - z.e) * a)) - z.v;
    Ok(w.norm() <= (2.0 * gamma).sqrt())
}

/// Roots `s1 <= s2` of `s^2 - 2 b s - q`, evaluated without cancellation.
pub(crate) fn quadratic_roots(b: f64, q: f64) -> (f64, f64) {
    let r = (b * b + q).sqrt();
    if b >= 0.0 {
        let s2 = b + r;
        (-q / s2, s2)
    } else {
        let s1 = b - r;
        (s1, -q / s1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{in_k, m_decomposition, wave_cone_contains, SymTraceless2};

    fn first_example(t: f64) -> State {
        State::new(Vec2::ZERO, Vec2::new(t, 0.0), SymTraceless2::diag(0.5), 0.5)
    }

    #[test]
    fn first_segment_example() {
        let p = Pressure(0.0);
        let seg = first_segment(&first_example(1.0), p).unwrap();
        let r2 = 2f64.sqrt();
        assert!((seg.s1 - (1.0 - r2)).abs() < 1e-14);
        assert!((seg.s2 - (1.0 + r2)).abs() < 1e-14);
        let end = seg.endpoint(seg.s2);
        assert!((end.v - Vec2::new(1.0 + r2, 0.0)).norm() < 1e-14);
        assert!((end.e - (1.5 + r2)).abs() < 1e-14);
        assert!((end.v.norm_sq() - 2.0 * end.e).abs() < 1e-12);
        for s in [seg.s1, seg.s2] {
            assert!(in_k(&seg.endpoint(s), p, 1e-8));
        }
        assert!(wave_cone_contains(&seg.direction, tolerances::CONE_RELATIVE));
    }

    #[test]
    fn first_segment_scaled_flux() {
        let seg = first_segment(&first_example(2.0), Pressure(0.0)).unwrap();
        let r = 2.0 * 5f64.sqrt();
        assert!((seg.s1 - (4.0 - r)).abs() < 1e-13);
        assert!((seg.s2 - (4.0 + r)).abs() < 1e-13);
    }

    #[test]
    fn first_segment_boundary_rejected() {
        let z = State::new(Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0), SymTraceless2::diag(0.5), 0.5);
        assert!(matches!(
            first_segment(&z, Pressure(0.0)),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn second_segment_example() {
        let p = Pressure(0.0);
        let z = State::new(Vec2::ZERO, Vec2::new(1.0, 0.0), SymTraceless2::ZERO, 1.0);
        let seg = second_segment(&z, p).unwrap();
        assert!((seg.direction.v - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        assert!((seg.s1 + 1.0).abs() < 1e-14 && (seg.s2 - 1.0).abs() < 1e-14);
        for (s, m2) in [(seg.s1, -1.0), (seg.s2, 1.0)] {
            let end = seg.endpoint(s);
            assert!((end.v - Vec2::new(0.0, m2)).norm() < 1e-14);
            assert!((end.m - Vec2::new(1.0, m2)).norm() < 1e-14);
            let d = m_decomposition(&end, p).unwrap();
            assert!(d.mnorm < 1e-9);
            assert!((2.0 * end.e - end.v.norm_sq() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_segment_rejects_k() {
        let z = State::on_constraint(Vec2::new(0.3, 0.4), 0.0);
        assert!(matches!(
            second_segment(&z, Pressure(0.0)),
            Err(Error::DegenerateFlux)
        ));
    }

    #[test]
    fn gamma_check_examples() {
        let p = Pressure(0.0);
        let z = first_example(1.0);
        assert!(gamma_segment_check(&z, p, 8.0).unwrap());
        let seg = first_segment(&z, p).unwrap();
        assert!((z.e + seg.s2 - 2.914213562373095).abs() < 1e-12);
        assert!(!gamma_segment_check(&z, p, 0.6).unwrap());
        assert!(matches!(
            gamma_segment_check(&z, p, 0.5),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn roots_are_stable() {
        let (s1, s2) = quadratic_roots(1e8, 1.0);
        assert!((s1 * s2 + 1.0).abs() < 1e-15);
        assert!(s1 < 0.0 && s2 > 0.0);
        let (s1, s2) = quadratic_roots(-1e8, 1.0);
        assert!((s1 * s2 + 1.0).abs() < 1e-15);
    }
}
