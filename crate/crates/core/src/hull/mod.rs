//! Constructive Lambda-segments realising hull membership: every state
//! in the open hull is joined to `K_p` by at most two levels of segments
//! whose directions lie in the wave cone.

mod classical;
mod segments;

pub use classical::{classical_chain, classical_segment, defect_matrix};
pub use segments::{first_segment, gamma_segment_check, second_segment};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{flux_defect, hull_margin, Pressure, State};
use crate::tolerances;

/// The segment `{base + s direction : s in [s1, s2]}` with `s1 < 0 < s2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSegment {
    pub direction: State,
    pub s1: f64,
    pub s2: f64,
    pub base: State,
    pub pressure: Pressure,
}

impl LambdaSegment {
    pub fn endpoint(&self, s: f64) -> State {
        self.base + self.direction * s
    }

    pub fn endpoints(&self) -> [State; 2] {
        [self.endpoint(self.s1), self.endpoint(self.s2)]
    }

    /// `min(|s1|, s2) |direction|`: how far the base can move along the
    /// segment in both directions.
    pub fn margin(&self) -> f64 {
        self.s1.abs().min(self.s2) * self.direction.norm()
    }
}

/// Two-level decomposition. `stage2` (when present) starts at the
/// state; `stage1` holds one segment per `stage2` endpoint, or a single
/// segment at the state itself when `stage2` is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentChain {
    pub stage2: Option<LambdaSegment>,
    pub stage1: Vec<LambdaSegment>,
}

impl SegmentChain {
    /// The states in `K` reached by the chain.
    pub fn terminals(&self) -> Vec<State> {
        self.stage1.iter().flat_map(|s| s.endpoints()).collect()
    }

    pub fn segments(&self) -> impl Iterator<Item = &LambdaSegment> {
        self.stage2.iter().chain(self.stage1.iter())
    }
}

/// Chain for a state with nonvanishing flux defect: a second segment to
/// two states with `M = 0`, then first segments to `K`. Terminal
/// energies must not exceed `gamma`.
pub fn chain_to_k(z: &State, p: Pressure, gamma: f64) -> Result<SegmentChain> {
    let f = flux_defect(z, p).norm();
    if f <= tolerances::FLUX_ZERO * (1.0 + z.m.norm()) {
        return Err(Error::ClassicalCaseRequired);
    }
    let margin = hull_margin(z);
    if !(margin > 0.0) {
        return Err(Error::NotInHullInterior { margin });
    }
    let chain = match second_segment(z, p) {
        Ok(seg) => {
            let stage1 = seg
                .endpoints()
                .iter()
                .map(|end| first_segment(end, p))
                .collect::<Result<Vec<_>>>()?;
            SegmentChain {
                stage2: Some(seg),
                stage1,
            }
        }
        // M(z) already vanishes
        Err(Error::PreconditionViolated(_)) => SegmentChain {
            stage2: None,
            stage1: vec![first_segment(z, p)?],
        },
        Err(e) => return Err(e),
    };
    let top = chain
        .terminals()
        .iter()
        .map(|t| t.e)
        .fold(f64::NEG_INFINITY, f64::max);
    if top > gamma + tolerances::MEMBERSHIP {
        return Err(Error::PreconditionViolated(format!(
            "terminal energy {top} exceeds gamma = {gamma}"
        )));
    }
    Ok(chain)
}

/// [`chain_to_k`] with flux-free states routed to [`classical_chain`].
pub fn chain_any(z: &State, p: Pressure, gamma: f64) -> Result<SegmentChain> {
    match chain_to_k(z, p, gamma) {
        Err(Error::ClassicalCaseRequired) => {
            let chain = classical_chain(z, p)?;
            let top = chain
                .terminals()
                .iter()
                .map(|t| t.e)
                .fold(f64::NEG_INFINITY, f64::max);
            if top > gamma + tolerances::MEMBERSHIP {
                return Err(Error::PreconditionViolated(format!(
                    "terminal energy {top} exceeds gamma = {gamma}"
                )));
            }
            Ok(chain)
        }
        other => other,
    }
}

/// A direction `zbar` with `z +- zbar` in the open hull and `e <= gamma`.
///
/// The first-level segment of the chain is used unless its two-sided
/// margin is below `1e-6`, in which case a second-level segment is
/// tried. The step `shrink min(|s1|, s2)` is halved until both
/// `z +- zbar` pass. States already in `K` get the zero direction.
pub fn find_perturbation(z: &State, p: Pressure, gamma: f64, shrink: f64) -> Result<State> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "shrink = {shrink} must lie in (0, 1)"
        )));
    }
    if crate::state::in_k(z, p, tolerances::MEMBERSHIP) && z.e <= gamma {
        return Ok(State::ZERO);
    }
    let margin = hull_margin(z);
    if !(margin > 0.0) || z.e > gamma {
        return Err(Error::NotInHullInterior { margin });
    }
    // only the first-level segment at z is needed, so endpoint segments
    // (and their round-off in M) are never built
    let seg = if flux_defect(z, p).norm() <= tolerances::FLUX_ZERO * (1.0 + z.m.norm()) {
        let chain = classical_chain(z, p)?;
        match chain.stage2 {
            Some(s) if s.s1.abs().min(s.s2) >= 1e-6 => s,
            _ => chain
                .stage1
                .iter()
                .copied()
                .find(|s| s.base == *z)
                .or(chain.stage2)
                .ok_or(Error::NotInHullInterior { margin })?,
        }
    } else {
        match second_segment(z, p) {
            Ok(s) => s,
            Err(Error::PreconditionViolated(_)) => first_segment(z, p)?,
            Err(e) => return Err(e),
        }
    };
    let mut zbar = seg.direction * (shrink * seg.s1.abs().min(seg.s2));
    for _ in 0..60 {
        let ok = [*z + zbar, *z - zbar]
            .iter()
            .all(|w| hull_margin(w) > 0.0 && w.e <= gamma);
        if ok {
            return Ok(zbar);
        }
        zbar = zbar * 0.5;
    }
    Ok(State::ZERO)
}

/// Bound `sqrt(2 gamma) |p1 - p2|` on the Hausdorff distance between
/// `K_{gamma, p1}` and `K_{gamma, p2}`.
pub fn hausdorff_bound(p1: Pressure, p2: Pressure, gamma: f64) -> f64 {
    (2.0 * gamma).sqrt() * (p1.0 - p2.0).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{
        dist_to_k, gamma_eps, in_k, in_k_gamma, k_residual_relative, lambda_max_vvs, suff_condition,
        wave_cone_contains, SymTraceless2, Vec2,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn second_example() -> State {
        State::new(Vec2::ZERO, Vec2::new(1.0, 0.0), SymTraceless2::ZERO, 1.0)
    }

    #[test]
    fn chain_example() {
        let p = Pressure(0.0);
        let gamma = gamma_eps(1.0, 1.0);
        let chain = chain_to_k(&second_example(), p, gamma).unwrap();
        assert!(chain.stage2.is_some());
        let t = chain.terminals();
        assert_eq!(t.len(), 4);
        for k in t {
            assert!(in_k_gamma(&k, p, gamma, 1e-8));
        }
    }

    #[test]
    fn flux_free_requires_classical() {
        // a vortex-sheet interior state
        let alpha: f64 = 0.2;
        let z = State::new(
            Vec2::new(alpha, 0.0),
            Vec2::ZERO,
            SymTraceless2::new(0.5 * alpha * alpha, -0.5 * (1.0 - alpha * alpha) * 0.5),
            0.38,
        );
        let p = Pressure(alpha * alpha / 2.0 - 0.38);
        let z = State { m: z.v * (z.e + p.0), ..z };
        assert!(matches!(
            chain_to_k(&z, p, 10.0),
            Err(Error::ClassicalCaseRequired)
        ));
        let chain = chain_any(&z, p, 10.0).unwrap();
        for k in chain.terminals() {
            assert!(in_k(&k, p, 1e-8));
        }
    }

    #[test]
    fn perturbation_examples() {
        let p = Pressure(0.0);
        let k = State::on_constraint(Vec2::new(0.5, 0.5), 0.0);
        assert_eq!(find_perturbation(&k, p, 10.0, 0.5).unwrap(), State::ZERO);

        let z = second_example();
        let gamma = gamma_eps(1.0, 1.0);
        let zbar = find_perturbation(&z, p, gamma, 0.5).unwrap();
        let d = dist_to_k(&z, p, Some(gamma));
        assert!(zbar.norm() >= d / 14.0);

        let boundary = State::new(Vec2::new(1.0, 0.0), Vec2::ZERO, SymTraceless2::ZERO, 0.5);
        assert!(matches!(
            find_perturbation(&boundary, p, 10.0, 0.5),
            Err(Error::NotInHullInterior { .. })
        ));
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_bound(Pressure(0.3), Pressure(0.3), 2.0), 0.0);
        assert!((hausdorff_bound(Pressure(0.0), Pressure(0.1), 2.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sampled_hausdorff_within_bound() {
        let gamma: f64 = 2.0;
        let (p1, p2) = (Pressure(0.0), Pressure(0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = (2.0 * gamma).sqrt();
        let sample = |rng: &mut ChaCha8Rng, p: f64| -> Vec<State> {
            (0..1000)
                .map(|_| {
                    let rad = r * rng.gen::<f64>().sqrt();
                    let th = rng.gen_range(0.0..std::f64::consts::TAU);
                    State::on_constraint(Vec2::new(rad * th.cos(), rad * th.sin()), p)
                })
                .collect()
        };
        let a = sample(&mut rng, p1.0);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let b = sample(&mut rng2, p2.0);
        let one_sided = |x: &[State], y: &[State]| {
            x.iter()
                .map(|s| y.iter().map(|t| (*s - *t).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        let est = one_sided(&a, &b).max(one_sided(&b, &a));
        assert!(est <= hausdorff_bound(p1, p2, gamma) + 1e-12);
    }

    fn interior_with_flux() -> impl Strategy<Value = (State, f64)> {
        (prop::array::uniform7(-1.0f64..1.0), 1e-3f64..1.0, -1.0f64..1.0).prop_map(
            |(x, slack, p)| {
                let mut z = State::from_array(x);
                z.e = lambda_max_vvs(&z) + slack;
                (z, p)
            },
        )
    }

    /// Raw `(v, f, sigma, slack)` draws; the energy is fixed by [`with_margin`].
    fn sufficient_states() -> impl Strategy<Value = (State, f64)> {
        (prop::array::uniform7(-1.0f64..1.0), 1e-3f64..1.0, -1.0f64..1.0).prop_map(
            |(x, slack, p)| {
                let mut z = State::from_array(x);
                z.e = slack;
                (z, p)
            },
        )
    }

    /// Interprets `z.m` as the flux defect and `z.e` as the slack and
    /// returns the state with `e = lambda_max + eps |f| + slack`.
    fn with_margin(raw: State, p: f64, eps: f64) -> (State, Pressure) {
        let f = raw.m;
        let mut z = raw;
        z.e = lambda_max_vvs(&z) + eps * f.norm() + raw.e;
        z.m = f + z.v * (z.e + p);
        (z, Pressure(p))
    }

    proptest! {
        #[test]
        fn chain_reaches_k((z, p) in interior_with_flux()) {
            let p = Pressure(p);
            prop_assume!(flux_defect(&z, p).norm() > 1e-6);
            let chain = chain_to_k(&z, p, f64::INFINITY).unwrap();
            for seg in chain.segments() {
                prop_assert!(seg.s1 < 0.0 && seg.s2 > 0.0);
                prop_assert!(wave_cone_contains(&seg.direction, tolerances::CONE_RELATIVE));
            }
            if let Some(s2) = chain.stage2 {
                prop_assert_eq!(s2.direction.e, 0.0);
                for end in s2.endpoints() {
                    let df = flux_defect(&end, p) - flux_defect(&z, p);
                    prop_assert!(df.norm() <= 1e-12 * (1.0 + z.norm()));
                }
            }
            for k in chain.terminals() {
                prop_assert!(k_residual_relative(&k, p) <= 1e-8);
            }
        }

        #[test]
        fn capped_chain_stays_below_gamma(
            (z, p) in sufficient_states(),
            eps in prop::sample::select(vec![0.5, 1.0, 2.0]),
        ) {
            let (z, p) = with_margin(z, p, eps);
            let c = suff_condition(&z, p, eps);
            prop_assert!(c.holds);
            prop_assume!(flux_defect(&z, p).norm() > 1e-6);
            let gamma = gamma_eps(z.e, eps);
            let chain = chain_to_k(&z, p, gamma).unwrap();
            for seg in &chain.stage1 {
                prop_assert!(gamma_segment_check(&seg.base, p, gamma).unwrap());
            }
            for k in chain.terminals() {
                prop_assert!(k.e <= gamma);
            }
        }
    }

    #[test]
    fn perturbation_size_tracks_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let search = crate::state::DistSearch::new(64, 50);
        let (mut n, mut ok) = (0, 0);
        while n < 300 {
            let mut x = [0.0; 7];
            for c in &mut x {
                *c = rng.gen_range(-1.0..1.0);
            }
            let mut z = State::from_array(x);
            z.e = lambda_max_vvs(&z) + rng.gen_range(1e-3..1.0);
            let p = Pressure(rng.gen_range(-1.0..1.0));
            let gamma = gamma_eps(z.e.max(0.0), 1.0).max(z.e + 1.0);
            let Ok(zbar) = find_perturbation(&z, p, gamma, 0.5) else { continue };
            n += 1;
            if zbar.norm() >= search.dist(&z, p, Some(gamma)) / 14.0 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.99 * n as f64, "{ok}/{n}");
    }
}
