use serde::{Deserialize, Serialize};

use super::{SubSample, Subsolution};
use crate::grid::{wrap, Point};
use crate::state::{Pressure, State, SymTraceless2, Vec2};

/// Flat vortex sheet `v0 = sgn(x2) e1` on `[-1/2, 1/2)^2` with the
/// self-similar mixing zone `{2 |x2| < t}`.
///
/// Inside the zone `alpha = 2 x2 / t`; outside `alpha = sgn(x2)`. Then
/// `v = (alpha, 0)`, `sigma = (alpha^2/2, -(1 - alpha^2)/4)`,
/// `e = 1/2 - delta (1 - alpha^2)/4`, `p = alpha^2/2 - e`, `m = (e + p) v`
/// and `mu = d_t e = -2 delta x2^2 / t^3` in the zone.
///
/// By periodicity the data also jump at `x2 = +-1/2`. There the two
/// states `+-e1` form a stationary weak solution (the interface flux
/// `alpha^2/4` is continuous), so no zone is opened; the fan from
/// `x2 = 0` reaches that line at `t = 1`, which bounds the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexSheetSpec {
    pub delta: f64,
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexSheet {
    pub delta: f64,
    pub horizon: f64,
    /// Zone states are evaluated at `max(t, t_min)`.
    pub t_min: f64,
}

pub fn vortex_sheet(spec: VortexSheetSpec) -> crate::Result<VortexSheet> {
    if !(0.0..1.0).contains(&spec.delta) {
        return Err(crate::Error::Config(format!(
            "vortex sheet delta = {} must lie in [0, 1)",
            spec.delta
        )));
    }
    if !(spec.horizon > 0.0 && spec.horizon <= 1.0) {
        return Err(crate::Error::Config(format!(
            "vortex sheet horizon = {} must lie in (0, 1]",
            spec.horizon
        )));
    }
    Ok(VortexSheet {
        delta: spec.delta,
        horizon: spec.horizon,
        t_min: 1e-6,
    })
}

fn sgn_pos(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl VortexSheet {
    pub fn alpha(&self, x2: f64, t: f64) -> f64 {
        let x2 = wrap(x2);
        if t <= 0.0 {
            return sgn_pos(x2);
        }
        let t = t.max(self.t_min);
        (2.0 * x2 / t).clamp(-1.0, 1.0)
    }

    /// Closed-form sufficient-condition margin `(1 - alpha^2)(1 - delta)/4`.
    pub fn margin_closed_form(&self, x2: f64, t: f64) -> f64 {
        let a = self.alpha(x2, t);
        (1.0 - a * a) * (1.0 - self.delta) / 4.0
    }
}

impl Subsolution for VortexSheet {
    fn sample(&self, y: Point) -> SubSample {
        let (x2, t) = (wrap(y[1]), y[2]);
        let a = self.alpha(x2, t);
        let q = 1.0 - a * a;
        let e = 0.5 - self.delta * q / 4.0;
        let p = a * a / 2.0 - e;
        let v = Vec2::new(a, 0.0);
        let mu = if self.in_zone(y) {
            let t = t.max(self.t_min);
            -2.0 * self.delta * x2 * x2 / (t * t * t)
        } else {
            0.0
        };
        SubSample {
            state: State::new(v, v * (e + p), SymTraceless2::new(a * a / 2.0, -q / 4.0), e),
            pressure: Pressure(p),
            mu,
        }
    }

    fn in_zone(&self, y: Point) -> bool {
        y[2] > 0.0 && 2.0 * wrap(y[1]).abs() < y[2]
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_velocity(&self, x: [f64; 2]) -> Vec2 {
        Vec2::new(sgn_pos(wrap(x[1])), 0.0)
    }
}

/// Energy balance of the sheet at time `t`, per unit area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    /// Central difference in `t` of the quadrature of `int 2e dx`.
    pub de_dt: f64,
    /// Quadrature of `2 int mu dx`.
    pub two_int_mu: f64,
}

/// Both sides of `d/dt int 2e dx = 2 int mu dx`, each by midpoint
/// quadrature in `x2` (the fields do not depend on `x1`) with `n` nodes.
pub fn sheet_energy_balance(sheet: &VortexSheet, t: f64, n: usize) -> crate::Result<EnergyBalance> {
    if !(t > 0.0 && t < 1.0) {
        return Err(crate::Error::PreconditionViolated(format!(
            "t = {t} must lie in (0, 1)"
        )));
    }
    let h = 1.0 / n as f64;
    let nodes = || (0..n).map(move |j| -0.5 + (j as f64 + 0.5) * h);
    let energy = |s: f64| -> f64 {
        nodes()
            .map(|x2| 2.0 * sheet.sample([0.0, x2, s]).state.e)
            .sum::<f64>()
            * h
    };
    let dt = 1e-3 * t.min(1.0 - t);
    let de_dt = (energy(t + dt) - energy(t - dt)) / (2.0 * dt);
    let two_int_mu = 2.0 * nodes().map(|x2| sheet.sample([0.0, x2, t]).mu).sum::<f64>() * h;
    Ok(EnergyBalance { de_dt, two_int_mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{in_k, lambda_max_vvs, suff_condition};

    fn sheet(delta: f64) -> VortexSheet {
        vortex_sheet(VortexSheetSpec { delta, horizon: 1.0 }).unwrap()
    }

    #[test]
    fn interior_example() {
        let s = sheet(0.5).sample([0.0, 0.1, 1.0]);
        assert!((s.state.v.x1 - 0.2).abs() < 1e-15);
        assert!((s.state.e - 0.38).abs() < 1e-15);
        assert!((s.mu + 0.01).abs() < 1e-15);
    }

    #[test]
    fn outside_zone_is_in_k() {
        let sh = sheet(0.5);
        let y = [0.0, 0.4, 0.5];
        assert!(!sh.in_zone(y));
        let s = sh.sample(y);
        assert_eq!(s.state.v, Vec2::new(1.0, 0.0));
        assert_eq!(s.state.e, 0.5);
        assert_eq!(s.state.sigma, SymTraceless2::diag(0.5));
        assert!(in_k(&s.state, s.pressure, 0.0));
        assert_eq!(s.mu, 0.0);
    }

    #[test]
    fn pressure_values() {
        let s = sheet(0.0).sample([0.0, 0.0, 0.5]);
        assert_eq!(s.pressure.0, -0.5);
        let s = sheet(0.3).sample([0.0, -0.45, 0.5]);
        assert_eq!(s.pressure.0, 0.0);
    }

    #[test]
    fn margin_and_eigenvalue_closed_forms() {
        for delta in [0.0, 0.5] {
            let sh = sheet(delta);
            for x2 in [-0.2, -0.05, 0.0, 0.13] {
                let y = [0.1, x2, 0.5];
                let s = sh.sample(y);
                let a = s.state.v.x1;
                assert!((lambda_max_vvs(&s.state) - (1.0 + a * a) / 4.0).abs() < 1e-15);
                let c = suff_condition(&s.state, s.pressure, 1.0);
                assert!((c.margin - sh.margin_closed_form(x2, 0.5)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn continuous_across_zone_boundary() {
        let sh = sheet(0.7);
        let t = 0.6;
        for sign in [-1.0, 1.0] {
            let b = sign * t / 2.0;
            let inside = sh.sample([0.0, b - sign * 1e-12, t]).state;
            let outside = sh.sample([0.0, b + sign * 1e-12, t]).state;
            assert!((inside - outside).norm() <= 1e-8);
        }
    }

    #[test]
    fn initial_slice() {
        let sh = sheet(0.5);
        let s = sh.sample([0.0, -0.1, 0.0]);
        assert_eq!(s.state.v, Vec2::new(-1.0, 0.0));
        assert_eq!(s.state.e, 0.5);
        assert_eq!(sh.initial_velocity([0.3, 0.2]), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn energy_balance_matches_exact_rate() {
        // int 2e dx = 1 - delta t / 3 and 2 int mu dx = -delta / 3
        let b = sheet(0.5).sample([0.0, 0.0, 0.5]);
        assert!(b.mu == 0.0);
        let eb = sheet_energy_balance(&sheet(0.5), 0.5, 10_000).unwrap();
        assert!((eb.two_int_mu + 1.0 / 6.0).abs() < 1e-6);
        assert!((eb.de_dt - eb.two_int_mu).abs() <= 1e-3 * eb.two_int_mu.abs());
        let z = sheet_energy_balance(&sheet(0.0), 0.5, 1000).unwrap();
        assert_eq!(z.two_int_mu, 0.0);
        assert!(z.de_dt.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(vortex_sheet(VortexSheetSpec { delta: 1.0, horizon: 1.0 }).is_err());
        assert!(vortex_sheet(VortexSheetSpec { delta: 0.5, horizon: 1.5 }).is_err());
    }
}
