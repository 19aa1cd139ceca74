//! Explicit subsolutions: the flat vortex sheet and the shear-flow
//! subsolution of the density construction.

mod density;
mod vortex;

pub use density::{
    adaptive_simpson, density_subsolution, DensitySubsolution, DensitySubsolutionSpec, Dissipation,
    ShearProfile,
};
pub use vortex::{sheet_energy_balance, vortex_sheet, EnergyBalance, VortexSheet, VortexSheetSpec};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Point, SpaceTimeGrid};
use crate::state::{flux_defect, stress_defect, suff_condition, Pressure, State, Vec2};

/// State, pressure and dissipation density at a space-time point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubSample {
    pub state: State,
    pub pressure: Pressure,
    pub mu: f64,
}

/// A solution of the linear system with pressure, given pointwise.
pub trait Subsolution: Send + Sync {
    fn sample(&self, y: Point) -> SubSample;

    /// Whether `y` lies in the turbulent zone.
    fn in_zone(&self, y: Point) -> bool;

    fn horizon(&self) -> f64;

    fn initial_velocity(&self, x: [f64; 2]) -> Vec2;

    fn initial_energy(&self, x: [f64; 2]) -> f64 {
        0.5 * self.initial_velocity(x).norm_sq()
    }
}

impl<S: Subsolution + ?Sized> Subsolution for Box<S> {
    fn sample(&self, y: Point) -> SubSample {
        (**self).sample(y)
    }
    fn in_zone(&self, y: Point) -> bool {
        (**self).in_zone(y)
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn initial_velocity(&self, x: [f64; 2]) -> Vec2 {
        (**self).initial_velocity(x)
    }
    fn initial_energy(&self, x: [f64; 2]) -> f64 {
        (**self).initial_energy(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesesReport {
    pub eps: f64,
    /// Smallest sufficient-condition margin over zone samples.
    pub min_zone_margin: f64,
    pub zone_samples: usize,
    /// Largest `max(stress defect, flux defect)` outside the zone.
    pub max_k_violation_outside: f64,
    pub outside_samples: usize,
    pub max_mu: f64,
    /// Largest jump of the state across located zone boundaries.
    pub max_boundary_jump: f64,
    pub boundary_checks: usize,
}

impl HypothesesReport {
    pub fn passes(&self, k_tol: f64, jump_tol: f64) -> bool {
        (self.zone_samples == 0 || self.min_zone_margin > 0.0)
            && self.max_k_violation_outside <= k_tol
            && self.max_mu <= 0.0
            && self.max_boundary_jump <= jump_tol
    }
}

/// Samples the conditions of the convex-integration theorem: the
/// sufficient condition with `eps` in the zone, the constraints outside,
/// `mu <= 0`, and continuity across the zone boundary (located by
/// bisection along `x2` between neighbouring nodes).
pub fn verify_main_theorem_hypotheses<S: Subsolution + ?Sized>(
    field: &S,
    eps: f64,
    grid: &SpaceTimeGrid,
) -> HypothesesReport {
    let mut r = HypothesesReport {
        eps,
        min_zone_margin: f64::INFINITY,
        zone_samples: 0,
        max_k_violation_outside: 0.0,
        outside_samples: 0,
        max_mu: f64::NEG_INFINITY,
        max_boundary_jump: 0.0,
        boundary_checks: 0,
    };
    for (i, j, k, y) in grid.nodes() {
        let s = field.sample(y);
        r.max_mu = r.max_mu.max(s.mu);
        let inside = field.in_zone(y);
        if inside {
            r.zone_samples += 1;
            r.min_zone_margin = r
                .min_zone_margin
                .min(suff_condition(&s.state, s.pressure, eps).margin);
        } else {
            r.outside_samples += 1;
            let v = stress_defect(&s.state).max(flux_defect(&s.state, s.pressure).norm());
            r.max_k_violation_outside = r.max_k_violation_outside.max(v);
        }
        if j + 1 < grid.ny {
            let y2 = grid.point(i, j + 1, k);
            if field.in_zone(y2) != inside {
                r.boundary_checks += 1;
                r.max_boundary_jump = r.max_boundary_jump.max(boundary_jump(field, y, y2));
            }
        }
    }
    r
}

fn boundary_jump<S: Subsolution + ?Sized>(field: &S, a: Point, b: Point) -> f64 {
    let za = field.in_zone(a);
    let (mut lo, mut hi) = (a[1], b[1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if field.in_zone([a[0], mid, a[2]]) == za {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s1 = field.sample([a[0], lo, a[2]]).state;
    let s2 = field.sample([a[0], hi, a[2]]).state;
    (s1 - s2).norm()
}

/// Configuration of a subsolution, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsolutionSpec {
    VortexSheet {
        delta: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
    },
    Density {
        delta: f64,
        #[serde(default = "default_horizon")]
        horizon: f64,
        #[serde(default = "default_mu")]
        mu: Dissipation,
        shear: ShearProfile,
    },
}

fn default_horizon() -> f64 {
    1.0
}

fn default_mu() -> Dissipation {
    Dissipation::Zero
}

impl SubsolutionSpec {
    pub fn build(&self) -> Result<Box<dyn Subsolution>> {
        Ok(match self {
            SubsolutionSpec::VortexSheet { delta, horizon } => Box::new(vortex_sheet(VortexSheetSpec {
                delta: *delta,
                horizon: *horizon,
            })?),
            SubsolutionSpec::Density {
                delta,
                horizon,
                mu,
                shear,
            } => Box::new(density_subsolution(DensitySubsolutionSpec {
                shear: shear.clone(),
                delta: *delta,
                mu: mu.clone(),
                horizon: *horizon,
            })?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheet_hypotheses() {
        let sheet = vortex_sheet(VortexSheetSpec { delta: 0.5, horizon: 1.0 }).unwrap();
        let g = SpaceTimeGrid::new(4, 64, 8, 1e-3, 1.0);
        let r = verify_main_theorem_hypotheses(&sheet, 1.0, &g);
        assert!(r.zone_samples > 0 && r.outside_samples > 0);
        assert!(r.min_zone_margin > 0.0);
        assert!(r.max_k_violation_outside <= 1e-12);
        assert_eq!(r.max_mu, 0.0);
        assert!(r.boundary_checks > 0);
        assert!(r.max_boundary_jump <= 1e-8);
        assert!(r.passes(1e-12, 1e-8));
    }

    #[test]
    fn spec_from_json() {
        let s: SubsolutionSpec = serde_json::from_str(r#"{"kind":"vortex_sheet","delta":0.25}"#).unwrap();
        assert_eq!(s, SubsolutionSpec::VortexSheet { delta: 0.25, horizon: 1.0 });
        let d: SubsolutionSpec = serde_json::from_str(
            r#"{"kind":"density","delta":0.1,"mu":{"mu":"constant","value":-0.05},
                "shear":{"profile":"sine","amplitude":0.5,"k":2}}"#,
        )
        .unwrap();
        let f = d.build().unwrap();
        assert!(f.in_zone([0.0, 0.0, 0.5]));
        let bad: SubsolutionSpec = serde_json::from_str(
            r#"{"kind":"density","delta":0.1,"mu":{"mu":"constant","value":-0.5},
                "shear":{"profile":"step"}}"#,
        )
        .unwrap();
        assert!(bad.build().is_err());
    }
}
