//! Weak-form verification of the linear system, spectral pressure
//! recovery, dissipation extraction and energy admissibility.

mod battery;
mod energy;
mod pressure;
mod residual;

pub use battery::{ScalarSpatial, TestFn, TestFunctionBattery, TestKind, TimeProfile, VectorSpatial};
pub use energy::{admissibility_check, dissipation_extract, AdmissibilityReport};
pub use pressure::{compare_pressure, pressure_recovery, PressureComparison};
pub use residual::{
    box_residuals, linear_system_residual, weak_residuals, Identity, ResidualEntry, WeakResidualReport,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceTimeGrid;
    use crate::subsolutions::{vortex_sheet, VortexSheetSpec};

    #[test]
    fn sheet_weak_residuals_small() {
        // the sheet is independent of x1, so x1 is resolved coarsely
        let sheet = vortex_sheet(VortexSheetSpec { delta: 0.4, horizon: 1.0 }).unwrap();
        let b = TestFunctionBattery::default();
        let grid = SpaceTimeGrid::new(16, 256, 64, 0.0, 1.0);
        let report = linear_system_residual(&sheet, &b, &grid).unwrap();
        assert!(report.max_residual() < 1e-3, "{}", report.max_residual());
        assert!(report.max_for(Identity::Divergence) < 1e-12);
    }

    #[test]
    fn under_resolved_battery_is_rejected() {
        let sheet = vortex_sheet(VortexSheetSpec { delta: 0.4, horizon: 1.0 }).unwrap();
        let b = TestFunctionBattery::default();
        let grid = SpaceTimeGrid::new(4, 4, 4, 0.0, 1.0);
        assert!(matches!(
            linear_system_residual(&sheet, &b, &grid),
            Err(crate::Error::ResolutionTooCoarse { .. })
        ));
    }
}
