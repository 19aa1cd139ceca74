//! Perturbation driver and the finite-stage density pipeline.

mod density;
mod iterate;

pub use density::{
    density_stage1, density_stage2, density_stage3, Ball, DensityConfig, DensityReport,
    DensityStage1, DensityStage2, DensityStageLog,
};
pub use iterate::{
    iterate, wave_weak_check, Driver, DriverConfig, IterationLog, PerturbedField, StepRecord,
    StepStatus, SupportShape,
};
