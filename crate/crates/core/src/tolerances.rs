//! Numerical tolerances shared by every module.
//!
//! Three tiers are used consistently:
//!
//! | tier | value | used for |
//! |------|-------|----------|
//! | membership | 1e-8 | constraint-set and hull membership of constructed states |
//! | identity | 1e-9 | algebraic identities (vanishing of `M`, root residuals) |
//! | linear algebra | 1e-12 | closed-form eigenvalues, kernel residuals |

/// Constructed states are accepted as members of `K` within this distance.
pub const MEMBERSHIP: f64 = 1e-8;

/// Algebraic identities that hold exactly in exact arithmetic.
pub const IDENTITY: f64 = 1e-9;

/// Small dense linear algebra.
pub const LINALG: f64 = 1e-12;

/// Relative singular-value threshold of the wave-cone kernel test.
pub const CONE_RELATIVE: f64 = 1e-10;

/// Below this magnitude `m - (e+p)v` is treated as zero.
pub const FLUX_ZERO: f64 = 1e-12;
