//! Pinned numeric defaults, collected in one place.

/// Safety factor on every explicit stability bound.
pub const CFL_SAFETY: f64 = 0.4;

/// Cells below this fraction of the max density contribute nothing to the
/// degenerate speed integrand.
pub const VACUUM_THRESHOLD: f64 = 1e-12;

/// Tolerance on membership of the scaling-invariant line.
pub const CLASSIFIER_TOL: f64 = 1e-9;

/// Relative threshold defining the measured support of a field.
pub const SUPPORT_THRESHOLD_FRACTION: f64 = 1e-3;

/// Cells below this fraction of the max are dropped when a field becomes a
/// discrete measure.
pub const MEASURE_DROP: f64 = 1e-14;

/// Sinkhorn schedule: geometric in epsilon from START to END times the
/// squared box diameter.
pub const SINKHORN_EPS_START: f64 = 1e-1;
pub const SINKHORN_EPS_END: f64 = 1e-3;
pub const SINKHORN_STAGES: usize = 5;
pub const SINKHORN_ITER_CAP: usize = 10_000;
pub const SINKHORN_MARGINAL_TOL: f64 = 1e-8;

/// Exact transport is rejected above this support-size product.
pub const EXACT_OT_MAX_PRODUCT: usize = 4_000_000;

/// Characteristic integrator substeps per transport interval.
pub const ODE_SUBSTEPS: usize = 8;

/// Relative residual target of the implicit heat solve.
pub const HEAT_CG_TOL: f64 = 1e-10;

/// Relative tolerance of the self-similar profile normalization.
pub const BARENBLATT_MASS_TOL: f64 = 1e-10;

/// Slack accepted on the transported L^q growth law before a run aborts.
pub const LQ_GROWTH_SLACK: f64 = 0.05;

/// Transported values below this fraction of the output max are clamped
/// to zero (and logged); interpolation dust would otherwise widen the
/// tracked support by one cell per push. Matches the relative floor of
/// the support-margin guard.
pub const TRANSPORT_FLOOR: f64 = 1e-9;
