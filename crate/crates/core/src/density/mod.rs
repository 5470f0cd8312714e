//! Monte Carlo checks of the distributional estimates: tails of the largest
//! increment, and kernel density estimates of increments and of pairs of
//! states.

mod kde;
mod tail;

pub use kde::{
    bivariate_envelope, increment_envelope, kde_bivariate_decay, kde_increment, positivity_scan, BivariateProfile,
    DensityEstimate, Kde, Positivity, PositivityScan, MIN_BIVARIATE_ENSEMBLE, MIN_INCREMENT_ENSEMBLE, MIN_POSITIVITY_ENSEMBLE, increment_samples, joint_samples, upper_envelope,
};
pub use tail::{
    fit_tail_exponent, scaling_check_time, sup_increment, sup_increments, tail_curve_sup_increment, ScalingCheck,
    TailCurve, TailFit, MIN_TAIL_ENSEMBLE,
};

/// Start of the `[ε, 1]` window on which the density statements are made.
pub const EPSILON: f64 = 0.1;
