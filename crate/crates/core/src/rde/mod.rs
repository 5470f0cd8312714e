//! Rough differential equations `dX = V_0(X) dt + Σ V_i(X) dB^i`: vector
//! field sets, a rough Taylor solver and an ellipticity check.

mod ellipticity;
mod fields;
mod solver;

pub use ellipticity::{check_ellipticity, EllipticityReport};
pub use fields::{catalog, AnalyticFields, FiniteDifferenceFields, ScalarField, TrigTerm, VectorFieldSet, CATALOG};
pub use solver::{convergence_probe, solve, ConvergenceProbe, SchemeKind, SolverScheme, OVERFLOW_GUARD};
