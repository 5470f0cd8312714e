//! Truncated tensor algebra, signatures of piecewise-linear paths, and the
//! p-variation and 2-D rho-variation functionals.

mod signature;
mod tensor;
mod variation;

pub use signature::{lift_path, SignatureDump, SignaturePath};
pub use tensor::{chen_concat, homogeneous_norm, segment_signature, TruncatedTensor, MAX_DEPTH};
pub use variation::{p_variation, p_variation_with, rho_variation_2d, PVarMethod, PartitionValue, DP_MAX_N};
