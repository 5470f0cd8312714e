use super::VectorFieldSet;
use crate::error::{invalid, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// Smallest eigenvalue of `V V*` over the sample points.
    pub lambda_min_observed: f64,
    pub lambda_requested: f64,
    pub sample_points: Vec<Vec<f64>>,
    pub pass: bool,
}

/// Checks `v* V V* v >= lambda |v|^2` at each sample point.
pub fn check_ellipticity(fields: &dyn VectorFieldSet, lambda: f64, sample_points: &[Vec<f64>]) -> Result<EllipticityReport> {
    let (n, d) = (fields.dim_state(), fields.dim_noise());
    if n != d {
        return Err(invalid(format!(
            "ellipticity is checked only for square systems; fields map R^{d} noise into R^{n}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if sample_points.is_empty() {
        return Err(invalid("no sample points given"));
    }
    let mut v = vec![0.0; n * d];
    let mut lambda_min = f64::INFINITY;
    for x in sample_points {
        if x.len() != n {
            return Err(invalid(format!("sample point has {} coordinates, expected {n}", x.len())));
        }
        fields.diffusion(x, &mut v);
        let m = DMatrix::from_row_slice(n, d, &v);
        let eig = SymmetricEigen::new(&m * m.transpose()).eigenvalues.min();
        lambda_min = lambda_min.min(eig);
    }
    Ok(EllipticityReport {
        lambda_min_observed: lambda_min,
        lambda_requested: lambda,
        sample_points: sample_points.to_vec(),
        pass: lambda_min >= lambda,
    })
}
