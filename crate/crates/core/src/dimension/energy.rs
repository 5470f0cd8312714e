use crate::error::{invalid, Result};
use crate::fbm::SamplePath;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Discretised `∫∫ k(|X_t - X_s|) ds dt` with kernel `r^-gamma`, or
/// `log(e / min(r, 1))` when `gamma = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyValue {
    pub gamma: f64,
    /// `+inf` when two off-diagonal samples coincide.
    pub value: f64,
    /// Pairs closer than this in time are left out: one grid spacing.
    pub diagonal_cut: f64,
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

fn restricted(path: &SamplePath, restrict: (f64, f64)) -> Result<SamplePath> {
    let g = path.grid();
    if restrict.0 == g.t_start() && restrict.1 == g.t_end() {
        Ok(path.clone())
    } else {
        path.restrict(restrict.0, restrict.1)
    }
}

/// Trapezoid double sum over `restrict²` without the diagonal terms.
///
/// Leaving out the diagonal drops at most `h Σ_i w_i k(0+)`; for the
/// power kernel the continuum contribution of the band `|t - s| < h` is of
/// order `h^(1 - gamma H)` for an H-regular path, so the cut vanishes under
/// refinement exactly when the energy is finite.
pub fn energy_integral(path: &SamplePath, gamma: f64, restrict: (f64, f64)) -> Result<EnergyValue> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be a nonnegative number, got {gamma}")));
    }
    let p = restricted(path, restrict)?;
    let n = p.n_points();
    let h = p.grid().spacing();
    let w = trapezoid_weights(n, h);
    let kernel = move |r: f64| -> f64 {
        if gamma == 0.0 {
            1.0 - r.min(1.0).ln()
        } else {
            r.powf(-gamma)
        }
    };
    // Rows are summed in index order afterwards so the result does not depend
    // on how the work was split across threads.
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = p.row(i);
            let mut acc = 0.0;
            for j in i + 1..n {
                let r = xi.iter().zip(p.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if r == 0.0 {
                    return f64::INFINITY;
                }
                acc += w[j] * kernel(r);
            }
            2.0 * w[i] * acc
        })
        .collect();
    let value = rows.iter().sum();
    Ok(EnergyValue { gamma, value, diagonal_cut: h })
}

/// Mass and time-energy of `μ_n(dt) = (2πn)^(d/2) exp(-n |X_t - x|² / 2) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuMeasure {
    pub mass: f64,
    /// `∫∫ μ_n(ds) μ_n(dt) / |t - s|^gamma`, diagonal cut as in [`energy_integral`].
    pub gamma_energy: f64,
}

pub fn mu_measure(path: &SamplePath, x: &[f64], n: f64, gamma: f64, restrict: (f64, f64)) -> Result<MuMeasure> {
    if x.len() != path.dim() {
        return Err(invalid(format!("level has {} coordinates, path has {}", x.len(), path.dim())));
    }
    if !(n > 0.0) || !(gamma >= 0.0) {
        return Err(invalid(format!("need n > 0 and gamma >= 0, got n = {n}, gamma = {gamma}")));
    }
    if !(restrict.0 > 0.0) {
        return Err(invalid("the restriction must start after t = 0"));
    }
    let p = restricted(path, restrict)?;
    let m = p.n_points();
    let h = p.grid().spacing();
    let w = trapezoid_weights(m, h);
    let norm = (2.0 * std::f64::consts::PI * n).powf(p.dim() as f64 / 2.0);
    let g: Vec<f64> = p
        .rows()
        .zip(&w)
        .map(|(row, wi)| {
            let r2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            wi * norm * (-0.5 * n * r2).exp()
        })
        .collect();
    let mass = g.iter().sum();
    // The time kernel depends only on the lag.
    let lags: Vec<f64> = (1..m)
        .into_par_iter()
        .map(|lag| {
            let k = (lag as f64 * h).powf(-gamma);
            2.0 * k * (0..m - lag).map(|i| g[i] * g[i + lag]).sum::<f64>()
        })
        .collect();
    let gamma_energy = lags.iter().sum();
    Ok(MuMeasure { mass, gamma_energy })
}
