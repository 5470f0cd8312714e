use super::{HurstParam, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::quadrature::tanh_sinh;
use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::{beta::beta, gamma::gamma};

/// Covariance of fractional Brownian motion,
/// `R(s, t) = (s^2H + t^2H - |t - s|^2H) / 2`.
pub fn covariance(s: f64, t: f64, h: HurstParam) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) || !s.is_finite() || !t.is_finite() {
        return Err(invalid(format!("covariance needs finite nonnegative times, got ({s}, {t})")));
    }
    Ok(raw_covariance(s, t, 2.0 * h.value()))
}

fn raw_covariance(s: f64, t: f64, two_h: f64) -> f64 {
    0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Volterra kernel `K_H(t, s)` with `B_t = ∫_0^t K_H(t, s) dW_s`, for `0 < s < t`.
///
/// Uses the usual normalisation under which `∫ K_H(t,u) K_H(s,u) du = R(s,t)`.
/// The remaining integrals are taken after a power substitution that removes
/// the singularity at `u = s`.
pub fn kernel_kh(t: f64, s: f64, h: HurstParam) -> Result<f64> {
    if !(s > 0.0 && s < t && t.is_finite()) {
        return Err(invalid(format!("kernel needs 0 < s < t, got t = {t}, s = {s}")));
    }
    let hv = h.value();
    if hv == 0.5 {
        return Ok(1.0);
    }
    const TOL: f64 = 1e-12;
    if hv > 0.5 {
        let a = hv - 0.5;
        let c = (hv * (2.0 * hv - 1.0) / beta(2.0 - 2.0 * hv, a)).sqrt();
        // ∫_s^t (u-s)^(H-3/2) u^(H-1/2) du with w = (u-s)^a.
        let inner = tanh_sinh(|w| (s + w.powf(1.0 / a)).powf(a), 0.0, (t - s).powf(a), TOL) / a;
        Ok(c * s.powf(-a) * inner)
    } else {
        let b = hv + 0.5;
        let c = (2.0 * hv / (gamma(2.0 - 2.0 * hv) * gamma(b) / gamma(1.5 - hv))).sqrt();
        // ∫_s^t u^(H-3/2) (u-s)^(H-1/2) du with w = (u-s)^b.
        let inner = tanh_sinh(|w| (s + w.powf(1.0 / b)).powf(hv - 1.5), 0.0, (t - s).powf(b), TOL) / b;
        let lead = (t / s).powf(hv - 0.5) * (t - s).powf(hv - 0.5);
        Ok(c * (lead + (0.5 - hv) * s.powf(0.5 - hv) * inner))
    }
}

/// Covariance matrix of a grid together with its Cholesky factor.
///
/// A grid starting at 0 has its first point dropped from the matrix, since
/// the process is pinned there.
#[derive(Debug, Clone)]
pub struct CovarianceGrid {
    grid: TimeGrid,
    hurst: HurstParam,
    pinned_origin: bool,
    entries: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter_rounds: usize,
}

impl CovarianceGrid {
    pub fn build(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        let pinned_origin = grid.t_start() == 0.0;
        let offset = usize::from(pinned_origin);
        let times: Vec<f64> = grid.times().skip(offset).collect();
        let m = times.len();
        let two_h = 2.0 * h.value();
        let entries = DMatrix::from_fn(m, m, |i, j| {
            // Fill symmetrically from the upper triangle so symmetry is exact.
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            raw_covariance(times[a], times[b], two_h)
        });
        let jitter = 1e-12 * entries.trace() / m as f64;
        let mut work = entries.clone();
        for round in 0..=3 {
            if let Some(chol) = work.clone().cholesky() {
                if round > 0 {
                    log::debug!("covariance factorised after {round} jitter rounds");
                }
                return Ok(Self { grid, hurst: h, pinned_origin, entries, factor: chol.unpack(), jitter_rounds: round });
            }
            for i in 0..m {
                work[(i, i)] += jitter;
            }
        }
        Err(Error::Synthesis(format!("covariance of {m} points is not positive definite after 3 jitter rounds")))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    /// Whether the grid's first point (t = 0) was left out of the matrix.
    pub fn pinned_origin(&self) -> bool {
        self.pinned_origin
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Lower-triangular Cholesky factor of the (possibly jittered) entries.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter_rounds(&self) -> usize {
        self.jitter_rounds
    }

    /// `R(t_i, t_j)` for indices of the full grid, including a pinned origin.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if self.pinned_origin {
            if i == 0 || j == 0 {
                return 0.0;
            }
            self.entries[(i - 1, j - 1)]
        } else {
            self.entries[(i, j)]
        }
    }

    /// Smallest eigenvalue of the unjittered matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance(1.0, 1.0, h(0.3)).unwrap(), 1.0);
        assert!((covariance(0.3, 0.7, h(0.5)).unwrap() - 0.3).abs() < 1e-15);
        // The s^2H and |t-s|^2H terms cancel when t = 2s.
        assert!((covariance(0.5, 1.0, h(0.75)).unwrap() - 0.5).abs() < 1e-15);
        assert!(covariance(-0.1, 1.0, h(0.5)).is_err());
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(kernel_kh(0.5, 0.5, h(0.7)).is_err());
        assert!(kernel_kh(0.5, 0.0, h(0.7)).is_err());
        assert_eq!(kernel_kh(0.9, 0.2, h(0.5)).unwrap(), 1.0);
    }

    #[test]
    fn kernel_near_diagonal() {
        // K_H(t, s) ~ C (t - s)^(H - 1/2) as s -> t.
        for (hv, expect_zero) in [(0.7, true), (0.3, false)] {
            let k1 = kernel_kh(1.0, 1.0 - 1e-4, h(hv)).unwrap();
            let k2 = kernel_kh(1.0, 1.0 - 1e-6, h(hv)).unwrap();
            let ratio = k2 / k1;
            let expected = 1e-2f64.powf(hv - 0.5);
            assert!((ratio / expected - 1.0).abs() < 0.02, "H={hv}: ratio {ratio} vs {expected}");
            assert_eq!(k2 < k1, expect_zero);
        }
    }

    #[test]
    fn grid_examples() {
        let g = CovarianceGrid::build(TimeGrid::new(2, 0.5, 1.0).unwrap(), h(0.5)).unwrap();
        assert_eq!(g.entries().as_slice(), &[0.5, 0.5, 0.5, 1.0]);
        let g = CovarianceGrid::build(TimeGrid::unit(65).unwrap(), h(0.3)).unwrap();
        assert!(g.pinned_origin());
        assert_eq!(g.entries().nrows(), 64);
        for i in 0..64 {
            let t = (i + 1) as f64 / 64.0;
            assert!((g.entries()[(i, i)] - t.powf(0.6)).abs() < 1e-15);
        }
        assert!(g.min_eigenvalue() >= -1e-10);
        assert_eq!(g.value(0, 5), 0.0);
        assert_eq!(g.entries(), &g.entries().transpose());
    }
}
