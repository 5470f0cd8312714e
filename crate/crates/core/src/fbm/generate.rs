use super::{CovarianceGrid, HurstParam, SamplePath, TimeGrid, CHOLESKY_MAX_N};
use crate::error::{invalid, Error, Result};
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Relative spectral mass of negative embedding eigenvalues that may be
/// clipped to zero.
const NEG_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Cholesky,
    Circulant,
}

/// Exact sampler via the Cholesky factor of the grid covariance.
#[derive(Debug, Clone)]
pub struct CholeskyGenerator {
    cov: CovarianceGrid,
}

impl CholeskyGenerator {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        if grid.n_points() > CHOLESKY_MAX_N {
            return Err(invalid(format!(
                "{} points exceeds the Cholesky limit of {CHOLESKY_MAX_N}; use the circulant generator",
                grid.n_points()
            )));
        }
        Ok(Self { cov: CovarianceGrid::build(grid, h)? })
    }

    pub fn covariance(&self) -> &CovarianceGrid {
        &self.cov
    }

    pub fn sample(&self, dim: usize, seed: u64) -> SamplePath {
        let grid = *self.cov.grid();
        let l = self.cov.factor();
        let m = l.nrows();
        let offset = usize::from(self.cov.pinned_origin());
        let mut values = vec![0.0; grid.n_points() * dim];
        let mut z = vec![0.0; m];
        for j in 0..dim {
            let mut rng = substream(seed, j as u64);
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for i in 0..m {
                let mut acc = 0.0;
                for k in 0..=i {
                    acc += l[(i, k)] * z[k];
                }
                values[(i + offset) * dim + j] = acc;
            }
        }
        SamplePath::new(grid, dim, values)
            .expect("Cholesky sample is finite")
            .with_tags(Some(self.cov.hurst()), Some(seed))
    }
}

/// Davies-Harte sampler: circulant embedding of the fractional Gaussian
/// noise autocovariance, followed by a cumulative sum.
#[derive(Clone)]
pub struct CirculantGenerator {
    grid: TimeGrid,
    hurst: HurstParam,
    /// `sqrt(lambda_k / N)` for the length-N embedding.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantGenerator")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("embedding", &self.scale.len())
            .finish()
    }
}

fn fgn_autocovariance(k: usize, two_h: f64) -> f64 {
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

impl CirculantGenerator {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        if grid.t_start() != 0.0 {
            return Err(invalid("the circulant generator needs a grid starting at t = 0"));
        }
        let increments = grid.n_points() - 1;
        let mut half = increments.next_power_of_two();
        let mut planner = FftPlanner::new();
        for attempt in 0..2 {
            let n = 2 * half;
            let two_h = 2.0 * h.value();
            let mut buf: Vec<Complex<f64>> = (0..n)
                .map(|k| Complex::new(fgn_autocovariance(if k <= half { k } else { n - k }, two_h), 0.0))
                .collect();
            planner.plan_fft_forward(n).process(&mut buf);
            let total: f64 = buf.iter().map(|c| c.re.abs()).sum();
            let negative: f64 = buf.iter().map(|c| (-c.re).max(0.0)).sum();
            if negative <= NEG_EIG_TOL * total {
                let scale = buf.iter().map(|c| (c.re.max(0.0) / n as f64).sqrt()).collect();
                let fft = planner.plan_fft_forward(n);
                return Ok(Self { grid, hurst: h, scale, fft });
            }
            log::debug!("embedding of length {n} has negative mass {negative:e} (attempt {attempt})");
            half *= 2;
        }
        Err(Error::Synthesis(format!("circulant embedding is not nonnegative for H = {}", h.value())))
    }

    pub fn sample(&self, dim: usize, seed: u64) -> SamplePath {
        let n_points = self.grid.n_points();
        let step_scale = self.grid.spacing().powf(self.hurst.value());
        let mut values = vec![0.0; n_points * dim];
        let mut buf = vec![Complex::new(0.0, 0.0); self.scale.len()];
        for j in 0..dim {
            let mut rng = substream(seed, j as u64);
            for (b, &s) in buf.iter_mut().zip(&self.scale) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *b = Complex::new(s * re, s * im);
            }
            self.fft.process(&mut buf);
            let mut acc = 0.0;
            for i in 1..n_points {
                acc += buf[i - 1].re * step_scale;
                values[i * dim + j] = acc;
            }
        }
        SamplePath::new(self.grid, dim, values)
            .expect("circulant sample is finite")
            .with_tags(Some(self.hurst), Some(seed))
    }
}

/// Either sampler behind one interface, built once and reused across an
/// ensemble.
#[derive(Debug, Clone)]
pub enum Generator {
    Cholesky(CholeskyGenerator),
    Circulant(CirculantGenerator),
}

impl Generator {
    pub fn new(kind: GeneratorKind, grid: TimeGrid, h: HurstParam) -> Result<Self> {
        Ok(match kind {
            GeneratorKind::Cholesky => Self::Cholesky(CholeskyGenerator::new(grid, h)?),
            GeneratorKind::Circulant => Self::Circulant(CirculantGenerator::new(grid, h)?),
        })
    }

    pub fn sample(&self, dim: usize, seed: u64) -> SamplePath {
        match self {
            Self::Cholesky(g) => g.sample(dim, seed),
            Self::Circulant(g) => g.sample(dim, seed),
        }
    }
}

pub fn generate_cholesky(grid: TimeGrid, dim: usize, h: HurstParam, seed: u64) -> Result<SamplePath> {
    check_dim(dim)?;
    Ok(CholeskyGenerator::new(grid, h)?.sample(dim, seed))
}

pub fn generate_circulant(grid: TimeGrid, dim: usize, h: HurstParam, seed: u64) -> Result<SamplePath> {
    check_dim(dim)?;
    Ok(CirculantGenerator::new(grid, h)?.sample(dim, seed))
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(invalid("path dimension must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn samples_are_deterministic_and_pinned() {
        let g = TimeGrid::unit(33).unwrap();
        let a = generate_cholesky(g, 2, h(0.7), 11).unwrap();
        assert_eq!(a, generate_cholesky(g, 2, h(0.7), 11).unwrap());
        assert_eq!(a.row(0), &[0.0, 0.0]);
        let b = generate_circulant(g, 2, h(0.7), 11).unwrap();
        assert_eq!(b, generate_circulant(g, 2, h(0.7), 11).unwrap());
        assert_eq!(b.row(0), &[0.0, 0.0]);
        assert_ne!(b, generate_circulant(g, 2, h(0.7), 12).unwrap());
    }

    #[test]
    fn limits_are_enforced() {
        assert!(CholeskyGenerator::new(TimeGrid::unit(CHOLESKY_MAX_N + 1).unwrap(), h(0.5)).is_err());
        assert!(CirculantGenerator::new(TimeGrid::new(9, 0.5, 1.0).unwrap(), h(0.5)).is_err());
        assert!(generate_circulant(TimeGrid::unit(9).unwrap(), 0, h(0.5), 1).is_err());
    }

    #[test]
    fn embedding_spectrum_is_nonnegative_across_range() {
        for hv in [0.26, 0.4, 0.5, 0.75, 0.95] {
            for n in [2, 3, 17, 1025] {
                CirculantGenerator::new(TimeGrid::unit(n).unwrap(), h(hv)).unwrap();
            }
        }
    }
}
