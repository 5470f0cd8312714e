//! Fractional Brownian motion: parameters, grids, sampled paths and exact
//! synthesis.

mod covariance;
mod generate;
mod holder;
mod io;

pub use covariance::{covariance, kernel_kh, CovarianceGrid};
pub use generate::{generate_cholesky, generate_circulant, CholeskyGenerator, CirculantGenerator, Generator, GeneratorKind};
pub use holder::{holder_exponent, holder_seminorm};

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Largest grid accepted by the Cholesky sampler.
pub const CHOLESKY_MAX_N: usize = 8192;

/// Hurst index restricted to `(1/4, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.25 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(invalid(format!("hurst must lie in (0.25, 1), got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Signature depth needed to lift a path of this regularity:
    /// 2 above H = 1/3, 3 below.
    pub fn signature_depth(self) -> usize {
        if self.0 > 1.0 / 3.0 {
            2
        } else {
            3
        }
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// Uniform grid of `n_points` times from `t_start` to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_points: usize,
    t_start: f64,
    t_end: f64,
}

impl TimeGrid {
    pub fn new(n_points: usize, t_start: f64, t_end: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(invalid("a time grid needs at least two points"));
        }
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < 0.0 || t_end <= t_start {
            return Err(invalid(format!("bad time range [{t_start}, {t_end}]")));
        }
        Ok(Self { n_points, t_start, t_end })
    }

    /// `n_points` times covering `[0, 1]`.
    pub fn unit(n_points: usize) -> Result<Self> {
        Self::new(n_points, 0.0, 1.0)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            return self.t_end;
        }
        self.t_start + (self.t_end - self.t_start) * i as f64 / (self.n_points - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.time(i))
    }

    /// Grid index closest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = ((t - self.t_start) / self.spacing()).round();
        x.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Every `stride`-th point; `stride` must divide `n_points - 1`.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.n_points - 1).is_multiple_of(stride) {
            return Err(invalid(format!("stride {stride} does not divide {} intervals", self.n_points - 1)));
        }
        Self::new((self.n_points - 1) / stride + 1, self.t_start, self.t_end)
    }
}

/// A `d`-dimensional path sampled on a uniform grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    pub hurst: Option<HurstParam>,
    pub seed: Option<u64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("path dimension must be positive"));
        }
        if values.len() != grid.n_points() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} points of dimension {dim}",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at row {}", i / dim)));
        }
        Ok(Self { grid, dim, values, hurst: None, seed: None })
    }

    /// Builds a path from a function of time.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_points() * dim);
        for t in grid.times() {
            let x = f(t);
            if x.len() != dim {
                return Err(Error::Shape(format!("closure returned {} coordinates, expected {dim}", x.len())));
            }
            values.extend(x);
        }
        Self::new(grid, dim, values)
    }

    pub fn with_tags(mut self, hurst: Option<HurstParam>, seed: Option<u64>) -> Self {
        self.hurst = hurst;
        self.seed = seed;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Euclidean distance between the states at two grid indices.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Every `stride`-th point.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.coarsen(stride)?;
        let values = self.rows().step_by(stride).flatten().copied().collect();
        Ok(Self { grid, dim: self.dim, values, hurst: self.hurst, seed: self.seed })
    }

    /// Points whose times lie in `[a, b]`, on the corresponding sub-grid.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        let tol = 1e-9 * self.grid.spacing();
        if a < self.grid.t_start() - tol || b > self.grid.t_end() + tol || b <= a {
            return Err(invalid(format!("[{a}, {b}] is not inside the path's time range")));
        }
        let i0 = self.grid.nearest_index(a);
        let i1 = self.grid.nearest_index(b);
        if i1 <= i0 {
            return Err(invalid(format!("[{a}, {b}] contains fewer than two grid points")));
        }
        let grid = TimeGrid::new(i1 - i0 + 1, self.grid.time(i0), self.grid.time(i1))?;
        let values = self.values[i0 * self.dim..(i1 + 1) * self.dim].to_vec();
        Ok(Self { grid, dim: self.dim, values, hurst: self.hurst, seed: self.seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_range_is_enforced() {
        assert!(HurstParam::new(0.25).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
        assert_eq!(HurstParam::new(0.3).unwrap().signature_depth(), 3);
        assert_eq!(HurstParam::new(0.34).unwrap().signature_depth(), 2);
    }

    #[test]
    fn grid_geometry() {
        let g = TimeGrid::new(5, 0.0, 1.0).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.times().collect::<Vec<_>>(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.coarsen(2).unwrap().n_points(), 3);
        assert!(g.coarsen(3).is_err());
        assert!(TimeGrid::new(1, 0.0, 1.0).is_err());
        assert!(TimeGrid::new(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn path_validation_and_restriction() {
        let g = TimeGrid::unit(11).unwrap();
        assert!(SamplePath::new(g, 1, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 11];
        v[3] = f64::NAN;
        assert!(SamplePath::new(g, 1, v).is_err());
        let p = SamplePath::from_fn(g, 1, |t| vec![t]).unwrap();
        let r = p.restrict(0.2, 0.6).unwrap();
        assert_eq!(r.n_points(), 5);
        assert!((r.row(0)[0] - 0.2).abs() < 1e-15);
        assert!((r.grid().t_end() - 0.6).abs() < 1e-15);
    }
}
