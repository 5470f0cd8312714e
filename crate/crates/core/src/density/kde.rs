use super::EPSILON;
use crate::error::{invalid, Error, Result};
use crate::fbm::SamplePath;
use crate::harness::Pipeline;
use crate::stats::{linear_fit, median, quantile, quantile_sorted, LinearFit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MIN_INCREMENT_ENSEMBLE: usize = 10_000;
pub const MIN_BIVARIATE_ENSEMBLE: usize = 100_000;
pub const MIN_POSITIVITY_ENSEMBLE: usize = 1000;
const MAX_LATTICE: usize = 10_000;
/// Kernel support in bandwidths; the Gaussian weight beyond it is below 1e-7.
const CUTOFF: f64 = 6.0;

/// Product-Gaussian kernel density estimate with the reference bandwidth
/// `1.06 σ̂ m^{-1/(4+d)}` per coordinate.
#[derive(Debug, Clone)]
pub struct Kde {
    dim: usize,
    /// Row-major samples sorted by their first coordinate.
    samples: Vec<f64>,
    bandwidth: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Kde {
    pub fn new(mut samples: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
            return Err(invalid("samples must be a nonempty row-major block of the given dimension"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("samples contain non-finite values"));
        }
        let m = samples.len() / dim;
        let factor = 1.06 * (m as f64).powf(-1.0 / (4.0 + dim as f64));
        let (mut mean, mut sd, mut bandwidth) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        for k in 0..dim {
            let col: Vec<f64> = samples.iter().skip(k).step_by(dim).copied().collect();
            let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
            if !(iqr > 0.0) {
                return Err(Error::Degenerate(format!("bandwidth collapse: coordinate {k} has zero interquartile range")));
            }
            mean[k] = col.iter().sum::<f64>() / m as f64;
            sd[k] = (col.iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / (m - 1).max(1) as f64).sqrt();
            bandwidth[k] = factor * sd[k];
        }
        let mut rows: Vec<&[f64]> = samples.chunks_exact(dim).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        samples = rows.concat();
        Ok(Self { dim, samples, bandwidth, mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    /// Number of samples within `reach` bandwidths of `x` in every coordinate.
    pub fn support_count(&self, x: &[f64], reach: f64) -> usize {
        self.window(x, reach).filter(|r| r.iter().zip(x).zip(&self.bandwidth).all(|((v, c), b)| (v - c).abs() <= reach * b)).count()
    }

    fn window<'a>(&'a self, x: &[f64], reach: f64) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (lo, hi) = (x[0] - reach * self.bandwidth[0], x[0] + reach * self.bandwidth[0]);
        let rows = self.samples.chunks_exact(self.dim);
        let n = self.len();
        let first = partition(n, |i| self.samples[i * self.dim] < lo);
        let last = partition(n, |i| self.samples[i * self.dim] <= hi);
        rows.skip(first).take(last - first)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "evaluation point has the wrong dimension");
        let norm: f64 = self.bandwidth.iter().map(|b| (2.0 * PI).sqrt() * b).product::<f64>() * self.len() as f64;
        let sum: f64 = self
            .window(x, CUTOFF)
            .map(|r| {
                let q: f64 = r.iter().zip(x).zip(&self.bandwidth).map(|((v, c), b)| ((v - c) / b).powi(2)).sum();
                (-0.5 * q).exp()
            })
            .sum();
        sum / norm
    }

    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<f64> {
        points.par_iter().map(|p| self.eval(p)).collect()
    }

    /// Regular lattice over `mean ± radius_sd·sd` with `per_axis` points per
    /// coordinate, first coordinate slowest.
    pub fn central_lattice(&self, radius_sd: f64, per_axis: usize) -> Vec<Vec<f64>> {
        let lo: Vec<f64> = self.mean.iter().zip(&self.sd).map(|(m, s)| m - radius_sd * s).collect();
        let hi: Vec<f64> = self.mean.iter().zip(&self.sd).map(|(m, s)| m + radius_sd * s).collect();
        lattice(&lo, &hi, per_axis)
    }
}

/// First index in `0..n` where `pred` turns false.
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn lattice(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let step = |k: usize, i: usize| if per_axis == 1 { 0.5 * (lo[k] + hi[k]) } else { lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64 };
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                p[k] = step(k, flat % per_axis);
                flat /= per_axis;
            }
            p
        })
        .collect()
}

/// KDE of `X_t - X_s` at a set of centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub centers: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub ensemble_size: usize,
    pub interval: (f64, f64),
}

impl DensityEstimate {
    /// Trapezoid integral over the centers, which must form a lattice.
    pub fn lattice_mass(&self, per_axis: usize) -> Result<f64> {
        let d = self.centers.first().map_or(0, Vec::len);
        if d == 0 || per_axis < 2 || per_axis.pow(d as u32) != self.centers.len() {
            return Err(invalid("centers are not a lattice with the given points per axis"));
        }
        let last = &self.centers[self.centers.len() - 1];
        let spacing: Vec<f64> = (0..d).map(|k| (last[k] - self.centers[0][k]) / (per_axis - 1) as f64).collect();
        let mut total = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let mut w = 1.0;
            let mut f = flat;
            for _ in 0..d {
                let i = f % per_axis;
                f /= per_axis;
                if i == 0 || i == per_axis - 1 {
                    w *= 0.5;
                }
            }
            total += w * v;
        }
        Ok(total * spacing.iter().product::<f64>())
    }
}

fn check_ensemble(pipeline: &Pipeline, min: usize) -> Result<()> {
    let m = pipeline.spec().ensemble;
    if m < min {
        return Err(invalid(format!("this estimate needs an ensemble of at least {min}, got {m}")));
    }
    Ok(())
}

fn check_times(path_range: (f64, f64), s: f64, t: f64) -> Result<()> {
    if !(s >= EPSILON - 1e-12 && s < t && t <= path_range.1 + 1e-12) {
        return Err(invalid(format!("need {EPSILON} <= s < t <= {}, got s = {s}, t = {t}", path_range.1)));
    }
    Ok(())
}

fn state_at(path: &SamplePath, t: f64) -> &[f64] {
    path.row(path.grid().nearest_index(t))
}

/// Ensemble samples of `X_t - X_s`, row-major.
pub fn increment_samples(pipeline: &Pipeline, interval: (f64, f64)) -> Result<Vec<f64>> {
    let (s, t) = interval;
    check_times(pipeline.spec().t_range, s, t)?;
    let tally = pipeline.map(pipeline.spec().ensemble, |_, p| {
        Ok(state_at(&p, t).iter().zip(state_at(&p, s)).map(|(a, b)| a - b).collect::<Vec<f64>>())
    })?;
    Ok(tally.values.concat())
}

/// Estimates the density of `X_t - X_s` at `centers`, or on a central
/// lattice when `centers` is `None`.
pub fn kde_increment(pipeline: &Pipeline, interval: (f64, f64), centers: Option<Vec<Vec<f64>>>, lattice: (f64, usize)) -> Result<DensityEstimate> {
    check_ensemble(pipeline, MIN_INCREMENT_ENSEMBLE)?;
    let d = pipeline.fields().dim_state;
    let kde = Kde::new(increment_samples(pipeline, interval)?, d)?;
    let centers = centers.unwrap_or_else(|| kde.central_lattice(lattice.0, lattice.1));
    if centers.iter().any(|c| c.len() != d) {
        return Err(invalid(format!("centers must have {d} coordinates")));
    }
    Ok(DensityEstimate { values: kde.eval_many(&centers), centers, bandwidth: kde.bandwidth().to_vec(), ensemble_size: kde.len(), interval })
}

/// Line through the upper decile of `log y` in equal-width bins of `x`.
pub fn upper_envelope(x: &[f64], y: &[f64], n_bins: usize) -> Result<LinearFit> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &v)| v > 0.0).map(|(&a, &v)| (a, v.ln())).collect();
    if pts.is_empty() || n_bins < 3 {
        return Err(invalid("envelope fit needs positive values and at least three bins"));
    }
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.0), h.max(p.0)));
    let width = (hi - lo) / n_bins as f64;
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
    for p in pts {
        let k = if width > 0.0 { (((p.0 - lo) / width) as usize).min(n_bins - 1) } else { 0 };
        bins[k].push(p);
    }
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for b in bins.into_iter().filter(|b| !b.is_empty()) {
        let mut ys: Vec<f64> = b.iter().map(|p| p.1).collect();
        ys.sort_by(f64::total_cmp);
        bx.push(b.iter().map(|p| p.0).sum::<f64>() / b.len() as f64);
        by.push(quantile_sorted(&ys, 0.9));
    }
    if bx.len() < 3 {
        return Err(Error::Degenerate(format!("only {} nonempty envelope bins", bx.len())));
    }
    linear_fit(&bx, &by)
}

/// Envelope of `log p(z)·(t-s)^{dH}` against `|z|^{(2H+1)∧2}`.
pub fn increment_envelope(est: &DensityEstimate, hurst: f64, n_bins: usize) -> Result<LinearFit> {
    let d = est.centers.first().map_or(1, Vec::len) as f64;
    let a = (2.0 * hurst + 1.0).min(2.0);
    let scale = (est.interval.1 - est.interval.0).powf(d * hurst);
    let x: Vec<f64> = est.centers.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().powf(a)).collect();
    let y: Vec<f64> = est.values.iter().map(|v| v * scale).collect();
    upper_envelope(&x, &y, n_bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    Positive,
    /// Some lattice point has no ensemble mass within the kernel support.
    NotObserved,
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityScan {
    pub min_value: f64,
    pub lattice_points: usize,
    pub ensemble_size: usize,
    pub verdict: Positivity,
}

/// Minimum KDE of `X_t` over a lattice on the box `window`.
pub fn positivity_scan(pipeline: &Pipeline, t: f64, window: (&[f64], &[f64]), per_axis: usize) -> Result<PositivityScan> {
    let d = pipeline.fields().dim_state;
    let (lo, hi) = window;
    if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
        return Err(invalid(format!("window must be a box in R^{d}")));
    }
    if t < EPSILON - 1e-12 || t > pipeline.spec().t_range.1 + 1e-12 {
        return Err(invalid(format!("t = {t} lies outside [{EPSILON}, {}]", pipeline.spec().t_range.1)));
    }
    let lattice_points = per_axis.checked_pow(d as u32).unwrap_or(usize::MAX);
    if per_axis == 0 || lattice_points > MAX_LATTICE {
        return Err(invalid(format!("lattice must have between 1 and {MAX_LATTICE} points")));
    }
    let m = pipeline.spec().ensemble;
    let untestable = |min_value| PositivityScan { min_value, lattice_points, ensemble_size: m, verdict: Positivity::Untestable };
    if m < MIN_POSITIVITY_ENSEMBLE {
        return Ok(untestable(f64::NAN));
    }
    let samples = pipeline.map(m, |_, p| Ok(state_at(&p, t).to_vec()))?.values.concat();
    let kde = Kde::new(samples, d)?;
    let points = lattice(lo, hi, per_axis);
    let centre: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let half_reach = lo.iter().zip(hi).zip(kde.bandwidth()).map(|((a, b), w)| 0.5 * (b - a) / w).fold(0.0, f64::max) + CUTOFF;
    if kde.support_count(&centre, half_reach) == 0 {
        return Ok(untestable(0.0));
    }
    let min_value = kde.eval_many(&points).into_iter().fold(f64::INFINITY, f64::min);
    let verdict = if min_value > 0.0 { Positivity::Positive } else { Positivity::NotObserved };
    Ok(PositivityScan { min_value, lattice_points, ensemble_size: kde.len(), verdict })
}

/// Joint KDE of `(X_s, X_t)` at `(z, z + o·e₁)`, with `z` the coordinatewise
/// median of `X_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateProfile {
    pub base: Vec<f64>,
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub ensemble_size: usize,
    pub s: f64,
    pub t: f64,
}

/// Ensemble samples of `(X_s, X_t)`, row-major with `2 d` columns.
pub fn joint_samples(pipeline: &Pipeline, s: f64, t: f64) -> Result<Vec<f64>> {
    check_times(pipeline.spec().t_range, s, t)?;
    Ok(pipeline.map(pipeline.spec().ensemble, |_, p| Ok([state_at(&p, s), state_at(&p, t)].concat()))?.values.concat())
}

impl BivariateProfile {
    pub fn from_samples(samples: Vec<f64>, d: usize, s: f64, t: f64, offsets: &[f64]) -> Result<Self> {
        if d == 0 || !samples.len().is_multiple_of(2 * d) {
            return Err(invalid("joint samples must have 2 d columns"));
        }
        let base: Vec<f64> = (0..d).map(|k| median(&samples.iter().skip(k).step_by(2 * d).copied().collect::<Vec<_>>())).collect();
        let kde = Kde::new(samples, 2 * d)?;
        let points: Vec<Vec<f64>> = offsets
            .iter()
            .map(|&o| {
                let mut p = [base.clone(), base.clone()].concat();
                p[d] += o;
                p
            })
            .collect();
        Ok(Self {
            values: kde.eval_many(&points),
            base,
            offsets: offsets.to_vec(),
            bandwidth: kde.bandwidth().to_vec(),
            ensemble_size: kde.len(),
            s,
            t,
        })
    }
}

pub fn kde_bivariate_decay(pipeline: &Pipeline, s: f64, t: f64, offsets: &[f64]) -> Result<BivariateProfile> {
    check_ensemble(pipeline, MIN_BIVARIATE_ENSEMBLE)?;
    BivariateProfile::from_samples(joint_samples(pipeline, s, t)?, pipeline.fields().dim_state, s, t, offsets)
}

/// Envelope of `log p` against `|o|^{2γ} / (t-s)^{2γ²}` with `γ = 0.9 H`.
pub fn bivariate_envelope(profile: &BivariateProfile, hurst: f64, n_bins: usize) -> Result<LinearFit> {
    let g = 0.9 * hurst;
    let scale = (profile.t - profile.s).powf(2.0 * g * g);
    let x: Vec<f64> = profile.offsets.iter().map(|o| o.abs().powf(2.0 * g) / scale).collect();
    upper_envelope(&x, &profile.values, n_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn gaussian_density_is_recovered() {
        let kde = Kde::new(normals(20_000, 1, 1), 1).unwrap();
        let exact = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        for x in [-1.5, 0.0, 0.7, 2.0] {
            let v = kde.eval(&[x]);
            assert!((v / exact(x) - 1.0).abs() < 0.08, "x = {x}: {v} vs {}", exact(x));
        }
        let kde2 = Kde::new(normals(20_000, 2, 2), 2).unwrap();
        assert!((kde2.eval(&[0.0, 0.0]) * 2.0 * PI - 1.0).abs() < 0.1);
    }

    #[test]
    fn lattice_mass_is_one() {
        let kde = Kde::new(normals(5000, 1, 3), 1).unwrap();
        let centers = kde.central_lattice(5.0, 201);
        let est = DensityEstimate { values: kde.eval_many(&centers), centers, bandwidth: kde.bandwidth().to_vec(), ensemble_size: 5000, interval: (0.1, 1.0) };
        let mass = est.lattice_mass(201).unwrap();
        assert!((0.9..=1.05).contains(&mass), "{mass}");
    }

    #[test]
    fn constant_samples_collapse() {
        assert!(matches!(Kde::new(vec![1.0; 100], 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn eval_matches_brute_force() {
        let samples = normals(300, 2, 4);
        let kde = Kde::new(samples.clone(), 2).unwrap();
        let b = kde.bandwidth().to_vec();
        let x = [0.3, -0.2];
        let brute: f64 = samples
            .chunks_exact(2)
            .map(|r| (-0.5 * (((r[0] - x[0]) / b[0]).powi(2) + ((r[1] - x[1]) / b[1]).powi(2))).exp())
            .sum::<f64>()
            / (300.0 * 2.0 * PI * b[0] * b[1]);
        assert!((kde.eval(&x) - brute).abs() < 1e-9 * brute);
    }

    #[test]
    fn envelope_of_planted_decay() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.02).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (-2.0 * v).exp() * if i % 3 == 0 { 1.0 } else { 0.3 }).collect();
        let f = upper_envelope(&x, &y, 10).unwrap();
        assert!((f.slope + 2.0).abs() < 0.05 && f.r_squared > 0.99);
    }

    #[test]
    fn lattice_layout() {
        let l = lattice(&[0.0, 10.0], &[1.0, 12.0], 3);
        assert_eq!(l.len(), 9);
        assert_eq!(l[1], vec![0.0, 11.0]);
        assert_eq!(l[8], vec![1.0, 12.0]);
    }
}
