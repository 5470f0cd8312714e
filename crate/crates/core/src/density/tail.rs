use crate::error::{invalid, Error, Result};
use crate::fbm::SamplePath;
use crate::harness::Pipeline;
use crate::stats::{linear_fit, spearman, weighted_linear_fit};
use serde::{Deserialize, Serialize};

pub const MIN_TAIL_ENSEMBLE: usize = 1000;

/// Empirical `log P(sup_{s<=u<v<=t} |X_v - X_u| >= xi)` on a grid of `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub xi_values: Vec<f64>,
    /// `-inf` where no member exceeded `xi`.
    pub log_probs: Vec<f64>,
    pub ensemble_size: usize,
    pub interval: (f64, f64),
}

impl TailCurve {
    pub fn from_samples(samples: &[f64], xi_values: &[f64], interval: (f64, f64)) -> Result<Self> {
        if xi_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("xi values must be strictly increasing"));
        }
        if samples.is_empty() {
            return Err(invalid("no samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() as f64;
        let log_probs: Vec<f64> = xi_values
            .iter()
            .map(|&xi| {
                let below = sorted.partition_point(|&s| s < xi);
                ((sorted.len() - below) as f64 / m).ln()
            })
            .collect();
        if log_probs.iter().all(|v| v.is_infinite()) {
            log::warn!("no member exceeds any xi up to {:?}; the xi grid is too coarse", xi_values.last());
        }
        Ok(Self { xi_values: xi_values.to_vec(), log_probs, ensemble_size: samples.len(), interval })
    }
}

/// Largest distance between two states on `[s, t]`: the range for scalar
/// paths, the diameter of the convex hull in the plane, and a pairwise scan
/// otherwise.
pub fn sup_increment(path: &SamplePath, interval: (f64, f64)) -> Result<f64> {
    let g = path.grid();
    let (s, t) = interval;
    if !(s < t) || s < g.t_start() - 1e-12 || t > g.t_end() + 1e-12 {
        return Err(invalid(format!("interval ({s}, {t}) is not inside the path's time range")));
    }
    let (i0, i1) = (g.nearest_index(s), g.nearest_index(t));
    let rows = || (i0..=i1).map(|i| path.row(i));
    Ok(match path.dim() {
        1 => {
            let (lo, hi) = rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[0]), hi.max(r[0])));
            hi - lo
        }
        2 => {
            let hull = convex_hull(rows().map(|r| (r[0], r[1])).collect());
            let mut best: f64 = 0.0;
            for (k, a) in hull.iter().enumerate() {
                for b in &hull[k + 1..] {
                    best = best.max((a.0 - b.0).hypot(a.1 - b.1));
                }
            }
            best
        }
        _ => {
            let mut best: f64 = 0.0;
            for i in i0..=i1 {
                for j in i + 1..=i1 {
                    best = best.max(path.distance(i, j));
                }
            }
            best
        }
    })
}

/// Andrew's monotone chain.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sup-increments of every member over each interval: `result[k][member]`.
pub fn sup_increments(pipeline: &Pipeline, intervals: &[(f64, f64)]) -> Result<Vec<Vec<f64>>> {
    let m = pipeline.spec().ensemble;
    let tally = pipeline.map(m, |_, path| intervals.iter().map(|&iv| sup_increment(&path, iv)).collect::<Result<Vec<f64>>>())?;
    Ok((0..intervals.len()).map(|k| tally.values.iter().map(|v| v[k]).collect()).collect())
}

fn check_ensemble(pipeline: &Pipeline, min: usize) -> Result<()> {
    let m = pipeline.spec().ensemble;
    if m < min {
        return Err(invalid(format!("this estimate needs an ensemble of at least {min}, got {m}")));
    }
    Ok(())
}

pub fn tail_curve_sup_increment(pipeline: &Pipeline, interval: (f64, f64), xi_grid: &[f64]) -> Result<TailCurve> {
    check_ensemble(pipeline, MIN_TAIL_ENSEMBLE)?;
    let samples = sup_increments(pipeline, &[interval])?.remove(0);
    TailCurve::from_samples(&samples, xi_grid, interval)
}

/// Per-exponent fits of `log_prob` against `xi^a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub best_exponent: f64,
    pub exponents: Vec<f64>,
    pub slopes: Vec<f64>,
    pub r2s: Vec<f64>,
}

impl TailFit {
    pub fn r2_of(&self, a: f64) -> Option<f64> {
        self.exponents.iter().position(|&e| (e - a).abs() < 1e-9).map(|k| self.r2s[k])
    }
}

/// Fits every candidate exponent on the points with `0 < p < 1` and picks
/// the best R².
///
/// Points are weighted by `m p / (1 - p)`, the inverse variance of the
/// log of an empirical survival probability from `m` samples, so the
/// sparse far tail does not dominate the choice.
pub fn fit_tail_exponent(curve: &TailCurve, candidates: &[f64]) -> Result<TailFit> {
    if candidates.is_empty() {
        return Err(invalid("no candidate exponents"));
    }
    let (xi, lp): (Vec<f64>, Vec<f64>) = curve
        .xi_values
        .iter()
        .zip(&curve.log_probs)
        .filter(|(_, &l)| l.is_finite() && l < 0.0)
        .map(|(&x, &l)| (x, l))
        .unzip();
    if xi.len() < 5 {
        return Err(invalid(format!("only {} usable tail points; at least 5 are needed", xi.len())));
    }
    let m = curve.ensemble_size.max(1) as f64;
    let w: Vec<f64> = lp.iter().map(|l| m * l.exp() / -l.exp_m1()).collect();
    let mut fit = TailFit { best_exponent: f64::NAN, exponents: candidates.to_vec(), slopes: Vec::new(), r2s: Vec::new() };
    let mut best = f64::NEG_INFINITY;
    for &a in candidates {
        let x: Vec<f64> = xi.iter().map(|v| v.powf(a)).collect();
        let f = weighted_linear_fit(&x, &lp, &w)?;
        if f.r_squared > best {
            best = f.r_squared;
            fit.best_exponent = a;
        }
        fit.slopes.push(f.slope);
        fit.r2s.push(f.r_squared);
    }
    Ok(fit)
}

/// Tail probability at a fixed level over intervals of varying length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    /// `(t - s, log_prob)` per interval.
    pub points: Vec<(f64, f64)>,
    /// Slope of `log_prob` against `log(t - s)` over the finite points.
    pub slope: f64,
    /// Spearman correlation of `-log_prob` with `xi² / (t - s)^2H`.
    pub rank_correlation: f64,
}

pub fn scaling_check_time(pipeline: &Pipeline, intervals: &[(f64, f64)], xi_fixed: f64) -> Result<ScalingCheck> {
    check_ensemble(pipeline, MIN_TAIL_ENSEMBLE)?;
    ScalingCheck::from_samples(intervals, &sup_increments(pipeline, intervals)?, xi_fixed, pipeline.spec().hurst.value())
}

impl ScalingCheck {
    /// `sups[k]` holds the sup-increments over `intervals[k]`.
    pub fn from_samples(intervals: &[(f64, f64)], sups: &[Vec<f64>], xi_fixed: f64, hurst: f64) -> Result<Self> {
        if intervals.len() < 3 || intervals.iter().any(|iv| iv.0 != intervals[0].0) || sups.len() != intervals.len() {
            return Err(invalid("need at least three intervals sharing their start, each with samples"));
        }
        let mut points = Vec::new();
        for (iv, s) in intervals.iter().zip(sups) {
            let c = TailCurve::from_samples(s, &[xi_fixed], *iv)?;
            points.push((iv.1 - iv.0, c.log_probs[0]));
        }
        let finite: Vec<&(f64, f64)> = points.iter().filter(|p| p.1.is_finite()).collect();
        if finite.len() < 2 {
            log::warn!("xi = {xi_fixed} is never exceeded on {} of {} intervals", points.len() - finite.len(), points.len());
            return Err(Error::Degenerate(format!("xi = {xi_fixed} is exceeded on fewer than two intervals")));
        }
        let slope = linear_fit(
            &finite.iter().map(|p| p.0.ln()).collect::<Vec<_>>(),
            &finite.iter().map(|p| p.1).collect::<Vec<_>>(),
        )?
        .slope;
        let x: Vec<f64> = points.iter().map(|p| xi_fixed * xi_fixed / p.0.powf(2.0 * hurst)).collect();
        let y: Vec<f64> = points.iter().map(|p| -p.1).collect();
        Ok(Self { points, slope, rank_correlation: spearman(&x, &y) })
    }
}
