use crate::error::{invalid, Error, Result};
use crate::fbm::SamplePath;
use crate::stats::{linear_fit, median};
use serde::{Deserialize, Serialize};

/// Finite set of points in `R^k`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim_embed: usize,
    points: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim_embed: usize, points: Vec<f64>) -> Result<Self> {
        if dim_embed == 0 || points.is_empty() || !points.len().is_multiple_of(dim_embed) {
            return Err(invalid(format!("{} coordinates do not form a non-empty {dim_embed}-dimensional cloud", points.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Self { dim_embed, points })
    }

    pub fn dim_embed(&self) -> usize {
        self.dim_embed
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim_embed
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim_embed..(i + 1) * self.dim_embed]
    }

    /// Largest coordinate extent over the axes.
    pub fn span(&self) -> f64 {
        (0..self.dim_embed)
            .map(|k| {
                let (lo, hi) = self
                    .points
                    .iter()
                    .skip(k)
                    .step_by(self.dim_embed)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Median distance between consecutive points, the sampling resolution
    /// of a cloud traced along a path.
    pub fn median_step(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let steps: Vec<f64> = (1..self.len())
            .map(|i| self.point(i).iter().zip(self.point(i - 1)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        median(&steps)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        Self::new(self.dim_embed, points)
    }
}

/// The image `{X_t}` of a path.
pub fn image_cloud(path: &SamplePath) -> PointCloud {
    PointCloud { dim_embed: path.dim(), points: path.values().to_vec() }
}

/// The graph `{(t, X_t)}` of a path; time is left unscaled.
pub fn graph_cloud(path: &SamplePath) -> PointCloud {
    let mut points = Vec::with_capacity(path.n_points() * (path.dim() + 1));
    for (t, row) in path.grid().times().zip(path.rows()) {
        points.push(t);
        points.extend_from_slice(row);
    }
    PointCloud { dim_embed: path.dim() + 1, points }
}

/// Number of origin-anchored cells of side `epsilon` holding at least one
/// point.
pub fn box_count(cloud: &PointCloud, epsilon: f64) -> usize {
    assert!(epsilon > 0.0, "box side must be positive");
    let k = cloud.dim_embed;
    let cell = |v: f64| (v / epsilon).floor();
    let fits = k <= 4 && cloud.points.iter().all(|&v| cell(v).abs() < 2.0f64.powi(31));
    if fits {
        // Four 32-bit cell indices packed into one sortable key.
        let mut keys: Vec<u128> = cloud
            .points
            .chunks_exact(k)
            .map(|p| p.iter().fold(0u128, |acc, &v| (acc << 32) | ((cell(v) as i64 + (1 << 31)) as u128)))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    } else {
        let mut keys: Vec<Vec<i64>> = cloud.points.chunks_exact(k).map(|p| p.iter().map(|&v| cell(v) as i64).collect()).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// Log-log regression of box counts against scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Scales actually fitted, decreasing.
    pub scales_used: Vec<f64>,
    pub counts: Vec<usize>,
    /// Set when every point coincides; the slope is then reported as 0.
    pub degenerate: bool,
}

impl DimensionEstimate {
    fn degenerate() -> Self {
        Self { slope: 0.0, intercept: 0.0, r_squared: 0.0, scales_used: Vec::new(), counts: Vec::new(), degenerate: true }
    }
}

fn geometric_ladder(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    let ratio = (lo / hi).ln() / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { lo } else { hi * (ratio * k as f64).exp() }).collect()
}

fn fit(scales: Vec<f64>, counts: Vec<usize>) -> Result<DimensionEstimate> {
    let x: Vec<f64> = scales.iter().map(|e| -e.ln()).collect();
    let y: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let f = linear_fit(&x, &y)?;
    Ok(DimensionEstimate { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, scales_used: scales, counts, degenerate: false })
}

fn is_degenerate(cloud: &PointCloud) -> bool {
    let first = cloud.point(0);
    (1..cloud.len()).all(|i| cloud.point(i) == first)
}

/// Box-counting slope over `n_scales` geometric scales spanning `eps_range`.
pub fn box_dimension(cloud: &PointCloud, eps_range: (f64, f64), n_scales: usize) -> Result<DimensionEstimate> {
    let (lo, hi) = eps_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!("scale range ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    if n_scales < 4 {
        return Err(invalid(format!("at least 4 scales are needed, got {n_scales}")));
    }
    if is_degenerate(cloud) {
        return Ok(DimensionEstimate::degenerate());
    }
    let scales = geometric_ladder(hi, lo, n_scales);
    let counts = scales.iter().map(|&e| box_count(cloud, e)).collect();
    fit(scales, counts)
}

/// Placement of the scale ladder relative to the cloud.
///
/// Scales run from `top_fraction * span` down to
/// `max(floor_factor * resolution, floor_span_fraction * span)`; scales whose
/// count reaches `saturation * len` are dropped as unresolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub top_fraction: f64,
    pub floor_factor: f64,
    pub floor_span_fraction: f64,
    pub n_scales: usize,
    pub saturation: f64,
}

impl Default for ScaleLadder {
    fn default() -> Self {
        Self { top_fraction: 1.0 / 8.0, floor_factor: 4.0, floor_span_fraction: 1.0 / 1024.0, n_scales: 8, saturation: 0.25 }
    }
}

/// Box-counting slope over the validity window of a sampled cloud whose
/// points are `resolution` apart.
pub fn box_dimension_auto(cloud: &PointCloud, resolution: f64, ladder: &ScaleLadder) -> Result<DimensionEstimate> {
    if is_degenerate(cloud) {
        return Ok(DimensionEstimate::degenerate());
    }
    let span = cloud.span();
    let hi = ladder.top_fraction * span;
    let lo = (ladder.floor_factor * resolution).max(ladder.floor_span_fraction * span);
    if !(lo < hi) {
        return Err(Error::Degenerate(format!("resolution floor {lo:e} is above the top scale {hi:e}")));
    }
    let limit = ladder.saturation * cloud.len() as f64;
    let (mut scales, mut counts) = (Vec::new(), Vec::new());
    for e in geometric_ladder(hi, lo, ladder.n_scales.max(2)) {
        let c = box_count(cloud, e);
        if (c as f64) < limit {
            scales.push(e);
            counts.push(c);
        }
    }
    if scales.len() < 4 {
        return Err(Error::Degenerate(format!(
            "only {} of {} scales are resolved by {} points",
            scales.len(),
            ladder.n_scales,
            cloud.len()
        )));
    }
    fit(scales, counts)
}
