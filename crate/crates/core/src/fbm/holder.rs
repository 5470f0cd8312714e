use super::SamplePath;
use crate::error::{Error, Result};
use crate::stats::linear_fit;

fn max_increment(path: &SamplePath, lag: usize) -> f64 {
    (0..path.n_points() - lag).map(|i| path.distance(i, i + lag)).fold(0.0, f64::max)
}

fn max_block_increment(path: &SamplePath, lag: usize) -> f64 {
    (0..(path.n_points() - 1) / lag).map(|k| path.distance(k * lag, (k + 1) * lag)).fold(0.0, f64::max)
}

/// Empirical Hölder exponent: slope of the log largest increment against the
/// log lag, over dyadic lags up to 1/64 of the path.
///
/// Increments are taken over disjoint blocks. The largest of `k` such
/// Gaussian increments grows like `sqrt(2 ln k)`; dividing that factor out
/// removes a downward bias of order 0.05 at typical grid sizes.
pub fn holder_exponent(path: &SamplePath) -> Result<f64> {
    let intervals = path.n_points() - 1;
    let h = path.grid().spacing();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut lag = 1;
    while lag * 64 <= intervals {
        let m = max_block_increment(path, lag);
        if m > 0.0 {
            let blocks = (intervals / lag) as f64;
            x.push((lag as f64 * h).ln());
            y.push((m / (2.0 * blocks.ln()).sqrt()).ln());
        }
        lag *= 2;
    }
    if x.len() < 3 {
        return Err(Error::Degenerate(format!("{} points are too few to estimate a Hölder exponent", path.n_points())));
    }
    Ok(linear_fit(&x, &y)?.slope)
}

/// Hölder seminorm `sup |X_t - X_s| / |t - s|^gamma`, with the supremum taken
/// over dyadic lags.
pub fn holder_seminorm(path: &SamplePath, gamma: f64) -> f64 {
    let h = path.grid().spacing();
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag < path.n_points() {
        best = best.max(max_increment(path, lag) / (lag as f64 * h).powf(gamma));
        lag *= 2;
    }
    best
}
