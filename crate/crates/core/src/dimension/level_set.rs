use super::boxcount::{box_dimension_auto, DimensionEstimate, PointCloud, ScaleLadder};
use crate::error::{invalid, Result};
use crate::fbm::{holder_exponent, holder_seminorm, SamplePath};
use serde::{Deserialize, Serialize};

/// Grid times at which a path lies within `tube_radius` of `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub level: Vec<f64>,
    pub tube_radius: f64,
    pub times: Vec<f64>,
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Smallest meaningful tube radius for a sampled path: its Hölder seminorm
/// at `gamma = 0.9 Ĥ` times `spacing^gamma`, which bounds one-step wander.
pub fn tube_floor(path: &SamplePath) -> Result<f64> {
    let gamma = 0.9 * holder_exponent(path)?;
    Ok(holder_seminorm(path, gamma) * path.grid().spacing().powf(gamma))
}

/// Times with `|X_t - x| <= eta`. Callers are expected to keep `eta` above
/// [`tube_floor`]; smaller tubes miss crossings between grid points.
pub fn extract_level_set(path: &SamplePath, x: &[f64], eta: f64) -> Result<LevelSet> {
    if x.len() != path.dim() {
        return Err(invalid(format!("level has {} coordinates, path has {}", x.len(), path.dim())));
    }
    if !(eta > 0.0) {
        return Err(invalid(format!("tube radius must be positive, got {eta}")));
    }
    let eta2 = eta * eta;
    let times = path
        .grid()
        .times()
        .zip(path.rows())
        .filter(|(_, row)| row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= eta2)
        .map(|(t, _)| t)
        .collect();
    Ok(LevelSet { level: x.to_vec(), tube_radius: eta, times })
}

/// Box-counting dimension of a level set's times, resolved down to the grid
/// `spacing`.
pub fn level_set_dimension(set: &LevelSet, spacing: f64, ladder: &ScaleLadder) -> Result<DimensionEstimate> {
    if set.is_empty() {
        return Err(invalid("the level set is empty"));
    }
    let cloud = PointCloud::new(1, set.times.clone())?;
    box_dimension_auto(&cloud, spacing, ladder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::TimeGrid;

    #[test]
    fn monotone_path_crosses_once() {
        let p = SamplePath::from_fn(TimeGrid::unit(1001).unwrap(), 1, |t| vec![t]).unwrap();
        let floor = tube_floor(&p).unwrap();
        let eta = 0.0105;
        assert!(eta >= floor, "{floor}");
        let set = extract_level_set(&p, &[0.5], eta).unwrap();
        assert!(set.times.iter().all(|&t| (t - 0.5).abs() <= eta + 1e-12));
        assert_eq!(set.times.len(), 21);
        let inner = extract_level_set(&p, &[0.5], eta / 2.0).unwrap();
        assert!(inner.times.iter().all(|t| set.times.contains(t)));
        // An isolated crossing: the count stops growing once the scales pass
        // the tube width.
        let ladder = ScaleLadder { top_fraction: 1.0, floor_factor: 1.0, floor_span_fraction: 1e-3, n_scales: 6, saturation: 1.0 };
        let e = level_set_dimension(&LevelSet { times: vec![0.5], ..set }, 1e-3, &ladder).unwrap();
        assert!(e.degenerate && e.slope == 0.0);
    }
}
