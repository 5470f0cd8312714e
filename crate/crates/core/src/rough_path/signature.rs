use super::tensor::{concat_into, level_offset, segment_into, tensor_len, TruncatedTensor, MAX_DEPTH};
use crate::error::{invalid, Result};
use crate::fbm::{SamplePath, TimeGrid};
use serde::{Deserialize, Serialize};

/// Per-interval signatures of a path on a uniform grid.
///
/// Interval `i` spans grid points `i` and `i + 1`. Increments are stored
/// contiguously, one truncated tensor after another.
#[derive(Debug, Clone, PartialEq)]
pub struct SignaturePath {
    grid: TimeGrid,
    dim: usize,
    depth: usize,
    data: Vec<f64>,
}

/// Lifts a sampled path to its piecewise-linear signature.
///
/// Rejects a depth below what the path's Hurst tag requires.
pub fn lift_path(path: &SamplePath, depth: usize) -> Result<SignaturePath> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(invalid(format!("depth must be 1..={MAX_DEPTH}, got {depth}")));
    }
    if let Some(h) = path.hurst {
        if depth < h.signature_depth() {
            return Err(invalid(format!(
                "depth {depth} cannot lift a path with H = {}; it needs depth {}",
                h.value(),
                h.signature_depth()
            )));
        }
    }
    let dim = path.dim();
    let stride = tensor_len(dim, depth);
    let intervals = path.n_points() - 1;
    let mut data = vec![0.0; intervals * stride];
    let mut delta = vec![0.0; dim];
    for (i, block) in data.chunks_exact_mut(stride).enumerate() {
        for (k, d) in delta.iter_mut().enumerate() {
            *d = path.row(i + 1)[k] - path.row(i)[k];
        }
        segment_into(&delta, depth, block);
    }
    Ok(SignaturePath { grid: *path.grid(), dim, depth, data })
}

impl SignaturePath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_intervals(&self) -> usize {
        self.grid.n_points() - 1
    }

    fn stride(&self) -> usize {
        tensor_len(self.dim, self.depth)
    }

    /// Raw storage of interval `i`, levels 0 through depth.
    pub fn block(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.data[i * s..(i + 1) * s]
    }

    /// Level `m` of interval `i`.
    pub fn level(&self, i: usize, m: usize) -> &[f64] {
        let start = level_offset(self.dim, m);
        &self.block(i)[start..start + self.dim.pow(m as u32)]
    }

    pub fn increment(&self, i: usize) -> TruncatedTensor {
        TruncatedTensor::from_raw(self.dim, self.depth, self.block(i).to_vec())
    }

    /// Signature over grid points `i..=j`, the Chen product of the intervals
    /// in between.
    pub fn combined(&self, i: usize, j: usize) -> Result<TruncatedTensor> {
        if i > j || j > self.n_intervals() {
            return Err(invalid(format!("bad grid index pair ({i}, {j})")));
        }
        let mut acc = TruncatedTensor::identity(self.dim, self.depth)?.as_slice().to_vec();
        let mut tmp = acc.clone();
        for k in i..j {
            concat_into(self.dim, self.depth, &acc, self.block(k), &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
        }
        Ok(TruncatedTensor::from_raw(self.dim, self.depth, acc))
    }

    /// Chen-combines every `stride` consecutive intervals.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        let grid = self.grid.coarsen(stride)?;
        let mut data = Vec::with_capacity((grid.n_points() - 1) * self.stride());
        for k in 0..grid.n_points() - 1 {
            data.extend_from_slice(self.combined(k * stride, (k + 1) * stride)?.as_slice());
        }
        Ok(Self { grid, dim: self.dim, depth: self.depth, data })
    }

    /// Signature on the sub-grid through the given increasing grid indices.
    pub fn on_subgrid(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 || indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("sub-grid indices must be strictly increasing and at least two"));
        }
        let first = self.grid.time(indices[0]);
        let last = self.grid.time(*indices.last().unwrap());
        let grid = TimeGrid::new(indices.len(), first, last)?;
        let mut data = Vec::with_capacity((indices.len() - 1) * self.stride());
        for w in indices.windows(2) {
            data.extend_from_slice(self.combined(w[0], w[1])?.as_slice());
        }
        Ok(Self { grid, dim: self.dim, depth: self.depth, data })
    }

    pub fn dump(&self) -> SignatureDump {
        let increments = (0..self.n_intervals())
            .map(|i| (1..=self.depth).map(|m| self.level(i, m).to_vec()).collect())
            .collect();
        SignatureDump { dim: self.dim, depth: self.depth, grid: self.grid, increments }
    }
}

/// JSON shape of a lifted path: for each interval, levels `1..=depth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignatureDump {
    pub dim: usize,
    pub depth: usize,
    pub grid: TimeGrid,
    pub increments: Vec<Vec<Vec<f64>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::HurstParam;

    #[test]
    fn constant_path_lifts_to_identities() {
        let p = SamplePath::from_fn(TimeGrid::unit(5).unwrap(), 2, |_| vec![1.0, -3.0]).unwrap();
        let s = lift_path(&p, 3).unwrap();
        let id = TruncatedTensor::identity(2, 3).unwrap();
        for i in 0..4 {
            assert_eq!(s.increment(i), id);
        }
    }

    #[test]
    fn depth_must_match_hurst() {
        let p = SamplePath::from_fn(TimeGrid::unit(5).unwrap(), 1, |t| vec![t])
            .unwrap()
            .with_tags(Some(HurstParam::new(0.3).unwrap()), None);
        assert!(lift_path(&p, 2).is_err());
        assert!(lift_path(&p, 3).is_ok());
    }

    #[test]
    fn coarsen_matches_combined() {
        let p = SamplePath::from_fn(TimeGrid::unit(9).unwrap(), 2, |t| vec![t.sin(), (5.0 * t).cos()]).unwrap();
        let s = lift_path(&p, 2).unwrap();
        let c = s.coarsen(4).unwrap();
        assert_eq!(c.n_intervals(), 2);
        assert_eq!(c.increment(1), s.combined(4, 8).unwrap());
        let dump = serde_json::to_value(c.dump()).unwrap();
        assert_eq!(dump["increments"].as_array().unwrap().len(), 2);
    }
}
