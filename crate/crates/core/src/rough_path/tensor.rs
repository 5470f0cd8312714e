use crate::error::{invalid, Error, Result};

pub const MAX_DEPTH: usize = 3;

/// Element of the truncated tensor algebra `T^N(R^d)`, `N <= 3`.
///
/// Levels are stored back to back, level `m` holding `d^m` entries in
/// row-major order: entry `(i1, .., im)` of an iterated integral has `i1`
/// as the earliest time.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    depth: usize,
    data: Vec<f64>,
}

/// Total storage for levels `0..=depth`.
pub(crate) fn tensor_len(dim: usize, depth: usize) -> usize {
    (0..=depth).map(|m| dim.pow(m as u32)).sum()
}

pub(crate) fn level_offset(dim: usize, m: usize) -> usize {
    (0..m).map(|k| dim.pow(k as u32)).sum()
}

fn check_shape(dim: usize, depth: usize) -> Result<()> {
    if dim == 0 {
        return Err(invalid("tensor dimension must be positive"));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(invalid(format!("depth must be 1..={MAX_DEPTH}, got {depth}")));
    }
    Ok(())
}

impl TruncatedTensor {
    pub fn identity(dim: usize, depth: usize) -> Result<Self> {
        check_shape(dim, depth)?;
        let mut data = vec![0.0; tensor_len(dim, depth)];
        data[0] = 1.0;
        Ok(Self { dim, depth, data })
    }

    /// Builds a tensor from levels `1..=depth`; level 0 is set to 1.
    pub fn from_levels(dim: usize, levels: &[Vec<f64>]) -> Result<Self> {
        let depth = levels.len();
        check_shape(dim, depth)?;
        let mut data = Vec::with_capacity(tensor_len(dim, depth));
        data.push(1.0);
        for (m, level) in levels.iter().enumerate() {
            if level.len() != dim.pow(m as u32 + 1) {
                return Err(Error::Shape(format!("level {} has {} entries, expected {}", m + 1, level.len(), dim.pow(m as u32 + 1))));
            }
            data.extend_from_slice(level);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tensor entries must be finite"));
        }
        Ok(Self { dim, depth, data })
    }

    pub(crate) fn from_raw(dim: usize, depth: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), tensor_len(dim, depth));
        Self { dim, depth, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, m: usize) -> &[f64] {
        let start = level_offset(self.dim, m);
        &self.data[start..start + self.dim.pow(m as u32)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::Shape(format!(
                "cannot multiply (d={}, N={}) by (d={}, N={})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        let mut out = vec![0.0; self.data.len()];
        concat_into(self.dim, self.depth, &self.data, &other.data, &mut out);
        Ok(Self::from_raw(self.dim, self.depth, out))
    }

    /// `max_m |level_m|^(1/m)` with Euclidean norms on each level.
    pub fn homogeneous_norm(&self) -> f64 {
        homogeneous_norm_raw(self.dim, self.depth, &self.data)
    }
}

/// Truncated product `(a ⊗ b)_m = Σ_k a_k ⊗ b_(m-k)` of two raw tensors.
pub(crate) fn concat_into(dim: usize, depth: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for m in 0..=depth {
        let om = level_offset(dim, m);
        let len_m = dim.pow(m as u32);
        let dst = &mut out[om..om + len_m];
        dst.fill(0.0);
        for k in 0..=m {
            let la = &a[level_offset(dim, k)..level_offset(dim, k) + dim.pow(k as u32)];
            let nb = dim.pow((m - k) as u32);
            let lb = &b[level_offset(dim, m - k)..level_offset(dim, m - k) + nb];
            for (i, &x) in la.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (d, &y) in dst[i * nb..(i + 1) * nb].iter_mut().zip(lb) {
                    *d += x * y;
                }
            }
        }
    }
}

pub(crate) fn homogeneous_norm_raw(dim: usize, depth: usize, data: &[f64]) -> f64 {
    (1..=depth)
        .map(|m| {
            let start = level_offset(dim, m);
            let sq: f64 = data[start..start + dim.pow(m as u32)].iter().map(|v| v * v).sum();
            sq.sqrt().powf(1.0 / m as f64)
        })
        .fold(0.0, f64::max)
}

/// Writes `exp(delta)` truncated at `depth` into `out`.
pub(crate) fn segment_into(delta: &[f64], depth: usize, out: &mut [f64]) {
    let dim = delta.len();
    out[0] = 1.0;
    out[1..=dim].copy_from_slice(delta);
    if depth >= 2 {
        let o2 = level_offset(dim, 2);
        for i in 0..dim {
            for j in 0..dim {
                out[o2 + i * dim + j] = 0.5 * delta[i] * delta[j];
            }
        }
    }
    if depth >= 3 {
        let o3 = level_offset(dim, 3);
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    out[o3 + (i * dim + j) * dim + k] = delta[i] * delta[j] * delta[k] / 6.0;
                }
            }
        }
    }
}

/// Signature of the straight segment with increment `delta`: `exp(delta)`.
pub fn segment_signature(delta: &[f64], depth: usize) -> Result<TruncatedTensor> {
    check_shape(delta.len(), depth)?;
    let mut data = vec![0.0; tensor_len(delta.len(), depth)];
    segment_into(delta, depth, &mut data);
    Ok(TruncatedTensor::from_raw(delta.len(), depth, data))
}

pub fn chen_concat(a: &TruncatedTensor, b: &TruncatedTensor) -> Result<TruncatedTensor> {
    a.concat(b)
}

pub fn homogeneous_norm(a: &TruncatedTensor) -> f64 {
    a.homogeneous_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        let z = segment_signature(&[0.0, 0.0], 3).unwrap();
        assert_eq!(z, TruncatedTensor::identity(2, 3).unwrap());
        let s = segment_signature(&[2.0], 2).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 2.0, 2.0]);
        let s = segment_signature(&[1.0, 1.0], 2).unwrap();
        assert_eq!(s.level(2), &[0.5; 4]);
        assert!(segment_signature(&[1.0], 4).is_err());
    }

    #[test]
    fn concat_examples() {
        let id = TruncatedTensor::identity(1, 2).unwrap();
        let one = segment_signature(&[1.0], 2).unwrap();
        assert_eq!(id.concat(&one).unwrap(), one);
        assert_eq!(one.concat(&one).unwrap(), segment_signature(&[2.0], 2).unwrap());
        let other = TruncatedTensor::identity(2, 2).unwrap();
        assert!(one.concat(&other).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(TruncatedTensor::identity(3, 2).unwrap().homogeneous_norm(), 0.0);
        let a = TruncatedTensor::from_levels(3, &[vec![3.0, 0.0, 0.0], vec![0.0; 9]]).unwrap();
        assert_eq!(a.homogeneous_norm(), 3.0);
        let b = TruncatedTensor::from_levels(2, &[vec![0.0, 0.0], vec![0.0, 4.0, 0.0, 0.0]]).unwrap();
        assert_eq!(b.homogeneous_norm(), 2.0);
    }
}
