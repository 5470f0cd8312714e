use super::signature::SignaturePath;
use super::tensor::{concat_into, homogeneous_norm_raw, TruncatedTensor};
use crate::error::{invalid, Result};
use crate::fbm::CovarianceGrid;
use serde::{Deserialize, Serialize};

/// Largest grid handled by the exact partition search.
pub const DP_MAX_N: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PVarMethod {
    /// Supremum over every sub-partition of the grid.
    Exact,
    /// Exact on grids up to [`DP_MAX_N`] points, otherwise exact on the
    /// coarsest-needed dyadic sub-grid (a lower bound).
    Dyadic,
}

/// A p-variation value and a partition attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    pub p: f64,
    pub value: f64,
    /// Grid indices of the partition, from 0 to the last point.
    pub argmax_partition: Vec<usize>,
}

pub fn p_variation(sig: &SignaturePath, p: f64) -> Result<PartitionValue> {
    p_variation_with(sig, p, PVarMethod::Exact)
}

pub fn p_variation_with(sig: &SignaturePath, p: f64, method: PVarMethod) -> Result<PartitionValue> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("p must be at least 1, got {p}")));
    }
    let n = sig.n_intervals() + 1;
    if n <= DP_MAX_N {
        return Ok(exact(sig, p));
    }
    match method {
        PVarMethod::Exact => Err(invalid(format!(
            "{n} points exceeds the exact p-variation limit of {DP_MAX_N}; use the dyadic method"
        ))),
        PVarMethod::Dyadic => {
            let mut stride = 1;
            while (n - 1).div_ceil(stride) + 1 > DP_MAX_N {
                stride *= 2;
            }
            let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
            if *idx.last().unwrap() != n - 1 {
                idx.push(n - 1);
            }
            let mut pv = exact(&sig.on_subgrid(&idx)?, p);
            pv.argmax_partition = pv.argmax_partition.iter().map(|&k| idx[k]).collect();
            Ok(pv)
        }
    }
}

/// Dynamic programme over grid indices: `best[j] = max_i best[i] + |x_ij|^p`,
/// with each `x_ij` grown from `x_i(j-1)` by one Chen product.
fn exact(sig: &SignaturePath, p: f64) -> PartitionValue {
    let (dim, depth) = (sig.dim(), sig.depth());
    let n = sig.n_intervals() + 1;
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut parent = vec![0usize; n];
    best[0] = 0.0;
    let identity = TruncatedTensor::identity(dim, depth).expect("valid shape").as_slice().to_vec();
    let mut acc = identity.clone();
    let mut tmp = identity.clone();
    for i in 0..n - 1 {
        acc.copy_from_slice(&identity);
        for j in i + 1..n {
            concat_into(dim, depth, &acc, sig.block(j - 1), &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
            let v = best[i] + homogeneous_norm_raw(dim, depth, &acc).powf(p);
            if v > best[j] {
                best[j] = v;
                parent[j] = i;
            }
        }
    }
    let mut partition = vec![n - 1];
    let mut k = n - 1;
    while k > 0 {
        k = parent[k];
        partition.push(k);
    }
    partition.reverse();
    PartitionValue { p, value: best[n - 1].powf(1.0 / p), argmax_partition: partition }
}

/// 2-D rho-variation of a covariance over pairs of dyadic partitions.
///
/// Row and column partitions range independently over the index-rounded
/// dyadic partitions of the grid; the result is the largest
/// `(Σ |R(rectangle)|^rho)^(1/rho)` found.
pub fn rho_variation_2d(cov: &CovarianceGrid, rho: f64) -> Result<f64> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be at least 1, got {rho}")));
    }
    let n = cov.grid().n_points();
    if n > DP_MAX_N {
        return Err(invalid(format!("{n} points exceeds the rho-variation limit of {DP_MAX_N}")));
    }
    let mut partitions = Vec::new();
    let mut parts = 1;
    while parts < n {
        partitions.push(
            (0..=parts)
                .map(|k| ((k as f64 * (n - 1) as f64) / parts as f64).round() as usize)
                .collect::<Vec<_>>(),
        );
        parts *= 2;
    }
    let r = |i: usize, j: usize| cov.value(i, j);
    let mut best: f64 = 0.0;
    for rows in &partitions {
        for cols in &partitions {
            let mut sum = 0.0;
            for a in rows.windows(2) {
                for b in cols.windows(2) {
                    let rect = r(a[1], b[1]) - r(a[1], b[0]) - r(a[0], b[1]) + r(a[0], b[0]);
                    sum += rect.abs().powf(rho);
                }
            }
            best = best.max(sum);
        }
    }
    Ok(best.powf(1.0 / rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{HurstParam, SamplePath, TimeGrid};
    use crate::rough_path::lift_path;

    fn path_1d(values: Vec<f64>) -> SignaturePath {
        let g = TimeGrid::unit(values.len()).unwrap();
        lift_path(&SamplePath::new(g, 1, values).unwrap(), 2).unwrap()
    }

    #[test]
    fn monotone_path_has_unit_variation() {
        let s = path_1d((0..33).map(|i| i as f64 / 32.0).collect());
        for p in [1.0, 1.5, 2.0, 3.0] {
            let v = p_variation(&s, p).unwrap();
            assert!((v.value - 1.0).abs() < 1e-12, "p={p}: {}", v.value);
            assert_eq!(v.argmax_partition.first(), Some(&0));
            assert_eq!(v.argmax_partition.last(), Some(&32));
        }
    }

    #[test]
    fn zigzag() {
        let v = p_variation(&path_1d(vec![0.0, 1.0, 0.0]), 2.0).unwrap();
        assert!((v.value - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(v.argmax_partition, vec![0, 1, 2]);
        assert!(p_variation(&path_1d(vec![0.0, 1.0]), 0.5).is_err());
    }

    #[test]
    fn dyadic_fallback_on_large_grids() {
        let s = path_1d((0..=5000).map(|i| (i as f64 * 0.01).sin()).collect());
        assert!(p_variation(&s, 2.0).is_err());
        let v = p_variation_with(&s, 1.0, PVarMethod::Dyadic).unwrap();
        // Total variation of sin over [0, 50].
        let tv: f64 = (1..=5000).map(|i| ((i as f64 * 0.01).sin() - ((i - 1) as f64 * 0.01).sin()).abs()).sum();
        assert!((v.value - tv).abs() / tv < 1e-3, "{} vs {tv}", v.value);
        assert_eq!(*v.argmax_partition.last().unwrap(), 5000);
    }

    #[test]
    fn rho_variation_examples() {
        let h = HurstParam::new(0.7).unwrap();
        let cov = CovarianceGrid::build(TimeGrid::new(2, 0.2, 0.9).unwrap(), h).unwrap();
        let direct = 0.7f64.powf(1.4);
        assert!((rho_variation_2d(&cov, 1.3).unwrap() - direct).abs() < 1e-12);

        let bm = CovarianceGrid::build(TimeGrid::unit(65).unwrap(), HurstParam::new(0.5).unwrap()).unwrap();
        for rho in [1.0, 2.0] {
            let v = rho_variation_2d(&bm, rho).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "rho={rho}: {v}");
        }
    }
}
