mod common;

use common::{mean_se, riemann_level2};
use fracdim::fbm::{generate_circulant, CovarianceGrid, HurstParam, SamplePath, TimeGrid};
use fracdim::rough_path::{
    chen_concat, homogeneous_norm, lift_path, p_variation, rho_variation_2d, segment_signature, TruncatedTensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_group_element(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> TruncatedTensor {
    // A product of a few segments is a genuine group element.
    let mut acc = TruncatedTensor::identity(dim, depth).unwrap();
    for _ in 0..3 {
        let delta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        acc = chen_concat(&acc, &segment_signature(&delta, depth).unwrap()).unwrap();
    }
    acc
}

#[test]
fn segment_examples() {
    let id = segment_signature(&[0.0, 0.0], 3).unwrap();
    assert_eq!(id, TruncatedTensor::identity(2, 3).unwrap());

    let s = segment_signature(&[2.0], 2).unwrap();
    assert_eq!(s.as_slice(), &[1.0, 2.0, 2.0]);

    let s = segment_signature(&[1.0, 1.0], 2).unwrap();
    assert_eq!(s.level(2), &[0.5; 4]);
    let (_, oracle) = riemann_level2(&[vec![0.0, 0.0], vec![1.0, 1.0]], 10_000);
    assert!(max_diff(s.level(2), &oracle) < 1e-10);
    assert!(segment_signature(&[1.0], 4).is_err());
}

#[test]
fn concat_matches_iterated_integrals() {
    let a = segment_signature(&[1.0, 0.0], 2).unwrap();
    assert_eq!(chen_concat(&TruncatedTensor::identity(2, 2).unwrap(), &a).unwrap(), a);

    let one = segment_signature(&[1.0], 2).unwrap();
    assert_eq!(chen_concat(&one, &one).unwrap(), segment_signature(&[2.0], 2).unwrap());

    let points = vec![vec![0.0, 0.0], vec![0.7, -0.3], vec![0.2, 1.1]];
    let x = segment_signature(&[0.7, -0.3], 2).unwrap();
    let y = segment_signature(&[-0.5, 1.4], 2).unwrap();
    let xy = chen_concat(&x, &y).unwrap();
    let (l1, l2) = riemann_level2(&points, 10_000);
    assert!(max_diff(xy.level(1), &l1) < 1e-10);
    assert!(max_diff(xy.level(2), &l2) < 1e-10, "{:?} vs {l2:?}", xy.level(2));

    let bad = segment_signature(&[1.0, 0.0, 0.0], 2).unwrap();
    assert!(chen_concat(&a, &bad).is_err());
    assert!(chen_concat(&a, &segment_signature(&[1.0, 0.0], 3).unwrap()).is_err());
}

#[test]
fn concat_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let depth = 1 + trial % 3;
        let [a, b, c] = [0; 3].map(|_| random_group_element(&mut rng, dim, depth));
        let left = chen_concat(&chen_concat(&a, &b).unwrap(), &c).unwrap();
        let right = chen_concat(&a, &chen_concat(&b, &c).unwrap()).unwrap();
        assert!(max_diff(left.as_slice(), right.as_slice()) < 1e-12, "trial {trial}");
    }
}

#[test]
fn lifts_are_multiplicative() {
    let path = generate_circulant(TimeGrid::unit(129).unwrap(), 2, hp(0.3), 4).unwrap();
    let sig = lift_path(&path, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let mut idx = [0; 3].map(|_| rng.random_range(0..=128usize));
        idx.sort_unstable();
        let [s, u, t] = idx;
        let whole = sig.combined(s, t).unwrap();
        let split = chen_concat(&sig.combined(s, u).unwrap(), &sig.combined(u, t).unwrap()).unwrap();
        assert!(max_diff(whole.as_slice(), split.as_slice()) < 1e-12, "({s}, {u}, {t})");
    }
}

#[test]
fn one_dimensional_level_two_is_degenerate() {
    let path = generate_circulant(TimeGrid::unit(257).unwrap(), 1, hp(0.5), 5).unwrap();
    let sig = lift_path(&path, 3).unwrap();
    for (i, j) in [(0, 256), (3, 17), (100, 101), (40, 200)] {
        let x = sig.combined(i, j).unwrap();
        let l1 = x.level(1)[0];
        assert!((x.level(2)[0] - 0.5 * l1 * l1).abs() < 1e-12);
        assert!((x.level(3)[0] - l1 * l1 * l1 / 6.0).abs() < 1e-12);
    }
}

#[test]
fn lifting_rejects_shallow_depths_and_handles_constants() {
    let rough = generate_circulant(TimeGrid::unit(65).unwrap(), 1, hp(0.3), 0).unwrap();
    assert!(lift_path(&rough, 2).is_err());
    assert!(lift_path(&rough, 3).is_ok());

    let flat = SamplePath::from_fn(TimeGrid::unit(9).unwrap(), 2, |_| vec![1.0, 2.0]).unwrap();
    let sig = lift_path(&flat, 2).unwrap();
    let id = TruncatedTensor::identity(2, 2).unwrap();
    assert!((0..8).all(|i| sig.increment(i) == id));
}

#[test]
fn refinement_consistency() {
    // Chen-coarsening a finer lift agrees with the coarse lift at level 1
    // exactly; the level-2 gap is the area the coarse chords cut off.
    let fine_n = 1 << 12;
    let path = generate_circulant(TimeGrid::unit(fine_n + 1).unwrap(), 2, hp(0.6), 8).unwrap();
    let mut gaps = Vec::new();
    for n in [64, 128, 256, 512] {
        let coarse = lift_path(&path.coarsen(fine_n / n).unwrap(), 2).unwrap();
        let finer = lift_path(&path.coarsen(fine_n / (2 * n)).unwrap(), 2).unwrap().coarsen(2).unwrap();
        let mut gap: f64 = 0.0;
        for i in 0..n {
            assert!(max_diff(coarse.level(i, 1), finer.level(i, 1)) < 1e-12);
            gap = gap.max(max_diff(coarse.level(i, 2), finer.level(i, 2)));
        }
        gaps.push(gap);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn levy_area_has_mean_zero() {
    let grid = TimeGrid::unit(33).unwrap();
    let areas: Vec<f64> = (0..10_000)
        .map(|seed| {
            let sig = lift_path(&generate_circulant(grid, 2, hp(0.5), seed).unwrap(), 2).unwrap();
            let x = sig.combined(0, 32).unwrap();
            0.5 * (x.level(2)[1] - x.level(2)[2])
        })
        .collect();
    let (m, se) = mean_se(&areas);
    assert!(m.abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn norm_examples() {
    assert_eq!(homogeneous_norm(&TruncatedTensor::identity(3, 2).unwrap()), 0.0);
    assert!((homogeneous_norm(&segment_signature(&[3.0], 1).unwrap()) - 3.0).abs() < 1e-15);
    let pure_level1 = TruncatedTensor::from_levels(2, &[vec![3.0, 0.0], vec![0.0; 4]]).unwrap();
    assert_eq!(homogeneous_norm(&pure_level1), 3.0);
    let area = TruncatedTensor::from_levels(2, &[vec![0.0, 0.0], vec![0.0, 2.0, -2.0, 0.0]]).unwrap();
    assert!((homogeneous_norm(&area) - 2f64.powf(1.5).sqrt()).abs() < 1e-15);
    let level2_four = TruncatedTensor::from_levels(1, &[vec![0.0], vec![4.0]]).unwrap();
    assert_eq!(homogeneous_norm(&level2_four), 2.0);
}

#[test]
fn norm_is_quasi_subadditive() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut violations = 0;
    for trial in 0..200 {
        let (dim, depth) = (1 + trial % 3, 1 + trial % 3);
        let a = random_group_element(&mut rng, dim, depth);
        let b = random_group_element(&mut rng, dim, depth);
        let ab = homogeneous_norm(&chen_concat(&a, &b).unwrap());
        if ab > 2.0 * (homogeneous_norm(&a) + homogeneous_norm(&b)) {
            violations += 1;
            eprintln!("factor-2 bound exceeded: dim {dim}, depth {depth}, {ab}");
        }
    }
    eprintln!("{violations} of 200 products exceed the factor-2 bound");
}

#[test]
fn p_variation_refinement_trend() {
    // H = 1/2: below p = 2 the value keeps growing, above it settles.
    let fine_n = 1 << 10;
    let path = generate_circulant(TimeGrid::unit(fine_n + 1).unwrap(), 1, hp(0.5), 11).unwrap();
    let values = |p: f64| -> Vec<f64> {
        [128, 256, 512, 1024]
            .iter()
            .map(|&n| {
                let sig = lift_path(&path.coarsen(fine_n / n).unwrap(), 2).unwrap();
                p_variation(&sig, p).unwrap().value
            })
            .collect()
    };
    let rough = values(1.2);
    assert!(rough.windows(2).all(|w| w[1] > 1.1 * w[0]), "{rough:?}");
    let smooth = values(3.0);
    assert!(smooth.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{smooth:?}");
    assert!(smooth[3] / smooth[2] < 1.02, "{smooth:?}");
}

#[test]
fn rho_variation_examples() {
    let bm = CovarianceGrid::build(TimeGrid::unit(129).unwrap(), hp(0.5)).unwrap();
    for rho in [1.0, 1.5, 3.0] {
        assert!(rho_variation_2d(&bm, rho).unwrap() <= 1.0 + 1e-12);
    }

    let h = hp(0.4);
    let two = CovarianceGrid::build(TimeGrid::new(2, 0.3, 0.8).unwrap(), h).unwrap();
    let rect = two.value(1, 1) - two.value(1, 0) - two.value(0, 1) + two.value(0, 0);
    assert!((rho_variation_2d(&two, 2.0).unwrap() - rect.abs()).abs() < 1e-14);

    for h in [0.3, 0.4] {
        let rho = 1.0 / (2.0 * h);
        let v: Vec<f64> = [17, 33, 65, 129]
            .iter()
            .map(|&n| rho_variation_2d(&CovarianceGrid::build(TimeGrid::unit(n).unwrap(), hp(h)).unwrap(), rho).unwrap())
            .collect();
        assert!(v[3] <= 1.05 * v[2], "H = {h}: {v:?}");
    }
}
