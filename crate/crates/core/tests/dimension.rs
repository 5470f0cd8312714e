use fracdim::dimension::{
    box_count, box_dimension, box_dimension_auto, energy_integral, extract_level_set, graph_cloud, image_cloud,
    level_set_dimension, mu_measure, tube_floor, LevelSet, PointCloud, ScaleLadder,
};
use fracdim::fbm::{generate_circulant, HurstParam, SamplePath, TimeGrid};

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

/// Middle-thirds Cantor set at `depth`, one point inside each kept interval.
fn cantor(depth: u32) -> PointCloud {
    let mut intervals = vec![0.0];
    let mut len = 1.0;
    for _ in 0..depth {
        len /= 3.0;
        intervals = intervals.iter().flat_map(|&a| [a, a + 2.0 * len]).collect();
    }
    PointCloud::new(1, intervals.iter().map(|a| a + len / 2.0).collect()).unwrap()
}

#[test]
fn counting_oracles() {
    assert_eq!(box_count(&PointCloud::new(3, vec![0.1, 0.2, 0.3]).unwrap(), 1e-6), 1);
    let n = 1 << 12;
    let unit = PointCloud::new(1, (0..n).map(|i| i as f64 / (n - 1) as f64).collect()).unwrap();
    let c = box_count(&unit, 1.0 / 64.0);
    assert!((64..=65).contains(&c), "{c}");
    let k = cantor(8);
    for j in 1..=8 {
        assert_eq!(box_count(&k, 3f64.powi(-j)), 1 << j, "k = {j}");
    }
}

#[test]
fn dimension_oracles() {
    let e = box_dimension(&cantor(8), (3f64.powi(-8), 3f64.powi(-1)), 8).unwrap();
    assert!((e.slope - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{}", e.slope);
    assert!(e.scales_used.windows(2).all(|w| w[1] < w[0]));
    assert!(e.counts.windows(2).all(|w| w[1] >= w[0]));

    let flat = SamplePath::from_fn(TimeGrid::unit(1 << 12).unwrap(), 1, |_| vec![-0.3]).unwrap();
    let e = box_dimension(&graph_cloud(&flat), (1e-3, 0.1), 6).unwrap();
    assert!((e.slope - 1.0).abs() < 0.05);
    let e = box_dimension(&image_cloud(&flat), (1e-3, 0.1), 6).unwrap();
    assert!(e.degenerate && e.slope == 0.0);
    assert!(box_dimension(&cantor(3), (0.1, 0.2), 3).is_err());
}

#[test]
fn brownian_images() {
    let grid = TimeGrid::unit((1 << 16) + 1).unwrap();
    let ladder = ScaleLadder::default();
    let image: Vec<f64> = (0..4)
        .map(|seed| {
            let p = generate_circulant(grid, 1, hp(0.5), seed).unwrap();
            let cloud = image_cloud(&p);
            box_dimension_auto(&cloud, cloud.median_step(), &ladder).unwrap().slope
        })
        .collect();
    assert!(image.iter().all(|s| (s - 1.0).abs() < 0.1), "{image:?}");
    let p = generate_circulant(grid, 2, hp(0.75), 7).unwrap();
    let cloud = image_cloud(&p);
    let s = box_dimension_auto(&cloud, cloud.median_step(), &ladder).unwrap().slope;
    assert!((s - 4.0 / 3.0).abs() < 0.15, "{s}");
}

#[test]
fn monotone_level_set_is_a_point() {
    let p = SamplePath::from_fn(TimeGrid::unit(4097).unwrap(), 1, |t| vec![t]).unwrap();
    let eta = 4.0 * tube_floor(&p).unwrap();
    let set = extract_level_set(&p, &[0.5], eta).unwrap();
    assert!(!set.is_empty());
    assert!(set.times.iter().all(|t| (t - 0.5).abs() <= eta + 1e-12));
    assert!(set.times.windows(2).all(|w| w[0] < w[1]));
    let ladder = ScaleLadder { top_fraction: 1.0, floor_factor: 1.0, floor_span_fraction: 1e-4, n_scales: 6, saturation: 1.0 };
    let single = LevelSet { times: vec![0.5], ..set.clone() };
    let e = level_set_dimension(&single, 1.0 / 4096.0, &ladder).unwrap();
    assert_eq!(e.slope, 0.0);
    assert!(extract_level_set(&p, &[0.5, 0.5], eta).is_err());
    assert!(extract_level_set(&p, &[0.5], 0.0).is_err());
    assert!(extract_level_set(&p, &[7.0], eta).unwrap().is_empty());
}

#[test]
fn brownian_zero_set_dimension() {
    // Zero set of Brownian motion restarted at t = 0.1: dimension 1/2.
    let n = 1 << 18;
    let mut slopes = Vec::new();
    for seed in 0..16 {
        let p = generate_circulant(TimeGrid::unit(n + 1).unwrap(), 1, hp(0.5), seed).unwrap();
        let tail = p.restrict(0.1, 1.0).unwrap();
        let eta = tube_floor(&tail).unwrap();
        let set = extract_level_set(&tail, &[0.0], eta).unwrap();
        if set.times.len() < 64 {
            continue;
        }
        if let Ok(e) = level_set_dimension(&set, tail.grid().spacing(), &ScaleLadder::default()) {
            slopes.push(e.slope);
        }
    }
    assert!(slopes.len() >= 2, "{} hitting members", slopes.len());
    slopes.sort_by(f64::total_cmp);
    let median = slopes[slopes.len() / 2];
    assert!((median - 0.5).abs() < 0.15, "{slopes:?}");
}

#[test]
fn energy_oracles() {
    let line = SamplePath::from_fn(TimeGrid::unit(8193).unwrap(), 1, |t| vec![t]).unwrap();
    let e = energy_integral(&line, 0.5, (0.0, 1.0)).unwrap();
    assert!((e.value / (8.0 / 3.0) - 1.0).abs() < 0.02, "{}", e.value);
    assert_eq!(e.diagonal_cut, 1.0 / 8192.0);

    // Logarithmic kernel on [0,1]²: ∫∫ (1 - ln|t - s|) = 1 + 3/2.
    let e = energy_integral(&line, 0.0, (0.0, 1.0)).unwrap();
    assert!((e.value / 2.5 - 1.0).abs() < 0.02, "{}", e.value);

    // Restriction to [0.5, 1] scales by 2^(gamma - 2).
    let half = energy_integral(&line, 0.5, (0.5, 1.0)).unwrap();
    assert!((half.value / (8.0 / 3.0 * 2f64.powf(-1.5)) - 1.0).abs() < 0.03, "{}", half.value);
    assert!(energy_integral(&line, -0.5, (0.0, 1.0)).is_err());
}

#[test]
fn mu_oracles() {
    let g = TimeGrid::unit(2001).unwrap();
    let x = [0.2];
    let p = SamplePath::from_fn(g, 1, |_| vec![0.2]).unwrap();
    for n in [4.0, 64.0] {
        let m = mu_measure(&p, &x, n, 0.4, (0.1, 1.0)).unwrap();
        assert!((m.mass - (2.0 * std::f64::consts::PI * n).sqrt() * 0.9).abs() < 1e-9);
        let off = mu_measure(&p, &[0.5], n, 0.4, (0.1, 1.0)).unwrap();
        let want = (2.0 * std::f64::consts::PI * n).sqrt() * (-n * 0.09 / 2.0).exp() * 0.9;
        assert!((off.mass - want).abs() < 1e-9 * want.max(1.0));
    }
    // Constant density: energy is mass-density squared times the line energy.
    let m = mu_measure(&p, &x, 1.0, 0.5, (0.1, 1.0)).unwrap();
    let density = (2.0 * std::f64::consts::PI).sqrt();
    let line = 2.0 * 0.9f64.powf(1.5) / (0.5 * 1.5);
    assert!((m.gamma_energy / (density * density * line) - 1.0).abs() < 0.03, "{}", m.gamma_energy);
}

#[test]
fn mu_mass_is_additive() {
    let p = generate_circulant(TimeGrid::unit(4097).unwrap(), 2, hp(0.6), 3).unwrap();
    let x = [p.row(2048)[0], p.row(2048)[1]];
    let whole = mu_measure(&p, &x, 16.0, 0.3, (0.25, 1.0)).unwrap().mass;
    let left = mu_measure(&p, &x, 16.0, 0.3, (0.25, 0.5)).unwrap().mass;
    let right = mu_measure(&p, &x, 16.0, 0.3, (0.5, 1.0)).unwrap().mass;
    assert!((whole - left - right).abs() < 1e-12 * whole.max(1.0), "{whole} vs {}", left + right);
}
