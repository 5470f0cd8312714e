use super::VectorFieldSet;
use crate::error::{invalid, Error, Result};
use crate::fbm::{CirculantGenerator, HurstParam, SamplePath, TimeGrid};
use crate::rough_path::{lift_path, SignaturePath};
use serde::{Deserialize, Serialize};

/// States larger than this abort the solve.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Second-order rough Taylor step, for H > 1/3.
    Step2Davie,
    /// Third-order step using level-3 signatures, needed for H <= 1/3.
    Step3,
}

impl SchemeKind {
    pub fn for_hurst(h: HurstParam) -> Self {
        if h.signature_depth() == 2 {
            Self::Step2Davie
        } else {
            Self::Step3
        }
    }

    pub fn depth(self) -> usize {
        match self {
            Self::Step2Davie => 2,
            Self::Step3 => 3,
        }
    }

    /// Rejects the second-order step for paths too rough for it.
    pub fn check_hurst(self, h: HurstParam) -> Result<()> {
        if self.depth() < h.signature_depth() {
            return Err(invalid(format!("step2_davie needs H > 1/3, got {}", h.value())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverScheme {
    pub kind: SchemeKind,
    pub step_count: usize,
}

/// Solves `dX = V_0(X) dt + V(X) dB` along a lifted driver.
///
/// Each step applies the rough Taylor expansion of the diffusion part to the
/// driver's signature increment, then integrates the drift over the step
/// with one classical Runge-Kutta step. When `scheme.step_count` is smaller
/// than the driver's interval count it must divide it, and the driver is
/// Chen-coarsened first.
pub fn solve(fields: &dyn VectorFieldSet, x0: &[f64], driver: &SignaturePath, scheme: SolverScheme) -> Result<SamplePath> {
    let (n, d) = (fields.dim_state(), fields.dim_noise());
    if x0.len() != n {
        return Err(Error::Shape(format!("initial point has {} coordinates, state dimension is {n}", x0.len())));
    }
    if driver.dim() != d {
        return Err(Error::Shape(format!("driver is {}-dimensional, fields expect {d}", driver.dim())));
    }
    let depth = scheme.kind.depth();
    if driver.depth() < depth {
        return Err(invalid(format!("{:?} needs a depth-{depth} driver, got depth {}", scheme.kind, driver.depth())));
    }
    let intervals = driver.n_intervals();
    if scheme.step_count == 0 || !intervals.is_multiple_of(scheme.step_count) {
        return Err(invalid(format!("{} steps do not divide the driver's {intervals} intervals", scheme.step_count)));
    }
    let coarse;
    let driver = if scheme.step_count == intervals {
        driver
    } else {
        coarse = driver.coarsen(intervals / scheme.step_count)?;
        &coarse
    };
    let dt = driver.grid().spacing();
    let constant = fields.constant_diffusion();
    let drift = fields.has_drift();

    let mut values = Vec::with_capacity((scheme.step_count + 1) * n);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut v = vec![0.0; n * d];
    let mut jac = vec![0.0; n * n * d];
    let mut hess = vec![0.0; if depth == 3 { n * n * n * d } else { 0 }];
    // dv[(k*d + a)*d + b] = Σ_l ∂_l V_b^k V_a^l, the level-2 coefficient.
    let mut dv = vec![0.0; n * d * d];
    let mut dx = vec![0.0; n];
    let mut rk = RungeKutta::new(n);

    for step in 0..scheme.step_count {
        let x1 = driver.level(step, 1);
        fields.diffusion(&x, &mut v);
        for i in 0..n {
            dx[i] = (0..d).map(|a| v[i * d + a] * x1[a]).sum();
        }
        if !constant {
            fields.jacobian(&x, &mut jac);
            for k in 0..n {
                for a in 0..d {
                    for b in 0..d {
                        dv[(k * d + a) * d + b] = (0..n).map(|l| jac[(k * n + l) * d + b] * v[l * d + a]).sum();
                    }
                }
            }
            let x2 = driver.level(step, 2);
            for i in 0..n {
                dx[i] += (0..d * d).map(|ab| dv[i * d * d + ab] * x2[ab]).sum::<f64>();
            }
            if depth == 3 {
                fields.hessian(&x, &mut hess);
                let x3 = driver.level(step, 3);
                for i in 0..n {
                    let mut acc = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            for c in 0..d {
                                let w = x3[(a * d + b) * d + c];
                                if w == 0.0 {
                                    continue;
                                }
                                let mut coef = 0.0;
                                for k in 0..n {
                                    for l in 0..n {
                                        coef += hess[((i * n + k) * n + l) * d + c] * v[k * d + a] * v[l * d + b];
                                    }
                                    coef += jac[(i * n + k) * d + c] * dv[(k * d + a) * d + b];
                                }
                                acc += coef * w;
                            }
                        }
                    }
                    dx[i] += acc;
                }
            }
        }
        for i in 0..n {
            x[i] += dx[i];
        }
        if drift {
            rk.step(fields, &mut x, dt);
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= OVERFLOW_GUARD) {
            return Err(Error::Blowup { step: step + 1, norm });
        }
        values.extend_from_slice(&x);
    }
    SamplePath::new(*driver.grid(), n, values)
}

struct RungeKutta {
    k: [Vec<f64>; 4],
    y: Vec<f64>,
}

impl RungeKutta {
    fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), y: vec![0.0; n] }
    }

    fn step(&mut self, fields: &dyn VectorFieldSet, x: &mut [f64], dt: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        let y = &mut self.y;
        fields.drift(x, k1);
        y.iter_mut().zip(x.iter()).zip(k1.iter()).for_each(|((y, x), k)| *y = x + 0.5 * dt * k);
        fields.drift(y, k2);
        y.iter_mut().zip(x.iter()).zip(k2.iter()).for_each(|((y, x), k)| *y = x + 0.5 * dt * k);
        fields.drift(y, k3);
        y.iter_mut().zip(x.iter()).zip(k3.iter()).for_each(|((y, x), k)| *y = x + dt * k);
        fields.drift(y, k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Errors of coarse solves against a fine reference driven by the same path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProbe {
    pub step_counts: Vec<usize>,
    /// Largest deviation from the reference over the coarse grid points.
    pub errors: Vec<f64>,
    pub reference_steps: usize,
}

impl ConvergenceProbe {
    /// `log2(e_j / e_(j+1))` for consecutive levels.
    pub fn log2_ratios(&self) -> Vec<f64> {
        self.errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }
}

/// Coarsest grid used by [`convergence_probe`].
const PROBE_COARSEST: usize = 64;

/// Solves on `levels` dyadic grids from 64 steps upward and compares each
/// with a reference four levels finer than the last, all sharing one fBm
/// driver sampled at the reference resolution.
pub fn convergence_probe(
    fields: &dyn VectorFieldSet,
    x0: &[f64],
    h: HurstParam,
    seed: u64,
    levels: usize,
) -> Result<ConvergenceProbe> {
    if levels < 3 {
        return Err(invalid(format!("a convergence probe needs at least 3 levels, got {levels}")));
    }
    let reference_steps = PROBE_COARSEST << (levels + 3);
    let grid = TimeGrid::unit(reference_steps + 1)?;
    let path = CirculantGenerator::new(grid, h)?.sample(fields.dim_noise(), seed);
    let kind = SchemeKind::for_hurst(h);
    let driver = lift_path(&path, kind.depth())?;
    let reference = solve(fields, x0, &driver, SolverScheme { kind, step_count: reference_steps })?;
    let mut step_counts = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for j in 0..levels {
        let steps = PROBE_COARSEST << j;
        let coarse = solve(fields, x0, &driver, SolverScheme { kind, step_count: steps })?;
        let stride = reference_steps / steps;
        let err = (0..=steps)
            .map(|k| {
                coarse.row(k).iter().zip(reference.row(k * stride)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        step_counts.push(steps);
        errors.push(err);
    }
    Ok(ConvergenceProbe { step_counts, errors, reference_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rde::AnalyticFields;

    #[test]
    fn identity_fields_reproduce_the_driver() {
        let h = HurstParam::new(0.6).unwrap();
        let path = CirculantGenerator::new(TimeGrid::unit(257).unwrap(), h).unwrap().sample(2, 3);
        let sig = lift_path(&path, 2).unwrap();
        let x0 = [1.0, -2.0];
        let sol = solve(&AnalyticFields::identity(2), &x0, &sig, SolverScheme { kind: SchemeKind::Step2Davie, step_count: 256 }).unwrap();
        for i in 0..257 {
            for j in 0..2 {
                assert!((sol.row(i)[j] - x0[j] - path.row(i)[j]).abs() < 1e-13);
            }
        }
        let probe = convergence_probe(&AnalyticFields::identity(2), &x0, h, 3, 3).unwrap();
        assert!(probe.errors.iter().all(|&e| e < 1e-12), "{:?}", probe.errors);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let path = SamplePath::from_fn(TimeGrid::unit(9).unwrap(), 1, |t| vec![t]).unwrap();
        let sig = lift_path(&path, 2).unwrap();
        let f = AnalyticFields::identity(1);
        let scheme = |kind, step_count| SolverScheme { kind, step_count };
        assert!(solve(&f, &[0.0, 0.0], &sig, scheme(SchemeKind::Step2Davie, 8)).is_err());
        assert!(solve(&f, &[0.0], &sig, scheme(SchemeKind::Step3, 8)).is_err());
        assert!(solve(&f, &[0.0], &sig, scheme(SchemeKind::Step2Davie, 3)).is_err());
        assert_eq!(solve(&f, &[0.0], &sig, scheme(SchemeKind::Step2Davie, 4)).unwrap().n_points(), 5);
    }

    #[test]
    fn blow_up_is_reported() {
        let path = SamplePath::from_fn(TimeGrid::unit(101).unwrap(), 1, |t| vec![40.0 * t]).unwrap();
        let sig = lift_path(&path, 2).unwrap();
        let err = solve(&AnalyticFields::geometric(1.0), &[1.0], &sig, SolverScheme { kind: SchemeKind::Step2Davie, step_count: 100 });
        assert!(matches!(err, Err(Error::Blowup { .. })), "{err:?}");
    }
}
