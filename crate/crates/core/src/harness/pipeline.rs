use super::spec::ExperimentSpec;
use crate::error::{invalid, Error, Result};
use crate::fbm::{Generator, SamplePath, TimeGrid};
use crate::rde::{catalog, solve, AnalyticFields, SolverScheme};
use crate::rough_path::lift_path;
use rayon::prelude::*;

/// Loads a catalog entry, or a JSON definition for `file:<path>`.
pub fn resolve_fields(reference: &str, dim: usize) -> Result<AnalyticFields> {
    match reference.strip_prefix("file:") {
        Some(path) => {
            let f = AnalyticFields::load(path)?;
            if f.dim_noise != dim {
                return Err(invalid(format!("{path} defines {}-dimensional noise, the spec has dim = {dim}", f.dim_noise)));
            }
            Ok(f)
        }
        None => catalog(reference, dim),
    }
}

/// The per-member chain `seed -> fBm driver -> lift -> solve` for one field
/// set, built once and shared across an ensemble.
pub struct Pipeline {
    spec: ExperimentSpec,
    generator: Generator,
    fields: AnalyticFields,
    x0: Vec<f64>,
}

/// Results of the members that succeeded, in member order.
#[derive(Debug, Clone)]
pub struct Tally<T> {
    pub values: Vec<T>,
    pub failures: usize,
}

impl Pipeline {
    pub fn new(spec: &ExperimentSpec, field_ref: &str) -> Result<Self> {
        let fields = resolve_fields(field_ref, spec.dim)?;
        let grid = TimeGrid::new(spec.n_points + 1, spec.t_range.0, spec.t_range.1)?;
        let generator = Generator::new(spec.generator, grid, spec.hurst)?;
        let x0 = spec.param_list("solve", "x0", &vec![0.0; fields.dim_state])?;
        if x0.len() != fields.dim_state {
            return Err(Error::Config(format!("solve.x0 has {} coordinates, the state has {}", x0.len(), fields.dim_state)));
        }
        Ok(Self { spec: spec.clone(), generator, fields, x0 })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn fields(&self) -> &AnalyticFields {
        &self.fields
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// fBm driver of member `index`.
    pub fn driver(&self, index: usize) -> SamplePath {
        self.generator.sample(self.spec.dim, self.spec.member_seed(index))
    }

    /// Solution path of member `index`, tagged with the driver's H and seed.
    pub fn member(&self, index: usize) -> Result<SamplePath> {
        let driver = self.driver(index);
        let tags = (driver.hurst, driver.seed);
        let sig = lift_path(&driver, self.spec.scheme.depth())?;
        let scheme = SolverScheme { kind: self.spec.scheme, step_count: sig.n_intervals() };
        Ok(solve(&self.fields, &self.x0, &sig, scheme)?.with_tags(tags.0, tags.1))
    }

    /// Runs `f` on members `0..count` in parallel. Failed members are
    /// logged and counted; more than 1% failures abort.
    pub fn map<T, F>(&self, count: usize, f: F) -> Result<Tally<T>>
    where
        T: Send,
        F: Fn(usize, SamplePath) -> Result<T> + Sync,
    {
        let outcomes: Vec<Result<T>> = (0..count).into_par_iter().map(|i| self.member(i).and_then(|p| f(i, p))).collect();
        let mut values = Vec::with_capacity(count);
        let mut failures = 0;
        for (i, r) in outcomes.into_iter().enumerate() {
            match r {
                Ok(v) => values.push(v),
                Err(e) => {
                    log::warn!("member {i} (seed {}) failed: {e}", self.spec.member_seed(i));
                    failures += 1;
                }
            }
        }
        if failures * 100 > count {
            return Err(Error::Degenerate(format!("{failures} of {count} members failed")));
        }
        Ok(Tally { values, failures })
    }
}
