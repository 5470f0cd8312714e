use crate::error::{Error, Result};
use crate::fbm::{GeneratorKind, HurstParam};
use crate::rde::{SchemeKind, CATALOG};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Tasks a run can perform, in pipeline order.
pub const TASKS: [&str; 10] = ["generate", "solve", "dim_image", "dim_graph", "levelset", "tail", "density", "bivariate", "energy", "mu"];

const LADDER_KEYS: [&str; 5] = ["top_fraction", "floor_factor", "floor_span_fraction", "n_scales", "saturation"];

fn task_keys(task: &str) -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = match task {
        "generate" => vec!["write_paths"],
        "solve" => vec!["write_paths", "x0"],
        "dim_image" => vec!["window", "halfwidth"],
        "dim_graph" => vec!["window", "halfwidth", "halfwidth_multi"],
        "levelset" => vec!["window", "halfwidth", "epsilon", "eta_factor", "halvings", "min_hit_fraction", "level"],
        "tail" => vec![
            "interval", "exponents", "quantile_lo", "quantile_hi", "n_xi", "r2_min", "delta_r2", "scaling_ends", "scaling_quantile", "rank_min",
        ],
        "density" => vec!["interval", "n_centers", "central_sd", "n_bins", "r2_min", "mode_tolerance"],
        "bivariate" => vec!["s", "t", "n_offsets", "central_sd", "r2_min", "oracle_tolerance"],
        "energy" => vec!["gammas", "levels", "restrict"],
        "mu" => vec!["ns", "gamma", "epsilon", "level", "lower_ratio", "ratio_max"],
        _ => vec![],
    };
    if matches!(task, "dim_image" | "dim_graph" | "levelset") {
        keys.extend(LADDER_KEYS);
    }
    keys
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub hurst: HurstParam,
    pub dim: usize,
    /// Number of grid steps; the grid has `n_points + 1` points so that
    /// dyadic coarsening is exact.
    pub n_points: usize,
    pub t_range: (f64, f64),
    pub generator: GeneratorKind,
    /// Catalog names or `file:<path>` references to JSON field definitions.
    pub fields: Vec<String>,
    pub scheme: SchemeKind,
    pub ensemble: usize,
    pub base_seed: u64,
    /// Task parameters keyed `task.key`.
    pub estimator_params: BTreeMap<String, String>,
    pub output_dir: String,
    /// Tasks named by the document's sections, in order.
    pub tasks: Vec<String>,
}

impl ExperimentSpec {
    /// A spec with every default filled in.
    pub fn new(name: impl Into<String>, hurst: f64, dim: usize, n_points: usize) -> Result<Self> {
        let hurst = HurstParam::new(hurst).map_err(|_| Error::Config(format!("hurst must lie in (0.25, 1), got {hurst}")))?;
        let spec = Self {
            name: name.into(),
            hurst,
            dim,
            n_points,
            t_range: (0.0, 1.0),
            generator: GeneratorKind::Circulant,
            fields: vec!["identity".into()],
            scheme: SchemeKind::for_hurst(hurst),
            ensemble: 1,
            base_seed: 0,
            estimator_params: BTreeMap::new(),
            output_dir: "out".into(),
            tasks: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("name '{}' must be non-empty and contain no path separators", self.name)));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if !self.n_points.is_power_of_two() || self.n_points < 4 {
            return Err(Error::Config(format!("n_points must be a power of two (at least 4), got {}", self.n_points)));
        }
        let (a, b) = self.t_range;
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return Err(Error::Config(format!("t_range must satisfy 0 <= start < end, got ({a}, {b})")));
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble must be at least 1".into()));
        }
        if self.fields.is_empty() {
            return Err(Error::Config("at least one field set is required".into()));
        }
        for f in &self.fields {
            if !f.starts_with("file:") && !CATALOG.contains(&f.as_str()) {
                return Err(Error::Config(format!("unknown field catalog name '{f}' (known: {})", CATALOG.join(", "))));
            }
        }
        self.scheme.check_hurst(self.hurst).map_err(|e| Error::Config(e.to_string()))?;
        for key in self.estimator_params.keys() {
            let (task, k) = key.split_once('.').ok_or_else(|| Error::Config(format!("parameter '{key}' has no task section")))?;
            if !TASKS.contains(&task) {
                return Err(Error::Config(format!("unknown task section [{task}]")));
            }
            if !task_keys(task).contains(&k) {
                return Err(Error::Config(format!("unknown key '{k}' in section [{task}]")));
            }
        }
        Ok(())
    }

    pub fn param(&self, task: &str, key: &str) -> Option<&str> {
        self.estimator_params.get(&format!("{task}.{key}")).map(String::as_str)
    }

    pub fn param_f64(&self, task: &str, key: &str, default: f64) -> Result<f64> {
        self.param(task, key).map_or(Ok(default), |v| parse_num(key, v))
    }

    pub fn param_usize(&self, task: &str, key: &str, default: usize) -> Result<usize> {
        self.param(task, key)
            .map_or(Ok(default), |v| v.parse().map_err(|_| Error::Config(format!("{task}.{key}: '{v}' is not a count"))))
    }

    pub fn param_list(&self, task: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.param(task, key) {
            Some(v) => parse_list(key, v),
            None => Ok(default.to_vec()),
        }
    }

    pub fn member_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

/// Parses the flat `key = value` format. Top-level keys describe the run;
/// each `[task]` section requests a task and holds its parameters.
///
/// ```text
/// name = demo
/// hurst = 0.5
/// dim = 1
/// n_points = 4096
///
/// [dim_image]
/// window = 0.9, 1.1
/// ```
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut top: BTreeMap<String, String> = BTreeMap::new();
    let mut params = BTreeMap::new();
    let mut tasks: Vec<String> = Vec::new();
    let mut section: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| at(format!("unterminated section header '{line}'")))?.trim();
            if !TASKS.contains(&name) {
                return Err(at(format!("unknown task section [{name}] (known: {})", TASKS.join(", "))));
            }
            if tasks.iter().any(|t| t == name) {
                return Err(at(format!("section [{name}] appears twice")));
            }
            tasks.push(name.to_string());
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| at(format!("expected 'key = value', got '{line}'")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        let previous = match &section {
            Some(s) => params.insert(format!("{s}.{k}"), v),
            None => top.insert(k.clone(), v),
        };
        if previous.is_some() {
            return Err(at(format!("key '{k}' is set twice")));
        }
    }

    let take = |top: &mut BTreeMap<String, String>, k: &str| top.remove(k);
    let required = |top: &mut BTreeMap<String, String>, k: &str| {
        take(top, k).ok_or_else(|| Error::Config(format!("missing required key '{k}'")))
    };
    let name = required(&mut top, "name")?;
    let hurst_text = required(&mut top, "hurst")?;
    let hurst = parse_num("hurst", &hurst_text)?;
    let dim_text = required(&mut top, "dim")?;
    let dim = dim_text.parse().map_err(|_| Error::Config(format!("dim: '{dim_text}' is not a positive integer")))?;
    let n_text = required(&mut top, "n_points")?;
    let n_points = n_text.parse().map_err(|_| Error::Config(format!("n_points: '{n_text}' is not an integer")))?;
    if !(hurst > 0.25 && hurst < 1.0) {
        return Err(Error::Config(format!("hurst must lie in (0.25, 1), got {hurst}")));
    }
    let mut spec = ExperimentSpec::new(name, hurst, dim, n_points)?;

    if let Some(v) = take(&mut top, "t_range") {
        let r = parse_list("t_range", &v)?;
        if r.len() != 2 {
            return Err(Error::Config(format!("t_range needs two numbers, got '{v}'")));
        }
        spec.t_range = (r[0], r[1]);
    }
    if let Some(v) = take(&mut top, "generator") {
        spec.generator = match v.as_str() {
            "cholesky" => GeneratorKind::Cholesky,
            "circulant" => GeneratorKind::Circulant,
            other => return Err(Error::Config(format!("generator must be cholesky or circulant, got '{other}'"))),
        };
    }
    if let Some(v) = take(&mut top, "fields") {
        spec.fields = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(v) = take(&mut top, "scheme") {
        spec.scheme = match v.as_str() {
            "auto" => SchemeKind::for_hurst(spec.hurst),
            "step2_davie" => SchemeKind::Step2Davie,
            "step3" => SchemeKind::Step3,
            other => return Err(Error::Config(format!("scheme must be step2_davie, step3 or auto, got '{other}'"))),
        };
    }
    if let Some(v) = take(&mut top, "ensemble") {
        spec.ensemble = v.parse().map_err(|_| Error::Config(format!("ensemble: '{v}' is not a count")))?;
    }
    if let Some(v) = take(&mut top, "base_seed") {
        spec.base_seed = v.parse().map_err(|_| Error::Config(format!("base_seed: '{v}' is not a 64-bit integer")))?;
    }
    if let Some(v) = take(&mut top, "output_dir") {
        spec.output_dir = v;
    }
    if let Some(k) = top.keys().next() {
        return Err(Error::Config(format!("unknown key '{k}'")));
    }
    spec.estimator_params = params;
    spec.tasks = tasks;
    spec.validate()?;
    Ok(spec)
}
