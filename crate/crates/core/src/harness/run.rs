use super::pipeline::Pipeline;
use super::spec::{ExperimentSpec, TASKS};
use crate::density::{
    bivariate_envelope, increment_envelope, increment_samples, joint_samples, sup_increments, BivariateProfile, DensityEstimate,
    Kde, ScalingCheck, TailCurve, fit_tail_exponent, MIN_BIVARIATE_ENSEMBLE, MIN_INCREMENT_ENSEMBLE, MIN_TAIL_ENSEMBLE,
};
use crate::dimension::{
    box_dimension_auto, energy_integral, extract_level_set, graph_cloud, image_cloud, level_set_dimension, mu_measure,
    tube_floor, ScaleLadder,
};
use crate::error::{Error, Result};
use crate::fbm::{covariance, holder_exponent};
use crate::rde::AnalyticFields;
use crate::stats::{linear_fit, mean, median, quantile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Tolerances applied when a spec does not override them, keyed `task.key`.
pub const DEFAULT_TOLERANCES: [(&str, f64); 14] = [
    ("dim_image.halfwidth", 0.15),
    ("dim_graph.halfwidth", 0.15),
    ("dim_graph.halfwidth_multi", 0.2),
    ("levelset.halfwidth", 0.15),
    ("levelset.min_hit_fraction", 0.1),
    ("tail.r2_min", 0.9),
    ("tail.delta_r2", -0.02),
    ("tail.rank_min", 0.8),
    ("density.r2_min", 0.85),
    ("density.mode_tolerance", 0.1),
    ("bivariate.r2_min", 0.8),
    ("bivariate.oracle_tolerance", 0.15),
    ("mu.lower_ratio", 0.5),
    ("mu.ratio_max", 1.0),
];

fn default_tolerance(key: &str) -> f64 {
    DEFAULT_TOLERANCES.iter().find(|(k, _)| *k == key).map(|p| p.1).expect("tolerance key is in the defaults table")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Untestable,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Untestable => "untestable",
        }
    }
}

/// One checked claim: what was expected, what was measured, and the window
/// the measurement had to land in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub task: String,
    pub fields: String,
    pub claim: String,
    /// Absent for untestable claims.
    pub measured: Option<f64>,
    /// Inclusive bounds; `None` leaves that side open.
    pub window: (Option<f64>, Option<f64>),
    pub tolerance: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn check(task: &str, fields: &str, claim: impl Into<String>, measured: f64, window: (f64, f64), tolerance: impl Into<String>) -> Self {
        let status = if measured >= window.0 && measured <= window.1 { Status::Pass } else { Status::Fail };
        let bound = |b: f64| b.is_finite().then_some(b);
        Self {
            task: task.into(),
            fields: fields.into(),
            claim: claim.into(),
            measured: measured.is_finite().then_some(measured),
            window: (bound(window.0), bound(window.1)),
            tolerance: tolerance.into(),
            status,
            detail: String::new(),
        }
    }

    fn untestable(task: &str, fields: &str, claim: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            fields: fields.into(),
            claim: claim.into(),
            measured: None,
            window: (None, None),
            tolerance: String::new(),
            status: Status::Untestable,
            detail: detail.into(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: ExperimentSpec,
    pub tasks: Vec<String>,
    /// Aggregates keyed `task/fields`.
    pub results: BTreeMap<String, Value>,
    pub verdicts: Vec<Verdict>,
    pub member_failures: usize,
    pub wall_time_secs: f64,
    pub versions: BTreeMap<String, String>,
}

impl RunReport {
    /// 0 when every verdict passed or was untestable, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.verdicts.iter().any(|v| v.status == Status::Fail))
    }

    pub fn verdict(&self, task: &str, claim_prefix: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.task == task && v.claim.starts_with(claim_prefix))
    }
}

/// Runs `tasks` and writes the report, CSVs and requested path files under
/// `output_dir/name/`.
pub fn run(spec: &ExperimentSpec, tasks: &[String]) -> Result<RunReport> {
    let dir = Path::new(&spec.output_dir).join(&spec.name);
    std::fs::create_dir_all(&dir)?;
    let report = execute(spec, tasks, Some(dir.clone()))?;
    let (text, json) = report_render(&report);
    std::fs::write(dir.join("report.txt"), text)?;
    std::fs::write(dir.join("report.json"), json)?;
    Ok(report)
}

/// Same as [`run`] without touching the filesystem.
pub fn run_in_memory(spec: &ExperimentSpec, tasks: &[String]) -> Result<RunReport> {
    execute(spec, tasks, None)
}

fn execute(spec: &ExperimentSpec, tasks: &[String], out: Option<PathBuf>) -> Result<RunReport> {
    spec.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config("no tasks requested".into()));
    }
    if let Some(t) = tasks.iter().find(|t| !TASKS.contains(&t.as_str())) {
        return Err(Error::Config(format!("unknown task '{t}'")));
    }
    let start = Instant::now();
    let mut ctx = Ctx { spec, out, results: BTreeMap::new(), verdicts: Vec::new(), csv: BTreeMap::new(), failures: 0 };
    let pipelines = spec.fields.iter().map(|f| Pipeline::new(spec, f).map(|p| (f.clone(), p))).collect::<Result<Vec<_>>>()?;
    // Pipeline order, whatever order the tasks were listed in.
    for task in TASKS.iter().filter(|t| tasks.iter().any(|r| r == *t)) {
        log::info!("{}: running {task}", spec.name);
        if *task == "generate" {
            ctx.generate(&pipelines[0].1)?;
            continue;
        }
        for (name, p) in &pipelines {
            match *task {
                "solve" => ctx.solve(name, p)?,
                "dim_image" | "dim_graph" => ctx.dimension(task, name, p)?,
                "levelset" => ctx.levelset(name, p)?,
                "tail" => ctx.tail(name, p)?,
                "density" => ctx.density(name, p)?,
                "bivariate" => ctx.bivariate(name, p)?,
                "energy" => ctx.energy(name, p)?,
                "mu" => ctx.mu(name, p)?,
                _ => unreachable!("task list is validated"),
            }
        }
    }
    if let Some(dir) = &ctx.out {
        for (file, body) in &ctx.csv {
            std::fs::write(dir.join(file), body)?;
        }
    }
    let versions = BTreeMap::from([("fracdim".to_string(), env!("CARGO_PKG_VERSION").to_string())]);
    Ok(RunReport {
        spec: spec.clone(),
        tasks: tasks.to_vec(),
        results: ctx.results,
        verdicts: ctx.verdicts,
        member_failures: ctx.failures,
        wall_time_secs: start.elapsed().as_secs_f64(),
        versions,
    })
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    out: Option<PathBuf>,
    results: BTreeMap<String, Value>,
    verdicts: Vec<Verdict>,
    csv: BTreeMap<String, String>,
    failures: usize,
}

impl Ctx<'_> {
    fn tol(&self, task: &str, key: &str) -> Result<f64> {
        self.spec.param_f64(task, key, default_tolerance(&format!("{task}.{key}")))
    }

    fn row(&mut self, file: &str, header: &str, line: String) {
        let body = self.csv.entry(file.to_string()).or_insert_with(|| format!("{header}\n"));
        body.push_str(&line);
        body.push('\n');
    }

    fn flag(&self, task: &str, key: &str) -> Result<bool> {
        match self.spec.param(task, key) {
            None | Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!("{task}.{key}: '{v}' is not true or false"))),
        }
    }

    fn ladder(&self, task: &str) -> Result<ScaleLadder> {
        let d = ScaleLadder::default();
        Ok(ScaleLadder {
            top_fraction: self.spec.param_f64(task, "top_fraction", d.top_fraction)?,
            floor_factor: self.spec.param_f64(task, "floor_factor", d.floor_factor)?,
            floor_span_fraction: self.spec.param_f64(task, "floor_span_fraction", d.floor_span_fraction)?,
            n_scales: self.spec.param_usize(task, "n_scales", d.n_scales)?,
            saturation: self.spec.param_f64(task, "saturation", d.saturation)?,
        })
    }

    fn pair(&self, task: &str, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.spec.param_list(task, key, &[default.0, default.1])?.as_slice() {
            &[a, b] if a <= b => Ok((a, b)),
            _ => Err(Error::Config(format!("{task}.{key} must be two increasing numbers"))),
        }
    }

    fn path_file(&self, stem: &str, index: usize) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join("paths").join(format!("{stem}_{index:05}.bin")))
    }

    fn generate(&mut self, p: &Pipeline) -> Result<()> {
        let write = self.flag("generate", "write_paths")?;
        if write {
            if let Some(d) = &self.out {
                std::fs::create_dir_all(d.join("paths"))?;
            }
        }
        let m = self.spec.ensemble;
        let files: Vec<Option<PathBuf>> = (0..m).map(|i| if write { self.path_file("driver", i) } else { None }).collect();
        let exps = (0..m)
            .into_par_iter()
            .map(|i| {
                let path = p.driver(i);
                if let Some(f) = &files[i] {
                    path.save(f)?;
                }
                holder_exponent(&path)
            })
            .collect::<Result<Vec<f64>>>()?;
        self.results.insert("generate".into(), json!({ "paths": m, "median_holder_exponent": median(&exps) }));
        Ok(())
    }

    fn solve(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let write = self.flag("solve", "write_paths")?;
        let stem = format!("solve_{}", sanitize(name));
        if write {
            if let Some(d) = &self.out {
                std::fs::create_dir_all(d.join("paths"))?;
            }
        }
        let files: Vec<Option<PathBuf>> = (0..self.spec.ensemble).map(|i| if write { self.path_file(&stem, i) } else { None }).collect();
        let tally = p.map(self.spec.ensemble, |i, path| {
            if let Some(f) = &files[i] {
                path.save(f)?;
            }
            Ok(path.row(path.n_points() - 1).to_vec())
        })?;
        self.failures += tally.failures;
        let last: Vec<f64> = tally.values.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        self.results.insert(
            format!("solve/{name}"),
            json!({ "solved": tally.values.len(), "failures": tally.failures, "median_final_norm": median(&last) }),
        );
        Ok(())
    }

    fn dimension(&mut self, task: &str, name: &str, p: &Pipeline) -> Result<()> {
        let h = self.spec.hurst.value();
        let d = p.fields().dim_state as f64;
        let (expected, claim, key) = if task == "dim_image" {
            (d.min(1.0 / h), format!("image dimension = min(d, 1/H) = {:.4}", d.min(1.0 / h)), "halfwidth")
        } else {
            let e = (1.0 / h).min((1.0 - h) * d + 1.0);
            (e, format!("graph dimension = min(1/H, (1-H)d + 1) = {e:.4}"), if d > 1.0 { "halfwidth_multi" } else { "halfwidth" })
        };
        let half = self.tol(task, key)?;
        let window = self.pair(task, "window", (expected - half, expected + half))?;
        let ladder = self.ladder(task)?;
        let graph = task == "dim_graph";
        let tally = p.map(self.spec.ensemble, |_, path| {
            let cloud = if graph { graph_cloud(&path) } else { image_cloud(&path) };
            box_dimension_auto(&cloud, cloud.median_step(), &ladder)
        })?;
        self.failures += tally.failures;
        let slopes: Vec<f64> = tally.values.iter().map(|e| e.slope).collect();
        for (i, e) in tally.values.iter().enumerate() {
            self.row(&format!("{task}.csv"), "fields,member,slope,r_squared", format!("{name},{i},{},{}", e.slope, e.r_squared));
        }
        let med = median(&slopes);
        self.results.insert(
            format!("{task}/{name}"),
            json!({ "median_slope": med, "slopes": slopes, "expected": expected, "ladder": ladder, "failures": tally.failures }),
        );
        let tol = format!("[{:.3}, {:.3}]", window.0, window.1);
        self.verdicts.push(Verdict::check(task, name, claim, med, window, tol).with_detail(format!("median over {} members", slopes.len())));
        Ok(())
    }

    fn levelset(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let h = self.spec.hurst.value();
        let d = p.fields().dim_state as f64;
        let eps = self.spec.param_f64("levelset", "epsilon", 0.1)?;
        let eta_factor = self.spec.param_f64("levelset", "eta_factor", 1.0)?;
        let halvings = self.spec.param_usize("levelset", "halvings", 4)?;
        let level = self.spec.param_list("levelset", "level", p.x0())?;
        let ladder = self.ladder("levelset")?;
        let t_end = self.spec.t_range.1;
        let dh = d * h;
        if (dh - 1.0).abs() < 1e-12 {
            self.verdicts.push(Verdict::untestable("levelset", name, "level set at the critical case dH = 1", "no prediction at dH = 1"));
            return Ok(());
        }
        if dh < 1.0 {
            let tally = p.map(self.spec.ensemble, |_, path| {
                let eta = eta_factor * tube_floor(&path)?;
                let set = extract_level_set(&path.restrict(eps, t_end)?, &level, eta)?;
                if set.is_empty() {
                    return Ok((false, None));
                }
                Ok((true, level_set_dimension(&set, path.grid().spacing(), &ladder).ok().map(|e| e.slope)))
            })?;
            self.failures += tally.failures;
            let n = tally.values.len().max(1) as f64;
            let hits = tally.values.iter().filter(|v| v.0).count();
            let slopes: Vec<f64> = tally.values.iter().filter_map(|v| v.1).collect();
            for (i, v) in tally.values.iter().enumerate() {
                self.row("levelset.csv", "fields,member,hit,slope", format!("{name},{i},{},{}", v.0, v.1.unwrap_or(f64::NAN)));
            }
            let expected = 1.0 - dh;
            let half = self.tol("levelset", "halfwidth")?;
            let window = self.pair("levelset", "window", (expected - half, expected + half))?;
            let min_hit = self.tol("levelset", "min_hit_fraction")?;
            self.results.insert(
                format!("levelset/{name}"),
                json!({ "hit_fraction": hits as f64 / n, "estimated": slopes.len(), "slopes": slopes, "expected": expected }),
            );
            self.verdicts.push(Verdict::check(
                "levelset",
                name,
                "level set hit with positive probability when dH < 1",
                hits as f64 / n,
                (min_hit, 1.0),
                format!(">= {min_hit}"),
            ));
            let claim = format!("level set dimension = 1 - dH = {expected:.4}");
            if slopes.is_empty() {
                self.verdicts.push(Verdict::untestable("levelset", name, claim, "no hitting member resolved enough scales"));
            } else {
                let tol = format!("[{:.3}, {:.3}]", window.0, window.1);
                self.verdicts.push(
                    Verdict::check("levelset", name, claim, median(&slopes), window, tol)
                        .with_detail(format!("median over {} of {hits} hitting members", slopes.len())),
                );
            }
        } else {
            let tally = p.map(self.spec.ensemble, |_, path| {
                let floor = tube_floor(&path)?;
                let r = path.restrict(eps, t_end)?;
                let dmin = r
                    .rows()
                    .map(|row| row.iter().zip(&level).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
                    .sqrt();
                Ok((floor, dmin))
            })?;
            self.failures += tally.failures;
            let floor = median(&tally.values.iter().map(|v| v.0).collect::<Vec<_>>());
            let n = tally.values.len().max(1) as f64;
            let etas: Vec<f64> = (0..=halvings).map(|k| eta_factor * floor * 2f64.powi((halvings - k) as i32)).collect();
            let fractions: Vec<f64> = etas.iter().map(|&e| tally.values.iter().filter(|v| v.1 <= e).count() as f64 / n).collect();
            for (e, f) in etas.iter().zip(&fractions) {
                self.row("levelset_trend.csv", "fields,eta,hit_fraction", format!("{name},{e},{f}"));
            }
            let decreases = fractions.windows(2).filter(|w| w[1] < w[0]).count();
            self.results.insert(format!("levelset/{name}"), json!({ "etas": etas, "hit_fractions": fractions }));
            let claim = "L_x = ∅ a.s. when dH > 1: tube-hit fraction strictly decreasing as the tube halves";
            let v = if fractions[0] == 0.0 {
                Verdict::untestable("levelset", name, claim, "no member enters even the widest tube")
            } else {
                Verdict::check("levelset", name, claim, decreases as f64, (halvings as f64, halvings as f64), format!("{halvings} strict decreases"))
                    .with_detail(format!("hit fractions {fractions:?}"))
            };
            self.verdicts.push(v);
        }
        Ok(())
    }

    fn tail(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let m = self.spec.ensemble;
        if m < MIN_TAIL_ENSEMBLE {
            self.verdicts.push(Verdict::untestable("tail", name, "sup-increment tail exponent", format!("ensemble {m} < {MIN_TAIL_ENSEMBLE}")));
            return Ok(());
        }
        let h = self.spec.hurst.value();
        let interval = self.pair("tail", "interval", self.spec.t_range)?;
        let exponents = self.spec.param_list("tail", "exponents", &[1.0, 1.5, 2.0, 2.5, 3.0])?;
        let q_lo = self.spec.param_f64("tail", "quantile_lo", 0.5)?;
        let q_hi = self.spec.param_f64("tail", "quantile_hi", 0.998)?;
        let n_xi = self.spec.param_usize("tail", "n_xi", 20)?;
        let ends = self.spec.param_list("tail", "scaling_ends", &[1.0, 0.8, 0.6, 0.5, 0.4, 0.3])?;
        let len = interval.1 - interval.0;
        let mut intervals = vec![interval];
        intervals.extend(ends.iter().map(|f| (interval.0, interval.0 + f * len)));
        let sups = sup_increments(p, &intervals)?;
        let (lo, hi) = (quantile(&sups[0], q_lo), quantile(&sups[0], q_hi));
        let xi: Vec<f64> = (0..n_xi).map(|k| lo + (hi - lo) * k as f64 / (n_xi.max(2) - 1) as f64).collect();
        let curve = TailCurve::from_samples(&sups[0], &xi, interval)?;
        for (x, l) in curve.xi_values.iter().zip(&curve.log_probs) {
            self.row("tail.csv", "fields,xi,log_prob", format!("{name},{x},{l}"));
        }
        let fit = fit_tail_exponent(&curve, &exponents)?;
        let predicted = (2.0 * h + 1.0).min(2.0);
        let r2_min = self.tol("tail", "r2_min")?;
        let claim = format!("tail exponent (2H+1) ∧ 2 = {predicted:.2}");
        if (predicted - 2.0).abs() < 1e-12 {
            let best_r2 = fit.r2_of(fit.best_exponent).unwrap_or(f64::NAN);
            let ok = fit.best_exponent == 2.0 && best_r2 >= r2_min;
            let mut v = Verdict::check("tail", name, claim, fit.best_exponent, (2.0, 2.0), format!("ladder {exponents:?}, R² >= {r2_min}"))
                .with_detail(format!("best R² {best_r2:.5}"));
            if !ok {
                v.status = Status::Fail;
            }
            self.verdicts.push(v);
        } else {
            let pair = fit_tail_exponent(&curve, &[predicted, 2.0])?;
            let delta = pair.r2s[0] - pair.r2s[1];
            let floor = self.tol("tail", "delta_r2")?;
            self.verdicts.push(
                Verdict::check("tail", name, format!("{claim}: fits at least as well as 2"), delta, (floor, f64::INFINITY), format!("ΔR² >= {floor}"))
                    .with_detail(format!("R²({predicted:.2}) = {:.5}, R²(2) = {:.5}", pair.r2s[0], pair.r2s[1])),
            );
        }
        let xi_fixed = quantile(&sups[0], self.spec.param_f64("tail", "scaling_quantile", 0.5)?);
        let rank_min = self.tol("tail", "rank_min")?;
        let scaling = ScalingCheck::from_samples(&intervals[1..], &sups[1..], xi_fixed, h);
        let scaling_json = match &scaling {
            Ok(s) => {
                for (l, lp) in &s.points {
                    self.row("tail_scaling.csv", "fields,length,log_prob", format!("{name},{l},{lp}"));
                }
                self.verdicts.push(
                    Verdict::check("tail", name, "tail scales with (t-s)^2H: rank correlation", s.rank_correlation, (rank_min, 1.0), format!(">= {rank_min}"))
                        .with_detail(format!("log-prob slope in log(t-s) {:.4}", s.slope)),
                );
                serde_json::to_value(s)?
            }
            Err(e) => {
                self.verdicts.push(Verdict::untestable("tail", name, "tail scales with (t-s)^2H: rank correlation", e.to_string()));
                Value::Null
            }
        };
        self.results.insert(format!("tail/{name}"), json!({ "fit": fit, "xi_fixed": xi_fixed, "scaling": scaling_json }));
        Ok(())
    }

    fn density(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let m = self.spec.ensemble;
        let claim = "increment density decays like exp(-|z|^((2H+1)∧2))";
        if m < MIN_INCREMENT_ENSEMBLE {
            self.verdicts.push(Verdict::untestable("density", name, claim, format!("ensemble {m} < {MIN_INCREMENT_ENSEMBLE}")));
            return Ok(());
        }
        let h = self.spec.hurst.value();
        let d = p.fields().dim_state;
        let interval = self.pair("density", "interval", (0.5, self.spec.t_range.1))?;
        let per_axis = self.spec.param_usize("density", "n_centers", 41)?;
        let radius = self.spec.param_f64("density", "central_sd", 3.0)?;
        let kde = Kde::new(increment_samples(p, interval)?, d)?;
        let centers = kde.central_lattice(radius, per_axis);
        let est = DensityEstimate { values: kde.eval_many(&centers), centers, bandwidth: kde.bandwidth().to_vec(), ensemble_size: kde.len(), interval };
        for (c, v) in est.centers.iter().zip(&est.values) {
            let coords: Vec<String> = c.iter().map(f64::to_string).collect();
            self.row("density.csv", &density_header(d), format!("{name},{},{v}", coords.join(",")));
        }
        let env = increment_envelope(&est, h, self.spec.param_usize("density", "n_bins", 10)?)?;
        let r2_min = self.tol("density", "r2_min")?;
        let mut v = Verdict::check("density", name, format!("{claim}: envelope R²"), env.r_squared, (r2_min, 1.0), format!(">= {r2_min}, slope < 0"))
            .with_detail(format!("slope {:.4}", env.slope));
        if !(env.slope < 0.0) {
            v.status = Status::Fail;
        }
        self.verdicts.push(v);
        let mut mode = Value::Null;
        let oracle_claim = "Gaussian increment density at zero";
        if is_identity(p.fields()) {
            let exact = (2.0 * std::f64::consts::PI * (interval.1 - interval.0).powf(2.0 * h)).powf(-(d as f64) / 2.0);
            let got = kde.eval(&vec![0.0; d]);
            let tol = self.tol("density", "mode_tolerance")?;
            let ratio = got / exact;
            self.verdicts.push(
                Verdict::check("density", name, oracle_claim, ratio - 1.0, (-tol, tol), format!("relative {tol}"))
                    .with_detail(format!("kde {got:.5}, exact {exact:.5}")),
            );
            mode = json!({ "kde": got, "exact": exact });
        } else {
            self.verdicts.push(Verdict::untestable("density", name, oracle_claim, "no closed form for these fields"));
        }
        self.results.insert(format!("density/{name}"), json!({ "envelope": env, "bandwidth": est.bandwidth, "mode": mode }));
        Ok(())
    }

    fn bivariate(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let m = self.spec.ensemble;
        let g = 0.9 * self.spec.hurst.value();
        let claim = format!("joint density decays like exp(-|z1-z2|^2γ / (t-s)^2γ²), γ = {g:.3}");
        if m < MIN_BIVARIATE_ENSEMBLE {
            self.verdicts.push(Verdict::untestable("bivariate", name, claim, format!("ensemble {m} < {MIN_BIVARIATE_ENSEMBLE}")));
            return Ok(());
        }
        let d = p.fields().dim_state;
        let s = self.spec.param_f64("bivariate", "s", 0.5)?;
        let t = self.spec.param_f64("bivariate", "t", self.spec.t_range.1)?;
        let n_off = self.spec.param_usize("bivariate", "n_offsets", 21)?.max(3);
        let radius = self.spec.param_f64("bivariate", "central_sd", 3.0)?;
        let samples = joint_samples(p, s, t)?;
        let inc: Vec<f64> = samples.chunks_exact(2 * d).map(|r| r[d] - r[0]).collect();
        let sd = crate::stats::variance(&inc).sqrt();
        let offsets: Vec<f64> = (0..n_off).map(|k| radius * sd * (2.0 * k as f64 / (n_off - 1) as f64 - 1.0)).collect();
        let profile = BivariateProfile::from_samples(samples, d, s, t, &offsets)?;
        for (o, v) in profile.offsets.iter().zip(&profile.values) {
            self.row("bivariate.csv", "fields,offset,value", format!("{name},{o},{v}"));
        }
        let env = bivariate_envelope(&profile, self.spec.hurst.value(), 10)?;
        let r2_min = self.tol("bivariate", "r2_min")?;
        let mut v = Verdict::check("bivariate", name, format!("{claim}: envelope R²"), env.r_squared, (r2_min, 1.0), format!(">= {r2_min}, slope < 0"))
            .with_detail(format!("slope {:.4}", env.slope));
        if !(env.slope < 0.0) {
            v.status = Status::Fail;
        }
        self.verdicts.push(v);
        let oracle_claim = "joint Gaussian density near the diagonal";
        if is_identity(p.fields()) {
            let mut idx: Vec<usize> = (0..offsets.len()).collect();
            idx.sort_by(|&a, &b| offsets[a].abs().total_cmp(&offsets[b].abs()));
            let mut worst: f64 = 0.0;
            for &k in idx.iter().take(5) {
                let exact = gaussian_joint(self.spec.hurst, p.x0(), &profile.base, offsets[k], s, t)?;
                worst = worst.max((profile.values[k] / exact - 1.0).abs());
            }
            let tol = self.tol("bivariate", "oracle_tolerance")?;
            self.verdicts.push(Verdict::check("bivariate", name, oracle_claim, worst, (0.0, tol), format!("relative {tol} at 5 offsets")));
        } else {
            self.verdicts.push(Verdict::untestable("bivariate", name, oracle_claim, "no closed form for these fields"));
        }
        let zero = offsets.iter().position(|o| o.abs() < 1e-12);
        let mode_at_zero = zero.map(|z| profile.values.iter().all(|&v| v <= profile.values[z]));
        self.results.insert(format!("bivariate/{name}"), json!({ "envelope": env, "base": profile.base, "mode_at_zero": mode_at_zero }));
        Ok(())
    }

    fn energy(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let h = self.spec.hurst.value();
        let dim = (p.fields().dim_state as f64).min(1.0 / h);
        let gammas = self.spec.param_list("energy", "gammas", &[dim - 0.13, dim + 0.13])?;
        let levels = self.spec.param_usize("energy", "levels", 5)?;
        let restrict = self.pair("energy", "restrict", self.spec.t_range)?;
        if levels < 3 || self.spec.n_points >> (levels - 1) < 4 {
            return Err(Error::Config(format!("energy.levels = {levels} needs at least 3 levels and 4 coarse steps")));
        }
        let tally = p.map(self.spec.ensemble, |_, path| {
            gammas
                .iter()
                .map(|&g| {
                    (0..levels)
                        .map(|k| energy_integral(&path.coarsen(1 << (levels - 1 - k))?, g, restrict).map(|e| e.value))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })?;
        self.failures += tally.failures;
        let spacings: Vec<f64> = (0..levels).map(|k| (self.spec.t_range.1 - self.spec.t_range.0) / (self.spec.n_points >> (levels - 1 - k)) as f64).collect();
        let mut out = Vec::new();
        for (gi, &g) in gammas.iter().enumerate() {
            let energies: Vec<f64> = (0..levels).map(|k| median(&tally.values.iter().map(|v| v[gi][k]).collect::<Vec<_>>())).collect();
            let increments: Vec<f64> =
                (1..levels).map(|k| median(&tally.values.iter().map(|v| v[gi][k] - v[gi][k - 1]).collect::<Vec<_>>())).collect();
            for k in 0..levels {
                let inc = if k == 0 { f64::NAN } else { increments[k - 1] };
                self.row("energy.csv", "fields,gamma,spacing,median_energy,median_increment", format!("{name},{g},{},{},{inc}", spacings[k], energies[k]));
            }
            let claim = if g < dim {
                format!("γ = {g:.3} below dimension {dim:.4}: energy stabilizes under refinement")
            } else {
                format!("γ = {g:.3} above dimension {dim:.4}: energy grows under refinement")
            };
            let slope = if increments.iter().all(|&v| v > 0.0) {
                let x: Vec<f64> = spacings[1..].iter().map(|h| h.ln()).collect();
                let y: Vec<f64> = increments.iter().map(|v| v.ln()).collect();
                Some(linear_fit(&x, &y)?.slope)
            } else {
                None
            };
            match slope {
                _ if (g - dim).abs() < 1e-12 => self.verdicts.push(Verdict::untestable("energy", name, claim, "γ equals the dimension")),
                None => self.verdicts.push(Verdict::untestable("energy", name, claim, "a median refinement increment is not positive")),
                Some(s) => {
                    let window = if g < dim { (0.0, f64::INFINITY) } else { (f64::NEG_INFINITY, 0.0) };
                    let tol = if g < dim { "increment slope in log h > 0" } else { "increment slope in log h < 0" };
                    self.verdicts.push(Verdict::check("energy", name, claim, s, window, tol));
                }
            }
            out.push(json!({ "gamma": g, "spacings": spacings, "median_energies": energies, "median_increments": increments, "slope": slope }));
        }
        self.results.insert(format!("energy/{name}"), Value::Array(out));
        Ok(())
    }

    fn mu(&mut self, name: &str, p: &Pipeline) -> Result<()> {
        let h = self.spec.hurst.value();
        let dh = p.fields().dim_state as f64 * h;
        let claim = "μ_n: mass bounded below, mass² and γ-energy bounded above";
        if dh >= 1.0 {
            self.verdicts.push(Verdict::untestable("mu", name, claim, "the level set is empty when dH >= 1"));
            return Ok(());
        }
        let ns = self.spec.param_list("mu", "ns", &[4.0, 16.0, 64.0, 256.0])?;
        if ns.len() < 3 {
            return Err(Error::Config("mu.ns needs at least three values".into()));
        }
        let gamma = self.spec.param_f64("mu", "gamma", 1.0 - 1.2 * dh)?;
        if gamma < 0.0 {
            self.verdicts.push(Verdict::untestable("mu", name, claim, format!("default γ = 1 - 1.2 dH = {gamma:.3} is negative")));
            return Ok(());
        }
        let eps = self.spec.param_f64("mu", "epsilon", 0.1)?;
        let level = self.spec.param_list("mu", "level", p.x0())?;
        let restrict = (eps, self.spec.t_range.1);
        let tally = p.map(self.spec.ensemble, |_, path| ns.iter().map(|&n| mu_measure(&path, &level, n, gamma, restrict)).collect::<Result<Vec<_>>>())?;
        self.failures += tally.failures;
        let col = |k: usize, f: &dyn Fn(&crate::dimension::MuMeasure) -> f64| mean(&tally.values.iter().map(|v| f(&v[k])).collect::<Vec<_>>());
        let mass: Vec<f64> = (0..ns.len()).map(|k| col(k, &|m| m.mass)).collect();
        let mass2: Vec<f64> = (0..ns.len()).map(|k| col(k, &|m| m.mass * m.mass)).collect();
        let energy: Vec<f64> = (0..ns.len()).map(|k| col(k, &|m| m.gamma_energy)).collect();
        for k in 0..ns.len() {
            self.row("mu.csv", "fields,n,mean_mass,mean_mass_sq,mean_energy", format!("{name},{},{},{},{}", ns[k], mass[k], mass2[k], energy[k]));
        }
        // A bounded sequence approached like A - C n^-a has increments shrinking
        // by 4^-a per step in n; one growing like n^k has them growing by 4^k.
        let last = ns.len() - 1;
        let ratio_of = |v: &[f64]| (v[last] - v[last - 1]) / (v[last - 1] - v[last - 2]).abs();
        let slope_of = |v: &[f64]| (v[last] / v[last - 1]).ln() / (ns[last] / ns[last - 1]).ln();
        let lower = self.tol("mu", "lower_ratio")?;
        let rmax = self.tol("mu", "ratio_max")?;
        let ratio = mass.iter().copied().fold(f64::INFINITY, f64::min) / mass.iter().copied().fold(0.0, f64::max);
        self.verdicts.push(Verdict::check("mu", name, "μ_n mass bounded below: min/max of mean mass", ratio, (lower, 1.0), format!(">= {lower}")));
        for (label, v) in [("mass²".to_string(), &mass2), (format!("{gamma:.3}-energy"), &energy)] {
            let r = ratio_of(v);
            self.verdicts.push(
                Verdict::check("mu", name, format!("μ_n {label} bounded above: ratio of the last two increments"), r, (f64::NEG_INFINITY, rmax), format!("< {rmax}"))
                    .with_detail(format!("last-step log-slope in n {:.4}", slope_of(v))),
            );
            if r >= rmax {
                self.verdicts.last_mut().expect("just pushed").status = Status::Fail;
            }
        }
        self.results.insert(format!("mu/{name}"), json!({ "ns": ns, "gamma": gamma, "mean_mass": mass, "mean_mass_sq": mass2, "mean_energy": energy }));
        Ok(())
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

fn density_header(d: usize) -> String {
    let z: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
    format!("fields,{},value", z.join(","))
}

fn is_identity(f: &AnalyticFields) -> bool {
    *f == AnalyticFields::identity(f.dim_state)
}

/// Density of `(x0 + B^H_s, x0 + B^H_t)` at `(z, z + o e₁)`.
fn gaussian_joint(h: crate::fbm::HurstParam, x0: &[f64], z: &[f64], o: f64, s: f64, t: f64) -> Result<f64> {
    let (a, c, b) = (covariance(s, s, h)?, covariance(s, t, h)?, covariance(t, t, h)?);
    let det = a * b - c * c;
    let mut p = 1.0;
    for k in 0..z.len() {
        let u = z[k] - x0[k];
        let v = u + if k == 0 { o } else { 0.0 };
        let q = (b * u * u - 2.0 * c * u * v + a * v * v) / det;
        p *= (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt());
    }
    Ok(p)
}

/// Human-readable table with failing rows first, and the report as JSON.
pub fn report_render(report: &RunReport) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "run '{}'  H = {}  d = {}  n = {}  ensemble = {}  seed = {}", report.spec.name, report.spec.hurst.value(), report.spec.dim, report.spec.n_points, report.spec.ensemble, report.spec.base_seed);
    let _ = writeln!(text, "tasks: {}  member failures: {}  wall time: {:.1}s", report.tasks.join(", "), report.member_failures, report.wall_time_secs);
    if report.verdicts.is_empty() {
        let _ = writeln!(text, "\n*** no claims tested ***");
    } else {
        let mut rows: Vec<&Verdict> = report.verdicts.iter().collect();
        rows.sort_by_key(|v| match v.status {
            Status::Fail => 0,
            Status::Pass => 1,
            Status::Untestable => 2,
        });
        for v in rows {
            let _ = writeln!(text, "\n[{}] {} ({})", v.status.label().to_uppercase(), v.claim, v.fields);
            let _ = writeln!(text, "  task:     {}", v.task);
            if v.status != Status::Untestable {
                let show = |b: Option<f64>, open: &str| b.map_or(open.to_string(), |x| format!("{x:.6}"));
                let _ = writeln!(text, "  measured: {}", show(v.measured, "n/a"));
                let _ = writeln!(text, "  window:   [{}, {}]  ({})", show(v.window.0, "-inf"), show(v.window.1, "+inf"), v.tolerance);
            }
            if !v.detail.is_empty() {
                let _ = writeln!(text, "  detail:   {}", v.detail);
            }
        }
    }
    let json = serde_json::to_string_pretty(report).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"));
    (text, json)
}
