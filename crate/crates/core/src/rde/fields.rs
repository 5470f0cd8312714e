use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Drift `V_0` and diffusion fields `V_1..V_d` on `R^n`, with derivatives.
///
/// Buffer layouts, with `n` the state and `d` the noise dimension:
/// diffusion `out[i*d + j] = V_j^i`, jacobian `out[(i*n + k)*d + j] = ∂_k V_j^i`,
/// hessian `out[((i*n + k)*n + l)*d + j] = ∂_k ∂_l V_j^i`.
pub trait VectorFieldSet: Send + Sync {
    fn name(&self) -> &str;
    fn dim_state(&self) -> usize;
    fn dim_noise(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64], out: &mut [f64]);

    fn has_drift(&self) -> bool {
        true
    }

    /// True when the diffusion fields do not depend on the state, so every
    /// derivative vanishes.
    fn constant_diffusion(&self) -> bool {
        false
    }

    fn uses_finite_differences(&self) -> bool {
        false
    }

    /// Number of continuous derivatives available.
    fn smoothness_order(&self) -> usize {
        usize::MAX
    }

    fn bound_hint(&self) -> Option<f64> {
        None
    }
}

/// `amplitude * sin(frequency · x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// Scalar function `constant + linear · x + Σ trig terms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarField {
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TrigTerm>,
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    fn is_constant(&self) -> bool {
        self.linear.iter().all(|&v| v == 0.0) && self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        v += self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        for t in &self.terms {
            v += t.amplitude * (dot(&t.frequency, x) + t.phase).sin();
        }
        v
    }

    fn gradient(&self, x: &[f64], k: usize) -> f64 {
        let mut g = self.linear.get(k).copied().unwrap_or(0.0);
        for t in &self.terms {
            g += t.amplitude * t.frequency[k] * (dot(&t.frequency, x) + t.phase).cos();
        }
        g
    }

    fn second(&self, x: &[f64], k: usize, l: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amplitude * t.frequency[k] * t.frequency[l] * (dot(&t.frequency, x) + t.phase).sin())
            .sum()
    }

    fn bound(&self) -> Option<f64> {
        if self.linear.iter().any(|&v| v != 0.0) {
            return None;
        }
        Some(self.constant.abs() + self.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>())
    }

    fn check(&self, n: usize) -> Result<()> {
        if !self.linear.is_empty() && self.linear.len() != n {
            return Err(Error::Shape(format!("linear part has {} coefficients, state dimension is {n}", self.linear.len())));
        }
        if let Some(t) = self.terms.iter().find(|t| t.frequency.len() != n) {
            return Err(Error::Shape(format!("trig frequency has {} entries, state dimension is {n}", t.frequency.len())));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Field set built from [`ScalarField`]s with analytic derivatives. This is
/// also the format of external field definition files (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticFields {
    pub name: String,
    pub dim_state: usize,
    pub dim_noise: usize,
    /// One entry per state coordinate; absent means no drift.
    #[serde(default)]
    pub drift: Option<Vec<ScalarField>>,
    /// Row-major `n × d`: entry `i*d + j` is `V_j^i`.
    pub diffusion: Vec<ScalarField>,
}

impl AnalyticFields {
    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.dim_state, self.dim_noise);
        if n == 0 || d == 0 {
            return Err(invalid("field dimensions must be positive"));
        }
        if self.diffusion.len() != n * d {
            return Err(Error::Shape(format!("{} diffusion entries for an {n}x{d} system", self.diffusion.len())));
        }
        if let Some(drift) = &self.drift {
            if drift.len() != n {
                return Err(Error::Shape(format!("{} drift entries for state dimension {n}", drift.len())));
            }
            drift.iter().try_for_each(|f| f.check(n))?;
        }
        self.diffusion.iter().try_for_each(|f| f.check(n))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `V = I` on `R^d`, no drift: the solution is the driver itself.
    pub fn identity(dim: usize) -> Self {
        let diffusion = (0..dim * dim).map(|k| ScalarField::constant(if k / dim == k % dim { 1.0 } else { 0.0 })).collect();
        Self { name: "identity".into(), dim_state: dim, dim_noise: dim, drift: None, diffusion }
    }

    /// `dX = sigma X dB` in one dimension.
    pub fn geometric(sigma: f64) -> Self {
        let v = ScalarField { linear: vec![sigma], ..ScalarField::default() };
        Self { name: "geometric_1d".into(), dim_state: 1, dim_noise: 1, drift: None, diffusion: vec![v] }
    }

    /// `V_j^i = δ_ij + (0.1/√2) sin(x_i + x_j)` with drift `0.2 (sin x_2, cos x_1)`.
    pub fn elliptic_sin_2d() -> Self {
        let amp = 0.1 / std::f64::consts::SQRT_2;
        let mut diffusion = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let mut freq = vec![0.0; 2];
                freq[i] += 1.0;
                freq[j] += 1.0;
                diffusion.push(ScalarField {
                    constant: if i == j { 1.0 } else { 0.0 },
                    terms: vec![TrigTerm { amplitude: amp, frequency: freq, phase: 0.0 }],
                    ..ScalarField::default()
                });
            }
        }
        let drift = vec![
            ScalarField { terms: vec![TrigTerm { amplitude: 0.2, frequency: vec![0.0, 1.0], phase: 0.0 }], ..ScalarField::default() },
            ScalarField {
                terms: vec![TrigTerm { amplitude: 0.2, frequency: vec![1.0, 0.0], phase: std::f64::consts::FRAC_PI_2 }],
                ..ScalarField::default()
            },
        ];
        Self { name: "elliptic_sin_2d".into(), dim_state: 2, dim_noise: 2, drift: Some(drift), diffusion }
    }

    /// `V = 1 + 0.3 sin x` with drift `0.2 cos x`, elliptic with `λ = 0.49`.
    pub fn elliptic_sin_1d() -> Self {
        let diffusion = ScalarField { constant: 1.0, terms: vec![TrigTerm { amplitude: 0.3, frequency: vec![1.0], phase: 0.0 }], ..ScalarField::default() };
        let drift = ScalarField {
            terms: vec![TrigTerm { amplitude: 0.2, frequency: vec![1.0], phase: std::f64::consts::FRAC_PI_2 }],
            ..ScalarField::default()
        };
        Self { name: "elliptic_sin_1d".into(), dim_state: 1, dim_noise: 1, drift: Some(vec![drift]), diffusion: vec![diffusion] }
    }

    /// `dX = sin(X) dt` with zero diffusion; `tan(X_t/2) = tan(x_0/2) e^t`.
    pub fn drift_only() -> Self {
        let drift = vec![ScalarField { terms: vec![TrigTerm { amplitude: 1.0, frequency: vec![1.0], phase: 0.0 }], ..ScalarField::default() }];
        Self { name: "drift_only".into(), dim_state: 1, dim_noise: 1, drift: Some(drift), diffusion: vec![ScalarField::default()] }
    }
}

impl VectorFieldSet for AnalyticFields {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_state(&self) -> usize {
        self.dim_state
    }

    fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    fn constant_diffusion(&self) -> bool {
        self.diffusion.iter().all(ScalarField::is_constant)
    }

    fn bound_hint(&self) -> Option<f64> {
        self.diffusion.iter().map(ScalarField::bound).try_fold(0.0, |acc: f64, b| b.map(|b| acc.max(b)))
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(fields) => out.iter_mut().zip(fields).for_each(|(o, f)| *o = f.value(x)),
            None => out.fill(0.0),
        }
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(&self.diffusion).for_each(|(o, f)| *o = f.value(x));
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (n, d) = (self.dim_state, self.dim_noise);
        for i in 0..n {
            for k in 0..n {
                for j in 0..d {
                    out[(i * n + k) * d + j] = self.diffusion[i * d + j].gradient(x, k);
                }
            }
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let (n, d) = (self.dim_state, self.dim_noise);
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    for j in 0..d {
                        out[((i * n + k) * n + l) * d + j] = self.diffusion[i * d + j].second(x, k, l);
                    }
                }
            }
        }
    }
}

/// Names accepted by [`catalog`].
pub const CATALOG: [&str; 5] = ["identity", "geometric_1d", "elliptic_sin_1d", "elliptic_sin_2d", "drift_only"];

/// Built-in example field sets. `dim` sizes the identity fields and must
/// match the fixed dimension of the others.
pub fn catalog(name: &str, dim: usize) -> Result<AnalyticFields> {
    let fields = match name {
        "identity" => AnalyticFields::identity(dim),
        "geometric_1d" => AnalyticFields::geometric(1.0),
        "elliptic_sin_1d" => AnalyticFields::elliptic_sin_1d(),
        "elliptic_sin_2d" => AnalyticFields::elliptic_sin_2d(),
        "drift_only" => AnalyticFields::drift_only(),
        other => {
            return Err(Error::Config(format!(
                "unknown field catalog name '{other}' (known: {})",
                CATALOG.join(", ")
            )))
        }
    };
    if fields.dim_noise != dim {
        return Err(invalid(format!("field set '{name}' is {}-dimensional, not {dim}", fields.dim_noise)));
    }
    Ok(fields)
}

type FieldFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Field set given only by values; derivatives come from central finite
/// differences with step `1e-5 (1 + |x_k|)`.
pub struct FiniteDifferenceFields {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    drift: Option<FieldFn>,
    diffusion: FieldFn,
}

impl FiniteDifferenceFields {
    pub fn new(
        name: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        drift: Option<FieldFn>,
        diffusion: FieldFn,
    ) -> Self {
        Self { name: name.into(), dim_state, dim_noise, drift, diffusion }
    }

    fn step(x: f64) -> f64 {
        1e-5 * (1.0 + x.abs())
    }
}

impl VectorFieldSet for FiniteDifferenceFields {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim_state(&self) -> usize {
        self.dim_state
    }

    fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    fn uses_finite_differences(&self) -> bool {
        true
    }

    fn smoothness_order(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(f) => f(x, out),
            None => out.fill(0.0),
        }
    }

    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let (n, d) = (self.dim_state, self.dim_noise);
        let mut y = x.to_vec();
        let (mut plus, mut minus) = (vec![0.0; n * d], vec![0.0; n * d]);
        for k in 0..n {
            let h = Self::step(x[k]);
            y[k] = x[k] + h;
            (self.diffusion)(&y, &mut plus);
            y[k] = x[k] - h;
            (self.diffusion)(&y, &mut minus);
            y[k] = x[k];
            for i in 0..n {
                for j in 0..d {
                    out[(i * n + k) * d + j] = (plus[i * d + j] - minus[i * d + j]) / (2.0 * h);
                }
            }
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let (n, d) = (self.dim_state, self.dim_noise);
        let mut y = x.to_vec();
        let mut corners = [vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d]];
        for k in 0..n {
            for l in 0..n {
                let (hk, hl) = (Self::step(x[k]), Self::step(x[l]));
                for (c, (sk, sl)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                    y.copy_from_slice(x);
                    y[k] += sk * hk;
                    y[l] += sl * hl;
                    (self.diffusion)(&y, &mut corners[c]);
                }
                for i in 0..n {
                    for j in 0..d {
                        let e = i * d + j;
                        let v = (corners[0][e] - corners[1][e] - corners[2][e] + corners[3][e]) / (4.0 * hk * hl);
                        out[((i * n + k) * n + l) * d + j] = v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shapes() {
        for name in CATALOG {
            let dim = if name == "elliptic_sin_2d" { 2 } else { 1 };
            let f = catalog(name, dim).unwrap();
            f.validate().unwrap();
        }
        assert!(catalog("identity", 3).unwrap().constant_diffusion());
        assert!(catalog("elliptic_sin_2d", 3).is_err());
        let err = catalog("nope", 1).unwrap_err().to_string();
        assert!(err.contains("unknown field catalog name"), "{err}");
    }

    #[test]
    fn finite_differences_match_analytic() {
        let analytic = AnalyticFields::elliptic_sin_2d();
        let a2 = analytic.clone();
        let fd = FiniteDifferenceFields::new("fd", 2, 2, None, Box::new(move |x, out| a2.diffusion(x, out)));
        let x = [0.3, -1.1];
        let (mut ja, mut jf) = (vec![0.0; 8], vec![0.0; 8]);
        analytic.jacobian(&x, &mut ja);
        fd.jacobian(&x, &mut jf);
        for (a, b) in ja.iter().zip(&jf) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let (mut ha, mut hf) = (vec![0.0; 16], vec![0.0; 16]);
        analytic.hessian(&x, &mut ha);
        fd.hessian(&x, &mut hf);
        for (a, b) in ha.iter().zip(&hf) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!(fd.uses_finite_differences());
    }

    #[test]
    fn json_round_trip() {
        let f = AnalyticFields::elliptic_sin_2d();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(AnalyticFields::from_json(&text).unwrap(), f);
        let bad = text.replace("\"dim_state\":2", "\"dim_state\":3");
        assert!(AnalyticFields::from_json(&bad).is_err());
    }
}
