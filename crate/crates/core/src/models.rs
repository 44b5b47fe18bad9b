//! Test models: the Sobol' G function with its analytic indices, simple
//! additive oracles, and a batch-file bridge to external simulators.

use std::fmt;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::design::RunSchedule;
use crate::error::{GsaError, Result};
use crate::io;

/// The six-factor coefficient vector used by the benchmarks.
pub const DEFAULT_G_COEFFICIENTS: [f64; 6] = [0.5, 3.9, 9.99, 99.0, 99.0, 99.0];

/// `G(x) = prod_j (|4 x_j - 2| + a_j) / (1 + a_j)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GFunctionSpec {
    a: Vec<f64>,
}

impl GFunctionSpec {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(GsaError::arg("G function needs at least one coefficient"));
        }
        if let Some(bad) = a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GsaError::arg(format!(
                "G coefficient {bad} is not a non-negative number"
            )));
        }
        Ok(GFunctionSpec { a })
    }

    pub fn benchmark() -> Self {
        GFunctionSpec {
            a: DEFAULT_G_COEFFICIENTS.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    fn eval(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.a)
            .map(|(x, a)| ((4.0 * x - 2.0).abs() + a) / (1.0 + a))
            .product()
    }
}

impl FromStr for GFunctionSpec {
    type Err = GsaError;

    /// Comma-separated coefficients, e.g. `0.5,3.9,9.99,99`.
    fn from_str(s: &str) -> Result<Self> {
        let a = s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| GsaError::Parse(format!("G coefficient `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        GFunctionSpec::new(a)
    }
}

pub fn g_function(x: &[f64], spec: &GFunctionSpec) -> Result<f64> {
    if x.len() != spec.k() {
        return Err(GsaError::arg(format!(
            "point has {} coordinates, G has {} factors",
            x.len(),
            spec.k()
        )));
    }
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(GsaError::arg(format!("coordinate {bad} outside [0, 1]")));
    }
    Ok(spec.eval(x))
}

/// Closed-form variance decomposition of a G function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticIndices {
    /// `V_j = (1/3) / (1 + a_j)^2`.
    pub partial_variance: Vec<f64>,
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    /// `V = prod (1 + V_j) - 1`.
    pub variance: f64,
}

pub fn g_analytic(spec: &GFunctionSpec) -> AnalyticIndices {
    let partial_variance: Vec<f64> = spec
        .a
        .iter()
        .map(|a| 1.0 / (3.0 * (1.0 + a).powi(2)))
        .collect();
    let variance = partial_variance.iter().map(|v| 1.0 + v).product::<f64>() - 1.0;
    let first_order = partial_variance.iter().map(|v| v / variance).collect();
    let total = (0..spec.k())
        .map(|j| {
            let others: f64 = partial_variance
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .map(|(_, v)| 1.0 + v)
                .product();
            partial_variance[j] * others / variance
        })
        .collect();
    AnalyticIndices {
        partial_variance,
        first_order,
        total,
        variance,
    }
}

/// Something that maps points in the unit hypercube to scalar outputs.
pub trait Model: Sync {
    fn id(&self) -> String;

    /// Evaluates row-major points of dimension `dims`, one output per row.
    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>>;
}

impl Model for GFunctionSpec {
    fn id(&self) -> String {
        "g".into()
    }

    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        if dims != self.k() {
            return Err(GsaError::arg(format!(
                "points have {dims} coordinates, G has {} factors",
                self.k()
            )));
        }
        Ok(rows.chunks_exact(dims).map(|x| self.eval(x)).collect())
    }
}

/// Small analytic models with known indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    /// `f(x) = x_1`: `T = (1, 0, ..., 0)`.
    Linear,
    /// `f(x) = sum_j x_j`: `S_j = T_j = 1/k`.
    Additive,
}

impl FromStr for BuiltinModel {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BuiltinModel::Linear),
            "additive" => Ok(BuiltinModel::Additive),
            other => Err(GsaError::arg(format!("unknown builtin model `{other}`"))),
        }
    }
}

impl Model for BuiltinModel {
    fn id(&self) -> String {
        match self {
            BuiltinModel::Linear => "linear",
            BuiltinModel::Additive => "additive",
        }
        .into()
    }

    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows
            .chunks_exact(dims)
            .map(|x| match self {
                BuiltinModel::Linear => x[0],
                BuiltinModel::Additive => x.iter().sum(),
            })
            .collect())
    }
}

/// Wraps a closure as a model.
pub struct FnModel<F> {
    name: String,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnModel {
            name: name.into(),
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Model for FnModel<F> {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows.chunks_exact(dims).map(&self.f).collect())
    }
}

/// An external simulator driven through files: the points are written to
/// `input_path` as CSV (`x1..xk`), `command` is run through `sh -c` with
/// `{input}` and `{output}` substituted, and `output_path` is read back as
/// one value per line.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalModelSpec {
    pub command: String,
    pub input_path: PathBuf,
    pub output_path: PathBuf,
    pub timeout: Duration,
}

impl ExternalModelSpec {
    fn command_line(&self) -> String {
        self.command
            .replace("{input}", &self.input_path.display().to_string())
            .replace("{output}", &self.output_path.display().to_string())
    }
}

impl Model for ExternalModelSpec {
    fn id(&self) -> String {
        format!("external:{}", self.command)
    }

    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        let count = rows.len() / dims;
        let fail = |message: String| GsaError::Evaluation {
            range: 0..count,
            message,
        };
        io::write_points(&self.input_path, dims, rows)?;
        let _ = std::fs::remove_file(&self.output_path);

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(self.command_line())
            .stdin(Stdio::null())
            .spawn()
            .map_err(|e| fail(format!("cannot start `{}`: {e}", self.command)))?;
        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() > self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(format!("timed out after {:?}", self.timeout)));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        if !status.success() {
            return Err(fail(format!("`{}` exited with {status}", self.command)));
        }
        let values = io::read_values(&self.output_path)?;
        if values.len() != count {
            return Err(fail(format!(
                "expected {count} outputs, read {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GsaError::Evaluation {
                range: i..i + 1,
                message: "non-finite output".into(),
            });
        }
        Ok(values)
    }
}

/// Any model the command line can name.
pub enum ModelSpec {
    G(GFunctionSpec),
    Builtin(BuiltinModel),
    External(ExternalModelSpec),
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl Model for ModelSpec {
    fn id(&self) -> String {
        match self {
            ModelSpec::G(m) => m.id(),
            ModelSpec::Builtin(m) => m.id(),
            ModelSpec::External(m) => m.id(),
        }
    }

    fn evaluate_rows(&self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        match self {
            ModelSpec::G(m) => m.evaluate_rows(dims, rows),
            ModelSpec::Builtin(m) => m.evaluate_rows(dims, rows),
            ModelSpec::External(m) => m.evaluate_rows(dims, rows),
        }
    }
}

/// Counts model evaluations; the count is the cost axis of every benchmark.
pub struct Evaluator<'m> {
    model: &'m dyn Model,
    evaluations: usize,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m dyn Model) -> Self {
        Evaluator {
            model,
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn model_id(&self) -> String {
        self.model.id()
    }

    pub fn evaluate_rows(&mut self, dims: usize, rows: &[f64]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let y = self.model.evaluate_rows(dims, rows)?;
        let expected = rows.len() / dims;
        if y.len() != expected {
            return Err(GsaError::Evaluation {
                range: 0..expected,
                message: format!("model returned {} outputs", y.len()),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(GsaError::Evaluation {
                range: i..i + 1,
                message: "non-finite output".into(),
            });
        }
        self.evaluations += expected;
        Ok(y)
    }

    pub fn evaluate_point(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate_rows(x.len(), x)?[0])
    }
}

/// One output per run of `runs`, in schedule order.
pub fn evaluate_batch(evaluator: &mut Evaluator<'_>, runs: &RunSchedule) -> Result<Vec<f64>> {
    let rows: Vec<f64> = runs.points().flatten().copied().collect();
    evaluator.evaluate_rows(runs.k(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sobol_design, DesignConfig};
    use approx::assert_relative_eq;

    #[test]
    fn g_at_quarter_points_is_one() {
        let spec = GFunctionSpec::new(vec![0.0, 1.0, 9.0, 99.0]).unwrap();
        assert_eq!(g_function(&[0.25, 0.75, 0.75, 0.25], &spec).unwrap(), 1.0);
    }

    #[test]
    fn g_direct_values() {
        let one = GFunctionSpec::new(vec![0.0]).unwrap();
        assert_eq!(g_function(&[0.5], &one).unwrap(), 0.0);
        let two = GFunctionSpec::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(g_function(&[0.0, 0.0], &two).unwrap(), 4.0);
    }

    #[test]
    fn g_rejects_bad_points_and_coefficients() {
        let spec = GFunctionSpec::new(vec![0.0, 0.0]).unwrap();
        assert!(g_function(&[0.5], &spec).is_err());
        assert!(g_function(&[0.5, 1.5], &spec).is_err());
        assert!(GFunctionSpec::new(vec![-1.0]).is_err());
        assert!(GFunctionSpec::new(vec![]).is_err());
        assert!("0.5,x".parse::<GFunctionSpec>().is_err());
        assert_eq!(
            "0.5, 3.9".parse::<GFunctionSpec>().unwrap().coefficients(),
            &[0.5, 3.9]
        );
    }

    #[test]
    fn single_factor_owns_all_variance() {
        for a in [0.0, 1.0, 99.0] {
            let r = g_analytic(&GFunctionSpec::new(vec![a]).unwrap());
            assert_relative_eq!(r.first_order[0], 1.0, max_relative = 1e-12);
            assert_relative_eq!(r.total[0], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn two_equal_important_factors() {
        let r = g_analytic(&GFunctionSpec::new(vec![0.0, 0.0]).unwrap());
        for j in 0..2 {
            assert_relative_eq!(r.first_order[j], 3.0 / 7.0, epsilon = 1e-14);
            assert_relative_eq!(r.total[j], 4.0 / 7.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn importance_follows_coefficients() {
        let r = g_analytic(&GFunctionSpec::benchmark());
        let t = &r.total;
        assert!(t[0] > t[1] && t[1] > t[2] && t[2] > t[3]);
        assert_eq!(t[3], t[4]);
        assert_eq!(t[4], t[5]);
        let sum_s: f64 = r.first_order.iter().sum();
        assert!(sum_s <= 1.0);
        for (t, s) in t.iter().zip(&r.first_order) {
            assert!(t - s >= -1e-12);
        }
    }

    #[test]
    fn evaluator_counts_runs() {
        let g = GFunctionSpec::benchmark();
        let (s, _) = sobol_design(&DesignConfig::asymmetric(6, 64), 1, None).unwrap();
        let mut ev = Evaluator::new(&g);
        let y = evaluate_batch(&mut ev, &s).unwrap();
        assert_eq!(y.len(), 448);
        assert_eq!(ev.evaluations(), 448);
        assert!(ev.evaluate_rows(6, &[]).unwrap().is_empty());
        assert_eq!(ev.evaluations(), 448);
    }

    #[test]
    fn builtins() {
        assert_eq!(
            BuiltinModel::Additive
                .evaluate_rows(2, &[0.25, 0.5, 0.125, 0.0])
                .unwrap(),
            vec![0.75, 0.125]
        );
        assert_eq!(
            BuiltinModel::Linear.evaluate_rows(2, &[0.25, 0.5]).unwrap(),
            vec![0.25]
        );
    }
}
