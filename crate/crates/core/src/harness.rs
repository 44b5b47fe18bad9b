//! Repeated randomized benchmarks of designs, estimators and the adaptive
//! sampler against analytic G-function indices.
//!
//! Every repetition `r` uses its own column permutation (seeded from the
//! base seed) and starts the Sobol' sequence at `1 + r * N_max`, so
//! repetitions never share quasi-random points.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adaptive::{run_adaptive, AdaptiveConfig};
use crate::design::{budget, fit_rows, sobol_design, DesignConfig, Scheme};
use crate::error::{GsaError, Result};
use crate::estimators::{estimate, EstimatorKind, EvaluatedSchedule};
use crate::models::{evaluate_batch, g_analytic, AnalyticIndices, Evaluator, GFunctionSpec};
use crate::qrng::RandomizationSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveSettings {
    pub warmup_rows: usize,
    pub delta: f64,
    pub window: usize,
    pub epsilon: f64,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        let d = AdaptiveConfig::new(0, 0);
        AdaptiveSettings {
            warmup_rows: d.warmup_rows,
            delta: d.delta,
            window: d.window,
            epsilon: d.epsilon,
        }
    }
}

impl AdaptiveSettings {
    fn config(&self, total_budget: usize, seed: u64, skip: u64, k: usize) -> AdaptiveConfig {
        AdaptiveConfig {
            warmup_rows: self.warmup_rows,
            delta: self.delta,
            window: self.window,
            total_budget,
            epsilon: self.epsilon,
            seed,
            skip,
            randomization: Some(RandomizationSpec::from_seed(seed, 2 * k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Contender {
    Design {
        scheme: Scheme,
        n: usize,
        estimator: EstimatorKind,
    },
    Adaptive(AdaptiveSettings),
}

impl Contender {
    pub fn design(scheme: Scheme, n: usize, estimator: EstimatorKind) -> Self {
        Contender::Design {
            scheme,
            n,
            estimator,
        }
    }

    pub fn adaptive() -> Self {
        Contender::Adaptive(AdaptiveSettings::default())
    }

    /// `asym-n2-saltenis`, `sym-n3-corr-corrected`, `adaptive`.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Base-matrix rows used at `target` runs, or `None` when infeasible.
    fn rows_for(&self, k: usize, target: usize) -> Result<Option<usize>> {
        match self {
            Contender::Design { scheme, n, .. } => fit_rows(k, *n, *scheme, target),
            Contender::Adaptive(s) => {
                let warmup = s.warmup_rows * (k + 1);
                Ok((target >= warmup).then(|| s.warmup_rows + (target - warmup) / 2))
            }
        }
    }
}

impl fmt::Display for Contender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contender::Design {
                scheme,
                n,
                estimator,
            } => write!(f, "{scheme}-n{n}-{estimator}"),
            Contender::Adaptive(_) => f.write_str("adaptive"),
        }
    }
}

impl FromStr for Contender {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "adaptive" {
            return Ok(Contender::adaptive());
        }
        let bad = || {
            GsaError::arg(format!(
                "contender `{s}` is not of the form <asym|sym>-n<N>-<estimator>"
            ))
        };
        let mut parts = s.splitn(3, '-');
        let scheme: Scheme = parts.next().ok_or_else(bad)?.parse()?;
        let n = parts
            .next()
            .and_then(|p| p.strip_prefix('n'))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let estimator = parts.next().ok_or_else(bad)?.parse()?;
        Ok(Contender::design(scheme, n, estimator))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub model: GFunctionSpec,
    pub contenders: Vec<Contender>,
    /// Target `N_T` values, strictly increasing.
    pub grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Also score first-order estimates where the design provides them
    /// without extra runs (symmetric designs).
    pub first_order: bool,
}

impl BenchmarkSpec {
    pub fn new(model: GFunctionSpec, contenders: Vec<Contender>, grid: Vec<usize>) -> Self {
        BenchmarkSpec {
            model,
            contenders,
            grid,
            reps: 50,
            seed: 0,
            first_order: false,
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(GsaError::arg("at least one repetition is required"));
        }
        if self.contenders.is_empty() {
            return Err(GsaError::arg("no contenders"));
        }
        if self.grid.is_empty() || self.grid.contains(&0) {
            return Err(GsaError::arg("budget grid must hold positive targets"));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GsaError::arg("budget grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Parses a `key = value` file. Recognised keys: `model` (only `g`),
    /// `a`, `contenders`, `grid`, `reps`, `seed`, `first_order`, and the
    /// adaptive settings `nts`, `delta`, `p`, `epsilon`. Lines starting with
    /// `#` are comments.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                GsaError::Parse(format!("config line {}: expected key = value", i + 1))
            })?;
            if kv
                .insert(key.trim().to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(GsaError::Parse(format!(
                    "config line {}: duplicate key `{}`",
                    i + 1,
                    key.trim()
                )));
            }
        }
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| GsaError::Parse(format!("config key `{key}`: bad value `{v}`")))
        }
        let mut take = |key: &str| kv.remove(key);

        if let Some(m) = take("model") {
            if m != "g" {
                return Err(GsaError::Parse(format!(
                    "benchmarks need an analytic reference; model `{m}` has none"
                )));
            }
        }
        let model = match take("a") {
            Some(a) => a.parse()?,
            None => GFunctionSpec::benchmark(),
        };
        let mut adaptive = AdaptiveSettings::default();
        if let Some(v) = take("nts") {
            adaptive.warmup_rows = num("nts", &v)?;
        }
        if let Some(v) = take("delta") {
            adaptive.delta = num("delta", &v)?;
        }
        if let Some(v) = take("p") {
            adaptive.window = num("p", &v)?;
        }
        if let Some(v) = take("epsilon") {
            adaptive.epsilon = num("epsilon", &v)?;
        }
        let contenders = take("contenders")
            .ok_or_else(|| GsaError::Parse("config lacks `contenders`".into()))?
            .split(',')
            .map(|c| {
                c.parse().map(|c| match c {
                    Contender::Adaptive(_) => Contender::Adaptive(adaptive.clone()),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = take("grid")
            .ok_or_else(|| GsaError::Parse("config lacks `grid`".into()))?
            .split(',')
            .map(|g| num("grid", g.trim()))
            .collect::<Result<Vec<_>>>()?;
        let mut spec = BenchmarkSpec::new(model, contenders, grid);
        if let Some(v) = take("reps") {
            spec.reps = num("reps", &v)?;
        }
        if let Some(v) = take("seed") {
            spec.seed = num("seed", &v)?;
        }
        if let Some(v) = take("first_order") {
            spec.first_order = num("first_order", &v)?;
        }
        if let Some(key) = kv.keys().next() {
            return Err(GsaError::Parse(format!("unknown config key `{key}`")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepError {
    pub rep: usize,
    pub evaluations: usize,
    /// `sum_j |T_j estimate - T_j|`.
    pub sum_abs_err_t: f64,
    pub sum_abs_err_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub contender: String,
    pub target: usize,
    /// Largest evaluation count over the repetitions; `None` if infeasible.
    pub actual: Option<usize>,
    pub mae_t: Option<f64>,
    pub mae_s: Option<f64>,
    pub reps: Vec<RepError>,
}

impl BenchmarkRow {
    pub fn is_feasible(&self) -> bool {
        self.actual.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub reference: AnalyticIndices,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub fn row(&self, contender: &str, target: usize) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.contender == contender && r.target == target)
    }

    pub fn infeasible(&self) -> impl Iterator<Item = &BenchmarkRow> + '_ {
        self.rows.iter().filter(|r| !r.is_feasible())
    }

    /// `contender,target_NT,actual_NT,rep,sum_abs_err_T,sum_abs_err_S,agg`;
    /// one line per repetition then one `agg=1` line holding the MAEs.
    /// Infeasible cells are written as an `agg=1` line with empty values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "contender",
            "target_NT",
            "actual_NT",
            "rep",
            "sum_abs_err_T",
            "sum_abs_err_S",
            "agg",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            for r in &row.reps {
                w.write_record([
                    row.contender.clone(),
                    row.target.to_string(),
                    r.evaluations.to_string(),
                    r.rep.to_string(),
                    r.sum_abs_err_t.to_string(),
                    opt(r.sum_abs_err_s),
                    "0".into(),
                ])?;
            }
            w.write_record([
                row.contender.clone(),
                row.target.to_string(),
                row.actual.map(|a| a.to_string()).unwrap_or_default(),
                String::new(),
                opt(row.mae_t),
                opt(row.mae_s),
                "1".into(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean of the per-repetition error sums.
pub fn mae(errors: &[f64]) -> f64 {
    errors.iter().sum::<f64>() / errors.len() as f64
}

fn rep_seed(base: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

fn abs_error_sum(estimates: &[f64], reference: &[f64]) -> f64 {
    estimates
        .iter()
        .zip(reference)
        .map(|(e, t)| (e - t).abs())
        .sum()
}

struct Cell {
    contender: usize,
    target: usize,
    rows: Option<usize>,
}

fn run_rep(
    spec: &BenchmarkSpec,
    reference: &AnalyticIndices,
    cell: &Cell,
    rows: usize,
    rep: usize,
    stride: u64,
) -> Result<RepError> {
    let k = spec.model.k();
    let seed = rep_seed(spec.seed, rep);
    let skip = 1 + rep as u64 * stride;
    match &spec.contenders[cell.contender] {
        Contender::Design {
            scheme,
            n,
            estimator,
        } => {
            let cfg = DesignConfig {
                k,
                n: *n,
                rows,
                scheme: *scheme,
                evaluate_donors: false,
            };
            let randomization = RandomizationSpec::from_seed(seed, n * k);
            let (schedule, pairs) = sobol_design(&cfg, skip, Some(&randomization))?;
            let mut evaluator = Evaluator::new(&spec.model);
            let y = evaluate_batch(&mut evaluator, &schedule)?;
            let ev = EvaluatedSchedule::new(schedule, y, evaluator.model_id())?;
            let with_s = spec.first_order && *scheme == Scheme::Symmetric;
            let report = estimate(&ev, &pairs, *estimator, with_s)?;
            Ok(RepError {
                rep,
                evaluations: evaluator.evaluations(),
                sum_abs_err_t: abs_error_sum(&report.totals(), &reference.total),
                sum_abs_err_s: report
                    .first_orders()
                    .map(|s| abs_error_sum(&s, &reference.first_order)),
            })
        }
        Contender::Adaptive(settings) => {
            let cfg = settings.config(cell.target, seed, skip, k);
            let trace = run_adaptive(&spec.model, k, &cfg)?;
            Ok(RepError {
                rep,
                evaluations: trace.evaluations(),
                sum_abs_err_t: abs_error_sum(trace.final_estimates(), &reference.total),
                sum_abs_err_s: None,
            })
        }
    }
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkTable> {
    spec.validate()?;
    let k = spec.model.k();
    let reference = g_analytic(&spec.model);

    let mut cells = Vec::new();
    for (c, contender) in spec.contenders.iter().enumerate() {
        if let Contender::Design { scheme, n, .. } = contender {
            DesignConfig {
                k,
                n: *n,
                rows: 1,
                scheme: *scheme,
                evaluate_donors: false,
            }
            .validate()?;
        }
        for &target in &spec.grid {
            cells.push(Cell {
                contender: c,
                target,
                rows: contender.rows_for(k, target)?,
            });
        }
    }
    let stride = cells.iter().filter_map(|c| c.rows).max().unwrap_or(0) as u64;

    let jobs: Vec<(usize, usize, usize)> = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.rows.map(|rows| (i, rows)))
        .flat_map(|(i, rows)| (0..spec.reps).map(move |r| (i, rows, r)))
        .collect();
    let outcomes: Vec<Result<RepError>> = jobs
        .par_iter()
        .map(|&(i, rows, r)| run_rep(spec, &reference, &cells[i], rows, r, stride))
        .collect();

    let mut by_cell: Vec<Vec<RepError>> = vec![Vec::new(); cells.len()];
    for (&(i, _, _), outcome) in jobs.iter().zip(outcomes) {
        by_cell[i].push(outcome?);
    }

    let rows = cells
        .iter()
        .zip(by_cell)
        .map(|(cell, reps)| {
            let contender = spec.contenders[cell.contender].id();
            if cell.rows.is_none() {
                return BenchmarkRow {
                    contender,
                    target: cell.target,
                    actual: None,
                    mae_t: None,
                    mae_s: None,
                    reps,
                };
            }
            let t: Vec<f64> = reps.iter().map(|r| r.sum_abs_err_t).collect();
            let s: Option<Vec<f64>> = reps.iter().map(|r| r.sum_abs_err_s).collect();
            BenchmarkRow {
                contender,
                target: cell.target,
                actual: reps.iter().map(|r| r.evaluations).max(),
                mae_t: Some(mae(&t)),
                mae_s: s.map(|s| mae(&s)),
                reps,
            }
        })
        .collect();
    Ok(BenchmarkTable { reference, rows })
}

/// Designed run count for a contender at one target, without running it.
pub fn planned_runs(contender: &Contender, k: usize, target: usize) -> Result<Option<usize>> {
    match contender {
        Contender::Design { scheme, n, .. } => Ok(contender.rows_for(k, target)?.map(|rows| {
            budget(&DesignConfig {
                k,
                n: *n,
                rows,
                scheme: *scheme,
                evaluate_donors: false,
            })
            .map(|b| b.total_runs)
            .expect("validated configuration")
        })),
        Contender::Adaptive(_) => Ok(contender.rows_for(k, target)?.map(|_| target)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub target: usize,
    pub mae_a: f64,
    pub mae_b: f64,
    /// `MAE_a / MAE_b`.
    pub ratio: f64,
    pub a_wins: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub contender_a: String,
    pub contender_b: String,
    pub points: Vec<ComparisonPoint>,
    /// Fraction of shared grid points where `a` has the strictly smaller MAE.
    pub win_fraction: f64,
}

/// Compares two contenders on the grid points where both ran.
pub fn compare(table: &BenchmarkTable, a: &str, b: &str) -> Result<Comparison> {
    let maes = |id: &str| -> Result<BTreeMap<usize, f64>> {
        let m: BTreeMap<usize, f64> = table
            .rows
            .iter()
            .filter(|r| r.contender == id)
            .filter_map(|r| r.mae_t.map(|m| (r.target, m)))
            .collect();
        if m.is_empty() {
            return Err(GsaError::arg(format!(
                "contender `{id}` has no feasible rows"
            )));
        }
        Ok(m)
    };
    let (ma, mb) = (maes(a)?, maes(b)?);
    let points: Vec<ComparisonPoint> = ma
        .iter()
        .filter_map(|(&target, &mae_a)| {
            mb.get(&target).map(|&mae_b| ComparisonPoint {
                target,
                mae_a,
                mae_b,
                ratio: mae_a / mae_b,
                a_wins: mae_a < mae_b,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(GsaError::arg(format!(
            "`{a}` and `{b}` share no grid point"
        )));
    }
    let wins = points.iter().filter(|p| p.a_wins).count();
    Ok(Comparison {
        contender_a: a.to_string(),
        contender_b: b.to_string(),
        win_fraction: wins as f64 / points.len() as f64,
        points,
    })
}
