//! Evaluation schedules for total-effect estimation.
//!
//! A design starts from `n` base matrices `A, B, C, ...` of `N` rows and `k`
//! columns. A hybrid matrix `A_B^(j)` copies `A` except for column `j`, which
//! it takes from `B`. Two layouts are supported:
//!
//! - asymmetric: `A` is the base sample; only `A` and the hybrids `A_X^(j)`
//!   are evaluated (`n = 2` is the usual choice, larger `n` reproduces the
//!   multi-matrix variant used for reuse accounting);
//! - symmetric: every base matrix and every hybrid `X_Y^(j)` for each ordered
//!   couple `(X, Y)` is evaluated.
//!
//! Each pair of runs one step apart in direction `j` is an elementary effect
//! for factor `j`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GsaError, Result};
use crate::qrng::{self, QrPointSet, RandomizationSpec};

/// `N_T` may exceed the requested budget by at most this factor when a plan
/// rounds `N` to a power of two.
pub const PLAN_TOLERANCE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Asymmetric,
    Symmetric,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Asymmetric => "asym",
            Scheme::Symmetric => "sym",
        })
    }
}

impl FromStr for Scheme {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asym" | "asymmetric" => Ok(Scheme::Asymmetric),
            "sym" | "symmetric" => Ok(Scheme::Symmetric),
            other => Err(GsaError::arg(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Number of factors.
    pub k: usize,
    /// Number of base matrices.
    pub n: usize,
    /// Rows per base matrix.
    pub rows: usize,
    pub scheme: Scheme,
    /// Asymmetric only: also evaluate the donor bases `B, C, ...` so that
    /// first-order indices can be estimated from the same schedule.
    pub evaluate_donors: bool,
}

impl DesignConfig {
    pub fn asymmetric(k: usize, rows: usize) -> Self {
        DesignConfig {
            k,
            n: 2,
            rows,
            scheme: Scheme::Asymmetric,
            evaluate_donors: false,
        }
    }

    pub fn symmetric(k: usize, n: usize, rows: usize) -> Self {
        DesignConfig {
            k,
            n,
            rows,
            scheme: Scheme::Symmetric,
            evaluate_donors: false,
        }
    }

    pub fn with_donors(mut self) -> Self {
        self.evaluate_donors = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(GsaError::arg("k must be at least 1"));
        }
        if self.rows == 0 {
            return Err(GsaError::arg("N must be at least 1"));
        }
        if self.n < 2 {
            return Err(GsaError::arg(format!(
                "{} design needs n >= 2 matrices, got {}",
                self.scheme, self.n
            )));
        }
        if self.evaluate_donors && self.scheme == Scheme::Symmetric {
            return Err(GsaError::arg(
                "donor evaluation only applies to the asymmetric scheme",
            ));
        }
        Ok(())
    }

    /// Base matrices evaluated as runs in their own right.
    pub fn evaluated_bases(&self) -> Vec<usize> {
        match self.scheme {
            Scheme::Symmetric => (0..self.n).collect(),
            Scheme::Asymmetric if self.evaluate_donors => (0..self.n).collect(),
            Scheme::Asymmetric => vec![0],
        }
    }

    /// Base matrices whose hybrids are evaluated.
    pub fn sources(&self) -> Vec<usize> {
        match self.scheme {
            Scheme::Symmetric => (0..self.n).collect(),
            Scheme::Asymmetric => vec![0],
        }
    }

    /// Base matrices whose rows enter the output variance.
    pub fn variance_bases(&self) -> Vec<usize> {
        self.sources()
    }
}

/// An `N x k` block of points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GsaError::arg(format!(
                "{} values do not fill a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Ok(SampleMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Splits `n * k`-dimensional points into `n` matrices: the leftmost `k`
/// columns form `A`, the next `k` form `B`, and so on.
pub fn split_bases(points: &QrPointSet, n: usize, k: usize) -> Result<Vec<SampleMatrix>> {
    if points.dims() != n * k {
        return Err(GsaError::arg(format!(
            "{}-dimensional points cannot be split into {n} blocks of {k}",
            points.dims()
        )));
    }
    let rows = points.count();
    Ok((0..n)
        .map(|m| {
            let data = points
                .rows()
                .flat_map(|r| r[m * k..(m + 1) * k].iter().copied())
                .collect();
            SampleMatrix {
                rows,
                cols: k,
                data,
            }
        })
        .collect())
}

/// Base matrices drawn from the Sobol' sequence: `rows` points of dimension
/// `n * k` starting at `skip`, columns permuted jointly before the split.
pub fn sobol_bases(
    n: usize,
    k: usize,
    rows: usize,
    skip: u64,
    randomization: Option<&RandomizationSpec>,
) -> Result<Vec<SampleMatrix>> {
    let pts = qrng::sobol_points(n * k, rows, skip)?;
    let pts = match randomization {
        Some(spec) => qrng::randomize(&pts, spec)?,
        None => pts,
    };
    split_bases(&pts, n, k)
}

/// Conventional label of base matrix `m`: `A`, `B`, ... then `M27`, `M28`.
pub fn matrix_label(m: usize) -> String {
    if m < 26 {
        char::from(b'A' + m as u8).to_string()
    } else {
        format!("M{}", m + 1)
    }
}

fn parse_matrix_label(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    if bytes.len() == 1 && bytes[0].is_ascii_uppercase() {
        return Some(usize::from(bytes[0] - b'A'));
    }
    s.strip_prefix('M')
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&m| m > 26)
        .map(|m| m - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RunTag {
    Base {
        matrix: usize,
    },
    /// Rows of `source` with column `factor` taken from `donor`.
    Hybrid {
        source: usize,
        donor: usize,
        factor: usize,
    },
}

impl RunTag {
    /// Base matrix supplying column `col` of a run with this tag.
    pub fn origin(&self, col: usize) -> usize {
        match *self {
            RunTag::Base { matrix } => matrix,
            RunTag::Hybrid {
                source,
                donor,
                factor,
            } => {
                if col == factor {
                    donor
                } else {
                    source
                }
            }
        }
    }
}

impl fmt::Display for RunTag {
    /// `A` for a base block, `A_B(3)` for `A_B^(3)` (factors are 1-based).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RunTag::Base { matrix } => f.write_str(&matrix_label(matrix)),
            RunTag::Hybrid {
                source,
                donor,
                factor,
            } => write!(
                f,
                "{}_{}({})",
                matrix_label(source),
                matrix_label(donor),
                factor + 1
            ),
        }
    }
}

impl FromStr for RunTag {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || GsaError::Parse(format!("invalid run tag `{s}`"));
        if let Some((src, rest)) = s.split_once('_') {
            let (donor, factor) = rest
                .strip_suffix(')')
                .and_then(|r| r.split_once('('))
                .ok_or_else(bad)?;
            let factor: usize = factor.parse().map_err(|_| bad())?;
            if factor == 0 {
                return Err(bad());
            }
            Ok(RunTag::Hybrid {
                source: parse_matrix_label(src).ok_or_else(bad)?,
                donor: parse_matrix_label(donor).ok_or_else(bad)?,
                factor: factor - 1,
            })
        } else {
            Ok(RunTag::Base {
                matrix: parse_matrix_label(s).ok_or_else(bad)?,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunDescriptor {
    pub tag: RunTag,
    pub row: usize,
}

/// The ordered list of model runs: base blocks first (matrix-major), then
/// hybrid blocks grouped by (source, donor, factor). Every block holds rows
/// `0..N` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSchedule {
    config: DesignConfig,
    runs: Vec<RunDescriptor>,
    points: Vec<f64>,
    blocks: BTreeMap<RunTag, Range<usize>>,
}

impl RunSchedule {
    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn runs(&self) -> &[RunDescriptor] {
        &self.runs
    }

    pub fn point(&self, run: usize) -> &[f64] {
        let k = self.config.k;
        &self.points[run * k..(run + 1) * k]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.config.k)
    }

    /// Run ids of the block carrying `tag`, if it was evaluated.
    pub fn block(&self, tag: RunTag) -> Option<Range<usize>> {
        self.blocks.get(&tag).cloned()
    }

    /// Rebuilds a schedule from `(tag, point)` records in file order. The
    /// layout (scheme, `n`, `N`, donor evaluation) is inferred from the tags
    /// and must match what [`build_schedule`] would produce.
    pub fn from_records(records: Vec<(RunTag, Vec<f64>)>) -> Result<Self> {
        let k = records
            .first()
            .map(|(_, p)| p.len())
            .ok_or_else(|| GsaError::arg("schedule has no runs"))?;
        let mut n = 0;
        let mut symmetric = false;
        let mut donors = false;
        for (tag, p) in &records {
            if p.len() != k {
                return Err(GsaError::arg("runs have differing dimensions"));
            }
            match *tag {
                RunTag::Base { matrix } => {
                    n = n.max(matrix + 1);
                    donors |= matrix > 0;
                }
                RunTag::Hybrid {
                    source,
                    donor,
                    factor,
                } => {
                    n = n.max(source + 1).max(donor + 1);
                    symmetric |= source > 0;
                    if factor >= k {
                        return Err(GsaError::arg(format!(
                            "tag {tag} names factor beyond k = {k}"
                        )));
                    }
                }
            }
        }
        let rows = records
            .iter()
            .filter(|(t, _)| *t == RunTag::Base { matrix: 0 })
            .count();
        let config = DesignConfig {
            k,
            n,
            rows,
            scheme: if symmetric {
                Scheme::Symmetric
            } else {
                Scheme::Asymmetric
            },
            evaluate_donors: donors && !symmetric,
        };
        config.validate()?;
        let expected = layout(&config);
        let actual: Vec<RunTag> = records.iter().map(|(t, _)| *t).collect();
        if expected.len() * rows != actual.len()
            || actual
                .chunks(rows)
                .zip(&expected)
                .any(|(chunk, tag)| chunk.iter().any(|t| t != tag))
        {
            return Err(GsaError::arg(
                "run tags do not follow the schedule layout for the inferred design",
            ));
        }
        let points = records.into_iter().flat_map(|(_, p)| p).collect();
        Ok(assemble(config, &expected, points))
    }
}

/// Pairs of run ids one step apart in the direction of the factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectPair {
    pub u: usize,
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EffectPairIndex {
    per_factor: Vec<Vec<EffectPair>>,
}

impl EffectPairIndex {
    pub fn new(per_factor: Vec<Vec<EffectPair>>) -> Self {
        EffectPairIndex { per_factor }
    }

    pub fn k(&self) -> usize {
        self.per_factor.len()
    }

    pub fn factor(&self, j: usize) -> &[EffectPair] {
        &self.per_factor[j]
    }

    pub fn total(&self) -> usize {
        self.per_factor.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &EffectPair)> + '_ {
        self.per_factor
            .iter()
            .enumerate()
            .flat_map(|(j, ps)| ps.iter().map(move |p| (j, p)))
    }

    /// Checks every pair refers to existing runs that agree on every
    /// coordinate but the factor's own. The factor's coordinate may
    /// coincide, as it does on the all-0.5 first Sobol' row.
    pub fn validate(&self, schedule: &RunSchedule) -> Result<()> {
        if self.k() != schedule.k() {
            return Err(GsaError::arg(format!(
                "pair index covers {} factors, schedule has {}",
                self.k(),
                schedule.k()
            )));
        }
        for (j, p) in self.iter() {
            if p.u >= schedule.len() || p.v >= schedule.len() {
                return Err(GsaError::arg(format!(
                    "pair ({}, {}) refers to a missing run",
                    p.u, p.v
                )));
            }
            let (x, y) = (schedule.point(p.u), schedule.point(p.v));
            let differs = x
                .iter()
                .zip(y)
                .enumerate()
                .any(|(c, (a, b))| c != j && a != b);
            if differs {
                return Err(GsaError::arg(format!(
                    "runs {} and {} are not a step in direction {}",
                    p.u,
                    p.v,
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

fn layout(cfg: &DesignConfig) -> Vec<RunTag> {
    let mut tags: Vec<RunTag> = cfg
        .evaluated_bases()
        .into_iter()
        .map(|matrix| RunTag::Base { matrix })
        .collect();
    for source in cfg.sources() {
        for donor in (0..cfg.n).filter(|&d| d != source) {
            for factor in 0..cfg.k {
                tags.push(RunTag::Hybrid {
                    source,
                    donor,
                    factor,
                });
            }
        }
    }
    tags
}

fn assemble(config: DesignConfig, tags: &[RunTag], points: Vec<f64>) -> RunSchedule {
    let n = config.rows;
    let mut runs = Vec::with_capacity(tags.len() * n);
    let mut blocks = BTreeMap::new();
    for (b, &tag) in tags.iter().enumerate() {
        blocks.insert(tag, b * n..(b + 1) * n);
        runs.extend((0..n).map(|row| RunDescriptor { tag, row }));
    }
    RunSchedule {
        config,
        runs,
        points,
        blocks,
    }
}

/// Lays out every run of the design and lists its elementary effects.
pub fn build_schedule(
    cfg: &DesignConfig,
    bases: &[SampleMatrix],
) -> Result<(RunSchedule, EffectPairIndex)> {
    cfg.validate()?;
    if bases.len() != cfg.n {
        return Err(GsaError::arg(format!(
            "{} design with n = {} got {} base matrices",
            cfg.scheme,
            cfg.n,
            bases.len()
        )));
    }
    for (m, b) in bases.iter().enumerate() {
        if b.rows() != cfg.rows || b.cols() != cfg.k {
            return Err(GsaError::arg(format!(
                "base matrix {} is {} x {}, expected {} x {}",
                matrix_label(m),
                b.rows(),
                b.cols(),
                cfg.rows,
                cfg.k
            )));
        }
    }
    for a in 0..bases.len() {
        for b in a + 1..bases.len() {
            if bases[a] == bases[b] {
                return Err(GsaError::arg(format!(
                    "base matrices {} and {} are identical",
                    matrix_label(a),
                    matrix_label(b)
                )));
            }
        }
    }

    let tags = layout(cfg);
    let mut points = Vec::with_capacity(tags.len() * cfg.rows * cfg.k);
    for tag in &tags {
        for i in 0..cfg.rows {
            points.extend((0..cfg.k).map(|c| bases[tag.origin(c)].get(i, c)));
        }
    }
    let schedule = assemble(*cfg, &tags, points);
    let pairs = effect_pairs(&schedule);
    Ok((schedule, pairs))
}

/// Elementary effects of a schedule. Per factor and source matrix `X`: the
/// couples `(x_i, x_Y^(j))` for each donor `Y`, then `(x_Y^(j), x_Z^(j))`
/// for each donor couple `Y < Z`.
pub fn effect_pairs(schedule: &RunSchedule) -> EffectPairIndex {
    let cfg = schedule.config();
    let per_factor = (0..cfg.k)
        .map(|factor| {
            let mut pairs = Vec::new();
            for source in cfg.sources() {
                let hybrid = |donor| {
                    schedule
                        .block(RunTag::Hybrid {
                            source,
                            donor,
                            factor,
                        })
                        .expect("hybrid block present")
                };
                let donors: Vec<usize> = (0..cfg.n).filter(|&d| d != source).collect();
                let base = schedule
                    .block(RunTag::Base { matrix: source })
                    .expect("source base block present");
                for &d in &donors {
                    pairs.extend(
                        base.clone()
                            .zip(hybrid(d))
                            .map(|(u, v)| EffectPair { u, v }),
                    );
                }
                for (a, &d1) in donors.iter().enumerate() {
                    for &d2 in &donors[a + 1..] {
                        pairs.extend(hybrid(d1).zip(hybrid(d2)).map(|(u, v)| EffectPair { u, v }));
                    }
                }
            }
            pairs
        })
        .collect();
    EffectPairIndex { per_factor }
}

/// Builds a design on Sobol' base matrices (see [`sobol_bases`]).
pub fn sobol_design(
    cfg: &DesignConfig,
    skip: u64,
    randomization: Option<&RandomizationSpec>,
) -> Result<(RunSchedule, EffectPairIndex)> {
    cfg.validate()?;
    let bases = sobol_bases(cfg.n, cfg.k, cfg.rows, skip, randomization)?;
    build_schedule(cfg, &bases)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignBudget {
    /// `N_T`: model runs.
    pub total_runs: usize,
    /// `E_T`: elementary effects over all factors.
    pub total_effects: usize,
    /// `e = E_T / N_T`.
    pub economy: f64,
    /// `nN`: rows carrying only original coordinates.
    pub explored: usize,
}

pub fn budget(cfg: &DesignConfig) -> Result<DesignBudget> {
    cfg.validate()?;
    let DesignConfig { k, n, rows, .. } = *cfg;
    let (total_runs, total_effects) = match cfg.scheme {
        Scheme::Asymmetric => {
            let donors = if cfg.evaluate_donors {
                rows * (n - 1)
            } else {
                0
            };
            (
                rows * (1 + k * (n - 1)) + donors,
                n * (n - 1) / 2 * k * rows,
            )
        }
        Scheme::Symmetric => (n * rows * (1 + k * (n - 1)), rows * k * n * n * (n - 1) / 2),
    };
    Ok(DesignBudget {
        total_runs,
        total_effects,
        economy: total_effects as f64 / total_runs as f64,
        explored: n * rows,
    })
}

/// Largest power-of-two `N` whose run count stays within
/// `PLAN_TOLERANCE * target`, or `None` if even `N = 1` overshoots.
pub fn fit_rows(k: usize, n: usize, scheme: Scheme, target_runs: usize) -> Result<Option<usize>> {
    let runs_for = |rows| {
        budget(&DesignConfig {
            k,
            n,
            rows,
            scheme,
            evaluate_donors: false,
        })
        .map(|b| b.total_runs)
    };
    let cap = (target_runs as f64 * PLAN_TOLERANCE).floor() as usize;
    if runs_for(1)? > cap {
        return Ok(None);
    }
    let mut rows = 1usize;
    while runs_for(rows * 2)? <= cap {
        rows *= 2;
    }
    Ok(Some(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRow {
    pub n: usize,
    pub rows: usize,
    pub scheme: Scheme,
    pub budget: DesignBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub rows: Vec<PlanRow>,
    /// One note per omitted candidate.
    pub notes: Vec<String>,
}

pub fn plan_for_budget(
    k: usize,
    target_runs: usize,
    scheme: Scheme,
    n_candidates: &[usize],
) -> Result<Plan> {
    let mut candidates = n_candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let mut plan = Plan {
        rows: Vec::new(),
        notes: Vec::new(),
    };
    for n in candidates {
        match fit_rows(k, n, scheme, target_runs)? {
            Some(rows) => {
                let cfg = DesignConfig {
                    k,
                    n,
                    rows,
                    scheme,
                    evaluate_donors: false,
                };
                plan.rows.push(PlanRow {
                    n,
                    rows,
                    scheme,
                    budget: budget(&cfg)?,
                });
            }
            None => plan.notes.push(format!(
                "n = {n} ({scheme}) omitted: a single row per matrix already exceeds {target_runs} runs"
            )),
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseEntry {
    pub matrix: usize,
    pub label: String,
    /// Times a generic coordinate `x_ij` of this matrix appears among runs.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReuseTable {
    pub entries: Vec<ReuseEntry>,
    pub runs_total: usize,
}

impl ReuseTable {
    pub fn count(&self, matrix: usize) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.matrix == matrix)
            .map(|e| e.count)
    }

    pub fn usage_ratio(&self, matrix: usize) -> Option<f64> {
        self.count(matrix)
            .map(|c| c as f64 / self.runs_total as f64)
    }
}

/// Closed-form coordinate reuse.
pub fn reuse_counts(cfg: &DesignConfig) -> Result<ReuseTable> {
    let runs_total = budget(cfg)?.total_runs;
    let (k, n) = (cfg.k, cfg.n);
    let entries = (0..n)
        .map(|matrix| {
            let count = match cfg.scheme {
                Scheme::Symmetric => 1 + k * (n - 1),
                Scheme::Asymmetric if matrix == 0 => 1 + (k - 1) * (n - 1),
                Scheme::Asymmetric => 1 + usize::from(cfg.evaluate_donors),
            };
            ReuseEntry {
                matrix,
                label: matrix_label(matrix),
                count,
            }
        })
        .collect();
    Ok(ReuseTable {
        entries,
        runs_total,
    })
}

/// Coordinate reuse counted from an actual schedule. Fails if the
/// coordinates of one matrix are not all used equally often.
pub fn count_reuse(schedule: &RunSchedule) -> Result<ReuseTable> {
    let cfg = schedule.config();
    let (n, rows, k) = (cfg.n, cfg.rows, cfg.k);
    let mut uses = vec![0usize; n * rows * k];
    for run in schedule.runs() {
        for c in 0..k {
            uses[(run.tag.origin(c) * rows + run.row) * k + c] += 1;
        }
    }
    let entries = (0..n)
        .map(|matrix| {
            let block = &uses[matrix * rows * k..(matrix + 1) * rows * k];
            let count = block[0];
            if block.iter().any(|&u| u != count) {
                return Err(GsaError::arg(format!(
                    "coordinates of {} are used unevenly",
                    matrix_label(matrix)
                )));
            }
            Ok(ReuseEntry {
                matrix,
                label: matrix_label(matrix),
                count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReuseTable {
        entries,
        runs_total: schedule.len(),
    })
}
