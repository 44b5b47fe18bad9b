//! Estimators of total-effect and first-order indices from an evaluated
//! schedule.
//!
//! - Šaltenis (Jansen): `T_j = (1 / 2P) sum (y_u - y_v)^2 / V(Y)` over the
//!   `P` elementary effects of factor `j`.
//! - Correlation: `T_j = 1 - <rho_j>`, where `rho_j` is the Pearson
//!   coefficient between the two output vectors of each couple family
//!   (e.g. `f(A)` and `f(A_B^(j))`).
//! - Corrected correlation: `T_j = 1 - (<rho_j> - rho0) / (1 - rho0)`, with
//!   `rho0` the mean spurious correlation between output vectors that share
//!   no column.
//!
//! Estimates are reported raw: values below 0 or above 1 are kept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{EffectPair, EffectPairIndex, RunSchedule, RunTag};
use crate::error::{GsaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Saltenis,
    Correlation,
    CorrelationCorrected,
}

impl EstimatorKind {
    /// Short name used in contender ids and on the command line.
    pub fn short_name(&self) -> &'static str {
        match self {
            EstimatorKind::Saltenis => "saltenis",
            EstimatorKind::Correlation => "corr",
            EstimatorKind::CorrelationCorrected => "corr-corrected",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for EstimatorKind {
    type Err = GsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saltenis" | "jansen" => Ok(EstimatorKind::Saltenis),
            "corr" | "correlation" => Ok(EstimatorKind::Correlation),
            "corr-corrected" | "correlation_corrected" => Ok(EstimatorKind::CorrelationCorrected),
            other => Err(GsaError::arg(format!("unknown estimator `{other}`"))),
        }
    }
}

/// A schedule together with one model output per run.
#[derive(Debug, Clone)]
pub struct EvaluatedSchedule {
    schedule: RunSchedule,
    y: Vec<f64>,
    model_id: String,
}

impl EvaluatedSchedule {
    pub fn new(schedule: RunSchedule, y: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if y.len() != schedule.len() {
            return Err(GsaError::arg(format!(
                "{} outputs for {} runs",
                y.len(),
                schedule.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(GsaError::arg(format!("output of run {i} is not finite")));
        }
        Ok(EvaluatedSchedule {
            schedule,
            y,
            model_id: model_id.into(),
        })
    }

    pub fn schedule(&self) -> &RunSchedule {
        &self.schedule
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    fn block(&self, tag: RunTag) -> Option<&[f64]> {
        self.schedule.block(tag).map(|r| &self.y[r])
    }

    fn variance_sample(&self) -> Vec<f64> {
        self.schedule
            .config()
            .variance_bases()
            .into_iter()
            .filter_map(|m| self.block(RunTag::Base { matrix: m }))
            .flatten()
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorEstimate {
    /// 1-based factor number.
    pub factor: usize,
    #[serde(rename = "T")]
    pub total: f64,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    pub first_order: Option<f64>,
    pub pairs_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator_id: EstimatorKind,
    #[serde(rename = "variance_Y")]
    pub variance_y: f64,
    pub factors: Vec<FactorEstimate>,
}

impl EstimateReport {
    pub fn totals(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.total).collect()
    }

    pub fn first_orders(&self) -> Option<Vec<f64>> {
        self.factors.iter().map(|f| f.first_order).collect()
    }

    pub fn with_first_order(mut self, s: Vec<f64>) -> Self {
        for (f, sj) in self.factors.iter_mut().zip(s) {
            f.first_order = Some(sj);
        }
        self
    }
}

/// Unbiased sample variance.
pub fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// True when the spread of `y` is indistinguishable from rounding noise.
fn is_flat(y: &[f64], variance: f64) -> bool {
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    variance.is_nan() || variance <= f64::EPSILON * scale
}

/// Pearson coefficient with `N - 1` normalisation of both the covariance
/// and the variances.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GsaError::arg("correlated vectors differ in length"));
    }
    if x.len() < 2 {
        return Err(GsaError::arg("correlation needs at least two entries"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (vx, vy) = (sample_variance(x), sample_variance(y));
    if is_flat(x, vx) || is_flat(y, vy) {
        return Err(GsaError::DegenerateModel(
            "zero-variance output vector in correlation".into(),
        ));
    }
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() as f64 - 1.0);
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// `(1 / 2P) sum (y_u - y_v)^2`, the estimate of `E(V(Y | X_~j))`.
pub fn saltenis_numerator(y: &[f64], pairs: &[EffectPair]) -> f64 {
    pairs.iter().map(|p| (y[p.u] - y[p.v]).powi(2)).sum::<f64>() / (2.0 * pairs.len() as f64)
}

/// Unbiased variance of the outputs at base rows: `A` alone for the
/// asymmetric scheme, every base matrix for the symmetric one.
pub fn total_variance(ev: &EvaluatedSchedule) -> Result<f64> {
    let sample = ev.variance_sample();
    if sample.len() < 2 {
        return Err(GsaError::arg(format!(
            "variance needs at least 2 base rows, schedule has {}",
            sample.len()
        )));
    }
    Ok(sample_variance(&sample))
}

fn positive_variance(ev: &EvaluatedSchedule) -> Result<f64> {
    let v = total_variance(ev)?;
    if is_flat(&ev.variance_sample(), v) {
        return Err(GsaError::DegenerateModel(format!(
            "output variance of `{}` is zero",
            ev.model_id()
        )));
    }
    Ok(v)
}

fn check_pairs(ev: &EvaluatedSchedule, pairs: &EffectPairIndex) -> Result<()> {
    if pairs.k() != ev.schedule().k() {
        return Err(GsaError::arg(format!(
            "pair index covers {} factors, schedule has {}",
            pairs.k(),
            ev.schedule().k()
        )));
    }
    let n = ev.y().len();
    for j in 0..pairs.k() {
        let ps = pairs.factor(j);
        if ps.is_empty() {
            return Err(GsaError::arg(format!(
                "no effect pairs for factor {}",
                j + 1
            )));
        }
        if ps.iter().any(|p| p.u >= n || p.v >= n) {
            return Err(GsaError::arg(format!(
                "pair for factor {} refers to a missing run",
                j + 1
            )));
        }
    }
    Ok(())
}

pub fn saltenis_total(ev: &EvaluatedSchedule, pairs: &EffectPairIndex) -> Result<EstimateReport> {
    check_pairs(ev, pairs)?;
    let variance_y = positive_variance(ev)?;
    let factors = (0..pairs.k())
        .map(|j| {
            let ps = pairs.factor(j);
            FactorEstimate {
                factor: j + 1,
                total: saltenis_numerator(ev.y(), ps) / variance_y,
                first_order: None,
                pairs_used: ps.len(),
            }
        })
        .collect();
    Ok(EstimateReport {
        estimator_id: EstimatorKind::Saltenis,
        variance_y,
        factors,
    })
}

/// Pearson coefficients collected for the correlation estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    /// Per factor, one coefficient per couple family.
    pub rho: Vec<Vec<f64>>,
    /// Coefficients between output vectors sharing no column, if the design
    /// provides any.
    pub spurious: Vec<f64>,
}

impl CorrelationAccumulator {
    pub fn mean_rho(&self, j: usize) -> f64 {
        mean(&self.rho[j])
    }

    pub fn mean_spurious(&self) -> Option<f64> {
        (!self.spurious.is_empty()).then(|| mean(&self.spurious))
    }
}

/// Splits a factor's pairs into families of equal tag couples, keeping
/// first-appearance order.
fn families(schedule: &RunSchedule, pairs: &[EffectPair]) -> Vec<Vec<EffectPair>> {
    let mut keys: Vec<(RunTag, RunTag)> = Vec::new();
    let mut out: Vec<Vec<EffectPair>> = Vec::new();
    for p in pairs {
        let key = (schedule.runs()[p.u].tag, schedule.runs()[p.v].tag);
        match keys.iter().position(|k| *k == key) {
            Some(i) => out[i].push(*p),
            None => {
                keys.push(key);
                out.push(vec![*p]);
            }
        }
    }
    out
}

/// Mean-free couples of the design: base against base, and opposed hybrids
/// `X_Y^(j)` against `Y_X^(j)`.
fn spurious_coefficients(ev: &EvaluatedSchedule) -> Result<Vec<f64>> {
    let cfg = ev.schedule().config();
    let mut out = Vec::new();
    for a in 0..cfg.n {
        for b in a + 1..cfg.n {
            if let (Some(x), Some(y)) = (
                ev.block(RunTag::Base { matrix: a }),
                ev.block(RunTag::Base { matrix: b }),
            ) {
                out.push(pearson(x, y)?);
            }
            for factor in 0..cfg.k {
                let forward = RunTag::Hybrid {
                    source: a,
                    donor: b,
                    factor,
                };
                let backward = RunTag::Hybrid {
                    source: b,
                    donor: a,
                    factor,
                };
                if let (Some(x), Some(y)) = (ev.block(forward), ev.block(backward)) {
                    out.push(pearson(x, y)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn correlation_accumulator(
    ev: &EvaluatedSchedule,
    pairs: &EffectPairIndex,
) -> Result<CorrelationAccumulator> {
    check_pairs(ev, pairs)?;
    let y = ev.y();
    let rho = (0..pairs.k())
        .map(|j| {
            families(ev.schedule(), pairs.factor(j))
                .iter()
                .map(|fam| {
                    let u: Vec<f64> = fam.iter().map(|p| y[p.u]).collect();
                    let v: Vec<f64> = fam.iter().map(|p| y[p.v]).collect();
                    pearson(&u, &v)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationAccumulator {
        rho,
        spurious: spurious_coefficients(ev)?,
    })
}

fn corrected(rho: f64, rho0: f64) -> Result<f64> {
    if rho0 >= 1.0 {
        return Err(GsaError::DegenerateModel(
            "spurious correlation is 1; correction undefined".into(),
        ));
    }
    Ok((rho - rho0) / (1.0 - rho0))
}

fn require_spurious(acc: &CorrelationAccumulator) -> Result<f64> {
    acc.mean_spurious().ok_or_else(|| {
        GsaError::arg("design has no uncorrelated couples for the spurious-correlation correction")
    })
}

pub fn correlation_total(
    ev: &EvaluatedSchedule,
    pairs: &EffectPairIndex,
    corrected_estimate: bool,
) -> Result<EstimateReport> {
    let acc = correlation_accumulator(ev, pairs)?;
    let variance_y = total_variance(ev)?;
    let rho0 = if corrected_estimate {
        Some(require_spurious(&acc)?)
    } else {
        None
    };
    let factors = (0..pairs.k())
        .map(|j| {
            let rho = acc.mean_rho(j);
            let total = match rho0 {
                Some(r0) => 1.0 - corrected(rho, r0)?,
                None => 1.0 - rho,
            };
            Ok(FactorEstimate {
                factor: j + 1,
                total,
                first_order: None,
                pairs_used: pairs.factor(j).len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport {
        estimator_id: if corrected_estimate {
            EstimatorKind::CorrelationCorrected
        } else {
            EstimatorKind::Correlation
        },
        variance_y,
        factors,
    })
}

/// Couples `(X, Y)` usable for `S_j`: base `X`, base `Y` and hybrid
/// `X_Y^(j)` all evaluated. `f(y_i)` and `f(x_y^(j)_i)` share only column
/// `j`.
fn first_order_couples(schedule: &RunSchedule) -> Vec<(usize, usize)> {
    let cfg = schedule.config();
    let mut out = Vec::new();
    for x in cfg.sources() {
        for y in (0..cfg.n).filter(|&y| y != x) {
            if schedule.block(RunTag::Base { matrix: x }).is_some()
                && schedule.block(RunTag::Base { matrix: y }).is_some()
            {
                out.push((x, y));
            }
        }
    }
    out
}

/// First-order indices, averaged over every usable couple.
///
/// `Saltenis` selects the sample-based form
/// `(1/N) sum (f(b_i) - mean) (f(a_b^(j)_i) - f(a_i)) / V(Y)`, where `mean`
/// is the mean output over the variance rows; the correlation kinds use the
/// Pearson coefficient between `f(b_i)` and `f(a_b^(j)_i)`.
pub fn first_order(ev: &EvaluatedSchedule, kind: EstimatorKind) -> Result<Vec<f64>> {
    let schedule = ev.schedule();
    let couples = first_order_couples(schedule);
    if couples.is_empty() {
        return Err(GsaError::arg(
            "design lacks donor-base evaluations needed for first-order indices",
        ));
    }
    let variance_y = positive_variance(ev)?;
    let centre = mean(&ev.variance_sample());
    let rho0 = match kind {
        EstimatorKind::CorrelationCorrected => Some(require_spurious(&CorrelationAccumulator {
            rho: Vec::new(),
            spurious: spurious_coefficients(ev)?,
        })?),
        _ => None,
    };
    let block = |tag| ev.block(tag).expect("block listed by first_order_couples");
    (0..schedule.k())
        .map(|factor| {
            let terms = couples
                .iter()
                .map(|&(x, y)| {
                    let fx = block(RunTag::Base { matrix: x });
                    let fy = block(RunTag::Base { matrix: y });
                    let fxy = block(RunTag::Hybrid {
                        source: x,
                        donor: y,
                        factor,
                    });
                    match kind {
                        EstimatorKind::Saltenis => Ok(fy
                            .iter()
                            .zip(fxy.iter().zip(fx))
                            .map(|(b, (ab, a))| (b - centre) * (ab - a))
                            .sum::<f64>()
                            / fx.len() as f64
                            / variance_y),
                        _ => pearson(fy, fxy),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let s = mean(&terms);
            match rho0 {
                Some(r0) => corrected(s, r0),
                None => Ok(s),
            }
        })
        .collect()
}

/// Total indices with the chosen estimator, plus first-order indices when
/// requested.
pub fn estimate(
    ev: &EvaluatedSchedule,
    pairs: &EffectPairIndex,
    kind: EstimatorKind,
    with_first_order: bool,
) -> Result<EstimateReport> {
    let report = match kind {
        EstimatorKind::Saltenis => saltenis_total(ev, pairs)?,
        EstimatorKind::Correlation => correlation_total(ev, pairs, false)?,
        EstimatorKind::CorrelationCorrected => correlation_total(ev, pairs, true)?,
    };
    if with_first_order {
        Ok(report.with_first_order(first_order(ev, kind)?))
    } else {
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_schedule, sobol_design, DesignConfig, SampleMatrix};
    use approx::assert_relative_eq;

    fn evaluated(
        cfg: DesignConfig,
        f: impl Fn(&[f64]) -> f64,
    ) -> (EvaluatedSchedule, EffectPairIndex) {
        let (s, p) = sobol_design(&cfg, 1, None).unwrap();
        let y = s.points().map(f).collect();
        (EvaluatedSchedule::new(s, y, "test").unwrap(), p)
    }

    fn with_y(cfg: DesignConfig, y: Vec<f64>) -> EvaluatedSchedule {
        let (s, _) = sobol_design(&cfg, 1, None).unwrap();
        EvaluatedSchedule::new(s, y, "test").unwrap()
    }

    #[test]
    fn variance_of_constant_and_small_samples() {
        let cfg = DesignConfig::asymmetric(1, 4);
        assert_eq!(total_variance(&with_y(cfg, vec![3.5; 8])).unwrap(), 0.0);
        let ev = with_y(cfg, vec![1.0, 2.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0]);
        assert_relative_eq!(total_variance(&ev).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
        let ev = with_y(DesignConfig::asymmetric(1, 2), vec![0.0, 1.0, 7.0, 7.0]);
        assert_eq!(total_variance(&ev).unwrap(), 0.5);
        let bases = [
            SampleMatrix::from_rows(1, 1, vec![0.2]).unwrap(),
            SampleMatrix::from_rows(1, 1, vec![0.7]).unwrap(),
        ];
        let (s, _) = build_schedule(&DesignConfig::asymmetric(1, 1), &bases).unwrap();
        let ev = EvaluatedSchedule::new(s, vec![0.0, 1.0], "test").unwrap();
        assert!(matches!(total_variance(&ev), Err(GsaError::Argument(_))));
    }

    #[test]
    fn symmetric_variance_uses_every_base() {
        let cfg = DesignConfig::symmetric(1, 2, 2);
        // Runs: A(2), B(2), A_B(2), B_A(2).
        let ev = with_y(cfg, vec![1.0, 2.0, 3.0, 4.0, 50.0, 60.0, 70.0, 80.0]);
        assert_relative_eq!(total_variance(&ev).unwrap(), 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_computed_saltenis_numerator() {
        let y = [1.0, 2.0, 3.0, 1.0];
        let pairs = [EffectPair { u: 0, v: 1 }, EffectPair { u: 2, v: 3 }];
        assert_eq!(saltenis_numerator(&y, &pairs), 1.25);
        assert_eq!(saltenis_numerator(&y, &pairs) / 2.0, 0.625);
    }

    #[test]
    fn inactive_factor_has_zero_total() {
        let (ev, p) = evaluated(DesignConfig::asymmetric(3, 64), |x| x[0] + 2.0 * x[2]);
        let r = saltenis_total(&ev, &p).unwrap();
        assert_eq!(r.factors[1].total, 0.0);
        assert_eq!(r.factors[1].pairs_used, 64);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let (ev, p) = evaluated(DesignConfig::symmetric(2, 2, 16), |_| 0.1);
        assert!(matches!(
            saltenis_total(&ev, &p),
            Err(GsaError::DegenerateModel(_))
        ));
        assert!(matches!(
            first_order(&ev, EstimatorKind::Saltenis),
            Err(GsaError::DegenerateModel(_))
        ));
        assert!(matches!(
            correlation_total(&ev, &p, false),
            Err(GsaError::DegenerateModel(_))
        ));
    }

    #[test]
    fn empty_pair_list_is_rejected() {
        let (ev, _) = evaluated(DesignConfig::asymmetric(2, 8), |x| x[0] + x[1]);
        let pairs = EffectPairIndex::new(vec![vec![EffectPair { u: 0, v: 8 }], vec![]]);
        assert!(matches!(
            saltenis_total(&ev, &pairs),
            Err(GsaError::Argument(_))
        ));
    }

    #[test]
    fn pearson_extremes() {
        assert_eq!(pearson(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(1.0 - pearson(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
        assert_relative_eq!(pearson(&[1.0, 4.0, 2.0], &[1.0, 4.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(GsaError::DegenerateModel(_))
        ));
    }

    #[test]
    fn identical_couple_vectors_give_zero_total() {
        let (ev, p) = evaluated(DesignConfig::symmetric(2, 2, 32), |x| x[0].powi(3));
        let r = correlation_total(&ev, &p, false).unwrap();
        assert_relative_eq!(r.factors[1].total, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn correction_with_zero_spurious_is_the_plain_formula() {
        assert_eq!(corrected(0.3, 0.0).unwrap(), 0.3);
        assert!(corrected(0.3, 1.0).is_err());
    }

    #[test]
    fn correction_requires_uncorrelated_couples() {
        let (ev, p) = evaluated(DesignConfig::asymmetric(2, 32), |x| x[0] + x[1] * x[0]);
        assert!(correlation_total(&ev, &p, false).is_ok());
        assert!(matches!(
            correlation_total(&ev, &p, true),
            Err(GsaError::Argument(_))
        ));
        let (ev, p) = evaluated(DesignConfig::asymmetric(2, 32).with_donors(), |x| {
            x[0] + x[1] * x[0]
        });
        assert!(correlation_total(&ev, &p, true).is_ok());
    }

    #[test]
    fn first_order_needs_donor_bases() {
        let (ev, _) = evaluated(DesignConfig::asymmetric(2, 32), |x| x[0] + x[1]);
        assert!(matches!(
            first_order(&ev, EstimatorKind::Saltenis),
            Err(GsaError::Argument(_))
        ));
    }

    #[test]
    fn inert_factor_has_small_first_order() {
        let (ev, _) = evaluated(DesignConfig::asymmetric(2, 1024).with_donors(), |x| x[0]);
        let s = first_order(&ev, EstimatorKind::Saltenis).unwrap();
        assert!(s[1].abs() < 0.05, "{s:?}");
        assert!((s[0] - 1.0).abs() < 0.05, "{s:?}");
    }

    #[test]
    fn families_follow_the_design() {
        let (ev, p) = evaluated(DesignConfig::symmetric(2, 3, 8), |x| x[0] * x[1]);
        let acc = correlation_accumulator(&ev, &p).unwrap();
        // 6 base-hybrid families and 3 hybrid-hybrid families per factor.
        assert!(acc.rho.iter().all(|r| r.len() == 9));
        // 3 base couples plus 3 opposed hybrid couples per factor.
        assert_eq!(acc.spurious.len(), 3 + 3 * 2);
        assert!(acc
            .rho
            .iter()
            .flatten()
            .chain(&acc.spurious)
            .all(|r| (-1.0..=1.0).contains(r)));
    }

    #[test]
    fn report_serialises_with_expected_keys() {
        let (ev, p) = evaluated(DesignConfig::symmetric(2, 2, 16), |x| x[0] + x[1]);
        let r = estimate(&ev, &p, EstimatorKind::Saltenis, true).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["estimator_id"], "saltenis");
        assert!(json["variance_Y"].is_f64());
        let f = &json["factors"][0];
        assert_eq!(f["factor"], 1);
        assert!(f["T"].is_f64() && f["S"].is_f64());
        assert_eq!(f["pairs_used"], 32);
    }
}
