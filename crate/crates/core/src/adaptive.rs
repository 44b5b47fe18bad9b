//! Dynamical allocation of total-effect evaluations.
//!
//! After a warm-up asymmetric design with `N_TS` rows, each further step
//! draws the next quasi-random row couple `(a_i, b_i)`, evaluates `f(a_i)`,
//! spins a Russian roulette with probabilities proportional to the current
//! `T_j` estimates and evaluates `f(a_b^(j*)_i)` for the winning factor.
//! Factors that lost the spin but whose last `p` estimates still span more
//! than `delta` are topped up with their own hybrid run in the same step.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GsaError, Result};
use crate::models::{Evaluator, Model};
use crate::qrng::{self, RandomizationSpec, DEFAULT_SKIP};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveConfig {
    /// `N_TS`: rows of the warm-up design.
    pub warmup_rows: usize,
    /// `delta`: oscillation threshold on the range of recent estimates.
    pub delta: f64,
    /// `p`: number of trailing checkpoints inspected for oscillation.
    pub window: usize,
    /// Maximum number of model evaluations.
    pub total_budget: usize,
    /// Floor applied to each estimate before normalising the roulette.
    pub epsilon: f64,
    /// Seed of the roulette draws.
    pub seed: u64,
    /// First Sobol' index used for the row couples.
    pub skip: u64,
    /// Joint permutation of the `2k` Sobol' columns, applied before the
    /// split into `A` and `B`.
    pub randomization: Option<RandomizationSpec>,
}

impl AdaptiveConfig {
    pub fn new(total_budget: usize, seed: u64) -> Self {
        AdaptiveConfig {
            warmup_rows: 32,
            delta: 1e-4,
            window: 19,
            total_budget,
            epsilon: 1e-6,
            seed,
            skip: DEFAULT_SKIP,
            randomization: None,
        }
    }

    pub fn warmup_cost(&self, k: usize) -> usize {
        self.warmup_rows * (k + 1)
    }

    fn validate(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(GsaError::arg("k must be at least 1"));
        }
        if self.warmup_rows < 2 {
            return Err(GsaError::arg("N_TS must be at least 2"));
        }
        if self.window == 0 {
            return Err(GsaError::arg("p must be at least 1"));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(GsaError::arg("delta must be positive"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(GsaError::arg("epsilon must be positive"));
        }
        if self.total_budget < self.warmup_cost(k) {
            return Err(GsaError::arg(format!(
                "budget {} is below the warm-up cost {}",
                self.total_budget,
                self.warmup_cost(k)
            )));
        }
        if let Some(r) = &self.randomization {
            if r.dims() != 2 * k {
                return Err(GsaError::arg(format!(
                    "randomization covers {} columns, expected {}",
                    r.dims(),
                    2 * k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub evaluations: usize,
    pub estimates: Vec<f64>,
    pub pair_counts: Vec<usize>,
    /// Roulette winner of this step; `None` for the warm-up checkpoint.
    pub roulette: Option<usize>,
    /// Factors that received a new pair at this step.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveTrace {
    pub k: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Accumulated `(f(a_i), f(a_b^(j)_i))` per factor.
    pub pairs: Vec<Vec<(f64, f64)>>,
    /// Every evaluated `f(a_i)`.
    pub base_outputs: Vec<f64>,
}

impl AdaptiveTrace {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("trace holds the warm-up checkpoint")
    }

    pub fn final_estimates(&self) -> &[f64] {
        &self.last().estimates
    }

    pub fn evaluations(&self) -> usize {
        self.last().evaluations
    }

    /// `evals,T1..Tk,N1..Nk,selected`, with selected factors 1-based and
    /// separated by `;`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["evals".to_string()];
        header.extend((1..=self.k).map(|j| format!("T{j}")));
        header.extend((1..=self.k).map(|j| format!("N{j}")));
        header.push("selected".into());
        w.write_record(&header)?;
        for c in &self.checkpoints {
            let mut rec = vec![c.evaluations.to_string()];
            rec.extend(c.estimates.iter().map(f64::to_string));
            rec.extend(c.pair_counts.iter().map(usize::to_string));
            rec.push(
                c.selected
                    .iter()
                    .map(|j| (j + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `p_j = max(T_j, eps) / sum_l max(T_l, eps)`.
pub fn selection_probabilities(estimates: &[f64], epsilon: f64) -> Vec<f64> {
    let floored: Vec<f64> = estimates.iter().map(|t| t.max(epsilon)).collect();
    let total: f64 = floored.iter().sum();
    floored.iter().map(|t| t / total).collect()
}

fn spin(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probabilities.len() - 1
}

/// Running mean and sum of squared deviations of the base outputs.
#[derive(Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
    sum_sq: f64,
}

impl Welford {
    fn push(&mut self, y: f64) {
        self.n += 1;
        let d = y - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (y - self.mean);
        self.sum_sq += y * y;
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }

    fn is_flat(&self) -> bool {
        let v = self.variance();
        v.is_nan() || v <= f64::EPSILON * self.sum_sq / self.n as f64
    }
}

struct State {
    k: usize,
    base: Welford,
    sum_sq: Vec<f64>,
    counts: Vec<usize>,
    history: Vec<VecDeque<f64>>,
    window: usize,
    trace: AdaptiveTrace,
}

impl State {
    fn estimates(&self) -> Vec<f64> {
        let v = self.base.variance();
        (0..self.k)
            .map(|j| self.sum_sq[j] / (2.0 * self.counts[j] as f64) / v)
            .collect()
    }

    fn add_pair(&mut self, j: usize, ya: f64, yh: f64) {
        self.sum_sq[j] += (ya - yh).powi(2);
        self.counts[j] += 1;
        self.trace.pairs[j].push((ya, yh));
    }

    fn add_base(&mut self, ya: f64) {
        self.base.push(ya);
        self.trace.base_outputs.push(ya);
    }

    fn oscillating(&self, j: usize, delta: f64) -> bool {
        let h = &self.history[j];
        if h.len() < self.window {
            return false;
        }
        let (lo, hi) = h
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        hi - lo > delta
    }

    fn checkpoint(&mut self, evaluations: usize, roulette: Option<usize>, selected: Vec<usize>) {
        let estimates = self.estimates();
        for (h, &t) in self.history.iter_mut().zip(&estimates) {
            if h.len() == self.window {
                h.pop_front();
            }
            h.push_back(t);
        }
        self.trace.checkpoints.push(Checkpoint {
            evaluations,
            estimates,
            pair_counts: self.counts.clone(),
            roulette,
            selected,
        });
    }
}

fn hybrid<'a>(a: &'a [f64], b: &[f64], j: usize) -> impl Iterator<Item = f64> + 'a {
    let bj = b[j];
    a.iter()
        .enumerate()
        .map(move |(c, &x)| if c == j { bj } else { x })
}

pub fn run_adaptive(model: &dyn Model, k: usize, cfg: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    cfg.validate(k)?;
    let warmup_cost = cfg.warmup_cost(k);
    let max_rows = cfg.warmup_rows + (cfg.total_budget - warmup_cost) / 2;
    let pts = qrng::sobol_points(2 * k, max_rows, cfg.skip)?;
    let pts = match &cfg.randomization {
        Some(r) => qrng::randomize(&pts, r)?,
        None => pts,
    };
    let a_row = |i: usize| &pts.point(i)[..k];
    let b_row = |i: usize| &pts.point(i)[k..];

    let mut evaluator = Evaluator::new(model);
    let mut state = State {
        k,
        base: Welford::default(),
        sum_sq: vec![0.0; k],
        counts: vec![0; k],
        history: vec![VecDeque::with_capacity(cfg.window); k],
        window: cfg.window,
        trace: AdaptiveTrace {
            k,
            checkpoints: Vec::new(),
            pairs: vec![Vec::new(); k],
            base_outputs: Vec::new(),
        },
    };

    // Warm-up: A followed by every A_B^(j), as in the asymmetric layout.
    let n = cfg.warmup_rows;
    let mut rows: Vec<f64> = (0..n).flat_map(|i| a_row(i).iter().copied()).collect();
    for j in 0..k {
        rows.extend((0..n).flat_map(|i| hybrid(a_row(i), b_row(i), j)));
    }
    let y = evaluator.evaluate_rows(k, &rows)?;
    for &ya in &y[..n] {
        state.add_base(ya);
    }
    if state.base.is_flat() {
        return Err(GsaError::DegenerateModel(format!(
            "output variance of `{}` is zero after warm-up",
            model.id()
        )));
    }
    for j in 0..k {
        for i in 0..n {
            state.add_pair(j, y[i], y[n * (j + 1) + i]);
        }
    }
    state.checkpoint(evaluator.evaluations(), None, (0..k).collect());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in n..max_rows {
        let spent = evaluator.evaluations();
        if spent + 2 > cfg.total_budget {
            break;
        }
        let estimates = &state.trace.last().estimates;
        let winner = spin(
            &selection_probabilities(estimates, cfg.epsilon),
            rng.random::<f64>(),
        );
        let mut selected = vec![winner];
        let mut room = cfg.total_budget - spent - 2;
        for j in (0..k).filter(|&j| j != winner) {
            if room == 0 {
                break;
            }
            if state.oscillating(j, cfg.delta) {
                selected.push(j);
                room -= 1;
            }
        }

        let (a, b) = (a_row(i), b_row(i));
        let mut rows: Vec<f64> = a.to_vec();
        for &j in &selected {
            rows.extend(hybrid(a, b, j));
        }
        let y = evaluator.evaluate_rows(k, &rows)?;
        state.add_base(y[0]);
        for (&j, &yh) in selected.iter().zip(&y[1..]) {
            state.add_pair(j, y[0], yh);
        }
        state.checkpoint(evaluator.evaluations(), Some(winner), selected);
    }
    Ok(state.trace)
}
