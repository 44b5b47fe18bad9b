//! Sobol' LP-tau quasi-random points, per-repetition randomisation and the
//! L2 discrepancy of a point set.
//!
//! Points are produced in Gray-code order from 32-bit direction numbers. The
//! first dimension uses the van der Corput direction numbers; the remaining
//! dimensions are read from the bundled Joe–Kuo table in
//! `data/new-joe-kuo-6.1024.txt`.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GsaError, Result};

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

static BUNDLED_TABLE: &str = include_str!("../data/new-joe-kuo-6.1024.txt");
static TABLE: OnceLock<DirectionTable> = OnceLock::new();

/// One row of a primitive-polynomial table: degree `s`, the interior
/// coefficient bits `a` and the initial direction integers `m_1..m_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialEntry {
    pub degree: u32,
    pub coefficients: u32,
    pub initial: Vec<u32>,
}

/// Direction numbers for every supported dimension.
#[derive(Debug, Clone)]
pub struct DirectionTable {
    directions: Vec<[u32; BITS]>,
}

impl DirectionTable {
    /// Parses a table in the Joe–Kuo text layout: an optional header line,
    /// then `d s a m_1 .. m_s` per line, starting at dimension 2.
    pub fn parse(text: &str) -> Result<Self> {
        let mut directions = vec![van_der_corput()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('d') {
                continue;
            }
            let fields = line
                .split_whitespace()
                .map(|f| f.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    GsaError::Parse(format!("direction table line {}: {e}", lineno + 1))
                })?;
            if fields.len() < 3 {
                return Err(GsaError::Parse(format!(
                    "direction table line {}: expected `d s a m_1..m_s`",
                    lineno + 1
                )));
            }
            let entry = PolynomialEntry {
                degree: fields[1],
                coefficients: fields[2],
                initial: fields[3..].to_vec(),
            };
            let expected_dim = directions.len() + 1;
            if fields[0] as usize != expected_dim {
                return Err(GsaError::Parse(format!(
                    "direction table line {}: dimension {} out of sequence (expected {expected_dim})",
                    lineno + 1,
                    fields[0]
                )));
            }
            directions.push(entry_directions(&entry).map_err(|msg| {
                GsaError::Parse(format!("direction table line {}: {msg}", lineno + 1))
            })?);
        }
        Ok(DirectionTable { directions })
    }

    /// The table compiled into the crate.
    pub fn bundled() -> &'static DirectionTable {
        TABLE.get_or_init(|| {
            DirectionTable::parse(BUNDLED_TABLE).expect("bundled direction table is well formed")
        })
    }

    pub fn max_dims(&self) -> usize {
        self.directions.len()
    }

    /// Generates `count` points of dimension `dims` starting at sequence
    /// index `skip`.
    pub fn points(&self, dims: usize, count: usize, skip: u64) -> Result<QrPointSet> {
        if dims == 0 {
            return Err(GsaError::arg("dims must be positive"));
        }
        if dims > self.max_dims() {
            return Err(GsaError::Capacity {
                requested: dims,
                available: self.max_dims(),
            });
        }
        let end = skip
            .checked_add(count as u64)
            .filter(|&e| e <= 1u64 << BITS)
            .ok_or_else(|| GsaError::arg("sequence index exceeds 2^32"))?;

        let mut points = Vec::with_capacity(dims * count);
        if count == 0 {
            return Ok(QrPointSet { dims, points });
        }
        let dirs = &self.directions[..dims];
        let mut state: Vec<u32> = dirs.iter().map(|v| gray_point(v, skip)).collect();
        let mut index = skip;
        loop {
            points.extend(state.iter().map(|&x| f64::from(x) * SCALE));
            index += 1;
            if index == end {
                break;
            }
            let bit = index.trailing_zeros() as usize;
            for (x, v) in state.iter_mut().zip(dirs) {
                *x ^= v[bit];
            }
        }
        Ok(QrPointSet { dims, points })
    }
}

fn van_der_corput() -> [u32; BITS] {
    let mut v = [0u32; BITS];
    for (c, vc) in v.iter_mut().enumerate() {
        *vc = 1u32 << (BITS - 1 - c);
    }
    v
}

fn entry_directions(entry: &PolynomialEntry) -> std::result::Result<[u32; BITS], String> {
    let s = entry.degree as usize;
    if s == 0 || s > BITS {
        return Err(format!("degree {s} out of range"));
    }
    if entry.initial.len() != s {
        return Err(format!(
            "expected {s} initial direction integers, found {}",
            entry.initial.len()
        ));
    }
    let mut v = [0u32; BITS];
    for (c, &m) in entry.initial.iter().enumerate() {
        if m % 2 == 0 || u64::from(m) >= 1u64 << (c + 1) {
            return Err(format!(
                "initial direction integer m_{} = {m} must be odd and < 2^{}",
                c + 1,
                c + 1
            ));
        }
        v[c] = m << (BITS - 1 - c);
    }
    for c in s..BITS {
        let mut value = v[c - s] ^ (v[c - s] >> s);
        for k in 1..s {
            if (entry.coefficients >> (s - 1 - k)) & 1 == 1 {
                value ^= v[c - k];
            }
        }
        v[c] = value;
    }
    Ok(v)
}

fn gray_point(v: &[u32; BITS], index: u64) -> u32 {
    let gray = index ^ (index >> 1);
    (0..BITS)
        .filter(|&c| (gray >> c) & 1 == 1)
        .fold(0u32, |acc, c| acc ^ v[c])
}

/// A `count x dims` table of points in the unit hypercube, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QrPointSet {
    dims: usize,
    points: Vec<f64>,
}

impl QrPointSet {
    /// Wraps row-major coordinates, checking that each lies in `[0, 1)`.
    pub fn from_rows(dims: usize, points: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(GsaError::arg("dims must be positive"));
        }
        if !points.len().is_multiple_of(dims) {
            return Err(GsaError::arg(format!(
                "{} coordinates do not form rows of {dims}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(GsaError::arg(format!("coordinate {bad} outside [0, 1)")));
        }
        Ok(QrPointSet { dims, points })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.points.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dims)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }
}

/// Points at sequence indices `skip..skip + count` of the bundled Sobol'
/// sequence.
pub fn sobol_points(dims: usize, count: usize, skip: u64) -> Result<QrPointSet> {
    DirectionTable::bundled().points(dims, count, skip)
}

/// Default starting index: the all-zero point at index 0 is skipped.
pub const DEFAULT_SKIP: u64 = 1;

/// Seeded randomisation applied to a point set: a column permutation and an
/// optional shift modulo 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationSpec {
    pub seed: u64,
    pub column_permutation: Vec<usize>,
    pub digital_shift_enabled: bool,
}

impl RandomizationSpec {
    /// Permutation of `0..dims` drawn from `seed`; shift disabled.
    pub fn from_seed(seed: u64, dims: usize) -> Self {
        let mut column_permutation: Vec<usize> = (0..dims).collect();
        column_permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        RandomizationSpec {
            seed,
            column_permutation,
            digital_shift_enabled: false,
        }
    }

    pub fn identity(dims: usize) -> Self {
        RandomizationSpec {
            seed: 0,
            column_permutation: (0..dims).collect(),
            digital_shift_enabled: false,
        }
    }

    /// Explicit permutation; rejects anything that is not a bijection.
    pub fn with_permutation(seed: u64, column_permutation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; column_permutation.len()];
        for &c in &column_permutation {
            if c >= seen.len() || std::mem::replace(&mut seen[c], true) {
                return Err(GsaError::arg(format!(
                    "{column_permutation:?} is not a permutation"
                )));
            }
        }
        Ok(RandomizationSpec {
            seed,
            column_permutation,
            digital_shift_enabled: false,
        })
    }

    pub fn with_shift(mut self, enabled: bool) -> Self {
        self.digital_shift_enabled = enabled;
        self
    }

    pub fn dims(&self) -> usize {
        self.column_permutation.len()
    }

    /// Per-column offsets used when the shift is enabled. Drawn from a
    /// separate ChaCha stream so they do not disturb the permutation.
    pub fn shift_offsets(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        (0..self.dims()).map(|_| rng.random::<f64>()).collect()
    }
}

/// Output column `j` is input column `column_permutation[j]`, optionally
/// shifted modulo 1.
pub fn randomize(pts: &QrPointSet, spec: &RandomizationSpec) -> Result<QrPointSet> {
    if spec.dims() != pts.dims() {
        return Err(GsaError::arg(format!(
            "permutation has length {} but points have {} dimensions",
            spec.dims(),
            pts.dims()
        )));
    }
    let offsets = spec.digital_shift_enabled.then(|| spec.shift_offsets());
    let mut points = Vec::with_capacity(pts.as_slice().len());
    for row in pts.rows() {
        for (j, &src) in spec.column_permutation.iter().enumerate() {
            let x = row[src];
            points.push(match &offsets {
                Some(off) => shift_mod_one(x, off[j]),
                None => x,
            });
        }
    }
    Ok(QrPointSet {
        dims: pts.dims(),
        points,
    })
}

fn shift_mod_one(x: f64, offset: f64) -> f64 {
    let y = x + offset;
    if y >= 1.0 {
        (y - 1.0).max(0.0)
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub value: f64,
    pub point_count: usize,
    pub dims: usize,
}

/// L2-star discrepancy via Warnock's closed form:
///
/// ```text
/// D^2 = 3^-d - (2/N) sum_i prod_j (1 - x_ij^2)/2
///            + (1/N^2) sum_i sum_m prod_j (1 - max(x_ij, x_mj))
/// ```
pub fn l2_discrepancy(pts: &QrPointSet) -> Result<DiscrepancyReport> {
    let n = pts.count();
    if n == 0 {
        return Err(GsaError::arg("discrepancy of an empty point set"));
    }
    let d = pts.dims();

    let single: f64 = pts
        .rows()
        .map(|r| r.iter().map(|x| (1.0 - x * x) / 2.0).product::<f64>())
        .sum();

    // Row sums are collected before the final reduction so the result does
    // not depend on thread scheduling.
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = pts.point(i);
            let diag: f64 = xi.iter().map(|x| 1.0 - x).product();
            let off: f64 = (i + 1..n)
                .map(|m| {
                    xi.iter()
                        .zip(pts.point(m))
                        .map(|(a, b)| 1.0 - a.max(*b))
                        .product::<f64>()
                })
                .sum();
            diag + 2.0 * off
        })
        .collect();
    let pair: f64 = row_sums.iter().sum();

    let nf = n as f64;
    let squared = 3f64.powi(-(d as i32)) - 2.0 / nf * single + pair / (nf * nf);
    Ok(DiscrepancyReport {
        value: squared.max(0.0).sqrt(),
        point_count: n,
        dims: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_dimension_starts_half_three_quarters_quarter() {
        let p = sobol_points(1, 3, 1).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.75, 0.25]);
    }

    #[test]
    fn empty_request_is_empty() {
        let p = sobol_points(5, 0, 1).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.dims(), 5);
    }

    #[test]
    fn dims_zero_and_capacity_errors() {
        assert!(matches!(sobol_points(0, 4, 1), Err(GsaError::Argument(_))));
        let max = DirectionTable::bundled().max_dims();
        assert!(max >= 64);
        assert!(matches!(
            sobol_points(max + 1, 4, 1),
            Err(GsaError::Capacity { .. })
        ));
        assert!(sobol_points(max, 2, 1).is_ok());
    }

    #[test]
    fn coordinates_stay_in_unit_interval() {
        let p = sobol_points(12, 256, 1).unwrap();
        assert_eq!(p.as_slice().len(), 3072);
        assert!(p.as_slice().iter().all(|x| (0.0..1.0).contains(x)));
    }

    // Frozen from scipy.stats.qmc.Sobol(12, scramble=False), which ships the
    // same Joe–Kuo table but is an independent implementation.
    #[test]
    fn matches_reference_generator() {
        let p = sobol_points(12, 4096, 0).unwrap();
        let cases: [(usize, [f64; 12]); 4] = [
            (
                5,
                [
                    0.875, 0.875, 0.125, 0.375, 0.875, 0.625, 0.875, 0.375, 0.375, 0.125, 0.375,
                    0.875,
                ],
            ),
            (
                100,
                [
                    0.4140625, 0.2578125, 0.7734375, 0.7265625, 0.8828125, 0.7421875, 0.0234375,
                    0.4765625, 0.6328125, 0.6953125, 0.4609375, 0.6796875,
                ],
            ),
            (
                1000,
                [
                    0.2197265625,
                    0.0966796875,
                    0.5185546875,
                    0.6767578125,
                    0.2802734375,
                    0.9072265625,
                    0.0458984375,
                    0.8994140625,
                    0.5009765625,
                    0.0693359375,
                    0.0849609375,
                    0.2548828125,
                ],
            ),
            (
                4095,
                [
                    0.000244140625,
                    0.941162109375,
                    0.334228515625,
                    0.901611328125,
                    0.940185546875,
                    0.078857421875,
                    0.949462890625,
                    0.390869140625,
                    0.191650390625,
                    0.246337890625,
                    0.569580078125,
                    0.321533203125,
                ],
            ),
        ];
        for (i, expected) in cases {
            assert_eq!(p.point(i), &expected, "index {i}");
        }
        assert!(p.point(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn skip_offsets_into_the_same_sequence() {
        let full = sobol_points(7, 300, 0).unwrap();
        let tail = sobol_points(7, 100, 200).unwrap();
        assert_eq!(tail.as_slice(), &full.as_slice()[200 * 7..]);
    }

    #[test]
    fn dyadic_intervals_hold_one_point_each() {
        for m in 1..=10 {
            let n = 1usize << m;
            let p = sobol_points(1, n, 0).unwrap();
            let mut hit = vec![0u32; n];
            for &x in p.as_slice() {
                hit[(x * n as f64) as usize] += 1;
            }
            assert!(hit.iter().all(|&h| h == 1), "m = {m}");
        }
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(DirectionTable::parse("2 1 0 2\n").is_err());
        assert!(DirectionTable::parse("3 1 0 1\n").is_err());
        assert!(DirectionTable::parse("2 2 1 1\n").is_err());
        let t = DirectionTable::parse("d s a m_i\n2 1 0 1\n3 2 1 1 3\n").unwrap();
        assert_eq!(t.max_dims(), 3);
        assert_eq!(t.points(3, 16, 0).unwrap(), sobol_points(3, 16, 0).unwrap());
    }

    #[test]
    fn identity_randomisation_is_a_no_op() {
        let p = sobol_points(4, 32, 1).unwrap();
        assert_eq!(randomize(&p, &RandomizationSpec::identity(4)).unwrap(), p);
    }

    #[test]
    fn swap_permutation_swaps_columns() {
        let p = sobol_points(2, 16, 1).unwrap();
        let spec = RandomizationSpec::with_permutation(0, vec![1, 0]).unwrap();
        let q = randomize(&p, &spec).unwrap();
        assert_eq!(q.column(0), p.column(1));
        assert_eq!(q.column(1), p.column(0));
    }

    #[test]
    fn randomisation_rejects_bad_permutations() {
        assert!(RandomizationSpec::with_permutation(0, vec![0, 0]).is_err());
        assert!(RandomizationSpec::with_permutation(0, vec![0, 2]).is_err());
        let p = sobol_points(3, 4, 1).unwrap();
        assert!(matches!(
            randomize(&p, &RandomizationSpec::identity(2)),
            Err(GsaError::Argument(_))
        ));
    }

    #[test]
    fn seeded_permutations_differ_between_seeds() {
        let a = RandomizationSpec::from_seed(1, 12);
        let b = RandomizationSpec::from_seed(2, 12);
        assert_ne!(a.column_permutation, b.column_permutation);
        assert_eq!(a, RandomizationSpec::from_seed(1, 12));
    }

    #[test]
    fn shift_stays_in_unit_interval_and_moves_points() {
        let p = sobol_points(6, 64, 1).unwrap();
        let spec = RandomizationSpec::from_seed(9, 6).with_shift(true);
        let q = randomize(&p, &spec).unwrap();
        assert!(q.as_slice().iter().all(|x| (0.0..1.0).contains(x)));
        let unshifted = randomize(&p, &RandomizationSpec::from_seed(9, 6)).unwrap();
        assert_ne!(q, unshifted);
    }

    #[test]
    fn single_midpoint_discrepancy() {
        let p = QrPointSet::from_rows(1, vec![0.5]).unwrap();
        let d = l2_discrepancy(&p).unwrap();
        assert_relative_eq!(d.value * d.value, 1.0 / 12.0, epsilon = 1e-15);
        assert_relative_eq!(d.value, 0.288_675_134_594_812_9, epsilon = 1e-12);
    }

    #[test]
    fn empty_discrepancy_is_an_error() {
        let p = sobol_points(3, 0, 1).unwrap();
        assert!(matches!(l2_discrepancy(&p), Err(GsaError::Argument(_))));
    }

    // scipy.stats.qmc.discrepancy(points, method="L2-star").
    #[test]
    fn discrepancy_matches_reference() {
        let p = sobol_points(6, 128, 1).unwrap();
        assert_relative_eq!(
            l2_discrepancy(&p).unwrap().value,
            0.006030703806773697,
            max_relative = 1e-10
        );
        let p = sobol_points(12, 1024, 1).unwrap();
        assert_relative_eq!(
            l2_discrepancy(&p).unwrap().value,
            0.0003986473956060706,
            max_relative = 1e-9
        );
    }

    #[test]
    fn duplicated_points_keep_discrepancy() {
        let p = sobol_points(3, 50, 1).unwrap();
        let mut doubled = p.as_slice().to_vec();
        doubled.extend_from_slice(p.as_slice());
        let q = QrPointSet::from_rows(3, doubled).unwrap();
        assert_relative_eq!(
            l2_discrepancy(&p).unwrap().value,
            l2_discrepancy(&q).unwrap().value,
            max_relative = 1e-12
        );
    }

    #[test]
    fn column_permutation_preserves_discrepancy() {
        let p = sobol_points(8, 200, 1).unwrap();
        let q = randomize(&p, &RandomizationSpec::from_seed(5, 8)).unwrap();
        assert_relative_eq!(
            l2_discrepancy(&p).unwrap().value,
            l2_discrepancy(&q).unwrap().value,
            max_relative = 1e-12
        );
    }
}
