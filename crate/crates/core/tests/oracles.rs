//! Estimators, designs and the generator checked against independently
//! computed references.

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsa::design::{
    budget, build_schedule, count_reuse, effect_pairs, reuse_counts, sobol_design, DesignConfig,
    RunTag, SampleMatrix, Scheme,
};
use gsa::estimators::{estimate, saltenis_numerator, EstimatorKind, EvaluatedSchedule};
use gsa::models::{
    evaluate_batch, g_analytic, BuiltinModel, Evaluator, FnModel, GFunctionSpec, Model,
};
use gsa::qrng::{l2_discrepancy, sobol_points, QrPointSet};

fn random_bases(n: usize, k: usize, rows: usize, seed: u64) -> Vec<SampleMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let data = (0..rows * k).map(|_| rng.random::<f64>()).collect();
            SampleMatrix::from_rows(rows, k, data).unwrap()
        })
        .collect()
}

fn evaluated(
    cfg: &DesignConfig,
    model: &dyn Model,
) -> (EvaluatedSchedule, gsa::design::EffectPairIndex) {
    let (s, p) = sobol_design(cfg, 1, None).unwrap();
    let y = evaluate_batch(&mut Evaluator::new(model), &s).unwrap();
    (EvaluatedSchedule::new(s, y, model.id()).unwrap(), p)
}

/// Midpoint-rule moments of `G(x1, x2)` on an `m x m` grid: total variance
/// and `E_x2 V_x1 (Y | x2)`.
fn quadrature(a: [f64; 2], m: usize) -> (f64, f64) {
    let g = |x: f64, a: f64| ((4.0 * x - 2.0).abs() + a) / (1.0 + a);
    let h = 1.0 / m as f64;
    let g1: Vec<f64> = (0..m).map(|i| g((i as f64 + 0.5) * h, a[0])).collect();
    let g2: Vec<f64> = (0..m).map(|i| g((i as f64 + 0.5) * h, a[1])).collect();
    let (mut s, mut s2) = (0.0, 0.0);
    let mut e_var = 0.0;
    for &v in &g2 {
        let (mut cs, mut cs2) = (0.0, 0.0);
        for &u in &g1 {
            let y = u * v;
            cs += y;
            cs2 += y * y;
        }
        s += cs;
        s2 += cs2;
        e_var += cs2 / m as f64 - (cs / m as f64).powi(2);
    }
    let total = (m * m) as f64;
    (s2 / total - (s / total).powi(2), e_var / m as f64)
}

#[test]
fn g_analytic_matches_quadrature() {
    for a in [[0.0, 1.0], [0.5, 3.9], [9.0, 0.0]] {
        let r = g_analytic(&GFunctionSpec::new(a.to_vec()).unwrap());
        let (v, e_var) = quadrature(a, 2048);
        assert_relative_eq!(v, r.variance, max_relative = 1e-4);
        assert!((e_var / v - r.total[0]).abs() < 1e-4, "a = {a:?}");
    }
}

#[test]
fn saltenis_numerator_equals_exact_expectation_on_corners() {
    // Two-level model: every corner combination of A and B rows is present,
    // so the pair average is the exact expectation.
    let k = 3;
    let f = |x: &[f64]| {
        let b: Vec<f64> = x.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        3.0 * b[0] - b[1] + 2.0 * b[0] * b[2] + 0.5 * b[1] * b[2]
    };
    let level = |c: usize, j: usize| if (c >> j) & 1 == 1 { 0.75 } else { 0.25 };
    let rows = 64;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ca in 0..8 {
        for cb in 0..8 {
            a.extend((0..k).map(|j| level(ca, j)));
            b.extend((0..k).map(|j| level(cb, j)));
        }
    }
    let bases = [
        SampleMatrix::from_rows(rows, k, a).unwrap(),
        SampleMatrix::from_rows(rows, k, b).unwrap(),
    ];
    let (s, p) = build_schedule(&DesignConfig::asymmetric(k, rows), &bases).unwrap();
    let model = FnModel::new("corner", f);
    let y = evaluate_batch(&mut Evaluator::new(&model), &s).unwrap();
    // By hand: the jump in x_j is 3 + 2 b2, -1 + 0.5 b2 and 2 b0 + 0.5 b1,
    // and V(Y | rest) = jump^2 / 4.
    let exact = [34.0 / 8.0, 1.25 / 8.0, 10.5 / 16.0];
    let by_enumeration: Vec<f64> = (0..k)
        .map(|j| {
            let mut acc = 0.0;
            for c in (0..8).filter(|c| (c >> j) & 1 == 0) {
                let x0: Vec<f64> = (0..k).map(|l| level(c, l)).collect();
                let mut x1 = x0.clone();
                x1[j] = 0.75;
                acc += (f(&x0) - f(&x1)).powi(2) / 4.0;
            }
            acc / 4.0
        })
        .collect();
    for (got, want) in by_enumeration.iter().zip(exact) {
        assert_relative_eq!(*got, want, epsilon = 1e-15);
    }
    for (j, want) in by_enumeration.iter().enumerate() {
        let est = saltenis_numerator(&y, p.factor(j));
        assert!((est - want).abs() < 1e-12, "factor {j}: {est} vs {want}");
    }
}

#[test]
fn additive_model_has_equal_first_order_and_total() {
    let cfg = DesignConfig::symmetric(4, 2, 1 << 12);
    let (ev, p) = evaluated(&cfg, &BuiltinModel::Additive);
    for kind in [EstimatorKind::Saltenis, EstimatorKind::CorrelationCorrected] {
        let r = estimate(&ev, &p, kind, true).unwrap();
        let s = r.first_orders().unwrap();
        for (t, s) in r.totals().iter().zip(&s) {
            assert!((t - 0.25).abs() < 0.03, "{kind}: T = {t}");
            assert!((t - s).abs() < 0.03, "{kind}: T = {t}, S = {s}");
        }
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 0.03);
    }
}

#[test]
fn inert_factor_gets_zero_total() {
    let model = FnModel::new("x1x3", |x: &[f64]| x[0] * x[2]);
    let (ev, p) = evaluated(&DesignConfig::symmetric(3, 3, 64), &model);
    let t = estimate(&ev, &p, EstimatorKind::Saltenis, false)
        .unwrap()
        .totals();
    assert_eq!(t[1], 0.0);
}

#[test]
fn swapping_factors_permutes_estimates() {
    let (k, rows) = (4, 128);
    let a = [0.0, 1.0, 4.5, 9.0];
    let perm = [2, 0, 3, 1];
    let g = GFunctionSpec::new(a.to_vec()).unwrap();
    let g_perm = GFunctionSpec::new(perm.iter().map(|&p| a[p]).collect()).unwrap();
    for scheme in [Scheme::Asymmetric, Scheme::Symmetric] {
        let cfg = DesignConfig {
            k,
            n: 3,
            rows,
            scheme,
            evaluate_donors: scheme == Scheme::Asymmetric,
        };
        let bases = random_bases(3, k, rows, 5);
        let permuted: Vec<SampleMatrix> = bases
            .iter()
            .map(|m| {
                let data = (0..rows)
                    .flat_map(|i| perm.iter().map(move |&p| m.get(i, p)))
                    .collect();
                SampleMatrix::from_rows(rows, k, data).unwrap()
            })
            .collect();
        let run = |model: &GFunctionSpec, bases: &[SampleMatrix], kind| {
            let (s, p) = build_schedule(&cfg, bases).unwrap();
            let y = evaluate_batch(&mut Evaluator::new(model), &s).unwrap();
            let ev = EvaluatedSchedule::new(s, y, "g").unwrap();
            estimate(&ev, &p, kind, true).unwrap()
        };
        for kind in [
            EstimatorKind::Saltenis,
            EstimatorKind::Correlation,
            EstimatorKind::CorrelationCorrected,
        ] {
            let base = run(&g, &bases, kind);
            let swapped = run(&g_perm, &permuted, kind);
            for (slot, &p) in perm.iter().enumerate() {
                assert_relative_eq!(swapped.totals()[slot], base.totals()[p], epsilon = 1e-12);
                assert_relative_eq!(
                    swapped.first_orders().unwrap()[slot],
                    base.first_orders().unwrap()[p],
                    epsilon = 1e-12
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_are_affine_invariant(
        a in prop::collection::vec(0.0f64..20.0, 2..5),
        scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        offset in -100.0f64..100.0,
        symmetric in any::<bool>(),
    ) {
        let k = a.len();
        let g = GFunctionSpec::new(a).unwrap();
        let cfg = if symmetric {
            DesignConfig::symmetric(k, 3, 64)
        } else {
            DesignConfig::asymmetric(k, 64).with_donors()
        };
        let (s, p) = sobol_design(&cfg, 1, None).unwrap();
        let y = evaluate_batch(&mut Evaluator::new(&g), &s).unwrap();
        let moved: Vec<f64> = y.iter().map(|v| scale * v + offset).collect();
        let e1 = EvaluatedSchedule::new(s.clone(), y, "g").unwrap();
        let e2 = EvaluatedSchedule::new(s, moved, "g").unwrap();
        for kind in [EstimatorKind::Saltenis, EstimatorKind::Correlation, EstimatorKind::CorrelationCorrected] {
            let (r1, r2) = (estimate(&e1, &p, kind, true).unwrap(), estimate(&e2, &p, kind, true).unwrap());
            for (x, y) in r1.totals().iter().zip(r2.totals()) {
                prop_assert!((x - y).abs() < 1e-9, "{kind}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn schedules_match_enumerated_counts() {
    for scheme in [Scheme::Asymmetric, Scheme::Symmetric] {
        for k in 1..=4 {
            for n in 2..=5 {
                for rows in [1, 2, 4] {
                    let cfg = DesignConfig {
                        k,
                        n,
                        rows,
                        scheme,
                        evaluate_donors: false,
                    };
                    let bases = random_bases(n, k, rows, (k * 100 + n * 10 + rows) as u64);
                    let (s, p) = build_schedule(&cfg, &bases).unwrap();

                    // Enumerate the blocks a design of this kind evaluates.
                    let sources: Vec<usize> = match scheme {
                        Scheme::Asymmetric => vec![0],
                        Scheme::Symmetric => (0..n).collect(),
                    };
                    let mut blocks = sources.len();
                    let mut effects = 0;
                    for _ in &sources {
                        blocks += k * (n - 1);
                        effects += k * ((n - 1) + (n - 1) * (n - 2) / 2);
                    }
                    let b = budget(&cfg).unwrap();
                    assert_eq!(s.len(), blocks * rows);
                    assert_eq!(b.total_runs, blocks * rows);
                    assert_eq!(p.total(), effects * rows);
                    assert_eq!(b.total_effects, effects * rows);
                    p.validate(&s).unwrap();
                    assert_eq!(effect_pairs(&s), p);

                    // Every pair differs exactly in its own column.
                    for (j, pair) in p.iter() {
                        let (u, v) = (s.point(pair.u), s.point(pair.v));
                        for c in 0..k {
                            assert_eq!(u[c] == v[c], c != j, "{scheme} k={k} n={n} factor {j}");
                        }
                    }
                    // Reuse by formula equals reuse by counting.
                    let counted = count_reuse(&s).unwrap();
                    let formula = reuse_counts(&cfg).unwrap();
                    assert_eq!(counted.entries, formula.entries);
                }
            }
        }
    }
}

#[test]
fn hybrid_rows_take_one_column_from_the_donor() {
    let cfg = DesignConfig::symmetric(3, 3, 4);
    let bases = random_bases(3, 3, 4, 1);
    let (s, _) = build_schedule(&cfg, &bases).unwrap();
    for (id, run) in s.runs().iter().enumerate() {
        for c in 0..3 {
            assert_eq!(s.point(id)[c], bases[run.tag.origin(c)].get(run.row, c));
        }
        if let RunTag::Hybrid {
            source,
            donor,
            factor,
        } = run.tag
        {
            assert_ne!(source, donor);
            assert_eq!(run.tag.origin(factor), donor);
        }
    }
}

#[test]
fn sobol_beats_pseudo_random_discrepancy() {
    for n in [64, 256, 1024] {
        let sobol = l2_discrepancy(&sobol_points(6, n, 1).unwrap())
            .unwrap()
            .value;
        let mut random: Vec<f64> = (0..21)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
                let pts = (0..n * 6).map(|_| rng.random::<f64>()).collect();
                l2_discrepancy(&QrPointSet::from_rows(6, pts).unwrap())
                    .unwrap()
                    .value
            })
            .collect();
        random.sort_by(f64::total_cmp);
        assert!(
            sobol < random[10],
            "N = {n}: {sobol} vs median {}",
            random[10]
        );
    }
}

#[test]
fn discrepancy_matches_brute_force_formula() {
    // Direct double sum of the L2-star closed form.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, d) = (37, 3);
    let pts: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let x = |i: usize| &pts[i * d..(i + 1) * d];
    let mut t2 = 0.0;
    for i in 0..n {
        t2 += x(i).iter().map(|v| (1.0 - v * v) / 2.0).product::<f64>();
    }
    let mut t3 = 0.0;
    for i in 0..n {
        for l in 0..n {
            t3 += x(i)
                .iter()
                .zip(x(l))
                .map(|(a, b)| 1.0 - a.max(*b))
                .product::<f64>();
        }
    }
    let d2 = 3f64.powi(-(d as i32)) - 2.0 * t2 / n as f64 + t3 / (n * n) as f64;
    let got = l2_discrepancy(&QrPointSet::from_rows(d, pts.clone()).unwrap())
        .unwrap()
        .value;
    assert_relative_eq!(got, d2.sqrt(), max_relative = 1e-12);
}
