mod common;

use common::{gaussian_matrix as gaussian, monotone_qp, random_orthogonal};
use covergllvm::exec::Execution;
use covergllvm::model::{ResponseKind, ResponseMatrix};
use covergllvm::ordination::{
    dissimilarity, isotonic_regression, nmds, procrustes_error, scores_svg, write_scores_csv, DissimilarityMatrix,
    Metric, NmdsOptions,
};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn procrustes_invariant_to_similarity_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..100 {
        let d = 2 + trial % 3;
        let x = gaussian(20, d, &mut rng);
        let q = random_orthogonal(d, &mut rng);
        let scale = rng.random_range(0.01..100.0);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut y = x.dot(&q) * scale;
        for mut row in y.rows_mut() {
            for (v, s) in row.iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let e = procrustes_error(x.view(), y.view()).unwrap();
        assert!(e.abs() < 1e-10, "trial {trial}: {e}");
        let e = procrustes_error(y.view(), x.view()).unwrap();
        assert!(e.abs() < 1e-10, "trial {trial} reversed: {e}");
    }
}

/// Error after the best rotation found on an angle grid, for both
/// reflections, with the optimal scale for each angle.
fn grid_oracle(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let center = |m: &Array2<f64>| m - &m.mean_axis(ndarray::Axis(0)).unwrap();
    let (x, y) = (center(x), center(y));
    let sx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().map(|v| v * v).sum();
    let eval = |theta: f64, reflect: bool| {
        let (c, s) = (theta.cos(), theta.sin());
        let r = if reflect { array![[c, s], [s, -c]] } else { array![[c, -s], [s, c]] };
        let yr = y.dot(&r);
        let inner: f64 = x.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
        // best scale = inner / sy; residual / sx
        1.0 - inner * inner / (sx * sy)
    };
    let mut best = f64::INFINITY;
    for reflect in [false, true] {
        let steps = 20000;
        let mut arg = 0.0;
        let mut val = f64::INFINITY;
        for k in 0..steps {
            let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
            let v = eval(t, reflect);
            if v < val {
                val = v;
                arg = t;
            }
        }
        // golden-section refinement within one grid cell either side
        let h = 2.0 * std::f64::consts::PI / steps as f64;
        let (mut a, mut b) = (arg - h, arg + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if eval(c, reflect) < eval(d, reflect) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.min(eval(0.5 * (a + b), reflect)).min(val);
    }
    best
}

#[test]
fn procrustes_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let x = gaussian(100, 2, &mut rng);
        let y = gaussian(100, 2, &mut rng);
        let e = procrustes_error(x.view(), y.view()).unwrap();
        let oracle = grid_oracle(&x, &y);
        assert!((e - oracle).abs() < 1e-6, "{e} vs {oracle}");
        assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn isotonic_matches_qp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let fit = isotonic_regression(&values, &weights).unwrap();
        let oracle = monotone_qp(&values, &weights);
        for (a, b) in fit.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "{fit:?} vs {oracle:?}");
        }
    }
}

proptest! {
    #[test]
    fn isotonic_is_monotone_and_mean_preserving(values in prop::collection::vec(-10.0f64..10.0, 1..40),
                                                seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = values.iter().map(|_| rng.random_range(0.1..2.0)).collect();
        let fit = isotonic_regression(&values, &weights).unwrap();
        prop_assert!(fit.windows(2).all(|w| w[0] <= w[1]));
        let wm = |v: &[f64]| v.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>();
        prop_assert!((wm(&fit) - wm(&values)).abs() < 1e-9 * (1.0 + wm(&values).abs()));
    }

    #[test]
    fn procrustes_error_in_unit_interval(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(8, 2, &mut rng);
        let y = gaussian(8, 2, &mut rng);
        let e = procrustes_error(x.view(), y.view()).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
    }
}

fn euclidean(config: &Array2<f64>) -> DissimilarityMatrix {
    let n = config.nrows();
    let mut v = Array2::from_shape_fn((n, n), |(a, b)| {
        let diff = &config.row(a) - &config.row(b);
        diff.dot(&diff).sqrt()
    });
    let max = v.iter().copied().fold(0.0, f64::max);
    v.mapv_inplace(|x| x / max);
    for a in 0..n {
        for b in 0..a {
            v[(b, a)] = v[(a, b)];
        }
    }
    DissimilarityMatrix::new(v, Metric::BrayCurtis).unwrap()
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

#[test]
fn nmds_recovers_planted_configuration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let planted = gaussian(30, 2, &mut rng);
    let diss = euclidean(&planted);
    let opts = NmdsOptions { n_restarts: 4, ..NmdsOptions::default() };
    let fit = nmds(&diss, &names(30), &opts).unwrap();
    let stress = fit.scores.stress.unwrap();
    assert!(stress < 1e-3, "stress {stress}");
    assert!(fit.stress_trace.windows(2).all(|w| w[1] <= w[0]));
    let e = procrustes_error(planted.view(), fit.scores.coords.view()).unwrap();
    assert!(e < 1e-2, "procrustes {e}");
}

#[test]
fn nmds_stress_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values = Array2::from_shape_fn((25, 12), |_| if rng.random::<f64>() < 0.4 { 0.0 } else { rng.random::<f64>() });
    let data = ResponseMatrix::from_values(values, ResponseKind::Cover).unwrap();
    for metric in [Metric::BrayCurtis, Metric::Jaccard] {
        let diss = dissimilarity(&data, metric, Execution::Parallel).unwrap();
        for restart_count in [1, 3] {
            let opts = NmdsOptions { n_restarts: restart_count, seed: 9, ..NmdsOptions::default() };
            let fit = nmds(&diss, data.site_names(), &opts).unwrap();
            assert!(fit.stress_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", fit.stress_trace);
        }
    }
}

#[test]
fn nmds_equilateral_triangle() {
    let v = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    let diss = DissimilarityMatrix::new(v, Metric::BrayCurtis).unwrap();
    let fit = nmds(&diss, &names(3), &NmdsOptions { n_restarts: 2, ..NmdsOptions::default() }).unwrap();
    assert!(fit.scores.stress.unwrap() < 1e-6);
}

#[test]
fn nmds_is_deterministic_across_execution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let planted = gaussian(15, 3, &mut rng);
    let diss = euclidean(&planted);
    let par = nmds(&diss, &names(15), &NmdsOptions { n_restarts: 4, ..NmdsOptions::default() }).unwrap();
    let seq = nmds(
        &diss,
        &names(15),
        &NmdsOptions { n_restarts: 4, execution: Execution::Sequential, ..NmdsOptions::default() },
    )
    .unwrap();
    assert_eq!(par, seq);
}

#[test]
fn dissimilarities_are_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values = Array2::from_shape_fn((15, 8), |_| if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random::<f64>() });
    let data = ResponseMatrix::from_values(values, ResponseKind::Cover).unwrap();
    for metric in [Metric::BrayCurtis, Metric::Jaccard] {
        let d = dissimilarity(&data, metric, Execution::Parallel).unwrap();
        assert_eq!(d.values(), &d.values().t());
    }
}

#[test]
fn exports_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let diss = euclidean(&gaussian(6, 2, &mut rng));
    let fit = nmds(&diss, &names(6), &NmdsOptions { n_restarts: 1, ..NmdsOptions::default() }).unwrap();
    let mut buf = Vec::new();
    write_scores_csv(&fit.scores, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("site,dim1,dim2\ns1,"));
    assert_eq!(text.lines().count(), 7);
    let groups: Vec<String> = (0..6).map(|i| if i < 3 { "a".into() } else { "b".into() }).collect();
    let svg = scores_svg(&fit.scores, Some(&groups), "NMDS").unwrap();
    assert_eq!(svg.matches("<circle").count(), 6 + 2);
    assert!(scores_svg(&fit.scores, Some(&groups[..2]), "x").is_err());
}
