use htcopt::analysis::{combined_optimum, dbscan, lasso_fit, lambda_max, min_max_scale, pareto_indices};
use htcopt::moo::{fast_non_dominated_sort, ObjectiveVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Core points joined by union-find; components numbered by their lowest
/// core index; a border point takes the lowest-numbered adjacent cluster.
fn dbscan_oracle(pts: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = pts.len();
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(&pts[i], &pts[j]) <= eps).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && dist(&pts[i], &pts[j]) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut id_of_root = std::collections::HashMap::new();
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let next = id_of_root.len();
            labels[i] = Some(*id_of_root.entry(r).or_insert(next));
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = (0..n)
                .filter(|&j| core[j] && dist(&pts[i], &pts[j]) <= eps)
                .filter_map(|j| labels[j])
                .min();
        }
    }
    labels
}

fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let (n, p) = (x.len(), x[0].len());
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let b = DVector::from_column_slice(y);
    let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
    sol.iter().skip(1).copied().collect()
}

proptest! {
    #[test]
    fn pareto_equals_first_front(pts in prop::collection::vec(prop::collection::vec((0i32..8).prop_map(f64::from), 2), 1..50)) {
        let objs: Vec<ObjectiveVector> = pts.iter().cloned().map(ObjectiveVector).collect();
        let part = fast_non_dominated_sort(&objs).unwrap();
        prop_assert_eq!(pareto_indices(&pts), part.fronts[0].clone());
    }

    #[test]
    fn scaling_preserves_order(v in prop::collection::vec(-1e6f64..1e6, 2..40)) {
        let s = min_max_scale(&v, 0.0, 100.0);
        for i in 0..v.len() {
            prop_assert!((-1e-9..=100.0 + 1e-9).contains(&s[i]));
            for j in 0..v.len() {
                if v[i] < v[j] {
                    prop_assert!(s[i] <= s[j]);
                }
            }
        }
    }

    #[test]
    fn dbscan_matches_reachability(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 2), 0..60),
        eps in 0.5f64..5.0,
        min_pts in 1usize..6,
    ) {
        prop_assert_eq!(dbscan(&pts, eps, min_pts).unwrap(), dbscan_oracle(&pts, eps, min_pts));
    }

    #[test]
    fn combined_optimum_ignores_affine_rescale(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..100.0, 2), 1..30),
        scale in 0.01f64..100.0,
        shift in -1e3f64..1e3,
    ) {
        let best = combined_optimum(&pts, &[1.0, 1.0]).unwrap();
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] * scale + shift, p[1]]).collect();
        let best_moved = combined_optimum(&moved, &[1.0, 1.0]).unwrap();
        // Rounding in the rescale can only swap near-ties.
        let sums = |v: &[Vec<f64>]| {
            let a = min_max_scale(&v.iter().map(|p| p[0]).collect::<Vec<_>>(), 0.0, 100.0);
            let b = min_max_scale(&v.iter().map(|p| p[1]).collect::<Vec<_>>(), 0.0, 100.0);
            a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<f64>>()
        };
        let s = sums(&pts);
        prop_assert!((s[best] - s[best_moved]).abs() < 1e-9);
    }

    #[test]
    fn lasso_shrinks_with_lambda(
        rows in prop::collection::vec(prop::collection::vec(1.0f64..100.0, 3), 8..20),
        w in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let y: Vec<f64> = rows.iter().enumerate()
            .map(|(i, r)| r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + (i % 3) as f64)
            .collect();
        let lmax = lambda_max(&rows, &y).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let lambda = lmax * (k as f64 / 10.0);
            let m = lasso_fit(&rows, &y, lambda).unwrap();
            let l1: f64 = m.coefficients.iter().map(|c| c.abs()).sum();
            prop_assert!(l1 <= last + 1e-6 * last.max(1.0), "lambda {}: {} > {}", lambda, l1, last);
            last = l1;
        }
        prop_assert_eq!(last, 0.0);
    }
}

#[test]
fn lasso_without_penalty_is_least_squares() {
    let x = vec![
        vec![1.0, 20.0, 3.0],
        vec![15.0, 4.0, 70.0],
        vec![33.0, 80.0, 12.0],
        vec![60.0, 35.0, 90.0],
        vec![95.0, 61.0, 44.0],
    ];
    let y = vec![3.0, -7.5, 12.25, 0.5, 30.0];
    let m = lasso_fit(&x, &y, 0.0).unwrap();
    let ls = least_squares(&x, &y);
    for (a, b) in m.coefficients.iter().zip(&ls) {
        assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", m.coefficients, ls);
    }
}
