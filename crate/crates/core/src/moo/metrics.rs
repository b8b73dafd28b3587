//! Front quality indicators: hypervolume and inverted generational distance.

/// Hypervolume dominated by `points` and bounded by `reference` (minimisation).
/// Points not strictly better than the reference in every objective add nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .cloned()
        .collect();
    hv_rec(pts, reference)
}

// Slices along the last objective and recurses on the remaining ones.
fn hv_rec(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let m = reference.len();
    if m == 1 {
        let best = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    if m == 2 {
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut vol = 0.0;
        let mut best_y = reference[1];
        for p in &pts {
            if p[1] < best_y {
                vol += (reference[0] - p[0]) * (best_y - p[1]);
                best_y = p[1];
            }
        }
        return vol;
    }
    let last = m - 1;
    pts.sort_by(|a, b| a[last].total_cmp(&b[last]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let upper = if i + 1 < pts.len() {
            pts[i + 1][last]
        } else {
            reference[last]
        };
        let depth = upper - pts[i][last];
        if depth <= 0.0 {
            continue;
        }
        let slice: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..last].to_vec()).collect();
        vol += depth * hv_rec(slice, &reference[..last]);
    }
    vol
}

/// Mean Euclidean distance from each reference-front point to the nearest
/// obtained point.
pub fn igd(reference_front: &[Vec<f64>], obtained: &[Vec<f64>]) -> f64 {
    if reference_front.is_empty() || obtained.is_empty() {
        return f64::INFINITY;
    }
    let total: f64 = reference_front
        .iter()
        .map(|r| {
            obtained
                .iter()
                .map(|o| {
                    r.iter()
                        .zip(o)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / reference_front.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypervolume_2d_rectangles() {
        let hv = hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[3.0, 3.0]);
        // union of [1,3]x[2,3] and [2,3]x[1,3]
        assert!((hv - 3.0).abs() < 1e-12);
        assert_eq!(hypervolume(&[vec![4.0, 0.0]], &[3.0, 3.0]), 0.0);
    }

    #[test]
    fn hypervolume_3d_matches_grid_count() {
        let pts = vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 2.0], vec![3.0, 3.0, 1.0]];
        let r = [4.0, 4.0, 4.0];
        // unit-cube count on the integer grid is exact for integer points
        let mut count = 0;
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    let c = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                    if pts.iter().any(|p| p.iter().zip(&c).all(|(a, b)| a <= b)) {
                        count += 1;
                    }
                }
            }
        }
        assert!((hypervolume(&pts, &r) - count as f64).abs() < 1e-12);
    }

    #[test]
    fn igd_zero_on_identical_sets() {
        let f = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(igd(&f, &f), 0.0);
        assert!((igd(&f, &[vec![0.0, 1.0]]) - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }
}
