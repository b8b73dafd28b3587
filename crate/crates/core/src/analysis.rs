//! Post-processing of an optimisation run: Pareto extraction, min-max
//! scalarisation, DBSCAN over the front and Lasso attribution of parameters
//! to objectives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::RlParameterSet;
use crate::moo::dominates_unchecked;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no data")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub objectives: Vec<f64>,
    pub parameters: RlParameterSet,
    pub generation: usize,
}

/// Indices of the non-dominated rows, in input order.
pub fn pareto_indices(objectives: &[Vec<f64>]) -> Vec<usize> {
    (0..objectives.len())
        .filter(|&i| {
            !objectives
                .iter()
                .any(|other| dominates_unchecked(other, &objectives[i]))
        })
        .collect()
}

pub fn extract_pareto(points: &[FrontPoint]) -> Vec<FrontPoint> {
    let objs: Vec<Vec<f64>> = points.iter().map(|p| p.objectives.clone()).collect();
    pareto_indices(&objs)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Linear map of `[min, max]` onto `[lo, hi]`; a constant list maps to `lo`.
pub fn min_max_scale(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![lo; values.len()];
    }
    values
        .iter()
        .map(|v| lo + (v - min) / (max - min) * (hi - lo))
        .collect()
}

/// Each objective scaled to [0, 100] across the points, then the weighted
/// sum per point.
pub fn scaled_sums(objectives: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let n = objectives.len();
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    let m = objectives[0].len();
    if objectives.iter().any(|o| o.len() != m) || weights.len() != m {
        return Err(AnalysisError::Shape(format!(
            "expected {m} objectives and weights, got {} weights",
            weights.len()
        )));
    }
    if objectives.iter().flatten().chain(weights).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut sums = vec![0.0; n];
    for j in 0..m {
        let col: Vec<f64> = objectives.iter().map(|o| o[j]).collect();
        for (s, v) in sums.iter_mut().zip(min_max_scale(&col, 0.0, 100.0)) {
            *s += weights[j] * v;
        }
    }
    Ok(sums)
}

/// Index of the point with the smallest weighted scaled sum; first wins ties.
pub fn combined_optimum(objectives: &[Vec<f64>], weights: &[f64]) -> Result<usize, AnalysisError> {
    let sums = scaled_sums(objectives, weights)?;
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    Ok(best)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Density-based clustering. `None` marks noise; cluster ids are numbered in
/// the order their first core point appears. A point's neighbourhood is every
/// point within `eps`, itself included.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Vec<Option<usize>>, AnalysisError> {
    if !(eps > 0.0) || min_pts == 0 {
        return Err(AnalysisError::InvalidArgument("need eps > 0 and min_pts >= 1".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = points.len();
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| distance(&points[i], &points[j]) <= eps)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < min_pts {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        labels[i] = Some(c);
        let mut frontier = nb;
        while let Some(j) = frontier.pop() {
            if labels[j].is_none() {
                labels[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nbj = neighbours(j);
            if nbj.len() >= min_pts {
                frontier.extend(nbj);
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

pub const LASSO_TOLERANCE: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn check_design(x: &[Vec<f64>], y: &[f64]) -> Result<usize, AnalysisError> {
    if x.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if x.len() != y.len() {
        return Err(AnalysisError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(AnalysisError::Shape("ragged feature matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    Ok(p)
}

fn column_means(x: &[Vec<f64>], p: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Smallest lambda at which every coefficient is zero.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> Result<f64, AnalysisError> {
    let p = check_design(x, y)?;
    let n = x.len() as f64;
    let means = column_means(x, p);
    let ybar = y.iter().sum::<f64>() / n;
    Ok((0..p)
        .map(|j| {
            x.iter()
                .zip(y)
                .map(|(r, yi)| (r[j] - means[j]) * (yi - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max))
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Coordinate descent on `(1/2n)|y - Xb - c|^2 + lambda |b|_1` with an
/// unpenalised intercept `c`. Features are used as given.
pub fn lasso_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoModel, AnalysisError> {
    let p = check_design(x, y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AnalysisError::InvalidArgument("lambda must be >= 0".into()));
    }
    let n = x.len();
    let nf = n as f64;
    let means = column_means(x, p);
    let ybar = y.iter().sum::<f64>() / nf;
    // Centred columns, stored column-major.
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| x.iter().map(|r| r[j] - means[j]).collect())
        .collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut beta = vec![0.0; p];
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col
                .iter()
                .zip(&resid)
                .map(|(c, r)| c * r)
                .sum::<f64>()
                / nf
                + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, c) in resid.iter_mut().zip(col) {
                    *r -= c * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < LASSO_TOLERANCE {
            break;
        }
    }
    let intercept = ybar - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LassoModel {
        coefficients: beta,
        intercept,
        lambda,
        sweeps,
    })
}

/// Scale every column of `x` to [1, 100].
pub fn scale_features(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            min_max_scale(&col, 1.0, 100.0)
        })
        .collect();
    (0..x.len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_examples() {
        let objs = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_indices(&objs), vec![0, 1]);
        assert_eq!(pareto_indices(&[vec![3.0, 3.0]]), vec![0]);
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(min_max_scale(&[10.0, 20.0, 30.0], 0.0, 100.0), vec![0.0, 50.0, 100.0]);
        assert_eq!(min_max_scale(&[4.0, 4.0], 0.0, 100.0), vec![0.0, 0.0]);
        assert_eq!(min_max_scale(&[4.0, 4.0], 1.0, 100.0), vec![1.0, 1.0]);
    }

    #[test]
    fn combined_optimum_examples() {
        let objs = vec![vec![0.0, 100.0], vec![100.0, 0.0], vec![40.0, 40.0]];
        assert_eq!(combined_optimum(&objs, &[1.0, 1.0]).unwrap(), 2);
        assert_eq!(combined_optimum(&objs, &[1.0, 0.0]).unwrap(), 0);
        assert_eq!(combined_optimum(&[vec![5.0, 6.0]], &[1.0, 1.0]).unwrap(), 0);
        assert_eq!(combined_optimum(&[], &[1.0, 1.0]), Err(AnalysisError::Empty));
    }

    #[test]
    fn dbscan_examples() {
        let pairs = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![10.0, 10.0], vec![10.0, 10.5]];
        assert_eq!(
            dbscan(&pairs, 1.0, 2).unwrap(),
            vec![Some(0), Some(0), Some(1), Some(1)]
        );
        let sparse = vec![vec![0.0], vec![5.0], vec![10.0]];
        assert_eq!(dbscan(&sparse, 1.0, 2).unwrap(), vec![None; 3]);
        let dup = vec![vec![1.0, 1.0]; 3];
        assert_eq!(dbscan(&dup, 0.1, 3).unwrap(), vec![Some(0); 3]);
        assert_eq!(dbscan(&dup, 0.1, 4).unwrap(), vec![None; 3]);
    }

    #[test]
    fn lasso_exact_recovery() {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let i = i as f64;
                vec![1.0 + i * 5.0, 1.0 + ((i * 7.0) % 20.0) * 4.0, 50.0 + (i * 3.0) % 11.0]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let m = lasso_fit(&x, &y, 1e-6).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-4, "{m:?}");
        assert!(m.coefficients[1].abs() < 1e-4);
        assert!(m.coefficients[2].abs() < 1e-4);
    }

    #[test]
    fn lasso_kill_point() {
        let x = vec![vec![1.0, 3.0], vec![2.0, 1.0], vec![3.0, 4.0], vec![4.0, 2.0]];
        let y = vec![1.0, 3.0, 2.0, 5.0];
        let lm = lambda_max(&x, &y).unwrap();
        let m = lasso_fit(&x, &y, lm).unwrap();
        assert_eq!(m.coefficients, vec![0.0, 0.0]);
        assert_eq!(m.intercept, 2.75);
        assert_eq!(
            lasso_fit(&x, &[1.0, f64::NAN, 0.0, 0.0], 0.1),
            Err(AnalysisError::NonFinite)
        );
    }

    #[test]
    fn feature_scaling_range() {
        let x = vec![vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]];
        assert_eq!(
            scale_features(&x),
            vec![vec![1.0, 1.0], vec![50.5, 1.0], vec![100.0, 1.0]]
        );
    }
}
