//! Weighted geometric median via the smoothed Weiszfeld iteration.

use crate::error::{Error, Result};
use crate::math::{vec_distance, vec_norm, vec_sub};

#[derive(Debug, Clone, Copy)]
pub struct WeiszfeldParams {
    /// Stop when the iterate moves less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Per-point denominator floor, keeps the iteration defined when the
    /// iterate lands on an input point.
    pub smoothing: f64,
}

impl Default for WeiszfeldParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            smoothing: 1e-6,
        }
    }
}

/// Weighted sum of distances from `v` to the points.
pub fn geometric_median_objective(v: &[f64], points: &[Vec<f64>], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * vec_distance(v, p))
        .sum()
}

/// Point approximately minimizing the weighted sum of Euclidean distances.
pub fn geometric_median(
    points: &[Vec<f64>],
    weights: &[f64],
    params: WeiszfeldParams,
) -> Result<Vec<f64>> {
    geometric_median_with_trace(points, weights, params).map(|(v, _)| v)
}

/// Same as [`geometric_median`] but also returns the objective value at each
/// iterate (starting point included), which callers use to check the
/// non-increase guarantee.
pub fn geometric_median_with_trace(
    points: &[Vec<f64>],
    weights: &[f64],
    params: WeiszfeldParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::EmptyInput("points"));
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    if !(params.tol > 0.0) || !(params.smoothing > 0.0) {
        return Err(Error::InvalidArgument(
            "tol and smoothing must be positive".into(),
        ));
    }
    let dim = points[0].len();

    // Start from the weighted mean.
    let wsum: f64 = weights.iter().sum();
    let mut v = vec![0.0; dim];
    for (p, &w) in points.iter().zip(weights) {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        for (acc, x) in v.iter_mut().zip(p) {
            *acc += w * x / wsum;
        }
    }

    let mut trace = vec![geometric_median_objective(&v, points, weights)];
    for _ in 0..params.max_iter {
        let mut numer = vec![0.0; dim];
        let mut denom = 0.0;
        for (p, &w) in points.iter().zip(weights) {
            let d = vec_distance(&v, p).max(params.smoothing);
            let coef = w / d;
            denom += coef;
            for (acc, x) in numer.iter_mut().zip(p) {
                *acc += coef * x;
            }
        }
        let next: Vec<f64> = numer.iter().map(|x| x / denom).collect();
        let step = vec_norm(&vec_sub(&next, &v));
        v = next;
        let obj = geometric_median_objective(&v, points, weights);
        debug_assert!(
            obj <= trace.last().unwrap() + 1e-9 * (1.0 + trace.last().unwrap()),
            "Weiszfeld objective increased"
        );
        trace.push(obj);
        if step < params.tol {
            break;
        }
    }
    Ok((v, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_returns_it() {
        let p = vec![vec![2.5, -1.0]];
        let got = geometric_median(&p, &[1.0], WeiszfeldParams::default()).unwrap();
        assert!(vec_distance(&got, &p[0]) < 1e-9);
    }

    #[test]
    fn equilateral_triangle_gives_fermat_point() {
        let h = 3.0_f64.sqrt() / 2.0;
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
        let got = geometric_median(&pts, &[1.0; 3], WeiszfeldParams::default()).unwrap();
        let centroid = [0.5, 3.0_f64.sqrt() / 6.0];
        assert!((got[0] - centroid[0]).abs() < 1e-6);
        assert!((got[1] - centroid[1]).abs() < 1e-6);
    }

    #[test]
    fn matches_grid_search_objective_on_collinear_points() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![0.1, 0.0],
            vec![0.2, 0.0],
        ];
        let w = [1.0; 4];
        let (got, _) = geometric_median_with_trace(&pts, &w, WeiszfeldParams::default()).unwrap();

        // Dense 1-D grid search of the objective along the shared axis.
        let mut best = f64::INFINITY;
        let mut best_x = 0.0;
        for i in 0..=200_000 {
            let x = -1.0 + i as f64 * 6e-5;
            let obj = geometric_median_objective(&[x, 0.0], &pts, &w);
            if obj < best {
                best = obj;
                best_x = x;
            }
        }
        // The objective is flat on [0.1, 0.2]; compare objective values.
        let got_obj = geometric_median_objective(&got, &pts, &w);
        assert!(
            got_obj <= best + 1e-4,
            "objective {got_obj} vs grid best {best} at x={best_x}"
        );
        assert!(got[1].abs() < 1e-9);
    }

    #[test]
    fn objective_never_increases() {
        let pts = vec![
            vec![0.0, 1.0, 2.0],
            vec![5.0, -3.0, 1.0],
            vec![-2.0, 0.5, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![4.0, 4.0, -4.0],
        ];
        let (_, trace) =
            geometric_median_with_trace(&pts, &[1.0, 2.0, 0.5, 1.5, 1.0], WeiszfeldParams::default())
                .unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9 * (1.0 + pair[0]));
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let pts = vec![vec![0.0]];
        assert!(geometric_median(&pts, &[0.0], WeiszfeldParams::default()).is_err());
        assert!(geometric_median(&pts, &[-1.0], WeiszfeldParams::default()).is_err());
    }
}
