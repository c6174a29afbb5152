//! Numerical kernel: dense vector/matrix primitives, coordinate-wise robust
//! statistics, the smoothed Weiszfeld solver, and seeded random streams.
//!
//! Everything here is pure and re-entrant; values are freely shareable across
//! threads.

pub mod geomedian;
pub mod normal;
pub mod rng;

pub use geomedian::{geometric_median, geometric_median_with_trace, WeiszfeldParams};
pub use normal::{std_normal_cdf, std_normal_inverse_cdf};
pub use rng::{Actor, RngStream};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("matrix rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::EmptyInput("matrix"));
        }
        Ok(self.data.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// Scale every row to unit Euclidean norm. A zero row is an error; the
    /// caller decides how to treat degenerate embeddings.
    pub fn normalize_rows(&self) -> Result<Matrix> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let norm = vec_norm(self.row(i));
            if norm == 0.0 {
                return Err(Error::DegenerateEmbedding { row: i });
            }
            for v in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *v /= norm;
            }
        }
        Ok(out)
    }

    /// `self * self^T`, the Gram matrix of the rows.
    pub fn mul_transpose(&self) -> Matrix {
        let n = self.rows;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = vec_dot(self.row(i), self.row(j));
            }
        }
        Matrix {
            rows: n,
            cols: n,
            data,
        }
    }
}

pub fn vec_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn vec_norm(a: &[f64]) -> f64 {
    vec_dot(a, a).sqrt()
}

pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

/// `a += c * b` in place.
pub fn vec_axpy(a: &mut [f64], c: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += c * y;
    }
}

pub fn vec_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn vec_all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Arithmetic mean of equal-length vectors.
pub fn mean_vectors(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("vectors"))?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        vec_axpy(&mut out, 1.0, v);
    }
    let n = vectors.len() as f64;
    for x in &mut out {
        *x /= n;
    }
    Ok(out)
}

/// Per dimension, drop the `k` largest and `k` smallest values and average
/// the remainder. `k = 0` reduces to the arithmetic mean of sorted values.
pub fn coordinate_trimmed_mean(vectors: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("vectors"))?;
    let n = vectors.len();
    if 2 * k >= n {
        return Err(Error::OverTrimmed { twice_k: 2 * k, n });
    }
    let dim = first.len();
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            column[i] = v[j];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("non-finite entry"));
        let kept = &column[k..n - k];
        out[j] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    Ok(out)
}

/// Per-dimension median; an even count averages the two central values.
pub fn coordinate_median(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("vectors"))?;
    let n = vectors.len();
    let dim = first.len();
    let mut out = vec![0.0; dim];
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            column[i] = v[j];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("non-finite entry"));
        out[j] = if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        };
    }
    Ok(out)
}

/// Median of a pre-extracted scalar sample, same even-count convention.
pub fn scalar_median(values: &[f64]) -> Result<f64> {
    let v = coordinate_median(&values.iter().map(|&x| vec![x]).collect::<Vec<_>>())?;
    Ok(v[0])
}
