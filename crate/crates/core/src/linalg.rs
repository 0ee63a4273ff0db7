//! Householder least squares for small, tall design matrices.

use crate::error::{Error, Result};

/// QR factorization of a fixed `rows × cols` design matrix, reusable for many
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: usize,
    cols: usize,
    /// Householder vectors, one per column, each of length `rows - j`.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular factor, row-major `cols × cols`.
    r: Vec<f64>,
}

impl LeastSquares {
    /// Factorizes a row-major design matrix.
    pub fn new(design: &[f64], rows: usize, cols: usize) -> Result<Self> {
        if design.len() != rows * cols || rows < cols || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "least squares needs a tall matrix, got {rows}x{cols}"
            )));
        }
        // Column-major working copy.
        let mut a: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| design[i * cols + j]).collect())
            .collect();
        let mut reflectors = Vec::with_capacity(cols);
        for j in 0..cols {
            let x = &a[j][j..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidParameter(
                    "rank-deficient design matrix".into(),
                ));
            }
            let alpha = if x[0] > 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            v.iter_mut().for_each(|t| *t /= vnorm);
            for col in a.iter_mut().skip(j) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum();
                col[j..]
                    .iter_mut()
                    .zip(&v)
                    .for_each(|(c, p)| *c -= 2.0 * dot * p);
            }
            reflectors.push(v);
        }
        let mut r = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in i..cols {
                r[i * cols + j] = a[j][i];
            }
        }
        Ok(Self {
            rows,
            cols,
            reflectors,
            r,
        })
    }

    /// Coefficients minimizing `‖A·c − y‖₂`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.rows);
        let mut y = rhs.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            let dot: f64 = v.iter().zip(&y[j..]).map(|(p, q)| p * q).sum();
            y[j..]
                .iter_mut()
                .zip(v)
                .for_each(|(t, p)| *t -= 2.0 * dot * p);
        }
        let n = self.cols;
        let mut c = vec![0.0; n];
        for i in (0..n).rev() {
            let tail: f64 = (i + 1..n).map(|j| self.r[i * n + j] * c[j]).sum();
            c[i] = (y[i] - tail) / self.r[i * n + i];
        }
        c
    }
}
