use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix of doubles. Vectors are stored as `n x 1` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::from_vec(n, 1, values)
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let values = (0..rows * cols)
            .map(|_| if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 })
            .collect();
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matvec: {}x{} matrix against vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        matvec_acc(self, x, 0, &mut out);
        Ok(out)
    }
}

/// `out += W[:, col_offset..col_offset + x.len()] · x`. Callers check shapes.
pub(crate) fn matvec_acc(w: &Matrix, x: &[f64], col_offset: usize, out: &mut [f64]) {
    let cols = w.cols;
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w.values[r * cols + col_offset..r * cols + col_offset + x.len()];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `dx += W[:, col_offset..]^T · dy` and `dw[:, col_offset..] += dy ⊗ x`.
pub(crate) fn matvec_backward(
    w: &Matrix,
    x: &[f64],
    col_offset: usize,
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
) {
    let cols = w.cols;
    let n = x.len();
    match dx {
        Some(dx) => {
            for (r, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = r * cols + col_offset;
                let wrow = &w.values[base..base + n];
                let dwrow = &mut dw[base..base + n];
                for k in 0..n {
                    dx[k] += wrow[k] * g;
                    dwrow[k] += g * x[k];
                }
            }
        }
        None => {
            for (r, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = r * cols + col_offset;
                let dwrow = &mut dw[base..base + n];
                for k in 0..n {
                    dwrow[k] += g * x[k];
                }
            }
        }
    }
}
