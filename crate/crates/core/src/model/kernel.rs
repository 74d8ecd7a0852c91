use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::SegmentGrid;
use crate::error::{Error, Result};

/// Scalar profile of a delay kernel on `[-d, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelShape {
    Zero,
    Constant {
        value: f64,
    },
    /// `intercept + slope * xi`
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// Hat function vanishing at both ends, peak at `-d/2`, total integral `mass`.
    Triangular {
        mass: f64,
    },
    /// `scale * exp(rate * xi)`
    Exponential {
        scale: f64,
        rate: f64,
    },
    /// Explicit node values, one per grid node; resampled linearly if the grid differs.
    Nodes {
        values: Vec<f64>,
    },
}

impl KernelShape {
    pub fn eval(&self, xi: f64, d: f64) -> f64 {
        match self {
            KernelShape::Zero => 0.0,
            KernelShape::Constant { value } => *value,
            KernelShape::Linear { intercept, slope } => intercept + slope * xi,
            KernelShape::Triangular { mass } => {
                let peak = 2.0 * mass / d;
                let s = (xi + d) / d;
                peak * (1.0 - (2.0 * s - 1.0).abs()).max(0.0)
            }
            KernelShape::Exponential { scale, rate } => scale * (rate * xi).exp(),
            KernelShape::Nodes { values } => {
                if values.is_empty() {
                    return 0.0;
                }
                if values.len() == 1 {
                    return values[0];
                }
                let m = values.len() - 1;
                let s = ((xi + d) / d * m as f64).clamp(0.0, m as f64);
                let j = (s.floor() as usize).min(m - 1);
                let t = s - j as f64;
                values[j] * (1.0 - t) + values[j + 1] * t
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            KernelShape::Zero => true,
            KernelShape::Constant { value } => *value == 0.0,
            KernelShape::Linear { intercept, slope } => *intercept == 0.0 && *slope == 0.0,
            KernelShape::Triangular { mass } => *mass == 0.0,
            KernelShape::Exponential { scale, .. } => *scale == 0.0,
            KernelShape::Nodes { values } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// Matrix-valued kernel sampled at the grid nodes (`rows x cols` per node, row-major).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayKernelGrid {
    rows: usize,
    cols: usize,
    nodes: usize,
    data: Vec<f64>,
    zero: bool,
}

impl DelayKernelGrid {
    pub fn zeros(grid: &SegmentGrid, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            nodes: grid.len(),
            data: vec![0.0; grid.len() * rows * cols],
            zero: true,
        }
    }

    /// `shape(xi) * coeff` at every node.
    pub fn from_shape(grid: &SegmentGrid, shape: &KernelShape, coeff: &DMatrix<f64>) -> Self {
        let (rows, cols) = coeff.shape();
        let mut data = Vec::with_capacity(grid.len() * rows * cols);
        for j in 0..grid.len() {
            let s = shape.eval(grid.node(j), grid.delay());
            for r in 0..rows {
                for c in 0..cols {
                    data.push(s * coeff[(r, c)]);
                }
            }
        }
        let zero = data.iter().all(|v| *v == 0.0);
        Self {
            rows,
            cols,
            nodes: grid.len(),
            data,
            zero,
        }
    }

    /// Kernel from a closure returning the matrix at each node.
    pub fn from_fn(
        grid: &SegmentGrid,
        rows: usize,
        cols: usize,
        f: impl Fn(f64) -> DMatrix<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * rows * cols);
        for j in 0..grid.len() {
            let m = f(grid.node(j));
            if m.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    what: "kernel node matrix",
                    expected: rows * cols,
                    got: m.nrows() * m.ncols(),
                });
            }
            for r in 0..rows {
                for c in 0..cols {
                    data.push(m[(r, c)]);
                }
            }
        }
        let zero = data.iter().all(|v| *v == 0.0);
        Ok(Self {
            rows,
            cols,
            nodes: grid.len(),
            data,
            zero,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Row-major block at node `j`.
    #[inline]
    pub fn at(&self, j: usize) -> &[f64] {
        let s = self.rows * self.cols;
        &self.data[j * s..(j + 1) * s]
    }

    pub fn matrix(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, self.at(j))
    }

    /// `out += scale * K(j) v`
    #[inline]
    pub fn apply_add(&self, j: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.at(j);
        for r in 0..self.rows {
            let mut s = 0.0;
            for c in 0..self.cols {
                s += a[r * self.cols + c] * v[c];
            }
            out[r] += scale * s;
        }
    }

    /// `out += scale * K(j)^T v`
    #[inline]
    pub fn apply_transpose_add(&self, j: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.at(j);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c] += scale * a[r * self.cols + c] * v[r];
            }
        }
    }

    /// Trapezoid L2 norm of each row, `(int |row_i(xi)|^2 dxi)^(1/2)`.
    pub fn row_l2_norms(&self, grid: &SegmentGrid) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let f: Vec<f64> = (0..self.nodes)
                    .map(|j| {
                        let a = self.at(j);
                        (0..self.cols).map(|c| a[r * self.cols + c].powi(2)).sum()
                    })
                    .collect();
                grid.integrate(&f).sqrt()
            })
            .collect()
    }

    /// `|K|^2_{L2} = int |K(xi)|_F^2 dxi` by trapezoid.
    pub fn l2_norm_sq(&self, grid: &SegmentGrid) -> f64 {
        let f: Vec<f64> = (0..self.nodes)
            .map(|j| self.at(j).iter().map(|v| v * v).sum())
            .collect();
        grid.integrate(&f)
    }
}
