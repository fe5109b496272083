//! Small dense linear algebra: 2x2 matrices, a row-major dense matrix with an
//! LU determinant, and block matrices with the block upper-triangular
//! determinant identity.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{LensError, Result};

/// A real 2x2 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn scaled_identity(s: f64) -> Self {
        Mat2([[s, 0.0], [0.0, s]])
    }

    pub fn det(&self) -> f64 {
        det2(self)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = self.0;
        Mat2([[s * m[0][0], s * m[0][1]], [s * m[1][0], s * m[1][1]]])
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// Inverse, or `None` when the determinant is exactly zero or not finite.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = self.0;
        Some(Mat2([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn symmetric_eigenvalues(&self) -> [f64; 2] {
        let m = self.0;
        let a = m[0][0];
        let d = m[1][1];
        let b = 0.5 * (m[0][1] + m[1][0]);
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - r, mean + r]
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + (-rhs)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// Determinant `ad - bc`.
pub fn det2(m: &Mat2) -> f64 {
    let m = m.0;
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LensError::invalid("rows", "ragged row lengths"));
        }
        Ok(DenseMatrix {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn set_block(&mut self, row: usize, col: usize, m: &Mat2) {
        for i in 0..2 {
            for j in 0..2 {
                self[(row + i, col + j)] = m.0[i][j];
            }
        }
    }

    pub fn block2(&self, row: usize, col: usize) -> Mat2 {
        Mat2([
            [self[(row, col)], self[(row, col + 1)]],
            [self[(row + 1, col)], self[(row + 1, col + 1)]],
        ])
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn determinant(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(LensError::invalid(
                "matrix",
                format!(
                    "determinant of non-square {}x{} matrix",
                    self.rows, self.cols
                ),
            ));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap_or(k);
            if a[pivot * n + k] == 0.0 {
                return Ok(0.0);
            }
            if pivot != k {
                for j in 0..n {
                    a.swap(k * n + j, pivot * n + j);
                }
                det = -det;
            }
            let p = a[k * n + k];
            det *= p;
            for i in (k + 1)..n {
                let f = a[i * n + k] / p;
                if f != 0.0 {
                    for j in k..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(det)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A matrix partitioned into a grid of dense blocks, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: Vec<DenseMatrix>,
}

impl BlockMatrix {
    /// Builds a block matrix, checking that every block conforms to its
    /// block row height and block column width.
    pub fn new(
        row_sizes: Vec<usize>,
        col_sizes: Vec<usize>,
        blocks: Vec<DenseMatrix>,
    ) -> Result<Self> {
        if blocks.len() != row_sizes.len() * col_sizes.len() {
            return Err(LensError::LengthMismatch {
                field: "blocks",
                expected: row_sizes.len() * col_sizes.len(),
                actual: blocks.len(),
            });
        }
        for (idx, b) in blocks.iter().enumerate() {
            let (bi, bj) = (idx / col_sizes.len(), idx % col_sizes.len());
            if b.rows() != row_sizes[bi] || b.cols() != col_sizes[bj] {
                return Err(LensError::invalid(
                    "blocks",
                    format!(
                        "block ({bi},{bj}) is {}x{}, expected {}x{}",
                        b.rows(),
                        b.cols(),
                        row_sizes[bi],
                        col_sizes[bj]
                    ),
                ));
            }
        }
        Ok(BlockMatrix {
            row_sizes,
            col_sizes,
            blocks,
        })
    }

    pub fn block_rows(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn block_cols(&self) -> usize {
        self.col_sizes.len()
    }

    pub fn block(&self, i: usize, j: usize) -> &DenseMatrix {
        &self.blocks[i * self.col_sizes.len() + j]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let rows: usize = self.row_sizes.iter().sum();
        let cols: usize = self.col_sizes.iter().sum();
        let mut out = DenseMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, &h) in self.row_sizes.iter().enumerate() {
            let mut c0 = 0;
            for (bj, &w) in self.col_sizes.iter().enumerate() {
                let b = self.block(bi, bj);
                for i in 0..h {
                    for j in 0..w {
                        out[(r0 + i, c0 + j)] = b[(i, j)];
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        out
    }

    /// True when every block strictly below the block diagonal is zero.
    pub fn is_block_upper_triangular(&self) -> bool {
        (0..self.block_rows()).all(|i| {
            (0..i.min(self.block_cols())).all(|j| self.block(i, j).data.iter().all(|&x| x == 0.0))
        })
    }
}

/// Determinant of a block upper-triangular matrix as the product of the
/// determinants of its diagonal blocks.
pub fn block_triangular_det(m: &BlockMatrix) -> Result<f64> {
    if m.block_rows() != m.block_cols() {
        return Err(LensError::invalid("blocks", "block grid is not square"));
    }
    if !m.is_block_upper_triangular() {
        return Err(LensError::invalid(
            "blocks",
            "nonzero block below the diagonal",
        ));
    }
    let mut det = 1.0;
    for i in 0..m.block_rows() {
        let d = m.block(i, i);
        if !d.is_square() {
            return Err(LensError::invalid(
                "blocks",
                format!("diagonal block {i} is {}x{}", d.rows(), d.cols()),
            ));
        }
        det *= d.determinant()?;
    }
    Ok(det)
}
