use alloc::vec;
use alloc::vec::Vec;

/// Failure of the Thomas recurrence.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum TridiagonalError {
    /// A pivot vanished (or became non-finite) during forward elimination.
    #[error("zero or non-finite pivot {pivot} in row {row}")]
    ZeroPivot {
        /// Row where elimination broke down.
        row: usize,
        /// The offending pivot value.
        pivot: f64,
    },
    /// Right-hand side length does not match the matrix.
    #[error("dimension mismatch: matrix has {matrix} rows, vector has {vector}")]
    Dimension {
        /// Matrix dimension.
        matrix: usize,
        /// Vector length.
        vector: usize,
    },
}

/// A square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i + 1, i)`, `upper[i]` is entry `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// Sub-diagonal, length `n - 1`.
    pub lower: Vec<f64>,
    /// Main diagonal, length `n`.
    pub diag: Vec<f64>,
    /// Super-diagonal, length `n - 1`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    /// The `n x n` zero matrix.
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    /// Dimension.
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    /// True for the empty matrix.
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j == i + 1 {
            self.upper[i]
        } else if i == j + 1 {
            self.lower[j]
        } else {
            0.0
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `A x` as a new vector.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Row sums, i.e. `A 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.len()])
    }

    /// Column sums, i.e. `1^T A`.
    pub fn column_sums(&self) -> Vec<f64> {
        let n = self.len();
        let mut s = self.diag.clone();
        for i in 0..n.saturating_sub(1) {
            s[i] += self.lower[i];
            s[i + 1] += self.upper[i];
        }
        s
    }

    /// Solves `A x = rhs` in place with the Thomas algorithm (no pivoting).
    ///
    /// `scratch` is resized as needed and can be reused across calls.
    pub fn solve_in_place(
        &self,
        rhs: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> Result<(), TridiagonalError> {
        let n = self.len();
        if rhs.len() != n {
            return Err(TridiagonalError::Dimension {
                matrix: n,
                vector: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(());
        }
        scratch.clear();
        scratch.resize(n, 0.0);

        let mut pivot = self.diag[0];
        check_pivot(0, pivot)?;
        rhs[0] /= pivot;
        for i in 1..n {
            scratch[i - 1] = self.upper[i - 1] / pivot;
            pivot = self.diag[i] - self.lower[i - 1] * scratch[i - 1];
            check_pivot(i, pivot)?;
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
        Ok(())
    }

    /// Solves `A x = rhs`, returning `x`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, TridiagonalError> {
        let mut x = rhs.to_vec();
        let mut scratch = Vec::new();
        self.solve_in_place(&mut x, &mut scratch)?;
        Ok(x)
    }
}

fn check_pivot(row: usize, pivot: f64) -> Result<(), TridiagonalError> {
    if pivot == 0.0 || !pivot.is_finite() {
        Err(TridiagonalError::ZeroPivot { row, pivot })
    } else {
        Ok(())
    }
}
