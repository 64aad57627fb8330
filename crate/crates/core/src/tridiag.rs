//! Tridiagonal operators on interior nodes and the Thomas solver.

use crate::error::{Error, Result};

/// Row `j` reads `lower[j] * u[j-1] + diag[j] * u[j] + upper[j] * u[j+1]`.
/// `lower[0]` and `upper[n-1]` are ignored (Dirichlet rows drop the boundary
/// couplings).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = self * u`
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.apply_add(1.0, u, &mut y);
        y
    }

    /// `y += alpha * self * u`
    pub fn apply_add(&self, alpha: f64, u: &[f64], y: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(u.len(), n);
        for j in 0..n {
            let mut s = self.diag[j] * u[j];
            if j > 0 {
                s += self.lower[j] * u[j - 1];
            }
            if j + 1 < n {
                s += self.upper[j] * u[j + 1];
            }
            y[j] += alpha * s;
        }
    }

    pub fn transpose(&self) -> Tridiag {
        let n = self.len();
        let mut t = Tridiag::zeros(n);
        t.diag.copy_from_slice(&self.diag);
        for j in 0..n {
            if j > 0 {
                t.lower[j] = self.upper[j - 1];
            }
            if j + 1 < n {
                t.upper[j] = self.lower[j + 1];
            }
        }
        t
    }

    /// `I + alpha * self`
    pub fn shifted_identity(&self, alpha: f64) -> Tridiag {
        Tridiag {
            lower: self.lower.iter().map(|v| alpha * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 + alpha * v).collect(),
            upper: self.upper.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Solve `self * x = rhs` in place by the Thomas algorithm.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Ok(());
        }
        let mut c = vec![0.0; n];
        let mut denom = self.diag[0];
        if !denom.is_finite() || denom.abs() < f64::MIN_POSITIVE {
            return Err(Error::Singular { row: 0 });
        }
        c[0] = if n > 1 { self.upper[0] / denom } else { 0.0 };
        rhs[0] /= denom;
        for j in 1..n {
            denom = self.diag[j] - self.lower[j] * c[j - 1];
            if !denom.is_finite() || denom.abs() < 1e-300 {
                return Err(Error::Singular { row: j });
            }
            c[j] = if j + 1 < n { self.upper[j] / denom } else { 0.0 };
            rhs[j] = (rhs[j] - self.lower[j] * rhs[j - 1]) / denom;
        }
        for j in (0..n - 1).rev() {
            rhs[j] -= c[j] * rhs[j + 1];
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { row: n - 1 });
        }
        Ok(())
    }
}
