//! Small dense symmetric matrices and a cyclic Jacobi eigensolver.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics if `rows` is not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// `self += alpha * v v^T`
    pub fn add_outer(&mut self, alpha: f64, v: &[f64]) {
        assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self[(i, j)] += alpha * v[i] * v[j];
            }
        }
    }

    /// Block diagonal `I_k (x) self`.
    pub fn kron_identity(&self, k: usize) -> SymMatrix {
        let n = self.n;
        let mut m = SymMatrix::zeros(n * k);
        for blk in 0..k {
            for i in 0..n {
                for j in 0..n {
                    m[(blk * n + i, blk * n + j)] = self[(i, j)];
                }
            }
        }
        m
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += v[i] * self[(i, j)] * v[j];
            }
        }
        s
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SymMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigenvalues (ascending) and matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Eigen {
    pub fn min(&self) -> (f64, &[f64]) {
        (self.values[0], &self.vectors[0])
    }
}

/// Cyclic Jacobi rotation sweeps until the off-diagonal mass is negligible.
pub fn jacobi_eigen(m: &SymMatrix) -> Eigen {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = SymMatrix::identity(n);
    let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    Eigen {
        values: order.iter().map(|&i| a[(i, i)]).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v[(k, i)]).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal() {
        let m = SymMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -1.0]]);
        let e = jacobi_eigen(&m);
        assert_eq!(e.values, vec![-1.0, 3.0]);
    }

    #[test]
    fn rank_one_update() {
        // 0.51 I_4 - 1/2 s s^T with |s|^2 = 2: eigenvalues 0.51 (x3) and -0.49.
        let mut m = SymMatrix::identity(4);
        for i in 0..4 {
            m[(i, i)] = 0.51;
        }
        let s = [1.0, 0.0, 0.0, 1.0];
        m.add_outer(-0.5, &s);
        let e = jacobi_eigen(&m);
        assert!((e.values[0] + 0.49).abs() < 1e-12);
        for v in &e.values[1..] {
            assert!((v - 0.51).abs() < 1e-12);
        }
        let (_, vec) = e.min();
        let cos = vec.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / 2f64.sqrt();
        assert!(cos.abs() > 1.0 - 1e-12);
    }

    fn sym(n: usize) -> impl Strategy<Value = SymMatrix> {
        prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |d| {
            let mut m = SymMatrix::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let v = d[i * n + j];
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn eigenpairs_reconstruct(m in (1usize..9).prop_flat_map(sym)) {
            let e = jacobi_eigen(&m);
            let n = m.dim();
            for (lam, v) in e.values.iter().zip(&e.vectors) {
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-10);
                for i in 0..n {
                    let mv: f64 = (0..n).map(|j| m[(i, j)] * v[j]).sum();
                    prop_assert!((mv - lam * v[i]).abs() < 1e-9);
                }
            }
            // the minimum eigenvalue bounds every Rayleigh quotient from below
            let ones = vec![1.0 / (n as f64).sqrt(); n];
            prop_assert!(m.quad_form(&ones) >= e.values[0] - 1e-10);
        }
    }
}
