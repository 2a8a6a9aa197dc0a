//! Small dense linear algebra: just enough for normal equations and
//! eigen-decompositions of estimated correlation matrices.

use crate::error::{Error, Result};

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    pub dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] = 0.5 * (self[(i, j)] + self[(j, i)]);
            }
        }
        out
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Solve `a x = b` by LU with partial pivoting. `a` is consumed.
pub fn solve(mut a: SquareMatrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.dim;
    if b.len() != n {
        return Err(Error::invalid("solve: dimension mismatch"));
    }
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[(row, col)].abs() > a[(pivot, col)].abs() {
                pivot = row;
            }
        }
        let p = a[(pivot, col)];
        if !p.is_finite() || p.abs() < 1e-300 {
            return Err(Error::numeric(format!(
                "singular normal equations: pivot {:.3e} at column {}",
                p, col
            )));
        }
        if pivot != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let factor = a[(row, col)] / a[(col, col)];
            if factor != 0.0 {
                for j in col..n {
                    a[(row, j)] -= factor * a[(col, j)];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[(row, j)] * x[j];
        }
        x[row] = acc / a[(row, row)];
        if !x[row].is_finite() {
            return Err(Error::numeric("solve produced a non-finite coordinate"));
        }
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` where column `k` of the returned
/// matrix is the eigenvector for `eigenvalues[k]`. Eigenvalues are sorted
/// ascending.
pub fn jacobi_eigen(m: &SquareMatrix) -> (Vec<f64>, SquareMatrix) {
    let n = m.dim;
    let mut a = m.symmetrized();
    let mut v = SquareMatrix::identity(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, new_col)] = v[(row, old_col)];
        }
    }
    (values, vectors)
}

/// Symmetric square root `V diag(sqrt(max(lambda, 0))) V^T`.
pub fn symmetric_sqrt(m: &SquareMatrix) -> SquareMatrix {
    let n = m.dim;
    let (values, vectors) = jacobi_eigen(m);
    let roots: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += vectors[(i, k)] * roots[k] * vectors[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_2x2() {
        let a = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = solve(a, vec![5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(solve(a, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn jacobi_recovers_spectrum() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 1.2], vec![1.2, 1.0]]);
        let (values, vectors) = jacobi_eigen(&m);
        assert!((values[0] - (-0.2)).abs() < 1e-10);
        assert!((values[1] - 2.2).abs() < 1e-10);
        // Reconstruct and compare.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += vectors[(i, k)] * values[k] * vectors[(j, k)];
                }
                assert!((acc - m[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let m = SquareMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let r = symmetric_sqrt(&m);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += r[(i, k)] * r[(k, j)];
                }
                assert!((acc - m[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
