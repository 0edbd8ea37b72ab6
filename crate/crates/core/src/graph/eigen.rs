//! Cyclic Jacobi eigenvalue solver for small dense symmetric matrices.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Real> DenseMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = v;
    }

    pub fn frobenius(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt()
    }

    fn off_diagonal_norm(&self) -> F {
        let mut acc = F::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let v = self.get(i, j);
                    acc = acc + v * v;
                }
            }
        }
        acc.sqrt()
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        (0..self.n)
            .map(|i| {
                (0..self.n).fold(F::zero(), |acc, j| acc + self.get(i, j) * v[j])
            })
            .collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, ascending.
///
/// Sweeps plane rotations over every off-diagonal pair until the
/// off-diagonal Frobenius norm falls below `tol·‖mat‖_F`. By Weyl's
/// inequality every returned eigenvalue is then within that bound of the
/// true spectrum.
pub fn eigenvalues_symmetric<F: Real>(mat: &DenseMatrix<F>, tol: F) -> Result<Vec<F>> {
    let n = mat.dim();
    let norm = mat.frobenius();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (mat.get(i, j) - mat.get(j, i)).abs();
            if gap > tol * norm.max(F::one()) {
                return Err(Error::NonSymmetric {
                    row: i,
                    col: j,
                    gap: gap.as_f64(),
                });
            }
        }
    }

    let mut a = mat.clone();
    // symmetrize exactly so rotations stay consistent
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (a.get(i, j) + a.get(j, i)) * F::lit(0.5);
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }

    let threshold = tol * norm;
    for _ in 0..MAX_SWEEPS {
        if a.off_diagonal_norm() <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }

    let mut values: Vec<F> = (0..n).map(|i| a.get(i, i)).collect();
    values.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(values)
}

/// Annihilates `a[p][q]` with a Jacobi rotation.
fn rotate<F: Real>(a: &mut DenseMatrix<F>, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == F::zero() {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (F::lit(2.0) * apq);
    let t = {
        let denom = theta.abs() + (theta * theta + F::one()).sqrt();
        let t = F::one() / denom;
        if theta < F::zero() {
            -t
        } else {
            t
        }
    };
    let c = F::one() / (t * t + F::one()).sqrt();
    let s = t * c;
    let n = a.dim();

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a.set(k, p, new_kp);
        a.set(p, k, new_kp);
        a.set(k, q, new_kq);
        a.set(q, k, new_kq);
    }
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, F::zero());
    a.set(q, p, F::zero());
}
