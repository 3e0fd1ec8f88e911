//! Dense symmetric linear algebra sized for covariance matrices.
//!
//! Everything is plain `Vec<f64>` row-major storage; the matrices here are a
//! few thousand rows at most. Cholesky carries the jitter policy used across
//! the crate: factor as-is first, then retry with relative diagonal jitter
//! 1e-12, 1e-10, 1e-8 (times the mean diagonal), and give up after that.
//! LU with partial pivoting is kept alongside as an arithmetically
//! independent route for determinants and solves.

use crate::error::{Error, Result};

/// Dense symmetric matrix, row-major, full storage.
#[derive(Clone, Debug)]
pub struct SymMat {
    n: usize,
    a: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.a[i * n + j] = v;
                m.a[j * n + i] = v;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
        self.a[j * self.n + i] = v;
    }

    pub fn mean_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum::<f64>() / self.n.max(1) as f64
    }

    /// Quadratic form u' A u.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.n);
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.a[i * self.n + j] * u[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    /// Leading principal submatrix of size k.
    pub fn leading(&self, k: usize) -> SymMat {
        assert!(k <= self.n);
        SymMat::from_fn(k, |i, j| self.get(i, j))
    }

    /// Cholesky factorization with the crate's jitter escalation policy.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let scale = self.mean_diag().abs();
        for &rel in &[0.0, 1e-12, 1e-10, 1e-8] {
            if let Some(l) = try_cholesky(self, rel * scale) {
                return Ok(Cholesky {
                    n: self.n,
                    l,
                    jitter: rel * scale,
                });
            }
        }
        Err(Error::numerical(
            "cholesky",
            format!(
                "matrix of size {} not positive definite after jitter up to {:.1e}",
                self.n,
                1e-8 * scale
            ),
        ))
    }

    /// Cholesky without jitter; fails on any non-PD pivot.
    pub fn cholesky_exact(&self) -> Result<Cholesky> {
        try_cholesky(self, 0.0)
            .map(|l| Cholesky {
                n: self.n,
                l,
                jitter: 0.0,
            })
            .ok_or_else(|| {
                Error::numerical("cholesky_exact", "matrix not positive definite")
            })
    }
}

fn try_cholesky(m: &SymMat, jitter: f64) -> Option<Vec<f64>> {
    let n = m.n;
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Lower-triangular Cholesky factor plus the jitter that was applied.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
    pub jitter: f64,
}

impl Cholesky {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// det(A) as the squared product of the factor diagonal.
    pub fn det(&self) -> f64 {
        (0..self.n).map(|i| self.l(i, i)).product::<f64>().powi(2)
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// y = L z for a standard normal vector z: one Gaussian sample.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += self.l[i * n + k] * z[k];
            }
            out[i] = acc;
        }
        out
    }

    /// Dense copy of the factor, row-major.
    pub fn factor_rows(&self) -> Vec<f64> {
        self.l.clone()
    }
}

/// LU decomposition with partial pivoting; the independent route.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    sign: f64,
}

pub fn lu_decompose(n: usize, a_row_major: &[f64]) -> Result<Lu> {
    assert_eq!(a_row_major.len(), n * n);
    let mut lu = a_row_major.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut sign = 1.0f64;
    for col in 0..n {
        let mut pivot_row = col;
        let mut best = lu[col * n + col].abs();
        for r in (col + 1)..n {
            let v = lu[r * n + col].abs();
            if v > best {
                best = v;
                pivot_row = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::numerical("lu", format!("singular at column {col}")));
        }
        if pivot_row != col {
            for k in 0..n {
                lu.swap(col * n + k, pivot_row * n + k);
            }
            piv.swap(col, pivot_row);
            sign = -sign;
        }
        let d = lu[col * n + col];
        for r in (col + 1)..n {
            let m = lu[r * n + col] / d;
            lu[r * n + col] = m;
            for k in (col + 1)..n {
                lu[r * n + k] -= m * lu[col * n + k];
            }
        }
    }
    Ok(Lu { n, lu, piv, sign })
}

impl Lu {
    pub fn det(&self) -> f64 {
        self.sign * (0..self.n).map(|i| self.lu[i * self.n + i]).product::<f64>()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// Multiply a flattened row-major tensor by a matrix along one axis.
///
/// `shape` gives the tensor extents (first axis slowest). The matrix is
/// `m x m` with `m == shape[axis]`, row-major. Returns the transformed
/// tensor in the same layout; this is the building block for Kronecker
/// sampling.
pub fn mode_multiply(data: &[f64], shape: &[usize], axis: usize, mat: &[f64]) -> Vec<f64> {
    let m = shape[axis];
    assert_eq!(mat.len(), m * m);
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    assert_eq!(data.len(), outer * m * inner);
    let mut out = vec![0.0f64; data.len()];
    for o in 0..outer {
        let base = o * m * inner;
        for i in 0..m {
            let row = &mat[i * m..(i + 1) * m];
            let dst = base + i * inner;
            for (j, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = base + j * inner;
                for k in 0..inner {
                    out[dst + k] += w * data[src + k];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_test_matrix(n: usize) -> SymMat {
        // A = B B' + n I with a fixed pseudo-random B.
        let mut state = 88172645463325252u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<f64> = (0..n * n).map(|_| next()).collect();
        SymMat::from_fn(n, |i, j| {
            let mut acc = if i == j { n as f64 } else { 0.0 };
            for k in 0..n {
                acc += b[i * n + k] * b[j * n + k];
            }
            acc
        })
    }

    #[test]
    fn cholesky_reconstructs_matrix() {
        let a = spd_test_matrix(12);
        let ch = a.cholesky().unwrap();
        assert_eq!(ch.jitter, 0.0);
        for i in 0..12 {
            for j in 0..12 {
                let mut acc = 0.0;
                for k in 0..12 {
                    acc += ch.l(i, k) * ch.l(j, k);
                }
                assert!((acc - a.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = spd_test_matrix(9);
        let ch = a.cholesky().unwrap();
        let b: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = ch.solve(&b);
        for i in 0..9 {
            let mut acc = 0.0;
            for j in 0..9 {
                acc += a.get(i, j) * x[j];
            }
            assert!((acc - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn jitter_escalation_recovers_semidefinite_matrix() {
        // Rank-1 Gram matrix is PSD but not PD.
        let v = [1.0, 2.0, 3.0];
        let a = SymMat::from_fn(3, |i, j| v[i] * v[j]);
        let ch = a.cholesky().unwrap();
        assert!(ch.jitter > 0.0 && ch.jitter <= 1e-8 * a.mean_diag() + 1e-30);
        assert!(a.cholesky_exact().is_err());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymMat::from_fn(2, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(a.cholesky().is_err());
    }

    #[test]
    fn lu_matches_cholesky_det_and_solve() {
        let a = spd_test_matrix(8);
        let ch = a.cholesky().unwrap();
        let flat: Vec<f64> = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j))
            .collect();
        let lu = lu_decompose(8, &flat).unwrap();
        let dc = ch.det();
        let dl = lu.det();
        assert!((dc - dl).abs() < 1e-9 * dc.abs());
        let b: Vec<f64> = (0..8).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let x1 = ch.solve(&b);
        let x2 = lu.solve(&b);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn lu_handles_permutation_heavy_matrix() {
        // Zero on the leading diagonal forces pivoting.
        let a = [0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0];
        let lu = lu_decompose(3, &a).unwrap();
        // det by cofactor expansion: 0*(0-1) - 1*(0-2) + 2*(1-0) = 4.
        assert!((lu.det() - 4.0).abs() < 1e-12);
        let x = lu.solve(&[3.0, 2.0, 3.0]);
        let b0 = 0.0 * x[0] + 1.0 * x[1] + 2.0 * x[2];
        let b1 = 1.0 * x[0] + 0.0 * x[1] + 1.0 * x[2];
        assert!((b0 - 3.0).abs() < 1e-12 && (b1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mode_multiply_matches_kronecker_action() {
        // Tensor 2x3, multiply along each axis, compare against the
        // explicit Kronecker product acting on the flattened vector.
        let a = [1.0, 2.0, 0.5, -1.0]; // 2x2
        let b = [0.0, 1.0, 2.0, 1.5, -0.5, 1.0, 0.3, 0.2, 0.1]; // 3x3
        let x: Vec<f64> = (0..6).map(|i| i as f64 + 1.0).collect();
        let y = mode_multiply(&x, &[2, 3], 0, &a);
        let z = mode_multiply(&y, &[2, 3], 1, &b);
        // Kronecker with first axis slowest: (A kron B)[(i1 i2),(j1 j2)].
        let mut want = vec![0.0; 6];
        for i1 in 0..2 {
            for i2 in 0..3 {
                for j1 in 0..2 {
                    for j2 in 0..3 {
                        want[i1 * 3 + i2] += a[i1 * 2 + j1] * b[i2 * 3 + j2] * x[j1 * 3 + j2];
                    }
                }
            }
        }
        for (u, v) in z.iter().zip(&want) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn quad_form_matches_direct_sum() {
        let a = spd_test_matrix(5);
        let u = [0.3, -1.2, 0.8, 0.05, 2.0];
        let mut want = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                want += u[i] * a.get(i, j) * u[j];
            }
        }
        assert!((a.quad_form(&u) - want).abs() < 1e-12 * want.abs());
    }
}
