//! Dense complex matrices for one- and two-qubit operators.
//!
//! Only dimensions 2 and 4 are supported. Everything here is small enough
//! that straightforward loops beat any BLAS call, including the Hermitian
//! eigensolver, which is a cyclic complex Jacobi iteration.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{contract, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Off-diagonal Frobenius mass, relative to the full norm, at which the
/// Jacobi sweeps stop.
pub const EIGEN_TOLERANCE: f64 = 1e-12;
const MAX_JACOBI_SWEEPS: usize = 64;

/// Row-major square complex matrix of dimension 2 or 4.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 4 {
        Ok(())
    } else {
        Err(contract(format!("matrix dimension must be 2 or 4, got {dim}")))
    }
}

impl ComplexMatrix {
    /// # Panics
    /// If `dim` is not 2 or 4.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 4, "matrix dimension must be 2 or 4");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be 4 or 16.
    pub fn from_row_major(entries: Vec<Complex64>) -> Result<Self> {
        let dim = match entries.len() {
            4 => 2,
            16 => 4,
            n => return Err(contract(format!("expected 4 or 16 entries, got {n}"))),
        };
        Ok(Self { dim, data: entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        check_dim(dim)?;
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(contract(format!(
                "row {i} has {} entries, expected {dim}",
                r.len()
            )));
        }
        Ok(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(contract("outer product of vectors with different lengths"));
        }
        check_dim(a.len())?;
        Ok(Self::from_fn(a.len(), |i, j| a[i] * b[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Kronecker product of two 2×2 matrices; `self` is the slow index.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        if self.dim != 2 || other.dim != 2 {
            return Err(contract("kron is defined for two 2×2 factors"));
        }
        Ok(Self::from_fn(4, |i, j| {
            self[(i / 2, j / 2)] * other[(i % 2, j % 2)]
        }))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest deviation |A_ij − conj(A_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Eigenvalues in ascending order. The matrix is assumed Hermitian; only
    /// its Hermitian part is used.
    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        self.eigh().0
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Returns ascending eigenvalues and the matching eigenvectors
    /// as the columns of a unitary matrix.
    pub fn eigh(&self) -> (Vec<f64>, Self) {
        let n = self.dim;
        let mut a = self.hermitian_part();
        let mut v = Self::identity(n);
        // One extra sweep after the tolerance is met; convergence is quadratic,
        // so this reaches working precision.
        let mut polished = false;

        for _ in 0..MAX_JACOBI_SWEEPS {
            let total = a.frobenius_norm();
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off == 0.0 || (off <= EIGEN_TOLERANCE * total && polished) {
                break;
            }
            polished = off <= EIGEN_TOLERANCE * total;
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, |r, c| v[(r, order[c])]);
        (values, vectors)
    }

    /// f(A) for Hermitian A, applied through the spectral decomposition.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigh();
        let n = self.dim;
        Self::from_fn(n, |i, j| {
            (0..n)
                .map(|k| vecs[(i, k)] * f(vals[k]) * vecs[(j, k)].conj())
                .sum()
        })
    }
}

/// One complex Jacobi step zeroing a[p][q]. The rotation is U = D·R with
/// D a phase on index q making a[p][q] real and R a real Givens rotation;
/// a ← U†·a·U and v ← v·U.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let n = a.dim;
    let b = a[(p, q)];
    let mag = b.norm();
    if mag < f64::MIN_POSITIVE {
        return;
    }
    let phase = b / mag;
    let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let pc = phase.conj();

    // a ← a·U
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * s * pc;
        a[(k, q)] = akp * s + akq * c * pc;
    }
    // a ← U†·a
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * s * phase;
        a[(q, k)] = apk * s + aqk * c * phase;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * s * pc;
        v[(k, q)] = vkp * s + vkq * c * pc;
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let n = self.dim;
        ComplexMatrix::from_fn(n, |i, j| (0..n).map(|k| self[(i, k)] * rhs[(k, j)]).sum())
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for row in self.data.chunks(self.dim) {
            write!(f, "  ")?;
            for z in row {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ComplexMatrix::from_row_major(vec![ZERO; 9]).is_err());
        assert!(ComplexMatrix::from_rows(&vec![vec![ONE; 3]; 3]).is_err());
        assert!(ComplexMatrix::from_rows(&[vec![ONE; 2], vec![ONE; 3]]).is_err());
    }

    #[test]
    fn kron_puts_first_factor_on_slow_index() {
        let x = ComplexMatrix::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]]).unwrap();
        let i = ComplexMatrix::identity(2);
        let xi = x.kron(&i).unwrap();
        // X ⊗ I maps |00⟩ → |10⟩, i.e. column 0 has its 1 in row 2.
        assert_eq!(xi[(2, 0)], ONE);
        assert_eq!(xi[(1, 0)], ZERO);
    }

    #[test]
    fn eigh_of_pauli_y() {
        let y = ComplexMatrix::from_rows(&[vec![ZERO, c(0.0, -1.0)], vec![c(0.0, 1.0), ZERO]])
            .unwrap();
        let (vals, vecs) = y.eigh();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        let rebuilt = &(&vecs * &ComplexMatrix::from_fn(2, |i, j| {
            if i == j {
                c(vals[i], 0.0)
            } else {
                ZERO
            }
        })) * &vecs.adjoint();
        assert!(rebuilt.max_abs_diff(&y) < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_generic_hermitian_4x4() {
        let m = ComplexMatrix::from_fn(4, |i, j| {
            let (a, b) = (i as f64, j as f64);
            if i == j {
                c(1.0 + a * a, 0.0)
            } else if i < j {
                c(0.3 * (a + 1.0) - 0.1 * b, 0.2 * b - 0.05 * a)
            } else {
                c(0.3 * (b + 1.0) - 0.1 * a, -(0.2 * a - 0.05 * b))
            }
        });
        assert!(m.hermiticity_defect() < 1e-15);
        let (vals, vecs) = m.eigh();
        let unitary_defect = (&vecs.adjoint() * &vecs).max_abs_diff(&ComplexMatrix::identity(4));
        assert!(unitary_defect < 1e-13);
        let diag = ComplexMatrix::from_fn(4, |i, j| if i == j { c(vals[i], 0.0) } else { ZERO });
        let rebuilt = &(&vecs * &diag) * &vecs.adjoint();
        let err = rebuilt.max_abs_diff(&m);
        assert!(err < 1e-12, "{err}");
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let trace_sum: f64 = vals.iter().sum();
        assert!((trace_sum - m.trace().re).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spectrum_converges() {
        let m = ComplexMatrix::identity(4).scale_real(0.25);
        let vals = m.eigenvalues_hermitian();
        assert!(vals.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hermitian_function_square_root() {
        let m = ComplexMatrix::from_rows(&[vec![c(2.0, 0.0), c(0.0, 1.0)], vec![c(0.0, -1.0), c(2.0, 0.0)]])
            .unwrap();
        let r = m.hermitian_function(f64::sqrt);
        assert!((&r * &r).max_abs_diff(&m) < 1e-13);
    }
}
