//! Small dense complex linear algebra: column-major matrices and a one-sided
//! Jacobi SVD. Matrices in this crate are at most a few tens of rows, so
//! nothing here is blocked or vectorised.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

/// Dense complex matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(rows: usize, columns: &[&[Complex<T>]]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[Complex<T>] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [Complex<T>] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex<T>]> {
        // chunks_exact panics on a zero chunk size
        let rows = self.rows.max(1);
        self.data.chunks_exact(rows).take(self.cols)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            for k in 0..self.cols {
                let b = rhs[(k, j)];
                if b.is_zero() {
                    continue;
                }
                let a = self.column(k);
                let o = out.column_mut(j);
                for i in 0..a.len() {
                    o[i] = o[i] + a[i] * b;
                }
            }
        }
        out
    }

    /// `selfᴴ · rhs` without materialising the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "row dimension mismatch");
        Self::from_fn(self.cols, rhs.cols, |i, j| dot(self.column(i), rhs.column(j)))
    }

    pub fn mul_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![Complex::zero(); self.rows];
        for (col, &x) in self.columns().zip(v) {
            for (o, &a) in out.iter_mut().zip(col) {
                *o = *o + a * x;
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }
}

impl<T> std::ops::Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[j * self.rows + i]
    }
}

/// Hermitian inner product `⟨a, b⟩ = aᴴ b`.
pub fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Thin SVD `A = V · diag(σ) · Wᴴ` of an `m × n` matrix with `n ≤ m`.
#[derive(Clone, Debug)]
pub struct ThinSvd<T> {
    /// `m × n`, orthonormal columns.
    pub left: CMatrix<T>,
    /// Descending, nonnegative.
    pub singular_values: Vec<T>,
    /// `n × n` unitary right factor `W` (not its adjoint).
    pub right: CMatrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of `A` are rotated pairwise until mutually orthogonal; the same
/// rotations accumulated into `W` give `A·W = V·Σ`. Left vectors belonging
/// to zero singular values are completed to an orthonormal set, and every
/// left vector is phase-normalised so that its first non-negligible entry is
/// real and positive.
pub fn thin_svd<T: Real>(a: &CMatrix<T>) -> ThinSvd<T> {
    let (m, n) = (a.rows(), a.cols());
    assert!(n <= m, "thin_svd expects at least as many rows as columns");
    let mut work = a.clone();
    let mut w = CMatrix::<T>::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(work.column(p));
                let beta = norm_sqr(work.column(q));
                let gamma = dot(work.column(p), work.column(q));
                let g = gamma.norm();
                if g <= eps * (alpha * beta).sqrt() || g == T::zero() {
                    continue;
                }
                rotated = true;
                // Rotate q by the phase of gamma so the pair coupling is real.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (g + g);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut work, p, q, c, s, phase);
                rotate_columns(&mut w, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, norm_sqr(work.column(j)).sqrt())).collect();
    // stable sort keeps the original column order among equal values
    order.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal));

    let scale = order.first().map(|o| o.1).unwrap_or(T::zero()).max(T::one());
    let rank_tol = T::of_usize(m.max(n)) * eps * scale * T::of(16.0);

    let mut left = CMatrix::zeros(m, n);
    let mut right = CMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (dst, &(src, s)) in order.iter().enumerate() {
        right.column_mut(dst).copy_from_slice(w.column(src));
        if s > rank_tol {
            let inv = T::one() / s;
            for (o, x) in left.column_mut(dst).iter_mut().zip(work.column(src)) {
                *o = x.scale(inv);
            }
            sigma.push(s);
        } else {
            sigma.push(T::zero());
            deficient.push(dst);
        }
    }
    complete_basis(&mut left, &deficient);

    for j in 0..n {
        if let Some(pivot) = first_significant(left.column(j)) {
            let unit = pivot / pivot.norm();
            let conj = unit.conj();
            for x in left.column_mut(j) {
                *x = *x * conj;
            }
            // keep V Σ Wᴴ unchanged: column j of W picks up the same factor
            for x in right.column_mut(j) {
                *x = *x * conj;
            }
        }
    }

    ThinSvd {
        left,
        singular_values: sigma,
        right,
    }
}

/// Singular values only, descending.
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    if a.cols() <= a.rows() {
        thin_svd(a).singular_values
    } else {
        thin_svd(&a.adjoint()).singular_values
    }
}

fn rotate_columns<T: Real>(m: &mut CMatrix<T>, p: usize, q: usize, c: T, s: T, phase: Complex<T>) {
    let rows = m.rows();
    let conj = phase.conj();
    for i in 0..rows {
        let ap = m[(i, p)];
        let aq = m[(i, q)] * conj;
        m[(i, p)] = ap.scale(c) - aq.scale(s);
        m[(i, q)] = (ap.scale(s) + aq.scale(c)) * phase;
    }
}

fn first_significant<T: Real>(v: &[Complex<T>]) -> Option<Complex<T>> {
    let tol = T::of(1e-8) * norm_sqr(v).sqrt();
    v.iter().copied().find(|z| z.norm() > tol)
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all other
/// columns, via Gram–Schmidt against the standard basis.
fn complete_basis<T: Real>(left: &mut CMatrix<T>, deficient: &[usize]) {
    let m = left.rows();
    let mut filled: Vec<usize> = (0..left.cols()).filter(|j| !deficient.contains(j)).collect();
    let mut candidate = 0;
    for &j in deficient {
        while candidate < m {
            let mut v = vec![Complex::<T>::zero(); m];
            v[candidate] = Complex::one();
            candidate += 1;
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for &k in &filled {
                    let c = dot(left.column(k), &v);
                    for (x, b) in v.iter_mut().zip(left.column(k)) {
                        *x = *x - b * c;
                    }
                }
            }
            let nrm = norm_sqr(&v).sqrt();
            if nrm > T::of(1e-6) {
                let inv = T::one() / nrm;
                for (o, x) in left.column_mut(j).iter_mut().zip(&v) {
                    *o = x.scale(inv);
                }
                filled.push(j);
                break;
            }
        }
    }
}
