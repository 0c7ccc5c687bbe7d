//! Small dense complex matrices for pointwise tensor algebra.
//!
//! Every supported model has complex dimension 1 or 2, so matrices are
//! stored inline as `[Complex64; 4]` (row-major, only the leading `n × n`
//! block is meaningful) and curvature tensors as `[Complex64; 16]`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// An `n × n` complex matrix with `n ≤ 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    a: [Complex64; 4],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "matrix dimension {n} unsupported");
        Mat { n, a: [ZERO; 4] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Mat::identity(n).scale(s)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds a matrix from row-major entries; `rows.len()` must be 1 or 4.
    pub fn from_rows(rows: &[Complex64]) -> Self {
        match rows.len() {
            1 => Mat::from_fn(1, |_, _| rows[0]),
            4 => Mat::from_fn(2, |i, j| rows[2 * i + j]),
            k => panic!("cannot build a square matrix from {k} entries"),
        }
    }

    /// `x ⊗ ȳ`, i.e. entries `x_i conj(y_j)`.
    pub fn outer_conj(x: &[Complex64], y: &[Complex64]) -> Self {
        Mat::from_fn(x.len(), |i, j| x[i] * y[j].conj())
    }

    /// `x ⊗ y` without conjugation.
    pub fn outer(x: &[Complex64], y: &[Complex64]) -> Self {
        Mat::from_fn(x.len(), |i, j| x[i] * y[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[2 * i + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[2 * i + j] = v;
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Mat::from_fn(self.n, |i, j| f(self.get(i, j)))
    }

    pub fn adjoint(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.get(i, j).norm());
            }
        }
        m
    }

    /// Largest entrywise deviation from `M = M*`.
    pub fn hermitian_defect(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Largest entrywise deviation from `M = Mᵀ`.
    pub fn symmetric_defect(&self) -> f64 {
        (*self - self.transpose()).max_abs()
    }

    pub fn inverse(&self) -> Option<Self> {
        match self.n {
            1 => {
                let d = self.get(0, 0);
                (d.norm() > 0.0).then(|| Mat::from_fn(1, |_, _| d.inv()))
            }
            _ => {
                let det = self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0);
                if det.norm() == 0.0 {
                    return None;
                }
                let inv = det.inv();
                Some(Mat::from_rows(&[
                    self.get(1, 1) * inv,
                    -self.get(0, 1) * inv,
                    -self.get(1, 0) * inv,
                    self.get(0, 0) * inv,
                ]))
            }
        }
    }

    pub fn determinant(&self) -> Complex64 {
        match self.n {
            1 => self.get(0, 0),
            _ => self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0),
        }
    }

    /// `w* M w`.
    pub fn quadratic_form(&self, w: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += w[i].conj() * self.get(i, j) * w[j];
            }
        }
        acc
    }

    /// Eigenvalues `(λ_min, λ_max)` of the Hermitian part, in closed form.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        match self.n {
            1 => {
                let v = self.get(0, 0).re;
                (v, v)
            }
            _ => {
                let a = self.get(0, 0).re;
                let d = self.get(1, 1).re;
                let b = 0.5 * (self.get(0, 1) + self.get(1, 0).conj());
                let mean = 0.5 * (a + d);
                let half_gap = 0.5 * (a - d);
                let disc = (half_gap * half_gap + b.norm_sqr()).sqrt();
                (mean - disc, mean + disc)
            }
        }
    }

    /// Smallest eigenvalue of a Hermitian matrix.
    ///
    /// Fails when the matrix deviates from Hermitian by more than
    /// `1e-10` relative to its size.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let defect = self.hermitian_defect();
        if defect > 1e-10 * self.max_abs().max(1.0) {
            return Err(Error::Consistency(format!(
                "matrix is not Hermitian (defect {defect:e})"
            )));
        }
        Ok(self.hermitian_eigenvalues().0)
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let mut out = self;
        for k in 0..4 {
            out.a[k] += rhs.a[k];
        }
        out
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let mut out = self;
        for k in 0..4 {
            out.a[k] -= rhs.a[k];
        }
        out
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        *self = *self + rhs;
    }
}

impl SubAssign for Mat {
    fn sub_assign(&mut self, rhs: Mat) {
        *self = *self - rhs;
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        Mat::from_fn(self.n, |i, j| {
            (0..self.n).map(|k| self.get(i, k) * rhs.get(k, j)).sum()
        })
    }
}

/// Components `R_{i j̄ k l̄}` of a Kähler curvature tensor at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor4 {
    n: usize,
    a: [Complex64; 16],
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n));
        Tensor4 { n, a: [ZERO; 16] }
    }

    #[inline]
    fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * 2 + j) * 2 + k) * 2 + l
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.a[Self::idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: Complex64) {
        self.a[Self::idx(i, j, k, l)] = v;
    }

    /// `R(v, v̄, w, w̄)`.
    pub fn bisectional(&self, v: &[Complex64], w: &[Complex64]) -> f64 {
        let n = self.n;
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += self.get(i, j, k, l) * v[i] * v[j].conj() * w[k] * w[l].conj();
                    }
                }
            }
        }
        acc.re
    }

    /// `Σ R_{i j̄ x ȳ} g^{x s̄} g^{p ȳ} A_{p s̄}`: the curvature acting on a
    /// (1,1)-tensor through both of its slots.
    pub fn act(&self, ginv: &Mat, a: &Mat) -> Mat {
        let n = self.n;
        // B_{x ȳ}^{raised} = g^{x s̄} A_{p s̄} g^{p ȳ}, built as ginvᵀ-contracted.
        let raised = Mat::from_fn(n, |y, x| {
            let mut acc = ZERO;
            for p in 0..n {
                for s in 0..n {
                    acc += ginv.get(x, s) * ginv.get(p, y) * a.get(p, s);
                }
            }
            acc
        });
        Mat::from_fn(n, |i, j| {
            let mut acc = ZERO;
            for x in 0..n {
                for y in 0..n {
                    acc += self.get(i, j, x, y) * raised.get(y, x);
                }
            }
            acc
        })
    }

    /// Contraction `g^{k l̄} R_{i j̄ k l̄}`.
    pub fn ricci_trace(&self, ginv: &Mat) -> Mat {
        let n = self.n;
        Mat::from_fn(n, |i, j| {
            let mut acc = ZERO;
            for k in 0..n {
                for l in 0..n {
                    acc += ginv.get(k, l) * self.get(i, j, k, l);
                }
            }
            acc
        })
    }

    /// Worst violation of the Kähler symmetries `i↔k`, `j̄↔l̄`, pair swap
    /// and conjugation `conj(R_{i j̄ k l̄}) = R_{j ī l k̄}`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r - self.get(k, j, i, l)).norm())
                            .max((r - self.get(i, l, k, j)).norm())
                            .max((r - self.get(k, l, i, j)).norm())
                            .max((r.conj() - self.get(j, i, l, k)).norm());
                    }
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert_eq!(Mat::zeros(1).min_eigenvalue().unwrap(), 0.0);
        let m = Mat::from_rows(&[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        assert!((m.min_eigenvalue().unwrap() - 1.0).abs() < 1e-15);
        let d = Mat::from_rows(&[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(5.0, 0.0)]);
        assert_eq!(d.min_eigenvalue().unwrap(), 3.0);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let m = Mat::from_rows(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(m.min_eigenvalue(), Err(Error::Consistency(_))));
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        let m = Mat::from_rows(&[c(1.5, 0.0), c(0.3, -0.7), c(0.3, 0.7), c(-0.2, 0.0)]);
        let (lo, hi) = m.hermitian_eigenvalues();
        for lam in [lo, hi] {
            let shifted = m - Mat::scaled_identity(2, lam);
            assert!(shifted.determinant().norm() < 1e-13);
        }
        assert!((lo + hi - m.trace().re).abs() < 1e-14);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat::from_rows(&[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(3.0, 0.0)]);
        let p = m * m.inverse().unwrap();
        assert!((p - Mat::identity(2)).max_abs() < 1e-15);
    }
}
