//! Small dense complex linear-algebra helpers shared by the solvers.
//!
//! Everything here works on Hermitian positive-definite matrices of modest
//! size (a handful of antennas), so plain dense factorizations are used.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `(A + A^H) / 2`, used before factorizations to wipe roundoff asymmetry.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.is_square() && (a - a.adjoint()).iter().all(|z| z.norm() <= tol)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Lower Cholesky factor `L L^H = A` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct HpdFactor {
    l: CMat,
}

impl HpdFactor {
    /// Fails unless every pivot is strictly positive. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &CMat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::Dimension(format!("cannot factor a {:?} matrix", a.shape())));
        }
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = real(djj);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &CMat {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &CVec) -> CVec {
        let n = self.l.nrows();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> CMat {
        let n = self.l.nrows();
        let mut inv = CMat::zeros(n, n);
        for j in 0..n {
            let mut e = CVec::zeros(n);
            e[j] = ONE;
            inv.set_column(j, &self.solve(&e));
        }
        hermitian_part(&inv)
    }
}

pub fn cholesky(a: &CMat) -> Result<HpdFactor> {
    HpdFactor::new(&hermitian_part(a))
}

/// `log |A|` for Hermitian positive-definite `A`, as twice the sum of the
/// log-diagonal of its Cholesky factor.
pub fn log_det_hpd(a: &CMat) -> Result<f64> {
    Ok(cholesky(a)?.log_det())
}

pub fn inverse_hpd(a: &CMat) -> Result<CMat> {
    Ok(cholesky(a)?.inverse())
}

/// `x^H A y`.
pub fn sesqui(a: &CMat, x: &CVec, y: &CVec) -> C64 {
    x.dotc(&(a * y))
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `h h^H`.
pub fn outer(h: &CVec) -> CMat {
    h * h.adjoint()
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

/// Largest absolute imaginary part tolerated when a quantity is real by
/// construction.
pub const IMAG_TOL: f64 = 1e-12;

/// Drops the imaginary part of a quantity that must be real, asserting that
/// the residue is roundoff relative to its magnitude.
pub fn real_part_checked(z: C64) -> f64 {
    debug_assert!(
        z.im.abs() <= IMAG_TOL * (1.0 + z.re.abs()) * 1e3,
        "imaginary residue {} on a real quantity {}",
        z.im,
        z.re
    );
    z.re
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean projection onto `{x >= 0, sum x <= budget}`.
pub fn project_capped_simplex(x: &[f64], budget: f64) -> Vec<f64> {
    let clamped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= budget {
        return clamped;
    }
    // Projection onto the simplex {x >= 0, sum x = budget}.
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - budget) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}
