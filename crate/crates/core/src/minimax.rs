//! Minimization of the pointwise maximum of a few convex quadratics.
//!
//! The zero-forcing steering update minimizes
//! `max_l (1/gamma_l) tr(T T^H Phi_l)` over the complex matrix `B`, with `T`
//! affine in `B`. Flattening `B` to real coordinates turns every term into a
//! real convex quadratic `x^T P x + 2 l^T x + c`. The max is minimized by a
//! log-sum-exp continuation, then polished by Newton's method on the
//! optimality system of the active forms.
//!
//! Every result carries a Lagrangian certificate: for multipliers `theta` on
//! the simplex, `min_x sum_l theta_l f_l(x)` is a lower bound on the optimum,
//! so `max_l f_l(x) - bound` is a certified gap.

use nalgebra::{SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, CMat, RMat, RVec, C64};
use crate::problem::ChannelSet;

/// Asymmetry and negative curvature tolerated in a kernel, relative to its
/// largest entry.
const KERNEL_TOL: f64 = 1e-10;
const SMOOTH_SHRINK: f64 = 0.2;
const MAX_NEWTON_PER_STAGE: usize = 100;
const MAX_POLISH: usize = 30;

/// `f(x) = x^T P x + 2 l^T x + c` with symmetric PSD `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub kernel: RMat,
    pub linear: RVec,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn new(kernel: RMat, linear: RVec, constant: f64) -> Result<Self> {
        let n = linear.len();
        if kernel.shape() != (n, n) {
            return Err(Error::Dimension(format!("kernel {:?} for a linear term of length {n}", kernel.shape())));
        }
        let scale = kernel.amax().max(1.0);
        if (&kernel - kernel.transpose()).amax() > KERNEL_TOL * scale {
            return Err(Error::InvalidConfig("quadratic kernel is not symmetric".into()));
        }
        let kernel = (&kernel + kernel.transpose()) * 0.5;
        if n > 0 && SymmetricEigen::new(kernel.clone()).eigenvalues.min() < -KERNEL_TOL * scale {
            return Err(Error::InvalidConfig("quadratic kernel is not positive semidefinite".into()));
        }
        Ok(Self { kernel, linear, constant })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval(&self, x: &RVec) -> f64 {
        x.dot(&(&self.kernel * x)) + 2.0 * self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &RVec) -> RVec {
        (&self.kernel * x + &self.linear) * 2.0
    }
}

/// Stacks the columns of `b` as `[Re b_k; Im b_k]`.
pub fn flatten(b: &CMat) -> RVec {
    let n = b.nrows();
    let mut x = RVec::zeros(2 * n * b.ncols());
    for k in 0..b.ncols() {
        for i in 0..n {
            x[2 * n * k + i] = b[(i, k)].re;
            x[2 * n * k + n + i] = b[(i, k)].im;
        }
    }
    x
}

/// Inverse of [`flatten`] for an `rows x cols` matrix.
pub fn unflatten(x: &RVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(x.len(), 2 * rows * cols, "flattened length does not match {rows}x{cols}");
    CMat::from_fn(rows, cols, |i, k| C64::new(x[2 * rows * k + i], x[2 * rows * k + rows + i]))
}

/// One form per constraint: `f_l(B) = (1/gamma_l) tr(T T^H Phi_l)` with
/// `T = G diag(a) + Uperp B`, over the flattened `B`.
///
/// Per user `t_k^H Phi t_k = |a_k|^2 g_k^H Phi g_k + 2 Re(d_k^H b_k) +
/// b_k^H Q b_k` with `Q = Uperp^H Phi Uperp` and `d_k = Uperp^H Phi g_k a_k`.
/// For `Q = R + iS` the real kernel of `b = x + iy` is `[[R, -S], [S, R]]`.
pub fn assemble_forms(
    ch: &ChannelSet,
    cs: &crate::problem::ConstraintSet,
    g: &CMat,
    a: &[C64],
    uperp: &CMat,
) -> Result<Vec<QuadraticForm>> {
    let (m, k) = (ch.antennas(), ch.users());
    if g.shape() != (m, k) || a.len() != k || uperp.nrows() != m || cs.antennas().is_some_and(|n| n != m) {
        return Err(Error::Dimension(format!(
            "G {:?}, {} coefficients and Uperp {:?} for a {m}x{k} channel",
            g.shape(),
            a.len(),
            uperp.shape()
        )));
    }
    let n = uperp.ncols();
    cs.constraints()
        .iter()
        .enumerate()
        .map(|(index, c)| {
            if !(c.budget > 0.0) {
                return Err(Error::InvalidConstraint { index, reason: "a zero budget has no normalized usage".into() });
            }
            let inv = 1.0 / c.budget;
            let q = uperp.adjoint() * &c.phi * uperp * C64::new(inv, 0.0);
            let mut kernel = RMat::zeros(2 * n * k, 2 * n * k);
            let mut linear = RVec::zeros(2 * n * k);
            let mut constant = 0.0;
            for user in 0..k {
                let t0 = g.column(user) * a[user];
                let phi_t0 = &c.phi * &t0;
                constant += t0.dotc(&phi_t0).re * inv;
                let d = uperp.adjoint() * phi_t0 * C64::new(inv, 0.0);
                let o = 2 * n * user;
                for i in 0..n {
                    linear[o + i] = d[i].re;
                    linear[o + n + i] = d[i].im;
                    for j in 0..n {
                        let z = q[(i, j)];
                        kernel[(o + i, o + j)] = z.re;
                        kernel[(o + n + i, o + n + j)] = z.re;
                        kernel[(o + i, o + n + j)] = -z.im;
                        kernel[(o + n + i, o + j)] = z.im;
                    }
                }
            }
            QuadraticForm::new(kernel, linear, constant)
        })
        .collect()
}

/// Convex multipliers certifying a minimax point.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `theta >= 0`, `sum theta = 1`.
    pub theta: Vec<f64>,
    /// `min_x sum_l theta_l f_l(x)`, a lower bound on the optimal value.
    pub lower_bound: f64,
    /// `max_l f_l(x) - lower_bound`.
    pub gap: f64,
    /// `|| sum_l theta_l grad f_l(x) ||_inf`.
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSolution {
    pub x: RVec,
    /// `max_l f_l(x)`.
    pub value: f64,
    pub certificate: Certificate,
    /// `true` when the certified gap is within `tol * max(1, value)`.
    pub converged: bool,
}

fn values(forms: &[QuadraticForm], x: &RVec) -> Vec<f64> {
    forms.iter().map(|f| f.eval(x)).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Softmax weights `pi_l ~ exp(f_l / mu)` and the smoothed max
/// `mu log sum exp(f_l / mu)`.
fn softmax(v: &[f64], mu: f64) -> (Vec<f64>, f64) {
    let top = max_of(v);
    let e: Vec<f64> = v.iter().map(|f| ((f - top) / mu).exp()).collect();
    let z: f64 = e.iter().sum();
    (e.iter().map(|x| x / z).collect(), top + mu * z.ln())
}

/// Solves a symmetric PSD system, dropping directions with negligible
/// curvature (minimum-norm solution).
fn psd_solve(h: &RMat, rhs: &RVec) -> RVec {
    let eig = SymmetricEigen::new(h.clone());
    let cut = 1e-14 * eig.eigenvalues.amax().max(1e-300);
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let scaled = RVec::from_fn(coeffs.len(), |i, _| {
        let e = eig.eigenvalues[i];
        if e > cut {
            coeffs[i] / e
        } else {
            0.0
        }
    });
    &eig.eigenvectors * scaled
}

/// Damped Newton on the smoothed max at a fixed `mu`.
fn smoothed_newton(forms: &[QuadraticForm], x: &mut RVec, mu: f64) {
    let n = x.len();
    for _ in 0..MAX_NEWTON_PER_STAGE {
        let v = values(forms, x);
        let (pi, fx) = softmax(&v, mu);
        let grads: Vec<RVec> = forms.iter().map(|f| f.gradient(x)).collect();
        let mut grad = RVec::zeros(n);
        let mut hess = RMat::zeros(n, n);
        for ((p, g), f) in pi.iter().zip(&grads).zip(forms) {
            grad.axpy(*p, g, 1.0);
            hess += &f.kernel * (2.0 * p);
            hess += g * g.transpose() * (p / mu);
        }
        hess -= &grad * grad.transpose() * (1.0 / mu);
        let hess = (&hess + hess.transpose()) * 0.5;
        let dir = -psd_solve(&hess, &grad);
        let decrement = -grad.dot(&dir);
        if !(decrement > 1e-3 * mu) {
            return;
        }
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-12 {
            let trial = &*x + &dir * step;
            let (_, ft) = softmax(&values(forms, &trial), mu);
            if ft <= fx - 0.25 * step * decrement.max(0.0) {
                *x = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            return;
        }
    }
}

/// Newton on the optimality system of the forms in `active`:
/// `sum theta_l grad f_l(x) = 0`, `f_l(x) = v`, `sum theta_l = 1`.
/// Returns the point and multipliers (indexed like `forms`) if it converges
/// to admissible multipliers.
fn active_set_polish(
    forms: &[QuadraticForm],
    x0: &RVec,
    active: &[usize],
    theta0: &[f64],
) -> Option<(RVec, Vec<f64>)> {
    let n = x0.len();
    let a = active.len();
    let mut x = x0.clone();
    let mut th: Vec<f64> = active.iter().map(|&l| theta0[l]).collect();
    let s: f64 = th.iter().sum();
    if s > 0.0 {
        th.iter_mut().for_each(|t| *t /= s);
    } else {
        th.iter_mut().for_each(|t| *t = 1.0 / a as f64);
    }
    let mut v = active.iter().map(|&l| forms[l].eval(&x)).fold(f64::NEG_INFINITY, f64::max);
    let dim = n + a + 1;
    for _ in 0..MAX_POLISH {
        let grads: Vec<RVec> = active.iter().map(|&l| forms[l].gradient(&x)).collect();
        let mut r = RVec::zeros(dim);
        let mut jac = RMat::zeros(dim, dim);
        for (i, &l) in active.iter().enumerate() {
            for row in 0..n {
                r[row] += th[i] * grads[i][row];
            }
            r[n + i] = forms[l].eval(&x) - v;
            let mut block = jac.view_mut((0, 0), (n, n));
            block += &forms[l].kernel * (2.0 * th[i]);
            jac.view_mut((0, n + i), (n, 1)).copy_from(&grads[i]);
            jac.view_mut((n + i, 0), (1, n)).copy_from(&grads[i].transpose());
            jac[(n + i, dim - 1)] = -1.0;
            jac[(dim - 1, n + i)] = 1.0;
        }
        r[dim - 1] = th.iter().sum::<f64>() - 1.0;
        let scale = 1.0 + v.abs();
        if norm_inf(r.as_slice()) <= 1e-15 * scale {
            break;
        }
        let step = SVD::new(jac, true, true).solve(&(-&r), 1e-13).ok()?;
        x += step.rows(0, n);
        for (i, t) in th.iter_mut().enumerate() {
            *t += step[n + i];
        }
        v += step[dim - 1];
        if !x.iter().all(|z| z.is_finite()) || !v.is_finite() {
            return None;
        }
    }
    if th.iter().any(|t| *t < -1e-9) {
        return None;
    }
    let mut theta = vec![0.0; forms.len()];
    let total: f64 = th.iter().map(|t| t.max(0.0)).sum();
    for (i, &l) in active.iter().enumerate() {
        theta[l] = th[i].max(0.0) / total;
    }
    Some((x, theta))
}

/// Lagrangian lower bound for multipliers `theta`, evaluated around `x`:
/// with `F = sum theta_l f_l`, `min F = F(x) - grad^T P_theta^+ grad / 4`,
/// or `-inf` if the gradient leaves the range of `P_theta`.
pub fn certify(forms: &[QuadraticForm], x: &RVec, theta: &[f64]) -> Certificate {
    let n = x.len();
    let v = values(forms, x);
    let value = max_of(&v);
    let weighted: f64 = theta.iter().zip(&v).map(|(t, f)| t * f).sum();
    let mut grad = RVec::zeros(n);
    let mut kernel = RMat::zeros(n, n);
    let mut grad_scale: f64 = 0.0;
    for (t, f) in theta.iter().zip(forms) {
        let g = f.gradient(x);
        grad_scale = grad_scale.max(g.amax());
        grad.axpy(*t, &g, 1.0);
        kernel += &f.kernel * *t;
    }
    let stationarity = if n == 0 { 0.0 } else { grad.amax() };
    let mut lower_bound = weighted;
    if n > 0 {
        let eig = SymmetricEigen::new((&kernel + kernel.transpose()) * 0.5);
        let cut = 1e-13 * eig.eigenvalues.amax().max(1e-300);
        let coeffs = eig.eigenvectors.transpose() * &grad;
        for (c, e) in coeffs.iter().zip(eig.eigenvalues.iter()) {
            if *e > cut {
                lower_bound -= c * c / (4.0 * e);
            } else if c.abs() > 1e-13 * (1.0 + grad_scale) {
                lower_bound = f64::NEG_INFINITY;
            }
        }
    }
    Certificate { theta: theta.to_vec(), lower_bound, gap: value - lower_bound, stationarity }
}

/// Minimizes `max_l f_l(x)` starting from `x = 0`.
///
/// The smoothing parameter starts at the spread of the form values at the
/// origin and shrinks by 0.2 until it is below `tol / 10`; each stage is a
/// damped Newton solve. The active-set polish then solves the nonsmooth
/// optimality system directly and is kept only if it does not increase the
/// max. The certificate uses whichever multipliers give the better bound.
pub fn minimize_max(forms: &[QuadraticForm], tol: f64) -> Result<MinimaxSolution> {
    let first = forms.first().ok_or_else(|| Error::InvalidConfig("no quadratic forms to minimize".into()))?;
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance {tol} must be positive")));
    }
    let n = first.dim();
    if forms.iter().any(|f| f.dim() != n) {
        return Err(Error::Dimension("quadratic forms of different dimensions".into()));
    }

    let mut x = RVec::zeros(n);
    let v0 = values(forms, &x);
    if n == 0 {
        let top = v0.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (l, f)| if f > b.1 { (l, f) } else { b });
        let mut theta = vec![0.0; forms.len()];
        theta[top.0] = 1.0;
        let certificate = certify(forms, &x, &theta);
        return Ok(MinimaxSolution { x, value: top.1, certificate, converged: true });
    }
    let spread = max_of(&v0) - v0.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = tol / 10.0;
    let mut mu = spread.max(1e-3 * (1.0 + max_of(&v0).abs())).max(floor);
    loop {
        smoothed_newton(forms, &mut x, mu);
        if mu < floor {
            break;
        }
        mu *= SMOOTH_SHRINK;
    }

    let v = values(forms, &x);
    let value = max_of(&v);
    let (pi, _) = softmax(&v, mu);
    let mut best_x = x.clone();
    let mut best = certify(forms, &x, &pi);

    // Candidate active sets: forms within a widening band of the max.
    for band in [10.0 * mu, 1e-6 * (1.0 + value.abs()), 1e-4 * (1.0 + value.abs())] {
        let active: Vec<usize> = (0..forms.len()).filter(|&l| v[l] >= value - band).collect();
        if let Some((xp, theta)) = active_set_polish(forms, &x, &active, &pi) {
            let cert = certify(forms, &xp, &theta);
            let vp = max_of(&values(forms, &xp));
            if vp <= value + 1e-14 * (1.0 + value.abs()) && cert.gap < best.gap {
                best = cert;
                best_x = xp;
            }
        }
    }
    if !best.gap.is_finite() || best.gap > tol {
        // The softmax weights at the polished point can still certify.
        let vb = values(forms, &best_x);
        let (pb, _) = softmax(&vb, mu);
        let cert = certify(forms, &best_x, &pb);
        if cert.gap < best.gap {
            best = cert;
        }
    }

    let value = max_of(&values(forms, &best_x));
    let converged = best.gap <= tol * value.abs().max(1.0);
    if !converged {
        log::warn!("minimax stopped with certified gap {:e} (tol {tol:e})", best.gap);
    }
    Ok(MinimaxSolution { x: best_x, value, certificate: best, converged })
}
