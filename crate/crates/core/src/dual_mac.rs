//! The dual multiple-access channel.
//!
//! For dual variables `lambda >= 0` the dual MAC has noise covariance
//! `Sigma_z = sum_l lambda_l Phi_l` and a sum-power budget
//! `sum_l lambda_l gamma_l`. Its weighted sum-rate value `g(lambda)` upper
//! bounds the broadcast-channel optimum, with equality at the minimizing
//! `lambda`. Users are decoded in reverse order of decreasing weight, which is
//! the reverse of the optimal DPC encoding order.
//!
//! Internally every routine works in sorted-weight order (position `0` is the
//! largest weight); public inputs and outputs use the caller's user labels.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, identity, log_det_hpd, min_eigenvalue, norm2, outer, project_capped_simplex, CMat, CVec};
use crate::problem::{feasibility_scale, weighted_sum, BcSolution, ChannelSet, ConstraintSet, LinearConstraint, WeightVector};

/// Lower bound applied to the dual variable of the identity constraint so
/// that `Sigma_z(lambda)` stays invertible.
pub const LAMBDA_FLOOR: f64 = 1e-9;
const NOISE_PD_TOL: f64 = 1e-12;
const MAX_INNER_ITERS: usize = 20_000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct DualMacProblem {
    order: Vec<usize>,
    channels: Vec<CVec>,
    weights: Vec<f64>,
    deltas: Vec<f64>,
    noise_cov: CMat,
    budget: f64,
    lambda: Vec<f64>,
}

impl DualMacProblem {
    /// Dual MAC with an explicit noise covariance and power budget.
    pub fn new(ch: &ChannelSet, w: &WeightVector, noise_cov: CMat, budget: f64) -> Result<Self> {
        if w.len() != ch.users() {
            return Err(Error::Dimension(format!("{} weights for {} users", w.len(), ch.users())));
        }
        if noise_cov.shape() != (ch.antennas(), ch.antennas()) {
            return Err(Error::Dimension(format!("noise covariance is {:?}", noise_cov.shape())));
        }
        if min_eigenvalue(&noise_cov) <= NOISE_PD_TOL {
            return Err(Error::NotPositiveDefinite);
        }
        if !(budget >= 0.0) {
            return Err(Error::InvalidConfig(format!("dual MAC budget {budget} is negative")));
        }
        let order = w.order().to_vec();
        Ok(Self {
            channels: order.iter().map(|&k| ch.column(k)).collect(),
            weights: w.sorted(),
            deltas: w.deltas(),
            order,
            noise_cov,
            budget,
            lambda: Vec::new(),
        })
    }

    /// `Sigma_z = sum_l lambda_l Phi_l`, budget `sum_l lambda_l gamma_l`.
    /// Negative entries are clamped to zero and the identity component is
    /// floored at [`LAMBDA_FLOOR`].
    pub fn from_lambda(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, lambda: &[f64]) -> Result<Self> {
        let lambda = admissible_lambda(cs, lambda)?;
        let noise = cs.weighted_matrix(&lambda);
        let budget = lambda.iter().zip(cs.budgets()).map(|(l, g)| l * g).sum();
        let mut prob = Self::new(ch, w, noise, budget)?;
        prob.lambda = lambda;
        Ok(prob)
    }

    /// The min-max form: `Sigma_z = I + sum_l lambda_l Phi_l` over the
    /// non-identity constraints, budget `P + gamma^T lambda`.
    pub fn min_max(
        ch: &ChannelSet,
        others: &[LinearConstraint],
        w: &WeightVector,
        lambda: &[f64],
        sum_power: f64,
    ) -> Result<Self> {
        if lambda.len() != others.len() {
            return Err(Error::Dimension(format!("{} duals for {} constraints", lambda.len(), others.len())));
        }
        let m = ch.antennas();
        let noise = identity(m) + weighted_sum(m, others, lambda);
        let budget = sum_power + others.iter().zip(lambda).map(|(c, l)| c.budget * l).sum::<f64>();
        let mut prob = Self::new(ch, w, noise, budget)?;
        prob.lambda = lambda.to_vec();
        Ok(prob)
    }

    pub fn noise_cov(&self) -> &CMat {
        &self.noise_cov
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn users(&self) -> usize {
        self.channels.len()
    }

    fn to_sorted(&self, p: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&k| p[k]).collect()
    }

    fn to_labels(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (pos, &k) in self.order.iter().enumerate() {
            out[k] = sorted[pos];
        }
        out
    }

    /// `Sigma_z + sum_{j <= k} h_j h_j^H p_j` for `k = 0..=K` (sorted order).
    fn nested_covariances(&self, p_sorted: &[f64]) -> Vec<CMat> {
        let mut out = Vec::with_capacity(self.users() + 1);
        let mut acc = self.noise_cov.clone();
        out.push(acc.clone());
        for (h, &pj) in self.channels.iter().zip(p_sorted) {
            acc += outer(h).scale(pj);
            out.push(acc.clone());
        }
        out
    }

    /// Per-user rates (sorted order) under successive decoding `K, ..., 1`.
    fn rates_sorted(&self, p_sorted: &[f64]) -> Result<Vec<f64>> {
        let logdets = self
            .nested_covariances(p_sorted)
            .iter()
            .map(log_det_hpd)
            .collect::<Result<Vec<f64>>>()?;
        Ok(logdets.windows(2).map(|w| w[1] - w[0]).collect())
    }

    fn objective_sorted(&self, p_sorted: &[f64]) -> Result<f64> {
        let rates = self.rates_sorted(p_sorted)?;
        Ok(self.weights.iter().zip(&rates).map(|(w, r)| w * r).sum())
    }

    /// `d/dp_i = sum_{k >= i} Delta_k h_i^H A_k h_i` with
    /// `A_k = (Sigma_z + sum_{j<=k} h_j h_j^H p_j)^{-1}` (sorted order).
    fn gradient_sorted(&self, p_sorted: &[f64]) -> Result<Vec<f64>> {
        let k = self.users();
        let covs = self.nested_covariances(p_sorted);
        let mut grad = vec![0.0; k];
        for kk in 0..k {
            let chol = cholesky(&covs[kk + 1])?;
            for (i, g) in grad.iter_mut().enumerate().take(kk + 1) {
                let h = &self.channels[i];
                let x = chol.solve(h);
                *g += self.deltas[kk] * h.dotc(&x).re;
            }
        }
        Ok(grad)
    }

    fn check_powers(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.users() {
            return Err(Error::Dimension(format!("{} powers for {} users", p.len(), self.users())));
        }
        if p.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Dimension("powers must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

fn admissible_lambda(cs: &ConstraintSet, lambda: &[f64]) -> Result<Vec<f64>> {
    if lambda.len() != cs.len() {
        return Err(Error::Dimension(format!("{} duals for {} constraints", lambda.len(), cs.len())));
    }
    let mut out: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
    if let Some(i) = cs.sum_power_index() {
        out[i] = out[i].max(LAMBDA_FLOOR);
    }
    Ok(out)
}

/// Optimal dual-MAC powers and what they achieve, in user labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MacSolution {
    pub p: Vec<f64>,
    pub rates: Vec<f64>,
    pub objective: f64,
    /// Frank-Wolfe duality gap at `p`; an upper bound on the suboptimality.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted rate sum of the dual MAC with powers `p` (user labels).
pub fn mac_weighted_rate(prob: &DualMacProblem, p: &[f64]) -> Result<f64> {
    prob.check_powers(p)?;
    prob.objective_sorted(&prob.to_sorted(p))
}

/// Per-user dual-MAC rates (user labels).
pub fn mac_rates(prob: &DualMacProblem, p: &[f64]) -> Result<Vec<f64>> {
    prob.check_powers(p)?;
    Ok(prob.to_labels(&prob.rates_sorted(&prob.to_sorted(p))?))
}

/// Maximizes the weighted rate sum over `{p >= 0, 1^T p <= budget}`.
pub fn solve_inner(prob: &DualMacProblem, tol: f64) -> Result<MacSolution> {
    solve_inner_with(prob, tol, None, |_| {})
}

/// [`solve_inner`] with an optional warm start (user labels, rescaled to the
/// budget) and a callback invoked with the iterate after every accepted step.
///
/// Projected gradient ascent with Barzilai-Borwein trial steps and Armijo
/// backtracking along the projection arc; stops once the Frank-Wolfe gap is
/// below `tol`.
pub fn solve_inner_with(
    prob: &DualMacProblem,
    tol: f64,
    warm: Option<&[f64]>,
    mut observer: impl FnMut(&[f64]),
) -> Result<MacSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("inner tolerance {tol} must be positive")));
    }
    let k = prob.users();
    let budget = prob.budget;
    let finish = |x: &[f64], gap: f64, iterations: usize, converged: bool| -> Result<MacSolution> {
        let rates = prob.rates_sorted(x)?;
        let objective = prob.weights.iter().zip(&rates).map(|(w, r)| w * r).sum();
        Ok(MacSolution { p: prob.to_labels(x), rates: prob.to_labels(&rates), objective, gap, iterations, converged })
    };
    if budget == 0.0 {
        return finish(&vec![0.0; k], 0.0, 0, true);
    }

    let mut x = match warm {
        Some(p0) if p0.len() == k && p0.iter().sum::<f64>() > 0.0 => {
            let s = p0.iter().sum::<f64>();
            let scaled: Vec<f64> = prob.to_sorted(p0).iter().map(|v| v.max(0.0) * budget / s).collect();
            project_capped_simplex(&scaled, budget)
        }
        _ => vec![budget / k as f64; k],
    };
    let mut f = prob.objective_sorted(&x)?;
    let mut grad = prob.gradient_sorted(&x)?;
    let mut step = budget / norm2(&grad).max(1e-300);
    let mut gap = f64::INFINITY;

    for it in 0..MAX_INNER_ITERS {
        let gmax = grad.iter().copied().fold(0.0, f64::max);
        gap = (budget * gmax - grad.iter().zip(&x).map(|(g, v)| g * v).sum::<f64>()).max(0.0);
        if gap <= tol {
            return finish(&x, gap, it, true);
        }

        let mut s = step;
        let (x_new, f_new) = loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v + s * g).collect();
            let trial = project_capped_simplex(&trial, budget);
            let ascent: f64 = grad.iter().zip(trial.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            let f_trial = prob.objective_sorted(&trial)?;
            if f_trial >= f + ARMIJO * ascent {
                break (trial, f_trial);
            }
            s *= 0.5;
            if s < 1e-18 * step.max(1.0) {
                // No ascent possible at working precision.
                return finish(&x, gap, it, gap <= tol);
            }
        };
        let grad_new = prob.gradient_sorted(&x_new)?;
        let sk: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yk: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = sk.iter().zip(&yk).map(|(a, b)| a * b).sum();
        let ss: f64 = sk.iter().map(|a| a * a).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { (s * 2.0).min(1e12) };
        if ss == 0.0 {
            return finish(&x, gap, it, gap <= tol);
        }
        x = x_new;
        f = f_new;
        grad = grad_new;
        observer(&prob.to_labels(&x));
    }
    log::warn!("dual MAC inner solver hit {MAX_INNER_ITERS} iterations with gap {gap:e}");
    finish(&x, gap, MAX_INNER_ITERS, false)
}

/// `g(lambda)`: the dual-MAC optimum for the given dual variables.
pub fn g_of_lambda(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    lambda: &[f64],
    tol: f64,
) -> Result<(f64, MacSolution)> {
    let prob = DualMacProblem::from_lambda(ch, cs, w, lambda)?;
    let sol = solve_inner(&prob, tol)?;
    Ok((sol.objective, sol))
}

/// Maps dual-MAC powers to broadcast-channel steering vectors and powers
/// achieving the same per-user rates.
///
/// User `k` (sorted order) is received in the uplink with the MMSE filter
/// `u_k ∝ N_k^{-1} h_k`, where `N_k = Sigma_z + sum_{j<k} h_j h_j^H p_j` holds
/// the users decoded after it. The downlink uses `v_k = u_k`; powers are
/// assigned from the last encoded user backwards so that each downlink SINR,
/// with interference from users encoded later, equals the uplink SINR. The
/// result satisfies `tr(Sigma_x Sigma_z) = sum_k p_k`.
pub fn mac_to_bc(ch: &ChannelSet, prob: &DualMacProblem, mac_sol: &MacSolution) -> Result<BcSolution> {
    if ch.users() != prob.users() || ch.antennas() != prob.noise_cov.nrows() {
        return Err(Error::Dimension("channel does not match the dual MAC problem".into()));
    }
    prob.check_powers(&mac_sol.p)?;
    let k = prob.users();
    let p = prob.to_sorted(&mac_sol.p);

    let mut filters: Vec<CVec> = Vec::with_capacity(k);
    let mut sinr = vec![0.0; k];
    let mut n = prob.noise_cov.clone();
    for i in 0..k {
        let h = &prob.channels[i];
        let x = cholesky(&n)?.solve(h);
        let gain = h.dotc(&x).re;
        sinr[i] = p[i] * gain;
        filters.push(x.unscale(x.norm()));
        n += outer(h).scale(p[i]);
    }

    let mut q = vec![0.0; k];
    for i in (0..k).rev() {
        if p[i] == 0.0 {
            continue;
        }
        let h = &prob.channels[i];
        let interference: f64 = (i + 1..k).map(|j| q[j] * h.dotc(&filters[j]).norm_sqr()).sum();
        let own = h.dotc(&filters[i]).norm_sqr();
        if own <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        q[i] = sinr[i] * (1.0 + interference) / own;
    }

    let mut v = CMat::zeros(ch.antennas(), k);
    for (pos, &user) in prob.order.iter().enumerate() {
        v.set_column(user, &filters[pos]);
    }
    BcSolution::dirty_paper(ch, v, prob.to_labels(&q), prob.order.clone())
}

/// Scales all powers by the largest factor `<= 1` that satisfies every
/// constraint and re-evaluates the DPC rates.
pub fn restore_feasibility(ch: &ChannelSet, cs: &ConstraintSet, sol: &BcSolution) -> Result<BcSolution> {
    let scale = feasibility_scale(cs, &sol.usage(cs));
    if scale >= 1.0 {
        return Ok(sol.clone());
    }
    let q = sol.q.iter().map(|x| x * scale).collect();
    BcSolution::dirty_paper(ch, sol.v.clone(), q, sol.order.clone())
}
