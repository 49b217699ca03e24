//! Zero-forcing beamforming by direct optimization over right generalized
//! inverses of the channel.
//!
//! Every zero-forcing precoder has columns `t_k = g_k a_k + Uperp b_k`, where
//! `g_k` is the normalized `k`-th pseudo-inverse column and `Uperp` spans the
//! orthogonal complement of the channels. The solver alternates two steps:
//!
//! 1. For fixed steering vectors, allocate powers by a waterfilling dual
//!    iteration (the problem is a concave rate sum under linear constraints).
//! 2. For fixed `a_k`, choose `B` minimizing the largest normalized
//!    constraint usage, then scale everything by the common factor `eta`
//!    that makes the tightest constraint hold with equality.
//!
//! Step 2 never lowers the rates (`eta >= 1` because the incumbent `B` is
//! feasible), so the objective is monotone across rounds.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, CMat, CVec, RMat, RVec, C64};
use crate::minimax::{assemble_forms, flatten, minimize_max, unflatten, Certificate};
use crate::problem::{split_precoder, BcSolution, ChannelSet, ConstraintSet, WeightVector};
use crate::trace::{IterationTrace, TraceEvent};

/// Lower clamp on `lambda^T c_k` while iterating on the dual.
const PRICE_FLOOR: f64 = 1e-12;
/// Powers below this fraction of the total are treated as switched off.
const ACTIVE_POWER: f64 = 1e-10;
const BARRIER_GROWTH: f64 = 10.0;
const MAX_BARRIER_NEWTON: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct ZfbfConfig {
    /// Step-1 dual subgradient schedule `eps0 (1 + b) / (n + b)`.
    pub eps0: f64,
    pub b: f64,
    /// Subgradient iterations per Step 1 before the interior-point polish.
    pub max_dual: usize,
    /// Complementary-slackness tolerance of Step 1.
    pub dual_tol: f64,
    /// Relative objective improvement below which the alternation stops.
    pub tol: f64,
    pub max_rounds: usize,
    pub minimax_tol: f64,
}

impl Default for ZfbfConfig {
    fn default() -> Self {
        Self { eps0: 0.2, b: 5.0, max_dual: 100, dual_tol: 1e-10, tol: 1e-6, max_rounds: 50, minimax_tol: 1e-10 }
    }
}

impl ZfbfConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidConfig("eps0 and b must be positive".into()));
        }
        if !(self.dual_tol > 0.0 && self.tol > 0.0 && self.minimax_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Precoder parametrization around the pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfbfState {
    /// Unit-norm pseudo-inverse columns.
    pub g: CMat,
    /// Orthonormal basis of the complement of the channel span (`M - K`
    /// columns).
    pub uperp: CMat,
    /// Steering vectors used by the power allocation.
    pub t: CMat,
    pub q: Vec<f64>,
    /// `sqrt(q_k) t_k = g_k a_k + Uperp b_k`.
    pub a: Vec<C64>,
    pub b: CMat,
    /// Scale applied by the last steering update.
    pub eta: f64,
}

impl ZfbfState {
    /// Pseudo-inverse steering `t_k = g_k` with no power yet.
    pub fn initial(ch: &ChannelSet) -> Result<Self> {
        let (g, uperp) = zf_basis(ch)?;
        let k = ch.users();
        let b = CMat::zeros(uperp.ncols(), k);
        Ok(Self { t: g.clone(), g, uperp, q: vec![0.0; k], a: vec![C64::new(1.0, 0.0); k], b, eta: 1.0 })
    }

    /// Columns `sqrt(q_k) t_k`.
    pub fn precoder(&self) -> CMat {
        let mut t = self.t.clone();
        for (k, q) in self.q.iter().enumerate() {
            t.column_mut(k).scale_mut(q.sqrt());
        }
        t
    }

    /// Recomputes `a` and `B` from the steering vectors and powers.
    fn sync_coefficients(&mut self) {
        let p = self.precoder();
        for k in 0..self.q.len() {
            self.a[k] = self.g.column(k).dotc(&p.column(k));
        }
        self.b = self.uperp.adjoint() * p;
    }
}

/// Step-1 dual variables and the normalized usage matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfbfDualState {
    pub lambda: Vec<f64>,
    /// `C[l][k] = t_k^H Phi_l t_k / gamma_l`.
    pub c: RMat,
}

/// Normalized pseudo-inverse columns `G` and an orthonormal basis of the
/// orthogonal complement of the channel span.
pub fn zf_basis(ch: &ChannelSet) -> Result<(CMat, CMat)> {
    let h = ch.matrix();
    let (m, k) = (ch.antennas(), ch.users());
    let gram = cholesky(&(h.adjoint() * h))?;
    let mut g = CMat::zeros(m, k);
    for j in 0..k {
        let mut e = CVec::zeros(k);
        e[j] = C64::new(1.0, 0.0);
        let col = h * gram.solve(&e);
        g.set_column(j, &col.unscale(col.norm()));
    }
    // The trailing columns of a full QR of [H I] span the complement of H.
    let mut stacked = CMat::zeros(m, k + m);
    stacked.view_mut((0, 0), (m, k)).copy_from(h);
    stacked.view_mut((0, k), (m, m)).fill_with_identity();
    let q = stacked.qr().q();
    let uperp = q.columns(k, m - k).into_owned();
    Ok((g, uperp))
}

fn usage_matrix(cs: &ConstraintSet, t: &CMat) -> RMat {
    RMat::from_fn(cs.len(), t.ncols(), |l, k| {
        let c = cs.get(l);
        let col = t.column(k);
        (col.dotc(&(&c.phi * col))).re / c.budget
    })
}

fn effective_gains(ch: &ChannelSet, t: &CMat) -> Vec<f64> {
    let d = ch.matrix().adjoint() * t;
    (0..t.ncols()).map(|k| d[(k, k)].norm_sqr()).collect()
}

fn rate_sum(w: &[f64], gains: &[f64], q: &[f64]) -> f64 {
    w.iter().zip(gains).zip(q).map(|((w, g), q)| w * (g * q).ln_1p()).sum()
}

/// Largest `s <= 1` with `C (s q) <= 1`.
fn feasible_scale(c: &RMat, q: &[f64]) -> f64 {
    let cq = c * RVec::from_row_slice(q);
    cq.iter().filter(|u| **u > 0.0).fold(1.0, |s, u| s.min(1.0 / u))
}

/// `q_k(lambda) = [w_k / (lambda^T c_k) - 1/gain_k]_+`.
fn powers_at(w: &[f64], gains: &[f64], c: &RMat, lambda: &[f64]) -> Vec<f64> {
    let lam = RVec::from_row_slice(lambda);
    (0..w.len())
        .map(|k| {
            let price = c.column(k).dot(&lam).max(PRICE_FLOOR);
            (w[k] / price - 1.0 / gains[k]).max(0.0)
        })
        .collect()
}

/// Complementary-slackness residual `max_l max(|lambda_l s_l|, -s_l)` with
/// `s = 1 - C q`.
fn slackness(c: &RMat, q: &[f64], lambda: &[f64]) -> f64 {
    let cq = c * RVec::from_row_slice(q);
    lambda.iter().zip(cq.iter()).map(|(l, u)| (l * (1.0 - u)).abs().max(u - 1.0)).fold(0.0, f64::max)
}

/// One row of Step-1 progress.
struct Step1Row {
    objective: f64,
    usage: Vec<f64>,
    lambda: Vec<f64>,
    residual: f64,
    step: f64,
}

struct Step1 {
    q: Vec<f64>,
    lambda: Vec<f64>,
    c: RMat,
    objective: f64,
}

/// Interior-point polish of `max sum w_k log(1 + gain_k q_k)` subject to
/// `C q <= 1`, `q >= 0`, from the strictly feasible `q0`.
fn barrier_polish(
    w: &[f64],
    gains: &[f64],
    c: &RMat,
    q0: &[f64],
    tol: f64,
    mut observe: impl FnMut(&[f64], &[f64], f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let (l, k) = (c.nrows(), c.ncols());
    let mut q = RVec::from_row_slice(q0);
    let mut t = 1.0;
    let t_final = (l + k) as f64 / (0.1 * tol);
    let duals = |q: &RVec, t: f64| -> Vec<f64> { (c * q).iter().map(|u| 1.0 / (t * (1.0 - u))).collect() };
    let psi = |q: &RVec, t: f64| -> f64 {
        let cq = c * q;
        if q.iter().any(|x| *x <= 0.0) || cq.iter().any(|u| *u >= 1.0) {
            return f64::NEG_INFINITY;
        }
        t * rate_sum(w, gains, q.as_slice())
            + cq.iter().map(|u| (1.0 - u).ln()).sum::<f64>()
            + q.iter().map(|x| x.ln()).sum::<f64>()
    };
    loop {
        for _ in 0..MAX_BARRIER_NEWTON {
            let cq = c * &q;
            let slack: Vec<f64> = cq.iter().map(|u| 1.0 - u).collect();
            let mut grad = RVec::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for j in 0..k {
                let den = 1.0 + gains[j] * q[j];
                grad[j] = t * w[j] * gains[j] / den + 1.0 / q[j];
                hess[(j, j)] -= t * w[j] * gains[j] * gains[j] / (den * den) + 1.0 / (q[j] * q[j]);
            }
            for (li, s) in slack.iter().enumerate() {
                let row = c.row(li).transpose();
                grad -= &row / *s;
                hess -= &row * row.transpose() / (s * s);
            }
            let Some(chol) = (-&hess).cholesky() else { break };
            let dir = chol.solve(&grad);
            let decrement = grad.dot(&dir);
            if !(decrement > 1e-12) {
                break;
            }
            let base = psi(&q, t);
            let mut alpha = 1.0;
            loop {
                let trial = &q + &dir * alpha;
                if psi(&trial, t) >= base + 0.25 * alpha * decrement {
                    q = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
            observe(q.as_slice(), &duals(&q, t), decrement.sqrt(), alpha);
            if alpha < 1e-14 {
                break;
            }
        }
        if t >= t_final {
            break;
        }
        t = (t * BARRIER_GROWTH).min(t_final);
    }
    let q: Vec<f64> = q.iter().copied().collect();
    let lambda = stationary_duals(w, gains, c, &q).unwrap_or_else(|| duals(&RVec::from_row_slice(&q), t));
    (q, lambda)
}

/// Slack below which a constraint counts as active when recovering duals.
const ACTIVE_SLACK: f64 = 1e-6;

/// Duals solving `w_k gain_k / (1 + gain_k q_k) = lambda^T c_k` over the
/// users with power, supported on the active constraints. Near the end of
/// the barrier path `1 / (t s_l)` divides by a slack that has lost most of
/// its digits to cancellation; this least-squares fit does not. `None` if
/// the fit is not a nonnegative exact solution.
fn stationary_duals(w: &[f64], gains: &[f64], c: &RMat, q: &[f64]) -> Option<Vec<f64>> {
    let cq = c * RVec::from_row_slice(q);
    let active: Vec<usize> = (0..c.nrows()).filter(|&l| 1.0 - cq[l] < ACTIVE_SLACK).collect();
    let total: f64 = q.iter().sum();
    let users: Vec<usize> = (0..q.len()).filter(|&k| q[k] > ACTIVE_POWER * total).collect();
    if active.is_empty() || users.is_empty() {
        return None;
    }
    let a = RMat::from_fn(users.len(), active.len(), |i, j| c[(active[j], users[i])]);
    let rhs = RVec::from_iterator(users.len(), users.iter().map(|&k| w[k] * gains[k] / (1.0 + gains[k] * q[k])));
    let x = a.clone().svd(true, true).solve(&rhs, 1e-12 * a.amax()).ok()?;
    let fit = (&a * &x - &rhs).amax();
    if x.iter().any(|v| *v < 0.0) || fit > 1e-8 * rhs.amax() {
        return None;
    }
    let mut lambda = vec![0.0; c.nrows()];
    for (j, &l) in active.iter().enumerate() {
        lambda[l] = x[j];
    }
    Some(lambda)
}

fn check_model(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, t: &CMat) -> Result<()> {
    if cs.is_empty() {
        return Err(Error::InvalidConfig("zero-forcing power allocation needs at least one constraint".into()));
    }
    if cs.antennas() != Some(ch.antennas()) || w.len() != ch.users() || t.shape() != (ch.antennas(), ch.users()) {
        return Err(Error::Dimension(format!(
            "steering {:?}, {} weights and {:?}-antenna constraints for a {}x{} channel",
            t.shape(),
            w.len(),
            cs.antennas(),
            ch.antennas(),
            ch.users()
        )));
    }
    if let Some(index) = cs.budgets().iter().position(|g| !(*g > 0.0)) {
        return Err(Error::InvalidConstraint { index, reason: "zero-forcing needs a positive budget".into() });
    }
    Ok(())
}

fn step1(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    t: &CMat,
    cfg: &ZfbfConfig,
    mut observe: impl FnMut(Step1Row),
) -> Result<Step1> {
    check_model(ch, cs, w, t)?;
    let w = w.values();
    let gains = effective_gains(ch, t);
    if let Some(user) = gains.iter().position(|g| !(*g > 0.0)) {
        return Err(Error::Dimension(format!("user {user} has zero effective gain")));
    }
    let c = usage_matrix(cs, t);
    if let Some(user) = (0..c.ncols()).find(|&k| c.column(k).iter().all(|x| *x <= 0.0)) {
        return Err(Error::UnboundedPower { user });
    }
    let budgets = cs.budgets();
    let mut row = |q: &[f64], lambda: &[f64], residual: f64, step: f64| {
        let s = feasible_scale(&c, q);
        let qs: Vec<f64> = q.iter().map(|x| x * s).collect();
        let cq = &c * RVec::from_row_slice(&qs);
        observe(Step1Row {
            objective: rate_sum(w, &gains, &qs),
            usage: cq.iter().zip(&budgets).map(|(u, g)| u * g).collect(),
            lambda: lambda.to_vec(),
            residual,
            step,
        });
    };

    let l = cs.len();
    let mut lambda = vec![1.0 / l as f64; l];
    let mut q = powers_at(w, &gains, &c, &lambda);
    let mut residual = slackness(&c, &q, &lambda);
    for n in 0..cfg.max_dual {
        if residual <= cfg.dual_tol {
            break;
        }
        let eps = cfg.eps0 * (1.0 + cfg.b) / (n as f64 + cfg.b);
        let cq = &c * RVec::from_row_slice(&q);
        for (lam, u) in lambda.iter_mut().zip(cq.iter()) {
            *lam = (*lam - eps * (1.0 - u)).max(0.0);
        }
        q = powers_at(w, &gains, &c, &lambda);
        residual = slackness(&c, &q, &lambda);
        row(&q, &lambda, residual, eps);
    }
    if residual > cfg.dual_tol {
        // Strictly interior start for the polish: positive powers, then
        // scaled to half the tightest budget.
        let total: f64 = q.iter().sum::<f64>().max(1e-3);
        let mut q0: Vec<f64> = q.iter().map(|x| x.max(1e-3 * total / q.len() as f64)).collect();
        let cq0 = &c * RVec::from_row_slice(&q0);
        let s = 0.5 / cq0.max();
        q0.iter_mut().for_each(|x| *x *= s);
        let (qp, lp) = barrier_polish(w, &gains, &c, &q0, cfg.dual_tol, |q, lam, dec, alpha| row(q, lam, dec, alpha));
        q = qp;
        lambda = lp;
    }

    let total: f64 = q.iter().sum();
    for x in q.iter_mut() {
        if *x <= ACTIVE_POWER * total {
            *x = 0.0;
        }
    }
    let s = feasible_scale(&c, &q);
    q.iter_mut().for_each(|x| *x *= s);
    let objective = rate_sum(w, &gains, &q);
    Ok(Step1 { q, lambda, c, objective })
}

/// Step 1: optimal powers for fixed steering vectors `t`, and the duals.
///
/// Runs the projected dual subgradient iteration from `lambda = 1/L` and,
/// if complementary slackness is not yet within `tol`, finishes with a
/// primal interior-point solve. The returned powers satisfy `C q <= 1`.
pub fn waterfill_powers(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    t: &CMat,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = ZfbfConfig { dual_tol: tol, ..Default::default() };
    let s = step1(ch, cs, w, t, &cfg, |_| {})?;
    Ok((s.q, s.lambda))
}

/// Outcome of a steering update.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringStep {
    pub b: CMat,
    pub eta: f64,
    /// `max_l (1/gamma_l) tr(T T^H Phi_l)` at the returned `B`, before
    /// scaling by `eta`.
    pub value: f64,
    pub certificate: Certificate,
    pub converged: bool,
}

/// Step 2: `B` minimizing the largest normalized usage for the current `a`,
/// and `eta = 1 / sqrt(value)`. Falls back to the incumbent `B` if the
/// minimax solve does not improve on it.
pub fn steering_update(ch: &ChannelSet, cs: &ConstraintSet, state: &ZfbfState) -> Result<SteeringStep> {
    steering_update_tol(ch, cs, state, ZfbfConfig::default().minimax_tol)
}

fn steering_update_tol(ch: &ChannelSet, cs: &ConstraintSet, state: &ZfbfState, tol: f64) -> Result<SteeringStep> {
    let forms = assemble_forms(ch, cs, &state.g, &state.a, &state.uperp)?;
    let sol = minimize_max(&forms, tol)?;
    let incumbent = flatten(&state.b);
    let incumbent_value = forms.iter().map(|f| f.eval(&incumbent)).fold(f64::NEG_INFINITY, f64::max);
    let (x, value) = if sol.value <= incumbent_value { (sol.x, sol.value) } else { (incumbent, incumbent_value) };
    if !(value > 0.0) {
        return Err(Error::InvalidConfig("steering update with no transmitted power".into()));
    }
    Ok(SteeringStep {
        b: unflatten(&x, state.uperp.ncols(), ch.users()),
        eta: 1.0 / value.sqrt(),
        value,
        certificate: sol.certificate,
        converged: sol.converged,
    })
}

#[derive(Debug, Clone)]
pub struct ZfbfOutput {
    pub solution: BcSolution,
    pub trace: IterationTrace,
    pub objective: f64,
    /// Objective after the first power allocation, i.e. pseudo-inverse ZFBF.
    pub first_round_objective: f64,
    /// Objective after each round.
    pub round_objectives: Vec<f64>,
    pub converged: bool,
    /// Step-1 duals of the final round.
    pub lambda: Vec<f64>,
    pub state: ZfbfState,
}

impl ZfbfOutput {
    pub fn rounds(&self) -> usize {
        self.round_objectives.len()
    }
}

impl From<ZfbfOutput> for crate::SolverOutput {
    fn from(out: ZfbfOutput) -> Self {
        Self {
            solution: out.solution,
            trace: out.trace,
            objective: out.objective,
            converged: out.converged,
            lambda: out.lambda,
            upper_bound: None,
        }
    }
}

/// Alternates power allocation and steering updates from the pseudo-inverse
/// steering until a round improves the objective by less than `cfg.tol`
/// (relative) or `cfg.max_rounds` is reached.
///
/// Trace rows are Step-1 iterations; the first row of every round after the
/// first carries `steering_update`. Users switched off by the power
/// allocation keep their previous steering vector.
pub fn solve_zfbf(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, cfg: &ZfbfConfig) -> Result<ZfbfOutput> {
    cfg.validate()?;
    let mut state = ZfbfState::initial(ch)?;
    check_model(ch, cs, w, &state.t)?;
    let mut trace = IterationTrace::new();
    let mut round_objectives: Vec<f64> = Vec::new();
    let mut best: Option<(f64, ZfbfState, Vec<f64>)> = None;
    let mut converged = false;

    for round in 0..cfg.max_rounds {
        if round > 0 {
            let step = steering_update_tol(ch, cs, &state, cfg.minimax_tol)?;
            if !step.converged {
                log::debug!("steering update gap {:e} in round {round}", step.certificate.gap);
            }
            for k in 0..ch.users() {
                if state.q[k] > 0.0 {
                    let col = (state.g.column(k) * state.a[k] + &state.uperp * step.b.column(k)) * C64::new(step.eta, 0.0);
                    state.t.set_column(k, &col);
                }
            }
            state.eta = step.eta;
            trace.mark(TraceEvent::SteeringUpdate);
        }
        let rows_before = trace.len();
        let s1 = step1(ch, cs, w, &state.t, cfg, |r| {
            trace.push(round, r.objective, Some(r.residual), r.usage, r.lambda, r.step);
        })?;
        if trace.len() == rows_before {
            let usage = (&s1.c * RVec::from_row_slice(&s1.q)).iter().zip(cs.budgets()).map(|(u, g)| u * g).collect();
            trace.push(round, s1.objective, Some(slackness(&s1.c, &s1.q, &s1.lambda)), usage, s1.lambda.clone(), 0.0);
        }
        state.q = s1.q;
        state.sync_coefficients();

        let objective = s1.objective;
        let previous = round_objectives.last().copied();
        round_objectives.push(objective);
        if best.as_ref().is_none_or(|(b, _, _)| objective > *b) {
            best = Some((objective, state.clone(), s1.lambda));
        }
        if let Some(prev) = previous {
            if objective - prev < cfg.tol * prev.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    if !converged && cfg.max_rounds == 1 {
        converged = true;
    }

    let (_, state, lambda) = best.expect("at least one round runs");
    let (v, q) = split_precoder(&state.precoder());
    let solution = BcSolution::linear(ch, v, q)?;
    let objective = solution.objective(w);
    let first_round_objective = round_objectives[0];
    if !converged {
        log::warn!("zfbf reached {} rounds", cfg.max_rounds);
    }
    Ok(ZfbfOutput { solution, trace, objective, first_round_objective, round_objectives, converged, lambda, state })
}

/// `max_{j != k} |h_j^H t_k| / (||h_j|| ||t_k||)`, the zero-forcing leak.
pub fn zero_forcing_leak(ch: &ChannelSet, t: &CMat) -> f64 {
    let d = ch.matrix().adjoint() * t;
    let mut worst: f64 = 0.0;
    for k in 0..t.ncols() {
        let tn = t.column(k).norm();
        if tn == 0.0 {
            continue;
        }
        for j in 0..ch.users() {
            if j != k {
                worst = worst.max(d[(j, k)].norm() / (ch.column(j).norm() * tn));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real;
    use crate::problem::LinearConstraint;

    #[test]
    fn orthonormal_channels_give_themselves() {
        let ch = ChannelSet::new(CMat::from_fn(3, 2, |i, j| real(if i == j { 1.0 } else { 0.0 }))).unwrap();
        let (g, u) = zf_basis(&ch).unwrap();
        assert!((&g - ch.matrix()).norm() < 1e-14);
        assert_eq!(u.ncols(), 1);
        assert!((ch.matrix().adjoint() * &u).norm() < 1e-14);
    }

    #[test]
    fn symmetric_waterfill_splits_evenly() {
        let ch = ChannelSet::new(CMat::identity(3, 3)).unwrap();
        let cs = ConstraintSet::new(vec![LinearConstraint::sum_power(3, 6.0)]).unwrap();
        let (q, lambda) = waterfill_powers(&ch, &cs, &WeightVector::uniform(3), &CMat::identity(3, 3), 1e-10).unwrap();
        for x in &q {
            assert!((x - 2.0).abs() < 1e-8, "{q:?}");
        }
        assert!(lambda[0] > 0.0);
    }

    #[test]
    fn zero_usage_column_is_unbounded() {
        let ch = ChannelSet::new(CMat::identity(2, 2)).unwrap();
        let cs = ConstraintSet::new(vec![LinearConstraint::per_antenna(2, 0, 1.0)]).unwrap();
        let err = waterfill_powers(&ch, &cs, &WeightVector::uniform(2), &CMat::identity(2, 2), 1e-8);
        assert_eq!(err.unwrap_err(), Error::UnboundedPower { user: 1 });
    }

    #[test]
    fn eta_closed_form() {
        // one user, one sum-power constraint, |a|^2 = 4P: eta = 1/2
        let h = CVec::from_vec(vec![real(1.0), real(0.0)]);
        let ch = ChannelSet::from_columns(&[h]).unwrap();
        let p = 2.5;
        let cs = ConstraintSet::new(vec![LinearConstraint::sum_power(2, p)]).unwrap();
        let mut state = ZfbfState::initial(&ch).unwrap();
        state.a = vec![real((4.0 * p).sqrt())];
        let step = steering_update(&ch, &cs, &state).unwrap();
        assert!((step.eta - 0.5).abs() < 1e-12);
        assert!(step.b.norm() < 1e-12);
    }

    #[test]
    fn single_user_capacity() {
        let h = CVec::from_vec(vec![C64::new(0.3, 0.1), real(-1.2), C64::new(0.0, 0.7)]);
        let ch = ChannelSet::from_columns(std::slice::from_ref(&h)).unwrap();
        let cs = ConstraintSet::new(vec![LinearConstraint::sum_power(3, 4.0)]).unwrap();
        let out = solve_zfbf(&ch, &cs, &WeightVector::uniform(1), &ZfbfConfig::default()).unwrap();
        assert!((out.objective - (1.0 + 4.0 * h.norm_squared()).ln()).abs() < 1e-9);
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(ZfbfConfig { max_rounds: 0, ..Default::default() }.validate().is_err());
    }
}
