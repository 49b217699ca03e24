//! Infeasible-start Newton method on the min-max dual.
//!
//! The identity constraint carries the sum power `P`; the remaining `L`
//! constraints enter the dual MAC as extra noise `I + sum_l lambda_l Phi_l`
//! with budget `P + gamma^T lambda`. The saddle point of
//!
//! ```text
//! f_t(p, lambda) = sum_k Delta_k log|S_k| - w_1 log|S_0|
//!                + (1/t) (sum_k log p_k - sum_l log lambda_l)
//! ```
//!
//! (max over `p`, min over `lambda`, with `1^T p = P + gamma^T lambda`) is
//! tracked for increasing `t`. Here `S_k = I + sum_l lambda_l Phi_l +
//! sum_{j<=k} h_j h_j^H p_j` in decreasing-weight order and
//! `Delta_k = w_k - w_{k+1}`.
//!
//! Public vectors use user labels; internally users are in sorted order.

use nalgebra::DVector;

use crate::dual_mac::{mac_to_bc, restore_feasibility, DualMacProblem, MacSolution};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, identity, norm2, outer, real_part_checked, trace_product, CMat, CVec, RMat};
use crate::problem::{weighted_sum, BcSolution, ChannelSet, ConstraintSet, LinearConstraint, WeightVector};
use crate::trace::{IterationTrace, TraceEvent};
use crate::SolverOutput;

/// Largest condition number accepted for the KKT matrix.
pub const MAX_CONDITION: f64 = 1e14;
const MIN_STEP: f64 = 1e-12;
const BOUNDARY_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Initial barrier parameter.
    pub t0: f64,
    pub nu: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Newton steps per barrier stage.
    pub max_newton: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { t0: 10.0, nu: 10.0, delta: 1e-6, alpha: 0.3, beta: 0.8, max_newton: 50 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidConfig(format!("t0 = {} must be positive", self.t0)));
        }
        if !(self.nu > 1.0) {
            return Err(Error::InvalidConfig(format!("nu = {} must exceed 1", self.nu)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta = {} must be positive", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidConfig(format!("alpha = {} must lie in (0, 1/2)", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!("beta = {} must lie in (0, 1)", self.beta)));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidConfig("max_newton must be positive".into()));
        }
        Ok(())
    }
}

/// `x = (p, lambda, mu)` and the barrier parameter. `p` and `lambda` are
/// strictly positive; `lambda` has one entry per non-identity constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub t: f64,
}

impl NewtonState {
    /// `lambda = 1`, `mu = 1`, `t = 1`, and equal powers meeting the budget
    /// `1^T p = P + gamma^T lambda`.
    pub fn initial(users: usize, gamma: &[f64], sum_power: f64) -> Self {
        Self::starting_point(users, gamma, sum_power, 1.0, 1.0)
    }

    fn starting_point(users: usize, gamma: &[f64], sum_power: f64, lambda0: f64, t: f64) -> Self {
        let budget = sum_power + lambda0 * gamma.iter().sum::<f64>();
        Self { p: vec![budget / users as f64; users], lambda: vec![lambda0; gamma.len()], mu: 1.0, t }
    }

    fn check_interior(&self, k: usize, l: usize) -> Result<()> {
        if self.p.len() != k || self.lambda.len() != l {
            return Err(Error::Dimension(format!(
                "state has {} powers and {} duals, expected {k} and {l}",
                self.p.len(),
                self.lambda.len()
            )));
        }
        if !(self.t > 0.0) || !self.mu.is_finite() {
            return Err(Error::NotInterior(format!("t = {}, mu = {}", self.t, self.mu)));
        }
        if let Some(x) = self.p.iter().chain(&self.lambda).find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::NotInterior(format!("component {x} is not strictly positive")));
        }
        Ok(())
    }

    fn to_vector(&self) -> Vec<f64> {
        let mut x = self.p.clone();
        x.extend_from_slice(&self.lambda);
        x.push(self.mu);
        x
    }

    fn stepped(&self, d: &[f64], s: f64) -> Self {
        let k = self.p.len();
        let l = self.lambda.len();
        Self {
            p: (0..k).map(|i| self.p[i] + s * d[i]).collect(),
            lambda: (0..l).map(|i| self.lambda[i] + s * d[k + i]).collect(),
            mu: self.mu + s * d[k + l],
            t: self.t,
        }
    }
}

/// Sorted-order view of the problem data.
struct Model {
    order: Vec<usize>,
    channels: Vec<CVec>,
    deltas: Vec<f64>,
    w1: f64,
    others: Vec<LinearConstraint>,
    gamma: Vec<f64>,
    power: f64,
    m: usize,
}

/// Inverses `A_k = S_k^{-1}` for `k = 0..=K` and `log|S_k|`.
struct Factored {
    a: Vec<CMat>,
    log_det: Vec<f64>,
}

impl Model {
    fn new(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector) -> Result<Self> {
        if w.len() != ch.users() {
            return Err(Error::Dimension(format!("{} weights for {} users", w.len(), ch.users())));
        }
        if cs.antennas() != Some(ch.antennas()) {
            return Err(Error::Dimension("constraints do not match the antenna count".into()));
        }
        let power = cs.sum_power().ok_or(Error::MissingSumPower)?;
        if !(power > 0.0) {
            return Err(Error::InvalidConfig(format!("sum power {power} must be positive")));
        }
        let others = cs.without_sum_power();
        let order = w.order().to_vec();
        Ok(Self {
            channels: order.iter().map(|&k| ch.column(k)).collect(),
            deltas: w.deltas(),
            w1: w.sorted()[0],
            gamma: others.iter().map(|c| c.budget).collect(),
            others,
            order,
            power,
            m: ch.antennas(),
        })
    }

    fn k(&self) -> usize {
        self.channels.len()
    }

    fn l(&self) -> usize {
        self.others.len()
    }

    fn sorted_powers(&self, p: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&k| p[k]).collect()
    }

    /// Position of each user label in sorted order.
    fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.k()];
        for (i, &k) in self.order.iter().enumerate() {
            pos[k] = i;
        }
        pos
    }

    fn factor(&self, state: &NewtonState) -> Result<Factored> {
        let p = self.sorted_powers(&state.p);
        let mut s = identity(self.m) + weighted_sum(self.m, &self.others, &state.lambda);
        let mut a = Vec::with_capacity(self.k() + 1);
        let mut log_det = Vec::with_capacity(self.k() + 1);
        for k in 0..=self.k() {
            if k > 0 {
                s += outer(&self.channels[k - 1]).scale(p[k - 1]);
            }
            let f = cholesky(&s)?;
            log_det.push(f.log_det());
            a.push(f.inverse());
        }
        Ok(Factored { a, log_det })
    }

    fn saddle_value(&self, f: &Factored) -> f64 {
        (1..=self.k()).map(|k| self.deltas[k - 1] * f.log_det[k]).sum::<f64>() - self.w1 * f.log_det[0]
    }

    /// Gradients in sorted order: `(df/dp, df/dlambda)`.
    fn gradient(&self, state: &NewtonState, f: &Factored) -> (Vec<f64>, Vec<f64>) {
        let p = self.sorted_powers(&state.p);
        let k = self.k();
        let mut gp = vec![0.0; k];
        for (i, g) in gp.iter_mut().enumerate() {
            let h = &self.channels[i];
            for kk in i + 1..=k {
                *g += self.deltas[kk - 1] * real_part_checked(h.dotc(&(&f.a[kk] * h)));
            }
            *g += 1.0 / (state.t * p[i]);
        }
        let gl = self
            .others
            .iter()
            .zip(&state.lambda)
            .map(|(c, &lam)| {
                let mut g = -self.w1 * real_part_checked(trace_product(&f.a[0], &c.phi));
                for kk in 1..=k {
                    g += self.deltas[kk - 1] * real_part_checked(trace_product(&f.a[kk], &c.phi));
                }
                g - 1.0 / (state.t * lam)
            })
            .collect();
        (gp, gl)
    }

    /// Residual in sorted order.
    fn residual_sorted(&self, state: &NewtonState, f: &Factored) -> Vec<f64> {
        let (gp, gl) = self.gradient(state, f);
        let mut r: Vec<f64> = gp.iter().map(|g| g - state.mu).collect();
        r.extend(gl.iter().zip(&self.gamma).map(|(g, gam)| g + state.mu * gam));
        r.push(self.power + dot(&self.gamma, &state.lambda) - state.p.iter().sum::<f64>());
        r
    }

    /// KKT matrix in sorted order.
    fn kkt_sorted(&self, state: &NewtonState, f: &Factored) -> RMat {
        let k = self.k();
        let l = self.l();
        let n = k + l + 1;
        let p = self.sorted_powers(&state.p);
        let mut j = RMat::zeros(n, n);

        // x[kk][i] = A_kk h_i, reused by the p-p and p-lambda blocks.
        let x: Vec<Vec<CVec>> = f.a.iter().map(|a| self.channels.iter().map(|h| a * h).collect()).collect();

        for i in 0..k {
            for jj in 0..=i {
                let mut v = 0.0;
                for kk in i + 1..=k {
                    v -= self.deltas[kk - 1] * self.channels[jj].dotc(&x[kk][i]).norm_sqr();
                }
                j[(i, jj)] = v;
                j[(jj, i)] = v;
            }
            j[(i, i)] -= 1.0 / (state.t * p[i] * p[i]);
        }

        for i in 0..k {
            for (li, c) in self.others.iter().enumerate() {
                let mut v = 0.0;
                for kk in i + 1..=k {
                    let xi = &x[kk][i];
                    v -= self.deltas[kk - 1] * real_part_checked(xi.dotc(&(&c.phi * xi)));
                }
                j[(i, k + li)] = v;
                j[(k + li, i)] = v;
            }
        }

        let a_phi: Vec<Vec<CMat>> = f.a.iter().map(|a| self.others.iter().map(|c| a * &c.phi).collect()).collect();
        for li in 0..l {
            for lj in 0..=li {
                let mut v = self.w1 * real_part_checked(trace_product(&a_phi[0][lj], &a_phi[0][li]));
                for kk in 1..=k {
                    v -= self.deltas[kk - 1] * real_part_checked(trace_product(&a_phi[kk][lj], &a_phi[kk][li]));
                }
                j[(k + li, k + lj)] = v;
                j[(k + lj, k + li)] = v;
            }
            j[(k + li, k + li)] += 1.0 / (state.t * state.lambda[li] * state.lambda[li]);
        }

        for i in 0..k {
            j[(i, n - 1)] = -1.0;
            j[(n - 1, i)] = -1.0;
        }
        for li in 0..l {
            j[(k + li, n - 1)] = self.gamma[li];
            j[(n - 1, k + li)] = self.gamma[li];
        }
        j
    }

    /// Sorted-order vector to user labels (the `p` block only is permuted).
    fn unsort_vector(&self, v: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut out = v.to_vec();
        for (pos, &user) in self.order.iter().enumerate() {
            out[user] = v[pos];
        }
        debug_assert_eq!(out.len(), v.len());
        out[k..].copy_from_slice(&v[k..]);
        out
    }

    fn unsort_matrix(&self, m: &RMat) -> RMat {
        let k = self.k();
        let pos = self.positions();
        let idx = |i: usize| if i < k { pos[i] } else { i };
        RMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(idx(i), idx(j))])
    }

    fn dual_mac(&self, ch: &ChannelSet, w: &WeightVector, lambda: &[f64]) -> Result<DualMacProblem> {
        DualMacProblem::min_max(ch, &self.others, w, lambda, self.power)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `f_t(p, lambda)`.
pub fn barrier_objective(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, state: &NewtonState) -> Result<f64> {
    let model = Model::new(ch, cs, w)?;
    state.check_interior(model.k(), model.l())?;
    let f = model.factor(state)?;
    let barrier = state.p.iter().map(|x| x.ln()).sum::<f64>() - state.lambda.iter().map(|x| x.ln()).sum::<f64>();
    Ok(model.saddle_value(&f) + barrier / state.t)
}

/// `r = (df_t/dp - mu 1, df_t/dlambda + mu gamma, P + gamma^T lambda - 1^T p)`.
pub fn residual(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, state: &NewtonState) -> Result<Vec<f64>> {
    let model = Model::new(ch, cs, w)?;
    state.check_interior(model.k(), model.l())?;
    let f = model.factor(state)?;
    Ok(model.unsort_vector(&model.residual_sorted(state, &f)))
}

/// Jacobian of [`residual`] with respect to `(p, lambda, mu)`.
pub fn kkt_matrix(ch: &ChannelSet, cs: &ConstraintSet, w: &WeightVector, state: &NewtonState) -> Result<RMat> {
    let model = Model::new(ch, cs, w)?;
    state.check_interior(model.k(), model.l())?;
    let f = model.factor(state)?;
    Ok(model.unsort_matrix(&model.kkt_sorted(state, &f)))
}

/// `d = -(grad r)^{-1} r`, refusing systems whose 2-norm condition number
/// exceeds [`MAX_CONDITION`].
pub fn newton_step(jacobian: &RMat, r: &[f64]) -> Result<Vec<f64>> {
    let n = r.len();
    if jacobian.shape() != (n, n) {
        return Err(Error::Dimension(format!("{:?} system for a residual of length {n}", jacobian.shape())));
    }
    if r.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let sv = jacobian.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
    let d = jacobian.clone().lu().solve(&rhs).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    Ok(d.iter().copied().collect())
}

fn boundary_step(x: &[f64], d: &[f64]) -> f64 {
    x.iter()
        .zip(d)
        .filter(|(_, dv)| **dv < 0.0)
        .map(|(xv, dv)| (1.0 - BOUNDARY_FRACTION) * xv / -dv)
        .fold(1.0, f64::min)
}

fn bc_at(ch: &ChannelSet, w: &WeightVector, model: &Model, state: &NewtonState) -> Result<BcSolution> {
    let prob = model.dual_mac(ch, w, &state.lambda)?;
    let mac = MacSolution { p: state.p.clone(), rates: vec![], objective: 0.0, gap: 0.0, iterations: 0, converged: true };
    mac_to_bc(ch, &prob, &mac)
}

/// How one barrier run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunEnd {
    /// `(K + L) / t <= delta` reached.
    Finished,
    /// Line search could not reduce the residual.
    Stalled,
    /// A stage ended with a usage far above its budget: the iterates followed
    /// the vanishing residual towards `lambda -> infinity`.
    RanAway,
}

/// Stage-end usage above this multiple of a budget marks a run-off.
const RUNAWAY_RATIO: f64 = 2.0;
const MAX_RESTARTS: usize = 3;
/// Relative violation of the mapped (unscaled) solution tolerated in a run
/// reported as converged.
const FINAL_VIOLATION: f64 = 1e-4;

fn max_violation_ratio(usage: &[f64], budgets: &[f64], scale: f64) -> f64 {
    usage.iter().zip(budgets).map(|(u, g)| (u - g) / g.max(1e-9 * scale)).fold(f64::NEG_INFINITY, f64::max)
}

/// Damped Newton stages from `state` until the barrier gap closes.
fn run_stages(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    model: &Model,
    cfg: &NewtonConfig,
    state: &mut NewtonState,
    trace: &mut IterationTrace,
    stage: &mut usize,
) -> Result<(RunEnd, f64)> {
    let (k, l) = (model.k(), model.l());
    let budgets = cs.budgets();
    loop {
        let mut f = model.factor(state)?;
        let mut r = model.residual_sorted(state, &f);
        let mut rnorm = norm2(&r);
        for _ in 0..cfg.max_newton {
            if rnorm <= cfg.delta {
                break;
            }
            let jac = model.kkt_sorted(state, &f);
            let d = model.unsort_vector(&newton_step(&jac, &r)?);
            let x = state.to_vector();
            let mut s = boundary_step(&x[..k + l], &d[..k + l]);
            let accepted = loop {
                let trial = state.stepped(&d, s);
                if trial.check_interior(k, l).is_ok() {
                    if let Ok(tf) = model.factor(&trial) {
                        let tr = model.residual_sorted(&trial, &tf);
                        let tn = norm2(&tr);
                        if tn <= (1.0 - cfg.alpha * s) * rnorm {
                            break Some((trial, tf, tr, tn));
                        }
                    }
                }
                s *= cfg.beta;
                if s < MIN_STEP {
                    break None;
                }
            };
            let Some((trial, tf, tr, tn)) = accepted else {
                log::warn!("Newton line search stalled at t = {:e}, ||r|| = {rnorm:e}", state.t);
                return Ok((RunEnd::Stalled, rnorm));
            };
            *state = trial;
            f = tf;
            r = tr;
            rnorm = tn;
            let bc = bc_at(ch, w, model, state)?;
            trace.push(*stage, bc.objective(w), Some(rnorm), bc.usage(cs), full_lambda(cs, &state.lambda), s);
        }
        let usage = bc_at(ch, w, model, state)?.usage(cs);
        if max_violation_ratio(&usage, &budgets, model.power) > RUNAWAY_RATIO - 1.0 {
            return Ok((RunEnd::RanAway, rnorm));
        }
        if (k + l) as f64 / state.t <= cfg.delta {
            return Ok((RunEnd::Finished, rnorm));
        }
        state.t *= cfg.nu;
        *stage += 1;
        trace.mark(TraceEvent::BarrierIncrease);
    }
}

/// Runs the barrier method from [`NewtonState::initial`] with `t = t0`.
///
/// Each stage takes damped Newton steps until `||r|| <= delta` or
/// `max_newton` steps, then multiplies `t` by `nu`; the run ends once
/// `(K + L) / t <= delta`. Steps are first shortened so that `p` and
/// `lambda` keep at least 1% of their value, then backtracked until
/// `||r(x + s d)|| <= (1 - alpha s) ||r(x)||`.
///
/// The residual also vanishes as `lambda -> infinity`, and a poor first step
/// can lock the iteration onto that path. A stage ending with a usage above
/// twice its budget is treated as such a run-off and the method restarts
/// from a ten times smaller `lambda`. The final `(p, lambda)` is mapped to
/// the broadcast channel and scaled onto the feasible set; `converged` also
/// requires the unscaled mapped solution to be feasible within a relative
/// `1e-4`.
pub fn solve_dpc_newton(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    cfg: &NewtonConfig,
) -> Result<SolverOutput> {
    cfg.validate()?;
    let model = Model::new(ch, cs, w)?;
    let mut trace = IterationTrace::new();
    let mut stage = 0;
    let mut lambda0 = 1.0;
    let mut attempt = 0;
    let (state, end, rnorm) = loop {
        let mut state = NewtonState::starting_point(model.k(), &model.gamma, model.power, lambda0, cfg.t0);
        let (end, rnorm) = run_stages(ch, cs, w, &model, cfg, &mut state, &mut trace, &mut stage)?;
        if end != RunEnd::RanAway || attempt == MAX_RESTARTS {
            break (state, end, rnorm);
        }
        log::info!("Newton iterates ran off at t = {:e}; restarting with lambda = {:e}", state.t, lambda0 / 10.0);
        attempt += 1;
        lambda0 /= 10.0;
        stage += 1;
        trace.mark(TraceEvent::Restart);
    };

    let bc = bc_at(ch, w, &model, &state)?;
    let feasible_within = max_violation_ratio(&bc.usage(cs), &cs.budgets(), model.power) <= FINAL_VIOLATION;
    let converged = end == RunEnd::Finished && rnorm <= cfg.delta && feasible_within;
    if !converged {
        log::warn!("Newton run flagged: {end:?}, ||r|| = {rnorm:e}, mapped solution feasible: {feasible_within}");
    }
    let solution = restore_feasibility(ch, cs, &bc)?;
    let upper = {
        let prob = model.dual_mac(ch, w, &state.lambda)?;
        crate::dual_mac::solve_inner(&prob, 1e-10).map(|s| s.objective + s.gap).ok()
    };
    Ok(SolverOutput {
        objective: solution.objective(w),
        solution,
        trace,
        converged,
        lambda: full_lambda(cs, &state.lambda),
        upper_bound: upper,
    })
}

/// Expands the non-identity duals to one entry per constraint, with `1` on
/// the identity constraint.
fn full_lambda(cs: &ConstraintSet, lambda: &[f64]) -> Vec<f64> {
    let mut it = lambda.iter();
    (0..cs.len())
        .map(|i| if Some(i) == cs.sum_power_index() { 1.0 } else { *it.next().expect("one dual per constraint") })
        .collect()
}
