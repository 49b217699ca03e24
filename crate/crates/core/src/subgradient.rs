//! Outer minimization of the dual-MAC value `g(lambda)` by projected
//! subgradient steps with the diminishing schedule
//! `eps_n = eps0 (1 + b) / (n + b)`.

use crate::dual_mac::{mac_to_bc, restore_feasibility, solve_inner_with, DualMacProblem, MacSolution};
use crate::error::{Error, Result};
use crate::problem::{BcSolution, ChannelSet, ConstraintSet, WeightVector};
use crate::trace::{IterationTrace, TraceEvent};
use crate::SolverOutput;

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientConfig {
    pub eps0: f64,
    pub b: f64,
    pub max_outer: usize,
    /// Tolerance on constraint violation, objective stall, and the certified
    /// duality gap (relative to `max(1, objective)`).
    pub tol: f64,
    pub inner_tol_start: f64,
    pub inner_tol_floor: f64,
    /// Per-iteration shrink factor of the inner tolerance.
    pub inner_tol_decay: f64,
    /// Outer iterations over which the objective must stall.
    pub stall_window: usize,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self {
            eps0: 0.5,
            b: 5.0,
            max_outer: 500,
            tol: 1e-5,
            inner_tol_start: 1e-3,
            inner_tol_floor: 1e-7,
            inner_tol_decay: 0.8,
            stall_window: 10,
        }
    }
}

impl SubgradientConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.b > 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidConfig("eps0, b and tol must be positive".into()));
        }
        if !(self.inner_tol_floor > 0.0 && self.inner_tol_start >= self.inner_tol_floor) {
            return Err(Error::InvalidConfig("inner tolerances must satisfy 0 < floor <= start".into()));
        }
        if !(self.inner_tol_decay > 0.0 && self.inner_tol_decay <= 1.0) {
            return Err(Error::InvalidConfig("inner_tol_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// `eps_n`.
    pub fn step(&self, n: usize) -> f64 {
        self.eps0 * (1.0 + self.b) / (n as f64 + self.b)
    }
}

fn bc_from_powers(ch: &ChannelSet, prob: &DualMacProblem, p: &[f64]) -> Result<BcSolution> {
    let mac = MacSolution { p: p.to_vec(), rates: vec![], objective: 0.0, gap: 0.0, iterations: 0, converged: true };
    mac_to_bc(ch, prob, &mac)
}

/// `s_l = gamma_l - tr(Sigma_x(lambda) Phi_l)`, with `Sigma_x(lambda)` the
/// broadcast covariance mapped from the inner dual-MAC optimum.
pub fn subgradient_at(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    lambda: &[f64],
    inner_tol: f64,
) -> Result<Vec<f64>> {
    let prob = DualMacProblem::from_lambda(ch, cs, w, lambda)?;
    let mac = solve_inner_with(&prob, inner_tol, None, |_| {})?;
    let bc = mac_to_bc(ch, &prob, &mac)?;
    Ok(cs.budgets().iter().zip(bc.usage(cs)).map(|(g, u)| g - u).collect())
}

/// Solves the DPC weighted sum-rate problem through the dual MAC.
///
/// Each outer iteration solves the inner problem at the current `lambda`
/// (warm-started from the previous powers), maps it to the broadcast channel
/// to evaluate the subgradient, then steps
/// `lambda <- max(0, lambda - eps_n s)`. Since the iterates are not monotone
/// the best feasible solution seen is kept; infeasible iterates are scaled
/// down onto the feasible set before being compared. `g(lambda) + gap` of
/// every inner solve is a valid upper bound, so the run also stops once the
/// certified gap closes.
pub fn solve_dpc_subgradient(
    ch: &ChannelSet,
    cs: &ConstraintSet,
    w: &WeightVector,
    cfg: &SubgradientConfig,
) -> Result<SolverOutput> {
    cfg.validate()?;
    cs.sum_power_index().ok_or(Error::MissingSumPower)?;
    let budgets = cs.budgets();
    let mut lambda = vec![1.0; cs.len()];

    let mut trace = IterationTrace::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut inner_tol = cfg.inner_tol_start;
    let mut best: Option<(f64, BcSolution, Vec<f64>)> = None;
    let mut upper = f64::INFINITY;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for n in 0..cfg.max_outer {
        let prob = DualMacProblem::from_lambda(ch, cs, w, &lambda)?;
        lambda = prob.lambda().to_vec();
        let step = cfg.step(n);
        if n > 0 {
            trace.mark(TraceEvent::OuterUpdate);
        }

        let mut observer_err = None;
        let rows_before = trace.len();
        let mac = solve_inner_with(&prob, inner_tol, warm.as_deref(), |p| {
            match bc_from_powers(ch, &prob, p) {
                Ok(bc) => trace.push(n, bc.objective(w), None, bc.usage(cs), lambda.clone(), step),
                Err(e) => observer_err = Some(e),
            }
        })?;
        if let Some(e) = observer_err {
            return Err(e);
        }
        let bc = mac_to_bc(ch, &prob, &mac)?;
        let usage = bc.usage(cs);
        let objective = bc.objective(w);
        if trace.len() == rows_before {
            // warm start already within tolerance: one row for the evaluation
            trace.push(n, objective, None, usage.clone(), lambda.clone(), step);
        }

        upper = upper.min(mac.objective + mac.gap);
        let feasible = restore_feasibility(ch, cs, &bc)?;
        let feasible_obj = feasible.objective(w);
        if best.as_ref().is_none_or(|(b, _, _)| feasible_obj > *b) {
            best = Some((feasible_obj, feasible, lambda.clone()));
        }
        let best_obj = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);

        history.push(objective);
        let scale = objective.abs().max(1.0);
        let violation = usage.iter().zip(&budgets).map(|(u, g)| u - g).fold(f64::NEG_INFINITY, f64::max);
        let stalled = n >= cfg.stall_window
            && (objective - history[n - cfg.stall_window]).abs() <= cfg.tol * scale;
        let gap_closed = upper - best_obj <= cfg.tol * best_obj.abs().max(1.0);
        if (violation <= cfg.tol && stalled) || gap_closed {
            converged = true;
            log::debug!("subgradient converged after {} outer iterations (gap {:e})", n + 1, upper - best_obj);
            break;
        }

        for ((l, g), u) in lambda.iter_mut().zip(&budgets).zip(&usage) {
            *l = (*l - step * (g - u)).max(0.0);
        }
        inner_tol = (inner_tol * cfg.inner_tol_decay).max(cfg.inner_tol_floor);
        warm = Some(mac.p);
    }

    let (objective, solution, lambda) = best.expect("at least one outer iteration runs");
    if !converged {
        log::warn!("subgradient reached {} outer iterations; gap {:e}", cfg.max_outer, upper - objective);
    }
    Ok(SolverOutput { solution, trace, objective, converged, lambda, upper_bound: Some(upper) })
}
