//! Per-iteration convergence records emitted by every solver.

use std::time::{Duration, Instant};

/// Marks rows where something other than a plain inner iteration happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceEvent {
    #[default]
    None,
    /// Subgradient update of the dual variables (start of a new inner loop).
    OuterUpdate,
    /// Barrier parameter increase (start of a new Newton stage).
    BarrierIncrease,
    /// Steering-vector update (start of a new power-allocation round).
    SteeringUpdate,
    /// Newton run restarted from a new starting point.
    Restart,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::None => "",
            TraceEvent::OuterUpdate => "outer_update",
            TraceEvent::BarrierIncrease => "barrier_increase",
            TraceEvent::SteeringUpdate => "steering_update",
            TraceEvent::Restart => "restart",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub stage: usize,
    /// Weighted sum rate in nats.
    pub objective: f64,
    pub residual_norm: Option<f64>,
    /// `tr(Sigma_x Phi_l)` per constraint.
    pub usages: Vec<f64>,
    pub lambda: Vec<f64>,
    pub step_size: f64,
    pub event: TraceEvent,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    records: Vec<TraceRecord>,
    started: Instant,
    pending_event: TraceEvent,
}

impl Default for IterationTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl IterationTrace {
    pub fn new() -> Self {
        Self { records: Vec::new(), started: Instant::now(), pending_event: TraceEvent::None }
    }

    /// Tags the next pushed row with `event`.
    pub fn mark(&mut self, event: TraceEvent) {
        self.pending_event = event;
    }

    pub fn push(
        &mut self,
        stage: usize,
        objective: f64,
        residual_norm: Option<f64>,
        usages: Vec<f64>,
        lambda: Vec<f64>,
        step_size: f64,
    ) {
        let event = std::mem::take(&mut self.pending_event);
        self.records.push(TraceRecord {
            iter: self.records.len(),
            stage,
            objective,
            residual_norm,
            usages,
            lambda,
            step_size,
            event,
            elapsed: self.started.elapsed(),
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Number of rows until the objective enters and stays within `rel_tol`
    /// (relative) of `target`.
    pub fn rows_to_settle(&self, target: f64, rel_tol: f64) -> usize {
        let band = rel_tol * target.abs().max(1e-300);
        self.records
            .iter()
            .rposition(|r| (r.objective - target).abs() > band)
            .map_or(0, |i| i + 1)
            + 1
    }
}
