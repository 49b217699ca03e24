//! Solver dispatch and output files.
//!
//! Everything is computed before the first file is written, so a failed
//! run leaves the output directory untouched. `summary.json` and the trace
//! files depend only on the inputs; wall times go to `timing.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bcopt_core::newton::solve_dpc_newton;
use bcopt_core::problem::FEASIBILITY_TOL;
use bcopt_core::subgradient::solve_dpc_subgradient;
use bcopt_core::zfbf::solve_zfbf;
use bcopt_core::{IterationTrace, SolverOutput};
use serde::Serialize;

use crate::scenario::{matrix_rows, Complex, Problem, SolverKind};

/// A solver failure, tagged with the solver that raised it.
#[derive(Debug)]
pub struct SolverError {
    pub solver: &'static str,
    pub error: bcopt_core::Error,
}

impl std::fmt::Display for SolverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} failed: {}", self.solver, self.error)
    }
}

impl std::error::Error for SolverError {}

pub struct SolverRun {
    pub kind: SolverKind,
    pub output: SolverOutput,
    pub elapsed: Duration,
}

impl SolverRun {
    pub fn feasible(&self, problem: &Problem) -> bool {
        self.output.solution.is_feasible(&problem.constraints, FEASIBILITY_TOL)
    }

    /// Converged and feasible.
    pub fn clean(&self, problem: &Problem) -> bool {
        self.output.converged && self.feasible(problem)
    }
}

fn solve_one(problem: &Problem, kind: SolverKind) -> Result<SolverRun, SolverError> {
    let (ch, cs, w) = (&problem.channel, &problem.constraints, &problem.weights);
    let start = Instant::now();
    let output = match kind {
        SolverKind::DpcSubgradient => solve_dpc_subgradient(ch, cs, w, &problem.subgradient),
        SolverKind::DpcNewton => solve_dpc_newton(ch, cs, w, &problem.newton),
        SolverKind::Zfbf => solve_zfbf(ch, cs, w, &problem.zfbf).map(SolverOutput::from),
    }
    .map_err(|error| SolverError { solver: kind.name(), error })?;
    Ok(SolverRun { kind, output, elapsed: start.elapsed() })
}

/// Runs the selected solvers, concurrently when there is more than one.
/// Results come back in selection order.
pub fn solve(problem: &Problem) -> Result<Vec<SolverRun>, SolverError> {
    if problem.solvers.len() == 1 {
        return Ok(vec![solve_one(problem, problem.solvers[0])?]);
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = problem.solvers.iter().map(|&kind| s.spawn(move || solve_one(problem, kind))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

pub fn trace_csv(trace: &IterationTrace, constraints: usize) -> String {
    let mut out = String::from("iter,stage,objective_nats,residual_norm");
    for l in 1..=constraints {
        write!(out, ",usage_{l}").unwrap();
    }
    out.push_str(",step_size,event\n");
    for r in trace.records() {
        write!(out, "{},{},{},", r.iter, r.stage, r.objective).unwrap();
        if let Some(res) = r.residual_norm {
            write!(out, "{res}").unwrap();
        }
        for u in &r.usages {
            write!(out, ",{u}").unwrap();
        }
        writeln!(out, ",{},{}", r.step_size, r.event.as_str()).unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub antennas: usize,
    pub users: usize,
    pub weights: Vec<f64>,
    pub constraints: Vec<ConstraintSummary>,
    pub solvers: Vec<SolverSummary>,
}

#[derive(Debug, Serialize)]
pub struct ConstraintSummary {
    pub index: usize,
    pub kind: &'static str,
    pub budget: f64,
}

#[derive(Debug, Serialize)]
pub struct SolverSummary {
    pub solver: &'static str,
    /// `converged` or `flagged`.
    pub status: &'static str,
    pub converged: bool,
    pub feasible: bool,
    pub objective_nats: f64,
    pub objective_bits: f64,
    pub upper_bound_nats: Option<f64>,
    pub rates_nats: Vec<f64>,
    pub rates_bits: Vec<f64>,
    pub usages: Vec<UsageSummary>,
    /// Trace rows.
    pub iterations: usize,
    /// Outer iterations, barrier stages or steering rounds.
    pub stages: usize,
    pub dual_variables: Vec<f64>,
    pub solution: SolutionSummary,
}

#[derive(Debug, Serialize)]
pub struct UsageSummary {
    pub index: usize,
    pub usage: f64,
    pub budget: f64,
    pub satisfied: bool,
}

#[derive(Debug, Serialize)]
pub struct SolutionSummary {
    /// `dirty_paper` or `linear`.
    pub scheme: &'static str,
    /// Users in encoding order (dirty-paper only).
    pub encoding_order: Option<Vec<usize>>,
    /// Unit-norm steering vectors as columns, `M x K`.
    pub steering: Vec<Vec<Complex>>,
    pub powers: Vec<f64>,
}

fn bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn summary(problem: &Problem, runs: &[SolverRun]) -> Summary {
    let cs = &problem.constraints;
    let budgets = cs.budgets();
    let solvers = runs
        .iter()
        .map(|run| {
            let out = &run.output;
            let sol = &out.solution;
            let usages = sol
                .usage(cs)
                .into_iter()
                .zip(&budgets)
                .enumerate()
                .map(|(index, (usage, &budget))| UsageSummary {
                    index,
                    usage,
                    budget,
                    satisfied: usage <= budget + FEASIBILITY_TOL,
                })
                .collect();
            let dirty_paper = run.kind != SolverKind::Zfbf;
            SolverSummary {
                solver: run.kind.name(),
                status: if run.clean(problem) { "converged" } else { "flagged" },
                converged: out.converged,
                feasible: run.feasible(problem),
                objective_nats: out.objective,
                objective_bits: bits(out.objective),
                upper_bound_nats: out.upper_bound,
                rates_nats: sol.rates.clone(),
                rates_bits: sol.rates.iter().map(|r| bits(*r)).collect(),
                usages,
                iterations: out.trace.len(),
                stages: out.trace.last().map_or(0, |r| r.stage + 1),
                dual_variables: out.lambda.clone(),
                solution: SolutionSummary {
                    scheme: if dirty_paper { "dirty_paper" } else { "linear" },
                    encoding_order: dirty_paper.then(|| sol.order.clone()),
                    steering: matrix_rows(&sol.v),
                    powers: sol.q.clone(),
                },
            }
        })
        .collect();
    Summary {
        antennas: problem.channel.antennas(),
        users: problem.channel.users(),
        weights: problem.weights.values().to_vec(),
        constraints: cs
            .constraints()
            .iter()
            .zip(&problem.kinds)
            .enumerate()
            .map(|(index, (c, kind))| ConstraintSummary { index, kind, budget: c.budget })
            .collect(),
        solvers,
    }
}

#[derive(Debug, Serialize)]
struct Timing {
    solver: &'static str,
    seconds: f64,
}

/// Writes the trace files, `summary.json` and `timing.json`; returns the
/// paths written.
pub fn write_outputs(dir: &Path, problem: &Problem, runs: &[SolverRun]) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, String)> = runs
        .iter()
        .map(|r| (dir.join(format!("{}_trace.csv", r.kind.name())), trace_csv(&r.output.trace, problem.constraints.len())))
        .collect();
    let summary = serde_json::to_string_pretty(&summary(problem, runs)).expect("summary serializes") + "\n";
    files.push((dir.join("summary.json"), summary));
    let timing: Vec<Timing> = runs.iter().map(|r| Timing { solver: r.kind.name(), seconds: r.elapsed.as_secs_f64() }).collect();
    files.push((dir.join("timing.json"), serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n"));

    std::fs::create_dir_all(dir)?;
    for (path, text) in &files {
        std::fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
