//! Scenario parsing, solver dispatch and result files for the `bcopt`
//! command.

pub mod run;
pub mod scenario;

use std::path::{Path, PathBuf};

pub use scenario::{Overrides, Scenario, ScenarioError, SolverChoice};

/// Exit status of `bcopt run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Every solver converged to a feasible point.
    Converged = 0,
    Error = 1,
    /// Some solver hit an iteration cap, stalled or returned an infeasible
    /// point; results are still written.
    Flagged = 2,
}

pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Parses, validates, solves and writes. Nothing is written unless every
/// step up to the file output succeeds.
pub fn run(config: &Path, overrides: &Overrides, out: Option<&Path>) -> Result<(Status, Vec<PathBuf>), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(config).map_err(|e| format!("cannot read {}: {e}", config.display()))?;
    let scenario = Scenario::from_json(&text)?;
    let problem = scenario.build(overrides)?;
    let runs = run::solve(&problem)?;
    for r in &runs {
        log::info!("{}: objective {} nats, converged {}", r.kind.name(), r.output.objective, r.output.converged);
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(scenario.output_dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR)));
    let files = run::write_outputs(&dir, &problem, &runs)?;
    let status = if runs.iter().all(|r| r.clean(&problem)) { Status::Converged } else { Status::Flagged };
    Ok((status, files))
}
