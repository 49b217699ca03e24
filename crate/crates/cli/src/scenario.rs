//! JSON scenario files.
//!
//! Complex numbers are `[re, im]` pairs and matrices are arrays of rows. The
//! channel is either given explicitly (`channel`, `M x K`) or drawn from
//! `seed`; a `direction` constraint without a `vector` takes the next
//! direction from the same seeded stream, so a seeded scenario with two
//! vector-less directions reproduces `reference_instance(seed)`.

use std::fmt;

use bcopt_core::linalg::{CMat, CVec, C64};
use bcopt_core::newton::NewtonConfig;
use bcopt_core::problem::{normalize_constraints, random_instance};
use bcopt_core::subgradient::SubgradientConfig;
use bcopt_core::zfbf::ZfbfConfig;
use bcopt_core::{ChannelSet, ConstraintSet, Error as CoreError, LinearConstraint, WeightVector};
use serde::{Deserialize, Serialize};

pub type Complex = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub antennas: usize,
    pub users: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit `M x K` channel; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<Vec<Vec<Complex>>>,
    pub constraints: Vec<ConstraintSpec>,
    /// Sum-power cap appended when no `sum_power` constraint is listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_cap: Option<f64>,
    /// Unit weights when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    SumPower {
        budget: f64,
    },
    PerAntenna {
        antenna: usize,
        budget: f64,
    },
    PerGroup {
        antennas: Vec<usize>,
        budget: f64,
    },
    Direction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<Vec<Complex>>,
        budget: f64,
    },
    ExplicitMatrix {
        matrix: Vec<Vec<Complex>>,
        budget: f64,
    },
}

impl ConstraintSpec {
    pub fn budget(&self) -> f64 {
        match self {
            Self::SumPower { budget }
            | Self::PerAntenna { budget, .. }
            | Self::PerGroup { budget, .. }
            | Self::Direction { budget, .. }
            | Self::ExplicitMatrix { budget, .. } => *budget,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::SumPower { .. } => "sum_power",
            Self::PerAntenna { .. } => "per_antenna",
            Self::PerGroup { .. } => "per_group",
            Self::Direction { .. } => "direction",
            Self::ExplicitMatrix { .. } => "explicit_matrix",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[value(name = "dpc_subgradient")]
    DpcSubgradient,
    #[value(name = "dpc_newton")]
    DpcNewton,
    Zfbf,
    #[default]
    All,
}

impl SolverChoice {
    pub fn solvers(self) -> Vec<SolverKind> {
        match self {
            Self::DpcSubgradient => vec![SolverKind::DpcSubgradient],
            Self::DpcNewton => vec![SolverKind::DpcNewton],
            Self::Zfbf => vec![SolverKind::Zfbf],
            Self::All => vec![SolverKind::DpcSubgradient, SolverKind::DpcNewton, SolverKind::Zfbf],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    DpcSubgradient,
    DpcNewton,
    Zfbf,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DpcSubgradient => "dpc_subgradient",
            Self::DpcNewton => "dpc_newton",
            Self::Zfbf => "zfbf",
        }
    }
}

/// Optional overrides of the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "SubgradientSettings::is_empty")]
    pub dpc_subgradient: SubgradientSettings,
    #[serde(default, skip_serializing_if = "NewtonSettings::is_empty")]
    pub dpc_newton: NewtonSettings,
    #[serde(default, skip_serializing_if = "ZfbfSettings::is_empty")]
    pub zfbf: ZfbfSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgradientSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl SubgradientSettings {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<usize>,
}

impl NewtonSettings {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZfbfSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dual: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<usize>,
}

impl ZfbfSettings {
    fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub solver: Option<SolverChoice>,
    /// Stopping tolerance of every solver.
    pub tol: Option<f64>,
    /// Outer iteration cap of every solver.
    pub max_iter: Option<usize>,
}

/// Validation failure with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ScenarioError {}

/// A scenario turned into solver inputs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub channel: ChannelSet,
    /// Normalized: always contains a sum-power constraint.
    pub constraints: ConstraintSet,
    /// Kind of every entry of `constraints`.
    pub kinds: Vec<&'static str>,
    pub weights: WeightVector,
    pub solvers: Vec<SolverKind>,
    pub subgradient: SubgradientConfig,
    pub newton: NewtonConfig,
    pub zfbf: ZfbfConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| {
            ScenarioError::new("", format!("malformed scenario at line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validates the scenario and builds the solver inputs.
    pub fn build(&self, overrides: &Overrides) -> Result<Problem, ScenarioError> {
        let (m, k) = (self.antennas, self.users);
        if m == 0 || k == 0 {
            return Err(ScenarioError::new("antennas", "antennas and users must be positive"));
        }
        if k > m {
            return Err(ScenarioError::new("users", format!("K = {k} exceeds M = {m}")));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let budget = c.budget();
            if !(budget >= 0.0 && budget.is_finite()) {
                return Err(ScenarioError::new(
                    format!("constraints[{i}].budget"),
                    format!("budget must be finite and nonnegative, got {budget}"),
                ));
            }
        }

        let seed = overrides.seed.or(self.seed);
        let random_dirs = self.constraints.iter().filter(|c| matches!(c, ConstraintSpec::Direction { vector: None, .. })).count();
        let (channel, drawn) = match (&self.channel, seed) {
            (Some(rows), _) => {
                if random_dirs > 0 && seed.is_none() {
                    return Err(ScenarioError::new("seed", "direction constraints without a vector need a seed"));
                }
                let h = matrix(rows, m, k, "channel")?;
                let ch = ChannelSet::new(h).map_err(|e| ScenarioError::new("channel", e.to_string()))?;
                let drawn = match seed {
                    Some(s) => random_instance(s, m, k, random_dirs, 1.0).map_err(core_error)?.1,
                    None => ConstraintSet::new(vec![]).map_err(core_error)?,
                };
                (ch, drawn)
            }
            (None, Some(s)) => random_instance(s, m, k, random_dirs, 1.0).map_err(core_error)?,
            (None, None) => return Err(ScenarioError::new("channel", "give either a channel matrix or a seed")),
        };
        let mut drawn = drawn.constraints().to_vec().into_iter();

        let mut constraints = Vec::with_capacity(self.constraints.len() + 1);
        let mut kinds = Vec::with_capacity(self.constraints.len() + 1);
        for (i, spec) in self.constraints.iter().enumerate() {
            let path = format!("constraints[{i}]");
            let c = match spec {
                ConstraintSpec::SumPower { budget } => LinearConstraint::sum_power(m, *budget),
                ConstraintSpec::PerAntenna { antenna, budget } => {
                    check_antennas(std::slice::from_ref(antenna), m, &format!("{path}.antenna"))?;
                    LinearConstraint::per_antenna(m, *antenna, *budget)
                }
                ConstraintSpec::PerGroup { antennas, budget } => {
                    if antennas.is_empty() {
                        return Err(ScenarioError::new(format!("{path}.antennas"), "group is empty"));
                    }
                    check_antennas(antennas, m, &format!("{path}.antennas"))?;
                    LinearConstraint::per_group(m, antennas, *budget)
                }
                ConstraintSpec::Direction { vector: Some(v), budget } => {
                    let c = vector(v, m, &format!("{path}.vector"))?;
                    if c.norm() == 0.0 {
                        return Err(ScenarioError::new(format!("{path}.vector"), "direction is zero"));
                    }
                    LinearConstraint::direction(&c, *budget)
                }
                ConstraintSpec::Direction { vector: None, budget } => {
                    let mut c = drawn.next().expect("one drawn direction per vector-less entry");
                    c.budget = *budget;
                    c
                }
                ConstraintSpec::ExplicitMatrix { matrix: rows, budget } => {
                    LinearConstraint { phi: matrix(rows, m, m, &format!("{path}.matrix"))?, budget: *budget }
                }
            };
            // validated one at a time so that errors carry this index
            ConstraintSet::new(vec![c.clone()]).map_err(|e| match e {
                CoreError::InvalidConstraint { reason, .. } => ScenarioError::new(path.clone(), reason),
                other => ScenarioError::new(path.clone(), other.to_string()),
            })?;
            constraints.push(c);
            kinds.push(spec.kind());
        }
        let listed = ConstraintSet::new(constraints).map_err(core_error)?;
        let constraints = match (listed.sum_power_index(), self.power_cap) {
            (Some(_), _) => listed,
            (None, Some(cap)) => {
                kinds.push("sum_power");
                normalize_constraints(&listed, m, cap).map_err(|e| ScenarioError::new("power_cap", e.to_string()))?
            }
            (None, None) => {
                return Err(ScenarioError::new("power_cap", "required when no sum_power constraint is listed"));
            }
        };

        let weights = match &self.weights {
            Some(w) if w.len() != k => {
                return Err(ScenarioError::new("weights", format!("{} weights for {k} users", w.len())));
            }
            Some(w) => WeightVector::new(w.clone()).map_err(|e| ScenarioError::new("weights", e.to_string()))?,
            None => WeightVector::uniform(k),
        };

        let (subgradient, newton, zfbf) = self.configs(overrides)?;
        Ok(Problem {
            channel,
            constraints,
            kinds,
            weights,
            solvers: overrides.solver.unwrap_or(self.solver).solvers(),
            subgradient,
            newton,
            zfbf,
        })
    }

    fn configs(&self, o: &Overrides) -> Result<(SubgradientConfig, NewtonConfig, ZfbfConfig), ScenarioError> {
        if let Some(tol) = o.tol {
            if !(tol > 0.0) {
                return Err(ScenarioError::new("--tol", format!("must be positive, got {tol}")));
            }
        }
        if o.max_iter == Some(0) {
            return Err(ScenarioError::new("--max-iter", "must be at least 1"));
        }
        let s = &self.settings.dpc_subgradient;
        let d = SubgradientConfig::default();
        let sub = SubgradientConfig {
            eps0: s.eps0.unwrap_or(d.eps0),
            b: s.b.unwrap_or(d.b),
            max_outer: o.max_iter.or(s.max_outer).unwrap_or(d.max_outer),
            tol: o.tol.or(s.tol).unwrap_or(d.tol),
            ..d
        };
        let n = &self.settings.dpc_newton;
        let d = NewtonConfig::default();
        let newton = NewtonConfig {
            t0: n.t0.unwrap_or(d.t0),
            nu: n.nu.unwrap_or(d.nu),
            delta: o.tol.or(n.delta).unwrap_or(d.delta),
            alpha: n.alpha.unwrap_or(d.alpha),
            beta: n.beta.unwrap_or(d.beta),
            max_newton: o.max_iter.or(n.max_newton).unwrap_or(d.max_newton),
        };
        newton.validate().map_err(|e| ScenarioError::new("settings.dpc_newton", e.to_string()))?;
        let z = &self.settings.zfbf;
        let d = ZfbfConfig::default();
        let zfbf = ZfbfConfig {
            eps0: z.eps0.unwrap_or(d.eps0),
            b: z.b.unwrap_or(d.b),
            max_dual: z.max_dual.unwrap_or(d.max_dual),
            tol: o.tol.or(z.tol).unwrap_or(d.tol),
            max_rounds: o.max_iter.or(z.max_rounds).unwrap_or(d.max_rounds),
            ..d
        };
        Ok((sub, newton, zfbf))
    }
}

fn core_error(e: CoreError) -> ScenarioError {
    match e {
        CoreError::InvalidConstraint { index, reason } => ScenarioError::new(format!("constraints[{index}]"), reason),
        CoreError::TooManyUsers { .. } => ScenarioError::new("users", e.to_string()),
        CoreError::RankDeficient { .. } => ScenarioError::new("channel", e.to_string()),
        other => ScenarioError::new("", other.to_string()),
    }
}

fn check_antennas(antennas: &[usize], m: usize, path: &str) -> Result<(), ScenarioError> {
    match antennas.iter().find(|&&a| a >= m) {
        Some(a) => Err(ScenarioError::new(path, format!("antenna {a} out of range for M = {m}"))),
        None => Ok(()),
    }
}

fn complex(z: &Complex, path: &str) -> Result<C64, ScenarioError> {
    if !(z[0].is_finite() && z[1].is_finite()) {
        return Err(ScenarioError::new(path, "entries must be finite"));
    }
    Ok(C64::new(z[0], z[1]))
}

fn vector(v: &[Complex], m: usize, path: &str) -> Result<CVec, ScenarioError> {
    if v.len() != m {
        return Err(ScenarioError::new(path, format!("{} entries, expected {m}", v.len())));
    }
    let entries = v.iter().enumerate().map(|(i, z)| complex(z, &format!("{path}[{i}]"))).collect::<Result<Vec<_>, _>>()?;
    Ok(CVec::from_vec(entries))
}

fn matrix(rows: &[Vec<Complex>], nrows: usize, ncols: usize, path: &str) -> Result<CMat, ScenarioError> {
    if rows.len() != nrows {
        return Err(ScenarioError::new(path, format!("{} rows, expected {nrows}", rows.len())));
    }
    let mut out = CMat::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(ScenarioError::new(format!("{path}[{i}]"), format!("{} entries, expected {ncols}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            out[(i, j)] = complex(z, &format!("{path}[{i}][{j}]"))?;
        }
    }
    Ok(out)
}

/// `[re, im]` rows of a complex matrix.
pub fn matrix_rows(m: &CMat) -> Vec<Vec<Complex>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}
