//! Scenario configuration: parsing (TOML or JSON, auto-detected), compilation
//! into live objects, and hypothesis validation.
//!
//! Hypotheses are validated at load time, not at verdict time: a failed
//! verdict must mean "theorem prediction not observed", never "the hypothesis
//! was never satisfied".

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::damping::DampingSchedule;
use crate::forcing::{satisfies_weighted_condition, SourceTerm};
use crate::integrate::{SolverSettings, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};
use crate::potentials::Potential;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingSpec {
    pub c: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero { dim: usize },
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64> },
    LeastSquares { matrix: Vec<Vec<f64>>, y: Vec<f64> },
    EvenPower { dim: usize, p: u32, scale: f64 },
    DistBallSq { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    PowerDecay { direction: Vec<f64>, amplitude: f64, beta: f64 },
    OscillatingPowerDecay { direction: Vec<f64>, amplitude: f64, beta: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
}

/// One experiment: dynamics, initial data, horizon, and the theorem tags
/// whose verdicts apply.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub damping: DampingSpec,
    pub potential: PotentialSpec,
    pub source: SourceSpec,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Subset of {"T1", "T2(nu)", "T3", "T4"}.
    #[serde(default)]
    pub tags: Vec<String>,
    /// Exploratory scenarios sit at hypothesis boundaries the theory does not
    /// predict; they carry no theorem tags and never gate a suite.
    #[serde(default)]
    pub exploratory: bool,
}

/// A theorem verdict requested by a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoremTag {
    T1,
    T2 { nu: f64 },
    T3,
    T4,
}

impl TheoremTag {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        match t {
            "T1" => return Ok(Self::T1),
            "T3" => return Ok(Self::T3),
            "T4" => return Ok(Self::T4),
            _ => {}
        }
        if let Some(inner) = t.strip_prefix("T2(").and_then(|s| s.strip_suffix(')')) {
            let nu: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("tag {t:?}: cannot parse nu")))?;
            return Ok(Self::T2 { nu });
        }
        Err(Error::Config(format!(
            "unknown theorem tag {t:?}; expected one of T1, T2(nu), T3, T4"
        )))
    }

    pub fn label(&self) -> String {
        match self {
            Self::T1 => "T1".into(),
            Self::T2 { nu } => format!("T2({nu})"),
            Self::T3 => "T3".into(),
            Self::T4 => "T4".into(),
        }
    }
}

/// A fully validated scenario, ready to run.
#[derive(Debug)]
pub struct CompiledScenario {
    pub config: ScenarioConfig,
    pub schedule: DampingSchedule,
    pub potential: Potential,
    pub source: SourceTerm,
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub tags: Vec<TheoremTag>,
    /// Energy-decay exponent used by the weighted velocity accumulator:
    /// the declared T2 nu, or alpha when no rate theorem is under test.
    pub nu: f64,
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        match self {
            Self::Zero { dim } => Potential::zero(*dim),
            Self::Quadratic { a, b } => {
                Potential::quadratic(matrix_from_rows("potential.a", a)?, DVector::from_vec(b.clone()))
            }
            Self::LeastSquares { matrix, y } => {
                Potential::least_squares(matrix_from_rows("potential.matrix", matrix)?, DVector::from_vec(y.clone()))
            }
            Self::EvenPower { dim, p, scale } => Potential::even_power(*dim, *p, *scale),
            Self::DistBallSq { center, radius } => {
                Potential::dist_ball_sq(DVector::from_vec(center.clone()), *radius)
            }
        }
    }
}

impl SourceSpec {
    pub fn build(&self, dim: usize) -> Result<SourceTerm> {
        match self {
            Self::Zero => SourceTerm::zero(dim),
            Self::PowerDecay { direction, amplitude, beta } => {
                SourceTerm::power_decay(DVector::from_vec(direction.clone()), *amplitude, *beta)
            }
            Self::OscillatingPowerDecay { direction, amplitude, beta, omega } => {
                SourceTerm::oscillating_power_decay(
                    DVector::from_vec(direction.clone()),
                    *amplitude,
                    *beta,
                    *omega,
                )
            }
        }
    }
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{field}: matrix must be nonempty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{field}: ragged matrix rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Parses a TOML or JSON scenario document; the format is auto-detected by
/// the leading non-whitespace character.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| Error::Config(format!("json config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(format!("toml config: {e}")))
    }
}

/// Validates a configuration and builds the live objects, checking every
/// declared theorem tag against its hypothesis.
pub fn compile_scenario(config: &ScenarioConfig) -> Result<CompiledScenario> {
    if config.name.is_empty()
        || !config.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        return Err(Error::Config(format!(
            "scenario name {:?} must be nonempty and filesystem-safe (alphanumeric, '-', '_')",
            config.name
        )));
    }
    let schedule = DampingSchedule::new(config.damping.c, config.damping.alpha)?;
    let potential = config.potential.build()?;
    let source = config.source.build(potential.dim())?;
    if source.dim() != potential.dim() {
        return Err(Error::Shape { expected: potential.dim(), got: source.dim() });
    }
    let dim = potential.dim();
    if config.x0.len() != dim {
        return Err(Error::Config(format!("x0 has dimension {}, potential has {}", config.x0.len(), dim)));
    }
    if config.v0.len() != dim {
        return Err(Error::Config(format!("v0 has dimension {}, potential has {}", config.v0.len(), dim)));
    }
    if !(config.t_end.is_finite() && config.t_end >= 10.0) {
        return Err(Error::Config(format!("t_end must be finite and >= 10, got {}", config.t_end)));
    }

    let mut tags = Vec::with_capacity(config.tags.len());
    for raw in &config.tags {
        tags.push(TheoremTag::parse(raw)?);
    }
    if config.exploratory && !tags.is_empty() {
        return Err(Error::Config("exploratory scenarios must not declare theorem tags".into()));
    }

    let alpha = schedule.alpha();
    let mut nu = alpha;
    for tag in &tags {
        match tag {
            TheoremTag::T1 => {
                require_condition(&source, alpha, "T1")?;
            }
            TheoremTag::T2 { nu: tag_nu } => {
                let hi = (1.0 + alpha) / 2.0;
                if !(*tag_nu >= alpha && *tag_nu <= hi + 1e-12) {
                    return Err(Error::Hypothesis(format!(
                        "T2 requires nu in [alpha, (1+alpha)/2] = [{alpha}, {hi}], got {tag_nu}"
                    )));
                }
                require_condition(&source, *tag_nu, "T2")?;
                nu = *tag_nu;
            }
            TheoremTag::T3 => {
                require_condition(&source, alpha, "T3")?;
                if !potential.has_interior_argmin() {
                    return Err(Error::Hypothesis(
                        "T3 requires a potential whose argmin has nonempty interior".into(),
                    ));
                }
            }
            TheoremTag::T4 => {
                require_condition(&source, (1.0 + alpha) / 2.0, "T4")?;
                if !potential.is_even() {
                    return Err(Error::Hypothesis("T4 requires an even potential".into()));
                }
            }
        }
    }

    Ok(CompiledScenario {
        config: config.clone(),
        schedule,
        potential,
        source,
        x0: DVector::from_vec(config.x0.clone()),
        v0: DVector::from_vec(config.v0.clone()),
        tags,
        nu,
    })
}

fn require_condition(source: &SourceTerm, nu: f64, theorem: &str) -> Result<()> {
    let cond = satisfies_weighted_condition(source, nu)?;
    if !cond.holds {
        return Err(Error::Hypothesis(format!(
            "{theorem} requires the weighted source condition with exponent {nu} \
             (power decay needs beta > {})",
            nu + 1.0
        )));
    }
    Ok(())
}

impl CompiledScenario {
    pub fn solver_settings(&self) -> Result<SolverSettings> {
        let s = SolverSettings::for_horizon(self.config.t_end)?;
        let rel = self.config.solver.rel_tol.unwrap_or(DEFAULT_REL_TOL);
        let abs = self.config.solver.abs_tol.unwrap_or(DEFAULT_ABS_TOL);
        let mut s = s.with_tolerances(rel, abs)?;
        if let Some(ms) = self.config.solver.max_step {
            s.max_step = ms;
        }
        SolverSettings::new(s.rel_tol, s.abs_tol, s.max_step, s.checkpoints)
    }
}
