//! Scenario file schema and its translation into an [`Economy64`].
//!
//! Scenarios are JSON with a strict schema: unknown fields are rejected
//! so a typo fails loudly instead of silently falling back to a
//! default. The schema mirrors the library constructors; everything a
//! scenario can express maps onto one [`Economy64`] plus optional
//! solver overrides and an experiment block.

use knight_walras::equilibrium::SolverConfig;
use knight_walras::markets::ClearingConvention;
use knight_walras::preferences::{
    Agent, AmbiguityIndex, BernoulliSpec, PreferenceKind, PreferenceSpec,
};
use knight_walras::state_space::ContingentPlan;
use knight_walras::{Economy64, PriorSet64, Result};
use serde::{Deserialize, Serialize};

/// Top-level scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Number of states; every vector in the file must have this length.
    pub states: usize,
    pub priors: PriorSpec,
    pub agents: Vec<AgentSpec>,
    pub clearing: ConventionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
}

/// Prior polytope: an explicit vertex list or a two-state interval
/// family around a center prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSpec {
    Vertices(Vec<Vec<f64>>),
    IntervalFamily { center: Vec<f64>, epsilon: f64 },
}

/// One agent: endowment, preference kind, and Bernoulli utility.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub endowment: Vec<f64>,
    pub preference: PreferenceKindSpec,
    pub bernoulli: BernoulliFamilySpec,
}

/// Preference functional, tagged by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreferenceKindSpec {
    /// Worst case over the prior vertices, optionally restricted to the
    /// listed vertex indices.
    Maxmin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selection: Option<Vec<usize>>,
    },
    /// Smooth ambiguity with one weight per prior vertex.
    Smooth {
        weights: Vec<f64>,
        ambiguity: AmbiguitySpec,
    },
    /// Worst-case gain over the anchor plan.
    Anchored { anchor: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbiguitySpec {
    Identity,
    NegativeExponential { theta: f64 },
}

/// Bernoulli utility, tagged by `family`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BernoulliFamilySpec {
    Power { gamma: f64 },
    Exponential { a: f64 },
    SquareRoot,
    Logarithmic,
    PiecewiseLinear { kinks: Vec<f64>, slopes: Vec<f64> },
}

/// Market clearing convention; the same words the `--convention` flag
/// accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionSpec {
    Disposal,
    Equality,
}

impl ConventionSpec {
    pub fn to_convention(self) -> ClearingConvention {
        match self {
            ConventionSpec::Disposal => ClearingConvention::FreeDisposal,
            ConventionSpec::Equality => ClearingConvention::Equality,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConventionSpec::Disposal => "disposal",
            ConventionSpec::Equality => "equality",
        }
    }
}

/// Optional solver knobs; absent fields keep the library defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Inputs for the `sweep` and `sample` subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Epsilon grid for `sweep`; must contain 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_grid: Option<Vec<f64>>,
    /// Endowment resampling scheme for `sample`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSpec>,
    /// Number of draws for `sample`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Additive mean-zero jitter per state, aggregate preserved.
    Continuous { jitter: f64 },
    /// Constant individual endowments splitting the aggregate.
    ConstantIndividual,
}

impl SamplerSpec {
    pub fn to_sampler(&self) -> knight_walras::analysis::EndowmentSampler<f64> {
        match self {
            SamplerSpec::Continuous { jitter } => {
                knight_walras::analysis::EndowmentSampler::Continuous { jitter: *jitter }
            }
            SamplerSpec::ConstantIndividual => {
                knight_walras::analysis::EndowmentSampler::ConstantIndividual
            }
        }
    }
}

/// Two-state interval family around `center`: first-state mass ranges
/// over `[center[0] - eps, center[0] + eps]`. Vertex validation happens
/// in the prior constructor; `eps = 0` collapses to the singleton.
pub fn interval_priors(center: &[f64], eps: f64) -> Result<PriorSet64> {
    if center.len() != 2 {
        return Err(knight_walras::KwError::InvalidParameter {
            name: "center",
            reason: format!(
                "the interval family is two-state, center has {} entries",
                center.len()
            ),
        });
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(knight_walras::KwError::InvalidParameter {
            name: "epsilon",
            reason: format!("must be finite and nonnegative, got {eps}"),
        });
    }
    PriorSet64::from_vertices(vec![
        vec![center[0] - eps, center[1] + eps],
        vec![center[0] + eps, center[1] - eps],
    ])
}

impl PriorSpec {
    /// Builds the prior set this spec describes at face value.
    pub fn build(&self, states: usize) -> Result<PriorSet64> {
        match self {
            PriorSpec::Vertices(vertices) => {
                for v in vertices {
                    if v.len() != states {
                        return Err(knight_walras::KwError::DimensionMismatch {
                            expected: states,
                            got: v.len(),
                        });
                    }
                }
                PriorSet64::from_vertices(vertices.clone())
            }
            PriorSpec::IntervalFamily { center, epsilon } => {
                if states != 2 {
                    return Err(knight_walras::KwError::InvalidParameter {
                        name: "states",
                        reason: format!("the interval family needs 2 states, scenario has {states}"),
                    });
                }
                interval_priors(center, *epsilon)
            }
        }
    }

    /// Epsilon-indexed family for sweeps: the interval spec varies its
    /// half-width, an explicit vertex list is the constant family.
    pub fn family(&self, states: usize) -> impl Fn(f64) -> Result<PriorSet64> + '_ {
        move |eps: f64| match self {
            PriorSpec::Vertices(_) => self.build(states),
            PriorSpec::IntervalFamily { center, .. } => interval_priors(center, eps),
        }
    }
}

impl BernoulliFamilySpec {
    pub fn to_bernoulli(&self) -> BernoulliSpec<f64> {
        match self {
            BernoulliFamilySpec::Power { gamma } => BernoulliSpec::Power { gamma: *gamma },
            BernoulliFamilySpec::Exponential { a } => BernoulliSpec::Exponential { a: *a },
            BernoulliFamilySpec::SquareRoot => BernoulliSpec::SquareRoot,
            BernoulliFamilySpec::Logarithmic => BernoulliSpec::Logarithmic,
            BernoulliFamilySpec::PiecewiseLinear { kinks, slopes } => {
                BernoulliSpec::PiecewiseLinear {
                    kinks: kinks.clone(),
                    slopes: slopes.clone(),
                }
            }
        }
    }
}

impl PreferenceKindSpec {
    pub fn to_kind(&self) -> Result<PreferenceKind<f64>> {
        Ok(match self {
            PreferenceKindSpec::Maxmin { selection } => PreferenceKind::Maxmin {
                selection: selection.clone(),
            },
            PreferenceKindSpec::Smooth { weights, ambiguity } => PreferenceKind::Smooth {
                weights: weights.clone(),
                ambiguity: match ambiguity {
                    AmbiguitySpec::Identity => AmbiguityIndex::Identity,
                    AmbiguitySpec::NegativeExponential { theta } => {
                        AmbiguityIndex::NegativeExponential { theta: *theta }
                    }
                },
            },
            PreferenceKindSpec::Anchored { anchor } => PreferenceKind::Anchored {
                anchor: ContingentPlan::new(anchor.clone())?,
            },
        })
    }
}

impl ScenarioFile {
    /// Builds the economy, honoring a `--convention` override.
    pub fn build_economy(&self, convention: Option<ConventionSpec>) -> Result<Economy64> {
        if self.states == 0 {
            return Err(knight_walras::KwError::EmptyStateSpace);
        }
        let priors = self.priors.build(self.states)?;
        let mut agents = Vec::with_capacity(self.agents.len());
        for spec in &self.agents {
            if spec.endowment.len() != self.states {
                return Err(knight_walras::KwError::DimensionMismatch {
                    expected: self.states,
                    got: spec.endowment.len(),
                });
            }
            agents.push(Agent::new(
                ContingentPlan::new(spec.endowment.clone())?,
                PreferenceSpec {
                    bernoulli: spec.bernoulli.to_bernoulli(),
                    kind: spec.preference.to_kind()?,
                },
            )?);
        }
        let clearing = convention.unwrap_or(self.clearing).to_convention();
        Economy64::new(agents, priors, clearing)
    }

    /// Solver config: defaults, then file overrides, then flags.
    pub fn solver_config(
        &self,
        seed_flag: Option<u64>,
        tolerance_flag: Option<f64>,
    ) -> SolverConfig<f64> {
        let mut cfg = SolverConfig::default();
        if let Some(o) = &self.solver {
            if let Some(v) = o.damping {
                cfg.damping = v;
            }
            if let Some(v) = o.temperature {
                cfg.temperature = v;
            }
            if let Some(v) = o.max_outer {
                cfg.max_outer = v;
            }
            if let Some(v) = o.residual_tol {
                cfg.residual_tol = v;
            }
            if let Some(v) = o.truncation {
                cfg.truncation = v;
            }
            if let Some(v) = o.refine_depth {
                cfg.refine_depth = v;
            }
            if let Some(v) = o.seed {
                cfg.seed = v;
            }
        }
        if let Some(seed) = seed_flag.or_else(|| self.experiment.as_ref().and_then(|e| e.seed)) {
            cfg.seed = seed;
        }
        if let Some(tol) = tolerance_flag {
            cfg.residual_tol = tol;
        }
        cfg
    }
}

/// Candidate price and allocation for `verify`, as a bare file. The
/// command also accepts a full solve report and extracts its
/// equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateFile {
    pub psi: Vec<f64>,
    pub allocation: Vec<Vec<f64>>,
}
