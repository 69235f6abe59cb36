//! Bernoulli utility families and ambiguity-sensitive preference
//! functionals.
//!
//! Three functional forms share one evaluation interface:
//!
//! * worst-case expected utility over the prior vertices, optionally
//!   restricted to a per-agent vertex selection;
//! * smooth ambiguity aversion, a weighted second-order aggregate of
//!   per-vertex expected utilities under a concave index;
//! * anchored utility, the worst-case expected gain over a reference
//!   plan.
//!
//! Superdifferentials are reported as generator lists: per-state vectors
//! whose convex hull spans the supergradients at the evaluation point.

use serde::{Deserialize, Serialize};

use crate::error::KwError;
use crate::scalar::{fp, Scalar};
use crate::state_space::{ContingentPlan, PriorSet};
use crate::Result;

/// Tiny negative slack absorbed when validating consumption plans.
const NEG_TOL: f64 = 1e-12;

/// One-dimensional Bernoulli utility on the nonnegative axis.
///
/// Every family is strictly increasing and concave; all but the
/// piecewise-linear family are strictly concave. The logarithmic family
/// (and power with coefficient above one) is unbounded below at zero, so
/// solvers clamp consumption away from the boundary for those families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BernoulliSpec<S: Scalar> {
    /// Constant relative risk aversion: `x^(1-gamma) / (1-gamma)`,
    /// `gamma > 0`, `gamma != 1` (use [`BernoulliSpec::Logarithmic`] for
    /// the unit coefficient).
    Power { gamma: S },
    /// Constant absolute risk aversion: `(1 - exp(-a x)) / a`, `a > 0`.
    Exponential { a: S },
    /// `sqrt(x)`.
    SquareRoot,
    /// `ln(x)`; violates continuity at zero consumption.
    Logarithmic,
    /// Concave piecewise-linear with `u(0) = 0`: `slopes[i]` applies
    /// between `kinks[i-1]` and `kinks[i]`. Slopes are positive and
    /// non-increasing; kinks strictly increase.
    PiecewiseLinear { kinks: Vec<S>, slopes: Vec<S> },
}

impl<S: Scalar> BernoulliSpec<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Power { gamma } => {
                if *gamma <= S::zero() || (*gamma - S::one()).abs() < fp(1e-12) {
                    return Err(KwError::InvalidParameter {
                        name: "gamma",
                        reason: format!(
                            "must be positive and different from 1, got {gamma}"
                        ),
                    });
                }
            }
            Self::Exponential { a } => {
                if *a <= S::zero() {
                    return Err(KwError::InvalidParameter {
                        name: "a",
                        reason: format!("must be positive, got {a}"),
                    });
                }
            }
            Self::SquareRoot | Self::Logarithmic => {}
            Self::PiecewiseLinear { kinks, slopes } => {
                if slopes.len() != kinks.len() + 1 {
                    return Err(KwError::InvalidParameter {
                        name: "slopes",
                        reason: "need exactly one more slope than kinks".into(),
                    });
                }
                if slopes.iter().any(|&s| s <= S::zero()) {
                    return Err(KwError::InvalidParameter {
                        name: "slopes",
                        reason: "slopes must be strictly positive".into(),
                    });
                }
                if slopes.windows(2).any(|w| w[1] > w[0]) {
                    return Err(KwError::InvalidParameter {
                        name: "slopes",
                        reason: "slopes must be non-increasing for concavity".into(),
                    });
                }
                if kinks.iter().any(|&k| k <= S::zero())
                    || kinks.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(KwError::InvalidParameter {
                        name: "kinks",
                        reason: "kinks must be positive and strictly increasing".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// True when value or slope blows up at zero consumption, so
    /// solvers must keep iterates strictly positive.
    pub fn requires_positive_consumption(&self) -> bool {
        match self {
            Self::Logarithmic => true,
            Self::Power { gamma } => *gamma > S::one(),
            _ => false,
        }
    }

    pub fn is_strictly_concave(&self) -> bool {
        !matches!(self, Self::PiecewiseLinear { .. })
    }

    /// Utility at `x >= 0`. Families that diverge at zero return
    /// negative infinity there.
    pub fn value(&self, x: S) -> S {
        match self {
            Self::Power { gamma } => {
                let p = S::one() - *gamma;
                x.powf(p) / p
            }
            Self::Exponential { a } => (S::one() - (-*a * x).exp()) / *a,
            Self::SquareRoot => x.sqrt(),
            Self::Logarithmic => x.ln(),
            Self::PiecewiseLinear { kinks, slopes } => {
                let mut total = S::zero();
                let mut lo = S::zero();
                for (i, &k) in kinks.iter().enumerate() {
                    if x <= k {
                        return total + slopes[i] * (x - lo);
                    }
                    total = total + slopes[i] * (k - lo);
                    lo = k;
                }
                total + slopes[kinks.len()] * (x - lo)
            }
        }
    }

    /// Marginal utility at `x > 0`. For the piecewise-linear family this
    /// is the right derivative, which is a valid supergradient slope at
    /// kinks as well.
    pub fn derivative(&self, x: S) -> S {
        match self {
            Self::Power { gamma } => x.powf(-*gamma),
            Self::Exponential { a } => (-*a * x).exp(),
            Self::SquareRoot => S::one() / (fp::<S>(2.0) * x.sqrt()),
            Self::Logarithmic => S::one() / x,
            Self::PiecewiseLinear { kinks, slopes } => {
                for (i, &k) in kinks.iter().enumerate() {
                    if x < k {
                        return slopes[i];
                    }
                }
                slopes[kinks.len()]
            }
        }
    }

    /// Curvature at `x > 0`. `None` for the piecewise-linear family,
    /// which has no second derivative at kinks and zero elsewhere.
    pub fn second_derivative(&self, x: S) -> Option<S> {
        match self {
            Self::Power { gamma } => Some(-*gamma * x.powf(-*gamma - S::one())),
            Self::Exponential { a } => Some(-*a * (-*a * x).exp()),
            Self::SquareRoot => {
                let x3 = x * x * x;
                Some(-S::one() / (fp::<S>(4.0) * x3.sqrt()))
            }
            Self::Logarithmic => Some(-S::one() / (x * x)),
            Self::PiecewiseLinear { .. } => None,
        }
    }

    /// Inverse of the marginal utility, where one exists in closed
    /// form. `None` for the piecewise-linear family, whose marginal is a
    /// step function.
    pub fn inverse_marginal(&self, m: S) -> Option<S> {
        if m <= S::zero() {
            return None;
        }
        match self {
            Self::Power { gamma } => Some(m.powf(-S::one() / *gamma)),
            Self::Exponential { a } => Some(-m.ln() / *a),
            Self::SquareRoot => {
                let half = S::one() / (fp::<S>(2.0) * m);
                Some(half * half)
            }
            Self::Logarithmic => Some(S::one() / m),
            Self::PiecewiseLinear { .. } => None,
        }
    }

    /// Statewise marginal utility of a strictly positive plan.
    pub fn marginal_plan(&self, c: &ContingentPlan<S>) -> ContingentPlan<S> {
        c.map(|x| self.derivative(x))
    }
}

/// Second-order ambiguity index for smooth preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AmbiguityIndex<S: Scalar> {
    /// Linear index; collapses the model to expected utility under the
    /// weight-averaged prior.
    Identity,
    /// `phi(x) = -exp(-theta x) / theta`, `theta > 0`; constant
    /// second-order absolute ambiguity aversion.
    NegativeExponential { theta: S },
}

impl<S: Scalar> AmbiguityIndex<S> {
    pub fn validate(&self) -> Result<()> {
        if let Self::NegativeExponential { theta } = self {
            if *theta <= S::zero() {
                return Err(KwError::InvalidParameter {
                    name: "theta",
                    reason: format!("must be positive, got {theta}"),
                });
            }
        }
        Ok(())
    }

    /// Exponent of the negative-exponential arm, saturated far above any
    /// economically meaningful range so the index and its derivatives
    /// stay finite for every float input.
    fn exponent(theta: S, x: S) -> S {
        let cap = S::max_value().ln() * fp::<S>(0.25);
        (-theta * x).min(cap)
    }

    pub fn value(&self, x: S) -> S {
        match self {
            Self::Identity => x,
            Self::NegativeExponential { theta } => -Self::exponent(*theta, x).exp() / *theta,
        }
    }

    pub fn derivative(&self, x: S) -> S {
        match self {
            Self::Identity => S::one(),
            Self::NegativeExponential { theta } => Self::exponent(*theta, x).exp(),
        }
    }

    pub fn second_derivative(&self, x: S) -> S {
        match self {
            Self::Identity => S::zero(),
            Self::NegativeExponential { theta } => -*theta * Self::exponent(*theta, x).exp(),
        }
    }
}

/// Attitude toward the prior set, layered on a Bernoulli utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PreferenceKind<S: Scalar> {
    /// Worst-case expected utility over the prior vertices; `selection`
    /// optionally restricts the worst case to a subset of vertex
    /// indices.
    Maxmin { selection: Option<Vec<usize>> },
    /// Weighted aggregate of per-vertex expected utilities through the
    /// ambiguity index; `weights` live on the vertex list and sum to
    /// one.
    Smooth {
        weights: Vec<S>,
        ambiguity: AmbiguityIndex<S>,
    },
    /// Worst-case expected utility gain over the anchor plan.
    Anchored { anchor: ContingentPlan<S> },
}

/// Complete preference description of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpec<S: Scalar> {
    pub bernoulli: BernoulliSpec<S>,
    pub kind: PreferenceKind<S>,
}

impl<S: Scalar> PreferenceSpec<S> {
    pub fn maxmin(bernoulli: BernoulliSpec<S>) -> Self {
        Self {
            bernoulli,
            kind: PreferenceKind::Maxmin { selection: None },
        }
    }

    /// Checks internal consistency against the economy's prior set.
    pub fn validate_against(&self, priors: &PriorSet<S>) -> Result<()> {
        self.bernoulli.validate()?;
        match &self.kind {
            PreferenceKind::Maxmin { selection } => {
                if let Some(sel) = selection {
                    if sel.is_empty() {
                        return Err(KwError::InvalidParameter {
                            name: "selection",
                            reason: "must select at least one vertex".into(),
                        });
                    }
                    if let Some(&bad) = sel.iter().find(|&&k| k >= priors.num_vertices()) {
                        return Err(KwError::InvalidParameter {
                            name: "selection",
                            reason: format!(
                                "vertex index {bad} out of range (have {})",
                                priors.num_vertices()
                            ),
                        });
                    }
                }
            }
            PreferenceKind::Smooth { weights, ambiguity } => {
                ambiguity.validate()?;
                if weights.len() != priors.num_vertices() {
                    return Err(KwError::DimensionMismatch {
                        expected: priors.num_vertices(),
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|&w| w < S::zero()) {
                    return Err(KwError::InvalidParameter {
                        name: "weights",
                        reason: "second-order weights must be nonnegative".into(),
                    });
                }
                let s: S = weights.iter().copied().sum();
                if (s - S::one()).abs() > fp(1e-9) {
                    return Err(KwError::InvalidParameter {
                        name: "weights",
                        reason: format!("second-order weights sum to {s}, expected 1"),
                    });
                }
            }
            PreferenceKind::Anchored { anchor } => {
                if anchor.len() != priors.state_count() {
                    return Err(KwError::DimensionMismatch {
                        expected: priors.state_count(),
                        got: anchor.len(),
                    });
                }
                if anchor.min_entry() <= S::zero() {
                    return Err(KwError::InvalidParameter {
                        name: "anchor",
                        reason: "anchor must be strictly positive".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Vertex indices the functional actually minimizes over.
    pub fn active_vertices(&self, priors: &PriorSet<S>) -> Vec<usize> {
        match &self.kind {
            PreferenceKind::Maxmin {
                selection: Some(sel),
            } => sel.clone(),
            _ => (0..priors.num_vertices()).collect(),
        }
    }

    /// Utility of a nonnegative consumption plan.
    pub fn utility(&self, priors: &PriorSet<S>, c: &ContingentPlan<S>) -> Result<S> {
        self.validate_against(priors)?;
        let c = checked_consumption(priors, c, &self.bernoulli)?;
        let u = c.map(|x| self.bernoulli.value(x));
        match &self.kind {
            PreferenceKind::Maxmin { .. } => {
                let sel = self.active_vertices(priors);
                Ok(sel
                    .iter()
                    .map(|&k| priors.expectation_under(k, &u))
                    .fold(S::infinity(), S::min))
            }
            PreferenceKind::Smooth { weights, ambiguity } => Ok((0..priors.num_vertices())
                .map(|k| {
                    weights[k] * ambiguity.value(priors.expectation_under(k, &u))
                })
                .sum()),
            PreferenceKind::Anchored { anchor } => {
                let gain = u.sub(&anchor.map(|x| self.bernoulli.value(x)));
                Ok(priors.inf_expectation(&gain)?.0)
            }
        }
    }

    /// Utility with consumption clamped to `floor` for families that
    /// diverge at zero; the clamp is the identity elsewhere.
    pub fn utility_clamped(
        &self,
        priors: &PriorSet<S>,
        c: &ContingentPlan<S>,
        floor: S,
    ) -> Result<S> {
        if self.bernoulli.requires_positive_consumption() {
            self.utility(priors, &c.map(|x| x.max(floor)))
        } else {
            self.utility(priors, c)
        }
    }

    /// Supergradient generators at a strictly positive plan.
    ///
    /// The superdifferential is the convex hull of the returned vectors.
    /// Worst-case kinds return one generator per minimizing vertex
    /// (every vertex within `tol` of the minimum); the smooth kind is
    /// differentiable and returns its single gradient.
    pub fn superdifferential(
        &self,
        priors: &PriorSet<S>,
        c: &ContingentPlan<S>,
        tol: S,
    ) -> Result<Vec<ContingentPlan<S>>> {
        self.validate_against(priors)?;
        if c.len() != priors.state_count() {
            return Err(KwError::DimensionMismatch {
                expected: priors.state_count(),
                got: c.len(),
            });
        }
        if c.min_entry() <= S::zero() {
            return Err(KwError::InvalidParameter {
                name: "consumption",
                reason: "superdifferential needs a strictly positive plan".into(),
            });
        }
        let marginal = self.bernoulli.marginal_plan(c);
        let weighted = |k: usize| -> ContingentPlan<S> {
            ContingentPlan::new(
                priors
                    .vertex(k)
                    .iter()
                    .zip(marginal.values())
                    .map(|(&p, &m)| p * m)
                    .collect(),
            )
            .expect("finite by construction")
        };
        match &self.kind {
            PreferenceKind::Maxmin { .. } => {
                let u = c.map(|x| self.bernoulli.value(x));
                let sel = self.active_vertices(priors);
                let exps: Vec<S> = sel
                    .iter()
                    .map(|&k| priors.expectation_under(k, &u))
                    .collect();
                let min = exps.iter().copied().fold(S::infinity(), S::min);
                Ok(sel
                    .iter()
                    .zip(&exps)
                    .filter(|(_, &e)| e - min <= tol)
                    .map(|(&k, _)| weighted(k))
                    .collect())
            }
            PreferenceKind::Smooth { weights, ambiguity } => {
                let u = c.map(|x| self.bernoulli.value(x));
                let mut grad = vec![S::zero(); c.len()];
                for k in 0..priors.num_vertices() {
                    let outer = weights[k] * ambiguity.derivative(priors.expectation_under(k, &u));
                    for (g, (&p, &m)) in grad
                        .iter_mut()
                        .zip(priors.vertex(k).iter().zip(marginal.values()))
                    {
                        *g = *g + outer * p * m;
                    }
                }
                Ok(vec![ContingentPlan::new(grad)?])
            }
            PreferenceKind::Anchored { anchor } => {
                let gain = c
                    .map(|x| self.bernoulli.value(x))
                    .sub(&anchor.map(|x| self.bernoulli.value(x)));
                let idx = priors.minimizing_vertices(&gain, tol)?;
                Ok(idx.into_iter().map(weighted).collect())
            }
        }
    }
}

/// Validates a consumption plan: dimensions, nonnegativity up to a tiny
/// slack (clamped to zero), and strict positivity for boundary-fragile
/// Bernoulli families.
fn checked_consumption<S: Scalar>(
    priors: &PriorSet<S>,
    c: &ContingentPlan<S>,
    bernoulli: &BernoulliSpec<S>,
) -> Result<ContingentPlan<S>> {
    if c.len() != priors.state_count() {
        return Err(KwError::DimensionMismatch {
            expected: priors.state_count(),
            got: c.len(),
        });
    }
    for (state, &v) in c.values().iter().enumerate() {
        if v < -fp::<S>(NEG_TOL) {
            return Err(KwError::NegativeEntry {
                what: "consumption",
                value: v.to_f64().unwrap_or(f64::NAN),
                state,
            });
        }
    }
    let clamped = c.map(|x| x.max(S::zero()));
    if bernoulli.requires_positive_consumption() && clamped.min_entry() <= S::zero() {
        return Err(KwError::InvalidParameter {
            name: "consumption",
            reason: "utility unbounded below at zero consumption for this family".into(),
        });
    }
    Ok(clamped)
}

/// An agent: strictly positive endowment plus preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent<S: Scalar> {
    pub endowment: ContingentPlan<S>,
    pub preference: PreferenceSpec<S>,
}

impl<S: Scalar> Agent<S> {
    pub fn new(endowment: ContingentPlan<S>, preference: PreferenceSpec<S>) -> Result<Self> {
        if endowment.min_entry() <= S::zero() {
            return Err(KwError::InvalidParameter {
                name: "endowment",
                reason: "must be strictly positive in every state".into(),
            });
        }
        preference.bernoulli.validate()?;
        Ok(Self {
            endowment,
            preference,
        })
    }

    pub fn utility(&self, priors: &PriorSet<S>, c: &ContingentPlan<S>) -> Result<S> {
        self.preference.utility(priors, c)
    }

    pub fn superdifferential(
        &self,
        priors: &PriorSet<S>,
        c: &ContingentPlan<S>,
        tol: S,
    ) -> Result<Vec<ContingentPlan<S>>> {
        self.preference.superdifferential(priors, c, tol)
    }
}
