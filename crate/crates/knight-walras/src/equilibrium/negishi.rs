//! Arrow-Debreu solver for a single prior, by Negishi iteration.
//!
//! For Pareto weights `alpha` the statewise efficient allocation
//! equalizes weighted marginal utilities at a common level `m`; that
//! level is a monotone one-dimensional root per state. The state price
//! is the common marginal itself: with the budget `E^P[psi (c - e)]`
//! carrying the prior already, the first-order condition
//! `P u'(c) = lambda (P psi)` pins `psi` proportional to `u'(c)`, not
//! to `P u'(c)`. Weights then adjust multiplicatively on budget
//! surpluses until every agent's budget binds.

use crate::error::KwError;
use crate::markets::Economy;
use crate::preferences::Agent;
use crate::scalar::{fp, Scalar};
use crate::state_space::{ContingentPlan, StatePrice};
use crate::Result;

use super::{Equilibrium, SolverConfig};

/// Relative width at which the statewise root search stops.
const BISECT_TOL: f64 = 1e-12;

/// Computes the Arrow-Debreu equilibrium of the economy under the
/// given prior via Negishi iteration.
///
/// Requires differentiable, strictly concave Bernoulli utilities (an
/// invertible marginal); piecewise-linear families are rejected. Market
/// clearing is exact by construction; convergence is measured on the
/// budget surpluses and flagged on the returned equilibrium rather than
/// raised as an error.
pub fn solve_ad<S: Scalar>(
    economy: &Economy<S>,
    prior: &[S],
    config: &SolverConfig<S>,
) -> Result<Equilibrium<S>> {
    config.validate()?;
    let n = economy.state_count();
    let agents = economy.agents();
    if prior.len() != n {
        return Err(KwError::DimensionMismatch {
            expected: n,
            got: prior.len(),
        });
    }
    let mass: S = prior.iter().copied().fold(S::zero(), |a, b| a + b);
    if (mass - S::one()).abs() > fp(1e-9) || prior.iter().any(|&p| p < S::zero()) {
        return Err(KwError::InvalidProbability {
            index: 0,
            reason: "prior must be a probability vector".into(),
        });
    }
    for agent in agents {
        if agent.preference.bernoulli.inverse_marginal(S::one()).is_none() {
            return Err(KwError::InvalidParameter {
                name: "solve_ad",
                reason: "needs a strictly concave differentiable Bernoulli utility".into(),
            });
        }
    }

    let total = economy.aggregate_endowment();
    let mut alpha = vec![S::one() / fp(agents.len() as f64); agents.len()];
    let mut best: Option<(S, Equilibrium<S>)> = None;

    for _ in 0..config.max_outer {
        let mut marginals = Vec::with_capacity(n);
        let mut allocation = vec![Vec::with_capacity(n); agents.len()];
        for w in 0..n {
            let m = common_marginal(agents, &alpha, total[w]);
            for (i, agent) in agents.iter().enumerate() {
                allocation[i].push(share(agent, alpha[i], m));
            }
            marginals.push(m);
        }
        let psi = StatePrice::new(marginals)?.normalized()?;

        let mut surplus = vec![S::zero(); agents.len()];
        let mut wealth = vec![S::zero(); agents.len()];
        for (i, agent) in agents.iter().enumerate() {
            for w in 0..n {
                let weight = prior[w] * psi.values()[w];
                surplus[i] = surplus[i] + weight * (agent.endowment[w] - allocation[i][w]);
                wealth[i] = wealth[i] + weight * agent.endowment[w];
            }
        }
        let deviation = surplus
            .iter()
            .map(|s| s.abs())
            .fold(S::zero(), S::max);

        let plans: Vec<ContingentPlan<S>> = allocation
            .into_iter()
            .map(ContingentPlan::new)
            .collect::<Result<_>>()?;
        let mut z = ContingentPlan::zero(n);
        for (plan, agent) in plans.iter().zip(agents) {
            z = z.add(&plan.sub(&agent.endowment));
        }
        let clearing_gap = z.values().iter().map(|v| v.abs()).fold(S::zero(), S::max);
        let residual = deviation.max(clearing_gap);

        if best.as_ref().map_or(true, |(r, _)| residual < *r) {
            let weights_mass: S = alpha.iter().copied().fold(S::zero(), |a, b| a + b);
            best = Some((
                residual,
                Equilibrium {
                    psi: psi.clone(),
                    allocation: plans,
                    worst_prior: prior.to_vec(),
                    disposal: z.map(|v| (-v).max(S::zero())),
                    welfare_weights: Some(alpha.iter().map(|&a| a / weights_mass).collect()),
                    residual,
                    converged: residual <= config.residual_tol,
                },
            ));
        }
        if residual <= config.residual_tol {
            break;
        }

        for i in 0..agents.len() {
            if wealth[i] <= S::zero() {
                continue;
            }
            let step = (S::one() + config.damping * surplus[i] / wealth[i])
                .max(fp(0.1))
                .min(fp(10.0));
            alpha[i] = alpha[i] * step;
        }
        let mass: S = alpha.iter().copied().fold(S::zero(), |a, b| a + b);
        for a in alpha.iter_mut() {
            *a = *a / mass;
        }
    }

    Ok(best.expect("at least one Negishi iterate").1)
}

/// Consumption of one agent at the common weighted marginal level `m`,
/// clamped at zero where the corner condition `alpha u'(0) <= m` takes
/// over (relevant for bounded marginals such as the exponential
/// family).
fn share<S: Scalar>(agent: &Agent<S>, alpha: S, m: S) -> S {
    agent
        .preference
        .bernoulli
        .inverse_marginal(m / alpha)
        .expect("invertibility checked on entry")
        .max(S::zero())
}

/// Root of `sum_i c_i(m) = supply` in `m`; the left side is strictly
/// decreasing, so bracket doubling plus bisection suffices.
fn common_marginal<S: Scalar>(agents: &[Agent<S>], alpha: &[S], supply: S) -> S {
    let demand_at = |m: S| -> S {
        agents
            .iter()
            .zip(alpha)
            .map(|(agent, &a)| share(agent, a, m))
            .fold(S::zero(), |acc, c| acc + c)
    };
    let mut hi = S::one();
    let mut guard = 0;
    while demand_at(hi) > supply && guard < 400 {
        hi = hi * fp(2.0);
        guard += 1;
    }
    let mut lo = hi / fp(2.0);
    guard = 0;
    while demand_at(lo) < supply && guard < 400 {
        lo = lo / fp(2.0);
        guard += 1;
    }
    for _ in 0..200 {
        if hi - lo <= hi * fp(BISECT_TOL) {
            break;
        }
        let mid = (lo + hi) / fp(2.0);
        if demand_at(mid) > supply {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / fp(2.0)
}
