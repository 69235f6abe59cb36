//! Budget sets, demand, and aggregate excess demand under sublinear
//! prices.
//!
//! The budget requirement `E[psi (c - e)] <= 0` is one linear
//! constraint per prior vertex, so demand is a concave program over a
//! polytope inside the truncation box `[0, cap]`. Demand can be
//! set-valued; among the optima it finds, this module returns the one
//! with the minimal-norm net trade, which keeps solver output
//! reproducible.

use serde::Serialize;

use crate::error::KwError;
use crate::optimization::{
    maximize_concave, solve_lp, stationarity_certificate, ConcaveProgram, LinearConstraint,
    LinearProgram, LinearScalar, LpSolution, SolveConfig, SolveStatus,
};
use crate::preferences::{Agent, BernoulliSpec, PreferenceKind, PreferenceSpec};
use crate::scalar::{dot, fp, Scalar};
use crate::state_space::{ContingentPlan, PriorSet, StatePrice};
use crate::Result;

/// Slack for budget membership tests.
pub const BUDGET_TOL: f64 = 1e-9;
/// Default multiplier on the aggregate endowment for the truncation
/// box.
pub const DEFAULT_TRUNCATION: f64 = 2.0;
/// Relative utility slack under which candidate optima count as tied.
const TIE_TOL: f64 = 1e-9;
/// Strictly positive floor applied before utility evaluation inside
/// the ascent engine, where iterates may touch the box boundary.
const EVAL_FLOOR: f64 = 1e-12;

/// Market clearing rule used for equilibrium feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClearingConvention {
    /// Aggregate net trade `<= 0` statewise; leftovers are disposed.
    FreeDisposal,
    /// Aggregate net trade `= 0` statewise.
    Equality,
}

/// Exchange economy: agents sharing one prior set and a clearing rule.
#[derive(Debug, Clone)]
pub struct Economy<S: Scalar> {
    agents: Vec<Agent<S>>,
    priors: PriorSet<S>,
    clearing: ClearingConvention,
    /// Aggregate endowment, strictly positive.
    aggregate: ContingentPlan<S>,
}

impl<S: Scalar> Economy<S> {
    pub fn new(
        agents: Vec<Agent<S>>,
        priors: PriorSet<S>,
        clearing: ClearingConvention,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(KwError::InvalidEconomy("need at least one agent".into()));
        }
        let n = priors.state_count();
        let mut aggregate = ContingentPlan::zero(n);
        for (i, agent) in agents.iter().enumerate() {
            if agent.endowment.len() != n {
                return Err(KwError::InvalidEconomy(format!(
                    "agent {i}: endowment covers {} states, priors cover {n}",
                    agent.endowment.len()
                )));
            }
            agent
                .preference
                .validate_against(&priors)
                .map_err(|e| KwError::InvalidEconomy(format!("agent {i}: {e}")))?;
            aggregate = aggregate.add(&agent.endowment);
        }
        if aggregate.min_entry() <= S::zero() {
            return Err(KwError::InvalidEconomy(
                "aggregate endowment must be strictly positive".into(),
            ));
        }
        Ok(Self {
            agents,
            priors,
            clearing,
            aggregate,
        })
    }

    pub fn agents(&self) -> &[Agent<S>] {
        &self.agents
    }

    pub fn priors(&self) -> &PriorSet<S> {
        &self.priors
    }

    pub fn clearing(&self) -> ClearingConvention {
        self.clearing
    }

    pub fn aggregate_endowment(&self) -> &ContingentPlan<S> {
        &self.aggregate
    }

    pub fn state_count(&self) -> usize {
        self.priors.state_count()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }
}

/// Outcome of one agent's utility maximization over the budget set.
#[derive(Debug, Clone, Serialize)]
pub struct DemandResult<S: Scalar> {
    pub plan: ContingentPlan<S>,
    pub utility_value: S,
    /// Prior vertices attaining the budget maximum at the plan.
    pub active_budget_priors: Vec<usize>,
    /// Vertices attaining the worst-case utility at the plan; empty for
    /// the smooth kind, which has no worst case.
    pub active_min_priors: Vec<usize>,
    /// Stationarity multipliers: budget rows, then lower bounds, then
    /// upper bounds of the truncation box.
    pub kkt: Vec<S>,
    /// Statewise trade bill `psi (plan - e)`.
    pub net_trade_value: ContingentPlan<S>,
}

/// Sublinear value of a net trade, `E[psi (c - e)]`.
///
/// Membership in the budget set is `budget_value <= tol`.
pub fn budget_value<S: Scalar>(
    psi: &StatePrice<S>,
    priors: &PriorSet<S>,
    e: &ContingentPlan<S>,
    c: &ContingentPlan<S>,
) -> Result<S> {
    if c.len() != e.len() {
        return Err(KwError::DimensionMismatch {
            expected: e.len(),
            got: c.len(),
        });
    }
    for (state, &v) in c.values().iter().enumerate() {
        if v < -fp::<S>(1e-12) {
            return Err(KwError::NegativeEntry {
                what: "consumption",
                value: v.to_f64().unwrap_or(f64::NAN),
                state,
            });
        }
    }
    psi.price(priors, &c.sub(e))
}

/// One budget halfspace per prior vertex: `(P_k . psi) . c <= (P_k . psi) . e`.
fn budget_rows<S: Scalar>(
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    e: &ContingentPlan<S>,
) -> Vec<LinearConstraint<S>> {
    (0..priors.num_vertices())
        .map(|k| {
            let normal: Vec<S> = priors
                .vertex(k)
                .iter()
                .zip(psi.values())
                .map(|(&p, &w)| p * w)
                .collect();
            let offset = dot(&normal, e.values());
            LinearConstraint { normal, offset }
        })
        .collect()
}

/// Utility maximization over the budget set intersected with
/// `[0, cap]`, started from the endowment.
pub fn demand<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    cap: &ContingentPlan<S>,
) -> Result<DemandResult<S>> {
    demand_with(agent, priors, psi, cap, &SolveConfig::default())
}

/// [`demand`] with explicit engine tolerances; `config.start` replaces
/// the endowment as the warm start when present.
pub fn demand_with<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    cap: &ContingentPlan<S>,
    config: &SolveConfig<S>,
) -> Result<DemandResult<S>> {
    let n = priors.state_count();
    for (what, len) in [
        ("endowment", agent.endowment.len()),
        ("state price", psi.len()),
        ("truncation cap", cap.len()),
    ] {
        if len != n {
            return Err(KwError::InvalidParameter {
                name: "demand",
                reason: format!("{what} covers {len} states, priors cover {n}"),
            });
        }
    }
    agent.preference.validate_against(priors)?;
    if (0..n).any(|w| agent.endowment[w] > cap[w]) {
        return Err(KwError::Infeasible(
            "endowment lies outside the truncation box".into(),
        ));
    }
    // Demand is homogeneous of degree zero in the price, so the solve
    // runs at the simplex normalization; rescaled prices then follow
    // the same floating-point path. Reporting stays at the caller's
    // scale.
    let psi_norm = if psi.total() > S::zero() {
        psi.normalized()?
    } else {
        psi.clone()
    };
    let plan = optimal_plan(agent, priors, &psi_norm, cap, config, 0)?;
    assemble(agent, priors, psi, cap, plan, config)
}

/// Solves for the plan, pushes the budget to binding, re-solves once on
/// contact with the truncation box, and applies the minimal-norm
/// tie-break against autarky.
fn optimal_plan<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    cap: &ContingentPlan<S>,
    config: &SolveConfig<S>,
    depth: usize,
) -> Result<ContingentPlan<S>> {
    let e = &agent.endowment;
    let rows = budget_rows(priors, psi, e);
    let pwl = matches!(agent.preference.bernoulli, BernoulliSpec::PiecewiseLinear { .. });
    let mut plan = if pwl && !matches!(agent.preference.kind, PreferenceKind::Smooth { .. }) {
        kinked_demand_lp(agent, priors, cap, &rows)?
    } else if priors.is_singleton() && !pwl {
        singleton_demand(agent, priors, psi, cap)?
    } else {
        let coarse = engine_demand(agent, priors, cap, &rows, config)?;
        newton_refine(&agent.preference, priors, &rows, cap, &coarse).unwrap_or(coarse)
    };
    push_to_binding(&mut plan, &rows, cap);

    let utility =
        |p: &ContingentPlan<S>| agent.preference.utility_clamped(priors, p, fp(EVAL_FLOOR));
    let mut best_value = utility(&plan)?;

    // Truncation guard: an optimum on the box face is re-solved in a
    // doubled box; by concavity any strictly better untruncated point
    // shows up as a strictly better point there.
    let touches = (0..cap.len()).any(|w| cap[w] - plan[w] <= fp::<S>(1e-7) * cap[w].abs().max(S::one()));
    if depth < 2 && touches {
        let wider = optimal_plan(agent, priors, psi, &cap.scale(fp(2.0)), config, depth + 1)?;
        let wider_value = utility(&wider)?;
        if wider_value > best_value + fp::<S>(1e-9) * best_value.abs().max(S::one()) {
            plan = wider;
            best_value = wider_value;
        }
    }

    // Minimal-norm tie-break: autarky has zero net trade, so it wins
    // whenever it matches the found optimum.
    let autarky_value = utility(e)?;
    if autarky_value >= best_value - fp::<S>(TIE_TOL) * best_value.abs().max(S::one()) {
        plan = e.clone();
    }
    Ok(plan)
}

/// Moves the plan along the constant direction `+1` until the worst
/// budget row binds; strict monotonicity makes this a free improvement.
/// The move is clamped to the truncation box.
fn push_to_binding<S: Scalar>(
    plan: &mut ContingentPlan<S>,
    rows: &[LinearConstraint<S>],
    cap: &ContingentPlan<S>,
) {
    let n = plan.len();
    let mut t = S::infinity();
    for row in rows {
        let total: S = row.normal.iter().copied().sum();
        if total > fp(1e-14) {
            let slack = row.offset - dot(&row.normal, plan.values());
            t = t.min(slack / total);
        }
    }
    if !t.is_finite() {
        return;
    }
    for w in 0..n {
        t = t.min(cap[w] - plan[w]);
        t = t.max(-plan[w]);
    }
    if t.abs() > S::zero() {
        *plan = plan.map(|x| x + t).map(|x| x.max(S::zero()));
    }
}

/// Generic path: projected supergradient ascent on the preference over
/// the budget polytope.
fn engine_demand<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    cap: &ContingentPlan<S>,
    rows: &[LinearConstraint<S>],
    config: &SolveConfig<S>,
) -> Result<ContingentPlan<S>> {
    let program = demand_program(&agent.preference, priors, cap, rows.to_vec());
    let mut cfg = config.clone();
    if cfg.start.is_none() {
        cfg.start = Some(agent.endowment.values().to_vec());
    }
    let res = maximize_concave(&program, &cfg)?;
    if res.status == SolveStatus::Infeasible {
        return Err(KwError::Infeasible(
            "budget set misses the truncation box".into(),
        ));
    }
    ContingentPlan::new(res.point)
}

/// The concave program behind [`engine_demand`]; also reused to certify
/// plans produced by the closed-form shortcuts.
fn demand_program<'a, S: Scalar + LinearScalar>(
    pref: &'a PreferenceSpec<S>,
    priors: &'a PriorSet<S>,
    cap: &ContingentPlan<S>,
    rows: Vec<LinearConstraint<S>>,
) -> ConcaveProgram<'a, S> {
    let floor = fp::<S>(EVAL_FLOOR);
    let positive = move |x: &[S]| -> ContingentPlan<S> {
        ContingentPlan::new(x.iter().map(|&v| v.max(floor)).collect())
            .expect("floored plan is finite")
    };
    let n = cap.len();
    ConcaveProgram {
        objective: Box::new(move |x: &[S]| {
            let plan = positive(x);
            let value = pref
                .utility(priors, &plan)
                .expect("floored plan is strictly positive");
            let grads = pref
                .superdifferential(priors, &plan, fp(1e-9))
                .expect("floored plan is strictly positive");
            (value, grads[0].values().to_vec())
        }),
        generators: Some(Box::new(move |x: &[S]| {
            let plan = positive(x);
            pref.superdifferential(priors, &plan, fp(1e-9))
                .expect("floored plan is strictly positive")
                .into_iter()
                .map(ContingentPlan::into_values)
                .collect()
        })),
        constraints: rows,
        lower: vec![S::zero(); n],
        upper: cap.values().to_vec(),
    }
}

/// Sharpens an ascent-engine point to the accuracy of the active face.
///
/// The engine localizes the optimum to a face of the feasible set; the
/// exact optimum there solves a square first-order system: stationarity
/// on the unpinned coordinates, equal expected utility across the tied
/// worst-case vertices, and equality on the active budget rows. Newton
/// on that system converges to machine precision, which makes demand
/// reproducible under price rescaling. Any sign of trouble (no
/// curvature, a singular system, lost feasibility, negative
/// multipliers, or a utility drop) returns `None` and keeps the engine
/// point.
fn newton_refine<S: Scalar + LinearScalar>(
    pref: &PreferenceSpec<S>,
    priors: &PriorSet<S>,
    rows: &[LinearConstraint<S>],
    cap: &ContingentPlan<S>,
    plan: &ContingentPlan<S>,
) -> Option<ContingentPlan<S>> {
    pref.bernoulli.second_derivative(S::one())?;
    let n = plan.len();
    let mut pinned: Vec<Option<S>> = vec![None; n];
    for w in 0..n {
        if plan[w] <= fp(1e-8) {
            pinned[w] = Some(S::zero());
        } else if cap[w] - plan[w] <= fp::<S>(1e-8) * cap[w].abs().max(S::one()) {
            pinned[w] = Some(cap[w]);
        }
    }
    let free: Vec<usize> = (0..n).filter(|&w| pinned[w].is_none()).collect();
    if free.is_empty() {
        return None;
    }
    if pref.bernoulli.requires_positive_consumption()
        && pinned.iter().any(|p| matches!(p, Some(v) if *v <= S::zero()))
    {
        return None;
    }
    let active: Vec<usize> = (0..rows.len())
        .filter(|&b| {
            let slack = rows[b].offset - dot(&rows[b].normal, plan.values());
            slack.abs() <= fp::<S>(1e-6) * rows[b].offset.abs().max(S::one())
        })
        .collect();

    let refined = match &pref.kind {
        PreferenceKind::Smooth { weights, ambiguity } => newton_smooth(
            pref, priors, rows, &pinned, &free, &active, plan, weights, ambiguity,
        ),
        PreferenceKind::Maxmin { .. } | PreferenceKind::Anchored { .. } => {
            newton_worst_case(pref, priors, rows, &pinned, &free, &active, plan)
        }
    }?;

    // The refined point must be a feasibility-and-utility improvement.
    let clamped = ContingentPlan::new(
        (0..n)
            .map(|w| refined[w].max(S::zero()).min(cap[w]))
            .collect::<Vec<S>>(),
    )
    .ok()?;
    for (w, &v) in refined.iter().enumerate() {
        if (v - clamped[w]).abs() > fp(1e-9) {
            return None;
        }
    }
    for row in rows {
        if dot(&row.normal, clamped.values()) - row.offset
            > fp::<S>(1e-9) * row.offset.abs().max(S::one())
        {
            return None;
        }
    }
    let before = pref.utility_clamped(priors, plan, fp(EVAL_FLOOR)).ok()?;
    let after = pref.utility_clamped(priors, &clamped, fp(EVAL_FLOOR)).ok()?;
    if after < before - fp::<S>(1e-10) * before.abs().max(S::one()) {
        return None;
    }
    Some(clamped)
}

/// Newton driver: damped iteration on a square residual system.
fn newton_drive<S: Scalar>(
    mut y: Vec<S>,
    res_jac: impl Fn(&[S]) -> Option<(Vec<S>, Vec<Vec<S>>)>,
) -> Option<Vec<S>> {
    let mut norm = {
        let (r, _) = res_jac(&y)?;
        crate::scalar::linf_norm(&r)
    };
    for _ in 0..40 {
        if norm <= fp(1e-12) {
            return Some(y);
        }
        let (r, jac) = res_jac(&y)?;
        let neg: Vec<S> = r.iter().map(|&v| -v).collect();
        let step = crate::optimization::solve_dense(&jac, &neg)?;
        let mut alpha = S::one();
        let mut improved = false;
        for _ in 0..8 {
            let trial: Vec<S> = y
                .iter()
                .zip(&step)
                .map(|(&v, &s)| v + alpha * s)
                .collect();
            if let Some((rt, _)) = res_jac(&trial) {
                let tn = crate::scalar::linf_norm(&rt);
                if tn < norm {
                    y = trial;
                    norm = tn;
                    improved = true;
                    break;
                }
            }
            alpha = alpha * fp(0.5);
        }
        if !improved {
            break;
        }
    }
    if norm <= fp(1e-10) {
        Some(y)
    } else {
        None
    }
}

/// First-order system for the worst-case kinds: stationarity with
/// convex weights over the tied vertices plus budget equalities.
#[allow(clippy::too_many_arguments)]
fn newton_worst_case<S: Scalar + LinearScalar>(
    pref: &PreferenceSpec<S>,
    priors: &PriorSet<S>,
    rows: &[LinearConstraint<S>],
    pinned: &[Option<S>],
    free: &[usize],
    active: &[usize],
    plan: &ContingentPlan<S>,
) -> Option<Vec<S>> {
    let n = plan.len();
    let bern = &pref.bernoulli;
    let shift: Vec<S> = match &pref.kind {
        PreferenceKind::Anchored { anchor } => {
            let ua = anchor.map(|x| bern.value(x));
            (0..priors.num_vertices())
                .map(|k| priors.expectation_under(k, &ua))
                .collect()
        }
        _ => vec![S::zero(); priors.num_vertices()],
    };
    let sel = pref.active_vertices(priors);
    let u = ContingentPlan::new(
        plan.values()
            .iter()
            .map(|&x| bern.value(x.max(fp(EVAL_FLOOR))))
            .collect::<Vec<S>>(),
    )
    .ok()?;
    let scored: Vec<S> = sel
        .iter()
        .map(|&k| priors.expectation_under(k, &u) - shift[k])
        .collect();
    let smin = scored.iter().copied().fold(S::infinity(), S::min);
    let tied: Vec<usize> = sel
        .iter()
        .zip(&scored)
        .filter(|(_, &v)| v - smin <= fp::<S>(1e-5) * smin.abs().max(S::one()))
        .map(|(&k, _)| k)
        .collect();
    let (nf, nm, nb) = (free.len(), tied.len(), active.len());
    let dim = nf + (nm - 1) + nb;

    let y0: Vec<S> = {
        let mut y = Vec::with_capacity(dim);
        y.extend(free.iter().map(|&w| plan[w]));
        y.extend(std::iter::repeat(S::one() / fp::<S>(nm as f64)).take(nm - 1));
        y.extend(std::iter::repeat(S::one()).take(nb));
        y
    };
    let solution = newton_drive(y0, |y: &[S]| {
        let mut c = vec![S::zero(); n];
        for w in 0..n {
            c[w] = pinned[w].unwrap_or(S::zero());
        }
        for (i, &w) in free.iter().enumerate() {
            c[w] = y[i];
            if bern.requires_positive_consumption() && c[w] <= S::zero() {
                return None;
            }
        }
        let floor = fp::<S>(EVAL_FLOOR);
        let uval: Vec<S> = c.iter().map(|&x| bern.value(x.max(floor))).collect();
        if uval.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let du: Vec<S> = free.iter().map(|&w| bern.derivative(c[w].max(floor))).collect();
        let ddu: Vec<S> = free
            .iter()
            .map(|&w| bern.second_derivative(c[w].max(floor)).unwrap_or(S::zero()))
            .collect();
        let mut weights = vec![S::zero(); nm];
        let mut rest = S::zero();
        for m in 1..nm {
            weights[m] = y[nf + m - 1];
            rest = rest + weights[m];
        }
        weights[0] = S::one() - rest;

        let mut r = vec![S::zero(); dim];
        let mut jac = vec![vec![S::zero(); dim]; dim];
        for (i, &w) in free.iter().enumerate() {
            let mut g = S::zero();
            for (m, &k) in tied.iter().enumerate() {
                g = g + weights[m] * priors.vertex(k)[w];
            }
            r[i] = g * du[i];
            jac[i][i] = g * ddu[i];
            for m in 1..nm {
                jac[i][nf + m - 1] =
                    (priors.vertex(tied[m])[w] - priors.vertex(tied[0])[w]) * du[i];
            }
            for (bi, &b) in active.iter().enumerate() {
                r[i] = r[i] - y[nf + nm - 1 + bi] * rows[b].normal[w];
                jac[i][nf + nm - 1 + bi] = -rows[b].normal[w];
            }
        }
        for m in 1..nm {
            let mut acc = shift[tied[0]] - shift[tied[m]];
            for w in 0..n {
                acc = acc + (priors.vertex(tied[m])[w] - priors.vertex(tied[0])[w]) * uval[w];
            }
            r[nf + m - 1] = acc;
            for (i, &w) in free.iter().enumerate() {
                jac[nf + m - 1][i] =
                    (priors.vertex(tied[m])[w] - priors.vertex(tied[0])[w]) * du[i];
            }
        }
        for (bi, &b) in active.iter().enumerate() {
            r[nf + nm - 1 + bi] = dot(&rows[b].normal, &c) - rows[b].offset;
            for (i, &w) in free.iter().enumerate() {
                jac[nf + nm - 1 + bi][i] = rows[b].normal[w];
            }
        }
        Some((r, jac))
    })?;

    // Convexity of the weights and sign of the multipliers.
    let mut rest = S::zero();
    for m in 1..nm {
        let wm = solution[nf + m - 1];
        if wm < -fp::<S>(1e-8) {
            return None;
        }
        rest = rest + wm;
    }
    if S::one() - rest < -fp::<S>(1e-8) {
        return None;
    }
    if solution[nf + nm - 1..].iter().any(|&mu| mu < -fp::<S>(1e-8)) {
        return None;
    }
    let mut c = vec![S::zero(); n];
    for w in 0..n {
        c[w] = pinned[w].unwrap_or(S::zero());
    }
    for (i, &w) in free.iter().enumerate() {
        c[w] = solution[i];
    }
    Some(c)
}

/// First-order system for the smooth kind: stationarity of the
/// differentiable utility plus budget equalities.
#[allow(clippy::too_many_arguments)]
fn newton_smooth<S: Scalar + LinearScalar>(
    pref: &PreferenceSpec<S>,
    priors: &PriorSet<S>,
    rows: &[LinearConstraint<S>],
    pinned: &[Option<S>],
    free: &[usize],
    active: &[usize],
    plan: &ContingentPlan<S>,
    weights: &[S],
    ambiguity: &crate::preferences::AmbiguityIndex<S>,
) -> Option<Vec<S>> {
    let n = plan.len();
    let bern = &pref.bernoulli;
    let (nf, nb) = (free.len(), active.len());
    let dim = nf + nb;
    let y0: Vec<S> = {
        let mut y = Vec::with_capacity(dim);
        y.extend(free.iter().map(|&w| plan[w]));
        y.extend(std::iter::repeat(S::one()).take(nb));
        y
    };
    let kcount = priors.num_vertices();
    let solution = newton_drive(y0, |y: &[S]| {
        let mut c = vec![S::zero(); n];
        for w in 0..n {
            c[w] = pinned[w].unwrap_or(S::zero());
        }
        for (i, &w) in free.iter().enumerate() {
            c[w] = y[i];
            if bern.requires_positive_consumption() && c[w] <= S::zero() {
                return None;
            }
        }
        let floor = fp::<S>(EVAL_FLOOR);
        let uval: Vec<S> = c.iter().map(|&x| bern.value(x.max(floor))).collect();
        if uval.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let du: Vec<S> = free.iter().map(|&w| bern.derivative(c[w].max(floor))).collect();
        let ddu: Vec<S> = free
            .iter()
            .map(|&w| bern.second_derivative(c[w].max(floor)).unwrap_or(S::zero()))
            .collect();
        let exps: Vec<S> = (0..kcount)
            .map(|k| {
                priors.vertex(k).iter().zip(&uval).map(|(&p, &u)| p * u).sum()
            })
            .collect();
        let mut r = vec![S::zero(); dim];
        let mut jac = vec![vec![S::zero(); dim]; dim];
        for (i, &w) in free.iter().enumerate() {
            let mut g = S::zero();
            for k in 0..kcount {
                g = g + weights[k] * ambiguity.derivative(exps[k]) * priors.vertex(k)[w];
            }
            r[i] = g * du[i];
            for (j, &v) in free.iter().enumerate() {
                let mut h = S::zero();
                for k in 0..kcount {
                    h = h + weights[k]
                        * ambiguity.second_derivative(exps[k])
                        * priors.vertex(k)[w]
                        * priors.vertex(k)[v]
                        * du[i]
                        * du[j];
                }
                if i == j {
                    h = h + g * ddu[i];
                }
                jac[i][j] = h;
            }
            for (bi, &b) in active.iter().enumerate() {
                r[i] = r[i] - y[nf + bi] * rows[b].normal[w];
                jac[i][nf + bi] = -rows[b].normal[w];
            }
        }
        for (bi, &b) in active.iter().enumerate() {
            r[nf + bi] = dot(&rows[b].normal, &c) - rows[b].offset;
            for (i, &w) in free.iter().enumerate() {
                jac[nf + bi][i] = rows[b].normal[w];
            }
        }
        Some((r, jac))
    })?;
    if solution[nf..].iter().any(|&mu| mu < -fp::<S>(1e-8)) {
        return None;
    }
    let mut c = vec![S::zero(); n];
    for w in 0..n {
        c[w] = pinned[w].unwrap_or(S::zero());
    }
    for (i, &w) in free.iter().enumerate() {
        c[w] = solution[i];
    }
    Some(c)
}

/// Closed-form path for a singleton prior and an invertible marginal:
/// bisection on the budget multiplier `lambda`, with the statewise rule
/// `c_w = clamp(inverse_marginal(lambda psi_w), 0, cap_w)`.
fn singleton_demand<S: Scalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    cap: &ContingentPlan<S>,
) -> Result<ContingentPlan<S>> {
    let n = priors.state_count();
    let p = priors.vertex(0);
    let e = &agent.endowment;
    let bern = &agent.preference.bernoulli;
    let q: Vec<S> = (0..n).map(|w| p[w] * psi.values()[w]).collect();
    let wealth = dot(&q, e.values());
    if q.iter().all(|&v| v <= S::zero()) {
        return Ok(e.clone());
    }
    let plan_at = |lam: S| -> Vec<S> {
        (0..n)
            .map(|w| {
                if q[w] <= S::zero() {
                    // Zero effective price: free goods fill to the cap,
                    // zero-weight states keep the endowment.
                    if p[w] > S::zero() && psi.values()[w] <= S::zero() {
                        cap[w]
                    } else {
                        e[w].min(cap[w])
                    }
                } else {
                    let target = bern
                        .inverse_marginal(lam * psi.values()[w])
                        .expect("caller checked invertibility");
                    target.max(S::zero()).min(cap[w])
                }
            })
            .collect()
    };
    let spend = |lam: S| -> S { dot(&q, &plan_at(lam)) };
    let mut lo = S::one();
    let mut hi = S::one();
    for _ in 0..200 {
        if spend(lo) >= wealth {
            break;
        }
        lo = lo * fp(0.5);
    }
    for _ in 0..200 {
        if spend(hi) <= wealth {
            break;
        }
        hi = hi * fp(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) * fp(0.5);
        if spend(mid) > wealth {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= fp::<S>(1e-15) * hi {
            break;
        }
    }
    ContingentPlan::new(plan_at(hi))
}

/// Exact path for piecewise-linear Bernoulli utility under a worst-case
/// kind: the hypograph of each statewise utility is polyhedral, so the
/// whole problem is one LP.
fn kinked_demand_lp<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    cap: &ContingentPlan<S>,
    rows: &[LinearConstraint<S>],
) -> Result<ContingentPlan<S>> {
    let BernoulliSpec::PiecewiseLinear { kinks, slopes } = &agent.preference.bernoulli else {
        return Err(KwError::InvalidParameter {
            name: "demand",
            reason: "kinked path requires a piecewise-linear Bernoulli".into(),
        });
    };
    let n = priors.state_count();
    // Segment lines of the concave envelope: slope and intercept at
    // each breakpoint, cumulative from u(0) = 0.
    let mut lines: Vec<(S, S)> = Vec::with_capacity(slopes.len());
    let mut x0 = S::zero();
    let mut v0 = S::zero();
    for (s, &m) in slopes.iter().enumerate() {
        lines.push((m, v0 - m * x0));
        if s < kinks.len() {
            v0 = v0 + m * (kinks[s] - x0);
            x0 = kinks[s];
        }
    }
    let sel = agent.preference.active_vertices(priors);
    let shift: Vec<S> = match &agent.preference.kind {
        PreferenceKind::Anchored { anchor } => {
            let ua = anchor.map(|x| agent.preference.bernoulli.value(x));
            sel.iter().map(|&k| priors.expectation_under(k, &ua)).collect()
        }
        _ => vec![S::zero(); sel.len()],
    };

    // Variables: c_0..c_{n-1} >= 0, then u_0..u_{n-1} free, then t free.
    let nv = 2 * n + 1;
    let mut lp = LinearProgram::<S>::new(nv);
    let mut objective = vec![S::zero(); nv];
    objective[nv - 1] = S::one();
    lp.set_objective(objective);
    for w in 0..n {
        lp.mark_free(n + w);
    }
    lp.mark_free(nv - 1);
    for (si, &k) in sel.iter().enumerate() {
        let mut row = vec![S::zero(); nv];
        row[nv - 1] = S::one();
        for w in 0..n {
            row[n + w] = -priors.vertex(k)[w];
        }
        lp.add_le(row, -shift[si]);
    }
    for w in 0..n {
        for &(m, b) in &lines {
            let mut row = vec![S::zero(); nv];
            row[n + w] = S::one();
            row[w] = -m;
            lp.add_le(row, b);
        }
    }
    for row in rows {
        let mut coeffs = vec![S::zero(); nv];
        coeffs[..n].clone_from_slice(&row.normal);
        lp.add_le(coeffs, row.offset);
    }
    for w in 0..n {
        let mut row = vec![S::zero(); nv];
        row[w] = S::one();
        lp.add_le(row, cap[w]);
    }
    match solve_lp(&lp)? {
        LpSolution::Optimal { x, .. } => ContingentPlan::new(x[..n].to_vec()),
        LpSolution::Infeasible { .. } => Err(KwError::Infeasible(
            "budget set misses the truncation box".into(),
        )),
        LpSolution::Unbounded { .. } => Err(KwError::Unbounded(
            "kinked demand is bounded by the truncation box".into(),
        )),
    }
}

/// Builds the [`DemandResult`] bookkeeping around a final plan.
fn assemble<S: Scalar + LinearScalar>(
    agent: &Agent<S>,
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    cap: &ContingentPlan<S>,
    plan: ContingentPlan<S>,
    config: &SolveConfig<S>,
) -> Result<DemandResult<S>> {
    let e = &agent.endowment;
    let net_trade_value = psi.hadamard(&plan.sub(e));
    let exps = priors.expectations(&net_trade_value)?;
    let bmax = exps.iter().copied().fold(S::neg_infinity(), S::max);
    let btol = fp::<S>(BUDGET_TOL) * bmax.abs().max(S::one());
    let active_budget_priors: Vec<usize> = (0..exps.len())
        .filter(|&k| bmax - exps[k] <= btol)
        .collect();

    let floored = plan.map(|x| x.max(fp(EVAL_FLOOR)));
    let u = floored.map(|x| agent.preference.bernoulli.value(x));
    let active_min_priors: Vec<usize> = match &agent.preference.kind {
        PreferenceKind::Smooth { .. } => Vec::new(),
        PreferenceKind::Maxmin { .. } | PreferenceKind::Anchored { .. } => {
            let scored = match &agent.preference.kind {
                PreferenceKind::Anchored { anchor } => {
                    u.sub(&anchor.map(|x| agent.preference.bernoulli.value(x)))
                }
                _ => u.clone(),
            };
            let sel = agent.preference.active_vertices(priors);
            let vals: Vec<S> = sel
                .iter()
                .map(|&k| priors.expectation_under(k, &scored))
                .collect();
            let vmin = vals.iter().copied().fold(S::infinity(), S::min);
            let vtol = fp::<S>(BUDGET_TOL) * vmin.abs().max(S::one());
            sel.iter()
                .zip(&vals)
                .filter(|(_, &v)| v - vmin <= vtol)
                .map(|(&k, _)| k)
                .collect()
        }
    };

    let rows = budget_rows(priors, psi, e);
    let program = demand_program(&agent.preference, priors, cap, rows);
    let (_, kkt, _) = stationarity_certificate(&program, plan.values(), config)?;
    let utility_value = agent
        .preference
        .utility_clamped(priors, &plan, fp(EVAL_FLOOR))?;
    Ok(DemandResult {
        plan,
        utility_value,
        active_budget_priors,
        active_min_priors,
        kkt,
        net_trade_value,
    })
}

/// Aggregate excess demand `z = sum_i (plan_i - e_i)` at the default
/// truncation.
pub fn excess_demand<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: &StatePrice<S>,
) -> Result<(ContingentPlan<S>, Vec<DemandResult<S>>)> {
    excess_demand_with(economy, psi, fp(DEFAULT_TRUNCATION), &SolveConfig::default())
}

/// [`excess_demand`] with an explicit truncation multiplier and engine
/// tolerances; any warm start in `config` is dropped because it cannot
/// apply to every agent at once.
pub fn excess_demand_with<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: &StatePrice<S>,
    truncation: S,
    config: &SolveConfig<S>,
) -> Result<(ContingentPlan<S>, Vec<DemandResult<S>>)> {
    if truncation <= S::zero() {
        return Err(KwError::InvalidParameter {
            name: "truncation",
            reason: "multiplier must be positive".into(),
        });
    }
    let cap = economy.aggregate_endowment().scale(truncation);
    let mut cfg = config.clone();
    cfg.start = None;
    let mut z = ContingentPlan::zero(economy.state_count());
    let mut per_agent = Vec::with_capacity(economy.num_agents());
    for agent in economy.agents() {
        let d = demand_with(agent, economy.priors(), psi, &cap, &cfg)?;
        z = z.add(&d.plan.sub(&agent.endowment));
        per_agent.push(d);
    }
    Ok((z, per_agent))
}
