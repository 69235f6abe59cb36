//! Theorem-level analyzers built on the solvers: the mean-ambiguity
//! test equating singleton-prior and Knightian equilibria, the
//! uncertainty-neutral improvement search, the prior-family sweep, and
//! the endowment genericity experiment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    no_trade_certificate, solve_ad, solve_kw, verify_equilibrium, Equilibrium, SolverConfig,
    SupportStatus, VerificationReport,
};
use crate::error::KwError;
use crate::markets::{ClearingConvention, Economy};
use crate::optimization::{
    lp_feasibility, maximize_concave, solve_lp, ConcaveProgram, Feasibility, LinearConstraint,
    LinearProgram, LinearScalar, LpSolution, SolveConfig, SolveStatus,
};
use crate::preferences::{Agent, BernoulliSpec, PreferenceKind};
use crate::scalar::{fp, Scalar};
use crate::state_space::{ContingentPlan, PriorSet, StatePrice};
use crate::Result;

/// Minimum common utility uplift for an allocation to count as an
/// improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-6;
/// Expectation spread below which a bill counts as mean ambiguity
/// free; looser than the solver tolerance so converged output is never
/// misclassified from rounding alone.
const MEAN_AF_TOL: f64 = 1e-7;
/// Consumption clamp for utility evaluation off the positive orthant.
const EVAL_FLOOR: f64 = 1e-12;

/// Prior pair separating the expectations of a failing bill.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Separation<S: Scalar> {
    pub agent: usize,
    /// Vertex indices attaining the extreme expectations.
    pub vertices: (usize, usize),
    pub spread: S,
}

/// Whether the equilibrium of the averaged economy survives the full
/// prior set, decided through the net trade bills.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceVerdict<S: Scalar> {
    /// Statewise bills `psi (c_i - e_i)` at the simplex price.
    pub net_trade_values: Vec<ContingentPlan<S>>,
    pub mean_af_flags: Vec<bool>,
    /// True iff every agent's bill is mean ambiguity free.
    pub verdict: bool,
    /// One entry per failing agent.
    pub separations: Vec<Separation<S>>,
    /// Direct check of the same pair against the Knightian budget.
    pub knightian_report: VerificationReport<S>,
    /// True when the bill test and the direct check agree, as the
    /// equivalence predicts.
    pub cross_validated: bool,
    pub equilibrium: Equilibrium<S>,
}

/// True iff `prior` lies in the convex hull of the vertex list, up to
/// a small band absorbing float dust.
fn prior_in_set<S: Scalar + LinearScalar>(priors: &PriorSet<S>, prior: &[S]) -> Result<bool> {
    let verts = priors.vertices();
    let mut lp = LinearProgram::new(verts.len());
    let band = fp::<S>(1e-9);
    for w in 0..priors.state_count() {
        let col: Vec<S> = verts.iter().map(|v| v[w]).collect();
        lp.add_le(col.clone(), prior[w] + band);
        lp.add_ge(col, prior[w] - band);
    }
    lp.add_eq(vec![S::one(); verts.len()], S::one());
    Ok(matches!(
        lp_feasibility(&lp)?,
        Feasibility::Feasible { .. }
    ))
}

/// Solves the averaged economy at `prior` and decides whether its
/// equilibrium stands under the full prior set: the bill test checks
/// each agent's net trade value for a vertex-independent expectation,
/// and the direct check re-verifies the pair against the Knightian
/// budget. The two agree whenever markets clear with equality, which
/// the Negishi solver enforces.
pub fn ad_kw_equivalence<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    prior: &[S],
    config: &SolverConfig<S>,
) -> Result<EquivalenceVerdict<S>> {
    config.validate()?;
    let priors = economy.priors();
    if prior.len() != economy.state_count() {
        return Err(KwError::DimensionMismatch {
            expected: economy.state_count(),
            got: prior.len(),
        });
    }
    if !prior_in_set(priors, prior)? {
        return Err(KwError::InvalidParameter {
            name: "prior",
            reason: "must lie in the convex hull of the prior set".into(),
        });
    }
    let eq = solve_ad(economy, prior, config)?;
    if !eq.converged {
        return Err(KwError::NonConvergence {
            residual: eq.residual.to_f64().unwrap_or(f64::NAN),
            tol: config.residual_tol.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut net_trade_values = Vec::with_capacity(eq.allocation.len());
    let mut mean_af_flags = Vec::with_capacity(eq.allocation.len());
    let mut separations = Vec::new();
    for (i, (agent, plan)) in economy.agents().iter().zip(&eq.allocation).enumerate() {
        let xi = eq.psi.hadamard(&plan.sub(&agent.endowment));
        let exps = priors.expectations(&xi)?;
        let (mut k_hi, mut k_lo) = (0, 0);
        for (k, &v) in exps.iter().enumerate() {
            if v > exps[k_hi] {
                k_hi = k;
            }
            if v < exps[k_lo] {
                k_lo = k;
            }
        }
        let spread = exps[k_hi] - exps[k_lo];
        let flag = spread <= fp(MEAN_AF_TOL);
        if !flag {
            separations.push(Separation {
                agent: i,
                vertices: (k_hi, k_lo),
                spread,
            });
        }
        net_trade_values.push(xi);
        mean_af_flags.push(flag);
    }
    let verdict = mean_af_flags.iter().all(|&f| f);
    let knightian_report = verify_equilibrium(economy, &eq.psi, &eq.allocation, config)?;
    Ok(EquivalenceVerdict {
        net_trade_values,
        mean_af_flags,
        verdict,
        separations,
        cross_validated: verdict == knightian_report.verdict,
        knightian_report,
        equilibrium: eq,
    })
}

/// Outcome of the uncertainty-neutral improvement search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementSearch<S: Scalar> {
    /// Present when the best allocation clears [`IMPROVEMENT_TOL`].
    pub improvement: Option<Vec<ContingentPlan<S>>>,
    /// Best common utility uplift found.
    pub uplift: S,
    /// `None` on the exact piecewise-linear path; otherwise the engine
    /// certificate gap qualifying a "no improvement" answer.
    pub stationarity_gap: Option<S>,
}

/// Linear constraints of the improvement program over stacked plans:
/// every prior vertex must value each agent's transfer bill equally,
/// and the total allocation must respect the clearing convention.
fn improvement_rows<S: Scalar>(economy: &Economy<S>, psi_n: &[S]) -> Vec<LinearConstraint<S>> {
    let n = economy.state_count();
    let m = economy.num_agents();
    let verts = economy.priors().vertices();
    let total = m * n;
    let mut rows = Vec::new();
    for (i, agent) in economy.agents().iter().enumerate() {
        for k in 1..verts.len() {
            let mut normal = vec![S::zero(); total];
            let mut rhs = S::zero();
            for w in 0..n {
                let coeff = (verts[k][w] - verts[0][w]) * psi_n[w];
                normal[i * n + w] = coeff;
                rhs = rhs + coeff * agent.endowment[w];
            }
            rows.push(LinearConstraint {
                normal: normal.iter().map(|&v| -v).collect(),
                offset: -rhs,
            });
            rows.push(LinearConstraint {
                normal,
                offset: rhs,
            });
        }
    }
    let agg = economy.aggregate_endowment();
    for w in 0..n {
        let mut normal = vec![S::zero(); total];
        for i in 0..m {
            normal[i * n + w] = S::one();
        }
        if matches!(economy.clearing(), ClearingConvention::Equality) {
            rows.push(LinearConstraint {
                normal: normal.iter().map(|&v| -v).collect(),
                offset: -agg[w],
            });
        }
        rows.push(LinearConstraint {
            normal,
            offset: agg[w],
        });
    }
    rows
}

/// Affine pieces `(slope, intercept)` whose minimum is the concave
/// piecewise-linear utility.
fn pwl_pieces<S: Scalar>(kinks: &[S], slopes: &[S]) -> Vec<(S, S)> {
    let mut out = Vec::with_capacity(slopes.len());
    let mut value = S::zero();
    let mut lo = S::zero();
    for (j, &a) in slopes.iter().enumerate() {
        out.push((a, value - a * lo));
        if j < kinks.len() {
            value = value + a * (kinks[j] - lo);
            lo = kinks[j];
        }
    }
    out
}

/// Exact epigraph formulation when every agent is worst-case
/// piecewise-linear: maximize the common uplift `t` over plans, state
/// utilities, and agent utilities.
fn pwl_improvement<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi_n: &[S],
    base: &[S],
) -> Result<(S, Vec<ContingentPlan<S>>)> {
    let n = economy.state_count();
    let m = economy.num_agents();
    let verts = economy.priors().vertices();
    let d0 = 0;
    let u0 = m * n;
    let big_u0 = 2 * m * n;
    let t_idx = 2 * m * n + m;
    let nvars = t_idx + 1;
    let mut lp = LinearProgram::new(nvars);
    let mut obj = vec![S::zero(); nvars];
    obj[t_idx] = S::one();
    lp.set_objective(obj);
    lp.mark_free(t_idx);
    for (i, agent) in economy.agents().iter().enumerate() {
        let pieces = match &agent.preference.bernoulli {
            BernoulliSpec::PiecewiseLinear { kinks, slopes } => pwl_pieces(kinks, slopes),
            _ => unreachable!("exact path requires piecewise-linear agents"),
        };
        for w in 0..n {
            for &(a, b) in &pieces {
                let mut row = vec![S::zero(); nvars];
                row[u0 + i * n + w] = S::one();
                row[d0 + i * n + w] = -a;
                lp.add_le(row, b);
            }
        }
        for vert in verts {
            let mut row = vec![S::zero(); nvars];
            row[big_u0 + i] = S::one();
            for w in 0..n {
                row[u0 + i * n + w] = -vert[w];
            }
            lp.add_le(row, S::zero());
        }
        let mut row = vec![S::zero(); nvars];
        row[t_idx] = S::one();
        row[big_u0 + i] = -S::one();
        lp.add_le(row, -base[i]);
    }
    for mut transfer in improvement_rows(economy, psi_n) {
        transfer.normal.resize(nvars, S::zero());
        lp.add_le(transfer.normal, transfer.offset);
    }
    let agg = economy.aggregate_endowment();
    for i in 0..m {
        for w in 0..n {
            let mut row = vec![S::zero(); nvars];
            row[d0 + i * n + w] = S::one();
            lp.add_le(row, agg[w]);
        }
    }
    match solve_lp(&lp)? {
        LpSolution::Optimal { x, value } => {
            let plans = (0..m)
                .map(|i| ContingentPlan::new(x[i * n..(i + 1) * n].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Ok((value, plans))
        }
        LpSolution::Infeasible { .. } => Err(KwError::Infeasible(
            "improvement program excludes the endowment".into(),
        )),
        LpSolution::Unbounded { .. } => Err(KwError::Unbounded(
            "improvement epigraph should be capped by the aggregate endowment".into(),
        )),
    }
}

/// Plan clamped to the evaluation floor so utilities stay defined on
/// the box boundary.
fn floored<S: Scalar>(x: &[S]) -> ContingentPlan<S> {
    let floor = fp::<S>(EVAL_FLOOR);
    ContingentPlan::new(x.iter().map(|&v| v.max(floor)).collect())
        .expect("floored plan is finite")
}

/// Per-agent utility uplift of a stacked plan over the baseline.
fn agent_uplifts<S: Scalar>(
    agents: &[Agent<S>],
    priors: &PriorSet<S>,
    base: &[S],
    x: &[S],
    n: usize,
) -> Vec<S> {
    agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            agent
                .preference
                .utility(priors, &floored(&x[i * n..(i + 1) * n]))
                .expect("floored plan is strictly positive")
                - base[i]
        })
        .collect()
}

/// Searches for a feasible reallocation whose transfer bills carry no
/// mean ambiguity yet raise every agent's utility by a common margin.
/// Exact for all-piecewise-linear economies; otherwise the ascent
/// engine maximizes the worst uplift and qualifies a negative answer
/// with its stationarity gap.
pub fn uncertainty_neutral_improvement<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: &StatePrice<S>,
    allocation: &[ContingentPlan<S>],
    config: &SolverConfig<S>,
) -> Result<ImprovementSearch<S>> {
    config.validate()?;
    let n = economy.state_count();
    let m = economy.num_agents();
    if allocation.len() != m {
        return Err(KwError::InvalidEconomy(format!(
            "allocation covers {} agents, economy has {m}",
            allocation.len()
        )));
    }
    if psi.len() != n {
        return Err(KwError::DimensionMismatch {
            expected: n,
            got: psi.len(),
        });
    }
    let mut z = ContingentPlan::zero(n);
    for (agent, plan) in economy.agents().iter().zip(allocation) {
        if plan.len() != n {
            return Err(KwError::DimensionMismatch {
                expected: n,
                got: plan.len(),
            });
        }
        z = z.add(&plan.sub(&agent.endowment));
    }
    let violation = match economy.clearing() {
        ClearingConvention::FreeDisposal => z.max_entry(),
        ClearingConvention::Equality => z.map(|v| v.abs()).max_entry(),
    };
    if violation > fp::<S>(1e-6) * economy.aggregate_endowment().max_entry().max(S::one()) {
        return Err(KwError::InvalidParameter {
            name: "allocation",
            reason: "must be feasible under the clearing convention".into(),
        });
    }

    let psi_n = psi.normalized()?.values().to_vec();
    let priors = economy.priors();
    let base: Vec<S> = economy
        .agents()
        .iter()
        .zip(allocation)
        .map(|(a, c)| a.preference.utility_clamped(priors, c, fp(EVAL_FLOOR)))
        .collect::<Result<_>>()?;
    let tol = fp::<S>(IMPROVEMENT_TOL);

    let exact = economy.agents().iter().all(|a| {
        matches!(a.preference.kind, PreferenceKind::Maxmin { .. })
            && matches!(a.preference.bernoulli, BernoulliSpec::PiecewiseLinear { .. })
    });
    if exact {
        let (uplift, plans) = pwl_improvement(economy, &psi_n, &base)?;
        return Ok(ImprovementSearch {
            improvement: (uplift > tol).then(|| plans),
            uplift,
            stationarity_gap: None,
        });
    }

    let agents = economy.agents();
    let base_for_grad = base.clone();
    let agg = economy.aggregate_endowment();
    let program = ConcaveProgram {
        objective: Box::new(move |x: &[S]| {
            let ups = agent_uplifts(agents, priors, &base, x, n);
            let mut worst = 0usize;
            for (i, &u) in ups.iter().enumerate() {
                if u < ups[worst] {
                    worst = i;
                }
            }
            let plan = floored(&x[worst * n..(worst + 1) * n]);
            let grads = agents[worst]
                .preference
                .superdifferential(priors, &plan, fp(1e-9))
                .expect("floored plan is strictly positive");
            let mut grad = vec![S::zero(); m * n];
            grad[worst * n..(worst + 1) * n].copy_from_slice(grads[0].values());
            (ups[worst], grad)
        }),
        generators: Some(Box::new(move |x: &[S]| {
            let ups = agent_uplifts(agents, priors, &base_for_grad, x, n);
            let worst = ups.iter().copied().fold(S::infinity(), S::min);
            let scale = worst.abs().max(S::one());
            let mut out = Vec::new();
            for (i, agent) in agents.iter().enumerate() {
                if ups[i] - worst > fp::<S>(1e-9) * scale {
                    continue;
                }
                let plan = floored(&x[i * n..(i + 1) * n]);
                for g in agent
                    .preference
                    .superdifferential(priors, &plan, fp(1e-9))
                    .expect("floored plan is strictly positive")
                {
                    let mut row = vec![S::zero(); m * n];
                    row[i * n..(i + 1) * n].copy_from_slice(g.values());
                    out.push(row);
                }
            }
            out
        })),
        constraints: improvement_rows(economy, &psi_n),
        lower: vec![S::zero(); m * n],
        upper: (0..m)
            .flat_map(|_| agg.values().iter().copied())
            .collect(),
    };
    let mut engine = SolveConfig::default();
    engine.start = Some(
        agents
            .iter()
            .flat_map(|a| a.endowment.values().iter().copied())
            .collect(),
    );
    let res = maximize_concave(&program, &engine)?;
    if res.status == SolveStatus::Infeasible {
        return Err(KwError::Infeasible(
            "improvement program excludes the endowment".into(),
        ));
    }
    let plans = (0..m)
        .map(|i| ContingentPlan::new(res.point[i * n..(i + 1) * n].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImprovementSearch {
        improvement: (res.value > tol).then(|| plans),
        uplift: res.value,
        stationarity_gap: Some(res.certificate_gap),
    })
}

/// One grid point of the prior-family sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord<S: Scalar> {
    pub epsilon: S,
    pub priors: PriorSet<S>,
    /// Best candidate found, converged or not; absent only when the
    /// solve errored outright.
    pub equilibrium: Option<Equilibrium<S>>,
    pub failure: Option<String>,
    /// Total trade `sum_i ||c_i - e_i||_1`; NaN on failure.
    pub trade_volume: S,
    pub disposal_l1: S,
    /// Sup-norm distance of the allocation from the one at epsilon 0.
    pub distance_to_base: S,
    pub certificate: Option<SupportStatus>,
}

/// Solves the economy across a family of prior sets and reports how
/// the equilibrium responds, anchored at the singleton member. The
/// grid must contain epsilon 0 and the family must collapse to one
/// prior there.
pub fn kw_correspondence_sweep<S, F>(
    economy: &Economy<S>,
    family: F,
    grid: &[S],
    config: &SolverConfig<S>,
) -> Result<Vec<SweepRecord<S>>>
where
    S: Scalar + LinearScalar,
    F: Fn(S) -> Result<PriorSet<S>>,
{
    config.validate()?;
    if grid.is_empty() {
        return Err(KwError::InvalidParameter {
            name: "grid",
            reason: "needs at least one epsilon".into(),
        });
    }
    let mut eps_grid = grid.to_vec();
    for &eps in &eps_grid {
        if !(eps.is_finite() && eps >= S::zero()) {
            return Err(KwError::InvalidParameter {
                name: "grid",
                reason: format!("epsilon must be finite and nonnegative, got {eps}"),
            });
        }
    }
    eps_grid.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));
    if eps_grid[0] != S::zero() {
        return Err(KwError::InvalidParameter {
            name: "grid",
            reason: "must include epsilon = 0".into(),
        });
    }
    let base_priors = family(S::zero())?;
    if base_priors.num_vertices() != 1 {
        return Err(KwError::InvalidParameter {
            name: "family",
            reason: "must collapse to a single prior at epsilon = 0".into(),
        });
    }
    let with_priors = |p: PriorSet<S>| -> Result<Economy<S>> {
        Economy::new(economy.agents().to_vec(), p, economy.clearing())
    };
    let base_eq = solve_kw(&with_priors(base_priors)?, config)?;
    let base_alloc = base_eq.allocation.clone();

    let mut records = Vec::with_capacity(eps_grid.len());
    for &eps in &eps_grid {
        let econ = with_priors(family(eps)?)?;
        let certificate = no_trade_certificate(&econ, None).ok().map(|c| c.status);
        let solved = if eps == S::zero() {
            Ok(base_eq.clone())
        } else {
            solve_kw(&econ, config)
        };
        records.push(match solved {
            Ok(eq) => {
                let mut trade = S::zero();
                let mut dist = S::zero();
                for (i, plan) in eq.allocation.iter().enumerate() {
                    let e = &econ.agents()[i].endowment;
                    for w in 0..econ.state_count() {
                        trade = trade + (plan[w] - e[w]).abs();
                        dist = dist.max((plan[w] - base_alloc[i][w]).abs());
                    }
                }
                let disposal_l1 = eq
                    .disposal
                    .values()
                    .iter()
                    .copied()
                    .fold(S::zero(), |a, b| a + b);
                SweepRecord {
                    epsilon: eps,
                    priors: econ.priors().clone(),
                    equilibrium: Some(eq),
                    failure: None,
                    trade_volume: trade,
                    disposal_l1,
                    distance_to_base: dist,
                    certificate,
                }
            }
            Err(err) => SweepRecord {
                epsilon: eps,
                priors: econ.priors().clone(),
                equilibrium: None,
                failure: Some(err.to_string()),
                trade_volume: S::nan(),
                disposal_l1: S::nan(),
                distance_to_base: S::nan(),
                certificate,
            },
        });
    }
    Ok(records)
}

/// Endowment resampling schemes preserving the aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EndowmentSampler<S> {
    /// Additive mean-zero jitter per state.
    Continuous { jitter: S },
    /// Random constant individual endowments splitting the aggregate.
    ConstantIndividual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericityDraw<S: Scalar> {
    pub endowments: Vec<ContingentPlan<S>>,
    pub verdict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericityOutcome<S: Scalar> {
    /// Share of draws whose averaged-economy equilibrium survives the
    /// full prior set.
    pub fraction: S,
    pub draws: Vec<GenericityDraw<S>>,
}

fn sample_endowments<S: Scalar>(
    economy: &Economy<S>,
    sampler: &EndowmentSampler<S>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ContingentPlan<S>>> {
    let n = economy.state_count();
    let m = economy.num_agents();
    for _ in 0..100 {
        let draw: Vec<Vec<S>> = match sampler {
            EndowmentSampler::Continuous { jitter } => {
                let mut es: Vec<Vec<S>> = economy
                    .agents()
                    .iter()
                    .map(|a| a.endowment.values().to_vec())
                    .collect();
                for w in 0..n {
                    let noise: Vec<S> = (0..m)
                        .map(|_| *jitter * fp::<S>(rng.gen_range(-0.5..0.5)))
                        .collect();
                    let mean =
                        noise.iter().copied().fold(S::zero(), |a, b| a + b) / fp(m as f64);
                    for (row, &g) in es.iter_mut().zip(&noise) {
                        row[w] = row[w] + g - mean;
                    }
                }
                es
            }
            EndowmentSampler::ConstantIndividual => {
                let level = economy.aggregate_endowment()[0];
                let weights: Vec<S> =
                    (0..m).map(|_| fp::<S>(rng.gen_range(0.05..1.0))).collect();
                let total = weights.iter().copied().fold(S::zero(), |a, b| a + b);
                weights
                    .iter()
                    .map(|&wt| vec![wt / total * level; n])
                    .collect()
            }
        };
        if draw.iter().all(|e| e.iter().all(|&x| x > S::zero())) {
            return draw.into_iter().map(ContingentPlan::new).collect();
        }
    }
    Err(KwError::InvalidParameter {
        name: "sampler",
        reason: "100 consecutive draws produced nonpositive endowments".into(),
    })
}

/// Resamples endowments around the template and measures how often the
/// averaged-economy equilibrium survives the full prior set. Requires
/// a state-independent aggregate so the samplers can preserve it; the
/// test prior is the centroid.
pub fn genericity_experiment<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    sampler: &EndowmentSampler<S>,
    draws: usize,
    seed: u64,
    config: &SolverConfig<S>,
) -> Result<GenericityOutcome<S>> {
    config.validate()?;
    if draws == 0 {
        return Err(KwError::InvalidParameter {
            name: "draws",
            reason: "needs at least one draw".into(),
        });
    }
    if let EndowmentSampler::Continuous { jitter } = sampler {
        if !(*jitter > S::zero()) {
            return Err(KwError::InvalidParameter {
                name: "jitter",
                reason: format!("must be positive, got {jitter}"),
            });
        }
    }
    let agg = economy.aggregate_endowment();
    if agg.max_entry() - agg.min_entry() > fp::<S>(1e-9) * agg.max_entry().max(S::one()) {
        return Err(KwError::InvalidEconomy(
            "genericity experiment requires a state-independent aggregate endowment".into(),
        ));
    }
    let prior = economy.priors().centroid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut records = Vec::with_capacity(draws);
    for _ in 0..draws {
        let endowments = sample_endowments(economy, sampler, &mut rng)?;
        let agents = economy
            .agents()
            .iter()
            .zip(&endowments)
            .map(|(a, e)| Agent::new(e.clone(), a.preference.clone()))
            .collect::<Result<Vec<_>>>()?;
        let econ = Economy::new(agents, economy.priors().clone(), economy.clearing())?;
        let verdict = ad_kw_equivalence(&econ, &prior, config)?.verdict;
        hits += usize::from(verdict);
        records.push(GenericityDraw {
            endowments,
            verdict,
        });
    }
    Ok(GenericityOutcome {
        fraction: fp::<S>(hits as f64) / fp::<S>(draws as f64),
        draws: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::PreferenceSpec;
    use approx::assert_abs_diff_eq;

    fn sqrt_agent(e: Vec<f64>) -> Agent<f64> {
        Agent::new(
            ContingentPlan::new(e).unwrap(),
            PreferenceSpec::maxmin(BernoulliSpec::SquareRoot),
        )
        .unwrap()
    }

    fn mirrored_sqrt_economy(priors: PriorSet<f64>, clearing: ClearingConvention) -> Economy<f64> {
        Economy::new(
            vec![
                sqrt_agent(vec![1.0 / 3.0, 2.0 / 3.0]),
                sqrt_agent(vec![2.0 / 3.0, 1.0 / 3.0]),
            ],
            priors,
            clearing,
        )
        .unwrap()
    }

    #[test]
    fn equivalence_holds_for_singleton_priors() {
        let economy = mirrored_sqrt_economy(
            PriorSet::singleton(vec![0.5, 0.5]).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let v = ad_kw_equivalence(&economy, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert!(v.verdict);
        assert!(v.mean_af_flags.iter().all(|&f| f));
        assert!(v.separations.is_empty());
        assert!(v.knightian_report.verdict);
        assert!(v.cross_validated);
        assert!(v.equilibrium.welfare_weights.is_some());
    }

    #[test]
    fn equivalence_fails_under_ambiguity_with_uneven_endowments() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let v = ad_kw_equivalence(&economy, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert!(!v.verdict);
        assert_eq!(v.separations.len(), 2);
        assert_abs_diff_eq!(v.separations[0].spread, 1.0 / 30.0, epsilon = 1e-9);
        assert!(!v.knightian_report.verdict);
        assert!(v.cross_validated);
        for plan in &v.equilibrium.allocation {
            assert_abs_diff_eq!(plan[0], 0.5, epsilon = 1e-7);
            assert_abs_diff_eq!(plan[1], 0.5, epsilon = 1e-7);
        }
    }

    #[test]
    fn equivalence_is_trivial_for_constant_endowments() {
        let economy = Economy::new(
            vec![
                sqrt_agent(vec![0.4, 0.4]),
                sqrt_agent(vec![0.6, 0.6]),
            ],
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        )
        .unwrap();
        let v = ad_kw_equivalence(&economy, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert!(v.verdict);
        assert!(v.knightian_report.verdict);
        assert!(v.cross_validated);
    }

    #[test]
    fn equivalence_rejects_a_prior_outside_the_set() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let err = ad_kw_equivalence(&economy, &[0.9, 0.1], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, KwError::InvalidParameter { name: "prior", .. }));
    }

    #[test]
    fn improvement_finds_classical_gains_from_trade() {
        let economy = mirrored_sqrt_economy(
            PriorSet::singleton(vec![0.5, 0.5]).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let endowments: Vec<_> = economy
            .agents()
            .iter()
            .map(|a| a.endowment.clone())
            .collect();
        let psi = StatePrice::new(vec![1.0, 1.0]).unwrap();
        let found = uncertainty_neutral_improvement(
            &economy,
            &psi,
            &endowments,
            &SolverConfig::default(),
        )
        .unwrap();
        // Full insurance at (1/2, 1/2) lifts both agents by
        // sqrt(1/2) - (sqrt(1/3) + sqrt(2/3)) / 2.
        let expected = 0.5f64.sqrt() - ((1.0f64 / 3.0).sqrt() + (2.0f64 / 3.0).sqrt()) / 2.0;
        assert_abs_diff_eq!(found.uplift, expected, epsilon = 1e-4);
        let improved = found.improvement.expect("gains from trade exist");
        let mut z = ContingentPlan::zero(2);
        for ((agent, d), e) in economy.agents().iter().zip(&improved).zip(&endowments) {
            let before = agent.preference.utility(economy.priors(), e).unwrap();
            let after = agent.preference.utility(economy.priors(), d).unwrap();
            assert!(after >= before + found.uplift - 1e-9);
            z = z.add(&d.sub(e));
        }
        assert!(z.max_entry() <= 1e-9, "clearing violated: {:?}", z.values());
    }

    #[test]
    fn improvement_is_absent_at_a_solver_equilibrium() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let cfg = SolverConfig::default();
        let eq = solve_kw(&economy, &cfg).unwrap();
        assert!(eq.converged);
        let found =
            uncertainty_neutral_improvement(&economy, &eq.psi, &eq.allocation, &cfg).unwrap();
        assert!(found.improvement.is_none(), "uplift {}", found.uplift);
        assert!(found.uplift <= IMPROVEMENT_TOL);
        assert!(found.stationarity_gap.is_some());
    }

    #[test]
    fn improvement_is_absent_for_constant_transfers() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let endowments: Vec<_> = economy
            .agents()
            .iter()
            .map(|a| a.endowment.clone())
            .collect();
        let psi = StatePrice::new(vec![1.0, 1.0]).unwrap();
        let found = uncertainty_neutral_improvement(
            &economy,
            &psi,
            &endowments,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(found.improvement.is_none(), "uplift {}", found.uplift);
    }

    #[test]
    fn piecewise_linear_improvement_is_exact() {
        let pwl = || {
            PreferenceSpec::maxmin(BernoulliSpec::PiecewiseLinear {
                kinks: vec![1.0],
                slopes: vec![2.0, 1.0],
            })
        };
        let economy = Economy::new(
            vec![
                Agent::new(ContingentPlan::new(vec![1.5, 0.1]).unwrap(), pwl()).unwrap(),
                Agent::new(ContingentPlan::new(vec![0.1, 1.5]).unwrap(), pwl()).unwrap(),
            ],
            PriorSet::singleton(vec![0.5, 0.5]).unwrap(),
            ClearingConvention::FreeDisposal,
        )
        .unwrap();
        let endowments: Vec<_> = economy
            .agents()
            .iter()
            .map(|a| a.endowment.clone())
            .collect();
        let psi = StatePrice::new(vec![1.0, 1.0]).unwrap();
        let found = uncertainty_neutral_improvement(
            &economy,
            &psi,
            &endowments,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(found.stationarity_gap.is_none());
        assert_abs_diff_eq!(found.uplift, 0.25, epsilon = 1e-9);
        let improved = found.improvement.expect("equal split beats the corners");
        for (agent, d) in economy.agents().iter().zip(&improved) {
            let before = agent
                .preference
                .utility(economy.priors(), &agent.endowment)
                .unwrap();
            let after = agent.preference.utility(economy.priors(), d).unwrap();
            assert!(after >= before + 0.25 - 1e-9);
        }
    }

    #[test]
    fn free_disposal_sweep_reports_continuous_measurements() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let records = kw_correspondence_sweep(
            &economy,
            |eps| PriorSet::interval_family(eps),
            &[0.1, 0.0, 0.001],
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.windows(2).all(|w| w[0].epsilon <= w[1].epsilon));
        for rec in &records {
            assert!(rec.failure.is_none());
            let eq = rec.equilibrium.as_ref().unwrap();
            assert!(eq.converged, "eps {} residual {}", rec.epsilon, eq.residual);
            // Trade never collapses toward autarky: disposal
            // equilibria are a continuum, so the exact volume depends
            // on which member the search hits, but it stays near the
            // two-thirds benchmark of the anchor.
            assert_abs_diff_eq!(rec.trade_volume, 2.0 / 3.0, epsilon = 0.05);
            assert_eq!(rec.certificate, Some(SupportStatus::Unsupportable));
        }
        assert_eq!(records[0].distance_to_base, 0.0);
        assert_abs_diff_eq!(records[0].trade_volume, 2.0 / 3.0, epsilon = 1e-6);
        assert!(records[0].disposal_l1 <= 1e-8);
        // Allocations drift continuously from the anchor as the prior
        // set widens, and disposal shrinks toward zero as it tightens.
        assert!(records[1].distance_to_base < 0.01);
        assert!(records[2].distance_to_base > records[1].distance_to_base);
        assert!(records[2].distance_to_base < 0.1);
        assert!(records[1].disposal_l1 > 0.0 && records[1].disposal_l1 < 0.01);
        assert!(records[2].disposal_l1 > 0.05 && records[2].disposal_l1 < 0.25);
    }

    #[test]
    fn equality_sweep_shows_the_jump_at_zero() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::Equality,
        );
        let mut cfg = SolverConfig::default();
        cfg.residual_tol = 1e-6;
        cfg.max_outer = 60;
        cfg.refine_depth = 26;
        let records = kw_correspondence_sweep(
            &economy,
            |eps| PriorSet::interval_family(eps),
            &[0.0, 0.1],
            &cfg,
        )
        .unwrap();
        let base = records[0].equilibrium.as_ref().unwrap();
        assert!(base.converged);
        for plan in &base.allocation {
            assert_abs_diff_eq!(plan[0], 0.5, epsilon = 1e-4);
            assert_abs_diff_eq!(plan[1], 0.5, epsilon = 1e-4);
        }
        let stressed = records[1].equilibrium.as_ref().unwrap();
        assert!(!stressed.converged);
        assert!(stressed.residual > 1e-4);
        assert!(records[1].failure.is_none());
        assert_eq!(records[1].certificate, Some(SupportStatus::Unsupportable));
    }

    #[test]
    fn sweep_requires_the_anchor_epsilon() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let err = kw_correspondence_sweep(
            &economy,
            |eps| PriorSet::interval_family(eps),
            &[0.1],
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, KwError::InvalidParameter { name: "grid", .. }));
    }

    #[test]
    fn genericity_fraction_is_zero_under_ambiguity() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let out = genericity_experiment(
            &economy,
            &EndowmentSampler::Continuous { jitter: 0.1 },
            25,
            7,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.fraction, 0.0);
        assert_eq!(out.draws.len(), 25);
        assert!(out.draws.iter().all(|d| !d.verdict));
    }

    #[test]
    fn genericity_fraction_is_one_for_singleton_priors() {
        let economy = mirrored_sqrt_economy(
            PriorSet::singleton(vec![0.5, 0.5]).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let out = genericity_experiment(
            &economy,
            &EndowmentSampler::Continuous { jitter: 0.1 },
            10,
            11,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.fraction, 1.0);
    }

    #[test]
    fn genericity_fraction_is_one_for_constant_individual_endowments() {
        let economy = mirrored_sqrt_economy(
            PriorSet::interval_family(0.1).unwrap(),
            ClearingConvention::FreeDisposal,
        );
        let out = genericity_experiment(
            &economy,
            &EndowmentSampler::ConstantIndividual,
            10,
            3,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.fraction, 1.0);
        for draw in &out.draws {
            for e in &draw.endowments {
                assert_abs_diff_eq!(e[0], e[1], epsilon = 1e-12);
            }
        }
    }
}
