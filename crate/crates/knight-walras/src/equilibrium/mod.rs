//! Equilibrium computation and verification.
//!
//! [`solve_kw`] realizes the three-player game behind the existence
//! argument as a numerical method: consumers best-respond exactly
//! through the demand machinery, the Walrasian price player's
//! bang-bang best response is smoothed entropically, and the Knightian
//! player symmetrizes over its maximizing prior vertices. When the
//! damped play stalls above tolerance, a deterministic simplicial
//! refinement of the price simplex minimizes the residual directly.
//! [`solve_ad`] covers the singleton-prior benchmark by Negishi
//! iteration, [`verify_equilibrium`] re-derives every equilibrium
//! condition from scratch, and [`no_trade_certificate`] decides
//! supportability of autarky.

mod certificate;
mod negishi;

pub use certificate::{no_trade_certificate, AgentConeReport, NoTradeCertificate, SupportStatus};
pub use negishi::solve_ad;

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::KwError;
use crate::markets::{
    budget_value, demand_with, excess_demand_with, ClearingConvention, Economy,
    DEFAULT_TRUNCATION,
};
use crate::optimization::{LinearScalar, SolveConfig};
use crate::scalar::{fp, Scalar};
use crate::state_space::{ContingentPlan, PriorSet, StatePrice};
use crate::Result;

/// Budget slack above which verification fails an agent.
pub const BUDGET_GATE: f64 = 1e-7;
/// Utility shortfall against recomputed demand above which
/// verification fails an agent.
pub const OPTIMALITY_GATE: f64 = 1e-6;

/// Geometric annealing factor for the Walrasian player's temperature.
const ANNEAL: f64 = 0.9;
/// Iterations without residual improvement before a phase gives up.
const STALL_WINDOW: usize = 30;

/// A candidate equilibrium: canonical simplex-normalized price, the
/// allocation, and the diagnostics attached to them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equilibrium<S: Scalar> {
    pub psi: StatePrice<S>,
    pub allocation: Vec<ContingentPlan<S>>,
    /// The Knightian player's maximizing prior, symmetrized over ties.
    pub worst_prior: Vec<S>,
    /// Statewise unconsumed endowment, clamped at zero so it stays
    /// meaningful alongside a positive residual.
    pub disposal: ContingentPlan<S>,
    /// Negishi weights when the Arrow-Debreu solver produced this.
    pub welfare_weights: Option<Vec<S>>,
    pub residual: S,
    pub converged: bool,
}

/// Knobs for both solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig<S> {
    /// Price-update damping, in `(0, 1]`.
    pub damping: S,
    /// Initial softmax temperature of the Walrasian player.
    pub temperature: S,
    pub max_outer: usize,
    pub residual_tol: S,
    /// Consumption box multiplier on the aggregate endowment.
    pub truncation: S,
    /// Levels of simplicial refinement after the fictitious play.
    pub refine_depth: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            damping: fp(0.5),
            temperature: S::one(),
            max_outer: 400,
            residual_tol: fp(1e-9),
            truncation: fp(DEFAULT_TRUNCATION),
            refine_depth: 48,
            seed: 0,
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > S::zero() && self.damping <= S::one()) {
            return Err(KwError::InvalidParameter {
                name: "damping",
                reason: format!("must lie in (0, 1], got {}", self.damping),
            });
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("residual_tol", self.residual_tol),
            ("truncation", self.truncation),
        ] {
            if !(v > S::zero()) {
                return Err(KwError::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Independent re-derivation of the equilibrium conditions at a
/// candidate price and allocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport<S: Scalar> {
    /// Per-agent sublinear budget value of the net trade; feasible when
    /// nonpositive (up to [`BUDGET_GATE`]).
    pub budget_slacks: Vec<S>,
    /// Per-agent utility shortfall against freshly recomputed demand.
    pub optimality_gaps: Vec<S>,
    pub feasibility_residual: S,
    /// `|Psi(sum_i (c_i - e_i)) - sum_i Psi(c_i - e_i)|`; reported, not
    /// gated, because with strict disposal the two sides legitimately
    /// differ.
    pub no_arbitrage_gap: S,
    /// Net trade bills `psi (c_i - e_i)` at the normalized price.
    pub net_trade_values: Vec<ContingentPlan<S>>,
    /// Whether each bill has the same expectation under every prior.
    pub mean_af_flags: Vec<bool>,
    pub verdict: bool,
}

/// Residual of a candidate price given aggregate excess demand.
fn residual_of<S: Scalar>(clearing: ClearingConvention, z: &ContingentPlan<S>) -> S {
    match clearing {
        ClearingConvention::FreeDisposal => z.max_entry().max(S::zero()),
        ClearingConvention::Equality => {
            z.values().iter().map(|v| v.abs()).fold(S::zero(), S::max)
        }
    }
}

/// The Knightian player's symmetric best response: the average of the
/// prior vertices maximizing the expected value of the bill
/// `psi z`. With a constant bill every vertex ties and the response is
/// the centroid.
fn knightian_response<S: Scalar>(
    priors: &PriorSet<S>,
    psi: &StatePrice<S>,
    z: &ContingentPlan<S>,
) -> Vec<S> {
    let bill = psi.hadamard(z);
    let scores = priors
        .expectations(&bill)
        .expect("bill matches the state count");
    let mx = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let scale = scores
        .iter()
        .map(|s| s.abs())
        .fold(S::one(), S::max);
    let tied: Vec<usize> = (0..scores.len())
        .filter(|&k| mx - scores[k] <= fp::<S>(1e-12) * scale)
        .collect();
    let mut out = vec![S::zero(); priors.state_count()];
    let share = S::one() / fp(tied.len() as f64);
    for &k in &tied {
        for (o, &p) in out.iter_mut().zip(priors.vertex(k)) {
            *o = *o + share * p;
        }
    }
    out
}

/// Engine settings for the search probes: coarser than the default so
/// a solve stays interactive; the Newton face refinement inside demand
/// recovers the precision that matters, and the final pass at the best
/// price reruns at full accuracy.
fn probe_config<S: Scalar>() -> SolveConfig<S> {
    SolveConfig {
        max_iters: 2_500,
        patience: 25,
        delta_floor: fp(1e-13),
        ..SolveConfig::default()
    }
}

type ProbeMemo<S> = HashMap<Vec<u64>, (S, ContingentPlan<S>)>;

/// Residual and excess demand at a price, memoized on the exact bit
/// pattern. Failed probes (boundary prices can starve a subproblem)
/// count as infinitely bad rather than aborting the solve.
fn probe<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: &[S],
    truncation: S,
    inner: &SolveConfig<S>,
    memo: &mut ProbeMemo<S>,
) -> (S, ContingentPlan<S>) {
    let key: Vec<u64> = psi
        .iter()
        .map(|x| x.to_f64().unwrap_or(f64::NAN).to_bits())
        .collect();
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match StatePrice::new(psi.to_vec())
        .and_then(|p| excess_demand_with(economy, &p, truncation, inner))
    {
        Ok((z, _)) => (residual_of(economy.clearing(), &z), z),
        Err(_) => (S::infinity(), ContingentPlan::zero(economy.state_count())),
    };
    memo.insert(key, out.clone());
    out
}

/// All barycentric grid points of resolution `q` over `corners`.
fn simplex_grid<S: Scalar>(corners: &[Vec<S>], q: usize) -> Vec<Vec<S>> {
    let n = corners.len();
    let dim = corners[0].len();
    let mut weights = Vec::new();
    let mut cur = vec![0usize; n];
    fill_compositions(&mut weights, &mut cur, 0, q);
    weights
        .into_iter()
        .map(|w| {
            let mut point = vec![S::zero(); dim];
            for (c, &k) in corners.iter().zip(&w) {
                let lam = fp::<S>(k as f64) / fp::<S>(q as f64);
                for (p, &cv) in point.iter_mut().zip(c) {
                    *p = *p + lam * cv;
                }
            }
            point
        })
        .collect()
}

fn fill_compositions(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in 0..=left {
        cur[pos] = k;
        fill_compositions(out, cur, pos + 1, left - k);
    }
}

/// Dense Gaussian elimination with partial pivoting; `None` when the
/// system is numerically singular.
fn solve_dense<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap();
        if a[pivot][col].abs() <= fp(1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] = a[row][k] - m * a[col][k];
            }
            b[row] = b[row] - m * b[col];
        }
    }
    let mut x = vec![S::zero(); n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Finite-difference Newton polish of the incumbent price: solves the
/// reduced excess-demand system along simplex directions, accepting
/// only residual-decreasing steps so a kinked or disposal-slack region
/// simply terminates the loop instead of derailing it.
fn newton_polish<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    truncation: S,
    tol: S,
    inner: &SolveConfig<S>,
    memo: &mut ProbeMemo<S>,
    best_r: &mut S,
    best_psi: &mut Vec<S>,
) {
    let n = best_psi.len();
    if n < 2 {
        return;
    }
    let h = fp::<S>(1e-6).max(S::epsilon().sqrt());
    let mut psi = best_psi.clone();
    let mut r = *best_r;
    for _ in 0..25 {
        if r <= tol || !r.is_finite() {
            break;
        }
        let (_, z) = probe(economy, &psi, truncation, inner, memo);
        let mut jac = vec![vec![S::zero(); n - 1]; n - 1];
        let rhs: Vec<S> = (0..n - 1).map(|i| -z.values()[i]).collect();
        let mut degenerate = false;
        for j in 0..n - 1 {
            let mut stepped = psi.clone();
            stepped[j] = stepped[j] + h;
            stepped[n - 1] = stepped[n - 1] - h;
            if stepped[n - 1] <= S::zero() {
                degenerate = true;
                break;
            }
            let (rp, zp) = probe(economy, &stepped, truncation, inner, memo);
            if !rp.is_finite() {
                degenerate = true;
                break;
            }
            for i in 0..n - 1 {
                jac[i][j] = (zp.values()[i] - z.values()[i]) / h;
            }
        }
        if degenerate {
            break;
        }
        let Some(delta) = solve_dense(jac, rhs) else {
            break;
        };
        let mut accepted = false;
        let mut scale = S::one();
        for _ in 0..6 {
            let mut cand = psi.clone();
            let mut shift = S::zero();
            for j in 0..n - 1 {
                cand[j] = cand[j] + scale * delta[j];
                shift = shift + scale * delta[j];
            }
            cand[n - 1] = cand[n - 1] - shift;
            if cand.iter().all(|&x| x > S::zero()) {
                normalize(&mut cand);
                let (rc, _) = probe(economy, &cand, truncation, inner, memo);
                if rc < r {
                    psi = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            scale = scale * fp(0.5);
        }
        if !accepted {
            break;
        }
    }
    if r < *best_r {
        *best_r = r;
        *best_psi = psi;
    }
}

/// Computes a Knight-Walras equilibrium: a no-trade fast path when
/// autarky is certifiably supportable, then damped fictitious play on
/// the price, then simplicial refinement if the play stalls above
/// tolerance. Always returns the best candidate found; `converged`
/// flags whether the residual met the tolerance.
pub fn solve_kw<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    config: &SolverConfig<S>,
) -> Result<Equilibrium<S>> {
    config.validate()?;
    let n = economy.state_count();
    let priors = economy.priors();

    if economy
        .agents()
        .iter()
        .all(|a| a.endowment.min_entry() > S::zero())
    {
        if let Ok(cert) = no_trade_certificate(economy, None) {
            if cert.status == SupportStatus::Supportable {
                let psi = cert
                    .psi
                    .expect("supportable certificate carries a witness")
                    .normalized()?;
                return Ok(Equilibrium {
                    psi,
                    allocation: economy
                        .agents()
                        .iter()
                        .map(|a| a.endowment.clone())
                        .collect(),
                    worst_prior: priors.centroid(),
                    disposal: ContingentPlan::zero(n),
                    welfare_weights: None,
                    residual: S::zero(),
                    converged: true,
                });
            }
        }
    }

    let inner = probe_config::<S>();
    let mut memo: ProbeMemo<S> = HashMap::new();

    // Phase 1: damped fictitious play with an annealed softmax price
    // response. The seed only jitters the starting price.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut psi: Vec<S> = (0..n)
        .map(|_| S::one() + fp::<S>(0.1) * fp::<S>(rng.gen::<f64>()))
        .collect();
    normalize(&mut psi);
    let mut temp = config.temperature;
    let mut best_psi = psi.clone();
    let mut best_r = S::infinity();
    let mut since_improvement = 0usize;
    for _ in 0..config.max_outer {
        let (r, z) = probe(economy, &psi, config.truncation, &inner, &mut memo);
        if r < best_r {
            best_r = r;
            best_psi = psi.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if best_r <= config.residual_tol || since_improvement > STALL_WINDOW {
            break;
        }
        let worst = knightian_response(priors, &StatePrice::new(psi.clone())?, &z);
        let payoff: Vec<S> = worst
            .iter()
            .zip(z.values())
            .map(|(&p, &zv)| p * zv)
            .collect();
        let target = softmax(&payoff, temp);
        for (p, t) in psi.iter_mut().zip(&target) {
            *p = (S::one() - config.damping) * *p + config.damping * *t;
        }
        normalize(&mut psi);
        temp = (temp * fp(ANNEAL)).max(fp(1e-9));
    }

    // Phase 2: polish the incumbent along the smooth excess-demand
    // system, fall back to a simplicial pattern search when the local
    // step stalls, then polish whatever the search uncovered. The
    // pattern frame halves on failed levels and re-expands on
    // successful ones, so the incumbent can walk an arbitrary distance
    // at one scale; `refine_depth` budgets the halvings, putting the
    // final grid pitch near `0.5^refine_depth`.
    newton_polish(
        economy,
        config.truncation,
        config.residual_tol,
        &inner,
        &mut memo,
        &mut best_r,
        &mut best_psi,
    );
    if best_r > config.residual_tol {
        let q = if n <= 3 { 4 } else { 3 };
        let mut corners: Vec<Vec<S>> = (0..n)
            .map(|i| {
                let mut e = vec![S::zero(); n];
                e[i] = S::one();
                e
            })
            .collect();
        let mut halvings = 0usize;
        let mut levels = 0usize;
        while halvings < config.refine_depth && levels < config.refine_depth * 8 {
            levels += 1;
            let mut improved = false;
            for point in simplex_grid(&corners, q) {
                let (r, _) = probe(economy, &point, config.truncation, &inner, &mut memo);
                if r < best_r {
                    best_r = r;
                    best_psi = point;
                    improved = true;
                }
            }
            if best_r <= config.residual_tol {
                break;
            }
            let diameter = corners
                .iter()
                .flat_map(|c| c.iter().zip(&best_psi).map(|(&cv, &bv)| (cv - bv).abs()))
                .fold(S::zero(), S::max);
            let factor = if improved {
                // Re-expansion is capped so the frame stays near scale.
                if diameter < fp(0.25) {
                    fp::<S>(2.0)
                } else {
                    S::one()
                }
            } else {
                halvings += 1;
                fp::<S>(0.5)
            };
            for c in corners.iter_mut() {
                for (cv, &bv) in c.iter_mut().zip(&best_psi) {
                    *cv = bv + (*cv - bv) * factor;
                }
            }
            if diameter * factor <= fp(1e-14) {
                break;
            }
        }
        newton_polish(
            economy,
            config.truncation,
            config.residual_tol,
            &inner,
            &mut memo,
            &mut best_r,
            &mut best_psi,
        );
    }

    // Full-accuracy pass at the winning price.
    let psi = StatePrice::new(best_psi)?.normalized()?;
    let (z, demands) =
        excess_demand_with(economy, &psi, config.truncation, &SolveConfig::default())?;
    let residual = residual_of(economy.clearing(), &z);
    Ok(Equilibrium {
        worst_prior: knightian_response(priors, &psi, &z),
        psi,
        allocation: demands.into_iter().map(|d| d.plan).collect(),
        disposal: z.map(|v| (-v).max(S::zero())),
        welfare_weights: None,
        residual,
        converged: residual <= config.residual_tol,
    })
}

fn normalize<S: Scalar>(v: &mut [S]) {
    let total: S = v.iter().copied().fold(S::zero(), |a, b| a + b);
    for x in v.iter_mut() {
        *x = *x / total;
    }
}

fn softmax<S: Scalar>(v: &[S], temp: S) -> Vec<S> {
    let mx = v.iter().copied().fold(S::neg_infinity(), S::max);
    let mut out: Vec<S> = v.iter().map(|&x| ((x - mx) / temp).exp()).collect();
    let total: S = out.iter().copied().fold(S::zero(), |a, b| a + b);
    for x in out.iter_mut() {
        *x = *x / total;
    }
    out
}

/// Re-derives every equilibrium condition at the candidate: budget
/// slacks from the sublinear bill, optimality gaps against recomputed
/// demand, clearing per convention, plus the no-arbitrage gap and the
/// mean-ambiguity classification of the net trades.
///
/// The price is normalized to the simplex first, so rescaled prices
/// produce identical reports.
pub fn verify_equilibrium<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: &StatePrice<S>,
    allocation: &[ContingentPlan<S>],
    config: &SolverConfig<S>,
) -> Result<VerificationReport<S>> {
    config.validate()?;
    let n = economy.state_count();
    let priors = economy.priors();
    if allocation.len() != economy.num_agents() {
        return Err(KwError::InvalidEconomy(format!(
            "allocation covers {} agents, economy has {}",
            allocation.len(),
            economy.num_agents()
        )));
    }
    if psi.len() != n {
        return Err(KwError::DimensionMismatch {
            expected: n,
            got: psi.len(),
        });
    }
    for plan in allocation {
        if plan.len() != n {
            return Err(KwError::DimensionMismatch {
                expected: n,
                got: plan.len(),
            });
        }
    }
    let psi = psi.normalized()?;
    let cap = economy.aggregate_endowment().scale(config.truncation);
    let engine = SolveConfig::default();

    let mut budget_slacks = Vec::with_capacity(allocation.len());
    let mut optimality_gaps = Vec::with_capacity(allocation.len());
    let mut net_trade_values = Vec::with_capacity(allocation.len());
    let mut mean_af_flags = Vec::with_capacity(allocation.len());
    let mut z = ContingentPlan::zero(n);
    for (agent, plan) in economy.agents().iter().zip(allocation) {
        let slack = budget_value(&psi, priors, &agent.endowment, plan)?;
        let recomputed = demand_with(agent, priors, &psi, &cap, &engine)?;
        let candidate_value = agent
            .preference
            .utility_clamped(priors, plan, fp(1e-12))?;
        let xi = psi.hadamard(&plan.sub(&agent.endowment));
        budget_slacks.push(slack);
        optimality_gaps.push(recomputed.utility_value - candidate_value);
        mean_af_flags.push(priors.is_mean_ambiguity_free(&xi, fp(1e-9))?);
        net_trade_values.push(xi);
        z = z.add(&plan.sub(&agent.endowment));
    }
    let feasibility_residual = residual_of(economy.clearing(), &z);
    let aggregate_value = psi.price(priors, &z)?;
    let slack_sum: S = budget_slacks.iter().copied().fold(S::zero(), |a, b| a + b);
    let no_arbitrage_gap = (aggregate_value - slack_sum).abs();

    let verdict = budget_slacks.iter().all(|&s| s <= fp(BUDGET_GATE))
        && optimality_gaps.iter().all(|&g| g <= fp(OPTIMALITY_GATE))
        && feasibility_residual <= config.residual_tol;
    Ok(VerificationReport {
        budget_slacks,
        optimality_gaps,
        feasibility_residual,
        no_arbitrage_gap,
        net_trade_values,
        mean_af_flags,
        verdict,
    })
}
