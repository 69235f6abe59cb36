//! No-trade certificates: decides whether autarky is supported by a
//! state price, and produces either a witness price or per-agent cone
//! diagnostics.
//!
//! At the endowment every budget constraint is active, so the normal
//! cone of the budget set at `e` is the conic hull of `{P_k psi}` over
//! the prior vertices. Autarky is optimal for an agent exactly when the
//! superdifferential of its utility at `e` meets that cone; for a fixed
//! `psi` that intersection is an LP feasibility problem over the two
//! vertex hulls.

use serde::{Deserialize, Serialize};

use crate::error::KwError;
use crate::markets::Economy;
use crate::optimization::{lp_feasibility, solve_lp, Feasibility, LinearProgram, LpSolution};
use crate::scalar::{fp, Scalar};
use crate::state_space::{ContingentPlan, PriorSet, StatePrice};
use crate::optimization::LinearScalar;
use crate::Result;

/// Outcome of the certificate search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportStatus {
    Supportable,
    Unsupportable,
}

/// Cone diagnostics for one agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConeReport<S: Scalar> {
    /// Whether the agent's superdifferential meets the price-prior cone
    /// at the reported price (the witness when supportable, otherwise
    /// the last price tested).
    pub feasible: bool,
    /// Supporting prior `sum_k y_k P_k / sum_k y_k` recovered from the
    /// cone coefficients of a feasible intersection.
    pub supporting_prior: Option<Vec<S>>,
    /// Two-state economies only: the closed interval of price ratios
    /// `psi_1/psi_2` this agent can support. `None` when a generator or
    /// prior vertex has a zero coordinate, which makes the ratio
    /// factorization degenerate.
    pub ratio_interval: Option<(S, S)>,
}

/// Certificate returned by [`no_trade_certificate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoTradeCertificate<S: Scalar> {
    pub status: SupportStatus,
    /// Witness price when supportable.
    pub psi: Option<StatePrice<S>>,
    pub agents: Vec<AgentConeReport<S>>,
}

/// Supergradient tie tolerance at the endowment.
const GENERATOR_TOL: f64 = 1e-9;

/// Decides whether the endowment allocation is supportable as an
/// equilibrium, at the given price or, when `psi` is omitted, at any
/// strictly positive price.
///
/// With `psi` given, the answer is exact (one LP feasibility problem
/// per agent). Without it, two-state economies are decided exactly by
/// intersecting per-agent price-ratio intervals; larger state spaces
/// are searched over supergradient-aligned candidates plus a log-ratio
/// grid, so an `Unsupportable` verdict there means the search found no
/// witness.
pub fn no_trade_certificate<S: Scalar + LinearScalar>(
    economy: &Economy<S>,
    psi: Option<&StatePrice<S>>,
) -> Result<NoTradeCertificate<S>> {
    let priors = economy.priors();
    for agent in economy.agents() {
        if agent.endowment.min_entry() <= S::zero() {
            return Err(KwError::InvalidParameter {
                name: "endowment",
                reason: "the no-trade certificate needs strictly positive endowments".into(),
            });
        }
    }
    let generators: Vec<Vec<ContingentPlan<S>>> = economy
        .agents()
        .iter()
        .map(|a| {
            a.preference
                .superdifferential(priors, &a.endowment, fp(GENERATOR_TOL))
        })
        .collect::<Result<_>>()?;

    if let Some(psi) = psi {
        if psi.len() != economy.state_count() {
            return Err(KwError::DimensionMismatch {
                expected: economy.state_count(),
                got: psi.len(),
            });
        }
        return Ok(certify_at(priors, &generators, psi));
    }

    // Candidate prices aligned with each agent's supergradients: if a
    // common witness exists it often has the form g / q for one agent's
    // generator g and some prior q.
    let mut candidates: Vec<StatePrice<S>> = vec![StatePrice::uniform(economy.state_count())];
    let centroid = priors.centroid();
    let mut prior_points: Vec<Vec<S>> = vec![centroid];
    prior_points.extend(priors.vertices().iter().cloned());
    for gens in &generators {
        for g in gens {
            for q in &prior_points {
                if q.iter().any(|&v| v <= S::zero()) {
                    continue;
                }
                let raw: Vec<S> = g.values().iter().zip(q).map(|(&gv, &qv)| gv / qv).collect();
                if let Ok(cand) = StatePrice::new(raw).and_then(|p| p.normalized()) {
                    candidates.push(cand);
                }
            }
        }
    }
    for cand in &candidates {
        let cert = certify_at(priors, &generators, cand);
        if cert.status == SupportStatus::Supportable {
            return Ok(cert);
        }
    }

    if economy.state_count() == 2 {
        if let Some(intervals) = ratio_intervals(priors, &generators)? {
            return Ok(certify_two_state(priors, &generators, &intervals));
        }
    }

    // Log-ratio grid fallback; kept coarse because the candidate pass
    // already covers the aligned directions.
    let n = economy.state_count();
    if n > 2 && n <= 4 {
        let steps: usize = 9;
        let lo = -fp::<S>(30.0).ln();
        let hi = fp::<S>(30.0).ln();
        let dims = n - 1;
        for code in 0..steps.pow(dims as u32) {
            let mut rest = code;
            let mut raw = vec![S::one(); n];
            for slot in raw.iter_mut().skip(1) {
                let i = rest % steps;
                rest /= steps;
                let t = lo + (hi - lo) * fp::<S>(i as f64) / fp::<S>((steps - 1) as f64);
                *slot = t.exp();
            }
            if let Ok(cand) = StatePrice::new(raw).and_then(|p| p.normalized()) {
                let cert = certify_at(priors, &generators, &cand);
                if cert.status == SupportStatus::Supportable {
                    return Ok(cert);
                }
            }
        }
    }

    // No witness found; report diagnostics at the uniform price.
    Ok(certify_at(
        priors,
        &generators,
        &StatePrice::uniform(economy.state_count()),
    ))
}

/// Exact certificate at a fixed price.
fn certify_at<S: Scalar + LinearScalar>(
    priors: &PriorSet<S>,
    generators: &[Vec<ContingentPlan<S>>],
    psi: &StatePrice<S>,
) -> NoTradeCertificate<S> {
    let mut agents = Vec::with_capacity(generators.len());
    let mut all = true;
    for gens in generators {
        let report = cone_feasibility(priors, gens, psi);
        all &= report.feasible;
        agents.push(report);
    }
    NoTradeCertificate {
        status: if all {
            SupportStatus::Supportable
        } else {
            SupportStatus::Unsupportable
        },
        psi: if all { Some(psi.clone()) } else { None },
        agents,
    }
}

/// One agent's intersection test `conv(G) ∩ cone{P_k psi} ≠ ∅` as an LP
/// over hull weights `beta` (summing to one) and cone coefficients `y`.
fn cone_feasibility<S: Scalar + LinearScalar>(
    priors: &PriorSet<S>,
    gens: &[ContingentPlan<S>],
    psi: &StatePrice<S>,
) -> AgentConeReport<S> {
    let n = psi.len();
    let nj = gens.len();
    let nk = priors.num_vertices();
    let mut lp = LinearProgram::new(nj + nk);
    for w in 0..n {
        let mut row = vec![S::zero(); nj + nk];
        for (j, g) in gens.iter().enumerate() {
            row[j] = g[w];
        }
        for k in 0..nk {
            row[nj + k] = -priors.vertex(k)[w] * psi.values()[w];
        }
        lp.add_eq(row, S::zero());
    }
    let mut hull = vec![S::zero(); nj + nk];
    hull[..nj].fill(S::one());
    lp.add_eq(hull, S::one());

    match lp_feasibility(&lp) {
        Ok(Feasibility::Feasible { witness }) => {
            let total: S = witness[nj..].iter().copied().fold(S::zero(), |a, b| a + b);
            let supporting_prior = if total > fp(1e-12) {
                let mut q = vec![S::zero(); n];
                for (k, &y) in witness[nj..].iter().enumerate() {
                    for (qw, &p) in q.iter_mut().zip(priors.vertex(k)) {
                        *qw = *qw + y * p / total;
                    }
                }
                Some(q)
            } else {
                None
            };
            AgentConeReport {
                feasible: true,
                supporting_prior,
                ratio_interval: None,
            }
        }
        _ => AgentConeReport {
            feasible: false,
            supporting_prior: None,
            ratio_interval: None,
        },
    }
}

/// Per-agent supportable ratio intervals for two-state economies.
///
/// The cone condition factors as `psi_1/psi_2 = (g_1/g_2) (q_2/q_1)`
/// over independent hulls, so the supportable set is the product of the
/// two factor ranges, each the value of a linear-fractional program in
/// Charnes-Cooper form. Returns `None` when a zero coordinate breaks
/// the factorization.
fn ratio_intervals<S: Scalar + LinearScalar>(
    priors: &PriorSet<S>,
    generators: &[Vec<ContingentPlan<S>>],
) -> Result<Option<Vec<(S, S)>>> {
    let positive = |v: &[S]| v.iter().all(|&x| x > S::zero());
    if !priors.vertices().iter().all(|v| positive(v)) {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(generators.len());
    for gens in generators {
        if !gens.iter().all(|g| positive(g.values())) {
            return Ok(None);
        }
        let pts: Vec<Vec<S>> = gens.iter().map(|g| g.values().to_vec()).collect();
        let (g_lo, g_hi) = ratio_range(&pts, 0, 1)?;
        let (q_lo, q_hi) = ratio_range(priors.vertices(), 1, 0)?;
        out.push((g_lo * q_lo, g_hi * q_hi));
    }
    Ok(Some(out))
}

/// Range of `v[num]/v[den]` over the convex hull of `points`, by
/// maximizing `sum u_j points_j[num]` subject to the denominator
/// normalization `sum u_j points_j[den] = 1`, `u >= 0`.
fn ratio_range<S: Scalar + LinearScalar>(
    points: &[Vec<S>],
    num: usize,
    den: usize,
) -> Result<(S, S)> {
    let bound = |sign: S| -> Result<S> {
        let mut lp = LinearProgram::new(points.len());
        lp.set_objective(points.iter().map(|p| sign * p[num]).collect());
        lp.add_eq(points.iter().map(|p| p[den]).collect(), S::one());
        match solve_lp(&lp)? {
            LpSolution::Optimal { value, .. } => Ok(sign * value),
            LpSolution::Unbounded { .. } => Ok(S::infinity() * sign),
            LpSolution::Infeasible { .. } => Err(KwError::Infeasible(
                "ratio denominator vanishes on the hull".into(),
            )),
        }
    };
    let hi = bound(S::one())?;
    let lo = bound(-S::one())?;
    Ok((lo, hi))
}

/// Two-state decision from the per-agent ratio intervals: supportable
/// exactly when the intervals intersect, with the witness taken from
/// the interior of the intersection.
fn certify_two_state<S: Scalar + LinearScalar>(
    priors: &PriorSet<S>,
    generators: &[Vec<ContingentPlan<S>>],
    intervals: &[(S, S)],
) -> NoTradeCertificate<S> {
    let lo = intervals
        .iter()
        .map(|&(l, _)| l)
        .fold(S::zero(), S::max);
    let hi = intervals
        .iter()
        .map(|&(_, h)| h)
        .fold(S::infinity(), S::min);
    if lo <= hi * (S::one() + fp(1e-12)) {
        let mid = if lo <= S::zero() {
            if hi.is_finite() {
                hi / fp(2.0)
            } else {
                S::one()
            }
        } else if hi.is_finite() {
            (lo * hi).sqrt()
        } else {
            lo * fp(2.0)
        };
        // Endpoint candidates guard against an intersection that is a
        // single boundary point.
        for cand in [mid, lo, hi] {
            if !cand.is_finite() || cand <= S::zero() {
                continue;
            }
            let p = StatePrice::new(vec![cand / (S::one() + cand), S::one() / (S::one() + cand)])
                .expect("ratio witness is finite");
            let mut cert = certify_at(priors, generators, &p);
            if cert.status == SupportStatus::Supportable {
                attach_intervals(&mut cert, intervals);
                return cert;
            }
        }
    }
    let mut cert = certify_at(priors, generators, &StatePrice::uniform(2));
    cert.status = SupportStatus::Unsupportable;
    cert.psi = None;
    attach_intervals(&mut cert, intervals);
    cert
}

fn attach_intervals<S: Scalar>(cert: &mut NoTradeCertificate<S>, intervals: &[(S, S)]) {
    for (report, &iv) in cert.agents.iter_mut().zip(intervals) {
        report.ratio_interval = Some(iv);
    }
}
