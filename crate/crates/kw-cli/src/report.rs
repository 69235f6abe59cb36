//! Machine-readable run reports and CSV emission.
//!
//! Reports are JSON documents with a strict schema so a report written
//! by one invocation can be read back (and, for `verify`, fed in as a
//! candidate). Floats in CSV cells carry 17 significant digits, enough
//! to reconstruct the exact binary value; report JSON uses the shortest
//! representation that round-trips, so re-serializing a parsed report
//! reproduces it byte for byte.

use knight_walras::analysis::SweepRecord;
use knight_walras::equilibrium::{Equilibrium, SupportStatus, VerificationReport};
use serde::{Deserialize, Serialize};

/// One completed invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub command: CommandEcho,
    pub economy: EconomyDigest,
    pub results: RunResults,
    /// Wall-clock milliseconds; varies between runs, so determinism
    /// claims are about the CSV artifacts, not this file.
    pub timing_ms: f64,
    pub tool_version: String,
}

/// The invocation as resolved: subcommand, paths, and effective flag
/// values after file overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEcho {
    pub subcommand: String,
    pub scenario: String,
    pub out: String,
    pub convention: String,
    pub seed: u64,
    pub ad: bool,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
}

/// Summary of the economy the run operated on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyDigest {
    pub states: usize,
    pub agents: usize,
    pub clearing: String,
    pub prior_vertices: Vec<Vec<f64>>,
    pub aggregate_endowment: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunResults {
    Solve {
        kw: EquilibriumOut,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ad: Option<EquilibriumOut>,
        /// Sup-norm allocation distance between the two solvers, when
        /// both ran.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ad_agreement_sup_norm: Option<f64>,
        /// Endowment supportability at the scenario priors; absent when
        /// some endowment touches zero.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        no_trade_certificate: Option<String>,
    },
    Verify {
        verdict: bool,
        /// All price-denominated entries are in the candidate's own
        /// units: the library normalizes the price to unit mass, and
        /// `price_scale` is the factor that undoes that.
        price_scale: f64,
        budget_slacks: Vec<f64>,
        optimality_gaps: Vec<f64>,
        feasibility_residual: f64,
        no_arbitrage_gap: f64,
        mean_af_flags: Vec<bool>,
        net_trade_values: Vec<Vec<f64>>,
    },
    Sweep {
        csv: String,
        records: Vec<SweepRow>,
    },
    Sample {
        csv: String,
        fraction: f64,
        draws: usize,
        hits: usize,
    },
}

/// Equilibrium flattened to plain vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumOut {
    pub psi: Vec<f64>,
    pub allocation: Vec<Vec<f64>>,
    pub worst_prior: Vec<f64>,
    pub disposal: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub welfare_weights: Option<Vec<f64>>,
}

impl EquilibriumOut {
    pub fn from_equilibrium(eq: &Equilibrium<f64>) -> Self {
        Self {
            psi: eq.psi.values().to_vec(),
            allocation: eq.allocation.iter().map(|p| p.values().to_vec()).collect(),
            worst_prior: eq.worst_prior.clone(),
            disposal: eq.disposal.values().to_vec(),
            residual: eq.residual,
            converged: eq.converged,
            welfare_weights: eq.welfare_weights.clone(),
        }
    }
}

/// One sweep grid point; numeric fields are absent when the solve
/// errored outright (JSON has no NaN).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trade_volume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disposal_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_to_eps0_allocation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_trade_certificate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumption: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

pub fn status_label(status: SupportStatus) -> &'static str {
    match status {
        SupportStatus::Supportable => "supportable",
        SupportStatus::Unsupportable => "unsupportable",
    }
}

impl SweepRow {
    pub fn from_record(record: &SweepRecord<f64>) -> Self {
        let certificate = record.certificate.map(|s| status_label(s).to_string());
        match &record.equilibrium {
            Some(eq) => Self {
                epsilon: record.epsilon,
                converged: Some(eq.converged),
                residual: Some(eq.residual),
                trade_volume: Some(record.trade_volume),
                disposal_l1: Some(record.disposal_l1),
                dist_to_eps0_allocation: Some(record.distance_to_base),
                no_trade_certificate: certificate,
                psi: Some(eq.psi.values().to_vec()),
                consumption: Some(eq.allocation.iter().map(|p| p.values().to_vec()).collect()),
                failure: record.failure.clone(),
            },
            None => Self {
                epsilon: record.epsilon,
                converged: Some(false),
                residual: None,
                trade_volume: None,
                disposal_l1: None,
                dist_to_eps0_allocation: None,
                no_trade_certificate: certificate,
                psi: None,
                consumption: None,
                failure: record.failure.clone(),
            },
        }
    }
}

/// 17 significant digits: exact for every finite `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell_f(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn cell_b(x: Option<bool>) -> String {
    x.map(|b| if b { "true" } else { "false" }.to_string())
        .unwrap_or_default()
}

/// Sweep CSV: one row per epsilon, columns fixed by state and agent
/// counts. Failure details stay in the JSON report so cells never need
/// quoting.
pub fn sweep_csv(rows: &[SweepRow], states: usize, agents: usize) -> String {
    let mut header: Vec<String> = [
        "epsilon",
        "converged",
        "residual",
        "trade_volume",
        "disposal_l1",
        "dist_to_eps0_allocation",
        "no_trade_certificate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for w in 0..states {
        header.push(format!("psi_{w}"));
    }
    for i in 0..agents {
        for w in 0..states {
            header.push(format!("c_{i}_{w}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut cells = vec![
            fmt17(row.epsilon),
            cell_b(row.converged),
            cell_f(row.residual),
            cell_f(row.trade_volume),
            cell_f(row.disposal_l1),
            cell_f(row.dist_to_eps0_allocation),
            row.no_trade_certificate.clone().unwrap_or_default(),
        ];
        for w in 0..states {
            cells.push(cell_f(row.psi.as_ref().map(|p| p[w])));
        }
        for i in 0..agents {
            for w in 0..states {
                cells.push(cell_f(row.consumption.as_ref().map(|c| c[i][w])));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Sample CSV: one row per draw with the resampled endowments.
pub fn sample_csv(
    draws: &[knight_walras::analysis::GenericityDraw<f64>],
    states: usize,
    agents: usize,
) -> String {
    let mut header: Vec<String> = ["draw", "verdict"].iter().map(|s| s.to_string()).collect();
    for i in 0..agents {
        for w in 0..states {
            header.push(format!("e_{i}_{w}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (index, draw) in draws.iter().enumerate() {
        let mut cells = vec![index.to_string(), cell_b(Some(draw.verdict))];
        for plan in &draw.endowments {
            for &v in plan.values() {
                cells.push(fmt17(v));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Verification results rescaled from the library's unit-mass price to
/// the candidate's own units. Budget values and bills are positively
/// homogeneous in the price; utility gaps and feasibility are not price
/// denominated and pass through.
pub fn verify_results(report: &VerificationReport<f64>, price_scale: f64) -> RunResults {
    RunResults::Verify {
        verdict: report.verdict,
        price_scale,
        budget_slacks: report.budget_slacks.iter().map(|s| s * price_scale).collect(),
        optimality_gaps: report.optimality_gaps.clone(),
        feasibility_residual: report.feasibility_residual,
        no_arbitrage_gap: report.no_arbitrage_gap * price_scale,
        mean_af_flags: report.mean_af_flags.clone(),
        net_trade_values: report
            .net_trade_values
            .iter()
            .map(|p| p.values().iter().map(|v| v * price_scale).collect())
            .collect(),
    }
}

/// Canonical serialization used for report files.
pub fn to_json(report: &RunReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports hold only finite numbers");
    text.push('\n');
    text
}
