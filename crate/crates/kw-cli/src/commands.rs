//! The four pipelines behind the subcommands.
//!
//! Exit code policy: 0 on success, 1 when the numbers came back but did
//! not converge or did not verify (the report is still written), 2 on
//! any input problem, from unreadable files through schema violations
//! to economies the library constructors reject.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use knight_walras::analysis::{genericity_experiment, kw_correspondence_sweep};
use knight_walras::equilibrium::{no_trade_certificate, solve_ad, solve_kw, verify_equilibrium};
use knight_walras::state_space::{ContingentPlan, StatePrice};
use knight_walras::{Economy64, KwError};
use thiserror::Error;

use crate::report::{
    fmt17, sample_csv, status_label, sweep_csv, to_json, verify_results, CommandEcho,
    EconomyDigest, EquilibriumOut, RunReport, RunResults, SweepRow,
};
use crate::scenario::{CandidateFile, ConventionSpec, ScenarioFile};

/// Input problems; every variant exits with code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Scenario { path: PathBuf, message: String },
    #[error(transparent)]
    Library(#[from] KwError),
}

/// A resolved invocation, after clap.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub subcommand: &'static str,
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub convention: Option<ConventionSpec>,
    pub seed: Option<u64>,
    pub ad: bool,
    pub tolerance: Option<f64>,
    pub candidate: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn digest(economy: &Economy64, convention: &str) -> EconomyDigest {
    EconomyDigest {
        states: economy.state_count(),
        agents: economy.num_agents(),
        clearing: convention.to_string(),
        prior_vertices: economy.priors().vertices().to_vec(),
        aggregate_endowment: economy.aggregate_endowment().values().to_vec(),
    }
}

fn sup_norm(a: &[ContingentPlan<f64>], b: &[ContingentPlan<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(&u, &v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Runs one invocation end to end; `Ok` carries the exit code.
pub fn run(inv: &Invocation) -> Result<u8, CliError> {
    let started = Instant::now();
    let scenario: ScenarioFile = read_json(&inv.scenario)?;
    let economy = scenario
        .build_economy(inv.convention)
        .map_err(|e| CliError::Scenario {
            path: inv.scenario.clone(),
            message: e.to_string(),
        })?;
    let config = scenario.solver_config(inv.seed, inv.tolerance);
    let convention = inv.convention.unwrap_or(scenario.clearing).label();
    let echo = CommandEcho {
        subcommand: inv.subcommand.to_string(),
        scenario: inv.scenario.display().to_string(),
        out: inv.out.display().to_string(),
        convention: convention.to_string(),
        seed: config.seed,
        ad: inv.ad,
        tolerance: config.residual_tol,
        candidate: inv.candidate.as_ref().map(|p| p.display().to_string()),
    };

    let (results, exit, table) = match inv.subcommand {
        "solve" => cmd_solve(&economy, inv, &config)?,
        "verify" => cmd_verify(&economy, inv, &config)?,
        "sweep" => cmd_sweep(&economy, &scenario, inv, &config)?,
        "sample" => cmd_sample(&economy, &scenario, inv, &config)?,
        other => unreachable!("clap only admits the four subcommands, got {other}"),
    };

    let report = RunReport {
        command: echo,
        economy: digest(&economy, convention),
        results,
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let report_path = inv.out.join(format!("report_{}.json", inv.subcommand));
    write_file(&report_path, &to_json(&report))?;
    emit(&format!("{table}report {}\n", report_path.display()));
    Ok(exit)
}

/// Stdout is best effort: a downstream reader closing the pipe early
/// (`kw ... | head`) must not turn a finished run into a panic, the
/// report files are already on disk and the exit code still applies.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout();
    let _ = out
        .write_all(text.as_bytes())
        .and_then(|()| out.flush());
}

type CommandOutput = (RunResults, u8, String);

fn cmd_solve(
    economy: &Economy64,
    inv: &Invocation,
    config: &knight_walras::equilibrium::SolverConfig<f64>,
) -> Result<CommandOutput, CliError> {
    let kw = solve_kw(economy, config)?;
    let singleton = economy.priors().num_vertices() == 1;
    let ad = if singleton || inv.ad {
        Some(solve_ad(economy, &economy.priors().centroid(), config)?)
    } else {
        None
    };
    let agreement = ad.as_ref().map(|a| sup_norm(&a.allocation, &kw.allocation));
    let certificate = no_trade_certificate(economy, None)
        .ok()
        .map(|c| status_label(c.status).to_string());

    let mut table = format!(
        "converged {}\nresidual {:.6e}\npsi {}\n",
        kw.converged,
        kw.residual,
        join6(kw.psi.values()),
    );
    for (i, plan) in kw.allocation.iter().enumerate() {
        table.push_str(&format!("agent {i} consumption {}\n", join6(plan.values())));
    }
    table.push_str(&format!("disposal {}\n", join6(kw.disposal.values())));
    if let Some(cert) = &certificate {
        table.push_str(&format!("no-trade certificate {cert}\n"));
    }
    if let Some(gap) = agreement {
        table.push_str(&format!("ad agreement sup-norm {gap:.6e}\n"));
    }
    let converged = kw.converged && ad.as_ref().is_none_or(|a| a.converged);
    let results = RunResults::Solve {
        kw: EquilibriumOut::from_equilibrium(&kw),
        ad: ad.as_ref().map(EquilibriumOut::from_equilibrium),
        ad_agreement_sup_norm: agreement,
        no_trade_certificate: certificate,
    };
    Ok((results, u8::from(!converged), table))
}

fn cmd_verify(
    economy: &Economy64,
    inv: &Invocation,
    config: &knight_walras::equilibrium::SolverConfig<f64>,
) -> Result<CommandOutput, CliError> {
    let path = inv.candidate.as_ref().expect("clap requires --candidate");
    let candidate = load_candidate(path)?;
    let psi = StatePrice::new(candidate.psi.clone())?;
    let allocation = candidate
        .allocation
        .iter()
        .map(|c| ContingentPlan::new(c.clone()))
        .collect::<knight_walras::Result<Vec<_>>>()?;
    let report = verify_equilibrium(economy, &psi, &allocation, config)?;
    // The library reports against the unit-mass price; scale the price
    // denominated entries back to the candidate's units.
    let scale = psi.total();
    let results = verify_results(&report, scale);
    let table = format!(
        "verdict {}\nmax budget slack {:.6e}\nmax optimality gap {:.6e}\nfeasibility residual {:.6e}\nno-arbitrage gap {:.6e}\n",
        if report.verdict { "pass" } else { "fail" },
        report.budget_slacks.iter().copied().fold(f64::MIN, f64::max) * scale,
        report.optimality_gaps.iter().copied().fold(f64::MIN, f64::max),
        report.feasibility_residual,
        report.no_arbitrage_gap * scale,
    );
    Ok((results, u8::from(!report.verdict), table))
}

/// A candidate is either a bare price/allocation file or a solve report
/// written by this tool.
fn load_candidate(path: &Path) -> Result<CandidateFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    if let Ok(report) = serde_json::from_str::<RunReport>(&text) {
        if let RunResults::Solve { kw, .. } = report.results {
            return Ok(CandidateFile {
                psi: kw.psi,
                allocation: kw.allocation,
            });
        }
        return Err(CliError::Scenario {
            path: path.to_path_buf(),
            message: "report holds no equilibrium to verify".into(),
        });
    }
    serde_json::from_str::<CandidateFile>(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn cmd_sweep(
    economy: &Economy64,
    scenario: &ScenarioFile,
    inv: &Invocation,
    config: &knight_walras::equilibrium::SolverConfig<f64>,
) -> Result<CommandOutput, CliError> {
    let grid = scenario
        .experiment
        .as_ref()
        .and_then(|e| e.sweep_grid.clone())
        .ok_or_else(|| CliError::Scenario {
            path: inv.scenario.clone(),
            message: "sweep needs an experiment block with sweep_grid".into(),
        })?;
    let family = scenario.priors.family(scenario.states);
    let records = kw_correspondence_sweep(economy, family, &grid, config)?;
    let rows: Vec<SweepRow> = records.iter().map(SweepRow::from_record).collect();
    let csv = sweep_csv(&rows, economy.state_count(), economy.num_agents());
    let csv_path = inv.out.join("sweep.csv");
    write_file(&csv_path, &csv)?;

    let mut table = String::new();
    let mut clean = true;
    for row in &rows {
        let converged = row.converged == Some(true) && row.failure.is_none();
        clean &= converged;
        table.push_str(&format!(
            "eps {:<10} converged {:<5} residual {:<12} trade {:<12} disposal {:<12} dist {:<12} certificate {}\n",
            short(row.epsilon),
            row.converged.map_or("", |b| if b { "true" } else { "false" }),
            row.residual.map(|v| format!("{v:.4e}")).unwrap_or_default(),
            row.trade_volume.map(|v| format!("{v:.4e}")).unwrap_or_default(),
            row.disposal_l1.map(|v| format!("{v:.4e}")).unwrap_or_default(),
            row.dist_to_eps0_allocation
                .map(|v| format!("{v:.4e}"))
                .unwrap_or_default(),
            row.no_trade_certificate.as_deref().unwrap_or(""),
        ));
    }
    table.push_str(&format!("csv {}\n", csv_path.display()));
    let results = RunResults::Sweep {
        csv: csv_path.display().to_string(),
        records: rows,
    };
    Ok((results, u8::from(!clean), table))
}

fn cmd_sample(
    economy: &Economy64,
    scenario: &ScenarioFile,
    inv: &Invocation,
    config: &knight_walras::equilibrium::SolverConfig<f64>,
) -> Result<CommandOutput, CliError> {
    let experiment = scenario
        .experiment
        .as_ref()
        .ok_or_else(|| CliError::Scenario {
            path: inv.scenario.clone(),
            message: "sample needs an experiment block".into(),
        })?;
    let sampler = experiment
        .sampler
        .as_ref()
        .ok_or_else(|| CliError::Scenario {
            path: inv.scenario.clone(),
            message: "sample needs experiment.sampler".into(),
        })?
        .to_sampler();
    let draws = experiment.draws.ok_or_else(|| CliError::Scenario {
        path: inv.scenario.clone(),
        message: "sample needs experiment.draws".into(),
    })?;
    let outcome = genericity_experiment(economy, &sampler, draws, config.seed, config)?;
    let csv = sample_csv(
        &outcome.draws,
        economy.state_count(),
        economy.num_agents(),
    );
    let csv_path = inv.out.join("sample.csv");
    write_file(&csv_path, &csv)?;
    let hits = outcome.draws.iter().filter(|d| d.verdict).count();
    let table = format!(
        "fraction {}\ndraws {draws} equivalent {hits}\ncsv {}\n",
        fmt17(outcome.fraction),
        csv_path.display(),
    );
    let results = RunResults::Sample {
        csv: csv_path.display().to_string(),
        fraction: outcome.fraction,
        draws,
        hits,
    };
    Ok((results, 0, table))
}

fn join6(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn short(eps: f64) -> String {
    format!("{eps}")
}
