use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use adasync::dynamics::{self, EXACT_MATCH_TOL};
use adasync::graph::LEADER;
use adasync::lyapunov;
use adasync::sim::{self, assemble, run_system, CoupledSystem, GainInit, Scenario, Trajectory};
use adasync::{Protocol, SimError};
use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{self, diagnostic_of, ConfigError};
use crate::output::{self, RunReport};

/// Process exit codes. Stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Io = 1,
    Invalid = 2,
    Diverged = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Argument(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(ConfigError::Io { .. }) | Self::Io { .. } => ExitCode::Io,
            Self::Sim(e) if e.is_divergence() => ExitCode::Diverged,
            _ => ExitCode::Invalid,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn validate(path: &Path) -> ValidationReport {
    let origin = path.display().to_string();
    match fs::read_to_string(path) {
        Ok(text) => validate_text(&text, &origin),
        Err(e) => {
            let mut r = ValidationReport::default();
            r.push("read", false, format!("{origin}: {e}"));
            r
        }
    }
}

/// Runs every pre-flight check on a scenario file: parsing, graph, reference
/// stability, `Q ≻ 0`, the Lyapunov certificate, the sign condition and the
/// matching conditions of every edge.
pub fn validate_text(text: &str, origin: &str) -> ValidationReport {
    let mut r = ValidationReport::default();
    let sc = match config::parse_scenario(text, origin) {
        Ok(sc) => sc,
        Err(e) => {
            r.push(e.diagnostic(), false, e.to_string());
            return r;
        }
    };
    r.push("parse", true, origin);
    r.push(
        "graph",
        true,
        format!("{} followers, {} edges, acyclic, all reachable from 0", sc.graph.n_agents(), sc.graph.edges().len()),
    );
    let a_m = sc.reference.a_m();
    r.push("reference_hurwitz", true, format!("spectral abscissa {:.6}", lyapunov::spectral_abscissa(a_m)));
    r.push("q_positive_definite", true, format!("min diag {}", sc.q.diagonal().min()));

    let cert = match lyapunov::solve_lyapunov(a_m, &sc.q) {
        Ok(c) => c,
        Err(e) => {
            r.push(config::variant_name(&e), false, e.to_string());
            return r;
        }
    };
    r.push("lyapunov", true, format!("residual {:.3e}, lambda_min(P) {:.6}", cert.residual, cert.min_eigenvalue()));

    let required = match sc.controller.protocol {
        Protocol::Aocm => true,
        Protocol::InputEstimation => sc.controller.v > 0.0,
        Protocol::NeuralNet => false,
    };
    for (idx, agent) in sc.agents.iter().enumerate() {
        let i = idx + 1;
        match lyapunov::check_sign_condition(agent.model.b(), &cert, a_m) {
            Ok(s) => {
                let note = if required { "" } else { " (not required)" };
                r.push(
                    format!("sign_condition[{i}]"),
                    s.holds || !required,
                    format!("b'PA_m^-1 b = {:.6e}{note}", s.value),
                );
            }
            Err(e) => r.push(format!("sign_condition[{i}]"), false, e.to_string()),
        }
        match dynamics::solve_feedback_matching(&sc.reference, &agent.model) {
            Ok(g) => r.push(
                format!("feedback_matching[{i}]"),
                g.is_exact() && g.k_r != 0.0,
                format!("residual {:.3e}, k_r* = {:.6}", g.residual, g.k_r),
            ),
            Err(e) => r.push(format!("feedback_matching[{i}]"), false, e.to_string()),
        }
        for &(j, _) in sc.graph.in_neighbors(i).unwrap_or(&[]) {
            if j == LEADER {
                continue;
            }
            let m = &sc.agents[j - 1].model;
            match dynamics::match_pair(m.a(), m.b(), agent.model.a(), agent.model.b()) {
                Ok(g) => r.push(
                    format!("coupling_matching[{j}->{i}]"),
                    g.residual <= EXACT_MATCH_TOL,
                    format!("residual {:.3e}, k_r* = {:.6}", g.residual, g.k_r),
                ),
                Err(e) => r.push(format!("coupling_matching[{j}->{i}]"), false, e.to_string()),
            }
        }
    }
    match assemble(&sc) {
        Ok(sys) => r.push("assemble", true, format!("state dimension {}", sys.dim())),
        Err(e) => r.push(diagnostic_of(&e), false, e.to_string()),
    }
    r
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory_csv: PathBuf,
    pub feedforward_csv: PathBuf,
    pub metrics_json: PathBuf,
}

/// Assembles and integrates a scenario, returning the system alongside the
/// trajectory for post-processing.
pub fn simulate(sc: &Scenario) -> Result<(CoupledSystem, Trajectory), SimError> {
    let system = assemble(sc)?;
    let traj = run_system(&system, sc)?;
    Ok((system, traj))
}

pub fn run(path: &Path, out_dir: &Path, decimate: Option<usize>) -> Result<RunOutcome, CliError> {
    let mut sc = config::load_scenario(path)?;
    if let Some(k) = decimate {
        if k == 0 {
            return Err(CliError::Argument("--decimate must be at least 1".into()));
        }
        sc.decimation = k;
    }
    info!("running {} for T = {} s at h = {}", path.display(), sc.horizon, sc.step);
    let (system, traj) = simulate(&sc)?;
    let report =
        RunReport::new(system.protocol(), &traj, &sim::metrics(&traj), &sim::feedforward_deviation(&system, &traj));

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let trajectory_csv = out_dir.join("trajectory.csv");
    let feedforward_csv = out_dir.join("feedforward.csv");
    let metrics_json = out_dir.join("metrics.json");
    write_with(&trajectory_csv, |w| output::write_trajectory_csv(w, &traj))?;
    let edges: Vec<(usize, usize)> = report.edges.iter().map(|e| (e.from, e.to)).collect();
    write_with(&feedforward_csv, |w| output::write_feedforward_csv(w, &traj, &edges))?;
    write_with(&metrics_json, |w| output::write_report_json(w, &report))?;
    Ok(RunOutcome { report, trajectory_csv, feedforward_csv, metrics_json })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Gamma,
    V,
    H,
    Amplitude,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::V => "v",
            Self::H => "h",
            Self::Amplitude => "amplitude",
        }
    }

    pub fn apply(self, sc: &Scenario, value: f64) -> Result<Scenario, SimError> {
        let mut sc = sc.clone();
        match self {
            Self::Gamma => sc.controller.gamma = value,
            Self::V => sc.controller.v = value,
            Self::H => sc.step = value,
            Self::Amplitude => sc = sc.with_uncertainty_amplitude(value)?,
        }
        Ok(sc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// `ok`, `diverged` or `invalid`.
    pub status: &'static str,
    pub message: String,
    pub max_sup_error: f64,
    pub max_final_rms: f64,
    pub max_rms_ratio: f64,
    pub max_abs_input: f64,
    pub lyapunov_violations: Option<usize>,
    /// Max relative error of `Ξ_i(T)` against `exp(A_m T) Ξ_i(0)`, for
    /// frozen matched gains without uncertainty.
    pub oracle_error: Option<f64>,
    /// `log(e_prev / e) / log(h_prev / h)` between consecutive `h` rows.
    pub observed_order: Option<f64>,
}

impl SweepRow {
    fn failed(value: f64, e: &SimError) -> Self {
        Self {
            value,
            status: if e.is_divergence() { "diverged" } else { "invalid" },
            message: e.to_string(),
            max_sup_error: f64::NAN,
            max_final_rms: f64::NAN,
            max_rms_ratio: f64::NAN,
            max_abs_input: f64::NAN,
            lyapunov_violations: None,
            oracle_error: None,
            observed_order: None,
        }
    }
}

/// True when every follower's synchronization error obeys `Ξ̇ = A_m Ξ`.
pub fn has_linear_oracle(sc: &Scenario) -> bool {
    !sc.controller.adapt
        && sc.controller.init == GainInit::Matched
        && sc.disconnections.is_empty()
        && sc.agents.iter().all(|a| a.model.uncertainty().bound() == 0.0)
}

/// Max over followers of `‖Ξ_i(T) − e^{A_m T} Ξ_i(0)‖ / ‖e^{A_m T} Ξ_i(0)‖`.
pub fn linear_oracle_error(system: &CoupledSystem, traj: &Trajectory) -> f64 {
    let t = traj.times().last().copied().unwrap_or(0.0);
    let phi = (system.reference().a_m() * t).exp();
    (1..=traj.n_agents())
        .map(|i| {
            let expected = &phi * system.aggregate_error(traj.state(0), i);
            (system.aggregate_error(traj.final_state(), i) - &expected).norm() / expected.norm()
        })
        .fold(0.0, f64::max)
}

fn sweep_one(sc: &Scenario, param: SweepParam, value: f64) -> SweepRow {
    let result = param.apply(sc, value).and_then(|sc| simulate(&sc).map(|r| (sc, r)));
    let (sc, (system, traj)) = match result {
        Ok(ok) => ok,
        Err(e) => return SweepRow::failed(value, &e),
    };
    let m = sim::metrics(&traj);
    let fold = |f: fn(&sim::AgentMetrics) -> f64| m.agents.iter().map(f).fold(0.0, f64::max);
    SweepRow {
        value,
        status: "ok",
        message: String::new(),
        max_sup_error: m.max_sup_error,
        max_final_rms: fold(|a| a.final_window_rms),
        max_rms_ratio: fold(|a| a.final_window_rms / a.first_window_rms),
        max_abs_input: fold(|a| a.max_abs_input),
        lyapunov_violations: m.lyapunov_violations.as_ref().map(Vec::len),
        oracle_error: has_linear_oracle(&sc).then(|| linear_oracle_error(&system, &traj)),
        observed_order: None,
    }
}

/// One run per value, executed concurrently. Failed runs are reported in
/// their row and do not stop the sweep.
pub fn sweep(sc: &Scenario, param: SweepParam, values: &[f64]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = values.par_iter().map(|&v| sweep_one(sc, param, v)).collect();
    if param == SweepParam::H {
        for k in 1..rows.len() {
            if let (Some(e0), Some(e1)) = (rows[k - 1].oracle_error, rows[k].oracle_error) {
                rows[k].observed_order = Some((e0 / e1).ln() / (rows[k - 1].value / rows[k].value).ln());
            }
        }
    }
    rows
}

pub fn sweep_file(path: &Path, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let sc = config::load_scenario(path)?;
    Ok(sweep(&sc, param, values))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6e}"))
}

pub fn write_sweep_csv<W: Write>(mut w: W, param: SweepParam, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(
        w,
        "{},status,max_sup_error,max_final_rms,max_rms_ratio,max_abs_input,lyapunov_violations,oracle_error,observed_order,message",
        param.name()
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{},\"{}\"",
            r.value,
            r.status,
            r.max_sup_error,
            r.max_final_rms,
            r.max_rms_ratio,
            r.max_abs_input,
            r.lyapunov_violations.map_or_else(String::new, |v| v.to_string()),
            opt(r.oracle_error),
            opt(r.observed_order),
            r.message.replace('"', "'"),
        )?;
    }
    Ok(())
}

/// Parses `a,b,c`; the empty string is the empty list.
pub fn parse_values(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| CliError::Argument(format!("bad sweep value {t:?}: {e}"))))
        .collect()
}
