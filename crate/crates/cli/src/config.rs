//! Scenario files: TOML with `[reference]`, `[[agents]]`, `[graph]`,
//! `[controller]` and `[simulation]` sections.
//!
//! State indices in the file (`basis_state`, uncertainty `state`) are
//! 1-based, so `3` means `x₃`.

use std::ops::Range;
use std::path::Path;

use adasync::controllers::Sign;
use adasync::sim::{
    AgentSpec, ControllerConfig, Disconnection, GainInit, NnConfig, Scenario, DEFAULT_HORIZON, DEFAULT_STEP,
    DIVERGENCE_GUARD,
};
use adasync::{AgentModel, Basis, CommGraph, Edge, Protocol, ReferenceModel, ReferenceSignal, SimError, Uncertainty};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {source}")]
    Io { origin: String, source: std::io::Error },
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },
    /// Well-formed file describing an invalid scenario. `diagnostic` names the
    /// failed check, e.g. `CycleDetected`.
    #[error("{origin}:{line}: [{section}] {diagnostic}: {message}")]
    Invalid { origin: String, line: usize, section: String, diagnostic: String, message: String },
}

impl ConfigError {
    pub fn diagnostic(&self) -> &str {
        match self {
            Self::Io { .. } => "Io",
            Self::Syntax { .. } => "ParseError",
            Self::Invalid { diagnostic, .. } => diagnostic,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Io { .. } => None,
            Self::Syntax { line, .. } | Self::Invalid { line, .. } => Some(*line),
        }
    }
}

/// Name of the enum variant behind an error, taken from its `Debug` form.
pub fn variant_name(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or_default().to_string()
}

/// Innermost variant name of a simulation error.
pub fn diagnostic_of(e: &SimError) -> String {
    match e {
        SimError::Graph(g) => variant_name(g),
        SimError::Model(m) => variant_name(m),
        SimError::Lyapunov(l) => variant_name(l),
        SimError::Control { source: adasync::ControlError::Lyapunov(l), .. } => variant_name(l),
        SimError::Control { source, .. } => variant_name(source),
        other => variant_name(other),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub reference: Spanned<ReferenceSection>,
    pub agents: Vec<Spanned<AgentEntry>>,
    pub graph: Spanned<GraphSection>,
    pub controller: Spanned<ControllerSection>,
    pub simulation: Spanned<SimulationSection>,
}

/// Either a vehicle lag `tau` closed to `poles`, or an explicit `a_m`, `b_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<[f64; 3]>,
    /// Row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_m: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_m: Option<Vec<f64>>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyEntry>,
}

/// `amplitude * sin(x_state)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyEntry {
    pub amplitude: f64,
    #[serde(default = "default_state")]
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub edges: Vec<Spanned<EdgeEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    Aocm,
    Nn,
    InputEstimation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisName {
    Bias,
    BiasSin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    Zero,
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub protocol: ProtocolName,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default = "default_basis")]
    pub basis: BasisName,
    #[serde(default = "default_state")]
    pub basis_state: usize,
    /// Seed for the neural-network inner weights.
    #[serde(default)]
    pub seed: u64,
    /// `1` or `-1`; overrides the sign derived from the matching conditions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_kr: Option<i8>,
    #[serde(default = "default_init")]
    pub initial_gains: InitName,
    #[serde(default = "yes")]
    pub adapt: bool,
    #[serde(default)]
    pub nn: NnSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnSection {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "one")]
    pub steepness: f64,
    #[serde(default = "one")]
    pub v_bias: f64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl Default for NnSection {
    fn default() -> Self {
        let d = NnConfig::default();
        Self { width: d.width, steepness: d.steepness, v_bias: d.v_bias, init_scale: d.init_scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalEntry {
    Constant { value: f64 },
    Sine { amplitude: f64, omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub h: f64,
    pub r: SignalEntry,
    /// Diagonal of `Q`.
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(default = "one_usize")]
    pub decimate: usize,
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
    #[serde(default)]
    pub record_lyapunov: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disconnections: Vec<Spanned<DisconnectionEntry>>,
}

/// `u_from` is withheld from agent `to` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisconnectionEntry {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "infinity")]
    pub end: f64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn infinity() -> f64 {
    f64::INFINITY
}
fn default_state() -> usize {
    3
}
fn default_gamma() -> f64 {
    10.0
}
fn default_basis() -> BasisName {
    BasisName::BiasSin
}
fn default_init() -> InitName {
    InitName::Zero
}
fn default_width() -> usize {
    NnConfig::default().width
}
fn default_init_scale() -> f64 {
    NnConfig::default().init_scale
}
fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}
fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_guard() -> f64 {
    DIVERGENCE_GUARD
}

/// 1-based line and column of a byte offset.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

struct Ctx<'a> {
    origin: &'a str,
    text: &'a str,
}

impl Ctx<'_> {
    fn invalid(&self, span: Range<usize>, section: &str, diagnostic: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            origin: self.origin.to_string(),
            line: position(self.text, span.start).0,
            section: section.to_string(),
            diagnostic: diagnostic.to_string(),
            message: message.into(),
        }
    }

    fn sim(&self, span: Range<usize>, section: &str, e: SimError) -> ConfigError {
        self.invalid(span, section, &diagnostic_of(&e), e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(format!("matrix must be square and non-empty, got {n} rows"));
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sign_from(v: Option<i8>) -> Result<Option<Sign>, String> {
    match v {
        None => Ok(None),
        Some(1) => Ok(Some(Sign::Positive)),
        Some(-1) => Ok(Some(Sign::Negative)),
        Some(other) => Err(format!("sign_kr must be 1 or -1, got {other}")),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| position(text, s.start));
            ConfigError::Syntax { origin: origin.to_string(), line, column, message: e.message().to_string() }
        })
    }

    /// Builds and validates the scenario. `text` must be the source this file
    /// was parsed from so spans can be turned into line numbers.
    pub fn to_scenario(&self, text: &str, origin: &str) -> Result<Scenario, ConfigError> {
        let cx = Ctx { origin, text };

        let rs = &self.reference;
        let signal = match self.simulation.get_ref().r {
            SignalEntry::Constant { value } => ReferenceSignal::Constant(value),
            SignalEntry::Sine { amplitude, omega } => ReferenceSignal::Sinusoid { amplitude, omega },
        };
        let reference = match (rs.get_ref().tau, rs.get_ref().poles, &rs.get_ref().a_m, &rs.get_ref().b_m) {
            (Some(tau), Some(poles), None, None) => ReferenceModel::vehicle_pole_placement(tau, poles, signal),
            (None, None, Some(a), Some(b)) => {
                let a = matrix(a).map_err(|m| cx.invalid(rs.span(), "reference", "DimensionMismatch", m))?;
                ReferenceModel::new(a, DVector::from_column_slice(b), signal)
            }
            _ => {
                return Err(cx.invalid(
                    rs.span(),
                    "reference",
                    "MissingField",
                    "give either `tau` and `poles` or `a_m` and `b_m`",
                ))
            }
        }
        .map_err(|e| cx.sim(rs.span(), "reference", e.into()))?;
        let n = reference.dim();
        let reference_x0 = DVector::from_column_slice(&rs.get_ref().x0);

        let mut agents = Vec::with_capacity(self.agents.len());
        for (idx, entry) in self.agents.iter().enumerate() {
            let section = format!("agents.{}", idx + 1);
            let a = entry.get_ref();
            let model = match (a.tau, &a.a, &a.b) {
                (Some(tau), None, None) => AgentModel::vehicle(tau),
                (None, Some(am), Some(b)) => {
                    let am = matrix(am).map_err(|m| cx.invalid(entry.span(), &section, "DimensionMismatch", m))?;
                    AgentModel::new(am, DVector::from_column_slice(b), Uncertainty::None)
                }
                _ => {
                    return Err(cx.invalid(entry.span(), &section, "MissingField", "give either `tau` or `a` and `b`"))
                }
            };
            let unc = match a.uncertainty {
                None => Uncertainty::None,
                Some(u) if u.state >= 1 => Uncertainty::Sinusoidal { amplitude: u.amplitude, component: u.state - 1 },
                Some(_) => return Err(cx.invalid(entry.span(), &section, "IndexOutOfRange", "state is 1-based")),
            };
            let model =
                model.and_then(|m| m.with_uncertainty(unc)).map_err(|e| cx.sim(entry.span(), &section, e.into()))?;
            agents.push(AgentSpec { model, x0: DVector::from_column_slice(&a.x0) });
        }

        let gs = &self.graph;
        let edges: Vec<Edge> = gs
            .get_ref()
            .edges
            .iter()
            .map(|e| Edge::new(e.get_ref().from, e.get_ref().to, e.get_ref().weight))
            .collect();
        let graph = CommGraph::new(agents.len(), edges).map_err(|e| {
            // Point at the offending edge when the error names one.
            let span = gs
                .get_ref()
                .edges
                .iter()
                .find(|s| {
                    let e2 = s.get_ref();
                    let msg = e.to_string();
                    msg.contains(&format!("{} -> {}", e2.from, e2.to))
                })
                .or(gs.get_ref().edges.first())
                .map_or(gs.span(), |s| s.span());
            cx.sim(span, "graph", e.into())
        })?;

        let cs = &self.controller;
        let c = cs.get_ref();
        let protocol = match c.protocol {
            ProtocolName::Aocm => Protocol::Aocm,
            ProtocolName::Nn => Protocol::NeuralNet,
            ProtocolName::InputEstimation => Protocol::InputEstimation,
        };
        let basis = match c.basis {
            BasisName::Bias => Basis::Bias,
            BasisName::BiasSin if c.basis_state >= 1 && c.basis_state <= n => {
                Basis::BiasSin { component: c.basis_state - 1 }
            }
            BasisName::BiasSin => {
                return Err(cx.invalid(
                    cs.span(),
                    "controller",
                    "IndexOutOfRange",
                    format!("basis_state {} outside 1..={n}", c.basis_state),
                ))
            }
        };
        let sign_kr = sign_from(c.sign_kr).map_err(|m| cx.invalid(cs.span(), "controller", "InvalidSign", m))?;
        let controller = ControllerConfig {
            protocol,
            gamma: c.gamma,
            v: c.v,
            basis,
            nn: NnConfig {
                width: c.nn.width,
                steepness: c.nn.steepness,
                v_bias: c.nn.v_bias,
                seed: c.seed,
                init_scale: c.nn.init_scale,
            },
            sign_kr,
            init: match c.initial_gains {
                InitName::Zero => GainInit::Zero,
                InitName::Matched => GainInit::Matched,
            },
            adapt: c.adapt,
        };
        if !(c.gamma > 0.0) || !c.gamma.is_finite() {
            return Err(cx.invalid(
                cs.span(),
                "controller",
                "InvalidGamma",
                format!("gamma = {} must be positive", c.gamma),
            ));
        }
        if !(c.v >= 0.0) || !c.v.is_finite() {
            return Err(cx.invalid(
                cs.span(),
                "controller",
                "InvalidModification",
                format!("v = {} must be >= 0", c.v),
            ));
        }

        let ss = &self.simulation;
        let s = ss.get_ref();
        let disconnections = s
            .disconnections
            .iter()
            .map(|d| {
                let d = d.get_ref();
                Disconnection { from: d.from, to: d.to, start: d.start, end: d.end }
            })
            .collect();
        let scenario = Scenario {
            graph,
            reference,
            reference_x0,
            agents,
            controller,
            q: DMatrix::from_diagonal(&DVector::from_column_slice(&s.q)),
            horizon: s.horizon,
            step: s.h,
            decimation: s.decimate,
            disconnections,
            divergence_guard: s.divergence_guard,
            record_lyapunov: s.record_lyapunov,
        };
        scenario.validate().map_err(|e| {
            let (span, section) = match &e {
                SimError::Model(_) => (rs.span(), "reference"),
                SimError::Graph(_) => (gs.span(), "graph"),
                _ => (ss.span(), "simulation"),
            };
            cx.sim(span, section, e)
        })?;
        Ok(scenario)
    }

    /// File form of a scenario. Models are written as explicit matrices.
    /// `Q` must be diagonal.
    pub fn from_scenario(sc: &Scenario) -> Result<Self, String> {
        let n = sc.reference.dim();
        if (0..n).any(|r| (0..n).any(|c| r != c && sc.q[(r, c)] != 0.0)) {
            return Err("only diagonal Q can be written to a scenario file".into());
        }
        let sp = |v| Spanned::new(0..0, v);
        let reference = ReferenceSection {
            tau: None,
            poles: None,
            a_m: Some(matrix_rows(sc.reference.a_m())),
            b_m: Some(sc.reference.b_m().iter().copied().collect()),
            x0: sc.reference_x0.iter().copied().collect(),
        };
        let agents = sc
            .agents
            .iter()
            .map(|a| {
                let uncertainty = match a.model.uncertainty() {
                    Uncertainty::None => None,
                    Uncertainty::Sinusoidal { amplitude, component } => {
                        Some(UncertaintyEntry { amplitude, state: component + 1 })
                    }
                };
                Spanned::new(
                    0..0,
                    AgentEntry {
                        tau: None,
                        a: Some(matrix_rows(a.model.a())),
                        b: Some(a.model.b().iter().copied().collect()),
                        x0: a.x0.iter().copied().collect(),
                        uncertainty,
                    },
                )
            })
            .collect();
        let edges = sc
            .graph
            .edges()
            .iter()
            .map(|e| Spanned::new(0..0, EdgeEntry { from: e.from, to: e.to, weight: e.weight }))
            .collect();
        let c = &sc.controller;
        let (basis, basis_state) = match c.basis {
            Basis::Bias => (BasisName::Bias, default_state()),
            Basis::BiasSin { component } => (BasisName::BiasSin, component + 1),
        };
        let controller = ControllerSection {
            protocol: match c.protocol {
                Protocol::Aocm => ProtocolName::Aocm,
                Protocol::NeuralNet => ProtocolName::Nn,
                Protocol::InputEstimation => ProtocolName::InputEstimation,
            },
            gamma: c.gamma,
            v: c.v,
            basis,
            basis_state,
            seed: c.nn.seed,
            sign_kr: c.sign_kr.map(|s| s.value() as i8),
            initial_gains: match c.init {
                GainInit::Zero => InitName::Zero,
                GainInit::Matched => InitName::Matched,
            },
            adapt: c.adapt,
            nn: NnSection {
                width: c.nn.width,
                steepness: c.nn.steepness,
                v_bias: c.nn.v_bias,
                init_scale: c.nn.init_scale,
            },
        };
        let simulation = SimulationSection {
            horizon: sc.horizon,
            h: sc.step,
            r: match sc.reference.signal() {
                ReferenceSignal::Constant(value) => SignalEntry::Constant { value },
                ReferenceSignal::Sinusoid { amplitude, omega } => SignalEntry::Sine { amplitude, omega },
            },
            q: sc.q.diagonal().iter().copied().collect(),
            decimate: sc.decimation,
            divergence_guard: sc.divergence_guard,
            record_lyapunov: sc.record_lyapunov,
            disconnections: sc
                .disconnections
                .iter()
                .map(|d| Spanned::new(0..0, DisconnectionEntry { from: d.from, to: d.to, start: d.start, end: d.end }))
                .collect(),
        };
        Ok(Self {
            reference: sp(reference),
            agents,
            graph: Spanned::new(0..0, GraphSection { edges }),
            controller: Spanned::new(0..0, controller),
            simulation: Spanned::new(0..0, simulation),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario files always serialize")
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ConfigError> {
    ScenarioFile::parse(text, origin)?.to_scenario(text, origin)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { origin: origin.clone(), source })?;
    parse_scenario(&text, &origin)
}

/// Serializes a scenario to TOML.
pub fn scenario_to_toml(sc: &Scenario) -> Result<String, String> {
    Ok(ScenarioFile::from_scenario(sc)?.to_toml())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[reference]
tau = -4.0
poles = [-1.0, -2.0, -3.0]
x0 = [1.0, -1.0, 0.0]

[[agents]]
tau = 1.0
x0 = [1.0, 0.0, 0.0]
uncertainty = { amplitude = 0.1 }

[[agents]]
tau = 0.4
x0 = [-1.0, 0.5, 0.0]

[graph]
edges = [{ from = 0, to = 1 }, { from = 1, to = 2, weight = 2.0 }]

[controller]
protocol = "aocm"

[simulation]
T = 2.0
h = 0.01
r = { kind = "sine", amplitude = 2.0, omega = 1.0 }
Q = [10.0, 1.0, 1.0]
"#;

    #[test]
    fn minimal_file_defaults() {
        let sc = parse_scenario(MINIMAL, "mem").unwrap();
        assert_eq!(sc.agents.len(), 2);
        assert_eq!(sc.controller.gamma, 10.0);
        assert_eq!(sc.controller.v, 1.0);
        assert_eq!(sc.controller.basis, Basis::BiasSin { component: 2 });
        assert_eq!(sc.agents[0].model.uncertainty(), Uncertainty::sinusoidal(0.1));
        assert_eq!(sc.graph.in_neighbors(2).unwrap(), &[(1, 2.0)]);
        assert_eq!(sc.decimation, 1);
        assert_eq!(sc.divergence_guard, DIVERGENCE_GUARD);
        assert_eq!(sc.reference.a_m()[(2, 0)], -6.0);
    }

    #[test]
    fn syntax_error_has_line() {
        let bad = MINIMAL.replace("h = 0.01", "h = 0.01.2");
        let err = parse_scenario(&bad, "mem").unwrap_err();
        let line = MINIMAL.lines().position(|l| l.starts_with("h = ")).unwrap() + 1;
        assert_eq!(err.line(), Some(line), "{err}");
        assert_eq!(err.diagnostic(), "ParseError");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = MINIMAL.replace("protocol = \"aocm\"", "protocol = \"aocm\"\ngama = 3.0");
        let err = parse_scenario(&bad, "mem").unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
    }

    #[test]
    fn cycle_points_at_graph() {
        let bad = MINIMAL.replace(
            "edges = [{ from = 0, to = 1 }, { from = 1, to = 2, weight = 2.0 }]",
            "edges = [{ from = 0, to = 1 }, { from = 1, to = 2 }, { from = 2, to = 1 }]",
        );
        let err = parse_scenario(&bad, "mem").unwrap_err();
        assert_eq!(err.diagnostic(), "CycleDetected");
        let line = bad.lines().position(|l| l.starts_with("edges")).unwrap() + 1;
        assert_eq!(err.line(), Some(line));
    }

    #[test]
    fn indefinite_q() {
        let bad = MINIMAL.replace("Q = [10.0, 1.0, 1.0]", "Q = [10.0, 1.0, -1.0]");
        let err = parse_scenario(&bad, "mem").unwrap_err();
        assert_eq!(err.diagnostic(), "NotPositiveDefinite");
    }

    #[test]
    fn agent_error_points_at_entry() {
        let bad = MINIMAL.replace("tau = 0.4", "tau = 0.0");
        let err = parse_scenario(&bad, "mem").unwrap_err();
        assert_eq!(err.diagnostic(), "ZeroTau");
        let line = err.line().unwrap();
        assert!(
            bad.lines().nth(line - 1).unwrap().contains("[[agents]]")
                || bad.lines().nth(line - 1).unwrap().contains("tau = 0.0"),
            "line {line}"
        );
    }

    #[test]
    fn reference_needs_one_form() {
        let bad = MINIMAL.replace("poles = [-1.0, -2.0, -3.0]\n", "");
        assert_eq!(parse_scenario(&bad, "mem").unwrap_err().diagnostic(), "MissingField");
    }

    #[test]
    fn round_trip() {
        let mut sc = parse_scenario(MINIMAL, "mem").unwrap();
        sc.disconnections.push(Disconnection { from: 1, to: 2, start: 0.5, end: f64::INFINITY });
        sc.controller.sign_kr = Some(Sign::Negative);
        sc.controller.nn.seed = 42;
        let text = scenario_to_toml(&sc).unwrap();
        let back = parse_scenario(&text, "round-trip").unwrap();
        assert_eq!(back, sc);
        // A second pass is a fixed point of the text form too.
        assert_eq!(scenario_to_toml(&back).unwrap(), text);
    }

    #[test]
    fn variant_names() {
        assert_eq!(variant_name(&adasync::GraphError::CycleDetected(3)), "CycleDetected");
        assert_eq!(variant_name(&adasync::GraphError::NoAgents), "NoAgents");
        assert_eq!(variant_name(&adasync::LyapunovError::NotPositiveDefinite { min_eig: -1.0 }), "NotPositiveDefinite");
    }
}
