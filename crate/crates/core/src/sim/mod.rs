//! Scenario description, the coupled closed-loop ODE, RK4 integration and
//! run metrics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::controllers::{Basis, ControlError, Protocol, Sign};
use crate::dynamics::{AgentModel, ModelError, ReferenceModel};
use crate::graph::{CommGraph, GraphError};
use crate::lyapunov::{self, LyapunovError};

mod metrics;
mod rk4;
mod system;
mod trajectory;

pub use metrics::{
    feedforward_deviation, input_unbounded, lyapunov_violations, metrics, peak_to_peak, window_rms, AgentMetrics,
    FeedforwardDeviation, MetricsReport, WINDOW_FRACTION,
};
pub use rk4::{rk4_step, Rk4};
pub use system::{assemble, AgentBlock, CoupledSystem, IdealGains, StateLayout};
pub use trajectory::Trajectory;

/// Default fixed step, seconds.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default horizon, seconds.
pub const DEFAULT_HORIZON: f64 = 30.0;
/// Any state component above this magnitude aborts the run.
pub const DIVERGENCE_GUARD: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("agent {agent}: {source}")]
    Control { agent: usize, source: ControlError },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("diverged at t = {time}: state component {component} = {value:e}")]
    Diverged { time: f64, component: usize, value: f64 },
}

impl SimError {
    /// True for failures that happen while integrating, as opposed to
    /// configuration problems caught before the first step.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Self::NonFiniteState { .. } | Self::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub model: AgentModel,
    pub x0: DVector<f64>,
}

/// Interval `[start, end)` during which agent `to` does not receive the input
/// of `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disconnection {
    pub from: usize,
    pub to: usize,
    pub start: f64,
    pub end: f64,
}

impl Disconnection {
    pub fn active(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainInit {
    /// Every gain, `θ` and `û` start at zero.
    #[default]
    Zero,
    /// Gains start at the matching-condition values; `θ` and `û` at zero.
    Matched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnConfig {
    pub width: usize,
    pub steepness: f64,
    pub v_bias: f64,
    pub seed: u64,
    /// Inner weights start uniform in `[−init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self { width: crate::controllers::nn::DEFAULT_WIDTH, steepness: 1.0, v_bias: 1.0, seed: 0, init_scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub protocol: Protocol,
    pub gamma: f64,
    pub v: f64,
    pub basis: Basis,
    pub nn: NnConfig,
    /// Overrides the sign of `k*_ri` taken from the matching solve.
    pub sign_kr: Option<Sign>,
    pub init: GainInit,
    /// When false every parameter is frozen at its initial value.
    pub adapt: bool,
}

impl ControllerConfig {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            gamma: 10.0,
            v: 1.0,
            basis: Basis::default(),
            nn: NnConfig::default(),
            sign_kr: None,
            init: GainInit::Zero,
            adapt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: CommGraph,
    pub reference: ReferenceModel,
    pub reference_x0: DVector<f64>,
    /// Follower `i` is `agents[i - 1]`.
    pub agents: Vec<AgentSpec>,
    pub controller: ControllerConfig,
    pub q: DMatrix<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Record every `decimation`-th step.
    pub decimation: usize,
    pub disconnections: Vec<Disconnection>,
    pub divergence_guard: f64,
    /// Record the composite Lyapunov function at every sample.
    pub record_lyapunov: bool,
}

impl Scenario {
    /// Number of integration steps, `round(T / h)`.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Number of recorded samples including `t = 0`.
    pub fn n_samples(&self) -> usize {
        self.n_steps() / self.decimation + 1
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.reference.dim();
        if self.agents.is_empty() {
            return Err(GraphError::NoAgents.into());
        }
        if self.agents.len() != self.graph.n_agents() {
            return Err(SimError::InvalidScenario(format!(
                "{} agent models for a graph with {} followers",
                self.agents.len(),
                self.graph.n_agents()
            )));
        }
        if self.reference_x0.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: self.reference_x0.len() }.into());
        }
        for spec in &self.agents {
            if spec.model.dim() != n {
                return Err(ModelError::DimensionMismatch { expected: n, got: spec.model.dim() }.into());
            }
            if spec.x0.len() != n {
                return Err(ModelError::DimensionMismatch { expected: n, got: spec.x0.len() }.into());
            }
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(SimError::InvalidScenario(format!("step h = {} must be positive", self.step)));
        }
        if !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(SimError::InvalidScenario(format!("horizon T = {} must be at least one step", self.horizon)));
        }
        if self.decimation == 0 {
            return Err(SimError::InvalidScenario("decimation must be at least 1".into()));
        }
        if !(self.divergence_guard > 0.0) {
            return Err(SimError::InvalidScenario("divergence guard must be positive".into()));
        }
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(LyapunovError::DimensionMismatch { expected: n, got: self.q.nrows() }.into());
        }
        lyapunov::check_positive_definite(&self.q)?;
        for d in &self.disconnections {
            let known = self.graph.in_neighbors(d.to).map(|p| p.iter().any(|&(j, _)| j == d.from)).unwrap_or(false);
            if !known {
                return Err(SimError::InvalidScenario(format!(
                    "disconnection {} -> {} is not an edge of the graph",
                    d.from, d.to
                )));
            }
        }
        Ok(())
    }

    /// Same scenario with every agent's uncertainty amplitude replaced.
    pub fn with_uncertainty_amplitude(mut self, amplitude: f64) -> Result<Self, ModelError> {
        for spec in &mut self.agents {
            let u = crate::dynamics::Uncertainty::sinusoidal(amplitude);
            spec.model = spec.model.clone().with_uncertainty(u)?;
        }
        Ok(self)
    }
}

/// Integrates the scenario from `t = 0` to `T`.
pub fn run(scenario: &Scenario) -> Result<Trajectory, SimError> {
    let system = assemble(scenario)?;
    run_system(&system, scenario)
}

/// Integrates an already assembled system.
pub fn run_system(system: &CoupledSystem, scenario: &Scenario) -> Result<Trajectory, SimError> {
    let h = scenario.step;
    let steps = scenario.n_steps();
    let mut traj = Trajectory::with_capacity(system.layout().clone(), scenario.n_samples(), scenario.record_lyapunov);
    let mut y = system.initial_state();
    traj.push(system, 0.0, &y)?;
    let mut rk = Rk4::new(system.dim());
    for k in 0..steps {
        let t = k as f64 * h;
        rk.step(|tt, yy, dy| system.rhs(tt, yy, dy), t, &mut y, h)?;
        let t_next = (k + 1) as f64 * h;
        if let Some((component, value)) =
            y.iter().copied().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > scenario.divergence_guard)
        {
            if !value.is_finite() {
                return Err(SimError::NonFiniteState { time: t_next });
            }
            return Err(SimError::Diverged { time: t_next, component, value });
        }
        if (k + 1) % scenario.decimation == 0 {
            traj.push(system, t_next, &y)?;
        }
    }
    Ok(traj)
}
