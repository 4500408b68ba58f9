use log::warn;
use nalgebra::{DVector, DVectorView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Disconnection, GainInit, Scenario, SimError};
use crate::controllers::{
    AdaptiveDesign, AocmState, ControllerState, CouplingGains, IeState, NeighborSample, NnParams, NnState, Protocol,
    Sign,
};
use crate::dynamics::{self, AgentModel, MatchedGains, ReferenceModel};
use crate::graph::LEADER;
use crate::lyapunov::{self, LyapunovCertificate};

/// Offsets of one follower inside the flat state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlock {
    pub state: usize,
    pub params: usize,
    pub params_len: usize,
    pub n_edges: usize,
}

/// Flat layout `[x_m, (x_i, params_i) for i = 1..N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n: usize,
    pub agents: Vec<AgentBlock>,
    pub dim: usize,
}

impl StateLayout {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn reference<'a>(&self, y: &'a DVector<f64>) -> DVectorView<'a, f64> {
        y.rows(0, self.n)
    }

    /// State of follower `i` (1-based).
    pub fn agent<'a>(&self, y: &'a DVector<f64>, i: usize) -> DVectorView<'a, f64> {
        y.rows(self.agents[i - 1].state, self.n)
    }

    pub fn params<'a>(&self, y: &'a [f64], i: usize) -> &'a [f64] {
        let b = &self.agents[i - 1];
        &y[b.params..b.params + b.params_len]
    }

    /// Feedforward slot of in-edge `edge` of follower `i`: `k_rij` or `û_ji`.
    pub fn feedforward_index(&self, i: usize, edge: usize) -> usize {
        self.agents[i - 1].params + edge * (self.n + 1) + self.n
    }
}

/// Matching-condition gains a follower would need for exact synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealGains {
    /// Per in-edge: `A_j = A_i + b_i k*ᵀ`, `b_j = b_i k*_r` (`j = 0` is the
    /// reference model).
    pub edges: Vec<MatchedGains>,
    /// `A_m = A_i + b_i k*ᵀ`, `b_m = b_i k*_r`.
    pub feedback: MatchedGains,
}

#[derive(Debug, Clone)]
struct AgentRuntime {
    model: AgentModel,
    x0: DVector<f64>,
    design: AdaptiveDesign,
    parents: Vec<(usize, f64)>,
    ideal: IdealGains,
    init: ControllerState,
}

/// Reference, followers and adaptive parameters coupled into one ODE.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    reference: ReferenceModel,
    reference_x0: DVector<f64>,
    agents: Vec<AgentRuntime>,
    order: Vec<usize>,
    layout: StateLayout,
    protocol: Protocol,
    nn: Option<NnParams>,
    disconnections: Vec<Disconnection>,
    adapt: bool,
    certificate: LyapunovCertificate,
}

pub fn assemble(scenario: &Scenario) -> Result<CoupledSystem, SimError> {
    scenario.validate()?;
    let reference = &scenario.reference;
    let n = reference.dim();
    let a_m = reference.a_m();
    let certificate = lyapunov::solve_lyapunov(a_m, &scenario.q)?;
    let cfg = &scenario.controller;
    let nn = match cfg.protocol {
        Protocol::NeuralNet => Some(
            NnParams::new(cfg.nn.width, cfg.nn.steepness, cfg.nn.v_bias)
                .map_err(|source| SimError::Control { agent: 0, source })?,
        ),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.nn.seed);

    let mut agents = Vec::with_capacity(scenario.agents.len());
    let mut blocks = Vec::with_capacity(scenario.agents.len());
    let mut offset = n;
    for (idx, spec) in scenario.agents.iter().enumerate() {
        let i = idx + 1;
        let parents = scenario.graph.in_neighbors(i)?.to_vec();
        let feedback = dynamics::solve_feedback_matching(reference, &spec.model)?;
        if feedback.k_r == 0.0 {
            return Err(SimError::InvalidScenario(format!("agent {i}: b_m is orthogonal to b_i (k*_r = 0)")));
        }
        let edges = parents
            .iter()
            .map(|&(j, _)| {
                if j == LEADER {
                    Ok(feedback.clone())
                } else {
                    let m = &scenario.agents[j - 1].model;
                    dynamics::match_pair(m.a(), m.b(), spec.model.a(), spec.model.b())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ideal = IdealGains { edges, feedback };

        let sign = cfg.sign_kr.unwrap_or_else(|| Sign::of(ideal.feedback.k_r));
        let design =
            AdaptiveDesign::new(cfg.gamma, cfg.v, sign, &certificate, a_m, reference.b_m(), spec.model.b(), cfg.basis)
                .map_err(|source| SimError::Control { agent: i, source })?;
        if matches!(cfg.protocol, Protocol::Aocm | Protocol::InputEstimation) && cfg.v > 0.0 {
            design.require_sign_condition().map_err(|source| SimError::Control { agent: i, source })?;
        }

        let init = initial_params(
            cfg.protocol,
            cfg.init,
            &ideal,
            n,
            cfg.basis.dim(),
            nn.as_ref(),
            cfg.nn.init_scale,
            &mut rng,
        );
        if cfg.protocol != Protocol::InputEstimation {
            for d in scenario.disconnections.iter().filter(|d| d.to == i) {
                warn!(
                    "edge {} -> {} loses its input on [{}, {}) under {}: feedforward dropped",
                    d.from,
                    d.to,
                    d.start,
                    d.end,
                    cfg.protocol.name()
                );
            }
        }
        let params_len = init.packed_len();
        blocks.push(AgentBlock { state: offset, params: offset + n, params_len, n_edges: parents.len() });
        offset += n + params_len;
        agents.push(AgentRuntime { model: spec.model.clone(), x0: spec.x0.clone(), design, parents, ideal, init });
    }

    Ok(CoupledSystem {
        reference: reference.clone(),
        reference_x0: scenario.reference_x0.clone(),
        agents,
        order: scenario.graph.topological_order().to_vec(),
        layout: StateLayout { n, agents: blocks, dim: offset },
        protocol: cfg.protocol,
        nn,
        disconnections: scenario.disconnections.clone(),
        adapt: cfg.adapt,
        certificate,
    })
}

#[allow(clippy::too_many_arguments)]
fn initial_params(
    protocol: Protocol,
    init: GainInit,
    ideal: &IdealGains,
    n: usize,
    basis_dim: usize,
    nn: Option<&NnParams>,
    init_scale: f64,
    rng: &mut ChaCha8Rng,
) -> ControllerState {
    let n_edges = ideal.edges.len();
    let mut state = match protocol {
        Protocol::Aocm => ControllerState::Aocm(AocmState::zeros(n_edges, n, basis_dim)),
        Protocol::InputEstimation => ControllerState::Ie(IeState::zeros(n_edges, n, basis_dim)),
        Protocol::NeuralNet => {
            let params = nn.expect("NN parameters");
            ControllerState::Nn(NnState::with_random_weights(n_edges, n, params, init_scale, rng))
        }
    };
    if init == GainInit::Matched {
        let matched = |g: &MatchedGains| CouplingGains { k: g.k.clone(), k_r: g.k_r };
        match &mut state {
            ControllerState::Aocm(s) => {
                s.edges = ideal.edges.iter().map(matched).collect();
                s.k_m = ideal.feedback.k.clone();
            }
            ControllerState::Nn(s) => {
                s.edges = ideal.edges.iter().map(matched).collect();
                s.k_m = ideal.feedback.k.clone();
            }
            ControllerState::Ie(s) => {
                for (e, g) in s.edges.iter_mut().zip(&ideal.edges) {
                    e.k = g.k.clone();
                }
                s.k_m = ideal.feedback.k.clone();
            }
        }
    }
    state
}

impl CoupledSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn reference(&self) -> &ReferenceModel {
        &self.reference
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.certificate
    }

    /// Design constants of follower `i` (1-based).
    pub fn design(&self, i: usize) -> &AdaptiveDesign {
        &self.agents[i - 1].design
    }

    pub fn ideal_gains(&self, i: usize) -> &IdealGains {
        &self.agents[i - 1].ideal
    }

    /// In-neighbors `(j, a_ij)` of follower `i`.
    pub fn parents(&self, i: usize) -> &[(usize, f64)] {
        &self.agents[i - 1].parents
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        y.rows_mut(0, self.layout.n).copy_from(&self.reference_x0);
        for (a, b) in self.agents.iter().zip(&self.layout.agents) {
            y.rows_mut(b.state, self.layout.n).copy_from(&a.x0);
            a.init.pack_into(&mut y.as_mut_slice()[b.params..b.params + b.params_len]);
        }
        y
    }

    /// Adaptive parameters of follower `i` unpacked from `y`.
    pub fn controller_state(&self, y: &DVector<f64>, i: usize) -> ControllerState {
        ControllerState::unpack_like(&self.agents[i - 1].init, self.layout.params(y.as_slice(), i))
    }

    fn edge_connected(&self, from: usize, to: usize, t: f64) -> bool {
        !self.disconnections.iter().any(|d| d.from == from && d.to == to && d.active(t))
    }

    /// Control inputs of every follower (index `i - 1`) at `(t, y)`, evaluated
    /// in topological order so each neighbor input is available when needed.
    pub fn inputs(&self, t: f64, y: &DVector<f64>) -> Result<Vec<f64>, SimError> {
        Ok(self.evaluate(t, y, false)?.0)
    }

    fn evaluate(&self, t: f64, y: &DVector<f64>, want_states: bool) -> Result<(Vec<f64>, Vec<AgentEval>), SimError> {
        let n = self.layout.n;
        let n_agents = self.agents.len();
        let mut states: Vec<DVector<f64>> = Vec::with_capacity(n_agents + 1);
        states.push(self.layout.reference(y).into_owned());
        for i in 1..=n_agents {
            states.push(self.layout.agent(y, i).into_owned());
        }
        let r = self.reference.signal().eval(t);
        let mut inputs = vec![0.0; n_agents + 1];
        inputs[LEADER] = r;
        let mut evals: Vec<Option<AgentEval>> = vec![None; if want_states { n_agents } else { 0 }];
        debug_assert_eq!(states[0].len(), n);

        for &i in &self.order {
            let agent = &self.agents[i - 1];
            let ctrl = self.controller_state(y, i);
            let neighbors: Vec<NeighborSample<'_>> = agent
                .parents
                .iter()
                .map(|&(j, w)| NeighborSample {
                    weight: w,
                    state: &states[j],
                    input: self.edge_connected(j, i, t).then_some(inputs[j]),
                })
                .collect();
            let u = ctrl
                .control(&agent.design, self.nn.as_ref(), &states[i], &neighbors)
                .map_err(|source| SimError::Control { agent: i, source })?;
            inputs[i] = u;
            if want_states {
                let rate = if self.adapt {
                    Some(
                        ctrl.derivative(&agent.design, self.nn.as_ref(), &states[i], &neighbors)
                            .map_err(|source| SimError::Control { agent: i, source })?,
                    )
                } else {
                    None
                };
                evals[i - 1] = Some(AgentEval { rate });
            }
        }
        inputs.remove(LEADER);
        Ok((inputs, evals.into_iter().map(|e| e.expect("every follower visited")).collect()))
    }

    /// Writes `ẏ` for `(t, y)` into `dy`.
    pub fn rhs(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) -> Result<(), SimError> {
        let n = self.layout.n;
        let (inputs, evals) = self.evaluate(t, y, true)?;
        let x_m = self.layout.reference(y).into_owned();
        dy.rows_mut(0, n).copy_from(&self.reference.derivative(&x_m, t)?);
        for (idx, (agent, block)) in self.agents.iter().zip(&self.layout.agents).enumerate() {
            let x = y.rows(block.state, n).into_owned();
            dy.rows_mut(block.state, n).copy_from(&agent.model.derivative(&x, inputs[idx])?);
            let out = &mut dy.as_mut_slice()[block.params..block.params + block.params_len];
            match &evals[idx].rate {
                Some(rate) => rate.pack_into(out),
                None => out.fill(0.0),
            }
        }
        Ok(())
    }

    /// `Ξ_i` for follower `i`.
    pub fn aggregate_error(&self, y: &DVector<f64>, i: usize) -> DVector<f64> {
        let x_i = self.layout.agent(y, i).into_owned();
        let mut xi = DVector::zeros(self.layout.n);
        for &(j, w) in &self.agents[i - 1].parents {
            let x_j = if j == LEADER { self.layout.reference(y) } else { self.layout.agent(y, j) };
            xi += (&x_i - x_j) * w;
        }
        xi
    }

    /// Composite Lyapunov function measured against the matching-condition
    /// gains and a zero ideal uncertainty weight:
    ///
    /// `V = Σ_i [Ξ_iᵀ P Ξ_i + (Σ_j a_ij (‖k̃_ij‖² + f̃_ij²) + ‖k̃_mi‖²) / (γ |k*_ri|) + ‖θ_i‖² / γ]`
    ///
    /// where `f̃_ij` is `k_rij − k*_rij` or, for input estimation,
    /// `û_ji − k*_rij u_j`.
    pub fn lyapunov_value(&self, t: f64, y: &DVector<f64>) -> Result<f64, SimError> {
        let inputs = self.inputs(t, y)?;
        let r = self.reference.signal().eval(t);
        let p = &self.certificate.p;
        let mut total = 0.0;
        for i in 1..=self.agents.len() {
            let agent = &self.agents[i - 1];
            let xi = self.aggregate_error(y, i);
            let mut v = xi.dot(&(p * &xi));
            let gamma = agent.design.gamma;
            let scale = gamma * agent.ideal.feedback.k_r.abs();
            let mut gains = 0.0;
            let ctrl = self.controller_state(y, i);
            let (edge_terms, k_m, theta) = match &ctrl {
                ControllerState::Aocm(s) => {
                    (s.edges.iter().map(|e| (&e.k, e.k_r)).collect::<Vec<_>>(), &s.k_m, &s.theta)
                }
                ControllerState::Nn(s) => (s.edges.iter().map(|e| (&e.k, e.k_r)).collect(), &s.k_m, &s.theta),
                ControllerState::Ie(s) => (s.edges.iter().map(|e| (&e.k, e.u_hat)).collect(), &s.k_m, &s.theta),
            };
            for ((k, ff), (&(j, w), ideal)) in edge_terms.iter().zip(agent.parents.iter().zip(&agent.ideal.edges)) {
                let ff_star = match self.protocol {
                    Protocol::InputEstimation => {
                        let u_j = if j == LEADER { r } else { inputs[j - 1] };
                        ideal.k_r * u_j
                    }
                    _ => ideal.k_r,
                };
                gains += w * ((*k - &ideal.k).norm_squared() + (ff - ff_star).powi(2));
            }
            gains += (k_m - &agent.ideal.feedback.k).norm_squared();
            v += gains / scale + theta.norm_squared() / gamma;
            total += v;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone)]
struct AgentEval {
    rate: Option<ControllerState>,
}
