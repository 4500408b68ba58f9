//! Distributed adaptive protocols.
//!
//! Every protocol shares the same skeleton for follower `i` with in-neighbors
//! `j` (weights `a_ij`, `ā = Σ_j a_ij`):
//!
//! ```text
//! ā u_i = Σ_j a_ij (k_ijᵀ x_j + ff_ij) + k_miᵀ Ξ_i − θᵀ φ
//! Ξ_i   = Σ_j a_ij (x_i − x_j)
//! ```
//!
//! where the feedforward `ff_ij` is `k_rij u_j` (neighbor input communicated)
//! or the estimate `û_ji` (input estimation). With the ideal gains
//! `A_j = A_i + b_i k*_ijᵀ`, `b_j = b_i k*_rij` and `A_m = A_i + b_i k*_miᵀ`
//! this yields `Ξ̇_i = A_m Ξ_i` exactly, for any number of parents.
//!
//! Gain laws are gradient flows driven by the scalar `s_i = b_mᵀ P Ξ_i`:
//! `k̇_ij = −sgn(k*_ri) γ s_i x_j`, `k̇_mi = −sgn(k*_ri) γ s_i Ξ_i`,
//! `k̇_rij = −sgn(k*_ri) γ s_i u_j`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::Uncertainty;
use crate::lyapunov::{self, LyapunovCertificate, LyapunovError};

pub mod aocm;
pub mod ie;
pub mod nn;

pub use aocm::AocmState;
pub use ie::IeState;
pub use nn::{NnParams, NnState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("agent has no in-neighbors")]
    NoNeighbors,
    #[error("controller holds {expected} edges but {got} neighbors were supplied")]
    EdgeCountMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("adaptive gain must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("modification constant must be non-negative, got {0}")]
    InvalidModification(f64),
    #[error("sigmoid steepness must be positive, got {0}")]
    InvalidSteepness(f64),
    #[error("sign condition bᵀPA_m⁻¹b < 0 violated (value {0})")]
    SignConditionViolated(f64),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Adaptive optimal control modification.
    Aocm,
    /// Neural-network uncertainty approximation.
    NeuralNet,
    /// Neighbor-input estimation.
    InputEstimation,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Aocm => "aocm",
            Self::NeuralNet => "nn",
            Self::InputEstimation => "input-estimation",
        }
    }
}

/// Sign of the feedback input gain `k*_ri`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn of(v: f64) -> Self {
        if v < 0.0 {
            Self::Negative
        } else {
            Self::Positive
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Positive => Self::Negative,
            Self::Negative => Self::Positive,
        }
    }
}

/// Known bounded basis `φ(x)` for the AOCM and input-estimation uncertainty
/// term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `[1]`.
    Bias,
    /// `[1, sin(x[component])]`.
    BiasSin { component: usize },
}

impl Default for Basis {
    fn default() -> Self {
        Self::BiasSin { component: 2 }
    }
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Self::Bias => 1,
            Self::BiasSin { .. } => 2,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            Self::Bias => DVector::from_element(1, 1.0),
            Self::BiasSin { component } => DVector::from_column_slice(&[1.0, x[component].sin()]),
        }
    }

    /// Upper bound on `‖φ(x)‖`.
    pub fn bound(&self) -> f64 {
        match self {
            Self::Bias => 1.0,
            Self::BiasSin { .. } => 2f64.sqrt(),
        }
    }
}

/// What agent `i` knows about one in-neighbor at the current instant. For the
/// leader, `state` is `x_m` and `input` is `r(t)`.
#[derive(Debug, Clone, Copy)]
pub struct NeighborSample<'a> {
    pub weight: f64,
    pub state: &'a DVector<f64>,
    /// `None` when the input is not communicated.
    pub input: Option<f64>,
}

/// `(ā, Ξ)` for agent `i`.
pub fn aggregate_error(
    x_i: &DVector<f64>,
    neighbors: &[NeighborSample<'_>],
) -> Result<(f64, DVector<f64>), ControlError> {
    if neighbors.is_empty() {
        return Err(ControlError::NoNeighbors);
    }
    let mut a_bar = 0.0;
    let mut xi = DVector::zeros(x_i.len());
    for nb in neighbors {
        if nb.state.len() != x_i.len() {
            return Err(ControlError::DimensionMismatch { expected: x_i.len(), got: nb.state.len() });
        }
        a_bar += nb.weight;
        xi += (x_i - nb.state) * nb.weight;
    }
    Ok((a_bar, xi))
}

/// Per-agent constants shared by all protocols. Immutable during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDesign {
    pub gamma: f64,
    /// Optimal-modification constant `v` (unused by the NN protocol).
    pub v: f64,
    pub sign_kr: Sign,
    /// `P b_m`, so that `s = (P b_m)ᵀ Ξ = b_mᵀ P Ξ`.
    pub p_b_m: DVector<f64>,
    /// `P b_i`.
    pub p_b_i: DVector<f64>,
    /// `b_iᵀ P A_m⁻¹ b_i`.
    pub sign_value: f64,
    pub basis: Basis,
}

impl AdaptiveDesign {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma: f64,
        v: f64,
        sign_kr: Sign,
        cert: &LyapunovCertificate,
        a_m: &DMatrix<f64>,
        b_m: &DVector<f64>,
        b_i: &DVector<f64>,
        basis: Basis,
    ) -> Result<Self, ControlError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(ControlError::InvalidGamma(gamma));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ControlError::InvalidModification(v));
        }
        let n = a_m.nrows();
        for got in [b_m.len(), b_i.len(), cert.p.nrows()] {
            if got != n {
                return Err(ControlError::DimensionMismatch { expected: n, got });
            }
        }
        let sign = lyapunov::check_sign_condition(b_i, cert, a_m)?;
        Ok(Self { gamma, v, sign_kr, p_b_m: &cert.p * b_m, p_b_i: &cert.p * b_i, sign_value: sign.value, basis })
    }

    /// Rejects designs for which the optimal modification would not damp.
    pub fn require_sign_condition(&self) -> Result<(), ControlError> {
        if self.sign_value < 0.0 {
            Ok(())
        } else {
            Err(ControlError::SignConditionViolated(self.sign_value))
        }
    }

    /// `−sgn(k*_ri) γ b_mᵀ P Ξ`, the common factor of every gain law.
    pub(crate) fn gain_drive(&self, xi: &DVector<f64>) -> f64 {
        -self.sign_kr.value() * self.gamma * self.p_b_m.dot(xi)
    }

    /// `θ̇ = γ (φ Ξᵀ P b_i + v φ φᵀ θ · b_iᵀ P A_m⁻¹ b_i)`.
    ///
    /// The gradient term carries the sign that makes `2 Ξᵀ P b_i (−θ̃ᵀφ)`
    /// cancel against `2 θ̃ᵀ θ̇ / γ` for the error convention `x_i − x_j`.
    pub(crate) fn theta_rate(&self, phi: &DVector<f64>, xi: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let drive = xi.dot(&self.p_b_i) + self.v * phi.dot(theta) * self.sign_value;
        phi * (self.gamma * drive)
    }

    /// Bound `γ (φ_max ‖Ξ‖ ‖P b_i‖ + v φ_max² ‖θ‖ |b_iᵀPA_m⁻¹b_i|)` on `‖θ̇‖`.
    pub fn theta_rate_bound(&self, xi: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        let phi_max = self.basis.bound();
        self.gamma
            * (phi_max * xi.norm() * self.p_b_i.norm()
                + self.v * phi_max * phi_max * theta.norm() * self.sign_value.abs())
    }
}

/// `ε(x) = θᵀ φ(x) − f(x)`, the current uncertainty representation error.
pub fn epsilon_diagnostic(theta: &DVector<f64>, basis: &Basis, x: &DVector<f64>, f: &Uncertainty) -> f64 {
    theta.dot(&basis.eval(x)) - f.eval(x)
}

/// Coupling gains for one in-edge when the neighbor input is communicated.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGains {
    pub k: DVector<f64>,
    pub k_r: f64,
}

impl CouplingGains {
    pub fn zeros(n: usize) -> Self {
        Self { k: DVector::zeros(n), k_r: 0.0 }
    }
}

/// Shared `Σ_j a_ij (k_ijᵀ x_j + k_rij u_j) + k_miᵀ Ξ` for protocols with
/// communicated inputs; a missing input drops its feedforward term.
pub(crate) fn coupling_sum(
    edges: &[CouplingGains],
    k_m: &DVector<f64>,
    xi: &DVector<f64>,
    neighbors: &[NeighborSample<'_>],
) -> f64 {
    let mut acc = k_m.dot(xi);
    for (g, nb) in edges.iter().zip(neighbors) {
        acc += nb.weight * (g.k.dot(nb.state) + nb.input.map_or(0.0, |u| g.k_r * u));
    }
    acc
}

/// Gain-law derivatives for communicated-input protocols.
pub(crate) fn coupling_rates(
    drive: f64,
    xi: &DVector<f64>,
    neighbors: &[NeighborSample<'_>],
) -> (Vec<CouplingGains>, DVector<f64>) {
    let edges = neighbors
        .iter()
        .map(|nb| CouplingGains { k: nb.state * drive, k_r: nb.input.map_or(0.0, |u| drive * u) })
        .collect();
    (edges, xi * drive)
}

pub(crate) fn check_edges(expected: usize, neighbors: &[NeighborSample<'_>]) -> Result<(), ControlError> {
    if neighbors.is_empty() {
        return Err(ControlError::NoNeighbors);
    }
    if expected != neighbors.len() {
        return Err(ControlError::EdgeCountMismatch { expected, got: neighbors.len() });
    }
    Ok(())
}

/// Adaptive parameters of one follower under any protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerState {
    Aocm(AocmState),
    Nn(NnState),
    Ie(IeState),
}

impl ControllerState {
    pub fn protocol(&self) -> Protocol {
        match self {
            Self::Aocm(_) => Protocol::Aocm,
            Self::Nn(_) => Protocol::NeuralNet,
            Self::Ie(_) => Protocol::InputEstimation,
        }
    }

    pub fn control(
        &self,
        design: &AdaptiveDesign,
        nn: Option<&NnParams>,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<f64, ControlError> {
        match self {
            Self::Aocm(s) => s.control(design, x_i, neighbors),
            Self::Nn(s) => s.control(nn.expect("NN parameters for NN state"), x_i, neighbors),
            Self::Ie(s) => s.control(design, x_i, neighbors),
        }
    }

    pub fn derivative(
        &self,
        design: &AdaptiveDesign,
        nn: Option<&NnParams>,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<Self, ControlError> {
        Ok(match self {
            Self::Aocm(s) => Self::Aocm(s.derivative(design, x_i, neighbors)?),
            Self::Nn(s) => Self::Nn(s.derivative(design, nn.expect("NN parameters for NN state"), x_i, neighbors)?),
            Self::Ie(s) => Self::Ie(s.derivative(design, x_i, neighbors)?),
        })
    }

    /// Number of scalars in the packed representation.
    pub fn packed_len(&self) -> usize {
        match self {
            Self::Aocm(s) => s.edges.len() * (s.k_m.len() + 1) + s.k_m.len() + s.theta.len(),
            Self::Nn(s) => s.edges.len() * (s.k_m.len() + 1) + s.k_m.len() + s.theta.len() + s.w.len(),
            Self::Ie(s) => s.edges.len() * (s.k_m.len() + 1) + s.k_m.len() + s.theta.len(),
        }
    }

    /// Packs as `[per edge: k (n), feedforward (1)] ++ k_m ++ θ ++ vec(W)`.
    pub fn pack_into(&self, out: &mut [f64]) {
        let mut w = Writer { out, pos: 0 };
        match self {
            Self::Aocm(s) => {
                for e in &s.edges {
                    w.put(e.k.as_slice());
                    w.put(&[e.k_r]);
                }
                w.put(s.k_m.as_slice());
                w.put(s.theta.as_slice());
            }
            Self::Nn(s) => {
                for e in &s.edges {
                    w.put(e.k.as_slice());
                    w.put(&[e.k_r]);
                }
                w.put(s.k_m.as_slice());
                w.put(s.theta.as_slice());
                w.put(s.w.as_slice());
            }
            Self::Ie(s) => {
                for e in &s.edges {
                    w.put(e.k.as_slice());
                    w.put(&[e.u_hat]);
                }
                w.put(s.k_m.as_slice());
                w.put(s.theta.as_slice());
            }
        }
        debug_assert_eq!(w.pos, w.out.len());
    }

    /// Inverse of [`pack_into`](Self::pack_into), shaped like `template`.
    pub fn unpack_like(template: &Self, data: &[f64]) -> Self {
        let mut r = Reader { data, pos: 0 };
        match template {
            Self::Aocm(t) => {
                let n = t.k_m.len();
                let edges = (0..t.edges.len()).map(|_| CouplingGains { k: r.vector(n), k_r: r.scalar() }).collect();
                Self::Aocm(AocmState { edges, k_m: r.vector(n), theta: r.vector(t.theta.len()) })
            }
            Self::Nn(t) => {
                let n = t.k_m.len();
                let edges = (0..t.edges.len()).map(|_| CouplingGains { k: r.vector(n), k_r: r.scalar() }).collect();
                let k_m = r.vector(n);
                let theta = r.vector(t.theta.len());
                let w = DMatrix::from_column_slice(t.w.nrows(), t.w.ncols(), r.take(t.w.len()));
                Self::Nn(NnState { edges, k_m, theta, w })
            }
            Self::Ie(t) => {
                let n = t.k_m.len();
                let edges =
                    (0..t.edges.len()).map(|_| ie::EstimatorGains { k: r.vector(n), u_hat: r.scalar() }).collect();
                Self::Ie(IeState { edges, k_m: r.vector(n), theta: r.vector(t.theta.len()) })
            }
        }
    }
}

struct Writer<'a> {
    out: &'a mut [f64],
    pos: usize,
}

impl Writer<'_> {
    fn put(&mut self, v: &[f64]) {
        self.out[self.pos..self.pos + v.len()].copy_from_slice(v);
        self.pos += v.len();
    }
}

struct Reader<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> &'a [f64] {
        let s = &self.data[self.pos..self.pos + len];
        self.pos += len;
        s
    }

    fn vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_column_slice(self.take(len))
    }

    fn scalar(&mut self) -> f64 {
        self.take(1)[0]
    }
}
