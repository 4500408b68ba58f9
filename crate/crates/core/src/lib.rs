//! Distributed model-reference adaptive synchronization of heterogeneous
//! linear agents.
//!
//! A leader (the reference model, always node 0) drives `N` followers over an
//! acyclic directed communication graph. Each follower runs one of three
//! adaptive protocols:
//!
//! * [`controllers::aocm`]: coupling/feedback gain adaptation plus an
//!   optimal-control-modification term that suppresses input uncertainty,
//! * [`controllers::nn`]: the same gains with a sigmoidal neural-network
//!   approximation of the uncertainty,
//! * [`controllers::ie`]: neighbor inputs are never communicated and are
//!   estimated online instead.
//!
//! The [`sim`] module couples reference, agents and adaptive parameters into a
//! single ODE and integrates it with fixed-step RK4.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod dynamics;
pub mod graph;
pub mod lyapunov;
pub mod sim;

pub use controllers::{Basis, ControlError, Protocol, Sign};
pub use dynamics::{AgentModel, MatchedGains, ModelError, ReferenceModel, ReferenceSignal, Uncertainty};
pub use graph::{CommGraph, Edge, GraphError};
pub use lyapunov::{LyapunovCertificate, LyapunovError, SignCondition};
pub use sim::{MetricsReport, Scenario, SimError, Trajectory};
