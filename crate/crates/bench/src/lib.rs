//! Fixtures for the criterion benchmarks in `benches/`.

use adasync::sim::{AgentSpec, ControllerConfig, Scenario};
use adasync::{AgentModel, CommGraph, Edge, Protocol, ReferenceModel, ReferenceSignal, Uncertainty};
use nalgebra::{DMatrix, DVector};

const TAUS: [f64; 6] = [1.0, 0.4, 0.25, 0.45, 0.5, 1.25];
const EDGES: [(usize, usize); 7] = [(0, 1), (1, 2), (2, 3), (2, 4), (3, 5), (4, 5), (4, 6)];

/// The six-vehicle platoon with `r = 2 sin t` over `horizon` seconds.
pub fn platoon(protocol: Protocol, horizon: f64) -> Scenario {
    let reference = ReferenceModel::vehicle_pole_placement(
        -4.0,
        [-1.0, -2.0, -3.0],
        ReferenceSignal::Sinusoid { amplitude: 2.0, omega: 1.0 },
    )
    .unwrap();
    let agents = TAUS
        .iter()
        .enumerate()
        .map(|(k, &tau)| AgentSpec {
            model: AgentModel::vehicle(tau).unwrap().with_uncertainty(Uncertainty::sinusoidal(0.1)).unwrap(),
            x0: DVector::from_column_slice(&[k as f64 * 0.3 - 1.0, 0.5, 0.0]),
        })
        .collect();
    Scenario {
        graph: CommGraph::new(TAUS.len(), EDGES.map(|(a, b)| Edge::unit(a, b))).unwrap(),
        reference,
        reference_x0: DVector::from_column_slice(&[1.0, -1.0, 0.0]),
        agents,
        controller: ControllerConfig::new(protocol),
        q: DMatrix::from_diagonal(&DVector::from_column_slice(&[10.0, 1.0, 1.0])),
        horizon,
        step: 1e-3,
        decimation: 100,
        disconnections: vec![],
        divergence_guard: 1e6,
        record_lyapunov: false,
    }
}
