//! Neighbor-input estimation: inputs are never communicated; each edge keeps
//! an estimate `û_ji` of the ideal feedforward `k*_rij u_j`.
//!
//! `ā u_i = Σ_j a_ij (k_ijᵀ x_j + û_ji) + k_miᵀ Ξ_i − θᵀ φ(x_i)`,
//! `û̇_ji = −sgn(k*_ri) γ b_mᵀ P Ξ_i`.

use nalgebra::DVector;

use super::{aggregate_error, check_edges, AdaptiveDesign, ControlError, NeighborSample};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorGains {
    pub k: DVector<f64>,
    pub u_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IeState {
    pub edges: Vec<EstimatorGains>,
    pub k_m: DVector<f64>,
    pub theta: DVector<f64>,
}

impl IeState {
    pub fn zeros(n_edges: usize, n: usize, basis_dim: usize) -> Self {
        Self {
            edges: vec![EstimatorGains { k: DVector::zeros(n), u_hat: 0.0 }; n_edges],
            k_m: DVector::zeros(n),
            theta: DVector::zeros(basis_dim),
        }
    }

    /// Neighbor inputs in `neighbors` are ignored.
    pub fn control(
        &self,
        design: &AdaptiveDesign,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<f64, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        let (a_bar, xi) = aggregate_error(x_i, neighbors)?;
        let mut acc = self.k_m.dot(&xi);
        for (g, nb) in self.edges.iter().zip(neighbors) {
            acc += nb.weight * (g.k.dot(nb.state) + g.u_hat);
        }
        let phi = design.basis.eval(x_i);
        Ok((acc - self.theta.dot(&phi)) / a_bar)
    }

    pub fn derivative(
        &self,
        design: &AdaptiveDesign,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<Self, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        let (_, xi) = aggregate_error(x_i, neighbors)?;
        let drive = design.gain_drive(&xi);
        let edges = neighbors.iter().map(|nb| EstimatorGains { k: nb.state * drive, u_hat: drive }).collect();
        let phi = design.basis.eval(x_i);
        Ok(Self { edges, k_m: &xi * drive, theta: design.theta_rate(&phi, &xi, &self.theta) })
    }
}
