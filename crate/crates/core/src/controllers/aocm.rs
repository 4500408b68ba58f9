//! Adaptive optimal control modification.
//!
//! `ā u_i = Σ_j a_ij (k_ijᵀ x_j + k_rij u_j) + k_miᵀ Ξ_i − θᵀ φ(x_i)` with the
//! damped uncertainty law `θ̇ = γ (φ Ξᵀ P b_i + v φ φᵀ θ · b_iᵀ P A_m⁻¹ b_i)`.

use nalgebra::DVector;

use super::{
    aggregate_error, check_edges, coupling_rates, coupling_sum, AdaptiveDesign, ControlError, CouplingGains,
    NeighborSample,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AocmState {
    /// One entry per in-neighbor, in the graph's neighbor order.
    pub edges: Vec<CouplingGains>,
    pub k_m: DVector<f64>,
    pub theta: DVector<f64>,
}

impl AocmState {
    pub fn zeros(n_edges: usize, n: usize, basis_dim: usize) -> Self {
        Self { edges: vec![CouplingGains::zeros(n); n_edges], k_m: DVector::zeros(n), theta: DVector::zeros(basis_dim) }
    }

    pub fn control(
        &self,
        design: &AdaptiveDesign,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<f64, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        let (a_bar, xi) = aggregate_error(x_i, neighbors)?;
        let phi = design.basis.eval(x_i);
        Ok((coupling_sum(&self.edges, &self.k_m, &xi, neighbors) - self.theta.dot(&phi)) / a_bar)
    }

    /// Time derivative of every adaptive parameter.
    pub fn derivative(
        &self,
        design: &AdaptiveDesign,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<Self, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        let (_, xi) = aggregate_error(x_i, neighbors)?;
        let drive = design.gain_drive(&xi);
        let (edges, k_m) = coupling_rates(drive, &xi, neighbors);
        let phi = design.basis.eval(x_i);
        let theta = design.theta_rate(&phi, &xi, &self.theta);
        Ok(Self { edges, k_m, theta })
    }
}
