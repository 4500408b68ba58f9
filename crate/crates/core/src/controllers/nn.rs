//! Neural-network approximation of the input uncertainty.
//!
//! The uncertainty term is `θᵀ φ(Wᵀ x̄)` with `x̄ = [1, xᵀ]ᵀ` and
//! `φ = [1, σ(Wᵀ x̄)ᵀ]ᵀ`, `σ(z) = 1 / (1 + e^{−a z})` elementwise. `W` is
//! `(n+1) × m`, `θ` has `m + 1` entries.
//!
//! Weight laws, with `s_b = Ξᵀ P b_i`:
//!
//! ```text
//! θ̇ = γ φ s_b
//! Ẇ = γ s_b x̄ (V ⊙ σ)ᵀ
//! ```
//!
//! so hidden unit `k` is updated along `x̄` scaled by `V_k σ_k`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{
    aggregate_error, check_edges, coupling_rates, coupling_sum, AdaptiveDesign, ControlError, CouplingGains,
    NeighborSample,
};

/// Hidden width used when a scenario does not set one.
pub const DEFAULT_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct NnParams {
    pub steepness: f64,
    /// Per-hidden-unit scaling `V` in the `W` law.
    pub v_bias: DVector<f64>,
}

impl NnParams {
    pub fn new(width: usize, steepness: f64, v_bias_scale: f64) -> Result<Self, ControlError> {
        if !(steepness > 0.0) || !steepness.is_finite() {
            return Err(ControlError::InvalidSteepness(steepness));
        }
        Ok(Self { steepness, v_bias: DVector::from_element(width, v_bias_scale) })
    }

    pub fn width(&self) -> usize {
        self.v_bias.len()
    }
}

pub fn sigmoid(z: f64, steepness: f64) -> f64 {
    1.0 / (1.0 + (-steepness * z).exp())
}

/// `[1, xᵀ]ᵀ`.
pub fn augmented(x: &DVector<f64>) -> DVector<f64> {
    let mut xb = DVector::zeros(x.len() + 1);
    xb[0] = 1.0;
    xb.rows_mut(1, x.len()).copy_from(x);
    xb
}

/// Hidden activations `σ(Wᵀ x̄)`.
pub fn hidden(w: &DMatrix<f64>, x: &DVector<f64>, steepness: f64) -> DVector<f64> {
    w.tr_mul(&augmented(x)).map(|z| sigmoid(z, steepness))
}

/// `φ(Wᵀ x̄) = [1, σ(Wᵀ x̄)ᵀ]ᵀ`.
pub fn nn_basis(w: &DMatrix<f64>, x: &DVector<f64>, steepness: f64) -> DVector<f64> {
    let sigma = hidden(w, x, steepness);
    let mut phi = DVector::zeros(sigma.len() + 1);
    phi[0] = 1.0;
    phi.rows_mut(1, sigma.len()).copy_from(&sigma);
    phi
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnState {
    pub edges: Vec<CouplingGains>,
    pub k_m: DVector<f64>,
    /// Outer weights, length `m + 1`.
    pub theta: DVector<f64>,
    /// Inner weights, `(n + 1) × m`.
    pub w: DMatrix<f64>,
}

impl NnState {
    pub fn zeros(n_edges: usize, n: usize, params: &NnParams) -> Self {
        let m = params.width();
        Self {
            edges: vec![CouplingGains::zeros(n); n_edges],
            k_m: DVector::zeros(n),
            theta: DVector::zeros(m + 1),
            w: DMatrix::zeros(n + 1, m),
        }
    }

    /// Zero gains with inner weights drawn uniformly from `[−scale, scale]`.
    pub fn with_random_weights<R: Rng>(n_edges: usize, n: usize, params: &NnParams, scale: f64, rng: &mut R) -> Self {
        let mut s = Self::zeros(n_edges, n, params);
        if scale > 0.0 {
            s.w = DMatrix::from_fn(n + 1, params.width(), |_, _| rng.random_range(-scale..=scale));
        }
        s
    }

    pub fn control(
        &self,
        params: &NnParams,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<f64, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        self.check_shape(x_i.len(), params)?;
        let (a_bar, xi) = aggregate_error(x_i, neighbors)?;
        let phi = nn_basis(&self.w, x_i, params.steepness);
        Ok((coupling_sum(&self.edges, &self.k_m, &xi, neighbors) - self.theta.dot(&phi)) / a_bar)
    }

    pub fn derivative(
        &self,
        design: &AdaptiveDesign,
        params: &NnParams,
        x_i: &DVector<f64>,
        neighbors: &[NeighborSample<'_>],
    ) -> Result<Self, ControlError> {
        check_edges(self.edges.len(), neighbors)?;
        self.check_shape(x_i.len(), params)?;
        let (_, xi) = aggregate_error(x_i, neighbors)?;
        let drive = design.gain_drive(&xi);
        let (edges, k_m) = coupling_rates(drive, &xi, neighbors);

        let s_b = xi.dot(&design.p_b_i);
        let sigma = hidden(&self.w, x_i, params.steepness);
        let mut phi = DVector::zeros(sigma.len() + 1);
        phi[0] = 1.0;
        phi.rows_mut(1, sigma.len()).copy_from(&sigma);

        let theta = phi * (design.gamma * s_b);
        let scaled = params.v_bias.component_mul(&sigma);
        let w = augmented(x_i) * scaled.transpose() * (design.gamma * s_b);
        Ok(Self { edges, k_m, theta, w })
    }

    fn check_shape(&self, n: usize, params: &NnParams) -> Result<(), ControlError> {
        if self.w.nrows() != n + 1 {
            return Err(ControlError::DimensionMismatch { expected: self.w.nrows() - 1, got: n });
        }
        if self.w.ncols() != params.width() || self.theta.len() != params.width() + 1 {
            return Err(ControlError::DimensionMismatch { expected: params.width(), got: self.w.ncols() });
        }
        Ok(())
    }
}
