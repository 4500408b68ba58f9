//! Agent and reference-model dynamics, the vehicle power-train model and the
//! matching-condition solves.
//!
//! Followers obey `ẋ = A x + (b + f(x) b̂) u` with a scalar input `u` and a
//! bounded scalar uncertainty `f` injected along the normalized input
//! direction `b̂ = b / ‖b‖`. The leader obeys `ẋ_m = A_m x_m + b_m r(t)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lyapunov;

/// Residual below which a matching solve is declared exact.
pub const EXACT_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("power-train time lag must be nonzero")]
    ZeroTau,
    #[error("input vector is zero")]
    ZeroInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reference state matrix is not Hurwitz (max eigenvalue real part {max_real})")]
    NotHurwitz { max_real: f64 },
    #[error("pole placement needs {expected} strictly negative real poles")]
    InvalidPoles { expected: usize },
}

/// Bounded input-channel uncertainty. Only bounded primitives are offered so
/// the uncertainty is bounded on every set, compact or not.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Uncertainty {
    #[default]
    None,
    /// `amplitude * sin(x[component])`.
    Sinusoidal { amplitude: f64, component: usize },
}

impl Uncertainty {
    /// `amplitude * sin(x_3)`, the form used in the platoon scenarios.
    pub fn sinusoidal(amplitude: f64) -> Self {
        Self::Sinusoidal { amplitude, component: 2 }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Sinusoidal { amplitude, component } => amplitude * x[component].sin(),
        }
    }

    /// Supremum of `|f|`.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Sinusoidal { amplitude, .. } => amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    b_dir: DVector<f64>,
    uncertainty: Uncertainty,
}

impl AgentModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, uncertainty: Uncertainty) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: a.ncols() });
        }
        if b.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: b.len() });
        }
        if let Uncertainty::Sinusoidal { component, .. } = uncertainty {
            if component >= n {
                return Err(ModelError::DimensionMismatch { expected: n, got: component + 1 });
            }
        }
        let norm = b.norm();
        if norm == 0.0 {
            return Err(ModelError::ZeroInput);
        }
        let b_dir = &b / norm;
        Ok(Self { a, b, b_dir, uncertainty })
    }

    /// Third-order power-train model: position, velocity, acceleration with
    /// first-order lag `tau`. Uncertainty defaults to zero.
    pub fn vehicle(tau: f64) -> Result<Self, ModelError> {
        if tau == 0.0 || !tau.is_finite() {
            return Err(ModelError::ZeroTau);
        }
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0 / tau]);
        let b = DVector::from_column_slice(&[0.0, 0.0, 1.0 / tau]);
        Self::new(a, b, Uncertainty::None)
    }

    pub fn with_uncertainty(mut self, uncertainty: Uncertainty) -> Result<Self, ModelError> {
        if let Uncertainty::Sinusoidal { component, .. } = uncertainty {
            if component >= self.dim() {
                return Err(ModelError::DimensionMismatch { expected: self.dim(), got: component + 1 });
            }
        }
        self.uncertainty = uncertainty;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn uncertainty(&self) -> Uncertainty {
        self.uncertainty
    }

    /// `A x + (b + f(x) b̂) u`.
    pub fn derivative(&self, x: &DVector<f64>, u: f64) -> Result<DVector<f64>, ModelError> {
        self.check_dim(x.len())?;
        let mut dx = &self.a * x;
        dx.axpy(u, &self.b, 1.0);
        if self.uncertainty != Uncertainty::None {
            dx.axpy(self.uncertainty.eval(x) * u, &self.b_dir, 1.0);
        }
        Ok(dx)
    }

    fn check_dim(&self, got: usize) -> Result<(), ModelError> {
        if got != self.dim() {
            Err(ModelError::DimensionMismatch { expected: self.dim(), got })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceSignal {
    Constant(f64),
    /// `amplitude * sin(omega * t)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
    },
}

impl ReferenceSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Sinusoid { amplitude, omega } => amplitude * (omega * t).sin(),
        }
    }
}

/// Hurwitz reference model, checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    a_m: DMatrix<f64>,
    b_m: DVector<f64>,
    signal: ReferenceSignal,
}

impl ReferenceModel {
    pub fn new(a_m: DMatrix<f64>, b_m: DVector<f64>, signal: ReferenceSignal) -> Result<Self, ModelError> {
        let n = a_m.nrows();
        if a_m.ncols() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: a_m.ncols() });
        }
        if b_m.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: b_m.len() });
        }
        let max_real = lyapunov::spectral_abscissa(&a_m);
        if max_real >= -lyapunov::HURWITZ_TOL {
            return Err(ModelError::NotHurwitz { max_real });
        }
        Ok(Self { a_m, b_m, signal })
    }

    /// Closes a state-feedback loop around the vehicle with lag `tau` so the
    /// result has the given (real, negative) poles. `b_m` is the vehicle's
    /// own input vector.
    pub fn vehicle_pole_placement(tau: f64, poles: [f64; 3], signal: ReferenceSignal) -> Result<Self, ModelError> {
        if poles.iter().any(|p| !(*p < 0.0) || !p.is_finite()) {
            return Err(ModelError::InvalidPoles { expected: 3 });
        }
        let vehicle = AgentModel::vehicle(tau)?;
        // (s - p1)(s - p2)(s - p3) = s^3 + c2 s^2 + c1 s + c0
        let [p1, p2, p3] = poles;
        let c2 = -(p1 + p2 + p3);
        let c1 = p1 * p2 + p1 * p3 + p2 * p3;
        let c0 = -(p1 * p2 * p3);
        // Companion target row: [-c0, -c1, -c2] = A row 3 + b3 * k^T.
        let b3 = vehicle.b[2];
        let a3 = vehicle.a.row(2);
        let k = DVector::from_iterator(3, [-c0, -c1, -c2].iter().enumerate().map(|(c, t)| (t - a3[c]) / b3));
        let a_m = &vehicle.a + &vehicle.b * k.transpose();
        Self::new(a_m, vehicle.b.clone(), signal)
    }

    pub fn dim(&self) -> usize {
        self.a_m.nrows()
    }

    pub fn a_m(&self) -> &DMatrix<f64> {
        &self.a_m
    }

    pub fn b_m(&self) -> &DVector<f64> {
        &self.b_m
    }

    pub fn signal(&self) -> ReferenceSignal {
        self.signal
    }

    pub fn with_signal(mut self, signal: ReferenceSignal) -> Self {
        self.signal = signal;
        self
    }

    /// `A_m x_m + b_m r(t)`.
    pub fn derivative(&self, x_m: &DVector<f64>, t: f64) -> Result<DVector<f64>, ModelError> {
        if x_m.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), got: x_m.len() });
        }
        let mut dx = &self.a_m * x_m;
        dx.axpy(self.signal.eval(t), &self.b_m, 1.0);
        Ok(dx)
    }
}

/// Gains `(k*, k*_r)` expressing a target pair `(A_t, b_t)` through a base pair:
/// `A_t = A + b k*^T`, `b_t = b k*_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedGains {
    pub k: DVector<f64>,
    pub k_r: f64,
    /// Frobenius norm of the stacked mismatch `[A_t - A - b k^T, b_t - b k_r]`.
    pub residual: f64,
}

impl MatchedGains {
    pub fn is_exact(&self) -> bool {
        self.residual <= EXACT_MATCH_TOL
    }
}

/// Least-squares solve of `A_t = A + b k^T`, `b_t = b k_r`.
///
/// The system is rank one in `k`, so the minimizer is the projection onto `b`:
/// `k^T = b^T (A_t - A) / ‖b‖²`, `k_r = b^T b_t / ‖b‖²`.
pub fn match_pair(
    a_target: &DMatrix<f64>,
    b_target: &DVector<f64>,
    a_base: &DMatrix<f64>,
    b_base: &DVector<f64>,
) -> Result<MatchedGains, ModelError> {
    let n = a_base.nrows();
    for got in [a_target.nrows(), a_target.ncols(), b_target.len(), b_base.len()] {
        if got != n {
            return Err(ModelError::DimensionMismatch { expected: n, got });
        }
    }
    let bb = b_base.norm_squared();
    if bb == 0.0 {
        return Err(ModelError::ZeroInput);
    }
    let diff = a_target - a_base;
    let k = diff.tr_mul(b_base) / bb;
    let k_r = b_base.dot(b_target) / bb;
    let a_res = (&diff - b_base * k.transpose()).norm_squared();
    let b_res = (b_target - b_base * k_r).norm_squared();
    Ok(MatchedGains { k, k_r, residual: (a_res + b_res).sqrt() })
}

/// Feedback matching: `A_m = A_i + b_i k*^T`, `b_m = b_i k*_r`.
pub fn solve_feedback_matching(reference: &ReferenceModel, agent: &AgentModel) -> Result<MatchedGains, ModelError> {
    match_pair(reference.a_m(), reference.b_m(), agent.a(), agent.b())
}

/// Coupling matching: `A_i = A_j + b_j k*_ij^T`, `b_i = b_j k*_rij`.
pub fn solve_coupling_matching(agent_i: &AgentModel, agent_j: &AgentModel) -> Result<MatchedGains, ModelError> {
    match_pair(agent_i.a(), agent_i.b(), agent_j.a(), agent_j.b())
}
