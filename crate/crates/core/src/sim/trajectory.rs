use nalgebra::DVector;

use super::{CoupledSystem, SimError, StateLayout};

/// Decimated samples of a run: flat states, follower inputs and, optionally,
/// the composite Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    layout: StateLayout,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    inputs: Vec<Vec<f64>>,
    lyapunov: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn with_capacity(layout: StateLayout, capacity: usize, record_lyapunov: bool) -> Self {
        Self {
            layout,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity),
            inputs: Vec::with_capacity(capacity),
            lyapunov: record_lyapunov.then(|| Vec::with_capacity(capacity)),
        }
    }

    pub fn push(&mut self, system: &CoupledSystem, t: f64, y: &DVector<f64>) -> Result<(), SimError> {
        let u = system.inputs(t, y)?;
        if let Some(v) = &mut self.lyapunov {
            v.push(system.lyapunov_value(t, y)?);
        }
        self.times.push(t);
        self.states.push(y.clone());
        self.inputs.push(u);
        Ok(())
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.layout.n_agents()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Full flat state at sample `k`.
    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn reference_state(&self, k: usize) -> DVector<f64> {
        self.layout.reference(&self.states[k]).into_owned()
    }

    /// State of follower `i` (1-based) at sample `k`.
    pub fn agent_state(&self, k: usize, i: usize) -> DVector<f64> {
        self.layout.agent(&self.states[k], i).into_owned()
    }

    /// `‖x_i − x_m‖` at every sample.
    pub fn error(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|y| (self.layout.agent(y, i) - self.layout.reference(y)).norm()).collect()
    }

    /// `‖x_i − x_j‖` at every sample; `j = 0` is the reference.
    pub fn pair_error(&self, i: usize, j: usize) -> Vec<f64> {
        self.states
            .iter()
            .map(|y| {
                let xj = if j == 0 { self.layout.reference(y) } else { self.layout.agent(y, j) };
                (self.layout.agent(y, i) - xj).norm()
            })
            .collect()
    }

    /// Packed adaptive parameters of follower `i` at sample `k`.
    pub fn params(&self, k: usize, i: usize) -> &[f64] {
        self.layout.params(self.states[k].as_slice(), i)
    }

    /// `k_rij` or `û_ji` of in-edge `edge` of follower `i` at every sample.
    pub fn edge_feedforward(&self, i: usize, edge: usize) -> Vec<f64> {
        let idx = self.layout.feedforward_index(i, edge);
        self.states.iter().map(|y| y[idx]).collect()
    }

    /// Input of follower `i` at every sample.
    pub fn inputs(&self, i: usize) -> Vec<f64> {
        self.inputs.iter().map(|u| u[i - 1]).collect()
    }

    /// Inputs of every follower at sample `k`.
    pub fn inputs_at(&self, k: usize) -> &[f64] {
        &self.inputs[k]
    }

    pub fn lyapunov(&self) -> Option<&[f64]> {
        self.lyapunov.as_deref()
    }
}
