use super::{CoupledSystem, Trajectory, DIVERGENCE_GUARD};
use crate::controllers::Protocol;
use crate::graph::LEADER;

/// Width of the first and final RMS windows as a fraction of the horizon.
pub const WINDOW_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMetrics {
    pub agent: usize,
    /// `sup_t ‖x_i − x_m‖`.
    pub sup_error: f64,
    pub first_window_rms: f64,
    pub final_window_rms: f64,
    pub max_abs_input: f64,
    /// Peak-to-peak of `‖x_i − x_m‖` over the final window.
    pub final_peak_to_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub window_fraction: f64,
    pub agents: Vec<AgentMetrics>,
    pub max_sup_error: f64,
    /// Some recorded input was non-finite or above the divergence guard.
    pub unbounded_input: bool,
    /// Sample indices where the recorded `V` increased, if `V` was recorded.
    pub lyapunov_violations: Option<Vec<usize>>,
}

/// RMS of `values` over `t ∈ [start, end]` by the trapezoidal rule on the
/// samples inside the window. Returns 0 for windows with fewer than two
/// samples.
pub fn window_rms(times: &[f64], values: &[f64], start: f64, end: f64) -> f64 {
    let eps = 1e-9 * (end - start).abs().max(1.0);
    let pts: Vec<(f64, f64)> =
        times.iter().zip(values).filter(|(&t, _)| t >= start - eps && t <= end + eps).map(|(&t, &v)| (t, v)).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let mut integral = 0.0;
    for w in pts.windows(2) {
        integral += 0.5 * (w[1].0 - w[0].0) * (w[0].1 * w[0].1 + w[1].1 * w[1].1);
    }
    let span = pts[pts.len() - 1].0 - pts[0].0;
    if span <= 0.0 {
        return 0.0;
    }
    (integral / span).sqrt()
}

pub fn peak_to_peak(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Indices `k` with `v[k] > v[k-1] + rel_tol * max(|v[k-1]|, 1)`.
pub fn lyapunov_violations(v: &[f64], rel_tol: f64) -> Vec<usize> {
    v.windows(2).enumerate().filter(|(_, w)| w[1] > w[0] + rel_tol * w[0].abs().max(1.0)).map(|(k, _)| k + 1).collect()
}

/// Tolerance used by [`metrics`] when screening the recorded `V`.
const V_REL_TOL: f64 = 1e-6;

impl AgentMetrics {
    /// Metrics of one agent from its error norm and input series on `times`.
    pub fn from_series(agent: usize, times: &[f64], err: &[f64], u: &[f64]) -> Self {
        let t0 = times.first().copied().unwrap_or(0.0);
        let t1 = times.last().copied().unwrap_or(0.0);
        let w = WINDOW_FRACTION * (t1 - t0);
        let tail: Vec<f64> = times.iter().zip(err).filter(|(&t, _)| t >= t1 - w - 1e-9).map(|(_, &e)| e).collect();
        Self {
            agent,
            sup_error: err.iter().copied().fold(0.0, f64::max),
            first_window_rms: window_rms(times, err, t0, t0 + w),
            final_window_rms: window_rms(times, err, t1 - w, t1),
            max_abs_input: u.iter().map(|v| v.abs()).fold(0.0, f64::max),
            final_peak_to_peak: peak_to_peak(&tail),
        }
    }
}

/// True if any input is non-finite or exceeds the divergence guard.
pub fn input_unbounded(u: &[f64]) -> bool {
    u.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD)
}

pub fn metrics(traj: &Trajectory) -> MetricsReport {
    let times = traj.times();
    let mut agents = Vec::with_capacity(traj.n_agents());
    let mut unbounded_input = false;
    for i in 1..=traj.n_agents() {
        let u = traj.inputs(i);
        unbounded_input |= input_unbounded(&u);
        agents.push(AgentMetrics::from_series(i, times, &traj.error(i), &u));
    }
    let max_sup_error = agents.iter().map(|a| a.sup_error).fold(0.0, f64::max);
    MetricsReport {
        window_fraction: WINDOW_FRACTION,
        agents,
        max_sup_error,
        unbounded_input,
        lyapunov_violations: traj.lyapunov().map(|v| lyapunov_violations(v, V_REL_TOL)),
    }
}

/// Final-window distance of one in-edge feedforward parameter from its
/// matching-condition target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardDeviation {
    pub from: usize,
    pub to: usize,
    /// `k*_rij`.
    pub ideal_gain: f64,
    /// `max |f − f*|` over the final window.
    pub final_window_max: f64,
    pub final_value: f64,
    pub final_target: f64,
}

/// Per in-edge deviation of `k_rij` from `k*_rij`, or under input estimation
/// of `û_ji` from `k*_rij u_j(t)`.
pub fn feedforward_deviation(system: &CoupledSystem, traj: &Trajectory) -> Vec<FeedforwardDeviation> {
    let times = traj.times();
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(0.0);
    let start = t1 - WINDOW_FRACTION * (t1 - t0) - 1e-9;
    let signal = system.reference().signal();
    let mut out = Vec::new();
    for i in 1..=traj.n_agents() {
        for (e, &(j, _)) in system.parents(i).iter().enumerate() {
            let k_r = system.ideal_gains(i).edges[e].k_r;
            let f = traj.edge_feedforward(i, e);
            let u_j: Vec<f64> =
                if j == LEADER { times.iter().map(|&t| signal.eval(t)).collect() } else { traj.inputs(j) };
            let target = |k: usize| match system.protocol() {
                Protocol::InputEstimation => k_r * u_j[k],
                _ => k_r,
            };
            let final_window_max =
                (0..times.len()).filter(|&k| times[k] >= start).map(|k| (f[k] - target(k)).abs()).fold(0.0, f64::max);
            let last = times.len() - 1;
            out.push(FeedforwardDeviation {
                from: j,
                to: i,
                ideal_gain: k_r,
                final_window_max,
                final_value: f[last],
                final_target: target(last),
            });
        }
    }
    out
}
