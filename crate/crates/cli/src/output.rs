//! CSV and JSON writers.

use std::io::{self, Write};

use adasync::sim::{FeedforwardDeviation, MetricsReport};
use adasync::{Protocol, Trajectory};
use serde::Serialize;

/// `t,xm1..xmn,` then `a{i}_x1..a{i}_xn,a{i}_u,a{i}_err` for every follower.
pub fn trajectory_header(n: usize, n_agents: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|k| format!("xm{k}")));
    for i in 1..=n_agents {
        cols.extend((1..=n).map(|k| format!("a{i}_x{k}")));
        cols.push(format!("a{i}_u"));
        cols.push(format!("a{i}_err"));
    }
    cols.join(",")
}

/// 17 significant digits, enough to round-trip any `f64`.
fn push_num(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v:.16e}");
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let layout = traj.layout();
    let (n, n_agents) = (layout.n, traj.n_agents());
    writeln!(w, "{}", trajectory_header(n, n_agents))?;
    let errors: Vec<Vec<f64>> = (1..=n_agents).map(|i| traj.error(i)).collect();
    let mut line = String::new();
    for (k, &t) in traj.times().iter().enumerate() {
        line.clear();
        push_num(&mut line, t);
        let y = traj.state(k);
        for v in layout.reference(y).iter() {
            line.push(',');
            push_num(&mut line, *v);
        }
        let u = traj.inputs_at(k);
        for i in 1..=n_agents {
            for v in layout.agent(y, i).iter() {
                line.push(',');
                push_num(&mut line, *v);
            }
            line.push(',');
            push_num(&mut line, u[i - 1]);
            line.push(',');
            push_num(&mut line, errors[i - 1][k]);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// `t` then one `f{j}_{i}` column per edge `j -> i` with `k_rij` or `û_ji`.
pub fn write_feedforward_csv<W: Write>(mut w: W, traj: &Trajectory, edges: &[(usize, usize)]) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(edges.iter().map(|(j, i)| format!("f{j}_{i}")));
    writeln!(w, "{}", header.join(","))?;
    let mut per_agent_edge = vec![0usize; traj.n_agents() + 1];
    let series: Vec<Vec<f64>> = edges
        .iter()
        .map(|&(_, i)| {
            let e = per_agent_edge[i];
            per_agent_edge[i] += 1;
            traj.edge_feedforward(i, e)
        })
        .collect();
    let mut line = String::new();
    for (k, &t) in traj.times().iter().enumerate() {
        line.clear();
        push_num(&mut line, t);
        for s in &series {
            line.push(',');
            push_num(&mut line, s[k]);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentReport {
    pub agent: usize,
    pub sup_error: f64,
    pub first_window_rms: f64,
    pub final_window_rms: f64,
    /// `final_window_rms / first_window_rms`.
    pub rms_ratio: f64,
    pub max_abs_input: f64,
    /// Peak-to-peak of `‖x_i − x_m‖` over the final window, the size of any
    /// residual oscillation.
    pub final_peak_to_peak: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub from: usize,
    pub to: usize,
    pub ideal_gain: f64,
    pub final_window_max_deviation: f64,
    pub final_value: f64,
    pub final_target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub protocol: String,
    pub samples: usize,
    pub horizon: f64,
    pub window_fraction: f64,
    pub max_sup_error: f64,
    pub unbounded_input: bool,
    /// `null` unless the Lyapunov function was recorded.
    pub lyapunov_violations: Option<usize>,
    pub agents: Vec<AgentReport>,
    pub edges: Vec<EdgeReport>,
}

impl RunReport {
    pub fn new(protocol: Protocol, traj: &Trajectory, m: &MetricsReport, ff: &[FeedforwardDeviation]) -> Self {
        Self {
            protocol: protocol.name().to_string(),
            samples: traj.len(),
            horizon: traj.times().last().copied().unwrap_or(0.0),
            window_fraction: m.window_fraction,
            max_sup_error: m.max_sup_error,
            unbounded_input: m.unbounded_input,
            lyapunov_violations: m.lyapunov_violations.as_ref().map(Vec::len),
            agents: m
                .agents
                .iter()
                .map(|a| AgentReport {
                    agent: a.agent,
                    sup_error: a.sup_error,
                    first_window_rms: a.first_window_rms,
                    final_window_rms: a.final_window_rms,
                    rms_ratio: a.final_window_rms / a.first_window_rms,
                    max_abs_input: a.max_abs_input,
                    final_peak_to_peak: a.final_peak_to_peak,
                })
                .collect(),
            edges: ff
                .iter()
                .map(|d| EdgeReport {
                    from: d.from,
                    to: d.to,
                    ideal_gain: d.ideal_gain,
                    final_window_max_deviation: d.final_window_max,
                    final_value: d.final_value,
                    final_target: d.final_target,
                })
                .collect(),
        }
    }
}

pub fn write_report_json<W: Write>(w: W, report: &RunReport) -> io::Result<()> {
    serde_json::to_writer_pretty(w, report).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(2, 1), "t,xm1,xm2,a1_x1,a1_x2,a1_u,a1_err");
        let h = trajectory_header(3, 6);
        assert_eq!(h.split(',').count(), 1 + 3 + 6 * 5);
        assert!(h.ends_with("a6_x3,a6_u,a6_err"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            let mut s = String::new();
            push_num(&mut s, v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
