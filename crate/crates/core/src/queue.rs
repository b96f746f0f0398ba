//! Fluid model of the physical per-destination queues.
//!
//! A slot first serves every node from its backlog of the previous slot, then
//! delivers the served fluid downstream together with new injections. When a
//! node's backlog cannot cover its outgoing rates, every outgoing link is
//! scaled by the same factor. Fluid entering a destination leaves the
//! network.

use crate::error::{check_len, Result};
use crate::network::NetworkInstance;

/// `Q_n^d`, indexed like the dual rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub q: Vec<f64>,
}

impl QueueState {
    pub fn empty(inst: &NetworkInstance) -> Self {
        Self {
            q: vec![0.0; inst.n_rows()],
        }
    }

    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.q.iter().cloned().fold(0.0, f64::max)
    }
}

/// Result of one [`queue_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct QueueStep {
    pub next: QueueState,
    /// Served rate ĥ per link variable; `ĥ <= r`.
    pub served: Vec<f64>,
    /// Fluid that reached each destination this slot.
    pub delivered: Vec<f64>,
    /// Negative input rates clipped to zero.
    pub clipped: usize,
}

pub fn queue_step(
    inst: &NetworkInstance,
    queues: &QueueState,
    x: &[f64],
    r: &[f64],
) -> Result<QueueStep> {
    check_len("queues", inst.n_rows(), queues.q.len())?;
    check_len("injection rates", inst.n_flows(), x.len())?;
    check_len("link rates", inst.n_link_vars(), r.len())?;
    let mut clipped = 0;
    let mut nonneg = |v: f64| {
        if v < 0.0 {
            clipped += 1;
            0.0
        } else {
            v
        }
    };
    let r: Vec<f64> = r.iter().map(|&v| nonneg(v)).collect();
    let x: Vec<f64> = x.iter().map(|&v| nonneg(v)).collect();

    let g = inst.graph();
    let mut served = vec![0.0; inst.n_link_vars()];
    let mut next = vec![0.0; inst.n_rows()];
    for (row, q_next) in next.iter_mut().enumerate() {
        let (n, k) = inst.row_node(row);
        let q = queues.q[row];
        let out: f64 = g.outgoing(n).iter().map(|&l| r[inst.var(l, k)]).sum();
        let share = if out > 0.0 { (q / out).min(1.0) } else { 0.0 };
        for &l in g.outgoing(n) {
            served[inst.var(l, k)] = r[inst.var(l, k)] * share;
        }
        *q_next = (q - out).max(0.0);
    }
    let mut delivered = vec![0.0; inst.n_destinations()];
    for k in 0..inst.n_destinations() {
        for (l, link) in g.links().iter().enumerate() {
            let h = served[inst.var(l, k)];
            match inst.row(link.rx, k) {
                Some(row) => next[row] += h,
                None => delivered[k] += h,
            }
        }
    }
    for (f, &xf) in x.iter().enumerate() {
        next[inst.source_row(f)] += xf;
    }
    Ok(QueueStep {
        next: QueueState { q: next },
        served,
        delivered,
        clipped,
    })
}

/// Queue statistics along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    /// `Σ Q` after each slot.
    pub totals: Vec<f64>,
    /// Largest single queue after each slot.
    pub max_queue: Vec<f64>,
    /// Running maximum of each `(n, d)` queue.
    pub peak: Vec<f64>,
    /// Every queue after each slot; empty unless requested.
    pub history: Vec<Vec<f64>>,
    pub final_state: QueueState,
}

/// Incremental version of [`simulate_queues`].
#[derive(Debug, Clone)]
pub struct QueueSimulator {
    state: QueueState,
    trace: QueueTrace,
    keep_history: bool,
}

impl QueueSimulator {
    pub fn new(inst: &NetworkInstance) -> Self {
        let state = QueueState::empty(inst);
        Self {
            trace: QueueTrace {
                totals: Vec::new(),
                max_queue: Vec::new(),
                peak: vec![0.0; inst.n_rows()],
                history: Vec::new(),
                final_state: state.clone(),
            },
            state,
            keep_history: false,
        }
    }

    /// Also record the full queue vector of every slot.
    pub fn with_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn push(&mut self, inst: &NetworkInstance, x: &[f64], r: &[f64]) -> Result<&QueueState> {
        let step = queue_step(inst, &self.state, x, r)?;
        self.state = step.next;
        self.trace.totals.push(self.state.total());
        self.trace.max_queue.push(self.state.max());
        for (p, &q) in self.trace.peak.iter_mut().zip(&self.state.q) {
            *p = p.max(q);
        }
        if self.keep_history {
            self.trace.history.push(self.state.q.clone());
        }
        Ok(&self.state)
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    pub fn finish(mut self) -> QueueTrace {
        self.trace.final_state = self.state;
        self.trace
    }
}

/// Replays `(x[t], r[t])` from empty queues.
pub fn simulate_queues<'a>(
    inst: &NetworkInstance,
    trajectory: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<QueueTrace> {
    let mut sim = QueueSimulator::new(inst);
    for (x, r) in trajectory {
        sim.push(inst, x, r)?;
    }
    Ok(sim.finish())
}

/// Per-queue bound `2M/(ρτ) + B` with `M = max_t max |λ|` and `B` the largest
/// total outgoing capacity of a node.
pub fn queue_bound_estimate<'a>(
    inst: &NetworkInstance,
    lambdas: impl IntoIterator<Item = &'a [f64]>,
    rho: f64,
    tau: f64,
) -> f64 {
    let m = lambdas
        .into_iter()
        .flat_map(|l| l.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    queue_bound_from_max(inst, m, rho, tau)
}

/// [`queue_bound_estimate`] from an already reduced `M`.
pub fn queue_bound_from_max(
    inst: &NetworkInstance,
    max_abs_lambda: f64,
    rho: f64,
    tau: f64,
) -> f64 {
    let g = inst.graph();
    let b = (0..inst.n_nodes())
        .map(|n| {
            g.outgoing(n)
                .iter()
                .map(|&l| inst.capacities()[l])
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    2.0 * max_abs_lambda / (rho * tau) + b
}

/// Mean and least-squares slope of the last quarter of a series.
pub fn steady_state(series: &[f64]) -> (f64, f64) {
    let start = series.len() - series.len() / 4;
    let tail = &series[start.min(series.len().saturating_sub(1))..];
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    if tail.len() < 2 {
        return (mean, 0.0);
    }
    let t_mean = (n - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in tail.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - mean);
        sxx += dt * dt;
    }
    (mean, sxy / sxx)
}
