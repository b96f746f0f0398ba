//! The slot loop: extrapolated weights, routing or scheduling, congestion
//! control, virtual-queue update.
//!
//! Per slot `t`:
//! 1. `z[t] = (1 + 1/τ)λ[t−1] − λ[t−2]/τ`, then per link
//!    `r[t] = argmax Σ_d (z_m^d − z_n^d) r^d − (ρβ/2)(r^d − r^d[t−1])²` over
//!    the capacity region;
//! 2. `x_f[t]` maximizes `U_f(x) − a_f x − (ρ/2)(x − x_f[t−1])²` over the box,
//!    with `a_f = z_{s_f}^{d_f}[t] + ρ Δr_f[t]`;
//! 3. `λ[t] = λ[t−1] − ρτ(Bx[t] + Ar[t])`.

mod diagnostics;

pub use diagnostics::{
    check_proximal_term, default_eta, kkt_residual, lyapunov_value, project_rates, reference_solve,
    total_utility, Reference, ReferenceOptions,
};

use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityRegion, OracleKind};
use crate::error::{check_len, Error, Result};
use crate::network::NetworkInstance;
use crate::routing::route_all;
use crate::scheduling::{
    solve_scheduling_qp, ScheduleSolution, SchedulingOptions, SchedulingProblem,
};
use crate::utility::{congestion_step, RateBox};

/// Golden ratio: the dual step τ must stay strictly below it.
pub const TAU_LIMIT: f64 = 1.618_033_988_749_895;

/// Per-link proximal weight β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// `deg(Tx) + deg(Rx) + margin`; the default margin is 1.
    DegreePlus(f64),
    /// Explicit value per link.
    PerLink(Vec<f64>),
}

impl Default for BetaPolicy {
    fn default() -> Self {
        BetaPolicy::DegreePlus(1.0)
    }
}

impl BetaPolicy {
    /// Resolves to one β per link, each strictly above `deg(Tx) + deg(Rx)`.
    pub fn resolve(&self, inst: &NetworkInstance) -> Result<Vec<f64>> {
        let g = inst.graph();
        let floor: Vec<f64> = g
            .links()
            .iter()
            .map(|l| (g.degree(l.tx) + g.degree(l.rx)) as f64)
            .collect();
        let beta = match self {
            BetaPolicy::DegreePlus(margin) => floor.iter().map(|f| f + margin).collect(),
            BetaPolicy::PerLink(v) => {
                check_len("beta", inst.n_links(), v.len())?;
                v.clone()
            }
        };
        for (l, (&b, &f)) in beta.iter().zip(&floor).enumerate() {
            if !(b > f && b.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "beta on link {l} must exceed deg(tx) + deg(rx) = {f}, got {b}"
                )));
            }
        }
        Ok(beta)
    }
}

/// Step sizes, stopping rule and safety limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmParams {
    pub rho: f64,
    pub tau: f64,
    pub beta: BetaPolicy,
    pub max_slots: usize,
    /// Stop when `‖Bx + Ar‖ <= tol_residual` ...
    pub tol_residual: f64,
    /// ... and `‖x[t] − x[t−1]‖ / max(1, ‖x[t]‖) <= tol_x`.
    pub tol_x: f64,
    /// Stop on relative error instead; needs a reference.
    pub tol_rel: Option<f64>,
    /// Permit τ outside `[1, TAU_LIMIT)`.
    pub allow_unsafe_tau: bool,
    /// Abort once `‖λ‖` exceeds this.
    pub divergence_norm: f64,
    /// Scheduling gap: `max(floor, factor · ‖Bx + Ar‖)` of the previous slot.
    pub schedule_tol_floor: f64,
    pub schedule_tol_factor: f64,
    pub oracle: OracleKind,
    /// η of the Lyapunov diagnostic; defaults to [`default_eta`].
    pub eta: Option<f64>,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tau: 1.618,
            beta: BetaPolicy::default(),
            max_slots: 5000,
            tol_residual: 1e-8,
            tol_x: 1e-8,
            tol_rel: None,
            allow_unsafe_tau: false,
            divergence_norm: 1e12,
            schedule_tol_floor: 1e-8,
            schedule_tol_factor: 1e-3,
            oracle: OracleKind::default(),
            eta: None,
        }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !self.allow_unsafe_tau && !(1.0..TAU_LIMIT).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in [1, {TAU_LIMIT}), got {}",
                self.tau
            )));
        }
        if !(self.schedule_tol_floor > 0.0) || self.schedule_tol_factor < 0.0 {
            return Err(Error::InvalidParameter(
                "scheduling tolerance floor must be positive and factor nonnegative".into(),
            ));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| default_eta(self.tau))
    }
}

/// Iterates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub slot: usize,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    /// λ[t]
    pub lambda: Vec<f64>,
    /// λ[t−1]
    pub lambda_prev: Vec<f64>,
    /// Δr_f of the last slot.
    pub delta_r: Vec<f64>,
}

impl AdmmState {
    /// Empty queues, zero rates.
    pub fn initial(inst: &NetworkInstance) -> Self {
        Self {
            slot: 0,
            x: vec![0.0; inst.n_flows()],
            r: vec![0.0; inst.n_link_vars()],
            lambda: vec![0.0; inst.n_rows()],
            lambda_prev: vec![0.0; inst.n_rows()],
            delta_r: vec![0.0; inst.n_flows()],
        }
    }
}

/// Side information from one slot.
#[derive(Debug, Clone, Default)]
pub struct SlotInfo {
    /// Frank–Wolfe gap of the scheduling step; `None` on wireline regions.
    pub schedule_gap: Option<f64>,
    pub oracle_calls: usize,
    /// Time-sharing schedule of the scheduling step.
    pub schedule: Option<ScheduleSolution>,
}

/// `z = (1 + 1/τ)λ[t−1] − λ[t−2]/τ`.
pub fn compute_weights(lambda_prev: &[f64], lambda_prev2: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    check_len("lambda[t-2]", lambda_prev.len(), lambda_prev2.len())?;
    Ok(lambda_prev
        .iter()
        .zip(lambda_prev2)
        .map(|(&a, &b)| (1.0 + 1.0 / tau) * a - b / tau)
        .collect())
}

/// Δr_f: change of inflow minus change of outflow at `(s_f, d_f)`.
pub fn compute_delta_r(inst: &NetworkInstance, r: &[f64], r_prev: &[f64], f: usize) -> Result<f64> {
    if f >= inst.n_flows() {
        return Err(Error::InvalidParameter(format!(
            "unknown flow {f} (instance has {})",
            inst.n_flows()
        )));
    }
    check_len("link rates", inst.n_link_vars(), r.len())?;
    check_len("previous link rates", inst.n_link_vars(), r_prev.len())?;
    let flow = &inst.flows()[f];
    let k = inst.flow_destination_index(f);
    let g = inst.graph();
    let diff = |l: usize| r[inst.var(l, k)] - r_prev[inst.var(l, k)];
    let inflow: f64 = g.incoming(flow.source).iter().map(|&l| diff(l)).sum();
    let outflow: f64 = g.outgoing(flow.source).iter().map(|&l| diff(l)).sum();
    Ok(inflow - outflow)
}

/// Elementwise dual step: each `(n, d)` row gains `ρτ` times its net inflow
/// plus injections.
pub fn virtual_queue_update(
    inst: &NetworkInstance,
    lambda: &[f64],
    x: &[f64],
    r: &[f64],
    rho: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    check_len("lambda", inst.n_rows(), lambda.len())?;
    check_len("injection rates", inst.n_flows(), x.len())?;
    check_len("link rates", inst.n_link_vars(), r.len())?;
    let g = inst.graph();
    let step = rho * tau;
    let mut out = lambda.to_vec();
    for (row, value) in out.iter_mut().enumerate() {
        let (n, k) = inst.row_node(row);
        for &l in g.outgoing(n) {
            *value -= step * r[inst.var(l, k)];
        }
        for &l in g.incoming(n) {
            *value += step * r[inst.var(l, k)];
        }
    }
    for (f, &xf) in x.iter().enumerate() {
        out[inst.source_row(f)] += step * xf;
    }
    Ok(out)
}

/// Step 1 on either kind of region. `weight_diff` is `Aᵀz`.
pub(crate) fn rate_step(
    inst: &NetworkInstance,
    region: &CapacityRegion,
    weight_diff: &[f64],
    r_prev: &[f64],
    rho: f64,
    beta: &[f64],
    schedule_tol: f64,
) -> Result<(Vec<f64>, SlotInfo)> {
    match region {
        CapacityRegion::Wireline(caps) => Ok((
            route_all(inst, weight_diff, r_prev, rho, beta, caps.capacities())?,
            SlotInfo::default(),
        )),
        CapacityRegion::Wireless(oracle) => {
            let curvature: Vec<f64> = beta.iter().map(|b| rho * b).collect();
            let prob = SchedulingProblem {
                n_links: inst.n_links(),
                n_destinations: inst.n_destinations(),
                linear: weight_diff,
                anchor: r_prev,
                curvature: &curvature,
            };
            let sol = solve_scheduling_qp(
                &prob,
                oracle.as_ref(),
                SchedulingOptions::with_tol(schedule_tol),
            )?;
            let r = sol.r.clone();
            let info = SlotInfo {
                schedule_gap: Some(sol.gap),
                oracle_calls: sol.oracle_calls,
                schedule: Some(sol),
            };
            Ok((r, info))
        }
    }
}

/// One slot of the algorithm. `beta` must come from [`BetaPolicy::resolve`].
pub fn admm_slot(
    inst: &NetworkInstance,
    region: &CapacityRegion,
    state: &AdmmState,
    params: &AdmmParams,
    beta: &[f64],
) -> Result<(AdmmState, SlotInfo)> {
    let slot = state.slot + 1;
    let wrap = |e: Error| Error::Slot {
        slot,
        source: Box::new(e),
    };
    let rho = params.rho;
    let tau = params.tau;

    let z = compute_weights(&state.lambda, &state.lambda_prev, tau).map_err(wrap)?;
    let weight_diff = inst.apply_a_transpose(&z);
    let prev_residual = state
        .lambda
        .iter()
        .zip(&state.lambda_prev)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / (rho * tau);
    let schedule_tol = params
        .schedule_tol_floor
        .max(params.schedule_tol_factor * prev_residual);
    let (r, info) = rate_step(
        inst,
        region,
        &weight_diff,
        &state.r,
        rho,
        beta,
        schedule_tol,
    )
    .map_err(wrap)?;

    let mut x = vec![0.0; inst.n_flows()];
    let mut delta_r = vec![0.0; inst.n_flows()];
    for (f, flow) in inst.flows().iter().enumerate() {
        delta_r[f] = compute_delta_r(inst, &r, &state.r, f).map_err(wrap)?;
        let a = z[inst.source_row(f)] + rho * delta_r[f];
        let bounds = RateBox {
            min: flow.min_rate,
            max: flow.max_rate,
        };
        x[f] = congestion_step(&flow.utility, a, state.x[f], rho, bounds).map_err(wrap)?;
    }

    let lambda = virtual_queue_update(inst, &state.lambda, &x, &r, rho, tau).map_err(wrap)?;
    let norm = lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm <= params.divergence_norm) {
        return Err(Error::Diverged { slot, norm });
    }
    Ok((
        AdmmState {
            slot,
            x,
            r,
            lambda,
            lambda_prev: state.lambda.clone(),
            delta_r,
        },
        info,
    ))
}

/// Owns an instance, its region and the running state.
#[derive(Debug)]
pub struct AdmmSolver {
    inst: NetworkInstance,
    region: CapacityRegion,
    params: AdmmParams,
    beta: Vec<f64>,
    state: AdmmState,
    last: SlotInfo,
}

impl AdmmSolver {
    pub fn new(inst: NetworkInstance, params: AdmmParams) -> Result<Self> {
        params.validate()?;
        let beta = params.beta.resolve(&inst)?;
        let region = CapacityRegion::for_instance(&inst, params.oracle)?;
        let state = AdmmState::initial(&inst);
        Ok(Self {
            inst,
            region,
            params,
            beta,
            state,
            last: SlotInfo::default(),
        })
    }

    /// Continue from a given state instead of the empty network.
    pub fn with_state(mut self, state: AdmmState) -> Result<Self> {
        check_len("injection rates", self.inst.n_flows(), state.x.len())?;
        check_len("link rates", self.inst.n_link_vars(), state.r.len())?;
        check_len("lambda", self.inst.n_rows(), state.lambda.len())?;
        check_len("lambda[t-1]", self.inst.n_rows(), state.lambda_prev.len())?;
        self.state = state;
        Ok(self)
    }

    pub fn step(&mut self) -> Result<&SlotInfo> {
        let (next, info) = admm_slot(
            &self.inst,
            &self.region,
            &self.state,
            &self.params,
            &self.beta,
        )?;
        self.state = next;
        self.last = info;
        Ok(&self.last)
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn instance(&self) -> &NetworkInstance {
        &self.inst
    }

    pub fn region(&self) -> &CapacityRegion {
        &self.region
    }

    pub fn params(&self) -> &AdmmParams {
        &self.params
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn last_info(&self) -> &SlotInfo {
        &self.last
    }

    /// Swaps in new link capacities (fading channels).
    pub fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        self.inst = self.inst.with_capacities(capacities)?;
        self.region = CapacityRegion::for_instance(&self.inst, self.params.oracle)?;
        Ok(())
    }
}
