//! Comparison methods: queue-length-based dual decomposition (QCA) and the
//! proximal method with Jacobi updates.

use serde::{Deserialize, Serialize};

use crate::admm::virtual_queue_update;
use crate::admm::BetaPolicy;
use crate::capacity::{CapacityRegion, OracleKind};
use crate::error::{check_len, Error, Result};
use crate::network::{Interference, NetworkInstance};
use crate::queue::{queue_step, QueueState};
use crate::routing::route_all;
use crate::utility::{congestion_step, price_response, RateBox};

fn rate_box(inst: &NetworkInstance, f: usize) -> RateBox {
    let flow = &inst.flows()[f];
    RateBox {
        min: flow.min_rate,
        max: flow.max_rate,
    }
}

/// QCA knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcaParams {
    /// Utility scaling K.
    pub k: f64,
    pub oracle: OracleKind,
}

impl Default for QcaParams {
    fn default() -> Self {
        Self {
            k: 100.0,
            oracle: OracleKind::default(),
        }
    }
}

/// QCA iterates; the physical queues double as prices.
#[derive(Debug, Clone, PartialEq)]
pub struct QcaState {
    pub slot: usize,
    pub queues: QueueState,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
}

impl QcaState {
    pub fn initial(inst: &NetworkInstance) -> Self {
        Self {
            slot: 0,
            queues: QueueState::empty(inst),
            x: vec![0.0; inst.n_flows()],
            r: vec![0.0; inst.n_link_vars()],
        }
    }
}

/// One QCA slot: price-response injections, MaxWeight backpressure rates,
/// then the physical queue update.
pub fn qca_slot(
    inst: &NetworkInstance,
    region: &CapacityRegion,
    state: &QcaState,
    k: f64,
) -> Result<QcaState> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "K must be positive, got {k}"
        )));
    }
    let q = &state.queues.q;
    let x: Vec<f64> = inst
        .flows()
        .iter()
        .enumerate()
        .map(|(f, flow)| price_response(&flow.utility, k, q[inst.source_row(f)], rate_box(inst, f)))
        .collect();

    // backpressure Q_m^d − Q_n^d, destination rows reading zero
    let l_count = inst.n_links();
    let bp = inst.apply_a_transpose(q);
    let mut best_dest = vec![0usize; l_count];
    let mut scores = vec![0.0; l_count];
    for l in 0..l_count {
        let mut best = f64::NEG_INFINITY;
        for kd in 0..inst.n_destinations() {
            let v = bp[inst.var(l, kd)];
            if v > best {
                best = v;
                best_dest[l] = kd;
            }
        }
        scores[l] = best.max(0.0);
    }
    let totals: Vec<f64> = match region {
        CapacityRegion::Wireline(caps) => caps
            .capacities()
            .iter()
            .zip(&scores)
            .map(|(&c, &s)| if s > 0.0 { c } else { 0.0 })
            .collect(),
        CapacityRegion::Wireless(oracle) => oracle.maxweight(&scores),
    };
    let mut r = vec![0.0; inst.n_link_vars()];
    for l in 0..l_count {
        if scores[l] > 0.0 {
            r[inst.var(l, best_dest[l])] = totals[l];
        }
    }
    let queues = queue_step(inst, &state.queues, &x, &r)?.next;
    Ok(QcaState {
        slot: state.slot + 1,
        queues,
        x,
        r,
    })
}

#[derive(Debug)]
pub struct QcaSolver {
    inst: NetworkInstance,
    region: CapacityRegion,
    params: QcaParams,
    state: QcaState,
}

impl QcaSolver {
    pub fn new(inst: NetworkInstance, params: QcaParams) -> Result<Self> {
        if !(params.k > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "K must be positive, got {}",
                params.k
            )));
        }
        let region = CapacityRegion::for_instance(&inst, params.oracle)?;
        let state = QcaState::initial(&inst);
        Ok(Self {
            inst,
            region,
            params,
            state,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.state =
            qca_slot(&self.inst, &self.region, &self.state, self.params.k).map_err(|e| {
                Error::Slot {
                    slot: self.state.slot + 1,
                    source: Box::new(e),
                }
            })?;
        Ok(())
    }

    pub fn state(&self) -> &QcaState {
        &self.state
    }

    pub fn instance(&self) -> &NetworkInstance {
        &self.inst
    }

    pub fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        self.inst = self.inst.with_capacities(capacities)?;
        self.region = CapacityRegion::for_instance(&self.inst, self.params.oracle)?;
        Ok(())
    }
}

/// Proximal-method knobs. The dual step is always τ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProximalParams {
    pub rho: f64,
    pub beta: BetaPolicy,
    pub divergence_norm: f64,
}

impl Default for ProximalParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            beta: BetaPolicy::default(),
            divergence_norm: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximalState {
    pub slot: usize,
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_prev: Vec<f64>,
}

impl ProximalState {
    pub fn initial(inst: &NetworkInstance) -> Self {
        Self {
            slot: 0,
            x: vec![0.0; inst.n_flows()],
            r: vec![0.0; inst.n_link_vars()],
            lambda: vec![0.0; inst.n_rows()],
            lambda_prev: vec![0.0; inst.n_rows()],
        }
    }
}

/// One Jacobi slot: both primal blocks read slot `t−1` values.
///
/// The x-block maximizes `ΣU(x) − (ρ/2)‖Bx + Ar[t−1] − λ[t−1]/ρ‖²`; the
/// r-block linearizes the augmented term at `(x[t−1], r[t−1])`, which with
/// the proximal weight `Q = ρ(M − AᵀA)` leaves per-link routing with
/// `z = λ[t−1] − ρ(Bx[t−1] + Ar[t−1])`.
pub fn proximal_slot(
    inst: &NetworkInstance,
    state: &ProximalState,
    rho: f64,
    beta: &[f64],
) -> Result<ProximalState> {
    if inst.interference() != Interference::Wireline {
        return Err(Error::InvalidParameter(
            "the proximal method is defined for wireline networks only".into(),
        ));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    check_len("lambda", inst.n_rows(), state.lambda.len())?;
    let residual = inst.conservation_residual(&state.x, &state.r)?;

    let x: Vec<f64> = inst
        .flows()
        .iter()
        .enumerate()
        .map(|(f, flow)| {
            let row = inst.source_row(f);
            // (A_s r[t−1])_f = residual_row + x_f[t−1]
            let a_s_r = residual[row] + state.x[f];
            let a = state.lambda[row] - rho * a_s_r;
            congestion_step(&flow.utility, a, 0.0, rho, rate_box(inst, f))
        })
        .collect::<Result<_>>()?;

    let z: Vec<f64> = state
        .lambda
        .iter()
        .zip(&residual)
        .map(|(l, res)| l - rho * res)
        .collect();
    let r = route_all(
        inst,
        &inst.apply_a_transpose(&z),
        &state.r,
        rho,
        beta,
        inst.capacities(),
    )?;
    let lambda = virtual_queue_update(inst, &state.lambda, &x, &r, rho, 1.0)?;
    Ok(ProximalState {
        slot: state.slot + 1,
        x,
        r,
        lambda,
        lambda_prev: state.lambda.clone(),
    })
}

#[derive(Debug)]
pub struct ProximalSolver {
    inst: NetworkInstance,
    params: ProximalParams,
    beta: Vec<f64>,
    state: ProximalState,
}

impl ProximalSolver {
    pub fn new(inst: NetworkInstance, params: ProximalParams) -> Result<Self> {
        if inst.interference() != Interference::Wireline {
            return Err(Error::InvalidParameter(
                "the proximal method is defined for wireline networks only".into(),
            ));
        }
        let beta = params.beta.resolve(&inst)?;
        let state = ProximalState::initial(&inst);
        Ok(Self {
            inst,
            params,
            beta,
            state,
        })
    }

    pub fn with_state(mut self, state: ProximalState) -> Self {
        self.state = state;
        self
    }

    pub fn step(&mut self) -> Result<()> {
        let slot = self.state.slot + 1;
        let next =
            proximal_slot(&self.inst, &self.state, self.params.rho, &self.beta).map_err(|e| {
                Error::Slot {
                    slot,
                    source: Box::new(e),
                }
            })?;
        let norm = next.lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= self.params.divergence_norm) {
            return Err(Error::Diverged { slot, norm });
        }
        self.state = next;
        Ok(())
    }

    pub fn state(&self) -> &ProximalState {
        &self.state
    }

    pub fn instance(&self) -> &NetworkInstance {
        &self.inst
    }

    pub fn params(&self) -> &ProximalParams {
        &self.params
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn set_capacities(&mut self, capacities: Vec<f64>) -> Result<()> {
        self.inst = self.inst.with_capacities(capacities)?;
        Ok(())
    }
}
