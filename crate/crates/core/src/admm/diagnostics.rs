//! Runtime certificates: the Lyapunov function of the sufficient-descent
//! argument and the proximal KKT residual.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AdmmParams, AdmmSolver, TAU_LIMIT};
use crate::capacity::CapacityRegion;
use crate::error::{check_len, Error, Result};
use crate::network::NetworkInstance;
use crate::routing::project_capped_simplex;
use crate::scheduling::{solve_scheduling_qp, SchedulingOptions, SchedulingProblem};

/// η for the Lyapunov diagnostic: the midpoint of the interval
/// `(1/(2−τ), 1/(1−τ)²)` on which both descent coefficients are positive,
/// and 2 at τ = 1 where the interval is unbounded.
pub fn default_eta(tau: f64) -> f64 {
    if tau <= 1.0 || tau >= TAU_LIMIT {
        return 2.0;
    }
    let lo = 1.0 / (2.0 - tau);
    let hi = 1.0 / ((1.0 - tau) * (1.0 - tau));
    0.5 * (lo + hi)
}

/// Smallest eigenvalue of `M − AᵀA` with `M = diag(β)` repeated per
/// destination; errors unless it is positive.
pub fn check_proximal_term(inst: &NetworkInstance, beta: &[f64]) -> Result<f64> {
    check_len("beta", inst.n_links(), beta.len())?;
    let l_count = inst.n_links();
    let rows = inst.n_nodes() - 1;
    let a = inst.incidence().a;
    let mut min_eig = f64::INFINITY;
    for k in 0..inst.n_destinations() {
        let block = a.view((k * rows, k * l_count), (rows, l_count));
        let mut q: DMatrix<f64> = -(block.transpose() * block);
        for l in 0..l_count {
            q[(l, l)] += beta[l];
        }
        let eig = q.symmetric_eigenvalues().min();
        min_eig = min_eig.min(eig);
    }
    if min_eig > 0.0 {
        Ok(min_eig)
    } else {
        Err(Error::NotPositiveDefinite {
            min_eigenvalue: min_eig,
        })
    }
}

/// `‖δ‖²_Q` with `Q = ρ(M − AᵀA)`.
fn q_norm_sq(inst: &NetworkInstance, beta: &[f64], rho: f64, delta: &[f64]) -> f64 {
    let l_count = inst.n_links();
    let diag: f64 = delta
        .iter()
        .enumerate()
        .map(|(i, d)| beta[i % l_count] * d * d)
        .sum();
    let ad: f64 = inst.apply_a(delta).iter().map(|v| v * v).sum();
    rho * (diag - ad)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A certified saddle point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Slots used to compute it.
    pub slots: usize,
    /// KKT residual at `x* = x`.
    pub kkt: f64,
}

impl Reference {
    pub fn utility(&self, inst: &NetworkInstance) -> Result<f64> {
        total_utility(inst, &self.x)
    }
}

/// `Σ_f U_f(x_f)`.
pub fn total_utility(inst: &NetworkInstance, x: &[f64]) -> Result<f64> {
    check_len("injection rates", inst.n_flows(), x.len())?;
    inst.flows()
        .iter()
        .zip(x)
        .map(|(f, &xf)| f.utility.value(xf))
        .sum()
}

/// `V = (1/ρτ)‖λ−λ*‖² + ρ‖x−x*‖² + ‖r−r*‖²_Q + (ρ/η)‖A_s r − x‖²`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_value(
    inst: &NetworkInstance,
    x: &[f64],
    r: &[f64],
    lambda: &[f64],
    reference: &Reference,
    params: &AdmmParams,
    beta: &[f64],
) -> Result<f64> {
    check_len("lambda", inst.n_rows(), lambda.len())?;
    check_len("reference lambda", inst.n_rows(), reference.lambda.len())?;
    check_len("reference rates", inst.n_link_vars(), reference.r.len())?;
    let rho = params.rho;
    let residual = inst.conservation_residual(x, r)?;
    let source_gap: f64 = (0..inst.n_flows())
        .map(|f| residual[inst.source_row(f)].powi(2))
        .sum();
    let dr: Vec<f64> = r.iter().zip(&reference.r).map(|(a, b)| a - b).collect();
    Ok(dist_sq(lambda, &reference.lambda) / (rho * params.tau)
        + rho * dist_sq(x, &reference.x)
        + q_norm_sq(inst, beta, rho, &dr)
        + rho / params.eta() * source_gap)
}

/// Euclidean projection onto the feasible link-rate set of the region.
pub fn project_rates(
    inst: &NetworkInstance,
    region: &CapacityRegion,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_len("link rates", inst.n_link_vars(), u.len())?;
    let l_count = inst.n_links();
    let d_count = inst.n_destinations();
    match region {
        CapacityRegion::Wireline(caps) => {
            let mut out = vec![0.0; u.len()];
            let mut v = vec![0.0; d_count];
            for (l, &c) in caps.capacities().iter().enumerate() {
                for (k, vk) in v.iter_mut().enumerate() {
                    *vk = u[inst.var(l, k)];
                }
                let (p, _) = project_capped_simplex(&v, c);
                for (k, pk) in p.into_iter().enumerate() {
                    out[inst.var(l, k)] = pk;
                }
            }
            Ok(out)
        }
        CapacityRegion::Wireless(oracle) => {
            let zeros = vec![0.0; u.len()];
            let ones = vec![1.0; l_count];
            let prob = SchedulingProblem {
                n_links: l_count,
                n_destinations: d_count,
                linear: &zeros,
                anchor: u,
                curvature: &ones,
            };
            Ok(solve_scheduling_qp(&prob, oracle.as_ref(), SchedulingOptions::with_tol(1e-14))?.r)
        }
    }
}

/// Norm of the stacked KKT map
/// `(x − Pr_h(x + ∇U(x*) − λ_s), r − Pr_g(r + Aᵀλ), Bx + Ar, x − x*)`.
pub fn kkt_residual(
    inst: &NetworkInstance,
    region: &CapacityRegion,
    x: &[f64],
    r: &[f64],
    lambda: &[f64],
    x_star: &[f64],
) -> Result<f64> {
    check_len("lambda", inst.n_rows(), lambda.len())?;
    check_len("reference injection rates", inst.n_flows(), x_star.len())?;
    let mut total = 0.0;
    for (f, flow) in inst.flows().iter().enumerate() {
        let grad = flow.utility.grad(x_star[f])?;
        let moved = (x[f] + grad - lambda[inst.source_row(f)]).clamp(flow.min_rate, flow.max_rate);
        total += (x[f] - moved).powi(2);
        total += (x[f] - x_star[f]).powi(2);
    }
    let at = inst.apply_a_transpose(lambda);
    let u: Vec<f64> = r.iter().zip(&at).map(|(a, b)| a + b).collect();
    total += dist_sq(r, &project_rates(inst, region, &u)?);
    total += inst
        .conservation_residual(x, r)?
        .iter()
        .map(|v| v * v)
        .sum::<f64>();
    Ok(total.sqrt())
}

/// Limits for [`reference_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceOptions {
    pub tight_tol: f64,
    pub max_slots: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            tight_tol: 1e-10,
            max_slots: 200_000,
        }
    }
}

/// Runs the algorithm from the empty network until the KKT residual, taken
/// at `x* = x`, drops to `tight_tol`.
pub fn reference_solve(
    inst: &NetworkInstance,
    params: &AdmmParams,
    opts: ReferenceOptions,
) -> Result<Reference> {
    let mut solver = AdmmSolver::new(inst.clone(), params.clone())?;
    let rho_tau = params.rho * params.tau;
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_slots {
        solver.step()?;
        let s = solver.state();
        // ‖Bx + Ar‖ is one block of the KKT map, so it gates the full check
        let residual = dist_sq(&s.lambda, &s.lambda_prev).sqrt() / rho_tau;
        if residual > opts.tight_tol {
            last = residual;
            continue;
        }
        let kkt = kkt_residual(inst, solver.region(), &s.x, &s.r, &s.lambda, &s.x)?;
        last = kkt;
        if kkt <= opts.tight_tol {
            return Ok(Reference {
                x: s.x.clone(),
                r: s.r.clone(),
                lambda: s.lambda.clone(),
                slots: s.slot,
                kkt,
            });
        }
    }
    Err(Error::NotConverged {
        slots: opts.max_slots,
        residual: last,
    })
}
