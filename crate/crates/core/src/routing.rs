//! Per-link backpressure routing with a proximal term.
//!
//! Each link solves
//! `max Σ_d a_d r_d − (ρβ/2)(r_d − r_d[t−1])²  s.t. r ≥ 0, Σ_d r_d ≤ C`,
//! which is the Euclidean projection of `r[t−1] + a/(ρβ)` onto the capped
//! simplex `{r ≥ 0, Σ r ≤ C}`.

use crate::error::{check_len, Error, Result};
use crate::network::NetworkInstance;

/// Projection of `v` onto `{r ≥ 0, Σ r ≤ cap}` by sorting; returns the
/// projection and the threshold θ (zero when the cap is slack).
pub fn project_capped_simplex(v: &[f64], cap: f64) -> (Vec<f64>, f64) {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= cap {
        return (clipped, 0.0);
    }
    let mut sorted = clipped.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // pivot: largest k with v_(k) − (S_k − C)/k > 0; k = 1 always qualifies
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        prefix += s;
        let candidate = (prefix - cap) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    let r = clipped.iter().map(|&x| (x - theta).max(0.0)).collect();
    (r, theta)
}

/// One link's routing problem.
#[derive(Debug, Clone, Copy)]
pub struct LinkRouteProblem<'a> {
    /// `z_m^d − z_n^d` per destination.
    pub weight_diff: &'a [f64],
    /// `r^d[t−1]` per destination.
    pub prev: &'a [f64],
    /// `ρ·β` for this link.
    pub rho_beta: f64,
    pub capacity: f64,
}

impl LinkRouteProblem<'_> {
    /// The maximized objective at `r`.
    pub fn objective(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(self.weight_diff)
            .zip(self.prev)
            .map(|((&r, &a), &b)| a * r - 0.5 * self.rho_beta * (r - b) * (r - b))
            .sum()
    }
}

pub fn route_link(prob: &LinkRouteProblem<'_>) -> Result<Vec<f64>> {
    if !(prob.rho_beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho * beta must be positive, got {}",
            prob.rho_beta
        )));
    }
    check_len(
        "previous link rates",
        prob.weight_diff.len(),
        prob.prev.len(),
    )?;
    let v: Vec<f64> = prob
        .prev
        .iter()
        .zip(prob.weight_diff)
        .map(|(&b, &a)| b + a / prob.rho_beta)
        .collect();
    Ok(project_capped_simplex(&v, prob.capacity).0)
}

/// Routes every link. `weight_diff` and `prev` use the destination-major
/// link-rate layout; `capacities` and `beta` are per link.
pub fn route_all(
    inst: &NetworkInstance,
    weight_diff: &[f64],
    prev: &[f64],
    rho: f64,
    beta: &[f64],
    capacities: &[f64],
) -> Result<Vec<f64>> {
    let l_count = inst.n_links();
    let d_count = inst.n_destinations();
    check_len(
        "weight differentials",
        inst.n_link_vars(),
        weight_diff.len(),
    )?;
    check_len("previous link rates", inst.n_link_vars(), prev.len())?;
    check_len("beta", l_count, beta.len())?;
    check_len("capacities", l_count, capacities.len())?;
    let mut out = vec![0.0; inst.n_link_vars()];
    let mut a = vec![0.0; d_count];
    let mut b = vec![0.0; d_count];
    for l in 0..l_count {
        for k in 0..d_count {
            a[k] = weight_diff[inst.var(l, k)];
            b[k] = prev[inst.var(l, k)];
        }
        let r = route_link(&LinkRouteProblem {
            weight_diff: &a,
            prev: &b,
            rho_beta: rho * beta[l],
            capacity: capacities[l],
        })?;
        for k in 0..d_count {
            out[inst.var(l, k)] = r[k];
        }
    }
    Ok(out)
}
