//! Reference oracles shared by the integration tests. Each one solves its
//! problem by a route unrelated to the library code it checks.

#![allow(dead_code)]

use netopt_core::capacity::FeasibleRateSet;
use netopt_core::network::{FlowSpec, Interference, Link, NetworkGraph, NetworkInstance};
use netopt_core::utility::UtilitySpec;
use rand::seq::SliceRandom;
use rand::Rng;

/// Projection onto `{r >= 0, Σr <= cap}` by bisection on the multiplier of
/// the sum constraint.
pub fn capped_simplex_oracle(v: &[f64], cap: f64) -> Vec<f64> {
    let shifted = |theta: f64| -> Vec<f64> { v.iter().map(|&a| (a - theta).max(0.0)).collect() };
    let total = |theta: f64| shifted(theta).iter().sum::<f64>();
    if total(0.0) <= cap {
        return shifted(0.0);
    }
    let (mut lo, mut hi) = (0.0, v.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shifted(0.5 * (lo + hi))
}

/// KKT residual of `r` for `min ½‖r − v‖²` on the capped simplex, with the
/// multiplier of the sum constraint recovered from the support of `r`.
pub fn projection_stationarity(v: &[f64], cap: f64, r: &[f64]) -> f64 {
    let support: Vec<usize> = (0..r.len()).filter(|&i| r[i] > 0.0).collect();
    let theta = if support.is_empty() {
        0.0
    } else {
        (support.iter().map(|&i| v[i] - r[i]).sum::<f64>() / support.len() as f64).max(0.0)
    };
    let mut res = 0.0;
    for i in 0..r.len() {
        let want = (v[i] - theta).max(0.0);
        res += (r[i] - want).powi(2);
    }
    let sum: f64 = r.iter().sum();
    res += (sum - cap).max(0.0).powi(2);
    if theta > 0.0 {
        res += (sum - cap).powi(2);
    }
    res.sqrt()
}

/// `max Σ_l w_l C_l` over node-disjoint link sets, by exhaustive subsets.
pub fn brute_force_maxweight(graph: &NetworkGraph, caps: &[f64], w: &[f64]) -> f64 {
    let l_count = graph.n_links();
    assert!(l_count <= 20);
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << l_count) {
        let mut used = vec![false; graph.n_nodes()];
        let mut ok = true;
        let mut value = 0.0;
        for l in 0..l_count {
            if mask & (1 << l) == 0 {
                continue;
            }
            let link = graph.link(l);
            if used[link.tx] || used[link.rx] {
                ok = false;
                break;
            }
            used[link.tx] = true;
            used[link.rx] = true;
            value += w[l] * caps[l];
        }
        if ok {
            best = best.max(value);
        }
    }
    best
}

/// Data of a scheduling QP, owned.
#[derive(Debug, Clone)]
pub struct ScheduleData {
    pub n_links: usize,
    pub n_destinations: usize,
    pub linear: Vec<f64>,
    pub anchor: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl ScheduleData {
    pub fn random<R: Rng>(rng: &mut R, n_links: usize, n_destinations: usize) -> Self {
        let n = n_links * n_destinations;
        Self {
            n_links,
            n_destinations,
            linear: (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect(),
            anchor: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            curvature: (0..n_links).map(|_| rng.gen_range(0.5..4.0)).collect(),
        }
    }

    /// Best value of link `l` given total rate `y`, and the multiplier ψ of
    /// `Σ_d r_d <= y`.
    fn link_value(&self, l: usize, y: f64) -> (f64, f64) {
        let c = self.curvature[l];
        let idx: Vec<usize> = (0..self.n_destinations)
            .map(|d| d * self.n_links + l)
            .collect();
        let r_at = |psi: f64| -> Vec<f64> {
            idx.iter()
                .map(|&i| (self.anchor[i] + (self.linear[i] - psi) / c).max(0.0))
                .collect()
        };
        let mut psi = 0.0;
        if r_at(0.0).iter().sum::<f64>() > y {
            let mut lo = 0.0;
            let mut hi = idx
                .iter()
                .map(|&i| self.linear[i] + c * self.anchor[i])
                .fold(0.0, f64::max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if r_at(mid).iter().sum::<f64>() > y {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            psi = 0.5 * (lo + hi);
        }
        let r = r_at(psi);
        let value = idx
            .iter()
            .zip(&r)
            .map(|(&i, &v)| self.linear[i] * v - 0.5 * c * (v - self.anchor[i]).powi(2))
            .sum();
        (value, psi)
    }

    /// Value and gradient of `h(w) = max {f(r) : Σ_d r_l^d <= (Σ_a w_a atom_a)_l}`.
    fn hull_value(&self, atoms: &[Vec<f64>], w: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut psi = vec![0.0; self.n_links];
        for l in 0..self.n_links {
            let y: f64 = atoms.iter().zip(w).map(|(a, &wa)| wa * a[l]).sum();
            let (v, p) = self.link_value(l, y);
            value += v;
            psi[l] = p;
        }
        let grad = atoms
            .iter()
            .map(|a| a.iter().zip(&psi).map(|(x, p)| x * p).sum())
            .collect();
        (value, grad)
    }
}

/// Euclidean projection onto the probability simplex, by bisection.
fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let total = |theta: f64| v.iter().map(|&a| (a - theta).max(0.0)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter().map(|&a| (a - theta).max(0.0)).collect()
}

/// Optimal value of the scheduling QP over the convex hull of `atoms`, by
/// restarted accelerated projected gradient on the mixing weights. Stops at
/// a certified gap of `tol`.
pub fn dense_schedule_oracle(data: &ScheduleData, atoms: &[Vec<f64>], tol: f64) -> f64 {
    let m = atoms.len();
    let fro: f64 = atoms.iter().flatten().map(|a| a * a).sum();
    let c_max = data.curvature.iter().cloned().fold(0.0, f64::max);
    let step = 1.0 / (c_max * fro).max(1e-12);
    let mut w = vec![1.0 / m as f64; m];
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut best = f64::NEG_INFINITY;
    let mut last = f64::NEG_INFINITY;
    for _ in 0..500_000 {
        let (_, grad) = data.hull_value(atoms, &z);
        let moved: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let w_next = simplex_projection(&moved);
        let (value, g_next) = data.hull_value(atoms, &w_next);
        best = best.max(value);
        // ascent certificate: max_a ∂h/∂w_a − ⟨∂h, w⟩ bounds h* − h(w)
        let lin: f64 = g_next.iter().zip(&w_next).map(|(g, x)| g * x).sum();
        let gap = g_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lin;
        if gap <= tol {
            return best;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if value < last {
            // restart momentum
            t = 1.0;
            z = w_next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            z = w_next
                .iter()
                .zip(&w)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
            t = t_next;
        }
        last = value;
        w = w_next;
    }
    panic!("dense oracle did not reach gap {tol}");
}

/// Random directed graph with `n_links` distinct links and no self loops.
pub fn random_graph<R: Rng>(rng: &mut R, n_nodes: usize, n_links: usize) -> NetworkGraph {
    let mut pairs: Vec<(usize, usize)> = (0..n_nodes)
        .flat_map(|i| (0..n_nodes).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(rng);
    let links = pairs[..n_links]
        .iter()
        .map(|&(tx, rx)| Link { tx, rx })
        .collect();
    NetworkGraph::new(n_nodes, links).unwrap()
}

pub fn random_node_exclusive<R: Rng>(
    rng: &mut R,
    max_links: usize,
) -> (NetworkGraph, Vec<f64>, FeasibleRateSet) {
    let n_nodes = rng.gen_range(3..=6);
    let n_links = rng.gen_range(1..=max_links.min(n_nodes * (n_nodes - 1)));
    let g = random_graph(rng, n_nodes, n_links);
    let caps: Vec<f64> = (0..n_links).map(|_| rng.gen_range(0.2..2.0)).collect();
    let set = FeasibleRateSet::node_exclusive(&g, &caps).unwrap();
    (g, caps, set)
}

/// Bidirectional ring with a chord, one log-utility flow per listed pair.
pub fn ring_instance(
    n: usize,
    flows: &[(usize, usize)],
    interference: Interference,
) -> NetworkInstance {
    let mut links = Vec::new();
    for i in 0..n {
        links.push(Link {
            tx: i,
            rx: (i + 1) % n,
        });
        links.push(Link {
            tx: (i + 1) % n,
            rx: i,
        });
    }
    let caps = (0..links.len())
        .map(|l| 0.5 + 0.25 * (l % 3) as f64)
        .collect();
    let g = NetworkGraph::new(n, links).unwrap();
    let flows = flows
        .iter()
        .enumerate()
        .map(|(i, &(source, destination))| FlowSpec {
            source,
            destination,
            min_rate: 1e-3,
            max_rate: 10.0,
            utility: UtilitySpec::WeightedLog {
                weight: 1.0 + 0.5 * i as f64,
            },
        })
        .collect();
    NetworkInstance::new(g, flows, caps, interference).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
