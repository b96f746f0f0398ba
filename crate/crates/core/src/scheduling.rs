//! Interference-coupled scheduling step over `conv(Γ)`.
//!
//! Solves
//! `max Σ_{l,d} a_l^d r_l^d − (c_l/2)(r_l^d − b_l^d)²`
//! over `P = {(y, r) : y ∈ conv(Γ), Σ_d r_l^d = y_l, r ≥ 0}` with pairwise
//! Frank–Wolfe. Γ is reached only through a [`MaxWeightOracle`]: a vertex of
//! `P` is an atom with every active link assigned to one destination, and the
//! linear subproblem picks, per link, the destination with the largest
//! gradient, then calls the oracle on the clipped per-link scores. Γ must be
//! downward closed so that links with a nonpositive score can be switched
//! off.

use serde::Serialize;

use crate::capacity::MaxWeightOracle;
use crate::error::{check_len, Error, Result};
use crate::routing::project_capped_simplex;

/// Per-link data of the scheduling QP. Vectors over `(l, d)` use the
/// destination-major layout `d * L + l`.
#[derive(Debug, Clone)]
pub struct SchedulingProblem<'a> {
    pub n_links: usize,
    pub n_destinations: usize,
    /// Linear coefficients `a_l^d`.
    pub linear: &'a [f64],
    /// Anchors `b_l^d`.
    pub anchor: &'a [f64],
    /// Curvature `c_l > 0` per link.
    pub curvature: &'a [f64],
}

impl SchedulingProblem<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.n_links * self.n_destinations;
        check_len("linear coefficients", n, self.linear.len())?;
        check_len("anchors", n, self.anchor.len())?;
        check_len("curvature", self.n_links, self.curvature.len())?;
        if let Some(c) = self
            .curvature
            .iter()
            .find(|c| !(**c > 0.0 && c.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "scheduling curvature must be positive, got {c}"
            )));
        }
        Ok(())
    }

    pub fn objective(&self, r: &[f64]) -> f64 {
        let l_count = self.n_links;
        r.iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = self.curvature[i % l_count];
                let dv = v - self.anchor[i];
                self.linear[i] * v - 0.5 * c * dv * dv
            })
            .sum()
    }

    fn gradient(&self, r: &[f64], out: &mut [f64]) {
        let l_count = self.n_links;
        for (i, g) in out.iter_mut().enumerate() {
            *g = self.linear[i] - self.curvature[i % l_count] * (r[i] - self.anchor[i]);
        }
    }
}

/// Limits for [`solve_scheduling_qp`].
#[derive(Debug, Clone, Copy)]
pub struct SchedulingOptions {
    /// Frank–Wolfe gap at which to stop; must be positive.
    pub tol: f64,
    pub max_iterations: usize,
}

impl SchedulingOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iterations: 200_000,
        }
    }
}

/// Solution of the scheduling QP with its time-sharing certificate.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSolution {
    /// `r_l^d`, destination-major.
    pub r: Vec<f64>,
    /// `y_l = Σ_d r_l^d`.
    pub y: Vec<f64>,
    /// At most `L + 1` atoms of Γ ...
    pub atoms: Vec<Vec<f64>>,
    /// ... and convex weights with `Σ_i tau_i atoms_i = y`.
    pub tau: Vec<f64>,
    pub objective: f64,
    /// Frank–Wolfe gap at termination; bounds the suboptimality.
    pub gap: f64,
    pub iterations: usize,
    pub oracle_calls: usize,
}

impl ScheduleSolution {
    /// JSON dump `{atoms, tau, y, r}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            atoms: &'a [Vec<f64>],
            tau: &'a [f64],
            y: &'a [f64],
            r: &'a [f64],
        }
        Ok(serde_json::to_string(&Dump {
            atoms: &self.atoms,
            tau: &self.tau,
            y: &self.y,
            r: &self.r,
        })?)
    }
}

/// A vertex of `P`: an atom with a destination per active link.
#[derive(Debug, Clone)]
struct Vertex {
    atom: Vec<f64>,
    /// `(var index, value)` of the nonzero entries of r.
    entries: Vec<(usize, f64)>,
    weight: f64,
}

impl Vertex {
    fn dot(&self, g: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| g[i] * v).sum()
    }

    fn same_point(&self, other: &[(usize, f64)]) -> bool {
        self.entries == other
    }
}

/// Linear maximization of `<g, r>` over `P` with one oracle call.
fn linear_oracle(
    prob: &SchedulingProblem<'_>,
    oracle: &dyn MaxWeightOracle,
    g: &[f64],
) -> (Vec<f64>, Vec<(usize, f64)>) {
    let l_count = prob.n_links;
    let mut best_dest = vec![0usize; l_count];
    let mut scores = vec![0.0; l_count];
    for l in 0..l_count {
        let mut best = f64::NEG_INFINITY;
        for k in 0..prob.n_destinations {
            let v = g[k * l_count + l];
            if v > best {
                best = v;
                best_dest[l] = k;
            }
        }
        scores[l] = best.max(0.0);
    }
    let mut atom = oracle.maxweight(&scores);
    let mut entries = Vec::new();
    for l in 0..l_count {
        if scores[l] > 0.0 && atom[l] > 0.0 {
            entries.push((best_dest[l] * l_count + l, atom[l]));
        } else {
            atom[l] = 0.0;
        }
    }
    entries.sort_by_key(|e| e.0);
    (atom, entries)
}

/// Pairwise Frank–Wolfe from the empty schedule, followed by a Carathéodory
/// reduction of the visited atoms.
pub fn solve_scheduling_qp(
    prob: &SchedulingProblem<'_>,
    oracle: &dyn MaxWeightOracle,
    opts: SchedulingOptions,
) -> Result<ScheduleSolution> {
    prob.validate()?;
    check_len("oracle links", prob.n_links, oracle.n_links())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scheduling tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let calls_before = oracle.calls();
    let l_count = prob.n_links;
    let n = l_count * prob.n_destinations;

    let mut active = vec![Vertex {
        atom: vec![0.0; l_count],
        entries: Vec::new(),
        weight: 1.0,
    }];
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        prob.gradient(&r, &mut g);
        let (atom, entries) = linear_oracle(prob, oracle, &g);
        let s_dot: f64 = entries.iter().map(|&(i, v)| g[i] * v).sum();
        let r_dot: f64 = r.iter().zip(&g).map(|(a, b)| a * b).sum();
        gap = s_dot - r_dot;
        if gap <= opts.tol {
            break;
        }
        iterations += 1;

        // away vertex: worst active vertex along g
        let (away, _) = active.iter().enumerate().map(|(i, v)| (i, v.dot(&g))).fold(
            (0, f64::INFINITY),
            |acc, cur| if cur.1 < acc.1 { cur } else { acc },
        );
        let toward = match active.iter().position(|v| v.same_point(&entries)) {
            Some(i) => i,
            None => {
                active.push(Vertex {
                    atom,
                    entries,
                    weight: 0.0,
                });
                active.len() - 1
            }
        };
        if toward == away {
            // s is already the worst active vertex: no pairwise progress left
            break;
        }

        // d = s − v over the union of supports
        let mut dir: Vec<(usize, f64)> = active[toward].entries.clone();
        for &(i, v) in &active[away].entries {
            match dir.iter_mut().find(|e| e.0 == i) {
                Some(e) => e.1 -= v,
                None => dir.push((i, -v)),
            }
        }
        let slope: f64 = dir.iter().map(|&(i, d)| g[i] * d).sum();
        let curv: f64 = dir
            .iter()
            .map(|&(i, d)| prob.curvature[i % l_count] * d * d)
            .sum();
        let gamma_max = active[away].weight;
        let gamma = if curv > 0.0 {
            (slope / curv).clamp(0.0, gamma_max)
        } else {
            gamma_max
        };
        if gamma <= 0.0 {
            break;
        }
        for &(i, d) in &dir {
            r[i] += gamma * d;
        }
        active[toward].weight += gamma;
        if gamma >= gamma_max {
            active.swap_remove(away);
        } else {
            active[away].weight -= gamma;
        }
    }
    if gap > opts.tol {
        return Err(Error::SchedulingNotConverged {
            tol: opts.tol,
            gap,
            iterations,
        });
    }

    // rebuild r and y from the active set so that Σ_d r = y holds exactly per vertex sum
    let mut r = vec![0.0; n];
    let mut y = vec![0.0; l_count];
    for v in &active {
        for &(i, val) in &v.entries {
            r[i] += v.weight * val;
        }
        for (yl, a) in y.iter_mut().zip(&v.atom) {
            *yl += v.weight * a;
        }
    }

    // merge vertices that share an atom
    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for v in active.into_iter().filter(|v| v.weight > 0.0) {
        match atoms.iter().position(|a| *a == v.atom) {
            Some(i) => weights[i] += v.weight,
            None => {
                atoms.push(v.atom);
                weights.push(v.weight);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let (atoms, tau) = caratheodory_reduce(atoms, weights, &y)?;
    let objective = prob.objective(&r);
    Ok(ScheduleSolution {
        r,
        y,
        atoms,
        tau,
        objective,
        gap,
        iterations,
        oracle_calls: oracle.calls() - calls_before,
    })
}

const DECOMPOSITION_TOL: f64 = 1e-9;

fn reconstruction_error(atoms: &[Vec<f64>], weights: &[f64], target: &[f64]) -> f64 {
    let mut err: f64 = (weights.iter().sum::<f64>() - 1.0).abs();
    for (l, &t) in target.iter().enumerate() {
        let v: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a[l]).sum();
        err = err.max((v - t).abs());
    }
    err
}

/// Reduces a convex combination of atoms to at most `L + 1` atoms with the
/// same barycenter, eliminating one atom per null-space step.
pub fn caratheodory_reduce(
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    target: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_len("decomposition weights", atoms.len(), weights.len())?;
    for a in &atoms {
        check_len("atom", target.len(), a.len())?;
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidParameter(
            "decomposition weights must be nonnegative".into(),
        ));
    }
    let error = reconstruction_error(&atoms, &weights, target);
    if error > DECOMPOSITION_TOL {
        return Err(Error::BadDecomposition { error });
    }
    let (mut atoms, mut weights): (Vec<_>, Vec<_>) = atoms
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .unzip();
    let dim = target.len() + 1;
    while atoms.len() > dim {
        // lifted columns (atom, 1) of the first dim + 1 atoms
        let cols = dim + 1;
        let mu = null_vector(
            dim,
            cols,
            |row, col| {
                if row < dim - 1 {
                    atoms[col][row]
                } else {
                    1.0
                }
            },
        );
        let mut step = f64::INFINITY;
        let mut drop = 0;
        for i in 0..cols {
            if mu[i] > 0.0 && weights[i] / mu[i] < step {
                step = weights[i] / mu[i];
                drop = i;
            }
        }
        for i in 0..cols {
            weights[i] = (weights[i] - step * mu[i]).max(0.0);
        }
        weights[drop] = 0.0;
        let mut i = 0;
        while i < atoms.len() {
            if weights[i] <= 0.0 {
                atoms.swap_remove(i);
                weights.swap_remove(i);
            } else {
                i += 1;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let error = reconstruction_error(&atoms, &weights, target);
    if error > DECOMPOSITION_TOL {
        return Err(Error::BadDecomposition { error });
    }
    Ok((atoms, weights))
}

/// A nonzero vector in the null space of a `rows × cols` matrix with
/// `cols > rows`, by Gaussian elimination with partial pivoting.
fn null_vector(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..rows)
        .map(|i| (0..cols).map(|j| entry(i, j)).collect())
        .collect();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let eps = 1e-12 * scale;
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let (best, best_val) =
            (row..rows)
                .map(|i| (i, m[i][col].abs()))
                .fold(
                    (row, -1.0),
                    |acc, cur| if cur.1 > acc.1 { cur } else { acc },
                );
        if best_val <= eps {
            continue;
        }
        m.swap(row, best);
        let p = m[row][col];
        for v in m[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[row].clone();
        for (i, r) in m.iter_mut().enumerate() {
            if i != row && r[col] != 0.0 {
                let f = r[col];
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free = (0..cols)
        .find(|c| !pivot_cols.contains(c))
        .expect("more columns than rows");
    let mut mu = vec![0.0; cols];
    mu[free] = 1.0;
    for (r, &pc) in pivot_cols.iter().enumerate() {
        mu[pc] = -m[r][free];
    }
    mu
}

/// Splits a link total `y` across destinations: the projection of `scores`
/// onto `{r ≥ 0, Σ r ≤ y}`.
pub fn split_rates(y: f64, scores: &[f64]) -> Vec<f64> {
    if y <= 0.0 {
        return vec![0.0; scores.len()];
    }
    project_capped_simplex(scores, y).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{EnumeratedOracle, FeasibleRateSet};
    use crate::network::{Link, NetworkGraph};

    fn path_oracle() -> EnumeratedOracle {
        let g = NetworkGraph::new(3, vec![Link { tx: 0, rx: 1 }, Link { tx: 1, rx: 2 }]).unwrap();
        EnumeratedOracle::new(FeasibleRateSet::node_exclusive(&g, &[1.0, 1.0]).unwrap())
    }

    #[test]
    fn single_link_hits_capacity() {
        let set = FeasibleRateSet::from_atoms(1, vec![vec![0.0], vec![1.0]]).unwrap();
        let oracle = EnumeratedOracle::new(set);
        let prob = SchedulingProblem {
            n_links: 1,
            n_destinations: 1,
            linear: &[3.0],
            anchor: &[0.0],
            curvature: &[3.0],
        };
        let sol = solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(1e-12)).unwrap();
        assert!((sol.r[0] - 1.0).abs() < 1e-12);
        assert!((sol.y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interior_optimum_on_single_link() {
        let set = FeasibleRateSet::from_atoms(1, vec![vec![0.0], vec![1.0]]).unwrap();
        let oracle = EnumeratedOracle::new(set);
        let prob = SchedulingProblem {
            n_links: 1,
            n_destinations: 1,
            linear: &[1.2],
            anchor: &[0.0],
            curvature: &[3.0],
        };
        let sol = solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(1e-12)).unwrap();
        assert!((sol.r[0] - 0.4).abs() < 1e-10);
        assert_eq!(sol.atoms.len(), 2);
    }

    #[test]
    fn nonpositive_weights_give_empty_schedule() {
        let oracle = path_oracle();
        let prob = SchedulingProblem {
            n_links: 2,
            n_destinations: 2,
            linear: &[-1.0, 0.0, -0.5, -2.0],
            anchor: &[0.0; 4],
            curvature: &[1.0, 1.0],
        };
        let sol = solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(1e-10)).unwrap();
        assert!(sol.r.iter().all(|&v| v == 0.0));
        assert_eq!(sol.atoms, vec![vec![0.0, 0.0]]);
        assert_eq!(sol.tau, vec![1.0]);
        assert_eq!(sol.oracle_calls, 1);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let oracle = path_oracle();
        let prob = SchedulingProblem {
            n_links: 2,
            n_destinations: 1,
            linear: &[1.0, 1.0],
            anchor: &[0.0; 2],
            curvature: &[1.0, 1.0],
        };
        assert!(solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(0.0)).is_err());
    }

    #[test]
    fn exclusive_links_time_share() {
        // symmetric pull on two conflicting links: optimum y = (1/2, 1/2)
        let oracle = path_oracle();
        let prob = SchedulingProblem {
            n_links: 2,
            n_destinations: 1,
            linear: &[10.0, 10.0],
            anchor: &[0.0; 2],
            curvature: &[1.0, 1.0],
        };
        let sol = solve_scheduling_qp(&prob, &oracle, SchedulingOptions::with_tol(1e-12)).unwrap();
        assert!((sol.y[0] - 0.5).abs() < 1e-9 && (sol.y[1] - 0.5).abs() < 1e-9);
        assert!(sol.atoms.len() <= 3);
    }

    #[test]
    fn collinear_atoms_reduce_to_two() {
        let atoms = vec![vec![0.0], vec![1.0], vec![2.0]];
        let (a, w) = caratheodory_reduce(atoms, vec![0.25, 0.5, 0.25], &[1.0]).unwrap();
        // the symmetric null step zeroes both end atoms at once
        assert!(a.len() <= 2);
        let y: f64 = a.iter().zip(&w).map(|(a, w)| a[0] * w).sum();
        assert!((y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_decomposition_unchanged() {
        let atoms = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let (a, w) = caratheodory_reduce(atoms.clone(), vec![0.5, 0.5], &[0.5, 0.0]).unwrap();
        assert_eq!(a, atoms);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn inconsistent_decomposition_rejected() {
        let r = caratheodory_reduce(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5], &[0.9]);
        assert!(matches!(r, Err(Error::BadDecomposition { .. })));
    }

    #[test]
    fn split_rates_cases() {
        assert_eq!(split_rates(0.0, &[1.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(split_rates(0.5, &[3.0]), vec![0.5]);
    }
}
