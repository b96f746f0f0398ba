//! Capacity regions and the MaxWeight linear-optimization oracle.
//!
//! Wireline regions are per-link boxes `0 <= y_l <= C_l`. Wireless regions
//! are `conv(Γ)` for a finite set Γ of feasible link-rate vectors; under the
//! node-exclusive model Γ is the set of matchings, each active link running
//! at its capacity. Both sets are downward closed: zeroing any coordinate of
//! an atom gives another atom.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::network::{Interference, NetworkGraph, NetworkInstance};

/// Largest link count for which Γ is enumerated.
pub const MAX_ENUMERATED_LINKS: usize = 24;

/// Per-link capacities of a wireline network.
#[derive(Debug, Clone, PartialEq)]
pub struct WirelineCapacity {
    capacities: Vec<f64>,
}

impl WirelineCapacity {
    pub fn new(capacities: Vec<f64>) -> Result<Self> {
        if let Some(c) = capacities.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "link capacity must be positive and finite, got {c}"
            )));
        }
        Ok(Self { capacities })
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    /// True when `totals` lies in the box, up to `slack`.
    pub fn contains(&self, totals: &[f64], slack: f64) -> bool {
        totals.len() == self.capacities.len()
            && totals
                .iter()
                .zip(&self.capacities)
                .all(|(&y, &c)| y >= -slack && y <= c + slack)
    }
}

/// A materialized Γ. Atoms are stored alongside the active-link sets that
/// produced them so the set can be re-scaled to new capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRateSet {
    n_links: usize,
    active: Vec<Vec<usize>>,
    atoms: Vec<Vec<f64>>,
}

impl FeasibleRateSet {
    /// All matchings of `graph` (links sharing any endpoint conflict), the
    /// empty matching first, in depth-first order over link indices.
    pub fn node_exclusive(graph: &NetworkGraph, capacities: &[f64]) -> Result<Self> {
        let l_count = graph.n_links();
        check_len("capacities", l_count, capacities.len())?;
        if l_count > MAX_ENUMERATED_LINKS {
            return Err(Error::EnumerationTooLarge {
                links: l_count,
                limit: MAX_ENUMERATED_LINKS,
            });
        }
        let mut active = Vec::new();
        let mut used = vec![false; graph.n_nodes()];
        let mut current = Vec::new();
        enumerate_matchings(graph, 0, &mut used, &mut current, &mut active);
        let atoms = active
            .iter()
            .map(|set| atom_from_active(l_count, set, capacities))
            .collect();
        Ok(Self {
            n_links: l_count,
            active,
            atoms,
        })
    }

    /// Γ given explicitly by its atoms. The zero vector must be present.
    pub fn from_atoms(n_links: usize, atoms: Vec<Vec<f64>>) -> Result<Self> {
        for atom in &atoms {
            check_len("atom", n_links, atom.len())?;
            if atom.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(
                    "atoms must be finite and nonnegative".into(),
                ));
            }
        }
        if !atoms.iter().any(|a| a.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidParameter(
                "feasible rate set must contain the zero vector".into(),
            ));
        }
        let active = atoms
            .iter()
            .map(|a| (0..n_links).filter(|&l| a[l] > 0.0).collect())
            .collect();
        Ok(Self {
            n_links,
            active,
            atoms,
        })
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    /// Active links of each atom.
    pub fn active_sets(&self) -> &[Vec<usize>] {
        &self.active
    }

    /// Same active sets with every active link at its new capacity.
    pub fn with_capacities(&self, capacities: &[f64]) -> Result<Self> {
        check_len("capacities", self.n_links, capacities.len())?;
        let atoms = self
            .active
            .iter()
            .map(|set| atom_from_active(self.n_links, set, capacities))
            .collect();
        Ok(Self {
            n_links: self.n_links,
            active: self.active.clone(),
            atoms,
        })
    }

    /// Index of the atom maximizing `<w, atom>`; ties go to the lowest index.
    pub fn argmax(&self, weights: &[f64]) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, set) in self.active.iter().enumerate() {
            let val: f64 = set.iter().map(|&l| weights[l] * self.atoms[i][l]).sum();
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        best
    }

    /// JSON list of rate vectors.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GammaFile {
            atoms: self.atoms.clone(),
        })?)
    }
}

#[derive(Serialize, Deserialize)]
struct GammaFile {
    atoms: Vec<Vec<f64>>,
}

fn atom_from_active(n_links: usize, active: &[usize], capacities: &[f64]) -> Vec<f64> {
    let mut atom = vec![0.0; n_links];
    for &l in active {
        atom[l] = capacities[l];
    }
    atom
}

fn enumerate_matchings(
    graph: &NetworkGraph,
    next: usize,
    used: &mut [bool],
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if next == graph.n_links() {
        out.push(current.clone());
        return;
    }
    enumerate_matchings(graph, next + 1, used, current, out);
    let link = graph.link(next);
    if !used[link.tx] && !used[link.rx] {
        used[link.tx] = true;
        used[link.rx] = true;
        current.push(next);
        enumerate_matchings(graph, next + 1, used, current, out);
        current.pop();
        used[link.tx] = false;
        used[link.rx] = false;
    }
}

/// Linear optimization over Γ: the only access path to Γ used by the
/// scheduling solver.
pub trait MaxWeightOracle: Send + Sync {
    fn n_links(&self) -> usize;

    /// An atom maximizing `Σ_l w_l r_l`.
    fn maxweight(&self, weights: &[f64]) -> Vec<f64>;

    /// Number of `maxweight` calls so far.
    fn calls(&self) -> usize;

    /// False for heuristics that may return a suboptimal atom.
    fn is_exact(&self) -> bool {
        true
    }
}

/// Exhaustive search over a materialized Γ.
#[derive(Debug)]
pub struct EnumeratedOracle {
    set: FeasibleRateSet,
    calls: AtomicUsize,
}

impl EnumeratedOracle {
    pub fn new(set: FeasibleRateSet) -> Self {
        Self {
            set,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn set(&self) -> &FeasibleRateSet {
        &self.set
    }
}

impl MaxWeightOracle for EnumeratedOracle {
    fn n_links(&self) -> usize {
        self.set.n_links()
    }

    fn maxweight(&self, weights: &[f64]) -> Vec<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.set.atoms[self.set.argmax(weights)].clone()
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Greedy maximal matching by decreasing `w_l·C_l`. Inexact: at worst half
/// the optimal weight.
#[derive(Debug)]
pub struct GreedyMatchingOracle {
    graph: NetworkGraph,
    capacities: Vec<f64>,
    calls: AtomicUsize,
}

impl GreedyMatchingOracle {
    pub fn new(graph: NetworkGraph, capacities: Vec<f64>) -> Result<Self> {
        check_len("capacities", graph.n_links(), capacities.len())?;
        Ok(Self {
            graph,
            capacities,
            calls: AtomicUsize::new(0),
        })
    }
}

impl MaxWeightOracle for GreedyMatchingOracle {
    fn n_links(&self) -> usize {
        self.graph.n_links()
    }

    fn maxweight(&self, weights: &[f64]) -> Vec<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut order: Vec<usize> = (0..self.graph.n_links())
            .filter(|&l| weights[l] > 0.0)
            .collect();
        order.sort_by(|&i, &j| {
            let (wi, wj) = (
                weights[i] * self.capacities[i],
                weights[j] * self.capacities[j],
            );
            wj.total_cmp(&wi).then(i.cmp(&j))
        });
        let mut used = vec![false; self.graph.n_nodes()];
        let mut atom = vec![0.0; self.graph.n_links()];
        for l in order {
            let link = self.graph.link(l);
            if !used[link.tx] && !used[link.rx] {
                used[link.tx] = true;
                used[link.rx] = true;
                atom[l] = self.capacities[l];
            }
        }
        atom
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn is_exact(&self) -> bool {
        false
    }
}

/// Vertices of the wireline box: `C_l` on positive weights, zero otherwise.
#[derive(Debug)]
pub struct BoxOracle {
    capacities: Vec<f64>,
    calls: AtomicUsize,
}

impl BoxOracle {
    pub fn new(capacities: Vec<f64>) -> Self {
        Self {
            capacities,
            calls: AtomicUsize::new(0),
        }
    }
}

impl MaxWeightOracle for BoxOracle {
    fn n_links(&self) -> usize {
        self.capacities.len()
    }

    fn maxweight(&self, weights: &[f64]) -> Vec<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        weights
            .iter()
            .zip(&self.capacities)
            .map(|(&w, &c)| if w > 0.0 { c } else { 0.0 })
            .collect()
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Which MaxWeight implementation backs a wireless region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Exhaustive search over enumerated matchings.
    #[default]
    Enumerated,
    /// Greedy matching; inexact.
    Greedy,
}

/// The constraint on per-link totals for one instance.
pub enum CapacityRegion {
    Wireline(WirelineCapacity),
    Wireless(Box<dyn MaxWeightOracle>),
}

impl CapacityRegion {
    pub fn for_instance(inst: &NetworkInstance, oracle: OracleKind) -> Result<Self> {
        match inst.interference() {
            Interference::Wireline => Ok(CapacityRegion::Wireline(WirelineCapacity::new(
                inst.capacities().to_vec(),
            )?)),
            Interference::NodeExclusive => {
                let boxed: Box<dyn MaxWeightOracle> = match oracle {
                    OracleKind::Enumerated => Box::new(EnumeratedOracle::new(
                        FeasibleRateSet::node_exclusive(inst.graph(), inst.capacities())?,
                    )),
                    OracleKind::Greedy => Box::new(GreedyMatchingOracle::new(
                        inst.graph().clone(),
                        inst.capacities().to_vec(),
                    )?),
                };
                Ok(CapacityRegion::Wireless(boxed))
            }
        }
    }
}

impl std::fmt::Debug for CapacityRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CapacityRegion::Wireline(c) => f.debug_tuple("Wireline").field(c).finish(),
            CapacityRegion::Wireless(o) => f
                .debug_struct("Wireless")
                .field("n_links", &o.n_links())
                .field("exact", &o.is_exact())
                .finish(),
        }
    }
}
