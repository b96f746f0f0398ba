//! Directed network, end-to-end flows and the node-arc incidence structure.
//!
//! Link-rate vectors are laid out destination-major: the rate of destination
//! index `k` on link `l` lives at `k * L + l`. Dual and queue vectors are
//! indexed by `(node, destination)` rows, with the destination node itself
//! excluded, so destination `k` owns rows `k * (N - 1) .. (k + 1) * (N - 1)`.
//!
//! Flow conservation is stored as `Bx + Ar = 0`, where column `(l, d)` of `A`
//! has `+1` at `Tx(l)` and `-1` at `Rx(l)` and column `f` of `B` has `-1` at
//! row `(s_f, d_f)`. [`NetworkInstance::conservation_residual`] returns
//! `Bx + Ar`, i.e. (outflow - inflow - injection) per row.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::utility::UtilitySpec;

/// A directed link `tx -> rx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
}

/// Directed graph with per-node incoming/outgoing link lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n_nodes: usize,
    links: Vec<Link>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl NetworkGraph {
    pub fn new(n_nodes: usize, links: Vec<Link>) -> Result<Self> {
        let mut incoming = vec![Vec::new(); n_nodes];
        let mut outgoing = vec![Vec::new(); n_nodes];
        for (l, link) in links.iter().enumerate() {
            for node in [link.tx, link.rx] {
                if node >= n_nodes {
                    return Err(Error::UnknownNode { node, n_nodes });
                }
            }
            if link.tx == link.rx {
                return Err(Error::SelfLoop {
                    link: l,
                    node: link.tx,
                });
            }
            outgoing[link.tx].push(l);
            incoming[link.rx].push(l);
        }
        Ok(Self {
            n_nodes,
            links,
            incoming,
            outgoing,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, l: usize) -> Link {
        self.links[l]
    }

    /// Links entering `node`, I(n).
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    /// Links leaving `node`, O(n).
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    /// Number of adjacent links, |I(n)| + |O(n)|.
    pub fn degree(&self, node: usize) -> usize {
        self.incoming[node].len() + self.outgoing[node].len()
    }

    /// True when `to` can be reached from `from` along directed links.
    pub fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            for &l in &self.outgoing[n] {
                let next = self.links[l].rx;
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    /// Maximum single-commodity flow from `s` to `t` (Edmonds-Karp).
    pub fn max_flow(&self, capacities: &[f64], s: usize, t: usize) -> f64 {
        let l_count = self.links.len();
        // residual capacity per link, forward and backward
        let mut fwd: Vec<f64> = capacities.to_vec();
        let mut bwd = vec![0.0; l_count];
        let mut total = 0.0;
        loop {
            // (link, forward?) used to reach each node
            let mut parent: Vec<Option<(usize, bool)>> = vec![None; self.n_nodes];
            let mut seen = vec![false; self.n_nodes];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(n) = queue.pop_front() {
                if n == t {
                    break;
                }
                for &l in &self.outgoing[n] {
                    let m = self.links[l].rx;
                    if !seen[m] && fwd[l] > 1e-15 {
                        seen[m] = true;
                        parent[m] = Some((l, true));
                        queue.push_back(m);
                    }
                }
                for &l in &self.incoming[n] {
                    let m = self.links[l].tx;
                    if !seen[m] && bwd[l] > 1e-15 {
                        seen[m] = true;
                        parent[m] = Some((l, false));
                        queue.push_back(m);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut n = t;
            while let Some((l, forward)) = parent[n] {
                let cap = if forward { fwd[l] } else { bwd[l] };
                bottleneck = bottleneck.min(cap);
                n = if forward {
                    self.links[l].tx
                } else {
                    self.links[l].rx
                };
            }
            let mut n = t;
            while let Some((l, forward)) = parent[n] {
                if forward {
                    fwd[l] -= bottleneck;
                    bwd[l] += bottleneck;
                    n = self.links[l].tx;
                } else {
                    bwd[l] -= bottleneck;
                    fwd[l] += bottleneck;
                    n = self.links[l].rx;
                }
            }
            total += bottleneck;
        }
    }
}

/// An end-to-end session with a box-constrained injection rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub source: usize,
    pub destination: usize,
    pub min_rate: f64,
    pub max_rate: f64,
    pub utility: UtilitySpec,
}

/// How the per-link totals `Σ_d r_l^d` are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interference {
    /// No interference: `Σ_d r_l^d <= C_l` per link.
    #[default]
    Wireline,
    /// One-hop node-exclusive: active links form a matching.
    NodeExclusive,
}

/// A validated problem instance: graph, flows, capacities and the derived
/// destination/row indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    graph: NetworkGraph,
    flows: Vec<FlowSpec>,
    capacities: Vec<f64>,
    interference: Interference,
    destinations: Vec<usize>,
    dest_index_of_node: Vec<Option<usize>>,
    flow_dest_index: Vec<usize>,
}

impl NetworkInstance {
    pub fn new(
        graph: NetworkGraph,
        flows: Vec<FlowSpec>,
        capacities: Vec<f64>,
        interference: Interference,
    ) -> Result<Self> {
        let n = graph.n_nodes();
        check_len("capacities", graph.n_links(), capacities.len())?;
        if let Some(c) = capacities.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "link capacity must be positive and finite, got {c}"
            )));
        }
        let mut source_owner: Vec<Option<usize>> = vec![None; n];
        for (f, flow) in flows.iter().enumerate() {
            for node in [flow.source, flow.destination] {
                if node >= n {
                    return Err(Error::UnknownNode { node, n_nodes: n });
                }
            }
            if flow.source == flow.destination {
                return Err(Error::SourceIsDestination {
                    flow: f,
                    node: flow.source,
                });
            }
            if let Some(first) = source_owner[flow.source] {
                return Err(Error::DuplicateSource {
                    first,
                    second: f,
                    node: flow.source,
                });
            }
            source_owner[flow.source] = Some(f);
            if !(flow.min_rate > 0.0 && flow.min_rate <= flow.max_rate && flow.max_rate.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "flow {f}: rate bounds must satisfy 0 < m <= M < inf, got [{}, {}]",
                    flow.min_rate, flow.max_rate
                )));
            }
            flow.utility.validate()?;
            if !graph.reachable(flow.source, flow.destination) {
                return Err(Error::UnreachableDestination { flow: f });
            }
        }

        let mut destinations: Vec<usize> = Vec::new();
        for flow in &flows {
            if !destinations.contains(&flow.destination) {
                destinations.push(flow.destination);
            }
        }
        let mut dest_index_of_node = vec![None; n];
        for (k, &d) in destinations.iter().enumerate() {
            dest_index_of_node[d] = Some(k);
        }
        let flow_dest_index = flows
            .iter()
            .map(|f| dest_index_of_node[f.destination].expect("destination indexed"))
            .collect();

        Ok(Self {
            graph,
            flows,
            capacities,
            interference,
            destinations,
            dest_index_of_node,
            flow_dest_index,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn interference(&self) -> Interference {
        self.interference
    }

    /// Same instance with replaced link capacities (fading channel draws).
    pub fn with_capacities(&self, capacities: Vec<f64>) -> Result<Self> {
        Self::new(
            self.graph.clone(),
            self.flows.clone(),
            capacities,
            self.interference,
        )
    }

    /// Deduplicated destination set D, in order of first appearance.
    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_links(&self) -> usize {
        self.graph.n_links()
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn n_destinations(&self) -> usize {
        self.destinations.len()
    }

    /// Length of dual/queue vectors, D·(N−1).
    pub fn n_rows(&self) -> usize {
        self.n_destinations() * (self.n_nodes() - 1)
    }

    /// Length of link-rate vectors, D·L.
    pub fn n_link_vars(&self) -> usize {
        self.n_destinations() * self.n_links()
    }

    /// Destination index of flow `f`.
    pub fn flow_destination_index(&self, f: usize) -> usize {
        self.flow_dest_index[f]
    }

    pub fn destination_index(&self, node: usize) -> Option<usize> {
        self.dest_index_of_node[node]
    }

    /// Row of `(node, destination k)`, or `None` when `node` is that destination.
    pub fn row(&self, node: usize, k: usize) -> Option<usize> {
        let d = self.destinations[k];
        match node.cmp(&d) {
            std::cmp::Ordering::Less => Some(k * (self.n_nodes() - 1) + node),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(k * (self.n_nodes() - 1) + node - 1),
        }
    }

    /// Inverse of [`Self::row`]: `(node, destination index)`.
    pub fn row_node(&self, row: usize) -> (usize, usize) {
        let k = row / (self.n_nodes() - 1);
        let pos = row % (self.n_nodes() - 1);
        let d = self.destinations[k];
        (if pos < d { pos } else { pos + 1 }, k)
    }

    /// Index of `r_l^k` in a link-rate vector.
    pub fn var(&self, l: usize, k: usize) -> usize {
        k * self.n_links() + l
    }

    /// Row `(s_f, d_f)` of flow `f`.
    pub fn source_row(&self, f: usize) -> usize {
        let flow = &self.flows[f];
        self.row(flow.source, self.flow_dest_index[f])
            .expect("source differs from destination")
    }

    /// Row value with the destination row reading as zero.
    pub fn row_value(&self, values: &[f64], node: usize, k: usize) -> f64 {
        self.row(node, k).map_or(0.0, |i| values[i])
    }

    /// `β` default: deg(Tx) + deg(Rx) + 1 per link.
    pub fn default_beta(&self) -> Vec<f64> {
        self.graph
            .links()
            .iter()
            .map(|l| (self.graph.degree(l.tx) + self.graph.degree(l.rx)) as f64 + 1.0)
            .collect()
    }

    /// `Ar` by direct summation.
    pub fn apply_a(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        let l_count = self.n_links();
        for k in 0..self.n_destinations() {
            for (l, link) in self.graph.links().iter().enumerate() {
                let v = r[k * l_count + l];
                if let Some(i) = self.row(link.tx, k) {
                    out[i] += v;
                }
                if let Some(i) = self.row(link.rx, k) {
                    out[i] -= v;
                }
            }
        }
        out
    }

    /// `Aᵀλ`: entry `(l, k)` is `λ_{Tx(l)}^k − λ_{Rx(l)}^k` with destination rows zero.
    pub fn apply_a_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        let l_count = self.n_links();
        let mut out = vec![0.0; self.n_link_vars()];
        for k in 0..self.n_destinations() {
            for (l, link) in self.graph.links().iter().enumerate() {
                out[k * l_count + l] =
                    self.row_value(lambda, link.tx, k) - self.row_value(lambda, link.rx, k);
            }
        }
        out
    }

    /// Flow-conservation residual `Bx + Ar`.
    pub fn conservation_residual(&self, x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        check_len("injection rates", self.n_flows(), x.len())?;
        check_len("link rates", self.n_link_vars(), r.len())?;
        let mut res = vec![0.0; self.n_rows()];
        for (row, value) in res.iter_mut().enumerate() {
            let (n, k) = self.row_node(row);
            let out: f64 = self
                .graph
                .outgoing(n)
                .iter()
                .map(|&l| r[self.var(l, k)])
                .sum();
            let inc: f64 = self
                .graph
                .incoming(n)
                .iter()
                .map(|&l| r[self.var(l, k)])
                .sum();
            *value = out - inc;
        }
        for f in 0..self.n_flows() {
            res[self.source_row(f)] -= x[f];
        }
        Ok(res)
    }

    /// Dense incidence/selection matrices.
    pub fn incidence(&self) -> IncidenceMatrices {
        let rows = self.n_rows();
        let cols = self.n_link_vars();
        let mut a = DMatrix::zeros(rows, cols);
        for k in 0..self.n_destinations() {
            for (l, link) in self.graph.links().iter().enumerate() {
                let c = self.var(l, k);
                if let Some(i) = self.row(link.tx, k) {
                    a[(i, c)] = 1.0;
                }
                if let Some(i) = self.row(link.rx, k) {
                    a[(i, c)] = -1.0;
                }
            }
        }
        let mut b = DMatrix::zeros(rows, self.n_flows());
        let source_rows: Vec<usize> = (0..self.n_flows()).map(|f| self.source_row(f)).collect();
        for (f, &i) in source_rows.iter().enumerate() {
            b[(i, f)] = -1.0;
        }
        let relay_rows: Vec<usize> = (0..rows).filter(|i| !source_rows.contains(i)).collect();
        let a_s = a.select_rows(source_rows.iter());
        let a_r = a.select_rows(relay_rows.iter());
        IncidenceMatrices {
            a,
            b,
            a_s,
            a_r,
            source_rows,
            relay_rows,
        }
    }
}

/// Dense `A`, `B`, `A_s`, `A_r` with the row partition that produced them.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Rows of `A` at `(s_f, d_f)`, in flow order.
    pub a_s: DMatrix<f64>,
    /// Remaining rows of `A`, in increasing row order.
    pub a_r: DMatrix<f64>,
    pub source_rows: Vec<usize>,
    pub relay_rows: Vec<usize>,
}

impl IncidenceMatrices {
    /// Reassemble `A` from `A_s` and `A_r` by inverting the row partition.
    pub fn reassemble_a(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.a.nrows(), self.a.ncols());
        for (i, &row) in self.source_rows.iter().enumerate() {
            a.set_row(row, &self.a_s.row(i));
        }
        for (i, &row) in self.relay_rows.iter().enumerate() {
            a.set_row(row, &self.a_r.row(i));
        }
        a
    }
}

/// Distribution of per-link capacities for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityDist {
    /// Uniform on `(low, high]`.
    Uniform {
        low: f64,
        high: f64,
    },
    Constant(f64),
}

impl Default for CapacityDist {
    fn default() -> Self {
        CapacityDist::Uniform {
            low: 0.0,
            high: 1.0,
        }
    }
}

impl CapacityDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            // 1 - U[0,1) keeps the draw strictly above `low`
            CapacityDist::Uniform { low, high } => low + (high - low) * (1.0 - rng.gen::<f64>()),
            CapacityDist::Constant(c) => c,
        }
    }
}

/// Knobs for [`generate_er_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErParams {
    pub nodes: usize,
    pub p: f64,
    pub flows: usize,
    pub seed: u64,
    #[serde(default)]
    pub capacity: CapacityDist,
    #[serde(default)]
    pub interference: Interference,
    /// Lower rate bound m_f for every flow.
    #[serde(default = "default_min_rate")]
    pub min_rate: f64,
    /// Upper bound as a multiple of the largest capacity, M_f = factor · max C_l.
    #[serde(default = "default_max_rate_factor")]
    pub max_rate_factor: f64,
}

fn default_min_rate() -> f64 {
    1e-3
}

fn default_max_rate_factor() -> f64 {
    10.0
}

impl ErParams {
    pub fn new(nodes: usize, p: f64, flows: usize, seed: u64) -> Self {
        Self {
            nodes,
            p,
            flows,
            seed,
            capacity: CapacityDist::default(),
            interference: Interference::Wireline,
            min_rate: default_min_rate(),
            max_rate_factor: default_max_rate_factor(),
        }
    }
}

const ER_MAX_ATTEMPTS: usize = 1000;

/// Seeded Erdős–Rényi instance: an undirected G(n, p) skeleton, resampled
/// until connected, with both orientations of every edge as directed links.
/// Flows get distinct random sources, random destinations and
/// weighted-log utilities with weights uniform on (0, 1].
pub fn generate_er_instance(params: &ErParams) -> Result<NetworkInstance> {
    let n = params.nodes;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 nodes".into()));
    }
    if !(params.p > 0.0 && params.p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "connection probability must be in (0, 1], got {}",
            params.p
        )));
    }
    if params.flows == 0 || params.flows > n {
        return Err(Error::InvalidParameter(format!(
            "flow count must be in 1..={n}, got {}",
            params.flows
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut last_reason = String::new();
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < params.p {
                    edges.push((i, j));
                }
            }
        }
        if !undirected_connected(n, &edges) {
            last_reason = "skeleton not connected".into();
            continue;
        }
        let links: Vec<Link> = edges
            .iter()
            .flat_map(|&(i, j)| [Link { tx: i, rx: j }, Link { tx: j, rx: i }])
            .collect();
        let capacities: Vec<f64> = links
            .iter()
            .map(|_| params.capacity.sample(&mut rng))
            .collect();
        let graph = NetworkGraph::new(n, links)?;

        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut rng);
        let max_cap = capacities.iter().cloned().fold(0.0, f64::max);
        let flows: Vec<FlowSpec> = nodes[..params.flows]
            .iter()
            .map(|&s| {
                let mut d = rng.gen_range(0..n - 1);
                if d >= s {
                    d += 1;
                }
                FlowSpec {
                    source: s,
                    destination: d,
                    min_rate: params.min_rate,
                    max_rate: params.max_rate_factor * max_cap,
                    utility: UtilitySpec::WeightedLog {
                        weight: 1.0 - rng.gen::<f64>(),
                    },
                }
            })
            .collect();

        // Each flow must be able to carry F·m_f alone; then splitting every
        // link's capacity evenly among flows keeps all minimum rates feasible.
        let need = params.flows as f64 * params.min_rate;
        if flows
            .iter()
            .any(|f| graph.max_flow(&capacities, f.source, f.destination) <= need)
        {
            last_reason = "minimum rates not routable".into();
            continue;
        }
        return NetworkInstance::new(graph, flows, capacities, params.interference);
    }
    Err(Error::GenerationFailed {
        attempts: ER_MAX_ATTEMPTS,
        reason: last_reason,
    })
}

fn undirected_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// On-disk JSON form of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub nodes: usize,
    pub links: Vec<[usize; 2]>,
    pub capacities: Vec<f64>,
    pub flows: Vec<FlowRecord>,
    #[serde(default)]
    pub interference: Interference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRecord {
    pub src: usize,
    pub dst: usize,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub w: f64,
    /// Fairness exponent for alpha-fair utilities; absent means weighted log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl From<&NetworkInstance> for InstanceFile {
    fn from(inst: &NetworkInstance) -> Self {
        InstanceFile {
            nodes: inst.n_nodes(),
            links: inst.graph.links().iter().map(|l| [l.tx, l.rx]).collect(),
            capacities: inst.capacities.clone(),
            flows: inst
                .flows
                .iter()
                .map(|f| {
                    let (w, gamma) = match f.utility {
                        UtilitySpec::WeightedLog { weight } => (weight, None),
                        UtilitySpec::AlphaFair { weight, gamma } => (weight, Some(gamma)),
                    };
                    FlowRecord {
                        src: f.source,
                        dst: f.destination,
                        m: f.min_rate,
                        big_m: f.max_rate,
                        w,
                        gamma,
                    }
                })
                .collect(),
            interference: inst.interference,
        }
    }
}

impl TryFrom<InstanceFile> for NetworkInstance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let links = file.links.iter().map(|&[tx, rx]| Link { tx, rx }).collect();
        let graph = NetworkGraph::new(file.nodes, links)?;
        let flows = file
            .flows
            .iter()
            .map(|r| FlowSpec {
                source: r.src,
                destination: r.dst,
                min_rate: r.m,
                max_rate: r.big_m,
                utility: match r.gamma {
                    None => UtilitySpec::WeightedLog { weight: r.w },
                    Some(gamma) => UtilitySpec::AlphaFair { weight: r.w, gamma },
                },
            })
            .collect();
        NetworkInstance::new(graph, flows, file.capacities, file.interference)
    }
}

impl NetworkInstance {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
