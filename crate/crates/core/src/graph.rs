//! Network topologies, Metropolis combination matrices and the spectral
//! mixing rate of the resulting weights.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::symmetric_eigenvalues;

/// Undirected communication graph over agents `0..num_agents`.
///
/// Self-loops are implicit: every agent belongs to its own neighborhood.
/// Edges are stored as ordered pairs `(a, b)` with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    /// Builds a topology, checking that agent indices are in range and that
    /// no explicit self-loop is listed. Connectivity is checked by
    /// [`Topology::check_connected`] and by [`metropolis_weights`].
    pub fn new<I>(num_agents: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if num_agents == 0 {
            return Err(Error::InvalidTopology("a network needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= num_agents || b >= num_agents {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) references an agent outside [0, {num_agents})"
                )));
            }
            if a == b {
                return Err(Error::InvalidTopology(format!(
                    "explicit self-loop at agent {a}; self-loops are implicit"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            num_agents,
            edges: set,
        })
    }

    pub fn complete(num_agents: usize) -> Self {
        let edges = (0..num_agents)
            .flat_map(|a| ((a + 1)..num_agents).map(move |b| (a, b)))
            .collect();
        Self { num_agents, edges }
    }

    pub fn path(num_agents: usize) -> Self {
        let edges = (1..num_agents).map(|b| (b - 1, b)).collect();
        Self { num_agents, edges }
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a == b || self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Neighbors of every agent, excluding the agent itself.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_agents];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Number of neighbors of each agent, excluding itself.
    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency().iter().map(Vec::len).collect()
    }

    /// Fails with the first agent unreachable from agent 0.
    pub fn check_connected(&self) -> Result<()> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(to) => Err(Error::Disconnected { from: 0, to }),
            None => Ok(()),
        }
    }

    /// Relabels agent `k` as `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_agents {
            return Err(Error::Shape("permutation length differs from agent count".into()));
        }
        Self::new(self.num_agents, self.edges().map(|(a, b)| (perm[a], perm[b])))
    }

    /// Parses the edge-list format: one whitespace separated `l k` pair per
    /// line, zero-indexed. Blank lines and lines starting with `#` are
    /// skipped. The agent count is one past the largest index.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_index = None::<usize>;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.ok_or_else(|| Error::Parse(format!("line {}: expected `l k`", lineno + 1)))?
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let a = parse(parts.next())?;
            let b = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing tokens", lineno + 1)));
            }
            max_index = Some(max_index.unwrap_or(0).max(a).max(b));
            edges.push((a, b));
        }
        let num_agents = max_index.map_or(0, |m| m + 1);
        Self::new(num_agents, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }
}

/// Seeded random connected graph: a uniformly shuffled random spanning tree
/// plus extra edges so that the expected edge count is
/// `edge_density * K (K - 1) / 2` (never fewer than the `K - 1` tree edges).
pub fn random_connected_topology(num_agents: usize, edge_density: f64, seed: u64) -> Result<Topology> {
    if num_agents < 2 {
        return Err(Error::InvalidTopology("random topologies need K >= 2".into()));
    }
    if !(edge_density > 0.0 && edge_density <= 1.0) {
        return Err(Error::InvalidTopology(format!(
            "edge density must lie in (0, 1], got {edge_density}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..num_agents).collect();
    order.shuffle(&mut rng);

    let mut edges = BTreeSet::new();
    for i in 1..num_agents {
        let parent = order[rng.random_range(0..i)];
        let child = order[i];
        edges.insert((parent.min(child), parent.max(child)));
    }

    let pairs = num_agents * (num_agents - 1) / 2;
    let tree = num_agents - 1;
    if pairs > tree {
        let target = edge_density * pairs as f64;
        let extra = ((target - tree as f64) / (pairs - tree) as f64).clamp(0.0, 1.0);
        for a in 0..num_agents {
            for b in (a + 1)..num_agents {
                // one draw per pair keeps the stream layout independent of the tree
                let u: f64 = rng.random();
                if !edges.contains(&(a, b)) && u < extra {
                    edges.insert((a, b));
                }
            }
        }
    }
    Ok(Topology { num_agents, edges })
}

/// Doubly-stochastic symmetric weights `a[l][k]` over a connected topology.
///
/// Weights are stored row-major (`weights[l * K + k]` is the weight agent
/// `k` assigns to agent `l`), together with sparse in-neighborhood lists used
/// by the combine step.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix<S> {
    num_agents: usize,
    weights: Vec<S>,
    neighborhoods: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> CombinationMatrix<S> {
    /// Validates a dense row-major weight matrix against the combination
    /// matrix invariants: entries in `[0, 1]`, exact symmetry, unit row and
    /// column sums, and primitivity of the support.
    pub fn from_dense(num_agents: usize, weights: Vec<S>) -> Result<Self> {
        let k = num_agents;
        if k == 0 || weights.len() != k * k {
            return Err(Error::InvalidCombination(format!(
                "expected {k}x{k} weights, got {} entries",
                weights.len()
            )));
        }
        let tol = Self::sum_tolerance(k);
        for l in 0..k {
            for j in 0..k {
                let w = weights[l * k + j];
                if !(w >= S::zero() && w <= S::one()) {
                    return Err(Error::InvalidCombination(format!("entry ({l}, {j}) = {w} not in [0, 1]")));
                }
                if w != weights[j * k + l] {
                    return Err(Error::InvalidCombination(format!("not symmetric at ({l}, {j})")));
                }
            }
        }
        for l in 0..k {
            let row: S = (0..k).map(|j| weights[l * k + j]).sum();
            let col: S = (0..k).map(|j| weights[j * k + l]).sum();
            if (row - S::one()).abs() > tol || (col - S::one()).abs() > tol {
                return Err(Error::InvalidCombination(format!(
                    "row/column {l} sums to {row}/{col}, expected 1"
                )));
            }
        }
        let support: Vec<Vec<usize>> = (0..k)
            .map(|l| (0..k).filter(|&j| weights[l * k + j] > S::zero()).collect())
            .collect();
        if !is_primitive(&support) {
            return Err(Error::InvalidCombination("support pattern is not primitive".into()));
        }
        let neighborhoods = (0..k)
            .map(|j| {
                (0..k)
                    .filter(|&l| weights[l * k + j] > S::zero())
                    .map(|l| (l, weights[l * k + j]))
                    .collect()
            })
            .collect();
        Ok(Self {
            num_agents: k,
            weights,
            neighborhoods,
        })
    }

    /// `A = (1/K) 1 1^T`, the fully connected uniform matrix.
    pub fn uniform(num_agents: usize) -> Self {
        let w = S::one() / S::of_usize(num_agents);
        Self::from_dense(num_agents, vec![w; num_agents * num_agents])
            .expect("uniform matrix satisfies the combination invariants")
    }

    pub fn identity(num_agents: usize) -> Result<Self> {
        let mut w = vec![S::zero(); num_agents * num_agents];
        for k in 0..num_agents {
            w[k * num_agents + k] = S::one();
        }
        Self::from_dense(num_agents, w)
    }

    fn sum_tolerance(k: usize) -> S {
        S::of(1e-12).max(S::epsilon() * S::of_usize(4 * k))
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// Weight `a_{l k}` that agent `k` assigns to agent `l`.
    pub fn weight(&self, from: usize, to: usize) -> S {
        self.weights[from * self.num_agents + to]
    }

    pub fn dense(&self) -> &[S] {
        &self.weights
    }

    /// `(l, a_{l k})` for every `l` in the neighborhood of `k`, itself included.
    pub fn neighborhood(&self, agent: usize) -> &[(usize, S)] {
        &self.neighborhoods[agent]
    }

    /// Support of the matrix as a topology (diagonal dropped).
    pub fn topology(&self) -> Topology {
        let k = self.num_agents;
        let edges = (0..k)
            .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
            .filter(|&(a, b)| self.weights[a * k + b] > S::zero());
        Topology::new(k, edges).expect("indices in range")
    }

    /// Conjugates by the relabeling `k -> perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.num_agents;
        if perm.len() != k {
            return Err(Error::Shape("permutation length differs from agent count".into()));
        }
        let mut w = vec![S::zero(); k * k];
        for l in 0..k {
            for j in 0..k {
                w[perm[l] * k + perm[j]] = self.weights[l * k + j];
            }
        }
        Self::from_dense(k, w)
    }
}

/// Reachability based primitivity test: the support graph must be strongly
/// connected and aperiodic (gcd of cycle lengths equal to one).
fn is_primitive(support: &[Vec<usize>]) -> bool {
    let k = support.len();
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &support[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if level.contains(&usize::MAX) {
        return false;
    }
    // reverse reachability
    let mut reverse = vec![Vec::new(); k];
    for (u, outs) in support.iter().enumerate() {
        for &v in outs {
            reverse[v].push(u);
        }
    }
    let mut seen = vec![false; k];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &reverse[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return false;
    }
    let mut period = 0usize;
    for (u, outs) in support.iter().enumerate() {
        for &v in outs {
            let diff = (level[u] + 1).abs_diff(level[v]);
            period = gcd(period, diff);
        }
    }
    period == 1
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Metropolis rule over neighborhood sizes `n_k = deg(k) + 1`:
/// `a_{lk} = 1 / max(n_l, n_k)` for neighbors `l != k` and
/// `a_{kk} = 1 - sum_{l != k} a_{lk}`.
pub fn metropolis_weights<S: Scalar>(topology: &Topology) -> Result<CombinationMatrix<S>> {
    topology.check_connected()?;
    let k = topology.num_agents();
    let sizes: Vec<usize> = topology.degrees().iter().map(|d| d + 1).collect();
    let mut w = vec![S::zero(); k * k];
    for (a, b) in topology.edges() {
        let v = S::one() / S::of_usize(sizes[a].max(sizes[b]));
        w[a * k + b] = v;
        w[b * k + a] = v;
    }
    for j in 0..k {
        let off: S = (0..k).filter(|&l| l != j).map(|l| w[l * k + j]).sum();
        w[j * k + j] = S::one() - off;
    }
    CombinationMatrix::from_dense(k, w)
}

/// Eigenvalues of `A` sorted by decreasing magnitude.
pub fn spectrum<S: Scalar>(a: &CombinationMatrix<S>) -> Vec<S> {
    let mut ev = symmetric_eigenvalues(a.dense(), a.num_agents());
    ev.sort_by(|x, y| y.abs().partial_cmp(&x.abs()).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Magnitude of the second largest-magnitude eigenvalue of `A` (the graph
/// mixing rate). Zero for a single agent. Magnitudes below the solver's
/// resolution, `4 K eps`, are reported as exactly zero.
pub fn second_eigenvalue_magnitude<S: Scalar>(a: &CombinationMatrix<S>) -> S {
    let ev = spectrum(a);
    debug_assert!(
        (ev[0] - S::one()).abs() <= S::of(1e-9).max(S::epsilon() * S::of(64.0)),
        "leading eigenvalue of a doubly-stochastic matrix must be 1, got {}",
        ev[0]
    );
    let floor = S::epsilon() * S::of_usize(4 * a.num_agents());
    ev.get(1).map_or(S::zero(), |v| {
        let m = v.abs().min(S::one());
        if m < floor {
            S::zero()
        } else {
            m
        }
    })
}

const FIXTURES: &[(&str, &str)] = &[
    ("reference-k10", include_str!("../fixtures/v1/reference-k10.edges")),
    ("sparse-k10", include_str!("../fixtures/v1/sparse-k10.edges")),
    ("size-k20", include_str!("../fixtures/v1/size-k20.edges")),
    ("size-k30", include_str!("../fixtures/v1/size-k30.edges")),
    ("size-k40", include_str!("../fixtures/v1/size-k40.edges")),
    ("size-k70", include_str!("../fixtures/v1/size-k70.edges")),
];

/// Names of the frozen topology fixtures shipped with the crate.
pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(name, _)| *name)
}

/// Loads a shipped topology fixture by name.
pub fn fixture(name: &str) -> Result<Topology> {
    let (_, text) = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownFixture(name.to_string()))?;
    Topology::parse_edge_list(text)
}
