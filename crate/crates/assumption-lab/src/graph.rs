//! Directed acyclic graphs over statistics, latents, contexts and parameters.
//!
//! d-separation uses the ancestral moral graph: restrict to ancestors of the
//! query nodes, marry co-parents, drop directions, delete the conditioning
//! set and test reachability. A brute-force oracle that sums out random
//! discrete factorizations is provided for validation.
//!
//! The text format is documented in `docs/graph-format.md`.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle through `{0}`")]
    CyclicInput(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("only statistic nodes may have parents, but `{0}` has one")]
    ParentOfNonStatistic(String),
    #[error("active-parameter set contains non-parameter node `{0}`")]
    InvalidQStar(String),
    #[error("query sets must be non-empty where required and pairwise disjoint")]
    InvalidQuery,
    #[error("brute-force oracle supports at most 7 nodes and 2 or 3 levels")]
    TooLarge,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[serde(rename = "s")]
    Statistic,
    #[serde(rename = "u")]
    Latent,
    #[serde(rename = "theta")]
    Context,
    #[serde(rename = "omega")]
    Parameter,
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "s" => Ok(Self::Statistic),
            "u" => Ok(Self::Latent),
            "theta" => Ok(Self::Context),
            "omega" => Ok(Self::Parameter),
            other => Err(format!("unknown role `{other}` (expected s, u, theta or omega)")),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Statistic => "s",
            Self::Latent => "u",
            Self::Context => "theta",
            Self::Parameter => "omega",
        })
    }
}

/// A recursive structure. Node indices follow declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagModel {
    names: Vec<String>,
    roles: Vec<Role>,
    parents: Vec<Vec<usize>>,
}

/// `x ⊥ y | z` over node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiQuery {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub z: Vec<usize>,
}

impl CiQuery {
    pub fn new(x: Vec<usize>, y: Vec<usize>, z: Vec<usize>) -> Self {
        Self { x, y, z }
    }
}

/// Undirected simple graph as adjacency sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    pub adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    /// Sorted `(a, b)` pairs with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adj.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GSeparability {
    pub separable: bool,
    /// A statistic that depends on the context given everything else yet is
    /// not independent of the active parameters.
    pub witness: Option<String>,
}

impl DagModel {
    /// Build and validate a model from role-annotated nodes and named edges.
    pub fn new(nodes: &[(&str, Role)], edges: &[(&str, &str)]) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(nodes.len());
        let mut roles = Vec::with_capacity(nodes.len());
        for (name, role) in nodes {
            if index.insert(name.to_string(), names.len()).is_some() {
                return Err(GraphError::DuplicateNode(name.to_string()));
            }
            names.push(name.to_string());
            roles.push(*role);
        }
        let mut parents = vec![Vec::new(); names.len()];
        for (from, to) in edges {
            let f = *index.get(*from).ok_or_else(|| GraphError::UnknownNode(from.to_string()))?;
            let t = *index.get(*to).ok_or_else(|| GraphError::UnknownNode(to.to_string()))?;
            if !parents[t].contains(&f) {
                parents[t].push(f);
            }
        }
        let model = Self { names, roles, parents };
        model.validate()?;
        Ok(model)
    }

    /// Unlabeled DAG on `n` nodes for validation work; every node is a
    /// statistic so the role invariant holds trivially.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut parents = vec![Vec::new(); n];
        for &(f, t) in edges {
            if f >= n || t >= n {
                return Err(GraphError::UnknownNode(format!("#{}", f.max(t))));
            }
            if !parents[t].contains(&f) {
                parents[t].push(f);
            }
        }
        let model = Self {
            names: (0..n).map(|i| format!("n{i}")).collect(),
            roles: vec![Role::Statistic; n],
            parents,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), GraphError> {
        for (i, p) in self.parents.iter().enumerate() {
            if !p.is_empty() && self.roles[i] != Role::Statistic {
                return Err(GraphError::ParentOfNonStatistic(self.names[i].clone()));
            }
        }
        self.topological_order().map(|_| ())
    }

    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap();
            return Err(GraphError::CyclicInput(self.names[stuck].clone()));
        }
        Ok(order)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn index(&self, name: &str) -> Result<usize, GraphError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| GraphError::UnknownNode(name.into()))
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == role).collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            out.extend(ps.iter().map(|&p| (p, c)));
        }
        out.sort_unstable();
        out
    }

    /// Serialize in the text format accepted by [`DagModel::from_str`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (n, r) in self.names.iter().zip(&self.roles) {
            out.push_str(&format!("node {n} {r}\n"));
        }
        for (p, c) in self.edges() {
            out.push_str(&format!("{} -> {}\n", self.names[p], self.names[c]));
        }
        out
    }

    fn ancestors(&self, seeds: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut keep = vec![false; self.len()];
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        while let Some(v) = stack.pop() {
            if !keep[v] {
                keep[v] = true;
                stack.extend_from_slice(&self.parents[v]);
            }
        }
        keep
    }

    fn moral_on(&self, keep: &[bool]) -> UndirectedGraph {
        let mut adj = vec![BTreeSet::new(); self.len()];
        for (c, ps) in self.parents.iter().enumerate() {
            if !keep[c] {
                continue;
            }
            for (k, &p) in ps.iter().enumerate() {
                adj[p].insert(c);
                adj[c].insert(p);
                for &q in &ps[k + 1..] {
                    adj[p].insert(q);
                    adj[q].insert(p);
                }
            }
        }
        UndirectedGraph { adj }
    }

    fn check(&self, nodes: &[usize]) -> Result<(), GraphError> {
        match nodes.iter().find(|&&v| v >= self.len()) {
            Some(v) => Err(GraphError::UnknownNode(format!("#{v}"))),
            None => Ok(()),
        }
    }
}

impl FromStr for DagModel {
    type Err = GraphError;

    fn from_str(text: &str) -> Result<Self, GraphError> {
        let mut nodes: Vec<(String, Role)> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GraphError::Parse { line: k + 1, msg };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens[0] == "node" {
                if tokens.len() != 3 {
                    return Err(err("expected `node <name> <role>`".into()));
                }
                nodes.push((tokens[1].to_string(), tokens[2].parse().map_err(err)?));
            } else if tokens.len() >= 3 && tokens.iter().skip(1).step_by(2).all(|t| *t == "->") && tokens.len() % 2 == 1 {
                let chain: Vec<&str> = tokens.iter().step_by(2).copied().collect();
                edges.extend(chain.windows(2).map(|w| (w[0].to_string(), w[1].to_string())));
            } else {
                return Err(err(format!("cannot parse `{line}`")));
            }
        }
        let node_refs: Vec<(&str, Role)> = nodes.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        Self::new(&node_refs, &edge_refs)
    }
}

/// Marry co-parents and drop directions.
pub fn moralize(g: &DagModel) -> UndirectedGraph {
    g.moral_on(&vec![true; g.len()])
}

/// Whether `x` and `y` are d-separated by `z`.
pub fn d_separated(g: &DagModel, q: &CiQuery) -> Result<bool, GraphError> {
    for set in [&q.x, &q.y, &q.z] {
        g.check(set)?;
    }
    if q.x.is_empty() || q.y.is_empty() || q.x.iter().chain(&q.y).any(|v| q.z.contains(v)) || q.x.iter().any(|v| q.y.contains(v)) {
        return Err(GraphError::InvalidQuery);
    }
    let keep = g.ancestors(q.x.iter().chain(&q.y).chain(&q.z).copied());
    let moral = g.moral_on(&keep);
    let mut blocked = vec![false; g.len()];
    for &v in &q.z {
        blocked[v] = true;
    }
    let mut seen = vec![false; g.len()];
    let mut queue: VecDeque<usize> = q.x.iter().copied().collect();
    for &v in &q.x {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        if q.y.contains(&v) {
            return Ok(false);
        }
        for &w in &moral.adj[v] {
            if keep[w] && !blocked[w] && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(true)
}

/// Parameters linked to the contexts through chains of shared statistic
/// children.
pub fn i_set(g: &DagModel) -> BTreeSet<usize> {
    let mut current: BTreeSet<usize> = g.nodes_with_role(Role::Context).into_iter().collect();
    let mut found = BTreeSet::new();
    loop {
        let mut next = BTreeSet::new();
        for child in g.nodes_with_role(Role::Statistic) {
            let ps = g.parents(child);
            if ps.iter().any(|p| current.contains(p)) {
                next.extend(ps.iter().copied().filter(|&p| g.role(p) == Role::Parameter && !found.contains(&p)));
            }
        }
        if next.is_empty() {
            return found;
        }
        found.extend(next.iter().copied());
        current = next;
    }
}

/// For every statistic `s_i` with `s_i ⊥̸ θ | (s_{−i}, u)`, require `s_i ⊥ ω_{Q*}`.
pub fn g_separable(g: &DagModel, q_star: &[usize]) -> Result<GSeparability, GraphError> {
    g.check(q_star)?;
    if let Some(&bad) = q_star.iter().find(|&&v| g.role(v) != Role::Parameter) {
        return Err(GraphError::InvalidQStar(g.name(bad).to_string()));
    }
    let contexts = g.nodes_with_role(Role::Context);
    let stats = g.nodes_with_role(Role::Statistic);
    let latents = g.nodes_with_role(Role::Latent);
    if contexts.is_empty() || q_star.is_empty() {
        return Ok(GSeparability { separable: true, witness: None });
    }
    for &s in &stats {
        let z: Vec<usize> = stats.iter().copied().filter(|&o| o != s).chain(latents.iter().copied()).collect();
        let depends_on_context = !d_separated(g, &CiQuery::new(vec![s], contexts.clone(), z))?;
        if depends_on_context && !d_separated(g, &CiQuery::new(vec![s], q_star.to_vec(), vec![]))? {
            return Ok(GSeparability { separable: false, witness: Some(g.name(s).to_string()) });
        }
    }
    Ok(GSeparability { separable: true, witness: None })
}

/// Random positive discrete factorizations of a DAG, used to decide
/// conditional independence by exhaustive summation.
#[derive(Debug, Clone)]
pub struct CiOracle {
    n: usize,
    levels: usize,
    joints: Vec<Vec<f64>>,
}

impl CiOracle {
    pub const FACTORIZATIONS: usize = 20;
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(g: &DagModel, levels: usize, seed: u64) -> Result<Self, GraphError> {
        let n = g.len();
        if n > 7 || !(2..=3).contains(&levels) {
            return Err(GraphError::TooLarge);
        }
        let order = g.topological_order()?;
        let size = levels.pow(n as u32);
        let mut rng = RngStream::new(seed, n as u64);
        let mut joints = Vec::with_capacity(Self::FACTORIZATIONS);
        for _ in 0..Self::FACTORIZATIONS {
            // cpt[v][parent configuration * levels + value]
            let cpts: Vec<Vec<f64>> = (0..n)
                .map(|v| {
                    let configs = levels.pow(g.parents(v).len() as u32);
                    let mut t: Vec<f64> = (0..configs * levels).map(|_| rng.random_range(0.05..1.0)).collect();
                    for c in t.chunks_mut(levels) {
                        let z: f64 = c.iter().sum();
                        c.iter_mut().for_each(|x| *x /= z);
                    }
                    t
                })
                .collect();
            let mut joint = vec![1.0; size];
            let mut digits = vec![0; n];
            for (idx, p) in joint.iter_mut().enumerate() {
                decode(idx, levels, &mut digits);
                for &v in &order {
                    let cfg = g.parents(v).iter().fold(0, |acc, &q| acc * levels + digits[q]);
                    *p *= cpts[v][cfg * levels + digits[v]];
                }
            }
            joints.push(joint);
        }
        Ok(Self { n, levels, joints })
    }

    /// True iff `x ⊥ y | z` holds in every sampled factorization.
    pub fn independent(&self, q: &CiQuery) -> bool {
        let l = self.levels;
        let mut digits = vec![0; self.n];
        let key = |digits: &[usize], set: &[usize]| set.iter().fold(0usize, |acc, &v| acc * l + digits[v]);
        let (nx, ny, nz) = (l.pow(q.x.len() as u32), l.pow(q.y.len() as u32), l.pow(q.z.len() as u32));
        for joint in &self.joints {
            let mut pxyz = vec![0.0; nx * ny * nz];
            for (idx, p) in joint.iter().enumerate() {
                decode(idx, l, &mut digits);
                pxyz[(key(&digits, &q.x) * ny + key(&digits, &q.y)) * nz + key(&digits, &q.z)] += p;
            }
            for z in 0..nz {
                let pz: f64 = (0..nx * ny).map(|xy| pxyz[xy * nz + z]).sum();
                for x in 0..nx {
                    let pxz: f64 = (0..ny).map(|y| pxyz[(x * ny + y) * nz + z]).sum();
                    for y in 0..ny {
                        let pyz: f64 = (0..nx).map(|x2| pxyz[(x2 * ny + y) * nz + z]).sum();
                        if (pxyz[(x * ny + y) * nz + z] * pz - pxz * pyz).abs() > Self::TOLERANCE {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

fn decode(mut idx: usize, levels: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = idx % levels;
        idx /= levels;
    }
}

/// Conditional independence decided by brute force over 20 random
/// factorizations with `levels` states per node.
pub fn brute_force_ci_oracle(g: &DagModel, q: &CiQuery, levels: usize, seed: u64) -> Result<bool, GraphError> {
    for set in [&q.x, &q.y, &q.z] {
        g.check(set)?;
    }
    Ok(CiOracle::new(g, levels, seed)?.independent(q))
}
