//! Atomic networks, hypernetworks, node maps and the network/graph
//! translation for rainbow structures.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::hash::Hash;

use serde_json::{json, Value};
use thiserror::Error;

use crate::atom_structure::AtomStructure;
use crate::rainbow::{decode_atom, distinct_tuples, ColouredGraph, RainbowAtom, RainbowParams};

/// The label every short hyperedge carries.
pub const LAMBDA0: &str = "λ0";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("unknown atom {0}")]
    UnknownAtom(String),
    #[error("node {0} not in the network")]
    MissingNode(u32),
    #[error("network is not strict at {0:?}")]
    NotStrict(Vec<u32>),
    #[error("inconsistent edge data at ({0},{1})")]
    Inconsistent(u32, u32),
    #[error("json: {0}")]
    Json(String),
}

/// What a network needs from its atom structure.
pub trait AtomSpace {
    type Atom: Clone + Eq + Ord + Hash + Debug;
    fn dimension(&self) -> usize;
    fn in_diag(&self, a: &Self::Atom, i: usize, j: usize) -> bool;
    fn t_related(&self, l: usize, a: &Self::Atom, b: &Self::Atom) -> bool;
    fn atom_id(&self, a: &Self::Atom) -> String;
    fn parse_atom(&self, id: &str) -> Option<Self::Atom>;
}

impl AtomSpace for AtomStructure {
    type Atom = usize;

    fn dimension(&self) -> usize {
        AtomStructure::dimension(self)
    }

    fn in_diag(&self, a: &usize, i: usize, j: usize) -> bool {
        self.diag(i, j).contains(*a)
    }

    fn t_related(&self, l: usize, a: &usize, b: &usize) -> bool {
        self.access(l).related(*a, *b)
    }

    fn atom_id(&self, a: &usize) -> String {
        self.atoms()[*a].clone()
    }

    fn parse_atom(&self, id: &str) -> Option<usize> {
        self.atom_index(id)
    }
}

/// The rainbow atoms without materialising the structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RainbowSpace {
    pub params: RainbowParams,
}

impl AtomSpace for RainbowSpace {
    type Atom = RainbowAtom;

    fn dimension(&self) -> usize {
        self.params.n
    }

    fn in_diag(&self, a: &RainbowAtom, i: usize, j: usize) -> bool {
        a.in_diag(i, j)
    }

    fn t_related(&self, l: usize, a: &RainbowAtom, b: &RainbowAtom) -> bool {
        a.t_related(l, b)
    }

    fn atom_id(&self, a: &RainbowAtom) -> String {
        a.encode()
    }

    fn parse_atom(&self, id: &str) -> Option<RainbowAtom> {
        decode_atom(id, self.params.n)
    }
}

/// Labels stored densely over `nodes^n`, position 0 most significant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Network<A> {
    n: usize,
    nodes: Vec<u32>,
    labels: Vec<A>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkViolation {
    pub condition: String,
    pub tuple: Vec<u32>,
    pub detail: String,
}

pub fn all_sequences(nodes: &[u32], len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::with_capacity(len)];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                nodes.iter().map(move |&x| {
                    let mut t = t.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

impl<A: Clone> Network<A> {
    pub fn from_fn(
        n: usize,
        nodes: impl IntoIterator<Item = u32>,
        mut f: impl FnMut(&[u32]) -> A,
    ) -> Network<A> {
        let mut nodes: Vec<u32> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let labels = all_sequences(&nodes, n).iter().map(|t| f(t)).collect();
        Network { n, nodes, labels }
    }

    pub fn from_labels(n: usize, nodes: Vec<u32>, labels: Vec<A>) -> Network<A> {
        assert!(
            nodes.windows(2).all(|w| w[0] < w[1]),
            "nodes must be sorted"
        );
        assert_eq!(labels.len(), nodes.len().pow(n as u32));
        Network { n, nodes, labels }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn labels(&self) -> &[A] {
        &self.labels
    }

    pub fn has_node(&self, x: u32) -> bool {
        self.nodes.binary_search(&x).is_ok()
    }

    pub fn index_of(&self, t: &[u32]) -> Option<usize> {
        if t.len() != self.n {
            return None;
        }
        let b = self.nodes.len();
        let mut idx = 0;
        for &x in t {
            idx = idx * b + self.nodes.binary_search(&x).ok()?;
        }
        Some(idx)
    }

    pub fn tuple_at(&self, mut idx: usize) -> Vec<u32> {
        let b = self.nodes.len();
        let mut t = vec![0; self.n];
        for p in (0..self.n).rev() {
            t[p] = self.nodes[idx % b];
            idx /= b;
        }
        t
    }

    pub fn get(&self, t: &[u32]) -> Option<&A> {
        self.index_of(t).map(|i| &self.labels[i])
    }

    pub fn tuples(&self) -> Vec<Vec<u32>> {
        all_sequences(&self.nodes, self.n)
    }

    /// Relabel atoms pointwise.
    pub fn map_labels<B: Clone>(&self, f: impl Fn(&A) -> B) -> Network<B> {
        Network {
            n: self.n,
            nodes: self.nodes.clone(),
            labels: self.labels.iter().map(f).collect(),
        }
    }

    /// Restriction to a subset of the nodes.
    pub fn restrict(&self, keep: &[u32]) -> Network<A> {
        Network::from_fn(
            self.n,
            keep.iter().copied().filter(|&x| self.has_node(x)),
            |t| self.get(t).expect("restricted tuple").clone(),
        )
    }
}

pub fn validate_network<S: AtomSpace>(space: &S, net: &Network<S::Atom>) -> Vec<NetworkViolation> {
    let n = net.n;
    let mut out = Vec::new();
    if n != space.dimension() {
        out.push(NetworkViolation {
            condition: "dimension".into(),
            tuple: vec![],
            detail: format!("network dimension {n} vs structure {}", space.dimension()),
        });
        return out;
    }
    for (idx, a) in net.labels.iter().enumerate() {
        let t = net.tuple_at(idx);
        for i in 0..n {
            for j in 0..n {
                if t[i] == t[j] && !space.in_diag(a, i, j) {
                    out.push(NetworkViolation {
                        condition: "diagonal".into(),
                        tuple: t.clone(),
                        detail: format!("label not in E_{i}{j}"),
                    });
                }
            }
            for &d in &net.nodes {
                let mut u = t.clone();
                u[i] = d;
                let b = net.get(&u).expect("node tuple");
                if !space.t_related(i, b, a) {
                    out.push(NetworkViolation {
                        condition: "cylindrifier".into(),
                        tuple: t.clone(),
                        detail: format!("replacing position {i} by {d} leaves the T_{i} class"),
                    });
                }
            }
        }
    }
    out
}

/// A network with labels on the long hyperedges, taken to be the
/// sequences of length `n+1`; shorter ones carry `λ0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hypernetwork<A> {
    pub net: Network<A>,
    pub hyper: BTreeMap<Vec<u32>, String>,
}

impl<A: Clone> Hypernetwork<A> {
    pub fn hyperlabel(&self, seq: &[u32]) -> Option<&str> {
        if seq.len() <= self.net.n {
            return Some(LAMBDA0);
        }
        self.hyper.get(seq).map(String::as_str)
    }

    pub fn long_sequences(&self) -> Vec<Vec<u32>> {
        all_sequences(&self.net.nodes, self.net.n + 1)
    }
}

/// `x ~ y` iff some tuple starting `x, y` is labelled inside `E_01`.
pub fn sim<S: AtomSpace>(space: &S, net: &Network<S::Atom>, x: u32, y: u32) -> bool {
    let rest = all_sequences(&net.nodes, net.n - 2);
    rest.iter().any(|z| {
        let mut t = vec![x, y];
        t.extend_from_slice(z);
        net.get(&t).is_some_and(|a| space.in_diag(a, 0, 1))
    })
}

pub fn sim_matrix<S: AtomSpace>(space: &S, net: &Network<S::Atom>) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for &x in &net.nodes {
        for &y in &net.nodes {
            if sim(space, net, x, y) {
                out.insert((x, y));
            }
        }
    }
    out
}

pub fn validate_hypernetwork<S: AtomSpace>(
    space: &S,
    h: &Hypernetwork<S::Atom>,
) -> Vec<NetworkViolation> {
    let mut out = validate_network(space, &h.net);
    let long = h.long_sequences();
    for s in &long {
        if !h.hyper.contains_key(s) {
            out.push(NetworkViolation {
                condition: "hyperlabel".into(),
                tuple: s.clone(),
                detail: "long hyperedge unlabelled".into(),
            });
        }
    }
    for s in h.hyper.keys() {
        if s.len() != h.net.n + 1 || !s.iter().all(|&x| h.net.has_node(x)) {
            out.push(NetworkViolation {
                condition: "hyperlabel".into(),
                tuple: s.clone(),
                detail: "label on a sequence outside the network".into(),
            });
        }
    }
    let rel = sim_matrix(space, &h.net);
    let mut by_label: BTreeMap<&str, Vec<&Vec<u32>>> = BTreeMap::new();
    for (s, l) in &h.hyper {
        by_label.entry(l.as_str()).or_default().push(s);
    }
    // Condition IV: related sequences share a label.
    for s in &long {
        for t in &long {
            if s < t
                && s.iter().zip(t).all(|(&x, &y)| rel.contains(&(x, y)))
                && h.hyper.get(s) != h.hyper.get(t)
            {
                out.push(NetworkViolation {
                    condition: "IV".into(),
                    tuple: s.clone(),
                    detail: format!("{s:?} ~ {t:?} but labels differ"),
                });
            }
        }
    }
    out
}

/// Finite partial map from naturals into the nodes of a network.
pub type NodeMap = BTreeMap<u32, u32>;

/// Pull labels and hyperlabels back along `theta`.
pub fn apply_map<A: Clone>(
    h: &Hypernetwork<A>,
    theta: &NodeMap,
) -> Result<Hypernetwork<A>, NetworkError> {
    for &y in theta.values() {
        if !h.net.has_node(y) {
            return Err(NetworkError::MissingNode(y));
        }
    }
    let img = |t: &[u32]| t.iter().map(|x| theta[x]).collect::<Vec<u32>>();
    let net = Network::from_fn(h.net.n, theta.keys().copied(), |t| {
        h.net.get(&img(t)).expect("image").clone()
    });
    let hyper = all_sequences(&net.nodes, net.n + 1)
        .into_iter()
        .map(|s| {
            let l = h.hyperlabel(&img(&s)).unwrap_or(LAMBDA0).to_string();
            (s, l)
        })
        .collect();
    Ok(Hypernetwork { net, hyper })
}

/// True iff `theta` is injective on its domain inside `M` and preserves
/// atoms and hyperlabels.
pub fn partial_isomorphism_check<A: Clone + Eq>(
    m: &Hypernetwork<A>,
    n: &Hypernetwork<A>,
    theta: &NodeMap,
) -> bool {
    let dom: Vec<u32> = theta.keys().copied().collect();
    let rng: BTreeSet<u32> = theta.values().copied().collect();
    if rng.len() != dom.len()
        || !dom.iter().all(|&x| m.net.has_node(x))
        || !rng.iter().all(|&y| n.net.has_node(y))
    {
        return false;
    }
    let img = |t: &[u32]| t.iter().map(|x| theta[x]).collect::<Vec<u32>>();
    all_sequences(&dom, m.net.n)
        .iter()
        .all(|t| m.net.get(t) == n.net.get(&img(t)))
        && all_sequences(&dom, m.net.n + 1)
            .iter()
            .all(|s| m.hyperlabel(s) == n.hyperlabel(&img(s)))
}

/// `N_Γ`: every tuple labelled by the atom it induces.
pub fn graph_to_network(g: &ColouredGraph, n: usize) -> Network<RainbowAtom> {
    Network::from_fn(n, g.nodes.iter().copied(), |t| RainbowAtom::of_tuple(g, t))
}

/// `Γ_N`: read edge colours off `N(x,y,y,…)` and shades off `N(ā,a_{n-2})`.
/// The network must be strict.
pub fn network_to_graph(net: &Network<RainbowAtom>) -> Result<ColouredGraph, NetworkError> {
    let n = net.n;
    for (idx, a) in net.labels.iter().enumerate() {
        let t = net.tuple_at(idx);
        for i in 0..n {
            for j in 0..n {
                if (t[i] == t[j]) != a.in_diag(i, j) {
                    return Err(NetworkError::NotStrict(t));
                }
            }
        }
    }
    let mut g = ColouredGraph::with_nodes(net.nodes.iter().copied());
    for &x in &net.nodes {
        for &y in &net.nodes {
            if x >= y {
                continue;
            }
            let mut t = vec![x];
            t.extend(std::iter::repeat(y).take(n - 1));
            let a = net.get(&t).ok_or(NetworkError::MissingNode(y))?;
            let c = a.graph.edge(0, 1).ok_or(NetworkError::Inconsistent(x, y))?;
            g.set_edge(x, y, c);
        }
    }
    if net.nodes.len() >= n - 1 {
        for base in distinct_tuples(&net.nodes, n - 1) {
            let mut t = base.clone();
            t.push(base[n - 2]);
            let a = net.get(&t).expect("tuple over nodes");
            let local: Vec<u32> = (0..n as u32 - 1).collect();
            if let Some(s) = a.graph.shade(&local) {
                g.set_shade(base, s);
            }
        }
    }
    // Every label must agree with the graph read off.
    for (idx, a) in net.labels.iter().enumerate() {
        let t = net.tuple_at(idx);
        if RainbowAtom::of_tuple(&g, &t) != *a {
            return Err(NetworkError::Inconsistent(t[0], t[1]));
        }
    }
    Ok(g)
}

/// Convert atom indices of an explicit rainbow structure into rainbow atoms.
pub fn explicit_to_rainbow(
    s: &AtomStructure,
    net: &Network<usize>,
) -> Result<Network<RainbowAtom>, NetworkError> {
    let n = net.n;
    let mut labels = Vec::with_capacity(net.labels.len());
    for &a in &net.labels {
        let id = &s.atoms()[a];
        labels.push(decode_atom(id, n).ok_or_else(|| NetworkError::UnknownAtom(id.clone()))?);
    }
    Ok(Network::from_labels(n, net.nodes.clone(), labels))
}

pub fn rainbow_to_explicit(
    s: &AtomStructure,
    net: &Network<RainbowAtom>,
) -> Result<Network<usize>, NetworkError> {
    let mut labels = Vec::with_capacity(net.labels.len());
    for a in &net.labels {
        let id = a.encode();
        labels.push(s.atom_index(&id).ok_or(NetworkError::UnknownAtom(id))?);
    }
    Ok(Network::from_labels(net.n, net.nodes.clone(), labels))
}

pub fn network_to_json<S: AtomSpace>(
    space: &S,
    structure_id: &str,
    h: &Hypernetwork<S::Atom>,
) -> Value {
    json!({
        "structure": structure_id,
        "nodes": h.net.nodes,
        "labels": h.net.labels.iter().enumerate().map(|(i, a)| json!({
            "tuple": h.net.tuple_at(i),
            "atom": space.atom_id(a),
        })).collect::<Vec<_>>(),
        "hyperlabels": h.hyper.iter().map(|(s, l)| json!({"seq": s, "label": l})).collect::<Vec<_>>(),
    })
}

fn node_list(v: Option<&Value>) -> Result<Vec<u32>, NetworkError> {
    v.and_then(Value::as_array)
        .ok_or_else(|| NetworkError::Json("expected a node list".into()))?
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|x| x as u32)
                .ok_or_else(|| NetworkError::Json("node ids are naturals".into()))
        })
        .collect()
}

pub fn network_from_json<S: AtomSpace>(
    space: &S,
    v: &Value,
) -> Result<Hypernetwork<S::Atom>, NetworkError> {
    let n = space.dimension();
    let mut nodes = node_list(v.get("nodes"))?;
    nodes.sort_unstable();
    nodes.dedup();
    let mut labels: BTreeMap<Vec<u32>, S::Atom> = BTreeMap::new();
    for l in v
        .get("labels")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let t = node_list(l.get("tuple"))?;
        let id = l
            .get("atom")
            .and_then(Value::as_str)
            .ok_or_else(|| NetworkError::Json("label needs atom".into()))?;
        let a = space
            .parse_atom(id)
            .ok_or_else(|| NetworkError::UnknownAtom(id.into()))?;
        labels.insert(t, a);
    }
    let mut missing = None;
    let net = Network::from_fn(n, nodes, |t| match labels.get(t) {
        Some(a) => Some(a.clone()),
        None => {
            missing.get_or_insert(t.to_vec());
            None
        }
    });
    if let Some(t) = missing {
        return Err(NetworkError::Json(format!("tuple {t:?} unlabelled")));
    }
    let net = net.map_labels(|a| a.clone().expect("checked"));
    let mut hyper = BTreeMap::new();
    for h in v
        .get("hyperlabels")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let s = node_list(h.get("seq"))?;
        let l = h
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| NetworkError::Json("hyperlabel needs label".into()))?;
        hyper.insert(s, l.to_string());
    }
    Ok(Hypernetwork { net, hyper })
}
