//! The games played directly on coloured graphs of the rainbow construction:
//! the F game with node reuse, the hypernetwork game H, ∀'s cone script and
//! ∃'s owner/envelope strategy for H.
//!
//! Positions are strict: every network is the translation of a J-member, so
//! faces have distinct nodes and demanded atoms put the new node apart from
//! the face.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::ControlFlow;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::games::{
    face_tuple, first_move, least_fresh, node_maps, transformation_pool, AbelardStrategy,
    EloiseStrategy, GameError, GameKind, GameModel, Player, Solver, Trace, TraceStep, Visit,
};
use crate::networks::{all_sequences, NodeMap};
use crate::rainbow::*;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("redBound {red_bound} cannot hold {tints} tints spaced {gap} apart")]
    Spacing {
        red_bound: u32,
        tints: usize,
        gap: u64,
    },
    #[error("script needs greenLow <= {0}")]
    ScriptTints(i32),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// A coloured graph with labels on its long hyperedges (sequences of length
/// `n+1`); the F game leaves `hyper` empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RNet {
    pub graph: ColouredGraph,
    pub hyper: BTreeMap<Vec<u32>, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RState {
    pub nets: Vec<RNet>,
    pub fresh: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RMove {
    Initial(RainbowAtom),
    Cylindrifier {
        net: usize,
        face: Vec<u32>,
        k: u32,
        b: RainbowAtom,
        l: usize,
    },
    Transformation {
        net: usize,
        theta: NodeMap,
    },
    Amalgamation {
        m: usize,
        n: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RKey {
    F(Vec<Colour>, Vec<(Vec<u32>, Shade)>, usize),
    H(Vec<RNet>),
}

pub struct RainbowGame {
    pub params: RainbowParams,
    pub kind: GameKind,
    palette: OnceLock<Vec<Colour>>,
}

fn hyper_label(i: u64) -> String {
    format!("h{i}")
}

fn strict(a: &RainbowAtom) -> bool {
    a.pattern.iter().enumerate().all(|(i, &p)| p as usize == i)
}

/// The graph a demanded atom puts on `face` with `k` at position `l`.
pub fn demand_graph(face: &[u32], l: usize, k: u32, b: &RainbowAtom) -> ColouredGraph {
    let t = face_tuple(face, l, k);
    b.graph.rename(|p| t[p as usize])
}

fn distinct(xs: &[u32]) -> bool {
    xs.iter().enumerate().all(|(i, x)| !xs[..i].contains(x))
}

fn has_green(g: &ColouredGraph, t: &[u32]) -> bool {
    (0..t.len()).any(|a| (a + 1..t.len()).any(|b| g.is_green(t[a], t[b])))
}

/// Tints of the cones on base `t`.
fn cone_tints(cones: &[Cone], t: &[u32]) -> Vec<i32> {
    cones
        .iter()
        .filter(|c| c.base == t)
        .map(|c| c.tint)
        .collect()
}

/// The least shade containing `tints`.
pub fn least_shade(params: &RainbowParams, tints: &[i32]) -> Shade {
    let mut m = 0u64;
    for &i in tints {
        if i < 0 || i as u32 >= params.yellow_universe {
            return Shade::All;
        }
        m |= 1 << i;
    }
    Shade::Set(m)
}

fn red_sorted(a: u32, b: u32) -> Colour {
    Colour::Red(a.min(b), a.max(b))
}

fn long_labels(
    n: usize,
    nodes: &[u32],
    fresh: &mut u64,
    mut keep: impl FnMut(&[u32]) -> Option<String>,
) -> BTreeMap<Vec<u32>, String> {
    all_sequences(nodes, n + 1)
        .into_iter()
        .map(|s| {
            let l = keep(&s).unwrap_or_else(|| {
                *fresh += 1;
                hyper_label(*fresh)
            });
            (s, l)
        })
        .collect()
}

impl RainbowGame {
    pub fn new(params: RainbowParams, kind: GameKind) -> RainbowGame {
        RainbowGame {
            params,
            kind,
            palette: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    fn is_h(&self) -> bool {
        self.kind == GameKind::H
    }

    /// The palette with ∃'s preferred colours first.
    pub fn palette(&self) -> &[Colour] {
        self.palette.get_or_init(|| {
            let mut p = self.params.palette();
            let rank = |c: &Colour| match c {
                Colour::Black => 0,
                Colour::WhiteF(_) => 1,
                Colour::White => 2,
                Colour::Red(..) => 3,
                Colour::Yellow => 4,
                _ => 5,
            };
            p.sort_by_key(|c| rank(c));
            p
        })
    }

    /// Networks ∀ may build on: the current one in F, all of them in H.
    pub fn current(&self, s: &RState) -> Vec<usize> {
        match self.kind {
            GameKind::H => (0..s.nets.len()).collect(),
            GameKind::F { .. } => s.nets.len().checked_sub(1).into_iter().collect(),
        }
    }

    /// Shade options for `t`: the least admissible one first.
    fn shade_options(&self, cones: &[Cone], t: &[u32]) -> Vec<Shade> {
        let tints = cone_tints(cones, t);
        let least = least_shade(&self.params, &tints);
        let mut out = vec![least];
        for s in self.params.shades() {
            if s != least && tints.iter().all(|&i| s.contains(i)) {
                out.push(s);
            }
        }
        out
    }

    /// Fill in `edges` and then every unshaded green-free tuple accepted by
    /// `is_new`, visiting each J-member obtained.
    fn complete(
        &self,
        g: &mut ColouredGraph,
        edges: &[(u32, u32)],
        is_new: &dyn Fn(&[u32]) -> bool,
        f: Visit<'_, ColouredGraph>,
    ) -> ControlFlow<()> {
        if let Some((&(u, v), rest)) = edges.split_first() {
            for &c in self.palette() {
                if g.triangle_ok(u, v, c) {
                    g.set_edge(u, v, c);
                    self.complete(g, rest, is_new, f)?;
                }
            }
            g.edges.remove(&(u.min(v), u.max(v)));
            return ControlFlow::Continue(());
        }
        let n = self.n();
        let tuples: Vec<Vec<u32>> = if g.nodes.len() + 1 >= n {
            distinct_tuples(&g.nodes, n - 1)
                .into_iter()
                .filter(|t| !g.tuples.contains_key(t) && is_new(t) && !has_green(g, t))
                .collect()
        } else {
            Vec::new()
        };
        let cones = find_cones(g, n);
        let options: Vec<Vec<Shade>> = tuples
            .iter()
            .map(|t| self.shade_options(&cones, t))
            .collect();
        let r = self.shade_rec(g, &tuples, &options, 0, f);
        for t in &tuples {
            g.tuples.remove(t);
        }
        r
    }

    fn shade_rec(
        &self,
        g: &mut ColouredGraph,
        tuples: &[Vec<u32>],
        options: &[Vec<Shade>],
        i: usize,
        f: Visit<'_, ColouredGraph>,
    ) -> ControlFlow<()> {
        if i == tuples.len() {
            if is_j_member(g, &self.params) {
                return f(g.clone());
            }
            return ControlFlow::Continue(());
        }
        for &s in &options[i] {
            g.tuples.insert(tuples[i].clone(), s);
            self.shade_rec(g, tuples, options, i + 1, f)?;
        }
        ControlFlow::Continue(())
    }

    /// Strict `n`-node J-members on `0..n`, as atoms.
    pub fn initial_atoms(&self, f: Visit<'_, RainbowAtom>) -> ControlFlow<()> {
        let n = self.n() as u32;
        let mut g = ColouredGraph::with_nodes(0..n);
        let pairs: Vec<(u32, u32)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        let ids: Vec<u32> = (0..n).collect();
        self.complete(&mut g, &pairs, &|_| true, &mut |g| {
            f(RainbowAtom::of_tuple(&g, &ids))
        })
    }

    /// Does some node of `g` already witness `b` on the face?
    pub fn witness_exists(
        &self,
        g: &ColouredGraph,
        face: &[u32],
        l: usize,
        b: &RainbowAtom,
    ) -> bool {
        g.nodes
            .iter()
            .any(|&w| !face.contains(&w) && RainbowAtom::of_tuple(g, &face_tuple(face, l, w)) == *b)
    }

    fn cylindrifier_legal(
        &self,
        g: &ColouredGraph,
        face: &[u32],
        k: u32,
        b: &RainbowAtom,
        l: usize,
        restricted: bool,
    ) -> bool {
        let n = self.n();
        if face.len() != n - 1 || l >= n || !distinct(face) || !face.iter().all(|&x| g.has_node(x))
        {
            return false;
        }
        if face.contains(&k)
            || !strict(b)
            || b.pattern.len() != n
            || b.graph.nodes != (0..n as u32).collect::<Vec<_>>()
        {
            return false;
        }
        match self.kind {
            GameKind::H => {
                if Some(k) != least_fresh(&g.nodes) {
                    return false;
                }
            }
            GameKind::F { m } => {
                if k as usize >= m || (!g.has_node(k) && g.nodes.len() >= m) {
                    return false;
                }
            }
        }
        if !is_j_member(&b.graph, &self.params) {
            return false;
        }
        if b.off(l) != RainbowAtom::of_tuple(g, face) {
            return false;
        }
        !(restricted && self.witness_exists(g, face, l, b))
    }

    /// Every demand ∀ may make on `face` with new node `k` (apex at the last
    /// position; other positions give the same demands up to reordering).
    fn demands(
        &self,
        g: &ColouredGraph,
        face: &[u32],
        k: u32,
        restricted: bool,
        f: Visit<'_, RainbowAtom>,
    ) -> ControlFlow<()> {
        let l = self.n() - 1;
        let mut d = g.restrict(face);
        d.add_node(k);
        let edges: Vec<(u32, u32)> = face.iter().map(|&x| (x, k)).collect();
        let t = face_tuple(face, l, k);
        self.complete(&mut d, &edges, &|t| t.contains(&k), &mut |d| {
            let b = RainbowAtom::of_tuple(&d, &t);
            if restricted && self.witness_exists(g, face, l, &b) {
                return ControlFlow::Continue(());
            }
            f(b)
        })
    }

    /// The graph after ∀'s demand with the old edges through `k` dropped,
    /// and the nodes whose edge to `k` ∃ must colour.
    pub fn cylinder_base(
        &self,
        g: &ColouredGraph,
        face: &[u32],
        k: u32,
        b: &RainbowAtom,
        l: usize,
    ) -> (ColouredGraph, Vec<u32>) {
        let mut m = g.clone();
        m.remove_node(k);
        m.add_node(k);
        let d = demand_graph(face, l, k, b);
        for (&(u, v), &c) in &d.edges {
            m.set_edge(u, v, c);
        }
        for (t, &s) in &d.tuples {
            m.set_shade(t.clone(), s);
        }
        let others: Vec<u32> = m
            .nodes
            .iter()
            .copied()
            .filter(|x| *x != k && !face.contains(x))
            .collect();
        (m, others)
    }

    pub fn amalgamation_legal(&self, m: &RNet, n: &RNet, restricted: bool) -> bool {
        let common: Vec<u32> = m
            .graph
            .nodes
            .iter()
            .copied()
            .filter(|&x| n.graph.has_node(x))
            .collect();
        if common.is_empty() || m.graph.restrict(&common) != n.graph.restrict(&common) {
            return false;
        }
        let len = self.n() + 1;
        if all_sequences(&common, len)
            .iter()
            .any(|s| m.hyper.get(s) != n.hyper.get(s))
        {
            return false;
        }
        if !restricted {
            return true;
        }
        for &a in m.graph.nodes.iter().filter(|x| !n.graph.has_node(**x)) {
            for &b in n.graph.nodes.iter().filter(|x| !m.graph.has_node(**x)) {
                let theta: NodeMap = common.iter().map(|&x| (x, x)).chain([(a, b)]).collect();
                if partial_iso(m, n, &theta, len) {
                    return false;
                }
            }
        }
        true
    }

    fn transformation_legal(&self, s: &RState, net: usize, theta: &NodeMap) -> bool {
        let Some(h) = s.nets.get(net) else {
            return false;
        };
        let nodes = &h.graph.nodes;
        let pool = transformation_pool(nodes);
        let values: BTreeSet<u32> = theta.values().copied().collect();
        self.is_h()
            && theta.keys().all(|x| pool.contains(x))
            && values.len() == theta.len()
            && values.iter().eq(nodes.iter())
    }

    fn apply_transformation(&self, s: &RState, net: usize, theta: &NodeMap) -> RNet {
        let h = &s.nets[net];
        let graph = h.graph.restrict(&h.graph.nodes).rename_onto(theta);
        let hyper = all_sequences(&graph.nodes, self.n() + 1)
            .into_iter()
            .map(|x| {
                let img: Vec<u32> = x.iter().map(|v| theta[v]).collect();
                let l = h.hyper.get(&img).cloned().unwrap_or_default();
                (x, l)
            })
            .collect();
        RNet { graph, hyper }
    }

    fn union_graph(m: &ColouredGraph, n: &ColouredGraph) -> ColouredGraph {
        let mut g = m.clone();
        for &x in &n.nodes {
            g.add_node(x);
        }
        for (&(u, v), &c) in &n.edges {
            g.set_edge(u, v, c);
        }
        for (t, &s) in &n.tuples {
            g.set_shade(t.clone(), s);
        }
        g
    }

    fn amalgam_edges(m: &ColouredGraph, n: &ColouredGraph) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for &a in m.nodes.iter().filter(|x| !n.has_node(**x)) {
            for &b in n.nodes.iter().filter(|x| !m.has_node(**x)) {
                out.push((a, b));
            }
        }
        out
    }

    fn cylinder_hyper(
        &self,
        old: &RNet,
        m: &ColouredGraph,
        k: u32,
        fresh: &mut u64,
    ) -> BTreeMap<Vec<u32>, String> {
        if !self.is_h() {
            return BTreeMap::new();
        }
        long_labels(self.n(), &m.nodes, fresh, |s| {
            if s.contains(&k) {
                None
            } else {
                old.hyper.get(s).cloned()
            }
        })
    }

    fn amalgam_hyper(
        &self,
        a: &RNet,
        b: &RNet,
        l: &ColouredGraph,
        fresh: &mut u64,
    ) -> BTreeMap<Vec<u32>, String> {
        long_labels(self.n(), &l.nodes, fresh, |s| {
            a.hyper.get(s).or_else(|| b.hyper.get(s)).cloned()
        })
    }

    fn push_net(&self, s: &RState, net: RNet, fresh: u64) -> RState {
        let mut nets = match self.kind {
            GameKind::H => s.nets.clone(),
            GameKind::F { .. } => Vec::new(),
        };
        nets.push(net);
        RState { nets, fresh }
    }

    /// ∃'s network after the initial move: the atom's graph on `0..n`.
    pub fn initial_net(&self, a: &RainbowAtom, fresh: &mut u64) -> RNet {
        let graph = a.graph.clone();
        let hyper = if self.is_h() {
            long_labels(self.n(), &graph.nodes, fresh, |_| None)
        } else {
            BTreeMap::new()
        };
        RNet { graph, hyper }
    }

    pub fn cylinder_response(&self, s: &RState, net: usize, k: u32, m: ColouredGraph) -> RState {
        let mut fresh = s.fresh;
        let hyper = self.cylinder_hyper(&s.nets[net], &m, k, &mut fresh);
        self.push_net(s, RNet { graph: m, hyper }, fresh)
    }

    pub fn amalgam_response(&self, s: &RState, a: usize, b: usize, l: ColouredGraph) -> RState {
        let mut fresh = s.fresh;
        let hyper = self.amalgam_hyper(&s.nets[a], &s.nets[b], &l, &mut fresh);
        self.push_net(s, RNet { graph: l, hyper }, fresh)
    }

    fn canonical_f_key(&self, g: &ColouredGraph) -> RKey {
        let k = g.nodes.len();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best: Option<(Vec<Colour>, Vec<(Vec<u32>, Shade)>)> = None;
        let mut consider = |perm: &[usize]| {
            // perm[i] is the old position of new node i.
            let mut edges = Vec::with_capacity(k * k / 2);
            for i in 0..k {
                for j in i + 1..k {
                    edges.push(
                        g.edge(g.nodes[perm[i]], g.nodes[perm[j]])
                            .unwrap_or(Colour::White),
                    );
                }
            }
            let mut inv = vec![0u32; k];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i as u32;
            }
            let mut tuples: Vec<(Vec<u32>, Shade)> = g
                .tuples
                .iter()
                .map(|(t, &s)| {
                    (
                        t.iter()
                            .map(|x| inv[g.nodes.binary_search(x).expect("node")])
                            .collect(),
                        s,
                    )
                })
                .collect();
            tuples.sort();
            let cand = (edges, tuples);
            if best.as_ref().map_or(true, |b| cand < *b) {
                best = Some(cand);
            }
        };
        permute(&mut perm, 0, &mut consider);
        let (e, t) = best.unwrap_or_default();
        RKey::F(e, t, k)
    }
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, f);
        p.swap(i, j);
    }
}

/// Injective `theta` from `M` to `N` preserving colours, shades and labels.
pub fn partial_iso(m: &RNet, n: &RNet, theta: &NodeMap, long: usize) -> bool {
    let dom: Vec<u32> = theta.keys().copied().collect();
    let img: BTreeSet<u32> = theta.values().copied().collect();
    if img.len() != dom.len() {
        return false;
    }
    for (i, &u) in dom.iter().enumerate() {
        for &v in &dom[i + 1..] {
            if m.graph.edge(u, v) != n.graph.edge(theta[&u], theta[&v]) {
                return false;
            }
        }
    }
    for (t, s) in &m.graph.tuples {
        if t.iter().all(|x| theta.contains_key(x)) {
            let u: Vec<u32> = t.iter().map(|x| theta[x]).collect();
            if n.graph.shade(&u) != Some(*s) {
                return false;
            }
        }
    }
    all_sequences(&dom, long).iter().all(|s| {
        let u: Vec<u32> = s.iter().map(|x| theta[x]).collect();
        m.hyper.get(s) == n.hyper.get(&u)
    })
}

trait RenameOnto {
    fn rename_onto(&self, theta: &NodeMap) -> ColouredGraph;
}

impl RenameOnto for ColouredGraph {
    /// The graph on `dom(theta)` pulled back along a bijection onto the nodes.
    fn rename_onto(&self, theta: &NodeMap) -> ColouredGraph {
        let inv: BTreeMap<u32, u32> = theta.iter().map(|(&a, &b)| (b, a)).collect();
        self.rename(|x| inv[&x])
    }
}

impl GameModel for RainbowGame {
    type State = RState;
    type Move = RMove;
    type Key = RKey;

    fn initial_state(&self) -> RState {
        RState::default()
    }

    fn abelard_moves(&self, s: &RState, restricted: bool, f: Visit<'_, RMove>) -> ControlFlow<()> {
        if s.nets.is_empty() {
            return self.initial_atoms(&mut |a| f(RMove::Initial(a)));
        }
        let n = self.n();
        for idx in self.current(s) {
            let g = &s.nets[idx].graph;
            let ks: Vec<u32> = match self.kind {
                GameKind::H => least_fresh(&g.nodes).into_iter().collect(),
                GameKind::F { m } => {
                    let mut ks = g.nodes.clone();
                    if g.nodes.len() < m {
                        ks.extend(least_fresh(&g.nodes).filter(|&k| (k as usize) < m));
                    }
                    ks
                }
            };
            for face in distinct_tuples(&g.nodes, n - 1) {
                for &k in ks.iter().filter(|k| !face.contains(k)) {
                    self.demands(g, &face, k, restricted, &mut |b| {
                        f(RMove::Cylindrifier {
                            net: idx,
                            face: face.clone(),
                            k,
                            b,
                            l: n - 1,
                        })
                    })?;
                }
            }
        }
        if !self.is_h() {
            return ControlFlow::Continue(());
        }
        for (idx, h) in s.nets.iter().enumerate() {
            let nodes = &h.graph.nodes;
            node_maps(&transformation_pool(nodes), nodes, true, &mut |theta| {
                f(RMove::Transformation { net: idx, theta })
            })?;
        }
        for i in 0..s.nets.len() {
            for j in i + 1..s.nets.len() {
                if self.amalgamation_legal(&s.nets[i], &s.nets[j], restricted) {
                    f(RMove::Amalgamation { m: i, n: j })?;
                }
            }
        }
        ControlFlow::Continue(())
    }

    fn eloise_responses(&self, s: &RState, m: &RMove, f: Visit<'_, RState>) -> ControlFlow<()> {
        match m {
            RMove::Initial(a) => {
                let mut fresh = s.fresh;
                let net = self.initial_net(a, &mut fresh);
                f(self.push_net(s, net, fresh))
            }
            RMove::Cylindrifier { net, face, k, b, l } => {
                let (mut g, others) = self.cylinder_base(&s.nets[*net].graph, face, *k, b, *l);
                let edges: Vec<(u32, u32)> = others.iter().map(|&x| (x, *k)).collect();
                let span: Vec<u32> = face.iter().copied().chain([*k]).collect();
                let k = *k;
                self.complete(
                    &mut g,
                    &edges,
                    &|t| t.contains(&k) && !t.iter().all(|x| span.contains(x)),
                    &mut |g| f(self.cylinder_response(s, *net, k, g)),
                )
            }
            RMove::Transformation { net, theta } => {
                let r = self.apply_transformation(s, *net, theta);
                f(self.push_net(s, r, s.fresh))
            }
            RMove::Amalgamation { m: a, n: b } => {
                let (ga, gb) = (&s.nets[*a].graph, &s.nets[*b].graph);
                let mut g = Self::union_graph(ga, gb);
                let edges = Self::amalgam_edges(ga, gb);
                self.complete(
                    &mut g,
                    &edges,
                    &|t| !t.iter().all(|x| ga.has_node(*x)) && !t.iter().all(|x| gb.has_node(*x)),
                    &mut |g| f(self.amalgam_response(s, *a, *b, g)),
                )
            }
        }
    }

    fn key(&self, s: &RState) -> RKey {
        match self.kind {
            GameKind::F { .. } => match s.nets.last() {
                Some(h) => self.canonical_f_key(&h.graph),
                None => RKey::F(Vec::new(), Vec::new(), usize::MAX),
            },
            GameKind::H => RKey::H(s.nets.clone()),
        }
    }

    fn move_json(&self, m: &RMove) -> Value {
        match m {
            RMove::Initial(a) => json!({"type": "initial", "atom": a.encode()}),
            RMove::Cylindrifier { net, face, k, b, l } => json!({
                "type": "cylindrifier", "net": net, "face": face, "k": k, "atom": b.encode(), "l": l,
            }),
            RMove::Transformation { net, theta } => json!({
                "type": "transformation", "net": net,
                "theta": theta.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
            }),
            RMove::Amalgamation { m, n } => json!({"type": "amalgamation", "m": m, "n": n}),
        }
    }

    fn state_json(&self, s: &RState) -> Value {
        json!({
            "nets": s.nets.iter().map(|h| {
                let mut by_label: BTreeMap<&str, Vec<&Vec<u32>>> = BTreeMap::new();
                for (x, l) in &h.hyper {
                    by_label.entry(l.as_str()).or_default().push(x);
                }
                json!({"graph": h.graph.to_json(), "hyperlabels": by_label})
            }).collect::<Vec<_>>(),
        })
    }

    fn move_from_json(&self, v: &Value) -> Result<RMove, GameError> {
        let err = |m: &str| GameError::Json(m.to_string());
        let num = |k: &str| {
            v.get(k)
                .and_then(Value::as_u64)
                .ok_or_else(|| err(&format!("missing {k}")))
        };
        let atom = |k: &str| {
            v.get(k)
                .and_then(Value::as_str)
                .and_then(|id| decode_atom(id, self.n()))
                .ok_or_else(|| err("bad atom"))
        };
        match v.get("type").and_then(Value::as_str) {
            Some("initial") => Ok(RMove::Initial(atom("atom")?)),
            Some("cylindrifier") => Ok(RMove::Cylindrifier {
                net: num("net")? as usize,
                face: v
                    .get("face")
                    .and_then(Value::as_array)
                    .ok_or_else(|| err("missing face"))?
                    .iter()
                    .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(|| err("bad face")))
                    .collect::<Result<_, _>>()?,
                k: num("k")? as u32,
                b: atom("atom")?,
                l: num("l")? as usize,
            }),
            Some("transformation") => Ok(RMove::Transformation {
                net: num("net")? as usize,
                theta: v
                    .get("theta")
                    .and_then(Value::as_array)
                    .ok_or_else(|| err("missing theta"))?
                    .iter()
                    .map(|p| match p.as_array().map(|a| a.as_slice()) {
                        Some([a, b]) => match (a.as_u64(), b.as_u64()) {
                            (Some(a), Some(b)) => Ok((a as u32, b as u32)),
                            _ => Err(err("bad theta pair")),
                        },
                        _ => Err(err("bad theta pair")),
                    })
                    .collect::<Result<_, _>>()?,
            }),
            Some("amalgamation") => Ok(RMove::Amalgamation {
                m: num("m")? as usize,
                n: num("n")? as usize,
            }),
            _ => Err(err("unknown move type")),
        }
    }

    fn is_move_legal(&self, s: &RState, m: &RMove, restricted: bool) -> bool {
        match m {
            RMove::Initial(a) => {
                s.nets.is_empty()
                    && strict(a)
                    && a.pattern.len() == self.n()
                    && a.graph.nodes == (0..self.n() as u32).collect::<Vec<_>>()
                    && is_j_member(&a.graph, &self.params)
            }
            _ if s.nets.is_empty() => false,
            RMove::Cylindrifier { net, face, k, b, l } => {
                self.current(s).contains(net)
                    && self.cylindrifier_legal(&s.nets[*net].graph, face, *k, b, *l, restricted)
            }
            RMove::Transformation { net, theta } => self.transformation_legal(s, *net, theta),
            RMove::Amalgamation { m, n } => {
                self.is_h()
                    && m < n
                    && *n < s.nets.len()
                    && self.amalgamation_legal(&s.nets[*m], &s.nets[*n], restricted)
            }
        }
    }

    fn is_response_legal(&self, s: &RState, m: &RMove, r: &RState) -> bool {
        let keep = match self.kind {
            GameKind::H => s.nets.len(),
            GameKind::F { .. } => 0,
        };
        if r.nets.len() != keep + 1 || r.nets[..keep] != s.nets[..keep] {
            return false;
        }
        let new = &r.nets[keep];
        let g = &new.graph;
        if !is_j_member(g, &self.params) {
            return false;
        }
        let labels_ok = |old: &dyn Fn(&[u32]) -> Option<String>| {
            if !self.is_h() {
                return new.hyper.is_empty();
            }
            let long = all_sequences(&g.nodes, self.n() + 1);
            long.len() == new.hyper.len()
                && long.iter().all(|x| match (new.hyper.get(x), old(x)) {
                    (None, _) => false,
                    (Some(a), Some(b)) => *a == b,
                    (Some(a), None) => !a.is_empty(),
                })
        };
        match m {
            RMove::Initial(a) => *g == a.graph && labels_ok(&|_| None),
            RMove::Cylindrifier { net, face, k, b, l } => {
                let old = &s.nets[*net];
                let mut nodes = old.graph.nodes.clone();
                if !nodes.contains(k) {
                    nodes.push(*k);
                    nodes.sort_unstable();
                }
                let mut off_old = old.graph.clone();
                off_old.remove_node(*k);
                let mut off_new = g.clone();
                off_new.remove_node(*k);
                let span: Vec<u32> = face.iter().copied().chain([*k]).collect();
                g.nodes == nodes
                    && off_new == off_old
                    && g.restrict(&span) == demand_graph(face, *l, *k, b)
                    && labels_ok(&|x| {
                        if x.contains(k) {
                            None
                        } else {
                            old.hyper.get(x).cloned()
                        }
                    })
            }
            RMove::Transformation { net, theta } => {
                *new == self.apply_transformation(s, *net, theta)
            }
            RMove::Amalgamation { m: a, n: b } => {
                let (ma, nb) = (&s.nets[*a], &s.nets[*b]);
                g.nodes == Self::union_graph(&ma.graph, &nb.graph).nodes
                    && g.restrict(&ma.graph.nodes) == ma.graph
                    && g.restrict(&nb.graph.nodes) == nb.graph
                    && labels_ok(&|x| ma.hyper.get(x).or_else(|| nb.hyper.get(x)).cloned())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ∀'s cone script for F^{n+2}.

/// The graph of ∀'s opening: a 0-cone with apex `n-1` over the white base
/// `0..n-2`, every base tuple shaded ALL.
pub fn script_initial_graph(n: usize) -> ColouredGraph {
    let apex = n as u32 - 1;
    let mut g = ColouredGraph::with_nodes(0..n as u32);
    for i in 0..apex {
        for j in i + 1..apex {
            g.set_edge(i, j, Colour::White);
        }
    }
    g.set_edge(0, apex, Colour::GreenSuper(0));
    for i in 1..apex {
        g.set_edge(i, apex, Colour::GreenI(i as u8));
    }
    for t in distinct_tuples(&(0..apex).collect::<Vec<_>>(), n - 1) {
        g.set_shade(t, Shade::All);
    }
    g
}

/// ∀ keeps demanding cones of decreasing tint on the base `0..n-2`: fresh
/// apexes `n` and `n+1` with tints -1 and -2, then reused apexes in the order
/// `n-1, n, n+1, ...` with tints -3, -4, ... .  The printed script names the
/// base node `n-2` as the first reused node; reusing a base node would break
/// the face, so the earliest apex is reused instead.  Past the script ∀
/// falls back to a budgeted exhaustive refutation.
#[derive(Clone, Debug)]
pub struct ScriptAbelard {
    pub n: usize,
    pub rounds: usize,
    pub fallback_budget: usize,
}

impl ScriptAbelard {
    pub fn new(params: &RainbowParams, rounds: usize) -> Result<ScriptAbelard, StrategyError> {
        let need = -(rounds.max(4) as i32 - 1);
        if params.green_low > -3 || params.green_low > need {
            return Err(StrategyError::ScriptTints(need.min(-3)));
        }
        Ok(ScriptAbelard {
            n: params.n,
            rounds,
            fallback_budget: 50_000,
        })
    }

    /// The scripted move at `step` (0 is the opening), if the script covers it.
    pub fn scripted(&self, game: &RainbowGame, s: &RState, step: usize) -> Option<RMove> {
        let n = self.n;
        if step == 0 {
            let g = script_initial_graph(n);
            return Some(RMove::Initial(RainbowAtom::of_tuple(
                &g,
                &(0..n as u32).collect::<Vec<_>>(),
            )));
        }
        let tint = -(step as i32);
        if tint < game.params.green_low {
            return None;
        }
        let k = if step <= 2 {
            (n + step - 1) as u32
        } else {
            (n - 1 + (step - 3) % 3) as u32
        };
        let g = &s.nets.last()?.graph;
        let face: Vec<u32> = (0..n as u32 - 1).collect();
        let mut d = g.restrict(&face);
        d.add_node(k);
        d.set_edge(0, k, Colour::GreenSuper(tint));
        for i in 1..n as u32 - 1 {
            d.set_edge(i, k, Colour::GreenI(i as u8));
        }
        let b = RainbowAtom::of_tuple(&d, &face_tuple(&face, n - 1, k));
        Some(RMove::Cylindrifier {
            net: s.nets.len() - 1,
            face,
            k,
            b,
            l: n - 1,
        })
    }
}

impl AbelardStrategy<RainbowGame> for ScriptAbelard {
    fn choose(&mut self, game: &RainbowGame, s: &RState, rounds_left: usize) -> Option<RMove> {
        let step = self.rounds - rounds_left;
        if let Some(m) = self.scripted(game, s, step) {
            return Some(m);
        }
        let mut solver = Solver::new(game, true, self.fallback_budget);
        match solver.refuting_move(s, rounds_left) {
            Ok(Some(m)) => Some(m),
            _ => first_move(game, s, true),
        }
    }
}

/// ∃ against a known deterministic ∀: depth-first search over her answers
/// for one that survives the rest of the script.
pub struct ScriptSearchEloise {
    pub script: ScriptAbelard,
    pub budget: usize,
    pub expanded: usize,
}

impl ScriptSearchEloise {
    pub fn new(script: ScriptAbelard, budget: usize) -> Self {
        ScriptSearchEloise {
            script,
            budget,
            expanded: 0,
        }
    }

    fn survives(&mut self, game: &RainbowGame, s: &RState, left: usize) -> Result<bool, GameError> {
        if left == 0 {
            return Ok(true);
        }
        let step = self.script.rounds - left;
        let Some(mv) = self.script.scripted(game, s, step) else {
            return Ok(true);
        };
        if !game.is_move_legal(s, &mv, true) {
            return Ok(true);
        }
        Ok(self.answer(game, s, &mv, left)?.is_some())
    }

    fn answer(
        &mut self,
        game: &RainbowGame,
        s: &RState,
        mv: &RMove,
        left: usize,
    ) -> Result<Option<RState>, GameError> {
        let mut found = None;
        let mut err = None;
        let _ = game.eloise_responses(s, mv, &mut |r| {
            self.expanded += 1;
            if self.expanded > self.budget {
                err = Some(GameError::Budget {
                    budget: self.budget,
                    table: 0,
                });
                return ControlFlow::Break(());
            }
            match self.survives(game, &r, left - 1) {
                Ok(true) => {
                    found = Some(r);
                    ControlFlow::Break(())
                }
                Ok(false) => ControlFlow::Continue(()),
                Err(e) => {
                    err = Some(e);
                    ControlFlow::Break(())
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(found),
        }
    }
}

impl EloiseStrategy<RainbowGame> for ScriptSearchEloise {
    fn respond(
        &mut self,
        game: &RainbowGame,
        s: &RState,
        mv: &RMove,
        rounds_left: usize,
    ) -> Option<RState> {
        match self.answer(game, s, mv, rounds_left) {
            Ok(Some(r)) => Some(r),
            _ => crate::games::first_response(game, s, mv),
        }
    }
}

// ---------------------------------------------------------------------------
// ∃'s strategy for H.

/// Bookkeeping for one network: owners of edges and envelopes of long
/// hyperedges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Books {
    pub owners: BTreeMap<(u32, u32), Player>,
    pub envelopes: BTreeMap<Vec<u32>, Vec<u32>>,
}

fn ekey(u: u32, v: u32) -> (u32, u32) {
    (u.min(v), u.max(v))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyState {
    pub rho: BTreeMap<i32, u32>,
    pub books: Vec<Books>,
    pub rounds_total: usize,
    pub rounds_remaining: usize,
    /// Edges where the case analysis had to be overridden by a search.
    pub overrides: usize,
}

/// Which case of the edge rule fixed a colour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeCase {
    Red,
    WhiteFromRed,
    White,
    Black,
    RedFallback,
    Override,
}

pub struct RainbowEloise {
    pub params: RainbowParams,
    pub st: StrategyState,
    pub log: Vec<(u32, u32, Colour, EdgeCase)>,
}

/// An apex's view of a base: `(base order, tint)` if every edge from `z` into
/// `nodes` is green in cone shape.
fn cone_over(
    edge: impl Fn(u32) -> Option<Colour>,
    nodes: &[u32],
    n: usize,
) -> Option<(Vec<u32>, i32)> {
    if nodes.len() != n - 1 {
        return None;
    }
    let mut base = vec![u32::MAX; n - 1];
    let mut tint = None;
    for &x in nodes {
        match edge(x)? {
            Colour::GreenSuper(p) => {
                if tint.is_some() {
                    return None;
                }
                tint = Some(p);
                base[0] = x;
            }
            Colour::GreenI(j) if (j as usize) < n - 1 && base[j as usize] == u32::MAX => {
                base[j as usize] = x
            }
            _ => return None,
        }
    }
    Some((base, tint?))
}

impl RainbowEloise {
    /// ρ is fixed in advance on a grid of spacing `3^rounds`, so every
    /// extension keeps the required gaps.
    pub fn new(params: RainbowParams, rounds: usize) -> Result<RainbowEloise, StrategyError> {
        params
            .validate()
            .map_err(|e| StrategyError::Params(e.to_string()))?;
        let tints = (1 - params.green_low) as usize;
        let gap = 3u64.checked_pow(rounds as u32).unwrap_or(u64::MAX);
        let top = gap.saturating_mul(tints as u64 - 1);
        if top >= params.red_bound as u64 {
            return Err(StrategyError::Spacing {
                red_bound: params.red_bound,
                tints,
                gap,
            });
        }
        Ok(RainbowEloise {
            params,
            st: StrategyState {
                rho: BTreeMap::new(),
                books: Vec::new(),
                rounds_total: rounds,
                rounds_remaining: rounds,
                overrides: 0,
            },
            log: Vec::new(),
        })
    }

    fn gap(&self) -> u32 {
        3u32.pow(self.st.rounds_total as u32)
    }

    fn slot(&self, p: i32) -> u32 {
        (p - self.params.green_low) as u32 * self.gap()
    }

    fn note_tints(&mut self, g: &ColouredGraph) {
        for c in g.edges.values() {
            if let Colour::GreenSuper(p) = *c {
                let v = self.slot(p);
                self.st.rho.insert(p, v);
            }
        }
    }

    fn rho(&self, p: i32) -> u32 {
        self.st.rho.get(&p).copied().unwrap_or_else(|| self.slot(p))
    }

    /// The white for the pairs `(c_x(z), c_k(z))`: its domain is the set of
    /// tints paired with yellow.  When some red base edge `(u,v)` sees greens
    /// from one side and yellows from the other, the white copies its indices.
    fn white_for(
        &self,
        g: &ColouredGraph,
        pairs: &[(u32, Colour, Colour)],
    ) -> Option<(WhiteFn, EdgeCase)> {
        let mut s: BTreeSet<i32> = BTreeSet::new();
        for &(_, a, b) in pairs {
            match (a, b) {
                (Colour::GreenSuper(p), Colour::Yellow)
                | (Colour::Yellow, Colour::GreenSuper(p)) => {
                    s.insert(p);
                }
                _ => {}
            }
        }
        for (i, &(u, a1, b1)) in pairs.iter().enumerate() {
            for &(v, a2, b2) in &pairs[i + 1..] {
                let Some(Colour::Red(beta, mu)) = g.edge(u, v) else {
                    continue;
                };
                for ((x1, y1), (x2, y2)) in [((a1, b1), (a2, b2)), ((b1, a1), (b2, a2))] {
                    if let (
                        Colour::GreenSuper(p),
                        Colour::GreenSuper(q),
                        Colour::Yellow,
                        Colour::Yellow,
                    ) = (x1, x2, y1, y2)
                    {
                        let f = if p < q {
                            WhiteFn::new(&[(p, beta.min(mu)), (q, beta.max(mu))])
                        } else {
                            WhiteFn::new(&[(q, beta.min(mu)), (p, beta.max(mu))])
                        };
                        if let Some(f) = f {
                            if s.iter().all(|&t| f.in_dom(t)) {
                                return Some((f, EdgeCase::WhiteFromRed));
                            }
                        }
                    }
                }
            }
        }
        if s.len() > 2 {
            return None;
        }
        let pts: Vec<(i32, u32)> = s.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
        WhiteFn::new(&pts).map(|f| (f, EdgeCase::White))
    }

    /// The colour rule for a new edge `(x,k)`; `pairs` lists `(z, c_x(z),
    /// c_k(z))` over the shared nodes and `cones` says whether `x` and `k`
    /// are apexes of cones with the same base order, with their tints.
    fn choose_edge(
        &self,
        g: &ColouredGraph,
        pairs: &[(u32, Colour, Colour)],
        cones: Option<(i32, i32)>,
    ) -> (Colour, EdgeCase) {
        if let Some((p, q)) = cones {
            return (red_sorted(self.rho(p), self.rho(q)), EdgeCase::Red);
        }
        if let Some((f, case)) = self.white_for(g, pairs) {
            return (Colour::WhiteF(f), case);
        }
        if !pairs
            .iter()
            .any(|&(_, a, b)| a == Colour::Yellow && b == Colour::Yellow)
        {
            return (Colour::Black, EdgeCase::Black);
        }
        let tints: Vec<i32> = pairs
            .iter()
            .flat_map(|&(_, a, b)| [a.tint(), b.tint()])
            .flatten()
            .collect();
        let (p, q) = match tints.as_slice() {
            [p, q, ..] => (*p, *q),
            [p] => (*p, *p),
            [] => (0, 0),
        };
        (red_sorted(self.rho(p), self.rho(q)), EdgeCase::RedFallback)
    }

    /// Colour `(x,k)` in `g`, falling back to a search when the rule's colour
    /// closes a forbidden triangle.
    fn colour_edge(
        &mut self,
        g: &mut ColouredGraph,
        x: u32,
        k: u32,
        pairs: &[(u32, Colour, Colour)],
        cones: Option<(i32, i32)>,
    ) -> bool {
        let (c, case) = self.choose_edge(g, pairs, cones);
        if g.triangle_ok(x, k, c) {
            g.set_edge(x, k, c);
            self.log.push((x, k, c, case));
            return true;
        }
        let mut alts = vec![Colour::Black, Colour::WhiteF(WhiteFn::EMPTY)];
        let tints: BTreeSet<i32> = self.st.rho.keys().copied().collect();
        for &p in &tints {
            for &q in &tints {
                alts.push(red_sorted(self.rho(p), self.rho(q)));
            }
        }
        for c in alts {
            if g.triangle_ok(x, k, c) {
                g.set_edge(x, k, c);
                self.st.overrides += 1;
                self.log.push((x, k, c, EdgeCase::Override));
                return true;
            }
        }
        false
    }

    fn shade_new_tuples(&self, g: &mut ColouredGraph, is_new: impl Fn(&[u32]) -> bool) {
        let n = self.params.n;
        if g.nodes.len() + 1 < n {
            return;
        }
        let cones = find_cones(g, n);
        for t in distinct_tuples(&g.nodes, n - 1) {
            if !g.tuples.contains_key(&t) && is_new(&t) && !has_green(g, &t) {
                let s = least_shade(&self.params, &cone_tints(&cones, &t));
                g.set_shade(t, s);
            }
        }
    }

    fn respond_cylindrifier(
        &mut self,
        game: &RainbowGame,
        s: &RState,
        net: usize,
        face: &[u32],
        k: u32,
        b: &RainbowAtom,
        l: usize,
    ) -> Option<RState> {
        let n = self.params.n;
        let (mut g, others) = game.cylinder_base(&s.nets[net].graph, face, k, b, l);
        self.note_tints(&g);
        let k_cone = cone_over(|z| g.edge(k, z), face, n);
        for &x in &others {
            let pairs: Vec<(u32, Colour, Colour)> = face
                .iter()
                .map(|&z| {
                    (
                        z,
                        g.edge(x, z).expect("old edge"),
                        g.edge(k, z).expect("demanded edge"),
                    )
                })
                .collect();
            let x_cone = cone_over(|z| g.edge(x, z), face, n);
            let cones = match (&x_cone, &k_cone) {
                (Some((bx, p)), Some((bk, q))) if bx == bk => Some((*p, *q)),
                _ => None,
            };
            if !self.colour_edge(&mut g, x, k, &pairs, cones) {
                return None;
            }
        }
        let span: Vec<u32> = face.iter().copied().chain([k]).collect();
        self.shade_new_tuples(&mut g, |t| {
            t.contains(&k) && !t.iter().all(|x| span.contains(x))
        });
        if !is_j_member(&g, &self.params) {
            return None;
        }
        let old = &self.st.books[net];
        let mut books = Books::default();
        for (&e, &p) in &old.owners {
            if e.0 != k && e.1 != k {
                books.owners.insert(e, p);
            }
        }
        for &f in face {
            books.owners.insert(ekey(f, k), Player::A);
        }
        for &x in &others {
            books.owners.insert(ekey(x, k), Player::E);
        }
        let r = game.cylinder_response(s, net, k, g);
        let new = r.nets.last().expect("pushed");
        for x in new.hyper.keys() {
            let v = if x.contains(&k) {
                new.graph.nodes.clone()
            } else {
                old.envelopes
                    .get(x)
                    .cloned()
                    .unwrap_or_else(|| new.graph.nodes.clone())
            };
            books.envelopes.insert(x.clone(), v);
        }
        self.push_books(game, books);
        Some(r)
    }

    fn push_books(&mut self, game: &RainbowGame, books: Books) {
        if game.kind != GameKind::H {
            self.st.books.clear();
        }
        self.st.books.push(books);
    }

    fn respond_amalgamation(
        &mut self,
        game: &RainbowGame,
        s: &RState,
        a: usize,
        b: usize,
    ) -> Option<RState> {
        let n = self.params.n;
        let (ma, nb) = (&s.nets[a].graph, &s.nets[b].graph);
        let common: Vec<u32> = ma
            .nodes
            .iter()
            .copied()
            .filter(|&x| nb.has_node(x))
            .collect();
        let mut g = RainbowGame::union_graph(ma, nb);
        let cone_sets: Vec<Vec<u32>> = distinct_tuples(&common, n - 1)
            .into_iter()
            .filter(|t| t.windows(2).all(|w| w[0] < w[1]))
            .collect();
        for (i, j) in RainbowGame::amalgam_edges(ma, nb) {
            let pairs: Vec<(u32, Colour, Colour)> = common
                .iter()
                .map(|&z| {
                    (
                        z,
                        ma.edge(i, z).expect("edge in M"),
                        nb.edge(z, j).expect("edge in N"),
                    )
                })
                .collect();
            let mut cones = None;
            for set in &cone_sets {
                if let (Some((bi, p)), Some((bj, q))) = (
                    cone_over(|z| ma.edge(i, z), set, n),
                    cone_over(|z| nb.edge(j, z), set, n),
                ) {
                    if bi == bj {
                        cones = Some((p, q));
                        break;
                    }
                }
            }
            if !self.colour_edge(&mut g, i, j, &pairs, cones) {
                return None;
            }
        }
        self.shade_new_tuples(&mut g, |t| {
            !t.iter().all(|x| ma.has_node(*x)) && !t.iter().all(|x| nb.has_node(*x))
        });
        if !is_j_member(&g, &self.params) {
            return None;
        }
        let (ba, bb) = (&self.st.books[a], &self.st.books[b]);
        let mut books = Books::default();
        for (i, &u) in g.nodes.iter().enumerate() {
            for &v in &g.nodes[i + 1..] {
                let e = ekey(u, v);
                let owner = if ba.owners.get(&e) == Some(&Player::A)
                    || bb.owners.get(&e) == Some(&Player::A)
                {
                    Player::A
                } else {
                    Player::E
                };
                books.owners.insert(e, owner);
            }
        }
        let r = game.amalgam_response(s, a, b, g);
        let new = r.nets.last().expect("pushed");
        for x in new.hyper.keys() {
            let v = if x.iter().all(|y| ma.has_node(*y)) {
                ba.envelopes.get(x).cloned()
            } else if x.iter().all(|y| nb.has_node(*y)) {
                bb.envelopes.get(x).cloned()
            } else {
                None
            };
            // The printed rule gives mixed hyperedges nodes(M), which need not
            // contain their range; the whole amalgam is used instead.
            books
                .envelopes
                .insert(x.clone(), v.unwrap_or_else(|| new.graph.nodes.clone()));
        }
        self.push_books(game, books);
        Some(r)
    }
}

impl EloiseStrategy<RainbowGame> for RainbowEloise {
    fn respond(
        &mut self,
        game: &RainbowGame,
        s: &RState,
        mv: &RMove,
        rounds_left: usize,
    ) -> Option<RState> {
        if game.kind == GameKind::H && self.st.books.len() != s.nets.len() {
            return None;
        }
        self.st.rounds_remaining = rounds_left.saturating_sub(1);
        match mv {
            RMove::Initial(a) => {
                let mut fresh = s.fresh;
                let net = game.initial_net(a, &mut fresh);
                self.note_tints(&net.graph);
                let mut books = Books::default();
                for &e in net.graph.edges.keys() {
                    books.owners.insert(e, Player::A);
                }
                for x in net.hyper.keys() {
                    books.envelopes.insert(x.clone(), net.graph.nodes.clone());
                }
                self.push_books(game, books);
                Some(game.push_net(s, net, fresh))
            }
            RMove::Cylindrifier { net, face, k, b, l } => {
                self.respond_cylindrifier(game, s, *net, face, *k, b, *l)
            }
            RMove::Transformation { net, theta } => {
                let r = game.apply_transformation(s, *net, theta);
                let old = &self.st.books[*net];
                let inv: BTreeMap<u32, u32> = theta.iter().map(|(&a, &b)| (b, a)).collect();
                let mut books = Books::default();
                for (&(u, v), &p) in &old.owners {
                    books.owners.insert(ekey(inv[&u], inv[&v]), p);
                }
                for x in r.hyper.keys() {
                    let img: Vec<u32> = x.iter().map(|v| theta[v]).collect();
                    let env = old.envelopes.get(&img).cloned().unwrap_or_default();
                    let mut v: Vec<u32> = env.iter().filter_map(|y| inv.get(y).copied()).collect();
                    v.sort_unstable();
                    books.envelopes.insert(x.clone(), v);
                }
                self.push_books(game, books);
                Some(game.push_net(s, r, s.fresh))
            }
            RMove::Amalgamation { m, n } => self.respond_amalgamation(game, s, *m, *n),
        }
    }
}

// ---------------------------------------------------------------------------
// Plays of H against ∃'s strategy and the invariant checker.

#[derive(Clone, Debug)]
pub struct RainbowPlay {
    pub params: RainbowParams,
    pub rounds: usize,
    pub moves: Vec<RMove>,
    /// Position and strategy state after each completed round.
    pub states: Vec<RState>,
    pub snapshots: Vec<StrategyState>,
    pub winner: Player,
    pub halt_reason: String,
}

impl RainbowPlay {
    pub fn to_trace(&self, game: &RainbowGame) -> Trace {
        let mut steps = Vec::new();
        let empty = RState::default();
        for (i, mv) in self.moves.iter().enumerate() {
            let before = if i == 0 { &empty } else { &self.states[i - 1] };
            steps.push(TraceStep {
                by: Player::A,
                round: i + 1,
                mv: game.move_json(mv),
                state: game.state_json(before),
            });
            if let Some(after) = self.states.get(i) {
                steps.push(TraceStep {
                    by: Player::E,
                    round: i + 1,
                    mv: Value::Null,
                    state: game.state_json(after),
                });
            }
        }
        Trace {
            kind: game.kind.code(),
            rounds: self.rounds,
            steps,
            winner: self.winner,
            halt_reason: self.halt_reason.clone(),
        }
    }
}

/// Play H for `rounds` rounds with ∃ on her strategy, checking legality of
/// both sides (the restrictions on ∀ always apply).
pub fn play_h(
    game: &RainbowGame,
    abelard: &mut dyn AbelardStrategy<RainbowGame>,
    eloise: &mut RainbowEloise,
    rounds: usize,
) -> RainbowPlay {
    let mut play = RainbowPlay {
        params: game.params,
        rounds,
        moves: Vec::new(),
        states: Vec::new(),
        snapshots: Vec::new(),
        winner: Player::E,
        halt_reason: format!("∃ survived all {rounds} rounds"),
    };
    let mut state = game.initial_state();
    for round in 1..=rounds {
        let left = rounds - round + 1;
        let Some(mv) = abelard.choose(game, &state, left) else {
            play.halt_reason = format!("∀ has no move in round {round}");
            return play;
        };
        play.moves.push(mv.clone());
        if !game.is_move_legal(&state, &mv, true) {
            play.halt_reason = format!("illegal ∀ move in round {round}");
            return play;
        }
        let Some(next) = eloise.respond(game, &state, &mv, left) else {
            play.winner = Player::A;
            play.halt_reason = format!("∃'s strategy has no answer in round {round}");
            return play;
        };
        if !game.is_response_legal(&state, &mv, &next) {
            play.winner = Player::A;
            play.halt_reason = format!("∃'s answer is illegal in round {round}");
            play.states.push(next);
            play.snapshots.push(eloise.st.clone());
            return play;
        }
        state = next;
        play.states.push(state.clone());
        play.snapshots.push(eloise.st.clone());
    }
    play
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantFailure {
    pub round: usize,
    pub property: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct InvariantReport {
    pub checked_rounds: usize,
    pub failures: Vec<InvariantFailure>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "checkedRounds": self.checked_rounds,
            "failures": self.failures.iter().map(|f| json!({
                "round": f.round, "property": f.property, "detail": f.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Properties I–VI and the three Claim items after every round of a play.
pub fn check_strategy_invariants(play: &RainbowPlay) -> InvariantReport {
    let mut rep = InvariantReport::default();
    let p = &play.params;
    let n = p.n;
    let mut seen: BTreeSet<i32> = BTreeSet::new();
    let mut iso_memo: HashMap<(usize, usize, Vec<u32>, Vec<u32>, Vec<(u32, u32)>), bool> =
        HashMap::new();
    for (idx, (s, st)) in play.states.iter().zip(&play.snapshots).enumerate() {
        let round = idx + 1;
        rep.checked_rounds = round;
        let mut fail = |prop: &str, detail: String| {
            rep.failures.push(InvariantFailure {
                round,
                property: prop.to_string(),
                detail,
            })
        };
        if st.books.len() != s.nets.len() {
            fail(
                "books",
                format!("{} books for {} networks", st.books.len(), s.nets.len()),
            );
            continue;
        }
        // I
        for (i, h) in s.nets.iter().enumerate() {
            for (&(u, v), c) in &h.graph.edges {
                if (c.is_green() || *c == Colour::Yellow)
                    && st.books[i].owners.get(&(u, v)) != Some(&Player::A)
                {
                    fail(
                        "I",
                        format!("network {i}: edge ({u},{v}) coloured {c} is not owned by ∀"),
                    );
                }
            }
        }
        // II
        if idx > 0 {
            let prev = &play.snapshots[idx - 1].rho;
            if prev.iter().any(|(k, v)| st.rho.get(k) != Some(v)) {
                fail("II", "ρ does not extend the previous round's ρ".into());
            }
        }
        // III
        for h in &s.nets {
            for c in h.graph.edges.values() {
                if let Colour::GreenSuper(t) = c {
                    seen.insert(*t);
                }
            }
        }
        let dom: BTreeSet<i32> = st.rho.keys().copied().collect();
        if dom != seen {
            fail("III", format!("dom ρ = {dom:?} but tints seen = {seen:?}"));
        }
        // IV
        let remaining = play.rounds - round;
        let gap = 3u64.pow(remaining as u32);
        let vals: Vec<(i32, u32)> = st.rho.iter().map(|(&a, &b)| (a, b)).collect();
        for w in vals.windows(2) {
            if w[1].1 <= w[0].1 || ((w[1].1 - w[0].1) as u64) < gap {
                fail(
                    "IV",
                    format!(
                        "ρ({})={} and ρ({})={} are closer than {gap}",
                        w[0].0, w[0].1, w[1].0, w[1].1
                    ),
                );
            }
        }
        // V
        for (i, h) in s.nets.iter().enumerate() {
            if let Some(d) = check_v(&h.graph, &st.rho) {
                fail("V", format!("network {i}: {d}"));
            }
        }
        // VI
        for (i, h) in s.nets.iter().enumerate() {
            let j = check_j_membership(&h.graph, p);
            if let Some(v) = j.first() {
                fail("VI", format!("network {i}: {v}"));
            }
            let long = all_sequences(&h.graph.nodes, n + 1);
            if long.len() != h.hyper.len() || long.iter().any(|x| !h.hyper.contains_key(x)) {
                fail(
                    "VI",
                    format!("network {i}: long hyperedges not all labelled"),
                );
            }
        }
        // Claim 1 and 3
        for (i, h) in s.nets.iter().enumerate() {
            let books = &st.books[i];
            let mut by_label: BTreeMap<&str, Vec<&Vec<u32>>> = BTreeMap::new();
            for (x, l) in &h.hyper {
                by_label.entry(l.as_str()).or_default().push(x);
            }
            for xs in by_label.values().filter(|xs| xs.len() > 1) {
                for x in xs {
                    let v = books.envelopes.get(*x).cloned().unwrap_or_default();
                    for y in xs {
                        if x != y && y.iter().all(|z| v.contains(z)) {
                            fail("Claim 1", format!("network {i}: {x:?} and {y:?} share a label inside one envelope"));
                        }
                    }
                }
            }
            let envs: BTreeSet<&Vec<u32>> = books.envelopes.values().collect();
            for v in envs {
                for &x in h.graph.nodes.iter().filter(|x| !v.contains(x)) {
                    let owned = v
                        .iter()
                        .filter(|&&s| books.owners.get(&ekey(x, s)) == Some(&Player::A))
                        .count();
                    if owned > 2 {
                        fail(
                            "Claim 3",
                            format!(
                                "network {i}: node {x} has {owned} ∀ edges into envelope {v:?}"
                            ),
                        );
                    }
                }
            }
            for (x, v) in &books.envelopes {
                if !x.iter().all(|z| v.contains(z)) {
                    fail(
                        "envelope",
                        format!("network {i}: envelope {v:?} misses part of {x:?}"),
                    );
                }
            }
        }
        // Claim 2
        let mut first: HashMap<&str, (usize, &Vec<u32>)> = HashMap::new();
        for (i, h) in s.nets.iter().enumerate() {
            for (x, l) in &h.hyper {
                match first.get(l.as_str()) {
                    None => {
                        first.insert(l.as_str(), (i, x));
                    }
                    Some(&(j, y)) => {
                        let vy = st.books[j].envelopes.get(y).cloned().unwrap_or_default();
                        let vx = st.books[i].envelopes.get(x).cloned().unwrap_or_default();
                        let mut pm: BTreeMap<u32, u32> = BTreeMap::new();
                        let consistent = y
                            .iter()
                            .zip(x)
                            .all(|(&a, &b)| *pm.entry(a).or_insert(b) == b);
                        let pmv: Vec<(u32, u32)> = pm.iter().map(|(&a, &b)| (a, b)).collect();
                        let key = (j, i, vy.clone(), vx.clone(), pmv);
                        let ok = consistent
                            && *iso_memo.entry(key).or_insert_with(|| {
                                local_iso_exists(&s.nets[j].graph, &vy, &s.nets[i].graph, &vx, &pm)
                            });
                        if !ok {
                            fail("Claim 2", format!("label {l} on {y:?} in network {j} and {x:?} in network {i} without a local isomorphism"));
                        }
                    }
                }
            }
        }
        iso_memo.clear();
    }
    rep
}

/// Property V on one graph; `None` when it holds.
pub fn check_v(g: &ColouredGraph, rho: &BTreeMap<i32, u32>) -> Option<String> {
    for (&(u, v), c) in &g.edges {
        let Colour::Red(mu, delta) = *c else { continue };
        for &x in &g.nodes {
            let (Some(Colour::GreenSuper(i)), Some(Colour::GreenSuper(j))) =
                (g.edge(x, u), g.edge(x, v))
            else {
                continue;
            };
            for &y in &g.nodes {
                if y == x
                    || g.edge(y, u) != Some(Colour::Yellow)
                    || g.edge(y, v) != Some(Colour::Yellow)
                {
                    continue;
                }
                let (a, b) = match g.edge(x, y) {
                    Some(Colour::WhiteF(f)) => (f.get(i), f.get(j)),
                    _ => (rho.get(&i).copied(), rho.get(&j).copied()),
                };
                let ok = matches!((a, b), (Some(a), Some(b)) if (a == mu && b == delta) || (a == delta && b == mu));
                if !ok {
                    return Some(format!(
                        "red ({u},{v}) = {c} with tints {i},{j} seen from {x} and yellow node {y}"
                    ));
                }
            }
        }
    }
    None
}

/// A bijection `va -> vb` extending `pm` that preserves colours and shades.
fn local_iso_exists(
    ga: &ColouredGraph,
    va: &[u32],
    gb: &ColouredGraph,
    vb: &[u32],
    pm: &BTreeMap<u32, u32>,
) -> bool {
    if va.len() != vb.len() || pm.iter().any(|(a, b)| !va.contains(a) || !vb.contains(b)) {
        return false;
    }
    let mut map = pm.clone();
    fn ok(ga: &ColouredGraph, gb: &ColouredGraph, map: &BTreeMap<u32, u32>) -> bool {
        let pairs: Vec<(u32, u32)> = map.iter().map(|(&a, &b)| (a, b)).collect();
        for (i, &(a1, b1)) in pairs.iter().enumerate() {
            for &(a2, b2) in &pairs[i + 1..] {
                if ga.edge(a1, a2) != gb.edge(b1, b2) {
                    return false;
                }
            }
        }
        true
    }
    fn shades_ok(
        ga: &ColouredGraph,
        gb: &ColouredGraph,
        va: &[u32],
        map: &BTreeMap<u32, u32>,
    ) -> bool {
        ga.tuples
            .iter()
            .filter(|(t, _)| t.iter().all(|x| va.contains(x)))
            .all(|(t, s)| gb.shade(&t.iter().map(|x| map[x]).collect::<Vec<_>>()) == Some(*s))
    }
    fn rec(
        ga: &ColouredGraph,
        gb: &ColouredGraph,
        va: &[u32],
        vb: &[u32],
        map: &mut BTreeMap<u32, u32>,
    ) -> bool {
        let Some(&a) = va.iter().find(|a| !map.contains_key(a)) else {
            return shades_ok(ga, gb, va, map);
        };
        for &b in vb {
            if map.values().any(|&x| x == b) {
                continue;
            }
            map.insert(a, b);
            if ok(ga, gb, map) && rec(ga, gb, va, vb, map) {
                return true;
            }
            map.remove(&a);
        }
        false
    }
    ok(ga, gb, &map) && rec(ga, gb, va, vb, &mut map)
}

// ---------------------------------------------------------------------------
// Random restricted ∀ for H.

pub struct RandomRainbowAbelard<R: Rng> {
    pub rng: R,
    pub params: RainbowParams,
    pub tries: usize,
}

impl<R: Rng> RandomRainbowAbelard<R> {
    pub fn new(rng: R, params: RainbowParams) -> Self {
        RandomRainbowAbelard {
            rng,
            params,
            tries: 200,
        }
    }

    fn tint(&mut self) -> i32 {
        self.rng.gen_range(self.params.green_low..=0)
    }

    fn colour(&mut self) -> Colour {
        let p = self.params;
        match self.rng.gen_range(0..12) {
            0 => Colour::GreenI(self.rng.gen_range(1..=p.n as u8 - 2)),
            1 | 2 => Colour::GreenSuper(self.tint()),
            3 => Colour::White,
            4 | 5 => {
                let k = self.rng.gen_range(0..=2usize);
                let mut dom: Vec<i32> = (p.green_low..=0).collect();
                dom.shuffle(&mut self.rng);
                let mut dom: Vec<i32> = dom.into_iter().take(k).collect();
                dom.sort_unstable();
                let mut vals: Vec<u32> =
                    (0..k).map(|_| self.rng.gen_range(0..p.red_bound)).collect();
                vals.sort_unstable();
                vals.dedup();
                WhiteFn::new(&dom.iter().copied().zip(vals).collect::<Vec<_>>())
                    .map_or(Colour::White, Colour::WhiteF)
            }
            6 | 7 => Colour::Yellow,
            8 => Colour::Black,
            _ => Colour::Red(
                self.rng.gen_range(0..p.red_bound),
                self.rng.gen_range(0..p.red_bound),
            ),
        }
    }

    fn shade(&mut self, cones: &[Cone], t: &[u32]) -> Shade {
        let tints = cone_tints(cones, t);
        let least = least_shade(&self.params, &tints);
        match (least, self.rng.gen_range(0..3)) {
            (Shade::Set(m), 1) => Shade::Set(
                m | (self.rng.gen::<u64>() & ((1u64 << self.params.yellow_universe.min(63)) - 1)),
            ),
            (_, 2) => Shade::All,
            _ => least,
        }
    }

    fn shade_tuples(&mut self, g: &mut ColouredGraph, is_new: impl Fn(&[u32]) -> bool) {
        let n = self.params.n;
        if g.nodes.len() + 1 < n {
            return;
        }
        let cones = find_cones(g, n);
        for t in distinct_tuples(&g.nodes, n - 1) {
            if !g.tuples.contains_key(&t) && is_new(&t) && !has_green(g, &t) {
                let s = self.shade(&cones, &t);
                g.set_shade(t, s);
            }
        }
    }

    fn random_edges(&mut self, g: &mut ColouredGraph, edges: &[(u32, u32)]) -> bool {
        for &(u, v) in edges {
            let mut placed = false;
            for _ in 0..50 {
                let c = self.colour();
                if g.triangle_ok(u, v, c) {
                    g.set_edge(u, v, c);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return false;
            }
        }
        true
    }

    pub fn random_initial(&mut self, game: &RainbowGame) -> Option<RMove> {
        let n = self.params.n as u32;
        for _ in 0..self.tries {
            let mut g = ColouredGraph::with_nodes(0..n);
            let pairs: Vec<(u32, u32)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .collect();
            if !self.random_edges(&mut g, &pairs) {
                continue;
            }
            self.shade_tuples(&mut g, |_| true);
            let mv = RMove::Initial(RainbowAtom::of_tuple(&g, &(0..n).collect::<Vec<_>>()));
            if game.is_move_legal(&RState::default(), &mv, true) {
                return Some(mv);
            }
        }
        None
    }

    pub fn random_cylindrifier(&mut self, game: &RainbowGame, s: &RState) -> Option<RMove> {
        let n = self.params.n;
        for _ in 0..self.tries {
            let net = self.rng.gen_range(0..s.nets.len());
            let g = &s.nets[net].graph;
            let mut face = g.nodes.clone();
            face.shuffle(&mut self.rng);
            face.truncate(n - 1);
            if face.len() != n - 1 {
                continue;
            }
            let k = least_fresh(&g.nodes)?;
            let mut d = g.restrict(&face);
            d.add_node(k);
            let cone = self.rng.gen_bool(0.5) && !has_green(&d, &face);
            if cone {
                let t = self.tint();
                d.set_edge(face[0], k, Colour::GreenSuper(t));
                for (j, &x) in face.iter().enumerate().skip(1) {
                    d.set_edge(x, k, Colour::GreenI(j as u8));
                }
            } else {
                let edges: Vec<(u32, u32)> = face.iter().map(|&x| (x, k)).collect();
                if !self.random_edges(&mut d, &edges) {
                    continue;
                }
            }
            self.shade_tuples(&mut d, |t| t.contains(&k));
            let l = self.rng.gen_range(0..n);
            let mut order = face.clone();
            order.insert(l, k);
            let b = RainbowAtom::of_tuple(&d, &order);
            let mv = RMove::Cylindrifier { net, face, k, b, l };
            if game.is_move_legal(s, &mv, true) {
                return Some(mv);
            }
        }
        None
    }

    pub fn random_transformation(&mut self, s: &RState) -> Option<RMove> {
        let net = self.rng.gen_range(0..s.nets.len());
        let nodes = s.nets[net].graph.nodes.clone();
        let mut pool = transformation_pool(&nodes);
        pool.shuffle(&mut self.rng);
        pool.truncate(nodes.len());
        let mut targets = nodes;
        targets.shuffle(&mut self.rng);
        Some(RMove::Transformation {
            net,
            theta: pool.into_iter().zip(targets).collect(),
        })
    }
}

impl<R: Rng> AbelardStrategy<RainbowGame> for RandomRainbowAbelard<R> {
    fn choose(&mut self, game: &RainbowGame, s: &RState, _: usize) -> Option<RMove> {
        if s.nets.is_empty() {
            return self.random_initial(game);
        }
        let pick = self.rng.gen_range(0..10);
        if pick < 2 && game.kind == GameKind::H {
            let mut pairs = Vec::new();
            for i in 0..s.nets.len() {
                for j in i + 1..s.nets.len() {
                    if game.amalgamation_legal(&s.nets[i], &s.nets[j], true) {
                        pairs.push((i, j));
                    }
                }
            }
            if let Some(&(m, n)) = pairs.choose(&mut self.rng) {
                return Some(RMove::Amalgamation { m, n });
            }
        }
        if pick == 2 && game.kind == GameKind::H {
            return self.random_transformation(s);
        }
        self.random_cylindrifier(game, s)
            .or_else(|| self.random_transformation(s))
    }
}

/// Outcome of running ∃'s strategy against every restricted ∀ line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExhaustiveOutcome {
    pub lines: usize,
    pub complete: bool,
    pub failure: Option<String>,
}

/// Depth-first over every restricted ∀ move, ∃ answering by her strategy,
/// with invariants checked at each leaf; stops after `budget` ∀ moves.
pub fn exhaustive_abelard(
    game: &RainbowGame,
    eloise: &RainbowEloise,
    rounds: usize,
    budget: usize,
) -> ExhaustiveOutcome {
    struct Ctx<'a> {
        game: &'a RainbowGame,
        rounds: usize,
        budget: usize,
        moves: usize,
        lines: usize,
        failure: Option<String>,
        out_of_budget: bool,
    }
    fn rec(
        c: &mut Ctx<'_>,
        s: &RState,
        e: &RainbowEloise,
        play: &mut RainbowPlay,
    ) -> ControlFlow<()> {
        let left = c.rounds - play.moves.len();
        if left == 0 {
            c.lines += 1;
            let rep = check_strategy_invariants(play);
            if let Some(f) = rep.failures.first() {
                c.failure = Some(format!("round {}: {} {}", f.round, f.property, f.detail));
                return ControlFlow::Break(());
            }
            return ControlFlow::Continue(());
        }
        let game = c.game;
        game.abelard_moves(s, true, &mut |mv| {
            c.moves += 1;
            if c.moves > c.budget {
                c.out_of_budget = true;
                return ControlFlow::Break(());
            }
            let mut e2 = RainbowEloise {
                params: e.params,
                st: e.st.clone(),
                log: Vec::new(),
            };
            let Some(r) = e2.respond(game, s, &mv, left) else {
                c.failure = Some(format!("no answer to {:?}", game.move_json(&mv)));
                return ControlFlow::Break(());
            };
            if !game.is_response_legal(s, &mv, &r) {
                c.failure = Some(format!("illegal answer to {:?}", game.move_json(&mv)));
                return ControlFlow::Break(());
            }
            play.moves.push(mv);
            play.states.push(r.clone());
            play.snapshots.push(e2.st.clone());
            let out = rec(c, &r, &e2, play);
            play.moves.pop();
            play.states.pop();
            play.snapshots.pop();
            out
        })
    }
    let mut c = Ctx {
        game,
        rounds,
        budget,
        moves: 0,
        lines: 0,
        failure: None,
        out_of_budget: false,
    };
    let mut play = RainbowPlay {
        params: game.params,
        rounds,
        moves: Vec::new(),
        states: Vec::new(),
        snapshots: Vec::new(),
        winner: Player::E,
        halt_reason: String::new(),
    };
    let _ = rec(&mut c, &RState::default(), eloise, &mut play);
    ExhaustiveOutcome {
        lines: c.lines,
        complete: !c.out_of_budget && c.failure.is_none(),
        failure: c.failure,
    }
}
