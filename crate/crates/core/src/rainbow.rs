//! Rainbow coloured graphs: palette, forbidden triples, the class J, cones
//! and the atom structure obtained from surjections onto J-members.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::atom_structure::{Access, AtomError, AtomStructure};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RainbowError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("colour out of bounds: {0}")]
    Bounds(String),
    #[error("parameters yield no atoms")]
    NoAtoms,
    #[error("too many atoms to build explicitly (limit {0})")]
    TooLarge(usize),
    #[error("atom structure: {0}")]
    Atom(#[from] AtomError),
    #[error("json: {0}")]
    Json(String),
}

/// Truncated index sets for the palette.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RainbowParams {
    pub n: usize,
    pub green_low: i32,
    pub red_bound: u32,
    pub yellow_universe: u32,
}

impl Default for RainbowParams {
    fn default() -> Self {
        RainbowParams {
            n: 3,
            green_low: -6,
            red_bound: 16,
            yellow_universe: 8,
        }
    }
}

impl RainbowParams {
    pub fn minimal() -> RainbowParams {
        RainbowParams {
            n: 3,
            green_low: -1,
            red_bound: 2,
            yellow_universe: 1,
        }
    }

    pub fn validate(&self) -> Result<(), RainbowError> {
        let bad = |m: &str| Err(RainbowError::Params(m.to_string()));
        if self.n < 3 {
            return bad("n must be at least 3");
        }
        if self.n > 8 {
            return bad("n above 8 is not supported");
        }
        if self.green_low > 0 {
            return bad("greenLow must be <= 0");
        }
        if self.red_bound == 0 {
            return bad("redBound must be positive");
        }
        if self.yellow_universe == 0 || self.yellow_universe > 64 {
            return bad("yellowUniverse must be in 1..=64");
        }
        Ok(())
    }

    pub fn tints(&self) -> impl Iterator<Item = i32> {
        self.green_low..=0
    }

    /// Order-preserving partial maps `[greenLow,0] -> [0,redBound)`, `|dom| <= 2`.
    pub fn white_fns(&self) -> Vec<WhiteFn> {
        let mut out = vec![WhiteFn::EMPTY];
        for p in self.tints() {
            for v in 0..self.red_bound {
                out.push(WhiteFn::new(&[(p, v)]).expect("singleton"));
            }
        }
        for p in self.tints() {
            for q in p + 1..=0 {
                for v in 0..self.red_bound {
                    for w in v + 1..self.red_bound {
                        out.push(WhiteFn::new(&[(p, v), (q, w)]).expect("increasing"));
                    }
                }
            }
        }
        out
    }

    pub fn palette(&self) -> Vec<Colour> {
        let mut out = Vec::new();
        for i in 1..=self.n as u8 - 2 {
            out.push(Colour::GreenI(i));
        }
        for p in self.tints() {
            out.push(Colour::GreenSuper(p));
        }
        out.push(Colour::White);
        out.extend(self.white_fns().into_iter().map(Colour::WhiteF));
        out.push(Colour::Yellow);
        out.push(Colour::Black);
        for i in 0..self.red_bound {
            for j in 0..self.red_bound {
                out.push(Colour::Red(i, j));
            }
        }
        out
    }

    /// Every shade: the finite subsets of `[0,U)` and ALL.
    pub fn shades(&self) -> Vec<Shade> {
        let mut out: Vec<Shade> = if self.yellow_universe >= 16 {
            Vec::new()
        } else {
            (0..1u64 << self.yellow_universe).map(Shade::Set).collect()
        };
        out.push(Shade::All);
        out
    }

    pub fn colour_in_bounds(&self, c: &Colour) -> bool {
        match *c {
            Colour::GreenI(i) => i >= 1 && (i as usize) <= self.n - 2,
            Colour::GreenSuper(p) => (self.green_low..=0).contains(&p),
            Colour::White | Colour::Yellow | Colour::Black => true,
            Colour::WhiteF(f) => f
                .pairs()
                .iter()
                .all(|&(p, v)| (self.green_low..=0).contains(&p) && v < self.red_bound),
            Colour::Red(i, j) => i < self.red_bound && j < self.red_bound,
        }
    }

    pub fn shade_in_bounds(&self, s: &Shade) -> bool {
        match s {
            Shade::All => true,
            Shade::Set(m) => self.yellow_universe >= 64 || m >> self.yellow_universe == 0,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "greenLow": self.green_low,
            "redBound": self.red_bound,
            "yellowUniverse": self.yellow_universe,
        })
    }

    pub fn from_json(v: &Value) -> Result<RainbowParams, RainbowError> {
        let d = RainbowParams::default();
        let get = |k: &str| v.get(k).and_then(Value::as_i64);
        let p = RainbowParams {
            n: get("n").map(|x| x as usize).unwrap_or(d.n),
            green_low: get("greenLow").map(|x| x as i32).unwrap_or(d.green_low),
            red_bound: get("redBound").map(|x| x as u32).unwrap_or(d.red_bound),
            yellow_universe: get("yellowUniverse")
                .map(|x| x as u32)
                .unwrap_or(d.yellow_universe),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Order-preserving partial function with at most two points, sorted by domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WhiteFn {
    len: u8,
    pts: [(i32, u32); 2],
}

impl WhiteFn {
    pub const EMPTY: WhiteFn = WhiteFn {
        len: 0,
        pts: [(0, 0); 2],
    };

    /// `None` unless the points form a strictly order-preserving function.
    pub fn new(points: &[(i32, u32)]) -> Option<WhiteFn> {
        let mut pts = points.to_vec();
        pts.sort();
        pts.dedup();
        match pts.len() {
            0 => Some(WhiteFn::EMPTY),
            1 => Some(WhiteFn {
                len: 1,
                pts: [pts[0], (0, 0)],
            }),
            2 if pts[0].0 < pts[1].0 && pts[0].1 < pts[1].1 => Some(WhiteFn {
                len: 2,
                pts: [pts[0], pts[1]],
            }),
            _ => None,
        }
    }

    pub fn pairs(&self) -> &[(i32, u32)] {
        &self.pts[..self.len as usize]
    }

    pub fn in_dom(&self, p: i32) -> bool {
        self.pairs().iter().any(|&(q, _)| q == p)
    }

    pub fn get(&self, p: i32) -> Option<u32> {
        self.pairs().iter().find(|&&(q, _)| q == p).map(|&(_, v)| v)
    }
}

/// Edge colours; the derived order is the canonical colour order
/// Green < White < Yellow < Black < Red.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Colour {
    GreenI(u8),
    GreenSuper(i32),
    White,
    WhiteF(WhiteFn),
    Yellow,
    Black,
    Red(u32, u32),
}

impl Colour {
    pub fn is_green(&self) -> bool {
        matches!(self, Colour::GreenI(_) | Colour::GreenSuper(_))
    }

    pub fn is_red(&self) -> bool {
        matches!(self, Colour::Red(..))
    }

    pub fn tint(&self) -> Option<i32> {
        match self {
            Colour::GreenSuper(p) => Some(*p),
            _ => None,
        }
    }

    pub fn code(&self) -> String {
        match self {
            Colour::GreenI(i) => format!("Ag{i}"),
            Colour::GreenSuper(p) => format!("Ag0^{p}"),
            Colour::White => "Bw".into(),
            Colour::WhiteF(f) => {
                let inner: Vec<String> =
                    f.pairs().iter().map(|(p, v)| format!("{p}>{v}")).collect();
                format!("Bw{{{}}}", inner.join(","))
            }
            Colour::Yellow => "Cy".into(),
            Colour::Black => "Db".into(),
            Colour::Red(i, j) => format!("Er{i}.{j}"),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Colour::GreenI(i) => json!({"kind": "greenI", "i": i}),
            Colour::GreenSuper(p) => json!({"kind": "greenSuper", "i": p}),
            Colour::White => json!({"kind": "white"}),
            Colour::WhiteF(f) => json!({
                "kind": "whiteF",
                "f": f.pairs().iter().map(|(p, v)| json!([p, v])).collect::<Vec<_>>(),
            }),
            Colour::Yellow => json!({"kind": "yellow"}),
            Colour::Black => json!({"kind": "black"}),
            Colour::Red(i, j) => json!({"kind": "red", "i": i, "j": j}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Colour, RainbowError> {
        let err = |m: &str| RainbowError::Json(m.to_string());
        let int = |k: &str| {
            v.get(k)
                .and_then(Value::as_i64)
                .ok_or_else(|| err(&format!("colour missing {k}")))
        };
        Ok(match v.get("kind").and_then(Value::as_str) {
            Some("greenI") => Colour::GreenI(int("i")? as u8),
            Some("greenSuper") => Colour::GreenSuper(int("i")? as i32),
            Some("white") => Colour::White,
            Some("whiteF") => {
                let pts = v
                    .get("f")
                    .and_then(Value::as_array)
                    .ok_or_else(|| err("whiteF needs f"))?
                    .iter()
                    .map(|p| {
                        let a = p.as_array().filter(|a| a.len() == 2)?;
                        Some((a[0].as_i64()? as i32, a[1].as_i64()? as u32))
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| err("bad whiteF pair"))?;
                Colour::WhiteF(
                    WhiteFn::new(&pts).ok_or_else(|| err("whiteF not order preserving"))?,
                )
            }
            Some("yellow") => Colour::Yellow,
            Some("black") => Colour::Black,
            Some("red") => Colour::Red(int("i")? as u32, int("j")? as u32),
            other => return Err(err(&format!("unknown colour kind {other:?}"))),
        })
    }
}

/// Conventional names: `g_i`, `g_0^p`, `w`, `w_f`, `y`, `b`, `r_ij`.
impl fmt::Display for Colour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Colour::GreenI(i) => write!(f, "g_{i}"),
            Colour::GreenSuper(p) => write!(f, "g_0^{p}"),
            Colour::White => f.write_str("w"),
            Colour::WhiteF(w) => {
                let inner: Vec<String> =
                    w.pairs().iter().map(|(p, v)| format!("{p}:{v}")).collect();
                write!(f, "w_{{{}}}", inner.join(","))
            }
            Colour::Yellow => f.write_str("y"),
            Colour::Black => f.write_str("b"),
            Colour::Red(i, j) => write!(f, "r_{i},{j}"),
        }
    }
}

/// Shade of yellow: a finite subset of `[0,U)` as a bitmask, or ALL.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shade {
    Set(u64),
    All,
}

impl Shade {
    /// ALL contains every tint, negative ones included.
    pub fn contains(&self, i: i32) -> bool {
        match self {
            Shade::All => true,
            Shade::Set(m) => (0..64).contains(&i) && m >> i & 1 == 1,
        }
    }

    pub fn code(&self) -> String {
        match self {
            Shade::All => "A".into(),
            Shade::Set(m) => format!("s{m}"),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Shade::All => json!({"all": true}),
            Shade::Set(m) => {
                json!({"set": (0..64).filter(|i| m >> i & 1 == 1).collect::<Vec<u32>>()})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Shade, RainbowError> {
        if v.get("all").and_then(Value::as_bool) == Some(true) {
            return Ok(Shade::All);
        }
        let set = v
            .get("set")
            .and_then(Value::as_array)
            .ok_or_else(|| RainbowError::Json("shade needs set or all".into()))?;
        let mut m = 0u64;
        for x in set {
            let i = x
                .as_u64()
                .filter(|&i| i < 64)
                .ok_or_else(|| RainbowError::Json("shade element out of range".into()))?;
            m |= 1 << i;
        }
        Ok(Shade::Set(m))
    }
}

fn order_preserving_pair(i: i32, k: u32, j: i32, l: u32) -> bool {
    match i.cmp(&j) {
        std::cmp::Ordering::Equal => k == l,
        std::cmp::Ordering::Less => k < l,
        std::cmp::Ordering::Greater => k > l,
    }
}

/// True iff the unordered triangle of colours is forbidden.
pub fn forbidden_triple(a: Colour, b: Colour, c: Colour) -> bool {
    use Colour::*;
    let t = [a, b, c];
    if t.iter().all(Colour::is_green) {
        return true;
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut red_match = false;
    for p in PERMS {
        let (x, y, z) = (t[p[0]], t[p[1]], t[p[2]]);
        match (x, y, z) {
            (GreenI(i), GreenI(j), White) if i == j => return true,
            (GreenSuper(j), Yellow, WhiteF(f)) if !f.in_dom(j) => return true,
            (GreenSuper(_), GreenSuper(_), White) => return true,
            (Yellow, Yellow, Yellow) | (Yellow, Yellow, Black) => return true,
            (Red(i, j), Red(j2, k2), Red(i3, k3)) if i == i3 && j == j2 && k2 == k3 => {
                red_match = true;
            }
            _ => {}
        }
    }
    if let [GreenSuper(i), GreenSuper(j), Red(k, l)] = sorted3(t) {
        // Reds sit on undirected edges, so either pairing may witness.
        return !(order_preserving_pair(i, k, j, l) || order_preserving_pair(j, k, i, l));
    }
    if t.iter().all(Colour::is_red) {
        return !red_match;
    }
    false
}

fn sorted3(mut t: [Colour; 3]) -> [Colour; 3] {
    t.sort();
    t
}

/// Undirected irreflexive coloured graph with shades on ordered tuples.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColouredGraph {
    pub nodes: Vec<u32>,
    pub edges: BTreeMap<(u32, u32), Colour>,
    pub tuples: BTreeMap<Vec<u32>, Shade>,
}

fn key(u: u32, v: u32) -> (u32, u32) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JViolation {
    pub item: u8,
    pub detail: String,
}

impl fmt::Display for JViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "item {}: {}", self.item, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cone {
    pub base: Vec<u32>,
    pub apex: u32,
    pub tint: i32,
}

impl ColouredGraph {
    pub fn with_nodes(nodes: impl IntoIterator<Item = u32>) -> ColouredGraph {
        let mut n: Vec<u32> = nodes.into_iter().collect();
        n.sort_unstable();
        n.dedup();
        ColouredGraph {
            nodes: n,
            ..Default::default()
        }
    }

    pub fn has_node(&self, x: u32) -> bool {
        self.nodes.binary_search(&x).is_ok()
    }

    pub fn add_node(&mut self, x: u32) {
        if let Err(p) = self.nodes.binary_search(&x) {
            self.nodes.insert(p, x);
        }
    }

    pub fn edge(&self, u: u32, v: u32) -> Option<Colour> {
        self.edges.get(&key(u, v)).copied()
    }

    pub fn set_edge(&mut self, u: u32, v: u32, c: Colour) {
        assert_ne!(u, v, "no self loops");
        self.edges.insert(key(u, v), c);
    }

    pub fn shade(&self, t: &[u32]) -> Option<Shade> {
        self.tuples.get(t).copied()
    }

    pub fn set_shade(&mut self, t: Vec<u32>, s: Shade) {
        self.tuples.insert(t, s);
    }

    pub fn is_green(&self, u: u32, v: u32) -> bool {
        self.edge(u, v).is_some_and(|c| c.is_green())
    }

    /// Remove a node with every edge and tuple through it.
    pub fn remove_node(&mut self, x: u32) {
        self.nodes.retain(|&y| y != x);
        self.edges.retain(|&(u, v), _| u != x && v != x);
        self.tuples.retain(|t, _| !t.contains(&x));
    }

    /// Induced subgraph on `keep`.
    pub fn restrict(&self, keep: &[u32]) -> ColouredGraph {
        let mut g = ColouredGraph::with_nodes(keep.iter().copied().filter(|&x| self.has_node(x)));
        for (&(u, v), &c) in &self.edges {
            if g.has_node(u) && g.has_node(v) {
                g.edges.insert((u, v), c);
            }
        }
        for (t, &s) in &self.tuples {
            if t.iter().all(|&x| g.has_node(x)) {
                g.tuples.insert(t.clone(), s);
            }
        }
        g
    }

    /// Rename nodes through `f` (must be injective on the nodes).
    pub fn rename(&self, f: impl Fn(u32) -> u32) -> ColouredGraph {
        let mut g = ColouredGraph::with_nodes(self.nodes.iter().map(|&x| f(x)));
        for (&(u, v), &c) in &self.edges {
            g.set_edge(f(u), f(v), c);
        }
        for (t, &s) in &self.tuples {
            g.tuples.insert(t.iter().map(|&x| f(x)).collect(), s);
        }
        g
    }

    /// Forbidden triangles through the edge `(u, v)` among complete triangles.
    pub fn triangle_ok(&self, u: u32, v: u32, c: Colour) -> bool {
        self.nodes.iter().all(|&w| {
            if w == u || w == v {
                return true;
            }
            match (self.edge(u, w), self.edge(v, w)) {
                (Some(a), Some(b)) => !forbidden_triple(a, b, c),
                _ => true,
            }
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "nodes": self.nodes,
            "edges": self.edges.iter().map(|(&(u, v), c)| json!({"u": u, "v": v, "colour": c.to_json()})).collect::<Vec<_>>(),
            "tuples": self.tuples.iter().map(|(t, s)| json!({"nodes": t, "shade": s.to_json()})).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<ColouredGraph, RainbowError> {
        let err = |m: &str| RainbowError::Json(m.to_string());
        let nodes = v
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| err("graph needs nodes"))?
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|x| x as u32)
                    .ok_or_else(|| err("node ids are naturals"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut g = ColouredGraph::with_nodes(nodes);
        for e in v
            .get("edges")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            let u = e
                .get("u")
                .and_then(Value::as_u64)
                .ok_or_else(|| err("edge needs u"))? as u32;
            let w = e
                .get("v")
                .and_then(Value::as_u64)
                .ok_or_else(|| err("edge needs v"))? as u32;
            if u == w {
                return Err(err("self loop"));
            }
            let c = Colour::from_json(e.get("colour").ok_or_else(|| err("edge needs colour"))?)?;
            g.set_edge(u, w, c);
        }
        for t in v
            .get("tuples")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            let nodes = t
                .get("nodes")
                .and_then(Value::as_array)
                .ok_or_else(|| err("tuple needs nodes"))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|x| x as u32)
                        .ok_or_else(|| err("node ids are naturals"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let s = Shade::from_json(t.get("shade").ok_or_else(|| err("tuple needs shade"))?)?;
            if g.tuples.insert(nodes.clone(), s).is_some() {
                return Err(err(&format!("tuple {nodes:?} shaded twice")));
            }
        }
        Ok(g)
    }
}

/// Ordered tuples of `len` distinct elements drawn from `pool`.
pub fn distinct_tuples(pool: &[u32], len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(pool: &[u32], len: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for &x in pool {
            if !cur.contains(&x) {
                cur.push(x);
                rec(pool, len, cur, out);
                cur.pop();
            }
        }
    }
    rec(pool, len, &mut cur, &mut out);
    out
}

fn tuple_has_green(g: &ColouredGraph, t: &[u32]) -> bool {
    (0..t.len()).any(|a| (a + 1..t.len()).any(|b| g.is_green(t[a], t[b])))
}

/// Every induced `i`-cone: apex `z`, base `x_0..x_{n-2}` with `g_0^i` from
/// `x_0`, `g_j` from `x_j`, and no other green edge.
pub fn find_cones(g: &ColouredGraph, n: usize) -> Vec<Cone> {
    let mut out = Vec::new();
    for &z in &g.nodes {
        let mut slots: Vec<Vec<u32>> = vec![Vec::new(); n - 1];
        let mut tints: HashMap<u32, i32> = HashMap::new();
        for &x in &g.nodes {
            if x == z {
                continue;
            }
            match g.edge(x, z) {
                Some(Colour::GreenSuper(p)) => {
                    slots[0].push(x);
                    tints.insert(x, p);
                }
                Some(Colour::GreenI(j)) if (j as usize) < n - 1 => slots[j as usize].push(x),
                _ => {}
            }
        }
        if slots.iter().any(Vec::is_empty) {
            continue;
        }
        let mut base = Vec::with_capacity(n - 1);
        cone_bases(g, &slots, &mut base, &mut |b| {
            out.push(Cone {
                base: b.to_vec(),
                apex: z,
                tint: tints[&b[0]],
            })
        });
    }
    out.sort();
    out
}

fn cone_bases(
    g: &ColouredGraph,
    slots: &[Vec<u32>],
    cur: &mut Vec<u32>,
    f: &mut dyn FnMut(&[u32]),
) {
    if cur.len() == slots.len() {
        f(cur);
        return;
    }
    for &x in &slots[cur.len()] {
        if cur.contains(&x)
            || cur
                .iter()
                .any(|&y| g.edge(x, y).map_or(true, |c| c.is_green()))
        {
            continue;
        }
        cur.push(x);
        cone_bases(g, slots, cur, f);
        cur.pop();
    }
}

/// Check the four defining conditions of J (plus palette bounds).
pub fn check_j_membership(g: &ColouredGraph, params: &RainbowParams) -> Vec<JViolation> {
    let mut out = Vec::new();
    let n = params.n;
    let nodes = &g.nodes;
    for (&(u, v), c) in &g.edges {
        if !g.has_node(u) || !g.has_node(v) {
            out.push(JViolation {
                item: 1,
                detail: format!("edge ({u},{v}) leaves the node set"),
            });
        }
        if !params.colour_in_bounds(c) {
            out.push(JViolation {
                item: 0,
                detail: format!("colour {c} out of bounds on ({u},{v})"),
            });
        }
    }
    for (a, &u) in nodes.iter().enumerate() {
        for &v in &nodes[a + 1..] {
            if g.edge(u, v).is_none() {
                out.push(JViolation {
                    item: 1,
                    detail: format!("edge ({u},{v}) missing"),
                });
            }
        }
    }
    for (a, &u) in nodes.iter().enumerate() {
        for (b, &v) in nodes.iter().enumerate().skip(a + 1) {
            for &w in &nodes[b + 1..] {
                if let (Some(x), Some(y), Some(z)) = (g.edge(u, v), g.edge(v, w), g.edge(u, w)) {
                    if forbidden_triple(x, y, z) {
                        out.push(JViolation {
                            item: 2,
                            detail: format!("forbidden triple ({x},{y},{z}) on ({u},{v},{w})"),
                        });
                    }
                }
            }
        }
    }
    for (t, s) in &g.tuples {
        let distinct = t.len() == n - 1
            && t.iter().all(|&x| g.has_node(x))
            && (0..t.len()).all(|a| (a + 1..t.len()).all(|b| t[a] != t[b]));
        if !distinct {
            out.push(JViolation {
                item: 3,
                detail: format!("shade on invalid tuple {t:?}"),
            });
        } else if tuple_has_green(g, t) {
            out.push(JViolation {
                item: 3,
                detail: format!("shade on tuple {t:?} with a green edge"),
            });
        }
        if !params.shade_in_bounds(s) {
            out.push(JViolation {
                item: 0,
                detail: format!("shade {} out of bounds", s.code()),
            });
        }
    }
    if n - 1 <= nodes.len() {
        for t in distinct_tuples(nodes, n - 1) {
            if !tuple_has_green(g, &t) && !g.tuples.contains_key(&t) {
                out.push(JViolation {
                    item: 3,
                    detail: format!("tuple {t:?} has no shade"),
                });
            }
        }
    }
    for cone in find_cones(g, n) {
        if let Some(s) = g.shade(&cone.base) {
            if !s.contains(cone.tint) {
                out.push(JViolation {
                    item: 4,
                    detail: format!(
                        "{}-cone with apex {} on base {:?} shaded {}",
                        cone.tint,
                        cone.apex,
                        cone.base,
                        s.code()
                    ),
                });
            }
        }
    }
    out
}

pub fn is_j_member(g: &ColouredGraph, params: &RainbowParams) -> bool {
    check_j_membership(g, params).is_empty()
}

/// Shades admissible for tuple `t` of `g` given the cones already present.
pub fn admissible_shades(g: &ColouredGraph, n: usize, t: &[u32], palette: &[Shade]) -> Vec<Shade> {
    let tints: Vec<i32> = find_cones(g, n)
        .into_iter()
        .filter(|c| c.base == t)
        .map(|c| c.tint)
        .collect();
    palette
        .iter()
        .copied()
        .filter(|s| tints.iter().all(|&i| s.contains(i)))
        .collect()
}

/// Enumerate every J-member on nodes `0..k`, calling `f` on each until it
/// breaks.
pub fn enumerate_j_members(
    params: &RainbowParams,
    k: usize,
    f: &mut dyn FnMut(&ColouredGraph) -> ControlFlow<()>,
) -> ControlFlow<()> {
    enumerate_edge_colourings(params, k, &mut |g, tuples, options| {
        enumerate_shades(tuples, options, 0, g, f)
    })
}

/// Number of J-members on nodes `0..k`, or some number above `cap` once the
/// count passes it.
pub fn count_j_members(params: &RainbowParams, k: usize, cap: usize) -> usize {
    let mut total = 0usize;
    let _ = enumerate_edge_colourings(params, k, &mut |_, _, options| {
        let here = options
            .iter()
            .try_fold(1usize, |acc, o| acc.checked_mul(o.len()));
        total = here.map_or(usize::MAX, |h| total.saturating_add(h));
        if total > cap {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    total
}

type Leaf<'a> = dyn FnMut(&mut ColouredGraph, &[Vec<u32>], &[Vec<Shade>]) -> ControlFlow<()> + 'a;

// Calls `leaf` on each allowed edge colouring with the shadeable tuples and
// their admissible shades.
fn enumerate_edge_colourings(
    params: &RainbowParams,
    k: usize,
    leaf: &mut Leaf<'_>,
) -> ControlFlow<()> {
    let palette = params.palette();
    let shades = params.shades();
    let nodes: Vec<u32> = (0..k as u32).collect();
    let pairs: Vec<(u32, u32)> = (0..k as u32)
        .flat_map(|u| (u + 1..k as u32).map(move |v| (u, v)))
        .collect();
    let mut g = ColouredGraph::with_nodes(nodes.clone());
    enumerate_edges(params, &palette, &shades, &pairs, 0, &mut g, leaf)
}

fn enumerate_edges(
    params: &RainbowParams,
    palette: &[Colour],
    shades: &[Shade],
    pairs: &[(u32, u32)],
    idx: usize,
    g: &mut ColouredGraph,
    leaf: &mut Leaf<'_>,
) -> ControlFlow<()> {
    if idx == pairs.len() {
        let tuples: Vec<Vec<u32>> = if params.n - 1 <= g.nodes.len() {
            distinct_tuples(&g.nodes, params.n - 1)
                .into_iter()
                .filter(|t| !tuple_has_green(g, t))
                .collect()
        } else {
            vec![]
        };
        let options: Vec<Vec<Shade>> = tuples
            .iter()
            .map(|t| admissible_shades(g, params.n, t, shades))
            .collect();
        let flow = leaf(g, &tuples, &options);
        g.tuples.clear();
        return flow;
    }
    let (u, v) = pairs[idx];
    for &c in palette {
        if g.triangle_ok(u, v, c) {
            g.set_edge(u, v, c);
            let flow = enumerate_edges(params, palette, shades, pairs, idx + 1, g, leaf);
            g.edges.remove(&(u, v));
            flow?;
        }
    }
    ControlFlow::Continue(())
}

fn enumerate_shades(
    tuples: &[Vec<u32>],
    options: &[Vec<Shade>],
    idx: usize,
    g: &mut ColouredGraph,
    f: &mut dyn FnMut(&ColouredGraph) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if idx == tuples.len() {
        return f(g);
    }
    for &s in &options[idx] {
        g.tuples.insert(tuples[idx].clone(), s);
        let flow = enumerate_shades(tuples, options, idx + 1, g, f);
        if flow.is_break() {
            g.tuples.remove(&tuples[idx]);
            return flow;
        }
    }
    g.tuples.remove(&tuples[idx]);
    ControlFlow::Continue(())
}

/// A random J-member on nodes `0..k`: edges drawn uniformly from the colours
/// that keep every triangle allowed, shades uniformly from the admissible ones.
/// Returns `None` if the random greedy colouring gets stuck.
pub fn random_j_member<R: Rng>(
    params: &RainbowParams,
    k: usize,
    rng: &mut R,
) -> Option<ColouredGraph> {
    let palette = params.palette();
    let shades = params.shades();
    let mut g = ColouredGraph::with_nodes(0..k as u32);
    for u in 0..k as u32 {
        for v in u + 1..k as u32 {
            let ok: Vec<Colour> = palette
                .iter()
                .copied()
                .filter(|&c| g.triangle_ok(u, v, c))
                .collect();
            g.set_edge(u, v, *ok.choose(rng)?);
        }
    }
    if params.n - 1 <= k {
        for t in distinct_tuples(&g.nodes.clone(), params.n - 1) {
            if !tuple_has_green(&g, &t) {
                let opts = admissible_shades(&g, params.n, &t, &shades);
                g.tuples.insert(t, *opts.choose(rng)?);
            }
        }
    }
    Some(g)
}

/// An atom: a surjection from `n` onto a J-member, up to renaming; stored as
/// the restricted-growth pattern of the surjection and the graph on `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RainbowAtom {
    pub graph: ColouredGraph,
    pub pattern: Vec<u32>,
}

impl RainbowAtom {
    /// The atom `[a]` with `a(i) = z_i` in `g`.
    pub fn of_tuple(g: &ColouredGraph, z: &[u32]) -> RainbowAtom {
        let mut seen: Vec<u32> = Vec::new();
        let pattern = z
            .iter()
            .map(|x| match seen.iter().position(|y| y == x) {
                Some(p) => p as u32,
                None => {
                    seen.push(*x);
                    seen.len() as u32 - 1
                }
            })
            .collect();
        let sub = g.restrict(&seen);
        let graph = sub.rename(|x| seen.iter().position(|&y| y == x).expect("in image") as u32);
        RainbowAtom { graph, pattern }
    }

    /// Restriction to the positions other than `l`, re-canonicalised.
    pub fn off(&self, l: usize) -> RainbowAtom {
        let z: Vec<u32> = self
            .pattern
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != l)
            .map(|(_, &p)| p)
            .collect();
        RainbowAtom::of_tuple(&self.graph, &z)
    }

    pub fn in_diag(&self, i: usize, j: usize) -> bool {
        self.pattern[i] == self.pattern[j]
    }

    /// `self T_l other`: the two agree off position `l`.
    pub fn t_related(&self, l: usize, other: &RainbowAtom) -> bool {
        self.off(l) == other.off(l)
    }

    /// Opaque identifier; the graph part comes first so ids group by graph.
    pub fn encode(&self) -> String {
        let mut s = format!("k{}", self.graph.nodes.len());
        for (&(u, v), c) in &self.graph.edges {
            s.push_str(&format!(";{u}{v}{}", c.code()));
        }
        for (t, sh) in &self.graph.tuples {
            s.push(';');
            for x in t {
                s.push_str(&x.to_string());
            }
            s.push_str(&sh.code());
        }
        s.push_str("|p");
        for p in &self.pattern {
            s.push_str(&p.to_string());
        }
        s
    }
}

/// Restricted-growth strings of length `n` with exactly `k` blocks.
pub fn surjection_patterns(n: usize, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    fn rec(n: usize, k: usize, cur: &mut Vec<u32>, max: u32, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            if max as usize == k {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=max.min(k as u32 - 1) {
            cur.push(v);
            rec(n, k, cur, max.max(v + 1), out);
            cur.pop();
        }
    }
    rec(n, k, &mut Vec::new(), 0, &mut out);
    out
}

/// Refuse explicit builds above this many atoms.
pub const MAX_EXPLICIT_ATOMS: usize = 4_000_000;

/// Count atoms without materialising them.
pub fn count_atoms(params: &RainbowParams) -> Result<usize, RainbowError> {
    count_atoms_capped(params, usize::MAX)
}

/// As `count_atoms`, but stops with some count above `cap` once it is passed.
pub fn count_atoms_capped(params: &RainbowParams, cap: usize) -> Result<usize, RainbowError> {
    params.validate()?;
    let mut total = 0usize;
    for k in 1..=params.n {
        let patterns = surjection_patterns(params.n, k).len();
        total = total.saturating_add(patterns.saturating_mul(count_j_members(params, k, cap)));
        if total > cap {
            break;
        }
    }
    Ok(total)
}

/// Explicit atom structure over the J-members with at most `n` nodes.
pub fn build_rainbow_atom_structure(params: &RainbowParams) -> Result<AtomStructure, RainbowError> {
    if count_atoms_capped(params, MAX_EXPLICIT_ATOMS)? > MAX_EXPLICIT_ATOMS {
        return Err(RainbowError::TooLarge(MAX_EXPLICIT_ATOMS));
    }
    let n = params.n;
    let mut names: Vec<String> = Vec::new();
    let mut patterns: Vec<u32> = Vec::new();
    let mut classes: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut keys: Vec<HashMap<RainbowAtom, u32>> = vec![HashMap::new(); n];
    for k in 1..=n {
        let pats = surjection_patterns(n, k);
        let _ = enumerate_j_members(params, k, &mut |g| {
            for p in &pats {
                let atom = RainbowAtom {
                    graph: g.clone(),
                    pattern: p.clone(),
                };
                for l in 0..n {
                    let off = atom.off(l);
                    let next = keys[l].len() as u32;
                    classes[l].push(*keys[l].entry(off).or_insert(next));
                }
                names.push(atom.encode());
                patterns.push(pattern_code(p));
            }
            ControlFlow::Continue(())
        });
    }
    if names.is_empty() {
        return Err(RainbowError::NoAtoms);
    }
    let mut identity: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            identity.insert(
                (i, j),
                (0..names.len())
                    .filter(|&a| pattern_digit(patterns[a], i) == pattern_digit(patterns[a], j))
                    .collect(),
            );
        }
    }
    let access = classes
        .into_iter()
        .zip(keys.iter())
        .map(|(class, k)| Access::Partition {
            class,
            count: k.len(),
        })
        .collect();
    Ok(AtomStructure::from_parts(n, names, identity, access)?)
}

fn pattern_code(p: &[u32]) -> u32 {
    p.iter()
        .enumerate()
        .fold(0, |acc, (i, &d)| acc | (d << (4 * i)))
}

fn pattern_digit(code: u32, i: usize) -> u32 {
    code >> (4 * i) & 0xf
}

/// Decode an explicit atom id back into its atom.
pub fn decode_atom(id: &str, n: usize) -> Option<RainbowAtom> {
    let (graph_part, pat) = id.split_once("|p")?;
    let pattern: Vec<u32> = pat.chars().map(|c| c.to_digit(10)).collect::<Option<_>>()?;
    if pattern.len() != n {
        return None;
    }
    let mut parts = graph_part.split(';');
    let k: u32 = parts.next()?.strip_prefix('k')?.parse().ok()?;
    let mut g = ColouredGraph::with_nodes(0..k);
    for part in parts {
        let digits: String = part.chars().take_while(|c| c.is_ascii_digit()).collect();
        let rest = &part[digits.len()..];
        let ids: Vec<u32> = digits
            .chars()
            .map(|c| c.to_digit(10))
            .collect::<Option<_>>()?;
        if rest == "A" {
            g.tuples.insert(ids, Shade::All);
        } else if let Some(m) = rest.strip_prefix('s') {
            g.tuples.insert(ids, Shade::Set(m.parse().ok()?));
        } else if ids.len() == 2 && ids[0] != ids[1] {
            g.set_edge(ids[0], ids[1], parse_colour_code(rest)?);
        } else {
            return None;
        }
    }
    Some(RainbowAtom { graph: g, pattern })
}

fn parse_colour_code(s: &str) -> Option<Colour> {
    if let Some(r) = s.strip_prefix("Ag0^") {
        return Some(Colour::GreenSuper(r.parse().ok()?));
    }
    if let Some(r) = s.strip_prefix("Ag") {
        return Some(Colour::GreenI(r.parse().ok()?));
    }
    if s == "Bw" {
        return Some(Colour::White);
    }
    if let Some(r) = s.strip_prefix("Bw{").and_then(|r| r.strip_suffix('}')) {
        let pts = if r.is_empty() {
            vec![]
        } else {
            r.split(',')
                .map(|p| {
                    let (a, b) = p.split_once('>')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                })
                .collect::<Option<Vec<_>>>()?
        };
        return Some(Colour::WhiteF(WhiteFn::new(&pts)?));
    }
    match s {
        "Cy" => return Some(Colour::Yellow),
        "Db" => return Some(Colour::Black),
        _ => {}
    }
    let r = s.strip_prefix("Er")?;
    let (a, b) = r.split_once('.')?;
    Some(Colour::Red(a.parse().ok()?, b.parse().ok()?))
}
