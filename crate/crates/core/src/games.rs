//! Bounded-round games between ∀ (Abelard) and ∃ (Eloise): a generic AND-OR
//! solver, match runner and the network games over explicit atom structures.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Debug;
use std::hash::Hash;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::atom_structure::AtomStructure;
use crate::networks::{
    all_sequences, apply_map, partial_isomorphism_check, sim_matrix, AtomSpace, Hypernetwork,
    Network, NodeMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Player {
    A,
    E,
}

impl Player {
    pub fn code(self) -> &'static str {
        match self {
            Player::A => "A",
            Player::E => "E",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("search budget of {budget} positions exceeded ({table} table entries)")]
    Budget { budget: usize, table: usize },
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("json: {0}")]
    Json(String),
}

pub type Visit<'a, T> = &'a mut dyn FnMut(T) -> ControlFlow<()>;

/// A two-player game in which ∀ moves and ∃ answers with a new position.
pub trait GameModel {
    type State: Clone + Debug;
    type Move: Clone + Debug + PartialEq;
    type Key: Clone + Eq + Hash + Debug;

    fn initial_state(&self) -> Self::State;

    /// Every legal ∀ move; `restricted` applies the move restrictions.
    fn abelard_moves(
        &self,
        s: &Self::State,
        restricted: bool,
        f: Visit<'_, Self::Move>,
    ) -> ControlFlow<()>;

    /// Every legal ∃ answer to `m`.
    fn eloise_responses(
        &self,
        s: &Self::State,
        m: &Self::Move,
        f: Visit<'_, Self::State>,
    ) -> ControlFlow<()>;

    /// Equal keys must mean positions with the same value for both players.
    fn key(&self, s: &Self::State) -> Self::Key;

    fn move_json(&self, m: &Self::Move) -> Value;

    fn state_json(&self, s: &Self::State) -> Value;

    fn move_from_json(&self, v: &Value) -> Result<Self::Move, GameError>;

    fn is_move_legal(&self, s: &Self::State, m: &Self::Move, restricted: bool) -> bool {
        let mut found = false;
        let _ = self.abelard_moves(s, restricted, &mut |x| {
            if &x == m {
                found = true;
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }

    fn is_response_legal(&self, s: &Self::State, m: &Self::Move, r: &Self::State) -> bool {
        let k = self.key(r);
        let mut found = false;
        let _ = self.eloise_responses(s, m, &mut |x| {
            if self.key(&x) == k {
                found = true;
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }
}

pub fn collect_moves<M: GameModel>(model: &M, s: &M::State, restricted: bool) -> Vec<M::Move> {
    let mut out = Vec::new();
    let _ = model.abelard_moves(s, restricted, &mut |m| {
        out.push(m);
        ControlFlow::Continue(())
    });
    out
}

pub fn collect_responses<M: GameModel>(model: &M, s: &M::State, m: &M::Move) -> Vec<M::State> {
    let mut out = Vec::new();
    let _ = model.eloise_responses(s, m, &mut |r| {
        out.push(r);
        ControlFlow::Continue(())
    });
    out
}

pub fn first_move<M: GameModel>(model: &M, s: &M::State, restricted: bool) -> Option<M::Move> {
    let mut out = None;
    let _ = model.abelard_moves(s, restricted, &mut |m| {
        out = Some(m);
        ControlFlow::Break(())
    });
    out
}

pub fn first_response<M: GameModel>(model: &M, s: &M::State, m: &M::Move) -> Option<M::State> {
    let mut out = None;
    let _ = model.eloise_responses(s, m, &mut |r| {
        out = Some(r);
        ControlFlow::Break(())
    });
    out
}

pub const DEFAULT_BUDGET: usize = 2_000_000;

/// Memoised AND-OR search: does ∃ survive `left` more rounds from a position?
pub struct Solver<'m, M: GameModel> {
    pub model: &'m M,
    pub restricted: bool,
    pub budget: usize,
    pub expanded: usize,
    pub memo: HashMap<(M::Key, usize), bool>,
}

impl<'m, M: GameModel> Solver<'m, M> {
    pub fn new(model: &'m M, restricted: bool, budget: usize) -> Self {
        Solver {
            model,
            restricted,
            budget,
            expanded: 0,
            memo: HashMap::new(),
        }
    }

    pub fn eloise_survives(&mut self, s: &M::State, left: usize) -> Result<bool, GameError> {
        if left == 0 {
            return Ok(true);
        }
        let key = self.model.key(s);
        if let Some(&v) = self.memo.get(&(key.clone(), left)) {
            return Ok(v);
        }
        self.expanded += 1;
        if self.expanded > self.budget {
            return Err(GameError::Budget {
                budget: self.budget,
                table: self.memo.len(),
            });
        }
        let model = self.model;
        let restricted = self.restricted;
        let mut err = None;
        let mut all = true;
        let _ = model.abelard_moves(s, restricted, &mut |mv| {
            // Wide move lists cost budget too, not only new positions.
            self.expanded += 1;
            if self.expanded > self.budget {
                err = Some(GameError::Budget {
                    budget: self.budget,
                    table: self.memo.len(),
                });
                return ControlFlow::Break(());
            }
            match self.answer(s, &key, &mv, left) {
                Ok(Some(_)) => ControlFlow::Continue(()),
                Ok(None) => {
                    all = false;
                    ControlFlow::Break(())
                }
                Err(e) => {
                    err = Some(e);
                    ControlFlow::Break(())
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        self.memo.insert((key, left), all);
        Ok(all)
    }

    /// A response to `mv` after which ∃ survives the remaining rounds.
    /// A response that leaves the position unchanged is always good enough,
    /// since fewer rounds never help ∀.
    fn answer(
        &mut self,
        s: &M::State,
        key: &M::Key,
        mv: &M::Move,
        left: usize,
    ) -> Result<Option<M::State>, GameError> {
        let model = self.model;
        let mut err = None;
        let mut found = None;
        let _ = model.eloise_responses(s, mv, &mut |r| {
            if &model.key(&r) == key {
                found = Some(r);
                return ControlFlow::Break(());
            }
            match self.eloise_survives(&r, left - 1) {
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

    pub fn best_response(
        &mut self,
        s: &M::State,
        mv: &M::Move,
        left: usize,
    ) -> Result<Option<M::State>, GameError> {
        let key = self.model.key(s);
        match self.answer(s, &key, mv, left)? {
            Some(r) => Ok(Some(r)),
            // Nothing survives: any legal answer will do.
            None => Ok(first_response(self.model, s, mv)),
        }
    }

    /// A ∀ move no ∃ answer survives, if there is one.
    pub fn refuting_move(
        &mut self,
        s: &M::State,
        left: usize,
    ) -> Result<Option<M::Move>, GameError> {
        let model = self.model;
        let key = model.key(s);
        let mut err = None;
        let mut found = None;
        let _ = model.abelard_moves(s, self.restricted, &mut |mv| match self
            .answer(s, &key, &mv, left)
        {
            Ok(Some(_)) => ControlFlow::Continue(()),
            Ok(None) => {
                found = Some(mv);
                ControlFlow::Break(())
            }
            Err(e) => {
                err = Some(e);
                ControlFlow::Break(())
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(found),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution<K> {
    pub winner: Player,
    pub expanded: usize,
    pub memo: HashMap<(K, usize), bool>,
}

pub fn solve<M: GameModel>(
    model: &M,
    rounds: usize,
    restricted: bool,
    budget: usize,
) -> Result<Solution<M::Key>, GameError> {
    let mut solver = Solver::new(model, restricted, budget);
    let e = solver.eloise_survives(&model.initial_state(), rounds)?;
    Ok(Solution {
        winner: if e { Player::E } else { Player::A },
        expanded: solver.expanded,
        memo: solver.memo,
    })
}

pub trait AbelardStrategy<M: GameModel> {
    /// `None` means ∀ resigns because he has no move he is willing to play.
    fn choose(&mut self, model: &M, s: &M::State, rounds_left: usize) -> Option<M::Move>;
}

pub trait EloiseStrategy<M: GameModel> {
    /// `None` means ∃ has no answer.
    fn respond(
        &mut self,
        model: &M,
        s: &M::State,
        mv: &M::Move,
        rounds_left: usize,
    ) -> Option<M::State>;
}

/// Strategies read off the solver; a solution's memo can seed them.
pub struct SolverAbelard<M: GameModel> {
    pub restricted: bool,
    pub budget: usize,
    pub memo: HashMap<(M::Key, usize), bool>,
}

pub struct SolverEloise<M: GameModel> {
    pub restricted: bool,
    pub budget: usize,
    pub memo: HashMap<(M::Key, usize), bool>,
}

impl<M: GameModel> SolverAbelard<M> {
    pub fn new(restricted: bool, budget: usize, memo: HashMap<(M::Key, usize), bool>) -> Self {
        SolverAbelard {
            restricted,
            budget,
            memo,
        }
    }
}

impl<M: GameModel> SolverEloise<M> {
    pub fn new(restricted: bool, budget: usize, memo: HashMap<(M::Key, usize), bool>) -> Self {
        SolverEloise {
            restricted,
            budget,
            memo,
        }
    }
}

impl<M: GameModel> AbelardStrategy<M> for SolverAbelard<M> {
    fn choose(&mut self, model: &M, s: &M::State, rounds_left: usize) -> Option<M::Move> {
        let mut solver = Solver::new(model, self.restricted, self.budget);
        solver.memo = std::mem::take(&mut self.memo);
        let out = match solver.refuting_move(s, rounds_left) {
            Ok(Some(m)) => Some(m),
            _ => first_move(model, s, self.restricted),
        };
        self.memo = solver.memo;
        out
    }
}

impl<M: GameModel> EloiseStrategy<M> for SolverEloise<M> {
    fn respond(
        &mut self,
        model: &M,
        s: &M::State,
        mv: &M::Move,
        rounds_left: usize,
    ) -> Option<M::State> {
        let mut solver = Solver::new(model, self.restricted, self.budget);
        solver.memo = std::mem::take(&mut self.memo);
        let out = match solver.best_response(s, mv, rounds_left) {
            Ok(r) => r,
            Err(_) => first_response(model, s, mv),
        };
        self.memo = solver.memo;
        out
    }
}

/// ∀ picks uniformly among his legal moves.
pub struct RandomAbelard<R: Rng> {
    pub rng: R,
    pub restricted: bool,
}

impl<M: GameModel, R: Rng> AbelardStrategy<M> for RandomAbelard<R> {
    fn choose(&mut self, model: &M, s: &M::State, _: usize) -> Option<M::Move> {
        collect_moves(model, s, self.restricted)
            .choose(&mut self.rng)
            .cloned()
    }
}

/// ∃ answers with the first legal response.
pub struct FirstEloise;

impl<M: GameModel> EloiseStrategy<M> for FirstEloise {
    fn respond(&mut self, model: &M, s: &M::State, mv: &M::Move, _: usize) -> Option<M::State> {
        first_response(model, s, mv)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub by: Player,
    pub round: usize,
    pub mv: Value,
    pub state: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub kind: String,
    pub rounds: usize,
    pub steps: Vec<TraceStep>,
    pub winner: Player,
    pub halt_reason: String,
}

impl Trace {
    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "rounds": self.rounds,
            "moves": self.steps.iter().map(|s| json!({
                "by": s.by.code(),
                "round": s.round,
                "move": s.mv,
                "state": s.state,
            })).collect::<Vec<_>>(),
            "winner": self.winner.code(),
            "haltReason": self.halt_reason,
        })
    }
}

/// Play `rounds` rounds; an illegal move or answer loses on the spot.
pub fn run_match<M: GameModel>(
    model: &M,
    kind: &str,
    abelard: &mut dyn AbelardStrategy<M>,
    eloise: &mut dyn EloiseStrategy<M>,
    rounds: usize,
    restricted: bool,
) -> (Trace, M::State) {
    let mut state = model.initial_state();
    let mut steps = Vec::new();
    let finish = |steps, winner, reason: String| Trace {
        kind: kind.to_string(),
        rounds,
        steps,
        winner,
        halt_reason: reason,
    };
    for round in 1..=rounds {
        let left = rounds - round + 1;
        let mv = match abelard.choose(model, &state, left) {
            Some(m) => m,
            None => {
                let reason = if first_move(model, &state, restricted).is_none() {
                    format!("∀ has no legal move in round {round}")
                } else {
                    format!("∀ resigned in round {round}")
                };
                return (finish(steps, Player::E, reason), state);
            }
        };
        if !model.is_move_legal(&state, &mv, restricted) {
            steps.push(TraceStep {
                by: Player::A,
                round,
                mv: model.move_json(&mv),
                state: model.state_json(&state),
            });
            return (
                finish(steps, Player::E, format!("illegal ∀ move in round {round}")),
                state,
            );
        }
        steps.push(TraceStep {
            by: Player::A,
            round,
            mv: model.move_json(&mv),
            state: model.state_json(&state),
        });
        let resp = match eloise.respond(model, &state, &mv, left) {
            Some(r) => r,
            None => {
                return (
                    finish(
                        steps,
                        Player::A,
                        format!("∃ has no legal response in round {round}"),
                    ),
                    state,
                )
            }
        };
        if !model.is_response_legal(&state, &mv, &resp) {
            steps.push(TraceStep {
                by: Player::E,
                round,
                mv: Value::Null,
                state: model.state_json(&resp),
            });
            return (
                finish(
                    steps,
                    Player::A,
                    format!("illegal ∃ response in round {round}"),
                ),
                state,
            );
        }
        steps.push(TraceStep {
            by: Player::E,
            round,
            mv: Value::Null,
            state: model.state_json(&resp),
        });
        state = resp;
    }
    (
        finish(steps, Player::E, format!("∃ survived all {rounds} rounds")),
        state,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GameKind {
    /// Node bound `m`; ∀ may reuse nodes.
    F {
        m: usize,
    },
    H,
}

impl GameKind {
    pub fn code(&self) -> String {
        match self {
            GameKind::F { m } => format!("F{m}"),
            GameKind::H => "H".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExMove {
    Initial(usize),
    /// Demand a witness `k` at position `l` of `face` with atom `b`.
    Cylindrifier {
        net: usize,
        face: Vec<u32>,
        k: u32,
        b: usize,
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

/// Every position played so far; the F game only keeps the current one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExState {
    pub nets: Vec<Hypernetwork<usize>>,
    pub fresh: u64,
}

/// Network games over an explicit atom structure.
pub struct ExplicitGame<'a> {
    pub s: &'a AtomStructure,
    pub kind: GameKind,
}

/// Insert `x` at position `l` of `face`.
pub fn face_tuple(face: &[u32], l: usize, x: u32) -> Vec<u32> {
    let mut t = face.to_vec();
    t.insert(l, x);
    t
}

/// Enumerate every total labelling extending `fixed` that satisfies the
/// diagonal and cylindrifier conditions.
pub fn complete_network<S: AtomSpace<Atom = usize>>(
    s: &S,
    atoms: usize,
    n: usize,
    nodes: &[u32],
    fixed: &BTreeMap<Vec<u32>, usize>,
    f: Visit<'_, Network<usize>>,
) -> ControlFlow<()> {
    let shell = Network::from_fn(n, nodes.iter().copied(), |_| 0u8);
    let size = shell.labels().len();
    let mut labels: Vec<Option<usize>> = vec![None; size];
    for (t, &a) in fixed {
        if let Some(i) = shell.index_of(t) {
            labels[i] = Some(a);
        }
    }
    let tuples: Vec<Vec<u32>> = (0..size).map(|i| shell.tuple_at(i)).collect();
    let neighbours: Vec<Vec<(usize, usize)>> = tuples
        .iter()
        .map(|t| {
            let mut out = Vec::new();
            for i in 0..n {
                for &d in nodes {
                    let mut u = t.clone();
                    u[i] = d;
                    out.push((i, shell.index_of(&u).expect("node tuple")));
                }
            }
            out
        })
        .collect();
    let ok = |labels: &[Option<usize>], idx: usize, a: usize| -> bool {
        let t = &tuples[idx];
        for i in 0..n {
            for j in 0..n {
                if t[i] == t[j] && !s.in_diag(&a, i, j) {
                    return false;
                }
            }
        }
        neighbours[idx].iter().all(|&(i, u)| {
            let b = if u == idx { Some(a) } else { labels[u] };
            match b {
                Some(b) => s.t_related(i, &a, &b) && s.t_related(i, &b, &a),
                None => true,
            }
        })
    };
    for idx in 0..size {
        if let Some(a) = labels[idx] {
            if !ok(&labels, idx, a) {
                return ControlFlow::Continue(());
            }
        }
    }
    let free: Vec<usize> = (0..size).filter(|&i| labels[i].is_none()).collect();
    fn rec(
        pos: usize,
        free: &[usize],
        labels: &mut Vec<Option<usize>>,
        atoms: usize,
        ok: &dyn Fn(&[Option<usize>], usize, usize) -> bool,
        emit: &mut dyn FnMut(&[Option<usize>]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if pos == free.len() {
            return emit(labels);
        }
        let idx = free[pos];
        for a in 0..atoms {
            if ok(labels, idx, a) {
                labels[idx] = Some(a);
                rec(pos + 1, free, labels, atoms, ok, emit)?;
                labels[idx] = None;
            }
        }
        ControlFlow::Continue(())
    }
    let nodes_v = nodes.to_vec();
    rec(0, &free, &mut labels, atoms, &ok, &mut |ls| {
        let full: Vec<usize> = ls.iter().map(|x| x.expect("complete")).collect();
        let mut sorted = nodes_v.clone();
        sorted.sort_unstable();
        f(Network::from_labels(n, sorted, full))
    })
}

/// Default hyperlabels: keep `old` labels, copy a label across `~`, and mint
/// one fresh label per remaining class. `None` if two old labels collide.
pub fn default_hyperlabels<S: AtomSpace>(
    s: &S,
    net: &Network<S::Atom>,
    old: &BTreeMap<Vec<u32>, String>,
    fresh: &mut u64,
) -> Option<BTreeMap<Vec<u32>, String>> {
    let rel = sim_matrix(s, net);
    let long = all_sequences(net.nodes(), net.n() + 1);
    let related = |a: &[u32], b: &[u32]| a.iter().zip(b).all(|(&x, &y)| rel.contains(&(x, y)));
    let mut out: BTreeMap<Vec<u32>, String> = BTreeMap::new();
    for q in &long {
        if let Some(l) = old.get(q) {
            out.insert(q.clone(), l.clone());
        }
    }
    for q in &long {
        if out.contains_key(q) {
            continue;
        }
        let inherited: BTreeSet<&String> = old
            .iter()
            .filter(|(p, _)| related(q, p))
            .map(|(_, l)| l)
            .collect();
        let label = match inherited.len() {
            0 => {
                let prior = out
                    .iter()
                    .find(|(p, _)| !old.contains_key(*p) && related(q, p))
                    .map(|(_, l)| l.clone());
                prior.unwrap_or_else(|| {
                    let l = format!("h{fresh}");
                    *fresh += 1;
                    l
                })
            }
            1 => (*inherited.iter().next().expect("one")).clone(),
            _ => return None,
        };
        out.insert(q.clone(), label);
    }
    Some(out)
}

impl<'a> ExplicitGame<'a> {
    fn n(&self) -> usize {
        self.s.dimension()
    }

    fn hyperlabels_on(&self) -> bool {
        self.kind == GameKind::H
    }

    fn finish(
        &self,
        net: Network<usize>,
        old: &BTreeMap<Vec<u32>, String>,
        fresh: &mut u64,
    ) -> Option<Hypernetwork<usize>> {
        if !self.hyperlabels_on() {
            return Some(Hypernetwork {
                net,
                hyper: BTreeMap::new(),
            });
        }
        let hyper = default_hyperlabels(self.s, &net, old, fresh)?;
        let h = Hypernetwork { net, hyper };
        let ok = crate::networks::validate_hypernetwork(self.s, &h)
            .iter()
            .all(|v| v.condition != "IV");
        ok.then_some(h)
    }

    fn push(&self, s: &ExState, h: Hypernetwork<usize>, fresh: u64) -> ExState {
        match self.kind {
            GameKind::F { .. } => ExState {
                nets: vec![h],
                fresh,
            },
            GameKind::H => {
                let mut nets = s.nets.clone();
                if !nets.contains(&h) {
                    nets.push(h);
                }
                ExState { nets, fresh }
            }
        }
    }

    fn current_indices(&self, s: &ExState) -> Vec<usize> {
        match self.kind {
            GameKind::F { .. } => s.nets.len().checked_sub(1).into_iter().collect(),
            GameKind::H => (0..s.nets.len()).collect(),
        }
    }

    fn cylindrifier_legal(
        &self,
        net: &Network<usize>,
        face: &[u32],
        k: u32,
        b: usize,
        l: usize,
        restricted: bool,
    ) -> bool {
        let n = self.n();
        if face.len() != n - 1
            || l >= n
            || face.contains(&k)
            || !face.iter().all(|&x| net.has_node(x))
        {
            return false;
        }
        match self.kind {
            GameKind::F { m } => {
                if k as usize >= m {
                    return false;
                }
            }
            GameKind::H => {
                if Some(k) != least_fresh(net.nodes()) {
                    return false;
                }
            }
        }
        let probe = net.get(&face_tuple(face, l, face[0])).expect("face tuple");
        if !self.s.t_related(l, &b, probe) {
            return false;
        }
        // No witness may already exist.
        !(restricted
            && net
                .nodes()
                .iter()
                .any(|&w| net.get(&face_tuple(face, l, w)) == Some(&b)))
    }

    fn amalgamation_legal(
        &self,
        m: &Hypernetwork<usize>,
        n: &Hypernetwork<usize>,
        restricted: bool,
    ) -> bool {
        let common: Vec<u32> = m
            .net
            .nodes()
            .iter()
            .copied()
            .filter(|&x| n.net.has_node(x))
            .collect();
        if common.is_empty() {
            return false;
        }
        let id: NodeMap = common.iter().map(|&x| (x, x)).collect();
        if !partial_isomorphism_check(m, n, &id) {
            return false;
        }
        if restricted {
            for &a in m.net.nodes().iter().filter(|x| !n.net.has_node(**x)) {
                for &b in n.net.nodes().iter().filter(|x| !m.net.has_node(**x)) {
                    let mut t = id.clone();
                    t.insert(a, b);
                    if partial_isomorphism_check(m, n, &t) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Transformation domains are drawn from the nodes plus the least fresh one.
pub fn transformation_pool(nodes: &[u32]) -> Vec<u32> {
    let mut pool = nodes.to_vec();
    pool.extend(least_fresh(nodes));
    pool.sort_unstable();
    pool
}

pub fn least_fresh(nodes: &[u32]) -> Option<u32> {
    (0..).find(|x| !nodes.contains(x))
}

/// Partial maps from subsets of `dom_pool` onto `targets`.
pub fn node_maps(
    dom_pool: &[u32],
    targets: &[u32],
    injective: bool,
    f: Visit<'_, NodeMap>,
) -> ControlFlow<()> {
    fn rec(
        i: usize,
        pool: &[u32],
        targets: &[u32],
        injective: bool,
        cur: &mut NodeMap,
        f: Visit<'_, NodeMap>,
    ) -> ControlFlow<()> {
        let missing = targets
            .iter()
            .filter(|t| !cur.values().any(|v| v == *t))
            .count();
        if missing > pool.len() - i {
            return ControlFlow::Continue(());
        }
        if i == pool.len() {
            if !cur.is_empty() {
                f(cur.clone())?;
            }
            return ControlFlow::Continue(());
        }
        rec(i + 1, pool, targets, injective, cur, f)?;
        for &t in targets {
            if injective && cur.values().any(|&v| v == t) {
                continue;
            }
            cur.insert(pool[i], t);
            rec(i + 1, pool, targets, injective, cur, f)?;
            cur.remove(&pool[i]);
        }
        ControlFlow::Continue(())
    }
    rec(0, dom_pool, targets, injective, &mut NodeMap::new(), f)
}

/// Relabel nodes to `0..` choosing the lexicographically least label vector.
fn canonical_network(net: &Network<usize>) -> (usize, Vec<usize>) {
    let k = net.nodes().len();
    let n = net.n();
    let mut best: Option<Vec<usize>> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    let tuples: Vec<Vec<usize>> = all_sequences(&(0..k as u32).collect::<Vec<_>>(), n)
        .into_iter()
        .map(|t| t.into_iter().map(|x| x as usize).collect())
        .collect();
    let mut consider = |perm: &[usize]| {
        // perm[i] is the old position of new node i.
        let v: Vec<usize> = tuples
            .iter()
            .map(|t| {
                let old: Vec<u32> = t.iter().map(|&i| net.nodes()[perm[i]]).collect();
                *net.get(&old).expect("tuple")
            })
            .collect();
        if best.as_ref().map_or(true, |b| v < *b) {
            best = Some(v);
        }
    };
    if k <= 6 {
        permutations(&mut perm, 0, &mut consider);
    } else {
        consider(&perm);
    }
    (k, best.unwrap_or_default())
}

fn permutations(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permutations(p, i + 1, f);
        p.swap(i, j);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExKey {
    F(Option<(usize, Vec<usize>)>),
    H(Vec<(Vec<u32>, Vec<usize>, Vec<u32>)>),
}

impl<'a> GameModel for ExplicitGame<'a> {
    type State = ExState;
    type Move = ExMove;
    type Key = ExKey;

    fn initial_state(&self) -> ExState {
        ExState {
            nets: vec![],
            fresh: 0,
        }
    }

    fn abelard_moves(
        &self,
        s: &ExState,
        restricted: bool,
        f: Visit<'_, ExMove>,
    ) -> ControlFlow<()> {
        let n = self.n();
        if s.nets.is_empty() {
            for a in 0..self.s.len() {
                f(ExMove::Initial(a))?;
            }
            return ControlFlow::Continue(());
        }
        for idx in self.current_indices(s) {
            let net = &s.nets[idx].net;
            let ks: Vec<u32> = match self.kind {
                GameKind::F { m } => (0..m as u32).collect(),
                GameKind::H => least_fresh(net.nodes()).into_iter().collect(),
            };
            for face in all_sequences(net.nodes(), n - 1) {
                for &k in &ks {
                    for l in 0..n {
                        for b in 0..self.s.len() {
                            if self.cylindrifier_legal(net, &face, k, b, l, restricted) {
                                f(ExMove::Cylindrifier {
                                    net: idx,
                                    face: face.clone(),
                                    k,
                                    b,
                                    l,
                                })?;
                            }
                        }
                    }
                }
            }
        }
        if self.kind != GameKind::H {
            return ControlFlow::Continue(());
        }
        for (idx, h) in s.nets.iter().enumerate() {
            let nodes = h.net.nodes();
            node_maps(
                &transformation_pool(nodes),
                nodes,
                restricted,
                &mut |theta| f(ExMove::Transformation { net: idx, theta }),
            )?;
        }
        for i in 0..s.nets.len() {
            for j in i + 1..s.nets.len() {
                if self.amalgamation_legal(&s.nets[i], &s.nets[j], restricted) {
                    f(ExMove::Amalgamation { m: i, n: j })?;
                }
            }
        }
        ControlFlow::Continue(())
    }

    fn eloise_responses(&self, s: &ExState, mv: &ExMove, f: Visit<'_, ExState>) -> ControlFlow<()> {
        let n = self.n();
        let atoms = self.s.len();
        match mv {
            ExMove::Initial(a) => {
                if !s.nets.is_empty() {
                    return ControlFlow::Continue(());
                }
                let nodes: Vec<u32> = (0..n as u32).collect();
                let fixed: BTreeMap<Vec<u32>, usize> = [(nodes.clone(), *a)].into_iter().collect();
                complete_network(self.s, atoms, n, &nodes, &fixed, &mut |net| {
                    let mut fresh = s.fresh;
                    match self.finish(net, &BTreeMap::new(), &mut fresh) {
                        Some(h) => f(self.push(s, h, fresh)),
                        None => ControlFlow::Continue(()),
                    }
                })
            }
            ExMove::Cylindrifier { net, face, k, b, l } => {
                let Some(old) = s.nets.get(*net) else {
                    return ControlFlow::Continue(());
                };
                let mut nodes: Vec<u32> = old.net.nodes().to_vec();
                if !nodes.contains(k) {
                    nodes.push(*k);
                }
                let mut fixed: BTreeMap<Vec<u32>, usize> = old
                    .net
                    .tuples()
                    .into_iter()
                    .filter(|t| !t.contains(k))
                    .map(|t| {
                        let a = *old.net.get(&t).expect("tuple");
                        (t, a)
                    })
                    .collect();
                fixed.insert(face_tuple(face, *l, *k), *b);
                let kept: BTreeMap<Vec<u32>, String> = old
                    .hyper
                    .iter()
                    .filter(|(q, _)| !q.contains(k))
                    .map(|(q, l)| (q.clone(), l.clone()))
                    .collect();
                complete_network(self.s, atoms, n, &nodes, &fixed, &mut |m| {
                    let mut fresh = s.fresh;
                    match self.finish(m, &kept, &mut fresh) {
                        Some(h) => f(self.push(s, h, fresh)),
                        None => ControlFlow::Continue(()),
                    }
                })
            }
            ExMove::Transformation { net, theta } => {
                let Some(old) = s.nets.get(*net) else {
                    return ControlFlow::Continue(());
                };
                match apply_map(old, theta) {
                    Ok(h) => f(self.push(s, h, s.fresh)),
                    Err(_) => ControlFlow::Continue(()),
                }
            }
            ExMove::Amalgamation { m, n: nn } => {
                let (Some(a), Some(b)) = (s.nets.get(*m), s.nets.get(*nn)) else {
                    return ControlFlow::Continue(());
                };
                let mut nodes: Vec<u32> = a.net.nodes().to_vec();
                nodes.extend(
                    b.net
                        .nodes()
                        .iter()
                        .copied()
                        .filter(|x| !a.net.has_node(*x)),
                );
                let mut fixed = BTreeMap::new();
                let mut kept = BTreeMap::new();
                for h in [a, b] {
                    for t in h.net.tuples() {
                        fixed.insert(t.clone(), *h.net.get(&t).expect("tuple"));
                    }
                    kept.extend(h.hyper.iter().map(|(q, l)| (q.clone(), l.clone())));
                }
                complete_network(self.s, atoms, n, &nodes, &fixed, &mut |l| {
                    let mut fresh = s.fresh;
                    match self.finish(l, &kept, &mut fresh) {
                        Some(h) => f(self.push(s, h, fresh)),
                        None => ControlFlow::Continue(()),
                    }
                })
            }
        }
    }

    fn key(&self, s: &ExState) -> ExKey {
        match self.kind {
            GameKind::F { .. } => ExKey::F(s.nets.last().map(|h| canonical_network(&h.net))),
            GameKind::H => {
                let mut nets: Vec<&Hypernetwork<usize>> = s.nets.iter().collect();
                nets.sort_by(|x, y| {
                    (x.net.nodes(), x.net.labels()).cmp(&(y.net.nodes(), y.net.labels()))
                });
                let mut names: HashMap<&str, u32> = HashMap::new();
                let mut out: Vec<(Vec<u32>, Vec<usize>, Vec<u32>)> = nets
                    .iter()
                    .map(|h| {
                        let hs = h
                            .hyper
                            .values()
                            .map(|l| {
                                let next = names.len() as u32;
                                *names.entry(l.as_str()).or_insert(next)
                            })
                            .collect();
                        (h.net.nodes().to_vec(), h.net.labels().to_vec(), hs)
                    })
                    .collect();
                out.dedup();
                ExKey::H(out)
            }
        }
    }

    fn move_json(&self, m: &ExMove) -> Value {
        let atom = |a: &usize| self.s.atoms()[*a].clone();
        match m {
            ExMove::Initial(a) => json!({"type": "initial", "atom": atom(a)}),
            ExMove::Cylindrifier { net, face, k, b, l } => json!({
                "type": "cylindrifier", "net": net, "face": face, "k": k, "atom": atom(b), "l": l,
            }),
            ExMove::Transformation { net, theta } => json!({
                "type": "transformation", "net": net,
                "theta": theta.iter().map(|(x, y)| json!([x, y])).collect::<Vec<_>>(),
            }),
            ExMove::Amalgamation { m, n } => json!({"type": "amalgamation", "m": m, "n": n}),
        }
    }

    fn state_json(&self, s: &ExState) -> Value {
        json!({
            "networks": s.nets.iter().map(|h| crate::networks::network_to_json(self.s, "explicit", h)).collect::<Vec<_>>(),
        })
    }

    fn move_from_json(&self, v: &Value) -> Result<ExMove, GameError> {
        let err = |m: &str| GameError::Json(m.to_string());
        let uint = |k: &str| {
            v.get(k)
                .and_then(Value::as_u64)
                .ok_or_else(|| err(&format!("move needs {k}")))
        };
        let atom = || {
            let id = v
                .get("atom")
                .and_then(Value::as_str)
                .ok_or_else(|| err("move needs atom"))?;
            self.s
                .atom_index(id)
                .ok_or_else(|| err(&format!("unknown atom {id}")))
        };
        match v.get("type").and_then(Value::as_str) {
            Some("initial") => Ok(ExMove::Initial(atom()?)),
            Some("cylindrifier") => Ok(ExMove::Cylindrifier {
                net: uint("net")? as usize,
                face: v
                    .get("face")
                    .and_then(Value::as_array)
                    .ok_or_else(|| err("move needs face"))?
                    .iter()
                    .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(|| err("bad face")))
                    .collect::<Result<_, _>>()?,
                k: uint("k")? as u32,
                b: atom()?,
                l: uint("l")? as usize,
            }),
            Some("transformation") => Ok(ExMove::Transformation {
                net: uint("net")? as usize,
                theta: v
                    .get("theta")
                    .and_then(Value::as_array)
                    .ok_or_else(|| err("move needs theta"))?
                    .iter()
                    .map(|p| {
                        let a = p
                            .as_array()
                            .filter(|a| a.len() == 2)
                            .ok_or_else(|| err("bad theta pair"))?;
                        match (a[0].as_u64(), a[1].as_u64()) {
                            (Some(x), Some(y)) => Ok((x as u32, y as u32)),
                            _ => Err(err("bad theta pair")),
                        }
                    })
                    .collect::<Result<_, _>>()?,
            }),
            Some("amalgamation") => Ok(ExMove::Amalgamation {
                m: uint("m")? as usize,
                n: uint("n")? as usize,
            }),
            other => Err(err(&format!("unknown move type {other:?}"))),
        }
    }

    fn is_response_legal(&self, s: &ExState, m: &ExMove, r: &ExState) -> bool {
        let mut found = false;
        let _ = self.eloise_responses(s, m, &mut |x| {
            if x.nets == r.nets {
                found = true;
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        found
    }

    fn is_move_legal(&self, s: &ExState, m: &ExMove, restricted: bool) -> bool {
        match m {
            ExMove::Initial(a) => s.nets.is_empty() && *a < self.s.len(),
            _ if s.nets.is_empty() => false,
            ExMove::Cylindrifier { net, face, k, b, l } => {
                self.current_indices(s).contains(net)
                    && *b < self.s.len()
                    && self.cylindrifier_legal(&s.nets[*net].net, face, *k, *b, *l, restricted)
            }
            ExMove::Transformation { net, theta } => {
                let Some(h) = s.nets.get(*net) else {
                    return false;
                };
                let nodes = h.net.nodes();
                let pool = transformation_pool(nodes);
                let values: BTreeSet<u32> = theta.values().copied().collect();
                self.kind == GameKind::H
                    && theta.keys().all(|x| pool.contains(x))
                    && values.iter().eq(nodes.iter())
                    && (!restricted || values.len() == theta.len())
            }
            ExMove::Amalgamation { m, n } => {
                self.kind == GameKind::H
                    && m < n
                    && *n < s.nets.len()
                    && self.amalgamation_legal(&s.nets[*m], &s.nets[*n], restricted)
            }
        }
    }
}
