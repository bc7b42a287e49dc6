//! Finite cylindric atom structures, their complex algebras and the
//! substitution-word calculus.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Exhaustive axiom checking up to this many atoms.
pub const EXHAUSTIVE_ATOMS: usize = 12;
/// Order-independence of substitution factorisations is re-checked up to here.
pub const ORDER_CHECK_ATOMS: usize = 8;
/// Above this many atoms additivity is checked on sparse atom lists.
const SPARSE_ATOMS: usize = 4096;
/// Reported violations are truncated after this many.
pub const MAX_VIOLATIONS: usize = 1000;
/// Largest relation (in pairs) written out as JSON.
pub const MAX_JSON_PAIRS: usize = 5_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AtomError {
    #[error("index {0} out of range for dimension {1}")]
    Index(usize, usize),
    #[error("element has {got} atoms, structure has {expected}")]
    Size { expected: usize, got: usize },
    #[error("unknown atom {0:?}")]
    UnknownAtom(String),
    #[error("duplicate atom {0:?}")]
    DuplicateAtom(String),
    #[error("substitution map must be total on {0} indices")]
    NotTotal(usize),
    #[error("permutation {0:?} moves every index; no scratch index available")]
    NoScratch(Vec<usize>),
    #[error("substitution result depends on factorisation order for {0:?}")]
    OrderDependent(Vec<usize>),
    #[error("structure too large to serialise: {0} accessibility pairs")]
    TooLarge(usize),
    #[error("json: {0}")]
    Json(String),
}

/// Subset of the atoms, as a bitset over atom indices.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CaElement {
    len: usize,
    bits: Vec<u64>,
}

impl CaElement {
    pub fn empty(len: usize) -> CaElement {
        CaElement {
            len,
            bits: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> CaElement {
        let mut e = CaElement::empty(len);
        for (w, word) in e.bits.iter_mut().enumerate() {
            let rem = len - w * 64;
            *word = if rem >= 64 { !0 } else { (1u64 << rem) - 1 };
        }
        e
    }

    pub fn from_indices(len: usize, idx: impl IntoIterator<Item = usize>) -> CaElement {
        let mut e = CaElement::empty(len);
        for i in idx {
            e.insert(i);
        }
        e
    }

    pub fn from_mask(len: usize, mask: u64) -> CaElement {
        let mut e = CaElement::empty(len);
        if len > 0 {
            e.bits[0] = mask;
        }
        e
    }

    pub fn random<R: Rng>(len: usize, rng: &mut R) -> CaElement {
        let mut e = CaElement::full(len);
        for w in e.bits.iter_mut() {
            *w &= rng.gen::<u64>();
        }
        e
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|w| *w == 0)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn mask(&self) -> u64 {
        self.bits.first().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(w * 64 + b)
            })
        })
    }

    pub fn join(&self, o: &CaElement) -> CaElement {
        self.zip(o, |a, b| a | b)
    }

    pub fn meet(&self, o: &CaElement) -> CaElement {
        self.zip(o, |a, b| a & b)
    }

    pub fn complement(&self) -> CaElement {
        CaElement::full(self.len).zip(self, |a, b| a & !b)
    }

    pub fn is_subset(&self, o: &CaElement) -> bool {
        self.bits.iter().zip(&o.bits).all(|(a, b)| a & !b == 0)
    }

    fn zip(&self, o: &CaElement, f: impl Fn(u64, u64) -> u64) -> CaElement {
        CaElement {
            len: self.len,
            bits: self
                .bits
                .iter()
                .zip(&o.bits)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }
}

/// Accessibility relation `T_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Access {
    /// Equivalence given by class ids.
    Partition { class: Vec<u32>, count: usize },
    /// Arbitrary relation, `adj[a]` = atoms `b` with `a T b`.
    Relation { adj: Vec<Vec<u32>> },
}

impl Access {
    pub fn related(&self, a: usize, b: usize) -> bool {
        match self {
            Access::Partition { class, .. } => class[a] == class[b],
            Access::Relation { adj } => adj[a].binary_search(&(b as u32)).is_ok(),
        }
    }

    fn pair_count(&self) -> usize {
        match self {
            Access::Partition { class, count } => {
                let mut sizes = vec![0usize; *count];
                for &c in class {
                    sizes[c as usize] += 1;
                }
                sizes.iter().map(|s| s * s).sum()
            }
            Access::Relation { adj } => adj.iter().map(Vec::len).sum(),
        }
    }

    /// Turn a relation into a partition when it is an equivalence.
    fn normalise(self) -> Access {
        let adj = match &self {
            Access::Relation { adj } => adj,
            _ => return self,
        };
        let len = adj.len();
        let mut class = vec![u32::MAX; len];
        let mut count = 0u32;
        for a in 0..len {
            if class[a] != u32::MAX {
                continue;
            }
            let members = &adj[a];
            if members.binary_search(&(a as u32)).is_err() {
                return self;
            }
            for &b in members {
                if class[b as usize] != u32::MAX || adj[b as usize] != *members {
                    return self;
                }
                class[b as usize] = count;
            }
            count += 1;
        }
        Access::Partition {
            class,
            count: count as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub axiom: String,
    pub indices: Vec<usize>,
    /// Witnessing atoms, one list per element involved.
    pub witnesses: Vec<Vec<String>>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?}", self.axiom, self.indices)?;
        for w in &self.witnesses {
            write!(f, " {:?}", w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AtomStructure {
    dimension: usize,
    atoms: Vec<String>,
    index: HashMap<String, usize>,
    identity: Vec<CaElement>,
    access: Vec<Access>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaOp {
    Join,
    Meet,
    Complement,
    Cyl(usize),
    Diag(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScToken {
    Subst(usize, usize),
    Cyl(usize),
}

impl AtomStructure {
    /// Build from parts; atoms are re-sorted lexicographically and all
    /// relations permuted to match.
    pub fn from_parts(
        dimension: usize,
        atoms: Vec<String>,
        identity: BTreeMap<(usize, usize), Vec<usize>>,
        access: Vec<Access>,
    ) -> Result<AtomStructure, AtomError> {
        let len = atoms.len();
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| atoms[a].cmp(&atoms[b]));
        let mut pos = vec![0usize; len];
        for (new, &old) in order.iter().enumerate() {
            pos[old] = new;
        }
        let sorted: Vec<String> = order.iter().map(|&o| atoms[o].clone()).collect();
        let mut index = HashMap::with_capacity(len);
        for (i, a) in sorted.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(AtomError::DuplicateAtom(a.clone()));
            }
        }
        let n = dimension;
        let mut ident = vec![CaElement::empty(len); n * n];
        for (&(i, j), set) in &identity {
            if i >= n || j >= n {
                return Err(AtomError::Index(i.max(j), n));
            }
            ident[i * n + j] = CaElement::from_indices(len, set.iter().map(|&a| pos[a]));
        }
        for i in 0..n {
            for j in 0..n {
                if !identity.contains_key(&(i, j)) && identity.contains_key(&(j, i)) {
                    ident[i * n + j] = ident[j * n + i].clone();
                }
            }
        }
        let access = access
            .into_iter()
            .map(|a| match a {
                Access::Partition { class, count } => {
                    let mut c = vec![0u32; len];
                    for (old, &k) in class.iter().enumerate() {
                        c[pos[old]] = k;
                    }
                    Access::Partition { class: c, count }
                }
                Access::Relation { adj } => {
                    let mut out = vec![Vec::new(); len];
                    for (old, list) in adj.iter().enumerate() {
                        let mut l: Vec<u32> =
                            list.iter().map(|&b| pos[b as usize] as u32).collect();
                        l.sort_unstable();
                        l.dedup();
                        out[pos[old]] = l;
                    }
                    Access::Relation { adj: out }.normalise()
                }
            })
            .collect::<Vec<_>>();
        if access.len() != n {
            return Err(AtomError::Index(access.len(), n));
        }
        Ok(AtomStructure {
            dimension,
            atoms: sorted,
            index,
            identity: ident,
            access,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn access(&self, i: usize) -> &Access {
        &self.access[i]
    }

    pub fn top(&self) -> CaElement {
        CaElement::full(self.len())
    }

    pub fn bottom(&self) -> CaElement {
        CaElement::empty(self.len())
    }

    pub fn element(&self, names: &[&str]) -> Result<CaElement, AtomError> {
        let mut e = self.bottom();
        for n in names {
            e.insert(
                self.atom_index(n)
                    .ok_or_else(|| AtomError::UnknownAtom(n.to_string()))?,
            );
        }
        Ok(e)
    }

    pub fn names(&self, x: &CaElement) -> Vec<String> {
        x.iter().map(|i| self.atoms[i].clone()).collect()
    }

    fn check_index(&self, i: usize) -> Result<(), AtomError> {
        if i < self.dimension {
            Ok(())
        } else {
            Err(AtomError::Index(i, self.dimension))
        }
    }

    fn check_element(&self, x: &CaElement) -> Result<(), AtomError> {
        if x.len() == self.len() {
            Ok(())
        } else {
            Err(AtomError::Size {
                expected: self.len(),
                got: x.len(),
            })
        }
    }

    pub fn diag(&self, i: usize, j: usize) -> &CaElement {
        &self.identity[i * self.dimension + j]
    }

    /// `c_i x`: atoms `T_i`-related to some atom of `x`.
    pub fn cyl(&self, i: usize, x: &CaElement) -> CaElement {
        let len = self.len();
        match &self.access[i] {
            Access::Partition { class, count } => {
                let mut hit = vec![0u64; count.div_ceil(64)];
                for a in x.iter() {
                    let c = class[a] as usize;
                    hit[c / 64] |= 1 << (c % 64);
                }
                let mut out = CaElement::empty(len);
                for (w, word) in out.bits.iter_mut().enumerate() {
                    let base = w * 64;
                    let end = (base + 64).min(len);
                    let mut acc = 0u64;
                    for (b, &c) in class[base..end].iter().enumerate() {
                        let c = c as usize;
                        acc |= (hit[c / 64] >> (c % 64) & 1) << b;
                    }
                    *word = acc;
                }
                out
            }
            Access::Relation { adj } => CaElement::from_indices(
                len,
                (0..len).filter(|&a| adj[a].iter().any(|&b| x.contains(b as usize))),
            ),
        }
    }

    pub fn ca_apply(&self, op: CaOp, args: &[&CaElement]) -> Result<CaElement, AtomError> {
        for a in args {
            self.check_element(a)?;
        }
        let arg = |k: usize| -> Result<&CaElement, AtomError> {
            args.get(k)
                .copied()
                .ok_or(AtomError::Json(format!("missing argument {k}")))
        };
        Ok(match op {
            CaOp::Join => arg(0)?.join(arg(1)?),
            CaOp::Meet => arg(0)?.meet(arg(1)?),
            CaOp::Complement => arg(0)?.complement(),
            CaOp::Cyl(i) => {
                self.check_index(i)?;
                self.cyl(i, arg(0)?)
            }
            CaOp::Diag(i, j) => {
                self.check_index(i)?;
                self.check_index(j)?;
                self.diag(i, j).clone()
            }
        })
    }

    /// `s_i^j x = c_i(x . d_ij)`, the substitution for the map `i -> j`.
    pub fn elementary_substitution(&self, i: usize, j: usize, x: &CaElement) -> CaElement {
        if i == j {
            return x.clone();
        }
        self.cyl(i, &x.meet(self.diag(i, j)))
    }

    /// `s_tau x`, realised as a composition of elementary substitutions.
    pub fn substitution_apply(&self, tau: &[usize], x: &CaElement) -> Result<CaElement, AtomError> {
        self.check_element(x)?;
        if tau.len() != self.dimension {
            return Err(AtomError::NotTotal(self.dimension));
        }
        for &t in tau {
            self.check_index(t)?;
        }
        let prog = factor_substitution(tau, false)?;
        let out = self.run_program(&prog, x);
        if self.len() <= ORDER_CHECK_ATOMS {
            let alt = factor_substitution(tau, true)?;
            if self.run_program(&alt, x) != out {
                return Err(AtomError::OrderDependent(tau.to_vec()));
            }
        }
        Ok(out)
    }

    fn run_program(&self, prog: &SubstProgram, x: &CaElement) -> CaElement {
        let mut cur = match prog.scratch {
            Some(m) => self.cyl(m, x),
            None => x.clone(),
        };
        // The first assignment executed is the outermost operator.
        for &(p, h) in prog.steps.iter().rev() {
            cur = self.elementary_substitution(p, h, &cur);
        }
        cur
    }

    /// True iff the join over atoms of `s_tau {a}` is the top element.
    pub fn additivity_check(&self, tau: &[usize]) -> Result<bool, AtomError> {
        if self.len() > SPARSE_ATOMS {
            if let Some(members) = self.class_members() {
                return self.additivity_sparse(tau, &members);
            }
        }
        let mut acc = self.bottom();
        for a in 0..self.len() {
            let single = CaElement::from_indices(self.len(), [a]);
            acc = acc.join(&self.substitution_apply(tau, &single)?);
        }
        Ok(acc == self.top())
    }

    /// Members of every `T_i` class, when all the `T_i` are partitions.
    fn class_members(&self) -> Option<Vec<Vec<Vec<u32>>>> {
        self.access
            .iter()
            .map(|acc| match acc {
                Access::Partition { class, count } => {
                    let mut m = vec![Vec::new(); *count];
                    for (a, &c) in class.iter().enumerate() {
                        m[c as usize].push(a as u32);
                    }
                    Some(m)
                }
                Access::Relation { .. } => None,
            })
            .collect()
    }

    // Same program as `run_program`, on sorted atom lists; stops as soon as
    // the join covers every atom.
    fn additivity_sparse(
        &self,
        tau: &[usize],
        members: &[Vec<Vec<u32>>],
    ) -> Result<bool, AtomError> {
        if tau.len() != self.dimension {
            return Err(AtomError::NotTotal(self.dimension));
        }
        for &t in tau {
            self.check_index(t)?;
        }
        let prog = factor_substitution(tau, false)?;
        let cyl = |i: usize, x: &[u32]| -> Vec<u32> {
            let Access::Partition { class, .. } = &self.access[i] else {
                unreachable!()
            };
            let mut cs: Vec<u32> = x.iter().map(|&a| class[a as usize]).collect();
            cs.sort_unstable();
            cs.dedup();
            let mut out: Vec<u32> = cs
                .iter()
                .flat_map(|&c| members[i][c as usize].iter().copied())
                .collect();
            out.sort_unstable();
            out
        };
        let mut covered = CaElement::empty(self.len());
        let mut left = self.len();
        for a in 0..self.len() as u32 {
            let mut cur = match prog.scratch {
                Some(m) => cyl(m, &[a]),
                None => vec![a],
            };
            for &(p, h) in prog.steps.iter().rev() {
                if p != h {
                    let d = self.diag(p, h);
                    cur.retain(|&b| d.contains(b as usize));
                    cur = cyl(p, &cur);
                }
            }
            for b in cur {
                if !covered.contains(b as usize) {
                    covered.insert(b as usize);
                    left -= 1;
                }
            }
            if left == 0 {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn from_json(v: &Value) -> Result<AtomStructure, AtomError> {
        let err = |m: &str| AtomError::Json(m.to_string());
        let n = v
            .get("dimension")
            .and_then(Value::as_u64)
            .ok_or_else(|| err("missing dimension"))? as usize;
        let atoms: Vec<String> = v
            .get("atoms")
            .and_then(Value::as_array)
            .ok_or_else(|| err("missing atoms"))?
            .iter()
            .map(|a| {
                a.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| err("atom ids must be strings"))
            })
            .collect::<Result<_, _>>()?;
        let mut idx = HashMap::new();
        for (i, a) in atoms.iter().enumerate() {
            if idx.insert(a.clone(), i).is_some() {
                return Err(AtomError::DuplicateAtom(a.clone()));
            }
        }
        let lookup = |a: &Value| -> Result<usize, AtomError> {
            let s = a.as_str().ok_or_else(|| err("atom ids must be strings"))?;
            idx.get(s)
                .copied()
                .ok_or_else(|| AtomError::UnknownAtom(s.to_string()))
        };
        let mut identity = BTreeMap::new();
        if let Some(m) = v.get("identity").and_then(Value::as_object) {
            for (k, list) in m {
                let (a, b) = k
                    .split_once(',')
                    .ok_or_else(|| err("identity key must be \"i,j\""))?;
                let i: usize = a.trim().parse().map_err(|_| err("bad identity key"))?;
                let j: usize = b.trim().parse().map_err(|_| err("bad identity key"))?;
                if i >= n || j >= n {
                    return Err(AtomError::Index(i.max(j), n));
                }
                let set = list
                    .as_array()
                    .ok_or_else(|| err("identity value must be an array"))?
                    .iter()
                    .map(lookup)
                    .collect::<Result<Vec<_>, _>>()?;
                identity.insert((i, j), set);
            }
        }
        let acc = v.get("accessibility").and_then(Value::as_object);
        let mut access = Vec::with_capacity(n);
        for i in 0..n {
            let mut adj = vec![Vec::new(); atoms.len()];
            if let Some(pairs) = acc.and_then(|m| m.get(&i.to_string())) {
                for p in pairs
                    .as_array()
                    .ok_or_else(|| err("accessibility must be pair lists"))?
                {
                    let pr = p
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| err("pair must have two atoms"))?;
                    let (a, b) = (lookup(&pr[0])?, lookup(&pr[1])?);
                    adj[a].push(b as u32);
                }
            }
            access.push(Access::Relation { adj });
        }
        AtomStructure::from_parts(n, atoms, identity, access)
    }

    pub fn to_json(&self) -> Result<Value, AtomError> {
        let pairs: usize = self.access.iter().map(Access::pair_count).sum();
        if pairs > MAX_JSON_PAIRS {
            return Err(AtomError::TooLarge(pairs));
        }
        let n = self.dimension;
        let mut identity = Map::new();
        for i in 0..n {
            for j in 0..n {
                identity.insert(format!("{i},{j}"), json!(self.names(self.diag(i, j))));
            }
        }
        let mut accessibility = Map::new();
        for i in 0..n {
            let mut list = Vec::new();
            match &self.access[i] {
                Access::Partition { class, count } => {
                    let mut members = vec![Vec::new(); *count];
                    for (a, &c) in class.iter().enumerate() {
                        members[c as usize].push(a);
                    }
                    for a in 0..self.len() {
                        for &b in &members[class[a] as usize] {
                            list.push(json!([self.atoms[a], self.atoms[b]]));
                        }
                    }
                }
                Access::Relation { adj } => {
                    for (a, l) in adj.iter().enumerate() {
                        for &b in l {
                            list.push(json!([self.atoms[a], self.atoms[b as usize]]));
                        }
                    }
                }
            }
            accessibility.insert(i.to_string(), Value::Array(list));
        }
        Ok(json!({
            "dimension": n,
            "atoms": self.atoms,
            "identity": identity,
            "accessibility": accessibility,
        }))
    }
}

/// Assignment program `p := h` realising `s . tau` on tuples, executed in
/// order; `scratch` marks a cylindrified scratch coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstProgram {
    pub scratch: Option<usize>,
    pub steps: Vec<(usize, usize)>,
}

/// Factor `tau` into elementary assignments, greedily by cycles. With
/// `reverse` set, candidates and cycles are taken in the opposite order.
pub fn factor_substitution(tau: &[usize], reverse: bool) -> Result<SubstProgram, AtomError> {
    let n = tau.len();
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    // holds[p] = original coordinate whose value position p currently holds.
    let mut holds: Vec<usize> = (0..n).collect();
    let mut pending: Vec<bool> = (0..n).map(|p| tau[p] != p).collect();
    let mut steps = Vec::new();
    let mut scratch: Option<usize> = None;
    let mut restores: Vec<(usize, usize)> = Vec::new();
    let other_holder = |holds: &[usize], v: usize, avoid: usize| {
        (0..holds.len()).find(|&h| h != avoid && holds[h] == v)
    };
    let injective = {
        let mut seen = vec![false; n];
        tau.iter().all(|&t| !std::mem::replace(&mut seen[t], true))
    };
    loop {
        let ready = order.iter().copied().find(|&p| {
            pending[p]
                && (0..n).all(|q| {
                    q == p
                        || !pending[q]
                        || tau[q] != holds[p]
                        || other_holder(&holds, holds[p], p).is_some()
                })
                && restores.iter().all(|&(t, keep)| {
                    holds[p] != keep || other_holder(&holds, keep, p).map_or(false, |h| h != t)
                })
        });
        if let Some(p) = ready {
            let h = other_holder(&holds, tau[p], p)
                .ok_or_else(|| AtomError::NoScratch(tau.to_vec()))?;
            steps.push((p, h));
            holds[p] = tau[p];
            pending[p] = false;
            continue;
        }
        let Some(start) = order.iter().copied().find(|&p| pending[p]) else {
            break;
        };
        // Only cycles remain: copy one cycle value into a spare position.
        let spare = order.iter().copied().find(|&s| {
            !pending[s]
                && scratch != Some(s)
                && !restores.iter().any(|&(t, _)| t == s)
                && (0..n).any(|h| h != s && !pending[h] && holds[h] == holds[s])
        });
        let tmp = match spare {
            Some(s) => {
                restores.push((s, holds[s]));
                s
            }
            None if injective => match scratch {
                Some(m) => m,
                None => {
                    let m = order
                        .iter()
                        .copied()
                        .find(|&m| tau[m] == m)
                        .ok_or_else(|| AtomError::NoScratch(tau.to_vec()))?;
                    scratch = Some(m);
                    m
                }
            },
            None => return Err(AtomError::NoScratch(tau.to_vec())),
        };
        steps.push((tmp, start));
        holds[tmp] = holds[start];
    }
    for (t, keep) in restores {
        let h = other_holder(&holds, keep, t).ok_or_else(|| AtomError::NoScratch(tau.to_vec()))?;
        steps.push((t, h));
        holds[t] = keep;
    }
    let ok = (0..n).all(|p| Some(p) == scratch || holds[p] == tau[p]);
    if !ok {
        return Err(AtomError::NoScratch(tau.to_vec()));
    }
    Ok(SubstProgram { scratch, steps })
}

/// `w^` as a partial map on `0..n`: `None` where undefined.
pub fn eval_sc_word(word: &[ScToken], n: usize) -> Result<Vec<Option<usize>>, AtomError> {
    let mut f: Vec<Option<usize>> = (0..n).map(Some).collect();
    for tok in word {
        match *tok {
            ScToken::Subst(i, j) => {
                if i >= n || j >= n {
                    return Err(AtomError::Index(i.max(j), n));
                }
                // w^ o [i|j]: position i now reads through j.
                f[i] = f[j];
            }
            ScToken::Cyl(k) => {
                if k >= n {
                    return Err(AtomError::Index(k, n));
                }
                f[k] = None;
            }
        }
    }
    Ok(f)
}

pub fn validate_atom_structure(s: &AtomStructure) -> Vec<Violation> {
    let mut out = structural_violations(s);
    if out.is_empty() {
        out.extend(check_ca_axioms(s, 1000));
    }
    out
}

fn structural_violations(s: &AtomStructure) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = s.dimension();
    let name = |a: usize| s.atoms[a].clone();
    if n < 2 {
        out.push(Violation {
            axiom: "dimension must be at least 2".into(),
            indices: vec![n],
            witnesses: vec![],
        });
    }
    for i in 0..n {
        if let Access::Relation { adj } = &s.access[i] {
            for a in 0..s.len() {
                if !s.access[i].related(a, a) {
                    out.push(Violation {
                        axiom: format!("T_{i} not reflexive"),
                        indices: vec![i],
                        witnesses: vec![vec![name(a)]],
                    });
                }
                for &b in &adj[a] {
                    let b = b as usize;
                    if !s.access[i].related(b, a) {
                        out.push(Violation {
                            axiom: format!("T_{i} not symmetric"),
                            indices: vec![i],
                            witnesses: vec![vec![name(a), name(b)]],
                        });
                    }
                    for &c in &adj[b] {
                        if !s.access[i].related(a, c as usize) {
                            out.push(Violation {
                                axiom: format!("T_{i} not transitive"),
                                indices: vec![i],
                                witnesses: vec![vec![name(a), name(b), name(c as usize)]],
                            });
                        }
                    }
                    if out.len() >= MAX_VIOLATIONS {
                        return out;
                    }
                }
            }
        }
        let missing: Vec<String> = s.diag(i, i).complement().iter().map(name).collect();
        if !missing.is_empty() {
            out.push(Violation {
                axiom: format!("E_{i}{i} not the full atom set"),
                indices: vec![i, i],
                witnesses: vec![missing],
            });
        }
    }
    out
}

pub fn check_ca_axioms(s: &AtomStructure, budget: usize) -> Vec<Violation> {
    check_ca_axioms_seeded(s, budget, 0x5eed)
}

pub fn check_ca_axioms_seeded(s: &AtomStructure, budget: usize, seed: u64) -> Vec<Violation> {
    if s.len() <= EXHAUSTIVE_ATOMS {
        exhaustive_axioms(s)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sampled_axioms(s, budget, &mut rng)
    }
}

struct Sink<'a> {
    s: &'a AtomStructure,
    out: Vec<Violation>,
}

impl Sink<'_> {
    fn push(&mut self, axiom: &str, indices: Vec<usize>, elems: &[&CaElement]) {
        if self.out.len() < MAX_VIOLATIONS {
            self.out.push(Violation {
                axiom: axiom.to_string(),
                indices,
                witnesses: elems.iter().map(|e| self.s.names(e)).collect(),
            });
        }
    }
}

fn exhaustive_axioms(s: &AtomStructure) -> Vec<Violation> {
    let n = s.dimension();
    let len = s.len();
    let total = 1usize << len;
    let el = |m: usize| CaElement::from_mask(len, m as u64);
    // cyl tables per index
    let tables: Vec<Vec<u64>> = (0..n)
        .map(|i| (0..total).map(|m| s.cyl(i, &el(m)).mask()).collect())
        .collect();
    let full = s.top().mask();
    let mut sink = Sink { s, out: Vec::new() };
    for i in 0..n {
        let c = &tables[i];
        if c[0] != 0 {
            sink.push("C1 c_i 0 = 0", vec![i], &[&el(c[0] as usize)]);
        }
        for x in 0..total {
            if (x as u64) & !c[x] != 0 {
                sink.push("C2 x <= c_i x", vec![i], &[&el(x)]);
            }
        }
        let mut images: Vec<u64> = c.clone();
        images.sort_unstable();
        images.dedup();
        for x in 0..total {
            for &cy in &images {
                if c[(x as u64 & cy) as usize] != c[x] & cy {
                    sink.push(
                        "C3 c_i(x . c_i y) = c_i x . c_i y",
                        vec![i],
                        &[&el(x), &el(cy as usize)],
                    );
                }
            }
        }
        // Idempotence is an instance of C3 with x = top.
        for x in 0..total {
            if c[c[x] as usize] != c[x] {
                sink.push("c_i c_i x = c_i x", vec![i], &[&el(x)]);
            }
        }
        for j in 0..n {
            if i < j {
                let d = &tables[j];
                for x in 0..total {
                    if c[d[x] as usize] != d[c[x] as usize] {
                        sink.push("C4 c_i c_j x = c_j c_i x", vec![i, j], &[&el(x)]);
                    }
                }
            }
            if i != j {
                let dij = s.diag(i, j).mask();
                for x in 0..total {
                    let a = c[(dij & x as u64) as usize];
                    let b = c[(dij & !(x as u64) & full) as usize];
                    if a & b != 0 {
                        sink.push(
                            "C7 c_i(d_ij . x) . c_i(d_ij . -x) = 0",
                            vec![i, j],
                            &[&el(x)],
                        );
                    }
                }
            }
        }
        if s.diag(i, i).mask() != full {
            sink.push("C5 d_ii = 1", vec![i], &[s.diag(i, i)]);
        }
    }
    diagonal_axiom(s, &mut sink);
    sink.out
}

fn diagonal_axiom(s: &AtomStructure, sink: &mut Sink) {
    let n = s.dimension();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let rhs = s.cyl(k, &s.diag(i, k).meet(s.diag(k, j)));
                if &rhs != s.diag(i, j) {
                    sink.push(
                        "C6 d_ij = c_k(d_ik . d_kj)",
                        vec![i, j, k],
                        &[s.diag(i, j), &rhs],
                    );
                }
            }
        }
    }
}

fn sampled_axioms<R: Rng>(s: &AtomStructure, budget: usize, rng: &mut R) -> Vec<Violation> {
    let n = s.dimension();
    let len = s.len();
    let mut sink = Sink { s, out: Vec::new() };
    for i in 0..n {
        if s.diag(i, i) != &s.top() {
            sink.push("C5 d_ii = 1", vec![i], &[s.diag(i, i)]);
        }
        if !s.cyl(i, &s.bottom()).is_empty() {
            sink.push("C1 c_i 0 = 0", vec![i], &[]);
        }
    }
    diagonal_axiom(s, &mut sink);
    for _ in 0..budget {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let x = CaElement::random(len, rng);
        match rng.gen_range(0..4) {
            0 => {
                if !x.is_subset(&s.cyl(i, &x)) {
                    sink.push("C2 x <= c_i x", vec![i], &[&x]);
                }
            }
            1 => {
                let y = CaElement::random(len, rng);
                let cy = s.cyl(i, &y);
                if s.cyl(i, &x.meet(&cy)) != s.cyl(i, &x).meet(&cy) {
                    sink.push("C3 c_i(x . c_i y) = c_i x . c_i y", vec![i], &[&x, &y]);
                }
            }
            2 => {
                if s.cyl(i, &s.cyl(j, &x)) != s.cyl(j, &s.cyl(i, &x)) {
                    sink.push("C4 c_i c_j x = c_j c_i x", vec![i, j], &[&x]);
                }
            }
            _ => {
                let d = s.diag(i, j);
                let a = s.cyl(i, &d.meet(&x));
                let b = s.cyl(i, &d.meet(&x.complement()));
                if !a.meet(&b).is_empty() {
                    sink.push("C7 c_i(d_ij . x) . c_i(d_ij . -x) = 0", vec![i, j], &[&x]);
                }
            }
        }
    }
    sink.out
}

/// Atom structures with known-valid complex algebras, for tests and fixtures.
pub mod fixtures {
    use super::*;

    /// One atom, every diagonal and accessibility trivial.
    pub fn one_atom(n: usize) -> AtomStructure {
        let mut identity = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                identity.insert((i, j), vec![0]);
            }
        }
        let access = (0..n)
            .map(|_| Access::Partition {
                class: vec![0],
                count: 1,
            })
            .collect();
        AtomStructure::from_parts(n, vec!["a".into()], identity, access).expect("valid")
    }

    /// Atom structure of the full cylindric set algebra on `^n base`.
    /// `tag` prefixes atom names so several copies can be combined.
    pub fn full_set_algebra(n: usize, base: usize, tag: &str) -> AtomStructure {
        let tuples = all_tuples(n, base);
        let names: Vec<String> = tuples
            .iter()
            .map(|t| {
                format!(
                    "{tag}{}",
                    t.iter().map(|d| d.to_string()).collect::<String>()
                )
            })
            .collect();
        let mut identity = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                identity.insert(
                    (i, j),
                    (0..tuples.len())
                        .filter(|&a| tuples[a][i] == tuples[a][j])
                        .collect(),
                );
            }
        }
        let access = (0..n)
            .map(|i| {
                let mut keys: HashMap<Vec<usize>, u32> = HashMap::new();
                let class = tuples
                    .iter()
                    .map(|t| {
                        let mut k = t.clone();
                        k[i] = usize::MAX;
                        let next = keys.len() as u32;
                        *keys.entry(k).or_insert(next)
                    })
                    .collect();
                Access::Partition {
                    class,
                    count: keys.len(),
                }
            })
            .collect();
        AtomStructure::from_parts(n, names, identity, access).expect("valid")
    }

    pub fn all_tuples(n: usize, base: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|t| {
                    (0..base).map(move |d| {
                        let mut t = t.clone();
                        t.push(d);
                        t
                    })
                })
                .collect();
        }
        out
    }

    /// Disjoint union of structures of the same dimension.
    pub fn disjoint_union(parts: &[AtomStructure]) -> AtomStructure {
        let n = parts[0].dimension();
        let mut names = Vec::new();
        let mut identity: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let mut classes: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut counts = vec![0usize; n];
        for (k, p) in parts.iter().enumerate() {
            let off = names.len();
            names.extend(p.atoms().iter().map(|a| format!("u{k}.{a}")));
            for i in 0..n {
                for j in 0..n {
                    identity
                        .entry((i, j))
                        .or_default()
                        .extend(p.diag(i, j).iter().map(|a| a + off));
                }
                match p.access(i) {
                    Access::Partition { class, count } => {
                        classes[i].extend(class.iter().map(|c| c + counts[i] as u32));
                        counts[i] += count;
                    }
                    Access::Relation { .. } => panic!("fixture parts must be partitions"),
                }
            }
        }
        let access = classes
            .into_iter()
            .zip(counts)
            .map(|(class, count)| Access::Partition { class, count })
            .collect();
        AtomStructure::from_parts(n, names, identity, access).expect("valid")
    }

    /// Random diagonals and random partitions; usually not a CA atom structure.
    pub fn random_raw<R: Rng>(rng: &mut R, n: usize, atoms: usize) -> AtomStructure {
        let names: Vec<String> = (0..atoms).map(|a| format!("x{a}")).collect();
        let mut identity = BTreeMap::new();
        for i in 0..n {
            identity.insert((i, i), (0..atoms).collect());
            for j in i + 1..n {
                let e: Vec<usize> = (0..atoms).filter(|_| rng.gen_bool(0.5)).collect();
                identity.insert((i, j), e.clone());
                identity.insert((j, i), e);
            }
        }
        let access = (0..n)
            .map(|_| {
                let count = rng.gen_range(1..=atoms);
                let mut class: Vec<u32> =
                    (0..atoms).map(|_| rng.gen_range(0..count as u32)).collect();
                // Renumber so the classes are exactly 0..count'.
                let mut seen: Vec<u32> = Vec::new();
                for c in class.iter_mut() {
                    let p = seen.iter().position(|x| x == c).unwrap_or_else(|| {
                        seen.push(*c);
                        seen.len() - 1
                    });
                    *c = p as u32;
                }
                Access::Partition {
                    class,
                    count: seen.len(),
                }
            })
            .collect();
        AtomStructure::from_parts(n, names, identity, access).expect("well formed")
    }

    /// A random small valid structure: a disjoint union of one-atom and
    /// full set-algebra pieces with at most 12 atoms.
    pub fn random_small<R: Rng>(rng: &mut R) -> AtomStructure {
        let n = rng.gen_range(2..=3);
        let mut parts = Vec::new();
        let mut size = 0;
        loop {
            let piece = match rng.gen_range(0..3) {
                0 => one_atom(n),
                1 => full_set_algebra(n, 2, "s"),
                _ => full_set_algebra(n, 1, "t"),
            };
            if size + piece.len() > EXHAUSTIVE_ATOMS {
                break;
            }
            size += piece.len();
            parts.push(piece);
            if rng.gen_bool(0.4) {
                break;
            }
        }
        disjoint_union(&parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_additivity_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cases = vec![fixtures::full_set_algebra(3, 3, "s"), fixtures::one_atom(4)];
        for _ in 0..30 {
            let n = rng.gen_range(2..=4);
            let atoms = rng.gen_range(1..=9);
            cases.push(fixtures::random_raw(&mut rng, n, atoms));
        }
        for s in &cases {
            let members = s.class_members().unwrap();
            let n = s.dimension();
            for _ in 0..10 {
                let tau: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let dense = s.additivity_check(&tau);
                let sparse = s.additivity_sparse(&tau, &members);
                match (dense, sparse) {
                    (Ok(a), Ok(b)) => assert_eq!(a, b, "{tau:?}"),
                    (Err(_), Err(_)) | (Err(AtomError::OrderDependent(_)), Ok(_)) => {}
                    (a, b) => panic!("{tau:?}: {a:?} vs {b:?}"),
                }
            }
        }
    }
}
