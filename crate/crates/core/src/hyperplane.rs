//! Boolean field of sets over `Q^alpha` generated by affine hyperplanes,
//! diagonals and coordinate subspaces, with exact cylindrification and
//! coordinate transposition.
//!
//! Elements are kept in disjunctive normal form. A clause is a conjunction of
//! literals; the element is the union of its clauses.

use std::collections::BTreeSet;
use std::fmt;

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

pub type Q = BigRational;

pub const MIN_ALPHA: usize = 3;
pub const MAX_ALPHA: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HyperplaneError {
    #[error("dimension {0} outside 3..=8")]
    BadAlpha(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed constraint {index}: {reason}")]
    MalformedConstraint { index: usize, reason: String },
    #[error("cannot avoid equation {0}: it holds on the whole target plane")]
    Unavoidable(String),
    #[error("empty clause")]
    EmptyClause,
    #[error("clause is not in G_3: {0}")]
    NotG3(String),
    #[error("point is not a member of the clause")]
    NotMember,
    #[error("index out of range: {0}")]
    Index(usize),
    #[error("json: {0}")]
    Json(String),
}

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn point(v: &[i64]) -> Vec<Q> {
    v.iter().map(|&x| q(x)).collect()
}

fn check_alpha(alpha: usize) -> Result<(), HyperplaneError> {
    if (MIN_ALPHA..=MAX_ALPHA).contains(&alpha) {
        Ok(())
    } else {
        Err(HyperplaneError::BadAlpha(alpha))
    }
}

/// `t + sum r_i s_i = 0`, scaled so the first nonzero coefficient is 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffinePlane {
    pub t: Q,
    pub r: Vec<Q>,
}

impl AffinePlane {
    /// Returns `None` when every coefficient is zero.
    pub fn new(t: Q, r: Vec<Q>) -> Option<AffinePlane> {
        let lead = r.iter().find(|c| !c.is_zero())?.clone();
        Some(AffinePlane {
            t: &t / &lead,
            r: r.iter().map(|c| c / &lead).collect(),
        })
    }

    pub fn from_ints(t: i64, r: &[i64]) -> Option<AffinePlane> {
        AffinePlane::new(q(t), point(r))
    }

    pub fn alpha(&self) -> usize {
        self.r.len()
    }

    pub fn eval(&self, s: &[Q]) -> Q {
        let mut acc = self.t.clone();
        for (c, x) in self.r.iter().zip(s) {
            if !c.is_zero() {
                acc += c * x;
            }
        }
        acc
    }

    pub fn contains(&self, s: &[Q]) -> bool {
        self.eval(s).is_zero()
    }

    /// `q_i`: `s_i + 1 = sum_{j != i} s_j`.
    pub fn q_plane(alpha: usize, i: usize) -> AffinePlane {
        let r = (0..alpha)
            .map(|j| if j == i { q(1) } else { q(-1) })
            .collect();
        AffinePlane::new(q(1), r).expect("nonzero")
    }

    /// `y = q_0`.
    pub fn y_plane(alpha: usize) -> AffinePlane {
        AffinePlane::q_plane(alpha, 0)
    }

    /// `w`: `s_0 + 2 = s_1 + 2 sum_{i>1} s_i`.
    pub fn w_plane(alpha: usize) -> AffinePlane {
        let r = (0..alpha)
            .map(|j| match j {
                0 => q(1),
                1 => q(-1),
                _ => q(-2),
            })
            .collect();
        AffinePlane::new(q(2), r).expect("nonzero")
    }

    pub fn diagonal(alpha: usize, i: usize, j: usize) -> AffinePlane {
        let mut r = vec![Q::zero(); alpha];
        r[i] = q(1);
        r[j] = q(-1);
        AffinePlane::new(Q::zero(), r).expect("nonzero")
    }

    pub fn in_pl_s(&self) -> bool {
        (0..self.alpha()).any(|i| *self == AffinePlane::q_plane(self.alpha(), i))
    }

    /// Parallel to some axis, i.e. fixed by some cylindrification.
    pub fn in_pl_less(&self) -> bool {
        self.r.iter().any(|c| c.is_zero())
    }

    /// Member of `L`: parallel to some axis but not to axis 0.
    pub fn in_l(&self) -> bool {
        self.in_pl_less() && !self.r[0].is_zero()
    }

    /// `p(j|0)`: drop the coefficient of coordinate `j`.
    pub fn drop_coordinate(&self, j: usize) -> Option<AffinePlane> {
        let mut r = self.r.clone();
        r[j] = Q::zero();
        AffinePlane::new(self.t.clone(), r)
    }

    pub fn swap(&self, k: usize, l: usize) -> AffinePlane {
        let mut r = self.r.clone();
        r.swap(k, l);
        AffinePlane::new(self.t.clone(), r).expect("nonzero")
    }

    /// The value `u` with `s(j|u)` on the plane, if coordinate `j` matters.
    pub fn root_at(&self, j: usize, s: &[Q]) -> Option<Q> {
        if self.r[j].is_zero() {
            return None;
        }
        let mut rest = self.t.clone();
        for (i, (c, x)) in self.r.iter().zip(s).enumerate() {
            if i != j {
                rest += c * x;
            }
        }
        Some(-rest / &self.r[j])
    }

    fn lin(&self) -> Lin {
        Lin {
            c: self.t.clone(),
            a: self.r.clone(),
        }
    }
}

impl fmt::Display for AffinePlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.t)?;
        for (i, c) in self.r.iter().enumerate() {
            if !c.is_zero() {
                write!(f, " + {}*s{}", c, i)?;
            }
        }
        write!(f, " = 0")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Plane {
        plane: AffinePlane,
        positive: bool,
    },
    Diag {
        i: usize,
        j: usize,
        positive: bool,
    },
    /// `{s : s_j = 0 for all j not in delta}`
    CDelta {
        delta: Vec<usize>,
        positive: bool,
    },
}

impl Literal {
    pub fn plane(p: AffinePlane) -> Literal {
        Literal::Plane {
            plane: p,
            positive: true,
        }
    }

    pub fn diag(i: usize, j: usize) -> Literal {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        Literal::Diag {
            i,
            j,
            positive: true,
        }
    }

    pub fn cdelta(delta: &[usize]) -> Literal {
        let set: BTreeSet<usize> = delta.iter().copied().collect();
        Literal::CDelta {
            delta: set.into_iter().collect(),
            positive: true,
        }
    }

    pub fn positive(&self) -> bool {
        match self {
            Literal::Plane { positive, .. }
            | Literal::Diag { positive, .. }
            | Literal::CDelta { positive, .. } => *positive,
        }
    }

    pub fn negate(&self) -> Literal {
        let mut l = self.clone();
        match &mut l {
            Literal::Plane { positive, .. }
            | Literal::Diag { positive, .. }
            | Literal::CDelta { positive, .. } => *positive = !*positive,
        }
        l
    }

    pub fn contains(&self, s: &[Q]) -> bool {
        let inside = match self {
            Literal::Plane { plane, .. } => plane.contains(s),
            Literal::Diag { i, j, .. } => s[*i] == s[*j],
            Literal::CDelta { delta, .. } => {
                (0..s.len()).all(|k| delta.contains(&k) || s[k].is_zero())
            }
        };
        inside == self.positive()
    }

    /// The affine planes whose zero sets bound this literal.
    pub fn planes(&self, alpha: usize) -> Vec<AffinePlane> {
        match self {
            Literal::Plane { plane, .. } => vec![plane.clone()],
            Literal::Diag { i, j, .. } => vec![AffinePlane::diagonal(alpha, *i, *j)],
            Literal::CDelta { delta, .. } => (0..alpha)
                .filter(|k| !delta.contains(k))
                .map(|k| unit_plane(alpha, k))
                .collect(),
        }
    }

    fn swap(&self, k: usize, l: usize) -> Literal {
        let sw = |x: usize| {
            if x == k {
                l
            } else if x == l {
                k
            } else {
                x
            }
        };
        match self {
            Literal::Plane { plane, positive } => Literal::Plane {
                plane: plane.swap(k, l),
                positive: *positive,
            },
            Literal::Diag { i, j, positive } => {
                let (a, b) = (sw(*i), sw(*j));
                Literal::Diag {
                    i: a.min(b),
                    j: a.max(b),
                    positive: *positive,
                }
            }
            Literal::CDelta { delta, positive } => {
                let set: BTreeSet<usize> = delta.iter().map(|&x| sw(x)).collect();
                Literal::CDelta {
                    delta: set.into_iter().collect(),
                    positive: *positive,
                }
            }
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Literal::Plane { plane, .. } => plane.alpha().saturating_sub(1),
            Literal::Diag { i, j, .. } => (*i).max(*j),
            Literal::CDelta { delta, .. } => delta.iter().copied().max().unwrap_or(0),
        }
    }

    fn check(&self, alpha: usize) -> Result<(), HyperplaneError> {
        match self {
            Literal::Plane { plane, .. } if plane.alpha() != alpha => {
                Err(HyperplaneError::DimensionMismatch {
                    expected: alpha,
                    got: plane.alpha(),
                })
            }
            Literal::Diag { i, j, .. } if i == j => Err(HyperplaneError::Index(*i)),
            _ if self.max_index() >= alpha => Err(HyperplaneError::Index(self.max_index())),
            _ => Ok(()),
        }
    }
}

fn unit_plane(alpha: usize, k: usize) -> AffinePlane {
    let mut r = vec![Q::zero(); alpha];
    r[k] = q(1);
    AffinePlane::new(Q::zero(), r).expect("nonzero")
}

/// Finite union of finite intersections of literals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NormalForm {
    pub alpha: usize,
    pub clauses: Vec<Vec<Literal>>,
}

/// Affine form `c + sum a_i s_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Lin {
    c: Q,
    a: Vec<Q>,
}

impl Lin {
    fn is_const(&self) -> bool {
        self.a.iter().all(|x| x.is_zero())
    }

    /// Substitute `s_j := e` (where `e` does not mention `s_j`).
    fn subst(&self, j: usize, e: &Lin) -> Lin {
        let k = self.a[j].clone();
        if k.is_zero() {
            return self.clone();
        }
        let mut out = self.clone();
        out.a[j] = Q::zero();
        out.c += &k * &e.c;
        for (o, x) in out.a.iter_mut().zip(&e.a) {
            if !x.is_zero() {
                *o += &k * x;
            }
        }
        out
    }

    /// Solve `self = 0` for `s_j`.
    fn solve_for(&self, j: usize) -> Lin {
        let p = self.a[j].clone();
        let mut e = Lin {
            c: -&self.c / &p,
            a: self.a.iter().map(|x| -x / &p).collect(),
        };
        e.a[j] = Q::zero();
        e
    }
}

/// Conjunction of equalities and disequalities.
#[derive(Clone, Debug)]
struct Basic {
    eqs: Vec<Lin>,
    neqs: Vec<Lin>,
}

impl Basic {
    /// Decide satisfiability over the (infinite) field of rationals.
    fn satisfiable(&self) -> bool {
        let mut eqs = self.eqs.clone();
        let mut neqs = self.neqs.clone();
        while let Some(pos) = eqs.iter().position(|e| !e.is_const()) {
            let e = eqs.swap_remove(pos);
            let j = e.a.iter().position(|x| !x.is_zero()).expect("non-constant");
            let sol = e.solve_for(j);
            for x in eqs.iter_mut() {
                *x = x.subst(j, &sol);
            }
            for x in neqs.iter_mut() {
                *x = x.subst(j, &sol);
            }
        }
        eqs.iter().all(|e| e.c.is_zero()) && neqs.iter().all(|e| !(e.is_const() && e.c.is_zero()))
    }

    /// Project out coordinate `j`.
    fn eliminate(&self, j: usize) -> Basic {
        if let Some(pos) = self.eqs.iter().position(|e| !e.a[j].is_zero()) {
            let sol = self.eqs[pos].solve_for(j);
            let eqs = self
                .eqs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != pos)
                .map(|(_, e)| e.subst(j, &sol))
                .collect();
            let neqs = self.neqs.iter().map(|e| e.subst(j, &sol)).collect();
            Basic { eqs, neqs }
        } else {
            Basic {
                eqs: self.eqs.clone(),
                neqs: self
                    .neqs
                    .iter()
                    .filter(|e| e.a[j].is_zero())
                    .cloned()
                    .collect(),
            }
        }
    }
}

fn lin_to_literal(alpha: usize, l: &Lin, positive: bool) -> Option<Literal> {
    if l.is_const() {
        return None;
    }
    let plane = AffinePlane::new(l.c.clone(), l.a.clone())?;
    Some(plane_literal(alpha, plane, positive))
}

/// Prefer the diagonal and coordinate-subspace spellings where they apply.
fn plane_literal(alpha: usize, plane: AffinePlane, positive: bool) -> Literal {
    if plane.t.is_zero() {
        let nz: Vec<usize> = (0..alpha).filter(|&i| !plane.r[i].is_zero()).collect();
        if nz.len() == 2 && plane.r[nz[1]] == -Q::one() {
            return Literal::Diag {
                i: nz[0],
                j: nz[1],
                positive,
            };
        }
        if nz.len() == 1 {
            let delta: Vec<usize> = (0..alpha).filter(|&i| i != nz[0]).collect();
            return Literal::CDelta { delta, positive };
        }
    }
    Literal::Plane { plane, positive }
}

fn basic_to_clause(alpha: usize, b: &Basic) -> Vec<Literal> {
    let mut out = Vec::new();
    let mut zeros: BTreeSet<usize> = BTreeSet::new();
    for e in &b.eqs {
        if let Some(l) = lin_to_literal(alpha, e, true) {
            match l {
                Literal::CDelta { delta, .. } => {
                    for k in 0..alpha {
                        if !delta.contains(&k) {
                            zeros.insert(k);
                        }
                    }
                }
                other => out.push(other),
            }
        }
    }
    if !zeros.is_empty() {
        let delta: Vec<usize> = (0..alpha).filter(|k| !zeros.contains(k)).collect();
        out.push(Literal::CDelta {
            delta,
            positive: true,
        });
    }
    for e in &b.neqs {
        if let Some(l) = lin_to_literal(alpha, e, false) {
            out.push(l);
        }
    }
    out
}

/// Expand a clause into conjunctions of equalities/disequalities; a negated
/// coordinate-subspace literal is a disjunction and multiplies the branches.
fn clause_to_basics(alpha: usize, clause: &[Literal]) -> Vec<Basic> {
    let mut branches = vec![Basic {
        eqs: vec![],
        neqs: vec![],
    }];
    for lit in clause {
        let planes = lit.planes(alpha);
        match (lit, lit.positive()) {
            (Literal::CDelta { .. }, false) => {
                let mut next = Vec::new();
                for b in &branches {
                    for p in &planes {
                        let mut nb = b.clone();
                        nb.neqs.push(p.lin());
                        next.push(nb);
                    }
                }
                branches = next;
            }
            (_, true) => {
                for b in branches.iter_mut() {
                    b.eqs.extend(planes.iter().map(|p| p.lin()));
                }
            }
            (_, false) => {
                for b in branches.iter_mut() {
                    b.neqs.extend(planes.iter().map(|p| p.lin()));
                }
            }
        }
    }
    branches
}

fn clause_satisfiable(alpha: usize, clause: &[Literal]) -> bool {
    clause_to_basics(alpha, clause)
        .iter()
        .any(|b| b.satisfiable())
}

/// Sort, dedupe, drop trivially true literals; `None` if unsatisfiable.
fn canonical_clause(alpha: usize, clause: &[Literal]) -> Option<Vec<Literal>> {
    let mut set: BTreeSet<Literal> = BTreeSet::new();
    for lit in clause {
        if let Literal::CDelta { delta, positive } = lit {
            if delta.len() == alpha {
                if *positive {
                    continue;
                }
                return None;
            }
        }
        if set.contains(&lit.negate()) {
            return None;
        }
        set.insert(lit.clone());
    }
    let c: Vec<Literal> = set.into_iter().collect();
    if clause_satisfiable(alpha, &c) {
        Some(c)
    } else {
        None
    }
}

impl NormalForm {
    pub fn bottom(alpha: usize) -> NormalForm {
        NormalForm {
            alpha,
            clauses: vec![],
        }
    }

    pub fn top(alpha: usize) -> NormalForm {
        NormalForm {
            alpha,
            clauses: vec![vec![]],
        }
    }

    pub fn literal(alpha: usize, lit: Literal) -> NormalForm {
        NormalForm::from_clauses(alpha, vec![vec![lit]])
    }

    pub fn plane(p: AffinePlane) -> NormalForm {
        let alpha = p.alpha();
        NormalForm::literal(alpha, plane_literal(alpha, p, true))
    }

    pub fn y(alpha: usize) -> NormalForm {
        NormalForm::plane(AffinePlane::y_plane(alpha))
    }

    pub fn w(alpha: usize) -> NormalForm {
        NormalForm::plane(AffinePlane::w_plane(alpha))
    }

    pub fn singleton(s: &[Q]) -> NormalForm {
        let alpha = s.len();
        let clause = (0..alpha)
            .map(|i| {
                let mut r = vec![Q::zero(); alpha];
                r[i] = q(1);
                plane_literal(
                    alpha,
                    AffinePlane::new(-s[i].clone(), r).expect("unit"),
                    true,
                )
            })
            .collect();
        NormalForm::from_clauses(alpha, vec![clause])
    }

    pub fn from_clauses(alpha: usize, clauses: Vec<Vec<Literal>>) -> NormalForm {
        let set: BTreeSet<Vec<Literal>> = clauses
            .iter()
            .filter_map(|c| canonical_clause(alpha, c))
            .collect();
        NormalForm {
            alpha,
            clauses: set.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<(), HyperplaneError> {
        check_alpha(self.alpha)?;
        for c in &self.clauses {
            for l in c {
                l.check(self.alpha)?;
            }
        }
        Ok(())
    }

    pub fn is_bottom(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn contains(&self, s: &[Q]) -> bool {
        self.clauses.iter().any(|c| c.iter().all(|l| l.contains(s)))
    }

    pub fn join(&self, other: &NormalForm) -> NormalForm {
        let mut clauses = self.clauses.clone();
        clauses.extend(other.clauses.iter().cloned());
        NormalForm::from_clauses(self.alpha, clauses)
    }

    pub fn meet(&self, other: &NormalForm) -> NormalForm {
        let mut clauses = Vec::new();
        for a in &self.clauses {
            for b in &other.clauses {
                let mut c = a.clone();
                c.extend(b.iter().cloned());
                clauses.push(c);
            }
        }
        NormalForm::from_clauses(self.alpha, clauses)
    }

    pub fn complement(&self) -> NormalForm {
        let mut acc = NormalForm::top(self.alpha);
        for clause in &self.clauses {
            let neg = NormalForm::from_clauses(
                self.alpha,
                clause.iter().map(|l| vec![l.negate()]).collect(),
            );
            acc = acc.meet(&neg);
        }
        acc
    }

    /// Cylindrification along coordinate `j`: exact projection, clause by clause.
    pub fn cylindrify(&self, j: usize) -> NormalForm {
        let mut clauses = Vec::new();
        for clause in &self.clauses {
            for b in clause_to_basics(self.alpha, clause) {
                if !b.satisfiable() {
                    continue;
                }
                clauses.push(basic_to_clause(self.alpha, &b.eliminate(j)));
            }
        }
        NormalForm::from_clauses(self.alpha, clauses)
    }

    /// The substitution `s_kl` swapping coordinates `k` and `l`.
    pub fn transpose(&self, k: usize, l: usize) -> NormalForm {
        NormalForm::from_clauses(
            self.alpha,
            self.clauses
                .iter()
                .map(|c| c.iter().map(|lit| lit.swap(k, l)).collect())
                .collect(),
        )
    }

    /// `c_i(x and d_ij)`.
    pub fn unary_substitution(&self, i: usize, j: usize) -> NormalForm {
        self.meet(&NormalForm::literal(self.alpha, Literal::diag(i, j)))
            .cylindrify(i)
    }

    /// If the element is a single point, return it.
    pub fn as_point(&self) -> Option<Vec<Q>> {
        let mut found: Option<Vec<Q>> = None;
        for clause in &self.clauses {
            for b in clause_to_basics(self.alpha, clause) {
                if !b.satisfiable() {
                    continue;
                }
                let p = solve_point(self.alpha, &b.eqs)?;
                if b.neqs.iter().any(|e| eval_lin(e, &p).is_zero()) {
                    continue;
                }
                match &found {
                    None => found = Some(p),
                    Some(f) if *f == p => {}
                    Some(_) => return None,
                }
            }
        }
        found
    }

    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.clauses.iter().flatten()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "alpha": self.alpha,
            "clauses": self.clauses.iter().map(|c| c.iter().map(literal_to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<NormalForm, HyperplaneError> {
        let alpha =
            v.get("alpha")
                .and_then(Value::as_u64)
                .ok_or_else(|| HyperplaneError::Json("missing alpha".into()))? as usize;
        check_alpha(alpha)?;
        let clauses = v
            .get("clauses")
            .and_then(Value::as_array)
            .ok_or_else(|| HyperplaneError::Json("missing clauses".into()))?;
        let mut out = Vec::new();
        for c in clauses {
            let lits = c
                .as_array()
                .ok_or_else(|| HyperplaneError::Json("clause must be an array".into()))?;
            let mut clause = Vec::new();
            for l in lits {
                let lit = literal_from_json(alpha, l)?;
                lit.check(alpha)?;
                clause.push(lit);
            }
            out.push(clause);
        }
        Ok(NormalForm::from_clauses(alpha, out))
    }
}

fn eval_lin(e: &Lin, s: &[Q]) -> Q {
    let mut acc = e.c.clone();
    for (a, x) in e.a.iter().zip(s) {
        acc += a * x;
    }
    acc
}

/// Unique solution of a full-rank system, or `None`.
fn solve_point(alpha: usize, eqs: &[Lin]) -> Option<Vec<Q>> {
    let mut eqs: Vec<Lin> = eqs.to_vec();
    let mut solved: Vec<(usize, Lin)> = Vec::new();
    while let Some(pos) = eqs.iter().position(|e| !e.is_const()) {
        let e = eqs.swap_remove(pos);
        let j = e.a.iter().position(|x| !x.is_zero())?;
        let sol = e.solve_for(j);
        for x in eqs.iter_mut() {
            *x = x.subst(j, &sol);
        }
        for (_, s) in solved.iter_mut() {
            *s = s.subst(j, &sol);
        }
        solved.push((j, sol));
    }
    if solved.len() != alpha {
        return None;
    }
    let mut p = vec![Q::zero(); alpha];
    for (j, s) in solved {
        if !s.is_const() {
            return None;
        }
        p[j] = s.c;
    }
    Some(p)
}

pub fn rational_to_json(x: &Q) -> Value {
    let enc = |b: &BigInt| match b.to_i64() {
        Some(v) => json!(v),
        None => json!(b.to_string()),
    };
    json!({"num": enc(x.numer()), "den": enc(x.denom())})
}

pub fn rational_from_json(v: &Value) -> Result<Q, HyperplaneError> {
    let part = |key: &str| -> Result<BigInt, HyperplaneError> {
        match v.get(key) {
            Some(Value::Number(n)) => n
                .as_i64()
                .map(BigInt::from)
                .ok_or_else(|| HyperplaneError::Json(format!("{key} not an integer"))),
            Some(Value::String(s)) => s
                .parse::<BigInt>()
                .map_err(|e| HyperplaneError::Json(e.to_string())),
            _ => Err(HyperplaneError::Json(format!("missing {key}"))),
        }
    };
    if let Some(n) = v.as_i64() {
        return Ok(q(n));
    }
    let den = part("den")?;
    if den.is_zero() {
        return Err(HyperplaneError::Json("zero denominator".into()));
    }
    Ok(Q::new(part("num")?, den))
}

pub fn point_to_json(s: &[Q]) -> Value {
    Value::Array(s.iter().map(rational_to_json).collect())
}

pub fn point_from_json(v: &Value) -> Result<Vec<Q>, HyperplaneError> {
    v.as_array()
        .ok_or_else(|| HyperplaneError::Json("point must be an array".into()))?
        .iter()
        .map(rational_from_json)
        .collect()
}

pub fn plane_to_json(p: &AffinePlane) -> Value {
    json!({
        "t": rational_to_json(&p.t),
        "r": p.r.iter().map(rational_to_json).collect::<Vec<_>>(),
    })
}

pub fn plane_from_json(v: &Value) -> Result<AffinePlane, HyperplaneError> {
    let t = rational_from_json(
        v.get("t")
            .ok_or_else(|| HyperplaneError::Json("missing t".into()))?,
    )?;
    let r = point_from_json(
        v.get("r")
            .ok_or_else(|| HyperplaneError::Json("missing r".into()))?,
    )?;
    AffinePlane::new(t, r).ok_or_else(|| HyperplaneError::Json("all coefficients zero".into()))
}

fn sign(positive: bool) -> i64 {
    if positive {
        1
    } else {
        -1
    }
}

fn literal_to_json(l: &Literal) -> Value {
    match l {
        Literal::Plane { plane, positive } => {
            let mut v = plane_to_json(plane);
            v["kind"] = json!("plane");
            v["sign"] = json!(sign(*positive));
            v
        }
        Literal::Diag { i, j, positive } => {
            json!({"kind": "diag", "sign": sign(*positive), "i": i, "j": j})
        }
        Literal::CDelta { delta, positive } => {
            json!({"kind": "cdelta", "sign": sign(*positive), "delta": delta})
        }
    }
}

fn literal_from_json(alpha: usize, v: &Value) -> Result<Literal, HyperplaneError> {
    let positive = match v.get("sign").and_then(Value::as_i64) {
        Some(1) | None => true,
        Some(-1) => false,
        Some(s) => return Err(HyperplaneError::Json(format!("bad sign {s}"))),
    };
    let idx = |k: &str| -> Result<usize, HyperplaneError> {
        v.get(k)
            .and_then(Value::as_u64)
            .map(|x| x as usize)
            .ok_or_else(|| HyperplaneError::Json(format!("missing {k}")))
    };
    let lit = match v.get("kind").and_then(Value::as_str) {
        Some("plane") => {
            let p = plane_from_json(v)?;
            if p.alpha() != alpha {
                return Err(HyperplaneError::DimensionMismatch {
                    expected: alpha,
                    got: p.alpha(),
                });
            }
            Literal::Plane { plane: p, positive }
        }
        Some("diag") => {
            let (i, j) = (idx("i")?, idx("j")?);
            Literal::Diag {
                i: i.min(j),
                j: i.max(j),
                positive,
            }
        }
        Some("cdelta") => {
            let delta: BTreeSet<usize> = v
                .get("delta")
                .and_then(Value::as_array)
                .ok_or_else(|| HyperplaneError::Json("missing delta".into()))?
                .iter()
                .map(|x| x.as_u64().map(|x| x as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| HyperplaneError::Json("bad delta".into()))?;
            Literal::CDelta {
                delta: delta.into_iter().collect(),
                positive,
            }
        }
        other => {
            return Err(HyperplaneError::Json(format!(
                "unknown literal kind {other:?}"
            )))
        }
    };
    Ok(lit)
}

/// Decide `exists u. s(j|u) in g` by testing finitely many witnesses: every
/// root at coordinate `j` of an affine literal, zero, and one value above them all.
pub fn cylindrify_oracle(g: &NormalForm, j: usize, s: &[Q]) -> bool {
    let mut cands: Vec<Q> = vec![Q::zero()];
    for lit in g.literals() {
        for p in lit.planes(g.alpha) {
            if let Some(u) = p.root_at(j, s) {
                cands.push(u);
            }
        }
    }
    let generic = cands.iter().max().cloned().unwrap_or_else(Q::zero) + Q::one();
    cands.push(generic);
    let mut probe = s.to_vec();
    cands.into_iter().any(|u| {
        probe[j] = u;
        g.contains(&probe)
    })
}

/// `tau(x, y) = c_1(c_0 x . s c_1 y) . c_1 x . c_0 y`, where the inner
/// substitution moves coordinate 1 into coordinate 0: `c_0(z . d_01)`.
pub fn tau(x: &NormalForm, y: &NormalForm) -> NormalForm {
    let inner = y.cylindrify(1).unary_substitution(0, 1);
    x.cylindrify(0)
        .meet(&inner)
        .cylindrify(1)
        .meet(&x.cylindrify(1))
        .meet(&y.cylindrify(0))
}

/// Closed form of `tau` on singletons: bottom unless `r_1 = t_0` and
/// `r_i = t_i` for `i > 1`, otherwise the point `(r_0, t_1, t_2, ...)`.
pub fn tau_singletons(r: &[Q], t: &[Q]) -> Option<Vec<Q>> {
    if r.len() != t.len() || r.len() < 2 {
        return None;
    }
    if r[1] != t[0] || (2..r.len()).any(|i| r[i] != t[i]) {
        return None;
    }
    let mut s = t.to_vec();
    s[0] = r[0].clone();
    Some(s)
}

/// Pick the least integer-valued rational not in `bad`, preferring zero,
/// otherwise one above the largest bad value.
fn generic_value(bad: &[Q]) -> Q {
    if !bad.iter().any(|b| b.is_zero()) {
        return Q::zero();
    }
    bad.iter().max().cloned().unwrap_or_else(Q::zero) + Q::one()
}

/// Find `s` on `x_0 + 2 = x_1 + 2 sum_{1<i<=m} x_i` (coordinates above `m`
/// zero) that satisfies none of `constraints` and no `q_l` for `l <= m`.
///
/// Each constraint must have `r_0 != 0` and some `r_j = 0` with `0 < j <= m`.
pub fn witness_solve(
    alpha: usize,
    m: usize,
    constraints: &[AffinePlane],
) -> Result<Vec<Q>, HyperplaneError> {
    check_alpha(alpha)?;
    if m == 0 || m >= alpha {
        return Err(HyperplaneError::Index(m));
    }
    for (k, c) in constraints.iter().enumerate() {
        if c.alpha() != alpha {
            return Err(HyperplaneError::DimensionMismatch {
                expected: alpha,
                got: c.alpha(),
            });
        }
        if c.r[0].is_zero() {
            return Err(HyperplaneError::MalformedConstraint {
                index: k,
                reason: "coefficient of x_0 is zero".into(),
            });
        }
        if !(1..=m).any(|j| c.r[j].is_zero()) {
            return Err(HyperplaneError::MalformedConstraint {
                index: k,
                reason: format!("no zero coefficient among x_1..x_{m}"),
            });
        }
    }
    // Restrict to coordinates 0..=m and eliminate x_0 via the target plane.
    let restrict = |p: &AffinePlane| Lin {
        c: p.t.clone(),
        a: (0..=m).map(|i| p.r[i].clone()).collect(),
    };
    let mut x0 = Lin {
        c: q(-2),
        a: vec![Q::zero(); m + 1],
    };
    x0.a[1] = q(1);
    for i in 2..=m {
        x0.a[i] = q(2);
    }
    let mut avoid: Vec<(String, Lin)> = Vec::new();
    for (k, c) in constraints.iter().enumerate() {
        avoid.push((format!("constraint {k}"), restrict(c).subst(0, &x0)));
    }
    for l in 0..=m {
        let ql = AffinePlane::q_plane(alpha, l);
        avoid.push((format!("q_{l}"), restrict(&ql).subst(0, &x0)));
    }
    let mut s = vec![Q::zero(); alpha];
    for (name, f) in &avoid {
        if f.is_const() && f.c.is_zero() {
            return Err(HyperplaneError::Unavoidable(name.clone()));
        }
    }
    for t in 1..=m {
        // Forms whose last live variable is x_t are fully determined by s_t.
        let mut bad = Vec::new();
        for (_, f) in &avoid {
            let last = (1..=m).rev().find(|&i| !f.a[i].is_zero());
            if last != Some(t) {
                continue;
            }
            let mut rest = f.c.clone();
            for i in 1..t {
                rest += &f.a[i] * &s[i];
            }
            bad.push(-rest / &f.a[t]);
        }
        s[t] = generic_value(&bad);
    }
    let mut s0 = q(-2) + &s[1];
    for i in 2..=m {
        s0 += q(2) * &s[i];
    }
    s[0] = s0;
    Ok(s)
}

/// Move `z` off `w` by changing coordinate 0, staying inside the clause.
/// Every literal of the clause must lie outside `Pl^S` and `P(0)`.
pub fn perturb_outside_w(
    alpha: usize,
    clause: &[Literal],
    z: &[Q],
) -> Result<Vec<Q>, HyperplaneError> {
    check_alpha(alpha)?;
    if z.len() != alpha {
        return Err(HyperplaneError::DimensionMismatch {
            expected: alpha,
            got: z.len(),
        });
    }
    if clause.is_empty() || !clause_satisfiable(alpha, clause) {
        return Err(HyperplaneError::EmptyClause);
    }
    let mut bad: Vec<Q> = Vec::new();
    for lit in clause {
        lit.check(alpha)?;
        classify_g3(lit)?;
        if !lit.positive() {
            for p in lit.planes(alpha) {
                if let Some(u) = p.root_at(0, z) {
                    bad.push(u);
                }
            }
        }
    }
    if !clause.iter().all(|l| l.contains(z)) {
        return Err(HyperplaneError::NotMember);
    }
    if let Some(u) = AffinePlane::w_plane(alpha).root_at(0, z) {
        bad.push(u);
    }
    let mut out = z.to_vec();
    out[0] = generic_value(&bad);
    Ok(out)
}

/// Literals allowed in a `G_3` clause.
pub fn classify_g3(lit: &Literal) -> Result<(), HyperplaneError> {
    let reject = |why: &str| Err(HyperplaneError::NotG3(format!("{why}: {lit:?}")));
    match lit {
        Literal::CDelta { delta, .. } => {
            if delta.contains(&0) {
                Ok(())
            } else {
                reject("coordinate subspace without 0")
            }
        }
        Literal::Diag { i, j, positive } => {
            if (*i, *j) == (0, 1) && *positive {
                reject("d_01 belongs to P(0)")
            } else if *positive && (*i == 0 || *j == 0) {
                reject("diagonal through coordinate 0 lies in L")
            } else {
                Ok(())
            }
        }
        Literal::Plane { plane, positive } => {
            if plane.in_pl_s() {
                if *positive {
                    reject("member of Pl^S")
                } else {
                    Ok(())
                }
            } else if plane.in_pl_less() {
                if *positive && plane.in_l() {
                    reject("member of L")
                } else {
                    Ok(())
                }
            } else {
                reject("plane outside Pl^S and Pl^<")
            }
        }
    }
}

/// Random generators shared by tests, the CLI and the acceptance harness.
pub mod gen {
    use super::*;

    pub fn small<R: Rng>(rng: &mut R, lo: i64, hi: i64) -> Q {
        q(rng.gen_range(lo..=hi))
    }

    pub fn random_point<R: Rng>(rng: &mut R, alpha: usize) -> Vec<Q> {
        (0..alpha).map(|_| small(rng, -3, 3)).collect()
    }

    /// A plane parallel to a random axis.
    pub fn random_pl_less<R: Rng>(rng: &mut R, alpha: usize) -> AffinePlane {
        loop {
            let mut r: Vec<Q> = (0..alpha).map(|_| small(rng, -2, 2)).collect();
            let z = rng.gen_range(0..alpha);
            r[z] = Q::zero();
            if let Some(p) = AffinePlane::new(small(rng, -3, 3), r) {
                return p;
            }
        }
    }

    pub fn random_literal<R: Rng>(rng: &mut R, alpha: usize) -> Literal {
        let positive = rng.gen_bool(0.5);
        match rng.gen_range(0..4) {
            0 => Literal::Plane {
                plane: AffinePlane::q_plane(alpha, rng.gen_range(0..alpha)),
                positive,
            },
            1 => {
                let p = random_pl_less(rng, alpha);
                plane_literal(alpha, p, positive)
            }
            2 => {
                let i = rng.gen_range(0..alpha);
                let mut j = rng.gen_range(0..alpha - 1);
                if j >= i {
                    j += 1;
                }
                Literal::Diag {
                    i: i.min(j),
                    j: i.max(j),
                    positive,
                }
            }
            _ => {
                let mut delta = vec![0];
                for k in 1..alpha {
                    if rng.gen_bool(0.5) {
                        delta.push(k);
                    }
                }
                Literal::CDelta { delta, positive }
            }
        }
    }

    pub fn random_normal_form<R: Rng>(rng: &mut R, alpha: usize) -> NormalForm {
        let nclauses = rng.gen_range(1..=2);
        let clauses = (0..nclauses)
            .map(|_| {
                let len = rng.gen_range(1..=3);
                (0..len).map(|_| random_literal(rng, alpha)).collect()
            })
            .collect();
        NormalForm::from_clauses(alpha, clauses)
    }

    /// A point of `g` when one is easy to find, else a random point.
    pub fn point_near<R: Rng>(rng: &mut R, g: &NormalForm) -> Vec<Q> {
        let alpha = g.alpha;
        if g.clauses.is_empty() {
            return random_point(rng, alpha);
        }
        let clause = &g.clauses[rng.gen_range(0..g.clauses.len())];
        for b in clause_to_basics(alpha, clause) {
            // Fix free coordinates randomly, then solve the equalities.
            let mut eqs = b.eqs.clone();
            let mut fixed: Vec<Option<Q>> = vec![None; alpha];
            let mut order: Vec<(usize, Lin)> = Vec::new();
            while let Some(pos) = eqs.iter().position(|e| !e.is_const()) {
                let e = eqs.swap_remove(pos);
                let j = e.a.iter().position(|x| !x.is_zero()).expect("nonconst");
                let sol = e.solve_for(j);
                for x in eqs.iter_mut() {
                    *x = x.subst(j, &sol);
                }
                for (_, s) in order.iter_mut() {
                    *s = s.subst(j, &sol);
                }
                order.push((j, sol));
            }
            if eqs.iter().any(|e| !e.c.is_zero()) {
                continue;
            }
            let solved: BTreeSet<usize> = order.iter().map(|(j, _)| *j).collect();
            for (k, slot) in fixed.iter_mut().enumerate() {
                if !solved.contains(&k) {
                    *slot = Some(small(rng, -3, 3));
                }
            }
            let free: Vec<Q> = fixed
                .iter()
                .map(|x| x.clone().unwrap_or_else(Q::zero))
                .collect();
            let mut p = free.clone();
            for (j, sol) in &order {
                p[*j] = eval_lin(sol, &free);
            }
            return p;
        }
        random_point(rng, alpha)
    }

    /// A point of `y` with small integer coordinates.
    pub fn point_on_y<R: Rng>(rng: &mut R, alpha: usize) -> Vec<Q> {
        let mut s: Vec<Q> = (0..alpha).map(|_| small(rng, -3, 3)).collect();
        let mut sum = Q::zero();
        for x in &s[1..] {
            sum += x;
        }
        s[0] = sum - q(1);
        s
    }

    /// Constraint planes with `r_0 != 0` and a zero among `r_1..r_m`.
    pub fn random_constraint<R: Rng>(rng: &mut R, alpha: usize, m: usize) -> AffinePlane {
        loop {
            let mut r: Vec<Q> = (0..alpha).map(|_| small(rng, -3, 3)).collect();
            if r[0].is_zero() {
                r[0] = q(1);
            }
            let z = rng.gen_range(1..=m);
            r[z] = Q::zero();
            if let Some(p) = AffinePlane::new(small(rng, -4, 4), r) {
                return p;
            }
        }
    }

    /// A clause built only from literals admissible in `G_3`, with a member.
    pub fn random_g3_clause<R: Rng>(rng: &mut R, alpha: usize) -> (Vec<Literal>, Vec<Q>) {
        loop {
            let len = rng.gen_range(1..=3);
            let mut clause = Vec::new();
            while clause.len() < len {
                let lit = random_literal(rng, alpha);
                if classify_g3(&lit).is_ok() {
                    clause.push(lit);
                }
            }
            let g = NormalForm::from_clauses(alpha, vec![clause.clone()]);
            if g.is_bottom() {
                continue;
            }
            for _ in 0..20 {
                let z = point_near(rng, &g);
                if clause.iter().all(|l| l.contains(&z)) {
                    return (clause, z);
                }
            }
        }
    }
}
