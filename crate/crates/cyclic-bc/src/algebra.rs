//! The guarded recursion algebra: terms, the permutation-of-prefixes preorder, naive and
//! lookup-table evaluation, bounding polynomials, oracle truncation, and the reduction of
//! simultaneous recursion to a single recursion with rotation tags.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::rc::Rc;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::evaluator::{EvalError, OracleEntry, OracleEnv};
use crate::value::{self, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("unbound recursion oracle {0}")]
    UnboundCall(String),
    #[error("tuples of different lengths")]
    LengthMismatch,
    #[error("oracle: {0}")]
    Oracle(#[from] EvalError),
    #[error("term syntax: {0}")]
    Parse(String),
    #[error("ill-formed term: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arity {
    pub normals: usize,
    pub safes: usize,
}

impl Arity {
    pub const fn new(normals: usize, safes: usize) -> Self {
        Arity { normals, safes }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({};{})", self.normals, self.safes)
    }
}

pub type TermRef = Arc<Term>;

#[derive(Debug, PartialEq, Eq)]
pub enum Term {
    /// `(;)` constant 0.
    Zero,
    S0,
    S1,
    Pred,
    /// `cond(; w, a, b, c)`: `a` if `w = 0`, `b` if `w` even, `c` if `w` odd.
    Cond,
    ProjN { arity: Arity, index: usize },
    ProjS { arity: Arity, index: usize },
    /// A bound recursion oracle.
    OracleCall { name: String, arity: Arity },
    /// A free oracle looked up in the environment.
    InitialRelation { name: String, arity: Arity },
    /// `f(x; y) = h(x; y, g(x; y))`.
    CompSafe { h: TermRef, g: TermRef },
    /// `f(x; y) = h(x, g(x;); y)`.
    CompNormal { h: TermRef, g: TermRef },
    /// `f(x; y) = head(r(x;); t(x; y))`: vector composition, derivable from the two above.
    Compose { arity: Arity, head: TermRef, normals: Vec<TermRef>, safes: Vec<TermRef> },
    /// `f(x; y) = body` with `oracle` answering at ⊂-smaller normals and ⊆ safes.
    RecPP { oracle: String, body: TermRef },
    /// Component `index` of a simultaneous recursion; every body sees every oracle.
    RecSim { index: usize, bodies: Vec<(String, TermRef)> },
}

fn ptr(t: &Term) -> usize {
    t as *const Term as usize
}

impl Term {
    pub fn arity(&self) -> Arity {
        match self {
            Term::Zero => Arity::new(0, 0),
            Term::S0 | Term::S1 | Term::Pred => Arity::new(0, 1),
            Term::Cond => Arity::new(0, 4),
            Term::ProjN { arity, .. }
            | Term::ProjS { arity, .. }
            | Term::OracleCall { arity, .. }
            | Term::InitialRelation { arity, .. }
            | Term::Compose { arity, .. } => *arity,
            Term::CompSafe { h, .. } => Arity::new(h.arity().normals, h.arity().safes.saturating_sub(1)),
            Term::CompNormal { h, .. } => Arity::new(h.arity().normals.saturating_sub(1), h.arity().safes),
            Term::RecPP { body, .. } => body.arity(),
            Term::RecSim { bodies, .. } => bodies[0].1.arity(),
        }
    }

    /// Direct subterms.
    pub fn children(&self) -> Vec<&TermRef> {
        match self {
            Term::CompSafe { h, g } | Term::CompNormal { h, g } => vec![h, g],
            Term::Compose { head, normals, safes, .. } => {
                std::iter::once(head).chain(normals.iter()).chain(safes.iter()).collect()
            }
            Term::RecPP { body, .. } => vec![body],
            Term::RecSim { bodies, .. } => bodies.iter().map(|(_, b)| b).collect(),
            _ => vec![],
        }
    }

    /// Names of recursion oracles called but not bound inside the term.
    pub fn free_calls(&self) -> BTreeSet<String> {
        fn go(t: &Term, memo: &mut HashMap<usize, BTreeSet<String>>) -> BTreeSet<String> {
            if let Some(s) = memo.get(&ptr(t)) {
                return s.clone();
            }
            let mut out = BTreeSet::new();
            for c in t.children() {
                out.extend(go(c, memo));
            }
            match t {
                Term::OracleCall { name, .. } => {
                    out.insert(name.clone());
                }
                Term::RecPP { oracle, .. } => {
                    out.remove(oracle);
                }
                Term::RecSim { bodies, .. } => {
                    for (n, _) in bodies {
                        out.remove(n);
                    }
                }
                _ => {}
            }
            memo.insert(ptr(t), out.clone());
            out
        }
        go(self, &mut HashMap::new())
    }

    /// Names of initial relations used anywhere in the term.
    pub fn relations(&self) -> BTreeSet<(String, Arity)> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if !seen.insert(ptr(t)) {
                continue;
            }
            if let Term::InitialRelation { name, arity } = t {
                out.insert((name.clone(), *arity));
            }
            stack.extend(t.children().into_iter().map(|c| c.as_ref()));
        }
        out
    }

    /// Number of distinct term nodes (shared subterms counted once).
    pub fn dag_size(&self) -> usize {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if seen.insert(ptr(t)) {
                stack.extend(t.children().into_iter().map(|c| c.as_ref()));
            }
        }
        seen.len()
    }

    /// Checks arities of every composition and the restrictions on normal arguments.
    pub fn check(&self) -> Result<Arity, AlgebraError> {
        fn go(t: &Term, seen: &mut HashMap<usize, Arity>) -> Result<Arity, AlgebraError> {
            if let Some(a) = seen.get(&ptr(t)) {
                return Ok(*a);
            }
            let bad = |msg: String| Err(AlgebraError::ArityMismatch(msg));
            let a = t.arity();
            match t {
                Term::ProjN { arity, index } if *index >= arity.normals => return bad(format!("projn {index} of {arity}")),
                Term::ProjS { arity, index } if *index >= arity.safes => return bad(format!("projs {index} of {arity}")),
                Term::CompSafe { h, g } => {
                    let (ah, ag) = (go(h, seen)?, go(g, seen)?);
                    if ah.safes == 0 || ag != a {
                        return bad(format!("csafe head {ah} with argument {ag}"));
                    }
                }
                Term::CompNormal { h, g } => {
                    let (ah, ag) = (go(h, seen)?, go(g, seen)?);
                    if ah.normals == 0 || ag != Arity::new(a.normals, 0) {
                        return bad(format!("cnormal head {ah} with argument {ag}"));
                    }
                    if !g.free_calls().is_empty() {
                        return Err(AlgebraError::Malformed("recursion oracle under a normal argument".into()));
                    }
                }
                Term::Compose { arity, head, normals, safes } => {
                    let ah = go(head, seen)?;
                    if ah != Arity::new(normals.len(), safes.len()) {
                        return bad(format!("comp head {ah} given ({};{})", normals.len(), safes.len()));
                    }
                    for r in normals {
                        if go(r, seen)? != Arity::new(arity.normals, 0) {
                            return bad(format!("normal argument of comp {arity}"));
                        }
                        if !r.free_calls().is_empty() {
                            return Err(AlgebraError::Malformed("recursion oracle under a normal argument".into()));
                        }
                    }
                    for s in safes {
                        if go(s, seen)? != *arity {
                            return bad(format!("safe argument of comp {arity}"));
                        }
                    }
                }
                Term::RecPP { body, .. } => {
                    go(body, seen)?;
                }
                Term::RecSim { index, bodies } => {
                    if *index >= bodies.len() {
                        return Err(AlgebraError::Malformed("recsim index out of range".into()));
                    }
                    for (_, b) in bodies {
                        if go(b, seen)? != a {
                            return bad("recsim bodies of different arities".into());
                        }
                    }
                }
                _ => {}
            }
            seen.insert(ptr(t), a);
            Ok(a)
        }
        go(self, &mut HashMap::new())
    }
}

// Smart constructors.

pub fn zero() -> TermRef {
    Arc::new(Term::Zero)
}

pub fn projn(arity: Arity, index: usize) -> TermRef {
    Arc::new(Term::ProjN { arity, index })
}

pub fn projs(arity: Arity, index: usize) -> TermRef {
    Arc::new(Term::ProjS { arity, index })
}

pub fn call(name: impl Into<String>, arity: Arity) -> TermRef {
    Arc::new(Term::OracleCall { name: name.into(), arity })
}

pub fn relation(name: impl Into<String>, arity: Arity) -> TermRef {
    Arc::new(Term::InitialRelation { name: name.into(), arity })
}

pub fn compose(arity: Arity, head: TermRef, normals: Vec<TermRef>, safes: Vec<TermRef>) -> TermRef {
    Arc::new(Term::Compose { arity, head, normals, safes })
}

pub fn rec_pp(oracle: impl Into<String>, body: TermRef) -> TermRef {
    Arc::new(Term::RecPP { oracle: oracle.into(), body })
}

pub fn rec_sim(index: usize, bodies: Vec<(String, TermRef)>) -> TermRef {
    Arc::new(Term::RecSim { index, bodies })
}

/// `head` applied to safe arguments only, at `arity`.
pub fn apply_safe(arity: Arity, head: TermRef, safes: Vec<TermRef>) -> TermRef {
    compose(arity, head, vec![], safes)
}

/// `cond(; w, a, b, c)` at `arity`.
pub fn cond(arity: Arity, w: TermRef, a: TermRef, b: TermRef, c: TermRef) -> TermRef {
    apply_safe(arity, Arc::new(Term::Cond), vec![w, a, b, c])
}

/// The constant `c` at `arity`.
pub fn numeral(c: u64, arity: Arity) -> TermRef {
    if c == 0 {
        return apply_safe(arity, zero(), vec![]);
    }
    let head = if c & 1 == 1 { Arc::new(Term::S1) } else { Arc::new(Term::S0) };
    apply_safe(arity, head, vec![numeral(c >> 1, arity)])
}

/// Every projection of `arity`, normals first, as arguments re-supplied at `arity`.
pub fn identity_args(arity: Arity) -> (Vec<TermRef>, Vec<TermRef>) {
    let nrm = Arity::new(arity.normals, 0);
    ((0..arity.normals).map(|i| projn(nrm, i)).collect(), (0..arity.safes).map(|i| projs(arity, i)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PpOrder {
    Strict,
    NonStrict,
    Incomparable,
}

/// Some permutation makes every `u_i` a binary prefix of `x_{π i}`.
pub fn pp_subseteq(u: &[Value], x: &[Value]) -> bool {
    fn go(u: &[Value], x: &[Value], used: &mut Vec<bool>) -> bool {
        let Some((first, rest)) = u.split_first() else { return true };
        for j in 0..x.len() {
            if !used[j] && value::is_prefix(first, &x[j]) {
                used[j] = true;
                if go(rest, x, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    u.len() == x.len() && go(u, x, &mut vec![false; x.len()])
}

fn total_len(x: &[Value]) -> usize {
    x.iter().map(value::len).sum()
}

pub fn pp_compare(u: &[Value], x: &[Value]) -> Result<PpOrder, AlgebraError> {
    if u.len() != x.len() {
        return Err(AlgebraError::LengthMismatch);
    }
    Ok(if !pp_subseteq(u, x) {
        PpOrder::Incomparable
    } else if total_len(u) < total_len(x) {
        PpOrder::Strict
    } else {
        PpOrder::NonStrict
    })
}

fn prefixes(x: &Value) -> Vec<Value> {
    (0..=value::len(x)).map(|k| x >> k).collect()
}

/// All `u ⊆ x`.
fn pp_below(x: &[Value]) -> BTreeSet<Vec<Value>> {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let pre: Vec<Vec<Value>> = x.iter().map(prefixes).collect();
    let mut out = BTreeSet::new();
    for perm in perms(x.len()) {
        let mut acc: Vec<Vec<Value>> = vec![vec![]];
        for &j in &perm {
            acc = acc
                .into_iter()
                .flat_map(|t| {
                    pre[j].iter().map(move |p| {
                        let mut t = t.clone();
                        t.push(p.clone());
                        t
                    })
                })
                .collect();
        }
        out.extend(acc);
    }
    out
}

/// All `(u, v)` with `u ⊂ x` and `v ⊆ y`, ordered by `(Σ|u|, u, v)` so every pair precedes
/// its successors in the product order.
pub fn enumerate_pp(x: &[Value], y: &[Value]) -> Vec<(Vec<Value>, Vec<Value>)> {
    let n = total_len(x);
    let us: Vec<Vec<Value>> = pp_below(x).into_iter().filter(|u| total_len(u) < n).collect();
    let vs: Vec<Vec<Value>> = pp_below(y).into_iter().collect();
    let mut out: Vec<(Vec<Value>, Vec<Value>)> =
        us.iter().flat_map(|u| vs.iter().map(move |v| (u.clone(), v.clone()))).collect();
    out.sort_by(|a, b| (total_len(&a.0), &a.0, &a.1).cmp(&(total_len(&b.0), &b.0, &b.1)));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Naive,
    Table,
}

type Table = Rc<RefCell<HashMap<(usize, Vec<Value>, Vec<Value>), Value>>>;
type Bodies = Rc<Vec<(String, TermRef)>>;

/// One active recursion: the bodies it binds and the arguments its calls are guarded by.
struct Frame {
    key: usize,
    bodies: Bodies,
    guard_x: Vec<Value>,
    guard_y: Vec<Value>,
    table: Option<Table>,
    parent: Scope,
}

#[derive(Clone, Default)]
struct Scope(Option<Rc<Frame>>);

impl Scope {
    fn lookup(&self, name: &str) -> Option<(Rc<Frame>, usize)> {
        let mut cur = self.0.clone();
        while let Some(f) = cur {
            if let Some(j) = f.bodies.iter().position(|(n, _)| n == name) {
                return Some((f, j));
            }
            cur = f.parent.0.clone();
        }
        None
    }
}

struct Interp<'e> {
    env: &'e OracleEnv,
    mode: Mode,
    memo: HashMap<(usize, usize, Vec<Value>, Vec<Value>), Value>,
    closed: HashMap<usize, bool>,
    bodies: HashMap<usize, Bodies>,
}

impl Interp<'_> {
    fn ev(&mut self, t: &Term, x: &[Value], y: &[Value], scope: &Scope) -> Result<Value, AlgebraError> {
        stacker::maybe_grow(128 * 1024, 8 * 1024 * 1024, || self.step(t, x, y, scope))
    }

    fn step(&mut self, t: &Term, x: &[Value], y: &[Value], scope: &Scope) -> Result<Value, AlgebraError> {
        match t {
            Term::Zero => Ok(value::zero()),
            Term::S0 => Ok(value::s0(&y[0])),
            Term::S1 => Ok(value::s1(&y[0])),
            Term::Pred => Ok(value::pred(&y[0])),
            Term::Cond => Ok(pick(&y[0], &y[1], &y[2], &y[3]).clone()),
            Term::ProjN { index, .. } => Ok(x[*index].clone()),
            Term::ProjS { index, .. } => Ok(y[*index].clone()),
            Term::InitialRelation { name, .. } => Ok(self.env.call(name, x, y)?),
            Term::OracleCall { name, .. } => {
                let (frame, j) = scope.lookup(name).ok_or_else(|| AlgebraError::UnboundCall(name.clone()))?;
                let strict = total_len(x) < total_len(&frame.guard_x) && pp_subseteq(x, &frame.guard_x);
                if !(strict && pp_subseteq(y, &frame.guard_y)) {
                    return Ok(value::zero());
                }
                match &frame.table {
                    Some(table) => table
                        .borrow()
                        .get(&(j, x.to_vec(), y.to_vec()))
                        .cloned()
                        .ok_or_else(|| AlgebraError::Malformed(format!("table miss for {name}"))),
                    None => self.rec_value(frame.key, &frame.bodies, j, x, y, &frame.parent),
                }
            }
            Term::CompSafe { h, g } => {
                let v = self.ev(g, x, y, scope)?;
                let mut y2 = y.to_vec();
                y2.push(v);
                self.ev(h, x, &y2, scope)
            }
            Term::CompNormal { h, g } => {
                let v = self.ev(g, x, &[], scope)?;
                let mut x2 = x.to_vec();
                x2.push(v);
                self.ev(h, &x2, y, scope)
            }
            Term::Compose { head, normals, safes, .. } => {
                if matches!(**head, Term::Cond) && normals.is_empty() {
                    // Lazy: only the selected branch is evaluated.
                    let w = self.ev(&safes[0], x, y, scope)?;
                    let k = if w.is_zero() { 1 } else if value::is_odd(&w) { 3 } else { 2 };
                    return self.ev(&safes[k], x, y, scope);
                }
                let xs = normals.iter().map(|r| self.ev(r, x, &[], scope)).collect::<Result<Vec<_>, _>>()?;
                let ys = safes.iter().map(|s| self.ev(s, x, y, scope)).collect::<Result<Vec<_>, _>>()?;
                self.ev(head, &xs, &ys, scope)
            }
            Term::RecPP { .. } | Term::RecSim { .. } => {
                let key = ptr(t);
                let bodies = self
                    .bodies
                    .entry(key)
                    .or_insert_with(|| match t {
                        Term::RecPP { oracle, body } => Rc::new(vec![(oracle.clone(), body.clone())]),
                        Term::RecSim { bodies, .. } => Rc::new(bodies.clone()),
                        _ => unreachable!(),
                    })
                    .clone();
                let index = if let Term::RecSim { index, .. } = t { *index } else { 0 };
                self.closed.entry(key).or_insert_with(|| t.free_calls().is_empty());
                self.rec_entry(key, bodies, index, x, y, scope)
            }
        }
    }

    fn rec_entry(
        &mut self,
        key: usize,
        bodies: Bodies,
        index: usize,
        x: &[Value],
        y: &[Value],
        scope: &Scope,
    ) -> Result<Value, AlgebraError> {
        if self.mode == Mode::Naive {
            return self.rec_value(key, &bodies, index, x, y, scope);
        }
        let table: Table = Rc::new(RefCell::new(HashMap::new()));
        let frame = |gx: &[Value], gy: &[Value]| {
            Scope(Some(Rc::new(Frame {
                key,
                bodies: bodies.clone(),
                guard_x: gx.to_vec(),
                guard_y: gy.to_vec(),
                table: Some(table.clone()),
                parent: scope.clone(),
            })))
        };
        for (u, v) in enumerate_pp(x, y) {
            let inner = frame(&u, &v);
            for (j, (_, body)) in bodies.iter().enumerate() {
                let val = self.ev(body, &u, &v, &inner)?;
                table.borrow_mut().insert((j, u.clone(), v.clone()), val);
            }
        }
        let top = frame(x, y);
        self.ev(&bodies[index].1, x, y, &top)
    }

    fn rec_value(
        &mut self,
        key: usize,
        bodies: &Bodies,
        j: usize,
        x: &[Value],
        y: &[Value],
        outer: &Scope,
    ) -> Result<Value, AlgebraError> {
        // Only recursions without free calls have values independent of the enclosing frames.
        let closed = self.closed.get(&key).copied().unwrap_or(false);
        let memo_key = (key, j, x.to_vec(), y.to_vec());
        if closed {
            if let Some(v) = self.memo.get(&memo_key) {
                return Ok(v.clone());
            }
        }
        let frame = Rc::new(Frame {
            key,
            bodies: bodies.clone(),
            guard_x: x.to_vec(),
            guard_y: y.to_vec(),
            table: None,
            parent: outer.clone(),
        });
        let v = self.ev(&bodies[j].1, x, y, &Scope(Some(frame)))?;
        if closed {
            self.memo.insert(memo_key, v.clone());
        }
        Ok(v)
    }
}

fn pick<'a>(w: &Value, a: &'a Value, b: &'a Value, c: &'a Value) -> &'a Value {
    if w.is_zero() {
        a
    } else if value::is_odd(w) {
        c
    } else {
        b
    }
}

fn run(t: &Term, x: &[Value], y: &[Value], env: &OracleEnv, mode: Mode) -> Result<Value, AlgebraError> {
    let a = t.arity();
    if x.len() != a.normals || y.len() != a.safes {
        return Err(AlgebraError::ArityMismatch(format!("term {a} applied to ({};{})", x.len(), y.len())));
    }
    let mut interp = Interp { env, mode, memo: HashMap::new(), closed: HashMap::new(), bodies: HashMap::new() };
    interp.ev(t, x, y, &Scope::default())
}

/// Structural evaluation with the guarded recursion semantics.
pub fn eval_term(t: &Term, x: &[Value], y: &[Value], env: &OracleEnv) -> Result<Value, AlgebraError> {
    run(t, x, y, env, Mode::Naive)
}

/// Same values as [`eval_term`], computing each recursion bottom-up over [`enumerate_pp`].
pub fn eval_term_table(t: &Term, x: &[Value], y: &[Value], env: &OracleEnv) -> Result<Value, AlgebraError> {
    run(t, x, y, env, Mode::Table)
}

/// Univariate polynomial with nonnegative integer coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly(Vec<BigUint>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![])
    }

    pub fn constant(c: u64) -> Self {
        Poly(vec![BigUint::from(c)]).normalized()
    }

    /// `n`.
    pub fn var() -> Self {
        Poly(vec![BigUint::zero(), BigUint::from(1u8)])
    }

    /// `1 + n`.
    pub fn base() -> Self {
        Poly::constant(1).add(&Poly::var())
    }

    pub fn from_coeffs(c: Vec<u64>) -> Self {
        Poly(c.into_iter().map(BigUint::from).collect()).normalized()
    }

    fn normalized(mut self) -> Self {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    pub fn coeffs(&self) -> &[BigUint] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        let zero = BigUint::zero();
        Poly((0..n).map(|i| self.0.get(i).unwrap_or(&zero) + other.0.get(i).unwrap_or(&zero)).collect()).normalized()
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![BigUint::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out).normalized()
    }

    /// `self(inner(n))`.
    pub fn compose(&self, inner: &Poly) -> Poly {
        self.0.iter().rev().fold(Poly::zero(), |acc, c| acc.mul(inner).add(&Poly(vec![c.clone()]).normalized()))
    }

    pub fn eval(&self, n: usize) -> BigUint {
        let n = BigUint::from(n);
        self.0.iter().rev().fold(BigUint::zero(), |acc, c| acc * &n + c)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| match i {
                0 => c.to_string(),
                1 => format!("{c}n"),
                _ => format!("{c}n^{i}"),
            })
            .collect();
        if terms.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&terms.join(" + "))
        }
    }
}

/// Growth bound `p` with `|t(x; y)| ≤ p(Σ|x|) + max|y|`.
///
/// Recursion uses `(n + 1)·p_h(n)`: the plain `n·p_h(n)` is 0 at `n = 0`, where the body still
/// runs once with every recursive call guarded to 0.
pub fn bound_poly(t: &Term) -> Poly {
    fn go(t: &Term, memo: &mut HashMap<usize, Poly>) -> Poly {
        if let Some(p) = memo.get(&ptr(t)) {
            return p.clone();
        }
        let p = match t {
            Term::OracleCall { .. } => Poly::zero(),
            Term::CompSafe { h, g } => go(h, memo).add(&go(g, memo)),
            Term::CompNormal { h, g } => go(h, memo).compose(&Poly::var().add(&go(g, memo))),
            Term::Compose { head, normals, safes, .. } => {
                let inner = normals.iter().fold(Poly::zero(), |acc, r| acc.add(&go(r, memo)));
                let outer = safes.iter().fold(Poly::zero(), |acc, s| acc.add(&go(s, memo)));
                go(head, memo).compose(&inner).add(&outer)
            }
            Term::RecPP { body, .. } => Poly::base().mul(&go(body, memo)),
            Term::RecSim { bodies, .. } => {
                let sum = bodies.iter().fold(Poly::zero(), |acc, (_, b)| acc.add(&go(b, memo)));
                Poly::base().mul(&sum)
            }
            _ => Poly::base(),
        };
        memo.insert(ptr(t), p.clone());
        p
    }
    go(t, &mut HashMap::new())
}

/// `m_f(x, y) = p(Σ|x|) + max|y|`, saturated to `usize`.
pub fn modulus(p: &Poly, x: &[Value], y: &[Value]) -> usize {
    let m = p.eval(total_len(x)) + BigUint::from(y.iter().map(value::len).max().unwrap_or(0));
    m.to_usize().unwrap_or(usize::MAX)
}

/// Answers like `r` while every argument is shorter than `m`, and 0 otherwise.
pub fn truncate_oracle(r: &OracleEntry, m: usize) -> OracleEntry {
    let inner = r.clone();
    OracleEntry::host(r.normals, r.safes, move |x, y| {
        if x.iter().chain(y).all(|v| value::len(v) < m) {
            inner.call(x, y)
        } else {
            Ok(value::zero())
        }
    })
    .with_kind(r.kind)
}

/// The rotation tag list `(i, …, k, 1, …, i−1)` for component `i` (1-based) of `k`.
pub fn rotation(k: usize, i: usize) -> Vec<u64> {
    (0..k).map(|j| ((i - 1 + j) % k + 1) as u64).collect()
}

/// `1` if the safe-sort term `z` equals `c`, else `0`, at `arity`.
fn equals_const(c: u64, z: TermRef, arity: Arity) -> TermRef {
    let zero_t = numeral(0, arity);
    let one_t = numeral(1, arity);
    if c == 0 {
        return cond(arity, z, one_t, zero_t.clone(), zero_t);
    }
    let rest = equals_const(c >> 1, apply_safe(arity, Arc::new(Term::Pred), vec![z.clone()]), arity);
    if c & 1 == 1 {
        cond(arity, z, zero_t.clone(), zero_t, rest)
    } else {
        cond(arity, z, zero_t.clone(), rest, zero_t)
    }
}

/// Rewrites calls `a_j(u; v)` to the rotated single oracle `tagged(u; v, ρ_j)`.
fn retag(t: &TermRef, names: &[String], tagged: &str, k: usize, memo: &mut HashMap<usize, TermRef>) -> TermRef {
    if let Some(r) = memo.get(&ptr(t)) {
        return r.clone();
    }
    let out = match &**t {
        Term::OracleCall { name, arity: a } if names.contains(name) => {
            let j = names.iter().position(|n| n == name).expect("contained") + 1;
            let (ns, mut ss) = identity_args(*a);
            ss.extend(rotation(k, j).into_iter().map(|c| numeral(c, *a)));
            compose(*a, call(tagged, Arity::new(a.normals, a.safes + k)), ns, ss)
        }
        Term::CompSafe { h, g } => Arc::new(Term::CompSafe {
            h: retag(h, names, tagged, k, memo),
            g: retag(g, names, tagged, k, memo),
        }),
        Term::CompNormal { h, g } => Arc::new(Term::CompNormal {
            h: retag(h, names, tagged, k, memo),
            g: retag(g, names, tagged, k, memo),
        }),
        Term::Compose { arity: a, head, normals, safes } => compose(
            *a,
            retag(head, names, tagged, k, memo),
            normals.iter().map(|r| retag(r, names, tagged, k, memo)).collect(),
            safes.iter().map(|s| retag(s, names, tagged, k, memo)).collect(),
        ),
        Term::RecPP { oracle, body } => rec_pp(oracle.clone(), retag(body, names, tagged, k, memo)),
        Term::RecSim { index, bodies } => rec_sim(
            *index,
            bodies.iter().map(|(n, b)| (n.clone(), retag(b, names, tagged, k, memo))).collect(),
        ),
        _ => t.clone(),
    };
    memo.insert(ptr(t), out.clone());
    out
}

/// Replaces a simultaneous recursion over `bodies` by one recursion `f(x; y, z⃗)` dispatching on
/// rotation tags `z⃗`; returns `f_i(x; y) = f(x; y, ρ_i)` for each component.
pub fn reduce_simultaneous(bodies: &[(String, TermRef)]) -> Result<Vec<TermRef>, AlgebraError> {
    let k = bodies.len();
    if k == 0 {
        return Err(AlgebraError::Malformed("no bodies".into()));
    }
    let arity = bodies[0].1.arity();
    if bodies.iter().any(|(_, b)| b.arity() != arity) {
        return Err(AlgebraError::ArityMismatch("simultaneous bodies differ in arity".into()));
    }
    let names: Vec<String> = bodies.iter().map(|(n, _)| n.clone()).collect();
    let tagged = format!("rot_{}", names.join("_"));
    let wide = Arity::new(arity.normals, arity.safes + k);
    let mut memo = HashMap::new();
    let (wide_ns, wide_ss) = identity_args(wide);
    let tags: Vec<TermRef> = wide_ss[arity.safes..].to_vec();
    let mut dispatch = numeral(0, wide);
    for i in (1..=k).rev() {
        let body = retag(&bodies[i - 1].1, &names, &tagged, k, &mut memo);
        let lifted = compose(wide, body, wide_ns.clone(), wide_ss[..arity.safes].to_vec());
        let test = rotation(k, i)
            .into_iter()
            .zip(&tags)
            .map(|(c, z)| equals_const(c, z.clone(), wide))
            .reduce(|a, b| cond(wide, a, numeral(0, wide), numeral(0, wide), b))
            .expect("k ≥ 1");
        dispatch = cond(wide, test, dispatch, numeral(0, wide), lifted);
    }
    let f = rec_pp(tagged, dispatch);
    Ok((1..=k)
        .map(|i| {
            let (ns, mut ss) = identity_args(arity);
            ss.extend(rotation(k, i).into_iter().map(|c| numeral(c, arity)));
            compose(arity, f.clone(), ns, ss)
        })
        .collect())
}

/// Prefix text form; subterms used more than once are written `(def k …)` at first use and
/// `#k` afterwards.
pub fn term_to_string(t: &TermRef) -> String {
    fn count(t: &TermRef, counts: &mut HashMap<usize, usize>) {
        let c = counts.entry(ptr(t)).or_insert(0);
        *c += 1;
        if *c == 1 {
            for ch in t.children() {
                count(ch, counts);
            }
        }
    }
    fn emit(t: &TermRef, counts: &HashMap<usize, usize>, named: &mut HashMap<usize, usize>, out: &mut String) {
        if let Some(k) = named.get(&ptr(t)) {
            let _ = write!(out, "#{k}");
            return;
        }
        let shared = counts[&ptr(t)] > 1 && !t.children().is_empty();
        if shared {
            let k = named.len();
            named.insert(ptr(t), k);
            let _ = write!(out, "(def {k} ");
        }
        let a = t.arity();
        match &**t {
            Term::Zero => out.push_str("zero"),
            Term::S0 => out.push_str("s0"),
            Term::S1 => out.push_str("s1"),
            Term::Pred => out.push_str("pred"),
            Term::Cond => out.push_str("cond"),
            Term::ProjN { index, .. } => {
                let _ = write!(out, "(projn {} {} {index})", a.normals, a.safes);
            }
            Term::ProjS { index, .. } => {
                let _ = write!(out, "(projs {} {} {index})", a.normals, a.safes);
            }
            Term::OracleCall { name, .. } => {
                let _ = write!(out, "(call {name} {} {})", a.normals, a.safes);
            }
            Term::InitialRelation { name, .. } => {
                let _ = write!(out, "(rel {name} {} {})", a.normals, a.safes);
            }
            Term::CompSafe { h, g } | Term::CompNormal { h, g } => {
                out.push_str(if matches!(**t, Term::CompSafe { .. }) { "(csafe " } else { "(cnormal " });
                emit(h, counts, named, out);
                out.push(' ');
                emit(g, counts, named, out);
                out.push(')');
            }
            Term::Compose { head, normals, safes, .. } => {
                let _ = write!(out, "(comp {} {} ", a.normals, a.safes);
                emit(head, counts, named, out);
                out.push_str(" (N");
                for r in normals {
                    out.push(' ');
                    emit(r, counts, named, out);
                }
                out.push_str(") (S");
                for s in safes {
                    out.push(' ');
                    emit(s, counts, named, out);
                }
                out.push_str("))");
            }
            Term::RecPP { oracle, body } => {
                let _ = write!(out, "(recpp {oracle} ");
                emit(body, counts, named, out);
                out.push(')');
            }
            Term::RecSim { index, bodies } => {
                let _ = write!(out, "(recsim {index}");
                for (n, b) in bodies {
                    let _ = write!(out, " ({n} ");
                    emit(b, counts, named, out);
                    out.push(')');
                }
                out.push(')');
            }
        }
        if shared {
            out.push(')');
        }
    }
    let mut counts = HashMap::new();
    count(t, &mut counts);
    let mut out = String::new();
    emit(t, &counts, &mut HashMap::new(), &mut out);
    out
}

pub fn parse_term(text: &str) -> Result<TermRef, AlgebraError> {
    let toks: Vec<String> = text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect();
    let mut p = TermParser { toks, pos: 0, defs: HashMap::new() };
    let t = p.term()?;
    if p.pos != p.toks.len() {
        return Err(AlgebraError::Parse(format!("trailing input at token {}", p.pos)));
    }
    t.check()?;
    Ok(t)
}

struct TermParser {
    toks: Vec<String>,
    pos: usize,
    defs: HashMap<usize, TermRef>,
}

impl TermParser {
    fn next(&mut self) -> Result<String, AlgebraError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| AlgebraError::Parse("unexpected end".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn expect(&mut self, tok: &str) -> Result<(), AlgebraError> {
        let t = self.next()?;
        if t == tok {
            Ok(())
        } else {
            Err(AlgebraError::Parse(format!("expected {tok}, found {t}")))
        }
    }

    fn num(&mut self) -> Result<usize, AlgebraError> {
        let t = self.next()?;
        t.parse().map_err(|_| AlgebraError::Parse(format!("expected a number, found {t}")))
    }

    fn arity(&mut self) -> Result<Arity, AlgebraError> {
        Ok(Arity::new(self.num()?, self.num()?))
    }

    fn term(&mut self) -> Result<TermRef, AlgebraError> {
        let tok = self.next()?;
        if let Some(k) = tok.strip_prefix('#') {
            let k: usize = k.parse().map_err(|_| AlgebraError::Parse(format!("bad reference {tok}")))?;
            return self.defs.get(&k).cloned().ok_or_else(|| AlgebraError::Parse(format!("undefined #{k}")));
        }
        let leaf = |t: Term| Ok(Arc::new(t));
        match tok.as_str() {
            "zero" => return leaf(Term::Zero),
            "s0" => return leaf(Term::S0),
            "s1" => return leaf(Term::S1),
            "pred" => return leaf(Term::Pred),
            "cond" => return leaf(Term::Cond),
            "(" => {}
            other => return Err(AlgebraError::Parse(format!("unexpected token {other}"))),
        }
        let head = self.next()?;
        let t = match head.as_str() {
            "def" => {
                let k = self.num()?;
                let t = self.term()?;
                self.defs.insert(k, t.clone());
                t
            }
            "projn" => {
                let a = self.arity()?;
                projn(a, self.num()?)
            }
            "projs" => {
                let a = self.arity()?;
                projs(a, self.num()?)
            }
            "call" | "rel" => {
                let name = self.next()?;
                let a = self.arity()?;
                if head == "call" {
                    call(name, a)
                } else {
                    relation(name, a)
                }
            }
            "csafe" | "cnormal" => {
                let h = self.term()?;
                let g = self.term()?;
                Arc::new(if head == "csafe" { Term::CompSafe { h, g } } else { Term::CompNormal { h, g } })
            }
            "comp" => {
                let a = self.arity()?;
                let h = self.term()?;
                let group = |p: &mut Self, tag: &str| -> Result<Vec<TermRef>, AlgebraError> {
                    p.expect("(")?;
                    p.expect(tag)?;
                    let mut v = Vec::new();
                    while p.peek() != Some(")") {
                        v.push(p.term()?);
                    }
                    p.expect(")")?;
                    Ok(v)
                };
                let ns = group(self, "N")?;
                let ss = group(self, "S")?;
                compose(a, h, ns, ss)
            }
            "recpp" => {
                let name = self.next()?;
                rec_pp(name, self.term()?)
            }
            "recsim" => {
                let index = self.num()?;
                let mut bodies = Vec::new();
                while self.peek() == Some("(") {
                    self.expect("(")?;
                    let name = self.next()?;
                    bodies.push((name, self.term()?));
                    self.expect(")")?;
                }
                rec_sim(index, bodies)
            }
            other => return Err(AlgebraError::Parse(format!("unknown constructor {other}"))),
        };
        self.expect(")")?;
        Ok(t)
    }
}
