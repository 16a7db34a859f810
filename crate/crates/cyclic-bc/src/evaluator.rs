//! Equational semantics of proof graphs: oracle environments, fuel, memoization at `dis`
//! nodes, relation-tree expansion and length-determinism probes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::kernel::{GraphBuilder, NodeIx, OracleDecl, OracleKind, OracleSource, Prem, ProofGraph, Rule, Sequent};
use crate::par::Exec;
use crate::prooffmt::AdviceSource;
use crate::value::{self, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("fuel exhausted")]
    FuelExhausted,
    #[error("no oracle bound for {0}")]
    MissingOracle(String),
    #[error("arity mismatch: expected ({expected_normals};{expected_safes}), got ({normals};{safes})")]
    ArityMismatch { expected_normals: usize, expected_safes: usize, normals: usize, safes: usize },
    #[error("malformed graph at {0}")]
    Malformed(String),
}

pub type OracleFn = Arc<dyn Fn(&[Value], &[Value]) -> Result<Value, EvalError> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    LengthRelation,
    Subgraph,
    Host,
}

#[derive(Clone)]
pub struct OracleEntry {
    pub kind: EntryKind,
    pub normals: usize,
    pub safes: usize,
    func: OracleFn,
}

impl fmt::Debug for OracleEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OracleEntry({:?}, {};{})", self.kind, self.normals, self.safes)
    }
}

fn lengths(x: &[Value], y: &[Value]) -> Vec<usize> {
    x.iter().chain(y).map(value::len).collect()
}

impl OracleEntry {
    pub fn new(kind: EntryKind, normals: usize, safes: usize, func: OracleFn) -> Self {
        OracleEntry { kind, normals, safes, func }
    }

    /// A length-determined relation reading `advice` at the lengths of all arguments.
    pub fn relation(normals: usize, safes: usize, advice: AdviceSource) -> Self {
        let f: OracleFn = Arc::new(move |x, y| Ok(Value::from(advice.bit(&lengths(x, y)) as u8)));
        OracleEntry::new(EntryKind::LengthRelation, normals, safes, f)
    }

    pub fn host<F>(normals: usize, safes: usize, f: F) -> Self
    where
        F: Fn(&[Value], &[Value]) -> Result<Value, EvalError> + Send + Sync + 'static,
    {
        OracleEntry::new(EntryKind::Host, normals, safes, Arc::new(f))
    }

    /// Evaluates `graph` from its root with a fresh budget of `fuel` per call.
    pub fn subgraph(graph: Arc<ProofGraph>, env: OracleEnv, fuel: u64) -> Self {
        let seq = graph.node(graph.root()).sequent;
        let f: OracleFn = Arc::new(move |x, y| eval(&graph, graph.root(), x, y, &env, &mut Budget::new(fuel)));
        OracleEntry::new(EntryKind::Subgraph, seq.normals, seq.safes, f)
    }

    pub fn call(&self, x: &[Value], y: &[Value]) -> Result<Value, EvalError> {
        if x.len() != self.normals || y.len() != self.safes {
            return Err(EvalError::ArityMismatch {
                expected_normals: self.normals,
                expected_safes: self.safes,
                normals: x.len(),
                safes: y.len(),
            });
        }
        (self.func)(x, y)
    }

    /// Same entry with a different kind tag.
    pub fn with_kind(mut self, kind: EntryKind) -> Self {
        self.kind = kind;
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct OracleEnv {
    entries: BTreeMap<String, OracleEntry>,
}

impl OracleEnv {
    pub fn new() -> Self {
        OracleEnv::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: OracleEntry) -> &mut Self {
        self.entries.insert(name.into(), entry);
        self
    }

    pub fn with(mut self, name: impl Into<String>, entry: OracleEntry) -> Self {
        self.insert(name, entry);
        self
    }

    pub fn get(&self, name: &str) -> Result<&OracleEntry, EvalError> {
        self.entries.get(name).ok_or_else(|| EvalError::MissingOracle(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &OracleEntry)> {
        self.entries.iter()
    }

    pub fn call(&self, name: &str, x: &[Value], y: &[Value]) -> Result<Value, EvalError> {
        self.get(name)?.call(x, y)
    }

    /// Builds entries for the declarations whose source is an advice builtin or file;
    /// `resolve` maps other sources (or overrides) to entries.
    pub fn from_decls<'a>(
        decls: impl IntoIterator<Item = &'a OracleDecl>,
        mut resolve: impl FnMut(&OracleDecl) -> Option<OracleEntry>,
    ) -> Result<Self, String> {
        let mut env = OracleEnv::new();
        for d in decls {
            let entry = match resolve(d) {
                Some(e) => e,
                None => match &d.source {
                    OracleSource::Builtin(name) => {
                        let advice = AdviceSource::builtin(name).map_err(|e| e.to_string())?;
                        OracleEntry::relation(d.normals, d.safes, advice)
                    }
                    OracleSource::Path(p) => {
                        let advice = crate::prooffmt::load_advice(p).map_err(|e| e.to_string())?;
                        OracleEntry::relation(d.normals, d.safes, advice)
                    }
                    OracleSource::Subgraph(name) => return Err(format!("no subgraph bound for oracle source {name}")),
                },
            };
            let entry = match d.kind {
                OracleKind::LengthRelation if entry.kind == EntryKind::Host => entry.with_kind(EntryKind::LengthRelation),
                _ => entry,
            };
            env.insert(d.name.clone(), entry);
        }
        Ok(env)
    }
}

type MemoKey = (NodeIx, Vec<Value>, Vec<Value>);

/// Fuel and the `dis`-node memo table of one evaluation.
#[derive(Clone, Debug)]
pub struct Budget {
    fuel: u64,
    memo: Option<HashMap<MemoKey, Value>>,
}

impl Budget {
    pub fn new(fuel: u64) -> Self {
        Budget { fuel, memo: Some(HashMap::new()) }
    }

    pub fn without_memo(fuel: u64) -> Self {
        Budget { fuel, memo: None }
    }

    pub fn fuel_left(&self) -> u64 {
        self.fuel
    }

    pub fn memo_len(&self) -> usize {
        self.memo.as_ref().map_or(0, HashMap::len)
    }
}

pub const DEFAULT_FUEL: u64 = 10_000_000;

struct Machine<'a> {
    g: &'a ProofGraph,
    env: &'a OracleEnv,
    budget: &'a mut Budget,
}

impl Machine<'_> {
    fn run(&mut self, u: NodeIx, x: &[Value], y: &[Value]) -> Result<Value, EvalError> {
        stacker::maybe_grow(128 * 1024, 8 * 1024 * 1024, || self.step(u, x, y))
    }

    fn step(&mut self, u: NodeIx, x: &[Value], y: &[Value]) -> Result<Value, EvalError> {
        if self.budget.fuel == 0 {
            return Err(EvalError::FuelExhausted);
        }
        self.budget.fuel -= 1;
        let node = self.g.node(u);
        let p = &node.premises;
        let malformed = || EvalError::Malformed(node.id.clone());
        match &node.rule {
            Rule::Id => y.first().cloned().ok_or_else(malformed),
            Rule::Zero => Ok(value::zero()),
            Rule::One => Ok(value::one()),
            Rule::S0 => Ok(value::s0(&self.run(p[0], x, y)?)),
            Rule::S1 => Ok(value::s1(&self.run(p[0], x, y)?)),
            Rule::CutN => {
                let v = self.run(p[0], x, y)?;
                self.run(p[1], x, &push(y, v))
            }
            Rule::CutBox => {
                let v = self.run(p[0], x, y)?;
                self.run(p[1], &prepend(v, x), y)
            }
            Rule::WN => self.run(p[0], x, &y[..y.len() - 1]),
            Rule::WBox => self.run(p[0], &x[1..], y),
            Rule::EN(i) => {
                let mut y = y.to_vec();
                y.swap(*i, i + 1);
                self.run(p[0], x, &y)
            }
            Rule::EBox(i) => {
                let mut x = x.to_vec();
                x.swap(*i, i + 1);
                self.run(p[0], &x, y)
            }
            Rule::BoxL => self.run(p[0], &x[1..], &push(y, x[0].clone())),
            Rule::BoxR => self.run(p[0], x, &[]),
            Rule::Srec => {
                // Bottom-up over the prefixes of the recursion argument.
                let rest = &x[1..];
                let bits = value::bits_msb_first(&x[0]);
                let mut acc = self.run(p[0], rest, y)?;
                let mut prefix = value::zero();
                for b in bits {
                    let premise = if b { p[2] } else { p[1] };
                    acc = self.run(premise, &prepend(prefix.clone(), rest), &push(y, acc))?;
                    prefix = if b { value::s1(&prefix) } else { value::s0(&prefix) };
                }
                Ok(acc)
            }
            Rule::CondN | Rule::PcondN => {
                let (w, init) = y.split_last().ok_or_else(malformed)?;
                if w.bits() == 0 {
                    self.run(p[0], x, init)
                } else {
                    let k = if value::is_odd(w) && p.len() == 3 { 2 } else { 1 };
                    self.run(p[k], x, &push(init, value::pred(w)))
                }
            }
            Rule::CondBox | Rule::PcondBox => {
                let (w, rest) = x.split_first().ok_or_else(malformed)?;
                if w.bits() == 0 {
                    self.run(p[0], rest, y)
                } else {
                    let k = if value::is_odd(w) && p.len() == 3 { 2 } else { 1 };
                    self.run(p[k], &prepend(value::pred(w), rest), y)
                }
            }
            Rule::Dis => {
                let key = (u, x.to_vec(), y.to_vec());
                if let Some(v) = self.budget.memo.as_ref().and_then(|m| m.get(&key)) {
                    return Ok(v.clone());
                }
                let v = self.run(p[0], x, y)?;
                if let Some(m) = self.budget.memo.as_mut() {
                    m.insert(key, v.clone());
                }
                Ok(v)
            }
            Rule::Oracle(name) => self.env.call(name, x, y),
        }
    }
}

fn push(y: &[Value], v: Value) -> Vec<Value> {
    let mut out = Vec::with_capacity(y.len() + 1);
    out.extend_from_slice(y);
    out.push(v);
    out
}

fn prepend(v: Value, x: &[Value]) -> Vec<Value> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.push(v);
    out.extend_from_slice(x);
    out
}

/// Value of the coderivation at `node` on `(normals; safes)`.
pub fn eval(
    g: &ProofGraph,
    node: NodeIx,
    normals: &[Value],
    safes: &[Value],
    env: &OracleEnv,
    budget: &mut Budget,
) -> Result<Value, EvalError> {
    let seq = g.node(node).sequent;
    if normals.len() != seq.normals || safes.len() != seq.safes {
        return Err(EvalError::ArityMismatch {
            expected_normals: seq.normals,
            expected_safes: seq.safes,
            normals: normals.len(),
            safes: safes.len(),
        });
    }
    Machine { g, env, budget }.run(node, normals, safes)
}

/// Root evaluation with a fresh budget.
pub fn eval_root(g: &ProofGraph, normals: &[Value], safes: &[Value], env: &OracleEnv, fuel: u64) -> Result<Value, EvalError> {
    eval(g, g.root(), normals, safes, env, &mut Budget::new(fuel))
}

/// One argument tuple `(normals, safes)`.
pub type Args = (Vec<Value>, Vec<Value>);

/// Evaluates many inputs at the root, each with its own budget.
pub fn eval_batch(g: &ProofGraph, inputs: &[Args], env: &OracleEnv, fuel: u64, exec: Exec) -> Vec<Result<Value, EvalError>> {
    exec.map(inputs, |(x, y)| eval_root(g, x, y, env, fuel))
}

/// A uniformly random value of exact bit length `len`.
pub fn random_value(rng: &mut impl Rng, len: usize) -> Value {
    if len == 0 {
        return value::zero();
    }
    let mut bits = vec![true];
    bits.extend((1..len).map(|_| rng.gen::<bool>()));
    value::from_bits_msb_first(&bits)
}

/// Random argument tuple with each argument at most `max_bits` long.
pub fn random_args(rng: &mut impl Rng, normals: usize, safes: usize, max_bits: usize) -> Args {
    let x = (0..normals).map(|_| { let l = rng.gen_range(0..=max_bits); random_value(rng, l) }).collect();
    let y = (0..safes).map(|_| { let l = rng.gen_range(0..=max_bits); random_value(rng, l) }).collect();
    (x, y)
}

/// Finite truncation of the relation tree of a length relation over `arity` normal arguments.
///
/// Each argument is consumed by a `pcond_box` chain; once `depth` steps have been taken on one
/// argument the branch ends in an `unknown<r>` host leaf, `r` the remaining normal count.
pub fn expand_relation(advice: &AdviceSource, arity: usize, depth: usize) -> ProofGraph {
    fn build(
        b: &mut GraphBuilder,
        advice: &AdviceSource,
        arity: usize,
        depth: usize,
        fixed: &mut Vec<usize>,
        consumed: usize,
        path: &str,
    ) -> usize {
        let remaining = arity - fixed.len();
        if remaining == 0 {
            let rule = if advice.bit(fixed) { Rule::One } else { Rule::Zero };
            return b.add(format!("e{path}"), Sequent::n(0, 0), rule, vec![]);
        }
        let seq = Sequent::n(remaining, 0);
        if consumed >= depth {
            let name = format!("unknown{remaining}");
            b.declare_oracle(OracleDecl {
                name: name.clone(),
                normals: remaining,
                safes: 0,
                kind: OracleKind::Host,
                source: OracleSource::Builtin("unknown".into()),
            });
            return b.add(format!("u{path}"), seq, Rule::Oracle(name), vec![]);
        }
        fixed.push(consumed);
        let done = build(b, advice, arity, depth, fixed, 0, &format!("{path}z"));
        fixed.pop();
        let more = build(b, advice, arity, depth, fixed, consumed + 1, &format!("{path}s"));
        b.add(format!("e{path}"), seq, Rule::PcondBox, vec![Prem::Fwd(done), Prem::Fwd(more)])
    }
    let mut b = GraphBuilder::new(format!("expansion{arity}x{depth}"));
    let root = build(&mut b, advice, arity, depth, &mut Vec::new(), 0, "");
    b.finish(root).expect("relation trees are trees")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Probe {
    pub determined: bool,
    /// Two argument tuples with equal length profile and different outputs.
    pub witness: Option<(Args, Args)>,
}

/// Samples pairs of equal-length inputs and reports a refutation of length-determinism if found.
pub fn probe_length_determined<F>(
    f: F,
    normals: usize,
    safes: usize,
    samples: usize,
    max_bits: usize,
    rng: &mut impl Rng,
) -> Result<Probe, EvalError>
where
    F: Fn(&[Value], &[Value]) -> Result<Value, EvalError>,
{
    for _ in 0..samples {
        let lens: Vec<usize> = (0..normals + safes).map(|_| rng.gen_range(0..=max_bits)).collect();
        let draw = |rng: &mut _| -> Args {
            let vals: Vec<Value> = lens.iter().map(|&l| random_value(rng, l)).collect();
            (vals[..normals].to_vec(), vals[normals..].to_vec())
        };
        let a = draw(rng);
        let b = draw(rng);
        if f(&a.0, &a.1)? != f(&b.0, &b.1)? {
            return Ok(Probe { determined: false, witness: Some((a, b)) });
        }
    }
    Ok(Probe { determined: true, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::value::nat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[u64]) -> Vec<Value> {
        xs.iter().map(|&x| nat(x)).collect()
    }

    #[test]
    fn concatenation_spot_value() {
        let g = fixtures::concat();
        assert_eq!(eval_root(&g, &v(&[2, 3]), &v(&[1]), &OracleEnv::new(), DEFAULT_FUEL).unwrap(), nat(30));
    }

    #[test]
    fn exponential_spot_value() {
        let g = fixtures::exponential();
        assert_eq!(eval_root(&g, &v(&[1]), &v(&[1]), &OracleEnv::new(), DEFAULT_FUEL).unwrap(), nat(4));
    }

    #[test]
    fn undefined_loop_runs_out_of_fuel() {
        let g = fixtures::undefined();
        assert_eq!(eval_root(&g, &v(&[5]), &[], &OracleEnv::new(), 1000), Err(EvalError::FuelExhausted));
    }

    #[test]
    fn advice_product_with_constant_one() {
        let g = fixtures::advice_product();
        let env = OracleEnv::new().with("r", OracleEntry::relation(1, 0, AdviceSource::builtin("one").unwrap()));
        assert_eq!(eval_root(&g, &v(&[2]), &[], &env, DEFAULT_FUEL).unwrap(), nat(3));
    }

    #[test]
    fn memo_does_not_change_values() {
        let g = fixtures::concat();
        let env = OracleEnv::new();
        for (a, b, c) in [(5, 9, 3), (0, 7, 0), (12, 0, 6)] {
            let with = eval(&g, 0, &v(&[a, b]), &v(&[c]), &env, &mut Budget::new(DEFAULT_FUEL)).unwrap();
            let without = eval(&g, 0, &v(&[a, b]), &v(&[c]), &env, &mut Budget::without_memo(DEFAULT_FUEL)).unwrap();
            assert_eq!(with, without);
        }
    }

    #[test]
    fn arity_is_checked() {
        let g = fixtures::concat();
        assert!(matches!(
            eval_root(&g, &v(&[1]), &[], &OracleEnv::new(), 10),
            Err(EvalError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn missing_oracle() {
        let g = fixtures::advice_product();
        assert_eq!(
            eval_root(&g, &v(&[3]), &[], &OracleEnv::new(), DEFAULT_FUEL),
            Err(EvalError::MissingOracle("r".into()))
        );
    }

    #[test]
    fn expansion_matches_parity_within_horizon() {
        let advice = AdviceSource::builtin("parity-len").unwrap();
        let g = expand_relation(&advice, 1, 3);
        for x in 0..4u64 {
            let got = eval_root(&g, &v(&[x]), &[], &OracleEnv::new(), 1000).unwrap();
            assert_eq!(got, nat(value::len(&nat(x)) as u64 % 2));
        }
    }

    #[test]
    fn expansion_edges() {
        let advice = AdviceSource::builtin("parity-len").unwrap();
        let g0 = expand_relation(&advice, 1, 0);
        assert_eq!(g0.len(), 1);
        assert!(matches!(g0.node(0).rule, Rule::Oracle(_)));
        let one = AdviceSource::builtin("one").unwrap();
        let leaf = expand_relation(&one, 0, 5);
        assert_eq!(leaf.node(0).rule, Rule::One);
    }

    #[test]
    fn identity_is_not_length_determined() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = probe_length_determined(|_, y| Ok(y[0].clone()), 0, 1, 200, 8, &mut rng).unwrap();
        assert!(!p.determined);
        let (a, b) = p.witness.unwrap();
        assert_eq!(value::len(&a.1[0]), value::len(&b.1[0]));
        let c = probe_length_determined(|_, _| Ok(nat(0)), 0, 1, 200, 8, &mut rng).unwrap();
        assert!(c.determined);
    }
}
