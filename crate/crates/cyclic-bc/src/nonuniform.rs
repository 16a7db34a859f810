//! Circuit families as advice: netlists, their prefix-free bit descriptions, the
//! length-determined oracle reading those descriptions, and the proof graph that rebuilds a
//! description bit by bit from that oracle.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::algebra::{self, Arity, Term, TermRef};
use crate::evaluator::{EntryKind, EvalError, OracleEntry, OracleEnv};
use crate::kernel::{GraphBuilder, OracleDecl, OracleKind, OracleSource, Prem, ProofGraph, Rule, Sequent};
use crate::translator;
use crate::value::{self, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Not,
    Const0,
    Const1,
}

impl GateKind {
    pub fn fan_in(self) -> usize {
        match self {
            GateKind::And | GateKind::Or => 2,
            GateKind::Not => 1,
            GateKind::Const0 | GateKind::Const1 => 0,
        }
    }

    fn code(self) -> u8 {
        match self {
            GateKind::And => 0,
            GateKind::Or => 1,
            GateKind::Not => 2,
            GateKind::Const0 => 3,
            GateKind::Const1 => 4,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => GateKind::And,
            1 => GateKind::Or,
            2 => GateKind::Not,
            3 => GateKind::Const0,
            4 => GateKind::Const1,
            _ => return None,
        })
    }
}

/// Operands index the wire space: inputs first, then gates in order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub operands: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Circuit {
    pub inputs: usize,
    pub gates: Vec<Gate>,
    pub output: usize,
}

impl Circuit {
    pub fn size(&self) -> usize {
        self.gates.len()
    }

    /// Operands point strictly backwards and fan-in matches the gate kind.
    pub fn is_well_formed(&self) -> bool {
        self.gates.iter().enumerate().all(|(k, g)| {
            g.operands.len() == g.kind.fan_in() && g.operands.iter().all(|&o| o < self.inputs + k)
        }) && self.output < self.inputs + self.gates.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("description ends after {0} bits")]
    Truncated(usize),
    #[error("malformed description: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("circuit has {expected} inputs, given {given} bits")]
    ArityMismatch { expected: usize, given: usize },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("netlist {path}: {msg}")]
    Netlist { path: String, msg: String },
    #[error("unknown circuit family {0}")]
    UnknownFamily(String),
}

pub fn circuit_eval(c: &Circuit, bits: &[bool]) -> Result<bool, CircuitError> {
    if bits.len() != c.inputs {
        return Err(CircuitError::ArityMismatch { expected: c.inputs, given: bits.len() });
    }
    let mut wires = bits.to_vec();
    wires.reserve(c.gates.len());
    for g in &c.gates {
        let a = |i: usize| wires[g.operands[i]];
        let v = match g.kind {
            GateKind::And => a(0) && a(1),
            GateKind::Or => a(0) || a(1),
            GateKind::Not => !a(0),
            GateKind::Const0 => false,
            GateKind::Const1 => true,
        };
        wires.push(v);
    }
    Ok(wires[c.output])
}

/// Bits needed to write any index below `space`.
fn width(space: usize) -> usize {
    if space <= 1 {
        0
    } else {
        (usize::BITS - (space - 1).leading_zeros()) as usize
    }
}

fn push_bits(out: &mut Vec<bool>, v: usize, w: usize) {
    out.extend((0..w).rev().map(|i| (v >> i) & 1 == 1));
}

/// Elias gamma code of `v ≥ 1`.
fn push_gamma(out: &mut Vec<bool>, v: usize) {
    let w = width(v + 1);
    out.extend(std::iter::repeat_n(false, w - 1));
    push_bits(out, v, w);
}

/// Header `γ(n+1) γ(G+1)`, then per gate a 3-bit kind and its operands, each written in the
/// width of the wire space visible to that gate, then the output in the width of the full space.
pub fn encode(c: &Circuit) -> Vec<bool> {
    let mut out = Vec::new();
    push_gamma(&mut out, c.inputs + 1);
    push_gamma(&mut out, c.gates.len() + 1);
    for (k, g) in c.gates.iter().enumerate() {
        push_bits(&mut out, g.kind.code() as usize, 3);
        for &o in &g.operands {
            push_bits(&mut out, o, width(c.inputs + k));
        }
    }
    push_bits(&mut out, c.output, width(c.inputs + c.gates.len()));
    out
}

struct Reader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl Reader<'_> {
    fn bit(&mut self) -> Result<bool, DecodeError> {
        let b = *self.bits.get(self.pos).ok_or(DecodeError::Truncated(self.bits.len()))?;
        self.pos += 1;
        Ok(b)
    }

    fn fixed(&mut self, w: usize) -> Result<usize, DecodeError> {
        let mut v = 0usize;
        for _ in 0..w {
            v = (v << 1) | self.bit()? as usize;
        }
        Ok(v)
    }

    fn gamma(&mut self) -> Result<usize, DecodeError> {
        let mut zeros = 0;
        while !self.bit()? {
            zeros += 1;
            if zeros >= usize::BITS as usize {
                return Err(DecodeError::Malformed("gamma prefix too long".into()));
            }
        }
        Ok((1 << zeros) | self.fixed(zeros)?)
    }
}

/// Inverse of [`encode`]; bits after the encoded circuit are ignored.
pub fn decode(bits: &[bool]) -> Result<Circuit, DecodeError> {
    let mut r = Reader { bits, pos: 0 };
    let inputs = r.gamma()? - 1;
    let count = r.gamma()? - 1;
    if count > bits.len() {
        return Err(DecodeError::Malformed(format!("{count} gates cannot fit in {} bits", bits.len())));
    }
    let mut gates = Vec::with_capacity(count);
    for k in 0..count {
        let code = r.fixed(3)? as u8;
        let kind = GateKind::from_code(code).ok_or_else(|| DecodeError::Malformed(format!("gate kind {code}")))?;
        let mut operands = Vec::with_capacity(kind.fan_in());
        for _ in 0..kind.fan_in() {
            let o = r.fixed(width(inputs + k))?;
            if o >= inputs + k {
                return Err(DecodeError::Malformed(format!("gate {k} reads wire {o}")));
            }
            operands.push(o);
        }
        gates.push(Gate { kind, operands });
    }
    let output = r.fixed(width(inputs + count))?;
    if output >= inputs + count {
        return Err(DecodeError::Malformed(format!("output wire {output} of {}", inputs + count)));
    }
    Ok(Circuit { inputs, gates, output })
}

/// Upper bound on the description length of any circuit with `n` inputs and fewer than
/// `bound` gates, every gate counted with two operands.
pub fn description_bound(n: usize, bound: usize) -> usize {
    let count = bound.saturating_sub(1);
    let mut len = 2 * width(n + 2) - 1 + 2 * width(count + 2) - 1;
    for k in 0..count {
        len += 3 + 2 * width(n + k);
    }
    len + width(n + count)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Parity,
    Majority,
    Constant(bool),
    /// A directory of `C<n>.circ` netlists.
    Netlists(PathBuf),
}

/// A circuit and its description.
type Generated = (Arc<Circuit>, Arc<Vec<bool>>);

/// A circuit per input length, generated or loaded on demand and cached.
pub struct CircuitFamily {
    kind: FamilyKind,
    cache: Mutex<HashMap<usize, Generated>>,
}

impl fmt::Debug for CircuitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CircuitFamily({})", self.name())
    }
}

impl CircuitFamily {
    pub fn new(kind: FamilyKind) -> Self {
        CircuitFamily { kind, cache: Mutex::new(HashMap::new()) }
    }

    /// `parity`, `majority`, `constant-0`, `constant-1`, or a netlist directory.
    pub fn parse(spec: &str) -> Result<Self, CircuitError> {
        let kind = match spec {
            "parity" => FamilyKind::Parity,
            "majority" => FamilyKind::Majority,
            "constant-0" | "zero" => FamilyKind::Constant(false),
            "constant-1" | "one" => FamilyKind::Constant(true),
            path if std::path::Path::new(path).is_dir() => FamilyKind::Netlists(PathBuf::from(path)),
            other => return Err(CircuitError::UnknownFamily(other.to_string())),
        };
        Ok(CircuitFamily::new(kind))
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            FamilyKind::Parity => "parity".into(),
            FamilyKind::Majority => "majority".into(),
            FamilyKind::Constant(b) => format!("constant-{}", *b as u8),
            FamilyKind::Netlists(p) => p.display().to_string(),
        }
    }

    fn entry(&self, n: usize) -> Result<(Arc<Circuit>, Arc<Vec<bool>>), CircuitError> {
        if let Some(e) = self.cache.lock().expect("cache poisoned").get(&n) {
            return Ok(e.clone());
        }
        let c = match &self.kind {
            FamilyKind::Parity => parity(n),
            FamilyKind::Majority => majority(n),
            FamilyKind::Constant(b) => constant(n, *b),
            FamilyKind::Netlists(dir) => {
                let path = dir.join(format!("C{n}.circ"));
                let err = |msg: String| CircuitError::Netlist { path: path.display().to_string(), msg };
                let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
                let c = crate::prooffmt::parse_netlist(&text).map_err(|e| err(e.to_string()))?;
                if c.inputs != n {
                    return Err(err(format!("declares {} inputs", c.inputs)));
                }
                c
            }
        };
        let desc = Arc::new(encode(&c));
        let e = (Arc::new(c), desc);
        self.cache.lock().expect("cache poisoned").insert(n, e.clone());
        Ok(e)
    }

    pub fn circuit(&self, n: usize) -> Result<Arc<Circuit>, CircuitError> {
        Ok(self.entry(n)?.0)
    }

    /// The exact description of `C_n`.
    pub fn description(&self, n: usize) -> Result<Arc<Vec<bool>>, CircuitError> {
        Ok(self.entry(n)?.1)
    }

    /// `p(n)` with `size(C_n) < p(n)`.
    pub fn size_bound(&self, n: usize) -> Result<usize, CircuitError> {
        Ok(match &self.kind {
            FamilyKind::Parity => 4 * n + 2,
            FamilyKind::Majority => n * n + 2 * n + 3,
            FamilyKind::Constant(_) => 2,
            FamilyKind::Netlists(_) => self.circuit(n)?.size() + 1,
        })
    }

    /// Number of description bits produced for length `n`: enough for any circuit within the
    /// size bound, the rest of the stream being zeros.
    pub fn description_len(&self, n: usize) -> Result<usize, CircuitError> {
        Ok(description_bound(n, self.size_bound(n)?))
    }
}

/// XOR chain, four gates per step: `(a ∨ b) ∧ ¬(a ∧ b)`.
fn parity(n: usize) -> Circuit {
    if n == 0 {
        return constant(0, false);
    }
    let mut gates = Vec::new();
    let mut acc = 0;
    for i in 1..n {
        let base = n + gates.len();
        gates.push(Gate { kind: GateKind::Or, operands: vec![acc, i] });
        gates.push(Gate { kind: GateKind::And, operands: vec![acc, i] });
        gates.push(Gate { kind: GateKind::Not, operands: vec![base + 1] });
        gates.push(Gate { kind: GateKind::And, operands: vec![base, base + 2] });
        acc = base + 3;
    }
    Circuit { inputs: n, gates, output: acc }
}

/// Threshold `⌊n/2⌋ + 1` by the table `T[i][j]` = "at least `j` ones among the first `i` inputs".
fn majority(n: usize) -> Circuit {
    let t = n / 2 + 1;
    let mut gates = vec![Gate { kind: GateKind::Const1, operands: vec![] }, Gate { kind: GateKind::Const0, operands: vec![] }];
    let (one, zero) = (n, n + 1);
    // row[j] holds the wire of T[i][j] for the current i.
    let mut row: Vec<usize> = (0..=t).map(|j| if j == 0 { one } else { zero }).collect();
    for i in 0..n {
        let mut next = row.clone();
        for j in 1..=t {
            let and = n + gates.len();
            gates.push(Gate { kind: GateKind::And, operands: vec![i, row[j - 1]] });
            gates.push(Gate { kind: GateKind::Or, operands: vec![row[j], and] });
            next[j] = and + 1;
        }
        row = next;
    }
    Circuit { inputs: n, gates, output: row[t] }
}

fn constant(n: usize, b: bool) -> Circuit {
    let kind = if b { GateKind::Const1 } else { GateKind::Const0 };
    Circuit { inputs: n, gates: vec![Gate { kind, operands: vec![] }], output: n }
}

/// `c(y, z;)` = bit `|z|` of the description of `C_{|y|}`, zero past its end.
pub fn family_oracle(fam: Arc<CircuitFamily>) -> OracleEntry {
    OracleEntry::new(
        EntryKind::LengthRelation,
        2,
        0,
        Arc::new(move |x: &[Value], _: &[Value]| {
            let desc = fam.description(value::len(&x[0])).map_err(|e| EvalError::Malformed(e.to_string()))?;
            Ok(Value::from(desc.get(value::len(&x[1])).copied().unwrap_or(false) as u8))
        }),
    )
}

/// Name under which the description oracle is bound.
pub const DESCRIPTION_ORACLE: &str = "c";

/// `C(y, 0;) = 0`, `C(y, s_i z;) = cond(; c(y, z;), s0(; C(y, z;)), s1(; C(y, z;)))` as a
/// recursion on the pair `(y, z)`; the description of `C_{|y|}` is `C(y, 1^L;)`.
pub fn build_description_term() -> TermRef {
    let ar = Arity::new(2, 0);
    let y = algebra::projn(ar, 0);
    let z = algebra::projn(ar, 1);
    let pz = algebra::apply_safe(ar, Arc::new(Term::Pred), vec![z.clone()]);
    let bit = algebra::compose(ar, algebra::relation(DESCRIPTION_ORACLE, ar), vec![y.clone(), pz.clone()], vec![]);
    let prev = algebra::compose(ar, algebra::call("d", ar), vec![y, pz], vec![]);
    let push0 = algebra::apply_safe(ar, Arc::new(Term::S0), vec![prev.clone()]);
    let push1 = algebra::apply_safe(ar, Arc::new(Term::S1), vec![prev]);
    let step = algebra::cond(ar, bit, push0, push1.clone(), push1);
    algebra::rec_pp("d", algebra::cond(ar, z, algebra::numeral(0, ar), step.clone(), step))
}

/// Reads `len` description bits out of a value built most significant bit first.
pub fn description_bits(v: &Value, len: usize) -> Vec<bool> {
    (0..len).map(|i| v.bit((len - 1 - i) as u64)).collect()
}

fn description_env(fam: &Arc<CircuitFamily>) -> OracleEnv {
    OracleEnv::new().with(DESCRIPTION_ORACLE, family_oracle(fam.clone()))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("description builder: {0}")]
    Builder(String),
}

/// Builds the description of `C_{|input|}` through the recursion term, decodes it and runs the
/// circuit on `input` (most significant bit first).
pub fn pipeline_eval(fam: &Arc<CircuitFamily>, input: &[bool]) -> Result<bool, PipelineError> {
    let n = input.len();
    let len = fam.description_len(n)?;
    let v = algebra::eval_term(&build_description_term(), &[value::ones(n), value::ones(len)], &[], &description_env(fam))
        .map_err(|e| PipelineError::Builder(e.to_string()))?;
    let c = decode(&description_bits(&v, len))?;
    Ok(circuit_eval(&c, input)?)
}

/// The description builder as a cyclic proof over the oracle `c`, with its declaration and
/// the entry answering it.
#[derive(Clone, Debug)]
pub struct CompiledFamily {
    pub graph: ProofGraph,
    pub decl: OracleDecl,
    pub entry: OracleEntry,
}

impl CompiledFamily {
    pub fn env(&self) -> OracleEnv {
        OracleEnv::new().with(self.decl.name.clone(), self.entry.clone())
    }

    /// Description value `D(z, y;)` for lengths `|y| = n`, `|z| = len`.
    pub fn description_value(&self, n: usize, len: usize, fuel: u64) -> Result<Value, EvalError> {
        crate::evaluator::eval_root(&self.graph, &[value::ones(len), value::ones(n)], &[], &self.env(), fuel)
    }

    /// End to end through the proof graph: build, decode, run.
    pub fn run(&self, fam: &CircuitFamily, input: &[bool], fuel: u64) -> Result<bool, PipelineError> {
        let len = fam.description_len(input.len())?;
        let v = self.description_value(input.len(), len, fuel).map_err(|e| PipelineError::Builder(e.to_string()))?;
        let c = decode(&description_bits(&v, len))?;
        Ok(circuit_eval(&c, input)?)
    }
}

/// Safe recursion on the first normal `z` of `(z, y)`, written with `srec` and then turned into
/// a cycle: `D(0, y;) = 0`, `D(s_i z, y;) = c(y, z;) ? s1(; D) : s0(; D)`.
pub fn compile_family_to_proof(fam: Arc<CircuitFamily>) -> CompiledFamily {
    let decl = OracleDecl {
        name: DESCRIPTION_ORACLE.into(),
        normals: 2,
        safes: 0,
        kind: OracleKind::LengthRelation,
        source: OracleSource::Builtin(format!("family:{}", fam.name())),
    };
    let mut b = GraphBuilder::new(format!("describe-{}", fam.name()));
    b.declare_oracle(decl.clone());
    let zero = b.add("g1", Sequent::n(0, 0), Rule::Zero, vec![]);
    let base = b.add("g0", Sequent::n(1, 0), Rule::WBox, vec![Prem::Fwd(zero)]);
    let step = |b: &mut GraphBuilder, i: usize| {
        let p = |k: &str| format!("h{i}{k}");
        let leaf = b.add(p("c"), Sequent::n(2, 0), Rule::Oracle(DESCRIPTION_ORACLE.into()), vec![]);
        let swap = b.add(p("x"), Sequent::n(2, 0), Rule::EBox(0), vec![Prem::Fwd(leaf)]);
        let query = b.add(p("q"), Sequent::n(2, 1), Rule::WN, vec![Prem::Fwd(swap)]);
        let push = |b: &mut GraphBuilder, tag: &str, rule: Rule| {
            let id = b.add(p(&format!("{tag}i")), Sequent::n(0, 1), Rule::Id, vec![]);
            let w1 = b.add(p(&format!("{tag}w1")), Sequent::n(1, 1), Rule::WBox, vec![Prem::Fwd(id)]);
            let w2 = b.add(p(&format!("{tag}w2")), Sequent::n(2, 1), Rule::WBox, vec![Prem::Fwd(w1)]);
            b.add(p(&format!("{tag}s")), Sequent::n(2, 1), rule, vec![Prem::Fwd(w2)])
        };
        let on0 = push(b, "a", Rule::S0);
        let on1 = push(b, "b", Rule::S1);
        let drop = b.add(p("d"), Sequent::n(2, 2), Rule::WN, vec![Prem::Fwd(on1)]);
        let pick = b.add(p("p"), Sequent::n(2, 2), Rule::PcondN, vec![Prem::Fwd(on0), Prem::Fwd(drop)]);
        b.add(p(""), Sequent::n(2, 1), Rule::CutN, vec![Prem::Fwd(query), Prem::Fwd(pick)])
    };
    let h0 = step(&mut b, 0);
    let h1 = step(&mut b, 1);
    let root = b.add("d", Sequent::n(2, 0), Rule::Srec, vec![Prem::Fwd(base), Prem::Fwd(h0), Prem::Fwd(h1)]);
    let srec = b.finish(root).expect("description builder is a tree");
    CompiledFamily { graph: translator::srec_to_cycle(&srec), decl, entry: family_oracle(fam) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        value::parse_bits(s).unwrap()
    }

    #[test]
    fn gate_level_examples() {
        assert!(!circuit_eval(&parity(3), &bits("101")).unwrap());
        assert!(circuit_eval(&majority(3), &bits("110")).unwrap());
        assert!(!circuit_eval(&majority(3), &bits("100")).unwrap());
        assert!(circuit_eval(&constant(4, true), &bits("0000")).unwrap());
        assert_eq!(
            circuit_eval(&parity(2), &bits("1")),
            Err(CircuitError::ArityMismatch { expected: 2, given: 1 })
        );
    }

    #[test]
    fn generated_circuits_match_their_functions() {
        for n in 0..=7 {
            let (p, m) = (parity(n), majority(n));
            assert!(p.is_well_formed() && m.is_well_formed());
            assert!(p.size() < 4 * n + 2 && m.size() < n * n + 2 * n + 3);
            for x in 0..(1u32 << n) {
                let input: Vec<bool> = (0..n).map(|i| (x >> (n - 1 - i)) & 1 == 1).collect();
                let ones = x.count_ones() as usize;
                assert_eq!(circuit_eval(&p, &input).unwrap(), ones % 2 == 1);
                assert_eq!(circuit_eval(&m, &input).unwrap(), ones > n / 2);
            }
        }
    }

    #[test]
    fn codec_round_trip_ignores_trailing_zeros() {
        let c = parity(2);
        let mut d = encode(&c);
        assert_eq!(decode(&d).unwrap(), c);
        d.extend([false; 16]);
        assert_eq!(decode(&d).unwrap(), c);
        assert!(matches!(decode(&[]), Err(DecodeError::Truncated(0))));
        assert!(decode(&[false; 40]).is_err());
        for n in 0..6 {
            assert!(encode(&majority(n)).len() <= description_bound(n, n * n + 2 * n + 3));
            assert!(encode(&parity(n)).len() <= description_bound(n, 4 * n + 2));
        }
    }

    #[test]
    fn oracle_reads_description_bits() {
        let fam = Arc::new(CircuitFamily::parse("parity").unwrap());
        let c = family_oracle(fam.clone());
        let d = encode(&parity(2));
        for (k, &b) in d.iter().enumerate() {
            assert_eq!(c.call(&[value::nat(2), value::ones(k)], &[]).unwrap(), Value::from(b as u8));
            assert_eq!(c.call(&[value::nat(3), value::ones(k)], &[]).unwrap(), Value::from(b as u8));
        }
        assert_eq!(c.call(&[value::nat(2), value::ones(d.len() + 3)], &[]).unwrap(), value::zero());
    }

    #[test]
    fn description_term_rebuilds_the_code() {
        let fam = Arc::new(CircuitFamily::parse("parity").unwrap());
        let len = fam.description_len(2).unwrap();
        let env = description_env(&fam);
        let t = build_description_term();
        t.check().unwrap();
        let v = algebra::eval_term(&t, &[value::nat(2), value::ones(len)], &[], &env).unwrap();
        let mut want = encode(&parity(2));
        want.resize(len, false);
        assert_eq!(description_bits(&v, len), want);
        assert_eq!(algebra::eval_term(&t, &[value::nat(2), value::zero()], &[], &env).unwrap(), value::zero());
    }

    #[test]
    fn pipeline_examples() {
        let parity = Arc::new(CircuitFamily::parse("parity").unwrap());
        let majority = Arc::new(CircuitFamily::parse("majority").unwrap());
        let zero = Arc::new(CircuitFamily::parse("constant-0").unwrap());
        assert!(!pipeline_eval(&parity, &bits("101")).unwrap());
        assert!(pipeline_eval(&majority, &bits("110")).unwrap());
        assert!(!pipeline_eval(&zero, &bits("111")).unwrap());
    }

    #[test]
    fn compiled_proof_runs_end_to_end() {
        let fam = Arc::new(CircuitFamily::parse("parity").unwrap());
        let compiled = compile_family_to_proof(fam.clone());
        for x in 0..8u32 {
            let input: Vec<bool> = (0..3).map(|i| (x >> (2 - i)) & 1 == 1).collect();
            assert_eq!(compiled.run(&fam, &input, 1_000_000).unwrap(), x.count_ones() % 2 == 1);
        }
        let one = Arc::new(CircuitFamily::parse("constant-1").unwrap());
        let c1 = compile_family_to_proof(one.clone());
        assert!(c1.run(&one, &bits("0110"), 1_000_000).unwrap());
    }
}
