//! Line-oriented text formats: proof documents (`.cbp`), advice tables (`.adv`) and circuit
//! netlists (`.circ`).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::kernel::{
    KernelError, Node, OracleDecl, OracleKind, OracleSource, ProofGraph, Rule, RuleKind, Sequent, Succedent,
};
use crate::nonuniform::{Circuit, Gate, GateKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown rule {tag}")]
    UnknownRule { line: usize, tag: String },
    #[error("line {line}: premise {id} is not declared")]
    DanglingId { line: usize, id: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdviceError {
    #[error("advice line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unknown builtin advice {0}")]
    UnknownBuiltin(String),
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: String,
    pub sequent: Sequent,
    pub rule: Rule,
    pub premises: Vec<String>,
}

/// A parsed proof file. The first node is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofDocument {
    pub name: String,
    pub nodes: Vec<NodeDecl>,
    pub oracles: Vec<OracleDecl>,
}

impl ProofDocument {
    pub fn to_graph(&self) -> Result<ProofGraph, KernelError> {
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id.clone(),
                sequent: n.sequent,
                rule: n.rule.clone(),
                premises: n.premises.iter().map(|p| index[p.as_str()]).collect(),
            })
            .collect();
        ProofGraph::from_parts(self.name.clone(), nodes, self.oracles.iter().cloned())
    }

    pub fn from_graph(g: &ProofGraph) -> Self {
        ProofDocument {
            name: g.name().to_string(),
            nodes: g
                .nodes()
                .iter()
                .map(|n| NodeDecl {
                    id: n.id.clone(),
                    sequent: n.sequent,
                    rule: n.rule.clone(),
                    premises: n.premises.iter().map(|&p| g.node(p).id.clone()).collect(),
                })
                .collect(),
            oracles: g.oracles().values().cloned().collect(),
        }
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, msg: msg.into() }
}

fn parse_count(tok: Option<&str>, line: usize, what: &str) -> Result<usize, FormatError> {
    tok.ok_or_else(|| syntax(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| syntax(line, format!("{what} must be a decimal natural")))
}

fn expect(tok: Option<&str>, word: &str, line: usize) -> Result<(), FormatError> {
    match tok {
        Some(t) if t == word => Ok(()),
        other => Err(syntax(line, format!("expected `{word}`, found `{}`", other.unwrap_or("end of line")))),
    }
}

pub fn parse_proof(text: &str) -> Result<ProofDocument, FormatError> {
    let mut name = None;
    let mut nodes: Vec<(usize, NodeDecl)> = Vec::new();
    let mut oracles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("proof") => {
                let n = toks.next().ok_or_else(|| syntax(line, "missing proof name"))?;
                if name.replace(n.to_string()).is_some() {
                    return Err(syntax(line, "second `proof` line"));
                }
            }
            Some("node") => nodes.push((line, parse_node(&mut toks, line)?)),
            Some("oracle") => oracles.push(parse_oracle(&mut toks, line)?),
            Some(other) => return Err(syntax(line, format!("unknown directive `{other}`"))),
            None => unreachable!("blank lines are skipped"),
        }
        if let Some(extra) = toks.next() {
            return Err(syntax(line, format!("trailing token `{extra}`")));
        }
    }
    let name = name.ok_or_else(|| syntax(1, "missing `proof <name>` line"))?;
    if nodes.is_empty() {
        return Err(syntax(1, "document declares no nodes"));
    }
    let mut seen = HashMap::new();
    for (line, n) in &nodes {
        if seen.insert(n.id.clone(), *line).is_some() {
            return Err(syntax(*line, format!("duplicate node id {}", n.id)));
        }
    }
    for (line, n) in &nodes {
        if let Some(p) = n.premises.iter().find(|p| !seen.contains_key(*p)) {
            return Err(FormatError::DanglingId { line: *line, id: p.clone() });
        }
    }
    Ok(ProofDocument { name, nodes: nodes.into_iter().map(|(_, n)| n).collect(), oracles })
}

fn parse_node<'a>(toks: &mut impl Iterator<Item = &'a str>, line: usize) -> Result<NodeDecl, FormatError> {
    let id = toks.next().ok_or_else(|| syntax(line, "missing node id"))?.to_string();
    expect(toks.next(), "seq", line)?;
    let m = parse_count(toks.next(), line, "normal count")?;
    let n = parse_count(toks.next(), line, "safe count")?;
    let succedent = match toks.next() {
        Some("N") => Succedent::N,
        Some("boxN") => Succedent::BoxN,
        _ => return Err(syntax(line, "succedent must be N or boxN")),
    };
    expect(toks.next(), "rule", line)?;
    let tag = toks.next().ok_or_else(|| syntax(line, "missing rule tag"))?;
    let kind = RuleKind::from_tag(tag).ok_or_else(|| FormatError::UnknownRule { line, tag: tag.to_string() })?;
    let rule = match kind {
        RuleKind::EN => Rule::EN(parse_count(toks.next(), line, "exchange index")?),
        RuleKind::EBox => Rule::EBox(parse_count(toks.next(), line, "exchange index")?),
        RuleKind::Oracle => Rule::Oracle(toks.next().ok_or_else(|| syntax(line, "missing oracle name"))?.to_string()),
        RuleKind::Id => Rule::Id,
        RuleKind::Zero => Rule::Zero,
        RuleKind::One => Rule::One,
        RuleKind::S0 => Rule::S0,
        RuleKind::S1 => Rule::S1,
        RuleKind::CutN => Rule::CutN,
        RuleKind::CutBox => Rule::CutBox,
        RuleKind::WN => Rule::WN,
        RuleKind::WBox => Rule::WBox,
        RuleKind::BoxL => Rule::BoxL,
        RuleKind::BoxR => Rule::BoxR,
        RuleKind::Srec => Rule::Srec,
        RuleKind::CondN => Rule::CondN,
        RuleKind::CondBox => Rule::CondBox,
        RuleKind::PcondN => Rule::PcondN,
        RuleKind::PcondBox => Rule::PcondBox,
        RuleKind::Dis => Rule::Dis,
    };
    let mut premises = Vec::new();
    match toks.next() {
        None => {}
        Some("prem") => premises.extend(toks.map(str::to_string)),
        Some(other) => return Err(syntax(line, format!("expected `prem`, found `{other}`"))),
    }
    Ok(NodeDecl { id, sequent: Sequent::new(m, n, succedent), rule, premises })
}

fn parse_oracle<'a>(toks: &mut impl Iterator<Item = &'a str>, line: usize) -> Result<OracleDecl, FormatError> {
    let name = toks.next().ok_or_else(|| syntax(line, "missing oracle name"))?.to_string();
    expect(toks.next(), "normal", line)?;
    let normals = parse_count(toks.next(), line, "normal arity")?;
    expect(toks.next(), "safe", line)?;
    let safes = parse_count(toks.next(), line, "safe arity")?;
    expect(toks.next(), "kind", line)?;
    let kind = match toks.next() {
        Some("length-relation") => OracleKind::LengthRelation,
        Some("host") => OracleKind::Host,
        _ => return Err(syntax(line, "oracle kind must be length-relation or host")),
    };
    expect(toks.next(), "source", line)?;
    let source = OracleSource::parse(toks.next().ok_or_else(|| syntax(line, "missing oracle source"))?);
    Ok(OracleDecl { name, normals, safes, kind, source })
}

pub fn serialize_proof(doc: &ProofDocument) -> String {
    let mut out = format!("proof {}\n", doc.name);
    for o in &doc.oracles {
        let kind = match o.kind {
            OracleKind::LengthRelation => "length-relation",
            OracleKind::Host => "host",
        };
        let _ = writeln!(out, "oracle {} normal {} safe {} kind {kind} source {}", o.name, o.normals, o.safes, o.source);
    }
    for n in &doc.nodes {
        let _ = write!(out, "node {} seq {} rule {}", n.id, n.sequent, n.rule);
        if !n.premises.is_empty() {
            let _ = write!(out, " prem {}", n.premises.join(" "));
        }
        out.push('\n');
    }
    out
}

/// Parses a proof file straight into a graph.
pub fn parse_graph(text: &str) -> Result<ProofGraph, FormatError> {
    Ok(parse_proof(text)?.to_graph()?)
}

pub fn serialize_graph(g: &ProofGraph) -> String {
    serialize_proof(&ProofDocument::from_graph(g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinAdvice {
    /// Sum of argument lengths mod 2.
    ParityLen,
    /// A fixed table with no pattern to exploit; stands in for undecidable advice.
    HaltingStub,
    Const(bool),
}

const HALTING_STUB_BITS: u64 = 0x9E37_79B9_7F4A_7C15;

/// A length-determined Boolean advice stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdviceSource {
    Table { entries: BTreeMap<Vec<usize>, bool>, default: bool },
    Builtin(BuiltinAdvice),
}

impl AdviceSource {
    pub fn bit(&self, lengths: &[usize]) -> bool {
        match self {
            AdviceSource::Table { entries, default } => entries.get(lengths).copied().unwrap_or(*default),
            AdviceSource::Builtin(BuiltinAdvice::ParityLen) => lengths.iter().sum::<usize>() % 2 == 1,
            AdviceSource::Builtin(BuiltinAdvice::HaltingStub) => {
                let k: usize = lengths.iter().sum();
                k < 64 && (HALTING_STUB_BITS >> k) & 1 == 1
            }
            AdviceSource::Builtin(BuiltinAdvice::Const(b)) => *b,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, AdviceError> {
        let b = match name {
            "parity-len" => BuiltinAdvice::ParityLen,
            "halting-stub" => BuiltinAdvice::HaltingStub,
            "zero" => BuiltinAdvice::Const(false),
            "one" => BuiltinAdvice::Const(true),
            _ => return Err(AdviceError::UnknownBuiltin(name.to_string())),
        };
        Ok(AdviceSource::Builtin(b))
    }
}

pub fn parse_advice(text: &str) -> Result<AdviceSource, AdviceError> {
    let mut entries = BTreeMap::new();
    let mut default = None;
    let bad = |line, msg: &str| AdviceError::Format { line, msg: msg.to_string() };
    let parse_bit = |tok: &str, line| match tok {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(bad(line, "bit must be 0 or 1")),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("default") {
            let bit = parse_bit(rest.trim(), line)?;
            if default.replace(bit).is_some() {
                return Err(bad(line, "second default line"));
            }
            continue;
        }
        let (lhs, rhs) = content.split_once("->").ok_or_else(|| bad(line, "expected `<lengths> -> <bit>`"))?;
        let lengths = lhs
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad(line, "lengths must be decimal naturals")))
            .collect::<Result<Vec<_>, _>>()?;
        let bit = parse_bit(rhs.trim(), line)?;
        if let Some(first) = entries.keys().next() {
            let first: &Vec<usize> = first;
            if first.len() != lengths.len() {
                return Err(bad(line, "length tuples must share one arity"));
            }
        }
        entries.insert(lengths, bit);
    }
    Ok(AdviceSource::Table { entries, default: default.unwrap_or(false) })
}

/// `builtin:<name>` or a path to an advice file.
pub fn load_advice(spec: &str) -> Result<AdviceSource, AdviceError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return AdviceSource::builtin(name);
    }
    let text = std::fs::read_to_string(Path::new(spec))
        .map_err(|e| AdviceError::Io { path: spec.to_string(), msg: e.to_string() })?;
    parse_advice(&text)
}

/// Parses a `.circ` netlist. Inputs are referenced as `x0 … x{n-1}`; gates by their declared id.
pub fn parse_netlist(text: &str) -> Result<Circuit, FormatError> {
    let mut inputs = None;
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut gates = Vec::new();
    let mut output = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks.as_slice() {
            ["inputs", n] => {
                let n: usize = n.parse().map_err(|_| syntax(line, "input count must be a natural"))?;
                for k in 0..n {
                    names.insert(format!("x{k}"), k);
                }
                inputs = Some(n);
            }
            ["gate", id, kind, ops @ ..] => {
                let n = inputs.ok_or_else(|| syntax(line, "`inputs` must come first"))?;
                let kind = match *kind {
                    "and" => GateKind::And,
                    "or" => GateKind::Or,
                    "not" => GateKind::Not,
                    "c0" => GateKind::Const0,
                    "c1" => GateKind::Const1,
                    other => return Err(syntax(line, format!("unknown gate kind {other}"))),
                };
                if ops.len() != kind.fan_in() {
                    return Err(syntax(line, "wrong operand count"));
                }
                let operands = ops
                    .iter()
                    .map(|o| names.get(*o).copied().ok_or_else(|| FormatError::DanglingId { line, id: o.to_string() }))
                    .collect::<Result<Vec<_>, _>>()?;
                if names.insert(id.to_string(), n + gates.len()).is_some() {
                    return Err(syntax(line, format!("duplicate id {id}")));
                }
                gates.push(Gate { kind, operands });
            }
            ["output", id] => {
                output = Some(names.get(*id).copied().ok_or_else(|| FormatError::DanglingId { line, id: id.to_string() })?);
            }
            _ => return Err(syntax(line, "expected `inputs`, `gate` or `output`")),
        }
    }
    let inputs = inputs.ok_or_else(|| syntax(1, "missing `inputs` line"))?;
    let output = output.ok_or_else(|| syntax(1, "missing `output` line"))?;
    Ok(Circuit { inputs, gates, output })
}

pub fn serialize_netlist(c: &Circuit) -> String {
    let name = |ix: usize| if ix < c.inputs { format!("x{ix}") } else { format!("g{}", ix - c.inputs) };
    let mut out = format!("inputs {}\n", c.inputs);
    for (k, g) in c.gates.iter().enumerate() {
        let kind = match g.kind {
            GateKind::And => "and",
            GateKind::Or => "or",
            GateKind::Not => "not",
            GateKind::Const0 => "c0",
            GateKind::Const1 => "c1",
        };
        let _ = write!(out, "gate g{k} {kind}");
        for &o in &g.operands {
            let _ = write!(out, " {}", name(o));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "output {}", name(c.output));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# a comment
proof loop
node top seq 1 0 N rule dis prem c
node c seq 1 0 N rule cond_box prem z a b
node z seq 0 0 N rule zero
node a seq 1 0 N rule s0 prem top
node b seq 1 0 N rule s1 prem top   # trailing comment
";

    #[test]
    fn parses_and_round_trips() {
        let doc = parse_proof(SMALL).unwrap();
        assert_eq!(doc.nodes.len(), 5);
        let text = serialize_proof(&doc);
        assert!(!text.contains('#'));
        assert_eq!(parse_proof(&text).unwrap(), doc);
        let g = doc.to_graph().unwrap();
        assert_eq!(g.back_edges().count(), 2);
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        assert!(matches!(parse_proof(""), Err(FormatError::Syntax { .. })));
    }

    #[test]
    fn dangling_premise() {
        let text = "proof x\nnode a seq 0 0 N rule s0 prem nowhere\n";
        assert!(matches!(parse_proof(text), Err(FormatError::DanglingId { .. })));
    }

    #[test]
    fn unknown_rule() {
        let text = "proof x\nnode a seq 0 0 N rule frobnicate\n";
        assert!(matches!(parse_proof(text), Err(FormatError::UnknownRule { .. })));
    }

    #[test]
    fn advice_table() {
        let a = parse_advice("0 -> 1\n1 -> 0\ndefault 0").unwrap();
        assert!(a.bit(&[0]));
        assert!(!a.bit(&[1]));
        assert!(!a.bit(&[7]));
        assert!(matches!(parse_advice("x -> 2"), Err(AdviceError::Format { .. })));
    }

    #[test]
    fn builtins() {
        assert!(load_advice("builtin:parity-len").unwrap().bit(&[5]));
        assert!(matches!(load_advice("builtin:nope"), Err(AdviceError::UnknownBuiltin(_))));
    }

    #[test]
    fn netlist_round_trip() {
        let text = "inputs 2\ngate a and x0 x1\ngate b not a\noutput b\n";
        let c = parse_netlist(text).unwrap();
        assert_eq!(c.gates.len(), 2);
        assert_eq!(parse_netlist(&serialize_netlist(&c)).unwrap(), c);
    }
}
