//! Sequents, rule tags, proof graphs, structural validation and immediate ancestry.
//!
//! A [`ProofGraph`] is a finite tree of rule nodes plus back-references. Node 0 is the root and
//! nodes are stored in declaration order: a premise pointing at a node declared no later than
//! its parent is a back-reference (a bud edge) and must target a `dis` node that is a strict
//! tree ancestor of the parent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub type NodeIx = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Succedent {
    N,
    BoxN,
}

/// Zone counts of a sequent `□N^normals, N^safes ⇒ succedent`; modal positions always come first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sequent {
    pub normals: usize,
    pub safes: usize,
    pub succedent: Succedent,
}

impl Sequent {
    pub const fn new(normals: usize, safes: usize, succedent: Succedent) -> Self {
        Sequent { normals, safes, succedent }
    }

    pub const fn n(normals: usize, safes: usize) -> Self {
        Sequent::new(normals, safes, Succedent::N)
    }

    pub const fn boxed(normals: usize, safes: usize) -> Self {
        Sequent::new(normals, safes, Succedent::BoxN)
    }

    fn with(self, normals: usize, safes: usize) -> Self {
        Sequent { normals, safes, ..self }
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let succ = match self.succedent {
            Succedent::N => "N",
            Succedent::BoxN => "boxN",
        };
        write!(f, "{} {} {}", self.normals, self.safes, succ)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Id,
    Zero,
    One,
    S0,
    S1,
    CutN,
    CutBox,
    WN,
    WBox,
    /// Swaps safe positions `i` and `i + 1`.
    EN(usize),
    /// Swaps normal positions `i` and `i + 1`.
    EBox(usize),
    BoxL,
    BoxR,
    Srec,
    CondN,
    CondBox,
    PcondN,
    PcondBox,
    Dis,
    Oracle(String),
}

/// Field-free view of [`Rule`], used for rule sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    Id,
    Zero,
    One,
    S0,
    S1,
    CutN,
    CutBox,
    WN,
    WBox,
    EN,
    EBox,
    BoxL,
    BoxR,
    Srec,
    CondN,
    CondBox,
    PcondN,
    PcondBox,
    Dis,
    Oracle,
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match self {
            Rule::Id => RuleKind::Id,
            Rule::Zero => RuleKind::Zero,
            Rule::One => RuleKind::One,
            Rule::S0 => RuleKind::S0,
            Rule::S1 => RuleKind::S1,
            Rule::CutN => RuleKind::CutN,
            Rule::CutBox => RuleKind::CutBox,
            Rule::WN => RuleKind::WN,
            Rule::WBox => RuleKind::WBox,
            Rule::EN(_) => RuleKind::EN,
            Rule::EBox(_) => RuleKind::EBox,
            Rule::BoxL => RuleKind::BoxL,
            Rule::BoxR => RuleKind::BoxR,
            Rule::Srec => RuleKind::Srec,
            Rule::CondN => RuleKind::CondN,
            Rule::CondBox => RuleKind::CondBox,
            Rule::PcondN => RuleKind::PcondN,
            Rule::PcondBox => RuleKind::PcondBox,
            Rule::Dis => RuleKind::Dis,
            Rule::Oracle(_) => RuleKind::Oracle,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Rule::Id | Rule::Zero | Rule::One | Rule::Oracle(_) => 0,
            Rule::CutN | Rule::CutBox | Rule::PcondN | Rule::PcondBox => 2,
            Rule::Srec | Rule::CondN | Rule::CondBox => 3,
            _ => 1,
        }
    }

    /// The textual tag used by the proof file format, without index or oracle name.
    pub fn tag(&self) -> &'static str {
        self.kind().tag()
    }

    /// Progress points: a conditional on a normal argument.
    pub fn is_box_conditional(&self) -> bool {
        matches!(self, Rule::CondBox | Rule::PcondBox)
    }
}

impl RuleKind {
    pub const ALL: [RuleKind; 20] = [
        RuleKind::Id,
        RuleKind::Zero,
        RuleKind::One,
        RuleKind::S0,
        RuleKind::S1,
        RuleKind::CutN,
        RuleKind::CutBox,
        RuleKind::WN,
        RuleKind::WBox,
        RuleKind::EN,
        RuleKind::EBox,
        RuleKind::BoxL,
        RuleKind::BoxR,
        RuleKind::Srec,
        RuleKind::CondN,
        RuleKind::CondBox,
        RuleKind::PcondN,
        RuleKind::PcondBox,
        RuleKind::Dis,
        RuleKind::Oracle,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RuleKind::Id => "id",
            RuleKind::Zero => "zero",
            RuleKind::One => "one",
            RuleKind::S0 => "s0",
            RuleKind::S1 => "s1",
            RuleKind::CutN => "cut_n",
            RuleKind::CutBox => "cut_box",
            RuleKind::WN => "w_n",
            RuleKind::WBox => "w_box",
            RuleKind::EN => "e_n",
            RuleKind::EBox => "e_box",
            RuleKind::BoxL => "box_l",
            RuleKind::BoxR => "box_r",
            RuleKind::Srec => "srec",
            RuleKind::CondN => "cond_n",
            RuleKind::CondBox => "cond_box",
            RuleKind::PcondN => "pcond_n",
            RuleKind::PcondBox => "pcond_box",
            RuleKind::Dis => "dis",
            RuleKind::Oracle => "oracle",
        }
    }

    pub fn from_tag(tag: &str) -> Option<RuleKind> {
        RuleKind::ALL.iter().copied().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EN(i) | Rule::EBox(i) => write!(f, "{} {}", self.tag(), i),
            Rule::Oracle(name) => write!(f, "oracle {name}"),
            _ => f.write_str(self.tag()),
        }
    }
}

/// A set of rule kinds, as used by regularity and freeness conditions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet(BTreeSet<RuleKind>);

impl RuleSet {
    pub fn new(kinds: impl IntoIterator<Item = RuleKind>) -> Self {
        RuleSet(kinds.into_iter().collect())
    }

    pub fn empty() -> Self {
        RuleSet::default()
    }

    /// `{cond_box, cond_n, s0, s1, id}`: the rules whose occurrences must be regular in nuB.
    pub fn nub_regularity() -> Self {
        RuleSet::new([RuleKind::CondBox, RuleKind::CondN, RuleKind::S0, RuleKind::S1, RuleKind::Id])
    }

    /// `{s0, s1, id}`: absence forces outputs to be 0 or 1 on progressing graphs.
    pub fn output_growth() -> Self {
        RuleSet::new([RuleKind::S0, RuleKind::S1, RuleKind::Id])
    }

    /// `{cond_box, cond_n, id}`: absence forces outputs to depend only on argument lengths.
    pub fn value_inspection() -> Self {
        RuleSet::new([RuleKind::CondBox, RuleKind::CondN, RuleKind::Id])
    }

    pub fn contains(&self, kind: RuleKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn iter(&self) -> impl Iterator<Item = RuleKind> + '_ {
        self.0.iter().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OracleKind {
    /// A length-determined relation: values in {0,1} depending only on argument lengths.
    LengthRelation,
    /// An arbitrary two-sorted function supplied by the host.
    Host,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OracleSource {
    Builtin(String),
    Path(String),
    /// A subgraph excised by factoring, named after the emitted proof document.
    Subgraph(String),
}

impl fmt::Display for OracleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSource::Builtin(name) => write!(f, "builtin:{name}"),
            OracleSource::Path(path) => f.write_str(path),
            OracleSource::Subgraph(name) => write!(f, "subgraph:{name}"),
        }
    }
}

impl OracleSource {
    pub fn parse(text: &str) -> Self {
        if let Some(name) = text.strip_prefix("builtin:") {
            OracleSource::Builtin(name.to_string())
        } else if let Some(name) = text.strip_prefix("subgraph:") {
            OracleSource::Subgraph(name.to_string())
        } else {
            OracleSource::Path(text.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OracleDecl {
    pub name: String,
    pub normals: usize,
    pub safes: usize,
    pub kind: OracleKind,
    pub source: OracleSource,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: String,
    pub sequent: Sequent,
    pub rule: Rule,
    pub premises: Vec<NodeIx>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("rule {rule} is incompatible with conclusion {sequent}")]
    IncompatibleSequent { rule: String, sequent: Sequent },
    #[error("duplicate node id {0}")]
    DuplicateId(String),
    #[error("node {node} names premise index {premise} out of range")]
    PremiseOutOfRange { node: String, premise: usize },
    #[error("empty proof graph")]
    Empty,
    #[error("graph construction: {0}")]
    Build(String),
}

/// Premise sequents of `rule` applied with conclusion `conclusion`, in premise order.
pub fn rule_signature(rule: &Rule, conclusion: Sequent) -> Result<Vec<Sequent>, KernelError> {
    let Sequent { normals: m, safes: n, succedent } = conclusion;
    let is_n = succedent == Succedent::N;
    let bad = || KernelError::IncompatibleSequent { rule: rule.to_string(), sequent: conclusion };
    let sig = match rule {
        Rule::Id if (m, n, is_n) == (0, 1, true) => vec![],
        Rule::Zero | Rule::One if (m, n, is_n) == (0, 0, true) => vec![],
        Rule::Oracle(_) if is_n => vec![],
        Rule::S0 | Rule::S1 | Rule::Dis => vec![conclusion],
        Rule::CutN => vec![Sequent::n(m, n), conclusion.with(m, n + 1)],
        Rule::CutBox => vec![Sequent::boxed(m, n), conclusion.with(m + 1, n)],
        Rule::WN if n >= 1 => vec![conclusion.with(m, n - 1)],
        Rule::WBox if m >= 1 => vec![conclusion.with(m - 1, n)],
        Rule::EN(i) if i + 1 < n => vec![conclusion],
        Rule::EBox(i) if i + 1 < m => vec![conclusion],
        Rule::BoxL if m >= 1 => vec![conclusion.with(m - 1, n + 1)],
        Rule::BoxR if n == 0 && !is_n => vec![Sequent::n(m, 0)],
        Rule::Srec if m >= 1 && is_n => {
            vec![Sequent::n(m - 1, n), Sequent::n(m, n + 1), Sequent::n(m, n + 1)]
        }
        Rule::CondN if n >= 1 && is_n => vec![Sequent::n(m, n - 1), conclusion, conclusion],
        Rule::CondBox if m >= 1 && is_n => vec![Sequent::n(m - 1, n), conclusion, conclusion],
        Rule::PcondN if n >= 1 && is_n => vec![Sequent::n(m, n - 1), conclusion],
        Rule::PcondBox if m >= 1 && is_n => vec![Sequent::n(m - 1, n), conclusion],
        _ => return Err(bad()),
    };
    Ok(sig)
}

/// A formula position in a sequent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pos {
    Normal(usize),
    Safe(usize),
    Succedent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flag {
    Equal,
    StrictlySmaller,
}

/// Immediate ancestry from a conclusion to one premise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AncestryEdge {
    pub parent: NodeIx,
    pub premise: usize,
    /// `(conclusion position, premise position, flag)`.
    pub map: Vec<(Pos, Pos, Flag)>,
}

/// Position map from a conclusion of `rule` to its premise number `premise`.
///
/// Invariant: `Flag::StrictlySmaller` only on the principal normal of `cond_box`/`pcond_box`
/// toward premises 1 and 2.
pub fn premise_map(rule: &Rule, conclusion: Sequent, premise: usize) -> Vec<(Pos, Pos, Flag)> {
    use Flag::Equal;
    let Sequent { normals: m, safes: n, .. } = conclusion;
    let mut map = Vec::new();
    let normals = |map: &mut Vec<_>, f: &dyn Fn(usize) -> Option<Pos>| {
        for i in 0..m {
            if let Some(p) = f(i) {
                map.push((Pos::Normal(i), p, Equal));
            }
        }
    };
    let safes = |map: &mut Vec<_>, f: &dyn Fn(usize) -> Option<Pos>| {
        for i in 0..n {
            if let Some(p) = f(i) {
                map.push((Pos::Safe(i), p, Equal));
            }
        }
    };
    let same_n = |i| Some(Pos::Normal(i));
    let same_s = |i| Some(Pos::Safe(i));
    let succ = |map: &mut Vec<_>| map.push((Pos::Succedent, Pos::Succedent, Equal));
    match (rule, premise) {
        (Rule::CutN, 0) | (Rule::CutBox, 0) | (Rule::S0, 0) | (Rule::S1, 0) | (Rule::BoxR, 0) => {
            normals(&mut map, &same_n);
            safes(&mut map, &same_s);
        }
        (Rule::CutN, 1) | (Rule::Dis, 0) => {
            normals(&mut map, &same_n);
            safes(&mut map, &same_s);
            succ(&mut map);
        }
        (Rule::CutBox, 1) => {
            normals(&mut map, &|i| Some(Pos::Normal(i + 1)));
            safes(&mut map, &same_s);
            succ(&mut map);
        }
        (Rule::WN, 0) => {
            normals(&mut map, &same_n);
            safes(&mut map, &|i| (i + 1 < n).then_some(Pos::Safe(i)));
            succ(&mut map);
        }
        (Rule::WBox, 0) => {
            normals(&mut map, &|i| i.checked_sub(1).map(Pos::Normal));
            safes(&mut map, &same_s);
            succ(&mut map);
        }
        (Rule::EN(k), 0) => {
            let k = *k;
            normals(&mut map, &same_n);
            safes(&mut map, &|i| Some(Pos::Safe(swap(i, k))));
            succ(&mut map);
        }
        (Rule::EBox(k), 0) => {
            let k = *k;
            normals(&mut map, &|i| Some(Pos::Normal(swap(i, k))));
            safes(&mut map, &same_s);
            succ(&mut map);
        }
        (Rule::BoxL, 0) => {
            normals(&mut map, &|i| Some(if i == 0 { Pos::Safe(n) } else { Pos::Normal(i - 1) }));
            safes(&mut map, &same_s);
            succ(&mut map);
        }
        (Rule::CondBox | Rule::PcondBox | Rule::Srec, 0) => {
            normals(&mut map, &|i| i.checked_sub(1).map(Pos::Normal));
            safes(&mut map, &same_s);
        }
        (Rule::CondBox | Rule::PcondBox, _) => {
            normals(&mut map, &same_n);
            safes(&mut map, &same_s);
            if let Some(first) = map.first_mut() {
                first.2 = Flag::StrictlySmaller;
            }
        }
        (Rule::Srec, _) => {
            normals(&mut map, &same_n);
            safes(&mut map, &same_s);
        }
        (Rule::CondN | Rule::PcondN, 0) => {
            normals(&mut map, &same_n);
            safes(&mut map, &|i| (i + 1 < n).then_some(Pos::Safe(i)));
        }
        (Rule::CondN | Rule::PcondN, _) => {
            normals(&mut map, &same_n);
            safes(&mut map, &same_s);
        }
        _ => {}
    }
    map
}

fn swap(i: usize, k: usize) -> usize {
    if i == k {
        k + 1
    } else if i == k + 1 {
        k
    } else {
        i
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofGraph {
    name: String,
    nodes: Vec<Node>,
    index: HashMap<String, NodeIx>,
    oracles: BTreeMap<String, OracleDecl>,
    /// First forward parent of each node; `None` for the root and for unreachable nodes.
    parent: Vec<Option<NodeIx>>,
}

impl ProofGraph {
    /// Assembles a graph from nodes in declaration order; node 0 is the root.
    pub fn from_parts(
        name: impl Into<String>,
        nodes: Vec<Node>,
        oracles: impl IntoIterator<Item = OracleDecl>,
    ) -> Result<Self, KernelError> {
        if nodes.is_empty() {
            return Err(KernelError::Empty);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (ix, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), ix).is_some() {
                return Err(KernelError::DuplicateId(node.id.clone()));
            }
        }
        let mut parent = vec![None; nodes.len()];
        for (u, node) in nodes.iter().enumerate() {
            for &v in &node.premises {
                if v >= nodes.len() {
                    return Err(KernelError::PremiseOutOfRange { node: node.id.clone(), premise: v });
                }
                if v > u && parent[v].is_none() {
                    parent[v] = Some(u);
                }
            }
        }
        let oracles = oracles.into_iter().map(|d| (d.name.clone(), d)).collect();
        Ok(ProofGraph { name: name.into(), nodes, index, oracles, parent })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> NodeIx {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lookup(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn oracles(&self) -> &BTreeMap<String, OracleDecl> {
        &self.oracles
    }

    pub fn oracle(&self, name: &str) -> Option<&OracleDecl> {
        self.oracles.get(name)
    }

    /// Whether premise slot `j` of node `u` is a back-reference.
    pub fn is_back(&self, u: NodeIx, j: usize) -> bool {
        self.nodes[u].premises[j] <= u
    }

    pub fn parent(&self, v: NodeIx) -> Option<NodeIx> {
        self.parent[v]
    }

    /// All edges `(source, premise slot, target)`, back-references included.
    pub fn edges(&self) -> impl Iterator<Item = (NodeIx, usize, NodeIx)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .flat_map(|(u, n)| n.premises.iter().enumerate().map(move |(j, &v)| (u, j, v)))
    }

    /// Back-reference edges `(bud source, premise slot, companion)`.
    pub fn back_edges(&self) -> impl Iterator<Item = (NodeIx, usize, NodeIx)> + '_ {
        self.edges().filter(|&(u, _, v)| v <= u)
    }

    /// `a` is a (non-strict) tree ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeIx, b: NodeIx) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.parent[c];
        }
        false
    }

    /// Tree path from `top` down to `bottom`, both included; `None` if `top` is not an ancestor.
    pub fn tree_path(&self, top: NodeIx, bottom: NodeIx) -> Option<Vec<NodeIx>> {
        let mut path = vec![bottom];
        let mut cur = bottom;
        while cur != top {
            cur = self.parent[cur]?;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// Nodes reachable from `start` through forward edges, in preorder.
    pub fn forward_subtree(&self, start: NodeIx) -> Vec<NodeIx> {
        let mut out = Vec::new();
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            out.push(u);
            for (j, &v) in self.nodes[u].premises.iter().enumerate().rev() {
                if !self.is_back(u, j) {
                    stack.push(v);
                }
            }
        }
        out
    }

    /// Nodes reachable from `start` along any edges.
    pub fn reachable(&self, start: NodeIx) -> BTreeSet<NodeIx> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            if seen.insert(u) {
                stack.extend(self.nodes[u].premises.iter().copied());
            }
        }
        seen
    }

    pub fn ancestry_edges(&self, u: NodeIx) -> Vec<AncestryEdge> {
        let node = &self.nodes[u];
        (0..node.premises.len())
            .map(|j| AncestryEdge { parent: u, premise: j, map: premise_map(&node.rule, node.sequent, j) })
            .collect()
    }
}

/// Free-function form of [`ProofGraph::ancestry_edges`].
pub fn ancestry_edges(g: &ProofGraph, node: NodeIx) -> Vec<AncestryEdge> {
    g.ancestry_edges(node)
}

/// Premise reference used while building graphs programmatically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prem {
    Fwd(usize),
    Back(usize),
}

/// Incremental construction of proof graphs whose final node order is a preorder of the tree.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    name: String,
    nodes: Vec<(String, Sequent, Rule, Vec<Prem>)>,
    oracles: Vec<OracleDecl>,
    counter: usize,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        GraphBuilder { name: name.into(), ..Default::default() }
    }

    /// Adds a node and returns its handle. Premises may be filled in later with [`Self::set_premises`].
    pub fn add(&mut self, id: impl Into<String>, sequent: Sequent, rule: Rule, premises: Vec<Prem>) -> usize {
        self.nodes.push((id.into(), sequent, rule, premises));
        self.nodes.len() - 1
    }

    /// Adds a node with a generated id `<prefix><counter>`.
    pub fn add_auto(&mut self, prefix: &str, sequent: Sequent, rule: Rule, premises: Vec<Prem>) -> usize {
        let id = format!("{prefix}{}", self.counter);
        self.counter += 1;
        self.add(id, sequent, rule, premises)
    }

    pub fn set_premises(&mut self, handle: usize, premises: Vec<Prem>) {
        self.nodes[handle].3 = premises;
    }

    pub fn sequent(&self, handle: usize) -> Sequent {
        self.nodes[handle].1
    }

    pub fn declare_oracle(&mut self, decl: OracleDecl) {
        if !self.oracles.iter().any(|d| d.name == decl.name) {
            self.oracles.push(decl);
        }
    }

    /// Renumbers reachable nodes in preorder from `root` and assembles the graph.
    pub fn finish(self, root: usize) -> Result<ProofGraph, KernelError> {
        let mut order = Vec::new();
        let mut new_ix = vec![usize::MAX; self.nodes.len()];
        let mut on_path = vec![false; self.nodes.len()];
        // Iterative DFS with explicit exit markers so `on_path` tracks tree ancestors.
        let mut stack = vec![(root, false)];
        while let Some((h, exiting)) = stack.pop() {
            if exiting {
                on_path[h] = false;
                continue;
            }
            if new_ix[h] != usize::MAX {
                return Err(KernelError::Build(format!("node {} is shared", self.nodes[h].0)));
            }
            new_ix[h] = order.len();
            order.push(h);
            on_path[h] = true;
            stack.push((h, true));
            for p in self.nodes[h].3.iter().rev() {
                match *p {
                    Prem::Fwd(c) => stack.push((c, false)),
                    Prem::Back(c) => {
                        if !on_path[c] && new_ix[c] == usize::MAX {
                            return Err(KernelError::Build(format!(
                                "back-reference from {} to {} which is not an ancestor",
                                self.nodes[h].0, self.nodes[c].0
                            )));
                        }
                    }
                }
            }
        }
        let nodes = order
            .iter()
            .map(|&h| {
                let (id, seq, rule, prems) = &self.nodes[h];
                let premises = prems
                    .iter()
                    .map(|p| match *p {
                        Prem::Fwd(c) | Prem::Back(c) => new_ix[c],
                    })
                    .collect();
                Node { id: id.clone(), sequent: *seq, rule: rule.clone(), premises }
            })
            .collect();
        ProofGraph::from_parts(self.name, nodes, self.oracles)
    }
}

/// Copies the subgraph of `g` rooted at `node` into `b`, unfolding back-references whose
/// targets lie outside the copied region. Returns the handle of the copied root.
pub fn copy_rooted(g: &ProofGraph, node: NodeIx, b: &mut GraphBuilder, prefix: &str) -> usize {
    fn go(
        g: &ProofGraph,
        u: NodeIx,
        b: &mut GraphBuilder,
        prefix: &str,
        active: &mut Vec<(NodeIx, usize)>,
    ) -> usize {
        stacker::maybe_grow(64 * 1024, 4 * 1024 * 1024, || {
            let n = g.node(u);
            let id = if active.iter().any(|&(a, _)| g.node(a).id == n.id) || b_contains(b, prefix, &n.id) {
                format!("{prefix}{}~{}", n.id, b.nodes.len())
            } else {
                format!("{prefix}{}", n.id)
            };
            let h = b.add(id, n.sequent, n.rule.clone(), vec![]);
            active.push((u, h));
            let mut prems = Vec::with_capacity(n.premises.len());
            for &v in &n.premises {
                if let Some(&(_, hv)) = active.iter().rev().find(|&&(a, _)| a == v) {
                    prems.push(Prem::Back(hv));
                } else {
                    prems.push(Prem::Fwd(go(g, v, b, prefix, active)));
                }
            }
            active.pop();
            b.set_premises(h, prems);
            h
        })
    }
    fn b_contains(b: &GraphBuilder, prefix: &str, id: &str) -> bool {
        let full = format!("{prefix}{id}");
        b.nodes.iter().any(|n| n.0 == full)
    }
    for decl in g.oracles.values() {
        b.declare_oracle(decl.clone());
    }
    let mut active = Vec::new();
    go(g, node, b, prefix, &mut active)
}

/// The subgraph rooted at `node` as a standalone graph (see [`copy_rooted`]).
pub fn extract_rooted(g: &ProofGraph, node: NodeIx) -> ProofGraph {
    let mut b = GraphBuilder::new(format!("{}@{}", g.name, g.node(node).id));
    let root = copy_rooted(g, node, &mut b, "");
    b.finish(root).expect("copy of a tree-shaped graph is tree-shaped")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagnosticKind {
    IncompatibleSequent,
    Arity,
    PremiseMismatch { premise: usize, expected: Sequent, found: Sequent },
    /// A cycle closes on a node that is not `dis`.
    MissingDis { target: String },
    /// A back-reference targets a node that is not a strict tree ancestor.
    BudNotAbove { target: String },
    SharedNode,
    Unreachable,
    UndeclaredOracle(String),
    OracleArity(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub node: String,
    pub kind: DiagnosticKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DiagnosticKind::IncompatibleSequent => write!(f, "{}: rule incompatible with sequent", self.node),
            DiagnosticKind::Arity => write!(f, "{}: arity violation", self.node),
            DiagnosticKind::PremiseMismatch { premise, expected, found } => {
                write!(f, "{}: premise {premise} has sequent {found}, rule requires {expected}", self.node)
            }
            DiagnosticKind::MissingDis { target } => {
                write!(f, "{}: cycle through {target} has no dis node", self.node)
            }
            DiagnosticKind::BudNotAbove { target } => {
                write!(f, "{}: back-reference to {target}, which is not strictly below it", self.node)
            }
            DiagnosticKind::SharedNode => write!(f, "{}: node has several forward parents", self.node),
            DiagnosticKind::Unreachable => write!(f, "{}: unreachable from the root", self.node),
            DiagnosticKind::UndeclaredOracle(o) => write!(f, "{}: oracle {o} is not declared", self.node),
            DiagnosticKind::OracleArity(o) => write!(f, "{}: oracle {o} declared with another arity", self.node),
        }
    }
}

/// Structural diagnostics; empty iff the graph satisfies every proof-graph invariant.
pub fn validate_graph(g: &ProofGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let diag = |u: NodeIx, kind| Diagnostic { node: g.node(u).id.clone(), kind };
    let mut forward_parents = vec![0usize; g.len()];
    for (u, node) in g.nodes().iter().enumerate() {
        match rule_signature(&node.rule, node.sequent) {
            Err(_) => out.push(diag(u, DiagnosticKind::IncompatibleSequent)),
            Ok(sig) if sig.len() != node.premises.len() => out.push(diag(u, DiagnosticKind::Arity)),
            Ok(sig) => {
                for (j, (&v, expected)) in node.premises.iter().zip(sig).enumerate() {
                    let found = g.node(v).sequent;
                    if found != expected {
                        out.push(diag(u, DiagnosticKind::PremiseMismatch { premise: j, expected, found }));
                    }
                }
            }
        }
        for (j, &v) in node.premises.iter().enumerate() {
            if !g.is_back(u, j) {
                forward_parents[v] += 1;
                continue;
            }
            let target = g.node(v).id.clone();
            let above = v != u && g.is_ancestor(v, u);
            if g.node(v).rule != Rule::Dis && above {
                out.push(diag(u, DiagnosticKind::MissingDis { target }));
            } else if !above {
                out.push(diag(u, DiagnosticKind::BudNotAbove { target }));
            }
        }
        if let Rule::Oracle(name) = &node.rule {
            match g.oracle(name) {
                None => out.push(diag(u, DiagnosticKind::UndeclaredOracle(name.clone()))),
                Some(d) if (d.normals, d.safes) != (node.sequent.normals, node.sequent.safes) => {
                    out.push(diag(u, DiagnosticKind::OracleArity(name.clone())))
                }
                Some(_) => {}
            }
        }
    }
    for (v, &count) in forward_parents.iter().enumerate() {
        if count > 1 {
            out.push(diag(v, DiagnosticKind::SharedNode));
        } else if count == 0 && v != g.root() {
            out.push(diag(v, DiagnosticKind::Unreachable));
        }
    }
    out
}

/// Depth-bounded prefix of the coderivation denoted by a graph node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unfolding {
    /// Node id followed by the premise path taken from the unfolding root.
    pub id: String,
    pub node: NodeIx,
    pub rule: Rule,
    pub sequent: Sequent,
    pub children: Vec<Unfolding>,
}

impl Unfolding {
    pub fn height(&self) -> usize {
        self.children.iter().map(|c| c.height() + 1).max().unwrap_or(0)
    }

    pub fn truncate(&self, depth: usize) -> Unfolding {
        Unfolding {
            children: if depth == 0 { vec![] } else { self.children.iter().map(|c| c.truncate(depth - 1)).collect() },
            ..self.clone()
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Unfolding::size).sum::<usize>()
    }
}

pub fn unfold(g: &ProofGraph, node: NodeIx, depth: usize) -> Unfolding {
    fn go(g: &ProofGraph, u: NodeIx, depth: usize, path: String) -> Unfolding {
        let n = g.node(u);
        let children = if depth == 0 {
            vec![]
        } else {
            n.premises
                .iter()
                .enumerate()
                .map(|(j, &v)| go(g, v, depth - 1, format!("{path}.{j}")))
                .collect()
        };
        Unfolding { id: format!("{}@{}", n.id, path), node: u, rule: n.rule.clone(), sequent: n.sequent, children }
    }
    go(g, node, depth, String::from("r"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cond_box_signature_keeps_principal_in_later_premises() {
        let sig = rule_signature(&Rule::CondBox, Sequent::n(1, 0)).unwrap();
        assert_eq!(sig, vec![Sequent::n(0, 0), Sequent::n(1, 0), Sequent::n(1, 0)]);
    }

    #[test]
    fn dis_repeats_conclusion() {
        assert_eq!(rule_signature(&Rule::Dis, Sequent::n(2, 1)).unwrap(), vec![Sequent::n(2, 1)]);
    }

    #[test]
    fn box_r_needs_modal_context() {
        assert!(matches!(
            rule_signature(&Rule::BoxR, Sequent::boxed(2, 1)),
            Err(KernelError::IncompatibleSequent { .. })
        ));
        assert_eq!(rule_signature(&Rule::BoxR, Sequent::boxed(2, 0)).unwrap(), vec![Sequent::n(2, 0)]);
    }

    #[test]
    fn zone_shifts() {
        assert_eq!(
            rule_signature(&Rule::CutN, Sequent::n(1, 1)).unwrap(),
            vec![Sequent::n(1, 1), Sequent::n(1, 2)]
        );
        assert_eq!(
            rule_signature(&Rule::CutBox, Sequent::n(1, 1)).unwrap(),
            vec![Sequent::boxed(1, 1), Sequent::n(2, 1)]
        );
        assert_eq!(rule_signature(&Rule::BoxL, Sequent::n(1, 0)).unwrap(), vec![Sequent::n(0, 1)]);
        assert!(rule_signature(&Rule::EN(0), Sequent::n(0, 1)).is_err());
        assert!(rule_signature(&Rule::CondN, Sequent::boxed(0, 1)).is_err());
    }

    #[test]
    fn cond_box_progress_point_is_strict() {
        let map = premise_map(&Rule::CondBox, Sequent::n(1, 0), 1);
        assert_eq!(map, vec![(Pos::Normal(0), Pos::Normal(0), Flag::StrictlySmaller)]);
        let map0 = premise_map(&Rule::CondBox, Sequent::n(1, 0), 0);
        assert!(map0.is_empty());
    }

    #[test]
    fn box_l_thread_leaves_modal_sort() {
        let map = premise_map(&Rule::BoxL, Sequent::n(1, 0), 0);
        assert!(map.contains(&(Pos::Normal(0), Pos::Safe(0), Flag::Equal)));
    }

    #[test]
    fn dis_is_identity() {
        let map = premise_map(&Rule::Dis, Sequent::n(2, 1), 0);
        assert!(map.iter().all(|&(a, b, f)| a == b && f == Flag::Equal));
        assert_eq!(map.len(), 4);
    }

    fn loop_graph(rule: Rule) -> ProofGraph {
        let mut b = GraphBuilder::new("loop");
        let top = b.add("top", Sequent::n(1, 0), rule, vec![]);
        let s = b.add("s", Sequent::n(1, 0), Rule::S0, vec![Prem::Back(top)]);
        b.set_premises(top, vec![Prem::Fwd(s)]);
        b.finish(top).unwrap()
    }

    #[test]
    fn cycle_without_dis_is_reported() {
        let g = loop_graph(Rule::S1);
        let d = validate_graph(&g);
        assert_eq!(d.len(), 1);
        assert!(matches!(d[0].kind, DiagnosticKind::MissingDis { .. }));
        assert!(validate_graph(&loop_graph(Rule::Dis)).is_empty());
    }

    #[test]
    fn arity_violation_is_reported_once() {
        let nodes = vec![
            Node { id: "c".into(), sequent: Sequent::n(0, 0), rule: Rule::CutN, premises: vec![1] },
            Node { id: "z".into(), sequent: Sequent::n(0, 0), rule: Rule::Zero, premises: vec![] },
        ];
        let g = ProofGraph::from_parts("bad", nodes, []).unwrap();
        let d = validate_graph(&g);
        assert_eq!(d, vec![Diagnostic { node: "c".into(), kind: DiagnosticKind::Arity }]);
    }

    #[test]
    fn unfold_depth_zero_is_root_only() {
        let g = loop_graph(Rule::Dis);
        let u = unfold(&g, g.root(), 0);
        assert!(u.children.is_empty());
        let u3 = unfold(&g, g.root(), 3);
        assert_eq!(u3.height(), 3);
        assert_eq!(u3.children[0].children[0].rule, Rule::Dis);
    }

    #[test]
    fn builder_rejects_non_ancestor_back_reference() {
        let mut b = GraphBuilder::new("x");
        let z = b.add("z", Sequent::n(0, 0), Rule::Zero, vec![]);
        let c = b.add("c", Sequent::n(0, 0), Rule::CutN, vec![Prem::Fwd(z), Prem::Back(z)]);
        assert!(b.finish(c).is_err());
    }
}
