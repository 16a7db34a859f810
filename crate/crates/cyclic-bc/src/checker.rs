//! Regularity-class membership: progress by trace closure, safety, left-leaning cycles,
//! rule-freeness, factoring of free subgraphs into oracle leaves, and classification.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::evaluator::{OracleEntry, OracleEnv};
use crate::kernel::{
    extract_rooted, premise_map, validate_graph, Diagnostic, Flag, GraphBuilder, NodeIx, OracleDecl, OracleKind,
    OracleSource, Pos, Prem, ProofGraph, Rule, RuleSet, Succedent,
};
use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("trace closure exceeded {0} elements")]
    ClosureOverflow(usize),
    #[error("graph is not progressing (cycle {0:?})")]
    NotProgressing(Vec<String>),
}

/// A closed walk `v0 → v1 → … → vk → v0`, listed without repeating `v0`.
pub type Cycle = Vec<NodeIx>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    pub holds: bool,
    pub witness: Option<Cycle>,
}

impl CheckOutcome {
    fn pass() -> Self {
        CheckOutcome { holds: true, witness: None }
    }

    fn fail(witness: Cycle) -> Self {
        CheckOutcome { holds: false, witness: Some(witness) }
    }
}

/// Strongly connected components; `cyclic[c]` marks components carrying at least one edge.
pub struct Components {
    pub comp: Vec<usize>,
    pub cyclic: Vec<bool>,
}

impl Components {
    pub fn of(g: &ProofGraph) -> Self {
        let mut dg = DiGraph::<(), ()>::with_capacity(g.len(), g.len() * 2);
        let ix: Vec<_> = (0..g.len()).map(|_| dg.add_node(())).collect();
        for (u, _, v) in g.edges() {
            dg.add_edge(ix[u], ix[v], ());
        }
        let sccs = tarjan_scc(&dg);
        let mut comp = vec![0; g.len()];
        let mut cyclic = vec![false; sccs.len()];
        for (c, members) in sccs.iter().enumerate() {
            for n in members {
                comp[n.index()] = c;
            }
            cyclic[c] = members.len() > 1;
        }
        for (u, _, v) in g.edges() {
            if u == v {
                cyclic[comp[u]] = true;
            }
        }
        Components { comp, cyclic }
    }

    /// Both endpoints of the edge lie on a common cycle.
    pub fn edge_on_cycle(&self, u: NodeIx, v: NodeIx) -> bool {
        self.comp[u] == self.comp[v] && self.cyclic[self.comp[u]]
    }
}

/// Shortest path from `from` to `to` inside one component, both endpoints included.
fn path_within(g: &ProofGraph, comps: &Components, from: NodeIx, to: NodeIx) -> Vec<NodeIx> {
    let c = comps.comp[from];
    let mut prev = HashMap::new();
    let mut queue = VecDeque::from([from]);
    prev.insert(from, from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &g.node(u).premises {
            if comps.comp[v] == c && !prev.contains_key(&v) {
                prev.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// A cycle starting with the edge `u → premise j`.
fn cycle_through(g: &ProofGraph, comps: &Components, u: NodeIx, j: usize) -> Cycle {
    let v = g.node(u).premises[j];
    let mut cycle = vec![u];
    if v != u {
        let path = path_within(g, comps, v, u);
        cycle.extend(&path[..path.len() - 1]);
    }
    cycle
}

/// No `cut_box` node lies on a cycle.
pub fn check_safe(g: &ProofGraph) -> CheckOutcome {
    let comps = Components::of(g);
    for (u, node) in g.nodes().iter().enumerate() {
        if node.rule == Rule::CutBox {
            if let Some(j) = node.premises.iter().position(|&v| comps.edge_on_cycle(u, v)) {
                return CheckOutcome::fail(cycle_through(g, &comps, u, j));
            }
        }
    }
    CheckOutcome::pass()
}

/// No cycle enters the right premise of a `cut_n` node.
pub fn check_left_leaning(g: &ProofGraph) -> CheckOutcome {
    let comps = Components::of(g);
    for (u, node) in g.nodes().iter().enumerate() {
        if node.rule == Rule::CutN && comps.edge_on_cycle(u, node.premises[1]) {
            return CheckOutcome::fail(cycle_through(g, &comps, u, 1));
        }
    }
    CheckOutcome::pass()
}

/// Trace relation between the normal positions of two nodes: 0 none, 1 equal, 2 strictly smaller.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceRelation {
    pub src: NodeIx,
    pub dst: NodeIx,
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl TraceRelation {
    /// The immediate relation along edge `u → premise j`, keeping only normal-to-normal threads.
    pub fn of_edge(g: &ProofGraph, u: NodeIx, j: usize) -> Self {
        let node = g.node(u);
        let v = node.premises[j];
        let rows = node.sequent.normals;
        let cols = g.node(v).sequent.normals;
        let mut cells = vec![0u8; rows * cols];
        for (from, to, flag) in premise_map(&node.rule, node.sequent, j) {
            if let (Pos::Normal(p), Pos::Normal(q)) = (from, to) {
                cells[p * cols + q] = if flag == Flag::StrictlySmaller { 2 } else { 1 };
            }
        }
        TraceRelation { src: u, dst: v, rows, cols, cells }
    }

    pub fn get(&self, p: usize, q: usize) -> u8 {
        self.cells[p * self.cols + q]
    }

    /// Relational composition `self ; next`; strict if either step is strict, best over paths.
    pub fn then(&self, next: &TraceRelation) -> TraceRelation {
        debug_assert_eq!(self.dst, next.src);
        let mut cells = vec![0u8; self.rows * next.cols];
        for p in 0..self.rows {
            for q in 0..self.cols {
                let a = self.get(p, q);
                if a == 0 {
                    continue;
                }
                for r in 0..next.cols {
                    let b = next.get(q, r);
                    if b != 0 {
                        let c = &mut cells[p * next.cols + r];
                        *c = (*c).max(a.max(b));
                    }
                }
            }
        }
        TraceRelation { src: self.src, dst: next.dst, rows: self.rows, cols: next.cols, cells }
    }

    pub fn is_loop(&self) -> bool {
        self.src == self.dst
    }

    pub fn has_strict_diagonal(&self) -> bool {
        (0..self.rows.min(self.cols)).any(|p| self.get(p, p) == 2)
    }

    pub fn is_idempotent(&self) -> bool {
        self.is_loop() && self.then(self) == *self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProgressOptions {
    pub budget: usize,
    pub exec: Exec,
}

impl Default for ProgressOptions {
    fn default() -> Self {
        ProgressOptions { budget: 1_000_000, exec: Exec::default() }
    }
}

pub fn check_progressing(g: &ProofGraph) -> Result<CheckOutcome, CheckError> {
    check_progressing_with(g, ProgressOptions::default())
}

/// Size-change closure over cycle edges; every idempotent loop must carry a strict self-thread.
pub fn check_progressing_with(g: &ProofGraph, opts: ProgressOptions) -> Result<CheckOutcome, CheckError> {
    let comps = Components::of(g);
    let mut out_edges: Vec<Vec<TraceRelation>> = vec![Vec::new(); g.len()];
    let mut seeds = Vec::new();
    for (u, j, v) in g.edges() {
        if comps.edge_on_cycle(u, v) {
            let r = TraceRelation::of_edge(g, u, j);
            out_edges[u].push(r.clone());
            seeds.push(r);
        }
    }
    // Element k was obtained from parent[k] by appending the edge leaving `src` of its last step.
    let mut elems: Vec<TraceRelation> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut index: HashMap<TraceRelation, usize> = HashMap::new();
    let mut frontier = Vec::new();
    for r in seeds {
        if !index.contains_key(&r) {
            index.insert(r.clone(), elems.len());
            frontier.push(elems.len());
            elems.push(r);
            parent.push(None);
        }
    }
    while !frontier.is_empty() {
        let expanded: Vec<Vec<TraceRelation>> = opts.exec.map(&frontier, |&k| {
            let e = &elems[k];
            out_edges[e.dst].iter().map(|step| e.then(step)).collect()
        });
        let mut next = Vec::new();
        for (&k, batch) in frontier.iter().zip(expanded) {
            for r in batch {
                if index.contains_key(&r) {
                    continue;
                }
                if elems.len() >= opts.budget {
                    return Err(CheckError::ClosureOverflow(opts.budget));
                }
                index.insert(r.clone(), elems.len());
                next.push(elems.len());
                elems.push(r);
                parent.push(Some(k));
            }
        }
        frontier = next;
    }
    for (k, e) in elems.iter().enumerate() {
        if e.is_idempotent() && !e.has_strict_diagonal() {
            return Ok(CheckOutcome::fail(walk_of(&elems, &parent, k)));
        }
    }
    Ok(CheckOutcome::pass())
}

fn walk_of(elems: &[TraceRelation], parent: &[Option<usize>], k: usize) -> Cycle {
    // The last edge of element k starts at the dst of its parent.
    let mut rev = Vec::new();
    let mut cur = Some(k);
    while let Some(c) = cur {
        match parent[c] {
            Some(p) => rev.push(elems[p].dst),
            None => rev.push(elems[c].src),
        }
        cur = parent[c];
    }
    rev.reverse();
    rev
}

/// Nodes from which no rule of `ruleset` is reachable.
pub fn free_nodes(g: &ProofGraph, ruleset: &RuleSet) -> Vec<bool> {
    let mut preds: Vec<Vec<NodeIx>> = vec![Vec::new(); g.len()];
    for (u, _, v) in g.edges() {
        preds[v].push(u);
    }
    let mut free = vec![true; g.len()];
    let mut stack: Vec<NodeIx> = (0..g.len()).filter(|&u| ruleset.contains(g.node(u).rule.kind())).collect();
    for &u in &stack {
        free[u] = false;
    }
    while let Some(u) = stack.pop() {
        for &p in &preds[u] {
            if free[p] {
                free[p] = false;
                stack.push(p);
            }
        }
    }
    free
}

pub fn rule_free(g: &ProofGraph, node: NodeIx, ruleset: &RuleSet) -> bool {
    g.reachable(node).iter().all(|&u| !ruleset.contains(g.node(u).rule.kind()))
}

/// Minimal reachable free nodes with succedent `N`: none is reachable from another.
pub fn minimal_free_nodes(g: &ProofGraph, ruleset: &RuleSet) -> BTreeSet<NodeIx> {
    let free = free_nodes(g, ruleset);
    let reachable = g.reachable(g.root());
    let candidate = |u: NodeIx| free[u] && reachable.contains(&u) && g.node(u).sequent.succedent == Succedent::N;
    let mut picked: BTreeSet<NodeIx> = reachable
        .iter()
        .copied()
        .filter(|&u| candidate(u) && !strict_ancestors(g, u).any(candidate))
        .collect();
    let snapshot: Vec<NodeIx> = picked.iter().copied().collect();
    for &a in &snapshot {
        if picked.contains(&a) {
            let below = g.reachable(a);
            picked.retain(|&b| b == a || !below.contains(&b));
        }
    }
    picked
}

fn strict_ancestors(g: &ProofGraph, u: NodeIx) -> impl Iterator<Item = NodeIx> + '_ {
    std::iter::successors(g.parent(u), move |&p| g.parent(p))
}

/// A graph whose free subgraphs were cut out and replaced by oracle leaves.
#[derive(Clone, Debug)]
pub struct Factored {
    pub graph: ProofGraph,
    pub oracles: Vec<(OracleDecl, ProofGraph)>,
}

impl Factored {
    /// `base` extended with one subgraph entry per excised oracle.
    pub fn env(&self, base: &OracleEnv, fuel: u64) -> OracleEnv {
        let mut env = base.clone();
        for (decl, sub) in &self.oracles {
            env.insert(decl.name.clone(), OracleEntry::subgraph(Arc::new(sub.clone()), base.clone(), fuel));
        }
        env
    }
}

pub fn factor(g: &ProofGraph) -> Result<Factored, CheckError> {
    let progress = check_progressing(g)?;
    if !progress.holds {
        let ids = progress.witness.unwrap_or_default().iter().map(|&u| g.node(u).id.clone()).collect();
        return Err(CheckError::NotProgressing(ids));
    }
    let cut = minimal_free_nodes(g, &RuleSet::nub_regularity());
    let mut b = GraphBuilder::new(format!("{}_factored", g.name()));
    for d in g.oracles().values() {
        b.declare_oracle(d.clone());
    }
    let mut oracles = Vec::new();
    let mut handles = vec![usize::MAX; g.len()];
    let order = g.forward_subtree(g.root());
    for &u in &order {
        let n = g.node(u);
        handles[u] = if cut.contains(&u) {
            let name = format!("f_{}", n.id);
            let decl = OracleDecl {
                name: name.clone(),
                normals: n.sequent.normals,
                safes: n.sequent.safes,
                kind: OracleKind::LengthRelation,
                source: OracleSource::Subgraph(name.clone()),
            };
            b.declare_oracle(decl.clone());
            let mut sub = extract_rooted(g, u);
            sub = rename(sub, &name);
            oracles.push((decl, sub));
            b.add(n.id.clone(), n.sequent, Rule::Oracle(name), vec![])
        } else {
            b.add(n.id.clone(), n.sequent, n.rule.clone(), vec![])
        };
    }
    for &u in &order {
        if cut.contains(&u) || under_cut(g, u, &cut) {
            continue;
        }
        {
            let prems = g
                .node(u)
                .premises
                .iter()
                .enumerate()
                .map(|(j, &v)| if g.is_back(u, j) { Prem::Back(handles[v]) } else { Prem::Fwd(handles[v]) })
                .collect();
            b.set_premises(handles[u], prems);
        }
    }
    let graph = b.finish(handles[g.root()]).expect("factoring keeps the tree shape");
    Ok(Factored { graph, oracles })
}

fn under_cut(g: &ProofGraph, u: NodeIx, cut: &BTreeSet<NodeIx>) -> bool {
    strict_ancestors(g, u).any(|a| cut.contains(&a))
}

fn rename(g: ProofGraph, name: &str) -> ProofGraph {
    let nodes = g.nodes().to_vec();
    let oracles: Vec<_> = g.oracles().values().cloned().collect();
    ProofGraph::from_parts(name, nodes, oracles).expect("renaming keeps validity")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reason {
    Structural(Vec<Diagnostic>),
    NotProgressing(Option<Vec<String>>),
    ClosureOverflow,
    NotSafe(Vec<String>),
    NotLeftLeaning(Vec<String>),
    /// `srec` inside a cyclic graph.
    CyclicSrec,
    /// Oracle leaf not declared as a length relation.
    OpaqueOracle(String),
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Structural(d) => {
                write!(f, "invalid graph:")?;
                d.iter().try_for_each(|d| write!(f, " [{d}]"))
            }
            Reason::NotProgressing(Some(c)) => write!(f, "not progressing, cycle {}", show_cycle(c)),
            Reason::NotProgressing(None) => write!(f, "not progressing"),
            Reason::ClosureOverflow => write!(f, "progress check gave up (closure budget)"),
            Reason::NotSafe(c) => write!(f, "not safe, cut_box on cycle {}", show_cycle(c)),
            Reason::NotLeftLeaning(c) => write!(f, "not left-leaning, right cut_n premise on cycle {}", show_cycle(c)),
            Reason::CyclicSrec => write!(f, "srec occurs in a cyclic graph"),
            Reason::OpaqueOracle(o) => write!(f, "oracle {o} is not a length relation"),
        }
    }
}

fn show_cycle(c: &[String]) -> String {
    let mut s = c.join(" -> ");
    if let Some(first) = c.first() {
        s.push_str(" -> ");
        s.push_str(first);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Classification {
    Cb,
    NubPresentation,
    BDerivation,
    Rejected(Vec<Reason>),
}

impl Classification {
    pub fn accepted(&self) -> bool {
        !matches!(self, Classification::Rejected(_))
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Cb => f.write_str("CB"),
            Classification::NubPresentation => f.write_str("nuB-presentation"),
            Classification::BDerivation => f.write_str("B-derivation"),
            Classification::Rejected(_) => f.write_str("rejected"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub progressing: CheckOutcome,
    pub safe: CheckOutcome,
    pub left_leaning: CheckOutcome,
    pub classification: Classification,
}

impl Verdict {
    pub fn reasons(&self) -> &[Reason] {
        match &self.classification {
            Classification::Rejected(r) => r,
            _ => &[],
        }
    }
}

pub fn classify(g: &ProofGraph) -> Verdict {
    classify_with(g, ProgressOptions::default())
}

pub fn classify_with(g: &ProofGraph, opts: ProgressOptions) -> Verdict {
    let ids = |c: &Option<Cycle>| c.as_ref().map(|c| c.iter().map(|&u| g.node(u).id.clone()).collect::<Vec<_>>());
    let diags = validate_graph(g);
    if !diags.is_empty() {
        let fail = CheckOutcome { holds: false, witness: None };
        return Verdict {
            progressing: fail.clone(),
            safe: fail.clone(),
            left_leaning: fail,
            classification: Classification::Rejected(vec![Reason::Structural(diags)]),
        };
    }
    let mut reasons = Vec::new();
    let progressing = match check_progressing_with(g, opts) {
        Ok(o) => o,
        Err(_) => {
            reasons.push(Reason::ClosureOverflow);
            CheckOutcome { holds: false, witness: None }
        }
    };
    if !progressing.holds && !reasons.contains(&Reason::ClosureOverflow) {
        reasons.push(Reason::NotProgressing(ids(&progressing.witness)));
    }
    let safe = check_safe(g);
    if !safe.holds {
        reasons.push(Reason::NotSafe(ids(&safe.witness).unwrap_or_default()));
    }
    let left_leaning = check_left_leaning(g);
    if !left_leaning.holds {
        reasons.push(Reason::NotLeftLeaning(ids(&left_leaning.witness).unwrap_or_default()));
    }
    let has_srec = g.nodes().iter().any(|n| n.rule == Rule::Srec);
    let acyclic = g.back_edges().next().is_none();
    let classification = if has_srec && acyclic {
        Classification::BDerivation
    } else {
        if has_srec {
            reasons.push(Reason::CyclicSrec);
        }
        let mut oracle_names = BTreeSet::new();
        for n in g.nodes() {
            if let Rule::Oracle(name) = &n.rule {
                oracle_names.insert(name.clone());
            }
        }
        for name in &oracle_names {
            if g.oracle(name).map(|d| d.kind) != Some(OracleKind::LengthRelation) {
                reasons.push(Reason::OpaqueOracle(name.clone()));
            }
        }
        if !reasons.is_empty() {
            Classification::Rejected(reasons)
        } else if oracle_names.is_empty() {
            Classification::Cb
        } else {
            Classification::NubPresentation
        }
    };
    Verdict { progressing, safe, left_leaning, classification }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yn = |o: &CheckOutcome| if o.holds { "yes" } else { "no" };
        writeln!(f, "classification: {}", self.classification)?;
        writeln!(f, "progressing: {}", yn(&self.progressing))?;
        writeln!(f, "safe: {}", yn(&self.safe))?;
        writeln!(f, "left-leaning: {}", yn(&self.left_leaning))?;
        for r in self.reasons() {
            writeln!(f, "reason: {r}")?;
        }
        Ok(())
    }
}

/// Exhaustive reference checks and random graph generation for cross-validation.
pub mod brute {
    use std::collections::HashSet;

    use rand::seq::SliceRandom;
    use rand::Rng;

    use super::TraceRelation;
    use crate::kernel::{
        rule_signature, GraphBuilder, NodeIx, OracleDecl, OracleKind, OracleSource, Prem, ProofGraph, Rule, Sequent,
        Succedent,
    };

    /// All simple cycles as node lists, each reported once from its smallest node.
    pub fn simple_cycles(g: &ProofGraph) -> Vec<Vec<(NodeIx, usize)>> {
        fn go(
            g: &ProofGraph,
            start: NodeIx,
            u: NodeIx,
            path: &mut Vec<(NodeIx, usize)>,
            on: &mut Vec<bool>,
            out: &mut Vec<Vec<(NodeIx, usize)>>,
        ) {
            for (j, &v) in g.node(u).premises.iter().enumerate() {
                if v == start {
                    path.push((u, j));
                    out.push(path.clone());
                    path.pop();
                } else if v > start && !on[v] {
                    on[v] = true;
                    path.push((u, j));
                    go(g, start, v, path, on, out);
                    path.pop();
                    on[v] = false;
                }
            }
        }
        let mut out = Vec::new();
        for s in 0..g.len() {
            let mut on = vec![false; g.len()];
            on[s] = true;
            go(g, s, s, &mut Vec::new(), &mut on, &mut out);
        }
        out
    }

    pub fn safe(g: &ProofGraph) -> bool {
        simple_cycles(g).iter().all(|c| c.iter().all(|&(u, _)| g.node(u).rule != Rule::CutBox))
    }

    pub fn left_leaning(g: &ProofGraph) -> bool {
        simple_cycles(g).iter().all(|c| c.iter().all(|&(u, j)| !(g.node(u).rule == Rule::CutN && j == 1)))
    }

    /// Some power of a loop relation is idempotent because its powers live in a finite semigroup.
    fn idempotent_power(r: &TraceRelation) -> TraceRelation {
        let mut p = r.clone();
        loop {
            if p.then(&p) == p {
                return p;
            }
            p = p.then(r);
        }
    }

    /// Explores all closed walks, deduplicating on `(start, current node, relation so far)`;
    /// every closed walk's relation must have an idempotent power with a strict self-thread.
    pub fn progressing(g: &ProofGraph) -> bool {
        for start in 0..g.len() {
            let mut seen: HashSet<TraceRelation> = HashSet::new();
            let mut stack: Vec<TraceRelation> = g
                .node(start)
                .premises
                .iter()
                .enumerate()
                .map(|(j, _)| TraceRelation::of_edge(g, start, j))
                .collect();
            while let Some(r) = stack.pop() {
                if !seen.insert(r.clone()) {
                    continue;
                }
                if r.dst == start && !idempotent_power(&r).has_strict_diagonal() {
                    return false;
                }
                for j in 0..g.node(r.dst).premises.len() {
                    stack.push(r.then(&TraceRelation::of_edge(g, r.dst, j)));
                }
            }
        }
        true
    }

    const RULES: [Rule; 15] = [
        Rule::Dis,
        Rule::Dis,
        Rule::CondBox,
        Rule::PcondBox,
        Rule::CondN,
        Rule::CutN,
        Rule::CutBox,
        Rule::S0,
        Rule::S1,
        Rule::WN,
        Rule::WBox,
        Rule::BoxL,
        Rule::BoxR,
        Rule::EN(0),
        Rule::EBox(0),
    ];

    /// A random valid graph of at most `max_nodes` nodes with sequents of at most two positions
    /// per zone. Leaves are constants, identities, or length-relation oracle leaves.
    pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> ProofGraph {
        loop {
            if let Some(g) = attempt(rng, max_nodes) {
                return g;
            }
        }
    }

    fn attempt(rng: &mut impl Rng, max_nodes: usize) -> Option<ProofGraph> {
        let mut b = GraphBuilder::new("random");
        let root_seq = Sequent::n(rng.gen_range(1..=2), rng.gen_range(0..=1));
        let mut count = 0usize;
        let root = build(rng, &mut b, root_seq, &mut Vec::new(), &mut count, max_nodes);
        if count > max_nodes {
            return None;
        }
        b.finish(root).ok()
    }

    fn leaf(b: &mut GraphBuilder, seq: Sequent, count: &mut usize) -> usize {
        *count += 1;
        let rule = match (seq.normals, seq.safes) {
            (0, 0) => Rule::Zero,
            (0, 1) => Rule::Id,
            (m, n) => {
                let name = format!("o{m}_{n}");
                b.declare_oracle(OracleDecl {
                    name: name.clone(),
                    normals: m,
                    safes: n,
                    kind: OracleKind::LengthRelation,
                    source: OracleSource::Builtin("parity-len".into()),
                });
                Rule::Oracle(name)
            }
        };
        b.add_auto("n", seq, rule, vec![])
    }

    fn build(
        rng: &mut impl Rng,
        b: &mut GraphBuilder,
        seq: Sequent,
        dis_above: &mut Vec<(usize, Sequent)>,
        count: &mut usize,
        max: usize,
    ) -> usize {
        let exhausted = *count + 1 >= max;
        if seq.succedent == Succedent::N && (exhausted || rng.gen_bool(0.15)) {
            return leaf(b, seq, count);
        }
        let mut options: Vec<Rule> = RULES
            .iter()
            .filter(|r| match rule_signature(r, seq) {
                Ok(sig) => sig.iter().all(|s| s.normals <= 2 && s.safes <= 2),
                Err(_) => false,
            })
            .cloned()
            .collect();
        if exhausted {
            options.retain(|r| r.arity() == 1);
        }
        let rule = match options.choose(rng) {
            Some(r) => r.clone(),
            None => return leaf(b, Sequent::n(seq.normals, seq.safes), count),
        };
        let sig = rule_signature(&rule, seq).expect("filtered");
        *count += 1;
        let h = b.add_auto("n", seq, rule.clone(), vec![]);
        let is_dis = rule == Rule::Dis;
        if is_dis {
            dis_above.push((h, seq));
        }
        let mut prems = Vec::new();
        for s in sig {
            let targets: Vec<usize> =
                dis_above.iter().filter(|&&(d, ds)| ds == s && !(is_dis && d == h)).map(|&(d, _)| d).collect();
            if !targets.is_empty() && rng.gen_bool(0.45) {
                prems.push(Prem::Back(*targets.choose(rng).expect("nonempty")));
            } else {
                prems.push(Prem::Fwd(build(rng, b, s, dis_above, count, max)));
            }
        }
        if is_dis {
            dis_above.pop();
        }
        b.set_premises(h, prems);
        h
    }
}
