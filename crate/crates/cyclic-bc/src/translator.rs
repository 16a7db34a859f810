//! From cyclic proofs to the guarded recursion algebra: bud/companion bookkeeping, the
//! structure of companion-to-bud paths, removal of safe inputs below `cut_box`, the
//! translation itself, and the desugaring of `srec` into cycles.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{self, AlgebraError, Arity, Term, TermRef};
use crate::checker::{self, Classification};
use crate::kernel::{
    copy_rooted, extract_rooted, validate_graph, DiagnosticKind, GraphBuilder, NodeIx, Prem, ProofGraph, Rule,
    Sequent, Succedent,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslateError {
    #[error("graph is not translatable: {0}")]
    ClassificationError(String),
    #[error("call from {bud} to companion {companion} crosses no box conditional")]
    StrictnessViolation { bud: String, companion: String },
    #[error("not in cycle normal form at {first}/{second}: {reason}")]
    NotCycleNormal { first: String, second: String, reason: String },
    #[error("subgraph at {0} is not progressing")]
    NotProgressing(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A back-reference `parent → premise` closing on `companion`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bud {
    pub parent: NodeIx,
    pub premise: usize,
    pub companion: NodeIx,
}

#[derive(Clone, Debug)]
pub struct CycleAnalysis {
    pub buds: Vec<Bud>,
    pub companions: BTreeSet<NodeIx>,
    /// Companions at or above each node.
    pub close: Vec<BTreeSet<NodeIx>>,
    /// Buds above each node whose companion lies strictly below it.
    pub open: Vec<BTreeSet<Bud>>,
}

impl CycleAnalysis {
    pub fn buds_of(&self, companion: NodeIx) -> impl Iterator<Item = &Bud> + '_ {
        self.buds.iter().filter(move |b| b.companion == companion)
    }

    /// JSON sidecar listing buds and the close/open sets of every node.
    pub fn to_json(&self, g: &ProofGraph) -> String {
        let id = |u: NodeIx| format!("\"{}\"", g.node(u).id);
        let bud = |b: &Bud| format!("\"{}.{}\"", g.node(b.parent).id, b.premise);
        let mut out = String::from("{\n  \"buds\": [");
        let items: Vec<String> =
            self.buds.iter().map(|b| format!("{{\"bud\": {}, \"companion\": {}}}", bud(b), id(b.companion))).collect();
        out.push_str(&items.join(", "));
        out.push_str("],\n  \"nodes\": {");
        for u in 0..g.len() {
            let close: Vec<String> = self.close[u].iter().map(|&c| id(c)).collect();
            let open: Vec<String> = self.open[u].iter().map(bud).collect();
            let sep = if u + 1 < g.len() { "," } else { "" };
            let _ = write!(out, "\n    {}: {{\"close\": [{}], \"open\": [{}]}}{sep}", id(u), close.join(", "), open.join(", "));
        }
        out.push_str("\n  }\n}\n");
        out
    }
}

/// Skips `dis` markers, which do not change the denoted coderivation.
fn through_dis(g: &ProofGraph, mut u: NodeIx) -> Option<NodeIx> {
    for _ in 0..=g.len() {
        if g.node(u).rule != Rule::Dis {
            return Some(u);
        }
        u = g.node(u).premises[0];
    }
    None
}

/// The coderivations rooted at `a` and `b` are equal.
pub fn same_coderivation(g: &ProofGraph, a: NodeIx, b: NodeIx) -> bool {
    let mut seen = HashSet::new();
    let mut stack = vec![(a, b)];
    while let Some((u, v)) = stack.pop() {
        let (Some(u), Some(v)) = (through_dis(g, u), through_dis(g, v)) else { return false };
        if !seen.insert((u, v)) {
            continue;
        }
        let (nu, nv) = (g.node(u), g.node(v));
        if nu.rule != nv.rule || nu.sequent != nv.sequent {
            return false;
        }
        stack.extend(nu.premises.iter().copied().zip(nv.premises.iter().copied()));
    }
    true
}

/// Buds, companions and close/open sets, after checking the graph is a cycle normal form:
/// every back-reference closes on a `dis` ancestor and no node strictly above another denotes
/// the same coderivation.
pub fn cycle_nf(g: &ProofGraph) -> Result<CycleAnalysis, TranslateError> {
    analyse(g, true)
}

/// `cycle_nf` with the minimality condition optional; the translation does not need it.
fn analyse(g: &ProofGraph, minimal: bool) -> Result<CycleAnalysis, TranslateError> {
    if let Some(d) = validate_graph(g).into_iter().next() {
        let reason = d.to_string();
        return Err(match d.kind {
            DiagnosticKind::MissingDis { target } | DiagnosticKind::BudNotAbove { target } => {
                TranslateError::NotCycleNormal { first: d.node, second: target, reason }
            }
            _ => TranslateError::ClassificationError(reason),
        });
    }
    let buds: Vec<Bud> =
        g.back_edges().map(|(parent, premise, companion)| Bud { parent, premise, companion }).collect();
    let companions: BTreeSet<NodeIx> = buds.iter().map(|b| b.companion).collect();
    let proper: Vec<NodeIx> = (0..g.len()).filter(|&u| g.node(u).rule != Rule::Dis).collect();
    for &v in proper.iter().filter(|_| minimal) {
        let mut cur = g.parent(v);
        while let Some(u) = cur {
            if g.node(u).rule != Rule::Dis
                && g.node(u).rule == g.node(v).rule
                && g.node(u).sequent == g.node(v).sequent
                && same_coderivation(g, u, v)
            {
                return Err(TranslateError::NotCycleNormal {
                    first: g.node(u).id.clone(),
                    second: g.node(v).id.clone(),
                    reason: "equal sub-coderivations below the buds".into(),
                });
            }
            cur = g.parent(u);
        }
    }
    let mut close = vec![BTreeSet::new(); g.len()];
    let mut open = vec![BTreeSet::new(); g.len()];
    for u in 0..g.len() {
        let above: HashSet<NodeIx> = g.forward_subtree(u).into_iter().collect();
        close[u] = companions.iter().copied().filter(|c| above.contains(c)).collect();
        open[u] = buds
            .iter()
            .copied()
            .filter(|b| above.contains(&b.parent) && b.companion != u && g.is_ancestor(b.companion, u))
            .collect();
    }
    Ok(CycleAnalysis { buds, companions, close, open })
}

/// What one companion-to-bud path contains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathReport {
    pub bud: Bud,
    pub box_conditional: bool,
    pub cut_box: bool,
    pub box_l: bool,
    pub w_box: bool,
    pub left_box_conditional: bool,
    pub w_n: bool,
    pub left_n_conditional: bool,
    pub right_cut_n: bool,
}

impl PathReport {
    /// Violations of the path shape required of accepted graphs.
    pub fn failures(&self) -> Vec<&'static str> {
        let checks = [
            (!self.box_conditional, "no box conditional on path"),
            (self.cut_box, "cut_box on path"),
            (self.box_l, "box_l on path"),
            (self.w_box, "w_box on path"),
            (self.left_box_conditional, "left premise of a box conditional on path"),
            (self.w_n, "w_n on path"),
            (self.left_n_conditional, "left premise of a safe conditional on path"),
            (self.right_cut_n, "right cut_n premise on path"),
        ];
        checks.into_iter().filter(|c| c.0).map(|c| c.1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub paths: Vec<PathReport>,
}

impl StructureReport {
    pub fn passes(&self) -> bool {
        self.paths.iter().all(|p| p.failures().is_empty())
    }

    pub fn failures(&self, g: &ProofGraph) -> Vec<String> {
        self.paths
            .iter()
            .flat_map(|p| {
                p.failures().into_iter().map(move |f| {
                    format!("{} -> {}: {f}", g.node(p.bud.companion).id, g.node(p.bud.parent).id)
                })
            })
            .collect()
    }
}

pub fn structure_check(g: &ProofGraph, a: &CycleAnalysis) -> StructureReport {
    let paths = a
        .buds
        .iter()
        .map(|&bud| {
            let path = g.tree_path(bud.companion, bud.parent).expect("companions are ancestors of their buds");
            // (node, premise taken) for every step of the path, the final back-reference included.
            let mut steps: Vec<(NodeIx, usize)> = path
                .windows(2)
                .map(|w| {
                    let j = g.node(w[0]).premises.iter().enumerate().position(|(j, &v)| v == w[1] && !g.is_back(w[0], j));
                    (w[0], j.expect("tree edge"))
                })
                .collect();
            steps.push((bud.parent, bud.premise));
            let any_rule = |r: &dyn Fn(&Rule) -> bool| steps.iter().any(|&(u, _)| r(&g.node(u).rule));
            let any_step = |r: &dyn Fn(&Rule, usize) -> bool| steps.iter().any(|&(u, j)| r(&g.node(u).rule, j));
            PathReport {
                bud,
                box_conditional: any_step(&|r, j| r.is_box_conditional() && j >= 1),
                cut_box: any_rule(&|r| *r == Rule::CutBox),
                box_l: any_rule(&|r| *r == Rule::BoxL),
                w_box: any_rule(&|r| *r == Rule::WBox),
                left_box_conditional: any_step(&|r, j| r.is_box_conditional() && j == 0),
                w_n: any_rule(&|r| *r == Rule::WN),
                left_n_conditional: any_step(&|r, j| matches!(r, Rule::CondN | Rule::PcondN) && j == 0),
                right_cut_n: any_step(&|r, j| *r == Rule::CutN && j == 1),
            }
        })
        .collect();
    StructureReport { paths }
}

/// For `node` concluding `□Γ, N⃗ ⇒ □N`, a graph concluding `□Γ ⇒ □N` with the same values.
///
/// Works down from `node` through the finite modal-succedent region: weakenings and `cut_n`
/// drop safe inputs, `box_l` becomes a normal weakening, and `box_r` ends the region.
pub fn cutbox_star(g: &ProofGraph, node: NodeIx) -> Result<ProofGraph, TranslateError> {
    let sub = extract_rooted(g, node);
    let id = g.node(node).id.clone();
    match checker::check_progressing(&sub) {
        Ok(o) if o.holds => {}
        _ => return Err(TranslateError::NotProgressing(id)),
    }
    if sub.node(0).sequent.succedent != Succedent::BoxN {
        return Err(TranslateError::Unsupported(format!("{id} does not conclude boxN")));
    }
    let mut b = GraphBuilder::new(format!("{}*", sub.name()));
    for d in sub.oracles().values() {
        b.declare_oracle(d.clone());
    }
    let root = star(&sub, 0, &mut b)?;
    b.finish(root).map_err(|e| TranslateError::Unsupported(e.to_string()))
}

fn star(g: &ProofGraph, u: NodeIx, b: &mut GraphBuilder) -> Result<usize, TranslateError> {
    let node = g.node(u);
    let seq = Sequent::boxed(node.sequent.normals, 0);
    let prem = |j: usize, b: &mut GraphBuilder| {
        if g.is_back(u, j) {
            Err(TranslateError::NotProgressing(node.id.clone()))
        } else {
            star(g, node.premises[j], b)
        }
    };
    let id = format!("{}*", node.id);
    Ok(match &node.rule {
        Rule::BoxR => copy_rooted(g, u, b, ""),
        Rule::Dis | Rule::WN | Rule::EN(_) => prem(0, b)?,
        Rule::CutN => prem(1, b)?,
        Rule::EBox(_) | Rule::WBox | Rule::S0 | Rule::S1 => {
            let p = prem(0, b)?;
            b.add(id, seq, node.rule.clone(), vec![Prem::Fwd(p)])
        }
        Rule::BoxL => {
            let p = prem(0, b)?;
            b.add(id, seq, Rule::WBox, vec![Prem::Fwd(p)])
        }
        Rule::CutBox => {
            let p0 = prem(0, b)?;
            let p1 = prem(1, b)?;
            b.add(id, seq, Rule::CutBox, vec![Prem::Fwd(p0), Prem::Fwd(p1)])
        }
        other => return Err(TranslateError::Unsupported(format!("{other} cannot conclude boxN at {}", node.id))),
    })
}

struct Translation<'g> {
    g: &'g ProofGraph,
    prefix: String,
    companions: BTreeSet<NodeIx>,
    stars: usize,
}

/// Active companions below the current node, each flagged once a box conditional has been
/// crossed above it.
type Active = Vec<(NodeIx, bool)>;

impl Translation<'_> {
    fn name(&self, c: NodeIx) -> String {
        format!("{}a_{}", self.prefix, self.g.node(c).id)
    }

    fn node(&mut self, u: NodeIx, active: &Active) -> Result<TermRef, TranslateError> {
        stacker::maybe_grow(128 * 1024, 8 * 1024 * 1024, || self.node_inner(u, active))
    }

    fn premise(&mut self, u: NodeIx, j: usize, active: &Active) -> Result<TermRef, TranslateError> {
        let g = self.g;
        let v = g.node(u).premises[j];
        let crosses = g.node(u).rule.is_box_conditional() && j >= 1;
        if g.is_back(u, j) {
            let (_, strict) = active.iter().rev().find(|(c, _)| *c == v).copied().ok_or_else(|| {
                TranslateError::NotCycleNormal {
                    first: g.node(u).id.clone(),
                    second: g.node(v).id.clone(),
                    reason: "back-reference to an inactive companion".into(),
                }
            })?;
            if !strict && !crosses {
                return Err(TranslateError::StrictnessViolation { bud: g.node(u).id.clone(), companion: g.node(v).id.clone() });
            }
            let s = g.node(v).sequent;
            return Ok(algebra::call(self.name(v), Arity::new(s.normals, s.safes)));
        }
        if crosses && active.iter().any(|(_, s)| !s) {
            let crossed: Active = active.iter().map(|&(c, _)| (c, true)).collect();
            return self.node(v, &crossed);
        }
        self.node(v, active)
    }

    fn node_inner(&mut self, u: NodeIx, active: &Active) -> Result<TermRef, TranslateError> {
        let g = self.g;
        let node = g.node(u);
        let (m, n) = (node.sequent.normals, node.sequent.safes);
        let a = Arity::new(m, n);
        let nrm = Arity::new(m, 0);
        let pn = |i: usize| algebra::projn(nrm, i);
        let ps = |i: usize| algebra::projs(a, i);
        let leaf = |t: Term| Arc::new(t);
        Ok(match &node.rule {
            Rule::Id => ps(0),
            Rule::Zero => algebra::zero(),
            Rule::One => algebra::numeral(1, a),
            Rule::Oracle(name) => algebra::relation(name.clone(), a),
            Rule::S0 | Rule::S1 => {
                let head = leaf(if node.rule == Rule::S0 { Term::S0 } else { Term::S1 });
                algebra::apply_safe(a, head, vec![self.premise(u, 0, active)?])
            }
            Rule::Dis => {
                if !self.companions.contains(&u) {
                    return self.premise(u, 0, active);
                }
                let mut inner = active.clone();
                inner.push((u, false));
                let body = self.premise(u, 0, &inner)?;
                algebra::rec_sim(0, vec![(self.name(u), body)])
            }
            Rule::CutN => {
                let t0 = self.premise(u, 0, active)?;
                let t1 = self.premise(u, 1, active)?;
                Arc::new(Term::CompSafe { h: t1, g: t0 })
            }
            Rule::CutBox => {
                let star = cutbox_star(g, node.premises[0])?;
                self.stars += 1;
                let mut sub = Translation {
                    g: &star,
                    prefix: format!("{}s{}_", self.prefix, self.stars),
                    companions: star.back_edges().map(|e| e.2).collect(),
                    stars: 0,
                };
                let t0 = sub.node(0, &Vec::new())?;
                let t1 = self.premise(u, 1, active)?;
                let normals = std::iter::once(t0).chain((0..m).map(pn)).collect();
                algebra::compose(a, t1, normals, (0..n).map(ps).collect())
            }
            Rule::WN => algebra::compose(a, self.premise(u, 0, active)?, (0..m).map(pn).collect(), (0..n - 1).map(ps).collect()),
            Rule::WBox => algebra::compose(a, self.premise(u, 0, active)?, (1..m).map(pn).collect(), (0..n).map(ps).collect()),
            Rule::EN(k) => {
                let t = self.premise(u, 0, active)?;
                algebra::compose(a, t, (0..m).map(pn).collect(), (0..n).map(|i| ps(swap(i, *k))).collect())
            }
            Rule::EBox(k) => {
                let t = self.premise(u, 0, active)?;
                algebra::compose(a, t, (0..m).map(|i| pn(swap(i, *k))).collect(), (0..n).map(ps).collect())
            }
            Rule::BoxL => {
                let t = self.premise(u, 0, active)?;
                let safes = (0..n).map(ps).chain(std::iter::once(algebra::projn(a, 0))).collect();
                algebra::compose(a, t, (1..m).map(pn).collect(), safes)
            }
            Rule::BoxR => self.premise(u, 0, active)?,
            Rule::CondN | Rule::PcondN => {
                let w = ps(n - 1);
                let rest: Vec<TermRef> = (0..n - 1).map(ps).collect();
                let pw = algebra::apply_safe(a, leaf(Term::Pred), vec![w.clone()]);
                let with_pw = || rest.iter().cloned().chain(std::iter::once(pw.clone())).collect::<Vec<_>>();
                let t0 = algebra::compose(a, self.premise(u, 0, active)?, (0..m).map(pn).collect(), rest.clone());
                let t1 = algebra::compose(a, self.premise(u, 1, active)?, (0..m).map(pn).collect(), with_pw());
                let t2 = if node.rule == Rule::CondN {
                    algebra::compose(a, self.premise(u, 2, active)?, (0..m).map(pn).collect(), with_pw())
                } else {
                    t1.clone()
                };
                algebra::cond(a, w, t0, t1, t2)
            }
            Rule::CondBox | Rule::PcondBox => {
                let w = algebra::projn(a, 0);
                let pw = algebra::apply_safe(nrm, leaf(Term::Pred), vec![pn(0)]);
                let with_pw = || std::iter::once(pw.clone()).chain((1..m).map(pn)).collect::<Vec<_>>();
                let t0 = algebra::compose(a, self.premise(u, 0, active)?, (1..m).map(pn).collect(), (0..n).map(ps).collect());
                let t1 = algebra::compose(a, self.premise(u, 1, active)?, with_pw(), (0..n).map(ps).collect());
                let t2 = if node.rule == Rule::CondBox {
                    algebra::compose(a, self.premise(u, 2, active)?, with_pw(), (0..n).map(ps).collect())
                } else {
                    t1.clone()
                };
                algebra::cond(a, w, t0, t1, t2)
            }
            Rule::Srec => return Err(TranslateError::ClassificationError("srec must be desugared first".into())),
        })
    }
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

/// Replaces every simultaneous recursion by a single tagged recursion.
pub fn eliminate_simultaneous(t: &TermRef) -> Result<TermRef, AlgebraError> {
    fn go(t: &TermRef, memo: &mut HashMap<usize, TermRef>) -> Result<TermRef, AlgebraError> {
        let key = Arc::as_ptr(t) as usize;
        if let Some(r) = memo.get(&key) {
            return Ok(r.clone());
        }
        let out = match &**t {
            Term::CompSafe { h, g } => Arc::new(Term::CompSafe { h: go(h, memo)?, g: go(g, memo)? }),
            Term::CompNormal { h, g } => Arc::new(Term::CompNormal { h: go(h, memo)?, g: go(g, memo)? }),
            Term::Compose { arity, head, normals, safes } => algebra::compose(
                *arity,
                go(head, memo)?,
                normals.iter().map(|r| go(r, memo)).collect::<Result<_, _>>()?,
                safes.iter().map(|s| go(s, memo)).collect::<Result<_, _>>()?,
            ),
            Term::RecPP { oracle, body } => algebra::rec_pp(oracle.clone(), go(body, memo)?),
            Term::RecSim { index, bodies } => {
                let bodies = bodies.iter().map(|(n, b)| Ok((n.clone(), go(b, memo)?))).collect::<Result<Vec<_>, AlgebraError>>()?;
                algebra::reduce_simultaneous(&bodies)?.swap_remove(*index)
            }
            _ => t.clone(),
        };
        memo.insert(key, out.clone());
        Ok(out)
    }
    go(t, &mut HashMap::new())
}

/// A term over the graph's oracle leaves (as initial relations) with the same values as the
/// graph at its root. Only accepted cyclic graphs translate.
pub fn translate(g: &ProofGraph) -> Result<TermRef, TranslateError> {
    let verdict = checker::classify(g);
    match &verdict.classification {
        Classification::Cb | Classification::NubPresentation => {}
        Classification::BDerivation => {
            return Err(TranslateError::ClassificationError("srec derivation: desugar with srec_to_cycle first".into()))
        }
        Classification::Rejected(reasons) => {
            let why: Vec<String> = reasons.iter().map(|r| r.to_string()).collect();
            return Err(TranslateError::ClassificationError(why.join("; ")));
        }
    }
    let analysis = analyse(g, false)?;
    let report = structure_check(g, &analysis);
    if !report.passes() {
        return Err(TranslateError::ClassificationError(report.failures(g).join("; ")));
    }
    let mut tr = Translation { g, prefix: String::new(), companions: analysis.companions.clone(), stars: 0 };
    let t = tr.node(g.root(), &Vec::new())?;
    let t = eliminate_simultaneous(&t)?;
    t.check()?;
    Ok(t)
}

/// Replaces each `srec` node by `dis(cond_box(g, cut_n(↺, h0), cut_n(↺, h1)))`, `↺` pointing
/// back at the new `dis` node.
pub fn srec_to_cycle(g: &ProofGraph) -> ProofGraph {
    fn go(g: &ProofGraph, u: NodeIx, b: &mut GraphBuilder, handles: &mut HashMap<NodeIx, usize>) -> usize {
        stacker::maybe_grow(64 * 1024, 4 * 1024 * 1024, || {
            let node = g.node(u);
            let prem = |j: usize, b: &mut GraphBuilder, handles: &mut HashMap<NodeIx, usize>| {
                if g.is_back(u, j) {
                    Prem::Back(handles[&node.premises[j]])
                } else {
                    Prem::Fwd(go(g, node.premises[j], b, handles))
                }
            };
            if node.rule != Rule::Srec {
                let h = b.add(node.id.clone(), node.sequent, node.rule.clone(), vec![]);
                handles.insert(u, h);
                let prems = (0..node.premises.len()).map(|j| prem(j, b, handles)).collect();
                b.set_premises(h, prems);
                return h;
            }
            let seq = node.sequent;
            let d = b.add(node.id.clone(), seq, Rule::Dis, vec![]);
            handles.insert(u, d);
            let base = prem(0, b, handles);
            let step = |i: usize, b: &mut GraphBuilder, handles: &mut HashMap<NodeIx, usize>| {
                let h = prem(i, b, handles);
                Prem::Fwd(b.add(format!("{}.{i}", node.id), seq, Rule::CutN, vec![Prem::Back(d), h]))
            };
            let s0 = step(1, b, handles);
            let s1 = step(2, b, handles);
            let c = b.add(format!("{}.c", node.id), seq, Rule::CondBox, vec![base, s0, s1]);
            b.set_premises(d, vec![Prem::Fwd(c)]);
            d
        })
    }
    if !g.nodes().iter().any(|n| n.rule == Rule::Srec) {
        return g.clone();
    }
    let mut b = GraphBuilder::new(g.name());
    for d in g.oracles().values() {
        b.declare_oracle(d.clone());
    }
    let root = go(g, g.root(), &mut b, &mut HashMap::new());
    b.finish(root).expect("desugaring keeps the tree shape")
}
