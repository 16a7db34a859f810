//! End-to-end acceptance run. One line per criterion; nonzero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cyclic_bc::algebra::{
    self, bound_poly, eval_term, modulus, reduce_simultaneous, truncate_oracle, Arity, Term, TermRef,
};
use cyclic_bc::checker::{self, brute, classify, Classification, Reason};
use cyclic_bc::evaluator::{
    eval, eval_batch, eval_root, expand_relation, probe_length_determined, random_args, Args, Budget, EvalError,
    OracleEnv,
};
use cyclic_bc::nonuniform::{circuit_eval, compile_family_to_proof, pipeline_eval, CircuitFamily, FamilyKind};
use cyclic_bc::par::Exec;
use cyclic_bc::prooffmt::{parse_advice, AdviceSource};
use cyclic_bc::translator::{srec_to_cycle, translate};
use cyclic_bc::value::{self, len, nat};
use cyclic_bc::{fixtures, ProofGraph, Rule, Value};

type Outcome = Result<String, String>;

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn env_of(g: &ProofGraph) -> OracleEnv {
    OracleEnv::from_decls(g.oracles().values(), |_| None).expect("fixture oracles resolve")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn has(reasons: &[Reason], pred: impl Fn(&Reason) -> bool) -> bool {
    reasons.iter().any(pred)
}

fn criterion_1() -> Outcome {
    let i = classify(&fixtures::undefined());
    ensure!(!i.progressing.holds && !i.safe.holds, "I: {:?}", i.classification);
    ensure!(
        has(i.reasons(), |r| matches!(r, Reason::NotProgressing(_))) && has(i.reasons(), |r| matches!(r, Reason::NotSafe(_))),
        "I reasons {:?}",
        i.reasons()
    );
    let r = classify(&fixtures::unsafe_recursion());
    ensure!(
        r.progressing.holds && !r.safe.holds && r.left_leaning.holds && !r.classification.accepted(),
        "R: {:?}",
        r.classification
    );
    let c = classify(&fixtures::concat());
    ensure!(c.classification == Classification::Cb, "C: {:?}", c.classification);
    let e = classify(&fixtures::exponential());
    ensure!(
        e.progressing.holds && e.safe.holds && !e.left_leaning.holds && !e.classification.accepted(),
        "E: {:?}",
        e.classification
    );
    let a = classify(&fixtures::advice_product());
    ensure!(a.classification == Classification::NubPresentation, "A: {:?}", a.classification);
    Ok("I, R, E rejected for the expected reasons; C is CB; A is a nuB-presentation".into())
}

/// The value a node's rule assigns from its premises, each premise evaluated separately.
fn rule_equation(g: &ProofGraph, u: usize, x: &[Value], y: &[Value], env: &OracleEnv, fuel: u64) -> Result<Value, EvalError> {
    let n = g.node(u);
    let p = |j: usize, x: &[Value], y: &[Value]| eval(g, n.premises[j], x, y, env, &mut Budget::new(fuel));
    let cat = |a: &[Value], b: &[Value]| [a, b].concat();
    let one = |v: Value| vec![v];
    Ok(match &n.rule {
        Rule::Id => y[0].clone(),
        Rule::Zero => nat(0),
        Rule::One => nat(1),
        Rule::S0 => p(0, x, y)? * 2u32,
        Rule::S1 => p(0, x, y)? * 2u32 + 1u32,
        Rule::Dis => p(0, x, y)?,
        Rule::BoxR => p(0, x, &[])?,
        Rule::CutN => {
            let v = p(0, x, y)?;
            p(1, x, &cat(y, &one(v)))?
        }
        Rule::CutBox => {
            let v = p(0, x, y)?;
            p(1, &cat(&one(v), x), y)?
        }
        Rule::WN => p(0, x, &y[..y.len() - 1])?,
        Rule::WBox => p(0, &x[1..], y)?,
        Rule::EN(i) => {
            let mut y = y.to_vec();
            y.swap(*i, i + 1);
            p(0, x, &y)?
        }
        Rule::EBox(i) => {
            let mut x = x.to_vec();
            x.swap(*i, i + 1);
            p(0, &x, y)?
        }
        Rule::BoxL => p(0, &x[1..], &cat(y, &x[..1]))?,
        Rule::CondN | Rule::PcondN => {
            let w = &y[y.len() - 1];
            let rest = &y[..y.len() - 1];
            let half = w.clone() / 2u32;
            if *w == nat(0) {
                p(0, x, rest)?
            } else if n.rule == Rule::CondN && w.bit(0) {
                p(2, x, &cat(rest, &one(half)))?
            } else {
                p(1, x, &cat(rest, &one(half)))?
            }
        }
        Rule::CondBox | Rule::PcondBox => {
            let w = &x[0];
            let half = w.clone() / 2u32;
            if *w == nat(0) {
                p(0, &x[1..], y)?
            } else if n.rule == Rule::CondBox && w.bit(0) {
                p(2, &cat(&one(half), &x[1..]), y)?
            } else {
                p(1, &cat(&one(half), &x[1..]), y)?
            }
        }
        Rule::Srec => {
            let w = &x[0];
            if *w == nat(0) {
                p(0, &x[1..], y)?
            } else {
                let half = w.clone() / 2u32;
                let shorter = cat(&one(half), &x[1..]);
                let acc = eval(g, u, &shorter, y, env, &mut Budget::new(fuel))?;
                p(if w.bit(0) { 2 } else { 1 }, &shorter, &cat(y, &one(acc)))?
            }
        }
        Rule::Oracle(name) => env.call(name, x, y)?,
    })
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut checked = 0;
    for (name, g) in fixtures::all() {
        let env = env_of(&g);
        let mut here = 0;
        for _ in 0..100 {
            let u = r.gen_range(0..g.len());
            let s = g.node(u).sequent;
            let (x, y) = random_args(&mut r, s.normals, s.safes, 6);
            let fuel = 20_000;
            let lhs = eval(&g, u, &x, &y, &env, &mut Budget::new(fuel));
            let rhs = rule_equation(&g, u, &x, &y, &env, fuel);
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => {
                    ensure!(a == b, "{name}/{}: {a} != {b} at {x:?};{y:?}", g.node(u).id);
                    here += 1;
                }
                (Err(EvalError::FuelExhausted), Err(EvalError::FuelExhausted)) => {}
                (a, b) => return Err(format!("{name}/{}: {a:?} vs {b:?}", g.node(u).id)),
            }
        }
        // Only I is undefined everywhere near its root.
        ensure!(here > 0 || name == "I", "{name}: no defined samples");
        checked += here;
    }
    let (c, e) = (fixtures::concat(), fixtures::exponential());
    let none = OracleEnv::new();
    let c23 = eval_root(&c, &[nat(2), nat(3)], &[nat(1)], &none, 1_000_000).map_err(|e| e.to_string())?;
    ensure!(c23 == nat(30), "C(2,3;1) = {c23}");
    let e11 = eval_root(&e, &[nat(1)], &[nat(1)], &none, 1_000_000).map_err(|e| e.to_string())?;
    ensure!(e11 == nat(4), "E(1;1) = {e11}");
    for x in 0..16u64 {
        for y in 1..=15u64 {
            let got = eval_root(&e, &[nat(x)], &[nat(y)], &none, 10_000_000).map_err(|e| e.to_string())?;
            let want = (BigUint::from(1u32) << (1u64 << len(&nat(x)))) * y;
            ensure!(got == want, "E({x};{y}) = {got}, want {want}");
        }
    }
    Ok(format!("{checked} rule-equation samples; C(2,3;1)=30, E(1;1)=4, E closed form on |x|<=3"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut runs = 0;
    for (name, g) in fixtures::all() {
        if !classify(&g).classification.accepted() {
            continue;
        }
        let s = g.node(g.root()).sequent;
        let inputs: Vec<Args> = (0..200).map(|_| random_args(&mut r, s.normals, s.safes, 16)).collect();
        let env = env_of(&g);
        for (res, (x, y)) in eval_batch(&g, &inputs, &env, 10_000_000, Exec::default()).into_iter().zip(&inputs) {
            ensure!(res.is_ok(), "{name} at {x:?};{y:?}: {res:?}");
        }
        runs += inputs.len();
    }
    let i = fixtures::undefined();
    let res = eval_root(&i, &[nat(5)], &[], &OracleEnv::new(), 10_000);
    ensure!(res == Err(EvalError::FuelExhausted), "I gave {res:?}");
    Ok(format!("{runs} runs of accepted fixtures terminate; I exhausts fuel 10^4"))
}

fn uses_any(g: &ProofGraph, rules: &[Rule]) -> bool {
    g.nodes().iter().any(|n| rules.contains(&n.rule))
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut small = Vec::new();
    let mut determined = Vec::new();
    for (name, g) in fixtures::all() {
        let env = env_of(&g);
        let s = g.node(g.root()).sequent;
        let progressing = checker::check_progressing(&g).map(|o| o.holds).unwrap_or(false);
        if progressing && !uses_any(&g, &[Rule::S0, Rule::S1, Rule::Id]) {
            for _ in 0..200 {
                let (x, y) = random_args(&mut r, s.normals, s.safes, 12);
                let v = eval_root(&g, &x, &y, &env, 10_000_000).map_err(|e| format!("{name}: {e}"))?;
                ensure!(v <= nat(1), "{name} gave {v} at {x:?};{y:?}");
            }
            small.push(name);
        }
        if !uses_any(&g, &[Rule::CondBox, Rule::CondN, Rule::Id]) {
            let f = |x: &[Value], y: &[Value]| eval_root(&g, x, y, &env, 10_000_000);
            let probe = probe_length_determined(f, s.normals, s.safes, 500, 12, &mut r).map_err(|e| format!("{name}: {e}"))?;
            ensure!(probe.determined, "{name} not length-determined: {:?}", probe.witness);
            determined.push(name);
        }
    }
    ensure!(!small.is_empty() && !determined.is_empty(), "no fixture in scope");
    Ok(format!("outputs <= 1: {small:?}; length-determined: {determined:?}"))
}

struct Translated {
    name: String,
    graph: ProofGraph,
    term: TermRef,
    env: OracleEnv,
}

fn translations() -> Result<Vec<Translated>, String> {
    let mut graphs: Vec<(String, ProofGraph, OracleEnv)> = vec![
        ("C".into(), fixtures::concat(), OracleEnv::new()),
        ("P".into(), fixtures::parity(), OracleEnv::new()),
    ];
    for (name, g) in [("srec_append", fixtures::srec_append()), ("srec_nested", fixtures::srec_nested())] {
        let env = env_of(&g);
        graphs.push((format!("cycle({name})"), srec_to_cycle(&g), env));
    }
    let compiled = compile_family_to_proof(Arc::new(CircuitFamily::new(FamilyKind::Parity)));
    graphs.push(("compiled(parity)".into(), compiled.graph.clone(), compiled.env()));
    graphs
        .into_iter()
        .map(|(name, graph, env)| {
            let term = translate(&graph).map_err(|e| format!("{name}: {e}"))?;
            Ok(Translated { name, graph, term, env })
        })
        .collect()
}

fn samples(t: &Translated, r: &mut ChaCha8Rng, n: usize, bits: usize) -> Vec<Args> {
    let s = t.graph.node(t.graph.root()).sequent;
    (0..n).map(|_| random_args(r, s.normals, s.safes, bits)).collect()
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let ts = translations()?;
    for t in &ts {
        let inputs = samples(t, &mut r, 100, 12);
        let results = Exec::default().map(&inputs, |(x, y)| {
            let want = eval_root(&t.graph, x, y, &t.env, 100_000_000).map_err(|e| e.to_string())?;
            let got = eval_term(&t.term, x, y, &t.env).map_err(|e| e.to_string())?;
            Ok::<_, String>((want, got))
        });
        for (res, (x, y)) in results.into_iter().zip(&inputs) {
            let (want, got) = res.map_err(|e| format!("{}: {e}", t.name))?;
            ensure!(want == got, "{} at {x:?};{y:?}: proof {want}, term {got}", t.name);
        }
    }
    let names: Vec<&str> = ts.iter().map(|t| t.name.as_str()).collect();
    Ok(format!("term and proof agree on 100 inputs each for {names:?}"))
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let ts = translations()?;
    let mut n = 0;
    for t in &ts {
        let p = bound_poly(&t.term);
        for (x, y) in samples(t, &mut r, 100, 12) {
            let v = eval_term(&t.term, &x, &y, &t.env).map_err(|e| e.to_string())?;
            let m = modulus(&p, &x, &y);
            ensure!(len(&v) <= m, "{}: |{v}| > {m} at {x:?};{y:?}", t.name);
            let mut cut = t.env.clone();
            for (name, entry) in t.env.iter() {
                cut.insert(name.clone(), truncate_oracle(entry, m));
            }
            let w = eval_term(&t.term, &x, &y, &cut).map_err(|e| e.to_string())?;
            ensure!(v == w, "{}: truncation at {m} changed {v} to {w}", t.name);
            n += 1;
        }
    }
    Ok(format!("{n} samples within the bound and unchanged by truncation"))
}

/// `f(0;y)=y, f(2x;y)=s0 g(x;y), f(2x+1;y)=s1 g(x;y)`;
/// `g(0;y)=s1 y, g(2x;y)=f(x;⌊y/2⌋), g(2x+1;y)=s0 f(x;y)`.
fn mutual_pair() -> Vec<(String, TermRef)> {
    let a = Arity::new(1, 1);
    let nrm = Arity::new(1, 0);
    let leaf = |t: Term| Arc::new(t);
    let px = algebra::apply_safe(nrm, leaf(Term::Pred), vec![algebra::projn(nrm, 0)]);
    let y = algebra::projs(a, 0);
    let py = algebra::apply_safe(a, leaf(Term::Pred), vec![y.clone()]);
    let call = |name: &str, safe: TermRef| algebra::compose(a, algebra::call(name, a), vec![px.clone()], vec![safe]);
    let s = |head: Term, t: TermRef| algebra::apply_safe(a, leaf(head), vec![t]);
    let w = algebra::projn(a, 0);
    let f = algebra::cond(a, w.clone(), y.clone(), s(Term::S0, call("g", y.clone())), s(Term::S1, call("g", y.clone())));
    let g = algebra::cond(a, w, s(Term::S1, y.clone()), call("f", py), s(Term::S0, call("f", y)));
    vec![("f".into(), f), ("g".into(), g)]
}

fn mutual_direct(which: usize, x: u64, y: &Value) -> Value {
    let half = x / 2;
    match (which, x) {
        (0, 0) => y.clone(),
        (0, _) if x.is_multiple_of(2) => value::s0(&mutual_direct(1, half, y)),
        (0, _) => value::s1(&mutual_direct(1, half, y)),
        (_, 0) => value::s1(y),
        (_, _) if x.is_multiple_of(2) => mutual_direct(0, half, &value::pred(y)),
        _ => value::s0(&mutual_direct(0, half, y)),
    }
}

fn criterion_7() -> Outcome {
    let bodies = mutual_pair();
    let reduced = reduce_simultaneous(&bodies).map_err(|e| e.to_string())?;
    let env = OracleEnv::new();
    let grid: Vec<(u64, u64)> = (0..64u64).flat_map(|x| (0..64u64).map(move |y| (x, y))).collect();
    for (i, t) in reduced.iter().enumerate() {
        ensure!(t.free_calls().is_empty(), "component {i} has free calls");
        let bad = Exec::default().map(&grid, |&(x, y)| {
            let want = mutual_direct(i, x, &nat(y));
            match eval_term(t, &[nat(x)], &[nat(y)], &env) {
                Ok(got) if got == want => None,
                other => Some(format!("component {i} at {x};{y}: {other:?}, want {want}")),
            }
        });
        if let Some(msg) = bad.into_iter().flatten().next() {
            return Err(msg);
        }
    }
    Ok(format!("both components of the reduced pair match on all {} inputs", grid.len()))
}

fn criterion_8() -> Outcome {
    let mut total = 0;
    for kind in [FamilyKind::Parity, FamilyKind::Majority] {
        let fam = Arc::new(CircuitFamily::new(kind));
        for n in 0..=10usize {
            let c = fam.circuit(n).map_err(|e| e.to_string())?;
            let inputs: Vec<Vec<bool>> = (0..1u32 << n).map(|k| (0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect()).collect();
            let bad = Exec::default().map(&inputs, |bits| {
                let direct = circuit_eval(&c, bits).map_err(|e| e.to_string());
                let piped = pipeline_eval(&fam, bits).map_err(|e| e.to_string());
                (direct != piped).then(|| format!("{} n={n} {bits:?}: {direct:?} vs {piped:?}", fam.name()))
            });
            if let Some(msg) = bad.into_iter().flatten().next() {
                return Err(msg);
            }
            total += inputs.len();
        }
        let compiled = compile_family_to_proof(fam.clone());
        let class = classify(&compiled.graph).classification;
        ensure!(class == Classification::NubPresentation, "{}: compiled proof is {class}", fam.name());
    }
    Ok(format!("pipeline = circuit on {total} inputs; both compiled proofs are nuB-presentations"))
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    for k in 0..200 {
        let g = brute::random_graph(&mut r, 8);
        ensure!(checker::check_safe(&g).holds == brute::safe(&g), "safe disagrees on graph {k}:\n{}", cyclic_bc::prooffmt::serialize_graph(&g));
        ensure!(
            checker::check_left_leaning(&g).holds == brute::left_leaning(&g),
            "left-leaning disagrees on graph {k}:\n{}",
            cyclic_bc::prooffmt::serialize_graph(&g)
        );
    }
    let mut cyclic = 0;
    for k in 0..100 {
        let g = brute::random_graph(&mut r, 6);
        cyclic += usize::from(g.back_edges().next().is_some());
        let fast = checker::check_progressing(&g).map_err(|e| e.to_string())?.holds;
        ensure!(fast == brute::progressing(&g), "progressing disagrees on graph {k}:\n{}", cyclic_bc::prooffmt::serialize_graph(&g));
    }
    Ok(format!("200 safe/left-leaning and 100 progress checks agree ({cyclic} of the latter cyclic)"))
}

fn criterion_10() -> Outcome {
    let tables = [
        ("table1", 1usize, "0 -> 1\n3 -> 1\n5 -> 1\n6 -> 1\ndefault 0\n"),
        ("table2", 2usize, "0 0 -> 1\n1 2 -> 1\n7 7 -> 1\n3 0 -> 1\n2 5 -> 1\ndefault 0\n"),
    ];
    let mut cases: Vec<(&str, usize, AdviceSource)> = vec![("parity-len", 1, AdviceSource::builtin("parity-len").unwrap())];
    for (name, arity, text) in tables {
        cases.push((name, arity, parse_advice(text).map_err(|e| e.to_string())?));
    }
    let env = OracleEnv::new();
    let mut n = 0;
    for (name, arity, advice) in &cases {
        let g = expand_relation(advice, *arity, 8);
        let grid: Vec<Vec<u64>> = match arity {
            1 => (0..128u64).map(|x| vec![x]).collect(),
            _ => (0..128u64).flat_map(|x| (0..128u64).map(move |y| vec![x, y])).collect(),
        };
        for xs in &grid {
            let args: Vec<Value> = xs.iter().map(|&x| nat(x)).collect();
            let lengths: Vec<usize> = args.iter().map(len).collect();
            let got = eval_root(&g, &args, &[], &env, 1_000_000).map_err(|e| format!("{name}: {e}"))?;
            ensure!(got == nat(u64::from(advice.bit(&lengths))), "{name} at {xs:?}: {got}");
            n += 1;
        }
    }
    Ok(format!("depth-8 expansions agree with their oracles on {n} inputs"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("fixture classification", criterion_1, 1),
        ("evaluator semantics", criterion_2, 10),
        ("totality", criterion_3, 30),
        ("relation and length-determinism", criterion_4, 10),
        ("translation round trip", criterion_5, 60),
        ("bounding and continuity", criterion_6, 60),
        ("simultaneous recursion reduction", criterion_7, 30),
        ("circuit pipeline", criterion_8, 120),
        ("checker cross-validation", criterion_9, 120),
        ("relation expansion", criterion_10, 10),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let slow = took > Duration::from_secs(*limit);
        let (tag, detail) = match (&res, slow) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {limit}s limit")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        failed += usize::from(tag == "FAIL");
        println!("criterion {:>2} {tag} [{:.2}s/{limit}s] {name}: {detail}", i + 1, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
