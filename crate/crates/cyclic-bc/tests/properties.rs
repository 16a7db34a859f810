use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cyclic_bc::algebra::{bound_poly, enumerate_pp, eval_term, eval_term_table, pp_subseteq};
use cyclic_bc::checker::{brute, classify, factor, Classification};
use cyclic_bc::evaluator::{eval, eval_root, Budget, EvalError, OracleEnv};
use cyclic_bc::kernel::{extract_rooted, unfold};
use cyclic_bc::nonuniform::{build_description_term, family_oracle, CircuitFamily, FamilyKind};
use cyclic_bc::prooffmt::{parse_advice, parse_graph, serialize_graph};
use cyclic_bc::translator::{cutbox_star, translate};
use cyclic_bc::value::{len, nat};
use cyclic_bc::{fixtures, ProofGraph, Value};

const FUEL: u64 = 1_000_000;

fn env_of(g: &ProofGraph) -> OracleEnv {
    OracleEnv::from_decls(g.oracles().values(), |_| None).unwrap()
}

fn random_graph(seed: u64, max_nodes: usize) -> ProofGraph {
    brute::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), max_nodes)
}

fn vals(xs: &[u64]) -> Vec<Value> {
    xs.iter().map(|&x| nat(x)).collect()
}

fn args(bits: u32, n: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..1u64 << bits, n)
}

fn fixture_index() -> impl Strategy<Value = usize> {
    0..fixtures::all().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unfolding_one_deeper_truncates_back(i in fixture_index(), d in 0usize..8) {
        let (_, g) = &fixtures::all()[i];
        prop_assert_eq!(unfold(g, g.root(), d + 1).truncate(d), unfold(g, g.root(), d));
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let g = random_graph(seed, 10);
        prop_assert_eq!(parse_graph(&serialize_graph(&g)).unwrap(), g);
    }

    #[test]
    fn advice_is_length_determined(
        rows in prop::collection::btree_map(0usize..6, any::<bool>(), 0..6),
        x in 0u64..64,
        y in 0u64..64,
    ) {
        let text: String = rows.iter().map(|(l, b)| format!("{l} -> {}\n", u8::from(*b))).collect();
        let adv = parse_advice(&text).unwrap();
        // Equal lengths, possibly different values.
        let (a, b) = (nat(x), nat(y));
        let same = len(&a) == len(&b);
        prop_assert!(!same || adv.bit(&[len(&a)]) == adv.bit(&[len(&b)]));
    }

    #[test]
    fn memo_does_not_change_values(i in fixture_index(), xs in args(5, 2), ys in args(5, 2)) {
        let (_, g) = &fixtures::all()[i];
        let s = g.node(g.root()).sequent;
        let (x, y) = (vals(&xs[..s.normals.min(2)]), vals(&ys[..s.safes.min(2)]));
        prop_assume!(x.len() == s.normals && y.len() == s.safes);
        let env = env_of(g);
        // Small fuel: I never terminates and E without the memo is exponential.
        let with = eval(g, g.root(), &x, &y, &env, &mut Budget::new(100_000));
        let without = eval(g, g.root(), &x, &y, &env, &mut Budget::without_memo(100_000));
        if with != Err(EvalError::FuelExhausted) && without != Err(EvalError::FuelExhausted) {
            prop_assert_eq!(with, without);
        }
    }

    #[test]
    fn factoring_preserves_values(x in 0u64..4096) {
        let g = fixtures::advice_product_parity();
        let f = factor(&g).unwrap();
        let base = env_of(&g);
        let want = eval_root(&g, &[nat(x)], &[], &base, FUEL).unwrap();
        let got = eval_root(&f.graph, &[nat(x)], &[], &f.env(&base, FUEL), FUEL).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn table_evaluation_agrees(xs in args(5, 2), y in 0u64..32) {
        let t = translate(&fixtures::concat()).unwrap();
        let env = OracleEnv::new();
        let (x, y) = (vals(&xs), vals(&[y]));
        prop_assert_eq!(eval_term(&t, &x, &y, &env).unwrap(), eval_term_table(&t, &x, &y, &env).unwrap());
    }

    #[test]
    fn translated_values_respect_their_bound(xs in args(10, 2), y in 0u64..1024) {
        let g = fixtures::concat();
        let t = translate(&g).unwrap();
        let (x, y) = (vals(&xs), vals(&[y]));
        let v = eval_root(&g, &x, &y, &OracleEnv::new(), FUEL).unwrap();
        let p = bound_poly(&t);
        let total: usize = x.iter().map(len).sum();
        prop_assert!(num_bigint::BigUint::from(len(&v)) <= p.eval(total) + num_bigint::BigUint::from(len(&y[0])));
    }

    #[test]
    fn star_ignores_safe_inputs(x in 0u64..256, y in 0u64..256) {
        let g = fixtures::unsafe_recursion();
        for u in 0..g.len() {
            let Ok(star) = cutbox_star(&g, u) else { continue };
            let s = g.node(u).sequent;
            let xs = vec![nat(x); s.normals];
            let ys = vec![nat(y); s.safes];
            let want = eval_root(&extract_rooted(&g, u), &xs, &ys, &OracleEnv::new(), FUEL).unwrap();
            prop_assert_eq!(eval_root(&star, &xs, &[], &OracleEnv::new(), FUEL).unwrap(), want);
        }
    }

    #[test]
    fn translate_accepts_exactly_the_accepted_cyclic_graphs(seed in any::<u64>()) {
        let g = random_graph(seed, 8);
        let class = classify(&g).classification;
        let cyclic = matches!(class, Classification::Cb | Classification::NubPresentation);
        let t = translate(&g);
        prop_assert_eq!(t.is_ok(), cyclic, "{}\n{}\n{:?}", class, serialize_graph(&g), t);
        if let Ok(t) = t {
            let env = env_of(&g);
            let s = g.node(g.root()).sequent;
            for k in 0..16u64 {
                let (x, y) = (vals(&vec![k * 37 % 64; s.normals]), vals(&vec![k * 11 % 32; s.safes]));
                let want = eval_root(&g, &x, &y, &env, FUEL).unwrap();
                prop_assert_eq!(eval_term(&t, &x, &y, &env).unwrap(), want, "{}", serialize_graph(&g));
            }
        }
    }

    #[test]
    fn family_oracle_is_length_determined(a in 0u64..1024, b in 0u64..1024, z in 0u64..256) {
        let r = family_oracle(Arc::new(CircuitFamily::new(FamilyKind::Majority)));
        let (a, b) = (nat(a), nat(b));
        prop_assume!(len(&a) == len(&b));
        prop_assert_eq!(r.call(&[nat(z), a], &[]).unwrap(), r.call(&[nat(z), b], &[]).unwrap());
    }
}

#[test]
fn description_term_respects_its_bound() {
    let t = build_description_term();
    let p = bound_poly(&t);
    let fam = Arc::new(CircuitFamily::new(FamilyKind::Parity));
    let env = OracleEnv::new().with("c", family_oracle(fam));
    for z in 0..40usize {
        for n in 0..6usize {
            let x = [cyclic_bc::value::ones(z), cyclic_bc::value::ones(n)];
            let v = eval_term(&t, &x, &[], &env).unwrap();
            assert!(num_bigint::BigUint::from(len(&v)) <= p.eval(z + n));
        }
    }
}

#[test]
fn enumerate_pp_is_sorted_and_bounded() {
    let fact = |k: usize| (1..=k).product::<usize>();
    let tuples: Vec<Vec<Value>> = (0..256u64).step_by(7).map(|a| vals(&[a])).chain((0..64u64).step_by(5).map(|a| vals(&[a, 63 - a]))).collect();
    for x in &tuples {
        for y in [vec![], vals(&[5]), vals(&[2, 9])] {
            let list = enumerate_pp(x, &y);
            let bound = x.iter().map(|v| len(v) + 1).product::<usize>() * fact(x.len())
                * y.iter().map(|v| len(v) + 1).product::<usize>() * fact(y.len());
            assert!(list.len() <= bound);
            let mut seen = std::collections::HashSet::new();
            for (i, (u, v)) in list.iter().enumerate() {
                assert!(seen.insert((u.clone(), v.clone())));
                let total: usize = u.iter().map(len).sum();
                assert!(total < x.iter().map(len).sum::<usize>() || x.is_empty());
                // Every strictly smaller pair in the list comes first.
                for (u2, v2) in &list[i + 1..] {
                    let below = pp_subseteq(u2, u) && pp_subseteq(v2, v) && u2.iter().map(len).sum::<usize>() < total;
                    assert!(!below, "{u2:?};{v2:?} after {u:?};{v:?}");
                }
            }
        }
    }
}
