//! The bundled example graphs, embedded from `fixtures/*.cbp`.

use crate::kernel::ProofGraph;
use crate::prooffmt::parse_graph;

pub const CONCAT: &str = include_str!("../fixtures/C.cbp");
pub const EXPONENTIAL: &str = include_str!("../fixtures/E.cbp");
pub const UNSAFE_RECURSION: &str = include_str!("../fixtures/R.cbp");
pub const UNDEFINED: &str = include_str!("../fixtures/I.cbp");
pub const PARITY: &str = include_str!("../fixtures/P.cbp");
pub const ADVICE_PRODUCT: &str = include_str!("../fixtures/A.cbp");
pub const ADVICE_PRODUCT_DRAWN: &str = include_str!("../fixtures/A_fig.cbp");
pub const ADVICE_PRODUCT_PARITY: &str = include_str!("../fixtures/A_inlined_P.cbp");
pub const SREC_APPEND: &str = include_str!("../fixtures/srec_append.cbp");
pub const SREC_NESTED: &str = include_str!("../fixtures/srec_nested.cbp");

fn load(text: &str) -> ProofGraph {
    parse_graph(text).expect("bundled fixtures parse")
}

/// `C(x, y; z)`: the binary string `z` followed by `y` then `x`.
pub fn concat() -> ProofGraph {
    load(CONCAT)
}

/// `E(x; y) = 2^(2^|x|) · y`.
pub fn exponential() -> ProofGraph {
    load(EXPONENTIAL)
}

/// `R(x) = x`, recursing with the call in a normal position.
pub fn unsafe_recursion() -> ProofGraph {
    load(UNSAFE_RECURSION)
}

/// `I(x) = I(s1 x)`, undefined everywhere.
pub fn undefined() -> ProofGraph {
    load(UNDEFINED)
}

/// `P(x) = |x| mod 2`.
pub fn parity() -> ProofGraph {
    load(PARITY)
}

/// `A(x) = r(0) r(1) … r(|x|-1)` over the length relation `r`.
pub fn advice_product() -> ProofGraph {
    load(ADVICE_PRODUCT)
}

/// Same function as [`advice_product`], laid out with a right-premise recursive call.
pub fn advice_product_drawn() -> ProofGraph {
    load(ADVICE_PRODUCT_DRAWN)
}

/// [`advice_product`] with `r` replaced by the [`parity`] cycle.
pub fn advice_product_parity() -> ProofGraph {
    load(ADVICE_PRODUCT_PARITY)
}

pub fn srec_append() -> ProofGraph {
    load(SREC_APPEND)
}

pub fn srec_nested() -> ProofGraph {
    load(SREC_NESTED)
}

/// Every bundled fixture with its file stem.
pub fn all() -> Vec<(&'static str, ProofGraph)> {
    vec![
        ("C", concat()),
        ("E", exponential()),
        ("R", unsafe_recursion()),
        ("I", undefined()),
        ("P", parity()),
        ("A", advice_product()),
        ("A_fig", advice_product_drawn()),
        ("A_inlined_P", advice_product_parity()),
        ("srec_append", srec_append()),
        ("srec_nested", srec_nested()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{rule_signature, unfold, validate_graph, Rule};

    #[test]
    fn every_fixture_validates() {
        for (name, g) in all() {
            assert!(validate_graph(&g).is_empty(), "{name}: {:?}", validate_graph(&g));
            for n in g.nodes() {
                let sig = rule_signature(&n.rule, n.sequent).unwrap();
                let found: Vec<_> = n.premises.iter().map(|&p| g.node(p).sequent).collect();
                assert_eq!(sig, found, "{name}/{}", n.id);
            }
        }
    }

    #[test]
    fn undefined_loop_unfolds_through_its_cut() {
        let g = undefined();
        assert_eq!(g.len(), 8);
        assert_eq!(g.back_edges().count(), 1);
        let u = unfold(&g, g.root(), 3);
        assert_eq!(u.rule, Rule::Dis);
        assert_eq!(u.children[0].rule, Rule::CutBox);
        assert_eq!(u.children[0].children.len(), 2);
    }

    #[test]
    fn concat_unfolds_into_conditional() {
        let g = concat();
        let u = unfold(&g, g.root(), 2);
        let cond = &u.children[0];
        assert_eq!(cond.rule, Rule::CondBox);
        let rules: Vec<_> = cond.children.iter().map(|c| c.rule.clone()).collect();
        assert_eq!(rules, vec![Rule::Dis, Rule::S0, Rule::S1]);
    }
}
