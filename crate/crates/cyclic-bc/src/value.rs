//! Natural numbers in binary notation.

use num_bigint::BigUint;
use num_traits::{One, Zero};

pub type Value = BigUint;

/// Bit length; `len(0) = 0`.
pub fn len(x: &Value) -> usize {
    x.bits() as usize
}

pub fn s0(x: &Value) -> Value {
    x << 1u32
}

pub fn s1(x: &Value) -> Value {
    (x << 1u32) + 1u32
}

/// Binary predecessor `⌊x/2⌋`.
pub fn pred(x: &Value) -> Value {
    x >> 1u32
}

pub fn nat(n: u64) -> Value {
    Value::from(n)
}

pub fn is_odd(x: &Value) -> bool {
    x.bit(0)
}

pub fn zero() -> Value {
    Value::zero()
}

pub fn one() -> Value {
    Value::one()
}

/// The numeral `1^n`, i.e. `2^n - 1`.
pub fn ones(n: usize) -> Value {
    (Value::one() << n) - 1u32
}

/// Most significant bit first; empty for 0.
pub fn bits_msb_first(x: &Value) -> Vec<bool> {
    (0..len(x)).rev().map(|i| x.bit(i as u64)).collect()
}

pub fn from_bits_msb_first(bits: &[bool]) -> Value {
    bits.iter().fold(Value::zero(), |acc, &b| if b { s1(&acc) } else { s0(&acc) })
}

/// Binary rendering with `0` for zero.
pub fn to_binary(x: &Value) -> String {
    if x.is_zero() {
        "0".to_string()
    } else {
        x.to_str_radix(2)
    }
}

/// Parses a string of `0`/`1`; the empty string is accepted as 0 with length 0.
pub fn parse_bits(text: &str) -> Option<Vec<bool>> {
    text.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// `y` is a binary prefix of `x`: `y = ⌊x / 2^k⌋` for some `k ≥ 0`.
pub fn is_prefix(y: &Value, x: &Value) -> bool {
    let (ly, lx) = (len(y), len(x));
    ly <= lx && (x >> (lx - ly)) == *y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        assert_eq!(len(&nat(0)), 0);
        assert_eq!(len(&nat(1)), 1);
        assert_eq!(len(&nat(5)), 3);
        assert_eq!(ones(3), nat(7));
    }

    #[test]
    fn prefixes_of_five() {
        let five = nat(5);
        let got: Vec<u64> = (0..8).filter(|&v| is_prefix(&nat(v), &five)).collect();
        assert_eq!(got, vec![0, 1, 2, 5]);
    }

    #[test]
    fn bit_round_trip() {
        for v in 0..64u64 {
            assert_eq!(from_bits_msb_first(&bits_msb_first(&nat(v))), nat(v));
        }
    }
}
