//! Computational basis states of the spin chain.
//!
//! Bit `k` holds the state of spin `k`: index 0 is the target (right) end of
//! the chain and index `N-1` the control (left) end. A set bit means the spin
//! is excited (antiparallel to the field).

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BasisState {
    n: usize,
    words: Box<[u64]>,
}

impl BasisState {
    /// All spins in `|0⟩`, the ground state of the chain.
    pub fn zeros(n: usize) -> Self {
        Self { n, words: vec![0; n.div_ceil(WORD_BITS).max(1)].into_boxed_slice() }
    }

    pub fn from_ones(n: usize, ones: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(n);
        for &k in ones {
            s.check_index(k)?;
            s.words[k / WORD_BITS] |= 1 << (k % WORD_BITS);
        }
        Ok(s)
    }

    /// Builds a state from the low `n` bits of `index` (`n <= 64`).
    pub fn from_index(n: usize, index: u64) -> Result<Self> {
        if n > WORD_BITS {
            return Err(Error::invalid(format!("from_index supports at most 64 spins, got {n}")));
        }
        if n < WORD_BITS && index >> n != 0 {
            return Err(Error::invalid(format!("index {index:#x} does not fit in {n} spins")));
        }
        let mut s = Self::zeros(n);
        s.words[0] = index;
        Ok(s)
    }

    /// Low 64 bits as an integer; exact for chains of at most 64 spins.
    pub fn index(&self) -> u64 {
        self.words[0]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.n {
            Err(Error::IndexOutOfRange { index: k, n: self.n })
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        debug_assert!(k < self.n);
        (self.words[k / WORD_BITS] >> (k % WORD_BITS)) & 1 == 1
    }

    /// Like [`get`](Self::get) but returns `false` outside the chain.
    #[inline]
    pub(crate) fn get_or_ground(&self, k: Option<usize>) -> Option<bool> {
        k.filter(|&k| k < self.n).map(|k| self.get(k))
    }

    /// Toggles spin `k` in place.
    #[inline]
    pub(crate) fn toggle(&mut self, k: usize) {
        self.words[k / WORD_BITS] ^= 1 << (k % WORD_BITS);
    }

    #[inline]
    pub(crate) fn with_bit(&self, k: usize, value: bool) -> Self {
        let mut s = self.clone();
        let mask = 1u64 << (k % WORD_BITS);
        if value {
            s.words[k / WORD_BITS] |= mask;
        } else {
            s.words[k / WORD_BITS] &= !mask;
        }
        s
    }

    /// Returns a copy with spin `k` flipped.
    pub fn flip(&self, k: usize) -> Result<Self> {
        self.check_index(k)?;
        let mut s = self.clone();
        s.toggle(k);
        Ok(s)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Positions of excited spins, highest index first.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.n).rev().filter(|&k| self.get(k)).collect()
    }

    /// Lowercase hex with `ceil(N/4)` digits; spin 0 is the least significant bit.
    pub fn to_hex(&self) -> String {
        let digits = self.n.div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let bit = d * 4;
            let nibble = (self.words[bit / WORD_BITS] >> (bit % WORD_BITS)) & 0xf;
            out.push(char::from_digit(nibble as u32, 16).expect("nibble < 16"));
        }
        out
    }

    pub fn from_hex(n: usize, hex: &str) -> Result<Self> {
        let digits = n.div_ceil(4);
        if hex.len() != digits {
            return Err(Error::invalid(format!(
                "expected {digits} hex digits for {n} spins, got {}",
                hex.len()
            )));
        }
        let mut s = Self::zeros(n);
        for (i, ch) in hex.chars().rev().enumerate() {
            if ch.is_ascii_uppercase() {
                return Err(Error::invalid(format!("hex digits must be lowercase: {hex:?}")));
            }
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::invalid(format!("invalid hex digit {ch:?}")))? as u64;
            let bit = i * 4;
            if nibble != 0 && bit + (64 - nibble.leading_zeros() as usize) > n {
                return Err(Error::invalid(format!("hex {hex:?} sets bits beyond spin {}", n - 1)));
            }
            s.words[bit / WORD_BITS] |= nibble << (bit % WORD_BITS);
        }
        Ok(s)
    }

    /// Human-readable form, e.g. `N=200; ones=[199,0]`.
    pub fn describe(&self) -> String {
        let ones: Vec<String> = self.ones().iter().map(|k| k.to_string()).collect();
        format!("N={}; ones=[{}]", self.n, ones.join(","))
    }

    /// Positions of excited spins as `199;0`, for CSV cells.
    pub fn ones_field(&self) -> String {
        let ones: Vec<String> = self.ones().iter().map(|k| k.to_string()).collect();
        ones.join(";")
    }
}

/// Numeric order of the bit strings, which equals the lexicographic order of
/// their hex serializations for a fixed `N`.
impl Ord for BasisState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for BasisState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flip_examples() {
        let s = BasisState::zeros(3);
        assert_eq!(s.flip(1).unwrap(), BasisState::from_ones(3, &[1]).unwrap());
        let n = 7;
        let left = BasisState::from_ones(n, &[n - 1]).unwrap();
        assert_eq!(left.flip(n - 2).unwrap(), BasisState::from_ones(n, &[n - 1, n - 2]).unwrap());
        assert!(matches!(s.flip(3), Err(Error::IndexOutOfRange { index: 3, n: 3 })));
    }

    #[test]
    fn hex_layout() {
        let s = BasisState::from_ones(200, &[199, 0]).unwrap();
        let hex = s.to_hex();
        assert_eq!(hex.len(), 50);
        assert_eq!(&hex[..1], "8");
        assert_eq!(&hex[49..], "1");
        assert_eq!(s.describe(), "N=200; ones=[199,0]");
        assert_eq!(BasisState::from_ones(5, &[4, 1]).unwrap().to_hex(), "12");
    }

    #[test]
    fn hex_rejects_bad_input() {
        assert!(BasisState::from_hex(5, "2").is_err());
        assert!(BasisState::from_hex(5, "22").is_err());
        assert!(BasisState::from_hex(5, "1g").is_err());
        assert!(BasisState::from_hex(8, "AB").is_err());
        assert!(BasisState::from_hex(5, "12").is_ok());
    }

    #[test]
    fn ordering_matches_hex() {
        let a = BasisState::from_ones(130, &[129]).unwrap();
        let b = BasisState::from_ones(130, &[64, 3]).unwrap();
        assert!(a > b);
        assert!(a.to_hex() > b.to_hex());
    }

    fn arb_state() -> impl Strategy<Value = BasisState> {
        (1usize..300).prop_flat_map(|n| {
            prop::collection::vec(any::<bool>(), n).prop_map(move |bits| {
                let ones: Vec<usize> = bits.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect();
                BasisState::from_ones(n, &ones).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn hex_round_trip(s in arb_state()) {
            prop_assert_eq!(BasisState::from_hex(s.len(), &s.to_hex()).unwrap(), s);
        }

        #[test]
        fn flip_is_involution(s in arb_state(), k in 0usize..300) {
            let k = k % s.len();
            prop_assert_eq!(s.flip(k).unwrap().flip(k).unwrap(), s);
        }

        #[test]
        fn order_agrees_with_hex(a in arb_state(), mask in any::<u64>()) {
            let n = a.len();
            let ones: Vec<usize> = (0..n).filter(|k| (mask >> (k % 64)) & 1 == 1 && k % 3 == 0).collect();
            let b = BasisState::from_ones(n, &ones).unwrap();
            prop_assert_eq!(a.cmp(&b), a.to_hex().cmp(&b.to_hex()));
        }
    }
}
