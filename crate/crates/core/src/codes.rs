//! Binary latent codes computed from chronological sample indices.
//!
//! A subvector of width `m` encodes index `i` as the `m` least significant
//! bits of `i * p^e`, where `e` is the largest exponent with `p^e < 2^m`.
//! Because `p` is an odd prime the multiplier is odd, hence invertible
//! modulo `2^m`, so indices `1..=2^m` map to distinct words. A full code is
//! the batch prefix followed by every index subvector, each written most
//! significant bit first, with bits mapped to `-1`/`+1`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest prime accepted as a multiplier base.
pub const MAX_PRIME: u64 = (1 << 32) - 1;

/// Width and prime of one code segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubvectorSpec {
    bits: u32,
    prime: u64,
}

impl SubvectorSpec {
    pub fn new(bits: u32, prime: u64) -> Result<Self> {
        if !(1..=63).contains(&bits) {
            return Err(Error::InvalidSpec(format!("bit width {bits} not in 1..=63")));
        }
        if prime == 2 || !is_prime(prime) {
            return Err(Error::InvalidSpec(format!("{prime} is not an odd prime")));
        }
        if prime > MAX_PRIME {
            return Err(Error::InvalidSpec(format!("prime {prime} exceeds {MAX_PRIME}")));
        }
        Ok(Self { bits, prime })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    /// Number of indices this subvector can tell apart, `2^m`.
    pub fn capacity(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn exponent(&self) -> u32 {
        largest_exponent_below(self.bits, self.prime)
    }

    /// `p^e`, always odd and strictly between `2^m / p` and `2^m`.
    pub fn multiplier(&self) -> u64 {
        self.prime.pow(self.exponent())
    }

    pub fn encode(&self, index: u64) -> Result<u64> {
        if index == 0 || index > self.capacity() {
            return Err(Error::IndexOutOfCapacity {
                index,
                capacity: self.capacity(),
            });
        }
        let product = index as u128 * self.multiplier() as u128;
        Ok((product & (self.capacity() as u128 - 1)) as u64)
    }

    /// Appends the `m` bits of `word`, most significant first.
    fn push_bits(&self, word: u64, out: &mut Vec<bool>) {
        out.extend((0..self.bits).rev().map(|k| (word >> k) & 1 == 1));
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

fn largest_exponent_below(bits: u32, prime: u64) -> u32 {
    let bound = 1u128 << bits;
    let (mut power, mut e) = (1u128, 0u32);
    while power * (prime as u128) < bound {
        power *= prime as u128;
        e += 1;
    }
    e
}

/// `floor(m ln 2 / ln p)`, evaluated exactly as the largest `e` with `p^e < 2^m`.
pub fn exponent(bits: u32, prime: u64) -> Result<u32> {
    SubvectorSpec::new(bits, prime).map(|s| s.exponent())
}

/// `(i * p^e) mod 2^m` for `1 <= i <= 2^m`.
pub fn subvector_code(index: u64, spec: &SubvectorSpec) -> Result<u64> {
    spec.encode(index)
}

/// Concatenated index bits over `subvectors`, in order. Empty input gives an
/// empty bit string.
pub fn index_code(index: u64, subvectors: &[SubvectorSpec]) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(subvectors.iter().map(|s| s.bits as usize).sum());
    for spec in subvectors {
        let word = spec.encode(index)?;
        spec.push_bits(word, &mut bits);
    }
    Ok(bits)
}

/// A code with entries in `{-1, +1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryCode(Vec<i8>);

impl BinaryCode {
    pub fn from_bits(bits: &[bool]) -> Self {
        Self(bits.iter().map(|&b| if b { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    pub fn bits(&self) -> Vec<bool> {
        self.0.iter().map(|&v| v > 0).collect()
    }

    /// Squared Euclidean distance from a real-valued latent.
    pub fn distance_sq(&self, latent: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(latent)
            .map(|(&c, &z)| {
                let d = z - c as f64;
                d * d
            })
            .sum()
    }
}

impl fmt::Display for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.0 {
            f.write_str(if v > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Prefix and index subvectors that together define `c(batch, i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeLayout {
    index_subvectors: Vec<SubvectorSpec>,
    prefix: SubvectorSpec,
}

impl CodeLayout {
    pub fn new(index_subvectors: Vec<SubvectorSpec>, prefix: SubvectorSpec) -> Result<Self> {
        if index_subvectors.is_empty() {
            return Err(Error::InvalidSpec("layout needs at least one index subvector".into()));
        }
        for (k, a) in index_subvectors.iter().enumerate() {
            if index_subvectors[..k].iter().any(|b| b.prime == a.prime) {
                return Err(Error::InvalidSpec(format!(
                    "index subvector prime {} used twice",
                    a.prime
                )));
            }
        }
        Ok(Self {
            index_subvectors,
            prefix,
        })
    }

    /// Index subvectors sharing one width, with the given primes.
    pub fn uniform(index_bits: u32, primes: &[u64], prefix_bits: u32, prefix_prime: u64) -> Result<Self> {
        let index = primes
            .iter()
            .map(|&p| SubvectorSpec::new(index_bits, p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(index, SubvectorSpec::new(prefix_bits, prefix_prime)?)
    }

    pub fn index_subvectors(&self) -> &[SubvectorSpec] {
        &self.index_subvectors
    }

    pub fn prefix(&self) -> &SubvectorSpec {
        &self.prefix
    }

    /// Total code length `n`.
    pub fn len(&self) -> usize {
        self.prefix.bits as usize + self.index_subvectors.iter().map(|s| s.bits as usize).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest admissible sample index.
    pub fn capacity(&self) -> u64 {
        self.index_subvectors.iter().map(|s| s.capacity()).min().unwrap_or(1)
    }

    pub fn batch_capacity(&self) -> u64 {
        self.prefix.capacity()
    }

    pub fn index_code(&self, index: u64) -> Result<Vec<bool>> {
        if index == 0 || index > self.capacity() {
            return Err(Error::IndexOutOfCapacity {
                index,
                capacity: self.capacity(),
            });
        }
        index_code(index, &self.index_subvectors)
    }

    pub fn full_code(&self, batch: u64, index: u64) -> Result<BinaryCode> {
        if batch == 0 || batch > self.batch_capacity() {
            return Err(Error::BatchOutOfCapacity {
                batch,
                capacity: self.batch_capacity(),
            });
        }
        let mut bits = Vec::with_capacity(self.len());
        self.prefix.push_bits(self.prefix.encode(batch)?, &mut bits);
        bits.extend(self.index_code(index)?);
        Ok(BinaryCode::from_bits(&bits))
    }

    /// Codes for `first..=last` under one batch prefix, in index order.
    pub fn codebook(&self, batch: u64, first: u64, last: u64) -> Result<Vec<BinaryCode>> {
        if first > last {
            return Err(Error::InvalidRange { first, last });
        }
        (first..=last).map(|i| self.full_code(batch, i)).collect()
    }
}

impl Default for CodeLayout {
    /// Four 16-bit index subvectors (primes 3, 5, 7, 11) behind an 8-bit
    /// batch prefix (prime 3): `n = 72`.
    fn default() -> Self {
        Self::uniform(16, &[3, 5, 7, 11], 8, 3).expect("default layout is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: u32, p: u64) -> SubvectorSpec {
        SubvectorSpec::new(m, p).unwrap()
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(exponent(4, 3).unwrap(), 2);
        assert_eq!(spec(4, 3).multiplier(), 9);
        assert_eq!(exponent(1, 3).unwrap(), 0);
        assert_eq!(spec(1, 3).multiplier(), 1);
        assert_eq!(exponent(8, 5).unwrap(), 3);
        assert_eq!(spec(8, 5).multiplier(), 125);
        assert_eq!(exponent(4, 5).unwrap(), 1);
    }

    #[test]
    fn exponent_matches_float_floor_away_from_boundaries() {
        for m in 1..=63u32 {
            for p in [3u64, 5, 7, 11, 13, 101, 65_537] {
                let float = (m as f64 * 2f64.ln() / (p as f64).ln()).floor() as u32;
                assert_eq!(exponent(m, p).unwrap(), float, "m={m} p={p}");
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(SubvectorSpec::new(0, 3), Err(Error::InvalidSpec(_))));
        assert!(matches!(SubvectorSpec::new(64, 3), Err(Error::InvalidSpec(_))));
        assert!(matches!(SubvectorSpec::new(8, 2), Err(Error::InvalidSpec(_))));
        assert!(matches!(SubvectorSpec::new(8, 9), Err(Error::InvalidSpec(_))));
        assert!(matches!(SubvectorSpec::new(8, 1), Err(Error::InvalidSpec(_))));
        assert!(matches!(exponent(8, 15), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn subvector_code_examples() {
        let s = spec(4, 3);
        assert_eq!(subvector_code(1, &s).unwrap(), 0b1001);
        assert_eq!(subvector_code(2, &s).unwrap(), 0b0010);
        assert_eq!(subvector_code(16, &s).unwrap(), 0);
        assert!(matches!(
            subvector_code(17, &s),
            Err(Error::IndexOutOfCapacity { index: 17, capacity: 16 })
        ));
        assert!(subvector_code(0, &s).is_err());
    }

    #[test]
    fn sixty_three_bit_subvector_does_not_overflow() {
        let s = spec(63, 3);
        let cap = s.capacity();
        let a = s.encode(cap).unwrap();
        let b = s.encode(cap - 1).unwrap();
        assert_eq!(a, 0);
        assert_ne!(a, b);
    }

    #[test]
    fn index_code_examples() {
        let bits = index_code(3, &[spec(4, 3)]).unwrap();
        assert_eq!(bits, vec![true, false, true, true]);

        let bits = index_code(1, &[spec(4, 3), spec(4, 5)]).unwrap();
        let expected: Vec<bool> = "10010101".chars().map(|c| c == '1').collect();
        assert_eq!(bits, expected);

        assert!(index_code(12345, &[]).unwrap().is_empty());
    }

    #[test]
    fn full_code_example() {
        let layout = CodeLayout::new(vec![spec(4, 3)], spec(4, 3)).unwrap();
        let code = layout.full_code(1, 1).unwrap();
        assert_eq!(code.values(), &[1, -1, -1, 1, 1, -1, -1, 1]);
        assert_eq!(code.to_string(), "+--++--+");
        assert_eq!(code, layout.full_code(1, 1).unwrap());
        assert_ne!(code, layout.full_code(1, 2).unwrap());
    }

    #[test]
    fn full_code_capacity_errors() {
        let layout = CodeLayout::new(vec![spec(4, 3)], spec(2, 3)).unwrap();
        assert!(matches!(layout.full_code(5, 1), Err(Error::BatchOutOfCapacity { .. })));
        assert!(matches!(layout.full_code(0, 1), Err(Error::BatchOutOfCapacity { .. })));
        assert!(matches!(layout.full_code(1, 17), Err(Error::IndexOutOfCapacity { .. })));
    }

    #[test]
    fn codebook_examples() {
        let layout = CodeLayout::new(vec![spec(4, 3)], spec(4, 3)).unwrap();
        assert_eq!(layout.codebook(1, 1, 1).unwrap(), vec![layout.full_code(1, 1).unwrap()]);
        let book = layout.codebook(1, 1, 16).unwrap();
        let distinct: std::collections::HashSet<_> = book.iter().collect();
        assert_eq!(distinct.len(), 16);
        assert!(matches!(layout.codebook(1, 3, 2), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn layout_rejects_duplicate_primes() {
        assert!(CodeLayout::new(vec![spec(8, 3), spec(8, 3)], spec(4, 3)).is_err());
        assert!(CodeLayout::new(vec![], spec(4, 3)).is_err());
    }

    #[test]
    fn default_layout_shape() {
        let layout = CodeLayout::default();
        assert_eq!(layout.len(), 72);
        assert_eq!(layout.capacity(), 1 << 16);
        assert_eq!(layout.batch_capacity(), 256);
    }
}
