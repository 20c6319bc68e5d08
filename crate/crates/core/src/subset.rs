//! Bitmask subsets of urn indices.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Hard cap on the number of urns; subsets are `u32` bitmasks and every
/// exact formula sums over all `2^n` subsets.
pub const MAX_URNS: usize = 20;

/// A set of urn indices stored as a bitmask (bit `i` set means urn `i` is a member).
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct UrnSet(u32);

impl UrnSet {
    pub const EMPTY: UrnSet = UrnSet(0);

    pub const fn from_bits(bits: u32) -> Self {
        UrnSet(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    /// All urns `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_URNS);
        if n == 0 {
            UrnSet(0)
        } else {
            UrnSet(u32::MAX >> (32 - n))
        }
    }

    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < MAX_URNS);
        UrnSet(1 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices
            .into_iter()
            .fold(UrnSet::EMPTY, |acc, i| acc.with(i))
    }

    pub fn with(self, i: usize) -> Self {
        UrnSet(self.0 | (1 << i))
    }

    pub fn without(self, i: usize) -> Self {
        UrnSet(self.0 & !(1 << i))
    }

    pub fn contains(self, i: usize) -> bool {
        i < 32 && self.0 & (1 << i) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: UrnSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: UrnSet) -> Self {
        UrnSet(self.0 | other.0)
    }

    pub fn intersection(self, other: UrnSet) -> Self {
        UrnSet(self.0 & other.0)
    }

    pub fn difference(self, other: UrnSet) -> Self {
        UrnSet(self.0 & !other.0)
    }

    /// Highest index referenced plus one (0 for the empty set).
    pub fn span(self) -> usize {
        32 - self.0.leading_zeros() as usize
    }

    /// Sign `(-1)^|self|`.
    pub fn parity_sign(self) -> f64 {
        if self.0.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> Members {
        Members(self.0)
    }

    /// Every subset of `self`, the empty set included, in decreasing bitmask order.
    pub fn subsets(self) -> Subsets {
        Subsets {
            mask: self.0,
            next: Some(self.0),
        }
    }

    /// Every set `S` with `self ⊆ S ⊆ universe`.
    pub fn supersets_within(self, universe: UrnSet) -> impl Iterator<Item = UrnSet> {
        let base = self;
        universe
            .difference(self)
            .subsets()
            .map(move |t| base.union(t))
    }

    /// Every subset of `{0..n}`, in increasing bitmask order.
    pub fn all(n: usize) -> impl Iterator<Item = UrnSet> {
        (0..(1u32 << n)).map(UrnSet)
    }
}

impl fmt::Display for UrnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

impl FromIterator<usize> for UrnSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        UrnSet::from_indices(iter)
    }
}

/// Iterator over member indices of an [`UrnSet`].
#[derive(Clone, Debug)]
pub struct Members(u32);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Submask enumeration (`t = (t - 1) & mask`).
#[derive(Clone, Debug)]
pub struct Subsets {
    mask: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = UrnSet;

    fn next(&mut self) -> Option<UrnSet> {
        let cur = self.next?;
        self.next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & self.mask)
        };
        Some(UrnSet(cur))
    }
}
