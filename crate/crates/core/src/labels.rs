use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Multi-hot label vector over a fixed vocabulary, packed into 64-bit words.
///
/// An all-zero set is a legal "not finding" label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    width: usize,
    words: Vec<u64>,
}

impl LabelSet {
    pub fn empty(width: usize) -> Self {
        Self {
            width,
            words: vec![0; width.div_ceil(64).max(1)],
        }
    }

    pub fn from_indices(width: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(width);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_indices(
            bits.len(),
            bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i),
        )
    }

    /// Number of classes the vector spans (not the number of set bits).
    pub fn width(&self) -> usize {
        self.width
    }

    /// Panics if `i` is outside the vocabulary.
    pub fn insert(&mut self, i: usize) {
        assert!(
            i < self.width,
            "label index {i} out of range {}",
            self.width
        );
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.width && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn intersects(&self, other: &LabelSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.words
            .iter()
            .zip(other.words.iter().chain(core::iter::repeat(&0)))
            .all(|(a, b)| a & !b == 0)
    }

    /// Set bits in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(move |&i| self.contains(i))
    }

    /// The complement within the vocabulary.
    pub fn complement(&self) -> Self {
        Self::from_indices(self.width, (0..self.width).filter(|&i| !self.contains(i)))
    }

    /// Projection onto an ordered class list, as 0/1 entries.
    pub fn restrict(&self, classes: &[usize]) -> Vec<u8> {
        classes
            .iter()
            .map(|&c| u8::from(self.contains(c)))
            .collect()
    }
}
