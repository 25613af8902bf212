//! Compact bitsets over dense terminal indices.
//!
//! Spans identify which terminals a statement covers. Scenes map segment
//! ids to dense indices `0..n`, so a span is a fixed-width bitset; almost
//! every scene fits in a single word.

use smallvec::SmallVec;

/// Set of terminal indices, stored as a fixed number of 64-bit words.
///
/// All spans of one scene share the same word count; binary operations
/// assume equal widths.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Span {
    words: SmallVec<[u64; 1]>,
}

impl Span {
    pub fn words_for(n_terminals: usize) -> usize {
        n_terminals.div_ceil(64).max(1)
    }

    pub fn empty(words: usize) -> Self {
        Span {
            words: SmallVec::from_elem(0, words),
        }
    }

    pub fn singleton(words: usize, index: usize) -> Self {
        let mut s = Self::empty(words);
        s.insert(index);
        s
    }

    pub fn insert(&mut self, index: usize) {
        self.words[index / 64] |= 1u64 << (index % 64);
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_disjoint(&self, other: &Span) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn intersects(&self, other: &Span) -> bool {
        !self.is_disjoint(other)
    }

    pub fn union(&self, other: &Span) -> Span {
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        Span { words }
    }

    pub fn union_with(&mut self, other: &Span) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Lowest set index, if any.
    pub fn min_index(&self) -> Option<usize> {
        for (i, w) in self.words.iter().enumerate() {
            if *w != 0 {
                return Some(i * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, w)| {
            let mut w = *w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + bit)
                }
            })
        })
    }
}

impl std::fmt::Debug for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
