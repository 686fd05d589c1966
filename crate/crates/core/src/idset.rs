//! Small dense bitsets over interned thread, location and lock indices.

use std::fmt;

/// A set of small integers backed by a bit vector.
///
/// Members below 64 live inline; higher words are never stored when zero,
/// so two sets with the same members always compare and hash equal.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdSet {
    lo: u64,
    // boxed so the common single-word set stays two words wide
    #[allow(clippy::box_collection)]
    hi: Option<Box<Vec<u64>>>,
}

impl IdSet {
    pub fn new() -> Self {
        IdSet::default()
    }

    pub fn singleton(i: u32) -> Self {
        let mut s = IdSet::new();
        s.insert(i);
        s
    }

    /// The set `{0, 1, ..., n-1}`.
    pub fn full(n: u32) -> Self {
        (0..n).collect()
    }

    #[inline]
    fn hi(&self) -> &[u64] {
        self.hi.as_deref().map_or(&[], |v| v.as_slice())
    }

    #[inline]
    fn word(&self, w: usize) -> u64 {
        if w == 0 {
            self.lo
        } else {
            self.hi().get(w - 1).copied().unwrap_or(0)
        }
    }

    #[inline]
    fn words(&self) -> usize {
        1 + self.hi().len()
    }

    fn hi_mut(&mut self, len: usize) -> &mut Vec<u64> {
        let v = self.hi.get_or_insert_with(Default::default);
        if v.len() < len {
            v.resize(len, 0);
        }
        v
    }

    #[inline]
    fn word_mut(&mut self, w: usize) -> &mut u64 {
        if w == 0 {
            &mut self.lo
        } else {
            &mut self.hi_mut(w)[w - 1]
        }
    }

    #[inline]
    pub fn contains(&self, i: u32) -> bool {
        self.word((i / 64) as usize) & (1u64 << (i % 64)) != 0
    }

    /// Inserts `i`, returning true if it was not already present.
    #[inline]
    pub fn insert(&mut self, i: u32) -> bool {
        let bit = 1u64 << (i % 64);
        let w = self.word_mut((i / 64) as usize);
        let fresh = *w & bit == 0;
        *w |= bit;
        fresh
    }

    /// Removes `i`, returning true if it was present.
    #[inline]
    pub fn remove(&mut self, i: u32) -> bool {
        let w = (i / 64) as usize;
        let bit = 1u64 << (i % 64);
        let had = self.word(w) & bit != 0;
        if had {
            *self.word_mut(w) &= !bit;
            self.trim();
        }
        had
    }

    #[inline]
    fn trim(&mut self) {
        if let Some(v) = &mut self.hi {
            while let Some(&0) = v.last() {
                v.pop();
            }
            if v.is_empty() {
                self.hi = None;
            }
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.lo == 0 && self.hi.is_none()
    }

    pub fn len(&self) -> usize {
        self.lo.count_ones() as usize + self.hi().iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    pub fn clear(&mut self) {
        self.lo = 0;
        self.hi = None;
    }

    /// `self ⊆ other`
    #[inline]
    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.lo & !other.lo == 0
            && (self.hi.is_none()
                || self.hi().len() <= other.hi().len() && self.hi().iter().zip(other.hi()).all(|(a, b)| a & !b == 0))
    }

    #[inline]
    pub fn intersects(&self, other: &IdSet) -> bool {
        self.lo & other.lo != 0 || self.hi().iter().zip(other.hi()).any(|(a, b)| a & b != 0)
    }

    pub fn union_with(&mut self, other: &IdSet) {
        self.lo |= other.lo;
        if other.hi.is_some() {
            let v = self.hi_mut(other.hi().len());
            for (a, b) in v.iter_mut().zip(other.hi()) {
                *a |= b;
            }
        }
    }

    pub fn difference_with(&mut self, other: &IdSet) {
        self.lo &= !other.lo;
        if let (Some(v), Some(o)) = (&mut self.hi, &other.hi) {
            for (a, b) in v.iter_mut().zip(o.iter()) {
                *a &= !b;
            }
            self.trim();
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.words()).flat_map(move |wi| {
            let mut bits = self.word(wi);
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros();
                bits &= bits - 1;
                Some(wi as u32 * 64 + tz)
            })
        })
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<u32> for IdSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut s = IdSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}
