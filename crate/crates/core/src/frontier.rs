//! Sets of NFA states grouped by an exact-match key, optionally kept as an
//! antichain of minimal summaries per key.

use rustc_hash::FxBuildHasher;
use std::collections::{HashMap, HashSet};
use std::hash::Hash;

pub type DetHasher = FxBuildHasher;
pub type DetMap<K, V> = HashMap<K, V, DetHasher>;
pub type DetSet<K> = HashSet<K, DetHasher>;

/// The part of a state compared by subset; smaller summaries are more permissive.
pub trait Summary: Clone + Eq + Hash {
    fn le(&self, other: &Self) -> bool;
}

#[derive(Clone, Debug)]
enum Bucket<S> {
    Minimal(Vec<S>),
    Exact(DetSet<S>),
}

impl<S: Summary> Bucket<S> {
    fn len(&self) -> usize {
        match self {
            Bucket::Minimal(v) => v.len(),
            Bucket::Exact(s) => s.len(),
        }
    }

    /// Moves every summary to `out`, keeping the allocation.
    fn drain_into(&mut self, out: &mut Vec<S>) {
        match self {
            Bucket::Minimal(v) => out.append(v),
            Bucket::Exact(s) => out.extend(s.drain()),
        }
    }

    /// Returns whether `s` was kept and how many states it displaced.
    fn add(&mut self, s: S) -> (bool, usize) {
        match self {
            Bucket::Minimal(v) => {
                if v.iter().any(|t| t.le(&s)) {
                    return (false, 0);
                }
                let before = v.len();
                v.retain(|t| !s.le(t));
                let removed = before - v.len();
                v.push(s);
                (true, removed)
            }
            Bucket::Exact(set) => (set.insert(s), 0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Frontier<K, S> {
    antichain: bool,
    map: DetMap<K, Bucket<S>>,
    len: usize,
}

impl<K: Clone + Eq + Hash, S: Summary> Frontier<K, S> {
    pub fn new(antichain: bool) -> Self {
        Frontier { antichain, map: DetMap::default(), len: 0 }
    }

    pub fn antichain(&self) -> bool {
        self.antichain
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn keys(&self) -> usize {
        self.map.len()
    }

    /// Adds a state; returns false if it was already present or subsumed.
    pub fn insert(&mut self, key: K, s: S) -> bool {
        let antichain = self.antichain;
        let bucket = self.map.entry(key).or_insert_with(|| {
            if antichain {
                Bucket::Minimal(Vec::new())
            } else {
                Bucket::Exact(DetSet::default())
            }
        });
        let (kept, removed) = bucket.add(s);
        self.len = self.len + kept as usize - removed;
        kept
    }

    /// Replaces every state by its successors. `f` receives a key and one of
    /// its summaries and pushes successors under the same key to `same` and
    /// under other keys to `moved`.
    pub fn advance(&mut self, mut f: impl FnMut(&K, S, &mut Vec<S>, &mut Vec<(K, S)>)) {
        let mut moved = Vec::new();
        let mut olds = Vec::new();
        let mut same = Vec::new();
        let mut len = 0usize;
        self.map.retain(|k, b| {
            b.drain_into(&mut olds);
            for s in olds.drain(..) {
                f(k, s, &mut same, &mut moved);
                for n in same.drain(..) {
                    b.add(n);
                }
            }
            len += b.len();
            b.len() > 0
        });
        self.len = len;
        for (k, s) in moved {
            self.insert(k, s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &S)> {
        self.map.iter().flat_map(|(k, b)| {
            let items: Box<dyn Iterator<Item = &S>> = match b {
                Bucket::Minimal(v) => Box::new(v.iter()),
                Bucket::Exact(s) => Box::new(s.iter()),
            };
            items.map(move |s| (k, s))
        })
    }

    /// Removes every state, handing back each key with its summaries.
    pub fn take_groups(&mut self) -> Vec<(K, Vec<S>)> {
        self.len = 0;
        std::mem::take(&mut self.map)
            .into_iter()
            .map(|(k, b)| {
                let v = match b {
                    Bucket::Minimal(v) => v,
                    Bucket::Exact(s) => s.into_iter().collect(),
                };
                (k, v)
            })
            .collect()
    }

    pub fn retain_keys(&mut self, mut keep: impl FnMut(&K) -> bool) {
        let mut dropped = 0;
        self.map.retain(|k, b| {
            let k_ok = keep(k);
            if !k_ok {
                dropped += b.len();
            }
            k_ok
        });
        self.len -= dropped;
    }

    /// Drops individual states failing `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&K, &S) -> bool) {
        let mut len = 0;
        self.map.retain(|k, b| {
            match b {
                Bucket::Minimal(v) => v.retain(|s| keep(k, s)),
                Bucket::Exact(set) => set.retain(|s| keep(k, s)),
            }
            len += b.len();
            b.len() > 0
        });
        self.len = len;
    }
}
