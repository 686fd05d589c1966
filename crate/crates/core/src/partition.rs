//! Candidate partitioning by memory location and the data-parallel helpers
//! used to drive independent partitions. With the `parallel` feature the
//! helpers run on the rayon pool; without it they run sequentially.

use crate::trace::LocId;

/// Slice `index` of `count` slices of the location space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub index: u32,
    pub count: u32,
}

impl Partition {
    pub fn whole() -> Self {
        Partition { index: 0, count: 1 }
    }

    pub fn all(count: u32) -> Vec<Partition> {
        let count = count.max(1);
        (0..count).map(|index| Partition { index, count }).collect()
    }

    #[inline]
    pub fn owns(&self, x: LocId) -> bool {
        x % self.count == self.index
    }
}

#[cfg(feature = "parallel")]
pub fn for_each_mut<T: Send>(items: &mut [T], f: impl Fn(&mut T) + Sync + Send) {
    use rayon::prelude::*;
    items.par_iter_mut().for_each(f);
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T: Send>(items: &mut [T], f: impl Fn(&mut T) + Sync + Send) {
    items.iter_mut().for_each(f);
}

#[cfg(feature = "parallel")]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Whether the data-parallel backend was compiled in.
pub const PARALLEL: bool = cfg!(feature = "parallel");
