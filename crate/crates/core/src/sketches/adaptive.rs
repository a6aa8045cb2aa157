//! Wegman's adaptive sampling.
//!
//! Holds every hash below the threshold `2^{-d}`. The threshold halves as soon
//! as `k` hashes would be held, so at most `k − 1` are ever stored. With that
//! rule the depth is the smallest `d` with fewer than `k` hashes below
//! `2^{-d}`, the threshold never exceeds the k-th minimum hash, and at most
//! `k` items can change the state when removed.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdaptiveSampling {
    k: usize,
    depth: u8,
    /// Sorted ascending, all below the threshold.
    values: Vec<u64>,
}

#[inline]
fn below(h: u64, depth: u8) -> bool {
    depth == 0 || (depth < 64 && h >> (64 - depth) == 0)
}

impl AdaptiveSampling {
    pub(crate) fn new(k: usize) -> Self {
        AdaptiveSampling {
            k,
            depth: 0,
            values: Vec::with_capacity(k),
        }
    }

    pub(crate) fn from_parts(k: usize, depth: u8, values: Vec<u64>) -> Self {
        AdaptiveSampling { k, depth, values }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        (-(self.depth as f64)).exp2()
    }

    fn settle(&mut self) {
        while self.values.len() >= self.k {
            self.depth += 1;
            let d = self.depth;
            self.values.retain(|&v| below(v, d));
        }
    }

    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        if !below(h, self.depth) {
            return false;
        }
        match self.values.binary_search(&h) {
            Ok(_) => false,
            Err(pos) => {
                self.values.insert(pos, h);
                self.settle();
                true
            }
        }
    }

    pub(crate) fn merge_from(&mut self, other: &AdaptiveSampling) {
        let depth = self.depth.max(other.depth);
        let mut values: Vec<u64> = self
            .values
            .iter()
            .chain(&other.values)
            .copied()
            .filter(|&v| below(v, depth))
            .collect();
        values.sort_unstable();
        values.dedup();
        self.depth = depth;
        self.values = values;
        self.settle();
    }

    pub fn sampling_probability(&self) -> f64 {
        self.threshold()
    }

    pub fn estimate(&self) -> f64 {
        self.values.len() as f64 / self.threshold()
    }
}
