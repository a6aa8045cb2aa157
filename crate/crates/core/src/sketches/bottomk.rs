//! Bottom-k (KMV): the `k` smallest distinct hash values.

use crate::hashing::{to_unit_interval, HashValue};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BottomK {
    k: usize,
    /// Sorted ascending, distinct, at most `k` entries.
    values: Vec<u64>,
}

impl BottomK {
    pub(crate) fn new(k: usize) -> Self {
        BottomK {
            k,
            values: Vec::with_capacity(k),
        }
    }

    pub(crate) fn from_values(k: usize, values: Vec<u64>) -> Self {
        BottomK { k, values }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.k
    }

    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        if self.is_full() && h >= self.values[self.k - 1] {
            return false;
        }
        match self.values.binary_search(&h) {
            Ok(_) => false,
            Err(pos) => {
                if self.is_full() {
                    self.values.pop();
                }
                self.values.insert(pos, h);
                true
            }
        }
    }

    pub(crate) fn merge_from(&mut self, other: &BottomK) {
        let mut merged = Vec::with_capacity(self.k);
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.values, &other.values);
        while merged.len() < self.k && (i < a.len() || j < b.len()) {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            merged.push(next);
        }
        self.values = merged;
    }

    /// The k-th minimum as a fraction, or 1 while fewer than `k` values are held.
    pub fn sampling_probability(&self) -> f64 {
        if self.is_full() {
            to_unit_interval(HashValue(self.values[self.k - 1]))
        } else {
            1.0
        }
    }

    /// `(k − 1)/π(s)` when full, the exact count otherwise.
    pub fn estimate(&self) -> f64 {
        if self.is_full() {
            (self.k as f64 - 1.0) / self.sampling_probability()
        } else {
            self.values.len() as f64
        }
    }
}
