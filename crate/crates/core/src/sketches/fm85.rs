//! Flajolet–Martin probabilistic counting with stochastic averaging (PCSA).
//!
//! `k` bitmaps of `ℓ` bits. An item picks a bitmap uniformly and sets bit
//! `j ∈ [1, ℓ]` with probability `2^{-j}`; ranks beyond `ℓ` are dropped so
//! that the state space is exactly `{0,1}^{k×ℓ}`.

use crate::hashing::split_unchecked;

/// Classical PCSA correction constant.
pub const PHI: f64 = 0.77351;

pub const DEFAULT_BITMAP_LEN: u8 = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fm85 {
    /// Bit `j - 1` of `bitmaps[i]` holds bit `(i, j)`.
    bitmaps: Vec<u64>,
    bitmap_len: u8,
    bucket_bits: u32,
}

impl Fm85 {
    pub(crate) fn new(k: usize, bitmap_len: u8) -> Self {
        Fm85 {
            bitmaps: vec![0; k],
            bitmap_len,
            bucket_bits: k.trailing_zeros(),
        }
    }

    pub(crate) fn from_bitmaps(bitmaps: Vec<u64>, bitmap_len: u8) -> Self {
        let bucket_bits = bitmaps.len().trailing_zeros();
        Fm85 {
            bitmaps,
            bitmap_len,
            bucket_bits,
        }
    }

    pub fn bitmaps(&self) -> &[u64] {
        &self.bitmaps
    }

    pub fn bitmap_len(&self) -> u8 {
        self.bitmap_len
    }

    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        let ell = self.bitmap_len as u32;
        let (bucket, rank) = split_unchecked(h, self.bucket_bits, ell + 1);
        if rank > ell {
            return false;
        }
        let bit = 1u64 << (rank - 1);
        let slot = &mut self.bitmaps[bucket as usize];
        let changed = *slot & bit == 0;
        *slot |= bit;
        changed
    }

    pub(crate) fn merge_from(&mut self, other: &Fm85) {
        for (a, b) in self.bitmaps.iter_mut().zip(&other.bitmaps) {
            *a |= *b;
        }
    }

    /// `Σ_{(i,j) unset} 2^{-j} / k`.
    pub fn sampling_probability(&self) -> f64 {
        let ell = self.bitmap_len as u32;
        let total: f64 = self
            .bitmaps
            .iter()
            .map(|&bm| {
                (1..=ell)
                    .filter(|j| bm & (1u64 << (j - 1)) == 0)
                    .map(|j| (-(j as f64)).exp2())
                    .sum::<f64>()
            })
            .sum();
        total / self.bitmaps.len() as f64
    }

    /// `(k/φ)·2^{Ā}` with `Ā` the mean position of the lowest unset bit.
    pub fn estimate(&self) -> f64 {
        if self.bitmaps.iter().all(|&b| b == 0) {
            return 0.0;
        }
        let k = self.bitmaps.len() as f64;
        let ell = self.bitmap_len as u32;
        let mean: f64 = self
            .bitmaps
            .iter()
            .map(|&b| b.trailing_ones().min(ell) as f64)
            .sum::<f64>()
            / k;
        k / PHI * mean.exp2()
    }
}
