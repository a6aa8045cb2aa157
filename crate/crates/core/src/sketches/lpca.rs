//! Linear probabilistic counting with item-level downsampling rate `p`.

use crate::hashing::probability_threshold;

#[derive(Clone, Debug, PartialEq)]
pub struct Lpca {
    k: usize,
    words: Vec<u64>,
    p: f64,
    threshold: u128,
}

impl Lpca {
    pub(crate) fn new(k: usize, p: f64) -> Self {
        Lpca {
            k,
            words: vec![0; k.div_ceil(64)],
            p,
            threshold: probability_threshold(p),
        }
    }

    pub(crate) fn from_words(k: usize, p: f64, words: Vec<u64>) -> Self {
        Lpca {
            k,
            words,
            p,
            threshold: probability_threshold(p),
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn rate(&self) -> f64 {
        self.p
    }

    pub fn filled(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn bit(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    /// The bucket is `⌊h·k / 2^64⌋`; the low half of the same product is a
    /// uniform fraction that decides the downsampling.
    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        let product = h as u128 * self.k as u128;
        if (product as u64 as u128) >= self.threshold {
            return false;
        }
        let index = (product >> 64) as usize;
        let (word, mask) = (index / 64, 1u64 << (index % 64));
        let changed = self.words[word] & mask == 0;
        self.words[word] |= mask;
        changed
    }

    pub(crate) fn merge_from(&mut self, other: &Lpca) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    /// `p (1 − B/k)`.
    pub fn sampling_probability(&self) -> f64 {
        self.p * (1.0 - self.filled() as f64 / self.k as f64)
    }

    /// `−(k/p) ln(1 − B/k)`; a full bitmap has no finite estimate.
    pub fn estimate(&self) -> Option<f64> {
        let b = self.filled();
        if b >= self.k {
            return None;
        }
        let k = self.k as f64;
        Some(-(k / self.p) * (-(b as f64) / k).ln_1p())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = Lpca::new(64, 1.0);
        assert_eq!(s.estimate(), Some(0.0));
        assert_eq!(s.sampling_probability(), 1.0);

        let s = Lpca::from_words(4, 1.0, vec![0b0101]);
        assert_eq!(s.sampling_probability(), 0.5);
        assert!((s.estimate().unwrap() - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!((s.estimate().unwrap() - 2.7726).abs() < 1e-4);

        let s = Lpca::from_words(4, 1.0, vec![0b1111]);
        assert_eq!(s.estimate(), None);
        assert_eq!(s.sampling_probability(), 0.0);
    }

    #[test]
    fn rate_scales() {
        let s = Lpca::from_words(4, 0.25, vec![0b0011]);
        assert_eq!(s.sampling_probability(), 0.125);
        assert!((s.estimate().unwrap() - 16.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bucket_uses_full_range() {
        let mut s = Lpca::new(3, 1.0);
        s.add_hash(0);
        s.add_hash(u64::MAX);
        assert!(s.bit(0) && s.bit(2) && !s.bit(1));
    }
}
