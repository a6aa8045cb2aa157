//! HyperLogLog: `k` registers, each the maximum geometric rank seen in its bucket.

use crate::hashing::split_unchecked;

/// Register width in bits used unless configured otherwise.
pub const DEFAULT_REGISTER_WIDTH: u8 = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hll {
    registers: Vec<u8>,
    bucket_bits: u32,
    max_rank: u32,
}

/// Bias constant `α_k` of the raw harmonic-mean estimator.
pub fn alpha(k: usize) -> f64 {
    match k {
        16 => 0.673,
        32 => 0.697,
        64 => 0.709,
        _ => 0.7213 / (1.0 + 1.079 / k as f64),
    }
}

impl Hll {
    pub(crate) fn new(k: usize, register_width: u8) -> Self {
        Hll {
            registers: vec![0; k],
            bucket_bits: k.trailing_zeros(),
            max_rank: (1u32 << register_width) - 1,
        }
    }

    pub(crate) fn from_registers(registers: Vec<u8>, register_width: u8) -> Self {
        let bucket_bits = registers.len().trailing_zeros();
        Hll {
            registers,
            bucket_bits,
            max_rank: (1u32 << register_width) - 1,
        }
    }

    pub fn registers(&self) -> &[u8] {
        &self.registers
    }

    /// Largest value a register can hold.
    pub fn max_rank(&self) -> u8 {
        self.max_rank as u8
    }

    /// Largest value currently held by any register.
    pub fn max_register(&self) -> u8 {
        self.registers.iter().copied().max().unwrap_or(0)
    }

    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        let (bucket, rank) = split_unchecked(h, self.bucket_bits, self.max_rank);
        let slot = &mut self.registers[bucket as usize];
        if rank as u8 > *slot {
            *slot = rank as u8;
            true
        } else {
            false
        }
    }

    pub(crate) fn merge_from(&mut self, other: &Hll) {
        for (a, b) in self.registers.iter_mut().zip(&other.registers) {
            *a = (*a).max(*b);
        }
    }

    fn harmonic_sum(&self) -> f64 {
        self.registers.iter().map(|&r| (-(r as f64)).exp2()).sum()
    }

    /// `π(s) = k⁻¹ Σ 2^{-s_i}`.
    pub fn sampling_probability(&self) -> f64 {
        self.harmonic_sum() / self.registers.len() as f64
    }

    /// The raw estimator `α_k k / π(s)`, defined for every state.
    pub fn raw_estimate(&self) -> f64 {
        let k = self.registers.len() as f64;
        alpha(self.registers.len()) * k * k / self.harmonic_sum()
    }

    /// Raw estimate, falling back to linear counting in the small range.
    pub fn estimate(&self) -> f64 {
        let k = self.registers.len() as f64;
        let raw = self.raw_estimate();
        let zeros = self.registers.iter().filter(|&&r| r == 0).count();
        if raw <= 2.5 * k && zeros > 0 {
            k * (k / zeros as f64).ln()
        } else {
            raw
        }
    }
}
