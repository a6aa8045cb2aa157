//! Seeded 64-bit hashing.
//!
//! Every sketch draws all of its randomness from a [`Seed`]. A seed is turned
//! into a 128-bit SipHash-1-3 key once (folding all 256 bits in), and each
//! evaluation prefixes the input with a role byte and a namespace byte. The
//! role byte keeps the sketch hash and the downsampling hash apart; the
//! namespace byte keeps real stream items apart from the synthetic items the
//! private constructions insert.

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use siphasher::sip::SipHasher13;
use siphasher::sip128::SipHasher13 as SipHasher13x128;

use crate::error::SketchError;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// 256 bits of randomness identifying one hash function.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub const LEN: usize = 32;

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Seed built from a single integer; handy for tests and trial schedules.
    pub fn from_u64(value: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&value.to_le_bytes());
        Seed(bytes)
    }

    /// Deterministically derives the `index`-th child seed.
    ///
    /// Used to give every Monte Carlo trial its own independent hash function
    /// while keeping a whole run reproducible from one master seed.
    pub fn derive(&self, index: u64) -> Seed {
        let hasher = ItemHasher::new(self);
        let mut out = [0u8; 32];
        for (lane, chunk) in out.chunks_exact_mut(8).enumerate() {
            let mut msg = [0u8; 9];
            msg[..8].copy_from_slice(&index.to_le_bytes());
            msg[8] = lane as u8;
            let h = hasher.hash_in(DERIVE_TAG, Namespace::Real, &msg);
            chunk.copy_from_slice(&h.0.to_le_bytes());
        }
        Seed(out)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_hex())
    }
}

impl FromStr for Seed {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() != 64 || !s.is_ascii() {
            return Err(SketchError::InvalidSeed(format!(
                "expected 64 hex characters, got {}",
                s.len()
            )));
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|e| SketchError::InvalidSeed(e.to_string()))?;
        }
        Ok(Seed(out))
    }
}

/// Which independent hash function to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HashRole {
    /// The hash consumed by the sketch itself.
    SketchHash,
    /// The hash deciding whether an item survives downsampling.
    DownsampleHash,
}

impl HashRole {
    fn tag(self) -> u8 {
        match self {
            HashRole::SketchHash => 0x53,
            HashRole::DownsampleHash => 0x44,
        }
    }
}

const DERIVE_TAG: u8 = 0x5a;

/// Item universe. Synthetic items live in namespaces no real item can reach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Namespace {
    Real,
    /// Phantoms inserted by the downsampled initializer.
    InitPhantom,
    /// Phantoms inserted by the merge-based initializer.
    MergePhantom,
}

impl Namespace {
    fn tag(self) -> u8 {
        match self {
            Namespace::Real => 0x00,
            Namespace::InitPhantom => 0x01,
            Namespace::MergePhantom => 0x02,
        }
    }
}

/// A 64-bit hash value, read as the fraction `bits / 2^64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HashValue(pub u64);

impl HashValue {
    #[inline]
    pub fn unit(self) -> f64 {
        to_unit_interval(self)
    }
}

/// `bits / 2^64`, always in `[0, 1)`.
#[inline]
pub fn to_unit_interval(h: HashValue) -> f64 {
    // Keep the top 53 bits so that rounding can never produce 1.0.
    (h.0 >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Converts a probability in `[0, 1]` into a 64-bit threshold `t` such that
/// `h < t` holds with probability `t / 2^64 ≈ p` over uniform `h`.
pub(crate) fn probability_threshold(p: f64) -> u128 {
    if p >= 1.0 {
        1u128 << 64
    } else if p <= 0.0 {
        0
    } else {
        (p * TWO_POW_64) as u128
    }
}

/// Pre-keyed hasher for one seed. Cheap to clone.
#[derive(Clone)]
pub struct ItemHasher {
    base: SipHasher13,
}

impl fmt::Debug for ItemHasher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ItemHasher")
    }
}

impl ItemHasher {
    pub fn new(seed: &Seed) -> Self {
        let mut k0 = [0u8; 16];
        k0.copy_from_slice(&seed.0[..16]);
        let key = SipHasher13x128::new_with_key(&k0)
            .hash(&seed.0[16..])
            .as_bytes();
        ItemHasher {
            base: SipHasher13::new_with_key(&key),
        }
    }

    #[inline]
    fn hash_in(&self, role_tag: u8, ns: Namespace, item: &[u8]) -> HashValue {
        let mut h = self.base.clone();
        h.write(&[role_tag, ns.tag()]);
        h.write(item);
        HashValue(h.finish())
    }

    /// Hash of a real stream item.
    #[inline]
    pub fn hash(&self, item: &[u8], role: HashRole) -> HashValue {
        self.hash_in(role.tag(), Namespace::Real, item)
    }

    /// Hash of the `counter`-th synthetic item of a phantom namespace.
    #[inline]
    pub fn hash_phantom(&self, ns: Namespace, counter: u64, role: HashRole) -> HashValue {
        self.hash_in(role.tag(), ns, &counter.to_le_bytes())
    }

    /// Hash of `item ∥ index` for hash families indexed by register.
    #[inline]
    pub fn hash_indexed(&self, item: &[u8], index: u32, role: HashRole) -> HashValue {
        let mut h = self.base.clone();
        h.write(&[role.tag(), Namespace::Real.tag()]);
        h.write(item);
        h.write(&index.to_le_bytes());
        HashValue(h.finish())
    }
}

/// One-shot hash of `item` under `(seed, role)`.
pub fn hash64(item: &[u8], seed: &Seed, role: HashRole) -> HashValue {
    ItemHasher::new(seed).hash(item, role)
}

/// Splits a hash into a bucket (the top `log2 k` bits) and a geometric rank
/// (one plus the leading zeros of the remaining bits, clamped to `max_rank`).
pub fn split_bucket_rank(h: HashValue, k: u64, max_rank: u32) -> Result<(u64, u32), SketchError> {
    if k == 0 || !k.is_power_of_two() {
        return Err(SketchError::InvalidConfig(format!(
            "bucket count {k} is not a power of two"
        )));
    }
    let bits = k.trailing_zeros();
    if max_rank == 0 || max_rank > 64 - bits {
        return Err(SketchError::InvalidConfig(format!(
            "max rank {max_rank} outside [1, {}] for k = {k}",
            64 - bits
        )));
    }
    Ok(split_unchecked(h.0, bits, max_rank))
}

/// `split_bucket_rank` without validation; `bits = log2 k`.
#[inline]
pub(crate) fn split_unchecked(h: u64, bits: u32, max_rank: u32) -> (u64, u32) {
    let bucket = if bits == 0 { 0 } else { h >> (64 - bits) };
    let rest = h << bits;
    let rank = (rest.leading_zeros() + 1).min(max_rank);
    (bucket, rank)
}
