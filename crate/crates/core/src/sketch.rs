//! The contract shared by every hash-based, order-invariant sketch.
//!
//! A [`SketchState`] depends only on the set of sketch-hash values of the
//! items it has seen. It exposes the two quantities the privacy analysis is
//! phrased in: the sampling probability `π(s)` of the current state and the
//! removal bound `k_max` of its configuration.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Result, SketchError};
use crate::hashing::{HashRole, HashValue, ItemHasher, Namespace, Seed};
use crate::sketches::fm85::DEFAULT_BITMAP_LEN;
use crate::sketches::hll::DEFAULT_REGISTER_WIDTH;
use crate::sketches::{AdaptiveSampling, BottomK, Fm85, Hll, Lpca, Registers};

const MAX_K: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Hll,
    BottomK,
    Fm85,
    Lpca,
    #[serde(rename = "adaptive")]
    AdaptiveSampling,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Hll,
        Family::BottomK,
        Family::Fm85,
        Family::Lpca,
        Family::AdaptiveSampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Hll => "hll",
            Family::BottomK => "bottomk",
            Family::Fm85 => "fm85",
            Family::Lpca => "lpca",
            Family::AdaptiveSampling => "adaptive",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Family::Hll => 1,
            Family::BottomK => 2,
            Family::Fm85 => 3,
            Family::Lpca => 4,
            Family::AdaptiveSampling => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hll" => Ok(Family::Hll),
            "bottomk" | "bottom-k" | "kmv" => Ok(Family::BottomK),
            "fm85" | "pcsa" => Ok(Family::Fm85),
            "lpca" => Ok(Family::Lpca),
            "adaptive" | "adaptive-sampling" => Ok(Family::AdaptiveSampling),
            other => Err(SketchError::InvalidConfig(format!("unknown family '{other}'"))),
        }
    }
}

/// Family plus its size and family-specific parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SketchConfig {
    Hll { k: usize, register_width: u8 },
    BottomK { k: usize },
    Fm85 { k: usize, bitmap_len: u8 },
    /// `p` is the item-level downsampling rate, in `(0, 1]`.
    Lpca { k: usize, p: f64 },
    AdaptiveSampling { k: usize },
}

impl SketchConfig {
    pub fn hll(k: usize) -> Self {
        SketchConfig::Hll {
            k,
            register_width: DEFAULT_REGISTER_WIDTH,
        }
    }

    pub fn bottom_k(k: usize) -> Self {
        SketchConfig::BottomK { k }
    }

    pub fn fm85(k: usize) -> Self {
        SketchConfig::Fm85 {
            k,
            bitmap_len: DEFAULT_BITMAP_LEN,
        }
    }

    pub fn lpca(k: usize) -> Self {
        SketchConfig::Lpca { k, p: 1.0 }
    }

    pub fn adaptive(k: usize) -> Self {
        SketchConfig::AdaptiveSampling { k }
    }

    /// Default configuration of `family` with `k` buckets.
    pub fn with_family(family: Family, k: usize) -> Self {
        match family {
            Family::Hll => Self::hll(k),
            Family::BottomK => Self::bottom_k(k),
            Family::Fm85 => Self::fm85(k),
            Family::Lpca => Self::lpca(k),
            Family::AdaptiveSampling => Self::adaptive(k),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            SketchConfig::Hll { .. } => Family::Hll,
            SketchConfig::BottomK { .. } => Family::BottomK,
            SketchConfig::Fm85 { .. } => Family::Fm85,
            SketchConfig::Lpca { .. } => Family::Lpca,
            SketchConfig::AdaptiveSampling { .. } => Family::AdaptiveSampling,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SketchConfig::Hll { k, .. }
            | SketchConfig::BottomK { k }
            | SketchConfig::Fm85 { k, .. }
            | SketchConfig::Lpca { k, .. }
            | SketchConfig::AdaptiveSampling { k } => k,
        }
    }

    /// Maximum number of items whose removal can change the state.
    pub fn kmax(&self) -> u64 {
        match *self {
            SketchConfig::Fm85 { k, bitmap_len } => k as u64 * bitmap_len as u64,
            other => other.k() as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let bad = |msg: String| Err(SketchError::InvalidConfig(msg));
        if k == 0 || k > MAX_K {
            return bad(format!("k = {k} outside [1, {MAX_K}]"));
        }
        match *self {
            SketchConfig::Hll { register_width, .. } => {
                if !k.is_power_of_two() {
                    return bad(format!("HLL needs a power-of-two k, got {k}"));
                }
                if !(1..=6).contains(&register_width) {
                    return bad(format!("register width {register_width} outside [1, 6]"));
                }
                let max_rank = (1u32 << register_width) - 1;
                if max_rank > 64 - k.trailing_zeros() {
                    return bad(format!("register width {register_width} too wide for k = {k}"));
                }
            }
            SketchConfig::Fm85 { bitmap_len, .. } => {
                if !k.is_power_of_two() {
                    return bad(format!("FM85 needs a power-of-two k, got {k}"));
                }
                if bitmap_len == 0 || bitmap_len as u32 + 1 > 64 - k.trailing_zeros() {
                    return bad(format!("bitmap length {bitmap_len} invalid for k = {k}"));
                }
            }
            SketchConfig::Lpca { p, .. } => {
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("LPCA rate p = {p} outside (0, 1]"));
                }
            }
            SketchConfig::AdaptiveSampling { .. } => {
                if k < 2 {
                    return bad("adaptive sampling needs k >= 2".into());
                }
            }
            SketchConfig::BottomK { .. } => {}
        }
        Ok(())
    }

    fn empty_registers(&self) -> Registers {
        match *self {
            SketchConfig::Hll { k, register_width } => Registers::Hll(Hll::new(k, register_width)),
            SketchConfig::BottomK { k } => Registers::BottomK(BottomK::new(k)),
            SketchConfig::Fm85 { k, bitmap_len } => Registers::Fm85(Fm85::new(k, bitmap_len)),
            SketchConfig::Lpca { k, p } => Registers::Lpca(Lpca::new(k, p)),
            SketchConfig::AdaptiveSampling { k } => {
                Registers::AdaptiveSampling(AdaptiveSampling::new(k))
            }
        }
    }
}

/// One sketch instance: configuration, hash identity and registers.
#[derive(Clone)]
pub struct SketchState {
    config: SketchConfig,
    seed: Seed,
    hasher: ItemHasher,
    registers: Registers,
}

impl PartialEq for SketchState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.seed == other.seed && self.registers == other.registers
    }
}

impl fmt::Debug for SketchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SketchState")
            .field("config", &self.config)
            .field("seed", &self.seed)
            .field("registers", &self.registers)
            .finish()
    }
}

impl SketchState {
    pub fn new(config: SketchConfig, seed: Seed) -> Result<Self> {
        config.validate()?;
        Ok(SketchState {
            config,
            seed,
            hasher: ItemHasher::new(&seed),
            registers: config.empty_registers(),
        })
    }

    /// Reassembles a state from parts; the registers must match `config`.
    pub(crate) fn from_parts(config: SketchConfig, seed: Seed, registers: Registers) -> Self {
        SketchState {
            config,
            seed,
            hasher: ItemHasher::new(&seed),
            registers,
        }
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn hasher(&self) -> &ItemHasher {
        &self.hasher
    }

    pub fn registers(&self) -> &Registers {
        &self.registers
    }

    /// Inserts a real item. Returns whether the state changed.
    #[inline]
    pub fn add(&mut self, item: &[u8]) -> bool {
        let h = self.hasher.hash(item, HashRole::SketchHash);
        self.registers.add_hash(h.0)
    }

    /// Inserts a precomputed sketch hash.
    #[inline]
    pub fn add_hash(&mut self, h: HashValue) -> bool {
        self.registers.add_hash(h.0)
    }

    #[inline]
    pub(crate) fn add_phantom(&mut self, ns: Namespace, counter: u64) -> bool {
        let h = self.hasher.hash_phantom(ns, counter, HashRole::SketchHash);
        self.registers.add_hash(h.0)
    }

    /// Folds `other` into `self`; the result is the sketch of the union.
    pub fn merge(&mut self, other: &SketchState) -> Result<()> {
        if self.config.family() != other.config.family() {
            return Err(SketchError::Incompatible { field: "family" });
        }
        if self.config != other.config {
            return Err(SketchError::Incompatible { field: "config" });
        }
        if self.seed != other.seed {
            return Err(SketchError::Incompatible { field: "seed" });
        }
        self.registers.merge_from(&other.registers);
        Ok(())
    }

    pub fn merged(a: &SketchState, b: &SketchState) -> Result<SketchState> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// Probability that a fresh distinct item changes this state.
    pub fn sampling_probability(&self) -> f64 {
        self.registers.sampling_probability()
    }

    /// Cardinality estimate of the items inserted into this state.
    pub fn estimate(&self) -> Result<f64> {
        Ok(match &self.registers {
            Registers::Hll(s) => s.estimate(),
            Registers::BottomK(s) => s.estimate(),
            Registers::Fm85(s) => s.estimate(),
            Registers::Lpca(s) => s.estimate().ok_or(SketchError::Saturated)?,
            Registers::AdaptiveSampling(s) => s.estimate(),
        })
    }

    pub fn kmax(&self) -> u64 {
        self.config.kmax()
    }

    pub fn is_empty(&self) -> bool {
        self == &SketchState::new(self.config, self.seed).expect("validated config")
    }
}

/// Builds a sketch of `items`.
pub fn build<I, T>(config: SketchConfig, seed: Seed, items: I) -> Result<SketchState>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let mut s = SketchState::new(config, seed)?;
    for item in items {
        s.add(item.as_ref());
    }
    Ok(s)
}
