//! The five concrete sketch families.

pub mod adaptive;
pub mod bottomk;
pub mod fm85;
pub mod hll;
pub mod lpca;

pub use adaptive::AdaptiveSampling;
pub use bottomk::BottomK;
pub use fm85::Fm85;
pub use hll::Hll;
pub use lpca::Lpca;

/// Family-specific sketch state.
#[derive(Clone, Debug, PartialEq)]
pub enum Registers {
    Hll(Hll),
    BottomK(BottomK),
    Fm85(Fm85),
    Lpca(Lpca),
    AdaptiveSampling(AdaptiveSampling),
}

impl Registers {
    #[inline]
    pub(crate) fn add_hash(&mut self, h: u64) -> bool {
        match self {
            Registers::Hll(s) => s.add_hash(h),
            Registers::BottomK(s) => s.add_hash(h),
            Registers::Fm85(s) => s.add_hash(h),
            Registers::Lpca(s) => s.add_hash(h),
            Registers::AdaptiveSampling(s) => s.add_hash(h),
        }
    }

    /// Both sides must come from the same configuration.
    pub(crate) fn merge_from(&mut self, other: &Registers) {
        match (self, other) {
            (Registers::Hll(a), Registers::Hll(b)) => a.merge_from(b),
            (Registers::BottomK(a), Registers::BottomK(b)) => a.merge_from(b),
            (Registers::Fm85(a), Registers::Fm85(b)) => a.merge_from(b),
            (Registers::Lpca(a), Registers::Lpca(b)) => a.merge_from(b),
            (Registers::AdaptiveSampling(a), Registers::AdaptiveSampling(b)) => a.merge_from(b),
            _ => unreachable!("merge across families is rejected by the caller"),
        }
    }

    pub fn sampling_probability(&self) -> f64 {
        match self {
            Registers::Hll(s) => s.sampling_probability(),
            Registers::BottomK(s) => s.sampling_probability(),
            Registers::Fm85(s) => s.sampling_probability(),
            Registers::Lpca(s) => s.sampling_probability(),
            Registers::AdaptiveSampling(s) => s.sampling_probability(),
        }
    }
}
