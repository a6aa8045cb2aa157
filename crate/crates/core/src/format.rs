//! Binary sketch file.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic      4   "DPSK"
//! version    u16
//! family     u8
//! k          u64
//! aux        u16 length + bytes   (HLL: width u8, FM85: ℓ u8, LPCA: p f64)
//! seed       32
//! pipeline   u8
//! epsilon    f64                  (NaN when absent)
//! v          u64
//! payload    u32 length + bytes
//! ```
//!
//! Payloads: HLL one byte per register; Bottom-k the sorted hashes as u64;
//! FM85 one u64 bitmap per bucket; LPCA the bit words; adaptive sampling a
//! depth byte followed by the sorted hashes.

use crate::dp::{derive_params, estimate_state, DpEstimate, Pipeline};
use crate::error::{Result, SketchError};
use crate::hashing::Seed;
use crate::sketch::{Family, SketchConfig, SketchState};
use crate::sketches::{AdaptiveSampling, BottomK, Fm85, Hll, Lpca, Registers};

pub const MAGIC: [u8; 4] = *b"DPSK";
pub const VERSION: u16 = 1;

const NO_EPSILON: u64 = 0x7ff8_0000_0000_0000;

/// A sketch with the provenance needed to merge and correct it.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchFile {
    pub state: SketchState,
    pub pipeline: Pipeline,
    pub epsilon: Option<f64>,
    /// Phantom items contained in the state.
    pub v: u64,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(SketchError::Format(msg.into()))
}

impl SketchFile {
    /// Checks the pipeline metadata is coherent with the state.
    pub fn new(state: SketchState, pipeline: Pipeline, epsilon: Option<f64>, v: u64) -> Result<Self> {
        let file = SketchFile {
            state,
            pipeline,
            epsilon,
            v,
        };
        file.check_metadata()?;
        Ok(file)
    }

    fn check_metadata(&self) -> Result<()> {
        match (self.pipeline, self.epsilon) {
            (Pipeline::Raw, None) => {}
            (Pipeline::Raw, Some(_)) => return bad("raw sketch carries an epsilon"),
            (_, None) => return bad(format!("pipeline {} needs an epsilon", self.pipeline)),
            (_, Some(eps)) => {
                let params = derive_params(eps, self.state.config())?;
                let v_ok = match self.pipeline {
                    Pipeline::AnySet => self.v == params.n0,
                    Pipeline::MakeDp => self.v >= params.n0,
                    _ => self.v == 0,
                };
                if !v_ok {
                    return bad(format!("v = {} inconsistent with pipeline {}", self.v, self.pipeline));
                }
                if self.pipeline.downsamples() {
                    if let SketchConfig::Lpca { p, .. } = *self.state.config() {
                        if p != 1.0 {
                            return bad("downsampled LPCA must use rate 1");
                        }
                    }
                }
            }
        }
        if self.pipeline == Pipeline::Raw && self.v != 0 {
            return bad("raw sketch carries phantoms");
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.state.config().family()
    }

    pub fn estimate(&self) -> Result<DpEstimate> {
        estimate_state(&self.state, self.pipeline, self.epsilon, self.v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = self.state.config();
        let mut out = Vec::with_capacity(96);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(config.family().tag());
        out.extend_from_slice(&(config.k() as u64).to_le_bytes());
        let aux = aux_bytes(config);
        out.extend_from_slice(&(aux.len() as u16).to_le_bytes());
        out.extend_from_slice(&aux);
        out.extend_from_slice(self.state.seed().as_bytes());
        out.push(self.pipeline.tag());
        let eps_bits = self.epsilon.map_or(NO_EPSILON, f64::to_bits);
        out.extend_from_slice(&eps_bits.to_le_bytes());
        out.extend_from_slice(&self.v.to_le_bytes());
        let payload = payload_bytes(self.state.registers());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SketchFile> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return bad("bad magic");
        }
        let version = r.u16()?;
        if version != VERSION {
            return bad(format!("unsupported version {version}"));
        }
        let family_tag = r.u8()?;
        let family = Family::from_tag(family_tag)
            .ok_or_else(|| SketchError::Format(format!("unknown family tag {family_tag}")))?;
        let k = r.u64()?;
        if k > usize::MAX as u64 {
            return bad("k too large");
        }
        let aux_len = r.u16()? as usize;
        let aux = r.take(aux_len)?;
        let config = parse_config(family, k as usize, aux)?;
        config.validate()?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.take(32)?);
        let seed = Seed::from_bytes(seed);
        let pipeline_tag = r.u8()?;
        let pipeline = Pipeline::from_tag(pipeline_tag)
            .ok_or_else(|| SketchError::Format(format!("unknown pipeline tag {pipeline_tag}")))?;
        let eps_bits = r.u64()?;
        let epsilon = if eps_bits == NO_EPSILON {
            None
        } else {
            Some(f64::from_bits(eps_bits))
        };
        let v = r.u64()?;
        let payload_len = r.u32()? as usize;
        let payload = r.take(payload_len)?;
        if r.pos != bytes.len() {
            return bad("trailing bytes");
        }
        let registers = parse_payload(&config, payload)?;
        SketchFile::new(SketchState::from_parts(config, seed, registers), pipeline, epsilon, v)
    }

    /// Fails with the first header field that differs.
    pub fn check_compatible(&self, other: &SketchFile) -> Result<()> {
        let (a, b) = (self.state.config(), other.state.config());
        let field = if a.family() != b.family() {
            Some("family")
        } else if a.k() != b.k() {
            Some("k")
        } else if a != b {
            Some("aux")
        } else if self.state.seed() != other.state.seed() {
            Some("seed")
        } else if self.pipeline != other.pipeline {
            Some("pipeline")
        } else if self.epsilon.map(f64::to_bits) != other.epsilon.map(f64::to_bits) {
            Some("epsilon")
        } else {
            None
        };
        match field {
            Some(field) => Err(SketchError::Incompatible { field }),
            None => Ok(()),
        }
    }

    /// Sketch of the union. Phantom sets of equal seeds coincide, so the
    /// merged phantom count is the larger of the two.
    pub fn merge(&self, other: &SketchFile) -> Result<SketchFile> {
        self.check_compatible(other)?;
        let state = SketchState::merged(&self.state, &other.state)?;
        Ok(SketchFile {
            state,
            pipeline: self.pipeline,
            epsilon: self.epsilon,
            v: self.v.max(other.v),
        })
    }
}

fn aux_bytes(config: &SketchConfig) -> Vec<u8> {
    match *config {
        SketchConfig::Hll { register_width, .. } => vec![register_width],
        SketchConfig::Fm85 { bitmap_len, .. } => vec![bitmap_len],
        SketchConfig::Lpca { p, .. } => p.to_le_bytes().to_vec(),
        SketchConfig::BottomK { .. } | SketchConfig::AdaptiveSampling { .. } => Vec::new(),
    }
}

fn parse_config(family: Family, k: usize, aux: &[u8]) -> Result<SketchConfig> {
    let want = match family {
        Family::Hll | Family::Fm85 => 1,
        Family::Lpca => 8,
        Family::BottomK | Family::AdaptiveSampling => 0,
    };
    if aux.len() != want {
        return bad(format!("{family} expects {want} aux bytes, got {}", aux.len()));
    }
    Ok(match family {
        Family::Hll => SketchConfig::Hll {
            k,
            register_width: aux[0],
        },
        Family::Fm85 => SketchConfig::Fm85 {
            k,
            bitmap_len: aux[0],
        },
        Family::Lpca => SketchConfig::Lpca {
            k,
            p: f64::from_le_bytes(aux.try_into().expect("length checked")),
        },
        Family::BottomK => SketchConfig::BottomK { k },
        Family::AdaptiveSampling => SketchConfig::AdaptiveSampling { k },
    })
}

fn push_words(out: &mut Vec<u8>, words: &[u64]) {
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

pub(crate) fn payload_bytes(registers: &Registers) -> Vec<u8> {
    let mut out = Vec::new();
    match registers {
        Registers::Hll(s) => out.extend_from_slice(s.registers()),
        Registers::BottomK(s) => push_words(&mut out, s.values()),
        Registers::Fm85(s) => push_words(&mut out, s.bitmaps()),
        Registers::Lpca(s) => push_words(&mut out, s.words()),
        Registers::AdaptiveSampling(s) => {
            out.push(s.depth());
            push_words(&mut out, s.values());
        }
    }
    out
}

fn read_words(bytes: &[u8]) -> Result<Vec<u64>> {
    if bytes.len() % 8 != 0 {
        return bad("payload is not a whole number of words");
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn strictly_increasing(values: &[u64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

fn parse_payload(config: &SketchConfig, payload: &[u8]) -> Result<Registers> {
    match *config {
        SketchConfig::Hll { k, register_width } => {
            if payload.len() != k {
                return bad("HLL payload length differs from k");
            }
            let max = (1u32 << register_width) - 1;
            if payload.iter().any(|&r| r as u32 > max) {
                return bad("HLL register exceeds its width");
            }
            Ok(Registers::Hll(Hll::from_registers(payload.to_vec(), register_width)))
        }
        SketchConfig::BottomK { k } => {
            let values = read_words(payload)?;
            if values.len() > k || !strictly_increasing(&values) {
                return bad("Bottom-k values must be at most k strictly increasing hashes");
            }
            Ok(Registers::BottomK(BottomK::from_values(k, values)))
        }
        SketchConfig::Fm85 { k, bitmap_len } => {
            let bitmaps = read_words(payload)?;
            if bitmaps.len() != k {
                return bad("FM85 payload length differs from k");
            }
            if bitmap_len < 64 && bitmaps.iter().any(|b| b >> bitmap_len != 0) {
                return bad("FM85 bit set beyond the bitmap length");
            }
            Ok(Registers::Fm85(Fm85::from_bitmaps(bitmaps, bitmap_len)))
        }
        SketchConfig::Lpca { k, p } => {
            let words = read_words(payload)?;
            if words.len() != k.div_ceil(64) {
                return bad("LPCA payload length differs from the bitmap size");
            }
            if k % 64 != 0 && words[words.len() - 1] >> (k % 64) != 0 {
                return bad("LPCA padding bits are set");
            }
            Ok(Registers::Lpca(Lpca::from_words(k, p, words)))
        }
        SketchConfig::AdaptiveSampling { k } => {
            let (&depth, rest) = payload
                .split_first()
                .ok_or_else(|| SketchError::Format("empty adaptive payload".into()))?;
            let values = read_words(rest)?;
            let below = |v: u64| depth == 0 || (depth < 64 && v >> (64 - depth) == 0);
            if depth > 64
                || values.len() >= k
                || !strictly_increasing(&values)
                || !values.iter().all(|&v| below(v))
            {
                return bad("adaptive payload violates its invariants");
            }
            Ok(Registers::AdaptiveSampling(AdaptiveSampling::from_parts(k, depth, values)))
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| SketchError::Format("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::run_pipeline;

    fn sample(family: Family, pipeline: Pipeline, n: u64) -> SketchFile {
        let cfg = SketchConfig::with_family(family, 16);
        let eps = pipeline.needs_epsilon().then_some(1.0);
        let run = run_pipeline(pipeline, (0..n).map(u64::to_le_bytes), eps, cfg, Seed::from_u64(4))
            .unwrap();
        SketchFile::new(run.state, pipeline, eps, run.estimate.v).unwrap()
    }

    #[test]
    fn round_trip_all() {
        for family in Family::ALL {
            for pipeline in Pipeline::ALL {
                let f = sample(family, pipeline, 40);
                let bytes = f.to_bytes();
                let back = SketchFile::from_bytes(&bytes).unwrap();
                assert_eq!(back, f);
                assert_eq!(back.to_bytes(), bytes);
            }
        }
    }

    #[test]
    fn header_layout() {
        let f = sample(Family::Hll, Pipeline::Raw, 0);
        let b = f.to_bytes();
        assert_eq!(&b[..4], b"DPSK");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], Family::Hll.tag());
        // magic, version, family, k, aux, seed, pipeline, epsilon, v, payload
        assert_eq!(b.len(), 4 + 2 + 1 + 8 + 2 + 1 + 32 + 1 + 8 + 8 + 4 + 16);
    }

    #[test]
    fn rejects_corruption() {
        let f = sample(Family::BottomK, Pipeline::Raw, 40);
        let bytes = f.to_bytes();
        assert!(SketchFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(SketchFile::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(SketchFile::from_bytes(&magic).is_err());
        // swap two stored hashes so they are no longer sorted
        let mut unsorted = bytes.clone();
        let n = unsorted.len();
        let (a, b) = unsorted[n - 16..].split_at_mut(8);
        a.swap_with_slice(b);
        assert!(SketchFile::from_bytes(&unsorted).is_err());
    }

    #[test]
    fn metadata_checked() {
        let st = SketchState::new(SketchConfig::bottom_k(8), Seed::from_u64(1)).unwrap();
        assert!(SketchFile::new(st.clone(), Pipeline::Raw, Some(1.0), 0).is_err());
        assert!(SketchFile::new(st.clone(), Pipeline::LargeSet, None, 0).is_err());
        assert!(SketchFile::new(st.clone(), Pipeline::AnySet, Some(2f64.ln()), 15).is_err());
        assert!(SketchFile::new(st.clone(), Pipeline::AnySet, Some(2f64.ln()), 16).is_ok());
        assert!(SketchFile::new(st, Pipeline::MakeDp, Some(2f64.ln()), 3).is_err());
    }

    #[test]
    fn incompatibility_names_field() {
        let a = sample(Family::BottomK, Pipeline::LargeSet, 10);
        let mut b = a.clone();
        b.epsilon = Some(0.5);
        assert_eq!(
            a.merge(&b).unwrap_err(),
            SketchError::Incompatible { field: "epsilon" }
        );
        let mut c = a.clone();
        c.pipeline = Pipeline::Base;
        assert_eq!(
            a.check_compatible(&c).unwrap_err(),
            SketchError::Incompatible { field: "pipeline" }
        );
        let d = sample(Family::Hll, Pipeline::LargeSet, 10);
        assert_eq!(
            a.check_compatible(&d).unwrap_err(),
            SketchError::Incompatible { field: "family" }
        );
    }
}
