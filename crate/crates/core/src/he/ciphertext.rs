use byteorder::{ByteOrder, LittleEndian};

use super::params::{BackendId, SchemeParams};
use crate::ckks::rns::RnsPoly;
use crate::error::HeError;

pub const CIPHERTEXT_MAGIC: &[u8; 4] = b"BMC1";
const HEADER_LEN: usize = 4 + 32 + 1 + 2 + 4;

/// Backend payload of a [`Ciphertext`].
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Raw slot values (the identity "encryption" of the exact backend).
    Exact(Vec<f64>),
    /// Polynomial components `(c0, c1[, c2])` in the NTT domain.
    Ckks(Vec<RnsPoly>),
}

/// An encrypted slot vector with level and scale bookkeeping.
///
/// Values are immutable; every operation returns a new ciphertext.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) level: usize,
    pub(crate) scale: f64,
    pub(crate) slot_count: usize,
    /// Set after a multiplication until the following rescale.
    pub(crate) needs_rescale: bool,
    pub(crate) payload: Payload,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn needs_rescale(&self) -> bool {
        self.needs_rescale
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn backend(&self) -> BackendId {
        match self.payload {
            Payload::Exact(_) => BackendId::Exact,
            Payload::Ckks(_) => BackendId::Ckks,
        }
    }

    /// Serializes as `BMC1 | digest | level u8 | scale_bits u16 | slot_count u32 | payload`.
    ///
    /// Exact payload: `S` little-endian f64. CKKS payload: the exact scale as
    /// f64 bits, the component count, then each component's limbs as
    /// little-endian u64 words, limb-major.
    pub fn to_bytes(&self, digest: &[u8; 32]) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.slot_count);
        out.extend_from_slice(CIPHERTEXT_MAGIC);
        out.extend_from_slice(digest);
        out.push(self.level as u8);
        let scale_bits = self.scale.log2().round() as u16;
        out.extend_from_slice(&scale_bits.to_le_bytes());
        out.extend_from_slice(&(self.slot_count as u32).to_le_bytes());
        match &self.payload {
            Payload::Exact(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Payload::Ckks(parts) => {
                out.extend_from_slice(&self.scale.to_bits().to_le_bytes());
                out.extend_from_slice(&(parts.len() as u64).to_le_bytes());
                for p in parts {
                    p.write_words(&mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(
        bytes: &[u8],
        params: &SchemeParams,
        digest: &[u8; 32],
    ) -> Result<Self, HeError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != CIPHERTEXT_MAGIC {
            return Err(HeError::Malformed("bad ciphertext magic".into()));
        }
        if &bytes[4..36] != digest {
            return Err(HeError::KeyMismatch);
        }
        let level = bytes[36] as usize;
        let scale_bits = LittleEndian::read_u16(&bytes[37..39]) as u32;
        let slot_count = LittleEndian::read_u32(&bytes[39..43]) as usize;
        if slot_count != params.slot_count {
            return Err(HeError::SlotCountMismatch {
                left: slot_count,
                right: params.slot_count,
            });
        }
        if level > params.depth {
            return Err(HeError::Malformed(format!("level {level} above depth")));
        }
        let needs_rescale = 2 * scale_bits > 3 * params.scale_bits;
        let body = &bytes[HEADER_LEN..];
        let (scale, payload) = match params.backend {
            BackendId::Exact => {
                if body.len() != 8 * slot_count {
                    return Err(HeError::Malformed("exact payload length".into()));
                }
                let v = body.chunks_exact(8).map(LittleEndian::read_f64).collect();
                (2f64.powi(scale_bits as i32), Payload::Exact(v))
            }
            BackendId::Ckks => {
                if body.len() < 16 {
                    return Err(HeError::Malformed("ckks payload too short".into()));
                }
                let scale = f64::from_bits(LittleEndian::read_u64(&body[..8]));
                let parts = LittleEndian::read_u64(&body[8..16]) as usize;
                let n = 2 * slot_count;
                let limbs = level + 1;
                let words = &body[16..];
                if parts == 0 || parts > 3 || words.len() != parts * limbs * n * 8 {
                    return Err(HeError::Malformed("ckks payload length".into()));
                }
                let polys = words
                    .chunks_exact(limbs * n * 8)
                    .map(|chunk| RnsPoly::read_words(chunk, limbs, n))
                    .collect();
                (scale, Payload::Ckks(polys))
            }
        };
        Ok(Self {
            level,
            scale,
            slot_count,
            needs_rescale,
            payload,
        })
    }
}
