use sha2::{Digest, Sha256};

use crate::error::HeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendId {
    Exact,
    Ckks,
}

/// Backend-independent view of a scheme instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    /// Number of real slots `S`.
    pub slot_count: usize,
    /// Number of rescales a fresh ciphertext supports.
    pub depth: usize,
    pub scale_bits: u32,
    pub backend: BackendId,
    /// `(ring_degree, total_modulus_bits)` for lattice backends.
    pub security_profile: Option<(usize, u32)>,
}

impl SchemeParams {
    pub fn exact(slot_count: usize, depth: usize, scale_bits: u32) -> Self {
        Self {
            slot_count,
            depth,
            scale_bits,
            backend: BackendId::Exact,
            security_profile: None,
        }
    }

    pub fn validate(&self) -> Result<(), HeError> {
        if !self.slot_count.is_power_of_two() {
            return Err(HeError::InvalidParams(format!(
                "slot count {} is not a power of two",
                self.slot_count
            )));
        }
        if self.depth == 0 {
            return Err(HeError::InvalidParams("depth must be positive".into()));
        }
        if self.scale_bits == 0 || self.scale_bits > 60 {
            return Err(HeError::InvalidParams("scale_bits out of range".into()));
        }
        if self.backend == BackendId::Ckks {
            if let Some((n, bits)) = self.security_profile {
                match crate::ckks::params::max_modulus_bits(n) {
                    Some(bound) if bits <= bound => {}
                    bound => {
                        return Err(HeError::InsecureParameters {
                            ring_degree: n,
                            total_bits: bits,
                            bound,
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn encoding_scale(&self) -> f64 {
        2f64.powi(self.scale_bits as i32)
    }

    /// Digest binding exact-backend ciphertexts to their geometry.
    pub fn exact_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"bm-exact-v1");
        h.update((self.slot_count as u64).to_le_bytes());
        h.update((self.depth as u64).to_le_bytes());
        h.update(self.scale_bits.to_le_bytes());
        h.finalize().into()
    }
}
