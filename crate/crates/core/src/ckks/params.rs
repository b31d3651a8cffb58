use sha2::{Digest, Sha256};

use super::modulus::{is_prime, ntt_primes};
use crate::error::HeError;

/// Maximum `log2(PQ)` for 128-bit classical security with a ternary secret,
/// per the homomorphic encryption standard tables.
pub const SECURITY_TABLE: [(usize, u32); 6] = [
    (1024, 27),
    (2048, 54),
    (4096, 109),
    (8192, 218),
    (16384, 438),
    (32768, 881),
];

pub fn max_modulus_bits(ring_degree: usize) -> Option<u32> {
    SECURITY_TABLE
        .iter()
        .find(|(n, _)| *n == ring_degree)
        .map(|&(_, bits)| bits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecurityCheck {
    Enforce,
    /// Skips the modulus-size bound. Only for small-ring unit tests.
    InsecureTestOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingParams {
    pub ring_degree: usize,
    /// `q_0, ..., q_d`; ciphertexts at level `l` live modulo `q_0 * ... * q_l`.
    pub modulus_chain: Vec<u64>,
    pub special_modulus: u64,
    pub scale_bits: u32,
    pub error_stddev: f64,
    pub security: SecurityCheck,
}

impl RingParams {
    /// Default chain for a depth-3 pipeline: a 45-bit base prime, three
    /// 40-bit primes consumed by rescaling and a 50-bit special prime.
    pub fn default_for(ring_degree: usize) -> Self {
        Self::from_bits(ring_degree, 45, 40, 3, 50, 40)
    }

    pub fn from_bits(
        ring_degree: usize,
        base_bits: u32,
        level_bits: u32,
        depth: usize,
        special_bits: u32,
        scale_bits: u32,
    ) -> Self {
        let mut chain = ntt_primes(base_bits, ring_degree, 1, &[]);
        let levels = ntt_primes(level_bits, ring_degree, depth, &chain);
        chain.extend(levels);
        let special = ntt_primes(special_bits, ring_degree, 1, &chain)[0];
        Self {
            ring_degree,
            modulus_chain: chain,
            special_modulus: special,
            scale_bits,
            error_stddev: 3.2,
            security: SecurityCheck::Enforce,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.ring_degree / 2
    }

    pub fn depth(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    pub fn total_modulus_bits(&self) -> f64 {
        self.modulus_chain
            .iter()
            .chain(std::iter::once(&self.special_modulus))
            .map(|&q| (q as f64).log2())
            .sum()
    }

    pub fn validate(&self) -> Result<(), HeError> {
        if !self.ring_degree.is_power_of_two() || self.ring_degree < 8 {
            return Err(HeError::InvalidParams(format!(
                "ring degree {} must be a power of two >= 8",
                self.ring_degree
            )));
        }
        if self.modulus_chain.len() < 2 {
            return Err(HeError::InvalidParams("modulus chain needs at least two primes".into()));
        }
        let two_n = 2 * self.ring_degree as u64;
        let mut seen = Vec::new();
        for &q in self.modulus_chain.iter().chain(std::iter::once(&self.special_modulus)) {
            if q >= 1 << 62 || !is_prime(q) || q % two_n != 1 || seen.contains(&q) {
                return Err(HeError::InvalidPrime(q));
            }
            seen.push(q);
        }
        if self.security == SecurityCheck::Enforce {
            let total = self.total_modulus_bits();
            match max_modulus_bits(self.ring_degree) {
                Some(bound) if total <= bound as f64 => {}
                bound => {
                    return Err(HeError::InsecureParameters {
                        ring_degree: self.ring_degree,
                        total_bits: total.ceil() as u32,
                        bound,
                    })
                }
            }
        }
        if self.scale_bits == 0 || self.scale_bits >= 62 {
            return Err(HeError::InvalidParams("scale_bits out of range".into()));
        }
        Ok(())
    }

    /// Largest slot magnitude that still decrypts at level 0.
    pub fn magnitude_limit(&self) -> f64 {
        let q0_bits = (self.modulus_chain[0] as f64).log2();
        2f64.powf(q0_bits - self.scale_bits as f64 - 2.0)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"bm-ckks-v1");
        h.update((self.ring_degree as u64).to_le_bytes());
        for q in &self.modulus_chain {
            h.update(q.to_le_bytes());
        }
        h.update(self.special_modulus.to_le_bytes());
        h.update(self.scale_bits.to_le_bytes());
        h.update(self.error_stddev.to_bits().to_le_bytes());
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_8192_is_within_bound() {
        let p = RingParams::default_for(8192);
        p.validate().unwrap();
        assert_eq!(p.slot_count(), 4096);
        assert_eq!(p.depth(), 3);
        assert!(p.total_modulus_bits() <= 218.0);
    }

    #[test]
    fn oversized_chain_is_insecure() {
        let p = RingParams::from_bits(8192, 60, 50, 3, 60, 40);
        assert!(matches!(p.validate(), Err(HeError::InsecureParameters { .. })));
    }

    #[test]
    fn non_ntt_prime_is_rejected() {
        let mut p = RingParams::default_for(4096);
        p.modulus_chain[1] = 1_099_511_627_791; // prime, but not 1 mod 8192
        assert!(matches!(p.validate(), Err(HeError::InvalidPrime(_))));
    }

    #[test]
    fn digest_depends_on_primes() {
        let a = RingParams::default_for(8192);
        let mut b = a.clone();
        b.modulus_chain.swap(1, 2);
        assert_ne!(a.digest(), b.digest());
    }
}
