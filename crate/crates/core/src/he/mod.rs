//! The leveled homomorphic operation contract shared by all backends.
//!
//! Every backend enforces the same bookkeeping: `add` needs equal level and
//! scale, multiplications need a level above zero and rescaled operands,
//! `rescale` drops exactly one level, and `rotate(ct, r)` moves slot
//! `p + r` to slot `p` (left rotation, indices modulo the slot count).

pub mod ciphertext;
pub mod counters;
pub mod exact;
pub mod params;
pub mod plain;

pub use ciphertext::{Ciphertext, Payload};
pub use counters::{CountSnapshot, Op, OpCounters};
pub use exact::ExactEngine;
pub use params::{BackendId, SchemeParams};
pub use plain::PlainVector;

use crate::error::HeError;

/// Server-side homomorphic operations.
pub trait Evaluator: Send + Sync {
    fn params(&self) -> &SchemeParams;

    /// Digest that ciphertexts and keys must carry to be accepted.
    fn params_digest(&self) -> [u8; 32];

    fn counters(&self) -> &OpCounters;

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError>;

    fn mul_plain(&self, a: &Ciphertext, p: &PlainVector) -> Result<Ciphertext, HeError>;

    fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError>;

    /// Left rotation by `r`; `r` equal to zero modulo the slot count is the
    /// uncounted identity.
    fn rotate(&self, a: &Ciphertext, r: i64) -> Result<Ciphertext, HeError>;

    fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, HeError>;

    /// Whether `rotate(_, r)` is available without a missing-key error.
    fn supports_rotation(&self, r: i64) -> bool;
}

/// Client-side encryption of slot vectors.
pub trait Encryptor: Send + Sync {
    /// Fresh encryption at the top level.
    fn encrypt(&self, v: &PlainVector) -> Result<Ciphertext, HeError>;

    /// Encryption directly at a lower level with the base encoding scale.
    fn encrypt_at_level(&self, v: &PlainVector, level: usize) -> Result<Ciphertext, HeError>;
}

pub trait Decryptor: Send + Sync {
    fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<f64>, HeError>;
}

/// Normalizes a rotation amount into `[0, slots)`.
pub fn normalize_rotation(r: i64, slots: usize) -> usize {
    r.rem_euclid(slots as i64) as usize
}

pub(crate) fn check_slots(a: &Ciphertext, slots: usize) -> Result<(), HeError> {
    if a.slot_count != slots {
        return Err(HeError::SlotCountMismatch {
            left: a.slot_count,
            right: slots,
        });
    }
    Ok(())
}

fn scales_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Preconditions of `add`.
pub(crate) fn check_add(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    check_slots(b, a.slot_count)?;
    if a.level != b.level {
        return Err(HeError::LevelMismatch {
            left: a.level,
            right: b.level,
        });
    }
    if a.needs_rescale != b.needs_rescale || !scales_equal(a.scale, b.scale) {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: b.scale,
        });
    }
    Ok(())
}

pub(crate) fn check_mul_operand(a: &Ciphertext) -> Result<(), HeError> {
    if a.level < 1 {
        return Err(HeError::LevelExhausted { level: a.level });
    }
    if a.needs_rescale {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: a.scale.sqrt(),
        });
    }
    Ok(())
}

/// Preconditions of `mul_ct`.
pub(crate) fn check_mul_ct(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    check_slots(b, a.slot_count)?;
    if a.level != b.level {
        return Err(HeError::LevelMismatch {
            left: a.level,
            right: b.level,
        });
    }
    check_mul_operand(a)?;
    check_mul_operand(b)?;
    if !scales_equal(a.scale, b.scale) {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: b.scale,
        });
    }
    Ok(())
}

pub(crate) fn check_rescale(a: &Ciphertext) -> Result<(), HeError> {
    if a.level < 1 {
        return Err(HeError::LevelExhausted { level: a.level });
    }
    if !a.needs_rescale {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: a.scale * a.scale,
        });
    }
    Ok(())
}

pub(crate) fn check_rotate(a: &Ciphertext) -> Result<(), HeError> {
    if a.level < 1 {
        return Err(HeError::LevelExhausted { level: a.level });
    }
    Ok(())
}
