//! Cleartext backend: the contract evaluated in plain `f64` arithmetic.

use super::{
    check_add, check_mul_ct, check_mul_operand, check_rescale, check_rotate, check_slots,
    normalize_rotation, Ciphertext, Decryptor, Encryptor, Evaluator, Op, OpCounters, Payload,
    PlainVector, SchemeParams,
};
use crate::cost::TimingTable;
use crate::error::HeError;

/// Exact reference backend. "Encryption" wraps the slot vector unchanged;
/// level, scale and error behavior match the CKKS backend.
#[derive(Debug)]
pub struct ExactEngine {
    params: SchemeParams,
    digest: [u8; 32],
    counters: OpCounters,
    timing: Option<TimingTable>,
}

impl ExactEngine {
    pub fn new(params: SchemeParams) -> Result<Self, HeError> {
        params.validate()?;
        Ok(Self {
            digest: params.exact_digest(),
            params,
            counters: OpCounters::default(),
            timing: None,
        })
    }

    /// Attaches a timing table so runs can report modeled latency.
    pub fn with_timing(mut self, table: TimingTable) -> Self {
        self.timing = Some(table);
        self
    }

    pub fn timing(&self) -> Option<&TimingTable> {
        self.timing.as_ref()
    }

    /// Modeled milliseconds for all operations counted so far.
    pub fn modeled_ms(&self) -> Option<f64> {
        self.timing
            .as_ref()
            .map(|t| crate::cost::predict_from_counts(&self.counters.snapshot(), t))
    }

    fn slots<'a>(&self, ct: &'a Ciphertext) -> Result<&'a [f64], HeError> {
        check_slots(ct, self.params.slot_count)?;
        match &ct.payload {
            Payload::Exact(v) => Ok(v),
            _ => Err(HeError::BackendMismatch),
        }
    }

    fn wrap(&self, level: usize, scale: f64, needs_rescale: bool, v: Vec<f64>) -> Ciphertext {
        Ciphertext {
            level,
            scale,
            slot_count: self.params.slot_count,
            needs_rescale,
            payload: Payload::Exact(v),
        }
    }

    fn check_plain(&self, p: &PlainVector) -> Result<(), HeError> {
        if p.len() != self.params.slot_count {
            return Err(HeError::PlainLength {
                got: p.len(),
                expected: self.params.slot_count,
            });
        }
        Ok(())
    }
}

impl Evaluator for ExactEngine {
    fn params(&self) -> &SchemeParams {
        &self.params
    }

    fn params_digest(&self) -> [u8; 32] {
        self.digest
    }

    fn counters(&self) -> &OpCounters {
        &self.counters
    }

    fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_add(a, b)?;
        let (x, y) = (self.slots(a)?, self.slots(b)?);
        self.counters.record(Op::Add, a.level);
        let v = x.iter().zip(y).map(|(p, q)| p + q).collect();
        Ok(self.wrap(a.level, a.scale, a.needs_rescale, v))
    }

    fn mul_plain(&self, a: &Ciphertext, p: &PlainVector) -> Result<Ciphertext, HeError> {
        check_mul_operand(a)?;
        self.check_plain(p)?;
        let x = self.slots(a)?;
        self.counters.record(Op::MulP, a.level);
        let v = x.iter().zip(p.slots()).map(|(s, t)| s * t).collect();
        Ok(self.wrap(a.level, a.scale * self.params.encoding_scale(), true, v))
    }

    fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_mul_ct(a, b)?;
        let (x, y) = (self.slots(a)?, self.slots(b)?);
        self.counters.record(Op::MulC, a.level);
        let v = x.iter().zip(y).map(|(p, q)| p * q).collect();
        Ok(self.wrap(a.level, a.scale * b.scale, true, v))
    }

    fn rotate(&self, a: &Ciphertext, r: i64) -> Result<Ciphertext, HeError> {
        let x = self.slots(a)?;
        let shift = normalize_rotation(r, self.params.slot_count);
        if shift == 0 {
            return Ok(a.clone());
        }
        check_rotate(a)?;
        self.counters.record(Op::Rot, a.level);
        let mut v = Vec::with_capacity(x.len());
        v.extend_from_slice(&x[shift..]);
        v.extend_from_slice(&x[..shift]);
        Ok(self.wrap(a.level, a.scale, a.needs_rescale, v))
    }

    fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, HeError> {
        check_rescale(a)?;
        let x = self.slots(a)?;
        self.counters.record(Op::Res, a.level);
        Ok(self.wrap(
            a.level - 1,
            a.scale / self.params.encoding_scale(),
            false,
            x.to_vec(),
        ))
    }

    fn supports_rotation(&self, _r: i64) -> bool {
        true
    }
}

impl Encryptor for ExactEngine {
    fn encrypt(&self, v: &PlainVector) -> Result<Ciphertext, HeError> {
        self.encrypt_at_level(v, self.params.depth)
    }

    fn encrypt_at_level(&self, v: &PlainVector, level: usize) -> Result<Ciphertext, HeError> {
        self.check_plain(v)?;
        if level > self.params.depth {
            return Err(HeError::InvalidParams(format!("level {level} above depth")));
        }
        Ok(self.wrap(level, self.params.encoding_scale(), false, v.slots().to_vec()))
    }
}

impl Decryptor for ExactEngine {
    fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<f64>, HeError> {
        Ok(self.slots(ct)?.to_vec())
    }
}
