use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A cleartext slot vector used as the plaintext operand of `mul_plain`.
///
/// Clones share an identity so backends can cache the encoded form.
#[derive(Clone, Debug)]
pub struct PlainVector {
    id: u64,
    slots: Arc<[f64]>,
}

impl PlainVector {
    pub fn new(slots: Vec<f64>) -> Self {
        Self {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            slots: slots.into(),
        }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::new(vec![value; len])
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl PartialEq for PlainVector {
    fn eq(&self, other: &Self) -> bool {
        self.slots == other.slots
    }
}

impl From<Vec<f64>> for PlainVector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}
