//! Leveled CKKS over `Z[X]/(X^n + 1)` with an RNS modulus chain.

pub mod context;
pub mod encoding;
pub mod keys;
pub mod modulus;
pub mod ntt;
pub mod params;
pub mod rns;
pub mod scheme;

pub use context::CkksContext;
pub use keys::{peek_key_kind, EvaluationKeys, GaloisKeys, KeyKind, KeySet, PublicKey, RelinKey, SecretKey};
pub use params::{RingParams, SecurityCheck};
pub use scheme::{scheme_params, CkksClient, CkksEvaluator};
