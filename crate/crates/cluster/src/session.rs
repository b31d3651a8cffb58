//! Key material on both sides of the wire: the client's full key set and
//! the evaluator a server builds from an upload.

use std::path::Path;
use std::sync::Arc;

use bm_core::ckks::{
    CkksClient, CkksContext, CkksEvaluator, EvaluationKeys, KeySet, PublicKey, SecretKey,
};
use bm_core::he::{Ciphertext, Decryptor, Encryptor, Evaluator, ExactEngine, SchemeParams};
use bm_core::pipeline::{prepare_enroll_vector, prepare_query_vector, rotation_steps, MatchResult};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::{Backend, ClusterConfig};
use crate::error::{ClusterError, WireError};
use crate::wire::{KeysUpload, MatchReply};

const SECRET_FILE: &str = "secret.key";
const PUBLIC_FILE: &str = "public.key";
const EVALUATION_FILE: &str = "evaluation.key";

pub trait Crypto: Encryptor + Decryptor {}
impl<T: Encryptor + Decryptor> Crypto for T {}

/// Everything the client holds. The secret key stays here.
pub struct ClientSession {
    config: ClusterConfig,
    params: SchemeParams,
    digest: [u8; 32],
    crypto: Box<dyn Crypto>,
    upload: KeysUpload,
    secret: Option<Vec<u8>>,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("backend", &self.config.backend)
            .field("slots", &self.params.slot_count)
            .finish_non_exhaustive()
    }
}

impl ClientSession {
    /// Generates fresh keys. With `seed` both key generation and
    /// encryption randomness are reproducible.
    pub fn generate(config: &ClusterConfig, seed: Option<u64>) -> Result<Self, ClusterError> {
        config.validate()?;
        let params = config.scheme_params();
        let digest = config.params_digest();
        match config.backend {
            Backend::Exact => Ok(Self {
                config: config.clone(),
                crypto: Box::new(ExactEngine::new(params.clone())?),
                params,
                digest,
                upload: KeysUpload {
                    digest,
                    public: Vec::new(),
                    evaluation: Vec::new(),
                },
                secret: None,
            }),
            Backend::Ckks => {
                let ctx = Arc::new(CkksContext::new(config.ring())?);
                // Enough compression offsets for one store holding every shard's sets.
                let steps = rotation_steps(&config.layout()?, config.sets_per_shard() * config.shards, true);
                let mut rng = match seed {
                    Some(s) => ChaCha20Rng::seed_from_u64(s),
                    None => ChaCha20Rng::from_entropy(),
                };
                let keys = KeySet::generate(&ctx, &steps, &mut rng);
                let mut client = CkksClient::from_key_set(ctx.clone(), &keys);
                if let Some(s) = seed {
                    client = client.with_seed(s.wrapping_add(1));
                }
                Ok(Self {
                    config: config.clone(),
                    params,
                    digest,
                    upload: KeysUpload {
                        digest,
                        public: keys.public.to_bytes(&ctx),
                        evaluation: keys.evaluation.to_bytes(&ctx),
                    },
                    secret: Some(keys.secret.to_bytes(&ctx)),
                    crypto: Box::new(client),
                })
            }
        }
    }

    /// Writes the key files into `dir` (client side only).
    pub fn save(&self, dir: &Path) -> Result<(), ClusterError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(PUBLIC_FILE), &self.upload.public)?;
        std::fs::write(dir.join(EVALUATION_FILE), &self.upload.evaluation)?;
        if let Some(s) = &self.secret {
            std::fs::write(dir.join(SECRET_FILE), s)?;
        }
        Ok(())
    }

    pub fn load(config: &ClusterConfig, dir: &Path) -> Result<Self, ClusterError> {
        config.validate()?;
        if config.backend == Backend::Exact {
            return Self::generate(config, None);
        }
        let ctx = Arc::new(CkksContext::new(config.ring())?);
        let public_bytes = std::fs::read(dir.join(PUBLIC_FILE))?;
        let evaluation = std::fs::read(dir.join(EVALUATION_FILE))?;
        let secret_bytes = std::fs::read(dir.join(SECRET_FILE))?;
        let public = PublicKey::from_bytes(&ctx, &public_bytes)?;
        let secret = SecretKey::from_bytes(&ctx, &secret_bytes)?;
        let digest = config.params_digest();
        Ok(Self {
            config: config.clone(),
            params: config.scheme_params(),
            digest,
            upload: KeysUpload {
                digest,
                public: public_bytes,
                evaluation,
            },
            secret: Some(secret_bytes),
            crypto: Box::new(CkksClient::new(ctx, public, Some(secret))),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn digest(&self) -> [u8; 32] {
        self.digest
    }

    pub fn upload(&self) -> &KeysUpload {
        &self.upload
    }

    pub fn crypto(&self) -> &dyn Crypto {
        self.crypto.as_ref()
    }

    pub fn encrypt_enrollee(&self, features: &[f64]) -> Result<Vec<u8>, ClusterError> {
        let v = prepare_enroll_vector(features, &self.config.layout()?)?;
        Ok(self.crypto.encrypt(&v)?.to_bytes(&self.digest))
    }

    pub fn encrypt_query(&self, features: &[f64]) -> Result<Vec<u8>, ClusterError> {
        let v = prepare_query_vector(features, &self.config.layout()?)?;
        Ok(self.crypto.encrypt(&v)?.to_bytes(&self.digest))
    }

    pub fn decide(&self, reply: &MatchReply, threshold: f64) -> Result<MatchResult, ClusterError> {
        crate::client::client_decide(reply, self.crypto.as_ref(), &self.params, &self.digest, threshold)
    }
}

/// Builds the evaluator a server runs with, rejecting uploads whose
/// digest or key material does not fit `config`.
pub fn server_evaluator(
    config: &ClusterConfig,
    upload: &KeysUpload,
) -> Result<Arc<dyn Evaluator>, WireError> {
    if upload.digest != config.params_digest() {
        return Err(WireError::KeyRejected);
    }
    match config.backend {
        Backend::Exact => Ok(Arc::new(ExactEngine::new(config.scheme_params())?)),
        Backend::Ckks => {
            let ctx = Arc::new(CkksContext::new(config.ring())?);
            PublicKey::from_bytes(&ctx, &upload.public)?;
            let keys = EvaluationKeys::from_bytes(&ctx, &upload.evaluation)?;
            Ok(Arc::new(CkksEvaluator::new(ctx, keys)))
        }
    }
}

/// Parses a ciphertext blob against the configured parameters.
pub fn parse_ciphertext(
    bytes: &[u8],
    params: &SchemeParams,
    digest: &[u8; 32],
) -> Result<Ciphertext, WireError> {
    Ciphertext::from_bytes(bytes, params, digest).map_err(WireError::from)
}
