use std::path::{Path, PathBuf};
use std::time::Duration;

use bm_core::ckks::{scheme_params, RingParams, SecurityCheck};
use bm_core::he::SchemeParams;
use bm_core::pipeline::PackingLayout;
use serde::{Deserialize, Serialize};

use crate::error::ClusterError;

/// Environment variable naming the config file.
pub const CONFIG_ENV: &str = "BM_CONFIG";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Ckks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeouts {
    /// Per-shard deadline for one scattered request.
    pub shard_ms: u64,
    pub connect_ms: u64,
    /// Client-side socket read deadline.
    pub client_ms: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            shard_ms: 10_000,
            connect_ms: 2_000,
            client_ms: 120_000,
        }
    }
}

/// Deployment geometry shared by client, main server and shards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    #[serde(rename = "S")]
    pub slots: usize,
    pub m: usize,
    #[serde(rename = "N_in")]
    pub n_in: usize,
    pub depth: usize,
    pub scale_bits: u32,
    #[serde(rename = "K")]
    pub shards: usize,
    #[serde(rename = "C_cap")]
    pub shard_capacity: usize,
    pub timeouts: Timeouts,
    pub backend: Backend,
    /// Largest accepted frame payload in bytes.
    pub max_payload: u32,
    /// Skips the ring security bound; small rings for tests only.
    pub insecure_test_only: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            slots: 8192,
            m: 128,
            n_in: 4,
            depth: 3,
            scale_bits: 40,
            shards: 3,
            shard_capacity: 2048,
            timeouts: Timeouts::default(),
            backend: Backend::Ckks,
            max_payload: 1 << 30,
            insecure_test_only: false,
        }
    }
}

impl ClusterConfig {
    pub fn from_json(s: &str) -> Result<Self, ClusterError> {
        let c: Self = serde_json::from_str(s).map_err(|e| ClusterError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ClusterError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// `$BM_CONFIG` if set, else `explicit`, else the built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ClusterError> {
        let path = std::env::var_os(CONFIG_ENV)
            .map(PathBuf::from)
            .or_else(|| explicit.map(Path::to_path_buf));
        match path {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let layout = self.layout()?;
        if self.shards == 0 {
            return Err(ClusterError::Config("K must be positive".into()));
        }
        if self.shard_capacity == 0 || self.shard_capacity % layout.capacity() != 0 {
            return Err(ClusterError::Config(format!(
                "C_cap {} must be a positive multiple of B = {}",
                self.shard_capacity,
                layout.capacity()
            )));
        }
        if self.depth < 3 {
            return Err(ClusterError::Config("the matching pipeline needs depth >= 3".into()));
        }
        self.scheme_params().validate()?;
        Ok(())
    }

    pub fn layout(&self) -> Result<PackingLayout, ClusterError> {
        PackingLayout::new(self.slots, self.m, self.n_in).map_err(|e| ClusterError::Config(e.to_string()))
    }

    /// Ring parameters for the ckks backend; `n = 2S`.
    pub fn ring(&self) -> RingParams {
        let mut ring = RingParams::from_bits(
            2 * self.slots,
            self.scale_bits + 5,
            self.scale_bits,
            self.depth,
            self.scale_bits + 10,
            self.scale_bits,
        );
        if self.insecure_test_only {
            ring.security = SecurityCheck::InsecureTestOnly;
        }
        ring
    }

    pub fn scheme_params(&self) -> SchemeParams {
        match self.backend {
            Backend::Exact => SchemeParams::exact(self.slots, self.depth, self.scale_bits),
            Backend::Ckks => scheme_params(&self.ring()),
        }
    }

    /// Digest keys and ciphertexts must carry to be accepted.
    pub fn params_digest(&self) -> [u8; 32] {
        match self.backend {
            Backend::Exact => self.scheme_params().exact_digest(),
            Backend::Ckks => self.ring().digest(),
        }
    }

    pub fn total_capacity(&self) -> usize {
        self.shards * self.shard_capacity
    }

    /// Sets one shard can hold.
    pub fn sets_per_shard(&self) -> usize {
        self.shard_capacity / (self.slots * self.n_in / self.m)
    }

    pub fn shard_deadline(&self) -> Duration {
        Duration::from_millis(self.timeouts.shard_ms)
    }
}
