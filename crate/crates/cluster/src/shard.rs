use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bm_core::he::{Evaluator, SchemeParams};
use bm_core::pipeline::{make_masks, match_query, EnrollmentStore, MaskSet, PackingLayout};
use parking_lot::{Mutex, RwLock};

use crate::config::ClusterConfig;
use crate::error::{ClusterError, WireError};
use crate::persist::ShardFiles;
use crate::server::{serve, Handler, ServerHandle};
use crate::session::{parse_ciphertext, server_evaluator};
use crate::wire::{decode, encode, EnrollRequest, KeysUpload, MatchRequest, MsgType, NodeStatus, ShardMatch};

/// One shard: an enrollment store plus the evaluator built from uploaded keys.
pub struct ShardNode {
    config: ClusterConfig,
    params: SchemeParams,
    digest: [u8; 32],
    layout: PackingLayout,
    masks: MaskSet,
    eval: RwLock<Option<Arc<dyn Evaluator>>>,
    store: RwLock<EnrollmentStore>,
    files: Option<Mutex<ShardFiles>>,
    match_delay_ms: AtomicU64,
}

impl std::fmt::Debug for ShardNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShardNode")
            .field("layout", &self.layout)
            .field("enrolled", &self.store.read().len())
            .finish_non_exhaustive()
    }
}

impl ShardNode {
    /// Opens a shard holding `config.shard_capacity` enrollees, reloading
    /// keys and store from `dir` when given.
    pub fn open(config: &ClusterConfig, dir: Option<&Path>) -> Result<Self, ClusterError> {
        Self::with_capacity(config, config.shard_capacity, dir)
    }

    pub fn with_capacity(config: &ClusterConfig, capacity: usize, dir: Option<&Path>) -> Result<Self, ClusterError> {
        config.validate()?;
        let layout = config.layout()?;
        let params = config.scheme_params();
        let digest = config.params_digest();
        let level = config.depth - 1;
        let mut eval = None;
        let (store, files) = match dir {
            Some(d) => {
                let mut files = ShardFiles::open(d)?;
                if let Some(upload) = files.read_keys()? {
                    eval = Some(server_evaluator(config, &upload).map_err(ClusterError::from)?);
                }
                let store = files.load_store(layout, level, capacity, &params, &digest)?;
                (store, Some(Mutex::new(files)))
            }
            None => (EnrollmentStore::new(layout, level, capacity), None),
        };
        Ok(Self {
            config: config.clone(),
            params,
            digest,
            masks: make_masks(&layout),
            layout,
            eval: RwLock::new(eval),
            store: RwLock::new(store),
            files,
            match_delay_ms: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    /// Fault injection: every MATCH sleeps this long before computing.
    pub fn set_match_delay(&self, d: Duration) {
        self.match_delay_ms.store(d.as_millis() as u64, Ordering::SeqCst);
    }

    pub fn status(&self) -> NodeStatus {
        NodeStatus {
            keys_loaded: self.eval.read().is_some(),
            enrolled: self.store.read().len() as u64,
        }
    }

    pub fn store(&self) -> parking_lot::RwLockReadGuard<'_, EnrollmentStore> {
        self.store.read()
    }

    pub fn evaluator(&self) -> Result<Arc<dyn Evaluator>, WireError> {
        self.eval.read().clone().ok_or(WireError::NotReady)
    }

    pub fn load_keys(&self, upload: &KeysUpload) -> Result<(), WireError> {
        let eval = server_evaluator(&self.config, upload)?;
        if let Some(f) = &self.files {
            f.lock().write_keys(upload).map_err(WireError::from)?;
        }
        *self.eval.write() = Some(eval);
        Ok(())
    }

    pub fn enroll(&self, local: usize, ciphertext: &[u8]) -> Result<(), WireError> {
        let eval = self.evaluator()?;
        let ct = parse_ciphertext(ciphertext, &self.params, &self.digest)?;
        let mut store = self.store.write();
        store.enroll(eval.as_ref(), &self.masks, local, &ct)?;
        if let Some(f) = &self.files {
            f.lock()
                .record_set(&store, self.layout.locate(local).0, &self.digest)
                .map_err(WireError::from)?;
        }
        Ok(())
    }

    /// Expansion, matching over all occupied sets and compression against
    /// a read snapshot of the store.
    pub fn match_blob(&self, ciphertext: &[u8]) -> Result<ShardMatch, WireError> {
        let delay = self.match_delay_ms.load(Ordering::SeqCst);
        if delay > 0 {
            std::thread::sleep(Duration::from_millis(delay));
        }
        let eval = self.evaluator()?;
        let q = parse_ciphertext(ciphertext, &self.params, &self.digest)?;
        let start = Instant::now();
        let store = self.store.read();
        let out = match_query(eval.as_ref(), &store, &self.masks, &q)?;
        let occupancy = out.sets.iter().map(|&t| store.occupancy(t).to_vec()).collect();
        drop(store);
        Ok(ShardMatch {
            packed: out.packed.iter().map(|c| c.to_bytes(&self.digest)).collect(),
            sets: out.sets.iter().map(|&t| t as u32).collect(),
            occupancy,
            match_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn files(&self) -> Vec<std::path::PathBuf> {
        self.files.as_ref().map(|f| f.lock().files()).unwrap_or_default()
    }
}

impl Handler for ShardNode {
    fn handle(&self, ty: MsgType, payload: &[u8]) -> Result<(MsgType, Vec<u8>), WireError> {
        match ty {
            MsgType::Keys => {
                self.load_keys(&decode(payload)?)?;
                Ok((MsgType::Result, Vec::new()))
            }
            MsgType::Enroll => {
                let req: EnrollRequest = decode(payload)?;
                self.enroll(req.index as usize, &req.ciphertext)?;
                Ok((MsgType::Result, Vec::new()))
            }
            MsgType::Match => {
                let req: MatchRequest = decode(payload)?;
                Ok((MsgType::Result, encode(&self.match_blob(&req.ciphertext)?)))
            }
            MsgType::Status => Ok((MsgType::Status, encode(&self.status()))),
            other => Err(WireError::UnknownMessage(other as u8)),
        }
    }
}

/// Binds `listen` and serves `node` on background threads.
pub fn spawn_shard(node: Arc<ShardNode>, listen: &str) -> Result<ServerHandle, ClusterError> {
    let max = node.config.max_payload;
    Ok(serve(TcpListener::bind(listen)?, node, max)?)
}
