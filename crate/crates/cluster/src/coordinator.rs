use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::RwLock;

use crate::config::ClusterConfig;
use crate::error::{ClusterError, WireError};
use crate::link::{CallError, Link};
use crate::persist::ShardFiles;
use crate::routing::ShardLayout;
use crate::server::{serve, Handler, ServerHandle};
use crate::wire::{
    decode, encode, ClusterStatus, EnrollRequest, KeysUpload, LayoutDescriptor, MatchReply, MatchRequest,
    MsgType, NodeStatus, ShardMatch, ShardOutcome, ShardReply, ShardState,
};

/// Main server: key fan-out, enrollment routing and match scatter/gather.
pub struct Coordinator {
    config: ClusterConfig,
    routing: ShardLayout,
    links: Vec<Link>,
    keys: RwLock<Option<KeysUpload>>,
    files: Option<ShardFiles>,
}

impl std::fmt::Debug for Coordinator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coordinator")
            .field("routing", &self.routing)
            .field("shards", &self.links.iter().map(Link::addr).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl Coordinator {
    pub fn new(config: &ClusterConfig, shard_addrs: &[String], dir: Option<&Path>) -> Result<Self, ClusterError> {
        config.validate()?;
        if shard_addrs.len() != config.shards {
            return Err(ClusterError::Config(format!(
                "K = {} but {} shard addresses given",
                config.shards,
                shard_addrs.len()
            )));
        }
        let connect = Duration::from_millis(config.timeouts.connect_ms);
        let links = shard_addrs
            .iter()
            .map(|a| Link::new(a, connect, config.max_payload))
            .collect::<Result<Vec<_>, _>>()?;
        let files = dir.map(ShardFiles::open).transpose()?;
        let keys = match &files {
            Some(f) => f.read_keys()?,
            None => None,
        };
        Ok(Self {
            routing: ShardLayout::new(config.shards, config.shard_capacity),
            config: config.clone(),
            links,
            keys: RwLock::new(keys),
            files,
        })
    }

    pub fn routing(&self) -> ShardLayout {
        self.routing
    }

    pub fn files(&self) -> Vec<std::path::PathBuf> {
        self.files.as_ref().map(ShardFiles::files).unwrap_or_default()
    }

    /// Runs `f` against every shard concurrently and collects results in shard order.
    fn scatter<T: Send>(&self, f: impl Fn(usize, &Link) -> T + Sync) -> Vec<T> {
        std::thread::scope(|s| {
            let handles: Vec<_> = self
                .links
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let f = &f;
                    s.spawn(move || f(i, l))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("shard worker panicked")).collect()
        })
    }

    pub fn upload_keys(&self, upload: KeysUpload) -> Result<(), WireError> {
        if upload.digest != self.config.params_digest() {
            return Err(WireError::KeyRejected);
        }
        if let Some(f) = &self.files {
            f.write_keys(&upload).map_err(WireError::from)?;
        }
        let payload = encode(&upload);
        *self.keys.write() = Some(upload);
        let deadline = self.config.shard_deadline();
        let failures: Vec<String> = self
            .scatter(|i, l| {
                l.call(MsgType::Keys, payload.clone(), deadline)
                    .err()
                    .map(|e| format!("shard {i}: {e}"))
            })
            .into_iter()
            .flatten()
            .collect();
        match failures.as_slice() {
            [] => Ok(()),
            _ => Err(WireError::Internal(format!("key fan-out failed: {}", failures.join("; ")))),
        }
    }

    pub fn status(&self) -> ClusterStatus {
        let deadline = self.config.shard_deadline();
        let shards = self.scatter(|i, l| {
            let node = l
                .call(MsgType::Status, Vec::new(), deadline)
                .ok()
                .and_then(|f| decode::<NodeStatus>(&f.payload).ok());
            ShardState {
                shard: i,
                reachable: node.is_some(),
                ready: node.as_ref().is_some_and(|n| n.keys_loaded),
                enrolled: node.map_or(0, |n| n.enrolled),
            }
        });
        ClusterStatus {
            keys_loaded: self.keys.read().is_some(),
            shards,
        }
    }

    pub fn enroll(&self, g: u64, ciphertext: Vec<u8>) -> Result<(), WireError> {
        if self.keys.read().is_none() {
            return Err(WireError::NotReady);
        }
        let (shard, local) = self.routing.route(g).map_err(WireError::from)?;
        let req = EnrollRequest {
            index: local as u64,
            ciphertext,
        };
        match self.links[shard].call(MsgType::Enroll, encode(&req), self.config.shard_deadline()) {
            Ok(_) => Ok(()),
            Err(CallError::Remote(WireError::SlotOccupied(_))) => Err(WireError::SlotOccupied(g)),
            Err(CallError::Remote(e)) => Err(e),
            Err(e) => Err(WireError::Internal(format!("shard {shard}: {e}"))),
        }
    }

    pub fn match_query(&self, ciphertext: Vec<u8>) -> Result<MatchReply, WireError> {
        if self.keys.read().is_none() {
            return Err(WireError::NotReady);
        }
        let payload = encode(&MatchRequest { ciphertext });
        let deadline = self.config.shard_deadline();
        let shards = self.scatter(|i, l| {
            let start = Instant::now();
            let outcome = match l.call(MsgType::Match, payload.clone(), deadline) {
                Ok(f) => match decode::<ShardMatch>(&f.payload) {
                    Ok(m) if m.sets.is_empty() => ShardOutcome::Empty,
                    Ok(m) => ShardOutcome::Result(m),
                    Err(e) => ShardOutcome::Failed(e.to_string()),
                },
                Err(CallError::Timeout) => ShardOutcome::TimedOut,
                Err(e) => ShardOutcome::Failed(e.to_string()),
            };
            if !matches!(outcome, ShardOutcome::Result(_) | ShardOutcome::Empty) {
                log::warn!("shard {i} gave no result: {outcome:?}");
            }
            ShardReply {
                shard: i,
                outcome,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        });
        let partial = shards
            .iter()
            .any(|r| matches!(r.outcome, ShardOutcome::Failed(_) | ShardOutcome::TimedOut));
        Ok(MatchReply {
            layout: LayoutDescriptor {
                slots: self.config.slots,
                m: self.config.m,
                n_in: self.config.n_in,
                shard_capacity: self.config.shard_capacity,
            },
            shards,
            partial,
        })
    }
}

impl Handler for Coordinator {
    fn handle(&self, ty: MsgType, payload: &[u8]) -> Result<(MsgType, Vec<u8>), WireError> {
        match ty {
            MsgType::Keys => {
                self.upload_keys(decode(payload)?)?;
                Ok((MsgType::Result, Vec::new()))
            }
            MsgType::Enroll => {
                let req: EnrollRequest = decode(payload)?;
                self.enroll(req.index, req.ciphertext)?;
                Ok((MsgType::Result, Vec::new()))
            }
            MsgType::Match => {
                let req: MatchRequest = decode(payload)?;
                Ok((MsgType::Result, encode(&self.match_query(req.ciphertext)?)))
            }
            MsgType::Status => Ok((MsgType::Status, encode(&self.status()))),
            other => Err(WireError::UnknownMessage(other as u8)),
        }
    }
}

pub fn spawn_main(node: Arc<Coordinator>, listen: &str) -> Result<ServerHandle, ClusterError> {
    let max = node.config.max_payload;
    Ok(serve(TcpListener::bind(listen)?, node, max)?)
}
