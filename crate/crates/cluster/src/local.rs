//! In-process deployments over loopback, and the single-process reference
//! run the distributed result is compared against.

use std::path::Path;
use std::sync::Arc;

use bm_core::pipeline::MatchResult;

use crate::config::ClusterConfig;
use crate::coordinator::{spawn_main, Coordinator};
use crate::error::ClusterError;
use crate::server::ServerHandle;
use crate::session::ClientSession;
use crate::shard::{spawn_shard, ShardNode};
use crate::wire::{LayoutDescriptor, MatchReply, ShardOutcome, ShardReply};

/// `K` shard servers and a main server bound to ephemeral loopback ports.
pub struct LocalCluster {
    pub shards: Vec<Arc<ShardNode>>,
    pub shard_handles: Vec<ServerHandle>,
    pub coordinator: Arc<Coordinator>,
    pub main: ServerHandle,
}

impl LocalCluster {
    /// With `data_root`, shard `i` persists under `data_root/shard-i` and
    /// the main server under `data_root/main`.
    pub fn start(config: &ClusterConfig, data_root: Option<&Path>) -> Result<Self, ClusterError> {
        let mut shards = Vec::new();
        let mut shard_handles = Vec::new();
        for i in 0..config.shards {
            let dir = data_root.map(|r| r.join(format!("shard-{i}")));
            let node = Arc::new(ShardNode::open(config, dir.as_deref())?);
            shard_handles.push(spawn_shard(node.clone(), "127.0.0.1:0")?);
            shards.push(node);
        }
        let addrs: Vec<String> = shard_handles.iter().map(|h| h.local_addr().to_string()).collect();
        let main_dir = data_root.map(|r| r.join("main"));
        let coordinator = Arc::new(Coordinator::new(config, &addrs, main_dir.as_deref())?);
        let main = spawn_main(coordinator.clone(), "127.0.0.1:0")?;
        Ok(Self {
            shards,
            shard_handles,
            coordinator,
            main,
        })
    }

    pub fn main_addr(&self) -> String {
        self.main.local_addr().to_string()
    }

    /// Severs shard `i` as if its process died.
    pub fn kill_shard(&mut self, i: usize) {
        self.shard_handles[i].shutdown();
    }

    /// Every file written by any server of this deployment.
    pub fn server_files(&self) -> Vec<std::path::PathBuf> {
        let mut files: Vec<_> = self.shards.iter().flat_map(|s| s.files()).collect();
        files.extend(self.coordinator.files());
        files
    }
}

/// Runs the same enrollments and query through one in-process store
/// holding all `K * C_cap` indices.
pub fn single_process_match(
    session: &ClientSession,
    enrollees: &[(u64, Vec<f64>)],
    query: &[f64],
    threshold: f64,
) -> Result<MatchResult, ClusterError> {
    let config = session.config();
    let total = config.total_capacity();
    let node = ShardNode::with_capacity(config, total, None)?;
    node.load_keys(session.upload())?;
    for (g, f) in enrollees {
        node.enroll(*g as usize, &session.encrypt_enrollee(f)?)?;
    }
    let reply = local_reply(&node, &session.encrypt_query(query)?)?;
    session.decide(&reply, threshold)
}

/// Matches a query blob against one node and wraps the result as a
/// one-shard reply whose capacity is the node's whole store.
pub fn local_reply(node: &ShardNode, query: &[u8]) -> Result<MatchReply, ClusterError> {
    let config = node.config();
    let m = node.match_blob(query)?;
    let outcome = if m.sets.is_empty() {
        ShardOutcome::Empty
    } else {
        ShardOutcome::Result(m)
    };
    Ok(MatchReply {
        layout: LayoutDescriptor {
            slots: config.slots,
            m: config.m,
            n_in: config.n_in,
            shard_capacity: node.store().capacity(),
        },
        shards: vec![ShardReply {
            shard: 0,
            outcome,
            elapsed_ms: 0.0,
        }],
        partial: false,
    })
}
