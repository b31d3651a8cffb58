//! Sharded deployment of the encrypted matcher: a main server that routes
//! enrollments and scatters queries, shard servers that run the matching
//! pipeline over their own stores, and a client that holds the secret key.

use std::path::Path;
use std::sync::Arc;

pub mod client;
pub mod config;
pub mod coordinator;
pub mod error;
pub mod link;
pub mod local;
pub mod persist;
pub mod routing;
pub mod server;
pub mod session;
pub mod shard;
pub mod wire;

pub use client::{client_decide, ClusterClient};
pub use config::{Backend, ClusterConfig, Timeouts};
pub use coordinator::{spawn_main, Coordinator};
pub use local::{local_reply, single_process_match, LocalCluster};
pub use error::{ClusterError, WireError};
pub use routing::ShardLayout;
pub use server::ServerHandle;
pub use session::ClientSession;
pub use shard::{spawn_shard, ShardNode};
pub use wire::{MatchReply, ShardOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Role {
    Main,
    Shard,
}

/// Starts a server of the given role on `listen`; the returned handle
/// keeps it alive.
pub fn launch(
    role: Role,
    config: &ClusterConfig,
    listen: &str,
    shards: &[String],
    data: Option<&Path>,
) -> Result<ServerHandle, ClusterError> {
    match role {
        Role::Shard => spawn_shard(Arc::new(ShardNode::open(config, data)?), listen),
        Role::Main => spawn_main(Arc::new(Coordinator::new(config, shards, data)?), listen),
    }
}
