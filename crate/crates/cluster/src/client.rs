use std::collections::BTreeMap;
use std::time::Duration;

use bm_core::he::{Ciphertext, Decryptor, SchemeParams};
use bm_core::pipeline::{decide, decrypt_all, extract_scores, MatchResult, PackingLayout};

use crate::config::ClusterConfig;
use crate::error::ClusterError;
use crate::link::Link;
use crate::routing::ShardLayout;
use crate::wire::{
    decode, encode, ClusterStatus, EnrollRequest, KeysUpload, MatchReply, MatchRequest, MsgType, ShardOutcome,
};

/// Client end of one connection to the main server.
#[derive(Debug)]
pub struct ClusterClient {
    link: Link,
    deadline: Duration,
}

impl ClusterClient {
    pub fn connect(addr: &str, config: &ClusterConfig) -> Result<Self, ClusterError> {
        Ok(Self {
            link: Link::new(
                addr,
                Duration::from_millis(config.timeouts.connect_ms),
                config.max_payload,
            )?,
            deadline: Duration::from_millis(config.timeouts.client_ms),
        })
    }

    pub fn upload_keys(&self, upload: &KeysUpload) -> Result<(), ClusterError> {
        self.link.call(MsgType::Keys, encode(upload), self.deadline)?;
        Ok(())
    }

    pub fn status(&self) -> Result<ClusterStatus, ClusterError> {
        let f = self.link.call(MsgType::Status, Vec::new(), self.deadline)?;
        Ok(decode(&f.payload)?)
    }

    pub fn enroll(&self, g: u64, ciphertext: Vec<u8>) -> Result<(), ClusterError> {
        let req = EnrollRequest { index: g, ciphertext };
        self.link.call(MsgType::Enroll, encode(&req), self.deadline)?;
        Ok(())
    }

    pub fn match_query(&self, ciphertext: Vec<u8>) -> Result<MatchReply, ClusterError> {
        let f = self.link.call(MsgType::Match, encode(&MatchRequest { ciphertext }), self.deadline)?;
        Ok(decode(&f.payload)?)
    }
}

/// Decrypts every shard's packed blobs, maps slots back to global indices
/// and picks the best match over all shards that answered.
pub fn client_decide(
    reply: &MatchReply,
    dec: &dyn Decryptor,
    params: &SchemeParams,
    digest: &[u8; 32],
    threshold: f64,
) -> Result<MatchResult, ClusterError> {
    let d = reply.layout;
    let layout = PackingLayout::new(d.slots, d.m, d.n_in).map_err(|e| ClusterError::Protocol(e.to_string()))?;
    let routing = ShardLayout::new(reply.shards.len(), d.shard_capacity);
    let mut scores = BTreeMap::new();
    for r in &reply.shards {
        let ShardOutcome::Result(m) = &r.outcome else { continue };
        let cts = m
            .packed
            .iter()
            .map(|b| Ciphertext::from_bytes(b, params, digest))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ClusterError::DecryptionFailure(e.to_string()))?;
        let packed = decrypt_all(dec, &cts).map_err(|e| ClusterError::DecryptionFailure(e.to_string()))?;
        let sets: Vec<usize> = m.sets.iter().map(|&t| t as usize).collect();
        if m.occupancy.len() != sets.len() {
            return Err(ClusterError::Protocol("occupancy does not cover every set".into()));
        }
        let occ = |t: usize| {
            let j = sets.iter().position(|&x| x == t).expect("set listed");
            m.occupancy[j].clone()
        };
        for (local, v) in extract_scores(&packed, &layout, &sets, &occ) {
            scores.insert(routing.global(r.shard, local) as usize, v);
        }
    }
    Ok(decide(scores, threshold))
}
