//! Length-prefixed framing: `BMW1 | msg_type u8 | request_id u64 | payload_len u32 | payload`,
//! integers little-endian. Payloads are bincode-encoded message structs.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::WireError;

pub const WIRE_MAGIC: &[u8; 4] = b"BMW1";
pub const FRAME_HEADER_LEN: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Keys = 1,
    Enroll = 2,
    Match = 3,
    Result = 4,
    Error = 5,
    Status = 6,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Keys,
            2 => Self::Enroll,
            3 => Self::Match,
            4 => Self::Result,
            5 => Self::Error,
            6 => Self::Status,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Raw type byte; may be unknown to this build.
    pub msg_type: u8,
    pub request_id: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(ty: MsgType, request_id: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type: ty as u8,
            request_id,
            payload,
        }
    }

    pub fn kind(&self) -> Option<MsgType> {
        MsgType::from_u8(self.msg_type)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("payload of {len} bytes exceeds limit {max}")]
    TooLarge { len: u32, max: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> io::Result<()> {
    let mut head = Vec::with_capacity(FRAME_HEADER_LEN);
    head.extend_from_slice(WIRE_MAGIC);
    head.push(f.msg_type);
    head.write_u64::<LittleEndian>(f.request_id)?;
    head.write_u32::<LittleEndian>(f.payload.len() as u32)?;
    w.write_all(&head)?;
    w.write_all(&f.payload)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R, max_payload: u32) -> Result<Frame, FrameError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WIRE_MAGIC {
        return Err(FrameError::BadMagic);
    }
    let msg_type = r.read_u8()?;
    let request_id = r.read_u64::<LittleEndian>()?;
    let len = r.read_u32::<LittleEndian>()?;
    if len > max_payload {
        return Err(FrameError::TooLarge { len, max: max_payload });
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame {
        msg_type,
        request_id,
        payload,
    })
}

pub fn encode<T: Serialize>(v: &T) -> Vec<u8> {
    bincode::serialize(v).expect("message serializes")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, WireError> {
    bincode::deserialize(bytes).map_err(|e| WireError::Malformed(e.to_string()))
}

/// Public material a client hands to the server; there is no field for
/// the secret key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeysUpload {
    pub digest: [u8; 32],
    /// Serialized public key; empty for the exact backend.
    pub public: Vec<u8>,
    /// Serialized relinearization and Galois keys; empty for the exact backend.
    pub evaluation: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollRequest {
    pub index: u64,
    pub ciphertext: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRequest {
    pub ciphertext: Vec<u8>,
}

/// What a shard reports about itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStatus {
    pub keys_loaded: bool,
    pub enrolled: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardState {
    pub shard: usize,
    pub reachable: bool,
    pub ready: bool,
    pub enrolled: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStatus {
    pub keys_loaded: bool,
    pub shards: Vec<ShardState>,
}

impl ClusterStatus {
    pub fn all_ready(&self) -> bool {
        self.keys_loaded && self.shards.iter().all(|s| s.ready)
    }
}

/// Packed outputs of one shard for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardMatch {
    /// Serialized packed ciphertexts.
    pub packed: Vec<Vec<u8>>,
    /// Shard-local set id of each compression input, in order.
    pub sets: Vec<u32>,
    /// Block occupancy of each entry of `sets`.
    pub occupancy: Vec<Vec<bool>>,
    /// Server-side compute time.
    pub match_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShardOutcome {
    Result(ShardMatch),
    /// The shard holds no enrollees.
    Empty,
    /// No reply within the per-shard deadline.
    TimedOut,
    /// Connection failed or the shard returned an error.
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardReply {
    pub shard: usize,
    pub outcome: ShardOutcome,
    /// Round trip seen by the main server.
    pub elapsed_ms: f64,
}

/// Enough geometry for the client to map packed slots to global indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDescriptor {
    pub slots: usize,
    pub m: usize,
    pub n_in: usize,
    pub shard_capacity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReply {
    pub layout: LayoutDescriptor,
    /// One entry per shard, ordered by shard id.
    pub shards: Vec<ShardReply>,
    /// Set when any shard timed out or failed; scores cover only the
    /// shards that answered.
    pub partial: bool,
}

impl MatchReply {
    pub fn timed_out(&self) -> Vec<usize> {
        self.shards
            .iter()
            .filter(|r| matches!(r.outcome, ShardOutcome::TimedOut | ShardOutcome::Failed(_)))
            .map(|r| r.shard)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let f = Frame::new(MsgType::Match, 0x0102_0304_0506_0708, b"abc".to_vec());
        let mut buf = Vec::new();
        write_frame(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), FRAME_HEADER_LEN + 3);
        assert_eq!(&buf[..4], b"BMW1");
        assert_eq!(buf[4], 3);
        assert_eq!(&buf[5..13], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&buf[13..17], &[3, 0, 0, 0]);
        assert_eq!(read_frame(&mut buf.as_slice(), 16).unwrap(), f);
    }

    #[test]
    fn frame_limits() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Frame::new(MsgType::Keys, 1, vec![0; 32])).unwrap();
        assert!(matches!(
            read_frame(&mut buf.as_slice(), 16),
            Err(FrameError::TooLarge { len: 32, max: 16 })
        ));
        buf[0] = b'X';
        assert!(matches!(read_frame(&mut buf.as_slice(), 64), Err(FrameError::BadMagic)));
        assert_eq!(MsgType::from_u8(9), None);
    }

    #[test]
    fn messages_roundtrip() {
        let r = MatchReply {
            layout: LayoutDescriptor {
                slots: 8,
                m: 4,
                n_in: 2,
                shard_capacity: 4,
            },
            shards: vec![ShardReply {
                shard: 0,
                outcome: ShardOutcome::TimedOut,
                elapsed_ms: 1.5,
            }],
            partial: true,
        };
        assert_eq!(decode::<MatchReply>(&encode(&r)).unwrap(), r);
        assert_eq!(r.timed_out(), vec![0]);
        assert!(matches!(decode::<MatchReply>(b"\x01"), Err(WireError::Malformed(_))));
    }
}
