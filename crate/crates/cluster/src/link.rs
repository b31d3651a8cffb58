//! One persistent request/response connection with per-call deadlines.

use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use crate::error::{ClusterError, WireError};
use crate::wire::{decode, read_frame, write_frame, Frame, FrameError, MsgType};

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    #[error("deadline exceeded")]
    Timeout,
    #[error("connection failed: {0}")]
    Io(io::Error),
    #[error("{0}")]
    Protocol(String),
    #[error(transparent)]
    Remote(WireError),
}

impl From<CallError> for ClusterError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Timeout => ClusterError::Io(io::Error::new(io::ErrorKind::TimedOut, "deadline exceeded")),
            CallError::Io(e) => ClusterError::Io(e),
            CallError::Protocol(m) => ClusterError::Protocol(m),
            CallError::Remote(w) => w.into(),
        }
    }
}

#[derive(Debug)]
pub struct Link {
    addr: SocketAddr,
    connect_timeout: Duration,
    max_payload: u32,
    next_id: AtomicU64,
    conn: Mutex<Option<TcpStream>>,
}

impl Link {
    pub fn new(addr: &str, connect_timeout: Duration, max_payload: u32) -> Result<Self, ClusterError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ClusterError::Config(format!("cannot resolve {addr}")))?;
        Ok(Self {
            addr,
            connect_timeout,
            max_payload,
            next_id: AtomicU64::new(1),
            conn: Mutex::new(None),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Sends one request and waits for its reply. Calls on one link are
    /// serialized; any failure drops the connection so a late reply can
    /// never be read as the answer to a later request.
    pub fn call(&self, ty: MsgType, payload: Vec<u8>, deadline: Duration) -> Result<Frame, CallError> {
        let until = Instant::now() + deadline;
        let mut guard = self.conn.try_lock_for(deadline).ok_or(CallError::Timeout)?;
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let result = self.exchange(&mut guard, Frame::new(ty, id, payload), until);
        if result.is_err() {
            *guard = None;
        }
        let reply = result?;
        if reply.request_id != id {
            *guard = None;
            return Err(CallError::Protocol(format!(
                "reply id {} does not match request {id}",
                reply.request_id
            )));
        }
        match reply.kind() {
            Some(MsgType::Error) => Err(CallError::Remote(
                decode::<WireError>(&reply.payload).map_err(|e| CallError::Protocol(e.to_string()))?,
            )),
            _ => Ok(reply),
        }
    }

    fn exchange(&self, slot: &mut Option<TcpStream>, frame: Frame, until: Instant) -> Result<Frame, CallError> {
        let remaining = || {
            until
                .checked_duration_since(Instant::now())
                .filter(|d| !d.is_zero())
                .ok_or(CallError::Timeout)
        };
        if slot.is_none() {
            let t = remaining()?.min(self.connect_timeout);
            let s = TcpStream::connect_timeout(&self.addr, t).map_err(io_error)?;
            s.set_nodelay(true).map_err(CallError::Io)?;
            *slot = Some(s);
        }
        let stream = slot.as_mut().expect("connected");
        stream.set_write_timeout(Some(remaining()?)).map_err(CallError::Io)?;
        write_frame(stream, &frame).map_err(io_error)?;
        stream.set_read_timeout(Some(remaining()?)).map_err(CallError::Io)?;
        let mut r = BufReader::new(&*stream);
        match read_frame(&mut r, self.max_payload) {
            Ok(f) => Ok(f),
            Err(FrameError::Io(e)) => Err(io_error(e)),
            Err(e) => Err(CallError::Protocol(e.to_string())),
        }
    }
}

fn io_error(e: io::Error) -> CallError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => CallError::Timeout,
        _ => CallError::Io(e),
    }
}
