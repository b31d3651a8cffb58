//! Thread-per-connection TCP loop shared by the main and shard roles.

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::Mutex;

use crate::error::WireError;
use crate::wire::{encode, read_frame, write_frame, Frame, FrameError, MsgType};

pub trait Handler: Send + Sync + 'static {
    /// Answers one request; the reply frame reuses its request id.
    fn handle(&self, ty: MsgType, payload: &[u8]) -> Result<(MsgType, Vec<u8>), WireError>;
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and severs every open connection.
    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for c in self.conns.lock().drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve<H: Handler>(listener: TcpListener, handler: Arc<H>, max_payload: u32) -> std::io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
    let accept = {
        let stop = stop.clone();
        let conns = conns.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                if let Ok(c) = stream.try_clone() {
                    let mut all = conns.lock();
                    all.retain(|s| s.peer_addr().is_ok());
                    all.push(c);
                }
                let handler = handler.clone();
                std::thread::spawn(move || connection(stream, handler.as_ref(), max_payload));
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        conns,
        accept: Some(accept),
    })
}

fn connection<H: Handler>(stream: TcpStream, handler: &H, max_payload: u32) {
    let peer = stream.peer_addr().ok();
    let Ok(write_half) = stream.try_clone() else { return };
    let mut r = BufReader::new(stream);
    let mut w = BufWriter::new(write_half);
    loop {
        let frame = match read_frame(&mut r, max_payload) {
            Ok(f) => f,
            Err(FrameError::Io(_)) => return,
            Err(e) => {
                // The stream cannot be resynchronized after a bad header.
                log::warn!("closing connection from {peer:?}: {e}");
                let reply = Frame::new(MsgType::Error, 0, encode(&WireError::Malformed(e.to_string())));
                let _ = write_frame(&mut w, &reply);
                return;
            }
        };
        let result = match frame.kind() {
            Some(ty @ (MsgType::Keys | MsgType::Enroll | MsgType::Match | MsgType::Status)) => {
                handler.handle(ty, &frame.payload)
            }
            _ => Err(WireError::UnknownMessage(frame.msg_type)),
        };
        let reply = match result {
            Ok((ty, payload)) => Frame::new(ty, frame.request_id, payload),
            Err(e) => Frame::new(MsgType::Error, frame.request_id, encode(&e)),
        };
        if write_frame(&mut w, &reply).is_err() {
            return;
        }
    }
}
