//! Frame transports: in-process loopback, TCP, and a capturing wrapper.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::wire::{Header, MsgType, HEADER_LEN};

/// A reliable, ordered carrier of whole frames.
pub trait Transport: Send {
    fn send(&mut self, frame: &[u8]) -> Result<()>;

    /// Next frame. `None` waits indefinitely. A timeout surfaces as an I/O
    /// error of kind `TimedOut`; a closed peer as [`Error::Closed`].
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        (**self).send(frame)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>> {
        (**self).recv(timeout)
    }
}

fn timed_out() -> Error {
    Error::Io(std::io::Error::new(ErrorKind::TimedOut, "receive timed out"))
}

pub fn is_timeout(e: &Error) -> bool {
    matches!(e, Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock))
}

/// One end of an in-process connection.
#[derive(Debug)]
pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn loopback_pair() -> (Loopback, Loopback) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (Loopback { tx: a_tx, rx: a_rx }, Loopback { tx: b_tx, rx: b_rx })
}

impl Transport for Loopback {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.tx.send(frame.to_vec()).map_err(|_| Error::Closed)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>> {
        match timeout {
            None => self.rx.recv().map_err(|_| Error::Closed),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => timed_out(),
                RecvTimeoutError::Disconnected => Error::Closed,
            }),
        }
    }
}

/// Frames over a TCP stream, delimited by the length in each header.
#[derive(Debug)]
pub struct Tcp {
    stream: TcpStream,
}

impl Tcp {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Tcp { stream })
    }
}

impl Transport for Tcp {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.stream.write_all(frame)?;
        Ok(self.stream.flush()?)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>> {
        self.stream.set_read_timeout(timeout)?;
        let mut frame = vec![0u8; HEADER_LEN];
        match self.stream.read_exact(&mut frame) {
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Err(Error::Closed),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => return Err(timed_out()),
            r => r?,
        }
        let header = Header::decode(&frame)?;
        frame.resize(header.frame_len(), 0);
        self.stream.read_exact(&mut frame[HEADER_LEN..])?;
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    ToProvider,
    ToConsumer,
}

/// One captured frame, as seen on the consumer's side of the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRecord {
    pub provider: u32,
    pub direction: Direction,
    pub msg_type: MsgType,
    pub iteration: u64,
    pub bytes: Vec<u8>,
}

/// Shared, append-only capture of wire traffic.
#[derive(Debug, Clone, Default)]
pub struct WireLog(Arc<Mutex<Vec<WireRecord>>>);

impl WireLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, r: WireRecord) {
        self.0.lock().expect("wire log poisoned").push(r);
    }

    pub fn records(&self) -> Vec<WireRecord> {
        self.0.lock().expect("wire log poisoned").clone()
    }

    /// Sorted `(type, length, direction)` triples per header iteration.
    pub fn shape_by_iteration(&self) -> BTreeMap<u64, Vec<(MsgType, usize, Direction)>> {
        let mut out: BTreeMap<u64, Vec<_>> = BTreeMap::new();
        for r in self.records() {
            out.entry(r.iteration).or_default().push((r.msg_type, r.bytes.len(), r.direction));
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }
}

/// Records every frame passing through `inner`. Wraps the consumer's end
/// of the connection to `provider`.
pub struct Capture<T> {
    inner: T,
    provider: u32,
    log: WireLog,
}

impl<T> Capture<T> {
    pub fn new(inner: T, provider: u32, log: WireLog) -> Self {
        Capture { inner, provider, log }
    }

    fn record(&self, direction: Direction, frame: &[u8]) {
        if let Ok(h) = Header::decode(frame) {
            self.log.push(WireRecord {
                provider: self.provider,
                direction,
                msg_type: h.msg_type,
                iteration: h.iteration,
                bytes: frame.to_vec(),
            });
        }
    }
}

impl<T: Transport> Transport for Capture<T> {
    fn send(&mut self, frame: &[u8]) -> Result<()> {
        self.record(Direction::ToProvider, frame);
        self.inner.send(frame)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>> {
        let f = self.inner.recv(timeout)?;
        self.record(Direction::ToConsumer, &f);
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn frame(ty: MsgType, it: u64, payload: &[u8]) -> Vec<u8> {
        let mut f = Header {
            msg_type: ty,
            iteration: it,
            payload_len: payload.len() as u32,
        }
        .encode()
        .to_vec();
        f.extend_from_slice(payload);
        f.extend_from_slice(&[0u8; 16]);
        f
    }

    #[test]
    fn loopback_times_out_and_closes() {
        let (mut a, b) = loopback_pair();
        assert!(is_timeout(&a.recv(Some(Duration::from_millis(5))).unwrap_err()));
        drop(b);
        assert!(matches!(a.recv(None), Err(Error::Closed)));
    }

    #[test]
    fn tcp_delimits_frames() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut t = Tcp::new(listener.accept().unwrap().0).unwrap();
            let f = t.recv(None).unwrap();
            t.send(&f).unwrap();
            t.send(&frame(MsgType::Done, 9, b"")).unwrap();
        });
        let mut c = Tcp::new(TcpStream::connect(addr).unwrap()).unwrap();
        let f = frame(MsgType::ChunkResp, 2, &[5u8; 300]);
        c.send(&f).unwrap();
        assert_eq!(c.recv(None).unwrap(), f);
        assert_eq!(c.recv(None).unwrap(), frame(MsgType::Done, 9, b""));
        h.join().unwrap();
        assert!(matches!(c.recv(None), Err(Error::Closed)));
    }

    #[test]
    fn capture_records_both_directions() {
        let (a, mut b) = loopback_pair();
        let log = WireLog::new();
        let mut c = Capture::new(a, 4, log.clone());
        c.send(&frame(MsgType::ChunkReq, 1, b"")).unwrap();
        b.send(&frame(MsgType::ChunkResp, 1, &[0; 8])).unwrap();
        c.recv(None).unwrap();
        let shape = log.shape_by_iteration();
        assert_eq!(
            shape[&1],
            vec![(MsgType::ChunkReq, 29, Direction::ToProvider), (MsgType::ChunkResp, 37, Direction::ToConsumer)]
        );
    }
}
