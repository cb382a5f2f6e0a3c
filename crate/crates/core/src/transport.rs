//! Byte transports between the session and its controllers.
//!
//! Every call carries the session's virtual clock so that a wrapped link can
//! hold messages back without touching wall time.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in microseconds since session start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus_micros(self, us: u64) -> Self {
        SimTime(self.0 + us)
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Transport: Send {
    fn send(&mut self, bytes: Vec<u8>, now: SimTime) -> Result<(), TransportError>;
    fn recv(&mut self, now: SimTime) -> Result<Option<Vec<u8>>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, bytes: Vec<u8>, now: SimTime) -> Result<(), TransportError> {
        (**self).send(bytes, now)
    }

    fn recv(&mut self, now: SimTime) -> Result<Option<Vec<u8>>, TransportError> {
        (**self).recv(now)
    }
}

/// One end of an in-process link.
pub struct MemoryEndpoint {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn memory_link() -> (MemoryEndpoint, MemoryEndpoint) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemoryEndpoint { tx: a_tx, rx: a_rx },
        MemoryEndpoint { tx: b_tx, rx: b_rx },
    )
}

impl Transport for MemoryEndpoint {
    fn send(&mut self, bytes: Vec<u8>, _now: SimTime) -> Result<(), TransportError> {
        self.tx
            .send(bytes)
            .map_err(|_| TransportError::Disconnected)
    }

    fn recv(&mut self, _now: SimTime) -> Result<Option<Vec<u8>>, TransportError> {
        match self.rx.try_recv() {
            Ok(b) => Ok(Some(b)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(TransportError::Disconnected),
        }
    }
}

/// A connected, non-blocking UDP socket; one OSC message per datagram.
pub struct UdpEndpoint {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl UdpEndpoint {
    pub fn connect(local: SocketAddr, peer: SocketAddr) -> io::Result<Self> {
        let socket = UdpSocket::bind(local)?;
        socket.connect(peer)?;
        socket.set_nonblocking(true)?;
        Ok(Self {
            socket,
            buf: vec![0; 65_536],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl Transport for UdpEndpoint {
    fn send(&mut self, bytes: Vec<u8>, _now: SimTime) -> Result<(), TransportError> {
        self.socket.send(&bytes)?;
        Ok(())
    }

    fn recv(&mut self, _now: SimTime) -> Result<Option<Vec<u8>>, TransportError> {
        match self.socket.recv(&mut self.buf) {
            Ok(n) => Ok(Some(self.buf[..n].to_vec())),
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// One-way delay of a link: `delay_ms` plus uniform jitter in `±jitter_ms`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub delay_ms: f64,
    pub jitter_ms: f64,
}

impl LatencyModel {
    pub fn is_zero(&self) -> bool {
        self.delay_ms == 0.0 && self.jitter_ms == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.delay_ms.is_finite() && self.delay_ms >= 0.0) {
            return Err(format!("delay_ms must be >= 0, got {}", self.delay_ms));
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return Err(format!("jitter_ms must be >= 0, got {}", self.jitter_ms));
        }
        Ok(())
    }

    fn sample_micros(&self, rng: &mut ChaCha8Rng) -> u64 {
        let base = self.delay_ms * 1000.0;
        let jitter = self.jitter_ms * 1000.0;
        let d = if jitter > 0.0 {
            base + rng.gen_range(-jitter..=jitter)
        } else {
            base
        };
        d.max(0.0).round() as u64
    }
}

struct DelayQueue {
    rng: ChaCha8Rng,
    pending: VecDeque<(SimTime, Vec<u8>)>,
    last_due: SimTime,
}

impl DelayQueue {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: VecDeque::new(),
            last_due: SimTime::default(),
        }
    }

    fn push(&mut self, bytes: Vec<u8>, now: SimTime, model: &LatencyModel) {
        // never overtake an earlier message
        let due = now
            .plus_micros(model.sample_micros(&mut self.rng))
            .max(self.last_due);
        self.last_due = due;
        self.pending.push_back((due, bytes));
    }

    fn pop_due(&mut self, now: SimTime) -> Option<Vec<u8>> {
        match self.pending.front() {
            Some((due, _)) if *due <= now => self.pending.pop_front().map(|(_, b)| b),
            _ => None,
        }
    }
}

/// Delays both directions of a link by independently sampled one-way delays,
/// preserving send order. Deterministic for a given seed.
///
/// Inbound delay counts from the first `recv` that sees the message, so the
/// wrapper should be polled every tick.
pub struct LatencyChannel<T> {
    inner: T,
    model: LatencyModel,
    outbound: DelayQueue,
    inbound: DelayQueue,
}

pub fn latency_channel<T: Transport>(
    link: T,
    delay_ms: f64,
    jitter_ms: f64,
    seed: u64,
) -> LatencyChannel<T> {
    LatencyChannel::new(
        link,
        LatencyModel {
            delay_ms,
            jitter_ms,
        },
        seed,
    )
}

impl<T: Transport> LatencyChannel<T> {
    pub fn new(inner: T, model: LatencyModel, seed: u64) -> Self {
        Self {
            inner,
            model,
            outbound: DelayQueue::new(seed),
            inbound: DelayQueue::new(seed ^ 0x9E37_79B9_7F4A_7C15),
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }

    fn flush(&mut self, now: SimTime) -> Result<(), TransportError> {
        while let Some(bytes) = self.outbound.pop_due(now) {
            self.inner.send(bytes, now)?;
        }
        Ok(())
    }
}

impl<T: Transport> Transport for LatencyChannel<T> {
    fn send(&mut self, bytes: Vec<u8>, now: SimTime) -> Result<(), TransportError> {
        self.outbound.push(bytes, now, &self.model);
        self.flush(now)
    }

    fn recv(&mut self, now: SimTime) -> Result<Option<Vec<u8>>, TransportError> {
        self.flush(now)?;
        while let Some(bytes) = self.inner.recv(now)? {
            self.inbound.push(bytes, now, &self.model);
        }
        Ok(self.inbound.pop_due(now))
    }
}
