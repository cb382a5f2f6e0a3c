//! Live serving: UDP/OSC and WebSocket/JSON gateways around a [`Session`].
//!
//! Network threads only decode and enqueue. The tick thread owns the session,
//! drains the queue at each device tick and sends replies itself.

use std::collections::HashMap;
use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use crate::osc::{decode_osc, encode_osc};
use crate::schema::{from_bridge_json, to_bridge_json, ControlMessage, PlayerId, MAX_PLAYERS};
use crate::session::{Session, SessionError, StepOutcome, TickRecord};
use crate::transport::{SimTime, Transport, TransportError};

const POLL: Duration = Duration::from_millis(10);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Peer {
    Udp(SocketAddr),
    Bridge(u64),
}

impl std::fmt::Display for Peer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Peer::Udp(addr) => write!(f, "udp:{addr}"),
            Peer::Bridge(id) => write!(f, "bridge#{id}"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum GatewayEvent {
    Message { peer: Peer, msg: ControlMessage },
    Closed(Peer),
}

type BridgeOutboxes = Arc<Mutex<HashMap<u64, Sender<String>>>>;

/// Network endpoints. Dropping it stops the threads.
pub struct Gateway {
    udp: UdpSocket,
    bridge_addr: Option<SocketAddr>,
    events: Receiver<GatewayEvent>,
    bridges: BridgeOutboxes,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Gateway {
    /// Binds the OSC socket and, when given, the bridge listener. Port 0 picks a free port.
    pub fn bind(osc: SocketAddr, bridge: Option<SocketAddr>) -> io::Result<Self> {
        let udp = UdpSocket::bind(osc)?;
        let listener = bridge.map(TcpListener::bind).transpose()?;
        let bridge_addr = listener.as_ref().map(TcpListener::local_addr).transpose()?;
        let (tx, events) = channel();
        let stop = Arc::new(AtomicBool::new(false));
        let bridges: BridgeOutboxes = Arc::default();
        let mut threads = Vec::new();

        let rx_sock = udp.try_clone()?;
        rx_sock.set_read_timeout(Some(POLL))?;
        {
            let tx = tx.clone();
            let stop = stop.clone();
            threads.push(thread::spawn(move || udp_loop(rx_sock, tx, stop)));
        }
        if let Some(listener) = listener {
            listener.set_nonblocking(true)?;
            let stop = stop.clone();
            let bridges = bridges.clone();
            threads.push(thread::spawn(move || {
                accept_loop(listener, tx, bridges, stop)
            }));
        }
        Ok(Self {
            udp,
            bridge_addr,
            events,
            bridges,
            stop,
            threads,
        })
    }

    pub fn osc_addr(&self) -> io::Result<SocketAddr> {
        self.udp.local_addr()
    }

    pub fn bridge_addr(&self) -> Option<SocketAddr> {
        self.bridge_addr
    }

    pub fn try_event(&self) -> Option<GatewayEvent> {
        self.events.try_recv().ok()
    }

    /// Sends encoded OSC to a peer; bridge peers get the JSON rendering.
    pub fn send(&self, peer: Peer, bytes: &[u8]) {
        match peer {
            Peer::Udp(addr) => {
                if let Err(e) = self.udp.send_to(bytes, addr) {
                    warn!("{peer}: send failed: {e}");
                }
            }
            Peer::Bridge(id) => {
                let json = decode_osc(bytes)
                    .map_err(|e| e.to_string())
                    .and_then(|m| ControlMessage::try_from(&m).map_err(|e| e.to_string()))
                    .and_then(|m| to_bridge_json(&m).map_err(|e| e.to_string()));
                match json {
                    Ok(v) => {
                        let outboxes = self.bridges.lock().expect("bridge table poisoned");
                        if let Some(out) = outboxes.get(&id) {
                            let _ = out.send(v.to_string());
                        }
                    }
                    Err(e) => warn!("{peer}: cannot bridge message: {e}"),
                }
            }
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn udp_loop(sock: UdpSocket, tx: Sender<GatewayEvent>, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; 65_536];
    while !stop.load(Ordering::SeqCst) {
        match sock.recv_from(&mut buf) {
            Ok((n, from)) => {
                let peer = Peer::Udp(from);
                let parsed = decode_osc(&buf[..n])
                    .map_err(|e| e.to_string())
                    .and_then(|m| ControlMessage::try_from(&m).map_err(|e| e.to_string()));
                match parsed {
                    Ok(msg) => {
                        if tx.send(GatewayEvent::Message { peer, msg }).is_err() {
                            return;
                        }
                    }
                    Err(e) => warn!("{peer}: dropped datagram: {e}"),
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            // ICMP port-unreachable from a departed peer surfaces here on some platforms
            Err(e) => debug!("udp receive: {e}"),
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<GatewayEvent>,
    bridges: BridgeOutboxes,
    stop: Arc<AtomicBool>,
) {
    let next_id = AtomicU64::new(1);
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, addr)) => {
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let (out_tx, out_rx) = channel();
                bridges
                    .lock()
                    .expect("bridge table poisoned")
                    .insert(id, out_tx);
                let tx = tx.clone();
                let stop = stop.clone();
                let bridges = bridges.clone();
                info!("bridge#{id} connected from {addr}");
                workers.push(thread::spawn(move || {
                    if let Err(e) = bridge_connection(stream, Peer::Bridge(id), &tx, out_rx, &stop)
                    {
                        debug!("bridge#{id}: {e}");
                    }
                    bridges.lock().expect("bridge table poisoned").remove(&id);
                    let _ = tx.send(GatewayEvent::Closed(Peer::Bridge(id)));
                    info!("bridge#{id} closed");
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => warn!("bridge accept: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn bridge_connection(
    stream: TcpStream,
    peer: Peer,
    tx: &Sender<GatewayEvent>,
    outbound: Receiver<String>,
    stop: &AtomicBool,
) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref()
        .set_read_timeout(Some(POLL))
        .map_err(|e| e.to_string())?;
    while !stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let parsed = serde_json::from_str(&text)
                    .map_err(|e| e.to_string())
                    .and_then(|v| from_bridge_json(&v).map_err(|e| e.to_string()));
                match parsed {
                    Ok(msg) => {
                        if tx.send(GatewayEvent::Message { peer, msg }).is_err() {
                            return Ok(());
                        }
                    }
                    Err(e) => warn!("{peer}: dropped message: {e}"),
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e.to_string()),
        }
        loop {
            match outbound.try_recv() {
                Ok(text) => ws.write(Message::Text(text)).map_err(|e| e.to_string())?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        match ws.flush() {
            Ok(()) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

/// Session-side link of a remote slot: stick bytes routed in by the tick
/// thread, replies queued for the gateway.
struct RemoteLink {
    peer: Peer,
    inbox: Receiver<Vec<u8>>,
    outbox: Sender<(Peer, Vec<u8>)>,
}

impl Transport for RemoteLink {
    fn send(&mut self, bytes: Vec<u8>, _now: SimTime) -> Result<(), TransportError> {
        self.outbox
            .send((self.peer, bytes))
            .map_err(|_| TransportError::Disconnected)
    }

    fn recv(&mut self, _now: SimTime) -> Result<Option<Vec<u8>>, TransportError> {
        match self.inbox.try_recv() {
            Ok(b) => Ok(Some(b)),
            Err(TryRecvError::Empty) => Ok(None),
            Err(TryRecvError::Disconnected) => Err(TransportError::Disconnected),
        }
    }
}

struct Binding {
    peer: Peer,
    inbox: Sender<Vec<u8>>,
}

/// A session served to remote controllers.
pub struct LiveServer {
    session: Session,
    gateway: Gateway,
    bindings: [Option<Binding>; MAX_PLAYERS as usize],
    outbox_tx: Sender<(Peer, Vec<u8>)>,
    outbox_rx: Receiver<(Peer, Vec<u8>)>,
}

impl LiveServer {
    pub fn new(session: Session, gateway: Gateway) -> Self {
        let (outbox_tx, outbox_rx) = channel();
        Self {
            session,
            gateway,
            bindings: Default::default(),
            outbox_tx,
            outbox_rx,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn peer_of(&self, player: PlayerId) -> Option<Peer> {
        self.bindings[player.index()].as_ref().map(|b| b.peer)
    }

    fn bind(&mut self, player: PlayerId, peer: Peer) -> Result<(), SessionError> {
        let (inbox_tx, inbox) = channel();
        let link = RemoteLink {
            peer,
            inbox,
            outbox: self.outbox_tx.clone(),
        };
        self.session
            .handle_join(i64::from(player.get()), Box::new(link))?;
        self.bindings[player.index()] = Some(Binding {
            peer,
            inbox: inbox_tx,
        });
        info!("slot {player} bound to {peer}");
        Ok(())
    }

    fn release(&mut self, player: PlayerId) {
        if self.bindings[player.index()].take().is_some() {
            if let Err(e) = self.session.handle_leave(i64::from(player.get())) {
                warn!("slot {player}: {e}");
            }
            info!("slot {player} released");
        }
    }

    fn owned_by(&self, player: PlayerId, peer: Peer) -> bool {
        self.bindings[player.index()]
            .as_ref()
            .is_some_and(|b| b.peer == peer)
    }

    /// Applies one gateway event to the session.
    pub fn handle_event(&mut self, event: GatewayEvent) {
        match event {
            GatewayEvent::Closed(peer) => {
                for player in PlayerId::all() {
                    if self.owned_by(player, peer) {
                        self.release(player);
                    }
                }
            }
            GatewayEvent::Message { peer, msg } => match msg {
                ControlMessage::Join { player } => {
                    if !self.owned_by(player, peer) {
                        if let Err(e) = self.bind(player, peer) {
                            warn!("{peer}: join refused: {e}");
                        }
                    }
                }
                ControlMessage::Leave { player } => {
                    if self.owned_by(player, peer) {
                        self.release(player);
                    }
                }
                ControlMessage::Stick { player, .. } => {
                    // a controller that streams without joining claims a free slot
                    if self.bindings[player.index()].is_none() {
                        if let Err(e) = self.bind(player, peer) {
                            debug!("{peer}: stick refused: {e}");
                            return;
                        }
                    }
                    match &self.bindings[player.index()] {
                        Some(b) if b.peer == peer => {
                            let bytes =
                                encode_osc(&msg.to_osc()).expect("schema addresses are valid");
                            let _ = b.inbox.send(bytes);
                        }
                        _ => debug!("{peer}: slot {player} belongs to another peer"),
                    }
                }
                ControlMessage::Haptics { on } => {
                    info!("{peer}: haptics {}", if on { "on" } else { "off" });
                    self.session.set_haptic_mode(on);
                }
                ControlMessage::Force { .. } | ControlMessage::GameState(_) => {
                    debug!("{peer}: ignoring server-bound {}", msg.address());
                }
            },
        }
    }

    /// One device tick: drain the gateway, step the session, flush replies.
    /// Returns the game tick records produced.
    pub fn tick(&mut self) -> Result<(StepOutcome, Vec<TickRecord>), SessionError> {
        while let Some(event) = self.gateway.try_event() {
            self.handle_event(event);
        }
        let outcome = self.session.step()?;
        while let Ok((peer, bytes)) = self.outbox_rx.try_recv() {
            self.gateway.send(peer, &bytes);
        }
        Ok((outcome, self.session.take_records()))
    }

    pub fn shutdown(self) {
        self.gateway.shutdown();
    }
}
