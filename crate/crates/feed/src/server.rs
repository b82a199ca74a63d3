//! Live session server.
//!
//! One engine thread owns the session and every connection's write half.
//! Listener, connection readers and the pacer only send into the engine
//! thread's inbox, so stepping and broadcasting are serialized and the
//! inbox order is the only ordering that matters. That order is written
//! to the trace log, which scenario replay can verify offline.

use std::collections::BTreeMap;
use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use ocsis_core::engine::{EngineError, EngineEvent, PilotCommand, Session};
use ocsis_core::model::{FlightPhase, FlightState};
use ocsis_core::scenario::{Direction, Scenario, TraceRecord};

use crate::wire::{encode, ErrorCode, FrameDecoder, Role, StateUpdate, WireError, WireMessage, PROTOCOL_VERSION};

pub const DEFAULT_PORT: u16 = 4720;

pub struct ServeConfig {
    pub addr: String,
    /// Playback ticks per second; 0 pauses playback until a `step` frame.
    pub tick_rate: f64,
    /// Timeline replayed into the session. Scripted commands are ignored;
    /// the connected UIs are the pilot.
    pub playback: Option<Scenario>,
    /// Receives every STATE, COMMAND, EVENT and ERROR record as a trace line.
    pub trace: Option<Box<dyn Write + Send>>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { addr: format!("127.0.0.1:{DEFAULT_PORT}"), tick_rate: 1.0, playback: None, trace: None }
    }
}

type ConnId = u64;

enum Inbox {
    Connected(ConnId, TcpStream),
    Frame(ConnId, Result<WireMessage, WireError>),
    Closed(ConnId),
    Tick,
    Shutdown,
}

pub struct ServerHandle {
    addr: SocketAddr,
    inbox: Sender<Inbox>,
    stop: Arc<AtomicBool>,
    engine: Option<JoinHandle<Session>>,
    listener: Option<JoinHandle<()>>,
    pacer: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the server, closes all connections and hands back the session.
    pub fn shutdown(mut self) -> Session {
        self.stop_threads();
        self.engine.take().expect("engine thread").join().expect("engine thread panicked")
    }

    /// Blocks until the engine thread ends, which only happens on shutdown.
    pub fn wait(mut self) -> Session {
        self.engine.take().expect("engine thread").join().expect("engine thread panicked")
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.inbox.send(Inbox::Shutdown);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.listener.take() {
            let _ = h.join();
        }
        if let Some(h) = self.pacer.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.engine.is_some() {
            self.stop_threads();
            if let Some(h) = self.engine.take() {
                let _ = h.join();
            }
        }
    }
}

/// Binds and starts serving. Returns once the socket is listening.
pub fn serve(session: Session, config: ServeConfig) -> io::Result<ServerHandle> {
    let addr = config
        .addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    info!("listening on {addr}");
    let (tx, rx) = channel();
    let stop = Arc::new(AtomicBool::new(false));

    let listener = {
        let tx = tx.clone();
        let stop = stop.clone();
        thread::Builder::new().name("ocsis-accept".into()).spawn(move || accept_loop(listener, tx, stop))?
    };
    let pacer = if config.tick_rate > 0.0 && config.playback.is_some() {
        let tx = tx.clone();
        let stop = stop.clone();
        let period = Duration::from_secs_f64(1.0 / config.tick_rate);
        Some(thread::Builder::new().name("ocsis-pacer".into()).spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                thread::sleep(period);
                if tx.send(Inbox::Tick).is_err() {
                    break;
                }
            }
        })?)
    } else {
        None
    };
    let engine = Engine::new(session, config);
    let engine = thread::Builder::new().name("ocsis-engine".into()).spawn(move || engine.run(rx))?;
    Ok(ServerHandle { addr, inbox: tx, stop, engine: Some(engine), listener: Some(listener), pacer })
}

fn accept_loop(listener: TcpListener, tx: Sender<Inbox>, stop: Arc<AtomicBool>) {
    let mut next_id: ConnId = 1;
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let id = next_id;
        next_id += 1;
        let _ = stream.set_nodelay(true);
        let (Ok(writer), reader) = (stream.try_clone(), stream) else {
            continue;
        };
        debug!("connection {id} from {:?}", reader.peer_addr());
        if tx.send(Inbox::Connected(id, writer)).is_err() {
            break;
        }
        let tx = tx.clone();
        let _ = thread::Builder::new().name(format!("ocsis-conn-{id}")).spawn(move || read_loop(id, reader, tx));
    }
}

fn read_loop(id: ConnId, mut stream: TcpStream, tx: Sender<Inbox>) {
    let mut decoder = FrameDecoder::new();
    let mut buf = [0u8; 8192];
    loop {
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                decoder.push(&buf[..n]);
                while let Some(frame) = decoder.next_frame() {
                    if tx.send(Inbox::Frame(id, frame)).is_err() {
                        return;
                    }
                }
            }
        }
    }
    let _ = tx.send(Inbox::Closed(id));
}

struct Conn {
    writer: BufWriter<TcpStream>,
    role: Option<Role>,
}

struct Engine {
    session: Session,
    set_hash: String,
    conns: BTreeMap<ConnId, Conn>,
    current: FlightState,
    playback: Vec<FlightState>,
    next_playback: usize,
    clock: Option<u64>,
    trace: Option<Box<dyn Write + Send>>,
}

impl Engine {
    fn new(session: Session, config: ServeConfig) -> Self {
        let current = session
            .latest_state()
            .cloned()
            .unwrap_or_else(|| FlightState::new(session.now(), FlightPhase::CockpitPrep));
        Self {
            set_hash: session.procedure_set().content_hash(),
            session,
            conns: BTreeMap::new(),
            current,
            playback: config.playback.map(|s| s.states()).unwrap_or_default(),
            next_playback: 0,
            clock: None,
            trace: config.trace,
        }
    }

    fn run(mut self, rx: Receiver<Inbox>) -> Session {
        while let Ok(msg) = rx.recv() {
            match msg {
                Inbox::Connected(id, stream) => {
                    let _ = stream.set_write_timeout(Some(Duration::from_secs(5)));
                    self.conns.insert(id, Conn { writer: BufWriter::new(stream), role: None });
                }
                Inbox::Frame(id, frame) => self.on_frame(id, frame),
                Inbox::Closed(id) => {
                    if let Some(c) = self.conns.remove(&id) {
                        info!("connection {id} ({:?}) closed", c.role);
                    }
                }
                Inbox::Tick => self.advance(1),
                Inbox::Shutdown => break,
            }
        }
        for (_, c) in std::mem::take(&mut self.conns) {
            if let Ok(s) = c.writer.into_inner() {
                let _ = s.shutdown(Shutdown::Both);
            }
        }
        if let Some(t) = self.trace.as_mut() {
            let _ = t.flush();
        }
        self.session
    }

    fn on_frame(&mut self, id: ConnId, frame: Result<WireMessage, WireError>) {
        let Some(role) = self.conns.get(&id).map(|c| c.role) else {
            return;
        };
        let msg = match frame {
            Ok(m) => m,
            Err(e) => {
                warn!("connection {id}: {e}");
                self.send(id, &WireMessage::error(e.code(), e.to_string()));
                if role.is_none() && matches!(e, WireError::UnsupportedVersion(_)) {
                    self.close(id);
                }
                return;
            }
        };
        let Some(role) = role else {
            return self.handshake(id, msg);
        };
        match (msg, role) {
            (WireMessage::StateUpdate(update), Role::Simulator) => {
                self.state_update(Some(id), update);
            }
            (WireMessage::Command { command }, Role::Ui) => self.command(id, command),
            (WireMessage::SnapshotRequest, _) => {
                let blob = String::from_utf8(self.session.snapshot().to_bytes()).expect("snapshot is UTF-8");
                self.send(id, &WireMessage::SnapshotReply { blob: blob.trim_end().to_string() });
            }
            (WireMessage::Step { ticks }, Role::Ui) => self.advance(ticks),
            (other, role) => self.send(
                id,
                &WireMessage::error(ErrorCode::NotAllowed, format!("`{}` is not accepted from a {role:?} client", other.kind())),
            ),
        }
    }

    fn handshake(&mut self, id: ConnId, msg: WireMessage) {
        let WireMessage::Hello { protocol_version, procedure_set_hash, role } = msg else {
            return self.send(id, &WireMessage::error(ErrorCode::HandshakeRequired, "send hello first"));
        };
        if protocol_version != PROTOCOL_VERSION {
            self.send(id, &WireMessage::error(ErrorCode::UnsupportedVersion, format!("protocol {protocol_version}")));
            return self.close(id);
        }
        if let Some(h) = procedure_set_hash.filter(|h| h != &self.set_hash) {
            self.send(
                id,
                &WireMessage::error(ErrorCode::HashMismatch, format!("server runs procedure set {}, client has {h}", self.set_hash)),
            );
            return self.close(id);
        }
        let taken = match role {
            Role::Simulator => self.conns.values().any(|c| c.role == Some(Role::Simulator)),
            Role::Server => true,
            Role::Ui => false,
        };
        if taken {
            self.send(id, &WireMessage::error(ErrorCode::RoleTaken, format!("role {role:?} is not available")));
            return self.close(id);
        }
        if let Some(c) = self.conns.get_mut(&id) {
            c.role = Some(role);
        }
        info!("connection {id} joined as {role:?}");
        self.send(
            id,
            &WireMessage::Hello {
                protocol_version: PROTOCOL_VERSION,
                procedure_set_hash: Some(self.set_hash.clone()),
                role: Role::Server,
            },
        );
        if role == Role::Ui {
            let display = self.display();
            self.send(id, &display);
        }
    }

    fn state_update(&mut self, origin: Option<ConnId>, update: StateUpdate) {
        let mut next = self.current.clone();
        next.tick = update.tick;
        if let Some(p) = update.phase {
            next.phase = p;
        }
        for c in &update.cleared {
            next.values.remove(c);
        }
        next.values.extend(update.assignments);
        self.apply_state(origin, next);
    }

    fn apply_state(&mut self, origin: Option<ConnId>, state: FlightState) {
        self.log(TraceRecord::new(state.tick, Direction::State, state.canonical_text()));
        let tick = state.tick;
        match self.session.apply_state(state.clone()) {
            Ok(events) => {
                self.current = state;
                self.broadcast(&events);
            }
            Err(e) => self.reject(origin, tick, e),
        }
    }

    fn command(&mut self, id: ConnId, command: PilotCommand) {
        let tick = self.session.now();
        self.log(TraceRecord::new(tick, Direction::Command, command.to_string()));
        match self.session.apply_command(&command) {
            Ok(events) => self.broadcast(&events),
            Err(e) => self.reject(Some(id), tick, e),
        }
    }

    /// Moves the playback clock forward and applies the timeline entries
    /// that became due.
    fn advance(&mut self, ticks: u64) {
        for _ in 0..ticks {
            let clock = self.clock.map_or(0, |c| c + 1);
            self.clock = Some(clock);
            while let Some(state) = self.playback.get(self.next_playback).filter(|s| s.tick <= clock).cloned() {
                self.next_playback += 1;
                self.apply_state(None, state);
            }
        }
    }

    fn reject(&mut self, origin: Option<ConnId>, tick: u64, e: EngineError) {
        warn!("engine rejected input: {e}");
        self.log(TraceRecord::new(tick, Direction::Error, e.to_string()));
        if let Some(id) = origin {
            self.send(id, &WireMessage::error(ErrorCode::Engine, e.to_string()));
        }
    }

    fn broadcast(&mut self, events: &[EngineEvent]) {
        for e in events {
            self.log(TraceRecord::new(e.tick, Direction::Event, e.to_string()));
        }
        let mut frames: Vec<u8> = Vec::new();
        for e in events {
            frames.extend(encode(&WireMessage::Event { event: e.clone() }));
        }
        frames.extend(encode(&self.display()));
        let uis: Vec<ConnId> =
            self.conns.iter().filter(|(_, c)| c.role == Some(Role::Ui)).map(|(&id, _)| id).collect();
        for id in uis {
            self.write(id, &frames);
        }
    }

    fn display(&self) -> WireMessage {
        WireMessage::Display { display: Box::new(self.session.display_model()) }
    }

    fn send(&mut self, id: ConnId, msg: &WireMessage) {
        self.write(id, &encode(msg));
    }

    fn write(&mut self, id: ConnId, bytes: &[u8]) {
        let Some(c) = self.conns.get_mut(&id) else {
            return;
        };
        if let Err(e) = c.writer.write_all(bytes).and_then(|_| c.writer.flush()) {
            warn!("connection {id}: write failed: {e}");
            self.close(id);
        }
    }

    fn close(&mut self, id: ConnId) {
        if let Some(c) = self.conns.remove(&id) {
            let stream = c.writer.get_ref();
            let _ = stream.shutdown(Shutdown::Both);
        }
    }

    fn log(&mut self, record: TraceRecord) {
        if let Some(t) = self.trace.as_mut() {
            if let Err(e) = writeln!(t, "{record}").and_then(|_| t.flush()) {
                warn!("trace log write failed: {e}");
            }
        }
    }
}
