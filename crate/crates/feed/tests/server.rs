use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use ocsis_core::dsl::{parse_sources, read_sources, set_files, ProcedureSet};
use ocsis_core::engine::{EventKind, Session, SessionConfig, Snapshot};
use ocsis_core::model::FlightState;
use ocsis_core::scenario::{load_scenario, parse_trace, replay, Direction, Scenario};
use ocsis_feed::wire::{decode, encode, ErrorCode, Role, StateUpdate, WireMessage};
use ocsis_feed::{serve, ServeConfig, ServerHandle};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_set() -> ProcedureSet {
    let sources = read_sources(&set_files(&fixtures().join("procedures")).unwrap()).unwrap();
    parse_sources(&sources).unwrap()
}

fn scenario(name: &str, set: &ProcedureSet) -> Scenario {
    let text = std::fs::read_to_string(fixtures().join(format!("scenarios/{name}.ocss"))).unwrap();
    load_scenario(&text, &set.registry).unwrap()
}

fn start(config: ServeConfig) -> (ServerHandle, String) {
    let set = fixture_set();
    let hash = set.content_hash();
    let session = Session::new(set, SessionConfig::default()).unwrap();
    let handle = serve(session, ServeConfig { addr: "127.0.0.1:0".into(), ..config }).unwrap();
    (handle, hash)
}

fn update(state: &FlightState) -> WireMessage {
    WireMessage::StateUpdate(StateUpdate {
        tick: state.tick,
        phase: Some(state.phase),
        assignments: state.values.clone(),
        cleared: Vec::new(),
    })
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        Client { reader: BufReader::new(stream.try_clone().unwrap()), writer: stream }
    }

    /// Connects and completes the handshake. UIs also consume the initial display.
    fn join(addr: SocketAddr, role: Role, hash: &str) -> Self {
        let mut c = Client::connect(addr);
        c.send(&WireMessage::Hello { protocol_version: 1, procedure_set_hash: Some(hash.into()), role });
        match c.recv() {
            WireMessage::Hello { role: Role::Server, procedure_set_hash: Some(h), .. } => assert_eq!(h, hash),
            other => panic!("expected server hello, got {other:?}"),
        }
        if role == Role::Ui {
            assert_eq!(c.recv().kind(), "display");
        }
        c
    }

    fn send(&mut self, msg: &WireMessage) {
        self.send_raw(&encode(msg));
    }

    fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).unwrap();
        self.writer.flush().unwrap();
    }

    fn recv_line(&mut self) -> String {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).expect("frame before timeout");
        assert!(n > 0, "connection closed");
        line
    }

    fn recv(&mut self) -> WireMessage {
        decode(self.recv_line().as_bytes()).unwrap()
    }

    fn expect_error(&mut self, code: ErrorCode) {
        match self.recv() {
            WireMessage::Error { code: c, .. } => assert_eq!(c, code),
            other => panic!("expected {code:?}, got {other:?}"),
        }
    }

    fn expect_closed(&mut self) {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => {}
            Err(e) if e.kind() == ErrorKind::ConnectionReset => {}
            other => panic!("expected close, got {other:?} {line:?}"),
        }
    }

    fn expect_silence(&mut self, wait: Duration) {
        self.reader.get_ref().set_read_timeout(Some(wait)).unwrap();
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            other => panic!("expected no frame, got {other:?} {line:?}"),
        }
        self.reader.get_ref().set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }

    /// Reads raw frames until `n` display frames have arrived.
    fn collect_displays(&mut self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = 0;
        while seen < n {
            let line = self.recv_line();
            if decode(line.as_bytes()).unwrap().kind() == "display" {
                seen += 1;
            }
            out.push(line);
        }
        out
    }

    /// Requests a snapshot, skipping any broadcast frames in between.
    fn snapshot(&mut self) -> Snapshot {
        self.send(&WireMessage::SnapshotRequest);
        loop {
            match self.recv() {
                WireMessage::SnapshotReply { blob } => return Snapshot::from_bytes(blob.as_bytes()).unwrap(),
                WireMessage::Event { .. } | WireMessage::Display { .. } => {}
                other => panic!("expected snapshot, got {other:?}"),
            }
        }
    }
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn decode_all(lines: &[String]) -> Vec<WireMessage> {
    lines.iter().map(|l| decode(l.as_bytes()).unwrap()).collect()
}

fn flaps_states_until(tick: u64) -> Vec<FlightState> {
    scenario("flaps_locked", &fixture_set()).states().into_iter().filter(|s| s.tick <= tick).collect()
}

#[test]
fn two_uis_receive_identical_streams() {
    let (server, hash) = start(ServeConfig::default());
    let addr = server.local_addr();
    let mut a = Client::join(addr, Role::Ui, &hash);
    let mut b = Client::join(addr, Role::Ui, &hash);
    let mut sim = Client::join(addr, Role::Simulator, &hash);

    let states = flaps_states_until(7);
    for s in &states {
        sim.send(&update(s));
    }
    // frames from different connections are not ordered, so wait for the states first
    let mut from_a = a.collect_displays(states.len());
    a.send(&WireMessage::Command { command: "MarkDone FLAPS_SET/FS_2/GEAR_DOWN".parse().unwrap() });
    let cmd = a.collect_displays(1);
    let cmd_len = cmd.len();
    from_a.extend(cmd);
    let from_b = b.collect_displays(states.len() + 1);
    assert_eq!(from_a, from_b);

    let events: Vec<EventKind> = from_a
        .iter()
        .filter_map(|l| match decode(l.as_bytes()).unwrap() {
            WireMessage::Event { event } => Some(event.kind),
            _ => None,
        })
        .collect();
    assert!(events.iter().any(|k| matches!(k, EventKind::PopupRaised { procedure, .. } if procedure.as_str() == "FLAPS_LOCKED")));

    // the command's frames open with its status change and close with a fresh display
    let n = from_a.len();
    let cmd_frames: Vec<WireMessage> = decode_all(&from_a[n - cmd_len..]);
    match &cmd_frames[0] {
        WireMessage::Event { event } => {
            assert_eq!(event.to_string(), format!("{} 7 ActionStatusChanged FLAPS_SET/FS_2/GEAR_DOWN ToDo DoneManual", event.seq));
        }
        other => panic!("expected event, got {other:?}"),
    }
    assert_eq!(cmd_frames.last().unwrap().kind(), "display");
    // manual completion against the gear sensor is flagged, status kept
    assert!(cmd_frames.iter().any(|m| matches!(m, WireMessage::Event { event } if matches!(event.kind, EventKind::ActionContradicted { .. }))));

    // the simulator gets no broadcast: its next frame is the reply to its own request
    assert_eq!(sim.snapshot().set_hash(), hash);

    let session = server.shutdown();
    assert_eq!(session.now(), 7);
    // both UIs joined before the first event, so they saw all of them
    assert_eq!(events, session.event_log().iter().map(|e| e.kind.clone()).collect::<Vec<_>>());
}

#[test]
fn handshake_failures_close_the_connection() {
    let (server, hash) = start(ServeConfig::default());
    let addr = server.local_addr();

    let mut c = Client::connect(addr);
    c.send(&WireMessage::Hello { protocol_version: 1, procedure_set_hash: Some("deadbeef".into()), role: Role::Ui });
    c.expect_error(ErrorCode::HashMismatch);
    c.expect_closed();

    let mut c = Client::connect(addr);
    c.send_raw(b"{\"kind\":\"hello\",\"protocolVersion\":7,\"role\":\"ui\"}\n");
    c.expect_error(ErrorCode::UnsupportedVersion);
    c.expect_closed();

    let _sim = Client::join(addr, Role::Simulator, &hash);
    let mut c = Client::connect(addr);
    c.send(&WireMessage::Hello { protocol_version: 1, procedure_set_hash: None, role: Role::Simulator });
    c.expect_error(ErrorCode::RoleTaken);
    c.expect_closed();

    // frames before hello are refused but the connection stays usable
    let mut c = Client::connect(addr);
    c.send(&WireMessage::Step { ticks: 1 });
    c.expect_error(ErrorCode::HandshakeRequired);
    c.send(&WireMessage::Hello { protocol_version: 1, procedure_set_hash: None, role: Role::Ui });
    assert_eq!(c.recv().kind(), "hello");
    assert_eq!(c.recv().kind(), "display");
}

#[test]
fn malformed_and_misrouted_frames_are_answered() {
    let (server, hash) = start(ServeConfig::default());
    let addr = server.local_addr();
    let mut ui = Client::join(addr, Role::Ui, &hash);
    let mut sim = Client::join(addr, Role::Simulator, &hash);

    ui.send_raw(b"{\"kind\":\"command\",\"comm\n");
    ui.expect_error(ErrorCode::MalformedFrame);
    ui.send_raw(b"{\"kind\":\"warp\"}\n");
    ui.expect_error(ErrorCode::UnknownMessageKind);
    // a frame split across writes is reassembled
    let frame = encode(&WireMessage::SnapshotRequest);
    ui.send_raw(&frame[..5]);
    std::thread::sleep(Duration::from_millis(50));
    ui.send_raw(&frame[5..]);
    assert_eq!(ui.recv().kind(), "snapshot_reply");

    ui.send(&update(&flaps_states_until(0)[0]));
    ui.expect_error(ErrorCode::NotAllowed);
    sim.send(&WireMessage::Command { command: "CheckAll LANDING/LC_1".parse().unwrap() });
    sim.expect_error(ErrorCode::NotAllowed);
    sim.send(&WireMessage::Step { ticks: 1 });
    sim.expect_error(ErrorCode::NotAllowed);

    // engine rejections go back to the sender only
    ui.send(&WireMessage::Command { command: "MarkDone NOPE/X/Y".parse().unwrap() });
    ui.expect_error(ErrorCode::Engine);
    let states = flaps_states_until(3);
    sim.send(&update(&states[2]));
    ui.collect_displays(1);
    sim.send(&update(&states[1]));
    sim.expect_error(ErrorCode::Engine);
    ui.expect_silence(Duration::from_millis(200));
}

#[test]
fn simulator_disconnect_leaves_uis_connected() {
    let (server, hash) = start(ServeConfig::default());
    let addr = server.local_addr();
    let mut ui = Client::join(addr, Role::Ui, &hash);
    let states = flaps_states_until(5);
    {
        let mut sim = Client::join(addr, Role::Simulator, &hash);
        for s in &states {
            sim.send(&update(s));
        }
        ui.collect_displays(states.len());
    }
    // the engine idles: no frames arrive, but the UI can still talk to it
    ui.expect_silence(Duration::from_millis(200));
    let before = ui.snapshot();
    ui.send(&WireMessage::Command { command: "MarkDone FLAPS_SET/FS_2/GEAR_DOWN".parse().unwrap() });
    let frames = ui.collect_displays(1);
    assert!(frames.len() >= 2, "{frames:?}");
    assert_ne!(ui.snapshot().to_bytes(), before.to_bytes());

    // the simulator role becomes free again once the close is seen
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let mut sim = Client::connect(addr);
        sim.send(&WireMessage::Hello { protocol_version: 1, procedure_set_hash: None, role: Role::Simulator });
        match sim.recv() {
            WireMessage::Hello { .. } => break,
            WireMessage::Error { code: ErrorCode::RoleTaken, .. } if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(20));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(server.shutdown().now(), 5);
}

#[test]
fn paused_playback_advances_on_step() {
    let set = fixture_set();
    let playback = scenario("flaps_locked", &set);
    let (server, hash) = start(ServeConfig { tick_rate: 0.0, playback: Some(playback), ..Default::default() });
    let mut ui = Client::join(server.local_addr(), Role::Ui, &hash);
    ui.expect_silence(Duration::from_millis(300));

    // the first step reaches tick 0; eight steps reach tick 7
    ui.send(&WireMessage::Step { ticks: 8 });
    let frames = ui.collect_displays(flaps_states_until(7).len());
    let popups = frames
        .iter()
        .filter(|l| matches!(decode(l.as_bytes()).unwrap(), WireMessage::Event { event } if matches!(event.kind, EventKind::PopupRaised { .. })))
        .count();
    assert_eq!(popups, 1);
    ui.expect_silence(Duration::from_millis(200));
    assert_eq!(server.shutdown().now(), 7);
}

#[test]
fn paced_playback_runs_on_its_own() {
    let set = fixture_set();
    let playback = scenario("flaps_locked", &set);
    let last = playback.states().last().unwrap().tick;
    let (server, hash) = start(ServeConfig { tick_rate: 200.0, playback: Some(playback), ..Default::default() });
    let mut ui = Client::join(server.local_addr(), Role::Ui, &hash);
    let deadline = Instant::now() + Duration::from_secs(5);
    while server_now(&mut ui) < last {
        assert!(Instant::now() < deadline, "playback did not finish");
        std::thread::sleep(Duration::from_millis(20));
    }
    let session = server.shutdown();
    assert_eq!(session.now(), last);
    assert!(session.event_log().iter().any(|e| matches!(e.kind, EventKind::PopupRaised { .. })));
}

fn server_now(ui: &mut Client) -> u64 {
    Session::restore(fixture_set(), &ui.snapshot()).unwrap().now()
}

#[test]
fn trace_log_replays() {
    let buf = SharedBuf::default();
    let (server, hash) = start(ServeConfig { trace: Some(Box::new(buf.clone())), ..Default::default() });
    let addr = server.local_addr();
    let mut ui = Client::join(addr, Role::Ui, &hash);
    let mut sim = Client::join(addr, Role::Simulator, &hash);
    let states = flaps_states_until(7);
    for s in &states {
        sim.send(&update(s));
    }
    ui.collect_displays(states.len());
    ui.send(&WireMessage::Command { command: "AcknowledgePopup FLAPS_LOCKED accept".parse().unwrap() });
    ui.collect_displays(1);
    ui.send(&WireMessage::Command { command: "MarkDone FLAPS_SET/FS_2/FLAPS_3".parse().unwrap() });
    ui.expect_error(ErrorCode::Engine);
    ui.send(&WireMessage::Command { command: "MarkDone FLAPS_LOCKED/FLK_1/GPWS".parse().unwrap() });
    ui.collect_displays(1);
    let session = server.shutdown();

    let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    let records = parse_trace(&text).unwrap();
    assert_eq!(records.iter().filter(|r| r.dir == Direction::Error).count(), 1);
    let report = replay(&records, &fixture_set(), &SessionConfig::default()).unwrap();
    assert_eq!(report.states, states.len());
    assert_eq!(report.commands, 3);
    assert_eq!(report.events, session.event_log().len());
    assert_eq!(text, text.lines().map(|l| format!("{l}\n")).collect::<String>());
}
