//! Scripted scenarios, the headless runner and trace replay.
//!
//! Scenario files (`.ocss`) are line based:
//!
//! ```text
//! scenario FLAPS_LOCKED "Flaps locked on final approach"
//! at 0 phase FINAL_APPROACH
//! at 0 set FLAPS_POS UP
//! at 3 clear IAS
//! at 8 cmd AcknowledgePopup FLAPS_LOCKED later
//! ```
//!
//! All `set`/`clear`/`phase` lines with the same tick form one state;
//! values carry over to later states. The first state starts from phase
//! `COCKPIT_PREP` with no values. Ticks must not decrease.
//!
//! A trace has one record per line, `tick DIR payload`, with `DIR` one of
//! `STATE`, `COMMAND`, `EVENT`, `ERROR`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dsl::ProcedureSet;
use crate::engine::{EngineError, PilotCommand, Session, SessionConfig};
use crate::model::{FlightPhase, FlightState, ParamValue, ParameterId, Registry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown parameter {name}")]
    UnknownParameter { line: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimelineEntry {
    pub tick: u64,
    pub phase: Option<FlightPhase>,
    pub assignments: BTreeMap<ParameterId, ParamValue>,
    pub cleared: Vec<ParameterId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedCommand {
    pub tick: u64,
    pub command: PilotCommand,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub id: String,
    pub name: String,
    pub timeline: Vec<TimelineEntry>,
    pub commands: Vec<ScriptedCommand>,
}

pub fn load_scenario(text: &str, registry: &Registry) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut last_tick = 0u64;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let err = |message: String| ScenarioError::Parse { line, message };
        if let Some(rest) = content.strip_prefix("scenario ") {
            let (id, name) = rest.trim().split_once(' ').unwrap_or((rest.trim(), ""));
            sc.id = id.to_string();
            sc.name = name.trim().trim_matches('"').to_string();
            continue;
        }
        let mut words = content.splitn(4, ' ');
        if words.next() != Some("at") {
            return Err(err(format!("expected `at <tick> ...`, got `{content}`")));
        }
        let tick: u64 = words
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("expected a tick after `at`".into()))?;
        if tick < last_tick {
            return Err(err(format!("tick {tick} is earlier than {last_tick}")));
        }
        last_tick = tick;
        let verb = words.next().unwrap_or("");
        let rest = words.next().unwrap_or("").trim();
        if verb == "cmd" {
            let command = rest.parse::<PilotCommand>().map_err(|e| err(e.to_string()))?;
            sc.commands.push(ScriptedCommand { tick, command });
            continue;
        }
        if sc.timeline.last().is_none_or(|e| e.tick != tick) {
            sc.timeline.push(TimelineEntry { tick, ..Default::default() });
        }
        let entry = sc.timeline.last_mut().expect("entry");
        let args: Vec<&str> = rest.split_whitespace().collect();
        match (verb, args.as_slice()) {
            ("phase", [phase]) => {
                entry.phase = Some(phase.parse().map_err(|e: crate::model::ModelError| err(e.to_string()))?)
            }
            ("set", [name, value]) => {
                let decl = registry
                    .get(name)
                    .ok_or_else(|| ScenarioError::UnknownParameter { line, name: name.to_string() })?;
                let v = decl
                    .ty
                    .parse_value(value)
                    .ok_or_else(|| err(format!("invalid value `{value}` for {name}")))?;
                entry.cleared.retain(|c| c != &decl.name);
                entry.assignments.insert(decl.name.clone(), v);
            }
            ("clear", [name]) => {
                let decl = registry
                    .get(name)
                    .ok_or_else(|| ScenarioError::UnknownParameter { line, name: name.to_string() })?;
                entry.assignments.remove(&decl.name);
                if !entry.cleared.contains(&decl.name) {
                    entry.cleared.push(decl.name.clone());
                }
            }
            _ => return Err(err(format!("expected `phase`, `set`, `clear` or `cmd`, got `{content}`"))),
        }
    }
    Ok(sc)
}

impl Scenario {
    /// The cumulative flight states of the timeline, one per entry.
    pub fn states(&self) -> Vec<FlightState> {
        let mut current = FlightState::new(0, FlightPhase::CockpitPrep);
        let mut out = Vec::with_capacity(self.timeline.len());
        for e in &self.timeline {
            current.tick = e.tick;
            if let Some(p) = e.phase {
                current.phase = p;
            }
            for c in &e.cleared {
                current.values.remove(c);
            }
            for (k, v) in &e.assignments {
                current.values.insert(k.clone(), v.clone());
            }
            out.push(current.clone());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    State,
    Command,
    Event,
    Error,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::State => "STATE",
            Direction::Command => "COMMAND",
            Direction::Event => "EVENT",
            Direction::Error => "ERROR",
        }
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "STATE" => Ok(Direction::State),
            "COMMAND" => Ok(Direction::Command),
            "EVENT" => Ok(Direction::Event),
            "ERROR" => Ok(Direction::Error),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub dir: Direction,
    pub payload: String,
}

impl TraceRecord {
    pub fn new(tick: u64, dir: Direction, payload: impl Into<String>) -> Self {
        Self { tick, dir, payload: payload.into() }
    }
}

/// `tick DIR payload`
impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.tick, self.dir.as_str(), self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

pub fn trace_to_text(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| TraceParseError { line: idx + 1, message };
        let mut parts = raw.splitn(3, ' ');
        let tick = parts
            .next()
            .and_then(|t| t.parse::<u64>().ok())
            .ok_or_else(|| err("expected a tick".into()))?;
        let dir = parts.next().unwrap_or("").parse::<Direction>().map_err(err)?;
        let payload = parts.next().unwrap_or("").to_string();
        out.push(TraceRecord { tick, dir, payload });
    }
    Ok(out)
}

/// Feeds the scenario to a fresh session: states and commands merged in
/// tick order, states first at equal ticks. The first engine error is
/// recorded and ends the run.
pub fn run_headless(
    scenario: &Scenario,
    set: &ProcedureSet,
    config: &SessionConfig,
) -> Result<Vec<TraceRecord>, EngineError> {
    let mut session = Session::new(set.clone(), config.clone())?;
    let mut out = Vec::new();
    let states = scenario.states();
    let (mut si, mut ci) = (0, 0);
    while si < states.len() || ci < scenario.commands.len() {
        let take_state = match (states.get(si), scenario.commands.get(ci)) {
            (Some(s), Some(c)) => s.tick <= c.tick,
            (Some(_), None) => true,
            _ => false,
        };
        let (tick, result) = if take_state {
            let state = states[si].clone();
            si += 1;
            out.push(TraceRecord::new(state.tick, Direction::State, state.canonical_text()));
            (state.tick, session.apply_state(state))
        } else {
            let cmd = &scenario.commands[ci];
            ci += 1;
            out.push(TraceRecord::new(cmd.tick, Direction::Command, cmd.command.to_string()));
            (cmd.tick, session.apply_command_at(cmd.tick, &cmd.command))
        };
        match result {
            Ok(events) => {
                out.extend(events.iter().map(|e| TraceRecord::new(e.tick, Direction::Event, e.to_string())))
            }
            Err(e) => {
                out.push(TraceRecord::new(tick, Direction::Error, e.to_string()));
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// 1-based record index in the trace, or one past the end
    pub record: usize,
    pub seq: Option<u64>,
    pub expected: String,
    pub actual: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence at record {}", self.record)?;
        if let Some(seq) = self.seq {
            write!(f, " (seq {seq})")?;
        }
        write!(f, ": expected `{}`, got `{}`", self.expected, self.actual)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub states: usize,
    pub commands: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("{0}")]
    Diverged(Divergence),
    #[error("record {record}: {message}")]
    BadRecord { record: usize, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Re-executes the STATE and COMMAND records of a trace and checks that
/// the engine produces exactly the recorded EVENT and ERROR records.
/// Rejected input leaves the session unchanged, so a trace may continue
/// after an ERROR record (live sessions do).
pub fn replay(
    records: &[TraceRecord],
    set: &ProcedureSet,
    config: &SessionConfig,
) -> Result<ReplayReport, ReplayError> {
    let mut session = Session::new(set.clone(), config.clone())?;
    let mut report = ReplayReport::default();
    // produced but not yet matched against the trace
    let mut pending: std::collections::VecDeque<(Option<u64>, String)> = Default::default();
    let diverge = |record: usize, seq, expected: String, actual: String| {
        ReplayError::Diverged(Divergence { record, seq, expected, actual })
    };
    for (i, r) in records.iter().enumerate() {
        let record = i + 1;
        match r.dir {
            Direction::State | Direction::Command => {
                if let Some((seq, actual)) = pending.pop_front() {
                    return Err(diverge(record, seq, r.to_string(), actual));
                }
                let result = if r.dir == Direction::State {
                    report.states += 1;
                    let state = FlightState::parse_canonical(r.tick, &r.payload, &set.registry)
                        .map_err(|message| ReplayError::BadRecord { record, message })?;
                    session.apply_state(state)
                } else {
                    report.commands += 1;
                    let cmd = r
                        .payload
                        .parse::<PilotCommand>()
                        .map_err(|e| ReplayError::BadRecord { record, message: e.to_string() })?;
                    session.apply_command_at(r.tick, &cmd)
                };
                match result {
                    Ok(events) => {
                        pending.extend(events.into_iter().map(|e| (Some(e.seq), e.to_string())));
                    }
                    Err(e) => {
                        pending.push_back((None, format!("ERROR {e}")));
                    }
                }
            }
            Direction::Event | Direction::Error => {
                let expected = match r.dir {
                    Direction::Event => r.payload.clone(),
                    _ => format!("ERROR {}", r.payload),
                };
                let expected_seq = r.payload.split(' ').next().and_then(|s| s.parse().ok());
                match pending.pop_front() {
                    Some((_, actual)) if actual == expected => {
                        if r.dir == Direction::Event {
                            report.events += 1;
                        }
                    }
                    Some((seq, actual)) => return Err(diverge(record, expected_seq.or(seq), expected, actual)),
                    None => return Err(diverge(record, expected_seq, expected, "nothing".into())),
                }
            }
        }
    }
    if let Some((seq, actual)) = pending.pop_front() {
        return Err(diverge(records.len() + 1, seq, "end of trace".into(), actual));
    }
    Ok(report)
}
