//! Deterministic procedure execution engine.
//!
//! A [`Session`] consumes flight states and pilot commands in one ordered
//! stream and answers each with the events it caused. Every state update
//! runs, in order: applicability, auto-detection and goals of the active
//! procedure, abnormal links of the active iblocks, and procedure triggers.

mod command;
mod display;
mod event;
mod snapshot;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::{check_params, ConditionExpr, EvalEnv, TriState};
use crate::dsl::ProcedureSet;
use crate::model::{
    transition, ActionRef, ActionStatus, FlightPhase, FlightState, IBlockRef, ProcedureId,
    StatusTrigger,
};
use crate::perf::{corrected_performance, CorrectionEntry, PerfInput, PerfResult};

pub use command::{CommandParseError, PilotCommand, PopupChoice};
pub use display::{
    DisplayModel, IBlockView, LineView, MenuEntry, PageEntry, PageStatus, PopupView, ProcedureView,
    ReminderView,
};
pub use event::{Cursor, EngineEvent, EventKind};
pub use snapshot::{Snapshot, SnapshotError, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

/// Minimum number of past states kept for `sustained` windows.
pub const MIN_HISTORY: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfConfig {
    /// knots
    pub vref: f64,
    /// meters
    pub reference_landing_distance: f64,
    pub corrections: Vec<CorrectionEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Enables `{VAPP}` / `{LDG_DIST}` substitution in note lines.
    pub perf: Option<PerfConfig>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid procedure set: {0}")]
    InvalidSet(String),
    #[error("stale tick {tick}: latest is {latest}")]
    StaleTick { tick: u64, latest: u64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown reference {0}")]
    UnknownRef(String),
    #[error("illegal transition: {command} on {action} in status {from}")]
    IllegalTransition { action: ActionRef, from: ActionStatus, command: String },
    #[error("{0} is not displayed")]
    NotVisible(ProcedureId),
    #[error("{0} is not the active pop-up")]
    NoSuchPopup(ProcedureId),
    #[error("{0} is not deferred")]
    NotDeferred(ProcedureId),
    #[error("{0} is already active")]
    AlreadyActive(ProcedureId),
    #[error("{0} is not the displayed procedure")]
    NotOnTop(ProcedureId),
}

/// One entry of the active stack. `action` is the saved action cursor; it
/// only moves while the frame is on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Frame {
    proc: usize,
    iblock: usize,
    action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Deferred {
    proc: usize,
    /// Position to resume at, when it was deferred from the stack.
    frame: Option<Frame>,
}

type Grid<T> = Vec<Vec<Vec<T>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct SessionState {
    config: SessionConfig,
    now: u64,
    history: Vec<FlightState>,
    page: FlightPhase,
    page_cursor: BTreeMap<FlightPhase, ProcedureId>,
    statuses: Grid<ActionStatus>,
    stack: Vec<Frame>,
    /// Pending pop-ups sorted by (priority, declaration); the head is shown.
    popups: Vec<usize>,
    /// Triggered normal procedures waiting for an empty stack.
    ready: Vec<usize>,
    deferred: Vec<Deferred>,
    trigger_latch: Vec<bool>,
    branch_latch: Grid<bool>,
    contradicted: Grid<bool>,
    completed: Vec<bool>,
    /// Failures announced so far, for performance corrections.
    raised: Vec<bool>,
    next_seq: u64,
    log: Vec<EngineEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    set: ProcedureSet,
    st: SessionState,
    history_cap: usize,
}

fn validate_set(set: &ProcedureSet) -> Result<(), EngineError> {
    let bad = |m: String| Err(EngineError::InvalidSet(m));
    for p in &set.procedures {
        if p.iblocks.is_empty() {
            return bad(format!("{} has no iblock", p.id));
        }
        for t in &p.embedded_links {
            if set.procedure(t.as_str()).is_none() {
                return bad(format!("{} embeds unknown {t}", p.id));
            }
        }
        for b in &p.iblocks {
            let mut exprs = vec![&b.trigger, &b.context, &b.goal];
            for link in &b.abnormal {
                if set.procedure(link.target.as_str()).is_none() {
                    return bad(format!("{}/{} links to unknown {}", p.id, b.id, link.target));
                }
                exprs.push(&link.condition);
            }
            for a in &b.actions {
                exprs.extend(a.auto_detect.iter());
                exprs.extend(a.applicability.iter());
            }
            for e in exprs {
                if let Err(err) = check_params(e, &set.registry) {
                    return bad(format!("{}/{}: {err}", p.id, b.id));
                }
            }
        }
    }
    for ids in set.entries.values() {
        for id in ids {
            if set.procedure(id.as_str()).is_none() {
                return bad(format!("entry lists unknown {id}"));
            }
        }
    }
    Ok(())
}

fn grid<T: Clone>(set: &ProcedureSet, value: T, per_action: bool) -> Grid<T> {
    set.procedures
        .iter()
        .map(|p| {
            p.iblocks
                .iter()
                .map(|b| vec![value.clone(); if per_action { b.actions.len() } else { b.abnormal.len() }])
                .collect()
        })
        .collect()
}

impl Session {
    pub fn new(set: ProcedureSet, config: SessionConfig) -> Result<Self, EngineError> {
        validate_set(&set)?;
        let n = set.procedures.len();
        let st = SessionState {
            config,
            now: 0,
            history: Vec::new(),
            page: FlightPhase::CockpitPrep,
            page_cursor: BTreeMap::new(),
            statuses: grid(&set, ActionStatus::ToDo, true),
            stack: Vec::new(),
            popups: Vec::new(),
            ready: Vec::new(),
            deferred: Vec::new(),
            trigger_latch: vec![false; n],
            branch_latch: grid(&set, false, false),
            contradicted: grid(&set, false, true),
            completed: vec![false; n],
            raised: vec![false; n],
            next_seq: 1,
            log: Vec::new(),
        };
        Ok(Self::from_parts(set, st))
    }

    fn from_parts(set: ProcedureSet, st: SessionState) -> Self {
        let history_cap = (set.max_sustained() as usize + 1).max(MIN_HISTORY);
        Self { set, st, history_cap }
    }

    // -- accessors ---------------------------------------------------------

    pub fn procedure_set(&self) -> &ProcedureSet {
        &self.set
    }

    pub fn config(&self) -> &SessionConfig {
        &self.st.config
    }

    /// Tick of the latest state, 0 before the first one.
    pub fn now(&self) -> u64 {
        self.st.now
    }

    pub fn latest_state(&self) -> Option<&FlightState> {
        self.st.history.last()
    }

    pub fn history_len(&self) -> usize {
        self.st.history.len()
    }

    pub fn page(&self) -> FlightPhase {
        self.st.page
    }

    pub fn status(&self, action: &ActionRef) -> Option<ActionStatus> {
        let (p, b, a) = self.resolve_action(action).ok()?;
        Some(self.st.statuses[p][b][a])
    }

    /// Active procedures, bottom first; the last one is displayed.
    pub fn stack(&self) -> Vec<ProcedureId> {
        self.st.stack.iter().map(|f| self.pid(f.proc)).collect()
    }

    /// Saved cursor of every stack frame, bottom first.
    pub fn stack_cursors(&self) -> Vec<(ProcedureId, Cursor)> {
        self.st.stack.iter().map(|f| (self.pid(f.proc), self.cursor(f))).collect()
    }

    pub fn deferred(&self) -> Vec<ProcedureId> {
        self.st.deferred.iter().map(|d| self.pid(d.proc)).collect()
    }

    /// Pending pop-ups, the displayed one first.
    pub fn popups(&self) -> Vec<ProcedureId> {
        self.st.popups.iter().map(|&p| self.pid(p)).collect()
    }

    pub fn is_completed(&self, procedure: &str) -> bool {
        self.set.procedure_index(procedure).is_some_and(|p| self.st.completed[p])
    }

    pub fn event_log(&self) -> &[EngineEvent] {
        &self.st.log
    }

    /// One event per line, `seq tick KIND fields...`.
    pub fn event_log_text(&self) -> String {
        let mut out = String::new();
        for e in &self.st.log {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    /// Corrected approach speed and landing distance for the failures
    /// announced so far that have a correction entry.
    pub fn performance(&self) -> Option<PerfResult> {
        let perf = self.st.config.perf.as_ref()?;
        let active_failures = self
            .st
            .raised
            .iter()
            .enumerate()
            .filter(|(_, r)| **r)
            .map(|(p, _)| self.pid(p))
            .filter(|id| perf.corrections.iter().any(|c| &c.failure == id))
            .collect();
        let input = PerfInput {
            vref: perf.vref,
            reference_landing_distance: perf.reference_landing_distance,
            active_failures,
        };
        corrected_performance(&input, &perf.corrections).ok()
    }

    // -- helpers -----------------------------------------------------------

    fn pid(&self, p: usize) -> ProcedureId {
        self.set.procedures[p].id.clone()
    }

    fn aref(&self, p: usize, b: usize, a: usize) -> ActionRef {
        let proc = &self.set.procedures[p];
        ActionRef {
            procedure: proc.id.clone(),
            iblock: proc.iblocks[b].id.clone(),
            action: proc.iblocks[b].actions[a].id.clone(),
        }
    }

    fn bref(&self, p: usize, b: usize) -> IBlockRef {
        let proc = &self.set.procedures[p];
        IBlockRef { procedure: proc.id.clone(), iblock: proc.iblocks[b].id.clone() }
    }

    fn cursor(&self, f: &Frame) -> Cursor {
        let blocks = &self.set.procedures[f.proc].iblocks;
        let b = f.iblock.min(blocks.len() - 1);
        Cursor { iblock: blocks[b].id.clone(), action: f.action }
    }

    fn resolve_proc(&self, id: &ProcedureId) -> Result<usize, EngineError> {
        self.set.procedure_index(id.as_str()).ok_or_else(|| EngineError::UnknownRef(id.to_string()))
    }

    fn resolve_iblock(&self, r: &IBlockRef) -> Result<(usize, usize), EngineError> {
        let unknown = || EngineError::UnknownRef(r.to_string());
        let p = self.set.procedure_index(r.procedure.as_str()).ok_or_else(unknown)?;
        let b = self.set.procedures[p].iblocks.iter().position(|b| b.id == r.iblock).ok_or_else(unknown)?;
        Ok((p, b))
    }

    fn resolve_action(&self, r: &ActionRef) -> Result<(usize, usize, usize), EngineError> {
        let unknown = || EngineError::UnknownRef(r.to_string());
        let p = self.set.procedure_index(r.procedure.as_str()).ok_or_else(unknown)?;
        let blocks = &self.set.procedures[p].iblocks;
        let b = blocks.iter().position(|b| b.id == r.iblock).ok_or_else(unknown)?;
        let a = blocks[b].actions.iter().position(|a| a.id == r.action).ok_or_else(unknown)?;
        Ok((p, b, a))
    }

    fn eval(&self, expr: &ConditionExpr, check_all_done: Option<bool>) -> TriState {
        let mut env = EvalEnv::new(&self.set.registry, &self.st.history);
        if let Some(done) = check_all_done {
            env = env.with_check_all_done(done);
        }
        env.eval(expr).unwrap_or(TriState::Unknown)
    }

    /// Every completable, applicable action of the iblock is done.
    fn check_all_done(&self, p: usize, b: usize) -> bool {
        self.set.procedures[p].iblocks[b]
            .actions
            .iter()
            .zip(&self.st.statuses[p][b])
            .filter(|(a, s)| a.kind.is_completable() && **s != ActionStatus::NotApplicable)
            .all(|(_, s)| s.is_done())
    }

    /// Index of the first completable action still to do or postponed.
    /// First open line to work on; postponed lines only once nothing else
    /// is left.
    fn action_cursor(&self, p: usize, b: usize) -> usize {
        let actions = &self.set.procedures[p].iblocks[b].actions;
        let first = |want: ActionStatus| {
            actions.iter().zip(&self.st.statuses[p][b]).position(|(a, s)| a.kind.is_completable() && *s == want)
        };
        first(ActionStatus::ToDo).or_else(|| first(ActionStatus::Postponed)).unwrap_or(actions.len())
    }

    fn on_stack(&self, p: usize) -> bool {
        self.st.stack.iter().any(|f| f.proc == p)
    }

    fn eligible(&self, p: usize) -> bool {
        !self.on_stack(p)
            && !self.st.popups.contains(&p)
            && !self.st.ready.contains(&p)
            && !self.st.deferred.iter().any(|d| d.proc == p)
    }

    fn order_key(&self, p: usize) -> (i32, usize) {
        (self.set.procedures[p].priority(), p)
    }

    fn emit(&mut self, kind: EventKind, out: &mut Vec<EngineEvent>) {
        let event = EngineEvent { seq: self.st.next_seq, tick: self.st.now, kind };
        self.st.next_seq += 1;
        self.st.log.push(event.clone());
        out.push(event);
    }

    fn set_status(&mut self, p: usize, b: usize, a: usize, new: ActionStatus, out: &mut Vec<EngineEvent>) {
        let old = self.st.statuses[p][b][a];
        self.st.statuses[p][b][a] = new;
        let action = self.aref(p, b, a);
        self.emit(EventKind::ActionStatusChanged { action, old, new }, out);
    }

    // -- state updates -----------------------------------------------------

    pub fn apply_state(&mut self, state: FlightState) -> Result<Vec<EngineEvent>, EngineError> {
        let latest = self.st.history.last().map(|s| s.tick);
        if latest.is_some_and(|t| state.tick <= t) || state.tick < self.st.now {
            return Err(EngineError::StaleTick { tick: state.tick, latest: latest.unwrap_or(self.st.now) });
        }
        for (name, value) in &state.values {
            match self.set.registry.get(name.as_str()) {
                None => return Err(EngineError::InvalidState(format!("unknown parameter {name}"))),
                Some(decl) if !decl.ty.admits(value) => {
                    return Err(EngineError::InvalidState(format!("{value} is not a valid value for {name}")))
                }
                Some(_) => {}
            }
        }
        let phase_changed = self.st.history.last().is_none_or(|s| s.phase != state.phase);
        self.st.now = state.tick;
        if phase_changed {
            self.st.page = state.phase;
        }
        self.st.history.push(state);
        if self.st.history.len() > self.history_cap {
            let excess = self.st.history.len() - self.history_cap;
            self.st.history.drain(..excess);
        }

        let mut out = Vec::new();
        self.update_applicability(&mut out);
        self.settle(&mut out);
        self.check_abnormal_links(&mut out);
        self.check_triggers(&mut out);
        self.settle(&mut out);
        Ok(out)
    }

    fn update_applicability(&mut self, out: &mut Vec<EngineEvent>) {
        for p in 0..self.set.procedures.len() {
            for b in 0..self.set.procedures[p].iblocks.len() {
                for a in 0..self.set.procedures[p].iblocks[b].actions.len() {
                    let Some(expr) = &self.set.procedures[p].iblocks[b].actions[a].applicability else {
                        continue;
                    };
                    let trigger = match self.eval(expr, None) {
                        TriState::True => StatusTrigger::BecameApplicable,
                        TriState::False => StatusTrigger::BecameInapplicable,
                        TriState::Unknown => continue,
                    };
                    if let Some(new) = transition(self.st.statuses[p][b][a], trigger) {
                        self.set_status(p, b, a, new, out);
                    }
                }
            }
        }
    }

    /// Auto-detection on every active iblock; done actions whose detection
    /// turns false are reported once per episode and keep their status.
    fn auto_detect(&mut self, out: &mut Vec<EngineEvent>) {
        let frames = self.st.stack.clone();
        for f in frames {
            let (p, b) = (f.proc, f.iblock);
            for a in 0..self.set.procedures[p].iblocks[b].actions.len() {
                let Some(expr) = &self.set.procedures[p].iblocks[b].actions[a].auto_detect else { continue };
                let value = self.eval(expr, None);
                let status = self.st.statuses[p][b][a];
                match value {
                    TriState::True => {
                        self.st.contradicted[p][b][a] = false;
                        if let Some(new) = transition(status, StatusTrigger::AutoDetected) {
                            let action = self.aref(p, b, a);
                            self.emit(EventKind::ActionAutoCompleted { action }, out);
                            self.set_status(p, b, a, new, out);
                        }
                    }
                    TriState::False if status.is_done() && !self.st.contradicted[p][b][a] => {
                        self.st.contradicted[p][b][a] = true;
                        let action = self.aref(p, b, a);
                        self.emit(EventKind::ActionContradicted { action }, out);
                    }
                    _ => {}
                }
            }
        }
    }

    /// Runs auto-detection and goals until nothing moves.
    fn settle(&mut self, out: &mut Vec<EngineEvent>) {
        loop {
            self.auto_detect(out);
            let mut progressed = false;
            if let Some(top) = self.st.stack.last().copied() {
                let (p, b) = (top.proc, top.iblock);
                let cursor = self.action_cursor(p, b);
                self.st.stack.last_mut().expect("top").action = cursor;
                let block = &self.set.procedures[p].iblocks[b];
                if !self.eval(&block.context, None).is_false() {
                    let done = self.check_all_done(p, b);
                    if self.eval(&block.goal, Some(done)).is_true() {
                        let iblock = self.bref(p, b);
                        self.emit(EventKind::GoalReached { iblock }, out);
                        self.advance_top(out);
                        progressed = true;
                    }
                }
            }
            if self.st.stack.is_empty() && !self.st.ready.is_empty() {
                let p = self.st.ready.remove(0);
                self.activate(p, None, out);
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }

    fn advance_top(&mut self, out: &mut Vec<EngineEvent>) {
        let top = self.st.stack.last_mut().expect("top");
        top.iblock += 1;
        top.action = 0;
        let (p, b) = (top.proc, top.iblock);
        if b < self.set.procedures[p].iblocks.len() {
            let cursor = self.action_cursor(p, b);
            self.st.stack.last_mut().expect("top").action = cursor;
            return;
        }
        self.st.stack.pop();
        self.st.completed[p] = true;
        let procedure = self.pid(p);
        self.emit(EventKind::ProcedureCompleted { procedure }, out);
        if let Some(parent) = self.st.stack.last().copied() {
            let cursor = self.cursor(&parent);
            let parent = self.pid(parent.proc);
            self.emit(EventKind::ProcedureReturned { parent, cursor }, out);
        }
    }

    /// Pushes `p`, resuming at `frame` when given.
    fn activate(&mut self, p: usize, frame: Option<Frame>, out: &mut Vec<EngineEvent>) {
        let parent = self.st.stack.last().map(|f| f.proc);
        let frame = frame.unwrap_or(Frame { proc: p, iblock: 0, action: self.action_cursor(p, 0) });
        self.st.stack.push(frame);
        let proc = &self.set.procedures[p];
        self.st.page_cursor.insert(proc.phase, proc.id.clone());
        let procedure = self.pid(p);
        match parent {
            Some(parent) => {
                let parent = self.pid(parent);
                self.emit(EventKind::ProcedurePushed { procedure, parent }, out);
            }
            None => self.emit(EventKind::ProcedureActivated { procedure }, out),
        }
    }

    /// Announces procedures in (priority, declaration) order: pop-up kinds
    /// join the pop-up queue, the others wait for an empty stack.
    fn raise_all(&mut self, mut procs: Vec<usize>, out: &mut Vec<EngineEvent>) {
        procs.sort_by_key(|&p| self.order_key(p));
        procs.dedup();
        for p in procs {
            if !self.eligible(p) {
                continue;
            }
            let proc = &self.set.procedures[p];
            if proc.kind.pops_up() {
                let ecam = proc.ecam;
                self.st.popups.push(p);
                let mut popups = std::mem::take(&mut self.st.popups);
                popups.sort_by_key(|&q| self.order_key(q));
                self.st.popups = popups;
                self.st.raised[p] = true;
                let procedure = self.pid(p);
                self.emit(EventKind::PopupRaised { procedure, ecam }, out);
            } else {
                self.st.ready.push(p);
                let mut ready = std::mem::take(&mut self.st.ready);
                ready.sort_by_key(|&q| self.order_key(q));
                self.st.ready = ready;
            }
        }
    }

    fn check_abnormal_links(&mut self, out: &mut Vec<EngineEvent>) {
        let frames = self.st.stack.clone();
        let mut targets = Vec::new();
        for f in frames {
            let (p, b) = (f.proc, f.iblock);
            let block = &self.set.procedures[p].iblocks[b];
            let in_context = !self.eval(&block.context, None).is_false();
            let done = self.check_all_done(p, b);
            for k in 0..block.abnormal.len() {
                let link = &self.set.procedures[p].iblocks[b].abnormal[k];
                let value = if in_context { self.eval(&link.condition, Some(done)) } else { TriState::False };
                match value {
                    TriState::True if !self.st.branch_latch[p][b][k] => {
                        self.st.branch_latch[p][b][k] = true;
                        let target = link.target.clone();
                        let t = self.set.procedure_index(target.as_str()).expect("validated link");
                        let iblock = self.bref(p, b);
                        self.emit(EventKind::AbnormalBranch { iblock, target }, out);
                        targets.push(t);
                    }
                    TriState::False => self.st.branch_latch[p][b][k] = false,
                    _ => {}
                }
            }
        }
        self.raise_all(targets, out);
    }

    /// Edge-triggered: a procedure fires when the trigger and context of its
    /// first iblock become true, and fires again only after they were false.
    fn check_triggers(&mut self, out: &mut Vec<EngineEvent>) {
        let mut fired = Vec::new();
        for p in 0..self.set.procedures.len() {
            let first = &self.set.procedures[p].iblocks[0];
            let value = self.eval(&first.trigger, None).and(self.eval(&first.context, None));
            match value {
                TriState::True if !self.st.trigger_latch[p] => {
                    self.st.trigger_latch[p] = true;
                    fired.push(p);
                }
                TriState::False => self.st.trigger_latch[p] = false,
                _ => {}
            }
        }
        self.raise_all(fired, out);
    }

    // -- commands ----------------------------------------------------------

    fn require_visible(&self, p: usize) -> Result<(), EngineError> {
        if self.on_stack(p) || self.set.page(self.st.page).contains(&p) {
            Ok(())
        } else {
            Err(EngineError::NotVisible(self.pid(p)))
        }
    }

    /// Applies a pilot command issued at `tick`, which becomes the session
    /// clock. Conditions still read the sensed states only. On error the
    /// session is left unchanged.
    pub fn apply_command_at(&mut self, tick: u64, cmd: &PilotCommand) -> Result<Vec<EngineEvent>, EngineError> {
        if tick < self.st.now {
            return Err(EngineError::StaleTick { tick, latest: self.st.now });
        }
        let before = self.st.now;
        self.st.now = tick;
        let result = self.apply_command(cmd);
        if result.is_err() {
            self.st.now = before;
        }
        result
    }

    /// Applies a pilot command at the current tick. On error the session is
    /// left unchanged.
    pub fn apply_command(&mut self, cmd: &PilotCommand) -> Result<Vec<EngineEvent>, EngineError> {
        let mut out = Vec::new();
        match cmd {
            PilotCommand::MarkDone { action } | PilotCommand::Wait { action } => {
                let (p, b, a) = self.resolve_action(action)?;
                self.require_visible(p)?;
                let trigger = if matches!(cmd, PilotCommand::MarkDone { .. }) {
                    StatusTrigger::MarkDone
                } else {
                    StatusTrigger::Wait
                };
                let from = self.st.statuses[p][b][a];
                let completable = self.set.procedures[p].iblocks[b].actions[a].kind.is_completable();
                let new = transition(from, trigger).filter(|_| completable).ok_or_else(|| {
                    EngineError::IllegalTransition { action: action.clone(), from, command: cmd.name().to_string() }
                })?;
                self.set_status(p, b, a, new, &mut out);
            }
            PilotCommand::CheckAll { iblock } => {
                let (p, b) = self.resolve_iblock(iblock)?;
                self.require_visible(p)?;
                for a in 0..self.set.procedures[p].iblocks[b].actions.len() {
                    let completable = self.set.procedures[p].iblocks[b].actions[a].kind.is_completable();
                    if let Some(new) = transition(self.st.statuses[p][b][a], StatusTrigger::MarkDone) {
                        if completable {
                            self.set_status(p, b, a, new, &mut out);
                        }
                    }
                }
            }
            PilotCommand::AcknowledgePopup { procedure, choice } => {
                let p = self.resolve_proc(procedure)?;
                if self.st.popups.first() != Some(&p) {
                    return Err(EngineError::NoSuchPopup(procedure.clone()));
                }
                self.st.popups.remove(0);
                match choice {
                    PopupChoice::Accept => self.activate(p, None, &mut out),
                    PopupChoice::Later => {
                        self.st.deferred.push(Deferred { proc: p, frame: None });
                        self.emit(EventKind::ReminderShown { procedure: procedure.clone() }, &mut out);
                    }
                }
            }
            PilotCommand::ResumeFromReminder { procedure } => {
                let p = self.resolve_proc(procedure)?;
                let i = self
                    .st
                    .deferred
                    .iter()
                    .position(|d| d.proc == p)
                    .ok_or_else(|| EngineError::NotDeferred(procedure.clone()))?;
                let d = self.st.deferred.remove(i);
                self.activate(p, d.frame, &mut out);
            }
            PilotCommand::OpenProcedure { procedure } => {
                let p = self.resolve_proc(procedure)?;
                if self.on_stack(p) {
                    return Err(EngineError::AlreadyActive(procedure.clone()));
                }
                let mut frame = None;
                if let Some(i) = self.st.deferred.iter().position(|d| d.proc == p) {
                    frame = self.st.deferred.remove(i).frame;
                }
                self.st.popups.retain(|&q| q != p);
                self.st.ready.retain(|&q| q != p);
                self.activate(p, frame, &mut out);
            }
            PilotCommand::DeferProcedure { procedure } => {
                let p = self.resolve_proc(procedure)?;
                let top = self.st.stack.last().copied();
                let Some(top) = top.filter(|f| f.proc == p) else {
                    return Err(EngineError::NotOnTop(procedure.clone()));
                };
                self.st.stack.pop();
                self.st.deferred.push(Deferred { proc: p, frame: Some(top) });
                self.emit(EventKind::ReminderShown { procedure: procedure.clone() }, &mut out);
                if let Some(parent) = self.st.stack.last().copied() {
                    let cursor = self.cursor(&parent);
                    let parent = self.pid(parent.proc);
                    self.emit(EventKind::ProcedureReturned { parent, cursor }, &mut out);
                }
            }
            PilotCommand::NavigatePhase { phase } => {
                self.st.page = *phase;
            }
        }
        self.settle(&mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
