use super::*;
use crate::color::ColorCode;
use crate::dsl::parse;
use crate::model::{ActionKind, ProcedureKind};

const SET: &str = "\
param B bool
param D bool
param APPL bool
param POS enum(UP,CONF1,CONF3)
param HANDLE enum(UP,CONF1,CONF3)

procedure MAIN normal phase CRUISE
  iblock M_1
    trigger (PHASE == CRUISE)
    context (PHASE == CRUISE)
    action A \"A\" detect D applicable APPL
    check C \"C\"
    note NT \"VAPP {VAPP} DIST {LDG_DIST}\"
    restriction R \"R\"
  iblock M_2
    check C2 \"C2\"
    abnormal sustained 3 (POS != HANDLE) -> LOCKED
  embed SUB

procedure SUB abnormal phase CRUISE
  iblock S_1
    trigger false
    check X \"X\"

procedure LOCKED abnormal phase CRUISE ecam
  iblock L_1
    trigger sustained 3 (POS != HANDLE)
    action LEVER \"L\" detect (HANDLE == POS)

procedure FIRE emergency phase CRUISE
  iblock F_1
    trigger B
    check AGENT \"AGENT\"
";

fn set() -> ProcedureSet {
    parse(SET).expect("test set parses")
}

fn session() -> Session {
    Session::new(set(), SessionConfig::default()).unwrap()
}

fn state(s: &Session, tick: u64, values: &str) -> FlightState {
    let text = format!("phase=CRUISE {values}");
    FlightState::parse_canonical(tick, text.trim(), &s.procedure_set().registry).unwrap()
}

fn step(s: &mut Session, tick: u64, values: &str) -> Vec<EngineEvent> {
    let st = state(s, tick, values);
    s.apply_state(st).unwrap()
}

fn cmd(s: &mut Session, text: &str) -> Result<Vec<EngineEvent>, EngineError> {
    s.apply_command(&text.parse().unwrap())
}

fn aref(text: &str) -> ActionRef {
    text.parse().unwrap()
}

fn kinds(events: &[EngineEvent]) -> Vec<String> {
    events.iter().map(|e| e.kind.to_string()).collect()
}

fn count(s: &Session, needle: &str) -> usize {
    s.event_log().iter().filter(|e| e.kind.to_string() == needle).count()
}

#[test]
fn fresh_session() {
    let s = session();
    assert!(s.event_log().is_empty());
    assert!(s.stack().is_empty());
    assert_eq!(s.page(), FlightPhase::CockpitPrep);
    assert_eq!(s.status(&aref("MAIN/M_1/A")), Some(ActionStatus::ToDo));
    assert_eq!(s.status(&aref("MAIN/M_1/NOPE")), None);
}

#[test]
fn activation_and_page_follow_phase() {
    let mut s = session();
    let ev = step(&mut s, 0, "");
    assert_eq!(kinds(&ev), ["ProcedureActivated MAIN"]);
    assert_eq!(s.page(), FlightPhase::Cruise);
    assert_eq!(ev[0].seq, 1);
    s.apply_command(&PilotCommand::NavigatePhase { phase: FlightPhase::Landing }).unwrap();
    assert_eq!(s.page(), FlightPhase::Landing);
    // the page only follows the phase when the phase changes
    step(&mut s, 1, "B=false");
    assert_eq!(s.page(), FlightPhase::Landing);
}

#[test]
fn stale_and_invalid_states() {
    let mut s = session();
    step(&mut s, 5, "");
    let before = s.clone();
    assert_eq!(s.apply_state(state(&s, 5, "")), Err(EngineError::StaleTick { tick: 5, latest: 5 }));
    assert!(matches!(s.apply_state(state(&s, 3, "")), Err(EngineError::StaleTick { .. })));
    let mut bad = state(&s, 6, "");
    bad.values.insert("POS".parse().unwrap(), crate::model::ParamValue::Bool(true));
    assert!(matches!(s.apply_state(bad), Err(EngineError::InvalidState(_))));
    let mut unknown = state(&s, 6, "");
    unknown.values.insert("NOPE".parse().unwrap(), crate::model::ParamValue::Bool(true));
    assert!(matches!(s.apply_state(unknown), Err(EngineError::InvalidState(_))));
    assert_eq!(s, before);
    assert!(matches!(s.apply_command_at(4, &"CheckAll MAIN/M_1".parse().unwrap()), Err(EngineError::StaleTick { .. })));
    assert_eq!(s, before);
}

/// Drives MAIN/M_1/A into `status` on a fresh session.
fn session_with_a(status: ActionStatus) -> Session {
    let mut s = session();
    step(&mut s, 0, "APPL=true");
    match status {
        ActionStatus::ToDo => {}
        ActionStatus::Postponed => {
            cmd(&mut s, "Wait MAIN/M_1/A").unwrap();
        }
        ActionStatus::DoneManual => {
            cmd(&mut s, "MarkDone MAIN/M_1/A").unwrap();
        }
        ActionStatus::DoneAuto => {
            step(&mut s, 1, "APPL=true D=true");
        }
        ActionStatus::NotApplicable => {
            step(&mut s, 1, "APPL=false");
        }
    }
    assert_eq!(s.status(&aref("MAIN/M_1/A")), Some(status));
    s
}

#[test]
fn command_matrix_matches_oracle() {
    use ActionStatus::*;
    // (from, command, expected); None = rejected
    let table: [(ActionStatus, &str, Option<ActionStatus>); 10] = [
        (ToDo, "MarkDone", Some(DoneManual)),
        (ToDo, "Wait", Some(Postponed)),
        (Postponed, "MarkDone", Some(DoneManual)),
        (Postponed, "Wait", None),
        (DoneManual, "MarkDone", None),
        (DoneManual, "Wait", None),
        (DoneAuto, "MarkDone", None),
        (DoneAuto, "Wait", None),
        (NotApplicable, "MarkDone", None),
        (NotApplicable, "Wait", None),
    ];
    for (from, command, expected) in table {
        let mut s = session_with_a(from);
        let before = s.clone();
        let result = cmd(&mut s, &format!("{command} MAIN/M_1/A"));
        match expected {
            Some(to) => {
                let ev = result.unwrap();
                assert_eq!(kinds(&ev)[0], format!("ActionStatusChanged MAIN/M_1/A {from} {to}"));
                assert_eq!(s.status(&aref("MAIN/M_1/A")), Some(to));
            }
            None => {
                assert_eq!(
                    result,
                    Err(EngineError::IllegalTransition { action: aref("MAIN/M_1/A"), from, command: command.into() })
                );
                assert_eq!(s, before, "{from} {command} must leave the session unchanged");
            }
        }
    }
}

#[test]
fn notes_and_restrictions_cannot_be_completed() {
    let mut s = session();
    step(&mut s, 0, "");
    for r in ["MAIN/M_1/NT", "MAIN/M_1/R"] {
        for c in ["MarkDone", "Wait"] {
            assert!(matches!(cmd(&mut s, &format!("{c} {r}")), Err(EngineError::IllegalTransition { .. })));
        }
    }
}

#[test]
fn check_all_done_ignores_not_applicable_and_notes() {
    let mut s = session();
    step(&mut s, 0, "APPL=false");
    assert_eq!(s.status(&aref("MAIN/M_1/A")), Some(ActionStatus::NotApplicable));
    let ev = cmd(&mut s, "MarkDone MAIN/M_1/C").unwrap();
    assert_eq!(kinds(&ev), ["ActionStatusChanged MAIN/M_1/C ToDo DoneManual", "GoalReached MAIN/M_1"]);
    assert_eq!(s.stack_cursors(), vec![(ProcedureId::new("MAIN").unwrap(), Cursor { iblock: "M_2".parse().unwrap(), action: 0 })]);
}

#[test]
fn check_all_and_completion() {
    let mut s = session();
    step(&mut s, 0, "APPL=true");
    let ev = cmd(&mut s, "CheckAll MAIN/M_1").unwrap();
    assert_eq!(
        kinds(&ev),
        [
            "ActionStatusChanged MAIN/M_1/A ToDo DoneManual",
            "ActionStatusChanged MAIN/M_1/C ToDo DoneManual",
            "GoalReached MAIN/M_1"
        ]
    );
    let ev = cmd(&mut s, "CheckAll MAIN/M_2").unwrap();
    assert_eq!(kinds(&ev)[2], "ProcedureCompleted MAIN");
    assert!(s.is_completed("MAIN"));
    assert!(s.stack().is_empty());
    // nothing left to do: the command is accepted and changes nothing
    assert!(matches!(cmd(&mut s, "CheckAll MAIN/M_2"), Ok(ev) if ev.is_empty()));
}

#[test]
fn visibility_and_unknown_refs() {
    let mut s = session();
    step(&mut s, 0, "");
    s.apply_command(&PilotCommand::NavigatePhase { phase: FlightPhase::Landing }).unwrap();
    // MAIN is on the stack, so still reachable from another page
    assert!(cmd(&mut s, "MarkDone MAIN/M_1/C").is_ok());
    assert_eq!(cmd(&mut s, "MarkDone SUB/S_1/X"), Err(EngineError::NotVisible(ProcedureId::new("SUB").unwrap())));
    assert!(matches!(cmd(&mut s, "MarkDone MAIN/M_9/C"), Err(EngineError::UnknownRef(_))));
    assert!(matches!(cmd(&mut s, "OpenProcedure NOPE"), Err(EngineError::UnknownRef(_))));
}

#[test]
fn auto_detect_and_contradiction_once_per_episode() {
    let mut s = session();
    step(&mut s, 0, "APPL=true D=false");
    let ev = step(&mut s, 1, "APPL=true D=true");
    assert_eq!(kinds(&ev), ["ActionAutoCompleted MAIN/M_1/A", "ActionStatusChanged MAIN/M_1/A ToDo DoneAuto"]);
    let ev = step(&mut s, 2, "APPL=true D=false");
    assert_eq!(kinds(&ev), ["ActionContradicted MAIN/M_1/A level=WARNING"]);
    step(&mut s, 3, "APPL=true D=false");
    step(&mut s, 4, "APPL=true D=true");
    step(&mut s, 5, "APPL=true D=false");
    assert_eq!(count(&s, "ActionContradicted MAIN/M_1/A level=WARNING"), 2);
    assert_eq!(s.status(&aref("MAIN/M_1/A")), Some(ActionStatus::DoneAuto));
}

fn mismatch_popups(s: &Session) -> usize {
    count(s, "PopupRaised LOCKED channels=OCSIS,ECAM")
}

#[test]
fn sustained_popup_once_per_episode() {
    let mut s = session();
    step(&mut s, 0, "HANDLE=UP POS=UP");
    step(&mut s, 1, "HANDLE=CONF1 POS=UP");
    step(&mut s, 2, "HANDLE=CONF1 POS=UP");
    assert_eq!(mismatch_popups(&s), 0);
    step(&mut s, 3, "HANDLE=CONF1 POS=UP");
    assert_eq!(mismatch_popups(&s), 1);
    for t in 4..10 {
        step(&mut s, t, "HANDLE=CONF1 POS=UP");
    }
    assert_eq!(mismatch_popups(&s), 1);
    assert_eq!(s.popups(), vec![ProcedureId::new("LOCKED").unwrap()]);

    let ev = cmd(&mut s, "AcknowledgePopup LOCKED accept").unwrap();
    assert_eq!(kinds(&ev), ["ProcedurePushed LOCKED parent=MAIN"]);
    let ev = step(&mut s, 10, "HANDLE=UP POS=UP");
    assert!(kinds(&ev).contains(&"ProcedureReturned MAIN cursor=M_1:0".to_string()), "{ev:?}");

    // a new episode raises again
    for t in 11..14 {
        step(&mut s, t, "HANDLE=CONF3 POS=UP");
    }
    assert_eq!(mismatch_popups(&s), 2);
}

#[test]
fn abnormal_link_branches_from_active_iblock() {
    let mut s = session();
    step(&mut s, 0, "APPL=true HANDLE=UP POS=UP");
    cmd(&mut s, "CheckAll MAIN/M_1").unwrap();
    step(&mut s, 1, "APPL=true HANDLE=CONF1 POS=UP");
    step(&mut s, 2, "APPL=true HANDLE=CONF1 POS=UP");
    let ev = step(&mut s, 3, "APPL=true HANDLE=CONF1 POS=UP");
    assert_eq!(
        kinds(&ev),
        ["AbnormalBranch MAIN/M_2 target=LOCKED", "PopupRaised LOCKED channels=OCSIS,ECAM"]
    );
}

#[test]
fn push_and_return_balance() {
    let mut s = session();
    step(&mut s, 0, "APPL=true");
    cmd(&mut s, "MarkDone MAIN/M_1/A").unwrap();
    let ev = cmd(&mut s, "OpenProcedure SUB").unwrap();
    assert_eq!(kinds(&ev), ["ProcedurePushed SUB parent=MAIN"]);
    assert_eq!(cmd(&mut s, "OpenProcedure SUB"), Err(EngineError::AlreadyActive(ProcedureId::new("SUB").unwrap())));
    assert_eq!(cmd(&mut s, "OpenProcedure MAIN"), Err(EngineError::AlreadyActive(ProcedureId::new("MAIN").unwrap())));
    let ev = cmd(&mut s, "MarkDone SUB/S_1/X").unwrap();
    assert_eq!(
        kinds(&ev),
        [
            "ActionStatusChanged SUB/S_1/X ToDo DoneManual",
            "GoalReached SUB/S_1",
            "ProcedureCompleted SUB",
            "ProcedureReturned MAIN cursor=M_1:1"
        ]
    );
    let pushes = count(&s, "ProcedurePushed SUB parent=MAIN");
    let returns = s.event_log().iter().filter(|e| matches!(e.kind, EventKind::ProcedureReturned { .. })).count();
    assert_eq!(pushes, returns);
}

#[test]
fn emergency_preempts_queue_order() {
    let mut s = session();
    step(&mut s, 0, "HANDLE=UP POS=UP B=false");
    step(&mut s, 1, "HANDLE=CONF1 POS=UP B=false");
    step(&mut s, 2, "HANDLE=CONF1 POS=UP B=false");
    step(&mut s, 3, "HANDLE=CONF1 POS=UP B=true");
    // FIRE is raised after LOCKED but outranks it
    assert_eq!(s.popups(), vec![ProcedureId::new("FIRE").unwrap(), ProcedureId::new("LOCKED").unwrap()]);
    assert_eq!(cmd(&mut s, "AcknowledgePopup LOCKED accept"), Err(EngineError::NoSuchPopup(ProcedureId::new("LOCKED").unwrap())));
    let d = s.display_model();
    assert_eq!(d.popup.unwrap().title_color, ColorCode::Red);
    assert_eq!(d.queued_popups, vec![ProcedureId::new("LOCKED").unwrap()]);
}

#[test]
fn defer_and_resume() {
    let mut s = session();
    step(&mut s, 0, "");
    cmd(&mut s, "OpenProcedure SUB").unwrap();
    assert_eq!(cmd(&mut s, "DeferProcedure MAIN"), Err(EngineError::NotOnTop(ProcedureId::new("MAIN").unwrap())));
    let ev = cmd(&mut s, "DeferProcedure SUB").unwrap();
    assert_eq!(kinds(&ev), ["ReminderShown SUB", "ProcedureReturned MAIN cursor=M_1:0"]);
    assert_eq!(s.deferred(), vec![ProcedureId::new("SUB").unwrap()]);
    assert_eq!(s.display_model().reminder_bar.len(), 1);
    assert_eq!(cmd(&mut s, "ResumeFromReminder MAIN"), Err(EngineError::NotDeferred(ProcedureId::new("MAIN").unwrap())));
    let ev = cmd(&mut s, "ResumeFromReminder SUB").unwrap();
    assert_eq!(kinds(&ev), ["ProcedurePushed SUB parent=MAIN"]);
    assert!(s.deferred().is_empty());
}

#[test]
fn popup_later_then_open_from_page() {
    let mut s = session();
    step(&mut s, 0, "B=true");
    let ev = cmd(&mut s, "AcknowledgePopup FIRE later").unwrap();
    assert_eq!(kinds(&ev), ["ReminderShown FIRE"]);
    let ev = cmd(&mut s, "OpenProcedure FIRE").unwrap();
    assert_eq!(kinds(&ev), ["ProcedurePushed FIRE parent=MAIN"]);
    assert!(s.deferred().is_empty());
}

#[test]
fn history_is_bounded() {
    let mut s = session();
    for t in 0..100 {
        step(&mut s, t, "");
    }
    assert_eq!(s.history_len(), MIN_HISTORY);
}

#[test]
fn snapshot_round_trip() {
    let mut s = session();
    step(&mut s, 0, "APPL=true HANDLE=UP POS=UP");
    cmd(&mut s, "Wait MAIN/M_1/A").unwrap();
    step(&mut s, 1, "APPL=true HANDLE=CONF1 POS=UP");
    let snap = s.snapshot();
    let bytes = snap.to_bytes();
    let restored = Session::restore(set(), &Snapshot::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(restored, s);
    assert_eq!(restored.snapshot().to_bytes(), bytes);
}

#[test]
fn snapshot_rejections() {
    let s = session();
    let bytes = s.snapshot().to_bytes();
    let other = parse(&SET.replace("\"AGENT\"", "\"AGENT 1\"")).unwrap();
    assert!(matches!(
        Session::restore(other, &Snapshot::from_bytes(&bytes).unwrap()),
        Err(SnapshotError::HashMismatch { .. })
    ));
    let text = String::from_utf8(bytes).unwrap();
    let v2 = text.replace("\"version\":1", "\"version\":2");
    assert_eq!(Snapshot::from_bytes(v2.as_bytes()), Err(SnapshotError::VersionUnsupported(2)));
    assert!(matches!(Snapshot::from_bytes(b"{\"format\":\"x\",\"version\":1}"), Err(SnapshotError::Malformed(_))));
    assert!(matches!(Snapshot::from_bytes(b"not json"), Err(SnapshotError::Malformed(_))));
}

#[test]
fn display_colors_and_notes() {
    let table = crate::perf::load_correction_table("correction LOCKED speed +10 dist x1.4\n").unwrap();
    let config = SessionConfig {
        perf: Some(PerfConfig { vref: 130.0, reference_landing_distance: 1500.0, corrections: table }),
    };
    let mut s = Session::new(set(), config).unwrap();
    step(&mut s, 0, "APPL=true HANDLE=UP POS=UP");
    cmd(&mut s, "Wait MAIN/M_1/A").unwrap();
    let d = s.display_model();
    let view = d.active.unwrap();
    assert_eq!(view.kind, ProcedureKind::Normal);
    assert_eq!(view.title_color, ColorCode::White);
    assert_eq!(view.links, vec![ProcedureId::new("SUB").unwrap()]);
    let lines = &view.iblocks[0].lines;
    let colors: Vec<(ActionKind, ColorCode)> = lines.iter().map(|l| (l.kind, l.color)).collect();
    assert_eq!(
        colors,
        [
            (ActionKind::Action, ColorCode::Amber),
            (ActionKind::Check, ColorCode::Cyan),
            (ActionKind::Note, ColorCode::White),
            (ActionKind::Restriction, ColorCode::Magenta),
        ]
    );
    assert_eq!(lines[2].text, "VAPP 130 DIST 1500");
    assert!(view.iblocks[0].current && view.iblocks[0].check_all);
    assert!(lines[1].current);
    cmd(&mut s, "MarkDone MAIN/M_1/C").unwrap();
    let view = s.display_model().active.unwrap();
    assert!(view.iblocks[0].lines[0].current, "postponed line is picked up last");

    for t in 1..4 {
        step(&mut s, t, "APPL=true HANDLE=CONF1 POS=UP");
    }
    let d = s.display_model();
    assert_eq!(d.popup.as_ref().unwrap().title_color, ColorCode::Amber);
    assert!(d.popup.unwrap().ecam);
    let view = s.procedure_view("MAIN").unwrap();
    assert_eq!(view.iblocks[0].lines[2].text, "VAPP 140 DIST 2100");
}
