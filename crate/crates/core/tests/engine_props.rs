mod common;

use common::{fixture_config, fixture_set};
use ocsis_core::dsl::ProcedureSet;
use ocsis_core::engine::{EventKind, PilotCommand, PopupChoice, Session, Snapshot};
use ocsis_core::model::{transition, ActionRef, FlightPhase, FlightState, IBlockRef, ParamValue, StatusTrigger};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    State { gap: u64, phase: Option<usize>, changes: Vec<(usize, usize, bool)> },
    Command { kind: u8, pick: usize, targeted: bool },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1u64..3, proptest::option::of(0usize..4), proptest::collection::vec((0usize..64, 0usize..8, proptest::bool::weighted(0.1)), 0..5))
            .prop_map(|(gap, phase, changes)| Op::State { gap, phase, changes }),
        (0u8..9, 0usize..256, any::<bool>()).prop_map(|(kind, pick, targeted)| Op::Command { kind, pick, targeted }),
    ]
}

const PHASES: [FlightPhase; 4] =
    [FlightPhase::Cruise, FlightPhase::Descent, FlightPhase::InitialApproach, FlightPhase::FinalApproach];
const NUMBERS: [f64; 4] = [0.0, 20.0, 85.0, 4500.0];

struct Driver {
    set: ProcedureSet,
    current: FlightState,
}

impl Driver {
    fn new(set: ProcedureSet) -> Self {
        Self { set, current: FlightState::new(0, FlightPhase::Cruise) }
    }

    fn next_state(&mut self, gap: u64, phase: Option<usize>, changes: &[(usize, usize, bool)]) -> FlightState {
        let decls: Vec<_> = self.set.registry.iter().cloned().collect();
        let mut s = self.current.clone();
        s.tick += gap;
        if let Some(p) = phase {
            s.phase = PHASES[p];
        }
        for &(i, v, clear) in changes {
            let d = &decls[i % decls.len()];
            if clear {
                s.values.remove(&d.name);
                continue;
            }
            let value = match d.ty.domain_values() {
                Some(vals) => vals[v % vals.len()].clone(),
                None => ParamValue::Number(NUMBERS[v % NUMBERS.len()]),
            };
            s.values.insert(d.name.clone(), value);
        }
        self.current = s.clone();
        s
    }

    fn command(&self, session: &Session, kind: u8, pick: usize, targeted: bool) -> PilotCommand {
        let procs = &self.set.procedures;
        let p = &procs[pick % procs.len()];
        let b = &p.iblocks[pick % p.iblocks.len()];
        let top = session.stack_cursors().last().cloned();
        let mut iblock = IBlockRef { procedure: p.id.clone(), iblock: b.id.clone() };
        let mut actions: Vec<ActionRef> = b
            .actions
            .iter()
            .map(|a| ActionRef { procedure: p.id.clone(), iblock: b.id.clone(), action: a.id.clone() })
            .collect();
        if let (true, Some((tp, cursor))) = (targeted, &top) {
            let proc = procs.iter().find(|x| &x.id == tp).unwrap();
            let blk = proc.iblocks.iter().find(|x| x.id == cursor.iblock).unwrap();
            iblock = IBlockRef { procedure: tp.clone(), iblock: blk.id.clone() };
            actions = blk
                .actions
                .iter()
                .map(|a| ActionRef { procedure: tp.clone(), iblock: blk.id.clone(), action: a.id.clone() })
                .collect();
        }
        let action = actions.get(pick % actions.len().max(1)).cloned().unwrap_or(ActionRef {
            procedure: p.id.clone(),
            iblock: b.id.clone(),
            action: "NONE".parse().unwrap(),
        });
        let popup = session.popups().first().cloned().filter(|_| targeted).unwrap_or(p.id.clone());
        let deferred = session.deferred().first().cloned().filter(|_| targeted).unwrap_or(p.id.clone());
        let top_id = top.map(|t| t.0).filter(|_| targeted).unwrap_or(p.id.clone());
        match kind {
            0 => PilotCommand::MarkDone { action },
            1 => PilotCommand::Wait { action },
            2 => PilotCommand::CheckAll { iblock },
            3 => PilotCommand::AcknowledgePopup { procedure: popup, choice: PopupChoice::Accept },
            4 => PilotCommand::AcknowledgePopup { procedure: popup, choice: PopupChoice::Later },
            5 => PilotCommand::ResumeFromReminder { procedure: deferred },
            6 => PilotCommand::OpenProcedure { procedure: p.id.clone() },
            7 => PilotCommand::DeferProcedure { procedure: top_id },
            _ => PilotCommand::NavigatePhase { phase: PHASES[pick % PHASES.len()] },
        }
    }
}

fn run_op(driver: &mut Driver, session: &mut Session, op: &Op) -> Result<(), TestCaseError> {
    let before = session.clone();
    let log_len = session.event_log().len() as u64;
    let result = match op {
        Op::State { gap, phase, changes } => {
            let s = driver.next_state(*gap, *phase, changes);
            session.apply_state(s)
        }
        Op::Command { kind, pick, targeted } => {
            let cmd = driver.command(session, *kind, *pick, *targeted);
            session.apply_command(&cmd)
        }
    };
    match result {
        Err(_) => prop_assert_eq!(&*session, &before, "rejected input must not change the session"),
        Ok(events) => {
            for (i, e) in events.iter().enumerate() {
                prop_assert_eq!(e.seq, log_len + 1 + i as u64, "sequence numbers have no gaps");
                if let EventKind::ActionStatusChanged { old, new, .. } = &e.kind {
                    prop_assert!(
                        StatusTrigger::ALL.iter().any(|&t| transition(*old, t) == Some(*new)),
                        "illegal transition {} -> {}",
                        old,
                        new
                    );
                }
            }
            let stack = session.stack();
            let mut dedup = stack.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(dedup.len(), stack.len(), "a procedure is on the stack at most once");
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_sessions_keep_invariants(ops in proptest::collection::vec(op(), 1..80)) {
        let set = fixture_set();
        let mut session = Session::new(set.clone(), fixture_config()).unwrap();
        let mut driver = Driver::new(set);
        for op in &ops {
            run_op(&mut driver, &mut session, op)?;
        }
        // display model is always computable and serializable
        let d = session.display_model();
        prop_assert!(serde_json::to_string(&d).is_ok());
    }

    #[test]
    fn snapshot_restore_continues_identically(
        prefix in proptest::collection::vec(op(), 0..40),
        suffix in proptest::collection::vec(op(), 1..40),
    ) {
        let set = fixture_set();
        let mut a = Session::new(set.clone(), fixture_config()).unwrap();
        let mut driver = Driver::new(set.clone());
        for op in &prefix {
            run_op(&mut driver, &mut a, op)?;
        }
        let bytes = a.snapshot().to_bytes();
        let mut b = Session::restore(set, &Snapshot::from_bytes(&bytes).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        let mut driver_b = Driver { set: driver.set.clone(), current: driver.current.clone() };
        for op in &suffix {
            run_op(&mut driver, &mut a, op)?;
            run_op(&mut driver_b, &mut b, op)?;
        }
        prop_assert_eq!(a.event_log_text(), b.event_log_text());
    }
}
