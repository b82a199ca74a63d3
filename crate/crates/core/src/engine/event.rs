use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ActionRef, ActionStatus, IBlockId, IBlockRef, ProcedureId};

/// Saved position inside a procedure: iblock and index of the first
/// action not yet done.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub iblock: IBlockId,
    pub action: usize,
}

impl fmt::Display for Cursor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.iblock, self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventKind {
    /// `ecam` marks a failure that is also announced on the simulated
    /// ECAM channel.
    PopupRaised { procedure: ProcedureId, ecam: bool },
    ReminderShown { procedure: ProcedureId },
    ActionAutoCompleted { action: ActionRef },
    ActionStatusChanged { action: ActionRef, old: ActionStatus, new: ActionStatus },
    /// A done action whose detection condition is now false. The status is
    /// kept; this is a warning only.
    ActionContradicted { action: ActionRef },
    ProcedureActivated { procedure: ProcedureId },
    ProcedurePushed { procedure: ProcedureId, parent: ProcedureId },
    ProcedureReturned { parent: ProcedureId, cursor: Cursor },
    ProcedureCompleted { procedure: ProcedureId },
    GoalReached { iblock: IBlockRef },
    AbnormalBranch { iblock: IBlockRef, target: ProcedureId },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PopupRaised { .. } => "PopupRaised",
            EventKind::ReminderShown { .. } => "ReminderShown",
            EventKind::ActionAutoCompleted { .. } => "ActionAutoCompleted",
            EventKind::ActionStatusChanged { .. } => "ActionStatusChanged",
            EventKind::ActionContradicted { .. } => "ActionContradicted",
            EventKind::ProcedureActivated { .. } => "ProcedureActivated",
            EventKind::ProcedurePushed { .. } => "ProcedurePushed",
            EventKind::ProcedureReturned { .. } => "ProcedureReturned",
            EventKind::ProcedureCompleted { .. } => "ProcedureCompleted",
            EventKind::GoalReached { .. } => "GoalReached",
            EventKind::AbnormalBranch { .. } => "AbnormalBranch",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        match self {
            EventKind::PopupRaised { procedure, ecam } => {
                let channels = if *ecam { "OCSIS,ECAM" } else { "OCSIS" };
                write!(f, " {procedure} channels={channels}")
            }
            EventKind::ReminderShown { procedure }
            | EventKind::ProcedureActivated { procedure }
            | EventKind::ProcedureCompleted { procedure } => write!(f, " {procedure}"),
            EventKind::ActionAutoCompleted { action } => write!(f, " {action}"),
            EventKind::ActionStatusChanged { action, old, new } => write!(f, " {action} {old} {new}"),
            EventKind::ActionContradicted { action } => write!(f, " {action} level=WARNING"),
            EventKind::ProcedurePushed { procedure, parent } => write!(f, " {procedure} parent={parent}"),
            EventKind::ProcedureReturned { parent, cursor } => write!(f, " {parent} cursor={cursor}"),
            EventKind::GoalReached { iblock } => write!(f, " {iblock}"),
            EventKind::AbnormalBranch { iblock, target } => write!(f, " {iblock} target={target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// `seq tick KIND fields...`
impl fmt::Display for EngineEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.seq, self.tick, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form() {
        let e = EngineEvent {
            seq: 7,
            tick: 12,
            kind: EventKind::PopupRaised { procedure: ProcedureId::new("ENG_FAIL").unwrap(), ecam: true },
        };
        assert_eq!(e.to_string(), "7 12 PopupRaised ENG_FAIL channels=OCSIS,ECAM");
        let e = EngineEvent {
            seq: 8,
            tick: 12,
            kind: EventKind::ProcedureReturned {
                parent: ProcedureId::new("FUEL_LEAK").unwrap(),
                cursor: Cursor { iblock: IBlockId::new("FL_2").unwrap(), action: 1 },
            },
        };
        assert_eq!(e.to_string(), "8 12 ProcedureReturned FUEL_LEAK cursor=FL_2:1");
    }

    #[test]
    fn json_shape() {
        let e = EngineEvent {
            seq: 1,
            tick: 3,
            kind: EventKind::ActionStatusChanged {
                action: "P/I/A".parse().unwrap(),
                old: ActionStatus::ToDo,
                new: ActionStatus::Postponed,
            },
        };
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(
            json,
            r#"{"seq":1,"tick":3,"type":"ActionStatusChanged","action":"P/I/A","old":"ToDo","new":"Postponed"}"#
        );
        assert_eq!(serde_json::from_str::<EngineEvent>(&json).unwrap(), e);
    }
}
