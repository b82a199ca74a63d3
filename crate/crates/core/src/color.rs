//! Dynamic color system: maps action statuses, procedure titles and
//! message kinds to display colors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ActionKind, ActionStatus, ProcedureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ColorCode {
    Cyan,
    Green,
    Amber,
    Red,
    White,
    Magenta,
    Grey,
}

impl ColorCode {
    pub const ALL: [ColorCode; 7] = [
        ColorCode::Cyan,
        ColorCode::Green,
        ColorCode::Amber,
        ColorCode::Red,
        ColorCode::White,
        ColorCode::Magenta,
        ColorCode::Grey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColorCode::Cyan => "CYAN",
            ColorCode::Green => "GREEN",
            ColorCode::Amber => "AMBER",
            ColorCode::Red => "RED",
            ColorCode::White => "WHITE",
            ColorCode::Magenta => "MAGENTA",
            ColorCode::Grey => "GREY",
        }
    }
}

impl fmt::Display for ColorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Caution,
    Warning,
    Note,
    Restriction,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] =
        [MessageKind::Caution, MessageKind::Warning, MessageKind::Note, MessageKind::Restriction];
}

/// Anything the display paints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorItem {
    Action { kind: ActionKind, status: ActionStatus },
    ProcedureTitle(ProcedureKind),
    PhaseTitle,
    Message(MessageKind),
}

pub fn color_for(item: ColorItem) -> ColorCode {
    match item {
        // Grey wins for anything not applicable in the current context.
        ColorItem::Action { status: ActionStatus::NotApplicable, .. } => ColorCode::Grey,
        ColorItem::Action { kind: ActionKind::Note, .. } => ColorCode::White,
        ColorItem::Action { kind: ActionKind::Restriction, .. } => ColorCode::Magenta,
        ColorItem::Action { status, .. } => match status {
            ActionStatus::ToDo => ColorCode::Cyan,
            ActionStatus::DoneAuto | ActionStatus::DoneManual => ColorCode::Green,
            ActionStatus::Postponed => ColorCode::Amber,
            ActionStatus::NotApplicable => ColorCode::Grey,
        },
        ColorItem::ProcedureTitle(kind) => match kind {
            ProcedureKind::Abnormal => ColorCode::Amber,
            ProcedureKind::Emergency => ColorCode::Red,
            ProcedureKind::Normal | ProcedureKind::Checklist => ColorCode::White,
        },
        ColorItem::PhaseTitle => ColorCode::White,
        ColorItem::Message(kind) => match kind {
            MessageKind::Caution => ColorCode::Amber,
            MessageKind::Warning => ColorCode::Red,
            MessageKind::Note => ColorCode::White,
            MessageKind::Restriction => ColorCode::Magenta,
        },
    }
}
