use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ActionRef, FlightPhase, IBlockRef, ProcedureId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopupChoice {
    Accept,
    Later,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PilotCommand {
    MarkDone { action: ActionRef },
    Wait { action: ActionRef },
    CheckAll { iblock: IBlockRef },
    DeferProcedure { procedure: ProcedureId },
    OpenProcedure { procedure: ProcedureId },
    AcknowledgePopup { procedure: ProcedureId, choice: PopupChoice },
    NavigatePhase { phase: FlightPhase },
    ResumeFromReminder { procedure: ProcedureId },
}

impl PilotCommand {
    pub fn name(&self) -> &'static str {
        match self {
            PilotCommand::MarkDone { .. } => "MarkDone",
            PilotCommand::Wait { .. } => "Wait",
            PilotCommand::CheckAll { .. } => "CheckAll",
            PilotCommand::DeferProcedure { .. } => "DeferProcedure",
            PilotCommand::OpenProcedure { .. } => "OpenProcedure",
            PilotCommand::AcknowledgePopup { .. } => "AcknowledgePopup",
            PilotCommand::NavigatePhase { .. } => "NavigatePhase",
            PilotCommand::ResumeFromReminder { .. } => "ResumeFromReminder",
        }
    }
}

impl fmt::Display for PilotCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        match self {
            PilotCommand::MarkDone { action } | PilotCommand::Wait { action } => write!(f, " {action}"),
            PilotCommand::CheckAll { iblock } => write!(f, " {iblock}"),
            PilotCommand::DeferProcedure { procedure }
            | PilotCommand::OpenProcedure { procedure }
            | PilotCommand::ResumeFromReminder { procedure } => write!(f, " {procedure}"),
            PilotCommand::AcknowledgePopup { procedure, choice } => {
                let c = match choice {
                    PopupChoice::Accept => "accept",
                    PopupChoice::Later => "later",
                };
                write!(f, " {procedure} {c}")
            }
            PilotCommand::NavigatePhase { phase } => write!(f, " {phase}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid command `{text}`: {reason}")]
pub struct CommandParseError {
    pub text: String,
    pub reason: String,
}

/// Inverse of the `Display` form, e.g. `AcknowledgePopup FLAPS_LOCKED later`.
impl FromStr for PilotCommand {
    type Err = CommandParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| CommandParseError { text: s.to_string(), reason: reason.to_string() };
        let words: Vec<&str> = s.split_whitespace().collect();
        let (name, args) = words.split_first().ok_or_else(|| err("empty command"))?;
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(&format!("expected {n} argument(s), got {}", args.len())))
            }
        };
        let proc = |t: &str| t.parse::<ProcedureId>().map_err(|e| err(&e.to_string()));
        let cmd = match *name {
            "MarkDone" | "Wait" => {
                arity(1)?;
                let action = args[0].parse::<ActionRef>().map_err(|e| err(&e.to_string()))?;
                if *name == "MarkDone" {
                    PilotCommand::MarkDone { action }
                } else {
                    PilotCommand::Wait { action }
                }
            }
            "CheckAll" => {
                arity(1)?;
                PilotCommand::CheckAll { iblock: args[0].parse().map_err(|e: crate::model::ModelError| err(&e.to_string()))? }
            }
            "DeferProcedure" => {
                arity(1)?;
                PilotCommand::DeferProcedure { procedure: proc(args[0])? }
            }
            "OpenProcedure" => {
                arity(1)?;
                PilotCommand::OpenProcedure { procedure: proc(args[0])? }
            }
            "ResumeFromReminder" => {
                arity(1)?;
                PilotCommand::ResumeFromReminder { procedure: proc(args[0])? }
            }
            "AcknowledgePopup" => {
                arity(2)?;
                let choice = match args[1] {
                    "accept" => PopupChoice::Accept,
                    "later" => PopupChoice::Later,
                    _ => return Err(err("choice must be `accept` or `later`")),
                };
                PilotCommand::AcknowledgePopup { procedure: proc(args[0])?, choice }
            }
            "NavigatePhase" => {
                arity(1)?;
                PilotCommand::NavigatePhase { phase: args[0].parse().map_err(|e: crate::model::ModelError| err(&e.to_string()))? }
            }
            _ => return Err(err("unknown command")),
        };
        Ok(cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for text in [
            "MarkDone P/I/A",
            "Wait P/I/A",
            "CheckAll P/I",
            "DeferProcedure FLAPS_LOCKED",
            "OpenProcedure ENG_SHUTDOWN",
            "AcknowledgePopup FLAPS_LOCKED later",
            "AcknowledgePopup ENG_FAIL accept",
            "NavigatePhase FINAL_APPROACH",
            "ResumeFromReminder FLAPS_LOCKED",
        ] {
            let cmd: PilotCommand = text.parse().unwrap();
            assert_eq!(cmd.to_string(), text);
        }
    }

    #[test]
    fn rejects_bad_text() {
        for text in ["", "Jump P", "MarkDone P/I", "AcknowledgePopup P maybe", "NavigatePhase MOON", "Wait"] {
            assert!(text.parse::<PilotCommand>().is_err(), "{text}");
        }
    }

    #[test]
    fn json_shape() {
        let cmd = PilotCommand::AcknowledgePopup { procedure: ProcedureId::new("P").unwrap(), choice: PopupChoice::Later };
        let json = serde_json::to_string(&cmd).unwrap();
        assert_eq!(json, r#"{"type":"AcknowledgePopup","procedure":"P","choice":"later"}"#);
        assert_eq!(serde_json::from_str::<PilotCommand>(&json).unwrap(), cmd);
    }
}
