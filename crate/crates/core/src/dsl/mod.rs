//! Procedure definition language.
//!
//! Line-oriented keyword blocks; `#` starts a comment. A set is assembled
//! from one or more sources: registry files (`.ocsr`) hold `param`
//! declarations, procedure files (`.ocsp`) hold `procedure` blocks, `entry`
//! tables and optionally further `param` lines.
//!
//! ```text
//! param FLAPS_POS enum(UP,CONF1,CONF2,CONF3,FULL)
//! param IAS number kt
//!
//! procedure FLAPS_LOCKED abnormal phase FINAL_APPROACH
//!   title "FLAPS LOCKED"
//!   iblock FL_1
//!     trigger sustained 3 (FLAPS_POS != FLAPS_HANDLE_POS)
//!     context (PHASE == FINAL_APPROACH)
//!     action A1 "MAX SPEED ....... 177 KT" level2 "Avoid flap damage" detect (IAS <= 177)
//!     note N1 "LDG DIST ....... MULTIPLY BY 1.4"
//!     goal (CHECK_ALL_DONE)
//!   embed ENG_RELIGHT
//!
//! entry FINAL_APPROACH FLAPS_SET LANDING
//! ```
//!
//! The full grammar lives in `docs/dsl.md`.

mod format;
mod lexer;
mod lint;
mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::model::{FlightPhase, ParameterId, Procedure, ProcedureId, Registry};

pub use format::{canonical_format, format_expr};
pub use lint::lint;
pub use parser::{parse, parse_sources};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpan {
    pub file: String,
    /// 1-based
    pub line: usize,
    /// 1-based, in characters
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(file: &str, line: usize, column: usize, length: usize) -> Self {
        Self { file: file.to_string(), line, column, length }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

/// Closed set of diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagCode {
    Syntax,
    UnknownKeyword,
    OutsideBlock,
    BadIdentifier,
    DuplicateId,
    DuplicateField,
    ReservedName,
    UnknownParam,
    TypeMismatch,
    InvalidOperator,
    UnknownLabel,
    BadDuration,
    MisplacedPseudo,
    NoteDetect,
    EmptyProcedure,
    DanglingLink,
    CyclicLink,
    AlwaysTriggers,
    Unsatisfiable,
    LabelOutOfDomain,
    AnalysisSkipped,
}

impl DiagCode {
    pub const ALL: [DiagCode; 21] = [
        DiagCode::Syntax,
        DiagCode::UnknownKeyword,
        DiagCode::OutsideBlock,
        DiagCode::BadIdentifier,
        DiagCode::DuplicateId,
        DiagCode::DuplicateField,
        DiagCode::ReservedName,
        DiagCode::UnknownParam,
        DiagCode::TypeMismatch,
        DiagCode::InvalidOperator,
        DiagCode::UnknownLabel,
        DiagCode::BadDuration,
        DiagCode::MisplacedPseudo,
        DiagCode::NoteDetect,
        DiagCode::EmptyProcedure,
        DiagCode::DanglingLink,
        DiagCode::CyclicLink,
        DiagCode::AlwaysTriggers,
        DiagCode::Unsatisfiable,
        DiagCode::LabelOutOfDomain,
        DiagCode::AnalysisSkipped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "E_SYNTAX",
            DiagCode::UnknownKeyword => "E_UNKNOWN_KEYWORD",
            DiagCode::OutsideBlock => "E_OUTSIDE_BLOCK",
            DiagCode::BadIdentifier => "E_BAD_IDENTIFIER",
            DiagCode::DuplicateId => "E_DUPLICATE_ID",
            DiagCode::DuplicateField => "E_DUPLICATE_FIELD",
            DiagCode::ReservedName => "E_RESERVED_NAME",
            DiagCode::UnknownParam => "E_UNKNOWN_PARAM",
            DiagCode::TypeMismatch => "E_TYPE_MISMATCH",
            DiagCode::InvalidOperator => "E_INVALID_OPERATOR",
            DiagCode::UnknownLabel => "E_UNKNOWN_LABEL",
            DiagCode::BadDuration => "E_BAD_DURATION",
            DiagCode::MisplacedPseudo => "E_MISPLACED_PSEUDO",
            DiagCode::NoteDetect => "E_NOTE_DETECT",
            DiagCode::EmptyProcedure => "E_EMPTY_PROCEDURE",
            DiagCode::DanglingLink => "E_DANGLING_LINK",
            DiagCode::CyclicLink => "E_CYCLIC_LINK",
            DiagCode::AlwaysTriggers => "W_ALWAYS_TRIGGERS",
            DiagCode::Unsatisfiable => "W_UNSATISFIABLE",
            DiagCode::LabelOutOfDomain => "W_LABEL_OUT_OF_DOMAIN",
            DiagCode::AnalysisSkipped => "W_ANALYSIS_SKIPPED",
        }
    }

    pub fn severity(self) -> Severity {
        if self.as_str().starts_with("E_") {
            Severity::Error
        } else {
            Severity::Warning
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub span: SourceSpan,
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, span: SourceSpan, message: impl Into<String>) -> Self {
        Self { severity: code.severity(), code, span, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// `file:line:col: SEVERITY CODE message`
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {} {} {}",
            self.span.file, self.span.line, self.span.column, self.severity, self.code, self.message
        )
    }
}

/// Where a piece of the set was declared, for diagnostics raised after
/// parsing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Param(ParameterId),
    Procedure(usize),
    IBlock(usize, usize),
    Trigger(usize, usize),
    Context(usize, usize),
    Goal(usize, usize),
    Abnormal(usize, usize, usize),
    Action(usize, usize, usize),
    Detect(usize, usize, usize),
    Applicable(usize, usize, usize),
    Embed(usize, usize),
}

/// A validated collection of procedures over one parameter registry.
#[derive(Debug, Clone, Default)]
pub struct ProcedureSet {
    pub registry: Registry,
    pub procedures: Vec<Procedure>,
    /// Explicit page order per phase; phases without an entry list their
    /// procedures in declaration order.
    pub entries: BTreeMap<FlightPhase, Vec<ProcedureId>>,
    origins: BTreeMap<Site, SourceSpan>,
}

/// Structural equality: source positions are ignored.
impl PartialEq for ProcedureSet {
    fn eq(&self, other: &Self) -> bool {
        self.registry == other.registry
            && self.procedures == other.procedures
            && self.entries == other.entries
    }
}

impl ProcedureSet {
    pub fn new(
        registry: Registry,
        procedures: Vec<Procedure>,
        entries: BTreeMap<FlightPhase, Vec<ProcedureId>>,
    ) -> Self {
        Self { registry, procedures, entries, origins: BTreeMap::new() }
    }

    pub fn procedure(&self, id: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.id.as_str() == id)
    }

    pub fn procedure_index(&self, id: &str) -> Option<usize> {
        self.procedures.iter().position(|p| p.id.as_str() == id)
    }

    /// Procedures shown on a phase page, in page order.
    pub fn page(&self, phase: FlightPhase) -> Vec<usize> {
        match self.entries.get(&phase) {
            Some(ids) => ids.iter().filter_map(|id| self.procedure_index(id.as_str())).collect(),
            None => self
                .procedures
                .iter()
                .enumerate()
                .filter(|(_, p)| p.phase == phase)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn origin(&self, site: &Site) -> Option<&SourceSpan> {
        self.origins.get(site)
    }

    pub(crate) fn set_origins(&mut self, origins: BTreeMap<Site, SourceSpan>) {
        self.origins = origins;
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(canonical_format(self).as_bytes()))
    }

    /// Longest `Sustained` window used anywhere in the set.
    pub fn max_sustained(&self) -> u32 {
        self.procedures
            .iter()
            .flat_map(|p| p.iblocks.iter())
            .flat_map(|b| {
                let mut exprs = vec![&b.trigger, &b.context, &b.goal];
                exprs.extend(b.abnormal.iter().map(|a| &a.condition));
                for a in &b.actions {
                    exprs.extend(a.auto_detect.iter());
                    exprs.extend(a.applicability.iter());
                }
                exprs.into_iter().map(|e| e.max_sustained())
            })
            .max()
            .unwrap_or(0)
    }
}

/// One named input text.
#[derive(Debug, Clone)]
pub struct Source {
    pub name: String,
    pub text: String,
}

impl Source {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }
}

/// Registry (`.ocsr`) and procedure (`.ocsp`) files under `dir`, registry
/// files first, each group sorted by file name.
pub fn set_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut registry = Vec::new();
    let mut procedures = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("ocsr") => registry.push(path),
            Some("ocsp") => procedures.push(path),
            _ => {}
        }
    }
    registry.sort();
    procedures.sort();
    registry.extend(procedures);
    Ok(registry)
}

pub fn read_sources(paths: &[PathBuf]) -> std::io::Result<Vec<Source>> {
    paths
        .iter()
        .map(|p| Ok(Source::new(p.display().to_string(), std::fs::read_to_string(p)?)))
        .collect()
}
