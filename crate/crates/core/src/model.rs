//! Domain types shared by every part of the engine: parameters, flight
//! state, interaction blocks and procedures.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::ConditionExpr;

/// Name of the pseudo-parameter that exposes the current flight phase.
pub const PHASE_PARAM: &str = "PHASE";
/// Name of the pseudo-parameter that is true once every applicable action
/// of the evaluated iBlock is done.
pub const CHECK_ALL_DONE_PARAM: &str = "CHECK_ALL_DONE";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid identifier `{0}`: expected [A-Z][A-Z0-9_]*")]
    InvalidIdentifier(String),
    #[error("unknown flight phase `{0}`")]
    UnknownPhase(String),
    #[error("invalid information level {0}: expected 1, 2 or 3")]
    InvalidLevel(u8),
    #[error("malformed reference `{0}`")]
    MalformedRef(String),
}

/// Identifiers in the procedure domain all share the `[A-Z][A-Z0-9_]*` shape.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

macro_rules! identifier_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
                let s = s.into();
                if is_identifier(&s) {
                    Ok(Self(s))
                } else {
                    Err(ModelError::InvalidIdentifier(s))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = ModelError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

identifier_type!(
    /// Name of a flight parameter, e.g. `FLAPS_POS` or `N1_ENG1`.
    ParameterId
);
identifier_type!(ProcedureId);
identifier_type!(IBlockId);
identifier_type!(ActionId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlightPhase {
    CockpitPrep,
    Takeoff,
    Climb,
    Cruise,
    Descent,
    InitialApproach,
    FinalApproach,
    Landing,
    GoAround,
}

impl FlightPhase {
    pub const ALL: [FlightPhase; 9] = [
        FlightPhase::CockpitPrep,
        FlightPhase::Takeoff,
        FlightPhase::Climb,
        FlightPhase::Cruise,
        FlightPhase::Descent,
        FlightPhase::InitialApproach,
        FlightPhase::FinalApproach,
        FlightPhase::Landing,
        FlightPhase::GoAround,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlightPhase::CockpitPrep => "COCKPIT_PREP",
            FlightPhase::Takeoff => "TAKEOFF",
            FlightPhase::Climb => "CLIMB",
            FlightPhase::Cruise => "CRUISE",
            FlightPhase::Descent => "DESCENT",
            FlightPhase::InitialApproach => "INITIAL_APPROACH",
            FlightPhase::FinalApproach => "FINAL_APPROACH",
            FlightPhase::Landing => "LANDING",
            FlightPhase::GoAround => "GO_AROUND",
        }
    }

    pub fn index(self) -> usize {
        FlightPhase::ALL.iter().position(|p| *p == self).unwrap_or(0)
    }

    /// Next phase page to the right, if any.
    pub fn next(self) -> Option<FlightPhase> {
        FlightPhase::ALL.get(self.index() + 1).copied()
    }

    pub fn prev(self) -> Option<FlightPhase> {
        self.index().checked_sub(1).map(|i| FlightPhase::ALL[i])
    }
}

impl fmt::Display for FlightPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlightPhase {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FlightPhase::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ModelError::UnknownPhase(s.to_string()))
    }
}

/// Declared type of a parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamType {
    Number,
    Bool,
    /// Ordered label domain; ordering comparisons follow declaration order.
    Enum(Vec<String>),
}

impl ParamType {
    pub fn is_enum(&self) -> bool {
        matches!(self, ParamType::Enum(_))
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        match self {
            ParamType::Enum(labels) => labels.iter().position(|l| l == label),
            _ => None,
        }
    }

    /// Size of the value domain, `None` for numbers.
    pub fn domain_size(&self) -> Option<usize> {
        match self {
            ParamType::Number => None,
            ParamType::Bool => Some(2),
            ParamType::Enum(labels) => Some(labels.len()),
        }
    }

    /// Every value of a finite domain, in declaration order.
    pub fn domain_values(&self) -> Option<Vec<ParamValue>> {
        match self {
            ParamType::Number => None,
            ParamType::Bool => Some(vec![ParamValue::Bool(false), ParamValue::Bool(true)]),
            ParamType::Enum(labels) => {
                Some(labels.iter().cloned().map(ParamValue::Enum).collect())
            }
        }
    }

    pub fn admits(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (ParamType::Number, ParamValue::Number(n)) => n.is_finite(),
            (ParamType::Bool, ParamValue::Bool(_)) => true,
            (ParamType::Enum(labels), ParamValue::Enum(l)) => labels.contains(l),
            _ => false,
        }
    }

    /// Parses a textual value according to this type.
    pub fn parse_value(&self, text: &str) -> Option<ParamValue> {
        match self {
            ParamType::Number => text
                .parse::<f64>()
                .ok()
                .filter(|n| n.is_finite())
                .map(ParamValue::Number),
            ParamType::Bool => match text {
                "true" => Some(ParamValue::Bool(true)),
                "false" => Some(ParamValue::Bool(false)),
                _ => None,
            },
            ParamType::Enum(labels) => labels
                .iter()
                .find(|l| *l == text)
                .map(|l| ParamValue::Enum(l.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
    Enum(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Number(n) => write!(f, "{n}"),
            ParamValue::Enum(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: ParameterId,
    pub ty: ParamType,
    pub unit: Option<String>,
}

static PHASE_TYPE: LazyLock<ParamType> = LazyLock::new(|| {
    ParamType::Enum(FlightPhase::ALL.iter().map(|p| p.as_str().to_string()).collect())
});
static BOOL_TYPE: ParamType = ParamType::Bool;

/// Declared parameters, keyed by name. `PHASE` and `CHECK_ALL_DONE` are
/// reserved pseudo-parameters answered by [`Registry::type_of`] without a
/// declaration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    params: BTreeMap<ParameterId, ParamDecl>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_reserved(name: &str) -> bool {
        name == PHASE_PARAM || name == CHECK_ALL_DONE_PARAM
    }

    /// Adds a declaration; returns the rejected declaration when the name
    /// is already taken or reserved.
    pub fn declare(&mut self, decl: ParamDecl) -> Result<(), ParamDecl> {
        if Self::is_reserved(decl.name.as_str()) || self.params.contains_key(&decl.name) {
            return Err(decl);
        }
        self.params.insert(decl.name.clone(), decl);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamDecl> {
        self.params.get(name)
    }

    pub fn type_of(&self, name: &str) -> Option<&ParamType> {
        match name {
            PHASE_PARAM => Some(&PHASE_TYPE),
            CHECK_ALL_DONE_PARAM => Some(&BOOL_TYPE),
            _ => self.params.get(name).map(|d| &d.ty),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.type_of(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamDecl> {
        self.params.values()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// One snapshot of the sensed flight parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub tick: u64,
    pub phase: FlightPhase,
    pub values: BTreeMap<ParameterId, ParamValue>,
}

impl FlightState {
    pub fn new(tick: u64, phase: FlightPhase) -> Self {
        Self { tick, phase, values: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.set(name, value);
        self
    }

    /// Sets a value. Panics on a malformed parameter name; callers that
    /// handle untrusted names should go through [`ParameterId::new`].
    pub fn set(&mut self, name: &str, value: ParamValue) {
        let id = ParameterId::new(name).expect("valid parameter name");
        self.values.insert(id, value);
    }

    /// Value of a parameter, with `PHASE` answered from the phase field.
    pub fn get(&self, name: &str) -> Option<ParamValue> {
        if name == PHASE_PARAM {
            return Some(ParamValue::Enum(self.phase.as_str().to_string()));
        }
        self.values.get(name).cloned()
    }

    /// Canonical single-line rendering: `phase=<PHASE> NAME=value ...`.
    pub fn canonical_text(&self) -> String {
        let mut out = format!("phase={}", self.phase);
        for (k, v) in &self.values {
            out.push(' ');
            out.push_str(k.as_str());
            out.push('=');
            out.push_str(&v.to_string());
        }
        out
    }

    /// Inverse of [`FlightState::canonical_text`], typed against `registry`.
    pub fn parse_canonical(tick: u64, text: &str, registry: &Registry) -> Result<Self, String> {
        let mut phase = None;
        let mut values = BTreeMap::new();
        for item in text.split_whitespace() {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("expected NAME=value, got `{item}`"))?;
            if k == "phase" {
                phase = Some(v.parse::<FlightPhase>().map_err(|e| e.to_string())?);
                continue;
            }
            let ty = registry
                .get(k)
                .map(|d| &d.ty)
                .ok_or_else(|| format!("unknown parameter `{k}`"))?;
            let value = ty
                .parse_value(v)
                .ok_or_else(|| format!("invalid value `{v}` for `{k}`"))?;
            let id = ParameterId::new(k).map_err(|e| e.to_string())?;
            values.insert(id, value);
        }
        let phase = phase.ok_or_else(|| "missing phase=".to_string())?;
        Ok(Self { tick, phase, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Action,
    Check,
    Note,
    Restriction,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] =
        [ActionKind::Action, ActionKind::Check, ActionKind::Note, ActionKind::Restriction];

    /// Notes and restrictions are informational and never completed.
    pub fn is_completable(self) -> bool {
        matches!(self, ActionKind::Action | ActionKind::Check)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Action => "action",
            ActionKind::Check => "check",
            ActionKind::Note => "note",
            ActionKind::Restriction => "restriction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionStatus {
    ToDo,
    DoneAuto,
    DoneManual,
    Postponed,
    NotApplicable,
}

impl ActionStatus {
    pub const ALL: [ActionStatus; 5] = [
        ActionStatus::ToDo,
        ActionStatus::DoneAuto,
        ActionStatus::DoneManual,
        ActionStatus::Postponed,
        ActionStatus::NotApplicable,
    ];

    pub fn is_done(self) -> bool {
        matches!(self, ActionStatus::DoneAuto | ActionStatus::DoneManual)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionStatus::ToDo => "ToDo",
            ActionStatus::DoneAuto => "DoneAuto",
            ActionStatus::DoneManual => "DoneManual",
            ActionStatus::Postponed => "Postponed",
            ActionStatus::NotApplicable => "NotApplicable",
        }
    }
}

impl fmt::Display for ActionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What can move an action from one status to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatusTrigger {
    MarkDone,
    Wait,
    AutoDetected,
    BecameInapplicable,
    BecameApplicable,
}

impl StatusTrigger {
    pub const ALL: [StatusTrigger; 5] = [
        StatusTrigger::MarkDone,
        StatusTrigger::Wait,
        StatusTrigger::AutoDetected,
        StatusTrigger::BecameInapplicable,
        StatusTrigger::BecameApplicable,
    ];
}

/// The closed status transition matrix. `None` means the transition is
/// illegal.
pub fn transition(from: ActionStatus, trigger: StatusTrigger) -> Option<ActionStatus> {
    use ActionStatus::*;
    use StatusTrigger::*;
    match (from, trigger) {
        (ToDo, MarkDone) | (Postponed, MarkDone) => Some(DoneManual),
        (ToDo, Wait) => Some(Postponed),
        (ToDo, AutoDetected) | (Postponed, AutoDetected) => Some(DoneAuto),
        (ToDo, BecameInapplicable) => Some(NotApplicable),
        (NotApplicable, BecameApplicable) => Some(ToDo),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub id: ActionId,
    pub kind: ActionKind,
    pub label: String,
    pub level2: Option<String>,
    pub level3: Option<String>,
    pub auto_detect: Option<ConditionExpr>,
    pub applicability: Option<ConditionExpr>,
}

impl Action {
    pub fn new(id: &str, kind: ActionKind, label: &str) -> Self {
        Self {
            id: ActionId::new(id).expect("valid action id"),
            kind,
            label: label.to_string(),
            level2: None,
            level3: None,
            auto_detect: None,
            applicability: None,
        }
    }

    /// Level-1 text is the action line itself.
    pub fn level1(&self) -> &str {
        &self.label
    }

    pub fn info_text(&self, level: u8) -> Result<Option<&str>, ModelError> {
        match level {
            1 => Ok(Some(&self.label)),
            2 => Ok(self.level2.as_deref()),
            3 => Ok(self.level3.as_deref()),
            other => Err(ModelError::InvalidLevel(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbnormalLink {
    pub condition: ConditionExpr,
    pub target: ProcedureId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IBlock {
    pub id: IBlockId,
    pub actions: Vec<Action>,
    pub trigger: ConditionExpr,
    pub context: ConditionExpr,
    pub goal: ConditionExpr,
    pub abnormal: Vec<AbnormalLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProcedureKind {
    Normal,
    Abnormal,
    Emergency,
    Checklist,
}

impl ProcedureKind {
    pub const ALL: [ProcedureKind; 4] = [
        ProcedureKind::Normal,
        ProcedureKind::Abnormal,
        ProcedureKind::Emergency,
        ProcedureKind::Checklist,
    ];

    /// Lower is more urgent.
    pub fn default_priority(self) -> i32 {
        match self {
            ProcedureKind::Emergency => 0,
            ProcedureKind::Abnormal => 1,
            ProcedureKind::Normal => 2,
            ProcedureKind::Checklist => 3,
        }
    }

    /// Abnormal and emergency procedures announce themselves with a pop-up;
    /// normal procedures and checklists are simply activated.
    pub fn pops_up(self) -> bool {
        matches!(self, ProcedureKind::Abnormal | ProcedureKind::Emergency)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ProcedureKind::Normal => "normal",
            ProcedureKind::Abnormal => "abnormal",
            ProcedureKind::Emergency => "emergency",
            ProcedureKind::Checklist => "checklist",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procedure {
    pub id: ProcedureId,
    pub title: String,
    pub kind: ProcedureKind,
    pub phase: FlightPhase,
    pub iblocks: Vec<IBlock>,
    pub embedded_links: Vec<ProcedureId>,
    pub priority_override: Option<i32>,
    /// Also announced on the (simulated) ECAM channel.
    pub ecam: bool,
}

impl Procedure {
    pub fn priority(&self) -> i32 {
        self.priority_override.unwrap_or_else(|| self.kind.default_priority())
    }
}

/// `PROC/IBLOCK/ACTION`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionRef {
    pub procedure: ProcedureId,
    pub iblock: IBlockId,
    pub action: ActionId,
}

/// `PROC/IBLOCK`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IBlockRef {
    pub procedure: ProcedureId,
    pub iblock: IBlockId,
}

impl fmt::Display for ActionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.procedure, self.iblock, self.action)
    }
}

impl fmt::Display for IBlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.procedure, self.iblock)
    }
}

impl FromStr for ActionRef {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let [p, i, a] = parts.as_slice() else {
            return Err(ModelError::MalformedRef(s.to_string()));
        };
        Ok(ActionRef {
            procedure: p.parse()?,
            iblock: i.parse()?,
            action: a.parse()?,
        })
    }
}

impl FromStr for IBlockRef {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (p, i) = s.split_once('/').ok_or_else(|| ModelError::MalformedRef(s.to_string()))?;
        Ok(IBlockRef { procedure: p.parse()?, iblock: i.parse()? })
    }
}

impl TryFrom<String> for ActionRef {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ActionRef> for String {
    fn from(r: ActionRef) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for IBlockRef {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<IBlockRef> for String {
    fn from(r: IBlockRef) -> String {
        r.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        assert!(ParameterId::new("FLAPS_POS").is_ok());
        assert!(ParameterId::new("N1_ENG1").is_ok());
        assert!(ParameterId::new("").is_err());
        assert!(ParameterId::new("1ABC").is_err());
        assert!(ParameterId::new("flaps").is_err());
        assert!(ParameterId::new("FLAPS-POS").is_err());
    }

    #[test]
    fn info_levels() {
        let mut a = Action::new("A1", ActionKind::Action, "APU BLEED ON");
        assert_eq!(a.info_text(1).unwrap(), Some("APU BLEED ON"));
        assert_eq!(a.info_text(2).unwrap(), None);
        assert_eq!(a.info_text(3).unwrap(), None);
        assert_eq!(a.info_text(0), Err(ModelError::InvalidLevel(0)));
        assert_eq!(a.info_text(4), Err(ModelError::InvalidLevel(4)));
        a.level2 = Some("Supplies air".into());
        assert_eq!(a.info_text(2).unwrap(), Some("Supplies air"));
    }

    #[test]
    fn registry_rejects_duplicates_and_reserved() {
        let mut r = Registry::new();
        let decl = |n: &str| ParamDecl { name: ParameterId::new(n).unwrap(), ty: ParamType::Bool, unit: None };
        assert!(r.declare(decl("A")).is_ok());
        assert!(r.declare(decl("A")).is_err());
        assert!(r.declare(decl("PHASE")).is_err());
        assert!(r.declare(decl("CHECK_ALL_DONE")).is_err());
        assert!(r.type_of("PHASE").unwrap().is_enum());
        assert_eq!(r.type_of("CHECK_ALL_DONE"), Some(&ParamType::Bool));
    }

    #[test]
    fn refs_round_trip() {
        let r: ActionRef = "FLAPS_SET/FS_1/A1".parse().unwrap();
        assert_eq!(r.to_string(), "FLAPS_SET/FS_1/A1");
        assert!("FLAPS_SET/FS_1".parse::<ActionRef>().is_err());
        let b: IBlockRef = "FLAPS_SET/FS_1".parse().unwrap();
        assert_eq!(b.to_string(), "FLAPS_SET/FS_1");
    }

    #[test]
    fn canonical_state_text() {
        let mut r = Registry::new();
        r.declare(ParamDecl {
            name: ParameterId::new("FLAPS_POS").unwrap(),
            ty: ParamType::Enum(vec!["UP".into(), "CONF1".into()]),
            unit: None,
        })
        .unwrap();
        r.declare(ParamDecl { name: ParameterId::new("IAS").unwrap(), ty: ParamType::Number, unit: None })
            .unwrap();
        let s = FlightState::new(4, FlightPhase::FinalApproach)
            .with("FLAPS_POS", ParamValue::Enum("CONF1".into()))
            .with("IAS", ParamValue::Number(177.5));
        let text = s.canonical_text();
        assert_eq!(text, "phase=FINAL_APPROACH FLAPS_POS=CONF1 IAS=177.5");
        assert_eq!(FlightState::parse_canonical(4, &text, &r).unwrap(), s);
    }

    #[test]
    fn phase_navigation() {
        assert_eq!(FlightPhase::InitialApproach.next(), Some(FlightPhase::FinalApproach));
        assert_eq!(FlightPhase::CockpitPrep.prev(), None);
        assert_eq!(FlightPhase::GoAround.next(), None);
    }
}
