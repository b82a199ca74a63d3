//! Condition expressions over flight state, evaluated with three-valued
//! (Kleene) logic so that undetectable parameters never fire a trigger.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FlightState, ParamType, ParamValue, ParameterId, Registry, CHECK_ALL_DONE_PARAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionExpr {
    True,
    Compare { param: ParameterId, op: CmpOp, value: ParamValue },
    CompareParams { left: ParameterId, op: CmpOp, right: ParameterId },
    /// True once the child has held for the last `ticks` ticks.
    Sustained { ticks: u32, expr: Box<ConditionExpr> },
    And(Vec<ConditionExpr>),
    Or(Vec<ConditionExpr>),
    Not(Box<ConditionExpr>),
}

impl ConditionExpr {
    pub fn falsum() -> Self {
        ConditionExpr::Not(Box::new(ConditionExpr::True))
    }

    pub fn cmp(param: &str, op: CmpOp, value: ParamValue) -> Self {
        ConditionExpr::Compare { param: ParameterId::new(param).expect("valid parameter"), op, value }
    }

    pub fn cmp_params(left: &str, op: CmpOp, right: &str) -> Self {
        ConditionExpr::CompareParams {
            left: ParameterId::new(left).expect("valid parameter"),
            op,
            right: ParameterId::new(right).expect("valid parameter"),
        }
    }

    pub fn sustained(ticks: u32, expr: ConditionExpr) -> Self {
        ConditionExpr::Sustained { ticks, expr: Box::new(expr) }
    }

    pub fn negate(expr: ConditionExpr) -> Self {
        ConditionExpr::Not(Box::new(expr))
    }

    /// Visits every parameter the expression reads.
    pub fn params(&self) -> Vec<&ParameterId> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a ParameterId>) {
        match self {
            ConditionExpr::True => {}
            ConditionExpr::Compare { param, .. } => out.push(param),
            ConditionExpr::CompareParams { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            ConditionExpr::Sustained { expr, .. } | ConditionExpr::Not(expr) => {
                expr.collect_params(out)
            }
            ConditionExpr::And(xs) | ConditionExpr::Or(xs) => {
                xs.iter().for_each(|x| x.collect_params(out))
            }
        }
    }

    /// Longest `Sustained` window in the tree, 0 if none.
    pub fn max_sustained(&self) -> u32 {
        match self {
            ConditionExpr::True
            | ConditionExpr::Compare { .. }
            | ConditionExpr::CompareParams { .. } => 0,
            ConditionExpr::Sustained { ticks, expr } => (*ticks).max(expr.max_sustained()),
            ConditionExpr::Not(expr) => expr.max_sustained(),
            ConditionExpr::And(xs) | ConditionExpr::Or(xs) => {
                xs.iter().map(|x| x.max_sustained()).max().unwrap_or(0)
            }
        }
    }

    pub fn has_sustained(&self) -> bool {
        self.max_sustained() > 0
    }

    /// Constant value of a parameter-free expression.
    pub fn constant_value(&self) -> Option<bool> {
        match self {
            ConditionExpr::True => Some(true),
            ConditionExpr::Compare { .. } | ConditionExpr::CompareParams { .. } => None,
            ConditionExpr::Sustained { .. } => None,
            ConditionExpr::Not(x) => x.constant_value().map(|b| !b),
            ConditionExpr::And(xs) => {
                let mut all = true;
                for x in xs {
                    match x.constant_value() {
                        Some(false) => return Some(false),
                        Some(true) => {}
                        None => all = false,
                    }
                }
                all.then_some(true)
            }
            ConditionExpr::Or(xs) => {
                let mut all = true;
                for x in xs {
                    match x.constant_value() {
                        Some(true) => return Some(true),
                        Some(false) => {}
                        None => all = false,
                    }
                }
                all.then_some(false)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriState {
    True,
    False,
    Unknown,
}

impl TriState {
    pub fn from_bool(b: bool) -> Self {
        if b {
            TriState::True
        } else {
            TriState::False
        }
    }

    pub fn is_true(self) -> bool {
        self == TriState::True
    }

    pub fn is_false(self) -> bool {
        self == TriState::False
    }

    pub fn not(self) -> Self {
        match self {
            TriState::True => TriState::False,
            TriState::False => TriState::True,
            TriState::Unknown => TriState::Unknown,
        }
    }

    pub fn and(self, other: Self) -> Self {
        match (self, other) {
            (TriState::False, _) | (_, TriState::False) => TriState::False,
            (TriState::True, TriState::True) => TriState::True,
            _ => TriState::Unknown,
        }
    }

    pub fn or(self, other: Self) -> Self {
        match (self, other) {
            (TriState::True, _) | (_, TriState::True) => TriState::True,
            (TriState::False, TriState::False) => TriState::False,
            _ => TriState::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

/// Evaluation environment. `history` is ordered oldest first and ends at
/// the current state; `check_all_done` answers the `CHECK_ALL_DONE`
/// pseudo-parameter for the current state only.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv<'a> {
    pub registry: &'a Registry,
    pub history: &'a [FlightState],
    pub check_all_done: Option<bool>,
}

impl<'a> EvalEnv<'a> {
    pub fn new(registry: &'a Registry, history: &'a [FlightState]) -> Self {
        Self { registry, history, check_all_done: None }
    }

    pub fn with_check_all_done(mut self, done: bool) -> Self {
        self.check_all_done = Some(done);
        self
    }

    pub fn eval(&self, expr: &ConditionExpr) -> Result<TriState, EvalError> {
        check_params(expr, self.registry)?;
        Ok(self.eval_at(expr, self.history.len()))
    }

    /// Evaluates against `history[..len]`, i.e. as if state `len - 1` were
    /// the latest one.
    fn eval_at(&self, expr: &ConditionExpr, len: usize) -> TriState {
        match expr {
            ConditionExpr::True => TriState::True,
            ConditionExpr::Compare { param, op, value } => {
                match self.lookup(param.as_str(), len) {
                    Some(actual) => self.compare(param.as_str(), &actual, *op, value),
                    None => TriState::Unknown,
                }
            }
            ConditionExpr::CompareParams { left, op, right } => {
                match (self.lookup(left.as_str(), len), self.lookup(right.as_str(), len)) {
                    (Some(l), Some(r)) => self.compare(left.as_str(), &l, *op, &r),
                    _ => TriState::Unknown,
                }
            }
            ConditionExpr::Sustained { ticks, expr } => self.sustained(expr, *ticks, len),
            ConditionExpr::And(xs) => xs
                .iter()
                .fold(TriState::True, |acc, x| acc.and(self.eval_at(x, len))),
            ConditionExpr::Or(xs) => xs
                .iter()
                .fold(TriState::False, |acc, x| acc.or(self.eval_at(x, len))),
            ConditionExpr::Not(x) => self.eval_at(x, len).not(),
        }
    }

    fn lookup(&self, name: &str, len: usize) -> Option<ParamValue> {
        if name == CHECK_ALL_DONE_PARAM {
            // Only known for the current state.
            return if len == self.history.len() {
                self.check_all_done.map(ParamValue::Bool)
            } else {
                None
            };
        }
        let state = self.history.get(len.checked_sub(1)?)?;
        state.get(name)
    }

    fn compare(&self, name: &str, left: &ParamValue, op: CmpOp, right: &ParamValue) -> TriState {
        let ty = self.registry.type_of(name);
        let ord = match (left, right) {
            (ParamValue::Number(a), ParamValue::Number(b)) => a.partial_cmp(b),
            (ParamValue::Bool(a), ParamValue::Bool(b)) => {
                if op.is_ordering() {
                    None
                } else {
                    Some(a.cmp(b))
                }
            }
            (ParamValue::Enum(a), ParamValue::Enum(b)) => {
                if !op.is_ordering() {
                    Some(if a == b { Ordering::Equal } else { Ordering::Less })
                } else {
                    match ty {
                        Some(t @ ParamType::Enum(_)) => {
                            match (t.label_index(a), t.label_index(b)) {
                                (Some(x), Some(y)) => Some(x.cmp(&y)),
                                _ => None,
                            }
                        }
                        _ => None,
                    }
                }
            }
            _ => None,
        };
        match ord {
            Some(ord) => TriState::from_bool(op.holds(ord)),
            None => TriState::Unknown,
        }
    }

    /// The child must hold in every state in effect during the window
    /// `[now - ticks + 1, now]`; a state stays in effect until the next
    /// one arrives.
    fn sustained(&self, child: &ConditionExpr, ticks: u32, len: usize) -> TriState {
        if len == 0 {
            return TriState::Unknown;
        }
        match self.eval_at(child, len) {
            TriState::Unknown => return TriState::Unknown,
            TriState::False => return TriState::False,
            TriState::True => {}
        }
        let now = self.history[len - 1].tick;
        let Some(window_start) = (now + 1).checked_sub(u64::from(ticks)) else {
            return TriState::False;
        };
        for k in (1..=len).rev() {
            if !self.eval_at(child, k).is_true() {
                return TriState::False;
            }
            if self.history[k - 1].tick <= window_start {
                return TriState::True;
            }
        }
        TriState::False
    }
}

/// Checks that every referenced parameter is declared (or reserved).
pub fn check_params(expr: &ConditionExpr, registry: &Registry) -> Result<(), EvalError> {
    for p in expr.params() {
        if !registry.contains(p.as_str()) {
            return Err(EvalError::UnknownParameter(p.to_string()));
        }
    }
    Ok(())
}

/// Evaluates `expr` over `history` (oldest first, ending at now).
pub fn eval_condition(
    expr: &ConditionExpr,
    registry: &Registry,
    history: &[FlightState],
) -> Result<TriState, EvalError> {
    EvalEnv::new(registry, history).eval(expr)
}
