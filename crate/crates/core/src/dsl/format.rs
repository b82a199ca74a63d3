use std::fmt::Write;

use super::ProcedureSet;
use crate::condition::{CmpOp, ConditionExpr};
use crate::model::{ParamType, ParamValue, CHECK_ALL_DONE_PARAM};

const HEADER: &str = "# ocsis procedure set v1";

/// Renders an expression so that parsing it back yields the same tree.
/// Every binary node is parenthesised; single-child and empty
/// conjunctions use the `all(...)`/`any(...)` forms.
pub fn format_expr(expr: &ConditionExpr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

fn write_expr(out: &mut String, expr: &ConditionExpr) {
    match expr {
        ConditionExpr::True => out.push_str("true"),
        ConditionExpr::Not(inner) if **inner == ConditionExpr::True => out.push_str("false"),
        ConditionExpr::Not(inner) => {
            out.push_str("not ");
            write_expr(out, inner);
        }
        ConditionExpr::Compare { param, op: CmpOp::Eq, value: ParamValue::Bool(true) } => {
            let _ = write!(out, "({param})");
        }
        ConditionExpr::Compare { param, op, value } => {
            let _ = write!(out, "({param} {op} {value})");
        }
        ConditionExpr::CompareParams { left, op, right } => {
            let _ = write!(out, "({left} {op} {right})");
        }
        ConditionExpr::Sustained { ticks, expr } => {
            let _ = write!(out, "sustained {ticks} ");
            write_expr(out, expr);
        }
        ConditionExpr::And(items) | ConditionExpr::Or(items) => {
            let is_and = matches!(expr, ConditionExpr::And(_));
            if items.len() < 2 {
                out.push_str(if is_and { "all(" } else { "any(" });
                if let Some(x) = items.first() {
                    write_expr(out, x);
                }
                out.push(')');
                return;
            }
            out.push('(');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(if is_and { " and " } else { " or " });
                }
                write_expr(out, x);
            }
            out.push(')');
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn default_goal() -> ConditionExpr {
    ConditionExpr::cmp(CHECK_ALL_DONE_PARAM, CmpOp::Eq, ParamValue::Bool(true))
}

/// Canonical text of a whole set: parameters sorted by name, procedures in
/// declaration order, then entry tables. Default `trigger`, `context` and
/// `goal` lines are omitted.
pub fn canonical_format(set: &ProcedureSet) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');

    if !set.registry.is_empty() {
        out.push('\n');
    }
    for decl in set.registry.iter() {
        let _ = write!(out, "param {} ", decl.name);
        match &decl.ty {
            ParamType::Number => out.push_str("number"),
            ParamType::Bool => out.push_str("bool"),
            ParamType::Enum(labels) => {
                let _ = write!(out, "enum({})", labels.join(","));
            }
        }
        if let Some(unit) = &decl.unit {
            let _ = write!(out, " {unit}");
        }
        out.push('\n');
    }

    for p in &set.procedures {
        out.push('\n');
        let _ = write!(out, "procedure {} {} phase {}", p.id, p.kind.keyword(), p.phase);
        if let Some(prio) = p.priority_override {
            let _ = write!(out, " priority {prio}");
        }
        if p.ecam {
            out.push_str(" ecam");
        }
        out.push('\n');
        let _ = writeln!(out, "  title {}", quote(&p.title));
        for b in &p.iblocks {
            let _ = writeln!(out, "  iblock {}", b.id);
            if b.trigger != ConditionExpr::True {
                let _ = writeln!(out, "    trigger {}", format_expr(&b.trigger));
            }
            if b.context != ConditionExpr::True {
                let _ = writeln!(out, "    context {}", format_expr(&b.context));
            }
            for a in &b.actions {
                let _ = write!(out, "    {} {} {}", a.kind.keyword(), a.id, quote(&a.label));
                if let Some(t) = &a.level2 {
                    let _ = write!(out, " level2 {}", quote(t));
                }
                if let Some(t) = &a.level3 {
                    let _ = write!(out, " level3 {}", quote(t));
                }
                if let Some(e) = &a.auto_detect {
                    let _ = write!(out, " detect {}", format_expr(e));
                }
                if let Some(e) = &a.applicability {
                    let _ = write!(out, " applicable {}", format_expr(e));
                }
                out.push('\n');
            }
            if b.goal != default_goal() {
                let _ = writeln!(out, "    goal {}", format_expr(&b.goal));
            }
            for link in &b.abnormal {
                let _ = writeln!(out, "    abnormal {} -> {}", format_expr(&link.condition), link.target);
            }
        }
        for target in &p.embedded_links {
            let _ = writeln!(out, "  embed {target}");
        }
    }

    if !set.entries.is_empty() {
        out.push('\n');
    }
    for (phase, ids) in &set.entries {
        let _ = write!(out, "entry {phase}");
        for id in ids {
            let _ = write!(out, " {id}");
        }
        out.push('\n');
    }
    out
}
