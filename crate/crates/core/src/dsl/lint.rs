use std::collections::BTreeMap;

use super::{DiagCode, Diagnostic, ProcedureSet, Site, SourceSpan};
use crate::condition::{ConditionExpr, EvalEnv};
use crate::model::{
    FlightPhase, FlightState, ParamType, ParamValue, ParameterId, CHECK_ALL_DONE_PARAM,
    PHASE_PARAM,
};

/// Largest assignment space the satisfiability check will enumerate.
pub const MAX_ASSIGNMENTS: u64 = 100_000;

/// Warnings for a set that already passed validation.
pub fn lint(set: &ProcedureSet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let span = |site: &Site| {
        set.origin(site).cloned().unwrap_or_else(|| SourceSpan::new("<generated>", 1, 1, 0))
    };

    for (pi, p) in set.procedures.iter().enumerate() {
        if p.kind.pops_up() {
            if let Some(first) = p.iblocks.first() {
                let start = ConditionExpr::And(vec![first.trigger.clone(), first.context.clone()]);
                if start.constant_value() == Some(true) {
                    out.push(Diagnostic::new(
                        DiagCode::AlwaysTriggers,
                        span(&Site::Procedure(pi)),
                        format!("`{}` triggers in every state; use `trigger false` for link-only procedures", p.id),
                    ));
                }
            }
        }
    }

    for (site, expr) in condition_sites(set) {
        for label in out_of_domain_labels(set, expr) {
            out.push(Diagnostic::new(DiagCode::LabelOutOfDomain, span(&site), label));
        }
        if expr.constant_value().is_some() {
            continue;
        }
        match satisfiable(set, expr) {
            Analysis::Satisfiable => {}
            Analysis::Unsatisfiable => out.push(Diagnostic::new(
                DiagCode::Unsatisfiable,
                span(&site),
                "condition can never be true",
            )),
            Analysis::TooLarge(n) => out.push(Diagnostic::new(
                DiagCode::AnalysisSkipped,
                span(&site),
                format!("satisfiability not checked: {n} assignments exceed {MAX_ASSIGNMENTS}"),
            )),
        }
    }
    out.sort();
    out
}

fn condition_sites(set: &ProcedureSet) -> Vec<(Site, &ConditionExpr)> {
    let mut out = Vec::new();
    for (pi, p) in set.procedures.iter().enumerate() {
        for (bi, b) in p.iblocks.iter().enumerate() {
            out.push((Site::Trigger(pi, bi), &b.trigger));
            out.push((Site::Context(pi, bi), &b.context));
            out.push((Site::Goal(pi, bi), &b.goal));
            for (k, link) in b.abnormal.iter().enumerate() {
                out.push((Site::Abnormal(pi, bi, k), &link.condition));
            }
            for (ai, a) in b.actions.iter().enumerate() {
                if let Some(e) = &a.auto_detect {
                    out.push((Site::Detect(pi, bi, ai), e));
                }
                if let Some(e) = &a.applicability {
                    out.push((Site::Applicable(pi, bi, ai), e));
                }
            }
        }
    }
    out
}

fn out_of_domain_labels(set: &ProcedureSet, expr: &ConditionExpr) -> Vec<String> {
    let mut out = Vec::new();
    walk(expr, &mut |e| {
        if let ConditionExpr::Compare { param, value: ParamValue::Enum(label), .. } = e {
            if let Some(ty) = set.registry.type_of(param.as_str()) {
                if ty.label_index(label).is_none() {
                    out.push(format!("`{label}` is not a label of `{param}`; the comparison is constant"));
                }
            }
        }
    });
    out
}

fn walk<'a>(expr: &'a ConditionExpr, f: &mut impl FnMut(&'a ConditionExpr)) {
    f(expr);
    match expr {
        ConditionExpr::Sustained { expr, .. } | ConditionExpr::Not(expr) => walk(expr, f),
        ConditionExpr::And(xs) | ConditionExpr::Or(xs) => xs.iter().for_each(|x| walk(x, f)),
        _ => {}
    }
}

/// Replaces every `sustained N E` by `E`: over a constant history the two
/// agree, so satisfiability is unchanged.
fn strip_sustained(expr: &ConditionExpr) -> ConditionExpr {
    match expr {
        ConditionExpr::Sustained { expr, .. } => strip_sustained(expr),
        ConditionExpr::Not(x) => ConditionExpr::negate(strip_sustained(x)),
        ConditionExpr::And(xs) => ConditionExpr::And(xs.iter().map(strip_sustained).collect()),
        ConditionExpr::Or(xs) => ConditionExpr::Or(xs.iter().map(strip_sustained).collect()),
        other => other.clone(),
    }
}

#[derive(Debug, PartialEq)]
enum Analysis {
    Satisfiable,
    Unsatisfiable,
    TooLarge(u64),
}

/// Candidate values per parameter. Numbers are represented by every
/// constant they are compared with, plus points between and beyond them,
/// which covers each region the comparisons can distinguish.
fn candidates(set: &ProcedureSet, expr: &ConditionExpr) -> BTreeMap<ParameterId, Vec<ParamValue>> {
    let mut constants: Vec<f64> = Vec::new();
    walk(expr, &mut |e| {
        if let ConditionExpr::Compare { value: ParamValue::Number(n), .. } = e {
            constants.push(*n);
        }
    });
    constants.sort_by(f64::total_cmp);
    constants.dedup();
    let mut numbers = Vec::new();
    match (constants.first(), constants.last()) {
        (Some(lo), Some(hi)) => {
            numbers.push(lo - 1.0);
            for w in constants.windows(2) {
                numbers.push(w[0]);
                numbers.push((w[0] + w[1]) / 2.0);
            }
            numbers.push(*hi);
            numbers.push(hi + 1.0);
        }
        _ => numbers.push(0.0),
    }

    let mut out = BTreeMap::new();
    for param in expr.params() {
        let Some(ty) = set.registry.type_of(param.as_str()) else { continue };
        let values = match ty {
            ParamType::Number => numbers.iter().copied().map(ParamValue::Number).collect(),
            other => other.domain_values().expect("finite domain"),
        };
        out.insert(param.clone(), values);
    }
    out
}

fn satisfiable(set: &ProcedureSet, expr: &ConditionExpr) -> Analysis {
    let expr = strip_sustained(expr);
    let cands: Vec<(ParameterId, Vec<ParamValue>)> = candidates(set, &expr).into_iter().collect();
    let total = cands
        .iter()
        .try_fold(1u64, |acc, (_, v)| acc.checked_mul(v.len() as u64))
        .unwrap_or(u64::MAX);
    if total > MAX_ASSIGNMENTS {
        return Analysis::TooLarge(total);
    }
    let mut idx = vec![0usize; cands.len()];
    loop {
        let mut state = FlightState::new(1, FlightPhase::CockpitPrep);
        let mut check_all_done = None;
        for ((name, values), &i) in cands.iter().zip(&idx) {
            let v = values[i].clone();
            match name.as_str() {
                PHASE_PARAM => {
                    if let ParamValue::Enum(l) = &v {
                        state.phase = l.parse().expect("phase label");
                    }
                }
                CHECK_ALL_DONE_PARAM => {
                    if let ParamValue::Bool(b) = v {
                        check_all_done = Some(b);
                    }
                }
                _ => state.set(name.as_str(), v),
            }
        }
        let history = [state];
        let mut env = EvalEnv::new(&set.registry, &history);
        if let Some(b) = check_all_done {
            env = env.with_check_all_done(b);
        }
        if env.eval(&expr).is_ok_and(|t| t.is_true()) {
            return Analysis::Satisfiable;
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Analysis::Unsatisfiable;
            }
            idx[k] += 1;
            if idx[k] < cands[k].1.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn codes(src: &str) -> Vec<(DiagCode, usize)> {
        let set = parse(src).expect("valid set");
        lint(&set).into_iter().map(|d| (d.code, d.span.line)).collect()
    }

    const REG: &str = "param F enum(UP,CONF1,FULL)\nparam B bool\nparam IAS number\n";

    #[test]
    fn clean_set_has_no_warnings() {
        let c = codes(&format!(
            "{REG}procedure P abnormal phase CRUISE\n iblock I\n  trigger (F == UP) and B\n  action A \"a\" detect (IAS > 200)\n  goal (CHECK_ALL_DONE)\n"
        ));
        assert!(c.is_empty(), "{c:?}");
    }

    #[test]
    fn always_triggering_popup() {
        let c = codes(&format!("{REG}procedure P abnormal phase CRUISE\n iblock I\n"));
        assert_eq!(c, vec![(DiagCode::AlwaysTriggers, 4)]);
        let c = codes(&format!("{REG}procedure P normal phase CRUISE\n iblock I\n"));
        assert!(c.is_empty());
    }

    #[test]
    fn unsatisfiable_conditions() {
        let c = codes(&format!(
            "{REG}procedure P normal phase CRUISE\n iblock I\n  trigger B and not B\n  context (IAS > 5 and IAS < 3)\n  goal (F > FULL)\n"
        ));
        assert_eq!(
            c,
            vec![(DiagCode::Unsatisfiable, 6), (DiagCode::Unsatisfiable, 7), (DiagCode::Unsatisfiable, 8)]
        );
    }

    #[test]
    fn sustained_and_pseudo_parameters() {
        let c = codes(&format!(
            "{REG}procedure P normal phase CRUISE\n iblock I\n  trigger sustained 4 (PHASE == LANDING)\n  goal (CHECK_ALL_DONE) and not (CHECK_ALL_DONE)\n"
        ));
        assert_eq!(c, vec![(DiagCode::Unsatisfiable, 7)]);
    }

    #[test]
    fn label_out_of_domain() {
        let c = codes(&format!("{REG}procedure P normal phase CRUISE\n iblock I\n  trigger (F == CONF9)\n"));
        assert_eq!(c, vec![(DiagCode::Unsatisfiable, 6), (DiagCode::LabelOutOfDomain, 6)]);
    }

    #[test]
    fn large_spaces_are_skipped() {
        let mut src = String::new();
        let mut cond = Vec::new();
        for i in 0..17 {
            src.push_str(&format!("param B{i} bool\n"));
            cond.push(format!("B{i}"));
        }
        src.push_str(&format!("procedure P normal phase CRUISE\n iblock I\n  trigger {}\n", cond.join(" and ")));
        let c = codes(&src);
        assert_eq!(c, vec![(DiagCode::AnalysisSkipped, 20)]);
    }
}
