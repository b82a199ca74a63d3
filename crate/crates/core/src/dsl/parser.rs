use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex_line, Tok, Token};
use super::{DiagCode, Diagnostic, ProcedureSet, Site, Source, SourceSpan};
use crate::condition::{CmpOp, ConditionExpr};
use crate::model::{
    is_identifier, AbnormalLink, Action, ActionId, ActionKind, FlightPhase, IBlock, IBlockId,
    ParamDecl, ParamType, ParamValue, ParameterId, Procedure, ProcedureId, ProcedureKind, Registry,
    CHECK_ALL_DONE_PARAM,
};

const MAX_SUSTAINED: f64 = 100_000.0;

/// Parses a single anonymous source.
pub fn parse(text: &str) -> Result<ProcedureSet, Vec<Diagnostic>> {
    parse_sources(&[Source::new("<input>", text)])
}

/// Parses and validates several sources as one set. On failure every
/// collected ERROR diagnostic is returned, sorted by position.
pub fn parse_sources(sources: &[Source]) -> Result<ProcedureSet, Vec<Diagnostic>> {
    let mut p = Parser::default();
    for src in sources {
        p.parse_source(src);
    }
    let mut diags = std::mem::take(&mut p.diags);
    let result = build(p.file, &mut diags);
    if diags.is_empty() {
        Ok(result)
    } else {
        diags.sort();
        diags.dedup();
        Err(diags)
    }
}

// ---------------------------------------------------------------------------
// Syntax tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Operand {
    Ident(String),
    Number(f64),
    Bool(bool),
}

#[derive(Debug, Clone)]
enum RawExpr {
    True,
    False,
    Bare { name: String, span: SourceSpan },
    Cmp { name: String, span: SourceSpan, op: CmpOp, rhs: Operand, rhs_span: SourceSpan },
    Sustained { ticks: f64, span: SourceSpan, inner: Box<RawExpr> },
    And(Vec<RawExpr>),
    Or(Vec<RawExpr>),
    Not(Box<RawExpr>),
}

#[derive(Debug)]
struct RawParam {
    name: String,
    span: SourceSpan,
    ty: ParamType,
    labels_span: Option<SourceSpan>,
    unit: Option<String>,
}

#[derive(Debug)]
struct RawAction {
    id: String,
    span: SourceSpan,
    kind: ActionKind,
    label: String,
    level2: Option<String>,
    level3: Option<String>,
    detect: Option<(RawExpr, SourceSpan)>,
    applicable: Option<(RawExpr, SourceSpan)>,
}

#[derive(Debug)]
struct RawIBlock {
    id: String,
    span: SourceSpan,
    trigger: Option<(RawExpr, SourceSpan)>,
    context: Option<(RawExpr, SourceSpan)>,
    goal: Option<(RawExpr, SourceSpan)>,
    abnormal: Vec<(RawExpr, SourceSpan, String, SourceSpan)>,
    actions: Vec<RawAction>,
}

#[derive(Debug)]
struct RawProcedure {
    id: String,
    span: SourceSpan,
    kind: ProcedureKind,
    phase: FlightPhase,
    priority: Option<i32>,
    ecam: bool,
    title: Option<String>,
    iblocks: Vec<RawIBlock>,
    embeds: Vec<(String, SourceSpan)>,
}

#[derive(Debug)]
struct RawEntry {
    phase: FlightPhase,
    span: SourceSpan,
    procs: Vec<(String, SourceSpan)>,
}

#[derive(Debug, Default)]
struct RawFile {
    params: Vec<RawParam>,
    procedures: Vec<RawProcedure>,
    entries: Vec<RawEntry>,
}

// ---------------------------------------------------------------------------
// Line cursor
// ---------------------------------------------------------------------------

struct Line<'a> {
    file: &'a str,
    line: usize,
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'a> Line<'a> {
    fn span(&self, t: &Token) -> SourceSpan {
        SourceSpan::new(self.file, self.line, t.column, t.length)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    /// Span of the current token, or of the last one at end of line.
    fn here(&self) -> SourceSpan {
        let t = self.tokens.get(self.pos).or_else(|| self.tokens.last()).expect("non-empty line");
        self.span(t)
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let found = match self.tokens.get(self.pos) {
            Some(t) => t.tok.describe(),
            None => "end of line".to_string(),
        };
        Diagnostic::new(DiagCode::Syntax, self.here(), format!("expected {expected}, found {found}"))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.peek_word() == Some(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<SourceSpan> {
        if self.peek() == Some(&tok) {
            let t = self.next().unwrap();
            Ok(self.span(&t))
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expect_word(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek() {
            Some(Tok::Word(_)) => {
                let t = self.next().unwrap();
                let span = self.span(&t);
                let Tok::Word(w) = t.tok else { unreachable!() };
                Ok((w, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        let (w, span) = self.expect_word(what)?;
        if !is_identifier(&w) {
            return Err(Diagnostic::new(
                DiagCode::BadIdentifier,
                span,
                format!("invalid {what} `{w}`: expected [A-Z][A-Z0-9_]*"),
            ));
        }
        Ok((w, span))
    }

    fn expect_string(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Str(_)) => {
                let Tok::Str(s) = self.next().unwrap().tok else { unreachable!() };
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn expect_number(&mut self, what: &str) -> PResult<(f64, SourceSpan)> {
        match self.peek() {
            Some(Tok::Number(_)) => {
                let t = self.next().unwrap();
                let span = self.span(&t);
                let Tok::Number(n) = t.tok else { unreachable!() };
                Ok((n, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn expect_phase(&mut self) -> PResult<FlightPhase> {
        let (w, span) = self.expect_word("flight phase")?;
        w.parse::<FlightPhase>()
            .map_err(|_| Diagnostic::new(DiagCode::Syntax, span, format!("unknown flight phase `{w}`")))
    }

    fn finish(&self) -> PResult<()> {
        if self.pos < self.tokens.len() {
            Err(self.unexpected("end of line"))
        } else {
            Ok(())
        }
    }

    // -- expressions -------------------------------------------------------

    fn expr(&mut self) -> PResult<RawExpr> {
        let mut items = vec![self.conjunction()?];
        while self.eat_word("or") {
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { RawExpr::Or(items) })
    }

    fn conjunction(&mut self) -> PResult<RawExpr> {
        let mut items = vec![self.unary()?];
        while self.eat_word("and") {
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { RawExpr::And(items) })
    }

    fn unary(&mut self) -> PResult<RawExpr> {
        if self.eat_word("not") {
            return Ok(RawExpr::Not(Box::new(self.unary()?)));
        }
        if self.peek_word() == Some("sustained") {
            self.pos += 1;
            let (ticks, span) = self.expect_number("sustained duration")?;
            let inner = self.unary()?;
            return Ok(RawExpr::Sustained { ticks, span, inner: Box::new(inner) });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<RawExpr> {
        if self.eat(&Tok::LParen) {
            let e = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(e);
        }
        let Some(word) = self.peek_word().map(str::to_string) else {
            return Err(self.unexpected("condition"));
        };
        match word.as_str() {
            "true" => {
                self.pos += 1;
                Ok(RawExpr::True)
            }
            "false" => {
                self.pos += 1;
                Ok(RawExpr::False)
            }
            "all" | "any" => {
                self.pos += 1;
                self.expect(Tok::LParen, "`(`")?;
                let mut items = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        items.push(self.expr()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RParen, "`,` or `)`")?;
                        break;
                    }
                }
                Ok(if word == "all" { RawExpr::And(items) } else { RawExpr::Or(items) })
            }
            w if is_identifier(w) => {
                let t = self.next().unwrap();
                let span = self.span(&t);
                if let Some(Tok::Op(op)) = self.peek().cloned() {
                    self.pos += 1;
                    let rhs_span = self.here();
                    let rhs = self.operand()?;
                    Ok(RawExpr::Cmp { name: word, span, op, rhs, rhs_span })
                } else {
                    Ok(RawExpr::Bare { name: word, span })
                }
            }
            _ => Err(self.unexpected("condition")),
        }
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.pos += 1;
                Ok(Operand::Number(n))
            }
            Some(Tok::Word(w)) if w == "true" || w == "false" => {
                self.pos += 1;
                Ok(Operand::Bool(w == "true"))
            }
            Some(Tok::Word(w)) if is_identifier(&w) => {
                self.pos += 1;
                Ok(Operand::Ident(w))
            }
            _ => Err(self.unexpected("parameter, label, number or boolean")),
        }
    }
}

// ---------------------------------------------------------------------------
// Statement parsing
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Parser {
    file: RawFile,
    diags: Vec<Diagnostic>,
}

enum Scope {
    Top,
    Procedure,
    /// Inside a procedure whose header failed to parse; swallow its body.
    Skipping,
}

fn is_top_keyword(w: &str) -> bool {
    matches!(w, "param" | "procedure" | "entry")
}

impl Parser {
    fn parse_source(&mut self, src: &Source) {
        let mut scope = Scope::Top;
        for (idx, text) in src.text.lines().enumerate() {
            let line_no = idx + 1;
            let tokens = match lex_line(text) {
                Ok(t) => t,
                Err(e) => {
                    self.diags.push(Diagnostic::new(
                        DiagCode::Syntax,
                        SourceSpan::new(&src.name, line_no, e.column, e.length),
                        e.message,
                    ));
                    continue;
                }
            };
            if tokens.is_empty() {
                continue;
            }
            let mut line = Line { file: &src.name, line: line_no, tokens, pos: 0 };
            let Some((kw, kw_span)) = line.expect_word("keyword").ok() else {
                self.diags.push(line.unexpected("keyword"));
                continue;
            };
            if is_top_keyword(&kw) {
                scope = Scope::Top;
            } else if matches!(scope, Scope::Skipping) {
                continue;
            }
            let result = match kw.as_str() {
                "param" => self.param(&mut line),
                "procedure" => match self.procedure(&mut line, kw_span.clone()) {
                    Ok(()) => {
                        scope = Scope::Procedure;
                        Ok(())
                    }
                    Err(d) => {
                        scope = Scope::Skipping;
                        Err(d)
                    }
                },
                "entry" => self.entry(&mut line, kw_span.clone()),
                "title" | "iblock" | "embed" | "trigger" | "context" | "goal" | "abnormal"
                | "action" | "check" | "note" | "restriction" => {
                    if matches!(scope, Scope::Procedure) {
                        self.body(&kw, &mut line, kw_span.clone())
                    } else {
                        Err(Diagnostic::new(
                            DiagCode::OutsideBlock,
                            kw_span.clone(),
                            format!("`{kw}` outside of a procedure"),
                        ))
                    }
                }
                _ => Err(Diagnostic::new(
                    DiagCode::UnknownKeyword,
                    kw_span.clone(),
                    format!("unknown keyword `{kw}`"),
                )),
            };
            if let Err(d) = result.and_then(|_| line.finish()) {
                self.diags.push(d);
            }
        }
    }

    fn param(&mut self, line: &mut Line) -> PResult<()> {
        let (name, span) = line.expect_ident("parameter name")?;
        let (ty_word, ty_span) = line.expect_word("`number`, `bool` or `enum`")?;
        let mut labels_span = None;
        let ty = match ty_word.as_str() {
            "number" => ParamType::Number,
            "bool" => ParamType::Bool,
            "enum" => {
                let open = line.expect(Tok::LParen, "`(`")?;
                let mut labels = Vec::new();
                loop {
                    let (l, lspan) = line.expect_ident("enum label")?;
                    if labels.contains(&l) {
                        return Err(Diagnostic::new(
                            DiagCode::DuplicateId,
                            lspan,
                            format!("duplicate label `{l}`"),
                        ));
                    }
                    labels.push(l);
                    if line.eat(&Tok::Comma) {
                        continue;
                    }
                    line.expect(Tok::RParen, "`,` or `)`")?;
                    break;
                }
                labels_span = Some(open);
                ParamType::Enum(labels)
            }
            other => {
                return Err(Diagnostic::new(
                    DiagCode::Syntax,
                    ty_span,
                    format!("unknown parameter type `{other}`"),
                ))
            }
        };
        let unit = match line.peek() {
            Some(Tok::Word(_)) => Some(line.expect_word("unit")?.0),
            _ => None,
        };
        self.file.params.push(RawParam { name, span, ty, labels_span, unit });
        Ok(())
    }

    fn procedure(&mut self, line: &mut Line, _kw: SourceSpan) -> PResult<()> {
        let (id, span) = line.expect_ident("procedure id")?;
        let (kind_word, kind_span) = line.expect_word("procedure kind")?;
        let kind = ProcedureKind::ALL
            .into_iter()
            .find(|k| k.keyword() == kind_word)
            .ok_or_else(|| {
                Diagnostic::new(
                    DiagCode::Syntax,
                    kind_span,
                    format!("unknown procedure kind `{kind_word}`"),
                )
            })?;
        if !line.eat_word("phase") {
            return Err(line.unexpected("`phase`"));
        }
        let phase = line.expect_phase()?;
        let mut priority = None;
        let mut ecam = false;
        while let Some(w) = line.peek_word().map(str::to_string) {
            let here = line.here();
            line.pos += 1;
            match w.as_str() {
                "priority" if priority.is_none() => {
                    let (n, nspan) = line.expect_number("priority")?;
                    if n.fract() != 0.0 || n.abs() > f64::from(i32::MAX) {
                        return Err(Diagnostic::new(DiagCode::Syntax, nspan, "priority must be an integer"));
                    }
                    priority = Some(n as i32);
                }
                "ecam" if !ecam => ecam = true,
                "priority" | "ecam" => {
                    return Err(Diagnostic::new(DiagCode::DuplicateField, here, format!("duplicate `{w}`")))
                }
                _ => {
                    line.pos -= 1;
                    return Err(line.unexpected("`priority`, `ecam` or end of line"));
                }
            }
        }
        self.file.procedures.push(RawProcedure {
            id,
            span,
            kind,
            phase,
            priority,
            ecam,
            title: None,
            iblocks: Vec::new(),
            embeds: Vec::new(),
        });
        Ok(())
    }

    fn entry(&mut self, line: &mut Line, span: SourceSpan) -> PResult<()> {
        let phase = line.expect_phase()?;
        let mut procs = Vec::new();
        while line.peek().is_some() {
            procs.push(line.expect_ident("procedure id")?);
        }
        self.file.entries.push(RawEntry { phase, span, procs });
        Ok(())
    }

    fn body(&mut self, kw: &str, line: &mut Line, kw_span: SourceSpan) -> PResult<()> {
        let proc = self.file.procedures.last_mut().expect("procedure scope");
        match kw {
            "title" => {
                let t = line.expect_string("title string")?;
                if proc.title.is_some() {
                    return Err(Diagnostic::new(DiagCode::DuplicateField, kw_span, "duplicate `title`"));
                }
                proc.title = Some(t);
                return Ok(());
            }
            "iblock" => {
                let (id, span) = line.expect_ident("iblock id")?;
                proc.iblocks.push(RawIBlock {
                    id,
                    span,
                    trigger: None,
                    context: None,
                    goal: None,
                    abnormal: Vec::new(),
                    actions: Vec::new(),
                });
                return Ok(());
            }
            "embed" => {
                let target = line.expect_ident("procedure id")?;
                proc.embeds.push(target);
                return Ok(());
            }
            _ => {}
        }
        let Some(block) = proc.iblocks.last_mut() else {
            return Err(Diagnostic::new(
                DiagCode::OutsideBlock,
                kw_span,
                format!("`{kw}` outside of an iblock"),
            ));
        };
        match kw {
            "trigger" | "context" | "goal" => {
                let span = line.here();
                let e = line.expr()?;
                let slot = match kw {
                    "trigger" => &mut block.trigger,
                    "context" => &mut block.context,
                    _ => &mut block.goal,
                };
                if slot.is_some() {
                    return Err(Diagnostic::new(DiagCode::DuplicateField, kw_span, format!("duplicate `{kw}`")));
                }
                *slot = Some((e, span));
            }
            "abnormal" => {
                let span = line.here();
                let e = line.expr()?;
                line.expect(Tok::Arrow, "`->`")?;
                let (target, tspan) = line.expect_ident("procedure id")?;
                block.abnormal.push((e, span, target, tspan));
            }
            _ => {
                let kind = ActionKind::ALL.into_iter().find(|k| k.keyword() == kw).expect("action keyword");
                let (id, span) = line.expect_ident("action id")?;
                let label = line.expect_string("action text")?;
                let mut action = RawAction {
                    id,
                    span,
                    kind,
                    label,
                    level2: None,
                    level3: None,
                    detect: None,
                    applicable: None,
                };
                while let Some(opt) = line.peek_word().map(str::to_string) {
                    let opt_span = line.here();
                    line.pos += 1;
                    let dup = || {
                        Diagnostic::new(DiagCode::DuplicateField, opt_span.clone(), format!("duplicate `{opt}`"))
                    };
                    match opt.as_str() {
                        "level2" | "level3" => {
                            let s = line.expect_string("string")?;
                            let slot = if opt == "level2" { &mut action.level2 } else { &mut action.level3 };
                            if slot.is_some() {
                                return Err(dup());
                            }
                            *slot = Some(s);
                        }
                        "detect" => {
                            if !kind.is_completable() {
                                return Err(Diagnostic::new(
                                    DiagCode::NoteDetect,
                                    opt_span,
                                    format!("a {kw} cannot be auto-detected"),
                                ));
                            }
                            let span = line.here();
                            let e = line.expr()?;
                            if action.detect.is_some() {
                                return Err(dup());
                            }
                            action.detect = Some((e, span));
                        }
                        "applicable" => {
                            let span = line.here();
                            let e = line.expr()?;
                            if action.applicable.is_some() {
                                return Err(dup());
                            }
                            action.applicable = Some((e, span));
                        }
                        _ => {
                            line.pos -= 1;
                            return Err(line.unexpected("`level2`, `level3`, `detect` or `applicable`"));
                        }
                    }
                }
                block.actions.push(action);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Semantic pass
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum ExprSite {
    Trigger,
    Context,
    Goal,
    Abnormal,
    Detect,
    Applicable,
}

impl ExprSite {
    fn allows_check_all_done(self) -> bool {
        matches!(self, ExprSite::Goal | ExprSite::Abnormal)
    }
}

struct Resolver<'a> {
    registry: &'a Registry,
    site: ExprSite,
    diags: Vec<Diagnostic>,
}

impl Resolver<'_> {
    fn param_type(&mut self, name: &str, span: &SourceSpan) -> Option<ParamType> {
        let Some(ty) = self.registry.type_of(name) else {
            self.diags.push(Diagnostic::new(
                DiagCode::UnknownParam,
                span.clone(),
                format!("unknown parameter `{name}`"),
            ));
            return None;
        };
        if name == CHECK_ALL_DONE_PARAM && !self.site.allows_check_all_done() {
            self.diags.push(Diagnostic::new(
                DiagCode::MisplacedPseudo,
                span.clone(),
                "CHECK_ALL_DONE is only meaningful in `goal` and `abnormal` conditions",
            ));
            return None;
        }
        Some(ty.clone())
    }

    fn resolve(&mut self, raw: &RawExpr) -> Option<ConditionExpr> {
        match raw {
            RawExpr::True => Some(ConditionExpr::True),
            RawExpr::False => Some(ConditionExpr::falsum()),
            RawExpr::Not(x) => self.resolve(x).map(ConditionExpr::negate),
            RawExpr::And(xs) | RawExpr::Or(xs) => {
                let items: Vec<_> = xs.iter().map(|x| self.resolve(x)).collect();
                let items: Option<Vec<_>> = items.into_iter().collect();
                let items = items?;
                Some(if matches!(raw, RawExpr::And(_)) {
                    ConditionExpr::And(items)
                } else {
                    ConditionExpr::Or(items)
                })
            }
            RawExpr::Sustained { ticks, span, inner } => {
                let inner = self.resolve(inner);
                if ticks.fract() != 0.0 || *ticks < 1.0 || *ticks > MAX_SUSTAINED {
                    self.diags.push(Diagnostic::new(
                        DiagCode::BadDuration,
                        span.clone(),
                        format!("sustained duration must be an integer in 1..={MAX_SUSTAINED}"),
                    ));
                    return None;
                }
                Some(ConditionExpr::sustained(*ticks as u32, inner?))
            }
            RawExpr::Bare { name, span } => {
                let ty = self.param_type(name, span)?;
                if ty != ParamType::Bool {
                    self.diags.push(Diagnostic::new(
                        DiagCode::TypeMismatch,
                        span.clone(),
                        format!("`{name}` is not boolean and needs a comparison"),
                    ));
                    return None;
                }
                Some(ConditionExpr::cmp(name, CmpOp::Eq, ParamValue::Bool(true)))
            }
            RawExpr::Cmp { name, span, op, rhs, rhs_span } => {
                let lty = self.param_type(name, span)?;
                let op = *op;
                let mismatch = |what: &str| {
                    Diagnostic::new(
                        DiagCode::TypeMismatch,
                        rhs_span.clone(),
                        format!("cannot compare `{name}` with {what}"),
                    )
                };
                let bad_op = || {
                    Diagnostic::new(
                        DiagCode::InvalidOperator,
                        rhs_span.clone(),
                        format!("`{op}` is not defined for boolean `{name}`"),
                    )
                };
                match rhs {
                    Operand::Ident(r) if self.registry.contains(r) => {
                        let rty = self.param_type(r, rhs_span)?;
                        let compatible = match (&lty, &rty) {
                            (ParamType::Number, ParamType::Number) | (ParamType::Bool, ParamType::Bool) => true,
                            (ParamType::Enum(a), ParamType::Enum(b)) => a == b,
                            _ => false,
                        };
                        if !compatible {
                            self.diags.push(mismatch(&format!("parameter `{r}` of a different type")));
                            return None;
                        }
                        if lty == ParamType::Bool && op.is_ordering() {
                            self.diags.push(bad_op());
                            return None;
                        }
                        Some(ConditionExpr::cmp_params(name, op, r))
                    }
                    Operand::Ident(label) => match &lty {
                        ParamType::Enum(_) => {
                            if op.is_ordering() && lty.label_index(label).is_none() {
                                self.diags.push(Diagnostic::new(
                                    DiagCode::UnknownLabel,
                                    rhs_span.clone(),
                                    format!("`{label}` is not a label of `{name}`; ordering needs a declared label"),
                                ));
                                return None;
                            }
                            Some(ConditionExpr::cmp(name, op, ParamValue::Enum(label.clone())))
                        }
                        _ => {
                            self.diags.push(Diagnostic::new(
                                DiagCode::UnknownParam,
                                rhs_span.clone(),
                                format!("unknown parameter `{label}`"),
                            ));
                            None
                        }
                    },
                    Operand::Number(n) => {
                        if lty != ParamType::Number {
                            self.diags.push(mismatch("a number"));
                            return None;
                        }
                        Some(ConditionExpr::cmp(name, op, ParamValue::Number(*n)))
                    }
                    Operand::Bool(b) => {
                        if lty != ParamType::Bool {
                            self.diags.push(mismatch("a boolean"));
                            return None;
                        }
                        if op.is_ordering() {
                            self.diags.push(bad_op());
                            return None;
                        }
                        Some(ConditionExpr::cmp(name, op, ParamValue::Bool(*b)))
                    }
                }
            }
        }
    }
}

fn build(raw: RawFile, diags: &mut Vec<Diagnostic>) -> ProcedureSet {
    let mut origins = BTreeMap::new();
    let mut registry = Registry::new();

    for p in &raw.params {
        if Registry::is_reserved(&p.name) {
            diags.push(Diagnostic::new(
                DiagCode::ReservedName,
                p.span.clone(),
                format!("`{}` is a reserved parameter name", p.name),
            ));
            continue;
        }
        let name = ParameterId::new(p.name.clone()).expect("lexed identifier");
        let decl = ParamDecl { name: name.clone(), ty: p.ty.clone(), unit: p.unit.clone() };
        if registry.declare(decl).is_err() {
            diags.push(Diagnostic::new(
                DiagCode::DuplicateId,
                p.span.clone(),
                format!("duplicate parameter `{}`", p.name),
            ));
            continue;
        }
        let _ = &p.labels_span;
        origins.insert(Site::Param(name), p.span.clone());
    }

    let mut proc_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut iblock_ids: BTreeSet<&str> = BTreeSet::new();
    for (pi, rp) in raw.procedures.iter().enumerate() {
        if proc_ids.insert(&rp.id, pi).is_some() {
            diags.push(Diagnostic::new(
                DiagCode::DuplicateId,
                rp.span.clone(),
                format!("duplicate procedure `{}`", rp.id),
            ));
        }
        if rp.iblocks.is_empty() {
            diags.push(Diagnostic::new(
                DiagCode::EmptyProcedure,
                rp.span.clone(),
                format!("procedure `{}` has no iblock", rp.id),
            ));
        }
        for b in &rp.iblocks {
            if !iblock_ids.insert(&b.id) {
                diags.push(Diagnostic::new(
                    DiagCode::DuplicateId,
                    b.span.clone(),
                    format!("duplicate iblock `{}`", b.id),
                ));
            }
            let mut action_ids = BTreeSet::new();
            for a in &b.actions {
                if !action_ids.insert(&a.id) {
                    diags.push(Diagnostic::new(
                        DiagCode::DuplicateId,
                        a.span.clone(),
                        format!("duplicate action `{}` in iblock `{}`", a.id, b.id),
                    ));
                }
            }
        }
    }

    let resolve = |raw: &Option<(RawExpr, SourceSpan)>, site: ExprSite, diags: &mut Vec<Diagnostic>| {
        let Some((e, _)) = raw else { return None };
        let mut r = Resolver { registry: &registry, site, diags: Vec::new() };
        let out = r.resolve(e);
        diags.append(&mut r.diags);
        Some(out)
    };
    let check_target = |target: &str, span: &SourceSpan, diags: &mut Vec<Diagnostic>| {
        if !proc_ids.contains_key(target) {
            diags.push(Diagnostic::new(
                DiagCode::DanglingLink,
                span.clone(),
                format!("unknown procedure `{target}`"),
            ));
        }
    };

    let mut procedures = Vec::new();
    for (pi, rp) in raw.procedures.iter().enumerate() {
        origins.insert(Site::Procedure(pi), rp.span.clone());
        let mut iblocks = Vec::new();
        for (bi, rb) in rp.iblocks.iter().enumerate() {
            origins.insert(Site::IBlock(pi, bi), rb.span.clone());
            let mut expr_or_default = |raw: &Option<(RawExpr, SourceSpan)>, site: ExprSite, key: Site, default: ConditionExpr| {
                if let Some((_, span)) = raw {
                    origins.insert(key, span.clone());
                }
                match resolve(raw, site, diags) {
                    Some(Some(e)) => e,
                    Some(None) => ConditionExpr::True,
                    None => default,
                }
            };
            let trigger = expr_or_default(&rb.trigger, ExprSite::Trigger, Site::Trigger(pi, bi), ConditionExpr::True);
            let context = expr_or_default(&rb.context, ExprSite::Context, Site::Context(pi, bi), ConditionExpr::True);
            let goal = expr_or_default(
                &rb.goal,
                ExprSite::Goal,
                Site::Goal(pi, bi),
                ConditionExpr::cmp(CHECK_ALL_DONE_PARAM, CmpOp::Eq, ParamValue::Bool(true)),
            );
            let mut abnormal = Vec::new();
            for (k, (e, span, target, tspan)) in rb.abnormal.iter().enumerate() {
                origins.insert(Site::Abnormal(pi, bi, k), span.clone());
                check_target(target, tspan, diags);
                let cond = resolve(&Some((e.clone(), span.clone())), ExprSite::Abnormal, diags)
                    .flatten()
                    .unwrap_or(ConditionExpr::True);
                abnormal.push(AbnormalLink {
                    condition: cond,
                    target: ProcedureId::new(target.clone()).expect("lexed identifier"),
                });
            }
            let mut actions = Vec::new();
            for (ai, ra) in rb.actions.iter().enumerate() {
                origins.insert(Site::Action(pi, bi, ai), ra.span.clone());
                if let Some((_, s)) = &ra.detect {
                    origins.insert(Site::Detect(pi, bi, ai), s.clone());
                }
                if let Some((_, s)) = &ra.applicable {
                    origins.insert(Site::Applicable(pi, bi, ai), s.clone());
                }
                let auto_detect = resolve(&ra.detect, ExprSite::Detect, diags).map(|e| e.unwrap_or(ConditionExpr::True));
                let applicability =
                    resolve(&ra.applicable, ExprSite::Applicable, diags).map(|e| e.unwrap_or(ConditionExpr::True));
                actions.push(Action {
                    id: ActionId::new(ra.id.clone()).expect("lexed identifier"),
                    kind: ra.kind,
                    label: ra.label.clone(),
                    level2: ra.level2.clone(),
                    level3: ra.level3.clone(),
                    auto_detect,
                    applicability,
                });
            }
            iblocks.push(IBlock {
                id: IBlockId::new(rb.id.clone()).expect("lexed identifier"),
                actions,
                trigger,
                context,
                goal,
                abnormal,
            });
        }
        let mut embedded_links = Vec::new();
        for (k, (target, span)) in rp.embeds.iter().enumerate() {
            origins.insert(Site::Embed(pi, k), span.clone());
            check_target(target, span, diags);
            embedded_links.push(ProcedureId::new(target.clone()).expect("lexed identifier"));
        }
        procedures.push(Procedure {
            id: ProcedureId::new(rp.id.clone()).expect("lexed identifier"),
            title: rp.title.clone().unwrap_or_else(|| rp.id.clone()),
            kind: rp.kind,
            phase: rp.phase,
            iblocks,
            embedded_links,
            priority_override: rp.priority,
            ecam: rp.ecam,
        });
    }

    let mut entries = BTreeMap::new();
    for e in &raw.entries {
        if entries.contains_key(&e.phase) {
            diags.push(Diagnostic::new(
                DiagCode::DuplicateId,
                e.span.clone(),
                format!("duplicate entry table for {}", e.phase),
            ));
            continue;
        }
        let mut ids = Vec::new();
        for (id, span) in &e.procs {
            check_target(id, span, diags);
            ids.push(ProcedureId::new(id.clone()).expect("lexed identifier"));
        }
        entries.insert(e.phase, ids);
    }

    detect_cycles(&raw, &proc_ids, diags);

    let mut set = ProcedureSet::new(registry, procedures, entries);
    set.set_origins(origins);
    set
}

/// Depth-first search over embed links in declaration order; every back
/// edge is reported at the span of the embed that closes the cycle.
fn detect_cycles(raw: &RawFile, ids: &BTreeMap<&str, usize>, diags: &mut Vec<Diagnostic>) {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    fn visit(
        node: usize,
        raw: &RawFile,
        ids: &BTreeMap<&str, usize>,
        marks: &mut [Mark],
        path: &mut Vec<usize>,
        diags: &mut Vec<Diagnostic>,
    ) {
        marks[node] = Mark::Grey;
        path.push(node);
        for (target, span) in &raw.procedures[node].embeds {
            let Some(&t) = ids.get(target.as_str()) else { continue };
            match marks[t] {
                Mark::Grey => {
                    let start = path.iter().position(|&n| n == t).unwrap_or(0);
                    let mut cycle: Vec<&str> = path[start..].iter().map(|&n| raw.procedures[n].id.as_str()).collect();
                    cycle.push(target);
                    diags.push(Diagnostic::new(
                        DiagCode::CyclicLink,
                        span.clone(),
                        format!("embed link closes a cycle: {}", cycle.join(" -> ")),
                    ));
                }
                Mark::White => visit(t, raw, ids, marks, path, diags),
                Mark::Black => {}
            }
        }
        path.pop();
        marks[node] = Mark::Black;
    }

    let mut marks = vec![Mark::White; raw.procedures.len()];
    for start in 0..raw.procedures.len() {
        // Only the first declaration of a duplicated id takes part.
        if ids.get(raw.procedures[start].id.as_str()) != Some(&start) {
            marks[start] = Mark::Black;
        }
    }
    for start in 0..raw.procedures.len() {
        if marks[start] == Mark::White {
            visit(start, raw, ids, &mut marks, &mut Vec::new(), diags);
        }
    }
}
