//! Parser for the `.gft` modeling language.
//!
//! Parsing runs in two phases: a fail-fast syntax phase building the model
//! skeleton, then a resolution phase that checks identifier uniqueness,
//! resolves variable and step-activity reads, derives `enclosed_by` links
//! and type-checks every expression, collecting as many diagnostics as it
//! can. Step declarations accept an optional trailing `;` after an action
//! block; the canonical printer omits it there.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{has_errors, Diagnostic, SourceSpan};
use crate::expr::{CmpOp, Expr, ExprType, VarRef};
use crate::ids::{PartialId, StepId, TransitionId, VarId};
use crate::lexer::{lex, Tok, Token};
use crate::model::{
    Action, ActionKind, Expansion, ForcingOrder, GrafcetModel, PartialGrafcet, SituationSpec,
    Step, StepKind, Transition, VariableDecl, VarRole, VarType,
};

/// Parses `.gft` source into a model, or reports why it cannot.
pub fn parse_model(file: &str, source: &str) -> Result<GrafcetModel, Vec<Diagnostic>> {
    let tokens = lex(file, source).map_err(|d| vec![d])?;
    let mut parser = Parser { file, tokens, pos: 0 };
    let mut model = parser.model().map_err(|d| vec![d])?;
    let diags = resolve_model(&mut model);
    if has_errors(&diags) {
        Err(diags)
    } else {
        Ok(model)
    }
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser<'a> {
    file: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

enum ActionItem {
    Act(Action),
    Force(SituationSpec, PartialId, SourceSpan),
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> SourceSpan {
        match self.tokens.get(self.pos) {
            Some(t) => t.span.clone(),
            None => match self.tokens.last() {
                Some(t) => t.span.clone(),
                None => SourceSpan::new(self.file, (1, 1), (1, 1)),
            },
        }
    }

    fn prev_span(&self) -> SourceSpan {
        match self.tokens.get(self.pos.saturating_sub(1)) {
            Some(t) => t.span.clone(),
            None => self.here(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(msg, self.here())
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<SourceSpan> {
        match self.peek() {
            Some(t) if *t == tok => {
                let span = self.here();
                self.pos += 1;
                Ok(span)
            }
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(s)) if s == w)
    }

    fn eat_word(&mut self, w: &str) -> Option<SourceSpan> {
        if self.at_word(w) {
            let span = self.here();
            self.pos += 1;
            Some(span)
        } else {
            None
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<SourceSpan> {
        self.eat_word(w).ok_or_else(|| match self.peek() {
            Some(t) => self.err(format!("expected `{w}`, found {t}")),
            None => self.err(format!("expected `{w}`, found end of input")),
        })
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                let span = self.here();
                self.pos += 1;
                Ok((w, span))
            }
            Some(t) => Err(self.err(format!("expected {what}, found {t}"))),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn id_list(&mut self, what: &str) -> PResult<Vec<(String, SourceSpan)>> {
        let mut ids = vec![self.expect_ident(what)?];
        while self.eat(&Tok::Comma) {
            ids.push(self.expect_ident(what)?);
        }
        Ok(ids)
    }

    /// `from:`/`to:` lists may be empty so source/sink transitions are
    /// expressible (the analyzer decides where they are legal).
    fn id_list_or_empty(&mut self, what: &str) -> PResult<Vec<(String, SourceSpan)>> {
        if self.peek() == Some(&Tok::Semi) {
            Ok(Vec::new())
        } else {
            self.id_list(what)
        }
    }

    fn model(&mut self) -> PResult<GrafcetModel> {
        self.expect_word("grafcet")?;
        let name = match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                s
            }
            _ => return Err(self.err("expected a quoted model name after `grafcet`")),
        };
        self.expect(Tok::LBrace, "`{`")?;

        let mut model = GrafcetModel::new(name);
        while self.at_word("var") {
            self.var_decl(&mut model.variables)?;
        }
        while self.at_word("partial") {
            model.partials.push(self.partial()?);
        }
        while self.at_word("expansion") {
            model.expansions.push(self.expansion()?);
        }
        if self.at_word("var") {
            return Err(self.err("variable declarations must precede partial Grafcets"));
        }
        if self.at_word("partial") {
            return Err(self.err("partial Grafcets must precede expansion blocks"));
        }
        if model.partials.is_empty() {
            return Err(self.err("a model needs at least one partial Grafcet"));
        }
        self.expect(Tok::RBrace, "`}`")?;
        if let Some(t) = self.peek() {
            return Err(self.err(format!("unexpected {t} after the closing `}}`")));
        }
        Ok(model)
    }

    fn var_decl(&mut self, out: &mut Vec<VariableDecl>) -> PResult<()> {
        let start = self.expect_word("var")?;
        let (role_word, role_span) = self.expect_ident("a variable role")?;
        let role = match role_word.as_str() {
            "input" => VarRole::Input,
            "output" => VarRole::Output,
            "internal" => VarRole::Internal,
            other => {
                return Err(Diagnostic::error(
                    format!("unknown variable role `{other}` (expected `input`, `output` or `internal`)"),
                    role_span,
                ));
            }
        };
        let ids = self.id_list("a variable name")?;
        self.expect(Tok::Colon, "`:`")?;
        let (ty_word, ty_span) = self.expect_ident("a type")?;
        let ty = match ty_word.as_str() {
            "bool" => VarType::Bool,
            "int" => VarType::Int,
            other => {
                return Err(Diagnostic::error(
                    format!("unknown type `{other}` (expected `bool` or `int`)"),
                    ty_span,
                ));
            }
        };
        let initial = if self.eat(&Tok::Eq) {
            let (value, span) = self.literal()?;
            if value.ty() != ty.expr_type() {
                return Err(Diagnostic::error(
                    format!("initial value `{value}` does not have type {ty}"),
                    span,
                ));
            }
            value
        } else {
            ty.default_value()
        };
        self.expect(Tok::Semi, "`;`")?;
        let span = start.to_end_of(&self.prev_span());
        for (id, id_span) in ids {
            if id.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                return Err(Diagnostic::error(
                    format!("variable name `{id}` may not start with a digit"),
                    id_span,
                ));
            }
            out.push(VariableDecl {
                id: VarId::new(id),
                role,
                ty,
                initial,
                span: span.clone(),
            });
        }
        Ok(())
    }

    fn literal(&mut self) -> PResult<(crate::expr::Value, SourceSpan)> {
        use crate::expr::Value;
        let negative = self.eat(&Tok::Minus);
        let (word, span) = self.expect_ident("a literal")?;
        let value = match word.as_str() {
            "true" if !negative => Value::Bool(true),
            "false" if !negative => Value::Bool(false),
            w if w.bytes().all(|b| b.is_ascii_digit()) => {
                let n: i64 = w
                    .parse()
                    .map_err(|_| Diagnostic::error("integer literal out of range", span.clone()))?;
                Value::Int(if negative { -n } else { n })
            }
            other => {
                return Err(Diagnostic::error(format!("expected a literal, found `{other}`"), span));
            }
        };
        Ok((value, span))
    }

    fn partial(&mut self) -> PResult<PartialGrafcet> {
        let start = self.expect_word("partial")?;
        let (id, _) = self.expect_ident("a partial Grafcet name")?;
        let mut pg = PartialGrafcet::new(id);
        self.expect(Tok::LBrace, "`{`")?;
        loop {
            if self.at_step() {
                pg.steps.push(self.step(false)?);
            } else if self.at_word("transition") {
                pg.transitions.push(self.transition()?);
            } else if self.peek() == Some(&Tok::RBrace) {
                self.pos += 1;
                break;
            } else {
                return Err(self.err("expected a step, a transition, or `}`"));
            }
        }
        pg.span = start.to_end_of(&self.prev_span());
        Ok(pg)
    }

    fn expansion(&mut self) -> PResult<Expansion> {
        let start = self.expect_word("expansion")?;
        let (id, _) = self.expect_ident("a macro step name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut steps = Vec::new();
        let mut transitions = Vec::new();
        loop {
            if self.at_step() {
                steps.push(self.step(true)?);
            } else if self.at_word("transition") {
                transitions.push(self.transition()?);
            } else if self.peek() == Some(&Tok::RBrace) {
                self.pos += 1;
                break;
            } else {
                return Err(self.err("expected a step, a transition, or `}`"));
            }
        }
        Ok(Expansion {
            of_macro: StepId::new(id),
            steps,
            transitions,
            span: start.to_end_of(&self.prev_span()),
        })
    }

    fn at_step(&self) -> bool {
        self.at_word("step")
            || self.at_word("initial")
            || self.at_word("enclosing")
            || self.at_word("macro")
    }

    fn step(&mut self, in_expansion: bool) -> PResult<Step> {
        let start = self.here();
        let initial = self.eat_word("initial").is_some();
        let enclosing = self.eat_word("enclosing").is_some();
        let macro_ = if enclosing { false } else { self.eat_word("macro").is_some() };
        self.expect_word("step")?;
        let (id, id_span) = self.expect_ident("a step name")?;

        if initial && enclosing {
            return Err(Diagnostic::error(
                "a step cannot be both initial and enclosing",
                id_span,
            ));
        }
        if initial && macro_ {
            return Err(Diagnostic::error("a step cannot be both initial and macro", id_span));
        }
        if macro_ && !id.starts_with('M') {
            return Err(Diagnostic::error(
                format!("macro step `{id}` must have an id starting with `M`"),
                id_span,
            ));
        }

        let activation_link = self.eat(&Tok::Star);
        let mut encloses = Vec::new();
        if self.eat_word("encloses").is_some() {
            for (pid, _) in self.id_list("a partial Grafcet name")? {
                encloses.push(PartialId::new(pid));
            }
        }

        let mut actions = Vec::new();
        let mut forcings = Vec::new();
        let had_block = self.eat(&Tok::LBrace);
        if had_block {
            while self.peek() != Some(&Tok::RBrace) {
                match self.action()? {
                    ActionItem::Act(a) => actions.push(a),
                    ActionItem::Force(spec, target, span) => forcings.push(ForcingOrder {
                        owner: StepId::new(id.clone()),
                        target,
                        spec,
                        span,
                    }),
                }
            }
            self.expect(Tok::RBrace, "`}`")?;
            self.eat(&Tok::Semi); // trailing `;` after an action block is optional
        } else {
            self.expect(Tok::Semi, "`;`")?;
        }

        let kind = if in_expansion && id.starts_with('E') {
            if initial || enclosing || macro_ {
                return Err(Diagnostic::error(
                    format!("entry step `{id}` cannot be initial, enclosing, or macro"),
                    id_span,
                ));
            }
            StepKind::Entry
        } else if in_expansion && id.starts_with('S') {
            if initial || enclosing || macro_ {
                return Err(Diagnostic::error(
                    format!("exit step `{id}` cannot be initial, enclosing, or macro"),
                    id_span,
                ));
            }
            StepKind::Exit
        } else if macro_ {
            StepKind::Macro
        } else if enclosing {
            StepKind::Enclosing
        } else if initial {
            StepKind::Initial
        } else {
            StepKind::Normal
        };

        if kind == StepKind::Macro && (!actions.is_empty() || !forcings.is_empty()) {
            return Err(Diagnostic::error(
                format!("macro step `{id}` cannot carry actions"),
                id_span,
            ));
        }
        if kind == StepKind::Macro && !encloses.is_empty() {
            return Err(Diagnostic::error(
                format!("macro step `{id}` cannot enclose partial Grafcets"),
                id_span,
            ));
        }
        if kind == StepKind::Macro && activation_link {
            return Err(Diagnostic::error(
                format!("macro step `{id}` cannot be an activation link"),
                id_span,
            ));
        }
        if kind != StepKind::Enclosing && !encloses.is_empty() {
            return Err(Diagnostic::error(
                format!("step `{id}` lists enclosed partial Grafcets but is not an enclosing step"),
                id_span,
            ));
        }
        if kind == StepKind::Enclosing && encloses.is_empty() {
            return Err(Diagnostic::error(
                format!("enclosing step `{id}` must list the partial Grafcets it encloses"),
                id_span,
            ));
        }

        Ok(Step {
            id: StepId::new(id),
            kind,
            actions,
            activation_link,
            encloses,
            forcings,
            span: start.to_end_of(&self.prev_span()),
        })
    }

    fn action(&mut self) -> PResult<ActionItem> {
        let start = self.here();
        let (word, _) = self.expect_ident("an action keyword")?;
        match word.as_str() {
            "do" => {
                let (target, _) = self.expect_ident("an output variable")?;
                let condition =
                    if self.eat_word("if").is_some() { Some(self.expr()?) } else { None };
                self.expect(Tok::Semi, "`;`")?;
                Ok(ActionItem::Act(Action {
                    kind: ActionKind::Continuous,
                    condition,
                    target: VarId::new(target),
                    value: Expr::BoolLit(true),
                    span: start.to_end_of(&self.prev_span()),
                }))
            }
            "on_activation" | "on_deactivation" => {
                let kind = if word == "on_activation" {
                    ActionKind::StoredOnActivation
                } else {
                    ActionKind::StoredOnDeactivation
                };
                let (target, _) = self.expect_ident("a variable")?;
                self.expect(Tok::Assign, "`:=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(ActionItem::Act(Action {
                    kind,
                    condition: None,
                    target: VarId::new(target),
                    value,
                    span: start.to_end_of(&self.prev_span()),
                }))
            }
            "on_event" => {
                let condition = self.expr()?;
                self.expect(Tok::Colon, "`:`")?;
                let (target, _) = self.expect_ident("a variable")?;
                self.expect(Tok::Assign, "`:=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(ActionItem::Act(Action {
                    kind: ActionKind::StoredOnEvent,
                    condition: Some(condition),
                    target: VarId::new(target),
                    value,
                    span: start.to_end_of(&self.prev_span()),
                }))
            }
            "force" => {
                let (target, _) = self.expect_ident("a partial Grafcet name")?;
                let spec = self.sit_spec()?;
                self.expect(Tok::Semi, "`;`")?;
                Ok(ActionItem::Force(
                    spec,
                    PartialId::new(target),
                    start.to_end_of(&self.prev_span()),
                ))
            }
            other => Err(Diagnostic::error(
                format!(
                    "expected an action (`do`, `on_activation`, `on_deactivation`, \
                     `on_event`, `force`), found `{other}`"
                ),
                start,
            )),
        }
    }

    fn sit_spec(&mut self) -> PResult<SituationSpec> {
        self.expect(Tok::LBrace, "`{`")?;
        if self.eat(&Tok::Star) {
            self.expect(Tok::RBrace, "`}`")?;
            return Ok(SituationSpec::Current);
        }
        if self.eat(&Tok::RBrace) {
            return Ok(SituationSpec::Empty);
        }
        if self.eat_word("INIT").is_some() {
            self.expect(Tok::RBrace, "`}`")?;
            return Ok(SituationSpec::Init);
        }
        let ids = self.id_list("a step name")?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(SituationSpec::Explicit(ids.into_iter().map(|(id, _)| StepId::new(id)).collect()))
    }

    fn transition(&mut self) -> PResult<Transition> {
        let start = self.expect_word("transition")?;
        let (id, _) = self.expect_ident("a transition name")?;
        self.expect(Tok::LBrace, "`{`")?;
        self.expect_word("from")?;
        self.expect(Tok::Colon, "`:`")?;
        let pre = self.id_list_or_empty("a step name")?;
        self.expect(Tok::Semi, "`;`")?;
        self.expect_word("to")?;
        self.expect(Tok::Colon, "`:`")?;
        let post = self.id_list_or_empty("a step name")?;
        self.expect(Tok::Semi, "`;`")?;
        self.expect_word("when")?;
        self.expect(Tok::Colon, "`:`")?;
        let condition = self.expr()?;
        self.expect(Tok::Semi, "`;`")?;
        self.expect(Tok::RBrace, "`}`")?;
        self.eat(&Tok::Semi); // tolerated, not canonical
        Ok(Transition {
            id: TransitionId::new(id),
            pre: pre.into_iter().map(|(s, _)| StepId::new(s)).collect(),
            post: post.into_iter().map(|(s, _)| StepId::new(s)).collect(),
            condition,
            span: start.to_end_of(&self.prev_span()),
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_word("OR").is_some() {
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp_expr()?;
        while self.eat_word("AND").is_some() {
            lhs = Expr::And(Box::new(lhs), Box::new(self.cmp_expr()?));
        }
        Ok(lhs)
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        Some(match self.peek()? {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        })
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.sum_expr()?;
        if let Some(op) = self.cmp_op() {
            self.pos += 1;
            let rhs = self.sum_expr()?;
            if self.cmp_op().is_some() {
                return Err(self.err("comparisons cannot be chained; use AND"));
            }
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn sum_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            if self.eat(&Tok::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.unary_expr()?));
            } else if self.eat(&Tok::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.unary_expr()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.eat_word("NOT").is_some() {
            return Ok(Expr::Not(Box::new(self.unary_expr()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Word(w)) => {
                let w = w.clone();
                let span = self.here();
                self.pos += 1;
                match w.as_str() {
                    "true" => Ok(Expr::BoolLit(true)),
                    "false" => Ok(Expr::BoolLit(false)),
                    "rising" | "falling" => {
                        self.expect(Tok::LParen, "`(`")?;
                        let (id, _) = self.expect_ident("a variable")?;
                        self.expect(Tok::RParen, "`)`")?;
                        let r = VarRef::Var(VarId::new(id));
                        Ok(if w == "rising" { Expr::Rising(r) } else { Expr::Falling(r) })
                    }
                    _ if w.bytes().all(|b| b.is_ascii_digit()) => {
                        let n: i64 = w.parse().map_err(|_| {
                            Diagnostic::error("integer literal out of range", span)
                        })?;
                        Ok(Expr::IntLit(n))
                    }
                    _ => Ok(Expr::Read(VarRef::Var(VarId::new(w)))),
                }
            }
            Some(t) => Err(self.err(format!("expected an expression, found {t}"))),
            None => Err(self.err("expected an expression, found end of input")),
        }
    }
}

// ---------------------------------------------------------------------------
// Resolution: identifier uniqueness, reference resolution, type checking.
// ---------------------------------------------------------------------------

struct Scope<'m> {
    vars: BTreeMap<&'m str, (VarRole, VarType)>,
    /// All step ids declared in partial Grafcets (the global X-namespace).
    partial_steps: BTreeSet<&'m str>,
}

impl Scope<'_> {
    /// Resolves a raw name to a reference: declared variables win, then
    /// step-activity reads `X<step>`. `local_steps` are the ids of the
    /// surrounding expansion chart, if any.
    fn resolve_name(&self, name: &str, local_steps: &BTreeSet<&str>) -> Option<VarRef> {
        if self.vars.contains_key(name) {
            return Some(VarRef::Var(VarId::new(name)));
        }
        let step = name.strip_prefix('X')?;
        if local_steps.contains(step) || self.partial_steps.contains(step) {
            return Some(VarRef::StepActivity(StepId::new(step)));
        }
        None
    }

    fn lookup_type(&self, r: &VarRef) -> Option<ExprType> {
        match r {
            VarRef::Var(v) => self.vars.get(v.as_str()).map(|(_, ty)| ty.expr_type()),
            VarRef::StepActivity(_) => Some(ExprType::Bool),
        }
    }
}

fn resolve_model(model: &mut GrafcetModel) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    check_unique_names(model, &mut diags);
    derive_enclosed_by(model, &mut diags);

    // Split borrows: the scope reads variables and step names while the
    // resolver rewrites expressions inside partials/expansions.
    let vars: BTreeMap<String, (VarRole, VarType)> =
        model.variables.iter().map(|v| (v.id.as_str().to_owned(), (v.role, v.ty))).collect();
    let partial_steps: BTreeSet<String> =
        model.steps().map(|(_, s)| s.id.as_str().to_owned()).collect();
    let all_steps: BTreeSet<String> = partial_steps
        .iter()
        .cloned()
        .chain(model.expansions.iter().flat_map(|e| {
            e.steps.iter().map(|s| s.id.as_str().to_owned())
        }))
        .collect();

    for decl in &model.variables {
        if let Some(step) = decl.id.as_str().strip_prefix('X') {
            if all_steps.contains(step) {
                diags.push(Diagnostic::error(
                    format!(
                        "variable `{}` collides with the implicit step activity variable of step `{step}`",
                        decl.id
                    ),
                    decl.span.clone(),
                ));
            }
        }
    }

    let scope = Scope {
        vars: vars.iter().map(|(k, v)| (k.as_str(), *v)).collect(),
        partial_steps: partial_steps.iter().map(|s| s.as_str()).collect(),
    };

    check_forcing_orders(model, &mut diags);

    let no_local: BTreeSet<&str> = BTreeSet::new();
    for pg in &mut model.partials {
        let step_ids: BTreeSet<String> =
            pg.steps.iter().map(|s| s.id.as_str().to_owned()).collect();
        let step_ids: BTreeSet<&str> = step_ids.iter().map(|s| s.as_str()).collect();
        for t in &mut pg.transitions {
            resolve_transition(t, &scope, &no_local, &step_ids, &mut diags);
        }
        for s in &mut pg.steps {
            for a in &mut s.actions {
                resolve_action(a, &scope, &no_local, &mut diags);
            }
        }
    }
    for ex in &mut model.expansions {
        let local: BTreeSet<String> = ex.steps.iter().map(|s| s.id.as_str().to_owned()).collect();
        let local: BTreeSet<&str> = local.iter().map(|s| s.as_str()).collect();
        for t in &mut ex.transitions {
            resolve_transition(t, &scope, &local, &local, &mut diags);
        }
        for s in &mut ex.steps {
            for a in &mut s.actions {
                resolve_action(a, &scope, &local, &mut diags);
            }
        }
    }

    diags
}

fn check_unique_names(model: &GrafcetModel, diags: &mut Vec<Diagnostic>) {
    let mut seen_partials: BTreeMap<&str, ()> = BTreeMap::new();
    for pg in &model.partials {
        if seen_partials.insert(pg.id.as_str(), ()).is_some() {
            diags.push(Diagnostic::error(
                format!("duplicate partial Grafcet `{}`", pg.id),
                pg.span.clone(),
            ));
        }
    }

    let mut seen_vars: BTreeMap<&str, ()> = BTreeMap::new();
    for v in &model.variables {
        if seen_vars.insert(v.id.as_str(), ()).is_some() {
            diags.push(Diagnostic::error(
                format!("duplicate variable `{}`", v.id),
                v.span.clone(),
            ));
        }
    }

    let mut seen_steps: BTreeMap<&str, ()> = BTreeMap::new();
    let mut seen_transitions: BTreeMap<&str, ()> = BTreeMap::new();
    for pg in &model.partials {
        for s in &pg.steps {
            if seen_steps.insert(s.id.as_str(), ()).is_some() {
                diags.push(Diagnostic::error(
                    format!("duplicate step `{}` (step ids are global)", s.id),
                    s.span.clone(),
                ));
            }
        }
        for t in &pg.transitions {
            if seen_transitions.insert(t.id.as_str(), ()).is_some() {
                diags.push(Diagnostic::error(
                    format!("duplicate transition `{}` (transition ids are global)", t.id),
                    t.span.clone(),
                ));
            }
        }
    }

    let mut seen_expansions: BTreeMap<&str, ()> = BTreeMap::new();
    for ex in &model.expansions {
        if seen_expansions.insert(ex.of_macro.as_str(), ()).is_some() {
            diags.push(Diagnostic::error(
                format!("duplicate expansion for macro step `{}`", ex.of_macro),
                ex.span.clone(),
            ));
        }
        let mut local_steps: BTreeMap<&str, ()> = BTreeMap::new();
        let mut local_transitions: BTreeMap<&str, ()> = BTreeMap::new();
        for s in &ex.steps {
            if local_steps.insert(s.id.as_str(), ()).is_some() {
                diags.push(Diagnostic::error(
                    format!("duplicate step `{}` in expansion `{}`", s.id, ex.of_macro),
                    s.span.clone(),
                ));
            }
        }
        for t in &ex.transitions {
            if local_transitions.insert(t.id.as_str(), ()).is_some() {
                diags.push(Diagnostic::error(
                    format!("duplicate transition `{}` in expansion `{}`", t.id, ex.of_macro),
                    t.span.clone(),
                ));
            }
        }
    }
}

fn derive_enclosed_by(model: &mut GrafcetModel, diags: &mut Vec<Diagnostic>) {
    let mut owner_of: BTreeMap<PartialId, StepId> = BTreeMap::new();
    let partial_ids: BTreeSet<PartialId> =
        model.partials.iter().map(|p| p.id.clone()).collect();
    for pg in &model.partials {
        for s in &pg.steps {
            for target in &s.encloses {
                if !partial_ids.contains(target) {
                    diags.push(Diagnostic::error(
                        format!("step `{}` encloses unknown partial Grafcet `{target}`", s.id),
                        s.span.clone(),
                    ));
                    continue;
                }
                // First claimant wins; a second enclosing step is reported
                // by the analyzer's validation (one encloser per partial).
                owner_of.entry(target.clone()).or_insert_with(|| s.id.clone());
            }
        }
    }
    for pg in &mut model.partials {
        pg.enclosed_by = owner_of.get(&pg.id).cloned();
    }
}

fn check_forcing_orders(model: &GrafcetModel, diags: &mut Vec<Diagnostic>) {
    let forcings = model
        .partials
        .iter()
        .flat_map(|p| p.steps.iter())
        .chain(model.expansions.iter().flat_map(|e| e.steps.iter()))
        .flat_map(|s| s.forcings.iter());
    for f in forcings {
        let Some(target) = model.partial(&f.target) else {
            diags.push(Diagnostic::error(
                format!("forcing order targets unknown partial Grafcet `{}`", f.target),
                f.span.clone(),
            ));
            continue;
        };
        if let SituationSpec::Explicit(steps) = &f.spec {
            for s in steps {
                match target.step(s) {
                    None => diags.push(Diagnostic::error(
                        format!(
                            "forcing spec references `{s}`, which is not a step of `{}`",
                            f.target
                        ),
                        f.span.clone(),
                    )),
                    Some(step) if step.kind == StepKind::Macro => diags.push(Diagnostic::error(
                        format!("forcing spec may not reference macro step `{s}`"),
                        f.span.clone(),
                    )),
                    Some(_) => {}
                }
            }
        }
    }
}

fn resolve_transition(
    t: &mut Transition,
    scope: &Scope<'_>,
    local_steps: &BTreeSet<&str>,
    container_steps: &BTreeSet<&str>,
    diags: &mut Vec<Diagnostic>,
) {
    for s in t.pre.iter().chain(t.post.iter()) {
        if !container_steps.contains(s.as_str()) {
            diags.push(Diagnostic::error(
                format!("transition `{}` references unknown step `{s}`", t.id),
                t.span.clone(),
            ));
        }
    }
    resolve_expr(&mut t.condition, scope, local_steps, &t.span, diags);
    check_type(&t.condition, scope, ExprType::Bool, "transition condition", &t.span, diags);
}

fn resolve_action(
    a: &mut Action,
    scope: &Scope<'_>,
    local_steps: &BTreeSet<&str>,
    diags: &mut Vec<Diagnostic>,
) {
    if let Some(cond) = &mut a.condition {
        resolve_expr(cond, scope, local_steps, &a.span, diags);
    }
    resolve_expr(&mut a.value, scope, local_steps, &a.span, diags);

    let Some((role, ty)) = scope.vars.get(a.target.as_str()).copied() else {
        diags.push(Diagnostic::error(
            format!("action targets undeclared variable `{}`", a.target),
            a.span.clone(),
        ));
        return;
    };

    match a.kind {
        ActionKind::Continuous => {
            if role != VarRole::Output {
                diags.push(Diagnostic::error(
                    format!("continuous action must target an output variable, `{}` is {role}", a.target),
                    a.span.clone(),
                ));
            }
            if ty != VarType::Bool {
                diags.push(Diagnostic::error(
                    format!("continuous action asserts `{}`, which is not bool", a.target),
                    a.span.clone(),
                ));
            }
            if let Some(cond) = &a.condition {
                check_type(cond, scope, ExprType::Bool, "action condition", &a.span, diags);
                if cond.has_edge_atom() {
                    diags.push(Diagnostic::error(
                        "edge atom in continuous-action condition",
                        a.span.clone(),
                    ));
                }
            }
        }
        ActionKind::StoredOnActivation
        | ActionKind::StoredOnDeactivation
        | ActionKind::StoredOnEvent => {
            if role == VarRole::Input {
                diags.push(Diagnostic::error(
                    format!("stored action may not assign input variable `{}`", a.target),
                    a.span.clone(),
                ));
            }
            check_type(&a.value, scope, ty.expr_type(), "assignment value", &a.span, diags);
            if a.kind == ActionKind::StoredOnEvent {
                let cond = a.condition.as_ref().expect("on_event always parses a condition");
                check_type(cond, scope, ExprType::Bool, "event condition", &a.span, diags);
                if !cond.has_edge_atom() {
                    diags.push(Diagnostic::error(
                        "action on event requires an edge atom in its condition",
                        a.span.clone(),
                    ));
                }
            }
        }
    }
}

/// Rewrites raw `Read`/edge names into resolved references, reporting
/// unknown identifiers once per occurrence.
fn resolve_expr(
    e: &mut Expr,
    scope: &Scope<'_>,
    local_steps: &BTreeSet<&str>,
    span: &SourceSpan,
    diags: &mut Vec<Diagnostic>,
) {
    let resolve_ref = |r: &mut VarRef, diags: &mut Vec<Diagnostic>| {
        if let VarRef::Var(name) = r {
            match scope.resolve_name(name.as_str(), local_steps) {
                Some(resolved) => *r = resolved,
                None => diags.push(Diagnostic::error(
                    format!("unknown identifier `{name}`"),
                    span.clone(),
                )),
            }
        }
    };
    match e {
        Expr::Read(r) | Expr::Rising(r) | Expr::Falling(r) => resolve_ref(r, diags),
        Expr::BoolLit(_) | Expr::IntLit(_) => {}
        Expr::Not(inner) => resolve_expr(inner, scope, local_steps, span, diags),
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Add(a, b) | Expr::Sub(a, b) => {
            resolve_expr(a, scope, local_steps, span, diags);
            resolve_expr(b, scope, local_steps, span, diags);
        }
        Expr::Cmp(_, a, b) => {
            resolve_expr(a, scope, local_steps, span, diags);
            resolve_expr(b, scope, local_steps, span, diags);
        }
    }
}

fn check_type(
    e: &Expr,
    scope: &Scope<'_>,
    want: ExprType,
    what: &str,
    span: &SourceSpan,
    diags: &mut Vec<Diagnostic>,
) {
    match crate::expr::type_of(e, &|r| scope.lookup_type(r)) {
        // Unknown identifiers were already reported by resolve_expr.
        Err(msg) if msg.starts_with("unknown identifier") => {}
        Err(msg) => diags.push(Diagnostic::error(format!("{what}: {msg}"), span.clone())),
        Ok(got) if got != want => diags.push(Diagnostic::error(
            format!("{what} must be {want}, found {got}"),
            span.clone(),
        )),
        Ok(_) => {}
    }
}
