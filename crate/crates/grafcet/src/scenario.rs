//! Scenario scripts (`.gsc`): a small statement language that drives the
//! engine and checks expectations against stable reports or run errors.
//!
//! Expectations are non-fatal — every failed check lands in the result and
//! execution continues — but an unexpected engine error poisons the state:
//! the next attempt to feed inputs records a failure and stops the run.
//! `init;` always resets the engine, so scenarios may re-initialize.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::analyzer::AnalyzedModel;
use crate::diag::{Diagnostic, SourceSpan};
use crate::engine::Engine;
use crate::expr::Value;
use crate::ids::{PartialId, StepId, VarId};
use crate::lexer::{lex, Tok, Token};
use crate::model::{VarRole, VarType};
use crate::state::{Policy, RunError, RunErrorKind, StableReport};

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioStep {
    Init,
    SetInputs(BTreeMap<VarId, Value>),
    /// Each group constrains one partial Grafcet to exactly the given steps.
    ExpectSituation(Vec<(PartialId, BTreeSet<StepId>)>),
    ExpectVar(VarId, Value),
    ExpectOutputs(Vec<(VarId, Value)>),
    ExpectError(RunErrorKind),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub steps: Vec<(ScenarioStep, SourceSpan)>,
}

impl Scenario {
    /// The input events between initializations: one segment per `init;`,
    /// each holding the `set` maps that follow it in order.
    pub fn event_segments(&self) -> Vec<Vec<BTreeMap<VarId, Value>>> {
        let mut segments = Vec::new();
        for (step, _) in &self.steps {
            match step {
                ScenarioStep::Init => segments.push(Vec::new()),
                ScenarioStep::SetInputs(map) => {
                    if let Some(current) = segments.last_mut() {
                        current.push(map.clone());
                    }
                }
                _ => {}
            }
        }
        segments
    }
}

/// One failed check: the 1-based statement number plus what was expected
/// and what the engine actually had.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFailure {
    pub step: usize,
    pub span: SourceSpan,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for ScenarioFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: step {}: expected {}, got {}",
            self.span, self.step, self.expected, self.actual
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub passed: bool,
    pub failures: Vec<ScenarioFailure>,
    /// Trace lines (JSONL) of every run the scenario performed, in order:
    /// each run's evolution records followed by its report or error line.
    pub trace: Vec<String>,
}

pub fn parse_scenario(file: &str, source: &str) -> Result<Scenario, Diagnostic> {
    let tokens = lex(file, source)?;
    let mut p = Parser { file, tokens, pos: 0 };
    let mut steps = Vec::new();
    while p.peek().is_some() {
        steps.push(p.statement()?);
    }
    match steps.first() {
        Some((ScenarioStep::Init, _)) => {}
        Some((_, span)) => {
            return Err(Diagnostic::error("a scenario must start with `init;`", span.clone()))
        }
        None => {
            return Err(Diagnostic::error(
                "a scenario must start with `init;`",
                SourceSpan::new(file, (1, 1), (1, 1)),
            ))
        }
    }
    Ok(Scenario { steps })
}

struct Parser<'a> {
    file: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    /// Span of the end of the input, for "found end of input" messages.
    fn eof_span(&self) -> SourceSpan {
        self.tokens
            .last()
            .map(|t| t.span.clone())
            .unwrap_or_else(|| SourceSpan::new(self.file, (1, 1), (1, 1)))
    }

    fn err<T>(&self, span: SourceSpan, msg: impl Into<String>) -> Result<T, Diagnostic> {
        Err(Diagnostic::error(msg, span))
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<SourceSpan, Diagnostic> {
        match self.next() {
            Some(t) if t.tok == *tok => Ok(t.span),
            Some(t) => self.err(t.span, format!("expected {what}, found {}", t.tok)),
            None => {
                self.err(self.eof_span(), format!("expected {what}, found end of input"))
            }
        }
    }

    fn word(&mut self, what: &str) -> Result<(String, SourceSpan), Diagnostic> {
        match self.next() {
            Some(Token { tok: Tok::Word(w), span }) => Ok((w, span)),
            Some(t) => self.err(t.span, format!("expected {what}, found {}", t.tok)),
            None => {
                self.err(self.eof_span(), format!("expected {what}, found end of input"))
            }
        }
    }

    fn literal(&mut self) -> Result<Value, Diagnostic> {
        match self.next() {
            Some(Token { tok: Tok::Word(w), span }) => match w.as_str() {
                "true" => Ok(Value::Bool(true)),
                "false" => Ok(Value::Bool(false)),
                _ => match w.parse::<i64>() {
                    Ok(n) => Ok(Value::Int(n)),
                    Err(_) => self.err(span, format!("expected a literal, found `{w}`")),
                },
            },
            Some(Token { tok: Tok::Minus, .. }) => {
                let (w, span) = self.word("an integer literal")?;
                match w.parse::<i64>() {
                    Ok(n) => Ok(Value::Int(-n)),
                    Err(_) => self.err(span, format!("expected an integer literal, found `{w}`")),
                }
            }
            Some(t) => self.err(t.span, format!("expected a literal, found {}", t.tok)),
            None => self.err(self.eof_span(), "expected a literal, found end of input"),
        }
    }

    fn statement(&mut self) -> Result<(ScenarioStep, SourceSpan), Diagnostic> {
        let (word, span) = self.word("`init`, `set` or `expect`")?;
        let step = match word.as_str() {
            "init" => ScenarioStep::Init,
            "set" => self.set_inputs()?,
            "expect" => self.expectation()?,
            other => {
                return self.err(
                    span,
                    format!("expected `init`, `set` or `expect`, found `{other}`"),
                )
            }
        };
        self.expect(&Tok::Semi, "`;`")?;
        Ok((step, span))
    }

    fn set_inputs(&mut self) -> Result<ScenarioStep, Diagnostic> {
        let mut map = BTreeMap::new();
        loop {
            let (name, span) = self.word("a variable name")?;
            self.expect(&Tok::Eq, "`=`")?;
            let value = self.literal()?;
            if map.insert(VarId::from(name.as_str()), value).is_some() {
                return self.err(span, format!("variable `{name}` set twice in one event"));
            }
            if self.peek().map(|t| &t.tok) == Some(&Tok::Comma) {
                self.next();
                continue;
            }
            break;
        }
        Ok(ScenarioStep::SetInputs(map))
    }

    fn expectation(&mut self) -> Result<ScenarioStep, Diagnostic> {
        let (kind, span) = self.word("an expectation kind")?;
        match kind.as_str() {
            "situation" => {
                let mut groups = Vec::new();
                loop {
                    let (pg, _) = self.word("a partial Grafcet name")?;
                    self.expect(&Tok::LBrace, "`{`")?;
                    let mut steps = BTreeSet::new();
                    if self.peek().map(|t| &t.tok) != Some(&Tok::RBrace) {
                        loop {
                            let (id, _) = self.word("a step name")?;
                            steps.insert(StepId::from(id.as_str()));
                            if self.peek().map(|t| &t.tok) == Some(&Tok::Comma) {
                                self.next();
                                continue;
                            }
                            break;
                        }
                    }
                    self.expect(&Tok::RBrace, "`}`")?;
                    groups.push((PartialId::from(pg.as_str()), steps));
                    if matches!(self.peek(), Some(Token { tok: Tok::Word(_), .. })) {
                        continue;
                    }
                    break;
                }
                Ok(ScenarioStep::ExpectSituation(groups))
            }
            "var" => {
                let (name, _) = self.word("a variable name")?;
                self.expect(&Tok::Eq, "`=`")?;
                let value = self.literal()?;
                Ok(ScenarioStep::ExpectVar(VarId::from(name.as_str()), value))
            }
            "outputs" => {
                let mut pairs = Vec::new();
                loop {
                    let (name, _) = self.word("an output name")?;
                    self.expect(&Tok::Eq, "`=`")?;
                    let value = self.literal()?;
                    pairs.push((VarId::from(name.as_str()), value));
                    if self.peek().map(|t| &t.tok) == Some(&Tok::Comma) {
                        self.next();
                        continue;
                    }
                    break;
                }
                Ok(ScenarioStep::ExpectOutputs(pairs))
            }
            "error" => {
                let (name, espan) = self.word("an error kind")?;
                match RunErrorKind::parse(&name) {
                    Some(kind) => Ok(ScenarioStep::ExpectError(kind)),
                    None => self.err(espan, format!("unknown error kind `{name}`")),
                }
            }
            other => self.err(span, format!("unknown expectation kind `{other}`")),
        }
    }
}

pub fn run_scenario(
    model: &AnalyzedModel,
    scenario: &Scenario,
    policy: Policy,
) -> ScenarioResult {
    let mut engine = Engine::new(model, policy);
    let mut last: Option<Result<StableReport, RunError>> = None;
    let mut failures: Vec<ScenarioFailure> = Vec::new();
    let mut trace: Vec<String> = Vec::new();

    for (i, (step, span)) in scenario.steps.iter().enumerate() {
        let n = i + 1;
        let fail = |expected: String, actual: String, failures: &mut Vec<ScenarioFailure>| {
            failures.push(ScenarioFailure { step: n, span: span.clone(), expected, actual });
        };
        match step {
            ScenarioStep::Init => {
                let outcome = engine.initialize();
                push_trace(&mut trace, &outcome);
                last = Some(outcome);
            }
            ScenarioStep::SetInputs(map) => {
                match &last {
                    Some(Ok(_)) => {}
                    Some(Err(e)) => {
                        fail(
                            "a stable situation to apply inputs to".into(),
                            format!("error {}", e.kind),
                            &mut failures,
                        );
                        break;
                    }
                    None => break,
                }
                if let Some(problem) = check_event(model, map) {
                    fail("an event on declared inputs".into(), problem, &mut failures);
                    break;
                }
                let outcome = engine.apply_input_event(map);
                push_trace(&mut trace, &outcome);
                last = Some(outcome);
            }
            ScenarioStep::ExpectSituation(groups) => match &last {
                Some(Ok(report)) => {
                    for (pg, want) in groups {
                        let expected = notation(pg, want);
                        match report.situation_notation(pg) {
                            Some(actual) if actual == expected => {}
                            Some(actual) => fail(expected, actual, &mut failures),
                            None => fail(
                                expected,
                                format!("no partial Grafcet named `{pg}`"),
                                &mut failures,
                            ),
                        }
                    }
                }
                Some(Err(e)) => {
                    let expected = groups
                        .iter()
                        .map(|(pg, want)| notation(pg, want))
                        .collect::<Vec<_>>()
                        .join(" ");
                    fail(expected, format!("error {}", e.kind), &mut failures);
                }
                None => {}
            },
            ScenarioStep::ExpectVar(var, want) => match &last {
                Some(Ok(_)) => match engine.state().valuation.get(var) {
                    Some(actual) if actual == want => {}
                    Some(actual) => {
                        fail(format!("{var}={want}"), format!("{var}={actual}"), &mut failures)
                    }
                    None => fail(
                        format!("{var}={want}"),
                        format!("no variable named `{var}`"),
                        &mut failures,
                    ),
                },
                Some(Err(e)) => {
                    fail(format!("{var}={want}"), format!("error {}", e.kind), &mut failures)
                }
                None => {}
            },
            ScenarioStep::ExpectOutputs(pairs) => match &last {
                Some(Ok(report)) => {
                    for (var, want) in pairs {
                        match report.outputs.get(var) {
                            Some(actual) if actual == want => {}
                            Some(actual) => fail(
                                format!("{var}={want}"),
                                format!("{var}={actual}"),
                                &mut failures,
                            ),
                            None => fail(
                                format!("{var}={want}"),
                                format!("no output named `{var}`"),
                                &mut failures,
                            ),
                        }
                    }
                }
                Some(Err(e)) => {
                    let expected = pairs
                        .iter()
                        .map(|(v, w)| format!("{v}={w}"))
                        .collect::<Vec<_>>()
                        .join(", ");
                    fail(expected, format!("error {}", e.kind), &mut failures);
                }
                None => {}
            },
            ScenarioStep::ExpectError(kind) => match &last {
                Some(Err(e)) if e.kind == *kind => {}
                Some(Err(e)) => {
                    fail(format!("error {kind}"), format!("error {}", e.kind), &mut failures)
                }
                Some(Ok(_)) => {
                    fail(format!("error {kind}"), "a stable situation".into(), &mut failures)
                }
                None => {}
            },
        }
    }

    ScenarioResult { passed: failures.is_empty(), failures, trace }
}

fn notation(pg: &PartialId, steps: &BTreeSet<StepId>) -> String {
    let ids: Vec<&str> = steps.iter().map(|s| s.as_str()).collect();
    format!("{pg}{{{}}}", ids.join(","))
}

/// Returns a description of the first problem with an event map, if any:
/// every variable must be a declared input of a matching type.
fn check_event(model: &AnalyzedModel, map: &BTreeMap<VarId, Value>) -> Option<String> {
    for (var, value) in map {
        match model.variable(var) {
            None => return Some(format!("`{var}` is not declared")),
            Some(d) if d.role != VarRole::Input => {
                return Some(format!("`{var}` is an {} variable, not an input", d.role))
            }
            Some(d) => {
                let matches_type = matches!(
                    (value, d.ty),
                    (Value::Bool(_), VarType::Bool) | (Value::Int(_), VarType::Int)
                );
                if !matches_type {
                    return Some(format!("`{var}` is {}, the value is not", d.ty));
                }
            }
        }
    }
    None
}

fn push_trace(trace: &mut Vec<String>, outcome: &Result<StableReport, RunError>) {
    match outcome {
        Ok(report) => {
            for rec in &report.evolutions {
                trace.push(rec.to_jsonl());
            }
            trace.push(report.to_jsonl());
        }
        Err(error) => {
            for rec in &error.partial_trace {
                trace.push(rec.to_jsonl());
            }
            trace.push(error.to_jsonl());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::analyze;
    use crate::parser::parse_model;

    fn analyzed(src: &str) -> AnalyzedModel {
        analyze(&parse_model("scenario-test.gft", src).expect("fixture parses"))
            .expect("fixture analyzes")
    }

    const M_EV: &str = r#"grafcet "m_ev" {
  var input a: bool;
  var internal y: bool;
  partial G1 {
    initial step 1 { on_event rising(a): y := true; }
    step 2;
    transition t1 { from: 1; to: 2; when: rising(y); }
  }
}"#;

    const M_DIV: &str = r#"grafcet "m_div" {
  partial G1 {
    initial step 1;
    step 2;
    transition t1 { from: 1; to: 2; when: true; }
    transition t2 { from: 2; to: 1; when: true; }
  }
}"#;

    #[test]
    fn statements_parse_in_source_order() {
        let s = parse_scenario("s.gsc", "init; set a=true; expect situation G1{2};").unwrap();
        assert_eq!(s.steps.len(), 3);
        assert_eq!(s.steps[0].0, ScenarioStep::Init);
        assert_eq!(
            s.steps[1].0,
            ScenarioStep::SetInputs(
                [(VarId::from("a"), Value::Bool(true))].into_iter().collect()
            )
        );
        match &s.steps[2].0 {
            ScenarioStep::ExpectSituation(groups) => {
                assert_eq!(groups.len(), 1);
                assert_eq!(groups[0].0, PartialId::from("G1"));
            }
            other => panic!("unexpected step {other:?}"),
        }
    }

    #[test]
    fn scenarios_must_start_with_init() {
        let err = parse_scenario("s.gsc", "set a=true;").unwrap_err();
        assert!(err.message.contains("must start with `init;`"), "{}", err.message);
        let err = parse_scenario("s.gsc", "").unwrap_err();
        assert!(err.message.contains("must start with `init;`"), "{}", err.message);
    }

    #[test]
    fn error_kinds_are_validated_at_parse_time() {
        let err = parse_scenario("s.gsc", "init; expect error totally_new_kind;").unwrap_err();
        assert!(err.message.contains("unknown error kind"), "{}", err.message);
        let ok = parse_scenario("s.gsc", "init; expect error unstable_cycle;").unwrap();
        assert_eq!(ok.steps[1].0, ScenarioStep::ExpectError(RunErrorKind::UnstableCycle));
    }

    #[test]
    fn multi_group_situation_and_multi_var_events_parse() {
        let s = parse_scenario(
            "s.gsc",
            "init; set a=true, b=false, n=-3; expect situation G1{1,2} G2{}; expect outputs O1=true, O2=false;",
        )
        .unwrap();
        match &s.steps[1].0 {
            ScenarioStep::SetInputs(map) => {
                assert_eq!(map[&VarId::from("n")], Value::Int(-3));
            }
            other => panic!("unexpected step {other:?}"),
        }
        match &s.steps[2].0 {
            ScenarioStep::ExpectSituation(groups) => {
                assert_eq!(groups.len(), 2);
                assert!(groups[1].1.is_empty());
            }
            other => panic!("unexpected step {other:?}"),
        }
    }

    #[test]
    fn passing_scenario_reports_no_failures() {
        let model = analyzed(M_EV);
        let scenario = parse_scenario(
            "s.gsc",
            "init; expect situation G1{1}; set a=true; expect situation G1{2}; expect var y=true;",
        )
        .unwrap();
        let result = run_scenario(&model, &scenario, Policy::preemptive());
        assert!(result.passed, "failures: {:?}", result.failures);
        // init ran 1 evolution, the event 2; plus one closing line per run.
        assert_eq!(result.trace.len(), 5);
    }

    #[test]
    fn expected_errors_pass_and_reinit_is_allowed() {
        let model = analyzed(M_DIV);
        let scenario = parse_scenario(
            "s.gsc",
            "init; expect error unstable_cycle; init; expect error unstable_cycle;",
        )
        .unwrap();
        let result = run_scenario(&model, &scenario, Policy::preemptive());
        assert!(result.passed, "failures: {:?}", result.failures);
        assert!(result.trace.last().unwrap().contains("unstable_cycle"));
    }

    #[test]
    fn failed_expectations_list_expected_and_actual() {
        let model = analyzed(M_EV);
        let scenario =
            parse_scenario("s.gsc", "init; expect situation G1{2}; expect var y=true;").unwrap();
        let result = run_scenario(&model, &scenario, Policy::preemptive());
        assert!(!result.passed);
        assert_eq!(result.failures.len(), 2, "both checks fail and both are listed");
        assert_eq!(result.failures[0].expected, "G1{2}");
        assert_eq!(result.failures[0].actual, "G1{1}");
        assert_eq!(result.failures[0].step, 2);
        assert_eq!(result.failures[1].expected, "y=true");
        assert_eq!(result.failures[1].actual, "y=false");
    }

    #[test]
    fn unexpected_errors_poison_the_run_at_the_next_event() {
        let model = analyzed(M_DIV);
        let scenario = parse_scenario(
            "s.gsc",
            "init; set a=true; expect situation G1{1}; expect situation G1{2};",
        )
        .unwrap();
        let result = run_scenario(&model, &scenario, Policy::preemptive());
        assert!(!result.passed);
        // The run stops at the poisoned `set`; the two expectations behind
        // it are never evaluated.
        assert_eq!(result.failures.len(), 1);
        assert_eq!(result.failures[0].step, 2);
        assert!(result.failures[0].actual.contains("unstable_cycle"));
    }

    #[test]
    fn events_on_non_inputs_fail_and_stop() {
        let model = analyzed(M_EV);
        let scenario = parse_scenario("s.gsc", "init; set y=true; set a=true;").unwrap();
        let result = run_scenario(&model, &scenario, Policy::preemptive());
        assert!(!result.passed);
        assert_eq!(result.failures.len(), 1);
        assert!(result.failures[0].actual.contains("not an input"), "{:?}", result.failures);
        // Only the init run is traced.
        assert_eq!(result.trace.len(), 2);
    }

    #[test]
    fn event_segments_split_on_init() {
        let s = parse_scenario(
            "s.gsc",
            "init; set a=true; set a=false; init; set a=true;",
        )
        .unwrap();
        let segments = s.event_segments();
        assert_eq!(segments.len(), 2);
        assert_eq!(segments[0].len(), 2);
        assert_eq!(segments[1].len(), 1);
    }
}
