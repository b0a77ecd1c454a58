//! Canonical text form for models: two-space indent, one variable per
//! declaration, expansions after partials, minimal parentheses. Printing a
//! parsed model and reparsing it yields the same canonical text, which is
//! what the round-trip tests lean on.

use std::fmt::Write as _;

use crate::expr::{CmpOp, Expr};
use crate::model::{Action, ActionKind, GrafcetModel, Step, StepKind, Transition, VariableDecl};

/// Renders the canonical `.gft` text of a model.
pub fn print_model(model: &GrafcetModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "grafcet \"{}\" {{", model.name);
    for v in &model.variables {
        out.push_str(&print_var(v));
    }
    for pg in &model.partials {
        let _ = writeln!(out, "  partial {} {{", pg.id);
        for s in &pg.steps {
            out.push_str(&print_step(s, 2));
        }
        for t in &pg.transitions {
            out.push_str(&print_transition(t, 2));
        }
        out.push_str("  }\n");
    }
    for ex in &model.expansions {
        let _ = writeln!(out, "  expansion {} {{", ex.of_macro);
        for s in &ex.steps {
            out.push_str(&print_step(s, 2));
        }
        for t in &ex.transitions {
            out.push_str(&print_transition(t, 2));
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

fn print_var(v: &VariableDecl) -> String {
    let mut line = format!("  var {} {}: {}", v.role, v.id, v.ty);
    if v.initial != v.ty.default_value() {
        let _ = write!(line, " = {}", v.initial);
    }
    line.push_str(";\n");
    line
}

fn print_step(s: &Step, indent: usize) -> String {
    let pad = "  ".repeat(indent);
    let mut head = pad.clone();
    match s.kind {
        StepKind::Initial => head.push_str("initial "),
        StepKind::Enclosing => head.push_str("enclosing "),
        StepKind::Macro => head.push_str("macro "),
        StepKind::Normal | StepKind::Entry | StepKind::Exit => {}
    }
    let _ = write!(head, "step {}", s.id);
    if s.activation_link {
        head.push_str(" *");
    }
    if !s.encloses.is_empty() {
        let list: Vec<&str> = s.encloses.iter().map(|p| p.as_str()).collect();
        let _ = write!(head, " encloses {}", list.join(", "));
    }
    if s.actions.is_empty() && s.forcings.is_empty() {
        head.push_str(";\n");
        return head;
    }
    head.push_str(" {\n");
    let inner = "  ".repeat(indent + 1);
    for a in &s.actions {
        let _ = writeln!(head, "{inner}{}", print_action(a));
    }
    for f in &s.forcings {
        let _ = writeln!(head, "{inner}force {} {};", f.target, f.spec);
    }
    let _ = writeln!(head, "{pad}}}");
    head
}

fn print_action(a: &Action) -> String {
    match a.kind {
        ActionKind::Continuous => match &a.condition {
            Some(c) => format!("do {} if {};", a.target, print_expr(c)),
            None => format!("do {};", a.target),
        },
        ActionKind::StoredOnActivation => {
            format!("on_activation {} := {};", a.target, print_expr(&a.value))
        }
        ActionKind::StoredOnDeactivation => {
            format!("on_deactivation {} := {};", a.target, print_expr(&a.value))
        }
        ActionKind::StoredOnEvent => {
            let cond = a.condition.as_ref().expect("on_event actions carry a condition");
            format!("on_event {}: {} := {};", print_expr(cond), a.target, print_expr(&a.value))
        }
    }
}

fn print_transition(t: &Transition, indent: usize) -> String {
    let pad = "  ".repeat(indent);
    let ids = |steps: &[crate::ids::StepId]| -> String {
        steps.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
    };
    format!(
        "{pad}transition {} {{ from: {}; to: {}; when: {}; }}\n",
        t.id,
        ids(&t.pre),
        ids(&t.post),
        print_expr(&t.condition)
    )
}

/// Binding strength used to decide where parentheses are required.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Or(..) => 1,
        Expr::And(..) => 2,
        Expr::Cmp(..) => 3,
        Expr::Add(..) | Expr::Sub(..) => 4,
        Expr::Not(_) => 5,
        Expr::BoolLit(_) | Expr::IntLit(_) | Expr::Read(_) | Expr::Rising(_) | Expr::Falling(_) => 6,
    }
}

/// Renders an expression with minimal parentheses.
pub fn print_expr(e: &Expr) -> String {
    fn child(e: &Expr, min: u8) -> String {
        if precedence(e) < min {
            format!("({})", print_expr(e))
        } else {
            print_expr(e)
        }
    }
    match e {
        Expr::BoolLit(b) => b.to_string(),
        Expr::IntLit(n) => {
            if *n < 0 {
                // No unary minus in the language; parenthesised arithmetic
                // keeps negative constants reparseable.
                format!("(0 - {})", n.unsigned_abs())
            } else {
                n.to_string()
            }
        }
        Expr::Read(r) => r.to_string(),
        Expr::Not(inner) => format!("NOT {}", child(inner, 5)),
        Expr::And(a, b) => format!("{} AND {}", child(a, 2), child(b, 3)),
        Expr::Or(a, b) => format!("{} OR {}", child(a, 1), child(b, 2)),
        Expr::Cmp(op, a, b) => {
            let op = match op {
                CmpOp::Eq => "=",
                CmpOp::Ne => "!=",
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            format!("{} {op} {}", child(a, 4), child(b, 4))
        }
        Expr::Add(a, b) => format!("{} + {}", child(a, 4), child(b, 5)),
        Expr::Sub(a, b) => format!("{} - {}", child(a, 4), child(b, 5)),
        Expr::Rising(r) => format!("rising({r})"),
        Expr::Falling(r) => format!("falling({r})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;

    fn roundtrip(src: &str) -> String {
        let model = parse_model("test.gft", src).expect("source parses");
        let printed = print_model(&model);
        let reparsed = parse_model("canonical.gft", &printed).expect("canonical text parses");
        assert_eq!(printed, print_model(&reparsed), "canonical form is a fixed point");
        printed
    }

    #[test]
    fn canonical_form_is_stable() {
        let printed = roundtrip(
            r#"grafcet "demo" {
  var input a  ,b : bool;
  var output O1: bool;
  var internal n: int = -2;
  partial G1 {
    initial step 1 { do O1 if a AND NOT b; };
    enclosing step 2 encloses G2 {
      on_event rising(a): n := n + 1;
      force G3 {INIT};
    }
    transition t1 { from: 1; to: 2; when: rising(a) OR (n + 1) > 3; };
  }
  partial G2 { step 21 *; }
  partial G3 { initial step 31; }
}"#,
        );
        let expected = "grafcet \"demo\" {\n  var input a: bool;\n  var input b: bool;\n  var output O1: bool;\n  var internal n: int = -2;\n  partial G1 {\n    initial step 1 {\n      do O1 if a AND NOT b;\n    }\n    enclosing step 2 encloses G2 {\n      on_event rising(a): n := n + 1;\n      force G3 {INIT};\n    }\n    transition t1 { from: 1; to: 2; when: rising(a) OR n + 1 > 3; }\n  }\n  partial G2 {\n    step 21 *;\n  }\n  partial G3 {\n    initial step 31;\n  }\n}\n";
        assert_eq!(printed, expected);
    }

    #[test]
    fn parentheses_survive_where_needed() {
        let src = r#"grafcet "p" {
  var input a, b, c: bool;
  partial G1 {
    initial step 1;
    step 2;
    transition t1 { from: 1; to: 2; when: (a OR b) AND c; }
    transition t2 { from: 2; to: 1; when: NOT (a AND b); }
  }
}"#;
        let printed = roundtrip(src);
        assert!(printed.contains("when: (a OR b) AND c;"));
        assert!(printed.contains("when: NOT (a AND b);"));
    }

    #[test]
    fn negative_initializers_print_and_reparse() {
        let printed = roundtrip(
            r#"grafcet "n" {
  var internal n: int = -7;
  partial G1 { initial step 1; }
}"#,
        );
        assert!(printed.contains("var internal n: int = -7;"));
    }

    #[test]
    fn empty_from_and_to_lists_roundtrip() {
        let printed = roundtrip(
            r#"grafcet "s" {
  var input c: bool;
  partial G1 {
    initial step 1;
    transition t1 { from: 1; to: ; when: rising(c); }
  }
}"#,
        );
        assert!(printed.contains("{ from: 1; to: ; when: rising(c); }"));
    }
}
