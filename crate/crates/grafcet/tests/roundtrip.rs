//! Randomized round-trip checks for the canonical printer.
//!
//! Two properties, checked over generated inputs rather than hand-picked
//! examples:
//!
//! 1. any expression the grammar can denote reparses to the *same AST*
//!    after printing (minimal parentheses must still pin associativity), and
//! 2. the canonical text of a whole model is a fixed point of
//!    parse-then-print.
//!
//! Generators are type-directed because the parser type-checks: conditions
//! must be bool, assignment values must match their target, continuous
//! action conditions may not contain edge atoms while `on_event` conditions
//! must contain one.

use proptest::prelude::*;
use proptest::strategy::Union;

use grafcet::expr::{CmpOp, Expr, VarRef};
use grafcet::ids::{StepId, VarId};
use grafcet::parser::parse_model;
use grafcet::printer::{print_expr, print_model};

// ---------------------------------------------------------------------------
// Expression generators
//
// Leaves draw from a fixed pool of declarations so the embedding templates
// below always resolve: `a`/`b` are bool inputs, `n` an int input, `k` an
// int internal, and the listed steps provide `X<id>` activity reads.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct Pool {
    /// Permit rising/falling leaves (continuous-action conditions may not
    /// contain them).
    edges: bool,
    /// Step ids available for `X<id>` activity reads.
    steps: &'static [&'static str],
}

fn int_expr() -> BoxedStrategy<Expr> {
    let leaf = prop_oneof![
        (0i64..1000).prop_map(Expr::IntLit),
        Just(Expr::read("n")),
        Just(Expr::read("k")),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
        ]
    })
    .boxed()
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge),
    ]
}

fn bool_leaf(pool: Pool) -> BoxedStrategy<Expr> {
    let mut leaves: Vec<BoxedStrategy<Expr>> = vec![
        any::<bool>().prop_map(Expr::BoolLit).boxed(),
        Just(Expr::read("a")).boxed(),
        Just(Expr::read("b")).boxed(),
    ];
    for s in pool.steps {
        leaves.push(Just(Expr::Read(VarRef::StepActivity(StepId::new(*s)))).boxed());
    }
    if pool.edges {
        leaves.push(Just(Expr::Rising(VarRef::Var(VarId::new("a")))).boxed());
        leaves.push(Just(Expr::Falling(VarRef::Var(VarId::new("b")))).boxed());
    }
    Union::new(leaves).boxed()
}

fn bool_expr_in(pool: Pool) -> BoxedStrategy<Expr> {
    bool_leaf(pool)
        .prop_recursive(4, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Not(Box::new(e))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::And(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Or(Box::new(a), Box::new(b))),
                (cmp_op(), int_expr(), int_expr())
                    .prop_map(|(op, a, b)| Expr::Cmp(op, Box::new(a), Box::new(b))),
            ]
        })
        .boxed()
}

fn bool_expr() -> BoxedStrategy<Expr> {
    bool_expr_in(Pool { edges: true, steps: &["1", "2"] })
}

// ---------------------------------------------------------------------------
// Property 1: expressions reparse to the same AST.
// ---------------------------------------------------------------------------

fn embed_condition(cond: &Expr) -> String {
    format!(
        "grafcet \"rt\" {{\n  var input a: bool;\n  var input b: bool;\n  \
         var input n: int;\n  var internal k: int;\n  partial G1 {{\n    \
         initial step 1;\n    step 2;\n    \
         transition t1 {{ from: 1; to: 2; when: {}; }}\n  }}\n}}\n",
        print_expr(cond)
    )
}

fn embed_assignment(value: &Expr) -> String {
    format!(
        "grafcet \"rt\" {{\n  var input a: bool;\n  var input b: bool;\n  \
         var input n: int;\n  var internal k: int;\n  partial G1 {{\n    \
         initial step 1;\n    step 2 {{ on_activation k := {}; }}\n    \
         transition t1 {{ from: 1; to: 2; when: a; }}\n  }}\n}}\n",
        print_expr(value)
    )
}

proptest! {
    #[test]
    fn printed_conditions_reparse_to_the_same_ast(cond in bool_expr()) {
        let src = embed_condition(&cond);
        let parsed = parse_model("rt.gft", &src);
        prop_assert!(
            parsed.is_ok(),
            "printed condition failed to reparse: {:?}\nsource:\n{}",
            parsed.err(),
            src
        );
        let model = parsed.unwrap();
        prop_assert_eq!(&model.partials[0].transitions[0].condition, &cond);
    }

    #[test]
    fn printed_assignment_values_reparse_to_the_same_ast(value in int_expr()) {
        let src = embed_assignment(&value);
        let parsed = parse_model("rt.gft", &src);
        prop_assert!(
            parsed.is_ok(),
            "printed assignment failed to reparse: {:?}\nsource:\n{}",
            parsed.err(),
            src
        );
        let model = parsed.unwrap();
        prop_assert_eq!(&model.partials[0].steps[1].actions[0].value, &value);
    }
}

// ---------------------------------------------------------------------------
// Property 2: whole-model canonical form is a fixed point.
//
// A model sketch is rendered to source text that is valid by construction;
// the property then checks parse -> print -> parse -> print stabilises after
// one step.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum ActionSketch {
    Continuous(Option<Expr>),
    OnActivation(Expr),
    OnDeactivation(Expr),
    OnEvent(Expr, Expr),
}

#[derive(Clone, Debug)]
struct StepSketch {
    actions: Vec<ActionSketch>,
    force_spec: Option<&'static str>,
}

#[derive(Clone, Debug)]
struct TransitionSketch {
    pre: Vec<usize>,
    post: Vec<usize>,
    cond: Expr,
}

#[derive(Clone, Debug)]
struct ModelSketch {
    k_init: i64,
    partials: Vec<(Vec<StepSketch>, Vec<TransitionSketch>)>,
}

/// Step-activity reads inside a sketch stick to step 1, the only step that
/// exists in every generated model.
const SKETCH_POOL: Pool = Pool { edges: true, steps: &["1"] };
const CALM_POOL: Pool = Pool { edges: false, steps: &["1"] };

fn eventful_bool_expr() -> BoxedStrategy<Expr> {
    bool_expr_in(SKETCH_POOL)
        .prop_map(|c| {
            if c.has_edge_atom() {
                c
            } else {
                Expr::And(Box::new(Expr::Rising(VarRef::Var(VarId::new("a")))), Box::new(c))
            }
        })
        .boxed()
}

fn action_sketch() -> BoxedStrategy<ActionSketch> {
    prop_oneof![
        proptest::option::of(bool_expr_in(CALM_POOL)).prop_map(ActionSketch::Continuous),
        int_expr().prop_map(ActionSketch::OnActivation),
        bool_expr_in(SKETCH_POOL).prop_map(ActionSketch::OnDeactivation),
        (eventful_bool_expr(), int_expr()).prop_map(|(c, e)| ActionSketch::OnEvent(c, e)),
    ]
    .boxed()
}

fn step_sketch() -> BoxedStrategy<StepSketch> {
    let spec = prop_oneof![
        Just(None),
        Just(Some("{}")),
        Just(Some("{INIT}")),
        Just(Some("{*}")),
        Just(Some("{11}")),
    ];
    (proptest::collection::vec(action_sketch(), 0..=2), spec)
        .prop_map(|(actions, force_spec)| StepSketch { actions, force_spec })
        .boxed()
}

fn transition_sketch(nsteps: usize) -> impl Strategy<Value = TransitionSketch> {
    (
        proptest::collection::btree_set(0..nsteps, 0..=nsteps),
        proptest::collection::btree_set(0..nsteps, 0..=nsteps),
        bool_expr_in(SKETCH_POOL),
    )
        .prop_map(|(pre, post, cond)| TransitionSketch {
            pre: pre.into_iter().collect(),
            post: post.into_iter().collect(),
            cond,
        })
}

fn partial_sketch() -> BoxedStrategy<(Vec<StepSketch>, Vec<TransitionSketch>)> {
    (1usize..=3)
        .prop_flat_map(|nsteps| {
            (
                proptest::collection::vec(step_sketch(), nsteps),
                proptest::collection::vec(transition_sketch(nsteps), 0..=2),
            )
        })
        .boxed()
}

fn model_sketch() -> BoxedStrategy<ModelSketch> {
    (-3i64..=3, proptest::collection::vec(partial_sketch(), 1..=2))
        .prop_map(|(k_init, partials)| ModelSketch { k_init, partials })
        .boxed()
}

fn render_action(a: &ActionSketch) -> String {
    match a {
        ActionSketch::Continuous(None) => "do o;".to_owned(),
        ActionSketch::Continuous(Some(c)) => format!("do o if {};", print_expr(c)),
        ActionSketch::OnActivation(e) => format!("on_activation k := {};", print_expr(e)),
        ActionSketch::OnDeactivation(e) => format!("on_deactivation o := {};", print_expr(e)),
        ActionSketch::OnEvent(c, e) => {
            format!("on_event {}: k := {};", print_expr(c), print_expr(e))
        }
    }
}

fn render(sketch: &ModelSketch) -> String {
    let mut src = String::new();
    src.push_str("grafcet \"sketch\" {\n");
    src.push_str("  var input a: bool;\n");
    src.push_str("  var input b: bool;\n");
    src.push_str("  var input n: int;\n");
    src.push_str(&format!("  var internal k: int = {};\n", sketch.k_init));
    src.push_str("  var output o: bool;\n");
    for (p, (steps, transitions)) in sketch.partials.iter().enumerate() {
        src.push_str(&format!("  partial G{} {{\n", p + 1));
        for (j, st) in steps.iter().enumerate() {
            let id = p * 10 + j + 1;
            let head = if j == 0 { "initial step" } else { "step" };
            // Forcing orders target G2's initial step, so they only render
            // when a second partial exists and only from the first one.
            let force = st.force_spec.filter(|_| p == 0 && sketch.partials.len() == 2);
            if st.actions.is_empty() && force.is_none() {
                src.push_str(&format!("    {head} {id};\n"));
            } else {
                src.push_str(&format!("    {head} {id} {{\n"));
                for a in &st.actions {
                    src.push_str(&format!("      {}\n", render_action(a)));
                }
                if let Some(spec) = force {
                    src.push_str(&format!("      force G2 {spec};\n"));
                }
                src.push_str("    }\n");
            }
        }
        for (q, t) in transitions.iter().enumerate() {
            let ids = |xs: &[usize]| {
                xs.iter().map(|j| (p * 10 + j + 1).to_string()).collect::<Vec<_>>().join(", ")
            };
            src.push_str(&format!(
                "    transition t{}{} {{ from: {}; to: {}; when: {}; }}\n",
                p + 1,
                q + 1,
                ids(&t.pre),
                ids(&t.post),
                print_expr(&t.cond)
            ));
        }
        src.push_str("  }\n");
    }
    src.push_str("}\n");
    src
}

proptest! {
    #[test]
    fn canonical_model_text_is_a_fixed_point(sketch in model_sketch()) {
        let src = render(&sketch);
        let parsed = parse_model("sketch.gft", &src);
        prop_assert!(
            parsed.is_ok(),
            "generated model failed to parse: {:?}\nsource:\n{}",
            parsed.err(),
            src
        );
        let first = print_model(&parsed.unwrap());

        let reparsed = parse_model("canonical.gft", &first);
        prop_assert!(
            reparsed.is_ok(),
            "canonical text failed to reparse: {:?}\ncanonical:\n{}",
            reparsed.err(),
            first
        );
        let second = print_model(&reparsed.unwrap());
        prop_assert_eq!(first, second);
    }
}
