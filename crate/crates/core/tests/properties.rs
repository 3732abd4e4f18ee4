use std::collections::BTreeMap;

use proptest::prelude::*;

use cvn_core::analyze::explore;
use cvn_core::check::check;
use cvn_core::cir::{parse_cir, serialize_cir, ResourceKind};
use cvn_core::expr::{eval_expr, eval_guard, BinOp, BoolExpr, CmpOp, Expr, Literal, Truth3, Value};
use cvn_core::translate::translate;

const T3: [Truth3; 3] = [Truth3::False, Truth3::Unknown, Truth3::True];

fn store() -> BTreeMap<String, Value> {
    BTreeMap::from([("u".to_string(), Value::Top), ("k".to_string(), Value::int(1))])
}

/// A guard that evaluates to the given truth value under `store()`.
fn leaf(t: Truth3) -> BoolExpr {
    match t {
        Truth3::True => BoolExpr::True,
        Truth3::False => BoolExpr::False,
        Truth3::Unknown => BoolExpr::cmp(Expr::var("u"), CmpOp::Eq, Expr::lit(Literal::Int(0))),
    }
}

fn eval(g: &BoolExpr) -> Truth3 {
    eval_guard(g, &store()).unwrap()
}

/// Ordering false < unknown < true; conjunction is min, disjunction max.
fn rank(t: Truth3) -> u8 {
    match t {
        Truth3::False => 0,
        Truth3::Unknown => 1,
        Truth3::True => 2,
    }
}

#[test]
fn quoted_identities() {
    use Truth3::*;
    let and = |a, b| eval(&BoolExpr::and(leaf(a), leaf(b)));
    let or = |a, b| eval(&BoolExpr::or(leaf(a), leaf(b)));
    assert_eq!(and(Unknown, False), False);
    assert_eq!(and(Unknown, True), Unknown);
    assert_eq!(or(Unknown, True), True);
    assert_eq!(or(Unknown, False), Unknown);
}

#[test]
fn truth_tables_all_cells() {
    let table_and = [["F", "F", "F"], ["F", "U", "U"], ["F", "U", "T"]];
    let table_or = [["F", "U", "T"], ["U", "U", "T"], ["T", "T", "T"]];
    let table_not = ["T", "U", "F"];
    let sym = |t: Truth3| match t {
        Truth3::False => "F",
        Truth3::Unknown => "U",
        Truth3::True => "T",
    };
    let mut cells = 0;
    for (i, a) in T3.iter().enumerate() {
        for (j, b) in T3.iter().enumerate() {
            assert_eq!(sym(eval(&BoolExpr::and(leaf(*a), leaf(*b)))), table_and[i][j], "{a} and {b}");
            assert_eq!(sym(eval(&BoolExpr::or(leaf(*a), leaf(*b)))), table_or[i][j], "{a} or {b}");
            cells += 2;
        }
        assert_eq!(sym(eval(&BoolExpr::not(leaf(*a)))), table_not[i], "not {a}");
        cells += 1;
    }
    assert_eq!(cells, 21);
}

fn guard_tree() -> impl Strategy<Value = (BoolExpr, u8)> {
    let leaf_s = prop::sample::select(T3.to_vec()).prop_map(|t| (leaf(t), rank(t)));
    leaf_s.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|((a, x), (b, y))| (BoolExpr::and(a, b), x.min(y))),
            (inner.clone(), inner.clone()).prop_map(|((a, x), (b, y))| (BoolExpr::or(a, b), x.max(y))),
            inner.prop_map(|(a, x)| (BoolExpr::not(a), 2 - x)),
        ]
    })
}

fn int_expr(with_top: bool) -> impl Strategy<Value = Expr> {
    let leaf_s = prop_oneof![
        (-5i64..5).prop_map(|i| Expr::lit(Literal::Int(i))),
        Just(Expr::var("k")),
    ];
    let tree = leaf_s.prop_recursive(3, 16, 2, |inner| {
        (inner.clone(), prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]), inner)
            .prop_map(|(a, op, b)| Expr::bin(a, op, b))
    });
    (tree, any::<bool>(), prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div])).prop_map(
        move |(e, left, op)| {
            if !with_top {
                e
            } else if left {
                Expr::bin(Expr::var("u"), op, e)
            } else {
                Expr::bin(e, op, Expr::var("u"))
            }
        },
    )
}

proptest! {
    #[test]
    fn guards_follow_strong_kleene((g, r) in guard_tree()) {
        prop_assert_eq!(rank(eval(&g)), r);
    }

    #[test]
    fn top_is_absorbing(e in int_expr(true), c in int_expr(false)) {
        let s = store();
        prop_assert_eq!(eval_expr(&e, &s).unwrap(), Value::Top);
        prop_assert!(!eval_expr(&c, &s).unwrap().is_top());
        let cmp = BoolExpr::cmp(e, CmpOp::Le, c);
        prop_assert_eq!(eval(&cmp), Truth3::Unknown);
    }
}

#[derive(Clone, Debug)]
enum Step {
    Critical { lock: usize, write: Option<i64> },
    Nop,
    Read,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        3 => (0usize..3, prop::option::of(-3i64..4)).prop_map(|(lock, write)| Step::Critical { lock, write }),
        1 => Just(Step::Nop),
        1 => Just(Step::Read),
    ]
}

fn program() -> impl Strategy<Value = Vec<Vec<Step>>> {
    prop::collection::vec(prop::collection::vec(step(), 1..4), 1..4)
}

/// Renders threads of well-nested critical sections over three mutexes.
fn render(threads: &[Vec<Step>]) -> String {
    let mut out = String::from(
        "resources:\n  m0: { kind: Mutex }\n  m1: { kind: Mutex }\n  m2: { kind: Mutex }\n  x: { kind: Var, type: Int, init: 0 }\nthreads:\n",
    );
    for (i, steps) in threads.iter().enumerate() {
        out += &format!("  t{i}:\n    body:\n");
        let mut ops = Vec::new();
        for s in steps {
            match s {
                Step::Critical { lock, write } => {
                    ops.push(format!("lock(m{lock})"));
                    if let Some(v) = write {
                        ops.push(format!("write(x, {v})"));
                    }
                    ops.push(format!("drop(m{lock})"));
                }
                Step::Nop => ops.push("nop".into()),
                Step::Read => ops.push("read(x)".into()),
            }
        }
        for (n, op) in ops.iter().enumerate() {
            let next = if n + 1 < ops.len() { format!(", next: t{i}s{}", n + 1) } else { String::new() };
            out += &format!("    - {{ sid: t{i}s{n}, op: {op}{next} }}\n");
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn serialize_then_parse_is_identity(threads in program()) {
        let art = parse_cir(&render(&threads)).unwrap();
        let again = parse_cir(&serialize_cir(&art)).unwrap();
        prop_assert_eq!(&again, &art);
        prop_assert_eq!(serialize_cir(&again), serialize_cir(&art));
    }

    #[test]
    fn explored_states_respect_locks_and_threads(threads in program()) {
        let art = parse_cir(&render(&threads)).unwrap();
        prop_assert!(check(&art).is_empty(), "{:?}", check(&art));
        let net = translate(&art).net;
        let space = explore(&net, 200_000).unwrap();
        let again = explore(&translate(&art).net, 200_000).unwrap();
        prop_assert_eq!(&space.states, &again.states);
        let mutexes: Vec<usize> = art
            .resources
            .iter()
            .filter(|(_, r)| r.kind == ResourceKind::Mutex)
            .map(|(n, _)| net.resource_place(n).unwrap())
            .collect();
        for s in &space.states {
            for &m in &mutexes {
                prop_assert!(s.marking[m] <= 1);
            }
            for f in art.functions.keys() {
                let tokens: u32 = net
                    .places
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.class.owner() == Some(f.as_str()))
                    .map(|(i, _)| s.marking[i])
                    .sum();
                prop_assert!(tokens <= 1);
            }
            for t in net.enabled_transitions(s) {
                let next = net.fire(&net.transitions[t], s).unwrap();
                prop_assert!(space.states.contains(&next));
            }
        }
    }
}

#[test]
fn unknown_branch_explores_both_sides() {
    let doc = "\
resources:
  m: { kind: Mutex }
  x: { kind: Var, type: Int, init: 0 }
protection:
  x: [m]
summaries:
  scramble: { reads: [], writes: [x], calls: [], has_concurrency: false }
threads:
  a:
    body:
    - { sid: a1, op: lock(m), next: a2 }
    - { sid: a2, op: call(scramble), next: a3 }
    - { sid: a3, op: read(x), branch: { if: x > 0, then: a4, else: a5 } }
    - { sid: a4, op: drop(m), next: return }
    - { sid: a5, op: drop(m) }
";
    let art = parse_cir(doc).unwrap();
    assert!(check(&art).is_empty(), "{:?}", check(&art));
    let net = translate(&art).net;
    let space = explore(&net, 1000).unwrap();
    for sid in ["a4", "a5"] {
        let p = net.place(&format!("cp(a,{sid})")).unwrap();
        assert!(space.states.iter().any(|s| s.marking[p] == 1), "{sid} unreachable");
    }
    let x = net.var("x").unwrap();
    assert!(space.states.iter().any(|s| s.valuation[x].is_top()));
}
