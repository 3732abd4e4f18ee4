use cvn_core::check::{autofix, check, is_autofixable, RULES};
use cvn_core::cir::{parse_cir, CirArtifact, Op, Sid, Transfer};

const FIG2: &str = include_str!("../../../fixtures/fig2.cir");

fn codes(doc: &str) -> Vec<&'static str> {
    let art = parse_cir(doc).unwrap_or_else(|e| panic!("{e}\n{doc}"));
    check(&art).into_iter().map(|e| e.code).collect()
}

/// A single-function artifact with the given resources and body lines.
fn single(resources: &str, body: &str) -> String {
    format!("resources:\n{resources}functions:\n  main:\n    kind: normal\n    body:\n{body}entry: main\n")
}

fn threads(resources: &str, rest: &str) -> String {
    format!("resources:\n{resources}threads:\n{rest}")
}

const M: &str = "  m: { kind: Mutex }\n";
const MX: &str = "  m: { kind: Mutex }\n  x: { kind: Var, type: Int, init: 0 }\n";

fn cases() -> Vec<(&'static str, String)> {
    vec![
        ("E001", "functions:\n  main:\n    kind: normal\n    body:\n    - { sid: s1, op: nop }\n".into()),
        ("E002", single(M, "    - { sid: s1, op: spawn(w), next: s2 }\n    - { sid: s2, op: join(w) }\n").replace("entry: main", "  w:\n    kind: normal\n    body: []\nentry: main")),
        ("E003", single(M, "    - { sid: s1, op: nop }\n    - { sid: s2, op: nop }\n")),
        ("E004", "resources:\n  x: { kind: Var, type: Int, init: 0 }\nthreads:\n".into()),
        ("E005", single("  cv: { kind: Condvar }\n", "    - { sid: s1, op: nop }\n")),
        ("E006", single(M, "    - { sid: __s1, op: nop }\n")),
        ("E007", single("  m: { kind: Mutex, count: 2 }\n", "    - { sid: s1, op: nop }\n")),
        ("E101", single(M, "    - { sid: s1, op: lock(q), next: s2 }\n    - { sid: s2, op: drop(q) }\n")),
        ("E102", threads(M, "  a:\n    body:\n    - { sid: s1, op: nop }\n  b:\n    body:\n    - { sid: s1, op: nop }\n")),
        ("E103", single(MX, "    - { sid: s1, op: nop }\n").replace("  x: {", "  main: {")),
        ("E104", single(M, "    - { sid: s1, op: call(helper) }\n")),
        ("E105", single(M, "    - { sid: s1, op: nop }\n").replace("entry: main", "entry: other")),
        ("E106", format!("{}goals:\n  - id: G\n    completion:\n      - [ghost, completed]\n", single(M, "    - { sid: s1, op: nop }\n"))),
        ("E107", single("  cv: { kind: Condvar, paired_with: m }\n", "    - { sid: s1, op: nop }\n")),
        ("E108", format!("{}protection:\n  y: [m]\n", single(M, "    - { sid: s1, op: nop }\n"))),
        ("E109", format!("{}goals:\n  - id: G\n    completion:\n      - [main, completed]\n  - id: G\n    completion:\n      - [main, completed]\n", single(M, "    - { sid: s1, op: nop }\n"))),
        ("E110", single("  m: { kind: Mutex }\n  st: { kind: Var, type: Enum, variants: [m, b], init: b }\n", "    - { sid: s1, op: nop }\n")),
        ("E201", single(MX, "    - { sid: s1, op: read(x), branch: { if: x, then: s2, else: s2 } }\n    - { sid: s2, op: nop }\n")),
        ("E202", single("  x: { kind: Var, type: Bool, init: false }\n", "    - { sid: s1, op: write(x, x + 1) }\n")),
        ("E203", single("  x: { kind: Var, type: Bool, init: false }\n", "    - { sid: s1, op: write(x, 3) }\n")),
        ("E204", single("  x: { kind: Var, type: Int, init: true }\n", "    - { sid: s1, op: nop }\n")),
        ("E205", single("  x: { kind: Var, type: Int, init: 0 }\n", "    - { sid: s1, op: read(x), switch: { on: x, cases: { true: s2 }, default: s2 } }\n    - { sid: s2, op: nop }\n")),
        ("E206", format!("{}goals:\n  - id: G\n    variables:\n      x: true\n", single("  x: { kind: Var, type: Int, init: 0 }\n", "    - { sid: s1, op: nop }\n"))),
        ("E301", single("  x: { kind: Var, type: Int, init: 0 }\n", "    - { sid: s1, op: lock(x) }\n")),
        ("E302", single(M, "    - { sid: s1, op: read_lock(m) }\n")),
        ("E303", single(M, "    - { sid: s1, op: notify_one(m) }\n")),
        ("E304", single("  m: { kind: Mutex }\n  k: { kind: Mutex }\n  cv: { kind: Condvar, paired_with: m }\n", "    - { sid: s1, op: lock(k), next: s2 }\n    - { sid: s2, op: wait(cv, k), next: s3 }\n    - { sid: s3, op: drop(k) }\n")),
        ("E305", single(M, "    - { sid: s1, op: acquire(m) }\n")),
        ("E306", single(M, "    - { sid: s1, op: send(m) }\n")),
        ("E307", single("  a: { kind: Atomic, type: Int, init: 0 }\n", "    - { sid: s1, op: read(a) }\n")),
        ("E308", single(MX, "    - { sid: s1, op: load(x) }\n")),
        ("E309", format!("{}protection:\n  x: [m]\n", single(MX, "    - { sid: s1, op: write(x, 1) }\n"))),
        ("E310", single("  k: { kind: Semaphore, count: 1 }\n  cv: { kind: Condvar, paired_with: k }\n", "    - { sid: s1, op: nop }\n")),
        ("E401", threads(M, "  a:\n    body:\n    - { sid: a1, op: spawn(b) }\n  b:\n    body:\n    - { sid: b1, op: nop }\n")),
        ("E402", threads(M, "  a:\n    body:\n    - { sid: a1, op: join(b) }\n  b:\n    body:\n    - { sid: b1, op: nop }\n")),
        ("E403", format!("{}summaries:\n  ext: {{ reads: [], writes: [], calls: [], has_concurrency: false }}\n", single(M, "    - { sid: s1, op: spawn(ext), next: s2 }\n    - { sid: s2, op: join(ext) }\n"))),
        ("E404", threads(MX, "  a:\n    body:\n    - { sid: a1, op: spawn(b), next: a2 }\n    - { sid: a2, op: read(x), branch: { if: x == 0, then: a1, else: a3 } }\n    - { sid: a3, op: join(b) }\n  b:\n    body:\n    - { sid: b1, op: nop }\n")),
        ("E405", threads(M, "  a:\n    body:\n    - { sid: a1, op: spawn(c), next: a2 }\n    - { sid: a2, op: join(c) }\n  b:\n    body:\n    - { sid: b1, op: spawn(c), next: b2 }\n    - { sid: b2, op: join(c) }\n  c:\n    body:\n    - { sid: c1, op: nop }\n")),
        ("E406", threads(M, "  a:\n    body:\n    - { sid: a1, op: await(b) }\n  b:\n    body:\n    - { sid: b1, op: nop }\n")),
        ("E501", single(M, "    - { sid: s1, op: lock(m) }\n")),
        ("E502", single(M, "    - { sid: s1, op: lock(m), next: s2 }\n    - { sid: s2, op: lock(m), next: s3 }\n    - { sid: s3, op: drop(m) }\n")),
        ("E503", single(M, "    - { sid: s1, op: drop(m) }\n")),
        ("E504", single("  rw: { kind: RwLock }\n", "    - { sid: s1, op: lock(rw), next: s2 }\n    - { sid: s2, op: drop(rw) }\n")),
        ("E505", single("  m: { kind: Mutex }\n  cv: { kind: Condvar, paired_with: m }\n", "    - { sid: s1, op: wait(cv, m) }\n")),
        ("E601", single(M, "    - { sid: s1, op: nop, next: return }\n    - { sid: s2, op: nop }\n")),
        ("E602", single(M, "    - { sid: s1, op: nop, next: s1 }\n")),
        ("E603", single(M, "    - { sid: s1, op: nop, next: s9 }\n")),
        ("E604", single(MX, "    - { sid: s1, op: read(x), switch: { on: x, cases: { 1: s2, 01: s2 }, default: s2 } }\n    - { sid: s2, op: nop }\n")),
        ("E701", format!("{}protection:\n  a: [m]\n", single("  m: { kind: Mutex }\n  a: { kind: Atomic, type: Int, init: 0 }\n", "    - { sid: s1, op: nop }\n"))),
        ("E702", format!("{}protection:\n  k: [m]\n", single("  m: { kind: Mutex }\n  k: { kind: Mutex }\n", "    - { sid: s1, op: nop }\n"))),
        ("E703", format!("{}protection:\n  x: [c]\n", single("  x: { kind: Var, type: Int, init: 0 }\n  c: { kind: Channel }\n", "    - { sid: s1, op: nop }\n"))),
        ("E704", format!("{}protection:\n  x: []\n", single(MX, "    - { sid: s1, op: nop }\n"))),
        ("E801", format!("{}summaries:\n  main: {{ reads: [], writes: [x], calls: [], has_concurrency: false }}\n", single(MX, "    - { sid: s1, op: nop }\n"))),
        ("E802", format!("{}summaries:\n  ext: {{ reads: [nothing], writes: [], calls: [], has_concurrency: false }}\n", single(M, "    - { sid: s1, op: call(ext) }\n"))),
        ("E803", format!("{}summaries:\n  ext: {{ reads: [], writes: [], calls: [nowhere], has_concurrency: false }}\n", single(M, "    - { sid: s1, op: call(ext) }\n"))),
        ("E804", format!("{}summaries:\n  ext: {{ reads: [], writes: [m], calls: [], has_concurrency: false }}\n", single(M, "    - { sid: s1, op: call(ext) }\n"))),
    ]
}

#[test]
fn every_rule_has_a_triggering_artifact() {
    let cases = cases();
    for rule in RULES {
        let (_, doc) = cases
            .iter()
            .find(|(c, _)| *c == rule.code)
            .unwrap_or_else(|| panic!("no case for {}", rule.code));
        let found = codes(doc);
        assert!(found.contains(&rule.code), "{}: got {found:?}\n{doc}", rule.code);
    }
    assert_eq!(cases.len(), RULES.len());
}

#[test]
fn fig2_is_accepted() {
    assert_eq!(codes(FIG2), Vec::<&str>::new());
}

fn fig2_without_w3() -> CirArtifact {
    let mut art = parse_cir(FIG2).unwrap();
    let worker = art.functions.get_mut("worker").unwrap();
    worker.body.pop();
    worker.body[1].transfer = None;
    art
}

#[test]
fn missing_unlock_is_the_only_error_and_autofixes() {
    let art = fig2_without_w3();
    let errs = check(&art);
    assert_eq!(errs.iter().map(|e| (e.code, e.anchor.as_str())).collect::<Vec<_>>(), [("E501", "w2")]);
    assert!(is_autofixable("E501"));
    let (fixed, applied) = autofix(&art, &errs).unwrap();
    assert_eq!(applied.len(), 1);
    let worker = &fixed.functions["worker"];
    assert_eq!(worker.body[2].sid, Sid::new("w3_fix0"));
    assert_eq!(worker.body[2].op, Op::Drop { target: "m0".into() });
    assert_eq!(worker.body[1].transfer, Some(Transfer::next("w3_fix0")));
    assert!(check(&fixed).is_empty());
}

#[test]
fn undeclared_condvar_is_a_name_error() {
    let doc = FIG2.replace("wait(cv0, m0)", "wait(cvX, m0)");
    let found = codes(&doc);
    assert!(found.contains(&"E101"), "{found:?}");
    assert!(found.iter().all(|c| c.starts_with("E1")), "{found:?}");
}

#[test]
fn duplicate_sid_is_renamed_and_repointed() {
    let mut art = parse_cir(FIG2).unwrap();
    let notifier = art.functions.get_mut("notifier").unwrap();
    notifier.body[2].sid = Sid::new("n2");
    notifier.body[1].transfer = Some(Transfer::next("n2"));
    let errs = check(&art);
    assert!(errs.iter().any(|e| e.code == "E102"));
    let (fixed, _) = autofix(&art, &errs).unwrap();
    let body = &fixed.functions["notifier"].body;
    assert_eq!(body[2].sid, Sid::new("n2__1"));
    assert_eq!(body[1].transfer, Some(Transfer::next("n2__1")));
    assert!(check(&fixed).iter().all(|e| !e.code.starts_with("E1")));
    assert!(check(&fixed).is_empty());
}

#[test]
fn omitted_transfer_is_filled_in() {
    let art = parse_cir(&single(M, "    - { sid: s1, op: lock(m) }\n    - { sid: s2, op: drop(m) }\n")).unwrap();
    let errs = check(&art);
    assert_eq!(errs.iter().map(|e| e.code).collect::<Vec<_>>(), ["E003"]);
    let (fixed, applied) = autofix(&art, &errs).unwrap();
    assert_eq!(applied[0].code, "E003");
    assert!(check(&fixed).is_empty());
}

#[test]
fn no_errors_means_no_fixes() {
    let art = parse_cir(FIG2).unwrap();
    let (fixed, applied) = autofix(&art, &[]).unwrap();
    assert_eq!(fixed, art);
    assert!(applied.is_empty());
}

#[test]
fn check_is_deterministic() {
    let art = parse_cir(&FIG2.replace("wait(cv0, m0)", "wait(cvX, q)")).unwrap();
    assert_eq!(check(&art), check(&art.clone()));
}
