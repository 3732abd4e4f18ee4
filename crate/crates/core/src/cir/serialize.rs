use std::fmt::Write;

use super::{is_ident, CirArtifact, FunctionDef, Statement, Transfer};
use crate::expr::Literal;

fn list(items: &[String]) -> String {
    format!("[{}]", items.join(", "))
}

fn text(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        Literal::Str(s.to_string()).to_string()
    }
}

fn statement(s: &Statement) -> String {
    let mut out = format!("{{ sid: {}, op: {}", s.sid, s.op);
    match &s.transfer {
        None => {}
        Some(Transfer::Return) => out.push_str(", next: return"),
        Some(Transfer::Next { target }) => {
            let _ = write!(out, ", next: {target}");
        }
        Some(Transfer::Branch { cond, then, otherwise }) => {
            let _ = write!(out, ", branch: {{ if: {cond}, then: {then}, else: {otherwise} }}");
        }
        Some(Transfer::Switch { var, arms, default }) => {
            let cases: Vec<String> = arms.iter().map(|(l, t)| format!("{l}: {t}")).collect();
            let _ = write!(
                out,
                ", switch: {{ on: {var}, cases: {{ {} }}, default: {default} }}",
                cases.join(", ")
            );
        }
    }
    out.push_str(" }");
    out
}

fn body(out: &mut String, f: &FunctionDef) {
    if f.body.is_empty() {
        out.push_str("    body: []\n");
        return;
    }
    out.push_str("    body:\n");
    for s in &f.body {
        let _ = writeln!(out, "    - {}", statement(s));
    }
}

/// Renders an artifact in the canonical `.cir` layout. Parsing the output
/// yields an artifact equal to the input.
pub fn serialize_cir(art: &CirArtifact) -> String {
    let mut out = String::new();
    if !art.resources.is_empty() {
        out.push_str("resources:\n");
        for r in art.resources.values() {
            let mut fields = vec![format!("kind: {}", r.kind)];
            if let Some(p) = &r.paired_with {
                fields.push(format!("paired_with: {p}"));
            }
            if let Some(c) = r.count {
                fields.push(format!("count: {c}"));
            }
            if let Some(t) = r.ty {
                fields.push(format!("type: {}", t.name()));
            }
            if !r.variants.is_empty() {
                fields.push(format!("variants: {}", list(&r.variants)));
            }
            if let Some(i) = &r.init {
                fields.push(format!("init: {i}"));
            }
            let _ = writeln!(out, "  {}: {{ {} }}", r.name, fields.join(", "));
        }
    }
    if !art.protection.is_empty() {
        out.push_str("protection:\n");
        for (var, locks) in &art.protection {
            let _ = writeln!(out, "  {var}: {}", list(locks));
        }
    }

    let synthetic = art.functions.values().find(|f| f.synthetic);
    let threads: Vec<&str> = synthetic
        .map(|e| {
            e.body
                .iter()
                .filter_map(|s| match &s.op {
                    super::Op::Spawn { function } => Some(function.as_str()),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();
    if !threads.is_empty() {
        out.push_str("threads:\n");
        for t in &threads {
            if let Some(f) = art.functions.get(*t) {
                let _ = writeln!(out, "  {t}:");
                body(&mut out, f);
            }
        }
    }
    let others: Vec<&FunctionDef> = art
        .functions
        .values()
        .filter(|f| !f.synthetic && !threads.contains(&f.name.as_str()))
        .collect();
    if !others.is_empty() {
        out.push_str("functions:\n");
        for f in others {
            let _ = writeln!(out, "  {}:", f.name);
            let _ = writeln!(out, "    kind: {}", f.kind.name());
            body(&mut out, f);
        }
    }
    if !art.summaries.is_empty() {
        out.push_str("summaries:\n");
        for (name, s) in &art.summaries {
            let _ = writeln!(
                out,
                "  {name}: {{ reads: {}, writes: {}, calls: {}, has_concurrency: {} }}",
                list(&s.reads),
                list(&s.writes),
                list(&s.calls),
                s.has_concurrency
            );
        }
    }
    if synthetic.is_none() {
        if let Some(e) = &art.entry {
            let _ = writeln!(out, "entry: {e}");
        }
    }
    if !art.goals.is_empty() {
        out.push_str("goals:\n");
        for g in &art.goals {
            let _ = writeln!(out, "- id: {}", text(&g.id));
            if !g.description.is_empty() {
                let _ = writeln!(out, "  desc: {}", Literal::Str(g.description.clone()));
            }
            if !g.completion.is_empty() {
                let pairs: Vec<String> = g.completion.iter().map(|f| format!("[{f}, completed]")).collect();
                let _ = writeln!(out, "  completion: [{}]", pairs.join(", "));
            }
            if !g.availability.is_empty() {
                let pairs: Vec<String> = g.availability.iter().map(|r| format!("[{r}, available]")).collect();
                let _ = writeln!(out, "  availability: [{}]", pairs.join(", "));
            }
            if !g.variables.is_empty() {
                let vars: Vec<String> = g.variables.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                let _ = writeln!(out, "  variables: {{ {} }}", vars.join(", "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_cir;

    #[test]
    fn round_trip_with_threads_and_goals() {
        let doc = "resources:\n  m0: { kind: Mutex }\n  cv: { kind: Condvar, paired_with: m0 }\n  ready: { kind: Var, type: Bool, init: false }\nprotection:\n  ready: [m0]\nthreads:\n  A:\n    body:\n    - { sid: a1, op: lock(m0) }\n    - { sid: a2, op: wait(cv, m0) }\n    - { sid: a3, op: unlock(m0) }\n  B:\n    body:\n    - { sid: b1, op: lock(m0) }\n    - { sid: b2, op: write(ready, true) }\n    - { sid: b3, op: notify_one(cv) }\n    - { sid: b4, op: drop(m0), next: return }\ngoals:\n- id: G1\n  desc: \"both finish, lock free\"\n  completion: [[A, completed], [B, completed]]\n  availability: [[m0, available]]\n  variables: { ready: true }\n";
        let a = parse_cir(doc).unwrap();
        assert_eq!(a.entry.as_deref(), Some(crate::cir::IMPLICIT_ENTRY));
        let text = serialize_cir(&a);
        assert!(text.contains("op: drop(m0)"));
        assert!(!text.contains("__entry"));
        assert_eq!(parse_cir(&text).unwrap(), a);
    }

    #[test]
    fn round_trip_functions_and_summaries() {
        let doc = "resources:\n  x: { kind: Var, type: Int, init: 0 }\nfunctions:\n  main:\n    kind: normal\n    body:\n    - { sid: s1, op: call(helper) }\n    - { sid: s2, op: write(x, x + 1), branch: { if: x > 1, then: s3, else: s1 } }\n    - { sid: s3, op: nop, next: return }\nsummaries:\n  helper: { reads: [x], writes: [], calls: [], has_concurrency: false }\nentry: main\n";
        let a = parse_cir(doc).unwrap();
        assert_eq!(parse_cir(&serialize_cir(&a)).unwrap(), a);
    }
}
