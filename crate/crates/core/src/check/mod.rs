//! Deterministic well-formedness checking of CIR artifacts.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::cir::{CirArtifact, FunctionDef, Op, ResourceKind, Sid, Transfer};

mod fix;
pub(crate) mod flow;
mod types;

pub use fix::{autofix, AppliedFix, FixConflict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Autofixable,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CheckError {
    pub code: &'static str,
    pub severity: Severity,
    /// A sid for statement-level rules, otherwise the offending declaration name.
    pub anchor: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.code, self.anchor, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub code: &'static str,
    pub category: &'static str,
    pub title: &'static str,
    pub autofixable: bool,
}

const fn rule(code: &'static str, category: &'static str, title: &'static str) -> Rule {
    Rule {
        code,
        category,
        title,
        autofixable: false,
    }
}

const fn fixable(code: &'static str, category: &'static str, title: &'static str) -> Rule {
    Rule {
        code,
        category,
        title,
        autofixable: true,
    }
}

pub const CATEGORIES: [(&str, &str); 9] = [
    ("E0", "Structural"),
    ("E1", "Name resolution"),
    ("E2", "Type"),
    ("E3", "Resource compatibility"),
    ("E4", "Concurrency"),
    ("E5", "Lock safety"),
    ("E6", "Control flow"),
    ("E7", "Protection map"),
    ("E8", "Function summary"),
];

pub const RULES: &[Rule] = &[
    rule("E001", "E0", "artifact has functions but no entry"),
    rule("E002", "E0", "function body is empty"),
    fixable("E003", "E0", "non-final statement has no transfer"),
    rule("E004", "E0", "artifact defines no functions"),
    rule("E005", "E0", "resource is missing required configuration"),
    rule("E006", "E0", "reserved identifier used"),
    rule("E007", "E0", "configuration field not valid for the resource kind"),
    rule("E101", "E1", "undefined resource"),
    fixable("E102", "E1", "duplicate sid"),
    rule("E103", "E1", "name declared as both resource and function"),
    rule("E104", "E1", "undefined function"),
    rule("E105", "E1", "entry is not a defined function"),
    rule("E106", "E1", "goal references an undefined name"),
    rule("E107", "E1", "paired_with names an undeclared resource"),
    rule("E108", "E1", "protection map names an undeclared resource"),
    rule("E109", "E1", "duplicate goal id"),
    rule("E110", "E1", "enum variant collides with a declared name"),
    rule("E201", "E2", "non-boolean or ill-typed branch condition"),
    rule("E202", "E2", "ill-typed expression"),
    rule("E203", "E2", "assigned value does not match the variable type"),
    rule("E204", "E2", "initial value does not match the declared type"),
    rule("E205", "E2", "switch arm does not match the scrutinee type"),
    rule("E206", "E2", "goal value does not match the variable type"),
    rule("E301", "E3", "lock or drop on a non-lock resource"),
    rule("E302", "E3", "read_lock or write_lock on a non-RwLock"),
    rule("E303", "E3", "wait or notify on a non-Condvar"),
    rule("E304", "E3", "wait uses a mutex other than the paired one"),
    rule("E305", "E3", "acquire or release on a non-Semaphore"),
    rule("E306", "E3", "send or recv on a non-Channel"),
    rule("E307", "E3", "read or write on a non-Var"),
    rule("E308", "E3", "load, store or cas on a non-Atomic"),
    rule("E309", "E3", "unprotected access to a protected variable"),
    rule("E310", "E3", "Condvar paired with a non-Mutex"),
    rule("E401", "E4", "spawn without join"),
    rule("E402", "E4", "join of a function never spawned"),
    rule("E403", "E4", "spawn of the entry or of a function without a body"),
    rule("E404", "E4", "spawn inside a loop"),
    rule("E405", "E4", "function spawned from more than one site"),
    rule("E406", "E4", "await without spawn_async"),
    fixable("E501", "E5", "lock still held at function exit"),
    rule("E502", "E5", "double lock"),
    rule("E503", "E5", "drop of a lock that is not held"),
    rule("E504", "E5", "RwLock mode is ambiguous"),
    rule("E505", "E5", "wait without holding the paired mutex"),
    rule("E601", "E6", "unreachable statement"),
    rule("E602", "E6", "no path to return"),
    rule("E603", "E6", "transfer target is not in the function"),
    rule("E604", "E6", "duplicate switch arm"),
    rule("E701", "E7", "Atomic in protection map"),
    rule("E702", "E7", "protected name is not a Var"),
    rule("E703", "E7", "protecting resource is not a lock"),
    rule("E704", "E7", "empty protection set"),
    rule("E801", "E8", "summary conflicts with body"),
    rule("E802", "E8", "summary names an undeclared resource"),
    rule("E803", "E8", "summary calls an undefined function"),
    rule("E804", "E8", "summary writes a synchronization primitive"),
];

pub fn rule_for(code: &str) -> Option<&'static Rule> {
    RULES.iter().find(|r| r.code == code)
}

/// Tier-1 codes: mechanical defects with a deterministic rewrite.
pub fn is_autofixable(code: &str) -> bool {
    rule_for(code).is_some_and(|r| r.autofixable)
}

pub(crate) struct Sink {
    errors: Vec<CheckError>,
}

impl Sink {
    pub(crate) fn push(&mut self, code: &'static str, anchor: impl Into<String>, message: impl Into<String>) {
        let severity = if is_autofixable(code) {
            Severity::Autofixable
        } else {
            Severity::Error
        };
        self.errors.push(CheckError {
            code,
            severity,
            anchor: anchor.into(),
            message: message.into(),
            suggestion: None,
        });
    }

    pub(crate) fn suggest(&mut self, suggestion: impl Into<String>) {
        if let Some(last) = self.errors.last_mut() {
            last.suggestion = Some(suggestion.into());
        }
    }
}

/// Runs every rule and returns all violations, declaration-level anchors first,
/// then statements in document order, each group ordered by code.
pub fn check(art: &CirArtifact) -> Vec<CheckError> {
    let mut sink = Sink { errors: Vec::new() };
    structural(art, &mut sink);
    names(art, &mut sink);
    types::check_types(art, &mut sink);
    resource_compat(art, &mut sink);
    concurrency(art, &mut sink);
    for f in art.functions.values() {
        flow::check_function(art, f, &mut sink);
    }
    protection(art, &mut sink);
    summaries(art, &mut sink);

    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, s) in art.functions.values().flat_map(|f| f.body.iter()).enumerate() {
        position.entry(s.sid.as_str()).or_insert(i);
    }
    let mut seen = HashSet::new();
    let mut errors: Vec<CheckError> = sink.errors.into_iter().filter(|e| seen.insert(e.clone())).collect();
    errors.sort_by(|a, b| {
        let key = |e: &CheckError| match position.get(e.anchor.as_str()) {
            Some(p) => (1, *p, String::new()),
            None => (0, 0, e.anchor.clone()),
        };
        key(a).cmp(&key(b)).then(a.code.cmp(b.code)).then(a.message.cmp(&b.message))
    });
    errors
}

fn user_functions(art: &CirArtifact) -> impl Iterator<Item = &FunctionDef> {
    art.functions.values().filter(|f| !f.synthetic)
}

fn structural(art: &CirArtifact, sink: &mut Sink) {
    if art.functions.is_empty() {
        sink.push("E004", "functions", "the artifact defines no functions");
    } else if art.entry.is_none() {
        sink.push("E001", "entry", "no entry function is designated");
    }
    for f in art.functions.values() {
        if f.body.is_empty() {
            sink.push("E002", &f.name, format!("function `{}` has an empty body", f.name));
        }
        let last = f.body.len().saturating_sub(1);
        for (i, s) in f.body.iter().enumerate() {
            if s.transfer.is_none() && i < last {
                sink.push("E003", s.sid.as_str(), format!("statement `{}` has no transfer", s.sid));
                sink.suggest(format!("next: {}", f.body[i + 1].sid));
            }
        }
    }
    for r in art.resources.values() {
        let missing = match r.kind {
            ResourceKind::Condvar if r.paired_with.is_none() => Some("paired_with"),
            ResourceKind::Semaphore if r.count.is_none() => Some("count"),
            ResourceKind::Var | ResourceKind::Atomic if r.ty.is_none() => Some("type"),
            ResourceKind::Var | ResourceKind::Atomic if r.init.is_none() => Some("init"),
            ResourceKind::Var | ResourceKind::Atomic
                if r.ty == Some(crate::expr::BaseType::Enum) && r.variants.is_empty() =>
            {
                Some("variants")
            }
            _ => None,
        };
        if let Some(field) = missing {
            sink.push("E005", &r.name, format!("{} `{}` needs `{field}`", r.kind, r.name));
        }
        if r.kind == ResourceKind::Semaphore && r.count.is_some_and(|c| c < 0) {
            sink.push("E005", &r.name, format!("semaphore `{}` has a negative count", r.name));
        }
        let data = r.kind.is_data();
        let stray = [
            ("paired_with", r.paired_with.is_some() && r.kind != ResourceKind::Condvar),
            ("count", r.count.is_some() && r.kind != ResourceKind::Semaphore),
            ("type", r.ty.is_some() && !data),
            ("init", r.init.is_some() && !data),
            (
                "variants",
                !r.variants.is_empty() && r.ty != Some(crate::expr::BaseType::Enum),
            ),
        ];
        for (field, bad) in stray {
            if bad {
                sink.push("E007", &r.name, format!("`{field}` is not valid for {} `{}`", r.kind, r.name));
            }
        }
    }
    let reserved = |s: &str| s.starts_with("__") || s == "return";
    for name in art.resources.keys() {
        if reserved(name) {
            sink.push("E006", name, format!("`{name}` is a reserved name"));
        }
    }
    for f in user_functions(art) {
        if reserved(&f.name) {
            sink.push("E006", &f.name, format!("`{}` is a reserved name", f.name));
        }
        for s in &f.body {
            if reserved(s.sid.as_str()) {
                sink.push("E006", s.sid.as_str(), format!("`{}` is a reserved sid", s.sid));
            }
        }
    }
}

fn names(art: &CirArtifact, sink: &mut Sink) {
    let mut seen: HashSet<&Sid> = HashSet::new();
    for f in art.functions.values() {
        for s in &f.body {
            if !seen.insert(&s.sid) {
                sink.push("E102", s.sid.as_str(), format!("sid `{}` is defined more than once", s.sid));
            }
        }
    }
    for name in art.functions.keys().chain(art.summaries.keys()) {
        if art.resources.contains_key(name) {
            sink.push("E103", name, format!("`{name}` names both a resource and a function"));
        }
    }
    let callable = |n: &str| art.functions.contains_key(n) || art.summaries.contains_key(n);
    for f in art.functions.values() {
        for s in &f.body {
            for r in s.op.resources() {
                if !art.resources.contains_key(r) {
                    sink.push("E101", s.sid.as_str(), format!("`{}` uses undeclared resource `{r}`", s.op));
                }
            }
            if let Some(g) = s.op.function() {
                if !callable(g) {
                    sink.push("E104", s.sid.as_str(), format!("`{}` names undefined function `{g}`", s.op));
                }
            }
        }
    }
    if let Some(e) = &art.entry {
        if !art.functions.contains_key(e) {
            sink.push("E105", "entry", format!("entry `{e}` is not a defined function"));
        }
    }
    let mut ids = HashSet::new();
    for g in &art.goals {
        if !ids.insert(g.id.as_str()) {
            sink.push("E109", &g.id, format!("goal id `{}` is used more than once", g.id));
        }
        for f in &g.completion {
            if !art.functions.contains_key(f) {
                sink.push("E106", &g.id, format!("goal `{}` requires completion of undefined function `{f}`", g.id));
            }
        }
        for r in g.availability.iter().chain(g.variables.keys()) {
            if !art.resources.contains_key(r) {
                sink.push("E106", &g.id, format!("goal `{}` references undeclared resource `{r}`", g.id));
            }
        }
        for r in &g.availability {
            if art.resource_kind(r).is_some_and(|k| !k.is_sync()) {
                sink.push("E106", &g.id, format!("goal `{}` requires availability of `{r}`, which is not a synchronization primitive", g.id));
            }
        }
        for v in g.variables.keys() {
            if art.resource_kind(v).is_some_and(|k| !k.is_data()) {
                sink.push("E106", &g.id, format!("goal `{}` constrains `{v}`, which has no value", g.id));
            }
        }
    }
    for r in art.resources.values() {
        if let Some(p) = &r.paired_with {
            if !art.resources.contains_key(p) {
                sink.push("E107", &r.name, format!("`{}` is paired with undeclared `{p}`", r.name));
            }
        }
        for v in &r.variants {
            if art.resources.contains_key(v) || art.functions.contains_key(v) {
                sink.push("E110", &r.name, format!("variant `{v}` of `{}` collides with a declared name", r.name));
            }
        }
    }
    for (var, locks) in &art.protection {
        for n in std::iter::once(var).chain(locks) {
            if !art.resources.contains_key(n) {
                sink.push("E108", var, format!("protection entry `{var}` names undeclared `{n}`"));
            }
        }
    }
}

fn resource_compat(art: &CirArtifact, sink: &mut Sink) {
    use ResourceKind as K;
    for r in art.resources.values() {
        if let (K::Condvar, Some(p)) = (r.kind, &r.paired_with) {
            if art.resource_kind(p).is_some_and(|k| k != K::Mutex) {
                sink.push("E310", &r.name, format!("condvar `{}` is paired with non-Mutex `{p}`", r.name));
            }
        }
    }
    for f in art.functions.values() {
        for s in &f.body {
            let anchor = s.sid.as_str();
            let expect = |target: &str, ok: &dyn Fn(K) -> bool| art.resource_kind(target).is_some_and(|k| !ok(k));
            let (code, target, want): (&str, &str, &dyn Fn(K) -> bool) = match &s.op {
                Op::Lock { target } | Op::Drop { target } => ("E301", target, &|k: K| k.is_lock()),
                Op::ReadLock { target } | Op::WriteLock { target } => ("E302", target, &|k| k == K::RwLock),
                Op::NotifyOne { condvar } | Op::NotifyAll { condvar } => ("E303", condvar, &|k| k == K::Condvar),
                Op::Wait { condvar, mutex } => {
                    if expect(condvar, &|k| k == K::Condvar) {
                        sink.push("E303", anchor, format!("`{}`: `{condvar}` is not a Condvar", s.op));
                    } else if let Some(p) = art.resource(condvar).and_then(|r| r.paired_with.as_ref()) {
                        if p != mutex && art.resources.contains_key(mutex) {
                            sink.push("E304", anchor, format!("`{}`: `{condvar}` is paired with `{p}`, not `{mutex}`", s.op));
                        }
                    }
                    continue;
                }
                Op::Acquire { target } | Op::Release { target } => ("E305", target, &|k| k == K::Semaphore),
                Op::Send { channel } | Op::Recv { channel } => ("E306", channel, &|k| k == K::Channel),
                Op::Read { var } | Op::Write { var, .. } => ("E307", var, &|k| k == K::Var),
                Op::Load { var } | Op::Store { var, .. } | Op::Cas { var, .. } => ("E308", var, &|k| k == K::Atomic),
                _ => continue,
            };
            if expect(target, want) {
                let kind = art.resource_kind(target).map(|k| k.name()).unwrap_or_default();
                sink.push(code, anchor, format!("`{}` applied to {kind} `{target}`", s.op));
            }
            if let Op::Lock { target } | Op::Drop { target } = &s.op {
                if matches!(s.op, Op::Lock { .. }) && art.resource_kind(target) == Some(K::RwLock) {
                    sink.push("E504", anchor, format!("`{}` on RwLock `{target}` does not say which mode", s.op));
                    sink.suggest(format!("read_lock({target}) or write_lock({target})"));
                }
            }
        }
    }
}

fn concurrency(art: &CirArtifact, sink: &mut Sink) {
    let mut spawn_sites: HashMap<&str, Vec<&Sid>> = HashMap::new();
    for f in art.functions.values() {
        let ops = |pred: &dyn Fn(&Op) -> Option<String>| -> BTreeSet<String> {
            f.body.iter().filter_map(|s| pred(&s.op)).collect()
        };
        let joined = ops(&|op| match op {
            Op::Join { function } => Some(function.clone()),
            _ => None,
        });
        let spawned = ops(&|op| match op {
            Op::Spawn { function } => Some(function.clone()),
            _ => None,
        });
        let spawned_async = ops(&|op| match op {
            Op::SpawnAsync { function } => Some(function.clone()),
            _ => None,
        });
        let cyclic = flow::on_cycle(f);
        for (i, s) in f.body.iter().enumerate() {
            let anchor = s.sid.as_str();
            match &s.op {
                Op::Spawn { function } => {
                    spawn_sites.entry(function).or_default().push(&s.sid);
                    if !joined.contains(function) {
                        sink.push("E401", anchor, format!("`{function}` is spawned but never joined in `{}`", f.name));
                    }
                    let bodiless = art.function(function).is_some_and(|g| g.body.is_empty())
                        || (!art.functions.contains_key(function) && art.summaries.contains_key(function));
                    if bodiless || art.entry.as_deref() == Some(function.as_str()) {
                        sink.push("E403", anchor, format!("`{function}` cannot be spawned"));
                    }
                    if cyclic[i] {
                        sink.push("E404", anchor, format!("spawn of `{function}` sits inside a loop"));
                    }
                }
                Op::Join { function } if !spawned.contains(function) => {
                    sink.push("E402", anchor, format!("`{function}` is joined but never spawned in `{}`", f.name));
                }
                Op::Await { function } if !spawned_async.contains(function) => {
                    sink.push("E406", anchor, format!("`{function}` is awaited but never started in `{}`", f.name));
                }
                _ => {}
            }
        }
    }
    let mut multi: Vec<_> = spawn_sites.into_iter().filter(|(_, v)| v.len() > 1).collect();
    multi.sort();
    for (function, sites) in multi {
        for sid in &sites[1..] {
            sink.push("E405", sid.as_str(), format!("`{function}` is already spawned at `{}`", sites[0]));
        }
    }
}

fn protection(art: &CirArtifact, sink: &mut Sink) {
    for (var, locks) in &art.protection {
        match art.resource_kind(var) {
            Some(ResourceKind::Atomic) => sink.push("E701", var, format!("Atomic `{var}` cannot appear in the protection map")),
            Some(k) if k != ResourceKind::Var => sink.push("E702", var, format!("protected name `{var}` is a {k}, not a Var")),
            _ => {}
        }
        if locks.is_empty() {
            sink.push("E704", var, format!("`{var}` has an empty protection set"));
        }
        for l in locks {
            if art.resource_kind(l).is_some_and(|k| !k.is_lock()) {
                sink.push("E703", var, format!("`{var}` is protected by non-lock `{l}`"));
            }
        }
    }
}

fn summaries(art: &CirArtifact, sink: &mut Sink) {
    for (name, s) in &art.summaries {
        for r in s.reads.iter().chain(&s.writes) {
            match art.resource_kind(r) {
                None => sink.push("E802", name, format!("summary `{name}` names undeclared `{r}`")),
                Some(k) if k.is_sync() && s.writes.contains(r) => {
                    sink.push("E804", name, format!("summary `{name}` writes {k} `{r}`"))
                }
                _ => {}
            }
        }
        for c in &s.calls {
            if !art.functions.contains_key(c) && !art.summaries.contains_key(c) {
                sink.push("E803", name, format!("summary `{name}` calls undefined `{c}`"));
            }
        }
        if let Some(f) = art.function(name).filter(|f| !f.body.is_empty()) {
            let mut writes = BTreeSet::new();
            let mut calls = BTreeSet::new();
            for st in &f.body {
                match &st.op {
                    Op::Write { var, .. } | Op::Store { var, .. } | Op::Cas { var, .. } => {
                        writes.insert(var.as_str());
                    }
                    Op::Call { function } => {
                        calls.insert(function.as_str());
                    }
                    _ => {}
                }
            }
            let declared: BTreeSet<&str> = s.writes.iter().map(String::as_str).collect();
            let declared_calls: BTreeSet<&str> = s.calls.iter().map(String::as_str).collect();
            if writes != declared || calls != declared_calls {
                sink.push("E801", name, format!("summary of `{name}` disagrees with its body"));
            }
        }
    }
}

/// Successor indices of statement `idx` under the effective transfer, ignoring
/// targets outside the function.
pub(crate) fn successors(f: &FunctionDef, idx: usize) -> Vec<usize> {
    match f.effective_transfer(idx) {
        Transfer::Return => Vec::new(),
        t => t.targets().into_iter().filter_map(|s| f.index_of(s)).collect(),
    }
}
