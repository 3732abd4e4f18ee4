//! Repair-oriented diagnostics: bug selection, the diagnostic tuple, prompt
//! text, goal-violation feedback and the verdict report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;

use crate::analyze::{blocked_transitions, Analysis, BugFinding, BugKind, GoalResult, StateSpace};
use crate::check::CheckError;
use crate::cir::{CirArtifact, ResourceKind, Sid, SID_BOTTOM};
use crate::cvn::{ControlPoint, Cvn, CvnState, PlaceClass, Tag};
use crate::translate::GoalQuery;

/// Statements kept on each side of a blamed sid in the slice.
pub const SLICE_RADIUS: usize = 2;

/// Chooses one finding: by kind priority, then witness length, then the
/// witness sid sequence.
pub fn select_bug<'a>(findings: &'a [BugFinding], net: &Cvn, space: &StateSpace) -> Option<&'a BugFinding> {
    findings.iter().min_by(|a, b| {
        let key = |f: &BugFinding| {
            let sids: Vec<&str> = f
                .witness
                .iter()
                .map(|&e| net.transitions[space.edges[e].transition].anchor.as_str())
                .collect();
            (f.kind.priority(), f.witness.len(), sids, f.thread.clone(), f.state)
        };
        key(a).cmp(&key(b))
    })
}

pub fn hint(kind: BugKind) -> &'static str {
    match kind {
        BugKind::Deadlock => "enforce a consistent lock order",
        BugKind::SignalLoss => "update the predicate before notification and re-check it in a loop around the wait",
        BugKind::ChannelBlock => "release held locks before blocking on a channel, and make every recv matched by a reachable send",
        BugKind::LivelockWarning => "give every retry loop an exit that some other thread is guaranteed to enable",
        BugKind::StarvationWarning => "let the frozen thread obtain what it waits for, for example by a consistent lock order",
    }
}

fn resource_label(kind: ResourceKind) -> &'static str {
    match kind {
        ResourceKind::Mutex => "mutex",
        ResourceKind::RwLock => "rwlock",
        ResourceKind::Condvar => "condvar",
        ResourceKind::Semaphore => "semaphore",
        ResourceKind::Channel => "channel",
        ResourceKind::Var => "variable",
        ResourceKind::Atomic => "atomic",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThreadStatus {
    pub thread: String,
    /// Current sid, `ret` when finished, `-` when not running.
    pub at: String,
    pub blocked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateSummary {
    pub threads: Vec<ThreadStatus>,
    pub variables: Vec<(String, String)>,
    /// Available tokens per synchronization resource.
    pub resources: Vec<(String, u32)>,
    pub waiters: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WaitRelation {
    pub thread: String,
    pub sid: String,
    /// e.g. `mutex m1`, `condvar cv0`, `join b`.
    pub on: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WaitSummary {
    pub held: IndexMap<String, Vec<String>>,
    pub waiting: Vec<WaitRelation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SliceLine {
    pub function: String,
    pub sid: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Constraints {
    pub resources: Vec<String>,
    pub threads: Vec<String>,
    pub goals: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: BugKind,
    pub witness: Vec<String>,
    pub blame: Vec<String>,
    pub state: StateSummary,
    pub wait: WaitSummary,
    pub relevant_resources: Vec<String>,
    pub slice: Vec<SliceLine>,
    pub constraints: Constraints,
    pub hint: String,
    pub diagnosis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scc_size: Option<usize>,
}

struct Ctx<'a> {
    art: &'a CirArtifact,
    net: &'a Cvn,
    space: &'a StateSpace,
}

impl Ctx<'_> {
    fn user_function(&self, name: &str) -> bool {
        self.art.function(name).is_some_and(|f| !f.synthetic)
    }

    fn kind_of(&self, resource: &str) -> Option<ResourceKind> {
        self.art.resource_kind(resource)
    }

    fn tag(&self, e: usize) -> Tag {
        self.net.transitions[self.space.edges[e].transition].tag
    }

    fn anchor(&self, e: usize) -> &Sid {
        &self.net.transitions[self.space.edges[e].transition].anchor
    }

    /// Sid shown for a witness edge, or `None` when the step is hidden.
    fn visible(&self, e: usize) -> Option<&Sid> {
        let t = &self.net.transitions[self.space.edges[e].transition];
        if t.anchor.as_str() == SID_BOTTOM && t.tag != Tag::Summary {
            return None;
        }
        if !self.user_function(&t.function) {
            return None;
        }
        let from_post = t.inputs.iter().any(|&(p, _)| {
            matches!(&self.net.places[p].class, PlaceClass::Control { point: ControlPoint::Post(_), .. })
        });
        if from_post || t.tag == Tag::Reacquire {
            return None;
        }
        Some(match t.tag {
            Tag::Summary => &t.origin,
            _ => &t.anchor,
        })
    }
}

fn annotated_witness(cx: &Ctx, witness: &[usize], end: &CvnState) -> Vec<String> {
    let mut out = Vec::new();
    for (i, &e) in witness.iter().enumerate() {
        let Some(sid) = cx.visible(e) else { continue };
        let tag = cx.tag(e);
        let note = match tag {
            Tag::NotifyLost | Tag::NotifyAllLost => "(lost)",
            Tag::Wake1 | Tag::WakeA => "(woken)",
            Tag::WaitEnter => {
                let later = witness[i + 1..].iter().any(|&l| cx.tag(l) == Tag::WaitEnter && cx.anchor(l) == sid);
                let parked = cx.net.place(&format!("wp({sid})")).is_some_and(|p| end.marking[p] > 0);
                if parked && !later {
                    "(blocked)"
                } else {
                    ""
                }
            }
            _ => "",
        };
        out.push(format!("{sid}{note}"));
    }
    out
}

fn thread_status(cx: &Ctx, s: &CvnState) -> Vec<ThreadStatus> {
    let mut out = Vec::new();
    for f in cx.art.functions.values().filter(|f| !f.synthetic) {
        let mut at = "-".to_string();
        let mut blocked = false;
        for (p, place) in cx.net.places.iter().enumerate() {
            if s.marking[p] == 0 || place.class.owner() != Some(f.name.as_str()) {
                continue;
            }
            at = match &place.class {
                PlaceClass::Control { point: ControlPoint::Stmt(sid), .. } => sid.to_string(),
                PlaceClass::Control { point: ControlPoint::Post(sid), .. } => format!("{sid}.post"),
                PlaceClass::Control { point: ControlPoint::Ret, .. } => "ret".to_string(),
                PlaceClass::Wait { sid, .. } | PlaceClass::Reacquire { sid, .. } => sid.to_string(),
                PlaceClass::Resource { .. } => continue,
            };
            blocked = !place.class.is_return()
                && !cx
                    .net
                    .transitions
                    .iter()
                    .any(|t| t.inputs.iter().any(|&(q, _)| q == p) && cx.net.enabled(t, s));
            break;
        }
        out.push(ThreadStatus {
            thread: f.name.clone(),
            at,
            blocked,
        });
    }
    out
}

fn state_summary(cx: &Ctx, s: &CvnState) -> StateSummary {
    let variables = cx
        .art
        .resources
        .values()
        .filter(|r| r.kind.is_data())
        .filter_map(|r| cx.net.var(&r.name).map(|v| (format!("V[{}]", r.name), s.valuation[v].to_string())))
        .collect();
    let resources = cx
        .art
        .resources
        .values()
        .filter(|r| r.kind.is_sync())
        .filter_map(|r| cx.net.resource_place(&r.name).map(|p| (r.name.clone(), s.marking[p])))
        .collect();
    let waiters = cx
        .art
        .resources
        .values()
        .filter(|r| r.kind == ResourceKind::Condvar)
        .filter_map(|r| {
            cx.net
                .var(&crate::translate::waiters_var(&r.name))
                .map(|v| (format!("waiter_count({})", r.name), s.valuation[v].to_string()))
        })
        .collect();
    StateSummary {
        threads: thread_status(cx, s),
        variables,
        resources,
        waiters,
    }
}

/// Held resources come from the witness: a thread holds `r` when it acquired
/// `r` more often than it released it along the path.
fn held_resources(cx: &Ctx, witness: &[usize]) -> IndexMap<String, Vec<String>> {
    let mut count: BTreeMap<(String, String), i64> = BTreeMap::new();
    for &e in witness {
        let t = &cx.net.transitions[cx.space.edges[e].transition];
        let lockish = matches!(
            t.tag,
            Tag::Lock
                | Tag::Unlock
                | Tag::ReadLock
                | Tag::WriteLock
                | Tag::ReadUnlock
                | Tag::WriteUnlock
                | Tag::Acquire
                | Tag::Release
                | Tag::WaitEnter
                | Tag::Reacquire
        );
        if !lockish {
            continue;
        }
        let mut delta: HashMap<&str, i64> = HashMap::new();
        for &(p, _) in &t.inputs {
            if let PlaceClass::Resource { resource } = &cx.net.places[p].class {
                *delta.entry(resource.as_str()).or_default() += 1;
            }
        }
        for &(p, _) in &t.outputs {
            if let PlaceClass::Resource { resource } = &cx.net.places[p].class {
                *delta.entry(resource.as_str()).or_default() -= 1;
            }
        }
        for (r, d) in delta {
            if d != 0 && cx.kind_of(r).is_some_and(|k| matches!(k, ResourceKind::Mutex | ResourceKind::RwLock | ResourceKind::Semaphore)) {
                *count.entry((t.function.clone(), r.to_string())).or_default() += d.signum();
            }
        }
    }
    let mut held: IndexMap<String, Vec<String>> = IndexMap::new();
    for f in cx.art.functions.values().filter(|f| !f.synthetic) {
        let mine: Vec<String> = cx
            .art
            .resources
            .keys()
            .filter(|r| count.get(&(f.name.clone(), (*r).clone())).is_some_and(|&n| n > 0))
            .cloned()
            .collect();
        if !mine.is_empty() {
            held.insert(f.name.clone(), mine);
        }
    }
    held
}

fn waiting_relations(cx: &Ctx, s: &CvnState, status: &[ThreadStatus], lost_at: Option<&Sid>) -> Vec<WaitRelation> {
    let mut out: Vec<WaitRelation> = Vec::new();
    for t in blocked_transitions(cx.net, s) {
        let tr = &cx.net.transitions[t];
        if !status.iter().any(|st| st.blocked && st.thread == tr.function) {
            continue;
        }
        let mut on = None;
        for &(p, w) in &tr.inputs {
            if s.marking[p] >= w {
                continue;
            }
            on = Some(match &cx.net.places[p].class {
                PlaceClass::Resource { resource } => {
                    format!("{} {resource}", cx.kind_of(resource).map(resource_label).unwrap_or("resource"))
                }
                PlaceClass::Control { function, point: ControlPoint::Ret } => format!("join {function}"),
                other => format!("{} {}", other.kind_name(), cx.net.places[p].name),
            });
            break;
        }
        if on.is_none() && matches!(tr.tag, Tag::WakeA) {
            // WakeA is blocked by its guard; Wake1 already names the condvar.
            continue;
        }
        let Some(on) = on.or_else(|| Some(format!("guard {}", tr.guard))) else { continue };
        let predicate = match (tr.tag, lost_at) {
            (Tag::Wake1, Some(n)) => Some(format!("notification lost at {n}")),
            _ => None,
        };
        let rel = WaitRelation {
            thread: tr.function.clone(),
            sid: tr.anchor.to_string(),
            on,
            predicate,
        };
        if !out.contains(&rel) {
            out.push(rel);
        }
    }
    out
}

fn blame(cx: &Ctx, f: &BugFinding, status: &[ThreadStatus]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let push = |s: String, out: &mut Vec<String>| {
        if cx.art.is_user_sid(&Sid(s.clone())) && !out.contains(&s) {
            out.push(s);
        }
    };
    let end = &cx.space.states[f.state];
    match f.kind {
        BugKind::SignalLoss => {
            let lost = f.lost_edge.expect("signal loss carries its lost edge");
            push(cx.anchor(lost).to_string(), &mut out);
            let cv = cx.net.transitions[cx.space.edges[lost].transition]
                .guard
                .refs()
                .into_iter()
                .find_map(|v| v.strip_prefix("nw[").and_then(|v| v.strip_suffix(']')).map(str::to_string));
            for (c, sid) in cx.art.wait_sites() {
                if Some(c) == cv.as_deref()
                    && cx.net.place(&format!("wp({sid})")).is_some_and(|p| end.marking[p] > 0)
                {
                    push(sid.to_string(), &mut out);
                }
            }
        }
        BugKind::LivelockWarning => {
            if let Some(scc) = &f.scc {
                for &t in &scc.transitions {
                    push(cx.net.transitions[t].anchor.to_string(), &mut out);
                }
            }
        }
        BugKind::StarvationWarning => {
            if let Some(st) = status.iter().find(|s| Some(&s.thread) == f.thread.as_ref()) {
                push(st.at.clone(), &mut out);
            }
        }
        BugKind::Deadlock | BugKind::ChannelBlock => {}
    }
    if f.kind.is_definite() {
        if let Some(sid) = f.witness.iter().rev().find_map(|&e| cx.visible(e)) {
            push(sid.to_string(), &mut out);
        }
    }
    if f.kind != BugKind::SignalLoss {
        for s in status.iter().filter(|s| s.blocked) {
            push(s.at.clone(), &mut out);
        }
    }
    out
}

fn slice(art: &CirArtifact, blame: &[String]) -> Vec<SliceLine> {
    let mut keep: Vec<(usize, usize)> = Vec::new();
    let fns: Vec<_> = art.functions.values().collect();
    for b in blame {
        for (fi, f) in fns.iter().enumerate() {
            if let Some(i) = f.body.iter().position(|s| s.sid.as_str() == b) {
                let lo = i.saturating_sub(SLICE_RADIUS);
                let hi = (i + SLICE_RADIUS).min(f.body.len() - 1);
                keep.extend((lo..=hi).map(|k| (fi, k)));
            }
        }
    }
    keep.sort_unstable();
    keep.dedup();
    keep.into_iter()
        .map(|(fi, k)| SliceLine {
            function: fns[fi].name.clone(),
            sid: fns[fi].body[k].sid.to_string(),
            text: fns[fi].body[k].op.to_string(),
        })
        .collect()
}

fn relevant_resources(art: &CirArtifact, slice: &[SliceLine]) -> Vec<String> {
    let mut used: Vec<&str> = Vec::new();
    for line in slice {
        if let Some((f, i)) = art.find_statement(&Sid(line.sid.clone())) {
            for r in f.body[i].op.resources() {
                used.push(r);
                if let Some(p) = art.resource(r).and_then(|d| d.paired_with.as_deref()) {
                    used.push(p);
                }
            }
        }
    }
    art.resources
        .values()
        .filter(|r| used.contains(&r.name.as_str()))
        .map(|r| format!("{} {}", resource_label(r.kind), r.name))
        .collect()
}

fn diagnosis(cx: &Ctx, f: &BugFinding, d: &Diagnostic) -> String {
    let waits = |d: &Diagnostic| -> Vec<String> {
        d.wait
            .waiting
            .iter()
            .map(|w| {
                let held = d.wait.held.get(&w.thread).map(|h| h.join(", ")).unwrap_or_default();
                if held.is_empty() {
                    format!("{} waits at sid={} for {}", w.thread, w.sid, w.on)
                } else {
                    format!("{} holds {held} and waits at sid={} for {}", w.thread, w.sid, w.on)
                }
            })
            .collect()
    };
    match f.kind {
        BugKind::SignalLoss => {
            let lost = f.lost_edge.expect("signal loss carries its lost edge");
            let t = &cx.net.transitions[cx.space.edges[lost].transition];
            let op = if t.tag == Tag::NotifyAllLost { "notify_all" } else { "notify_one" };
            let cv = cx
                .art
                .find_statement(&t.anchor)
                .and_then(|(f, i)| f.body[i].op.resources().first().map(|r| r.to_string()))
                .unwrap_or_default();
            let stuck: Vec<String> = d
                .wait
                .waiting
                .iter()
                .filter(|w| w.on == format!("condvar {cv}"))
                .map(|w| format!("{} enters wait at sid={}", w.thread, w.sid))
                .collect();
            format!(
                "{op} at sid={} fires when no thread is waiting on {cv}; {} with no future notification.",
                t.anchor,
                if stuck.is_empty() { "a waiter later parks".to_string() } else { stuck.join(" and ") }
            )
        }
        BugKind::Deadlock | BugKind::ChannelBlock => {
            let w = waits(d);
            if w.is_empty() {
                "no transition is enabled and some thread has not returned.".to_string()
            } else {
                format!("no thread can move: {}.", w.join("; "))
            }
        }
        BugKind::LivelockWarning => {
            let n = d.scc_size.unwrap_or(0);
            let states = if n == 1 { "state" } else { "states" };
            format!("execution can cycle forever through {n} reachable {states}, none of which has every thread returned.")
        }
        BugKind::StarvationWarning => {
            let who = f.thread.clone().unwrap_or_default();
            let at = d.state.threads.iter().find(|s| s.thread == who).map(|s| s.at.clone()).unwrap_or_default();
            format!("{who} stays at sid={at} while other threads keep moving.")
        }
    }
}

pub fn build_diag(f: &BugFinding, net: &Cvn, space: &StateSpace, art: &CirArtifact) -> Diagnostic {
    let cx = Ctx { art, net, space };
    let end = &space.states[f.state];
    let state = state_summary(&cx, end);
    let lost_at = f.lost_edge.map(|e| cx.anchor(e).clone());
    let wait = WaitSummary {
        held: held_resources(&cx, &f.witness),
        waiting: waiting_relations(&cx, end, &state.threads, lost_at.as_ref()),
    };
    let blame = blame(&cx, f, &state.threads);
    let slice = slice(art, &blame);
    let mut d = Diagnostic {
        kind: f.kind,
        witness: annotated_witness(&cx, &f.witness, end),
        blame,
        state,
        wait,
        relevant_resources: relevant_resources(art, &slice),
        slice,
        constraints: Constraints {
            resources: art.resources.keys().cloned().collect(),
            threads: art.functions.values().filter(|f| !f.synthetic).map(|f| f.name.clone()).collect(),
            goals: art.goals.iter().map(|g| g.id.clone()).collect(),
        },
        hint: hint(f.kind).to_string(),
        diagnosis: String::new(),
        scc_size: f.scc.as_ref().map(|s| s.size),
    };
    d.diagnosis = diagnosis(&cx, f, &d);
    d
}

/// The repair prompt for one diagnostic.
pub fn render_repair_prompt(d: &Diagnostic) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "Repair task: revise the CIR locally.\n");
    let _ = writeln!(w, "Bug kind: {}", d.kind.title());
    if d.witness.is_empty() {
        let _ = writeln!(w, "Witness trace (sid): <initial state>");
    } else {
        let _ = writeln!(w, "Witness trace (sid): {}", d.witness.join(" -> "));
    }
    if let Some(n) = d.scc_size {
        let _ = writeln!(w, "Cycle: {n} states reachable from the end of the trace");
        let _ = writeln!(w, "Observation: {}", d.diagnosis);
    }
    let _ = writeln!(w, "\nBug-state summary:");
    for t in &d.state.threads {
        let _ = match (t.at.as_str(), t.blocked) {
            ("-", _) => writeln!(w, "  {} not running", t.thread),
            ("ret", _) => writeln!(w, "  {} returned", t.thread),
            (at, true) => writeln!(w, "  {} at sid {at} (blocked)", t.thread),
            (at, false) => writeln!(w, "  {} at sid {at}", t.thread),
        };
    }
    for (name, value) in d.state.variables.iter().chain(&d.state.waiters) {
        let _ = writeln!(w, "  {name} = {value}");
    }
    let _ = writeln!(w, "\nHeld resources:");
    if d.wait.held.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for (thread, rs) in &d.wait.held {
        let _ = writeln!(w, "  {thread}: {}", rs.join(", "));
    }
    let _ = writeln!(w, "\nWaiting relations:");
    if d.wait.waiting.is_empty() {
        let _ = writeln!(w, "  none");
    }
    for r in &d.wait.waiting {
        let _ = match &r.predicate {
            Some(p) => writeln!(w, "  {} at sid {} waits for {} ({p})", r.thread, r.sid, r.on),
            None => writeln!(w, "  {} at sid {} waits for {}", r.thread, r.sid, r.on),
        };
    }
    let _ = writeln!(w, "\nRelevant resources:\n  {}", or_none(&d.relevant_resources.join(", ")));
    let _ = writeln!(w, "\nRelevant CIR slice:");
    let mut last_fn = "";
    for line in &d.slice {
        if line.function != last_fn {
            let _ = writeln!(w, "  [{}]", line.function);
            last_fn = &line.function;
        }
        let _ = writeln!(w, "  {}: {}", line.sid, line.text);
    }
    let goals = if d.constraints.goals.is_empty() {
        "goals".to_string()
    } else {
        format!("goals ({})", d.constraints.goals.join(", "))
    };
    let _ = writeln!(w, "\nPreserve:\n  resource names, thread structure, {goals}");
    let _ = writeln!(w, "\nSuggested direction:\n  {}", d.hint);
    let _ = writeln!(w, "\nOutput: the complete revised CIR artifact");
    out
}

fn or_none(s: &str) -> &str {
    if s.is_empty() {
        "none"
    } else {
        s
    }
}

/// One goal requirement in user vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Requirement {
    pub text: String,
    pub hint: String,
}

/// Requirements of `q` no reachable state meets on its own, variables first.
/// Empty when each holds somewhere but never all at once.
pub fn missing_requirements(q: &GoalQuery, space: &StateSpace, art: &CirArtifact, net: &Cvn) -> Vec<Requirement> {
    let mut out = Vec::new();
    for v in &q.variables {
        if !space.states.iter().any(|s| s.valuation[v.var] == crate::expr::Value::Concrete(v.value.clone())) {
            let op = if art.resource_kind(&v.name) == Some(ResourceKind::Atomic) { "store" } else { "write" };
            out.push(Requirement {
                text: format!("V[{}] = {}", v.name, v.value),
                hint: format!("Ensure that a {op}({}, {}) operation exists on a reachable path.", v.name, v.value),
            });
        }
    }
    for c in &q.completion {
        if !space.states.iter().any(|s| s.marking[c.place] >= c.threshold) {
            let f = match &net.places[c.place].class {
                PlaceClass::Control { function, .. } => function.clone(),
                _ => c.name.clone(),
            };
            out.push(Requirement {
                text: format!("{f} completed"),
                hint: format!("Ensure that {f} is spawned and can reach its return on some path; check the waits and branches before it."),
            });
        }
    }
    for a in &q.availability {
        if !space.states.iter().any(|s| s.marking[a.place] >= a.threshold) {
            let r = match &net.places[a.place].class {
                PlaceClass::Resource { resource } => resource.clone(),
                _ => a.name.clone(),
            };
            out.push(Requirement {
                text: format!("{r} available"),
                hint: format!("Ensure that every acquisition of {r} is released before its thread returns."),
            });
        }
    }
    out
}

pub fn render_goal_violation(
    unreachable: &[&GoalQuery],
    space: &StateSpace,
    art: &CirArtifact,
    net: &Cvn,
    round: Option<usize>,
) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = match round {
        Some(r) => writeln!(w, "=== Goal Violation (Round {r}) ==="),
        None => writeln!(w, "=== Goal Violation ==="),
    };
    let _ = writeln!(w, "Status: No concurrency bugs detected.");
    for q in unreachable {
        let _ = writeln!(w, "\nUNREACHABLE GOAL: {}", q.goal);
        if let Some(g) = art.goals.iter().find(|g| g.id == q.goal) {
            if !g.description.is_empty() {
                let _ = writeln!(w, "  desc: \"{}\"", g.description);
            }
        }
        match missing_requirements(q, space, art, net).into_iter().next() {
            Some(req) => {
                let _ = writeln!(w, "  Missing: {}", req.text);
                let _ = writeln!(w, "  No reachable state satisfies {}.", req.text);
                let _ = writeln!(w, "  Hint: {}", req.hint);
            }
            None => {
                let _ = writeln!(w, "  Missing: all requirements of {} together", q.goal);
                let _ = writeln!(w, "  Each requirement holds in some reachable state, but never all at once.");
                let _ = writeln!(w, "  Hint: Ensure that one execution satisfies every requirement of {} at the same time.", q.goal);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EndState {
    pub threads: IndexMap<String, String>,
    pub variables: IndexMap<String, String>,
    pub held: IndexMap<String, Vec<String>>,
    pub waiting: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoalCheck {
    pub id: String,
    pub desc: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FindingSummary {
    pub kind: BugKind,
    pub trace: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thread: Option<String>,
}

/// Machine-readable verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerdictReport {
    pub accepted: bool,
    pub static_errors: Vec<CheckError>,
    pub bug_kind: Option<BugKind>,
    pub blame: Vec<String>,
    pub end_state: Option<EndState>,
    pub trace: Vec<String>,
    pub diagnosis: Option<String>,
    pub repair_suggestion: Option<String>,
    pub goal_check: Vec<GoalCheck>,
    pub findings: Vec<FindingSummary>,
    pub livelock_immune: Option<bool>,
    pub states: Option<usize>,
    pub rounds_used: Option<usize>,
}

impl VerdictReport {
    pub fn static_failure(errors: Vec<CheckError>) -> Self {
        VerdictReport {
            accepted: false,
            static_errors: errors,
            bug_kind: None,
            blame: Vec::new(),
            end_state: None,
            trace: Vec::new(),
            diagnosis: None,
            repair_suggestion: None,
            goal_check: Vec::new(),
            findings: Vec::new(),
            livelock_immune: None,
            states: None,
            rounds_used: None,
        }
    }

    /// Builds the report for an analysed artifact. The selected finding is
    /// the definite bug if any, otherwise the first warning.
    pub fn from_analysis(art: &CirArtifact, net: &Cvn, space: &StateSpace, queries: &[GoalQuery], a: &Analysis) -> Self {
        let cx = Ctx { art, net, space };
        let definite: Vec<BugFinding> = a.definite().cloned().collect();
        let pool = if definite.is_empty() { a.findings.clone() } else { definite.clone() };
        let selected = select_bug(&pool, net, space);
        let diag = selected.map(|f| build_diag(f, net, space, art));
        let goal_check = a
            .goals
            .iter()
            .zip(queries)
            .map(|(g, q): (&GoalResult, &GoalQuery)| GoalCheck {
                id: g.goal.clone(),
                desc: art.goals.iter().find(|x| x.id == g.goal).map(|x| x.description.clone()).unwrap_or_default(),
                status: if g.reachable { "REACHABLE" } else { "UNREACHABLE" },
                missing: if g.reachable {
                    None
                } else {
                    Some(
                        missing_requirements(q, space, art, net)
                            .first()
                            .map(|r| r.text.clone())
                            .unwrap_or_else(|| "all requirements together".to_string()),
                    )
                },
            })
            .collect();
        let findings = a
            .findings
            .iter()
            .map(|f| FindingSummary {
                kind: f.kind,
                trace: annotated_witness(&cx, &f.witness, &space.states[f.state]),
                thread: f.thread.clone(),
            })
            .collect();
        let end_state = diag.as_ref().map(|d| EndState {
            threads: d
                .state
                .threads
                .iter()
                .map(|t| {
                    let status = if t.blocked { format!("{} (blocked)", t.at) } else { t.at.clone() };
                    (t.thread.clone(), status)
                })
                .collect(),
            variables: d.state.variables.iter().cloned().collect(),
            held: d.wait.held.clone(),
            waiting: {
                let mut w: Vec<String> = d.wait.waiting.iter().map(|r| r.thread.clone()).collect();
                w.dedup();
                w
            },
        });
        VerdictReport {
            accepted: definite.is_empty() && a.goals.iter().all(|g| g.reachable),
            static_errors: Vec::new(),
            bug_kind: diag.as_ref().map(|d| d.kind),
            blame: diag.as_ref().map(|d| d.blame.clone()).unwrap_or_default(),
            end_state,
            trace: diag.as_ref().map(|d| d.witness.clone()).unwrap_or_default(),
            diagnosis: diag.as_ref().map(|d| d.diagnosis.clone()),
            repair_suggestion: diag.as_ref().map(|d| d.hint.clone()),
            goal_check,
            findings,
            livelock_immune: Some(a.livelock_immune),
            states: Some(a.states),
            rounds_used: None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Text layout: static errors, or the bug report, then goal status.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        if !self.static_errors.is_empty() {
            let _ = writeln!(w, "static_errors:");
            for e in &self.static_errors {
                let _ = writeln!(w, "  {} [{}] {}", e.code, e.anchor, e.message);
            }
            let _ = writeln!(w, "verdict:   REJECTED");
            return out;
        }
        if let Some(kind) = self.bug_kind {
            let _ = writeln!(w, "bug_kind:  {}", kind.name());
            let _ = writeln!(w, "blame:     [{}]", self.blame.join(", "));
            if let Some(es) = &self.end_state {
                let _ = writeln!(w, "end_state:");
                let width = es
                    .variables
                    .keys()
                    .chain(es.threads.keys())
                    .map(|k| k.len() + 1)
                    .chain([8])
                    .max()
                    .unwrap_or(8);
                for (t, s) in &es.threads {
                    let _ = writeln!(w, "  {:width$} {s}", format!("{t}:"));
                }
                for (v, s) in &es.variables {
                    let _ = writeln!(w, "  {:width$} {s}", format!("{v}:"));
                }
                let held: Vec<String> = es.held.iter().map(|(t, rs)| format!("{t}: {}", rs.join(", "))).collect();
                let _ = writeln!(w, "  {:width$} {{{}}}", "held:", held.join("; "));
                let _ = writeln!(w, "  {:width$} [{}]", "waiting:", es.waiting.join(", "));
            }
            let _ = writeln!(w, "trace:     [{}]", self.trace.join(", "));
            if let Some(d) = &self.diagnosis {
                let _ = writeln!(w, "diagnosis:\n  {d}");
            }
            if let Some(s) = &self.repair_suggestion {
                let _ = writeln!(w, "repair_suggestion:\n  {s}");
            }
            let others = self.findings.len().saturating_sub(1);
            if others > 0 {
                let _ = writeln!(w, "other_findings: {others}");
            }
        } else {
            let _ = writeln!(w, "bug_kind:  none");
        }
        if !self.goal_check.is_empty() {
            let _ = writeln!(w, "goal_check:");
            for g in &self.goal_check {
                let _ = writeln!(w, "  {}: {}", g.id, g.status);
                if let Some(m) = &g.missing {
                    let _ = writeln!(w, "    missing: {m}");
                }
            }
        }
        if let Some(immune) = self.livelock_immune {
            let _ = writeln!(w, "livelock_immune: {immune}");
        }
        let _ = writeln!(w, "verdict:   {}", if self.accepted { "ACCEPTED" } else { "REJECTED" });
        out
    }
}
