//! State-space exploration and bug predicates over a translated net.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::cir::Sid;
use crate::cvn::{Cvn, CvnState, PlaceClass, PlaceId, Tag, TransitionId};
use crate::translate::GoalQuery;

pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;
/// Upper bound on states and transitions listed in an SCC summary.
pub const SCC_SUMMARY_CAP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub src: usize,
    pub transition: TransitionId,
    pub dst: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StateSpace {
    pub states: Vec<CvnState>,
    pub edges: Vec<Edge>,
    /// Outgoing edge indices per state, in transition-id order.
    #[serde(skip)]
    pub out: Vec<Vec<usize>>,
    /// BFS tree edge that first reached each state.
    #[serde(skip)]
    pub parent: Vec<Option<usize>>,
}

impl StateSpace {
    pub const INITIAL: usize = 0;

    /// Shortest edge path from the initial state.
    pub fn path_to(&self, state: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = state;
        while let Some(e) = self.parent[cur] {
            path.push(e);
            cur = self.edges[e].src;
        }
        path.reverse();
        path
    }

    /// Shortest edge path from `from` to any state satisfying `goal`.
    pub fn path_between(&self, from: usize, goal: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let mut prev: HashMap<usize, Option<usize>> = HashMap::from([(from, None)]);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            if goal(s) {
                let mut path = Vec::new();
                let mut cur = s;
                while let Some(Some(e)) = prev.get(&cur) {
                    path.push(*e);
                    cur = self.edges[*e].src;
                }
                path.reverse();
                return Some(path);
            }
            for &e in &self.out[s] {
                let d = self.edges[e].dst;
                if let std::collections::hash_map::Entry::Vacant(v) = prev.entry(d) {
                    v.insert(Some(e));
                    queue.push_back(d);
                }
            }
        }
        None
    }

    /// States from which some state in `targets` is reachable (targets included).
    pub fn backward_closure(&self, targets: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.states.len()];
        for e in &self.edges {
            preds[e.dst].push(e.src);
        }
        let mut seen = vec![false; self.states.len()];
        let mut stack: Vec<usize> = targets.into_iter().collect();
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut seen[s], true) {
                continue;
            }
            stack.extend(preds[s].iter().copied().filter(|p| !seen[*p]));
        }
        seen
    }

    /// States reachable from any of `sources` (sources included).
    pub fn forward_closure(&self, sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut stack: Vec<usize> = sources.into_iter().collect();
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut seen[s], true) {
                continue;
            }
            stack.extend(self.out[s].iter().map(|&e| self.edges[e].dst).filter(|d| !seen[*d]));
        }
        seen
    }

    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<_> = self
            .states
            .iter()
            .map(|s| serde_json::json!({ "marking": s.marking, "valuation": s.valuation }))
            .collect();
        let edges: Vec<_> = self.edges.iter().map(|e| [e.src, e.transition, e.dst]).collect();
        serde_json::json!({ "states": states, "edges": edges })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("state budget of {limit} states exceeded")]
pub struct StateBudgetExceeded {
    pub limit: usize,
}

/// Breadth-first closure of the initial state under enabled firings.
pub fn explore(net: &Cvn, budget: usize) -> Result<StateSpace, StateBudgetExceeded> {
    let mut index: HashMap<CvnState, usize> = HashMap::new();
    let mut space = StateSpace {
        states: vec![net.initial.clone()],
        edges: Vec::new(),
        out: vec![Vec::new()],
        parent: vec![None],
    };
    index.insert(net.initial.clone(), 0);
    let mut next = 0;
    while next < space.states.len() {
        let s = next;
        next += 1;
        for t in net.enabled_transitions(&space.states[s]) {
            let succ = net
                .fire(&net.transitions[t], &space.states[s])
                .expect("enabled transitions fire");
            let dst = match index.get(&succ) {
                Some(&d) => d,
                None => {
                    if space.states.len() >= budget {
                        return Err(StateBudgetExceeded { limit: budget });
                    }
                    let d = space.states.len();
                    index.insert(succ.clone(), d);
                    space.states.push(succ);
                    space.out.push(Vec::new());
                    space.parent.push(Some(space.edges.len()));
                    d
                }
            };
            space.out[s].push(space.edges.len());
            space.edges.push(Edge { src: s, transition: t, dst });
        }
    }
    Ok(space)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    Deadlock,
    SignalLoss,
    ChannelBlock,
    LivelockWarning,
    StarvationWarning,
}

impl BugKind {
    pub fn is_definite(self) -> bool {
        matches!(self, BugKind::Deadlock | BugKind::SignalLoss | BugKind::ChannelBlock)
    }

    /// Lower is reported first.
    pub fn priority(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            BugKind::Deadlock => "deadlock",
            BugKind::SignalLoss => "signal_loss",
            BugKind::ChannelBlock => "channel_block",
            BugKind::LivelockWarning => "livelock_warning",
            BugKind::StarvationWarning => "starvation_warning",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            BugKind::Deadlock => "Deadlock",
            BugKind::SignalLoss => "SignalLoss",
            BugKind::ChannelBlock => "ChannelBlock",
            BugKind::LivelockWarning => "Livelock",
            BugKind::StarvationWarning => "Starvation",
        }
    }

    /// Channel block is a refinement of deadlock.
    pub fn family(self) -> BugKind {
        match self {
            BugKind::ChannelBlock => BugKind::Deadlock,
            k => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SccSummary {
    pub size: usize,
    pub states: Vec<usize>,
    pub transitions: Vec<TransitionId>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BugFinding {
    pub kind: BugKind,
    /// Edge indices from the initial state; for warnings, the prefix to the SCC entry.
    pub witness: Vec<usize>,
    /// Bug state, or SCC entry state for warnings.
    pub state: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scc: Option<SccSummary>,
    /// Lost notification edge for signal loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lost_edge: Option<usize>,
    /// Frozen thread for starvation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thread: Option<String>,
}

/// A state has a thread that has not finished: a token on a non-return
/// control place or on a wait/reacquire place.
pub fn has_live_thread(net: &Cvn, s: &CvnState) -> bool {
    s.marking
        .iter()
        .enumerate()
        .any(|(p, &n)| n > 0 && (net.places[p].class.is_aux() || (net.places[p].class.is_control() && !net.places[p].class.is_return())))
}

fn is_dead(space: &StateSpace, s: usize) -> bool {
    space.out[s].is_empty()
}

pub fn detect_deadlock(space: &StateSpace, net: &Cvn) -> Vec<BugFinding> {
    (0..space.states.len())
        .filter(|&s| is_dead(space, s) && has_live_thread(net, &space.states[s]))
        .map(|s| BugFinding {
            kind: BugKind::Deadlock,
            witness: space.path_to(s),
            state: s,
            scc: None,
            lost_edge: None,
            thread: None,
        })
        .collect()
}

fn is_lost(tag: Tag) -> bool {
    matches!(tag, Tag::NotifyLost | Tag::NotifyAllLost)
}

/// Condvar whose notification the transition performs.
fn notified_condvar(net: &Cvn, t: TransitionId) -> Option<String> {
    net.vars.iter().find_map(|v| match &v.role {
        crate::cvn::VarRole::Waiters { condvar } if net.transitions[t].guard.refs().contains(&v.name.as_str()) => {
            Some(condvar.clone())
        }
        _ => None,
    })
}

struct WaitSite {
    condvar: String,
    wp: PlaceId,
    wakes: Vec<TransitionId>,
}

fn wait_sites(net: &Cvn) -> Vec<WaitSite> {
    let mut out = Vec::new();
    for v in &net.vars {
        if let crate::cvn::VarRole::NotifyAll { condvar, site } = &v.role {
            let Some(wp) = net.place(&format!("wp({site})")) else { continue };
            let wakes = (0..net.transitions.len())
                .filter(|&t| {
                    let tr = &net.transitions[t];
                    matches!(tr.tag, Tag::Wake1 | Tag::WakeA) && &tr.anchor == site
                })
                .collect();
            out.push(WaitSite {
                condvar: condvar.clone(),
                wp,
                wakes,
            });
        }
    }
    out
}

/// States in which some waiter of `condvar` is parked and can never be woken.
fn stranded_states(space: &StateSpace, net: &Cvn, condvar: &str) -> Vec<usize> {
    let mut stuck = Vec::new();
    for site in wait_sites(net).into_iter().filter(|w| w.condvar == condvar) {
        let wake_sources = space
            .edges
            .iter()
            .filter(|e| site.wakes.contains(&e.transition))
            .map(|e| e.src);
        let can_wake = space.backward_closure(wake_sources);
        stuck.extend((0..space.states.len()).filter(|&s| space.states[s].marking[site.wp] > 0 && !can_wake[s]));
    }
    stuck.sort_unstable();
    stuck.dedup();
    stuck
}

/// A lost notification is reported only when, after it, some waiter of the
/// same condvar can end up parked with no wake-up on any continuation.
pub fn detect_signal_loss(space: &StateSpace, net: &Cvn) -> (Vec<BugFinding>, Vec<usize>) {
    let mut findings = Vec::new();
    let mut benign = Vec::new();
    let mut cache: HashMap<String, (Vec<bool>, HashSet<usize>)> = HashMap::new();
    for (e, edge) in space.edges.iter().enumerate() {
        if !is_lost(net.transitions[edge.transition].tag) {
            continue;
        }
        let Some(cv) = notified_condvar(net, edge.transition) else { continue };
        let (reaches_stuck, stuck) = cache.entry(cv.clone()).or_insert_with(|| {
            let stuck = stranded_states(space, net, &cv);
            (space.backward_closure(stuck.iter().copied()), stuck.into_iter().collect())
        });
        if !reaches_stuck[edge.dst] {
            benign.push(e);
            continue;
        }
        let tail = space
            .path_between(edge.dst, |s| stuck.contains(&s))
            .expect("stranded state is reachable");
        let mut witness = space.path_to(edge.src);
        witness.push(e);
        witness.extend(tail);
        let state = witness.last().map(|&l| space.edges[l].dst).unwrap_or(edge.dst);
        findings.push(BugFinding {
            kind: BugKind::SignalLoss,
            witness,
            state,
            scc: None,
            lost_edge: Some(e),
            thread: None,
        });
    }
    (findings, benign)
}

/// Transitions a thread is positioned to take (its control or auxiliary
/// inputs are marked) but which are not enabled.
pub fn blocked_transitions(net: &Cvn, s: &CvnState) -> Vec<TransitionId> {
    (0..net.transitions.len())
        .filter(|&t| {
            let tr = &net.transitions[t];
            let positioned = tr.inputs.iter().all(|&(p, w)| match net.places[p].class {
                PlaceClass::Resource { .. } => true,
                _ => s.marking[p] >= w,
            }) && tr.inputs.iter().any(|&(p, _)| net.places[p].class.owner().is_some() && !net.places[p].class.is_return());
            positioned && !net.enabled(tr, s)
        })
        .collect()
}

fn starved_by_channel(net: &Cvn, s: &CvnState, kinds: &HashMap<String, crate::cir::ResourceKind>) -> bool {
    blocked_transitions(net, s).into_iter().any(|t| {
        net.transitions[t].inputs.iter().any(|&(p, w)| match &net.places[p].class {
            PlaceClass::Resource { resource } => {
                s.marking[p] < w && kinds.get(resource) == Some(&crate::cir::ResourceKind::Channel)
            }
            _ => false,
        })
    })
}

/// Reclassifies deadlocks in which a thread waits on an empty channel.
pub fn detect_channel_block(
    deadlocks: Vec<BugFinding>,
    space: &StateSpace,
    net: &Cvn,
    kinds: &HashMap<String, crate::cir::ResourceKind>,
) -> Vec<BugFinding> {
    deadlocks
        .into_iter()
        .map(|mut f| {
            if f.kind == BugKind::Deadlock && starved_by_channel(net, &space.states[f.state], kinds) {
                f.kind = BugKind::ChannelBlock;
            }
            f
        })
        .collect()
}

/// Tarjan's algorithm, iterative. Components come out in reverse topological order.
pub fn sccs(space: &StateSpace) -> Vec<Vec<usize>> {
    let n = space.states.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < space.out[v].len() {
                let w = space.edges[space.out[v][*i]].dst;
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Non-trivial terminal SCCs in which no state has every thread finished.
pub fn detect_scc_warnings(space: &StateSpace, net: &Cvn) -> Vec<BugFinding> {
    let mut comp_of = vec![0; space.states.len()];
    let comps = sccs(space);
    for (c, members) in comps.iter().enumerate() {
        for &s in members {
            comp_of[s] = c;
        }
    }
    let mut qualifying: Vec<&Vec<usize>> = comps
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            let internal = members.iter().flat_map(|&s| &space.out[s]).map(|&e| space.edges[e].dst);
            let mut cyclic = members.len() > 1;
            let mut closed = true;
            for d in internal {
                if comp_of[d] == *c {
                    cyclic = true;
                } else {
                    closed = false;
                }
            }
            cyclic && closed && members.iter().all(|&s| has_live_thread(net, &space.states[s]))
        })
        .map(|(_, m)| m)
        .collect();
    qualifying.sort_by_key(|m| m[0]);

    let mut findings = Vec::new();
    for members in qualifying {
        let entry = *members.iter().min_by_key(|&&s| (space.path_to(s).len(), s)).expect("non-empty scc");
        let member_set: HashSet<usize> = members.iter().copied().collect();
        let mut transitions: Vec<TransitionId> = members
            .iter()
            .flat_map(|&s| &space.out[s])
            .map(|&e| space.edges[e].transition)
            .collect();
        transitions.sort_unstable();
        transitions.dedup();
        let truncated = members.len() > SCC_SUMMARY_CAP || transitions.len() > SCC_SUMMARY_CAP;
        let summary = SccSummary {
            size: members.len(),
            states: members.iter().copied().take(SCC_SUMMARY_CAP).collect(),
            transitions: transitions.iter().copied().take(SCC_SUMMARY_CAP).collect(),
            truncated,
        };
        let witness = space.path_to(entry);
        findings.push(BugFinding {
            kind: BugKind::LivelockWarning,
            witness: witness.clone(),
            state: entry,
            scc: Some(summary.clone()),
            lost_edge: None,
            thread: None,
        });
        for thread in frozen_threads(net, space, &member_set) {
            findings.push(BugFinding {
                kind: BugKind::StarvationWarning,
                witness: witness.clone(),
                state: entry,
                scc: Some(summary.clone()),
                lost_edge: None,
                thread: Some(thread),
            });
        }
    }
    findings
}

/// Threads whose token sits on one unfinished place throughout the SCC.
fn frozen_threads(net: &Cvn, space: &StateSpace, members: &HashSet<usize>) -> Vec<String> {
    let mut moving: HashSet<&str> = HashSet::new();
    for &s in members {
        for &e in &space.out[s] {
            if members.contains(&space.edges[e].dst) {
                moving.insert(&net.transitions[space.edges[e].transition].function);
            }
        }
    }
    let any = *members.iter().next().expect("non-empty scc");
    let mut frozen = Vec::new();
    for (p, place) in net.places.iter().enumerate() {
        let Some(owner) = place.class.owner() else { continue };
        if place.class.is_return() || moving.contains(owner) || frozen.iter().any(|f: &String| f == owner) {
            continue;
        }
        let joining = net
            .transitions
            .iter()
            .filter(|t| t.inputs.iter().any(|&(q, _)| q == p))
            .all(|t| t.tag == Tag::Join);
        if joining {
            continue;
        }
        let marked = space.states[any].marking[p];
        if marked > 0 && members.iter().all(|&s| space.states[s].marking[p] == marked) && !moving.is_empty() {
            frozen.push(owner.to_string());
        }
    }
    frozen
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoalResult {
    pub goal: String,
    pub reachable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
}

pub fn check_goals(space: &StateSpace, queries: &[GoalQuery]) -> Vec<GoalResult> {
    queries
        .iter()
        .map(|q| {
            let state = space.states.iter().position(|s| q.satisfied(s));
            GoalResult {
                goal: q.goal.clone(),
                reachable: state.is_some(),
                state,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub states: usize,
    pub edges: usize,
    pub findings: Vec<BugFinding>,
    /// Lost notifications after which every waiter is still woken.
    pub benign_lost_notifications: Vec<usize>,
    pub livelock_immune: bool,
    pub goals: Vec<GoalResult>,
}

impl Analysis {
    pub fn definite(&self) -> impl Iterator<Item = &BugFinding> {
        self.findings.iter().filter(|f| f.kind.is_definite())
    }

    pub fn unreachable_goals(&self) -> impl Iterator<Item = &GoalResult> {
        self.goals.iter().filter(|g| !g.reachable)
    }
}

/// Runs every predicate. A dead state that strands a waiter after a lost
/// notification is reported as signal loss, not as deadlock.
pub fn analyze(
    net: &Cvn,
    space: &StateSpace,
    queries: &[GoalQuery],
    kinds: &HashMap<String, crate::cir::ResourceKind>,
) -> Analysis {
    let (signal_loss, benign) = detect_signal_loss(space, net);
    let explained: HashSet<usize> = {
        let mut by_cv: HashMap<String, Vec<usize>> = HashMap::new();
        for f in &signal_loss {
            let e = f.lost_edge.expect("signal loss has a lost edge");
            if let Some(cv) = notified_condvar(net, space.edges[e].transition) {
                by_cv.entry(cv).or_default().push(space.edges[e].dst);
            }
        }
        let mut out = HashSet::new();
        for (cv, starts) in by_cv {
            let after = space.forward_closure(starts);
            for s in stranded_states(space, net, &cv) {
                if after[s] {
                    out.insert(s);
                }
            }
        }
        out
    };
    let deadlocks: Vec<BugFinding> = detect_deadlock(space, net)
        .into_iter()
        .filter(|f| !explained.contains(&f.state))
        .collect();
    let mut findings = detect_channel_block(deadlocks, space, net, kinds);
    findings.extend(signal_loss);
    let warnings = detect_scc_warnings(space, net);
    let livelock_immune = !warnings.iter().any(|w| w.kind == BugKind::LivelockWarning);
    findings.extend(warnings);
    Analysis {
        states: space.states.len(),
        edges: space.edges.len(),
        findings,
        benign_lost_notifications: benign,
        livelock_immune,
        goals: check_goals(space, queries),
    }
}

/// Sid of each witness edge's transition anchor.
pub fn witness_anchors<'a>(net: &'a Cvn, space: &StateSpace, witness: &[usize]) -> Vec<&'a Sid> {
    witness
        .iter()
        .map(|&e| &net.transitions[space.edges[e].transition].anchor)
        .collect()
}
