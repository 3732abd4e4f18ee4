//! Coloured-value nets: places, guarded transitions with variable updates,
//! states, and the enabling and firing rules.

use std::collections::HashMap;
use std::fmt::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::cir::Sid;
use crate::expr::{eval_expr, eval_guard, BoolExpr, Expr, Truth3, Valuation, Value};

pub type PlaceId = usize;
pub type TransitionId = usize;
pub type VarId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "at", content = "sid", rename_all = "snake_case")]
pub enum ControlPoint {
    Stmt(Sid),
    /// After the statement's operation, before its transfer.
    Post(Sid),
    Ret,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PlaceClass {
    Control { function: String, point: ControlPoint },
    Resource { resource: String },
    Wait { function: String, sid: Sid },
    Reacquire { function: String, sid: Sid },
}

impl PlaceClass {
    /// The function whose thread a token here belongs to; `None` for resources.
    pub fn owner(&self) -> Option<&str> {
        match self {
            PlaceClass::Control { function, .. }
            | PlaceClass::Wait { function, .. }
            | PlaceClass::Reacquire { function, .. } => Some(function),
            PlaceClass::Resource { .. } => None,
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(self, PlaceClass::Control { .. })
    }

    pub fn is_aux(&self) -> bool {
        matches!(self, PlaceClass::Wait { .. } | PlaceClass::Reacquire { .. })
    }

    pub fn is_return(&self) -> bool {
        matches!(self, PlaceClass::Control { point: ControlPoint::Ret, .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PlaceClass::Control { .. } => "control",
            PlaceClass::Resource { .. } => "resource",
            PlaceClass::Wait { .. } => "wait",
            PlaceClass::Reacquire { .. } => "reacquire",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Place {
    pub name: String,
    #[serde(flatten)]
    pub class: PlaceClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Tag {
    Lock,
    Unlock,
    ReadLock,
    WriteLock,
    ReadUnlock,
    WriteUnlock,
    Acquire,
    Release,
    Send,
    Recv,
    VarWrite,
    AtomicStore,
    CasSuccess,
    CasFailure,
    WaitEnter,
    Wake1,
    WakeA,
    Reacquire,
    NotifySuccess,
    NotifyLost,
    NotifyAllSuccess,
    NotifyAllLost,
    BranchTrue,
    BranchFalse,
    SwitchArm,
    SwitchDefault,
    Spawn,
    Join,
    Return,
    Sequential,
    Summary,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Right-hand side of an update.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Assign {
    Expr(Expr),
    Top,
}

impl fmt::Display for Assign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assign::Expr(e) => write!(f, "{e}"),
            Assign::Top => f.write_str("⊤"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub name: String,
    pub tag: Tag,
    pub inputs: Vec<(PlaceId, u32)>,
    pub outputs: Vec<(PlaceId, u32)>,
    pub guard: BoolExpr,
    pub updates: Vec<(VarId, Assign)>,
    /// Statement the transition is reported against; `sid_⊥` for summaries.
    pub anchor: Sid,
    /// Statement that generated the transition, even when the anchor is `sid_⊥`.
    pub origin: Sid,
    pub function: String,
}

impl Transition {
    pub fn input_weight(&self, p: PlaceId) -> u32 {
        self.inputs.iter().filter(|(q, _)| *q == p).map(|(_, w)| w).sum()
    }

    pub fn output_weight(&self, p: PlaceId) -> u32 {
        self.outputs.iter().filter(|(q, _)| *q == p).map(|(_, w)| w).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum VarRole {
    Data,
    /// Number of threads waiting on the condvar.
    Waiters { condvar: String },
    /// Set by notify_all for the given wait site.
    NotifyAll { condvar: String, site: Sid },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VarDecl {
    pub name: String,
    pub init: Value,
    #[serde(flatten)]
    pub role: VarRole,
}

/// A marking together with a valuation. Both are indexed by id, so derived
/// equality and hashing are canonical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CvnState {
    pub marking: Vec<u32>,
    pub valuation: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FireError {
    #[error("transition `{0}` is not enabled")]
    NotEnabled(String),
    #[error("update of `{0}` would make a waiter count negative")]
    NegativeCounter(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cvn {
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub vars: Vec<VarDecl>,
    pub initial: CvnState,
    #[serde(skip)]
    place_index: HashMap<String, PlaceId>,
    #[serde(skip)]
    var_index: HashMap<String, VarId>,
}

struct View<'a> {
    net: &'a Cvn,
    state: &'a CvnState,
}

impl Valuation for View<'_> {
    fn get(&self, name: &str) -> Option<&Value> {
        self.net.var(name).map(|i| &self.state.valuation[i])
    }
}

impl Cvn {
    pub fn new(places: Vec<Place>, transitions: Vec<Transition>, vars: Vec<VarDecl>, marking: Vec<u32>) -> Self {
        assert_eq!(places.len(), marking.len(), "marking must cover every place");
        let place_index = places.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        let var_index = vars.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();
        let valuation = vars.iter().map(|v| v.init.clone()).collect();
        Cvn {
            places,
            transitions,
            vars,
            initial: CvnState { marking, valuation },
            place_index,
            var_index,
        }
    }

    pub fn place(&self, name: &str) -> Option<PlaceId> {
        self.place_index.get(name).copied()
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.var_index.get(name).copied()
    }

    pub fn value<'s>(&self, state: &'s CvnState, name: &str) -> Option<&'s Value> {
        self.var(name).map(|i| &state.valuation[i])
    }

    pub fn guard_value(&self, t: &Transition, s: &CvnState) -> Truth3 {
        eval_guard(&t.guard, &View { net: self, state: s }).unwrap_or(Truth3::Unknown)
    }

    /// Whether the input places hold enough tokens, ignoring the guard.
    pub fn tokens_available(&self, t: &Transition, s: &CvnState) -> bool {
        t.inputs.iter().all(|&(p, w)| s.marking[p] >= w)
    }

    /// Token-enabled and a guard that is not definitely false.
    pub fn enabled(&self, t: &Transition, s: &CvnState) -> bool {
        self.tokens_available(t, s) && self.guard_value(t, s) != Truth3::False
    }

    pub fn enabled_transitions(&self, s: &CvnState) -> Vec<TransitionId> {
        (0..self.transitions.len())
            .filter(|&i| self.enabled(&self.transitions[i], s))
            .collect()
    }

    /// Fires `t`. Updates are evaluated against the pre-firing valuation.
    pub fn fire(&self, t: &Transition, s: &CvnState) -> Result<CvnState, FireError> {
        if !self.enabled(t, s) {
            return Err(FireError::NotEnabled(t.name.clone()));
        }
        let mut next = s.clone();
        for &(p, w) in &t.inputs {
            next.marking[p] -= w;
        }
        for &(p, w) in &t.outputs {
            next.marking[p] += w;
        }
        let view = View { net: self, state: s };
        for (x, rhs) in &t.updates {
            let v = match rhs {
                Assign::Top => Value::Top,
                Assign::Expr(e) => eval_expr(e, &view).unwrap_or(Value::Top),
            };
            if matches!(self.vars[*x].role, VarRole::Waiters { .. }) {
                if let Value::Concrete(crate::expr::Literal::Int(n)) = &v {
                    if *n < 0 {
                        return Err(FireError::NegativeCounter(self.vars[*x].name.clone()));
                    }
                }
            }
            next.valuation[*x] = v;
        }
        Ok(next)
    }

    pub fn control_places(&self) -> impl Iterator<Item = PlaceId> + '_ {
        (0..self.places.len()).filter(|&p| self.places[p].class.is_control())
    }

    pub fn resource_places(&self) -> impl Iterator<Item = PlaceId> + '_ {
        (0..self.places.len()).filter(|&p| matches!(self.places[p].class, PlaceClass::Resource { .. }))
    }

    pub fn resource_place(&self, resource: &str) -> Option<PlaceId> {
        self.place(&format!("rp({resource})"))
    }

    pub fn return_place(&self, function: &str) -> Option<PlaceId> {
        self.place(&format!("cp({function},ret)"))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("net serializes")
    }

    /// Graphviz rendering with nodes in id order, so equal nets give equal text.
    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph cvn {\n  rankdir=TB;\n");
        for (i, p) in self.places.iter().enumerate() {
            let tokens = self.initial.marking[i];
            let _ = writeln!(
                out,
                "  p{i} [shape=circle, label=\"{}\\n{}{}\"];",
                esc(&p.name),
                p.class.kind_name(),
                if tokens > 0 { format!(" •{tokens}") } else { String::new() }
            );
        }
        for (i, t) in self.transitions.iter().enumerate() {
            let mut label = format!("{}\\n@{}", t.tag, t.anchor);
            if t.guard != BoolExpr::True {
                let _ = write!(label, "\\n[{}]", t.guard);
            }
            for (x, rhs) in &t.updates {
                let _ = write!(label, "\\n{} := {rhs}", self.vars[*x].name);
            }
            let _ = writeln!(out, "  t{i} [shape=box, label=\"{}\"];", esc(&label));
            for &(p, w) in &t.inputs {
                let wl = if w > 1 { format!(" [label=\"{w}\"]") } else { String::new() };
                let _ = writeln!(out, "  p{p} -> t{i}{wl};");
            }
            for &(p, w) in &t.outputs {
                let wl = if w > 1 { format!(" [label=\"{w}\"]") } else { String::new() };
                let _ = writeln!(out, "  t{i} -> p{p}{wl};");
            }
        }
        out.push_str("}\n");
        out
    }

    /// Multi-line textual rendering of a state, listing only marked places.
    pub fn describe_state(&self, s: &CvnState) -> String {
        let marked: Vec<String> = s
            .marking
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(p, n)| if *n == 1 { self.places[p].name.clone() } else { format!("{}×{n}", self.places[p].name) })
            .collect();
        let vals: Vec<String> = self
            .vars
            .iter()
            .zip(&s.valuation)
            .map(|(v, x)| format!("{}={x}", v.name))
            .collect();
        format!("M: {{{}}}\nV: {{{}}}", marked.join(", "), vals.join(", "))
    }
}
