//! CIR artifacts: globally named resources, functions made of sid-anchored
//! statements, summaries for unmodelled callees, and business goals.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::expr::{BoolExpr, Expr};

mod block;
mod parse;
mod serialize;

pub(crate) use parse::is_ident;

pub use parse::{parse_cir, parse_cir_with_warnings, ParseError, ParseErrorList, ParseWarning, Parsed};
pub use serialize::serialize_cir;
pub use crate::expr::{BaseType, Literal};

/// Name of the entry function synthesized for the `threads:` shorthand.
pub const IMPLICIT_ENTRY: &str = "__entry";

/// Reserved sentinel anchor for transitions that come from summaries.
pub const SID_BOTTOM: &str = "sid_⊥";

/// Stable statement identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sid(pub String);

impl Sid {
    pub fn new(s: impl Into<String>) -> Self {
        Sid(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Sid {
    fn from(s: &str) -> Self {
        Sid(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceKind {
    Mutex,
    RwLock,
    Condvar,
    Semaphore,
    Channel,
    Var,
    Atomic,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 7] = [
        ResourceKind::Mutex,
        ResourceKind::RwLock,
        ResourceKind::Condvar,
        ResourceKind::Semaphore,
        ResourceKind::Channel,
        ResourceKind::Var,
        ResourceKind::Atomic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Mutex => "Mutex",
            ResourceKind::RwLock => "RwLock",
            ResourceKind::Condvar => "Condvar",
            ResourceKind::Semaphore => "Semaphore",
            ResourceKind::Channel => "Channel",
            ResourceKind::Var => "Var",
            ResourceKind::Atomic => "Atomic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Synchronization primitives get a resource place; data resources live in the store.
    pub fn is_sync(self) -> bool {
        !self.is_data()
    }

    pub fn is_data(self) -> bool {
        matches!(self, ResourceKind::Var | ResourceKind::Atomic)
    }

    pub fn is_lock(self) -> bool {
        matches!(self, ResourceKind::Mutex | ResourceKind::RwLock)
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A resource table entry. Which optional fields are meaningful depends on `kind`;
/// missing required configuration is reported by the checker, not the parser.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDecl {
    pub name: String,
    pub kind: ResourceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<i64>,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    pub ty: Option<BaseType>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub variants: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<Literal>,
}

impl ResourceDecl {
    pub fn new(name: impl Into<String>, kind: ResourceKind) -> Self {
        ResourceDecl {
            name: name.into(),
            kind,
            paired_with: None,
            count: None,
            ty: None,
            variants: Vec::new(),
            init: None,
        }
    }
}

/// Statement operation. The operation and the control transfer are independent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Nop,
    Lock { target: String },
    Drop { target: String },
    ReadLock { target: String },
    WriteLock { target: String },
    Wait { condvar: String, mutex: String },
    NotifyOne { condvar: String },
    NotifyAll { condvar: String },
    Acquire { target: String },
    Release { target: String },
    Send { channel: String },
    Recv { channel: String },
    Read { var: String },
    Write { var: String, value: Expr },
    Load { var: String },
    Store { var: String, value: Expr },
    Cas { var: String, expected: Expr, new: Expr },
    Spawn { function: String },
    Join { function: String },
    SpawnAsync { function: String },
    Await { function: String },
    Call { function: String },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Nop => "nop",
            Op::Lock { .. } => "lock",
            Op::Drop { .. } => "drop",
            Op::ReadLock { .. } => "read_lock",
            Op::WriteLock { .. } => "write_lock",
            Op::Wait { .. } => "wait",
            Op::NotifyOne { .. } => "notify_one",
            Op::NotifyAll { .. } => "notify_all",
            Op::Acquire { .. } => "acquire",
            Op::Release { .. } => "release",
            Op::Send { .. } => "send",
            Op::Recv { .. } => "recv",
            Op::Read { .. } => "read",
            Op::Write { .. } => "write",
            Op::Load { .. } => "load",
            Op::Store { .. } => "store",
            Op::Cas { .. } => "cas",
            Op::Spawn { .. } => "spawn",
            Op::Join { .. } => "join",
            Op::SpawnAsync { .. } => "spawn_async",
            Op::Await { .. } => "await",
            Op::Call { .. } => "call",
        }
    }

    /// Resource names this operation touches, in argument order.
    pub fn resources(&self) -> Vec<&str> {
        match self {
            Op::Lock { target }
            | Op::Drop { target }
            | Op::ReadLock { target }
            | Op::WriteLock { target }
            | Op::Acquire { target }
            | Op::Release { target } => vec![target],
            Op::Wait { condvar, mutex } => vec![condvar, mutex],
            Op::NotifyOne { condvar } | Op::NotifyAll { condvar } => vec![condvar],
            Op::Send { channel } | Op::Recv { channel } => vec![channel],
            Op::Read { var } | Op::Load { var } => vec![var],
            Op::Write { var, .. } | Op::Store { var, .. } | Op::Cas { var, .. } => vec![var],
            _ => Vec::new(),
        }
    }

    /// Function named by a control operation.
    pub fn function(&self) -> Option<&str> {
        match self {
            Op::Spawn { function }
            | Op::Join { function }
            | Op::SpawnAsync { function }
            | Op::Await { function }
            | Op::Call { function } => Some(function),
            _ => None,
        }
    }

    /// Value expressions carried by the operation.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Op::Write { value, .. } | Op::Store { value, .. } => vec![value],
            Op::Cas { expected, new, .. } => vec![expected, new],
            _ => Vec::new(),
        }
    }

    /// Operations that translate to a plain sequential step with no resource
    /// or store effect (calls are resolved against summaries separately).
    pub fn is_plain(&self) -> bool {
        matches!(
            self,
            Op::Nop | Op::Read { .. } | Op::Load { .. } | Op::SpawnAsync { .. } | Op::Await { .. }
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Nop => f.write_str("nop"),
            Op::Wait { condvar, mutex } => write!(f, "wait({condvar}, {mutex})"),
            Op::Write { var, value } | Op::Store { var, value } => {
                write!(f, "{}({var}, {value})", self.name())
            }
            Op::Cas { var, expected, new } => write!(f, "cas({var}, {expected}, {new})"),
            other => {
                let arg = other
                    .resources()
                    .first()
                    .copied()
                    .or_else(|| other.function())
                    .unwrap_or_default();
                write!(f, "{}({arg})", other.name())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transfer {
    Next { target: Sid },
    Branch { cond: BoolExpr, then: Sid, otherwise: Sid },
    Switch { var: String, arms: Vec<(Literal, Sid)>, default: Sid },
    Return,
}

impl Transfer {
    pub fn next(sid: impl Into<String>) -> Self {
        Transfer::Next { target: Sid(sid.into()) }
    }

    /// Successor sids in transfer order (empty for `Return`).
    pub fn targets(&self) -> Vec<&Sid> {
        match self {
            Transfer::Next { target } => vec![target],
            Transfer::Branch { then, otherwise, .. } => vec![then, otherwise],
            Transfer::Switch { arms, default, .. } => {
                arms.iter().map(|(_, s)| s).chain(std::iter::once(default)).collect()
            }
            Transfer::Return => Vec::new(),
        }
    }

    pub fn targets_mut(&mut self) -> Vec<&mut Sid> {
        match self {
            Transfer::Next { target } => vec![target],
            Transfer::Branch { then, otherwise, .. } => vec![then, otherwise],
            Transfer::Switch { arms, default, .. } => {
                let mut v: Vec<&mut Sid> = arms.iter_mut().map(|(_, s)| s).collect();
                v.push(default);
                v
            }
            Transfer::Return => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub sid: Sid,
    pub op: Op,
    /// `None` when the document omits the transfer field.
    pub transfer: Option<Transfer>,
}

impl Statement {
    pub fn new(sid: impl Into<String>, op: Op, transfer: Option<Transfer>) -> Self {
        Statement {
            sid: Sid(sid.into()),
            op,
            transfer,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    #[default]
    Normal,
    Async,
    Closure,
}

impl FunctionKind {
    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::Normal => "normal",
            FunctionKind::Async => "async",
            FunctionKind::Closure => "closure",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "normal" => FunctionKind::Normal,
            "async" => FunctionKind::Async,
            "closure" => FunctionKind::Closure,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub kind: FunctionKind,
    pub body: Vec<Statement>,
    /// Generated by the `threads:` shorthand; never serialized.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

impl FunctionDef {
    pub fn new(name: impl Into<String>, body: Vec<Statement>) -> Self {
        FunctionDef {
            name: name.into(),
            kind: FunctionKind::Normal,
            body,
            synthetic: false,
        }
    }

    pub fn entry_sid(&self) -> Option<&Sid> {
        self.body.first().map(|s| &s.sid)
    }

    /// Transfer with the omitted-field defaults applied: the following
    /// statement, or `Return` for the last one.
    pub fn effective_transfer(&self, idx: usize) -> Transfer {
        match &self.body[idx].transfer {
            Some(t) => t.clone(),
            None => match self.body.get(idx + 1) {
                Some(next) => Transfer::Next {
                    target: next.sid.clone(),
                },
                None => Transfer::Return,
            },
        }
    }

    pub fn index_of(&self, sid: &Sid) -> Option<usize> {
        self.body.iter().position(|s| &s.sid == sid)
    }

    pub fn statement(&self, sid: &Sid) -> Option<&Statement> {
        self.body.iter().find(|s| &s.sid == sid)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSummary {
    pub reads: Vec<String>,
    pub writes: Vec<String>,
    pub calls: Vec<String>,
    pub has_concurrency: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusinessGoal {
    pub id: String,
    pub description: String,
    /// Functions that must have returned.
    pub completion: Vec<String>,
    /// Resources that must be back in their initial (free) state.
    pub availability: Vec<String>,
    pub variables: IndexMap<String, Literal>,
}

impl BusinessGoal {
    pub fn is_empty(&self) -> bool {
        self.completion.is_empty() && self.availability.is_empty() && self.variables.is_empty()
    }
}

/// The six-part artifact: resources, protection map, functions, summaries,
/// entry function and goals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CirArtifact {
    pub resources: IndexMap<String, ResourceDecl>,
    pub protection: IndexMap<String, Vec<String>>,
    pub functions: IndexMap<String, FunctionDef>,
    pub summaries: IndexMap<String, FunctionSummary>,
    pub entry: Option<String>,
    pub goals: Vec<BusinessGoal>,
}

impl CirArtifact {
    pub fn resource(&self, name: &str) -> Option<&ResourceDecl> {
        self.resources.get(name)
    }

    pub fn resource_kind(&self, name: &str) -> Option<ResourceKind> {
        self.resources.get(name).map(|r| r.kind)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.get(name)
    }

    /// Locates a statement anywhere in the artifact.
    pub fn find_statement(&self, sid: &Sid) -> Option<(&FunctionDef, usize)> {
        self.functions
            .values()
            .find_map(|f| f.index_of(sid).map(|i| (f, i)))
    }

    pub fn statement_count(&self) -> usize {
        self.functions.values().map(|f| f.body.len()).sum()
    }

    /// Whether `sid` belongs to a function written by the user.
    pub fn is_user_sid(&self, sid: &Sid) -> bool {
        matches!(self.find_statement(sid), Some((f, _)) if !f.synthetic)
    }

    /// All enum variants declared across the resource table.
    pub fn enum_variants(&self) -> Vec<&str> {
        self.resources
            .values()
            .flat_map(|r| r.variants.iter().map(String::as_str))
            .collect()
    }

    /// Every condvar wait site, as (condvar, sid), in artifact order.
    pub fn wait_sites(&self) -> Vec<(&str, &Sid)> {
        self.functions
            .values()
            .flat_map(|f| f.body.iter())
            .filter_map(|s| match &s.op {
                Op::Wait { condvar, .. } => Some((condvar.as_str(), &s.sid)),
                _ => None,
            })
            .collect()
    }
}

/// Builds the entry function used by the `threads:` shorthand: spawn every
/// thread in listing order, then join them in the same order.
pub fn implicit_entry(threads: &[String]) -> FunctionDef {
    let mut body = Vec::new();
    let spawn = |t: &str| format!("__e_spawn_{t}");
    let join = |t: &str| format!("__e_join_{t}");
    let sids: Vec<(String, Op)> = threads
        .iter()
        .map(|t| (spawn(t), Op::Spawn { function: t.clone() }))
        .chain(threads.iter().map(|t| (join(t), Op::Join { function: t.clone() })))
        .collect();
    for (i, (sid, op)) in sids.iter().enumerate() {
        let transfer = match sids.get(i + 1) {
            Some((next, _)) => Transfer::next(next.clone()),
            None => Transfer::Return,
        };
        body.push(Statement::new(sid.clone(), op.clone(), Some(transfer)));
    }
    FunctionDef {
        name: IMPLICIT_ENTRY.to_string(),
        kind: FunctionKind::Normal,
        body,
        synthetic: true,
    }
}
