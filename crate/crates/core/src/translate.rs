//! CIR to CVN translation: resource scan, per-statement rules, summaries.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::check::flow::drop_modes;
use crate::cir::{BusinessGoal, CirArtifact, FunctionDef, Literal, Op, ResourceKind, Sid, Transfer, SID_BOTTOM};
use crate::cvn::{
    Assign, ControlPoint, Cvn, CvnState, Place, PlaceClass, PlaceId, Tag, Transition, VarDecl, VarId, VarRole,
};
use crate::expr::{BinOp, BoolExpr, CmpOp, Expr, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlaceCheck {
    pub place: PlaceId,
    pub name: String,
    pub threshold: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VarCheck {
    pub var: VarId,
    pub name: String,
    pub value: Literal,
}

/// A goal restated over places and store variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoalQuery {
    pub goal: String,
    pub completion: Vec<PlaceCheck>,
    pub availability: Vec<PlaceCheck>,
    pub variables: Vec<VarCheck>,
}

impl GoalQuery {
    /// Variable requirements need the exact literal; `⊤` does not satisfy them.
    pub fn satisfied(&self, s: &CvnState) -> bool {
        self.completion
            .iter()
            .chain(&self.availability)
            .all(|c| s.marking[c.place] >= c.threshold)
            && self
                .variables
                .iter()
                .all(|v| s.valuation[v.var] == Value::Concrete(v.value.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("goal `{goal}` references `{target}`, which has no counterpart in the net")]
pub struct UnknownGoalTarget {
    pub goal: String,
    pub target: String,
}

#[derive(Clone, Debug)]
pub struct Translation {
    pub net: Cvn,
    pub queries: Vec<GoalQuery>,
}

pub fn control_name(function: &str, point: &ControlPoint) -> String {
    match point {
        ControlPoint::Stmt(s) => format!("cp({function},{s})"),
        ControlPoint::Post(s) => format!("cp({function},{s}.post)"),
        ControlPoint::Ret => format!("cp({function},ret)"),
    }
}

pub fn waiters_var(condvar: &str) -> String {
    format!("nw[{condvar}]")
}

pub fn notified_var(site: &Sid) -> String {
    format!("na[{site}]")
}

/// Number of concurrent entities: the entry plus every spawn site.
pub fn entity_count(art: &CirArtifact) -> u32 {
    let spawns = art
        .functions
        .values()
        .flat_map(|f| &f.body)
        .filter(|s| matches!(s.op, Op::Spawn { .. } | Op::SpawnAsync { .. }))
        .count();
    1 + spawns as u32
}

struct Builder<'a> {
    art: &'a CirArtifact,
    n: u32,
    places: Vec<Place>,
    marking: Vec<u32>,
    place_ids: HashMap<String, PlaceId>,
    vars: Vec<VarDecl>,
    var_ids: HashMap<String, VarId>,
    transitions: Vec<Transition>,
}

struct Site<'a> {
    f: &'a FunctionDef,
    sid: &'a Sid,
}

impl<'a> Builder<'a> {
    fn place(&mut self, name: String, class: PlaceClass, tokens: u32) -> PlaceId {
        if let Some(&id) = self.place_ids.get(&name) {
            return id;
        }
        let id = self.places.len();
        self.place_ids.insert(name.clone(), id);
        self.places.push(Place { name, class });
        self.marking.push(tokens);
        id
    }

    fn cp(&mut self, function: &str, point: ControlPoint) -> PlaceId {
        let name = control_name(function, &point);
        self.place(
            name,
            PlaceClass::Control {
                function: function.to_string(),
                point,
            },
            0,
        )
    }

    fn rp(&self, resource: &str) -> PlaceId {
        *self
            .place_ids
            .get(&format!("rp({resource})"))
            .unwrap_or_else(|| panic!("translation of unchecked artifact: no resource place for `{resource}`"))
    }

    fn var(&mut self, name: String, init: Value, role: VarRole) -> VarId {
        let id = self.vars.len();
        self.var_ids.insert(name.clone(), id);
        self.vars.push(VarDecl { name, init, role });
        id
    }

    fn var_id(&self, name: &str) -> VarId {
        *self
            .var_ids
            .get(name)
            .unwrap_or_else(|| panic!("translation of unchecked artifact: no variable `{name}`"))
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        site: &Site,
        tag: Tag,
        inputs: Vec<(PlaceId, u32)>,
        outputs: Vec<(PlaceId, u32)>,
        guard: BoolExpr,
        updates: Vec<(VarId, Assign)>,
    ) {
        let anchor = if tag == Tag::Summary {
            Sid::new(SID_BOTTOM)
        } else {
            site.sid.clone()
        };
        let name = format!("t{}:{tag}@{}", self.transitions.len(), site.sid);
        self.transitions.push(Transition {
            name,
            tag,
            inputs,
            outputs,
            guard,
            updates,
            anchor,
            origin: site.sid.clone(),
            function: site.f.name.clone(),
        });
    }

    fn resources(&mut self) {
        for r in self.art.resources.values() {
            let tokens = match r.kind {
                ResourceKind::Mutex => 1,
                ResourceKind::RwLock => self.n,
                ResourceKind::Semaphore => r.count.unwrap_or(0).max(0) as u32,
                ResourceKind::Channel | ResourceKind::Condvar => 0,
                ResourceKind::Var | ResourceKind::Atomic => continue,
            };
            self.place(
                format!("rp({})", r.name),
                PlaceClass::Resource {
                    resource: r.name.clone(),
                },
                tokens,
            );
        }
        for r in self.art.resources.values().filter(|r| r.kind.is_data()) {
            let init = r.init.clone().map(Value::Concrete).unwrap_or(Value::Top);
            self.var(r.name.clone(), init, VarRole::Data);
        }
        for r in self.art.resources.values().filter(|r| r.kind == ResourceKind::Condvar) {
            self.var(
                waiters_var(&r.name),
                Value::int(0),
                VarRole::Waiters {
                    condvar: r.name.clone(),
                },
            );
        }
        for (cv, sid) in self.art.wait_sites() {
            self.var(
                notified_var(sid),
                Value::bool(false),
                VarRole::NotifyAll {
                    condvar: cv.to_string(),
                    site: sid.clone(),
                },
            );
        }
    }

    fn function(&mut self, f: &'a FunctionDef) {
        for s in &f.body {
            self.cp(&f.name, ControlPoint::Stmt(s.sid.clone()));
        }
        self.cp(&f.name, ControlPoint::Ret);
        let modes = drop_modes(f);
        for (i, s) in f.body.iter().enumerate() {
            let site = Site { f, sid: &s.sid };
            let src = self.cp(&f.name, ControlPoint::Stmt(s.sid.clone()));
            let transfer = f.effective_transfer(i);
            if let (Op::Cas { var, expected, new }, Transfer::Branch { then, otherwise, .. }) = (&s.op, &transfer) {
                let t = self.cp(&f.name, ControlPoint::Stmt(then.clone()));
                let e = self.cp(&f.name, ControlPoint::Stmt(otherwise.clone()));
                self.cas(&site, src, t, e, var, expected, new);
                continue;
            }
            match &transfer {
                Transfer::Next { target } => {
                    let dest = self.cp(&f.name, ControlPoint::Stmt(target.clone()));
                    self.op(&site, &s.op, src, dest, modes[i]);
                }
                Transfer::Return => {
                    let post = self.cp(&f.name, ControlPoint::Post(s.sid.clone()));
                    self.op(&site, &s.op, src, post, modes[i]);
                    let ret = self.cp(&f.name, ControlPoint::Ret);
                    self.emit(&site, Tag::Return, vec![(post, 1)], vec![(ret, 1)], BoolExpr::True, vec![]);
                }
                Transfer::Branch { .. } | Transfer::Switch { .. } => {
                    let from = if s.op.is_plain() {
                        src
                    } else {
                        let post = self.cp(&f.name, ControlPoint::Post(s.sid.clone()));
                        self.op(&site, &s.op, src, post, modes[i]);
                        post
                    };
                    self.split(&site, &transfer, from);
                }
            }
        }
    }

    fn split(&mut self, site: &Site, transfer: &Transfer, from: PlaceId) {
        let f = site.f;
        match transfer {
            Transfer::Branch { cond, then, otherwise } => {
                let t = self.cp(&f.name, ControlPoint::Stmt(then.clone()));
                let e = self.cp(&f.name, ControlPoint::Stmt(otherwise.clone()));
                self.emit(site, Tag::BranchTrue, vec![(from, 1)], vec![(t, 1)], cond.clone(), vec![]);
                self.emit(site, Tag::BranchFalse, vec![(from, 1)], vec![(e, 1)], BoolExpr::not(cond.clone()), vec![]);
            }
            Transfer::Switch { var, arms, default } => {
                let x = Expr::var(var.clone());
                for (lit, target) in arms {
                    let t = self.cp(&f.name, ControlPoint::Stmt(target.clone()));
                    let guard = BoolExpr::cmp(x.clone(), CmpOp::Eq, Expr::lit(lit.clone()));
                    self.emit(site, Tag::SwitchArm, vec![(from, 1)], vec![(t, 1)], guard, vec![]);
                }
                let d = self.cp(&f.name, ControlPoint::Stmt(default.clone()));
                let guard = BoolExpr::all(
                    arms.iter()
                        .map(|(lit, _)| BoolExpr::cmp(x.clone(), CmpOp::Ne, Expr::lit(lit.clone()))),
                );
                self.emit(site, Tag::SwitchDefault, vec![(from, 1)], vec![(d, 1)], guard, vec![]);
            }
            _ => unreachable!("only branch and switch split control"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn cas(&mut self, site: &Site, src: PlaceId, ok: PlaceId, fail: PlaceId, var: &str, expected: &Expr, new: &Expr) {
        let x = self.var_id(var);
        let eq = BoolExpr::cmp(Expr::var(var), CmpOp::Eq, expected.clone());
        let ne = BoolExpr::cmp(Expr::var(var), CmpOp::Ne, expected.clone());
        self.emit(site, Tag::CasSuccess, vec![(src, 1)], vec![(ok, 1)], eq, vec![(x, Assign::Expr(new.clone()))]);
        self.emit(site, Tag::CasFailure, vec![(src, 1)], vec![(fail, 1)], ne, vec![]);
    }

    fn op(&mut self, site: &Site, op: &Op, src: PlaceId, dest: PlaceId, write_mode: Option<bool>) {
        let f = site.f;
        let t = BoolExpr::True;
        let step = |extra_in: Vec<(PlaceId, u32)>, extra_out: Vec<(PlaceId, u32)>| {
            let mut inputs = vec![(src, 1)];
            inputs.extend(extra_in);
            let mut outputs = vec![(dest, 1)];
            outputs.extend(extra_out);
            (inputs, outputs)
        };
        match op {
            Op::Lock { target } | Op::Acquire { target } | Op::ReadLock { target } | Op::WriteLock { target } => {
                let (tag, w) = match op {
                    Op::Lock { .. } => (Tag::Lock, 1),
                    Op::Acquire { .. } => (Tag::Acquire, 1),
                    Op::ReadLock { .. } => (Tag::ReadLock, 1),
                    _ => (Tag::WriteLock, self.n),
                };
                let (i, o) = step(vec![(self.rp(target), w)], vec![]);
                self.emit(site, tag, i, o, t, vec![]);
            }
            Op::Drop { target } | Op::Release { target } => {
                let (tag, w) = match (op, self.art.resource_kind(target)) {
                    (Op::Release { .. }, _) => (Tag::Release, 1),
                    (_, Some(ResourceKind::RwLock)) if write_mode == Some(true) => (Tag::WriteUnlock, self.n),
                    (_, Some(ResourceKind::RwLock)) => (Tag::ReadUnlock, 1),
                    _ => (Tag::Unlock, 1),
                };
                let (i, o) = step(vec![], vec![(self.rp(target), w)]);
                self.emit(site, tag, i, o, t, vec![]);
            }
            Op::Send { channel } => {
                let (i, o) = step(vec![], vec![(self.rp(channel), 1)]);
                self.emit(site, Tag::Send, i, o, t, vec![]);
            }
            Op::Recv { channel } => {
                let (i, o) = step(vec![(self.rp(channel), 1)], vec![]);
                self.emit(site, Tag::Recv, i, o, t, vec![]);
            }
            Op::Write { var, value } | Op::Store { var, value } => {
                let tag = if matches!(op, Op::Write { .. }) { Tag::VarWrite } else { Tag::AtomicStore };
                let x = self.var_id(var);
                let (i, o) = step(vec![], vec![]);
                self.emit(site, tag, i, o, t, vec![(x, Assign::Expr(value.clone()))]);
            }
            Op::Cas { var, expected, new } => self.cas(site, src, dest, dest, var, expected, new),
            Op::Wait { condvar, mutex } => {
                let wp = self.place(
                    format!("wp({})", site.sid),
                    PlaceClass::Wait {
                        function: f.name.clone(),
                        sid: site.sid.clone(),
                    },
                    0,
                );
                let ra = self.place(
                    format!("ra({})", site.sid),
                    PlaceClass::Reacquire {
                        function: f.name.clone(),
                        sid: site.sid.clone(),
                    },
                    0,
                );
                let (m, cv) = (self.rp(mutex), self.rp(condvar));
                let nw_name = waiters_var(condvar);
                let na_name = notified_var(site.sid);
                let (nw, na) = (self.var_id(&nw_name), self.var_id(&na_name));
                let nw_plus = Assign::Expr(Expr::bin(Expr::var(nw_name.clone()), BinOp::Add, Expr::lit(Literal::Int(1))));
                let nw_minus = Assign::Expr(Expr::bin(Expr::var(nw_name), BinOp::Sub, Expr::lit(Literal::Int(1))));
                let falsify = Assign::Expr(Expr::lit(Literal::Bool(false)));
                self.emit(
                    site,
                    Tag::WaitEnter,
                    vec![(src, 1)],
                    vec![(wp, 1), (m, 1)],
                    BoolExpr::True,
                    vec![(nw, nw_plus), (na, falsify.clone())],
                );
                self.emit(site, Tag::Wake1, vec![(wp, 1), (cv, 1)], vec![(ra, 1)], BoolExpr::True, vec![(nw, nw_minus.clone())]);
                let notified = BoolExpr::cmp(Expr::var(na_name), CmpOp::Eq, Expr::lit(Literal::Bool(true)));
                self.emit(site, Tag::WakeA, vec![(wp, 1)], vec![(ra, 1)], notified, vec![(nw, nw_minus), (na, falsify)]);
                self.emit(site, Tag::Reacquire, vec![(ra, 1), (m, 1)], vec![(dest, 1)], BoolExpr::True, vec![]);
            }
            Op::NotifyOne { condvar } | Op::NotifyAll { condvar } => {
                let nw_name = waiters_var(condvar);
                let some = BoolExpr::cmp(Expr::var(nw_name.clone()), CmpOp::Gt, Expr::lit(Literal::Int(0)));
                let none = BoolExpr::cmp(Expr::var(nw_name), CmpOp::Eq, Expr::lit(Literal::Int(0)));
                if matches!(op, Op::NotifyOne { .. }) {
                    let cv = self.rp(condvar);
                    self.emit(site, Tag::NotifySuccess, vec![(src, 1)], vec![(dest, 1), (cv, 1)], some, vec![]);
                    self.emit(site, Tag::NotifyLost, vec![(src, 1)], vec![(dest, 1)], none, vec![]);
                } else {
                    let sites: Vec<Sid> = self
                        .art
                        .wait_sites()
                        .into_iter()
                        .filter(|(cv, _)| cv == condvar)
                        .map(|(_, s)| s.clone())
                        .collect();
                    let updates = sites
                        .iter()
                        .map(|w| (self.var_id(&notified_var(w)), Assign::Expr(Expr::lit(Literal::Bool(true)))))
                        .collect();
                    self.emit(site, Tag::NotifyAllSuccess, vec![(src, 1)], vec![(dest, 1)], some, updates);
                    self.emit(site, Tag::NotifyAllLost, vec![(src, 1)], vec![(dest, 1)], none, vec![]);
                }
            }
            Op::Spawn { function } => {
                let g = self.art.function(function).expect("spawned function exists");
                let entry = g.entry_sid().expect("spawned function has a body").clone();
                let child = self.cp(function, ControlPoint::Stmt(entry));
                let (i, o) = step(vec![], vec![(child, 1)]);
                self.emit(site, Tag::Spawn, i, o, t, vec![]);
            }
            Op::Join { function } => {
                let ret = self.cp(function, ControlPoint::Ret);
                let (i, o) = step(vec![(ret, 1)], vec![]);
                self.emit(site, Tag::Join, i, o, t, vec![]);
            }
            Op::Call { function } if !self.art.functions.contains_key(function) => {
                let summary = self
                    .art
                    .summaries
                    .get(function)
                    .unwrap_or_else(|| panic!("translation of unchecked artifact: no summary for `{function}`"));
                let updates = summary
                    .writes
                    .iter()
                    .filter(|x| self.var_ids.contains_key(*x))
                    .map(|x| (self.var_id(x), Assign::Top))
                    .collect();
                let (i, o) = step(vec![], vec![]);
                self.emit(site, Tag::Summary, i, o, t, updates);
            }
            Op::Nop | Op::Read { .. } | Op::Load { .. } | Op::SpawnAsync { .. } | Op::Await { .. } | Op::Call { .. } => {
                let (i, o) = step(vec![], vec![]);
                self.emit(site, Tag::Sequential, i, o, t, vec![]);
            }
        }
    }
}

/// Translates a checker-accepted artifact. Panics on references the checker
/// would have rejected.
pub fn translate(art: &CirArtifact) -> Translation {
    let mut b = Builder {
        art,
        n: entity_count(art),
        places: Vec::new(),
        marking: Vec::new(),
        place_ids: HashMap::new(),
        vars: Vec::new(),
        var_ids: HashMap::new(),
        transitions: Vec::new(),
    };
    b.resources();
    for f in art.functions.values() {
        b.function(f);
    }
    if let Some(entry) = art.entry.as_deref().and_then(|e| art.function(e)) {
        if let Some(sid) = entry.entry_sid() {
            let p = b.cp(&entry.name, ControlPoint::Stmt(sid.clone()));
            b.marking[p] = 1;
        }
    }
    let net = Cvn::new(b.places, b.transitions, b.vars, b.marking);
    let queries = map_goals(&art.goals, &net).expect("checked goals map onto the net");
    Translation { net, queries }
}

pub fn map_goals(goals: &[BusinessGoal], net: &Cvn) -> Result<Vec<GoalQuery>, UnknownGoalTarget> {
    goals
        .iter()
        .map(|g| {
            let missing = |target: &str| UnknownGoalTarget {
                goal: g.id.clone(),
                target: target.to_string(),
            };
            let completion = g
                .completion
                .iter()
                .map(|f| {
                    let place = net.return_place(f).ok_or_else(|| missing(f))?;
                    Ok(PlaceCheck {
                        place,
                        name: net.places[place].name.clone(),
                        threshold: 1,
                    })
                })
                .collect::<Result<_, _>>()?;
            let availability = g
                .availability
                .iter()
                .map(|r| {
                    let place = net.resource_place(r).ok_or_else(|| missing(r))?;
                    Ok(PlaceCheck {
                        place,
                        name: net.places[place].name.clone(),
                        threshold: net.initial.marking[place],
                    })
                })
                .collect::<Result<_, _>>()?;
            let variables = g
                .variables
                .iter()
                .map(|(x, lit)| {
                    let var = net.var(x).ok_or_else(|| missing(x))?;
                    Ok(VarCheck {
                        var,
                        name: x.clone(),
                        value: lit.clone(),
                    })
                })
                .collect::<Result<_, _>>()?;
            Ok(GoalQuery {
                goal: g.id.clone(),
                completion,
                availability,
                variables,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::parse_cir;

    #[test]
    fn nop_then_return() {
        let art = parse_cir("functions:\n  main:\n    kind: normal\n    body:\n    - { sid: s1, op: nop, next: return }\nentry: main\n").unwrap();
        let net = translate(&art).net;
        let tags: Vec<Tag> = net.transitions.iter().map(|t| t.tag).collect();
        assert_eq!(tags, [Tag::Sequential, Tag::Return]);
        assert_eq!(net.places.len(), 3);
        assert_eq!(net.resource_places().count(), 0);
        assert_eq!(net.initial.marking, vec![1, 0, 0]);
    }

    #[test]
    fn semaphore_availability_threshold() {
        let art = parse_cir("resources:\n  s: { kind: Semaphore, count: 3 }\nfunctions:\n  main:\n    kind: normal\n    body:\n    - { sid: s1, op: acquire(s), next: s2 }\n    - { sid: s2, op: release(s) }\nentry: main\ngoals:\n  - id: G\n    availability:\n      - [s, available]\n").unwrap();
        let tr = translate(&art);
        assert_eq!(tr.queries[0].availability[0].threshold, 3);
        assert!(tr.queries[0].satisfied(&tr.net.initial));
    }

    #[test]
    fn empty_goal_is_always_satisfied() {
        let art = parse_cir("functions:\n  main:\n    kind: normal\n    body:\n    - { sid: s1, op: nop }\nentry: main\ngoals:\n  - id: G\n").unwrap();
        let tr = translate(&art);
        assert!(tr.queries[0].satisfied(&tr.net.initial));
    }
}
