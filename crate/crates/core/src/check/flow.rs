use std::collections::{BTreeSet, HashSet, VecDeque};

use super::{successors, Sink};
use crate::cir::{CirArtifact, FunctionDef, Op, ResourceKind, Transfer};

type Held = BTreeSet<String>;

fn reachable_from(f: &FunctionDef, start: usize) -> Vec<bool> {
    let mut seen = vec![false; f.body.len()];
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        queue.extend(successors(f, i));
    }
    seen
}

/// For every statement, whether it lies on a control-flow cycle.
pub(crate) fn on_cycle(f: &FunctionDef) -> Vec<bool> {
    (0..f.body.len())
        .map(|i| successors(f, i).into_iter().any(|s| reachable_from(f, s)[i]))
        .collect()
}

pub(crate) fn apply(op: &Op, held: &Held) -> Held {
    let mut out = held.clone();
    match op {
        Op::Lock { target } | Op::ReadLock { target } | Op::WriteLock { target } => {
            out.insert(target.clone());
        }
        Op::Drop { target } => {
            out.remove(target);
        }
        _ => {}
    }
    out
}

pub(crate) struct LockSets {
    pub(crate) may: Vec<Held>,
    pub(crate) must: Vec<Option<Held>>,
}

pub(crate) fn lock_sets(f: &FunctionDef) -> LockSets {
    dataflow(f, apply)
}

fn apply_mode(op: &Op, held: &Held) -> Held {
    let mut out = held.clone();
    match op {
        Op::ReadLock { target } => {
            out.insert(format!("{target}:r"));
        }
        Op::WriteLock { target } => {
            out.insert(format!("{target}:w"));
        }
        Op::Drop { target } => {
            out.remove(&format!("{target}:r"));
            out.remove(&format!("{target}:w"));
        }
        _ => {}
    }
    out
}

/// Mode in which each RwLock `drop` releases: `Some(true)` for write,
/// `Some(false)` for read, `None` when no mode or both modes may reach it.
pub(crate) fn drop_modes(f: &FunctionDef) -> Vec<Option<bool>> {
    let sets = dataflow(f, apply_mode);
    f.body
        .iter()
        .enumerate()
        .map(|(i, s)| match &s.op {
            Op::Drop { target } => {
                let r = sets.may[i].contains(&format!("{target}:r"));
                let w = sets.may[i].contains(&format!("{target}:w"));
                (r != w).then_some(w)
            }
            _ => None,
        })
        .collect()
}

fn dataflow(f: &FunctionDef, apply: fn(&Op, &Held) -> Held) -> LockSets {
    let n = f.body.len();
    let mut may = vec![Held::new(); n];
    let mut must: Vec<Option<Held>> = vec![None; n];
    must[0] = Some(Held::new());
    let mut queue = VecDeque::from([0]);
    let mut queued: HashSet<usize> = HashSet::from([0]);
    while let Some(i) = queue.pop_front() {
        queued.remove(&i);
        let may_out = apply(&f.body[i].op, &may[i]);
        let must_out = must[i].as_ref().map(|m| apply(&f.body[i].op, m));
        for s in successors(f, i) {
            let mut changed = false;
            let merged: Held = may[s].union(&may_out).cloned().collect();
            if merged != may[s] {
                may[s] = merged;
                changed = true;
            }
            if let Some(out) = &must_out {
                let next = match &must[s] {
                    None => out.clone(),
                    Some(cur) => cur.intersection(out).cloned().collect(),
                };
                if must[s].as_ref() != Some(&next) {
                    must[s] = Some(next);
                    changed = true;
                }
            }
            if changed && queued.insert(s) {
                queue.push_back(s);
            }
        }
    }
    LockSets { may, must }
}

fn accessed_vars(f: &FunctionDef, idx: usize) -> Vec<&str> {
    let s = &f.body[idx];
    let mut vars = Vec::new();
    match &s.op {
        Op::Read { var } => vars.push(var.as_str()),
        Op::Write { var, value } => {
            vars.push(var.as_str());
            vars.extend(value.refs());
        }
        Op::Store { value, .. } => vars.extend(value.refs()),
        Op::Cas { expected, new, .. } => {
            vars.extend(expected.refs());
            vars.extend(new.refs());
        }
        _ => {}
    }
    match &s.transfer {
        Some(Transfer::Branch { cond, .. }) => vars.extend(cond.refs()),
        Some(Transfer::Switch { var, .. }) => vars.push(var.as_str()),
        _ => {}
    }
    vars
}

pub(crate) fn check_function(art: &CirArtifact, f: &FunctionDef, sink: &mut Sink) {
    if f.body.is_empty() {
        return;
    }
    for s in &f.body {
        if let Some(t) = &s.transfer {
            for target in t.targets() {
                if f.index_of(target).is_none() {
                    sink.push("E603", s.sid.as_str(), format!("transfer target `{target}` is not a statement of `{}`", f.name));
                }
            }
            if let Transfer::Switch { arms, .. } = t {
                let mut seen = HashSet::new();
                for (lit, _) in arms {
                    if !seen.insert(lit) {
                        sink.push("E604", s.sid.as_str(), format!("switch arm `{lit}` appears more than once"));
                    }
                }
            }
        }
    }

    let reach = reachable_from(f, 0);
    for (i, s) in f.body.iter().enumerate() {
        if !reach[i] {
            sink.push("E601", s.sid.as_str(), format!("statement `{}` is unreachable from the start of `{}`", s.sid, f.name));
        }
    }
    let returns: Vec<usize> = (0..f.body.len())
        .filter(|&i| f.effective_transfer(i) == Transfer::Return)
        .collect();
    if let Some(stuck) = (0..f.body.len())
        .find(|&i| reach[i] && !returns.iter().any(|&r| reachable_from(f, i)[r]))
    {
        let sid = &f.body[stuck].sid;
        sink.push("E602", sid.as_str(), format!("no path from `{sid}` reaches a return in `{}`", f.name));
    }

    let sets = lock_sets(f);
    let modes = drop_modes(f);
    for (i, s) in f.body.iter().enumerate() {
        if !reach[i] {
            continue;
        }
        let anchor = s.sid.as_str();
        let must_in = sets.must[i].clone().unwrap_or_default();
        match &s.op {
            Op::Lock { target } | Op::ReadLock { target } | Op::WriteLock { target } if sets.may[i].contains(target) => {
                sink.push("E502", anchor, format!("`{}` may run while `{target}` is already held", s.op));
            }
            Op::Drop { target } if !must_in.contains(target) => {
                sink.push("E503", anchor, format!("`{}` may run while `{target}` is not held", s.op));
            }
            Op::Drop { target } if art.resource_kind(target) == Some(ResourceKind::RwLock) && modes[i].is_none() => {
                sink.push("E504", anchor, format!("`{}` may release `{target}` in either read or write mode", s.op));
            }
            Op::Wait { mutex, .. } if !must_in.contains(mutex) => {
                sink.push("E505", anchor, format!("`{}` may run without holding `{mutex}`", s.op));
            }
            _ => {}
        }
        let must_out = apply(&s.op, &must_in);
        let mut reported = HashSet::new();
        for v in accessed_vars(f, i) {
            let Some(locks) = art.protection.get(v) else { continue };
            if art.resource_kind(v) != Some(ResourceKind::Var) || locks.is_empty() || !reported.insert(v) {
                continue;
            }
            let held = |set: &Held| locks.iter().any(|l| set.contains(l));
            let guarded = match &s.op {
                Op::Read { var } | Op::Write { var, .. } if var == v => held(&must_in),
                _ => held(&must_out),
            };
            if !guarded {
                sink.push("E309", anchor, format!("`{v}` is accessed without holding one of [{}]", locks.join(", ")));
            }
        }
        if f.effective_transfer(i) == Transfer::Return {
            let may_out = apply(&s.op, &sets.may[i]);
            for l in &may_out {
                sink.push("E501", anchor, format!("`{l}` may still be held when `{}` returns", f.name));
                sink.suggest(format!("drop({l})"));
            }
        }
    }
}
