//! A direct interpreter over CIR statements, written against the statement
//! semantics rather than the net, used as a reference for the analyzer.

use std::collections::{BTreeMap, HashSet, VecDeque};

use cvn_core::cir::{CirArtifact, Op, ResourceKind, Transfer};
use cvn_core::expr::{eval_expr, eval_guard, Literal, Truth3, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pc {
    At(usize),
    /// Operation done, transfer pending.
    Post(usize),
    Waiting(usize),
    Woken(usize),
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Config {
    pub threads: BTreeMap<String, Pc>,
    pub counts: BTreeMap<String, i64>,
    pub vars: BTreeMap<String, Value>,
}

pub struct Interp<'a> {
    pub art: &'a CirArtifact,
}

impl<'a> Interp<'a> {
    pub fn initial(&self) -> Config {
        let mut counts = BTreeMap::new();
        let mut vars = BTreeMap::new();
        for (name, r) in &self.art.resources {
            match r.kind {
                ResourceKind::Mutex => {
                    counts.insert(name.clone(), 1);
                }
                ResourceKind::Semaphore => {
                    counts.insert(name.clone(), r.count.expect("semaphore count"));
                }
                ResourceKind::Channel => {
                    counts.insert(name.clone(), 0);
                }
                ResourceKind::Var | ResourceKind::Atomic => {
                    vars.insert(name.clone(), Value::Concrete(r.init.clone().expect("initial value")));
                }
                ResourceKind::Condvar => {}
                other => panic!("oracle does not model {other:?}"),
            }
        }
        let entry = self.art.entry.clone().expect("entry");
        Config {
            threads: BTreeMap::from([(entry, Pc::At(0))]),
            counts,
            vars,
        }
    }

    fn eval(&self, c: &Config, e: &cvn_core::expr::Expr) -> Value {
        let v = eval_expr(e, &c.vars).expect("bound variable");
        assert!(!v.is_top(), "oracle needs concrete values");
        v
    }

    fn start(&self, f: &str) -> Pc {
        if self.art.functions[f].body.is_empty() {
            Pc::Done
        } else {
            Pc::At(0)
        }
    }

    pub fn successors(&self, c: &Config) -> Vec<Config> {
        let mut out = Vec::new();
        for (t, pc) in &c.threads {
            let body = &self.art.functions[t].body;
            let with = |pc: Pc| {
                let mut n = c.clone();
                n.threads.insert(t.clone(), pc);
                n
            };
            match pc {
                Pc::Done | Pc::Waiting(_) => {}
                Pc::Woken(i) => {
                    let Op::Wait { mutex, .. } = &body[*i].op else { unreachable!() };
                    if c.counts[mutex] == 1 {
                        let mut n = with(Pc::Post(*i));
                        n.counts.insert(mutex.clone(), 0);
                        out.push(n);
                    }
                }
                Pc::Post(i) => {
                    let f = &self.art.functions[t];
                    let goto = |sid| Pc::At(f.index_of(sid).expect("resolved target"));
                    let next = match f.effective_transfer(*i) {
                        Transfer::Next { target } => goto(&target),
                        Transfer::Return => Pc::Done,
                        Transfer::Branch { cond, then, otherwise } => match eval_guard(&cond, &c.vars).unwrap() {
                            Truth3::True => goto(&then),
                            Truth3::False => goto(&otherwise),
                            Truth3::Unknown => panic!("non-concrete branch"),
                        },
                        Transfer::Switch { var, arms, default } => {
                            let v = &c.vars[&var];
                            let hit = arms.iter().find(|(l, _)| v == &Value::Concrete(l.clone()));
                            goto(hit.map(|(_, s)| s).unwrap_or(&default))
                        }
                    };
                    out.push(with(next));
                }
                Pc::At(i) => {
                    let post = Pc::Post(*i);
                    match &body[*i].op {
                        Op::Nop | Op::Read { .. } | Op::Load { .. } | Op::SpawnAsync { .. } | Op::Await { .. } => {
                            out.push(with(post))
                        }
                        Op::Call { function } => {
                            assert!(self.art.functions.contains_key(function), "summarised call");
                            out.push(with(post));
                        }
                        Op::Lock { target } | Op::Acquire { target } | Op::Recv { channel: target } => {
                            if c.counts[target] > 0 {
                                let mut n = with(post);
                                *n.counts.get_mut(target).unwrap() -= 1;
                                out.push(n);
                            }
                        }
                        Op::Drop { target } | Op::Release { target } | Op::Send { channel: target } => {
                            let mut n = with(post);
                            *n.counts.get_mut(target).unwrap() += 1;
                            out.push(n);
                        }
                        Op::Write { var, value } | Op::Store { var, value } => {
                            let mut n = with(post);
                            n.vars.insert(var.clone(), self.eval(c, value));
                            out.push(n);
                        }
                        Op::Cas { var, expected, new } => {
                            let mut n = with(post);
                            if c.vars[var] == self.eval(c, expected) {
                                n.vars.insert(var.clone(), self.eval(c, new));
                            }
                            out.push(n);
                        }
                        Op::Spawn { function } => {
                            let mut n = with(post);
                            n.threads.insert(function.clone(), self.start(function));
                            out.push(n);
                        }
                        Op::Join { function } => {
                            if c.threads.get(function) == Some(&Pc::Done) {
                                out.push(with(post));
                            }
                        }
                        Op::Wait { mutex, .. } => {
                            let mut n = with(Pc::Waiting(*i));
                            *n.counts.get_mut(mutex).unwrap() += 1;
                            out.push(n);
                        }
                        Op::NotifyOne { condvar } => {
                            let waiters = self.waiters(c, condvar);
                            if waiters.is_empty() {
                                out.push(with(post));
                            }
                            for (w, site) in waiters {
                                let mut n = with(post);
                                n.threads.insert(w, Pc::Woken(site));
                                out.push(n);
                            }
                        }
                        Op::NotifyAll { condvar } => {
                            let mut n = with(post);
                            for (w, site) in self.waiters(c, condvar) {
                                n.threads.insert(w, Pc::Woken(site));
                            }
                            out.push(n);
                        }
                        Op::ReadLock { .. } | Op::WriteLock { .. } => panic!("oracle does not model RwLock"),
                    }
                }
            }
        }
        out
    }

    fn waiters(&self, c: &Config, cv: &str) -> Vec<(String, usize)> {
        c.threads
            .iter()
            .filter_map(|(t, pc)| match pc {
                Pc::Waiting(i) => match &self.art.functions[t].body[*i].op {
                    Op::Wait { condvar, .. } if condvar == cv => Some((t.clone(), *i)),
                    _ => None,
                },
                _ => None,
            })
            .collect()
    }

    pub fn explore(&self) -> Vec<(Config, bool)> {
        let init = self.initial();
        let mut seen = HashSet::from([init.clone()]);
        let mut queue = VecDeque::from([init]);
        let mut out = Vec::new();
        while let Some(c) = queue.pop_front() {
            let succ = self.successors(&c);
            let stuck = succ.is_empty() && c.threads.values().any(|pc| *pc != Pc::Done);
            for n in succ {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
            out.push((c, stuck));
        }
        out
    }

    pub fn goal_holds(&self, c: &Config, goal: usize) -> bool {
        let g = &self.art.goals[goal];
        let init = self.initial();
        g.completion.iter().all(|f| c.threads.get(f) == Some(&Pc::Done))
            && g.availability.iter().all(|r| c.counts.get(r).copied().unwrap_or(0) >= init.counts.get(r).copied().unwrap_or(0))
            && g.variables.iter().all(|(x, l): (&String, &Literal)| c.vars[x] == Value::Concrete(l.clone()))
    }
}


/// Whether some configuration is stuck with an unfinished thread, and which
/// goals hold in some reachable configuration.
pub fn verdicts(art: &CirArtifact) -> (bool, Vec<bool>) {
    let oracle = Interp { art };
    let configs = oracle.explore();
    let stuck = configs.iter().any(|(_, s)| *s);
    let goals = (0..art.goals.len())
        .map(|g| configs.iter().any(|(c, _)| oracle.goal_holds(c, g)))
        .collect();
    (stuck, goals)
}
