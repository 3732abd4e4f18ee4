//! The nine structural checks on a translated artifact. Place and variable
//! names are rebuilt here from their textual conventions rather than taken
//! from the translator's helpers.

use std::collections::BTreeSet;

use cvn_core::cir::{CirArtifact, Op, ResourceKind, SID_BOTTOM};
use cvn_core::cvn::{Assign, Cvn, Tag, Transition};
use cvn_core::expr::{Literal, Value};

pub const NAMES: [&str; 9] = [
    "statement coverage",
    "anchor totality",
    "initial marking",
    "resource place count",
    "variable store",
    "non-empty presets",
    "spawn arcs",
    "join arcs",
    "condvar rules",
];

fn places(net: &Cvn, arcs: &[(usize, u32)]) -> BTreeSet<(String, u32)> {
    arcs.iter().map(|(p, w)| (net.places[*p].name.clone(), *w)).collect()
}

fn set(items: &[(&str, u32)]) -> BTreeSet<(String, u32)> {
    items.iter().map(|(n, w)| (n.to_string(), *w)).collect()
}

fn updates(net: &Cvn, t: &Transition) -> BTreeSet<String> {
    t.updates
        .iter()
        .map(|(v, a)| {
            let rhs = match a {
                Assign::Expr(e) => e.to_string(),
                Assign::Top => "⊤".into(),
            };
            format!("{} := {rhs}", net.vars[*v].name)
        })
        .collect()
}

fn strs(items: &[String]) -> BTreeSet<String> {
    items.iter().cloned().collect()
}

/// Returns one verdict per check, with the first violation as the message.
pub fn check_all(art: &CirArtifact, net: &Cvn) -> Vec<Result<(), String>> {
    vec![
        coverage(art, net),
        anchors(art, net),
        initial_marking(art, net),
        resource_count(art, net),
        store(art, net),
        presets(net),
        spawn_arcs(net),
        join_arcs(net),
        condvar_rules(art, net),
    ]
}

fn coverage(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    for f in art.functions.values() {
        for s in &f.body {
            if !net.transitions.iter().any(|t| t.origin == s.sid) {
                return Err(format!("{} has no transition", s.sid));
            }
        }
    }
    Ok(())
}

fn anchors(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    let sids: BTreeSet<&str> = art.functions.values().flat_map(|f| &f.body).map(|s| s.sid.as_str()).collect();
    for t in &net.transitions {
        let ok = if t.anchor.as_str() == SID_BOTTOM {
            t.tag == Tag::Summary
        } else {
            sids.contains(t.anchor.as_str())
        };
        if !ok {
            return Err(format!("{} anchored at {}", t.name, t.anchor));
        }
    }
    Ok(())
}

fn expected_tokens(art: &CirArtifact, kind: ResourceKind, count: Option<i64>) -> u32 {
    let spawns = art
        .functions
        .values()
        .flat_map(|f| &f.body)
        .filter(|s| matches!(s.op, Op::Spawn { .. } | Op::SpawnAsync { .. }))
        .count() as u32;
    match kind {
        ResourceKind::Mutex => 1,
        ResourceKind::RwLock => 1 + spawns,
        ResourceKind::Semaphore => count.unwrap() as u32,
        _ => 0,
    }
}

fn initial_marking(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    let entry = art.entry.as_deref().unwrap();
    let entry_place = format!("cp({entry},{})", art.functions[entry].body[0].sid);
    for (i, p) in net.places.iter().enumerate() {
        let want = if p.name == entry_place {
            1
        } else if let Some(r) = p.name.strip_prefix("rp(").and_then(|n| n.strip_suffix(')')) {
            let d = &art.resources[r];
            expected_tokens(art, d.kind, d.count)
        } else {
            0
        };
        if net.initial.marking[i] != want {
            return Err(format!("{} holds {} tokens, expected {want}", p.name, net.initial.marking[i]));
        }
    }
    Ok(())
}

fn resource_count(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    let sync = art
        .resources
        .values()
        .filter(|r| !matches!(r.kind, ResourceKind::Var | ResourceKind::Atomic))
        .count();
    let rp = net.places.iter().filter(|p| p.name.starts_with("rp(")).count();
    if sync == rp {
        Ok(())
    } else {
        Err(format!("{rp} resource places for {sync} primitives"))
    }
}

fn store(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    let mut want: Vec<(String, Value)> = Vec::new();
    for (name, r) in &art.resources {
        match r.kind {
            ResourceKind::Var | ResourceKind::Atomic => want.push((name.clone(), Value::Concrete(r.init.clone().unwrap()))),
            ResourceKind::Condvar => want.push((format!("nw[{name}]"), Value::Concrete(Literal::Int(0)))),
            _ => {}
        }
    }
    for (_, site) in art.wait_sites() {
        want.push((format!("na[{site}]"), Value::Concrete(Literal::Bool(false))));
    }
    if net.vars.len() != want.len() {
        return Err(format!("{} variables, expected {}", net.vars.len(), want.len()));
    }
    for (name, init) in want {
        let Some(id) = net.var(&name) else { return Err(format!("missing {name}")) };
        if net.initial.valuation[id] != init {
            return Err(format!("{name} starts at {:?}", net.initial.valuation[id]));
        }
    }
    Ok(())
}

fn presets(net: &Cvn) -> Result<(), String> {
    match net.transitions.iter().find(|t| t.inputs.is_empty()) {
        Some(t) => Err(format!("{} has no inputs", t.name)),
        None => Ok(()),
    }
}

fn spawn_arcs(net: &Cvn) -> Result<(), String> {
    for t in net.transitions.iter().filter(|t| t.tag == Tag::Spawn) {
        let owners: BTreeSet<&str> = t.outputs.iter().filter_map(|(p, _)| net.places[*p].class.owner()).collect();
        if owners.len() != 2 || !owners.contains(t.function.as_str()) {
            return Err(format!("{} outputs to {owners:?}", t.name));
        }
    }
    Ok(())
}

fn join_arcs(net: &Cvn) -> Result<(), String> {
    for t in net.transitions.iter().filter(|t| t.tag == Tag::Join) {
        let consumes_ret = t.inputs.iter().any(|(p, _)| {
            let n = &net.places[*p].name;
            n.ends_with(",ret)") && !n.starts_with(&format!("cp({},", t.function))
        });
        if !consumes_ret {
            return Err(format!("{} does not consume a child return place", t.name));
        }
    }
    Ok(())
}

fn condvar_rules(art: &CirArtifact, net: &Cvn) -> Result<(), String> {
    for f in art.functions.values() {
        for s in &f.body {
            let sid = s.sid.as_str();
            let at = format!("cp({},{sid})", f.name);
            let ts: Vec<&Transition> = net.transitions.iter().filter(|t| t.origin == s.sid).collect();
            let by = |tag: Tag| ts.iter().copied().find(|t| t.tag == tag);
            let expect = |tag: Tag, guard: &str, ups: &[String], ins: BTreeSet<(String, u32)>, extra_out: Option<&str>| {
                let Some(t) = by(tag) else { return Err(format!("{sid}: no {tag}")) };
                if t.anchor != s.sid {
                    return Err(format!("{sid}: {tag} anchored at {}", t.anchor));
                }
                if t.guard.to_string() != guard {
                    return Err(format!("{sid}: {tag} guard `{}`, expected `{guard}`", t.guard));
                }
                if updates(net, t) != strs(ups) {
                    return Err(format!("{sid}: {tag} updates {:?}", updates(net, t)));
                }
                if places(net, &t.inputs) != ins {
                    return Err(format!("{sid}: {tag} inputs {:?}", places(net, &t.inputs)));
                }
                if let Some(p) = extra_out {
                    if !places(net, &t.outputs).iter().any(|(n, _)| n == p) {
                        return Err(format!("{sid}: {tag} does not output to {p}"));
                    }
                }
                Ok(())
            };
            match &s.op {
                Op::Wait { condvar, mutex } => {
                    if ts.len() != 4 {
                        return Err(format!("{sid}: {} transitions", ts.len()));
                    }
                    let (nw, na) = (format!("nw[{condvar}]"), format!("na[{sid}]"));
                    let (wp, ra) = (format!("wp({sid})"), format!("ra({sid})"));
                    let (rm, rcv) = (format!("rp({mutex})"), format!("rp({condvar})"));
                    expect(Tag::WaitEnter, "true", &[format!("{nw} := {nw} + 1"), format!("{na} := false")], set(&[(&at, 1)]), Some(&wp))?;
                    let Some(enter) = by(Tag::WaitEnter) else { unreachable!() };
                    if !places(net, &enter.outputs).contains(&(rm.clone(), 1)) {
                        return Err(format!("{sid}: WaitEnter does not release {mutex}"));
                    }
                    expect(Tag::Wake1, "true", &[format!("{nw} := {nw} - 1")], set(&[(&wp, 1), (&rcv, 1)]), Some(&ra))?;
                    expect(Tag::WakeA, &format!("{na} == true"), &[format!("{nw} := {nw} - 1"), format!("{na} := false")], set(&[(&wp, 1)]), Some(&ra))?;
                    expect(Tag::Reacquire, "true", &[], set(&[(&ra, 1), (&rm, 1)]), None)?;
                }
                Op::NotifyOne { condvar } => {
                    let nw = format!("nw[{condvar}]");
                    expect(Tag::NotifySuccess, &format!("{nw} > 0"), &[], set(&[(&at, 1)]), Some(&format!("rp({condvar})")))?;
                    expect(Tag::NotifyLost, &format!("{nw} == 0"), &[], set(&[(&at, 1)]), None)?;
                    if ts.len() != 2 {
                        return Err(format!("{sid}: {} transitions", ts.len()));
                    }
                }
                Op::NotifyAll { condvar } => {
                    let nw = format!("nw[{condvar}]");
                    let ups: Vec<String> = art
                        .wait_sites()
                        .into_iter()
                        .filter(|(cv, _)| cv == condvar)
                        .map(|(_, w)| format!("na[{w}] := true"))
                        .collect();
                    expect(Tag::NotifyAllSuccess, &format!("{nw} > 0"), &ups, set(&[(&at, 1)]), None)?;
                    expect(Tag::NotifyAllLost, &format!("{nw} == 0"), &[], set(&[(&at, 1)]), None)?;
                }
                _ => {}
            }
        }
    }
    Ok(())
}
