use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use super::flow::{apply, lock_sets};
use super::CheckError;
use crate::cir::{CirArtifact, Op, Sid, Statement, Transfer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AppliedFix {
    pub code: &'static str,
    pub anchor: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("fixes {first} and {second} both rewrite statement `{sid}`")]
pub struct FixConflict {
    pub sid: String,
    pub first: &'static str,
    pub second: &'static str,
}

/// Sid for an inserted statement: the anchor's trailing number is bumped and
/// `_fix<k>` appended, e.g. `w2` becomes `w3_fix0`.
fn fresh_sid(anchor: &str, taken: &mut HashSet<String>) -> String {
    let digits = anchor.len() - anchor.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let base = match anchor[anchor.len() - digits..].parse::<u64>() {
        Ok(n) if digits > 0 => format!("{}{}", &anchor[..anchor.len() - digits], n + 1),
        _ => anchor.to_string(),
    };
    let mut k = 0;
    loop {
        let candidate = format!("{base}_fix{k}");
        if taken.insert(candidate.clone()) {
            return candidate;
        }
        k += 1;
    }
}

/// Applies the Tier-1 rewrites for the autofixable errors in `errors`; all
/// other errors are left alone. The result should be checked again.
pub fn autofix(art: &CirArtifact, errors: &[CheckError]) -> Result<(CirArtifact, Vec<AppliedFix>), FixConflict> {
    let wanted = |code: &str| -> HashSet<&str> {
        errors.iter().filter(|e| e.code == code).map(|e| e.anchor.as_str()).collect()
    };
    let (dups, omitted, held) = (wanted("E102"), wanted("E003"), wanted("E501"));
    let mut out = art.clone();
    let mut applied = Vec::new();
    let mut touched: HashMap<(String, usize), &'static str> = HashMap::new();
    let mut touch = |f: &str, i: usize, sid: &Sid, code: &'static str| match touched.insert((f.to_string(), i), code) {
        Some(first) => Err(FixConflict {
            sid: sid.to_string(),
            first,
            second: code,
        }),
        None => Ok(()),
    };
    let mut taken: HashSet<String> = art
        .functions
        .values()
        .flat_map(|f| f.body.iter().map(|s| s.sid.0.clone()))
        .collect();

    if !dups.is_empty() {
        let mut count: HashMap<String, usize> = HashMap::new();
        for f in out.functions.values_mut() {
            let mut renames: Vec<(usize, Sid)> = Vec::new();
            for (i, s) in f.body.iter().enumerate() {
                let seen = count.entry(s.sid.0.clone()).or_default();
                *seen += 1;
                if *seen > 1 && dups.contains(s.sid.as_str()) {
                    let mut k = *seen - 1;
                    let new = loop {
                        let candidate = format!("{}__{k}", s.sid);
                        if taken.insert(candidate.clone()) {
                            break candidate;
                        }
                        k += 1;
                    };
                    renames.push((i, Sid(new)));
                }
            }
            if renames.is_empty() {
                continue;
            }
            let resolve = |from: usize, target: &Sid| -> Option<usize> {
                let hits: Vec<usize> = (0..f.body.len()).filter(|&j| &f.body[j].sid == target).collect();
                hits.iter().copied().find(|&j| j > from).or(hits.first().copied())
            };
            let mut repoint: Vec<(usize, usize, usize)> = Vec::new();
            for (i, s) in f.body.iter().enumerate() {
                if let Some(t) = &s.transfer {
                    for (k, target) in t.targets().into_iter().enumerate() {
                        if let Some(j) = resolve(i, target) {
                            repoint.push((i, k, j));
                        }
                    }
                }
            }
            for (i, new) in &renames {
                touch(&f.name, *i, &f.body[*i].sid, "E102")?;
                applied.push(AppliedFix {
                    code: "E102",
                    anchor: f.body[*i].sid.0.clone(),
                    description: format!("renamed duplicate `{}` to `{new}`", f.body[*i].sid),
                });
            }
            for (i, new) in renames {
                f.body[i].sid = new;
            }
            for (i, k, j) in repoint {
                let sid = f.body[j].sid.clone();
                if let Some(t) = f.body[i].transfer.as_mut() {
                    *t.targets_mut()[k] = sid;
                }
            }
        }
    }

    for f in out.functions.values_mut() {
        let last = f.body.len().saturating_sub(1);
        for i in 0..last {
            let s = &f.body[i];
            if s.transfer.is_none() && omitted.contains(s.sid.as_str()) {
                touch(&f.name, i, &s.sid, "E003")?;
                let next = f.body[i + 1].sid.clone();
                applied.push(AppliedFix {
                    code: "E003",
                    anchor: s.sid.0.clone(),
                    description: format!("set transfer of `{}` to next: {next}", s.sid),
                });
                f.body[i].transfer = Some(Transfer::Next { target: next });
            }
        }
    }

    if !held.is_empty() {
        for f in out.functions.values_mut() {
            if f.body.is_empty() {
                continue;
            }
            let sets = lock_sets(f);
            let mut inserts: Vec<(usize, Vec<String>)> = Vec::new();
            for i in 0..f.body.len() {
                let s = &f.body[i];
                if f.effective_transfer(i) != Transfer::Return || !held.contains(s.sid.as_str()) {
                    continue;
                }
                let locks: Vec<String> = apply(&s.op, &sets.may[i]).into_iter().collect();
                if !locks.is_empty() {
                    touch(&f.name, i, &s.sid, "E501")?;
                    inserts.push((i, locks));
                }
            }
            for (i, locks) in inserts.into_iter().rev() {
                let anchor = f.body[i].sid.clone();
                let mut chain: Vec<Statement> = Vec::new();
                for l in locks {
                    let sid = fresh_sid(anchor.as_str(), &mut taken);
                    applied.push(AppliedFix {
                        code: "E501",
                        anchor: anchor.0.clone(),
                        description: format!("inserted `{sid}: drop({l})` before `{}` returns", f.name),
                    });
                    chain.push(Statement::new(sid, Op::Drop { target: l }, Some(Transfer::Return)));
                }
                for k in 0..chain.len() - 1 {
                    chain[k].transfer = Some(Transfer::Next {
                        target: chain[k + 1].sid.clone(),
                    });
                }
                f.body[i].transfer = Some(Transfer::Next {
                    target: chain[0].sid.clone(),
                });
                f.body.splice(i + 1..i + 1, chain);
            }
        }
    }
    Ok((out, applied))
}
