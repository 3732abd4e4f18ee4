use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use super::block::{self, split_top, Node, NodeKind, Pos};
use super::{
    implicit_entry, BusinessGoal, CirArtifact, FunctionDef, FunctionKind, FunctionSummary, Op,
    ResourceDecl, ResourceKind, Sid, Statement, Transfer,
};
use crate::expr::{parse_bool_expr, parse_expr, parse_literal, BaseType, Literal};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub code: &'static str,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {} {}", self.line, self.column, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(transparent)]
pub struct ParseErrorList(pub Vec<ParseError>);

impl fmt::Display for ParseErrorList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub artifact: CirArtifact,
    pub warnings: Vec<ParseWarning>,
}

const LAYOUT: &str = "E090";
const SHAPE: &str = "E091";
const BAD_OP: &str = "E092";
const BAD_EXPR: &str = "E093";
const DUP_KEY: &str = "E094";
const BAD_LITERAL: &str = "E095";
const MISSING: &str = "E096";

pub fn parse_cir(text: &str) -> Result<CirArtifact, ParseErrorList> {
    parse_cir_with_warnings(text).map(|p| p.artifact)
}

pub fn parse_cir_with_warnings(text: &str) -> Result<Parsed, ParseErrorList> {
    let doc = block::parse_document(text).map_err(|e| {
        ParseErrorList(vec![ParseError {
            code: LAYOUT,
            line: e.pos.line,
            column: e.pos.col,
            message: e.message,
        }])
    })?;
    let mut cx = Cx::default();
    let artifact = cx.document(&doc);
    if cx.errors.is_empty() {
        Ok(Parsed {
            artifact,
            warnings: cx.warnings,
        })
    } else {
        Err(ParseErrorList(cx.errors))
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Default)]
struct Cx {
    errors: Vec<ParseError>,
    warnings: Vec<ParseWarning>,
    enums: Rc<HashSet<String>>,
}

impl Cx {
    fn error(&mut self, code: &'static str, pos: Pos, message: impl Into<String>) {
        self.errors.push(ParseError {
            code,
            line: pos.line,
            column: pos.col,
            message: message.into(),
        });
    }

    fn entries<'n>(&mut self, node: &'n Node, what: &str) -> Vec<(&'n str, Pos, &'n Node)> {
        match &node.kind {
            NodeKind::Map(entries) => {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for (k, pos, v) in entries {
                    if !seen.insert(k.as_str()) {
                        self.error(DUP_KEY, *pos, format!("duplicate key `{k}` in {what}"));
                        continue;
                    }
                    out.push((k.as_str(), *pos, v));
                }
                out
            }
            NodeKind::Empty => Vec::new(),
            _ => {
                self.error(SHAPE, node.pos, format!("{what} must be a map"));
                Vec::new()
            }
        }
    }

    fn items<'n>(&mut self, node: &'n Node, what: &str) -> Vec<&'n Node> {
        match &node.kind {
            NodeKind::List(items) => items.iter().collect(),
            NodeKind::Empty => Vec::new(),
            _ => {
                self.error(SHAPE, node.pos, format!("{what} must be a list"));
                Vec::new()
            }
        }
    }

    fn scalar<'n>(&mut self, node: &'n Node, what: &str) -> Option<&'n str> {
        match &node.kind {
            NodeKind::Scalar(s) => Some(s.as_str()),
            _ => {
                self.error(SHAPE, node.pos, format!("{what} must be a single value"));
                None
            }
        }
    }

    fn ident(&mut self, node: &Node, what: &str) -> Option<String> {
        let s = self.scalar(node, what)?;
        if is_ident(s) {
            Some(s.to_string())
        } else {
            self.error(SHAPE, node.pos, format!("{what} `{s}` is not an identifier"));
            None
        }
    }

    fn name_list(&mut self, node: &Node, what: &str) -> Vec<String> {
        self.items(node, what)
            .into_iter()
            .filter_map(|n| self.ident(n, what))
            .collect()
    }

    fn literal(&mut self, text: &str, pos: Pos) -> Option<Literal> {
        match parse_literal(text) {
            Ok(l) => Some(l),
            Err(e) => {
                self.error(BAD_LITERAL, pos, format!("invalid literal `{text}`: {}", e.message));
                None
            }
        }
    }

    fn string(&mut self, node: &Node, what: &str) -> Option<String> {
        let s = self.scalar(node, what)?;
        if s.starts_with('"') {
            match self.literal(s, node.pos)? {
                Literal::Str(s) => Some(s),
                _ => None,
            }
        } else {
            Some(s.to_string())
        }
    }

    fn is_enum(&self) -> impl Fn(&str) -> bool {
        let enums = Rc::clone(&self.enums);
        move |s: &str| enums.contains(s)
    }

    fn document(&mut self, doc: &Node) -> CirArtifact {
        let mut art = CirArtifact::default();
        let top = self.entries(doc, "document");
        if let Some((_, _, res)) = top.iter().find(|(k, _, _)| *k == "resources") {
            art.resources = self.resources(res);
        }
        let enums = art
            .enum_variants()
            .into_iter()
            .filter(|v| !art.resources.contains_key(*v))
            .map(str::to_string)
            .collect();
        self.enums = Rc::new(enums);
        let mut threads: Vec<String> = Vec::new();
        let mut explicit_entry = false;
        for (key, pos, node) in &top {
            match *key {
                "resources" => {}
                "protection" => {
                    for (var, vpos, locks) in self.entries(node, "protection") {
                        if !is_ident(var) {
                            self.error(SHAPE, vpos, format!("protected name `{var}` is not an identifier"));
                            continue;
                        }
                        let locks = self.name_list(locks, "protection lock list");
                        art.protection.insert(var.to_string(), locks);
                    }
                }
                "threads" => {
                    for (name, fpos, fnode) in self.entries(node, "threads") {
                        if let Some(f) = self.function(name, fpos, fnode, false) {
                            threads.push(f.name.clone());
                            self.insert_function(&mut art, f, fpos);
                        }
                    }
                }
                "functions" => {
                    for (name, fpos, fnode) in self.entries(node, "functions") {
                        if let Some(f) = self.function(name, fpos, fnode, true) {
                            self.insert_function(&mut art, f, fpos);
                        }
                    }
                }
                "summaries" => {
                    for (name, spos, snode) in self.entries(node, "summaries") {
                        if !is_ident(name) {
                            self.error(SHAPE, spos, format!("summary name `{name}` is not an identifier"));
                            continue;
                        }
                        let s = self.summary(snode);
                        art.summaries.insert(name.to_string(), s);
                    }
                }
                "entry" => {
                    explicit_entry = true;
                    art.entry = self.ident(node, "entry");
                }
                "goals" => {
                    let items = self.items(node, "goals");
                    art.goals = items.into_iter().filter_map(|g| self.goal(g)).collect();
                }
                other => self.warnings.push(ParseWarning {
                    line: pos.line,
                    column: pos.col,
                    message: format!("unknown top-level key `{other}` ignored"),
                }),
            }
        }
        if !explicit_entry && !threads.is_empty() {
            let entry = implicit_entry(&threads);
            art.entry = Some(entry.name.clone());
            let mut functions = IndexMap::new();
            functions.insert(entry.name.clone(), entry);
            functions.extend(std::mem::take(&mut art.functions));
            art.functions = functions;
        }
        art
    }

    fn insert_function(&mut self, art: &mut CirArtifact, f: FunctionDef, pos: Pos) {
        if art.functions.contains_key(&f.name) {
            self.error(DUP_KEY, pos, format!("function `{}` defined twice", f.name));
        } else {
            art.functions.insert(f.name.clone(), f);
        }
    }

    fn resources(&mut self, node: &Node) -> IndexMap<String, ResourceDecl> {
        let mut out = IndexMap::new();
        for (name, pos, cfg) in self.entries(node, "resources") {
            if !is_ident(name) {
                self.error(SHAPE, pos, format!("resource name `{name}` is not an identifier"));
                continue;
            }
            let fields = self.entries(cfg, "resource configuration");
            let mut kind = None;
            let mut decl = ResourceDecl::new(name, ResourceKind::Var);
            for (key, kpos, value) in fields {
                match key {
                    "kind" => {
                        if let Some(s) = self.scalar(value, "kind") {
                            kind = ResourceKind::from_name(s);
                            if kind.is_none() {
                                self.error(BAD_LITERAL, value.pos, format!("unknown resource kind `{s}`"));
                            }
                        }
                    }
                    "paired_with" => decl.paired_with = self.ident(value, "paired_with"),
                    "count" => {
                        if let Some(s) = self.scalar(value, "count") {
                            match s.parse::<i64>() {
                                Ok(n) => decl.count = Some(n),
                                Err(_) => self.error(BAD_LITERAL, value.pos, format!("count `{s}` is not an integer")),
                            }
                        }
                    }
                    "type" => {
                        if let Some(s) = self.scalar(value, "type") {
                            decl.ty = BaseType::from_name(s);
                            if decl.ty.is_none() {
                                self.error(BAD_LITERAL, value.pos, format!("unknown base type `{s}`"));
                            }
                        }
                    }
                    "variants" => decl.variants = self.name_list(value, "variants"),
                    "init" => {
                        if let Some(s) = self.scalar(value, "init") {
                            decl.init = self.literal(s, value.pos);
                        }
                    }
                    other => self.error(SHAPE, kpos, format!("unknown resource field `{other}`")),
                }
            }
            match kind {
                Some(k) => {
                    decl.kind = k;
                    out.insert(name.to_string(), decl);
                }
                None if self.errors.iter().any(|e| e.line == cfg.pos.line) => {}
                None => self.error(MISSING, pos, format!("resource `{name}` has no `kind`")),
            }
        }
        out
    }

    fn function(&mut self, name: &str, pos: Pos, node: &Node, allow_kind: bool) -> Option<FunctionDef> {
        if !is_ident(name) {
            self.error(SHAPE, pos, format!("function name `{name}` is not an identifier"));
            return None;
        }
        let mut f = FunctionDef::new(name, Vec::new());
        let mut has_body = false;
        for (key, kpos, value) in self.entries(node, "function") {
            match key {
                "kind" if allow_kind => {
                    if let Some(s) = self.scalar(value, "kind") {
                        match FunctionKind::from_name(s) {
                            Some(k) => f.kind = k,
                            None => self.error(BAD_LITERAL, value.pos, format!("unknown function kind `{s}`")),
                        }
                    }
                }
                "body" => {
                    has_body = true;
                    for item in self.items(value, "body") {
                        if let Some(s) = self.statement(item) {
                            f.body.push(s);
                        }
                    }
                }
                other => self.error(SHAPE, kpos, format!("unknown function field `{other}`")),
            }
        }
        if !has_body {
            self.error(MISSING, pos, format!("function `{name}` has no `body`"));
        }
        Some(f)
    }

    fn statement(&mut self, node: &Node) -> Option<Statement> {
        let fields = self.entries(node, "statement");
        let mut sid = None;
        let mut op = None;
        let mut transfer = None;
        let mut ok = true;
        for (key, kpos, value) in fields {
            match key {
                "sid" => sid = self.ident(value, "sid").map(Sid),
                "op" => {
                    if let Some(s) = self.scalar(value, "op") {
                        op = self.op(s, value.pos);
                        ok &= op.is_some();
                    }
                }
                "next" | "branch" | "switch" => {
                    if transfer.is_some() {
                        self.error(SHAPE, kpos, "statement has more than one transfer");
                        ok = false;
                        continue;
                    }
                    transfer = self.transfer(key, value);
                    ok &= transfer.is_some();
                }
                other => {
                    self.error(SHAPE, kpos, format!("unknown statement field `{other}`"));
                    ok = false;
                }
            }
        }
        let Some(sid) = sid else {
            self.error(MISSING, node.pos, "statement has no `sid`");
            return None;
        };
        let Some(op) = op else {
            if ok {
                self.error(MISSING, node.pos, format!("statement `{sid}` has no `op`"));
            }
            return None;
        };
        ok.then_some(Statement { sid, op, transfer })
    }

    fn transfer(&mut self, key: &str, node: &Node) -> Option<Transfer> {
        match key {
            "next" => {
                let s = self.scalar(node, "next")?;
                if s == "return" {
                    return Some(Transfer::Return);
                }
                self.ident(node, "next").map(|s| Transfer::Next { target: Sid(s) })
            }
            "branch" => {
                let mut cond = None;
                let mut then = None;
                let mut otherwise = None;
                for (k, kpos, v) in self.entries(node, "branch") {
                    match k {
                        "if" => {
                            let text = self.scalar(v, "branch condition")?;
                            match parse_bool_expr(text, &{ self.is_enum() }) {
                                Ok(c) => cond = Some(c),
                                Err(e) => {
                                    self.error(BAD_EXPR, v.pos, format!("invalid condition `{text}`: {e}"));
                                    return None;
                                }
                            }
                        }
                        "then" => then = self.ident(v, "then").map(Sid),
                        "else" => otherwise = self.ident(v, "else").map(Sid),
                        other => self.error(SHAPE, kpos, format!("unknown branch field `{other}`")),
                    }
                }
                match (cond, then, otherwise) {
                    (Some(cond), Some(then), Some(otherwise)) => Some(Transfer::Branch { cond, then, otherwise }),
                    _ => {
                        self.error(MISSING, node.pos, "branch needs `if`, `then` and `else`");
                        None
                    }
                }
            }
            "switch" => {
                let mut var = None;
                let mut arms = Vec::new();
                let mut default = None;
                for (k, kpos, v) in self.entries(node, "switch") {
                    match k {
                        "on" => var = self.ident(v, "switch variable"),
                        "cases" => {
                            for (lit, lpos, target) in self.entries(v, "switch cases") {
                                let l = self.literal(lit, lpos)?;
                                let t = self.ident(target, "case target")?;
                                arms.push((l, Sid(t)));
                            }
                        }
                        "default" => default = self.ident(v, "default").map(Sid),
                        other => self.error(SHAPE, kpos, format!("unknown switch field `{other}`")),
                    }
                }
                match (var, default) {
                    (Some(var), Some(default)) => Some(Transfer::Switch { var, arms, default }),
                    _ => {
                        self.error(MISSING, node.pos, "switch needs `on` and `default`");
                        None
                    }
                }
            }
            _ => unreachable!("caller matches transfer keys"),
        }
    }

    fn op(&mut self, text: &str, pos: Pos) -> Option<Op> {
        let text = text.trim();
        if text == "nop" {
            return Some(Op::Nop);
        }
        let (name, args) = match text.find('(') {
            Some(i) if text.ends_with(')') => (&text[..i], &text[i + 1..text.len() - 1]),
            _ => {
                self.error(BAD_OP, pos, format!("malformed operation `{text}`"));
                return None;
            }
        };
        let args: Vec<&str> = if args.trim().is_empty() {
            Vec::new()
        } else {
            split_top(args, ',').into_iter().map(|(_, a)| a.trim()).collect()
        };
        let arity = match name {
            "wait" | "write" | "store" => 2,
            "cas" => 3,
            "lock" | "drop" | "unlock" | "read_lock" | "write_lock" | "notify_one" | "notify_all"
            | "acquire" | "release" | "send" | "recv" | "read" | "load" | "spawn" | "join"
            | "spawn_async" | "await" | "call" => 1,
            _ => {
                self.error(BAD_OP, pos, format!("unknown operation `{name}`"));
                return None;
            }
        };
        if args.len() != arity {
            self.error(BAD_OP, pos, format!("`{name}` takes {arity} argument(s), found {}", args.len()));
            return None;
        }
        let name_arg = |cx: &mut Cx, i: usize| -> Option<String> {
            if is_ident(args[i]) {
                Some(args[i].to_string())
            } else {
                cx.error(BAD_OP, pos, format!("argument `{}` of `{name}` is not a name", args[i]));
                None
            }
        };
        let expr_arg = |cx: &mut Cx, i: usize| {
            match parse_expr(args[i], &{ cx.is_enum() }) {
                Ok(e) => Some(e),
                Err(e) => {
                    cx.error(BAD_EXPR, pos, format!("invalid expression `{}`: {e}", args[i]));
                    None
                }
            }
        };
        let a0 = name_arg(self, 0)?;
        Some(match name {
            "lock" => Op::Lock { target: a0 },
            "drop" | "unlock" => Op::Drop { target: a0 },
            "read_lock" => Op::ReadLock { target: a0 },
            "write_lock" => Op::WriteLock { target: a0 },
            "wait" => Op::Wait {
                condvar: a0,
                mutex: name_arg(self, 1)?,
            },
            "notify_one" => Op::NotifyOne { condvar: a0 },
            "notify_all" => Op::NotifyAll { condvar: a0 },
            "acquire" => Op::Acquire { target: a0 },
            "release" => Op::Release { target: a0 },
            "send" => Op::Send { channel: a0 },
            "recv" => Op::Recv { channel: a0 },
            "read" => Op::Read { var: a0 },
            "write" => Op::Write {
                var: a0,
                value: expr_arg(self, 1)?,
            },
            "load" => Op::Load { var: a0 },
            "store" => Op::Store {
                var: a0,
                value: expr_arg(self, 1)?,
            },
            "cas" => Op::Cas {
                var: a0,
                expected: expr_arg(self, 1)?,
                new: expr_arg(self, 2)?,
            },
            "spawn" => Op::Spawn { function: a0 },
            "join" => Op::Join { function: a0 },
            "spawn_async" => Op::SpawnAsync { function: a0 },
            "await" => Op::Await { function: a0 },
            "call" => Op::Call { function: a0 },
            _ => unreachable!("arity table covers every operation"),
        })
    }

    fn summary(&mut self, node: &Node) -> FunctionSummary {
        let mut s = FunctionSummary::default();
        for (key, kpos, value) in self.entries(node, "summary") {
            match key {
                "reads" => s.reads = self.name_list(value, "reads"),
                "writes" => s.writes = self.name_list(value, "writes"),
                "calls" => s.calls = self.name_list(value, "calls"),
                "has_concurrency" => match self.scalar(value, "has_concurrency") {
                    Some("true") => s.has_concurrency = true,
                    Some("false") => s.has_concurrency = false,
                    Some(other) => self.error(BAD_LITERAL, value.pos, format!("expected true/false, found `{other}`")),
                    None => {}
                },
                other => self.error(SHAPE, kpos, format!("unknown summary field `{other}`")),
            }
        }
        s
    }

    fn requirement_list(&mut self, node: &Node, marker: &str) -> Vec<String> {
        let mut out = Vec::new();
        for item in self.items(node, marker) {
            match &item.kind {
                NodeKind::List(pair) if pair.len() == 2 => {
                    let name = self.ident(&pair[0], "goal target");
                    let tag = self.scalar(&pair[1], "requirement");
                    match (name, tag) {
                        (Some(n), Some(t)) if t == marker => out.push(n),
                        (Some(_), Some(t)) => {
                            self.error(BAD_LITERAL, pair[1].pos, format!("expected `{marker}`, found `{t}`"))
                        }
                        _ => {}
                    }
                }
                NodeKind::Scalar(_) => {
                    if let Some(n) = self.ident(item, "goal target") {
                        out.push(n);
                    }
                }
                _ => self.error(SHAPE, item.pos, format!("expected `[name, {marker}]`")),
            }
        }
        out
    }

    fn goal(&mut self, node: &Node) -> Option<BusinessGoal> {
        let mut g = BusinessGoal::default();
        let mut has_id = false;
        for (key, kpos, value) in self.entries(node, "goal") {
            match key {
                "id" => {
                    if let Some(id) = self.string(value, "goal id") {
                        g.id = id;
                        has_id = true;
                    }
                }
                "desc" => g.description = self.string(value, "desc").unwrap_or_default(),
                "completion" => g.completion = self.requirement_list(value, "completed"),
                "availability" => g.availability = self.requirement_list(value, "available"),
                "variables" => {
                    for (var, vpos, lit) in self.entries(value, "goal variables") {
                        if let Some(text) = self.scalar(lit, "goal value") {
                            if let Some(l) = self.literal(text, lit.pos) {
                                g.variables.insert(var.to_string(), l);
                            }
                        } else {
                            let _ = vpos;
                        }
                    }
                }
                other => self.error(SHAPE, kpos, format!("unknown goal field `{other}`")),
            }
        }
        if !has_id {
            self.error(MISSING, node.pos, "goal has no `id`");
            return None;
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_operation_is_rejected() {
        let doc = "resources:\n  m: { kind: Mutex }\nfunctions:\n  f:\n    body:\n    - { sid: a, op: grab(m) }\nentry: f\n";
        let errs = parse_cir(doc).unwrap_err();
        assert_eq!(errs.0[0].code, "E092");
        assert_eq!(errs.0[0].line, 6);
    }

    #[test]
    fn unknown_top_level_key_warns() {
        let doc = "resources:\n  m: { kind: Mutex }\nmetadata: 3\nfunctions:\n  f:\n    body:\n    - { sid: a, op: lock(m) }\nentry: f\n";
        let p = parse_cir_with_warnings(doc).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.warnings[0].line, 3);
    }

    #[test]
    fn wrong_arity() {
        let doc = "functions:\n  f:\n    body:\n    - { sid: a, op: wait(cv) }\n";
        assert_eq!(parse_cir(doc).unwrap_err().0[0].code, "E092");
    }

    #[test]
    fn branch_and_switch() {
        let doc = "resources:\n  st: { kind: Var, type: Enum, variants: [Idle, Busy], init: Idle }\n  x: { kind: Var, type: Int, init: 0 }\nfunctions:\n  f:\n    body:\n    - { sid: a, op: read(x), branch: { if: x > 0 && st == Busy, then: b, else: c } }\n    - { sid: b, op: nop, switch: { on: st, cases: { Idle: c, Busy: c }, default: c } }\n    - { sid: c, op: write(st, Busy), next: return }\nentry: f\n";
        let a = parse_cir(doc).unwrap();
        let f = &a.functions["f"];
        assert!(matches!(f.body[0].transfer, Some(Transfer::Branch { .. })));
        match &f.body[1].transfer {
            Some(Transfer::Switch { arms, .. }) => assert_eq!(arms[1].0, Literal::Enum("Busy".into())),
            other => panic!("{other:?}"),
        }
        assert_eq!(f.body[2].transfer, Some(Transfer::Return));
        assert_eq!(
            f.body[2].op,
            Op::Write {
                var: "st".into(),
                value: crate::expr::Expr::Lit(Literal::Enum("Busy".into()))
            }
        );
    }

    #[test]
    fn duplicate_resource_key() {
        let doc = "resources:\n  m: { kind: Mutex }\n  m: { kind: Mutex }\n";
        assert_eq!(parse_cir(doc).unwrap_err().0[0].code, "E094");
    }
}
