use super::Sink;
use crate::cir::{CirArtifact, Op, Transfer};
use crate::expr::{BaseType, BinOp, BoolExpr, CmpOp, Expr, Literal};

#[derive(Clone, Debug, PartialEq)]
enum Ty {
    Bool,
    Int,
    Float,
    Str,
    /// Variants a value of this type may take.
    Enum(Vec<String>),
}

impl Ty {
    fn name(&self) -> &'static str {
        match self {
            Ty::Bool => "Bool",
            Ty::Int => "Int",
            Ty::Float => "Float",
            Ty::Str => "String",
            Ty::Enum(_) => "Enum",
        }
    }

    fn accepts(&self, other: &Ty) -> bool {
        match (self, other) {
            (Ty::Enum(a), Ty::Enum(b)) => b.iter().all(|v| a.contains(v)) || a.iter().all(|v| b.contains(v)),
            (a, b) => a == b,
        }
    }
}

fn literal_ty(l: &Literal) -> Ty {
    match l {
        Literal::Bool(_) => Ty::Bool,
        Literal::Int(_) => Ty::Int,
        Literal::Float(_) => Ty::Float,
        Literal::Str(_) => Ty::Str,
        Literal::Enum(v) => Ty::Enum(vec![v.clone()]),
    }
}

fn var_ty(art: &CirArtifact, name: &str) -> Option<Ty> {
    let r = art.resource(name)?;
    if !r.kind.is_data() {
        return None;
    }
    Some(match r.ty? {
        BaseType::Bool => Ty::Bool,
        BaseType::Int => Ty::Int,
        BaseType::Float => Ty::Float,
        BaseType::String => Ty::Str,
        BaseType::Enum => Ty::Enum(r.variants.clone()),
    })
}

struct Typer<'a, 's> {
    art: &'a CirArtifact,
    sink: &'s mut Sink,
    anchor: String,
}

impl Typer<'_, '_> {
    fn expr(&mut self, e: &Expr) -> Option<Ty> {
        match e {
            Expr::Lit(l) => Some(literal_ty(l)),
            Expr::Ref(name) => match self.art.resource(name) {
                None => {
                    self.sink.push("E101", self.anchor.clone(), format!("undeclared name `{name}` in expression"));
                    None
                }
                Some(r) if !r.kind.is_data() => {
                    self.sink.push("E202", self.anchor.clone(), format!("{} `{name}` has no value", r.kind));
                    None
                }
                Some(_) => var_ty(self.art, name),
            },
            Expr::Bin(a, op, b) => {
                let (ta, tb) = (self.expr(a)?, self.expr(b)?);
                let ok = match (&ta, op) {
                    _ if ta != tb => false,
                    (Ty::Int | Ty::Float, _) => true,
                    (Ty::Str, BinOp::Add) => true,
                    _ => false,
                };
                if ok {
                    Some(ta)
                } else {
                    self.sink.push(
                        "E202",
                        self.anchor.clone(),
                        format!("`{e}` applies `{}` to {} and {}", op.symbol(), ta.name(), tb.name()),
                    );
                    None
                }
            }
        }
    }

    fn cond(&mut self, c: &BoolExpr) {
        match c {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                self.cond(a);
                self.cond(b);
            }
            BoolExpr::Not(a) => self.cond(a),
            BoolExpr::Cmp(a, op, b) => {
                let (Some(ta), Some(tb)) = (self.expr(a), self.expr(b)) else { return };
                let ordered = !matches!(op, CmpOp::Eq | CmpOp::Ne);
                if !ta.accepts(&tb) {
                    self.sink.push("E201", self.anchor.clone(), format!("`{c}` compares {} with {}", ta.name(), tb.name()));
                } else if ordered && matches!(ta, Ty::Bool | Ty::Enum(_)) {
                    self.sink.push("E201", self.anchor.clone(), format!("`{c}` orders {} values", ta.name()));
                }
            }
        }
    }

    fn assign(&mut self, var: &str, value: &Expr) {
        let (Some(want), Some(got)) = (var_ty(self.art, var), self.expr(value)) else { return };
        if !want.accepts(&got) || !accepts_all(&want, &got) {
            self.sink.push("E203", self.anchor.clone(), format!("`{var}` is {} but `{value}` is {}", want.name(), got.name()));
        }
    }
}

/// For enum targets the value's variants must all be admissible.
fn accepts_all(want: &Ty, got: &Ty) -> bool {
    match (want, got) {
        (Ty::Enum(a), Ty::Enum(b)) => b.iter().all(|v| a.contains(v)),
        _ => true,
    }
}

fn literal_fits(want: &Ty, l: &Literal) -> bool {
    let got = literal_ty(l);
    want.accepts(&got) && accepts_all(want, &got)
}

pub(crate) fn check_types(art: &CirArtifact, sink: &mut Sink) {
    for r in art.resources.values() {
        if let (Some(want), Some(init)) = (var_ty(art, &r.name), &r.init) {
            if !literal_fits(&want, init) {
                sink.push("E204", &r.name, format!("`{}` is {} but starts as `{init}`", r.name, want.name()));
            }
        }
    }
    for g in &art.goals {
        for (var, lit) in &g.variables {
            if let Some(want) = var_ty(art, var) {
                if !literal_fits(&want, lit) {
                    sink.push("E206", &g.id, format!("goal `{}` expects `{var}` = `{lit}` but `{var}` is {}", g.id, want.name()));
                }
            }
        }
    }
    for f in art.functions.values() {
        for s in &f.body {
            let mut t = Typer {
                art,
                sink: &mut *sink,
                anchor: s.sid.0.clone(),
            };
            match &s.op {
                Op::Write { var, value } | Op::Store { var, value } => t.assign(var, value),
                Op::Cas { var, expected, new } => {
                    t.assign(var, expected);
                    t.assign(var, new);
                }
                _ => {}
            }
            match &s.transfer {
                Some(Transfer::Branch { cond, .. }) => t.cond(cond),
                Some(Transfer::Switch { var, arms, .. }) => match art.resource(var) {
                    None => t.sink.push("E101", t.anchor.clone(), format!("switch on undeclared `{var}`")),
                    Some(_) => {
                        if let Some(want) = var_ty(art, var) {
                            for (lit, _) in arms {
                                if !literal_fits(&want, lit) {
                                    t.sink.push("E205", t.anchor.clone(), format!("arm `{lit}` does not fit {} `{var}`", want.name()));
                                }
                            }
                        } else {
                            t.sink.push("E202", t.anchor.clone(), format!("switch on `{var}`, which has no value"));
                        }
                    }
                },
                _ => {}
            }
        }
    }
}
