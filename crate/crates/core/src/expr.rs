//! Value domain with the absorbing unknown element, value/boolean expressions,
//! and Kleene three-valued guard evaluation.

use std::collections::BTreeMap;
use std::fmt;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod parse;

pub use parse::{parse_bool_expr, parse_expr, parse_literal, ExprParseError};

/// Base types a `Var` or `Atomic` resource may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseType {
    Bool,
    Int,
    Float,
    String,
    Enum,
}

impl BaseType {
    pub fn name(self) -> &'static str {
        match self {
            BaseType::Bool => "Bool",
            BaseType::Int => "Int",
            BaseType::Float => "Float",
            BaseType::String => "String",
            BaseType::Enum => "Enum",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "Bool" => BaseType::Bool,
            "Int" => BaseType::Int,
            "Float" => BaseType::Float,
            "String" => BaseType::String,
            "Enum" => BaseType::Enum,
            _ => return None,
        })
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete payload of one of the base types.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(String),
    Enum(String),
}

impl Literal {
    pub fn base_type(&self) -> BaseType {
        match self {
            Literal::Bool(_) => BaseType::Bool,
            Literal::Int(_) => BaseType::Int,
            Literal::Float(_) => BaseType::Float,
            Literal::Str(_) => BaseType::String,
            Literal::Enum(_) => BaseType::Enum,
        }
    }

    pub fn float(v: f64) -> Self {
        Literal::Float(OrderedFloat(v))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => {
                let s = format!("{:?}", x.0);
                if s.contains(['.', 'e', 'E']) || !x.0.is_finite() {
                    f.write_str(&s)
                } else {
                    write!(f, "{s}.0")
                }
            }
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::Enum(v) => f.write_str(v),
        }
    }
}

/// Element of the value domain: a concrete literal or the unknown value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Concrete(Literal),
    Top,
}

impl Value {
    pub fn is_top(&self) -> bool {
        matches!(self, Value::Top)
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Value::Concrete(l) => Some(l),
            Value::Top => None,
        }
    }

    pub fn int(i: i64) -> Self {
        Value::Concrete(Literal::Int(i))
    }

    pub fn bool(b: bool) -> Self {
        Value::Concrete(Literal::Bool(b))
    }
}

impl From<Literal> for Value {
    fn from(l: Literal) -> Self {
        Value::Concrete(l)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Concrete(l) => write!(f, "{l}"),
            Value::Top => f.write_str("⊤"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Value expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Expr {
    Lit(Literal),
    Ref(String),
    Bin(Box<Expr>, BinOp, Box<Expr>),
}

impl Expr {
    pub fn lit(l: Literal) -> Self {
        Expr::Lit(l)
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Ref(name.into())
    }

    pub fn bin(lhs: Expr, op: BinOp, rhs: Expr) -> Self {
        Expr::Bin(Box::new(lhs), op, Box::new(rhs))
    }

    /// Names referenced by this expression, in first-occurrence order.
    pub fn refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Ref(x) => {
                if !out.contains(&x.as_str()) {
                    out.push(x);
                }
            }
            Expr::Bin(a, _, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            Expr::Lit(l) => write!(f, "{l}"),
            Expr::Ref(x) => f.write_str(x),
            Expr::Bin(a, op, b) => {
                let p = op.precedence();
                let paren = p < min;
                if paren {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                // left associative: the right operand needs strictly higher precedence
                b.fmt_prec(f, p + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Boolean expression used for guards and branch conditions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoolExpr {
    True,
    False,
    Cmp(Expr, CmpOp, Expr),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

impl BoolExpr {
    pub fn cmp(lhs: Expr, op: CmpOp, rhs: Expr) -> Self {
        BoolExpr::Cmp(lhs, op, rhs)
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(a))
    }

    /// Conjunction of all items; `True` when empty.
    pub fn all(items: impl IntoIterator<Item = BoolExpr>) -> Self {
        let mut it = items.into_iter();
        match it.next() {
            None => BoolExpr::True,
            Some(first) => it.fold(first, BoolExpr::and),
        }
    }

    pub fn refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(a, _, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            BoolExpr::Not(a) => a.collect_refs(out),
        }
    }

    /// Every value subexpression that appears as a comparison operand.
    pub fn operands(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(b) = stack.pop() {
            match b {
                BoolExpr::True | BoolExpr::False => {}
                BoolExpr::Cmp(x, _, y) => {
                    out.push(x);
                    out.push(y);
                }
                BoolExpr::And(x, y) | BoolExpr::Or(x, y) => {
                    stack.push(y);
                    stack.push(x);
                }
                BoolExpr::Not(x) => stack.push(x),
            }
        }
        out
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            BoolExpr::True => f.write_str("true"),
            BoolExpr::False => f.write_str("false"),
            BoolExpr::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            BoolExpr::Or(a, b) => {
                if min > 1 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 1)?;
                f.write_str(" || ")?;
                b.fmt_prec(f, 2)?;
                if min > 1 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            BoolExpr::And(a, b) => {
                if min > 2 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" && ")?;
                b.fmt_prec(f, 3)?;
                if min > 2 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            BoolExpr::Not(a) => {
                f.write_str("!")?;
                match **a {
                    BoolExpr::True | BoolExpr::False => a.fmt_prec(f, 3),
                    _ => {
                        f.write_str("(")?;
                        a.fmt_prec(f, 0)?;
                        f.write_str(")")
                    }
                }
            }
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Kleene strong three-valued truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth3 {
    True,
    False,
    Unknown,
}

impl Truth3 {
    pub fn and(self, other: Truth3) -> Truth3 {
        use Truth3::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }

    pub fn or(self, other: Truth3) -> Truth3 {
        use Truth3::*;
        match (self, other) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Truth3 {
        match self {
            Truth3::True => Truth3::False,
            Truth3::False => Truth3::True,
            Truth3::Unknown => Truth3::Unknown,
        }
    }

    pub fn from_bool(b: bool) -> Truth3 {
        if b {
            Truth3::True
        } else {
            Truth3::False
        }
    }
}

impl fmt::Display for Truth3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth3::True => "true",
            Truth3::False => "false",
            Truth3::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// Anything that can resolve a variable name to its current value.
pub trait Valuation {
    fn get(&self, name: &str) -> Option<&Value>;
}

impl Valuation for BTreeMap<String, Value> {
    fn get(&self, name: &str) -> Option<&Value> {
        BTreeMap::get(self, name)
    }
}

impl<V: Valuation + ?Sized> Valuation for &V {
    fn get(&self, name: &str) -> Option<&Value> {
        (**self).get(name)
    }
}

pub fn eval_expr<V: Valuation + ?Sized>(e: &Expr, v: &V) -> Result<Value, EvalError> {
    match e {
        Expr::Lit(l) => Ok(Value::Concrete(l.clone())),
        Expr::Ref(x) => v
            .get(x)
            .cloned()
            .ok_or_else(|| EvalError::UnknownVariable(x.clone())),
        Expr::Bin(a, op, b) => {
            let lhs = eval_expr(a, v)?;
            let rhs = eval_expr(b, v)?;
            Ok(apply_binop(&lhs, *op, &rhs))
        }
    }
}

/// Arithmetic with `Top` absorbing. Ill-typed operands, overflow and
/// division by zero also yield `Top`.
pub fn apply_binop(lhs: &Value, op: BinOp, rhs: &Value) -> Value {
    let (Value::Concrete(a), Value::Concrete(b)) = (lhs, rhs) else {
        return Value::Top;
    };
    let out = match (a, b) {
        (Literal::Int(x), Literal::Int(y)) => {
            let (x, y) = (*x, *y);
            match op {
                BinOp::Add => x.checked_add(y),
                BinOp::Sub => x.checked_sub(y),
                BinOp::Mul => x.checked_mul(y),
                BinOp::Div => x.checked_div(y),
                BinOp::Rem => x.checked_rem(y),
            }
            .map(Literal::Int)
        }
        (Literal::Float(x), Literal::Float(y)) => {
            let (x, y) = (x.0, y.0);
            let r = match op {
                BinOp::Add => Some(x + y),
                BinOp::Sub => Some(x - y),
                BinOp::Mul => Some(x * y),
                BinOp::Div if y != 0.0 => Some(x / y),
                BinOp::Rem if y != 0.0 => Some(x % y),
                _ => None,
            };
            r.filter(|r| r.is_finite()).map(Literal::float)
        }
        (Literal::Str(x), Literal::Str(y)) if op == BinOp::Add => Some(Literal::Str(format!("{x}{y}"))),
        _ => None,
    };
    out.map(Value::Concrete).unwrap_or(Value::Top)
}

/// Comparison: `unknown` if either side is `Top` or the operands are not comparable.
pub fn compare(lhs: &Value, op: CmpOp, rhs: &Value) -> Truth3 {
    let (Value::Concrete(a), Value::Concrete(b)) = (lhs, rhs) else {
        return Truth3::Unknown;
    };
    if a.base_type() != b.base_type() {
        return Truth3::Unknown;
    }
    let ordered = matches!(a, Literal::Int(_) | Literal::Float(_) | Literal::Str(_));
    let r = match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        _ if !ordered => return Truth3::Unknown,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    };
    Truth3::from_bool(r)
}

pub fn eval_guard<V: Valuation + ?Sized>(g: &BoolExpr, v: &V) -> Result<Truth3, EvalError> {
    Ok(match g {
        BoolExpr::True => Truth3::True,
        BoolExpr::False => Truth3::False,
        BoolExpr::Cmp(a, op, b) => compare(&eval_expr(a, v)?, *op, &eval_expr(b, v)?),
        BoolExpr::And(a, b) => eval_guard(a, v)?.and(eval_guard(b, v)?),
        BoolExpr::Or(a, b) => eval_guard(a, v)?.or(eval_guard(b, v)?),
        BoolExpr::Not(a) => eval_guard(a, v)?.not(),
    })
}
