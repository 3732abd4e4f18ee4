use thiserror::Error;

use super::{BinOp, BoolExpr, CmpOp, Expr, Literal};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    LParen,
    RParen,
}

const OPS: [&str; 15] = [
    "==", "!=", "<=", ">=", "&&", "||", "<", ">", "!", "+", "-", "*", "/", "%", "=",
];

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, message: &str| ExprParseError {
        offset,
        message: message.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            if is_float {
                let v: f64 = text.parse().map_err(|_| err(start, "invalid float literal"))?;
                out.push((start, Tok::Float(v)));
            } else {
                let v: i64 = text.parse().map_err(|_| err(start, "integer literal out of range"))?;
                out.push((start, Tok::Int(v)));
            }
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(err(start, "unterminated string literal"));
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(esc) = src[i..].chars().next() else {
                            return Err(err(start, "unterminated string literal"));
                        };
                        i += esc.len_utf8();
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                    }
                    other => s.push(other),
                }
            }
            out.push((start, Tok::Str(s)));
        } else if c == '(' {
            i += 1;
            out.push((start, Tok::LParen));
        } else if c == ')' {
            i += 1;
            out.push((start, Tok::RParen));
        } else {
            let Some(op) = OPS.iter().find(|op| src[i..].starts_with(**op)) else {
                return Err(err(start, &format!("unexpected character `{c}`")));
            };
            if *op == "=" {
                return Err(err(start, "`=` is not an operator; use `==`"));
            }
            i += op.len();
            out.push((start, Tok::Op(op)));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    len: usize,
    is_enum: &'a dyn Fn(&str) -> bool,
}

impl<'a> Parser<'a> {
    fn new(src: &str, is_enum: &'a dyn Fn(&str) -> bool) -> Result<Self, ExprParseError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            len: src.len(),
            is_enum,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprParseError> {
        Err(ExprParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_end(&self) -> Result<(), ExprParseError> {
        if self.pos < self.toks.len() {
            self.error("unexpected trailing input")
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::bin(lhs, op, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Rem
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::bin(lhs, op, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprParseError> {
        if self.eat_op("-") {
            // negative literals stay literals; other negations lower to `0 - e`
            match self.peek().cloned() {
                Some(Tok::Int(i)) => {
                    self.pos += 1;
                    return Ok(Expr::Lit(Literal::Int(-i)));
                }
                Some(Tok::Float(x)) => {
                    self.pos += 1;
                    return Ok(Expr::Lit(Literal::float(-x)));
                }
                _ => {
                    let inner = self.unary()?;
                    return Ok(Expr::bin(Expr::Lit(Literal::Int(0)), BinOp::Sub, inner));
                }
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("expected an expression");
        };
        self.pos += 1;
        Ok(match tok {
            Tok::Int(i) => Expr::Lit(Literal::Int(i)),
            Tok::Float(x) => Expr::Lit(Literal::float(x)),
            Tok::Str(s) => Expr::Lit(Literal::Str(s)),
            Tok::Ident(id) if id == "true" => Expr::Lit(Literal::Bool(true)),
            Tok::Ident(id) if id == "false" => Expr::Lit(Literal::Bool(false)),
            Tok::Ident(id) if (self.is_enum)(&id) => Expr::Lit(Literal::Enum(id)),
            Tok::Ident(id) => Expr::Ref(id),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.error("expected `)`");
                }
                self.pos += 1;
                e
            }
            _ => {
                self.pos -= 1;
                return self.error("expected an expression");
            }
        })
    }

    fn bool_or(&mut self) -> Result<BoolExpr, ExprParseError> {
        let mut lhs = self.bool_and()?;
        while self.eat_op("||") {
            let rhs = self.bool_and()?;
            lhs = BoolExpr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn bool_and(&mut self) -> Result<BoolExpr, ExprParseError> {
        let mut lhs = self.bool_not()?;
        while self.eat_op("&&") {
            let rhs = self.bool_not()?;
            lhs = BoolExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn bool_not(&mut self) -> Result<BoolExpr, ExprParseError> {
        if self.eat_op("!") {
            return Ok(BoolExpr::not(self.bool_not()?));
        }
        self.bool_atom()
    }

    fn bool_atom(&mut self) -> Result<BoolExpr, ExprParseError> {
        if self.peek() == Some(&Tok::LParen) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(inner) = self.bool_or() {
                if self.peek() == Some(&Tok::RParen) {
                    self.pos += 1;
                    let continues_value = matches!(
                        self.peek(),
                        Some(Tok::Op(o)) if !matches!(*o, "&&" | "||")
                    );
                    if !continues_value {
                        return Ok(inner);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some(Tok::Op(o)) => match *o {
                "==" => Some(CmpOp::Eq),
                "!=" => Some(CmpOp::Ne),
                "<" => Some(CmpOp::Lt),
                "<=" => Some(CmpOp::Le),
                ">" => Some(CmpOp::Gt),
                ">=" => Some(CmpOp::Ge),
                _ => None,
            },
            _ => None,
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let rhs = self.expr()?;
                Ok(BoolExpr::cmp(lhs, op, rhs))
            }
            None => Ok(match lhs {
                Expr::Lit(Literal::Bool(true)) => BoolExpr::True,
                Expr::Lit(Literal::Bool(false)) => BoolExpr::False,
                // bare operand: truthiness test, type-checked later
                other => BoolExpr::cmp(other, CmpOp::Eq, Expr::Lit(Literal::Bool(true))),
            }),
        }
    }
}

/// Parses a value expression. `is_enum` decides whether a bare identifier is an
/// enum literal rather than a variable reference.
pub fn parse_expr(src: &str, is_enum: &dyn Fn(&str) -> bool) -> Result<Expr, ExprParseError> {
    let mut p = Parser::new(src, is_enum)?;
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}

pub fn parse_bool_expr(src: &str, is_enum: &dyn Fn(&str) -> bool) -> Result<BoolExpr, ExprParseError> {
    let mut p = Parser::new(src, is_enum)?;
    let e = p.bool_or()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses a single literal. Bare identifiers other than `true`/`false` are enum variants.
pub fn parse_literal(src: &str) -> Result<Literal, ExprParseError> {
    let mut p = Parser::new(src, &|_| true)?;
    let e = p.unary()?;
    p.expect_end()?;
    match e {
        Expr::Lit(l) => Ok(l),
        _ => Err(ExprParseError {
            offset: 0,
            message: "expected a literal".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_enum(_: &str) -> bool {
        false
    }

    #[test]
    fn precedence() {
        let e = parse_expr("a + b * 2", &no_enum).unwrap();
        assert_eq!(
            e,
            Expr::bin(
                Expr::var("a"),
                BinOp::Add,
                Expr::bin(Expr::var("b"), BinOp::Mul, Expr::Lit(Literal::Int(2)))
            )
        );
    }

    #[test]
    fn bool_forms() {
        let g = parse_bool_expr("!ready && (x + 1) > 2 || st == Idle", &|s| s == "Idle").unwrap();
        assert_eq!(g.to_string(), "!(ready == true) && x + 1 > 2 || st == Idle");
        let g2 = parse_bool_expr("(a == 1 || b == 2) && c", &no_enum).unwrap();
        assert!(matches!(g2, BoolExpr::And(..)));
        assert_eq!(parse_bool_expr("true", &no_enum).unwrap(), BoolExpr::True);
    }

    #[test]
    fn literals() {
        assert_eq!(parse_literal("-3").unwrap(), Literal::Int(-3));
        assert_eq!(parse_literal("2.5").unwrap(), Literal::float(2.5));
        assert_eq!(parse_literal("\"a\\\"b\"").unwrap(), Literal::Str("a\"b".into()));
        assert_eq!(parse_literal("Busy").unwrap(), Literal::Enum("Busy".into()));
        assert!(parse_literal("a + 1").is_err());
    }

    #[test]
    fn rejects_single_equals() {
        assert!(parse_bool_expr("x = 1", &no_enum).is_err());
    }
}
