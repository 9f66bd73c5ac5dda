use std::fmt;

use super::value::{Type, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Ge => ">=",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Lt => "<",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Ge
            | BinaryOp::Le
            | BinaryOp::Gt
            | BinaryOp::Lt
            | BinaryOp::Eq
            | BinaryOp::Ne => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

/// Expression AST shared by equations, case selectors and phrase slots.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Bool(bool),
    Label(String),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("unknown variable `{0}`")]
    Unknown(String),
    #[error("{0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(e: Expr) -> Self {
        Expr::Unary(UnaryOp::Not, Box::new(e))
    }

    /// Names referenced by the expression, in first-occurrence order.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            Expr::Unary(_, e) => e.collect_refs(out),
            Expr::Binary(_, a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Expr::If(c, a, b) => {
                c.collect_refs(out);
                a.collect_refs(out);
                b.collect_refs(out);
            }
            _ => {}
        }
    }

    pub fn type_of(&self, env: &dyn Fn(&str) -> Option<Type>) -> Result<Type, ExprError> {
        match self {
            Expr::Int(_) | Expr::Real(_) => Ok(Type::Num),
            Expr::Bool(_) => Ok(Type::Bool),
            Expr::Label(_) => Ok(Type::Label),
            Expr::Var(n) => env(n).ok_or_else(|| ExprError::Unknown(n.clone())),
            Expr::Unary(op, e) => {
                let t = e.type_of(env)?;
                let want = match op {
                    UnaryOp::Not => Type::Bool,
                    UnaryOp::Neg => Type::Num,
                };
                if t != want {
                    return Err(ExprError::Type(format!(
                        "operand of `{}` must be {want}, found {t}",
                        if *op == UnaryOp::Not { "not" } else { "-" }
                    )));
                }
                Ok(want)
            }
            Expr::Binary(op, a, b) => {
                let (ta, tb) = (a.type_of(env)?, b.type_of(env)?);
                let sym = op.symbol();
                match op {
                    BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
                        if ta != Type::Num || tb != Type::Num {
                            return Err(ExprError::Type(format!(
                                "`{sym}` needs numbers, found {ta} and {tb}"
                            )));
                        }
                        Ok(Type::Num)
                    }
                    BinaryOp::Ge | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Lt => {
                        if ta != Type::Num || tb != Type::Num {
                            return Err(ExprError::Type(format!(
                                "`{sym}` compares numbers, found {ta} and {tb}"
                            )));
                        }
                        Ok(Type::Bool)
                    }
                    BinaryOp::Eq | BinaryOp::Ne => {
                        if ta != tb {
                            return Err(ExprError::Type(format!(
                                "`{sym}` compares {ta} with {tb}"
                            )));
                        }
                        Ok(Type::Bool)
                    }
                    BinaryOp::And | BinaryOp::Or => {
                        if ta != Type::Bool || tb != Type::Bool {
                            return Err(ExprError::Type(format!(
                                "`{sym}` needs booleans, found {ta} and {tb}"
                            )));
                        }
                        Ok(Type::Bool)
                    }
                }
            }
            Expr::If(c, a, b) => {
                let tc = c.type_of(env)?;
                if tc != Type::Bool {
                    return Err(ExprError::Type(format!("`if` condition must be boolean, found {tc}")));
                }
                let (ta, tb) = (a.type_of(env)?, b.type_of(env)?);
                if ta != tb {
                    return Err(ExprError::Type(format!("`if` branches differ: {ta} and {tb}")));
                }
                Ok(ta)
            }
        }
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<Value>) -> Result<Value, ExprError> {
        match self {
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Real(r) => Ok(Value::Real(*r)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Label(s) => Ok(Value::Label(s.clone())),
            Expr::Var(n) => env(n).ok_or_else(|| ExprError::Unknown(n.clone())),
            Expr::Unary(UnaryOp::Not, e) => Ok(Value::Bool(!want_bool(e.eval(env)?)?)),
            Expr::Unary(UnaryOp::Neg, e) => match e.eval(env)? {
                Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(ExprError::Overflow),
                Value::Real(r) => Ok(Value::Real(-r)),
                v => Err(ExprError::Type(format!("cannot negate {}", v.ty()))),
            },
            Expr::Binary(BinaryOp::And, a, b) => {
                Ok(Value::Bool(want_bool(a.eval(env)?)? && want_bool(b.eval(env)?)?))
            }
            Expr::Binary(BinaryOp::Or, a, b) => {
                Ok(Value::Bool(want_bool(a.eval(env)?)? || want_bool(b.eval(env)?)?))
            }
            Expr::Binary(op, a, b) => binary(*op, a.eval(env)?, b.eval(env)?),
            Expr::If(c, a, b) => {
                if want_bool(c.eval(env)?)? {
                    a.eval(env)
                } else {
                    b.eval(env)
                }
            }
        }
    }
}

fn want_bool(v: Value) -> Result<bool, ExprError> {
    v.as_bool()
        .ok_or_else(|| ExprError::Type(format!("expected boolean, found {}", v.ty())))
}

fn binary(op: BinaryOp, a: Value, b: Value) -> Result<Value, ExprError> {
    use BinaryOp::*;
    match op {
        Eq | Ne => {
            let same = match (&a, &b) {
                (Value::Bool(x), Value::Bool(y)) => x == y,
                (Value::Label(x), Value::Label(y)) => x == y,
                _ => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x == y,
                    _ => {
                        return Err(ExprError::Type(format!(
                            "cannot compare {} with {}",
                            a.ty(),
                            b.ty()
                        )))
                    }
                },
            };
            Ok(Value::Bool(if op == Eq { same } else { !same }))
        }
        Ge | Le | Gt | Lt => {
            let (x, y) = nums(&a, &b, op)?;
            Ok(Value::Bool(match op {
                Ge => x >= y,
                Le => x <= y,
                Gt => x > y,
                _ => x < y,
            }))
        }
        Add | Sub | Mul => {
            if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
                let r = match op {
                    Add => x.checked_add(*y),
                    Sub => x.checked_sub(*y),
                    _ => x.checked_mul(*y),
                };
                return r.map(Value::Int).ok_or(ExprError::Overflow);
            }
            let (x, y) = nums(&a, &b, op)?;
            Ok(Value::Real(match op {
                Add => x + y,
                Sub => x - y,
                _ => x * y,
            }))
        }
        Div => {
            let (x, y) = nums(&a, &b, op)?;
            if y == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            Ok(Value::Real(x / y))
        }
        And | Or => unreachable!("short-circuit operators handled by caller"),
    }
}

fn nums(a: &Value, b: &Value, op: BinaryOp) -> Result<(f64, f64), ExprError> {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(ExprError::Type(format!(
            "`{}` needs numbers, found {} and {}",
            op.symbol(),
            a.ty(),
            b.ty()
        ))),
    }
}

/// Canonical text: minimal parentheses under the DSL's precedence rules.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, 0, f)
    }
}

fn write_expr(e: &Expr, ctx: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Int(i) => write!(f, "{i}"),
        Expr::Real(r) => write!(f, "{r:?}"),
        Expr::Bool(b) => write!(f, "{b}"),
        Expr::Label(s) => write!(f, "{}", quote(s)),
        Expr::Var(n) => f.write_str(n),
        Expr::Unary(op, inner) => {
            match op {
                UnaryOp::Not => f.write_str("not ")?,
                UnaryOp::Neg => f.write_str("-")?,
            }
            // `-3` would re-read as a negative literal.
            if matches!(inner.as_ref(), Expr::Int(_) | Expr::Real(_)) {
                f.write_str("(")?;
                write_expr(inner, 0, f)?;
                return f.write_str(")");
            }
            write_expr(inner, 6, f)
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let paren = p < ctx;
            if paren {
                f.write_str("(")?;
            }
            // Left-associative; comparisons are non-associative so both sides
            // get the tighter context.
            let left_ctx = if op.is_comparison() { p + 1 } else { p };
            write_expr(a, left_ctx, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, p + 1, f)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::If(c, a, b) => {
            let paren = ctx > 0;
            if paren {
                f.write_str("(")?;
            }
            f.write_str("if ")?;
            write_expr(c, 0, f)?;
            f.write_str(" then ")?;
            write_expr(a, 0, f)?;
            f.write_str(" else ")?;
            write_expr(b, 0, f)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

/// Double-quoted string literal with `\"` and `\\` escapes.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}
