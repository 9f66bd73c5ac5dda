use std::fmt;

use serde::{Deserialize, Serialize};

/// A sampled or computed quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Label(String),
}

/// Static type of an expression or distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Bool,
    Num,
    Label,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Bool => "boolean",
            Type::Num => "number",
            Type::Label => "label",
        })
    }
}

impl Value {
    pub fn ty(&self) -> Type {
        match self {
            Value::Bool(_) => Type::Bool,
            Value::Int(_) | Value::Real(_) => Type::Num,
            Value::Label(_) => Type::Label,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Text used when the value is substituted into a narrative.
    /// Reals print with `decimals` fractional digits.
    pub fn render(&self, decimals: Option<u32>) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Real(r) => match decimals {
                Some(d) => format!("{:.*}", d as usize, r),
                None => {
                    if r.fract() == 0.0 && r.abs() < 1e15 {
                        format!("{}", *r as i64)
                    } else {
                        format!("{r}")
                    }
                }
            },
            Value::Label(s) => s.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}
