use std::collections::BTreeMap;
use std::fmt;

use crate::scm::Expr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    /// `{name}`: an exogenous variable or a phrase slot.
    Slot(String),
}

/// Text with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Template {
    pub parts: Vec<Part>,
}

impl Template {
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Slot(s) => Some(s.as_str()),
            Part::Text(_) => None,
        })
    }

    /// Substitutes every slot through `lookup`; the first unknown slot name
    /// is returned as the error.
    pub fn fill(&self, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
        let mut out = String::new();
        for p in &self.parts {
            match p {
                Part::Text(t) => out.push_str(t),
                Part::Slot(s) => out.push_str(&lookup(s).ok_or_else(|| s.clone())?),
            }
        }
        Ok(out)
    }
}

/// Source form, with braces around slots.
impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.parts {
            match p {
                Part::Text(t) => f.write_str(t)?,
                Part::Slot(s) => write!(f, "{{{s}}}")?,
            }
        }
        Ok(())
    }
}

/// Effect clauses used to write template answers, e.g. "Dave is happy".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerClauses {
    pub factual_yes: String,
    pub factual_no: String,
    pub counterfactual_yes: String,
    pub counterfactual_no: String,
}

/// Key of an interventional template: (cause, forced value, effect).
pub type InterventionKey = (String, bool, String);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemplateSet {
    pub context: Template,
    pub factual: BTreeMap<String, Template>,
    pub interventional: BTreeMap<InterventionKey, Template>,
    pub answers: BTreeMap<String, AnswerClauses>,
    /// Named phrase slots, evaluated against the factual valuation.
    pub phrases: Vec<(String, Expr)>,
}
