use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::value::Type;

/// Distribution of one exogenous variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    /// Inclusive integer range.
    UniformInt { lo: i64, hi: i64 },
    /// Real draw rounded to `decimals` places; `positive` resamples until the
    /// rounded value is > 0.
    Normal {
        mu: f64,
        sigma: f64,
        decimals: u32,
        positive: bool,
    },
    Bernoulli { p: f64 },
    Categorical(Vec<(String, f64)>),
    /// First arm whose boolean selector holds decides the distribution.
    Case(Vec<(Expr, Dist)>),
}

pub const DEFAULT_DECIMALS: u32 = 1;

impl Dist {
    pub fn normal(mu: f64, sigma: f64) -> Self {
        Dist::Normal {
            mu,
            sigma,
            decimals: DEFAULT_DECIMALS,
            positive: false,
        }
    }

    /// `None` when case arms disagree.
    pub fn value_type(&self) -> Option<Type> {
        match self {
            Dist::UniformInt { .. } | Dist::Normal { .. } => Some(Type::Num),
            Dist::Bernoulli { .. } => Some(Type::Bool),
            Dist::Categorical(_) => Some(Type::Label),
            Dist::Case(arms) => {
                let mut ty = None;
                for (_, d) in arms {
                    let t = d.value_type()?;
                    match ty {
                        None => ty = Some(t),
                        Some(prev) if prev != t => return None,
                        _ => {}
                    }
                }
                ty
            }
        }
    }

    /// Rendering precision for real-valued draws, when every arm agrees.
    pub fn decimals(&self) -> Option<u32> {
        match self {
            Dist::Normal { decimals, .. } => Some(*decimals),
            Dist::Case(arms) => arms.iter().find_map(|(_, d)| d.decimals()),
            _ => None,
        }
    }

    fn check(&self, out: &mut Vec<String>) {
        match self {
            Dist::UniformInt { lo, hi } => {
                if lo > hi {
                    out.push(format!("uniform_int bounds reversed: {lo} > {hi}"));
                }
            }
            Dist::Normal { mu, sigma, .. } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    out.push(format!("normal sigma must be > 0, got {sigma}"));
                }
                if !mu.is_finite() {
                    out.push(format!("normal mean must be finite, got {mu}"));
                }
            }
            Dist::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    out.push(format!("bernoulli p must lie in [0, 1], got {p}"));
                }
            }
            Dist::Categorical(items) => {
                if items.is_empty() {
                    out.push("categorical needs at least one label".into());
                }
                for (label, w) in items {
                    if !(*w > 0.0) {
                        out.push(format!("categorical weight for \"{label}\" must be > 0, got {w}"));
                    }
                }
                let total: f64 = items.iter().map(|(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-9 {
                    out.push(format!("categorical weights sum to {total}, expected 1"));
                }
                for (i, (label, _)) in items.iter().enumerate() {
                    if items[..i].iter().any(|(l, _)| l == label) {
                        out.push(format!("categorical label \"{label}\" repeated"));
                    }
                }
            }
            Dist::Case(arms) => {
                if arms.is_empty() {
                    out.push("case needs at least one arm".into());
                }
                for (_, d) in arms {
                    d.check(out);
                }
                if self.value_type().is_none() {
                    out.push("case arms produce different value types".into());
                }
            }
        }
    }

    fn selector_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Dist::Case(arms) = self {
            for (sel, d) in arms {
                for r in sel.references() {
                    if !out.contains(&r) {
                        out.push(r);
                    }
                }
                d.selector_refs(out);
            }
        }
    }

    fn selectors(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        if let Dist::Case(arms) = self {
            for (sel, d) in arms {
                out.push(sel);
                out.extend(d.selectors());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSpec {
    pub name: String,
    pub dist: Dist,
}

/// One declaration in model order.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Exo(ExogenousSpec),
    /// Boolean endogenous variable; the only legal intervention target.
    Var { name: String, expr: Expr },
    /// Derived non-boolean quantity, recomputed under interventions.
    Let { name: String, expr: Expr },
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Exo(s) => &s.name,
            Node::Var { name, .. } | Node::Let { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub cause: String,
    pub effect: String,
}

impl Edge {
    pub fn new(cause: &str, effect: &str) -> Self {
        Self {
            cause: cause.into(),
            effect: effect.into(),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.cause, self.effect)
    }
}

impl std::str::FromStr for Edge {
    type Err = String;

    /// Accepts `A->D` and `A:D`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (c, e) = s
            .split_once("->")
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| format!("edge `{s}` must look like CAUSE->EFFECT or CAUSE:EFFECT"))?;
        let (c, e) = (c.trim(), e.trim());
        if c.is_empty() || e.is_empty() {
            return Err(format!("edge `{s}` has an empty endpoint"));
        }
        Ok(Edge::new(c, e))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DefinitionError {
    #[error("`{name}` is declared more than once")]
    Duplicate { name: String },
    #[error("`{var}` references `{referenced}`, which is declared later")]
    Order { var: String, referenced: String },
    #[error("`{var}` references undeclared `{referenced}`")]
    Undeclared { var: String, referenced: String },
    #[error("distribution of `{var}`: {reason}")]
    Distribution { var: String, reason: String },
    #[error("type error in `{var}`: {detail}")]
    Type { var: String, detail: String },
    #[error("equation for `{var}` must be boolean, found {found}")]
    NonBoolean { var: String, found: Type },
    #[error("edge {edge}: {reason}")]
    Edge { edge: String, reason: String },
}

/// Structural causal model over boolean endogenous variables.
#[derive(Debug, Clone)]
pub struct CausalModel {
    name: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
    types: Vec<Type>,
}

impl PartialEq for CausalModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl CausalModel {
    /// Builds and validates a model.
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
    ) -> Result<Self, Vec<DefinitionError>> {
        let name = name.into();
        let (index, types, errors) = check(&nodes, &edges);
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Self {
            name,
            nodes,
            edges,
            index,
            types,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn exogenous(&self) -> impl Iterator<Item = &ExogenousSpec> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Exo(s) => Some(s),
            _ => None,
        })
    }

    /// Boolean endogenous variables in model order.
    pub fn endogenous(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Var { name, expr } => Some((name.as_str(), expr)),
            _ => None,
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.index_of(name).map(|i| &self.nodes[i])
    }

    pub fn type_of(&self, name: &str) -> Option<Type> {
        self.index_of(name).map(|i| self.types[i])
    }

    pub fn is_endogenous(&self, name: &str) -> bool {
        matches!(self.node(name), Some(Node::Var { .. }))
    }

    pub fn is_exogenous(&self, name: &str) -> bool {
        matches!(self.node(name), Some(Node::Exo(_)))
    }

    pub fn has_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Re-runs every definition check. Always `Ok` for a constructed model.
    pub fn validate(&self) -> Result<(), Vec<DefinitionError>> {
        let (_, _, errors) = check(&self.nodes, &self.edges);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Order, name resolution, typing, distribution parameters and edges.
fn check(
    nodes: &[Node],
    edges: &[Edge],
) -> (HashMap<String, usize>, Vec<Type>, Vec<DefinitionError>) {
    let mut errors = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if index.contains_key(n.name()) {
            errors.push(DefinitionError::Duplicate {
                name: n.name().to_string(),
            });
        } else {
            index.insert(n.name().to_string(), i);
        }
    }

    let mut types: Vec<Type> = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        let var = n.name().to_string();
        let mut refs = Vec::new();
        match n {
            Node::Exo(s) => s.dist.selector_refs(&mut refs),
            Node::Var { expr, .. } | Node::Let { expr, .. } => refs = expr.references(),
        }
        let mut resolved = true;
        for r in refs {
            match index.get(r) {
                Some(&j) if j < i => {}
                Some(_) => {
                    resolved = false;
                    errors.push(DefinitionError::Order {
                        var: var.clone(),
                        referenced: r.to_string(),
                    });
                }
                None => {
                    resolved = false;
                    errors.push(DefinitionError::Undeclared {
                        var: var.clone(),
                        referenced: r.to_string(),
                    });
                }
            }
        }
        let known = |name: &str| -> Option<Type> {
            index
                .get(name)
                .and_then(|&j| if j < i { types.get(j).copied() } else { None })
        };
        let ty = match n {
            Node::Exo(s) => {
                let mut reasons = Vec::new();
                s.dist.check(&mut reasons);
                for reason in reasons {
                    errors.push(DefinitionError::Distribution {
                        var: var.clone(),
                        reason,
                    });
                }
                if resolved {
                    for sel in s.dist.selectors() {
                        match sel.type_of(&known) {
                            Ok(Type::Bool) => {}
                            Ok(t) => errors.push(DefinitionError::Type {
                                var: var.clone(),
                                detail: format!("case selector must be boolean, found {t}"),
                            }),
                            Err(e) => errors.push(DefinitionError::Type {
                                var: var.clone(),
                                detail: e.to_string(),
                            }),
                        }
                    }
                }
                s.dist.value_type().unwrap_or(Type::Num)
            }
            Node::Var { expr, .. } => {
                if resolved {
                    match expr.type_of(&known) {
                        Ok(Type::Bool) => {}
                        Ok(found) => errors.push(DefinitionError::NonBoolean {
                            var: var.clone(),
                            found,
                        }),
                        Err(e) => errors.push(DefinitionError::Type {
                            var: var.clone(),
                            detail: e.to_string(),
                        }),
                    }
                }
                Type::Bool
            }
            Node::Let { expr, .. } => {
                if resolved {
                    match expr.type_of(&known) {
                        Ok(t) => t,
                        Err(e) => {
                            errors.push(DefinitionError::Type {
                                var: var.clone(),
                                detail: e.to_string(),
                            });
                            Type::Num
                        }
                    }
                } else {
                    Type::Num
                }
            }
        };
        types.push(ty);
    }

    for e in edges {
        let is_var = |n: &str| matches!(index.get(n).map(|&i| &nodes[i]), Some(Node::Var { .. }));
        let reason = if e.cause == e.effect {
            Some("cause and effect must differ".to_string())
        } else if !is_var(&e.cause) {
            Some(format!("cause `{}` is not a declared endogenous variable", e.cause))
        } else if !is_var(&e.effect) {
            Some(format!("effect `{}` is not a declared endogenous variable", e.effect))
        } else {
            None
        };
        if let Some(reason) = reason {
            errors.push(DefinitionError::Edge {
                edge: e.to_string(),
                reason,
            });
        }
    }
    for (i, e) in edges.iter().enumerate() {
        if edges[..i].contains(e) {
            errors.push(DefinitionError::Edge {
                edge: e.to_string(),
                reason: "declared more than once".into(),
            });
        }
    }
    (index, types, errors)
}
