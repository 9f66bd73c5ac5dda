use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::expr::{Expr, ExprError};
use super::model::{CausalModel, Dist, Edge, Node};
use super::value::Value;
use crate::rng::{self, Stream};

/// Resampling budget for positive-truncated normals.
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScmError {
    #[error("evaluating `{var}`: {source}")]
    Eval { var: String, source: ExprError },
    #[error("no case arm of `{var}` matches the drawn values")]
    UnresolvedCase { var: String },
    #[error("`{var}`: no positive draw after {MAX_RESAMPLES} attempts")]
    Truncation { var: String },
    #[error("`{0}` is not a boolean endogenous variable")]
    NotEndogenous(String),
    #[error("`{0}` is intervened on more than once")]
    DuplicateIntervention(String),
    #[error("edge {0} is not declared by the model")]
    UndeclaredEdge(Edge),
    #[error("context does not match the model: {0}")]
    ContextMismatch(String),
}

/// One realization of every exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub id: u64,
    pub values: BTreeMap<String, Value>,
    /// Master seed and draw index this context came from, when sampled.
    pub seed: Option<(u64, u64)>,
}

impl Context {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// Builds a context by hand, e.g. for exhaustive enumeration.
    pub fn from_values<I, S>(id: u64, values: I) -> Self
    where
        I: IntoIterator<Item = (S, Value)>,
        S: Into<String>,
    {
        Self {
            id,
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Intervention<'a> {
    pub target: &'a str,
    pub forced: bool,
}

impl<'a> Intervention<'a> {
    pub fn new(target: &'a str, forced: bool) -> Self {
        Self { target, forced }
    }
}

/// Values of every node of a model for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation {
    names: Vec<String>,
    slots: Vec<Value>,
}

impl Valuation {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.slots[i])
    }

    pub fn bool(&self, name: &str) -> Option<bool> {
        self.get(name).and_then(Value::as_bool)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.names.iter().map(String::as_str).zip(self.slots.iter())
    }

    /// Boolean endogenous values only.
    pub fn endogenous(&self, model: &CausalModel) -> BTreeMap<String, bool> {
        model
            .endogenous()
            .filter_map(|(n, _)| self.bool(n).map(|b| (n.to_string(), b)))
            .collect()
    }
}

/// Ground truth for one context and one cause→effect edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub context_id: u64,
    pub cause: String,
    pub effect: String,
    /// Factual cause value.
    pub x: bool,
    /// Factual effect value.
    pub y: bool,
    /// Effect under do(cause = !x).
    pub y_cf: bool,
}

fn eval_in(
    model: &CausalModel,
    slots: &[Option<Value>],
    var: &str,
    expr: &Expr,
) -> Result<Value, ScmError> {
    let env = |name: &str| -> Option<Value> {
        model
            .index_of(name)
            .and_then(|i| slots.get(i).cloned().flatten())
    };
    expr.eval(&env).map_err(|source| ScmError::Eval {
        var: var.to_string(),
        source,
    })
}

fn draw(
    model: &CausalModel,
    slots: &[Option<Value>],
    var: &str,
    dist: &Dist,
    stream: &mut Stream,
) -> Result<Value, ScmError> {
    Ok(match dist {
        Dist::UniformInt { lo, hi } => Value::Int(stream.uniform_int(*lo, *hi)),
        Dist::Bernoulli { p } => Value::Bool(stream.bernoulli(*p)),
        Dist::Normal {
            mu,
            sigma,
            decimals,
            positive,
        } => {
            let scale = 10f64.powi(*decimals as i32);
            let mut attempts = 0;
            loop {
                let v = (stream.normal(*mu, *sigma) * scale).round() / scale;
                if !*positive || v > 0.0 {
                    break Value::Real(v);
                }
                attempts += 1;
                if attempts >= MAX_RESAMPLES {
                    return Err(ScmError::Truncation { var: var.into() });
                }
            }
        }
        Dist::Categorical(items) => {
            let u = stream.uniform53();
            let mut acc = 0.0;
            let mut chosen = &items[items.len() - 1].0;
            for (label, w) in items {
                acc += w;
                if u < acc {
                    chosen = label;
                    break;
                }
            }
            Value::Label(chosen.clone())
        }
        Dist::Case(arms) => {
            for (sel, sub) in arms {
                if eval_in(model, slots, var, sel)?.as_bool() == Some(true) {
                    return draw(model, slots, var, sub, stream);
                }
            }
            return Err(ScmError::UnresolvedCase { var: var.into() });
        }
    })
}

/// Draws a context from `stream`. Exogenous variables are drawn in
/// declaration order; endogenous values are evaluated along the way so that
/// case distributions can condition on them.
pub fn sample_context_with(
    model: &CausalModel,
    stream: &mut Stream,
    id: u64,
) -> Result<Context, ScmError> {
    let mut slots: Vec<Option<Value>> = vec![None; model.nodes().len()];
    let mut values = BTreeMap::new();
    for (i, node) in model.nodes().iter().enumerate() {
        let v = match node {
            Node::Exo(spec) => {
                let v = draw(model, &slots, &spec.name, &spec.dist, stream)?;
                values.insert(spec.name.clone(), v.clone());
                v
            }
            Node::Var { name, expr } | Node::Let { name, expr } => {
                eval_in(model, &slots, name, expr)?
            }
        };
        slots[i] = Some(v);
    }
    Ok(Context {
        id,
        values,
        seed: None,
    })
}

/// Key of the context stream for a master seed.
pub fn context_key(seed: u64) -> u64 {
    rng::derive(seed, "contexts")
}

/// The `index`-th context of the run seeded with `seed`. Each index owns
/// its own stream, so contexts can be drawn in any order or in parallel.
pub fn sample_context(model: &CausalModel, seed: u64, index: u64) -> Result<Context, ScmError> {
    let mut stream = Stream::new(context_key(seed), index);
    let mut ctx = sample_context_with(model, &mut stream, index)?;
    ctx.seed = Some((seed, index));
    Ok(ctx)
}

pub fn sample_contexts(
    model: &CausalModel,
    seed: u64,
    first: u64,
    n: usize,
) -> Result<Vec<Context>, ScmError> {
    (first..first + n as u64)
        .map(|i| sample_context(model, seed, i))
        .collect()
}

fn check_context(model: &CausalModel, ctx: &Context) -> Result<(), ScmError> {
    let mut count = 0;
    for spec in model.exogenous() {
        count += 1;
        let v = ctx
            .get(&spec.name)
            .ok_or_else(|| ScmError::ContextMismatch(format!("missing `{}`", spec.name)))?;
        if Some(v.ty()) != spec.dist.value_type() {
            return Err(ScmError::ContextMismatch(format!(
                "`{}` holds a {} value",
                spec.name,
                v.ty()
            )));
        }
    }
    if ctx.values.len() != count {
        let extra = ctx
            .values
            .keys()
            .find(|k| !model.is_exogenous(k))
            .cloned()
            .unwrap_or_default();
        return Err(ScmError::ContextMismatch(format!("unexpected `{extra}`")));
    }
    Ok(())
}

pub fn evaluate(model: &CausalModel, ctx: &Context) -> Result<Valuation, ScmError> {
    evaluate_under(model, ctx, &[])
}

/// Evaluates under do-interventions. Intervened variables take their forced
/// values and their equations are skipped; exogenous values are unchanged.
pub fn evaluate_under(
    model: &CausalModel,
    ctx: &Context,
    interventions: &[Intervention<'_>],
) -> Result<Valuation, ScmError> {
    for (i, iv) in interventions.iter().enumerate() {
        if !model.is_endogenous(iv.target) {
            return Err(ScmError::NotEndogenous(iv.target.to_string()));
        }
        if interventions[..i].iter().any(|o| o.target == iv.target) {
            return Err(ScmError::DuplicateIntervention(iv.target.to_string()));
        }
    }
    check_context(model, ctx)?;
    let mut slots: Vec<Option<Value>> = vec![None; model.nodes().len()];
    for (i, node) in model.nodes().iter().enumerate() {
        let v = match node {
            Node::Exo(spec) => ctx.values[&spec.name].clone(),
            Node::Var { name, expr } => {
                match interventions.iter().find(|iv| iv.target == name) {
                    Some(iv) => Value::Bool(iv.forced),
                    None => eval_in(model, &slots, name, expr)?,
                }
            }
            Node::Let { name, expr } => eval_in(model, &slots, name, expr)?,
        };
        slots[i] = Some(v);
    }
    Ok(Valuation {
        names: model.nodes().iter().map(|n| n.name().to_string()).collect(),
        slots: slots.into_iter().map(|s| s.expect("every slot filled")).collect(),
    })
}

/// Factual cause and effect plus the effect under do(cause = !X).
pub fn potential_outcomes(
    model: &CausalModel,
    ctx: &Context,
    edge: &Edge,
) -> Result<UnitOutcome, ScmError> {
    if !model.has_edge(edge) {
        return Err(ScmError::UndeclaredEdge(edge.clone()));
    }
    let factual = evaluate(model, ctx)?;
    let x = factual.bool(&edge.cause).expect("cause is boolean");
    let y = factual.bool(&edge.effect).expect("effect is boolean");
    let cf = evaluate_under(model, ctx, &[Intervention::new(&edge.cause, !x)])?;
    Ok(UnitOutcome {
        context_id: ctx.id,
        cause: edge.cause.clone(),
        effect: edge.effect.clone(),
        x,
        y,
        y_cf: cf.bool(&edge.effect).expect("effect is boolean"),
    })
}
