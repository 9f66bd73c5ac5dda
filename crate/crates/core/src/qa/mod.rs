//! Question rendering, answer extraction (h) and answer generation (H).

mod extract;
mod templates;

use serde::{Deserialize, Serialize};

use crate::answerer::{ChatClient, ClientError, Message, Sampling};
use crate::dsl::World;
use crate::scm::{
    evaluate, evaluate_under, potential_outcomes, Context, Edge, Intervention, ScmError,
    UnitOutcome, Value,
};

pub use extract::{extract_remote, extract_rule, parse_verdict, BinaryAnswer, Polarity, Source};
pub use templates::{AnswerClauses, InterventionKey, Part, Template, TemplateSet};

/// Extractor prompt, version 1. Slots: `{q}` question, `{a}` answer.
pub const EXTRACTOR_PROMPT: &str = include_str!("prompts/extractor.v1.txt");
/// Generator prompt, version 1. Slots: `{q}` question, `{w}` initial word.
pub const GENERATOR_PROMPT: &str = include_str!("prompts/generator.v1.txt");

/// Fills `{name}` slots of a prompt in one pass, so substituted text is
/// never rescanned.
pub fn fill_prompt(prompt: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(prompt.len());
    let mut rest = prompt;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        for (name, value) in slots {
            if let Some(tail) = after.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QaError {
    #[error("no factual question template for `{0}`")]
    MissingFactual(String),
    #[error("no interventional template for do({0}={1}) about `{2}`")]
    MissingInterventional(String, bool, String),
    #[error("no answer clauses for `{0}`")]
    MissingClauses(String),
    #[error("unresolved placeholder `{{{0}}}`")]
    Unresolved(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error("extraction: {0}")]
    Extraction(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("generated answer {text:?} does not extract to {expected}")]
    Generation { text: String, expected: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Factual,
    Interventional,
}

/// Ground truth attached to questions rendered by this toolkit. Simulated
/// answerers read it instead of the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub world: String,
    pub context_id: u64,
    /// Correct yes/no answer to the question.
    pub truth: bool,
    /// Unit for the edge under study, when the question belongs to one.
    pub unit: Option<UnitOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedQuestion {
    pub kind: QuestionKind,
    /// Context narrative followed by the question.
    pub text: String,
    /// The question sentence alone, as asked in a follow-up turn.
    pub question: String,
    pub context_id: u64,
    pub cause: Option<String>,
    pub forced: Option<bool>,
    pub effect: String,
    /// Clauses for "Yes, ..." and "No, ..." template answers.
    pub clauses: (String, String),
    pub provenance: Option<Provenance>,
}

fn slot_value(world: &World, ctx: &Context, factual: &[(String, Value)], name: &str) -> Option<String> {
    if let Some(spec) = world.model.exogenous().find(|s| s.name == name) {
        return ctx.get(name).map(|v| v.render(spec.dist.decimals()));
    }
    factual
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v.render(None))
}

/// Slot values: exogenous draws plus phrases evaluated on the factual world.
fn phrase_values(world: &World, ctx: &Context) -> Result<Vec<(String, Value)>, QaError> {
    let val = evaluate(&world.model, ctx)?;
    world
        .templates
        .phrases
        .iter()
        .map(|(name, expr)| {
            let v = expr
                .eval(&|n: &str| val.get(n).cloned())
                .map_err(|source| ScmError::Eval {
                    var: name.clone(),
                    source,
                })?;
            Ok((name.clone(), v))
        })
        .collect()
}

fn fill(world: &World, ctx: &Context, phrases: &[(String, Value)], t: &Template) -> Result<String, QaError> {
    t.fill(|s| slot_value(world, ctx, phrases, s))
        .map_err(QaError::Unresolved)
}

fn clauses(world: &World, effect: &str, counterfactual: bool) -> Result<(String, String), QaError> {
    let c = world
        .templates
        .answers
        .get(effect)
        .ok_or_else(|| QaError::MissingClauses(effect.into()))?;
    Ok(if counterfactual {
        (c.counterfactual_yes.clone(), c.counterfactual_no.clone())
    } else {
        (c.factual_yes.clone(), c.factual_no.clone())
    })
}

fn narrative(world: &World, ctx: &Context, phrases: &[(String, Value)]) -> Result<String, QaError> {
    fill(world, ctx, phrases, &world.templates.context)
}

/// Context narrative plus the factual question about `effect`.
pub fn render_factual(world: &World, ctx: &Context, effect: &str) -> Result<RenderedQuestion, QaError> {
    let t = world
        .templates
        .factual
        .get(effect)
        .ok_or_else(|| QaError::MissingFactual(effect.into()))?;
    let phrases = phrase_values(world, ctx)?;
    let question = fill(world, ctx, &phrases, t)?;
    let text = format!("{} {}", narrative(world, ctx, &phrases)?, question);
    let truth = evaluate(&world.model, ctx)?
        .bool(effect)
        .ok_or_else(|| ScmError::NotEndogenous(effect.into()))?;
    Ok(RenderedQuestion {
        kind: QuestionKind::Factual,
        text,
        question,
        context_id: ctx.id,
        cause: None,
        forced: None,
        effect: effect.into(),
        clauses: clauses(world, effect, false)?,
        provenance: Some(Provenance {
            world: world.name.clone(),
            context_id: ctx.id,
            truth,
            unit: None,
        }),
    })
}

/// Context narrative plus the question about `effect` under do(cause=forced).
pub fn render_interventional(
    world: &World,
    ctx: &Context,
    cause: &str,
    forced: bool,
    effect: &str,
) -> Result<RenderedQuestion, QaError> {
    let key = (cause.to_string(), forced, effect.to_string());
    let t = world
        .templates
        .interventional
        .get(&key)
        .ok_or_else(|| QaError::MissingInterventional(key.0.clone(), forced, key.2.clone()))?;
    let phrases = phrase_values(world, ctx)?;
    let question = fill(world, ctx, &phrases, t)?;
    let text = format!("{} {}", narrative(world, ctx, &phrases)?, question);
    let truth = evaluate_under(&world.model, ctx, &[Intervention::new(cause, forced)])?
        .bool(effect)
        .ok_or_else(|| ScmError::NotEndogenous(effect.into()))?;
    Ok(RenderedQuestion {
        kind: QuestionKind::Interventional,
        text,
        question,
        context_id: ctx.id,
        cause: Some(cause.into()),
        forced: Some(forced),
        effect: effect.into(),
        clauses: clauses(world, effect, true)?,
        provenance: Some(Provenance {
            world: world.name.clone(),
            context_id: ctx.id,
            truth,
            unit: None,
        }),
    })
}

/// A unit with its factual question and the counterfactual question
/// do(cause = !X). Both questions carry the unit in their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitQuestions {
    pub unit: UnitOutcome,
    pub factual: RenderedQuestion,
    pub counterfactual: RenderedQuestion,
}

pub fn render_unit(world: &World, ctx: &Context, edge: &Edge) -> Result<UnitQuestions, QaError> {
    let unit = potential_outcomes(&world.model, ctx, edge)?;
    let mut factual = render_factual(world, ctx, &edge.effect)?;
    let mut counterfactual = render_interventional(world, ctx, &edge.cause, !unit.x, &edge.effect)?;
    for q in [&mut factual, &mut counterfactual] {
        if let Some(p) = &mut q.provenance {
            p.unit = Some(unit.clone());
        }
    }
    Ok(UnitQuestions {
        unit,
        factual,
        counterfactual,
    })
}

/// How answers are synthesized from a known truth value.
#[derive(Clone, Copy)]
pub enum Generator<'a> {
    Template,
    Remote(&'a dyn ChatClient, Sampling),
}

pub fn template_answer(q: &RenderedQuestion, truth: bool) -> String {
    if truth {
        format!("Yes, {}.", q.clauses.0)
    } else {
        format!("No, {}.", q.clauses.1)
    }
}

/// Generator H. Template mode is deterministic; remote mode asks the model
/// to complete an answer starting with Yes/No and rejects completions that
/// do not extract back to `truth`.
pub fn generate_answer(q: &RenderedQuestion, truth: bool, mode: Generator<'_>) -> Result<String, QaError> {
    let text = match mode {
        Generator::Template => template_answer(q, truth),
        Generator::Remote(client, sampling) => {
            let word = if truth { "Yes" } else { "No" };
            let prompt = fill_prompt(GENERATOR_PROMPT, &[("q", &q.text), ("w", word)]);
            client.complete(&[Message::user(prompt)], &sampling)?.trim().to_string()
        }
    };
    match extract_rule(&text) {
        Some(a) if a.value.as_bool() == truth => Ok(text),
        _ => Err(QaError::Generation {
            text,
            expected: truth,
        }),
    }
}
