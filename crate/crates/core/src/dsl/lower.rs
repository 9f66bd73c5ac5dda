use std::collections::{BTreeMap, HashMap};

use crate::mode::GeneralizationMode;
use crate::qa::{AnswerClauses, Template, TemplateSet};
use crate::scm::{
    CausalModel, DefinitionError, Dist, Edge, ExogenousSpec, Node, Type, Value,
    DEFAULT_DECIMALS,
};

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticKind, SourceSpan};

/// One experiment plan block as declared in a world file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanSpec {
    pub mode: GeneralizationMode,
    pub train: Vec<Edge>,
    pub test: Edge,
}

/// A lowered world: model, question templates and declared plans.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub name: String,
    pub model: CausalModel,
    pub templates: TemplateSet,
    pub plans: Vec<PlanSpec>,
}

fn diag(kind: DiagnosticKind, span: SourceSpan, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(kind, span, msg)
}

#[derive(Clone, Copy, PartialEq)]
enum NameKind {
    Exo,
    Var,
    Let,
    Phrase,
}

struct Names {
    /// Name → (kind, declaration position among model nodes or phrases).
    map: HashMap<String, (NameKind, usize)>,
}

impl Names {
    fn kind(&self, n: &str) -> Option<NameKind> {
        self.map.get(n).map(|(k, _)| *k)
    }

    fn is_var(&self, n: &str) -> bool {
        self.kind(n) == Some(NameKind::Var)
    }
}

fn edge_of(e: &EdgeNode) -> Edge {
    Edge::new(&e.cause.value, &e.effect.value)
}

fn edge_span(e: &EdgeNode) -> SourceSpan {
    let (c, f) = (e.cause.span, e.effect.span);
    if c.line == f.line {
        SourceSpan::new(c.line, c.column, f.column + f.length - c.column)
    } else {
        c
    }
}

fn dist_selectors<'a>(d: &'a DistNode, out: &mut Vec<&'a ExprNode>) {
    if let DistNode::Case(arms) = d {
        for (sel, sub) in arms {
            out.push(sel);
            dist_selectors(sub, out);
        }
    }
}

fn dist_params<'a>(d: &'a DistNode, out: &mut Vec<&'a ExprNode>) {
    match d {
        DistNode::UniformInt(a, b) => out.extend([a, b]),
        DistNode::Normal { mu, sigma, .. } => out.extend([mu, sigma]),
        DistNode::Bernoulli(p) => out.push(p),
        DistNode::Categorical(items) => out.extend(items.iter().map(|(_, w)| w)),
        DistNode::Case(arms) => {
            for (_, sub) in arms {
                dist_params(sub, out);
            }
        }
    }
}

/// Name resolution: declarations, order, edges, template slots and plan
/// edges. Run as part of parsing.
pub(crate) fn check_references(file: &WorldFile) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let names = collect_names(file, &mut diags);
    let mut node_pos = 0usize;
    let mut edges: Vec<Edge> = Vec::new();
    for d in &file.decls {
        match &d.kind {
            DeclKind::Exo { name, dist } => {
                let mut sels = Vec::new();
                dist_selectors(dist, &mut sels);
                for s in sels {
                    check_expr_refs(&names, &name.value, node_pos, s, false, &mut diags);
                }
                let mut params = Vec::new();
                dist_params(dist, &mut params);
                for p in params {
                    if let Some(r) = p.refs.first() {
                        diags.push(diag(
                            DiagnosticKind::Reference,
                            r.span,
                            format!(
                                "distribution parameters of `{}` must be constants, found `{}`",
                                name.value, r.value
                            ),
                        ));
                    }
                }
                node_pos += 1;
            }
            DeclKind::Var { name, expr } | DeclKind::Let { name, expr } => {
                check_expr_refs(&names, &name.value, node_pos, expr, false, &mut diags);
                node_pos += 1;
            }
            DeclKind::Phrase { name, expr } => {
                check_expr_refs(&names, &name.value, usize::MAX, expr, true, &mut diags);
            }
            DeclKind::Edge(e) => {
                for id in [&e.cause, &e.effect] {
                    if !names.is_var(&id.value) {
                        diags.push(diag(
                            DiagnosticKind::Reference,
                            id.span,
                            format!("`{}` is not a declared endogenous variable", id.value),
                        ));
                    }
                }
                edges.push(edge_of(e));
            }
            _ => {}
        }
    }
    for d in &file.decls {
        match &d.kind {
            DeclKind::Context(t) => check_slots(&names, t, &mut diags),
            DeclKind::Ask { effect, text } => {
                check_var(&names, effect, &mut diags);
                check_slots(&names, text, &mut diags);
            }
            DeclKind::AskIf {
                cause,
                effect,
                text,
                ..
            } => {
                check_var(&names, cause, &mut diags);
                check_var(&names, effect, &mut diags);
                check_slots(&names, text, &mut diags);
                let e = Edge::new(&cause.value, &effect.value);
                if names.is_var(&cause.value) && names.is_var(&effect.value) && !edges.contains(&e)
                {
                    diags.push(diag(
                        DiagnosticKind::Reference,
                        cause.span,
                        format!("interventional template refers to undeclared edge {e}"),
                    ));
                }
            }
            DeclKind::Answer { effect, .. } => check_var(&names, effect, &mut diags),
            DeclKind::Plan { train, test, .. } => {
                for e in train.iter().chain(std::iter::once(test)) {
                    if !edges.contains(&edge_of(e)) {
                        diags.push(diag(
                            DiagnosticKind::Reference,
                            edge_span(e),
                            format!("plan refers to undeclared edge {}", edge_of(e)),
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    diags
}

fn collect_names(file: &WorldFile, diags: &mut Vec<Diagnostic>) -> Names {
    let mut map = HashMap::new();
    let (mut node_pos, mut phrase_pos) = (0usize, 0usize);
    for d in &file.decls {
        let (name, kind) = match &d.kind {
            DeclKind::Exo { name, .. } => (name, NameKind::Exo),
            DeclKind::Var { name, .. } => (name, NameKind::Var),
            DeclKind::Let { name, .. } => (name, NameKind::Let),
            DeclKind::Phrase { name, .. } => (name, NameKind::Phrase),
            _ => continue,
        };
        let pos = if kind == NameKind::Phrase {
            phrase_pos += 1;
            phrase_pos - 1
        } else {
            node_pos += 1;
            node_pos - 1
        };
        if map.contains_key(&name.value) {
            diags.push(diag(
                DiagnosticKind::Reference,
                name.span,
                format!("`{}` is declared more than once", name.value),
            ));
        } else {
            map.insert(name.value.clone(), (kind, pos));
        }
    }
    Names { map }
}

fn check_expr_refs(
    names: &Names,
    owner: &str,
    owner_pos: usize,
    e: &ExprNode,
    in_phrase: bool,
    diags: &mut Vec<Diagnostic>,
) {
    for r in &e.refs {
        match names.map.get(&r.value) {
            None => diags.push(diag(
                DiagnosticKind::Reference,
                r.span,
                format!("`{owner}` references undeclared variable `{}`", r.value),
            )),
            Some((NameKind::Phrase, _)) => diags.push(diag(
                DiagnosticKind::Reference,
                r.span,
                format!("`{}` is a phrase slot and cannot appear in expressions", r.value),
            )),
            Some((_, pos)) if !in_phrase && *pos >= owner_pos => diags.push(diag(
                DiagnosticKind::Reference,
                r.span,
                format!(
                    "`{owner}` references `{}`, which is declared later (declarations must be in causal order)",
                    r.value
                ),
            )),
            _ => {}
        }
    }
}

fn check_var(names: &Names, id: &Ident, diags: &mut Vec<Diagnostic>) {
    if !names.is_var(&id.value) {
        diags.push(diag(
            DiagnosticKind::Reference,
            id.span,
            format!("`{}` is not a declared endogenous variable", id.value),
        ));
    }
}

fn check_slots(names: &Names, t: &TemplateNode, diags: &mut Vec<Diagnostic>) {
    for s in &t.slots {
        match names.kind(&s.value) {
            Some(NameKind::Exo) | Some(NameKind::Phrase) => {}
            _ => diags.push(diag(
                DiagnosticKind::Reference,
                s.span,
                format!(
                    "placeholder `{{{}}}` does not name an exogenous variable or phrase",
                    s.value
                ),
            )),
        }
    }
}

fn const_value(e: &ExprNode) -> Result<Value, Diagnostic> {
    e.expr
        .eval(&|_| None)
        .map_err(|err| diag(DiagnosticKind::Type, e.span, err.to_string()))
}

fn const_num(e: &ExprNode) -> Result<f64, Diagnostic> {
    let v = const_value(e)?;
    v.as_f64().ok_or_else(|| {
        diag(
            DiagnosticKind::Type,
            e.span,
            format!("expected a number, found {}", v.ty()),
        )
    })
}

fn const_int(e: &ExprNode) -> Result<i64, Diagnostic> {
    match const_value(e)? {
        Value::Int(i) => Ok(i),
        v => Err(diag(
            DiagnosticKind::Type,
            e.span,
            format!("expected an integer, found {}", v.render(None)),
        )),
    }
}

fn lower_dist(
    d: &DistNode,
    env: &dyn Fn(&str) -> Option<Type>,
    diags: &mut Vec<Diagnostic>,
) -> Option<Dist> {
    let mut ok = |r: Result<f64, Diagnostic>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            diags.push(e);
            None
        }
    };
    Some(match d {
        DistNode::UniformInt(lo, hi) => {
            let lo = match const_int(lo) {
                Ok(v) => Some(v),
                Err(e) => {
                    diags.push(e);
                    None
                }
            };
            let hi = match const_int(hi) {
                Ok(v) => Some(v),
                Err(e) => {
                    diags.push(e);
                    None
                }
            };
            Dist::UniformInt { lo: lo?, hi: hi? }
        }
        DistNode::Normal {
            mu,
            sigma,
            round,
            positive,
        } => {
            let mu = ok(const_num(mu));
            let sigma = ok(const_num(sigma));
            Dist::Normal {
                mu: mu?,
                sigma: sigma?,
                decimals: round.as_ref().map(|r| r.value).unwrap_or(DEFAULT_DECIMALS),
                positive: *positive,
            }
        }
        DistNode::Bernoulli(p) => Dist::Bernoulli {
            p: ok(const_num(p))?,
        },
        DistNode::Categorical(items) => {
            let mut out = Vec::new();
            for (label, w) in items {
                out.push((label.value.clone(), ok(const_num(w))?));
            }
            Dist::Categorical(out)
        }
        DistNode::Case(arms) => {
            let mut out = Vec::new();
            for (sel, sub) in arms {
                match sel.expr.type_of(env) {
                    Ok(Type::Bool) => {}
                    Ok(t) => diags.push(diag(
                        DiagnosticKind::Type,
                        sel.span,
                        format!("case selector must be boolean, found {t}"),
                    )),
                    Err(e) => diags.push(diag(DiagnosticKind::Type, sel.span, e.to_string())),
                }
                out.push((sel.expr.clone(), lower_dist(sub, env, diags)?));
            }
            Dist::Case(out)
        }
    })
}

/// Compiles a parsed world file: typing, distribution checks, template
/// completeness and model validation.
pub fn lower(file: &WorldFile) -> Result<World, Vec<Diagnostic>> {
    let mut diags = check_references(file);
    if !diags.is_empty() {
        return Err(diags);
    }

    let worlds: Vec<&Ident> = file
        .decls
        .iter()
        .filter_map(|d| match &d.kind {
            DeclKind::World(n) => Some(n),
            _ => None,
        })
        .collect();
    let name = match worlds.as_slice() {
        [] => {
            diags.push(diag(
                DiagnosticKind::Definition,
                SourceSpan::new(1, 1, 0),
                "missing `world` declaration",
            ));
            String::new()
        }
        [one] => one.value.clone(),
        [_, second, ..] => {
            diags.push(diag(
                DiagnosticKind::Definition,
                second.span,
                "more than one `world` declaration",
            ));
            String::new()
        }
    };

    // Nodes, with types resolved in declaration order.
    let mut nodes = Vec::new();
    let mut types: HashMap<String, Type> = HashMap::new();
    let mut decl_span: HashMap<String, SourceSpan> = HashMap::new();
    let mut phrases = Vec::new();
    for d in &file.decls {
        match &d.kind {
            DeclKind::Exo { name, dist } => {
                decl_span.insert(name.value.clone(), d.span);
                let env = |n: &str| types.get(n).copied();
                if let Some(dist) = lower_dist(dist, &env, &mut diags) {
                    let ty = dist.value_type();
                    match ty {
                        Some(t) => {
                            types.insert(name.value.clone(), t);
                        }
                        None => diags.push(diag(
                            DiagnosticKind::Type,
                            name.span,
                            format!("case arms of `{}` produce different value types", name.value),
                        )),
                    }
                    nodes.push(Node::Exo(ExogenousSpec {
                        name: name.value.clone(),
                        dist,
                    }));
                }
            }
            DeclKind::Var { name, expr } => {
                decl_span.insert(name.value.clone(), d.span);
                let env = |n: &str| types.get(n).copied();
                match expr.expr.type_of(&env) {
                    Ok(Type::Bool) => {}
                    Ok(t) => diags.push(diag(
                        DiagnosticKind::Type,
                        expr.span,
                        format!("equation for `{}` must be boolean, found {t}", name.value),
                    )),
                    Err(e) => diags.push(diag(DiagnosticKind::Type, expr.span, e.to_string())),
                }
                types.insert(name.value.clone(), Type::Bool);
                nodes.push(Node::Var {
                    name: name.value.clone(),
                    expr: expr.expr.clone(),
                });
            }
            DeclKind::Let { name, expr } => {
                decl_span.insert(name.value.clone(), d.span);
                let env = |n: &str| types.get(n).copied();
                let t = match expr.expr.type_of(&env) {
                    Ok(t) => t,
                    Err(e) => {
                        diags.push(diag(DiagnosticKind::Type, expr.span, e.to_string()));
                        Type::Num
                    }
                };
                types.insert(name.value.clone(), t);
                nodes.push(Node::Let {
                    name: name.value.clone(),
                    expr: expr.expr.clone(),
                });
            }
            DeclKind::Phrase { name, expr } => phrases.push((name, expr)),
            _ => {}
        }
    }
    for (name, expr) in &phrases {
        let env = |n: &str| types.get(n).copied();
        if let Err(e) = expr.expr.type_of(&env) {
            diags.push(diag(
                DiagnosticKind::Type,
                expr.span,
                format!("phrase `{}`: {e}", name.value),
            ));
        }
    }

    // Edges, templates, plans.
    let mut edges = Vec::new();
    let mut edge_spans = Vec::new();
    let mut templates = TemplateSet {
        phrases: phrases
            .iter()
            .map(|(n, e)| (n.value.clone(), e.expr.clone()))
            .collect(),
        ..TemplateSet::default()
    };
    let mut context: Option<Template> = None;
    let mut plans = Vec::new();
    for d in &file.decls {
        match &d.kind {
            DeclKind::Edge(e) => {
                edges.push(edge_of(e));
                edge_spans.push((edge_of(e), d.span));
            }
            DeclKind::Context(t) => {
                if context.is_some() {
                    diags.push(diag(
                        DiagnosticKind::Definition,
                        d.span,
                        "more than one `context` declaration",
                    ));
                }
                context = Some(t.template.clone());
            }
            DeclKind::Ask { effect, text } => {
                if templates
                    .factual
                    .insert(effect.value.clone(), text.template.clone())
                    .is_some()
                {
                    diags.push(diag(
                        DiagnosticKind::Definition,
                        d.span,
                        format!("duplicate `ask {}` template", effect.value),
                    ));
                }
            }
            DeclKind::AskIf {
                cause,
                forced,
                effect,
                text,
            } => {
                let key = (cause.value.clone(), *forced, effect.value.clone());
                if templates
                    .interventional
                    .insert(key, text.template.clone())
                    .is_some()
                {
                    diags.push(diag(
                        DiagnosticKind::Definition,
                        d.span,
                        format!(
                            "duplicate `ask_if {}={} about {}` template",
                            cause.value, forced, effect.value
                        ),
                    ));
                }
            }
            DeclKind::Answer { effect, clauses } => {
                let [a, b, c, e] = clauses;
                let ac = AnswerClauses {
                    factual_yes: a.value.clone(),
                    factual_no: b.value.clone(),
                    counterfactual_yes: c.value.clone(),
                    counterfactual_no: e.value.clone(),
                };
                if templates.answers.insert(effect.value.clone(), ac).is_some() {
                    diags.push(diag(
                        DiagnosticKind::Definition,
                        d.span,
                        format!("duplicate `answer {}` clauses", effect.value),
                    ));
                }
            }
            DeclKind::Plan { mode, train, test } => plans.push(PlanSpec {
                mode: mode.value,
                train: train.iter().map(edge_of).collect(),
                test: edge_of(test),
            }),
            _ => {}
        }
    }
    match context {
        Some(c) => templates.context = c,
        None => diags.push(diag(
            DiagnosticKind::Definition,
            SourceSpan::new(1, 1, 0),
            "missing `context` declaration",
        )),
    }
    let mut missing_answers: BTreeMap<&str, SourceSpan> = BTreeMap::new();
    for (e, span) in &edge_spans {
        if !templates.factual.contains_key(&e.effect) {
            diags.push(diag(
                DiagnosticKind::Definition,
                *span,
                format!("edge {e} has no `ask {}` template", e.effect),
            ));
        }
        for forced in [true, false] {
            let key = (e.cause.clone(), forced, e.effect.clone());
            if !templates.interventional.contains_key(&key) {
                diags.push(diag(
                    DiagnosticKind::Definition,
                    *span,
                    format!(
                        "edge {e} has no `ask_if {}={forced} about {}` template",
                        e.cause, e.effect
                    ),
                ));
            }
        }
        if !templates.answers.contains_key(&e.effect) {
            missing_answers.entry(&e.effect).or_insert(*span);
        }
    }
    for (effect, span) in missing_answers {
        diags.push(diag(
            DiagnosticKind::Definition,
            span,
            format!("effect `{effect}` has no `answer` clauses"),
        ));
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let model = CausalModel::new(name.clone(), nodes, edges).map_err(|errs| {
        errs.into_iter()
            .map(|e| {
                let span = match &e {
                    DefinitionError::Duplicate { name }
                    | DefinitionError::Order { var: name, .. }
                    | DefinitionError::Undeclared { var: name, .. }
                    | DefinitionError::Distribution { var: name, .. }
                    | DefinitionError::Type { var: name, .. }
                    | DefinitionError::NonBoolean { var: name, .. } => decl_span.get(name).copied(),
                    DefinitionError::Edge { edge, .. } => edge_spans
                        .iter()
                        .find(|(e, _)| e.to_string() == *edge)
                        .map(|(_, s)| *s),
                };
                diag(
                    DiagnosticKind::Definition,
                    span.unwrap_or_default(),
                    e.to_string(),
                )
            })
            .collect::<Vec<_>>()
    })?;
    Ok(World {
        name,
        model,
        templates,
        plans,
    })
}
