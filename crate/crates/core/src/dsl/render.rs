use std::fmt::Write;

use crate::scm::quote;

use super::ast::*;

fn dist(d: &DistNode, out: &mut String) {
    match d {
        DistNode::UniformInt(lo, hi) => {
            let _ = write!(out, "uniform_int({}, {})", lo.expr, hi.expr);
        }
        DistNode::Normal {
            mu,
            sigma,
            round,
            positive,
        } => {
            let _ = write!(out, "normal({}, {})", mu.expr, sigma.expr);
            if let Some(r) = round {
                let _ = write!(out, " round {}", r.value);
            }
            if *positive {
                out.push_str(" positive");
            }
        }
        DistNode::Bernoulli(p) => {
            let _ = write!(out, "bernoulli({})", p.expr);
        }
        DistNode::Categorical(items) => {
            out.push_str("categorical(");
            for (i, (label, w)) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{}: {}", quote(&label.value), w.expr);
            }
            out.push(')');
        }
        DistNode::Case(arms) => {
            out.push_str("case {");
            for (i, (sel, sub)) in arms.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ";\n" });
                let _ = write!(out, "    {} => ", sel.expr);
                dist(sub, out);
            }
            out.push_str("\n}");
        }
    }
}

fn edge(e: &EdgeNode) -> String {
    format!("{} -> {}", e.cause.value, e.effect.value)
}

/// Canonical source text. `parse(render(f)) == f` for every parsed file.
pub fn render(file: &WorldFile) -> String {
    let mut out = String::new();
    let mut prev: Option<std::mem::Discriminant<DeclKind>> = None;
    for d in &file.decls {
        let disc = std::mem::discriminant(&d.kind);
        if prev.is_some() && prev != Some(disc) {
            out.push('\n');
        }
        prev = Some(disc);
        match &d.kind {
            DeclKind::World(n) => {
                let _ = write!(out, "world {}", n.value);
            }
            DeclKind::Exo { name, dist: dn } => {
                let _ = write!(out, "exo {} ~ ", name.value);
                dist(dn, &mut out);
            }
            DeclKind::Var { name, expr } => {
                let _ = write!(out, "var {} = {}", name.value, expr.expr);
            }
            DeclKind::Let { name, expr } => {
                let _ = write!(out, "let {} = {}", name.value, expr.expr);
            }
            DeclKind::Phrase { name, expr } => {
                let _ = write!(out, "phrase {} = {}", name.value, expr.expr);
            }
            DeclKind::Edge(e) => {
                let _ = write!(out, "edge {}", edge(e));
            }
            DeclKind::Context(t) => {
                let _ = write!(out, "context {}", quote(&t.template.to_string()));
            }
            DeclKind::Ask { effect, text } => {
                let _ = write!(
                    out,
                    "ask {} {}",
                    effect.value,
                    quote(&text.template.to_string())
                );
            }
            DeclKind::AskIf {
                cause,
                forced,
                effect,
                text,
            } => {
                let _ = write!(
                    out,
                    "ask_if {}={} about {} {}",
                    cause.value,
                    forced,
                    effect.value,
                    quote(&text.template.to_string())
                );
            }
            DeclKind::Answer { effect, clauses } => {
                let _ = write!(out, "answer {}", effect.value);
                for c in clauses {
                    let _ = write!(out, " {}", quote(&c.value));
                }
            }
            DeclKind::Plan { mode, train, test } => {
                let train: Vec<String> = train.iter().map(edge).collect();
                let _ = write!(
                    out,
                    "plan {} train {} test {}",
                    mode.value,
                    train.join(", "),
                    edge(test)
                );
            }
        }
        out.push('\n');
    }
    out
}
