//! Syntax tree of a world file. Spans are carried for diagnostics but do
//! not take part in equality, so two parses of equivalent text compare
//! equal.

use crate::mode::GeneralizationMode;
use crate::qa::Template;
use crate::scm::Expr;

use super::diag::SourceSpan;

#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub value: T,
    pub span: SourceSpan,
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<T> Spanned<T> {
    pub fn new(value: T, span: SourceSpan) -> Self {
        Self { value, span }
    }
}

pub type Ident = Spanned<String>;

/// An expression plus the span of every variable reference in it.
#[derive(Debug, Clone)]
pub struct ExprNode {
    pub expr: Expr,
    pub span: SourceSpan,
    pub refs: Vec<Ident>,
}

impl PartialEq for ExprNode {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistNode {
    UniformInt(ExprNode, ExprNode),
    Normal {
        mu: ExprNode,
        sigma: ExprNode,
        round: Option<Spanned<u32>>,
        positive: bool,
    },
    Bernoulli(ExprNode),
    Categorical(Vec<(Spanned<String>, ExprNode)>),
    Case(Vec<(ExprNode, DistNode)>),
}

/// A template string with slot spans.
#[derive(Debug, Clone)]
pub struct TemplateNode {
    pub template: Template,
    pub span: SourceSpan,
    pub slots: Vec<Ident>,
}

impl PartialEq for TemplateNode {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeNode {
    pub cause: Ident,
    pub effect: Ident,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeclKind {
    World(Ident),
    Exo { name: Ident, dist: DistNode },
    Var { name: Ident, expr: ExprNode },
    Let { name: Ident, expr: ExprNode },
    Phrase { name: Ident, expr: ExprNode },
    Edge(EdgeNode),
    Context(TemplateNode),
    Ask { effect: Ident, text: TemplateNode },
    AskIf {
        cause: Ident,
        forced: bool,
        effect: Ident,
        text: TemplateNode,
    },
    Answer {
        effect: Ident,
        clauses: [Spanned<String>; 4],
    },
    Plan {
        mode: Spanned<GeneralizationMode>,
        train: Vec<EdgeNode>,
        test: EdgeNode,
    },
}

#[derive(Debug, Clone)]
pub struct Decl {
    pub kind: DeclKind,
    pub span: SourceSpan,
}

impl PartialEq for Decl {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// A parsed, structurally valid world file.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldFile {
    pub decls: Vec<Decl>,
}

impl WorldFile {
    pub fn name(&self) -> Option<&str> {
        self.decls.iter().find_map(|d| match &d.kind {
            DeclKind::World(n) => Some(n.value.as_str()),
            _ => None,
        })
    }
}
