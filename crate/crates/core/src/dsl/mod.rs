//! The world-definition language: lexing, parsing, lowering to a model and
//! templates, and canonical rendering.

mod ast;
mod diag;
mod lexer;
mod lower;
mod parser;
mod render;

pub use ast::{Decl, DeclKind, DistNode, EdgeNode, ExprNode, Ident, Spanned, TemplateNode, WorldFile};
pub use diag::{format_diagnostics, Diagnostic, DiagnosticKind, SourceSpan};
pub use lower::{lower, PlanSpec, World};
pub use render::render;

/// Parses world-file text and resolves names. Never panics; any input
/// yields either a file or at least one diagnostic.
pub fn parse(src: &str) -> Result<WorldFile, Vec<Diagnostic>> {
    let file = parser::parse_syntax(src)?;
    let diags = lower::check_references(&file);
    if diags.is_empty() {
        Ok(file)
    } else {
        Err(diags)
    }
}

/// Parses and lowers in one step.
pub fn compile(src: &str) -> Result<World, Vec<Diagnostic>> {
    lower(&parse(src)?)
}
