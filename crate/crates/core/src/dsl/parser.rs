use crate::mode::GeneralizationMode;
use crate::qa::{Part, Template};
use crate::scm::{BinaryOp, Expr, UnaryOp};

use super::ast::*;
use super::diag::{Diagnostic, DiagnosticKind, SourceSpan};
use super::lexer::{lex, Tok, Token};

const EXPR_KEYWORDS: [&str; 8] = ["and", "or", "not", "if", "then", "else", "true", "false"];

type PResult<T> = Result<T, Diagnostic>;

fn syntax(span: SourceSpan, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(DiagnosticKind::Syntax, span, msg)
}

/// Parses world-file text. Returns every lexical and syntax diagnostic,
/// or a tree when there are none.
pub fn parse_syntax(src: &str) -> Result<WorldFile, Vec<Diagnostic>> {
    let (tokens, mut diags) = lex(src);
    let mut decls = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.tok == Tok::Newline {
            let stmt = &tokens[start..i];
            start = i + 1;
            if stmt.is_empty() {
                continue;
            }
            let mut p = Parser {
                toks: stmt,
                pos: 0,
                end: t.span,
                refs: Vec::new(),
            };
            match p.statement() {
                Ok(d) => decls.push(d),
                Err(d) => diags.push(d),
            }
        }
    }
    if diags.is_empty() {
        Ok(WorldFile { decls })
    } else {
        Err(diags)
    }
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    /// Span of the terminating newline, for end-of-statement errors.
    end: SourceSpan,
    refs: Vec<Ident>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn peek_span(&self) -> SourceSpan {
        self.peek().map(|t| t.span).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == sym)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s == w)
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of line".into(),
            Some(t) => match &t.tok {
                Tok::Ident(s) => format!("`{s}`"),
                Tok::Int(i) => format!("`{i}`"),
                Tok::Real(r) => format!("`{r}`"),
                Tok::Str(..) => "a string".into(),
                Tok::Sym(s) => format!("`{s}`"),
                Tok::Newline => "end of line".into(),
            },
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<SourceSpan> {
        if self.at_sym(sym) {
            Ok(self.bump().unwrap().span)
        } else {
            Err(syntax(
                self.peek_span(),
                format!("expected `{sym}`, found {}", self.describe()),
            ))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<SourceSpan> {
        if self.at_word(w) {
            Ok(self.bump().unwrap().span)
        } else {
            Err(syntax(
                self.peek_span(),
                format!("expected `{w}`, found {}", self.describe()),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<Ident> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) if !EXPR_KEYWORDS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok(Spanned::new(s.clone(), *span))
            }
            _ => Err(syntax(
                self.peek_span(),
                format!("expected {what}, found {}", self.describe()),
            )),
        }
    }

    fn string(&mut self, what: &str) -> PResult<(String, Vec<u32>, SourceSpan)> {
        match self.peek() {
            Some(Token {
                tok: Tok::Str(s, cols),
                span,
            }) => {
                self.pos += 1;
                Ok((s.clone(), cols.clone(), *span))
            }
            _ => Err(syntax(
                self.peek_span(),
                format!("expected {what}, found {}", self.describe()),
            )),
        }
    }

    fn finish(&self) -> PResult<()> {
        if self.pos < self.toks.len() {
            Err(syntax(
                self.peek_span(),
                format!("unexpected {} at end of declaration", self.describe()),
            ))
        } else {
            Ok(())
        }
    }

    fn statement(&mut self) -> PResult<Decl> {
        let first = self.peek().unwrap();
        let kw = match &first.tok {
            Tok::Ident(s) => s.clone(),
            _ => {
                return Err(syntax(
                    first.span,
                    format!("expected a declaration keyword, found {}", self.describe()),
                ))
            }
        };
        self.pos += 1;
        let kind = match kw.as_str() {
            "world" => DeclKind::World(self.world_name()?),
            "exo" => {
                let name = self.ident("a variable name")?;
                self.expect_sym("~")?;
                let dist = self.dist()?;
                DeclKind::Exo { name, dist }
            }
            "var" | "let" | "phrase" => {
                let name = self.ident("a variable name")?;
                self.expect_sym("=")?;
                let expr = self.expr_node()?;
                match kw.as_str() {
                    "var" => DeclKind::Var { name, expr },
                    "let" => DeclKind::Let { name, expr },
                    _ => DeclKind::Phrase { name, expr },
                }
            }
            "edge" => DeclKind::Edge(self.edge()?),
            "context" => DeclKind::Context(self.template()?),
            "ask" => {
                let effect = self.ident("an effect name")?;
                let text = self.template()?;
                DeclKind::Ask { effect, text }
            }
            "ask_if" => {
                let cause = self.ident("a cause name")?;
                self.expect_sym("=")?;
                let forced = if self.at_word("true") {
                    true
                } else if self.at_word("false") {
                    false
                } else {
                    return Err(syntax(
                        self.peek_span(),
                        format!("expected `true` or `false`, found {}", self.describe()),
                    ));
                };
                self.pos += 1;
                self.expect_word("about")?;
                let effect = self.ident("an effect name")?;
                let text = self.template()?;
                DeclKind::AskIf {
                    cause,
                    forced,
                    effect,
                    text,
                }
            }
            "answer" => {
                let effect = self.ident("an effect name")?;
                let take = |p: &mut Self| -> PResult<Spanned<String>> {
                    let (s, _, span) = p.string("an answer clause string")?;
                    Ok(Spanned::new(s, span))
                };
                let clauses = [take(self)?, take(self)?, take(self)?, take(self)?];
                DeclKind::Answer { effect, clauses }
            }
            "plan" => {
                let mode = self.mode()?;
                self.expect_word("train")?;
                let mut train = vec![self.edge()?];
                while self.at_sym(",") {
                    self.pos += 1;
                    train.push(self.edge()?);
                }
                self.expect_word("test")?;
                let test = self.edge()?;
                DeclKind::Plan { mode, train, test }
            }
            other => {
                return Err(syntax(
                    first.span,
                    format!("unknown declaration keyword `{other}`"),
                ))
            }
        };
        self.finish()?;
        let last = self.toks.last().unwrap().span;
        let span = if last.line == first.span.line {
            SourceSpan::new(
                first.span.line,
                first.span.column,
                last.column + last.length - first.span.column,
            )
        } else {
            SourceSpan::new(first.span.line, first.span.column, first.span.length)
        };
        Ok(Decl { kind, span })
    }

    /// World names and mode names may contain hyphens: `candy-bipartite`.
    fn dashed_name(&mut self, what: &str) -> PResult<Spanned<String>> {
        let head = self.ident(what)?;
        let mut text = head.value.clone();
        let mut span = head.span;
        while self.at_sym("-") {
            let dash = self.peek().unwrap().span;
            if dash.column != span.column + span.length {
                break;
            }
            self.pos += 1;
            let part = self.ident(what)?;
            text.push('-');
            text.push_str(&part.value);
            span.length = part.span.column + part.span.length - span.column;
        }
        Ok(Spanned::new(text, span))
    }

    fn world_name(&mut self) -> PResult<Ident> {
        self.dashed_name("a world name")
    }

    fn mode(&mut self) -> PResult<Spanned<GeneralizationMode>> {
        let name = self.dashed_name("a generalization mode")?;
        name.value
            .parse()
            .map(|m| Spanned::new(m, name.span))
            .map_err(|e: String| syntax(name.span, e))
    }

    fn edge(&mut self) -> PResult<EdgeNode> {
        let cause = self.ident("a cause name")?;
        self.expect_sym("->")?;
        let effect = self.ident("an effect name")?;
        Ok(EdgeNode { cause, effect })
    }

    fn template(&mut self) -> PResult<TemplateNode> {
        let (text, cols, span) = self.string("a quoted template")?;
        parse_template(&text, &cols, span)
    }

    fn dist(&mut self) -> PResult<DistNode> {
        let head = self.peek();
        let name = match head {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => s.clone(),
            _ => {
                return Err(syntax(
                    self.peek_span(),
                    format!("expected a distribution, found {}", self.describe()),
                ))
            }
        };
        let head_span = self.peek_span();
        self.pos += 1;
        match name.as_str() {
            "uniform_int" => {
                self.expect_sym("(")?;
                let lo = self.expr_node()?;
                self.expect_sym(",")?;
                let hi = self.expr_node()?;
                self.expect_sym(")")?;
                Ok(DistNode::UniformInt(lo, hi))
            }
            "normal" => {
                self.expect_sym("(")?;
                let mu = self.expr_node()?;
                self.expect_sym(",")?;
                let sigma = self.expr_node()?;
                self.expect_sym(")")?;
                let mut round = None;
                if self.at_word("round") {
                    self.pos += 1;
                    match self.bump() {
                        Some(Token {
                            tok: Tok::Int(k),
                            span,
                        }) if (0..=9).contains(k) => round = Some(Spanned::new(*k as u32, *span)),
                        _ => {
                            self.pos -= 1;
                            return Err(syntax(
                                self.peek_span(),
                                "expected a digit count between 0 and 9 after `round`",
                            ));
                        }
                    }
                }
                let positive = self.at_word("positive");
                if positive {
                    self.pos += 1;
                }
                Ok(DistNode::Normal {
                    mu,
                    sigma,
                    round,
                    positive,
                })
            }
            "bernoulli" => {
                self.expect_sym("(")?;
                let p = self.expr_node()?;
                self.expect_sym(")")?;
                Ok(DistNode::Bernoulli(p))
            }
            "categorical" => {
                self.expect_sym("(")?;
                let mut items = Vec::new();
                loop {
                    let (label, _, span) = self.string("a quoted label")?;
                    self.expect_sym(":")?;
                    let w = self.expr_node()?;
                    items.push((Spanned::new(label, span), w));
                    if self.at_sym(",") {
                        self.pos += 1;
                        continue;
                    }
                    break;
                }
                self.expect_sym(")")?;
                Ok(DistNode::Categorical(items))
            }
            "case" => {
                self.expect_sym("{")?;
                let mut arms = Vec::new();
                loop {
                    if self.at_sym("}") {
                        break;
                    }
                    let sel = self.expr_node()?;
                    self.expect_sym("=>")?;
                    let d = self.dist()?;
                    arms.push((sel, d));
                    if self.at_sym(";") {
                        self.pos += 1;
                        continue;
                    }
                    break;
                }
                self.expect_sym("}")?;
                if arms.is_empty() {
                    return Err(syntax(head_span, "case needs at least one arm"));
                }
                Ok(DistNode::Case(arms))
            }
            other => Err(syntax(
                head_span,
                format!(
                    "unknown distribution `{other}` (expected uniform_int, normal, bernoulli, categorical or case)"
                ),
            )),
        }
    }

    fn expr_node(&mut self) -> PResult<ExprNode> {
        let start = self.peek_span();
        let outer = std::mem::take(&mut self.refs);
        let result = self.expr();
        let refs = std::mem::replace(&mut self.refs, outer);
        let expr = result?;
        self.refs.extend(refs.iter().cloned());
        let end = self
            .toks
            .get(self.pos.saturating_sub(1))
            .map(|t| t.span)
            .unwrap_or(start);
        let length = if end.line == start.line {
            end.column + end.length - start.column
        } else {
            start.length
        };
        Ok(ExprNode {
            expr,
            span: SourceSpan::new(start.line, start.column, length),
            refs,
        })
    }

    fn expr(&mut self) -> PResult<Expr> {
        if self.at_word("if") {
            self.pos += 1;
            let c = self.operand_after("if", |p| p.expr())?;
            self.expect_word("then")?;
            let a = self.expr()?;
            self.expect_word("else")?;
            let b = self.expr()?;
            return Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)));
        }
        self.or()
    }

    /// Parses an operand, reporting a missing one at the operator.
    fn operand_after(
        &mut self,
        op: &str,
        f: impl FnOnce(&mut Self) -> PResult<Expr>,
    ) -> PResult<Expr> {
        let op_span = self.toks[self.pos - 1].span;
        if self.peek().is_none() || self.at_sym(")") || self.at_sym("}") {
            return Err(syntax(op_span, format!("expected an expression after `{op}`")));
        }
        f(self)
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.at_word("or") {
            self.pos += 1;
            let rhs = self.operand_after("or", |p| p.and())?;
            lhs = Expr::bin(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp()?;
        while self.at_word("and") {
            self.pos += 1;
            let rhs = self.operand_after("and", |p| p.cmp())?;
            lhs = Expr::bin(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn cmp_op(&self) -> Option<BinaryOp> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Sym(">=")) => Some(BinaryOp::Ge),
            Some(Tok::Sym("<=")) => Some(BinaryOp::Le),
            Some(Tok::Sym(">")) => Some(BinaryOp::Gt),
            Some(Tok::Sym("<")) => Some(BinaryOp::Lt),
            Some(Tok::Sym("==")) => Some(BinaryOp::Eq),
            Some(Tok::Sym("!=")) => Some(BinaryOp::Ne),
            _ => None,
        }
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let lhs = self.add()?;
        if let Some(op) = self.cmp_op() {
            self.pos += 1;
            let rhs = self.operand_after(op.symbol(), |p| p.add())?;
            if self.cmp_op().is_some() {
                return Err(syntax(
                    self.peek_span(),
                    "comparisons cannot be chained; use `and`",
                ));
            }
            return Ok(Expr::bin(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn add(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul()?;
        loop {
            let op = if self.at_sym("+") {
                BinaryOp::Add
            } else if self.at_sym("-") {
                BinaryOp::Sub
            } else {
                break;
            };
            self.pos += 1;
            let rhs = self.operand_after(op.symbol(), |p| p.mul())?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.at_sym("*") {
                BinaryOp::Mul
            } else if self.at_sym("/") {
                BinaryOp::Div
            } else {
                break;
            };
            self.pos += 1;
            let rhs = self.operand_after(op.symbol(), |p| p.unary())?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.at_word("not") {
            self.pos += 1;
            let e = self.operand_after("not", |p| p.unary())?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(e)));
        }
        if self.at_sym("-") {
            let dash = self.bump().unwrap().span;
            // `-` directly followed by a number literal is a negative literal.
            if let Some(t) = self.peek() {
                if t.span.line == dash.line && t.span.column == dash.column + 1 {
                    match t.tok {
                        Tok::Int(i) => {
                            self.pos += 1;
                            return Ok(Expr::Int(-i));
                        }
                        Tok::Real(r) => {
                            self.pos += 1;
                            return Ok(Expr::Real(-r));
                        }
                        _ => {}
                    }
                }
            }
            let e = self.operand_after("-", |p| p.unary())?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(t) = self.peek() else {
            return Err(syntax(self.end, "expected an expression, found end of line"));
        };
        let e = match &t.tok {
            Tok::Int(i) => Expr::Int(*i),
            Tok::Real(r) => Expr::Real(*r),
            Tok::Str(s, _) => Expr::Label(s.clone()),
            Tok::Ident(s) if s == "true" => Expr::Bool(true),
            Tok::Ident(s) if s == "false" => Expr::Bool(false),
            Tok::Ident(s) if s == "if" => {
                let inner = self.expr()?;
                return Ok(inner);
            }
            Tok::Ident(s) if !EXPR_KEYWORDS.contains(&s.as_str()) => {
                self.refs.push(Spanned::new(s.clone(), t.span));
                Expr::Var(s.clone())
            }
            Tok::Sym("(") => {
                self.pos += 1;
                if self.at_sym(")") {
                    return Err(syntax(self.peek_span(), "empty parentheses"));
                }
                let inner = self.expr()?;
                if !self.at_sym(")") {
                    return Err(syntax(
                        self.peek_span(),
                        format!("expected `)`, found {}", self.describe()),
                    ));
                }
                self.pos += 1;
                return Ok(inner);
            }
            _ => {
                return Err(syntax(
                    t.span,
                    format!("expected an expression, found {}", self.describe()),
                ))
            }
        };
        self.pos += 1;
        Ok(e)
    }
}

/// Splits a decoded string into text and `{slot}` parts.
pub(crate) fn parse_template(text: &str, cols: &[u32], span: SourceSpan) -> PResult<TemplateNode> {
    let chars: Vec<char> = text.chars().collect();
    let col_at = |i: usize| cols.get(i).copied().unwrap_or(span.column + 1);
    let at = |i: usize, len: u32| SourceSpan::new(span.line, col_at(i), len);
    let mut parts = Vec::new();
    let mut slots = Vec::new();
    let mut buf = String::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '{' => {
                let close = chars[i + 1..].iter().position(|c| *c == '}');
                let Some(rel) = close else {
                    return Err(Diagnostic::new(
                        DiagnosticKind::Lexical,
                        at(i, 1),
                        "unclosed `{` in template",
                    ));
                };
                let name: String = chars[i + 1..i + 1 + rel].iter().collect();
                let valid = !name.is_empty()
                    && name
                        .chars()
                        .next()
                        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid {
                    return Err(syntax(
                        at(i, rel as u32 + 2),
                        format!("`{{{name}}}` is not a valid placeholder"),
                    ));
                }
                if !buf.is_empty() {
                    parts.push(Part::Text(std::mem::take(&mut buf)));
                }
                slots.push(Spanned::new(name.clone(), at(i + 1, rel as u32)));
                parts.push(Part::Slot(name));
                i += rel + 2;
            }
            '}' => {
                return Err(Diagnostic::new(
                    DiagnosticKind::Lexical,
                    at(i, 1),
                    "unmatched `}` in template",
                ))
            }
            c => {
                buf.push(c);
                i += 1;
            }
        }
    }
    if !buf.is_empty() {
        parts.push(Part::Text(buf));
    }
    Ok(TemplateNode {
        template: Template { parts },
        span,
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr_of(src: &str) -> Expr {
        let f = parse_syntax(&format!("var X = {src}")).unwrap();
        match &f.decls[0].kind {
            DeclKind::Var { expr, .. } => expr.expr.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn precedence() {
        assert_eq!(expr_of("A and B or N >= 8").to_string(), "A and B or N >= 8");
        assert_eq!(
            expr_of("A and B or N >= 8"),
            Expr::bin(
                BinaryOp::Or,
                Expr::bin(BinaryOp::And, Expr::var("A"), Expr::var("B")),
                Expr::bin(BinaryOp::Ge, Expr::var("N"), Expr::Int(8)),
            )
        );
        assert_eq!(
            expr_of("a + b * 2 >= 3"),
            Expr::bin(
                BinaryOp::Ge,
                Expr::bin(
                    BinaryOp::Add,
                    Expr::var("a"),
                    Expr::bin(BinaryOp::Mul, Expr::var("b"), Expr::Int(2))
                ),
                Expr::Int(3)
            )
        );
        assert_eq!(
            expr_of("not A and B"),
            Expr::bin(BinaryOp::And, Expr::not(Expr::var("A")), Expr::var("B"))
        );
        assert_eq!(expr_of("-3"), Expr::Int(-3));
        assert_eq!(expr_of("- 3"), Expr::Unary(UnaryOp::Neg, Box::new(Expr::Int(3))));
    }

    #[test]
    fn dangling_or_points_at_operator() {
        let diags = parse_syntax("world w\nvar C = (A and B or").unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::Syntax);
        assert_eq!((diags[0].span.line, diags[0].span.column), (2, 18));
        assert!(diags[0].message.contains("`or`"), "{}", diags[0].message);
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_syntax("var X = 1 < a < 3").is_err());
    }

    #[test]
    fn errors_on_several_lines_are_all_reported() {
        let diags = parse_syntax("var = 1\nedge A B\nfrobnicate\n").unwrap_err();
        assert_eq!(diags.len(), 3);
        assert_eq!(
            diags.iter().map(|d| d.span.line).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn template_slots() {
        let f = parse_syntax("context \"Anna gets {N_A}, Bill {N_B}.\"").unwrap();
        let DeclKind::Context(t) = &f.decls[0].kind else { panic!() };
        assert_eq!(
            t.template.slots().collect::<Vec<_>>(),
            vec!["N_A", "N_B"]
        );
        assert_eq!(t.slots[0].span.column, 21);
        assert!(parse_syntax("context \"open {N_A\"").is_err());
        assert!(parse_syntax("context \"bad {1x}\"").is_err());
    }

    #[test]
    fn plan_and_dists() {
        let src = "plan deductive-cause train A->C, A->B test B->C\n\
                   exo T ~ case { K == \"a\" => normal(3.07, 2.22) round 1 positive; not (K == \"a\") => normal(1, 1) }\n\
                   exo H ~ categorical(\"x\": 0.5, \"y\": 0.5)\n\
                   exo N ~ bernoulli(86 / 251)";
        let f = parse_syntax(src).unwrap();
        assert_eq!(f.decls.len(), 4);
        let DeclKind::Plan { mode, train, .. } = &f.decls[0].kind else { panic!() };
        assert_eq!(mode.value, GeneralizationMode::DeductiveCauseBased);
        assert_eq!(train.len(), 2);
    }
}
