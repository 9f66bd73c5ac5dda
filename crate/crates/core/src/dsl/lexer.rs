use super::diag::{Diagnostic, DiagnosticKind, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    /// Decoded text plus the source column of every decoded char.
    Str(String, Vec<u32>),
    Sym(&'static str),
    Newline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

const SYMBOLS: [&str; 22] = [
    "->", "=>", ">=", "<=", "==", "!=", "≥", "≤", "≠", "(", ")", "{", "}", ",", ";", ":", "~", "=",
    ">", "<", "+", "*",
];

/// Splits source text into tokens. Newlines inside `{}` are whitespace, so
/// a case block may span lines.
/// Lexical errors are collected and the offending char is skipped.
pub fn lex(src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut depth: i32 = 0;

    while i < chars.len() {
        let c = chars[i];
        let start = SourceSpan::new(line, col, 1);
        if c == '\n' {
            if depth <= 0 {
                toks.push(Token {
                    tok: Tok::Newline,
                    span: start,
                });
            }
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c == '\r' && chars.get(i + 1) == Some(&'\n') {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                col += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            let len = (i - s) as u32;
            toks.push(Token {
                tok: Tok::Ident(text),
                span: SourceSpan::new(line, col, len),
            });
            col += len;
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[s..i].iter().collect();
            let len = (i - s) as u32;
            let span = SourceSpan::new(line, col, len);
            col += len;
            let tok = if real {
                text.parse().ok().filter(|v: &f64| v.is_finite()).map(Tok::Real)
            } else {
                text.parse().ok().map(Tok::Int)
            };
            match tok {
                Some(tok) => toks.push(Token { tok, span }),
                None => diags.push(Diagnostic::new(
                    DiagnosticKind::Lexical,
                    span,
                    format!("number `{text}` is out of range"),
                )),
            }
            continue;
        }
        if c == '"' {
            let mut text = String::new();
            let mut cols = Vec::new();
            let (sline, scol) = (line, col);
            i += 1;
            col += 1;
            let mut closed = false;
            while i < chars.len() && chars[i] != '\n' {
                let d = chars[i];
                if d == '"' {
                    closed = true;
                    i += 1;
                    col += 1;
                    break;
                }
                if d == '\\' {
                    match chars.get(i + 1) {
                        Some(&e @ ('"' | '\\')) => {
                            text.push(e);
                            cols.push(col);
                            i += 2;
                            col += 2;
                        }
                        _ => {
                            diags.push(Diagnostic::new(
                                DiagnosticKind::Lexical,
                                SourceSpan::new(line, col, 2),
                                "unknown escape sequence (only \\\" and \\\\ are allowed)",
                            ));
                            i += 1;
                            col += 1;
                        }
                    }
                    continue;
                }
                text.push(d);
                cols.push(col);
                i += 1;
                col += 1;
            }
            let span = SourceSpan::new(sline, scol, col - scol);
            if !closed {
                diags.push(Diagnostic::new(
                    DiagnosticKind::Lexical,
                    SourceSpan::new(sline, scol, 1),
                    "unterminated string",
                ));
                continue;
            }
            toks.push(Token {
                tok: Tok::Str(text, cols),
                span,
            });
            continue;
        }
        if c == '-' {
            let arrow = chars.get(i + 1) == Some(&'>');
            let (sym, n) = if arrow { ("->", 2) } else { ("-", 1) };
            toks.push(Token {
                tok: Tok::Sym(sym),
                span: SourceSpan::new(line, col, n),
            });
            i += n as usize;
            col += n;
            continue;
        }
        if c == '/' {
            toks.push(Token {
                tok: Tok::Sym("/"),
                span: start,
            });
            i += 1;
            col += 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                let n = sym.chars().count();
                match *sym {
                    "{" => depth += 1,
                    "}" => depth -= 1,
                    _ => {}
                }
                let canonical = match *sym {
                    "≥" => ">=",
                    "≤" => "<=",
                    "≠" => "!=",
                    s => s,
                };
                toks.push(Token {
                    tok: Tok::Sym(canonical),
                    span: SourceSpan::new(line, col, n as u32),
                });
                i += n;
                col += n as u32;
            }
            None => {
                diags.push(Diagnostic::new(
                    DiagnosticKind::Lexical,
                    start,
                    format!("unexpected character `{c}`"),
                ));
                i += 1;
                col += 1;
            }
        }
    }
    toks.push(Token {
        tok: Tok::Newline,
        span: SourceSpan::new(line, col, 0),
    });
    (toks, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src).0.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            kinds("var A = N_A >= 4 # note"),
            vec![
                Tok::Ident("var".into()),
                Tok::Ident("A".into()),
                Tok::Sym("="),
                Tok::Ident("N_A".into()),
                Tok::Sym(">="),
                Tok::Int(4),
                Tok::Newline,
            ]
        );
    }

    #[test]
    fn newlines_inside_braces_are_whitespace() {
        let toks = kinds("exo T ~ case {\n K => bernoulli(0.5)\n}\n");
        assert_eq!(toks.iter().filter(|t| **t == Tok::Newline).count(), 2);
    }

    #[test]
    fn string_columns_track_escapes() {
        let (toks, diags) = lex(r#"ask D "a\"{N}""#);
        assert!(diags.is_empty());
        let Tok::Str(text, cols) = &toks[2].tok else { panic!() };
        assert_eq!(text, "a\"{N}");
        assert_eq!(cols, &vec![8, 9, 11, 12, 13]);
    }

    #[test]
    fn lexical_errors_are_collected() {
        let (_, diags) = lex("var A = $ and \"open");
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].span.column, 9);
    }
}
