//! Tokenizer with Python's indentation rules.

use crate::error::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    FStr(Vec<FPart>),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FPart {
    Lit(String),
    Expr {
        src: String,
        conv: Option<char>,
        spec: Option<String>,
        /// Line of the enclosing literal.
        line: u32,
    },
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub start: usize,
    pub end: usize,
}

// Longest first so that greedy matching works.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "==", "!=", "<=", ">=", "<<", ">>", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", ":=", "+", "-", "*", "/", "%", "<", ">", "=", "(",
    ")", "[", "]", "{", "}", ",", ":", ".", ";", "@", "&", "|", "^", "~",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer::new(src).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    depth: usize,
    indents: Vec<usize>,
    out: Vec<Token>,
    at_line_start: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            depth: 0,
            indents: vec![0],
            out: Vec::new(),
            at_line_start: true,
        }
    }

    fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError::new(msg, self.line)
    }

    fn push(&mut self, tok: Tok, start: usize, end: usize, line: u32) {
        self.out.push(Token {
            tok,
            line,
            start,
            end,
        });
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        while self.pos < self.bytes.len() {
            if self.at_line_start && self.depth == 0 {
                self.at_line_start = false;
                if self.handle_indent()? {
                    continue;
                }
            }
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\x0c' => self.pos += 1,
                b'\r' => self.pos += 1,
                b'#' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                b'\n' => {
                    if self.depth == 0 {
                        let last_is_newline = matches!(
                            self.out.last().map(|t| &t.tok),
                            None | Some(Tok::Newline) | Some(Tok::Indent) | Some(Tok::Dedent)
                        );
                        if !last_is_newline {
                            self.push(Tok::Newline, self.pos, self.pos + 1, self.line);
                        }
                        self.at_line_start = true;
                    }
                    self.pos += 1;
                    self.line += 1;
                }
                b'\\' => {
                    // explicit line joining
                    let mut p = self.pos + 1;
                    if self.bytes.get(p) == Some(&b'\r') {
                        p += 1;
                    }
                    if self.bytes.get(p) == Some(&b'\n') {
                        self.pos = p + 1;
                        self.line += 1;
                    } else {
                        return Err(
                            self.err("unexpected character after line continuation character")
                        );
                    }
                }
                b'0'..=b'9' => self.number()?,
                b'.' if matches!(self.peek_at(1), Some(b'0'..=b'9')) => self.number()?,
                b'"' | b'\'' => self.string(String::new())?,
                c if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                    let start = self.pos;
                    let rest = &self.src[start..];
                    let mut end = start;
                    for (i, ch) in rest.char_indices() {
                        if ch == '_' || ch.is_alphanumeric() {
                            end = start + i + ch.len_utf8();
                        } else {
                            break;
                        }
                    }
                    if end == start {
                        return Err(self.err(format!(
                            "invalid character '{}'",
                            rest.chars().next().unwrap_or('?')
                        )));
                    }
                    let word = &self.src[start..end];
                    let lower = word.to_ascii_lowercase();
                    let is_prefix = matches!(
                        lower.as_str(),
                        "r" | "u" | "f" | "b" | "rb" | "br" | "fr" | "rf"
                    );
                    if is_prefix && matches!(self.bytes.get(end), Some(b'"') | Some(b'\'')) {
                        self.pos = end;
                        self.string(lower)?;
                    } else {
                        self.pos = end;
                        self.push(Tok::Name(word.to_string()), start, end, self.line);
                    }
                }
                _ => {
                    let start = self.pos;
                    let rest = &self.src[start..];
                    let op = OPERATORS.iter().find(|op| rest.starts_with(**op)).copied();
                    match op {
                        Some(op) => {
                            match op {
                                "(" | "[" | "{" => self.depth += 1,
                                ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                                _ => {}
                            }
                            self.pos += op.len();
                            self.push(Tok::Op(op), start, self.pos, self.line);
                        }
                        None => {
                            return Err(self.err(format!(
                                "invalid character '{}'",
                                rest.chars().next().unwrap_or('?')
                            )))
                        }
                    }
                }
            }
        }
        if !matches!(
            self.out.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Dedent)
        ) {
            self.push(Tok::Newline, self.pos, self.pos, self.line);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, self.pos, self.pos, self.line);
        }
        self.push(Tok::Eof, self.pos, self.pos, self.line);
        Ok(self.out)
    }

    /// Measures indentation at the start of a logical line. Returns true
    /// when the line is blank or a comment and was skipped entirely.
    fn handle_indent(&mut self) -> Result<bool, SyntaxError> {
        let mut col = 0usize;
        let mut p = self.pos;
        while let Some(&c) = self.bytes.get(p) {
            match c {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            p += 1;
        }
        match self.bytes.get(p) {
            None => {
                self.pos = p;
                return Ok(true);
            }
            Some(b'\n') => {
                self.pos = p + 1;
                self.line += 1;
                self.at_line_start = true;
                return Ok(true);
            }
            Some(b'\r') if self.bytes.get(p + 1) == Some(&b'\n') => {
                self.pos = p + 2;
                self.line += 1;
                self.at_line_start = true;
                return Ok(true);
            }
            Some(b'#') => {
                while let Some(&c) = self.bytes.get(p) {
                    if c == b'\n' {
                        break;
                    }
                    p += 1;
                }
                self.pos = p;
                if p < self.bytes.len() {
                    self.pos += 1;
                    self.line += 1;
                }
                self.at_line_start = true;
                return Ok(true);
            }
            _ => {}
        }
        self.pos = p;
        let current = *self.indents.last().unwrap_or(&0);
        if col > current {
            self.indents.push(col);
            self.push(Tok::Indent, p, p, self.line);
        } else if col < current {
            while col < *self.indents.last().unwrap_or(&0) {
                self.indents.pop();
                self.push(Tok::Dedent, p, p, self.line);
            }
            if col != *self.indents.last().unwrap_or(&0) {
                return Err(SyntaxError::indentation(
                    "unindent does not match any outer indentation level",
                    self.line,
                ));
            }
        }
        Ok(false)
    }

    fn number(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let b = self.bytes;
        if b[start] == b'0'
            && matches!(
                b.get(start + 1),
                Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B')
            )
        {
            let radix = match b[start + 1] {
                b'x' | b'X' => 16,
                b'o' | b'O' => 8,
                _ => 2,
            };
            let mut p = start + 2;
            while p < b.len() && (b[p] as char).is_ascii_alphanumeric() || b.get(p) == Some(&b'_') {
                p += 1;
            }
            let digits: String = self.src[start + 2..p]
                .chars()
                .filter(|c| *c != '_')
                .collect();
            let v = i64::from_str_radix(&digits, radix)
                .map_err(|_| self.err("invalid number literal"))?;
            self.pos = p;
            self.push(Tok::Int(v), start, p, self.line);
            return Ok(());
        }
        let mut p = start;
        let mut is_float = false;
        while p < b.len() && (b[p].is_ascii_digit() || b[p] == b'_') {
            p += 1;
        }
        if p < b.len() && b[p] == b'.' {
            is_float = true;
            p += 1;
            while p < b.len() && (b[p].is_ascii_digit() || b[p] == b'_') {
                p += 1;
            }
        }
        if p < b.len() && (b[p] == b'e' || b[p] == b'E') {
            let mut q = p + 1;
            if q < b.len() && (b[q] == b'+' || b[q] == b'-') {
                q += 1;
            }
            if q < b.len() && b[q].is_ascii_digit() {
                is_float = true;
                p = q;
                while p < b.len() && b[p].is_ascii_digit() {
                    p += 1;
                }
            }
        }
        let text: String = self.src[start..p].chars().filter(|c| *c != '_').collect();
        if p < b.len() && (b[p] == b'j' || b[p] == b'J') {
            return Err(self.err("complex literals are not supported"));
        }
        let tok = if is_float {
            Tok::Float(
                text.parse()
                    .map_err(|_| self.err("invalid float literal"))?,
            )
        } else {
            match text.parse::<i64>() {
                Ok(v) => Tok::Int(v),
                Err(_) => Tok::Float(
                    text.parse()
                        .map_err(|_| self.err("invalid number literal"))?,
                ),
            }
        };
        self.pos = p;
        self.push(tok, start, p, self.line);
        Ok(())
    }

    fn string(&mut self, prefix: String) -> Result<(), SyntaxError> {
        let start_line = self.line;
        let start = self.pos - prefix.len();
        let raw = prefix.contains('r');
        let fmt = prefix.contains('f');
        let quote = self.bytes[self.pos];
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        let body_start = self.pos;
        let body_end;
        loop {
            let c = match self.peek() {
                Some(c) => c,
                None => {
                    return Err(SyntaxError::new(
                        if triple {
                            "unterminated triple-quoted string literal"
                        } else {
                            "unterminated string literal"
                        },
                        start_line,
                    ))
                }
            };
            if c == b'\\' {
                if self.peek_at(1) == Some(b'\n') {
                    self.line += 1;
                }
                self.pos += 2;
                continue;
            }
            if c == b'\n' {
                if !triple {
                    return Err(SyntaxError::new("unterminated string literal", start_line));
                }
                self.line += 1;
            }
            if c == quote {
                if triple {
                    if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                        body_end = self.pos;
                        self.pos += 3;
                        break;
                    }
                } else {
                    body_end = self.pos;
                    self.pos += 1;
                    break;
                }
            }
            self.pos += 1;
        }
        let body = &self.src[body_start..body_end];
        let tok = if fmt {
            Tok::FStr(parse_fstring(body, raw, start_line)?)
        } else if raw {
            Tok::Str(body.to_string())
        } else {
            Tok::Str(unescape(body, start_line)?)
        };
        self.push(tok, start, self.pos, start_line);
        Ok(())
    }
}

pub fn unescape(s: &str, line: u32) -> Result<String, SyntaxError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            None => out.push('\\'),
            Some('\n') => {}
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some('a') => out.push('\x07'),
            Some('b') => out.push('\x08'),
            Some('f') => out.push('\x0c'),
            Some('v') => out.push('\x0b'),
            Some('\\') => out.push('\\'),
            Some('\'') => out.push('\''),
            Some('"') => out.push('"'),
            Some(k @ ('x' | 'u' | 'U')) => {
                let n = match k {
                    'x' => 2,
                    'u' => 4,
                    _ => 8,
                };
                let hex: String = (0..n).filter_map(|_| chars.next()).collect();
                let code = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| SyntaxError::new("invalid escape sequence", line))?;
                out.push(code);
            }
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    Ok(out)
}

fn parse_fstring(body: &str, raw: bool, line: u32) -> Result<Vec<FPart>, SyntaxError> {
    let mut parts = Vec::new();
    let mut lit = String::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    let flush = |lit: &mut String, parts: &mut Vec<FPart>| -> Result<(), SyntaxError> {
        if !lit.is_empty() {
            let text = if raw {
                std::mem::take(lit)
            } else {
                let t = unescape(lit, line)?;
                lit.clear();
                t
            };
            parts.push(FPart::Lit(text));
        }
        Ok(())
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '{' {
            if chars.get(i + 1) == Some(&'{') {
                lit.push('{');
                i += 2;
                continue;
            }
            flush(&mut lit, &mut parts)?;
            // find matching close, honoring nested brackets and strings
            let mut depth = 0i32;
            let mut j = i + 1;
            let mut quote: Option<char> = None;
            let mut expr_end = None;
            let mut conv = None;
            let mut spec_start = None;
            while j < chars.len() {
                let d = chars[j];
                if let Some(q) = quote {
                    if d == q {
                        quote = None;
                    }
                } else {
                    match d {
                        '\'' | '"' => quote = Some(d),
                        '(' | '[' | '{' => depth += 1,
                        ')' | ']' => depth -= 1,
                        '}' if depth > 0 => depth -= 1,
                        '}' => break,
                        '!' if depth == 0
                            && spec_start.is_none()
                            && chars.get(j + 1) != Some(&'=')
                            && expr_end.is_none() =>
                        {
                            expr_end = Some(j);
                            conv = chars.get(j + 1).copied();
                            j += 1;
                        }
                        ':' if depth == 0 && spec_start.is_none() => {
                            if expr_end.is_none() {
                                expr_end = Some(j);
                            }
                            spec_start = Some(j + 1);
                        }
                        _ => {}
                    }
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err(SyntaxError::new("f-string: expecting '}'", line));
            }
            let end = expr_end.unwrap_or(j);
            let src: String = chars[i + 1..end].iter().collect();
            if src.trim().is_empty() {
                return Err(SyntaxError::new(
                    "f-string: empty expression not allowed",
                    line,
                ));
            }
            let spec = spec_start.map(|s| chars[s..j].iter().collect::<String>());
            parts.push(FPart::Expr {
                src,
                conv,
                spec,
                line,
            });
            i = j + 1;
        } else if c == '}' {
            if chars.get(i + 1) == Some(&'}') {
                lit.push('}');
                i += 2;
                continue;
            }
            return Err(SyntaxError::new(
                "f-string: single '}' is not allowed",
                line,
            ));
        } else {
            lit.push(c);
            i += 1;
        }
    }
    flush(&mut lit, &mut parts)?;
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_produces_indent_and_dedent() {
        let toks = kinds("if x:\n    y = 1\nz\n");
        assert!(toks.contains(&Tok::Indent));
        assert!(toks.contains(&Tok::Dedent));
    }

    #[test]
    fn blank_and_comment_lines_are_ignored() {
        let toks = kinds("x = 1\n\n   # note\ny = 2\n");
        assert!(!toks.contains(&Tok::Indent));
    }

    #[test]
    fn triple_quoted_strings_span_lines() {
        let toks = tokenize("s = \"\"\"a\nb\"\"\"\nt = 1\n").unwrap();
        assert_eq!(toks[2].tok, Tok::Str("a\nb".into()));
        let t = toks
            .iter()
            .find(|t| t.tok == Tok::Name("t".into()))
            .unwrap();
        assert_eq!(t.line, 3);
    }

    #[test]
    fn brackets_join_lines() {
        let toks = kinds("x = [1,\n  2]\n");
        assert_eq!(toks.iter().filter(|t| **t == Tok::Newline).count(), 1);
    }

    #[test]
    fn fstring_parts() {
        let toks = kinds("f'a{x!r:>4}b{{c}}'\n");
        match &toks[0] {
            Tok::FStr(parts) => {
                assert_eq!(parts.len(), 3);
                assert_eq!(
                    parts[1],
                    FPart::Expr {
                        src: "x".into(),
                        conv: Some('r'),
                        spec: Some(">4".into()),
                        line: 1
                    }
                );
                assert_eq!(parts[2], FPart::Lit("b{c}".into()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_dedent_is_indentation_error() {
        let err = tokenize("if x:\n    y\n  z\n").unwrap_err();
        assert_eq!(err.kind, "IndentationError");
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("0x1f 1_000 2.5 1e3")[..4],
            [
                Tok::Int(31),
                Tok::Int(1000),
                Tok::Float(2.5),
                Tok::Float(1000.0)
            ]
        );
    }
}
