//! Recursive-descent parser producing [`crate::ast`] nodes.

use std::rc::Rc;

use crate::ast::*;
use crate::error::SyntaxError;
use crate::lexer::{self, FPart, Tok, Token};

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn parse_module(src: &str) -> Result<Module, SyntaxError> {
    let tokens = lexer::tokenize(src)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        last_end: 0,
    };
    let mut body = Vec::new();
    while !p.at(&Tok::Eof) {
        if p.at(&Tok::Newline) {
            p.bump();
            continue;
        }
        if p.at(&Tok::Indent) {
            return Err(SyntaxError::indentation("unexpected indent", p.line()));
        }
        body.extend(p.statement()?);
    }
    Ok(Module {
        body,
        source: Rc::from(src),
    })
}

/// Parses a standalone expression (used for f-string fields).
pub fn parse_expression(src: &str, line: u32) -> Result<Expr, SyntaxError> {
    let wrapped = format!("({})", src.trim());
    let tokens = lexer::tokenize(&wrapped).map_err(|e| SyntaxError::new(e.message, line))?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        last_end: 0,
    };
    let mut e = p.test().map_err(|e| SyntaxError::new(e.message, line))?;
    fix_lines(&mut e, line);
    Ok(e)
}

fn fix_lines(e: &mut Expr, line: u32) {
    e.line = line;
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    last_end: usize,
}

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_tok(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn at(&self, t: &Tok) -> bool {
        self.tok() == t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.tok(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Name(n) if n == kw)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Newline | Tok::Indent | Tok::Dedent | Tok::Eof) {
            self.last_end = t.end;
        }
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::new(msg, self.line()))
    }

    fn unexpected<T>(&self) -> Result<T, SyntaxError> {
        match self.tok() {
            Tok::Eof => self.err("unexpected EOF while parsing"),
            Tok::Indent => Err(SyntaxError::indentation("unexpected indent", self.line())),
            Tok::Dedent => Err(SyntaxError::indentation("unexpected unindent", self.line())),
            _ => self.err("invalid syntax"),
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), SyntaxError> {
        if self.eat_op(op) {
            Ok(())
        } else if op == ":" {
            self.err("expected ':'")
        } else {
            self.unexpected()
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected()
        }
    }

    fn name(&mut self) -> Result<String, SyntaxError> {
        match self.tok().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.bump();
                Ok(n)
            }
            _ => self.unexpected(),
        }
    }

    fn dotted_name(&mut self) -> Result<String, SyntaxError> {
        let mut n = self.name()?;
        while self.eat_op(".") {
            n.push('.');
            n.push_str(&self.name()?);
        }
        Ok(n)
    }

    // ---- statements -------------------------------------------------

    fn statement(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        let line = self.line();
        if let Tok::Name(kw) = self.tok().clone() {
            match kw.as_str() {
                "if" => return Ok(vec![self.if_stmt()?]),
                "while" => {
                    self.bump();
                    let test = self.named_test()?;
                    let body = self.block()?;
                    let orelse = if self.eat_kw("else") {
                        self.block()?
                    } else {
                        Vec::new()
                    };
                    return Ok(vec![Stmt {
                        kind: StmtKind::While { test, body, orelse },
                        line,
                    }]);
                }
                "for" => {
                    self.bump();
                    let target = self.target_list()?;
                    self.expect_kw("in")?;
                    let iter = self.testlist()?;
                    let body = self.block()?;
                    let orelse = if self.eat_kw("else") {
                        self.block()?
                    } else {
                        Vec::new()
                    };
                    return Ok(vec![Stmt {
                        kind: StmtKind::For {
                            target,
                            iter,
                            body,
                            orelse,
                        },
                        line,
                    }]);
                }
                "try" => return Ok(vec![self.try_stmt()?]),
                "with" => {
                    self.bump();
                    let mut items = Vec::new();
                    loop {
                        let ctx = self.test()?;
                        let var = if self.eat_kw("as") {
                            Some(self.target()?)
                        } else {
                            None
                        };
                        items.push((ctx, var));
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    let body = self.block()?;
                    return Ok(vec![Stmt {
                        kind: StmtKind::With { items, body },
                        line,
                    }]);
                }
                "def" => return Ok(vec![self.funcdef()?]),
                "class" => return self.err("class definitions are not supported in this kernel"),
                "async" => return self.err("async code is not supported in this kernel"),
                _ => {}
            }
        }
        if self.at_op("@") {
            return self.err("decorators are not supported in this kernel");
        }
        self.simple_stmt()
    }

    fn simple_stmt(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        let mut out = vec![self.small_stmt()?];
        while self.eat_op(";") {
            if self.at(&Tok::Newline) || self.at(&Tok::Eof) {
                break;
            }
            out.push(self.small_stmt()?);
        }
        if self.at(&Tok::Newline) {
            self.bump();
        } else if !self.at(&Tok::Eof) && !self.at(&Tok::Dedent) {
            return self.unexpected();
        }
        Ok(out)
    }

    fn small_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        let kind = if let Tok::Name(kw) = self.tok().clone() {
            match kw.as_str() {
                "pass" => {
                    self.bump();
                    StmtKind::Pass
                }
                "break" => {
                    self.bump();
                    StmtKind::Break
                }
                "continue" => {
                    self.bump();
                    StmtKind::Continue
                }
                "return" => {
                    self.bump();
                    if self.at_stmt_end() {
                        StmtKind::Return(None)
                    } else {
                        StmtKind::Return(Some(self.testlist_star()?))
                    }
                }
                "raise" => {
                    self.bump();
                    if self.at_stmt_end() {
                        StmtKind::Raise(None)
                    } else {
                        let e = self.test()?;
                        if self.eat_kw("from") {
                            self.test()?;
                        }
                        StmtKind::Raise(Some(e))
                    }
                }
                "global" | "nonlocal" => {
                    self.bump();
                    let mut names = vec![self.name()?];
                    while self.eat_op(",") {
                        names.push(self.name()?);
                    }
                    if kw == "global" {
                        StmtKind::Global(names)
                    } else {
                        StmtKind::Nonlocal(names)
                    }
                }
                "del" => {
                    self.bump();
                    let mut targets = vec![self.target()?];
                    while self.eat_op(",") {
                        if self.at_stmt_end() {
                            break;
                        }
                        targets.push(self.target()?);
                    }
                    StmtKind::Del(targets)
                }
                "assert" => {
                    self.bump();
                    let test = self.test()?;
                    let msg = if self.eat_op(",") {
                        Some(self.test()?)
                    } else {
                        None
                    };
                    StmtKind::Assert { test, msg }
                }
                "import" => {
                    self.bump();
                    let mut names = Vec::new();
                    loop {
                        let n = self.dotted_name()?;
                        let alias = if self.eat_kw("as") {
                            Some(self.name()?)
                        } else {
                            None
                        };
                        names.push((n, alias));
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    StmtKind::Import(names)
                }
                "from" => {
                    self.bump();
                    let mut module = String::new();
                    while self.at_op(".") || self.at_op("...") {
                        let t = self.bump();
                        if let Tok::Op(o) = t.tok {
                            module.push_str(o);
                        }
                    }
                    if !self.at_kw("import") {
                        module.push_str(&self.dotted_name()?);
                    }
                    self.expect_kw("import")?;
                    let mut names = Vec::new();
                    if self.eat_op("*") {
                        names.push(("*".to_string(), None));
                    } else {
                        let paren = self.eat_op("(");
                        loop {
                            let n = self.name()?;
                            let alias = if self.eat_kw("as") {
                                Some(self.name()?)
                            } else {
                                None
                            };
                            names.push((n, alias));
                            if !self.eat_op(",") {
                                break;
                            }
                            if paren && self.at_op(")") {
                                break;
                            }
                        }
                        if paren {
                            self.expect_op(")")?;
                        }
                    }
                    StmtKind::ImportFrom { module, names }
                }
                "yield" => return self.err("generators are not supported in this kernel"),
                _ => self.expr_stmt()?,
            }
        } else {
            self.expr_stmt()?
        };
        Ok(Stmt { kind, line })
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.tok(), Tok::Newline | Tok::Eof | Tok::Dedent) || self.at_op(";")
    }

    fn expr_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        let first = self.testlist_star()?;
        if self.at_op(":") {
            self.bump();
            check_target(&first)?;
            self.test()?; // annotation, ignored
            let value = if self.eat_op("=") {
                Some(self.testlist_star()?)
            } else {
                None
            };
            return Ok(StmtKind::AnnAssign {
                target: first,
                value,
            });
        }
        let aug = match self.tok() {
            Tok::Op(o) => match *o {
                "+=" => Some(BinOp::Add),
                "-=" => Some(BinOp::Sub),
                "*=" => Some(BinOp::Mul),
                "/=" => Some(BinOp::Div),
                "//=" => Some(BinOp::FloorDiv),
                "%=" => Some(BinOp::Mod),
                "**=" => Some(BinOp::Pow),
                "<<=" => Some(BinOp::LShift),
                ">>=" => Some(BinOp::RShift),
                "&=" => Some(BinOp::BitAnd),
                "|=" => Some(BinOp::BitOr),
                "^=" => Some(BinOp::BitXor),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = aug {
            self.bump();
            if !matches!(
                first.kind,
                ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. }
            ) {
                return self.err("illegal expression for augmented assignment");
            }
            let value = self.testlist_star()?;
            return Ok(StmtKind::AugAssign {
                target: first,
                op,
                value,
            });
        }
        if self.at_op("=") {
            let mut targets = vec![first];
            let mut value;
            loop {
                self.bump();
                value = self.testlist_star()?;
                if self.at_op("=") {
                    targets.push(value);
                } else {
                    break;
                }
            }
            for t in &targets {
                check_target(t)?;
            }
            return Ok(StmtKind::Assign { targets, value });
        }
        Ok(StmtKind::Expr(first))
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_op(":")?;
        if self.at(&Tok::Newline) {
            self.bump();
            if !self.at(&Tok::Indent) {
                return Err(SyntaxError::indentation(
                    "expected an indented block",
                    self.line(),
                ));
            }
            self.bump();
            let mut body = Vec::new();
            while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
                if self.at(&Tok::Newline) {
                    self.bump();
                    continue;
                }
                body.extend(self.statement()?);
            }
            if self.at(&Tok::Dedent) {
                self.bump();
            }
            Ok(body)
        } else {
            self.simple_stmt()
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.bump(); // if / elif
        let test = self.named_test()?;
        let body = self.block()?;
        let orelse = if self.at_kw("elif") {
            vec![self.if_stmt()?]
        } else if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        Ok(Stmt {
            kind: StmtKind::If { test, body, orelse },
            line,
        })
    }

    fn try_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        self.bump();
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.at_kw("except") {
            let hline = self.line();
            self.bump();
            let (types, name) = if self.at_op(":") {
                (None, None)
            } else {
                let t = self.test()?;
                let n = if self.eat_kw("as") {
                    Some(self.name()?)
                } else {
                    None
                };
                (Some(t), n)
            };
            let hbody = self.block()?;
            handlers.push(Handler {
                types,
                name,
                body: hbody,
                line: hline,
            });
        }
        let orelse = if self.eat_kw("else") {
            self.block()?
        } else {
            Vec::new()
        };
        let finalbody = if self.eat_kw("finally") {
            self.block()?
        } else {
            Vec::new()
        };
        if handlers.is_empty() && finalbody.is_empty() {
            return self.err("expected 'except' or 'finally' block");
        }
        Ok(Stmt {
            kind: StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            },
            line,
        })
    }

    fn funcdef(&mut self) -> Result<Stmt, SyntaxError> {
        let line = self.line();
        let start = self.toks[self.pos].start;
        self.bump(); // def
        let name = self.name()?;
        self.expect_op("(")?;
        let params = self.params(")")?;
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.test()?;
        }
        let body = self.block()?;
        let end = self.last_end;
        let docstring = docstring_of(&body);
        Ok(Stmt {
            kind: StmtKind::FunctionDef(Rc::new(FuncDef {
                name,
                params,
                body,
                docstring,
                line,
                span: (start, end),
                is_lambda: false,
            })),
            line,
        })
    }

    fn params(&mut self, close: &str) -> Result<Params, SyntaxError> {
        let mut params = Params::default();
        let mut kwonly = false;
        let annotated = close == ")";
        while !self.at_op(close) {
            if self.eat_op("**") {
                params.kwarg = Some(self.name()?);
                if annotated && self.eat_op(":") {
                    self.test()?;
                }
            } else if self.eat_op("*") {
                kwonly = true;
                if !self.at_op(",") {
                    params.vararg = Some(self.name()?);
                    if annotated && self.eat_op(":") {
                        self.test()?;
                    }
                }
            } else if self.eat_op("/") {
                // positional-only marker, no semantic effect here
            } else {
                let n = self.name()?;
                if annotated && self.eat_op(":") {
                    self.test()?;
                }
                let default = if self.eat_op("=") {
                    Some(self.test()?)
                } else {
                    None
                };
                if !kwonly && default.is_none() && params.args.iter().any(|(_, d)| d.is_some()) {
                    return self.err("non-default argument follows default argument");
                }
                if params.names().any(|x| x == n) {
                    return self.err(format!("duplicate argument '{n}' in function definition"));
                }
                if kwonly {
                    params.kwonly.push((n, default));
                } else {
                    params.args.push((n, default));
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    // ---- expressions --------------------------------------------------

    /// Comma-separated expressions; a trailing comma or multiple items make a tuple.
    fn testlist(&mut self) -> Result<Expr, SyntaxError> {
        self.tuple_of(|p| p.test())
    }

    fn testlist_star(&mut self) -> Result<Expr, SyntaxError> {
        self.tuple_of(|p| p.star_or_test())
    }

    fn tuple_of(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = item(self)?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_stmt_end() || self.at_op("=") || self.at_op(")") || self.at_op(":") {
                break;
            }
            items.push(item(self)?);
        }
        Ok(Expr::new(ExprKind::Tuple(items), line))
    }

    fn star_or_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_op("*") {
            let e = self.bitor()?;
            return Ok(Expr::new(ExprKind::Starred(Box::new(e)), line));
        }
        self.named_test()
    }

    fn target(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_op("*") {
            let e = self.bitor()?;
            return Ok(Expr::new(ExprKind::Starred(Box::new(e)), line));
        }
        let e = self.bitor()?;
        check_target(&e)?;
        Ok(e)
    }

    fn target_list(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.target()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") || self.at_op("=") {
                break;
            }
            items.push(self.target()?);
        }
        Ok(Expr::new(ExprKind::Tuple(items), line))
    }

    fn named_test(&mut self) -> Result<Expr, SyntaxError> {
        if let (Tok::Name(n), Tok::Op(":=")) = (self.tok().clone(), self.peek_tok(1).clone()) {
            if !is_keyword(&n) {
                let line = self.line();
                self.bump();
                self.bump();
                let value = self.test()?;
                return Ok(Expr::new(
                    ExprKind::NamedExpr {
                        target: n,
                        value: Box::new(value),
                    },
                    line,
                ));
            }
        }
        self.test()
    }

    fn test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.at_kw("lambda") {
            let start = self.toks[self.pos].start;
            self.bump();
            let params = self.params(":")?;
            self.expect_op(":")?;
            let body = self.test()?;
            let end = self.last_end;
            let ret = Stmt {
                line: body.line,
                kind: StmtKind::Return(Some(body)),
            };
            return Ok(Expr::new(
                ExprKind::Lambda(Rc::new(FuncDef {
                    name: "<lambda>".into(),
                    params,
                    body: vec![ret],
                    docstring: None,
                    line,
                    span: (start, end),
                    is_lambda: true,
                })),
                line,
            ));
        }
        let e = self.or_test()?;
        if self.at_kw("if") {
            // Distinguish from a comprehension filter: only treat as a
            // conditional expression when an `else` follows.
            let save = self.pos;
            let save_end = self.last_end;
            self.bump();
            let cond = self.or_test()?;
            if self.eat_kw("else") {
                let orelse = self.test()?;
                return Ok(Expr::new(
                    ExprKind::IfExp {
                        test: Box::new(cond),
                        body: Box::new(e),
                        orelse: Box::new(orelse),
                    },
                    line,
                ));
            }
            self.pos = save;
            self.last_end = save_end;
        }
        Ok(e)
    }

    fn test_no_cond(&mut self) -> Result<Expr, SyntaxError> {
        self.or_test()
    }

    fn or_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.and_test()?;
        if !self.at_kw("or") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("or") {
            values.push(self.and_test()?);
        }
        Ok(Expr::new(
            ExprKind::BoolOp {
                op: BoolOp::Or,
                values,
            },
            line,
        ))
    }

    fn and_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.not_test()?;
        if !self.at_kw("and") {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw("and") {
            values.push(self.not_test()?);
        }
        Ok(Expr::new(
            ExprKind::BoolOp {
                op: BoolOp::And,
                values,
            },
            line,
        ))
    }

    fn not_test(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.eat_kw("not") {
            let operand = self.not_test()?;
            return Ok(Expr::new(
                ExprKind::UnaryOp {
                    op: UnaryOp::Not,
                    operand: Box::new(operand),
                },
                line,
            ));
        }
        self.comparison()
    }

    fn comp_op(&mut self) -> Option<CmpOp> {
        let op = match self.tok() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::NotEq,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::LtE,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::GtE,
            Tok::Name(n) if n == "in" => CmpOp::In,
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_tok(1), Tok::Name(m) if m == "not") {
                    self.bump();
                    self.bump();
                    return Some(CmpOp::IsNot);
                }
                CmpOp::Is
            }
            Tok::Name(n) if n == "not" => {
                if matches!(self.peek_tok(1), Tok::Name(m) if m == "in") {
                    self.bump();
                    self.bump();
                    return Some(CmpOp::NotIn);
                }
                return None;
            }
            _ => return None,
        };
        self.bump();
        Some(op)
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let left = self.bitor()?;
        let mut ops = Vec::new();
        while let Some(op) = self.comp_op() {
            ops.push((op, self.bitor()?));
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr::new(
            ExprKind::Compare {
                left: Box::new(left),
                ops,
            },
            line,
        ))
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let mut left = next(self)?;
        'outer: loop {
            for (sym, op) in ops {
                if self.at_op(sym) {
                    let line = self.line();
                    self.bump();
                    let right = next(self)?;
                    left = Expr::new(
                        ExprKind::BinOp {
                            left: Box::new(left),
                            op: *op,
                            right: Box::new(right),
                        },
                        line,
                    );
                    continue 'outer;
                }
            }
            return Ok(left);
        }
    }

    fn bitor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("|", BinOp::BitOr)], Self::bitxor)
    }

    fn bitxor(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("^", BinOp::BitXor)], Self::bitand)
    }

    fn bitand(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("&", BinOp::BitAnd)], Self::shift)
    }

    fn shift(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("<<", BinOp::LShift), (">>", BinOp::RShift)], Self::arith)
    }

    fn arith(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::term)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        self.binary_level(
            &[
                ("*", BinOp::Mul),
                ("/", BinOp::Div),
                ("//", BinOp::FloorDiv),
                ("%", BinOp::Mod),
                ("@", BinOp::MatMul),
            ],
            Self::factor,
        )
    }

    fn factor(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let op = match self.tok() {
            Tok::Op("-") => Some(UnaryOp::Neg),
            Tok::Op("+") => Some(UnaryOp::Pos),
            Tok::Op("~") => Some(UnaryOp::Invert),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let operand = self.factor()?;
            return Ok(Expr::new(
                ExprKind::UnaryOp {
                    op,
                    operand: Box::new(operand),
                },
                line,
            ));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        if self.at_kw("await") {
            return self.err("async code is not supported in this kernel");
        }
        let base = self.primary()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::new(
                ExprKind::BinOp {
                    left: Box::new(base),
                    op: BinOp::Pow,
                    right: Box::new(exp),
                },
                line,
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.atom()?;
        loop {
            let line = self.line();
            if self.eat_op("(") {
                let args = self.call_args()?;
                self.expect_op(")")?;
                e = Expr::new(
                    ExprKind::Call {
                        func: Box::new(e),
                        args,
                    },
                    line,
                );
            } else if self.eat_op("[") {
                let index = self.subscript_list()?;
                self.expect_op("]")?;
                e = Expr::new(
                    ExprKind::Subscript {
                        value: Box::new(e),
                        index: Box::new(index),
                    },
                    line,
                );
            } else if self.eat_op(".") {
                let attr = match self.tok().clone() {
                    Tok::Name(n) => {
                        self.bump();
                        n
                    }
                    _ => return self.unexpected(),
                };
                e = Expr::new(
                    ExprKind::Attribute {
                        value: Box::new(e),
                        attr,
                    },
                    line,
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Arg>, SyntaxError> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            if self.eat_op("**") {
                args.push(Arg::DoubleStar(self.test()?));
            } else if self.eat_op("*") {
                args.push(Arg::Star(self.test()?));
            } else if let (Tok::Name(n), Tok::Op("=")) =
                (self.tok().clone(), self.peek_tok(1).clone())
            {
                self.bump();
                self.bump();
                args.push(Arg::Kw(n, self.test()?));
            } else {
                let line = self.line();
                let e = self.named_test()?;
                if self.at_kw("for") {
                    let gens = self.comp_for()?;
                    args.push(Arg::Pos(Expr::new(
                        ExprKind::GenExp {
                            elt: Box::new(e),
                            gens,
                        },
                        line,
                    )));
                } else {
                    args.push(Arg::Pos(e));
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }

    fn subscript_list(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let first = self.subscript()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            items.push(self.subscript()?);
        }
        Ok(Expr::new(ExprKind::Tuple(items), line))
    }

    fn subscript(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let lower = if self.at_op(":") {
            None
        } else {
            Some(self.named_test()?)
        };
        if !self.at_op(":") {
            return lower.ok_or_else(|| SyntaxError::new("invalid syntax", line));
        }
        self.bump();
        let upper = if self.at_op(":") || self.at_op("]") || self.at_op(",") {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        let step = if self.eat_op(":") {
            if self.at_op("]") || self.at_op(",") {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::new(
            ExprKind::Slice {
                lower: lower.map(Box::new),
                upper,
                step,
            },
            line,
        ))
    }

    fn comp_for(&mut self) -> Result<Vec<Comprehension>, SyntaxError> {
        let mut gens = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.test_no_cond()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.test_no_cond()?);
            }
            gens.push(Comprehension { target, iter, ifs });
        }
        Ok(gens)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let tok = self.tok().clone();
        match tok {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Const(Const::Int(v)), line))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Const(Const::Float(v)), line))
            }
            Tok::Str(_) | Tok::FStr(_) => self.strings(),
            Tok::Op("...") => {
                self.bump();
                Ok(Expr::new(ExprKind::Const(Const::Ellipsis), line))
            }
            Tok::Name(n) => match n.as_str() {
                "None" => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Const(Const::None), line))
                }
                "True" => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Const(Const::Bool(true)), line))
                }
                "False" => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Const(Const::Bool(false)), line))
                }
                "yield" => self.err("generators are not supported in this kernel"),
                _ if is_keyword(&n) => self.unexpected(),
                _ => {
                    self.bump();
                    Ok(Expr::new(ExprKind::Name(n), line))
                }
            },
            Tok::Op("(") => {
                self.bump();
                if self.eat_op(")") {
                    return Ok(Expr::new(ExprKind::Tuple(Vec::new()), line));
                }
                let first = self.star_or_test()?;
                if self.at_kw("for") {
                    let gens = self.comp_for()?;
                    self.expect_op(")")?;
                    return Ok(Expr::new(
                        ExprKind::GenExp {
                            elt: Box::new(first),
                            gens,
                        },
                        line,
                    ));
                }
                if self.eat_op(")") {
                    if matches!(first.kind, ExprKind::Starred(_)) {
                        return self.err("cannot use starred expression here");
                    }
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op(")") {
                        break;
                    }
                    items.push(self.star_or_test()?);
                }
                self.expect_op(")")?;
                Ok(Expr::new(ExprKind::Tuple(items), line))
            }
            Tok::Op("[") => {
                self.bump();
                if self.eat_op("]") {
                    return Ok(Expr::new(ExprKind::List(Vec::new()), line));
                }
                let first = self.star_or_test()?;
                if self.at_kw("for") {
                    let gens = self.comp_for()?;
                    self.expect_op("]")?;
                    return Ok(Expr::new(
                        ExprKind::ListComp {
                            elt: Box::new(first),
                            gens,
                        },
                        line,
                    ));
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op("]") {
                        break;
                    }
                    items.push(self.star_or_test()?);
                }
                self.expect_op("]")?;
                Ok(Expr::new(ExprKind::List(items), line))
            }
            Tok::Op("{") => {
                self.bump();
                if self.eat_op("}") {
                    return Ok(Expr::new(ExprKind::Dict(Vec::new()), line));
                }
                if self.eat_op("**") {
                    let spread = self.bitor()?;
                    return self.dict_rest(line, vec![(None, spread)]);
                }
                let first = self.star_or_test()?;
                if self.eat_op(":") {
                    let value = self.test()?;
                    if self.at_kw("for") {
                        let gens = self.comp_for()?;
                        self.expect_op("}")?;
                        return Ok(Expr::new(
                            ExprKind::DictComp {
                                key: Box::new(first),
                                value: Box::new(value),
                                gens,
                            },
                            line,
                        ));
                    }
                    return self.dict_rest(line, vec![(Some(first), value)]);
                }
                if self.at_kw("for") {
                    let gens = self.comp_for()?;
                    self.expect_op("}")?;
                    return Ok(Expr::new(
                        ExprKind::SetComp {
                            elt: Box::new(first),
                            gens,
                        },
                        line,
                    ));
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op("}") {
                        break;
                    }
                    items.push(self.star_or_test()?);
                }
                self.expect_op("}")?;
                Ok(Expr::new(ExprKind::Set(items), line))
            }
            _ => self.unexpected(),
        }
    }

    fn dict_rest(
        &mut self,
        line: u32,
        mut items: Vec<(Option<Expr>, Expr)>,
    ) -> Result<Expr, SyntaxError> {
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            if self.eat_op("**") {
                items.push((None, self.bitor()?));
                continue;
            }
            let k = self.test()?;
            self.expect_op(":")?;
            let v = self.test()?;
            items.push((Some(k), v));
        }
        self.expect_op("}")?;
        Ok(Expr::new(ExprKind::Dict(items), line))
    }

    fn strings(&mut self) -> Result<Expr, SyntaxError> {
        let line = self.line();
        let mut pieces: Vec<FPiece> = Vec::new();
        let mut any_f = false;
        loop {
            match self.tok().clone() {
                Tok::Str(s) => {
                    self.bump();
                    pieces.push(FPiece::Lit(s));
                }
                Tok::FStr(parts) => {
                    self.bump();
                    any_f = true;
                    for part in parts {
                        match part {
                            FPart::Lit(s) => pieces.push(FPiece::Lit(s)),
                            FPart::Expr {
                                src,
                                conv,
                                spec,
                                line,
                            } => {
                                let expr = parse_expression(&src, line)?;
                                pieces.push(FPiece::Expr {
                                    expr: Box::new(expr),
                                    conv,
                                    spec,
                                });
                            }
                        }
                    }
                }
                _ => break,
            }
        }
        if any_f {
            Ok(Expr::new(ExprKind::FString(pieces), line))
        } else {
            let s: String = pieces
                .into_iter()
                .map(|p| match p {
                    FPiece::Lit(s) => s,
                    FPiece::Expr { .. } => unreachable!(),
                })
                .collect();
            Ok(Expr::new(ExprKind::Const(Const::Str(Rc::from(s))), line))
        }
    }
}

fn check_target(e: &Expr) -> Result<(), SyntaxError> {
    match &e.kind {
        ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => Ok(()),
        ExprKind::Tuple(items) | ExprKind::List(items) => items.iter().try_for_each(check_target),
        ExprKind::Starred(inner) => check_target(inner),
        ExprKind::Call { .. } => Err(SyntaxError::new("cannot assign to function call", e.line)),
        ExprKind::Const(_) => Err(SyntaxError::new("cannot assign to literal", e.line)),
        _ => Err(SyntaxError::new("cannot assign to expression", e.line)),
    }
}

fn docstring_of(body: &[Stmt]) -> Option<String> {
    match body.first().map(|s| &s.kind) {
        Some(StmtKind::Expr(Expr {
            kind: ExprKind::Const(Const::Str(s)),
            ..
        })) => Some(clean_doc(s)),
        _ => None,
    }
}

/// Normalizes docstring indentation the way Python's `inspect.cleandoc` does.
pub fn clean_doc(doc: &str) -> String {
    let expanded = doc.replace('\t', "        ");
    let lines: Vec<&str> = expanded.lines().collect();
    if lines.is_empty() {
        return String::new();
    }
    let margin = lines[1..]
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    out.push(lines[0].trim_start().to_string());
    for l in &lines[1..] {
        out.push(if l.len() >= margin {
            l[margin..].to_string()
        } else {
            l.trim_start().to_string()
        });
    }
    while out.last().is_some_and(|l| l.trim().is_empty()) {
        out.pop();
    }
    while out.first().is_some_and(|l| l.trim().is_empty()) {
        out.remove(0);
    }
    out.iter()
        .map(|l| l.trim_end())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Module {
        parse_module(src).unwrap_or_else(|e| panic!("{src:?}: {e}"))
    }

    #[test]
    fn function_span_and_docstring() {
        let src = "x = 1\ndef f(a, b=2):\n    \"\"\"Adds.\n\n    More.\n    \"\"\"\n    return a + b\n\ny = f(1)\n";
        let m = parse(src);
        let StmtKind::FunctionDef(f) = &m.body[1].kind else {
            panic!()
        };
        assert_eq!(f.name, "f");
        assert_eq!(f.docstring.as_deref(), Some("Adds.\n\nMore."));
        assert_eq!(
            &src[f.span.0..f.span.1],
            &src[6..src.find("\n\ny").unwrap()]
        );
        assert!(src[f.span.0..f.span.1].ends_with("return a + b"));
    }

    #[test]
    fn comprehension_filters_and_conditional_expressions() {
        parse("[x if x > 0 else -x for x in xs if x != 3 if x]\n");
        parse("{k: v for k, v in d.items()}\n");
        parse("sum(x * 2 for x in range(10))\n");
    }

    #[test]
    fn assignments() {
        parse("a, b = 1, 2\na = b = 3\nx[0] += 1\n*h, t = [1, 2, 3]\nn: int = 4\n");
        assert!(parse_module("f() = 3\n").is_err());
        assert!(parse_module("1 = x\n").is_err());
    }

    #[test]
    fn compound_statements() {
        parse("for i in range(3):\n    if i % 2:\n        continue\n    elif i:\n        pass\n    else:\n        break\nelse:\n    pass\n");
        parse("try:\n    x = 1/0\nexcept (ZeroDivisionError, ValueError) as e:\n    print(e)\nelse:\n    pass\nfinally:\n    pass\n");
        parse("with open('a') as f, open('b') as g:\n    pass\n");
        parse("while (n := n - 1) > 0: pass\n");
    }

    #[test]
    fn unsupported_constructs_are_syntax_errors() {
        assert!(parse_module("class A:\n    pass\n").is_err());
        assert!(parse_module("def g():\n    yield 1\n").is_err());
    }

    #[test]
    fn missing_indent() {
        let e = parse_module("def f():\nreturn 1\n").unwrap_err();
        assert_eq!(e.kind, "IndentationError");
    }

    #[test]
    fn lambda_and_calls() {
        parse("sorted(xs, key=lambda p: (p[1], -p[0]), reverse=True)\nf(*a, **k)\n");
    }
}
