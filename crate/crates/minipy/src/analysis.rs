//! Static inspection of snippets: top-level functions and call targets.

use std::collections::{BTreeSet, HashSet};

use crate::ast::*;
use crate::builtins;
use crate::complexity::cyclomatic;
use crate::error::SyntaxError;
use crate::parser::parse_module;

/// Hook names the kernel installs into every namespace.
pub const HOOKS: &[&str] = &["submit_final_answer", "get_relevant_actions"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionInfo {
    pub name: String,
    /// Cleaned docstring, empty when absent.
    pub docstring: String,
    /// Verbatim source text of the definition.
    pub source: String,
    pub complexity: u32,
    pub line: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeAnalysis {
    /// Top-level `def`s, in source order.
    pub functions: Vec<FunctionInfo>,
    /// Every `def` and `lambda`, at any depth.
    pub definition_count: usize,
    /// Bare-name call targets, excluding builtins, hooks and names the
    /// snippet imports itself.
    pub called_names: Vec<String>,
}

pub fn analyze(src: &str) -> Result<CodeAnalysis, SyntaxError> {
    let module = parse_module(src)?;
    Ok(analyze_module(&module))
}

pub fn top_level_functions(module: &Module) -> Vec<FunctionInfo> {
    module
        .body
        .iter()
        .filter_map(|s| match &s.kind {
            StmtKind::FunctionDef(d) => Some(FunctionInfo {
                name: d.name.clone(),
                docstring: d.docstring.clone().unwrap_or_default(),
                source: module.source[d.span.0..d.span.1].to_string(),
                complexity: cyclomatic(d),
                line: d.line,
            }),
            _ => None,
        })
        .collect()
}

pub fn analyze_module(module: &Module) -> CodeAnalysis {
    let mut v = Visitor::default();
    v.stmts(&module.body);
    let builtin_names: HashSet<&str> = builtins::all_names().chain(HOOKS.iter().copied()).collect();
    let called_names = v
        .calls
        .into_iter()
        .filter(|n| !builtin_names.contains(n.as_str()) && !v.imports.contains(n))
        .collect();
    CodeAnalysis {
        functions: top_level_functions(module),
        definition_count: v.defs,
        called_names,
    }
}

#[derive(Default)]
struct Visitor {
    defs: usize,
    calls: BTreeSet<String>,
    imports: HashSet<String>,
}

impl Visitor {
    fn stmts(&mut self, body: &[Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn opt(&mut self, e: &Option<Expr>) {
        if let Some(e) = e {
            self.expr(e);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Assign { targets, value } => {
                targets.iter().for_each(|t| self.expr(t));
                self.expr(value);
            }
            StmtKind::AugAssign { target, value, .. } => {
                self.expr(target);
                self.expr(value);
            }
            StmtKind::AnnAssign { target, value } => {
                self.expr(target);
                self.opt(value);
            }
            StmtKind::Return(v) | StmtKind::Raise(v) => self.opt(v),
            StmtKind::Del(ts) => ts.iter().for_each(|t| self.expr(t)),
            StmtKind::Assert { test, msg } => {
                self.expr(test);
                self.opt(msg);
            }
            StmtKind::Import(names) => {
                for (name, alias) in names {
                    let bound = alias
                        .clone()
                        .unwrap_or_else(|| name.split('.').next().unwrap_or(name).to_string());
                    self.imports.insert(bound);
                }
            }
            StmtKind::ImportFrom { names, .. } => {
                for (name, alias) in names {
                    self.imports
                        .insert(alias.clone().unwrap_or_else(|| name.clone()));
                }
            }
            StmtKind::If { test, body, orelse } | StmtKind::While { test, body, orelse } => {
                self.expr(test);
                self.stmts(body);
                self.stmts(orelse);
            }
            StmtKind::For {
                target,
                iter,
                body,
                orelse,
            } => {
                self.expr(target);
                self.expr(iter);
                self.stmts(body);
                self.stmts(orelse);
            }
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => {
                self.stmts(body);
                for h in handlers {
                    self.opt(&h.types);
                    self.stmts(&h.body);
                }
                self.stmts(orelse);
                self.stmts(finalbody);
            }
            StmtKind::With { items, body } => {
                for (c, v) in items {
                    self.expr(c);
                    self.opt(v);
                }
                self.stmts(body);
            }
            StmtKind::FunctionDef(d) => self.func(d),
            StmtKind::Pass
            | StmtKind::Break
            | StmtKind::Continue
            | StmtKind::Global(_)
            | StmtKind::Nonlocal(_) => {}
        }
    }

    fn func(&mut self, d: &FuncDef) {
        self.defs += 1;
        for (_, default) in d.params.args.iter().chain(d.params.kwonly.iter()) {
            self.opt(default);
        }
        self.stmts(&d.body);
    }

    fn gens(&mut self, gens: &[Comprehension]) {
        for g in gens {
            self.expr(&g.target);
            self.expr(&g.iter);
            g.ifs.iter().for_each(|e| self.expr(e));
        }
    }

    fn boxed(&mut self, e: &Option<Box<Expr>>) {
        if let Some(e) = e {
            self.expr(e);
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Name(_) | ExprKind::Const(_) => {}
            ExprKind::FString(pieces) => {
                for p in pieces {
                    if let FPiece::Expr { expr, .. } = p {
                        self.expr(expr);
                    }
                }
            }
            ExprKind::List(xs) | ExprKind::Tuple(xs) | ExprKind::Set(xs) => {
                xs.iter().for_each(|x| self.expr(x))
            }
            ExprKind::Dict(items) => {
                for (k, v) in items {
                    self.opt(k);
                    self.expr(v);
                }
            }
            ExprKind::BinOp { left, right, .. } => {
                self.expr(left);
                self.expr(right);
            }
            ExprKind::UnaryOp { operand, .. } => self.expr(operand),
            ExprKind::BoolOp { values, .. } => values.iter().for_each(|x| self.expr(x)),
            ExprKind::Compare { left, ops } => {
                self.expr(left);
                ops.iter().for_each(|(_, x)| self.expr(x));
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(test);
                self.expr(body);
                self.expr(orelse);
            }
            ExprKind::Lambda(d) => self.func(d),
            ExprKind::Call { func, args } => {
                if let ExprKind::Name(n) = &func.kind {
                    self.calls.insert(n.clone());
                }
                self.expr(func);
                for a in args {
                    match a {
                        Arg::Pos(x) | Arg::Star(x) | Arg::Kw(_, x) | Arg::DoubleStar(x) => {
                            self.expr(x)
                        }
                    }
                }
            }
            ExprKind::Attribute { value, .. } => self.expr(value),
            ExprKind::Subscript { value, index } => {
                self.expr(value);
                self.expr(index);
            }
            ExprKind::Slice { lower, upper, step } => {
                self.boxed(lower);
                self.boxed(upper);
                self.boxed(step);
            }
            ExprKind::ListComp { elt, gens }
            | ExprKind::SetComp { elt, gens }
            | ExprKind::GenExp { elt, gens } => {
                self.expr(elt);
                self.gens(gens);
            }
            ExprKind::DictComp { key, value, gens } => {
                self.expr(key);
                self.expr(value);
                self.gens(gens);
            }
            ExprKind::Starred(x) => self.expr(x),
            ExprKind::NamedExpr { value, .. } => self.expr(value),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_top_level_functions_verbatim() {
        let src = "import math\n\ndef area(r):\n    \"\"\"Area of a circle.\n\n    Uses pi.\n    \"\"\"\n    return math.pi * r ** 2\n\nprint(area(2))\n";
        let a = analyze(src).unwrap();
        assert_eq!(a.functions.len(), 1);
        let f = &a.functions[0];
        assert_eq!(f.name, "area");
        assert_eq!(f.docstring, "Area of a circle.\n\nUses pi.");
        assert!(f.source.starts_with("def area(r):"));
        assert!(f.source.ends_with("return math.pi * r ** 2"));
        assert_eq!(f.complexity, 1);
        assert_eq!(a.definition_count, 1);
        assert_eq!(a.called_names, vec!["area".to_string()]);
    }

    #[test]
    fn counts_nested_definitions_and_lambdas() {
        let src = "def outer():\n    def inner():\n        return 1\n    return sorted([3, 1], key=lambda v: -v)\n";
        let a = analyze(src).unwrap();
        assert_eq!(a.functions.len(), 1);
        assert_eq!(a.definition_count, 3);
    }

    #[test]
    fn called_names_skip_builtins_hooks_and_imports() {
        let src = "from statistics import mean\nx = mean([1, 2])\nprint(len('ab'))\ny = helper(x)\nsubmit_final_answer(y)\nz = math.sqrt(4)\n";
        let a = analyze(src).unwrap();
        assert_eq!(a.called_names, vec!["helper".to_string()]);
        assert_eq!(a.definition_count, 0);
    }
}
