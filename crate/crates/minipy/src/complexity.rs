//! McCabe cyclomatic complexity over the AST.

use crate::ast::*;
use crate::parser::parse_module;

/// `1 + decision points` of a function body. Nested functions and lambdas
/// count toward the enclosing function.
pub fn cyclomatic(def: &FuncDef) -> u32 {
    1 + stmts(&def.body)
}

/// Complexity of the single function defined by `source`.
pub fn complexity_of_source(source: &str) -> Result<u32, String> {
    let module = parse_module(source).map_err(|e| e.to_string())?;
    let defs: Vec<_> = module
        .body
        .iter()
        .filter_map(|s| match &s.kind {
            StmtKind::FunctionDef(d) => Some(d),
            _ => None,
        })
        .collect();
    match defs.as_slice() {
        [d] => Ok(cyclomatic(d)),
        [] => Err("source defines no function".into()),
        _ => Err("source defines more than one function".into()),
    }
}

fn stmts(body: &[Stmt]) -> u32 {
    body.iter().map(stmt).sum()
}

fn stmt(s: &Stmt) -> u32 {
    match &s.kind {
        StmtKind::Expr(e) => expr(e),
        StmtKind::Assign { targets, value } => targets.iter().map(expr).sum::<u32>() + expr(value),
        StmtKind::AugAssign { target, value, .. } => expr(target) + expr(value),
        StmtKind::AnnAssign { target, value } => {
            expr(target) + value.as_ref().map(expr).unwrap_or(0)
        }
        StmtKind::Return(v) | StmtKind::Raise(v) => v.as_ref().map(expr).unwrap_or(0),
        StmtKind::Del(ts) => ts.iter().map(expr).sum(),
        StmtKind::Assert { test, msg } => expr(test) + msg.as_ref().map(expr).unwrap_or(0),
        StmtKind::If { test, body, orelse } => 1 + expr(test) + stmts(body) + stmts(orelse),
        StmtKind::While { test, body, orelse } => 1 + expr(test) + stmts(body) + stmts(orelse),
        StmtKind::For {
            target,
            iter,
            body,
            orelse,
        } => 1 + expr(target) + expr(iter) + stmts(body) + stmts(orelse),
        StmtKind::Try {
            body,
            handlers,
            orelse,
            finalbody,
        } => {
            stmts(body)
                + handlers
                    .iter()
                    .map(|h| 1 + h.types.as_ref().map(expr).unwrap_or(0) + stmts(&h.body))
                    .sum::<u32>()
                + stmts(orelse)
                + stmts(finalbody)
        }
        StmtKind::With { items, body } => {
            items
                .iter()
                .map(|(c, v)| expr(c) + v.as_ref().map(expr).unwrap_or(0))
                .sum::<u32>()
                + stmts(body)
        }
        StmtKind::FunctionDef(d) => defaults(&d.params) + stmts(&d.body),
        StmtKind::Pass
        | StmtKind::Break
        | StmtKind::Continue
        | StmtKind::Global(_)
        | StmtKind::Nonlocal(_)
        | StmtKind::Import(_)
        | StmtKind::ImportFrom { .. } => 0,
    }
}

fn defaults(p: &Params) -> u32 {
    p.args
        .iter()
        .chain(p.kwonly.iter())
        .filter_map(|(_, d)| d.as_ref())
        .map(expr)
        .sum()
}

fn comps(gens: &[Comprehension]) -> u32 {
    gens.iter()
        .map(|g| g.ifs.len() as u32 + expr(&g.iter) + g.ifs.iter().map(expr).sum::<u32>())
        .sum()
}

fn opt(e: &Option<Box<Expr>>) -> u32 {
    e.as_deref().map(expr).unwrap_or(0)
}

fn expr(e: &Expr) -> u32 {
    match &e.kind {
        ExprKind::Name(_) | ExprKind::Const(_) => 0,
        ExprKind::FString(pieces) => pieces
            .iter()
            .map(|p| match p {
                FPiece::Expr { expr: x, .. } => expr(x),
                FPiece::Lit(_) => 0,
            })
            .sum(),
        ExprKind::List(xs) | ExprKind::Tuple(xs) | ExprKind::Set(xs) => xs.iter().map(expr).sum(),
        ExprKind::Dict(items) => items
            .iter()
            .map(|(k, v)| k.as_ref().map(expr).unwrap_or(0) + expr(v))
            .sum(),
        ExprKind::BinOp { left, right, .. } => expr(left) + expr(right),
        ExprKind::UnaryOp { operand, .. } => expr(operand),
        ExprKind::BoolOp { values, .. } => {
            values.len().saturating_sub(1) as u32 + values.iter().map(expr).sum::<u32>()
        }
        ExprKind::Compare { left, ops } => {
            expr(left) + ops.iter().map(|(_, x)| expr(x)).sum::<u32>()
        }
        ExprKind::IfExp { test, body, orelse } => 1 + expr(test) + expr(body) + expr(orelse),
        ExprKind::Lambda(d) => defaults(&d.params) + stmts(&d.body),
        ExprKind::Call { func, args } => {
            expr(func)
                + args
                    .iter()
                    .map(|a| match a {
                        Arg::Pos(x) | Arg::Star(x) | Arg::Kw(_, x) | Arg::DoubleStar(x) => expr(x),
                    })
                    .sum::<u32>()
        }
        ExprKind::Attribute { value, .. } => expr(value),
        ExprKind::Subscript { value, index } => expr(value) + expr(index),
        ExprKind::Slice { lower, upper, step } => opt(lower) + opt(upper) + opt(step),
        ExprKind::ListComp { elt, gens }
        | ExprKind::SetComp { elt, gens }
        | ExprKind::GenExp { elt, gens } => expr(elt) + comps(gens),
        ExprKind::DictComp { key, value, gens } => expr(key) + expr(value) + comps(gens),
        ExprKind::Starred(x) => expr(x),
        ExprKind::NamedExpr { value, .. } => expr(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(src: &str) -> u32 {
        complexity_of_source(src).expect("single function")
    }

    #[test]
    fn corpus() {
        let cases: &[(&str, u32)] = &[
            ("def f(x):\n    return x + 1\n", 1),
            ("def f(x):\n    if x > 0:\n        return 1\n    return 0\n", 2),
            ("def f(x):\n    if x > 0:\n        return 1\n    elif x < 0:\n        return -1\n    else:\n        return 0\n", 3),
            ("def f(xs):\n    t = 0\n    for x in xs:\n        if x and x > 2:\n            t += x\n    return t\n", 4),
            ("def f(x):\n    return 1 if x else 0\n", 2),
            ("def f(xs):\n    return [x for x in xs if x > 0 if x < 9]\n", 3),
            ("def f(x):\n    try:\n        return int(x)\n    except ValueError:\n        return 0\n    except TypeError:\n        return -1\n", 3),
            ("def f(n):\n    while n > 0:\n        n -= 1\n    return n\n", 2),
            ("def f(a, b, c):\n    return a or b or c\n", 3),
            ("def f(x):\n    with open(x) as fh:\n        for line in fh:\n            if line.strip() and not line.startswith('#') or x:\n                yield_ = line\n    while True:\n        break\n    return 1 if x else (2 if x > 1 else 3)\n", 8),
        ];
        for (src, want) in cases {
            assert_eq!(cc(src), *want, "{src}");
        }
    }

    #[test]
    fn rejects_non_function_sources() {
        assert!(complexity_of_source("x = 1\n").is_err());
        assert!(complexity_of_source("def a():\n    pass\ndef b():\n    pass\n").is_err());
        assert!(complexity_of_source("def a(:\n").is_err());
    }
}
