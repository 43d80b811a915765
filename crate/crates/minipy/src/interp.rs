//! Tree-walking evaluator.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use crate::ast::*;
use crate::builtins;
use crate::format;
use crate::methods;
use crate::value::*;

/// Maximum nesting of user function calls.
pub const MAX_DEPTH: usize = 200;
/// Upper bound on materialized sequence sizes.
pub const MAX_ITEMS: usize = 10_000_000;

/// Services the kernel needs from whoever embeds it.
pub trait Host {
    /// Answers a `get_relevant_actions(query, k)` call.
    fn retrieve(&mut self, query: &str, k: Option<i64>) -> Result<Vec<RetrievedAction>, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedAction {
    pub name: String,
    pub docstring: String,
    pub source: String,
    pub score: f64,
}

/// A host that has no retrieval backend.
pub struct NoHost;

impl Host for NoHost {
    fn retrieve(&mut self, _query: &str, _k: Option<i64>) -> Result<Vec<RetrievedAction>, String> {
        Err("action retrieval is not available in this session".into())
    }
}

pub struct PyExc {
    pub value: Rc<ExcObj>,
    pub tb: Vec<(String, u32)>,
    last_depth: Option<usize>,
}

pub enum Unwind {
    Exc(Box<PyExc>),
    Timeout,
}

pub type R<T> = Result<T, Unwind>;

pub fn exc(ty: &str, msg: impl Into<String>) -> Unwind {
    exc_from(Rc::new(ExcObj {
        ty: Rc::from(ty),
        args: vec![Value::str(msg.into())],
    }))
}

pub fn exc_from(value: Rc<ExcObj>) -> Unwind {
    Unwind::Exc(Box::new(PyExc {
        value,
        tb: Vec::new(),
        last_depth: None,
    }))
}

pub fn type_error(msg: impl Into<String>) -> Unwind {
    exc("TypeError", msg)
}

pub enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

pub type Env = Option<Rc<Scope>>;

pub struct Interp<'h> {
    pub globals: Rc<RefCell<HashMap<String, Value>>>,
    pub host: &'h mut dyn Host,
    pub out: String,
    pub out_limit: usize,
    pub out_truncated: bool,
    pub final_answer: Option<String>,
    pub cwd: std::path::PathBuf,
    deadline: Option<Instant>,
    ticks: u32,
    depth: usize,
    frames: Vec<String>,
    handling: Vec<Rc<ExcObj>>,
}

pub enum PyIter {
    Range { cur: i64, stop: i64, step: i64 },
    Items(std::vec::IntoIter<Value>),
}

impl Iterator for PyIter {
    type Item = Value;

    fn next(&mut self) -> Option<Value> {
        match self {
            PyIter::Range { cur, stop, step } => {
                if (*step > 0 && *cur < *stop) || (*step < 0 && *cur > *stop) {
                    let v = *cur;
                    *cur += *step;
                    Some(Value::Int(v))
                } else {
                    None
                }
            }
            PyIter::Items(it) => it.next(),
        }
    }
}

impl<'h> Interp<'h> {
    pub fn new(
        globals: Rc<RefCell<HashMap<String, Value>>>,
        host: &'h mut dyn Host,
        deadline: Option<Instant>,
        out_limit: usize,
    ) -> Self {
        Interp {
            globals,
            host,
            out: String::new(),
            out_limit,
            out_truncated: false,
            final_answer: None,
            cwd: std::path::PathBuf::from("."),
            deadline,
            ticks: 0,
            depth: 0,
            frames: vec!["<module>".into()],
            handling: Vec::new(),
        }
    }

    pub fn write_out(&mut self, s: &str) {
        if self.out_truncated {
            return;
        }
        if self.out.len() + s.len() > self.out_limit {
            let mut room = self.out_limit.saturating_sub(self.out.len());
            while room > 0 && !s.is_char_boundary(room) {
                room -= 1;
            }
            self.out.push_str(&s[..room]);
            self.out_truncated = true;
        } else {
            self.out.push_str(s);
        }
    }

    pub fn resolve(&self, path: &str) -> std::path::PathBuf {
        let p = std::path::Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cwd.join(p)
        }
    }

    pub fn tick(&mut self) -> R<()> {
        self.ticks = self.ticks.wrapping_add(1);
        if self.ticks & 0x1ff == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(Unwind::Timeout);
                }
            }
        }
        Ok(())
    }

    // ---- names --------------------------------------------------------

    pub fn load_name(&self, name: &str, env: &Env) -> R<Value> {
        if let Some(scope) = env {
            let is_global = scope.globals_decl.borrow().iter().any(|n| n == name);
            if !is_global {
                let mut cur = Some(scope.clone());
                while let Some(s) = cur {
                    if let Some(v) = s.vars.borrow().get(name) {
                        return Ok(v.clone());
                    }
                    cur = s.parent.clone();
                }
            }
        }
        if let Some(v) = self.globals.borrow().get(name) {
            return Ok(v.clone());
        }
        if let Some(v) = builtins::lookup(name) {
            return Ok(v);
        }
        Err(exc("NameError", format!("name '{name}' is not defined")))
    }

    pub fn store_name(&mut self, name: &str, value: Value, env: &Env) {
        match env {
            None => {
                self.globals.borrow_mut().insert(name.to_string(), value);
            }
            Some(scope) => {
                if scope.globals_decl.borrow().iter().any(|n| n == name) {
                    self.globals.borrow_mut().insert(name.to_string(), value);
                    return;
                }
                if scope.nonlocal_decl.borrow().iter().any(|n| n == name) {
                    let mut cur = scope.parent.clone();
                    while let Some(s) = cur {
                        if s.vars.borrow().contains_key(name) {
                            s.vars.borrow_mut().insert(name.to_string(), value);
                            return;
                        }
                        cur = s.parent.clone();
                    }
                }
                scope.vars.borrow_mut().insert(name.to_string(), value);
            }
        }
    }

    fn delete_name(&mut self, name: &str, env: &Env) -> R<()> {
        let removed = match env {
            Some(scope) if !scope.globals_decl.borrow().iter().any(|n| n == name) => {
                scope.vars.borrow_mut().remove(name).is_some()
            }
            _ => self.globals.borrow_mut().remove(name).is_some(),
        };
        if removed {
            Ok(())
        } else {
            Err(exc("NameError", format!("name '{name}' is not defined")))
        }
    }

    // ---- statements ---------------------------------------------------

    pub fn exec_block(&mut self, body: &[Stmt], env: &Env) -> R<Flow> {
        for stmt in body {
            match self.exec_stmt(stmt, env) {
                Ok(Flow::Normal) => {}
                Ok(flow) => return Ok(flow),
                Err(Unwind::Exc(mut e)) => {
                    self.note_frame(&mut e, stmt.line);
                    return Err(Unwind::Exc(e));
                }
                Err(t) => return Err(t),
            }
        }
        Ok(Flow::Normal)
    }

    pub fn note_frame(&self, e: &mut PyExc, line: u32) {
        if e.last_depth != Some(self.depth) {
            let name = self.frames.last().cloned().unwrap_or_default();
            e.tb.push((name, line));
            e.last_depth = Some(self.depth);
        }
    }

    pub fn exec_stmt(&mut self, stmt: &Stmt, env: &Env) -> R<Flow> {
        self.tick()?;
        match &stmt.kind {
            StmtKind::Expr(e) => {
                self.eval(e, env)?;
            }
            StmtKind::Assign { targets, value } => {
                let v = self.eval(value, env)?;
                for t in targets {
                    self.assign(t, v.clone(), env)?;
                }
            }
            StmtKind::AugAssign { target, op, value } => {
                let current = self.eval(target, env)?;
                let rhs = self.eval(value, env)?;
                let result = self.inplace_op(*op, current, rhs)?;
                self.assign(target, result, env)?;
            }
            StmtKind::AnnAssign { target, value } => {
                if let Some(v) = value {
                    let v = self.eval(v, env)?;
                    self.assign(target, v, env)?;
                }
            }
            StmtKind::Pass => {}
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Return(v) => {
                if env.is_none() {
                    return Err(exc("SyntaxError", "'return' outside function"));
                }
                let v = match v {
                    Some(e) => self.eval(e, env)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Raise(e) => return Err(self.raise(e.as_ref(), env)?),
            StmtKind::Global(names) => {
                if let Some(s) = env {
                    s.globals_decl.borrow_mut().extend(names.iter().cloned());
                }
            }
            StmtKind::Nonlocal(names) => {
                if let Some(s) = env {
                    s.nonlocal_decl.borrow_mut().extend(names.iter().cloned());
                }
            }
            StmtKind::Del(targets) => {
                for t in targets {
                    self.delete(t, env)?;
                }
            }
            StmtKind::Assert { test, msg } => {
                if !self.eval(test, env)?.truthy() {
                    let m = match msg {
                        Some(m) => self.eval(m, env)?.to_str(),
                        None => String::new(),
                    };
                    return Err(exc("AssertionError", m));
                }
            }
            StmtKind::Import(names) => {
                for (name, alias) in names {
                    let module = crate::modules::import(name)?;
                    match alias {
                        Some(a) => self.store_name(a, module, env),
                        None => {
                            let top = name.split('.').next().unwrap_or(name);
                            let top_mod = crate::modules::import(top)?;
                            self.store_name(top, top_mod, env);
                        }
                    }
                }
            }
            StmtKind::ImportFrom { module, names } => {
                let m = crate::modules::import(module)?;
                let Value::Module(mobj) = &m else {
                    unreachable!()
                };
                for (name, alias) in names {
                    if name == "*" {
                        for (k, v) in &mobj.attrs {
                            self.store_name(k, v.clone(), env);
                        }
                        continue;
                    }
                    let v = match mobj.attrs.get(name) {
                        Some(v) => v.clone(),
                        None => match crate::modules::import(&format!("{module}.{name}")) {
                            Ok(v) => v,
                            Err(_) => {
                                return Err(exc(
                                    "ImportError",
                                    format!("cannot import name '{name}' from '{module}'"),
                                ))
                            }
                        },
                    };
                    self.store_name(alias.as_deref().unwrap_or(name), v, env);
                }
            }
            StmtKind::If { test, body, orelse } => {
                if self.eval(test, env)?.truthy() {
                    return self.exec_block(body, env);
                }
                return self.exec_block(orelse, env);
            }
            StmtKind::While { test, body, orelse } => loop {
                self.tick()?;
                if !self.eval(test, env)?.truthy() {
                    return self.exec_block(orelse, env);
                }
                match self.exec_block(body, env)? {
                    Flow::Break => break,
                    Flow::Return(v) => return Ok(Flow::Return(v)),
                    Flow::Continue | Flow::Normal => {}
                }
            },
            StmtKind::For {
                target,
                iter,
                body,
                orelse,
            } => {
                let it = self.eval(iter, env)?;
                let items = self.iter_value(&it)?;
                let mut broke = false;
                for item in items {
                    self.tick()?;
                    self.assign(target, item, env)?;
                    match self.exec_block(body, env)? {
                        Flow::Break => {
                            broke = true;
                            break;
                        }
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Continue | Flow::Normal => {}
                    }
                }
                if !broke {
                    return self.exec_block(orelse, env);
                }
            }
            StmtKind::Try {
                body,
                handlers,
                orelse,
                finalbody,
            } => return self.exec_try(body, handlers, orelse, finalbody, env),
            StmtKind::With { items, body } => return self.exec_with(items, body, env),
            StmtKind::FunctionDef(def) => {
                let f = self.make_function(def, env)?;
                self.store_name(&def.name, f, env);
            }
        }
        Ok(Flow::Normal)
    }

    fn raise(&mut self, e: Option<&Expr>, env: &Env) -> R<Unwind> {
        let Some(e) = e else {
            return Ok(match self.handling.last() {
                Some(v) => exc_from(v.clone()),
                None => exc("RuntimeError", "No active exception to reraise"),
            });
        };
        let v = self.eval(e, env)?;
        Ok(match v {
            Value::Exception(obj) => exc_from(obj),
            Value::Type(t) if builtins::is_exception_type(&t) => exc_from(Rc::new(ExcObj {
                ty: t,
                args: Vec::new(),
            })),
            _ => type_error("exceptions must derive from BaseException"),
        })
    }

    fn exec_try(
        &mut self,
        body: &[Stmt],
        handlers: &[Handler],
        orelse: &[Stmt],
        finalbody: &[Stmt],
        env: &Env,
    ) -> R<Flow> {
        let mut result = self.exec_block(body, env);
        if let Err(Unwind::Exc(e)) = &result {
            let caught = e.value.clone();
            let mut matched = None;
            for h in handlers {
                let ok = match &h.types {
                    None => true,
                    Some(t) => {
                        let tv = match self.eval(t, env) {
                            Ok(v) => v,
                            Err(err) => {
                                result = Err(err);
                                break;
                            }
                        };
                        exception_matches(&caught.ty, &tv)
                    }
                };
                if ok {
                    matched = Some(h);
                    break;
                }
            }
            if let Some(h) = matched {
                if let Some(name) = &h.name {
                    self.store_name(name, Value::Exception(caught.clone()), env);
                }
                self.handling.push(caught);
                result = self.exec_block(&h.body, env);
                self.handling.pop();
            }
        } else if let Ok(Flow::Normal) = result {
            result = self.exec_block(orelse, env);
        }
        if !finalbody.is_empty() {
            match self.exec_block(finalbody, env)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        result
    }

    fn exec_with(&mut self, items: &[(Expr, Option<Expr>)], body: &[Stmt], env: &Env) -> R<Flow> {
        let mut files = Vec::new();
        for (ctx, var) in items {
            let v = self.eval(ctx, env)?;
            if let Value::File(f) = &v {
                files.push(f.clone());
            }
            if let Some(t) = var {
                self.assign(t, v, env)?;
            }
        }
        let result = self.exec_block(body, env);
        for f in files.iter().rev() {
            methods::close_file(f)?;
        }
        result
    }

    pub fn make_function(&mut self, def: &Rc<FuncDef>, env: &Env) -> R<Value> {
        let mut defaults = Vec::with_capacity(def.params.args.len());
        for (_, d) in &def.params.args {
            defaults.push(match d {
                Some(e) => Some(self.eval(e, env)?),
                None => None,
            });
        }
        let mut kw_defaults = Vec::with_capacity(def.params.kwonly.len());
        for (_, d) in &def.params.kwonly {
            kw_defaults.push(match d {
                Some(e) => Some(self.eval(e, env)?),
                None => None,
            });
        }
        Ok(Value::Function(Rc::new(Function {
            def: def.clone(),
            defaults,
            kw_defaults,
            closure: env.clone(),
        })))
    }

    // ---- targets ------------------------------------------------------

    pub fn assign(&mut self, target: &Expr, value: Value, env: &Env) -> R<()> {
        match &target.kind {
            ExprKind::Name(n) => {
                self.store_name(n, value, env);
                Ok(())
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                let values = self.collect(&value)?;
                let star = items
                    .iter()
                    .position(|t| matches!(t.kind, ExprKind::Starred(_)));
                match star {
                    None => {
                        if values.len() != items.len() {
                            return Err(if values.len() < items.len() {
                                exc(
                                    "ValueError",
                                    format!(
                                        "not enough values to unpack (expected {}, got {})",
                                        items.len(),
                                        values.len()
                                    ),
                                )
                            } else {
                                exc(
                                    "ValueError",
                                    format!("too many values to unpack (expected {})", items.len()),
                                )
                            });
                        }
                        for (t, v) in items.iter().zip(values) {
                            self.assign(t, v, env)?;
                        }
                    }
                    Some(si) => {
                        let after = items.len() - si - 1;
                        if values.len() < items.len() - 1 {
                            return Err(exc(
                                "ValueError",
                                format!(
                                    "not enough values to unpack (expected at least {}, got {})",
                                    items.len() - 1,
                                    values.len()
                                ),
                            ));
                        }
                        let mut values = values;
                        let tail = values.split_off(values.len() - after);
                        let middle = values.split_off(si);
                        for (t, v) in items[..si].iter().zip(values) {
                            self.assign(t, v, env)?;
                        }
                        if let ExprKind::Starred(inner) = &items[si].kind {
                            self.assign(inner, Value::list(middle), env)?;
                        }
                        for (t, v) in items[si + 1..].iter().zip(tail) {
                            self.assign(t, v, env)?;
                        }
                    }
                }
                Ok(())
            }
            ExprKind::Subscript { value: obj, index } => {
                let container = self.eval(obj, env)?;
                let idx = self.eval(index, env)?;
                self.set_item(&container, idx, value)
            }
            ExprKind::Attribute { value: obj, attr } => {
                let o = self.eval(obj, env)?;
                Err(exc(
                    "AttributeError",
                    format!("'{}' object attribute '{attr}' is read-only", o.type_name()),
                ))
            }
            ExprKind::Starred(_) => Err(exc(
                "SyntaxError",
                "starred assignment target must be in a list or tuple",
            )),
            _ => Err(exc("SyntaxError", "cannot assign to expression")),
        }
    }

    fn delete(&mut self, target: &Expr, env: &Env) -> R<()> {
        match &target.kind {
            ExprKind::Name(n) => self.delete_name(n, env),
            ExprKind::Subscript { value, index } => {
                let container = self.eval(value, env)?;
                let idx = self.eval(index, env)?;
                match &container {
                    Value::List(l) => {
                        let len = l.borrow().len();
                        let i = self.normalize_index(&idx, len, "list")?;
                        l.borrow_mut().remove(i);
                        Ok(())
                    }
                    Value::Dict(d) => {
                        let key = self.key(&idx)?;
                        if d.borrow_mut().shift_remove(&key).is_none() {
                            return Err(exc_from(Rc::new(ExcObj {
                                ty: Rc::from("KeyError"),
                                args: vec![idx],
                            })));
                        }
                        Ok(())
                    }
                    other => Err(type_error(format!(
                        "'{}' object does not support item deletion",
                        other.type_name()
                    ))),
                }
            }
            ExprKind::Tuple(items) | ExprKind::List(items) => {
                for t in items {
                    self.delete(t, env)?;
                }
                Ok(())
            }
            _ => Err(exc("SyntaxError", "cannot delete expression")),
        }
    }

    pub fn key(&self, v: &Value) -> R<Key> {
        Key::from_value(v).map_err(type_error)
    }

    pub fn set_item(&mut self, container: &Value, idx: Value, value: Value) -> R<()> {
        match container {
            Value::List(l) => {
                if let Some((start, stop, step)) = slice_parts(&idx) {
                    let len = l.borrow().len();
                    let (s, e, st) = self.slice_indices(start, stop, step, len)?;
                    if st != 1 {
                        return Err(exc(
                            "ValueError",
                            "extended slice assignment is not supported",
                        ));
                    }
                    let new_items = self.collect(&value)?;
                    let e = e.max(s);
                    l.borrow_mut().splice(s as usize..e as usize, new_items);
                    return Ok(());
                }
                let len = l.borrow().len();
                let i = self.normalize_index(&idx, len, "list")?;
                l.borrow_mut()[i] = value;
                Ok(())
            }
            Value::Dict(d) => {
                let key = self.key(&idx)?;
                let mut d = d.borrow_mut();
                match d.get_mut(&key) {
                    Some(entry) => entry.1 = value,
                    None => {
                        d.insert(key, (idx, value));
                    }
                }
                Ok(())
            }
            other => Err(type_error(format!(
                "'{}' object does not support item assignment",
                other.type_name()
            ))),
        }
    }

    // ---- expressions --------------------------------------------------

    pub fn eval(&mut self, e: &Expr, env: &Env) -> R<Value> {
        match &e.kind {
            ExprKind::Name(n) => self.load_name(n, env),
            ExprKind::Const(c) => Ok(match c {
                Const::None => Value::None,
                Const::Bool(b) => Value::Bool(*b),
                Const::Int(i) => Value::Int(*i),
                Const::Float(f) => Value::Float(*f),
                Const::Str(s) => Value::Str(s.clone()),
                Const::Ellipsis => Value::None,
            }),
            ExprKind::FString(pieces) => {
                let mut s = String::new();
                for p in pieces {
                    match p {
                        FPiece::Lit(l) => s.push_str(l),
                        FPiece::Expr { expr, conv, spec } => {
                            let v = self.eval(expr, env)?;
                            let v = match conv {
                                Some('r') | Some('a') => Value::str(v.repr()),
                                Some('s') => Value::str(v.to_str()),
                                _ => v,
                            };
                            s.push_str(&format::format_value(&v, spec.as_deref().unwrap_or(""))?);
                        }
                    }
                }
                Ok(Value::str(s))
            }
            ExprKind::List(items) => Ok(Value::list(self.eval_items(items, env)?)),
            ExprKind::Tuple(items) => Ok(Value::tuple(self.eval_items(items, env)?)),
            ExprKind::Set(items) => {
                let vals = self.eval_items(items, env)?;
                let mut set = Set::new();
                for v in vals {
                    set.insert(self.key(&v)?, v);
                }
                Ok(Value::Set(Rc::new(RefCell::new(set))))
            }
            ExprKind::Dict(items) => {
                let mut d = Dict::new();
                for (k, v) in items {
                    match k {
                        Some(k) => {
                            let kv = self.eval(k, env)?;
                            let vv = self.eval(v, env)?;
                            let key = self.key(&kv)?;
                            match d.get_mut(&key) {
                                Some(entry) => entry.1 = vv,
                                None => {
                                    d.insert(key, (kv, vv));
                                }
                            }
                        }
                        None => {
                            let src = self.eval(v, env)?;
                            let Value::Dict(src) = src else {
                                return Err(type_error("'**' argument must be a mapping"));
                            };
                            for (key, entry) in src.borrow().iter() {
                                d.insert(key.clone(), entry.clone());
                            }
                        }
                    }
                }
                Ok(Value::dict(d))
            }
            ExprKind::BinOp { left, op, right } => {
                let l = self.eval(left, env)?;
                let r = self.eval(right, env)?;
                self.binary_op(*op, l, r)
            }
            ExprKind::UnaryOp { op, operand } => {
                let v = self.eval(operand, env)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => i
                            .checked_neg()
                            .map(Value::Int)
                            .ok_or_else(|| exc("OverflowError", "integer overflow")),
                        Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                        Value::Float(f) => Ok(Value::Float(-f)),
                        other => Err(type_error(format!(
                            "bad operand type for unary -: '{}'",
                            other.type_name()
                        ))),
                    },
                    UnaryOp::Pos => match v {
                        Value::Int(_) | Value::Float(_) => Ok(v),
                        Value::Bool(b) => Ok(Value::Int(b as i64)),
                        other => Err(type_error(format!(
                            "bad operand type for unary +: '{}'",
                            other.type_name()
                        ))),
                    },
                    UnaryOp::Invert => match v {
                        Value::Int(i) => Ok(Value::Int(!i)),
                        Value::Bool(b) => Ok(Value::Int(!(b as i64))),
                        other => Err(type_error(format!(
                            "bad operand type for unary ~: '{}'",
                            other.type_name()
                        ))),
                    },
                }
            }
            ExprKind::BoolOp { op, values } => {
                let mut last = Value::None;
                for (i, v) in values.iter().enumerate() {
                    last = self.eval(v, env)?;
                    let t = last.truthy();
                    let short = match op {
                        BoolOp::And => !t,
                        BoolOp::Or => t,
                    };
                    if short || i == values.len() - 1 {
                        break;
                    }
                }
                Ok(last)
            }
            ExprKind::Compare { left, ops } => {
                let mut l = self.eval(left, env)?;
                for (op, re) in ops {
                    let r = self.eval(re, env)?;
                    if !self.compare(*op, &l, &r)? {
                        return Ok(Value::Bool(false));
                    }
                    l = r;
                }
                Ok(Value::Bool(true))
            }
            ExprKind::IfExp { test, body, orelse } => {
                if self.eval(test, env)?.truthy() {
                    self.eval(body, env)
                } else {
                    self.eval(orelse, env)
                }
            }
            ExprKind::Lambda(def) => self.make_function(def, env),
            ExprKind::Call { func, args } => {
                let f = self.eval(func, env)?;
                let mut pos = Vec::with_capacity(args.len());
                let mut kw: Vec<(String, Value)> = Vec::new();
                for a in args {
                    match a {
                        Arg::Pos(e) => pos.push(self.eval(e, env)?),
                        Arg::Star(e) => {
                            let v = self.eval(e, env)?;
                            pos.extend(self.collect(&v)?);
                        }
                        Arg::Kw(n, e) => kw.push((n.clone(), self.eval(e, env)?)),
                        Arg::DoubleStar(e) => {
                            let v = self.eval(e, env)?;
                            let Value::Dict(d) = v else {
                                return Err(type_error("argument after ** must be a mapping"));
                            };
                            for (k, v) in d.borrow().values() {
                                let Value::Str(k) = k else {
                                    return Err(type_error("keywords must be strings"));
                                };
                                kw.push((k.to_string(), v.clone()));
                            }
                        }
                    }
                }
                self.call(&f, pos, kw)
            }
            ExprKind::Attribute { value, attr } => {
                let v = self.eval(value, env)?;
                self.get_attr(&v, attr)
            }
            ExprKind::Subscript { value, index } => {
                let v = self.eval(value, env)?;
                let i = self.eval(index, env)?;
                self.get_item(&v, &i)
            }
            ExprKind::Slice { lower, upper, step } => {
                let mut part = |p: &Option<Box<Expr>>| -> R<Value> {
                    match p {
                        Some(e) => self.eval(e, env),
                        None => Ok(Value::None),
                    }
                };
                let l = part(lower)?;
                let u = part(upper)?;
                let s = part(step)?;
                // slices travel as a tagged tuple
                Ok(Value::tuple(vec![Value::Type(Rc::from("slice")), l, u, s]))
            }
            ExprKind::ListComp { elt, gens } => {
                let mut out = Vec::new();
                let scope = Scope::new(env.clone());
                self.comprehension(gens, 0, &Some(scope), &mut |me, env| {
                    out.push(me.eval(elt, env)?);
                    Ok(())
                })?;
                Ok(Value::list(out))
            }
            ExprKind::GenExp { elt, gens } => {
                let mut out = Vec::new();
                let scope = Scope::new(env.clone());
                self.comprehension(gens, 0, &Some(scope), &mut |me, env| {
                    out.push(me.eval(elt, env)?);
                    Ok(())
                })?;
                Ok(Value::list(out))
            }
            ExprKind::SetComp { elt, gens } => {
                let mut out = Set::new();
                let scope = Scope::new(env.clone());
                self.comprehension(gens, 0, &Some(scope), &mut |me, env| {
                    let v = me.eval(elt, env)?;
                    out.insert(me.key(&v)?, v);
                    Ok(())
                })?;
                Ok(Value::Set(Rc::new(RefCell::new(out))))
            }
            ExprKind::DictComp { key, value, gens } => {
                let mut out = Dict::new();
                let scope = Scope::new(env.clone());
                self.comprehension(gens, 0, &Some(scope), &mut |me, env| {
                    let k = me.eval(key, env)?;
                    let v = me.eval(value, env)?;
                    let hk = me.key(&k)?;
                    match out.get_mut(&hk) {
                        Some(entry) => entry.1 = v,
                        None => {
                            out.insert(hk, (k, v));
                        }
                    }
                    Ok(())
                })?;
                Ok(Value::dict(out))
            }
            ExprKind::Starred(_) => Err(exc("SyntaxError", "can't use starred expression here")),
            ExprKind::NamedExpr { target, value } => {
                let v = self.eval(value, env)?;
                // the walrus binds in the enclosing function, not the comprehension
                let mut target_env = env.clone();
                while let Some(s) = &target_env {
                    if s.parent.is_some() && s.vars.borrow().is_empty() {
                        target_env = s.parent.clone();
                    } else {
                        break;
                    }
                }
                self.store_name(target, v.clone(), &target_env);
                Ok(v)
            }
        }
    }

    fn eval_items(&mut self, items: &[Expr], env: &Env) -> R<Vec<Value>> {
        let mut out = Vec::with_capacity(items.len());
        for e in items {
            if let ExprKind::Starred(inner) = &e.kind {
                let v = self.eval(inner, env)?;
                out.extend(self.collect(&v)?);
            } else {
                out.push(self.eval(e, env)?);
            }
        }
        Ok(out)
    }

    fn comprehension(
        &mut self,
        gens: &[Comprehension],
        level: usize,
        env: &Env,
        emit: &mut dyn FnMut(&mut Self, &Env) -> R<()>,
    ) -> R<()> {
        if level == gens.len() {
            return emit(self, env);
        }
        let g = &gens[level];
        let it = self.eval(&g.iter, env)?;
        'items: for item in self.iter_value(&it)? {
            self.tick()?;
            self.assign(&g.target, item, env)?;
            for cond in &g.ifs {
                if !self.eval(cond, env)?.truthy() {
                    continue 'items;
                }
            }
            self.comprehension(gens, level + 1, env, emit)?;
        }
        Ok(())
    }

    // ---- calls --------------------------------------------------------

    pub fn call(&mut self, f: &Value, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        self.tick()?;
        match f {
            Value::Function(func) => self.call_function(func, args, kwargs),
            Value::Builtin(name) => builtins::call_builtin(self, name, args, kwargs),
            Value::Method(m) => methods::call_method(self, &m.recv, &m.name, args, kwargs),
            Value::Type(t) => builtins::construct(self, t, args, kwargs),
            other => Err(type_error(format!(
                "'{}' object is not callable",
                other.type_name()
            ))),
        }
    }

    pub fn call_function(
        &mut self,
        func: &Rc<Function>,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
    ) -> R<Value> {
        if self.depth >= MAX_DEPTH {
            return Err(exc("RecursionError", "maximum recursion depth exceeded"));
        }
        let scope = self.bind_args(func, args, kwargs)?;
        self.depth += 1;
        self.frames.push(func.def.name.clone());
        let env = Some(scope);
        let result = self.exec_block(&func.def.body, &env);
        self.frames.pop();
        self.depth -= 1;
        match result? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::None),
            Flow::Break | Flow::Continue => Err(exc("SyntaxError", "'break' outside loop")),
        }
    }

    fn bind_args(
        &mut self,
        func: &Rc<Function>,
        args: Vec<Value>,
        kwargs: Vec<(String, Value)>,
    ) -> R<Rc<Scope>> {
        let def = &func.def;
        let p = &def.params;
        let scope = Scope::new(func.closure.clone());
        let mut bound: Vec<Option<Value>> = vec![None; p.args.len()];
        let mut extra = Vec::new();
        for (i, a) in args.into_iter().enumerate() {
            if i < bound.len() {
                bound[i] = Some(a);
            } else {
                extra.push(a);
            }
        }
        if !extra.is_empty() && p.vararg.is_none() {
            return Err(type_error(format!(
                "{}() takes {} positional argument{} but {} were given",
                def.name,
                p.args.len(),
                if p.args.len() == 1 { "" } else { "s" },
                p.args.len() + extra.len()
            )));
        }
        let mut kw_bound: Vec<Option<Value>> = vec![None; p.kwonly.len()];
        let mut extra_kw = Dict::new();
        for (k, v) in kwargs {
            if let Some(i) = p.args.iter().position(|(n, _)| *n == k) {
                if bound[i].is_some() {
                    return Err(type_error(format!(
                        "{}() got multiple values for argument '{k}'",
                        def.name
                    )));
                }
                bound[i] = Some(v);
            } else if let Some(i) = p.kwonly.iter().position(|(n, _)| *n == k) {
                kw_bound[i] = Some(v);
            } else if p.kwarg.is_some() {
                extra_kw.insert(Key::Str(Rc::from(k.as_str())), (Value::str(&k), v));
            } else {
                return Err(type_error(format!(
                    "{}() got an unexpected keyword argument '{k}'",
                    def.name
                )));
            }
        }
        let mut missing = Vec::new();
        {
            let mut vars = scope.vars.borrow_mut();
            for (i, slot) in bound.into_iter().enumerate() {
                let name = &p.args[i].0;
                match slot.or_else(|| func.defaults[i].clone()) {
                    Some(v) => {
                        vars.insert(name.clone(), v);
                    }
                    None => missing.push(name.clone()),
                }
            }
            if !missing.is_empty() {
                let names: Vec<String> = missing.iter().map(|n| format!("'{n}'")).collect();
                return Err(type_error(format!(
                    "{}() missing {} required positional argument{}: {}",
                    def.name,
                    missing.len(),
                    if missing.len() == 1 { "" } else { "s" },
                    names.join(" and ")
                )));
            }
            for (i, slot) in kw_bound.into_iter().enumerate() {
                let name = &p.kwonly[i].0;
                match slot.or_else(|| func.kw_defaults[i].clone()) {
                    Some(v) => {
                        vars.insert(name.clone(), v);
                    }
                    None => {
                        return Err(type_error(format!(
                            "{}() missing 1 required keyword-only argument: '{name}'",
                            def.name
                        )))
                    }
                }
            }
            if let Some(va) = &p.vararg {
                vars.insert(va.clone(), Value::tuple(extra));
            }
            if let Some(kw) = &p.kwarg {
                vars.insert(kw.clone(), Value::dict(extra_kw));
            }
        }
        Ok(scope)
    }

    // ---- attributes and items ----------------------------------------

    pub fn get_attr(&mut self, v: &Value, attr: &str) -> R<Value> {
        match v {
            Value::Module(m) => m.attrs.get(attr).cloned().ok_or_else(|| {
                exc(
                    "AttributeError",
                    format!("module '{}' has no attribute '{attr}'", m.name),
                )
            }),
            Value::Exception(e) if attr == "args" => Ok(Value::tuple(e.args.clone())),
            Value::Function(f) => match attr {
                "__name__" => Ok(Value::str(&f.def.name)),
                "__doc__" => Ok(f
                    .def
                    .docstring
                    .as_ref()
                    .map(Value::str)
                    .unwrap_or(Value::None)),
                _ => Err(exc(
                    "AttributeError",
                    format!("'function' object has no attribute '{attr}'"),
                )),
            },
            Value::Type(t) if attr == "__name__" => Ok(Value::Str(t.clone())),
            Value::Builtin(name) if attr == "__name__" => {
                Ok(Value::str(name.rsplit('.').next().unwrap_or(name)))
            }
            Value::Type(t) if methods::has_method(&builtins::prototype(t), attr) => {
                // unbound method, e.g. str.lower
                Ok(Value::Method(Rc::new(BoundMethod {
                    recv: Value::Type(t.clone()),
                    name: Rc::from(attr),
                })))
            }
            _ if methods::has_method(v, attr) => Ok(Value::Method(Rc::new(BoundMethod {
                recv: v.clone(),
                name: Rc::from(attr),
            }))),
            Value::File(f) if attr == "closed" => Ok(Value::Bool(f.borrow().closed)),
            Value::File(f) if attr == "name" => Ok(Value::str(&f.borrow().path)),
            Value::Range(a, b, c) => match attr {
                "start" => Ok(Value::Int(*a)),
                "stop" => Ok(Value::Int(*b)),
                "step" => Ok(Value::Int(*c)),
                _ => Err(no_attr(v, attr)),
            },
            _ => Err(no_attr(v, attr)),
        }
    }

    pub fn normalize_index(&self, idx: &Value, len: usize, what: &str) -> R<usize> {
        let i = match idx {
            Value::Int(i) => *i,
            Value::Bool(b) => *b as i64,
            other => {
                return Err(type_error(format!(
                    "{what} indices must be integers or slices, not {}",
                    other.type_name()
                )))
            }
        };
        let real = if i < 0 { i + len as i64 } else { i };
        if real < 0 || real >= len as i64 {
            return Err(exc("IndexError", format!("{what} index out of range")));
        }
        Ok(real as usize)
    }

    pub fn slice_indices(
        &self,
        start: &Value,
        stop: &Value,
        step: &Value,
        len: usize,
    ) -> R<(i64, i64, i64)> {
        let len = len as i64;
        let step = match step {
            Value::None => 1,
            Value::Int(i) => *i,
            _ => return Err(type_error("slice indices must be integers or None")),
        };
        if step == 0 {
            return Err(exc("ValueError", "slice step cannot be zero"));
        }
        let conv = |v: &Value, default: i64| -> R<i64> {
            match v {
                Value::None => Ok(default),
                Value::Int(i) => {
                    let mut i = *i;
                    if i < 0 {
                        i += len;
                        if i < 0 {
                            i = if step < 0 { -1 } else { 0 };
                        }
                    } else if i >= len {
                        i = if step < 0 { len - 1 } else { len };
                    }
                    Ok(i)
                }
                _ => Err(type_error("slice indices must be integers or None")),
            }
        };
        let (ds, de) = if step > 0 { (0, len) } else { (len - 1, -1) };
        Ok((conv(start, ds)?, conv(stop, de)?, step))
    }

    fn slice_positions(&self, idx: (&Value, &Value, &Value), len: usize) -> R<Vec<usize>> {
        let (s, e, st) = self.slice_indices(idx.0, idx.1, idx.2, len)?;
        let mut out = Vec::new();
        let mut i = s;
        while (st > 0 && i < e) || (st < 0 && i > e) {
            out.push(i as usize);
            i += st;
        }
        Ok(out)
    }

    pub fn get_item(&mut self, v: &Value, idx: &Value) -> R<Value> {
        if let Some((a, b, c)) = slice_parts(idx) {
            return match v {
                Value::List(l) => {
                    let l = l.borrow();
                    let pos = self.slice_positions((a, b, c), l.len())?;
                    Ok(Value::list(pos.into_iter().map(|i| l[i].clone()).collect()))
                }
                Value::Tuple(t) => {
                    let pos = self.slice_positions((a, b, c), t.len())?;
                    Ok(Value::tuple(
                        pos.into_iter().map(|i| t[i].clone()).collect(),
                    ))
                }
                Value::Str(s) => {
                    let chars: Vec<char> = s.chars().collect();
                    let pos = self.slice_positions((a, b, c), chars.len())?;
                    Ok(Value::str(
                        pos.into_iter().map(|i| chars[i]).collect::<String>(),
                    ))
                }
                Value::Range(..) => {
                    let items = self.collect(v)?;
                    let pos = self.slice_positions((a, b, c), items.len())?;
                    Ok(Value::list(
                        pos.into_iter().map(|i| items[i].clone()).collect(),
                    ))
                }
                other => Err(type_error(format!(
                    "'{}' object is not subscriptable",
                    other.type_name()
                ))),
            };
        }
        match v {
            Value::List(l) => {
                let l = l.borrow();
                let i = self.normalize_index(idx, l.len(), "list")?;
                Ok(l[i].clone())
            }
            Value::Tuple(t) => {
                let i = self.normalize_index(idx, t.len(), "tuple")?;
                Ok(t[i].clone())
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let i = self.normalize_index(idx, chars.len(), "string")?;
                Ok(Value::str(chars[i].to_string()))
            }
            Value::Range(a, b, c) => {
                let len = range_len(*a, *b, *c) as usize;
                let i = self.normalize_index(idx, len, "range object")?;
                Ok(Value::Int(a + c * i as i64))
            }
            Value::Dict(d) => {
                let key = self.key(idx)?;
                match d.borrow().get(&key) {
                    Some((_, v)) => Ok(v.clone()),
                    None => Err(exc_from(Rc::new(ExcObj {
                        ty: Rc::from("KeyError"),
                        args: vec![idx.clone()],
                    }))),
                }
            }
            Value::Match(m) => methods::match_group(m, idx),
            other => Err(type_error(format!(
                "'{}' object is not subscriptable",
                other.type_name()
            ))),
        }
    }

    // ---- iteration ----------------------------------------------------

    pub fn iter_value(&mut self, v: &Value) -> R<PyIter> {
        Ok(match v {
            Value::Range(a, b, c) => PyIter::Range {
                cur: *a,
                stop: *b,
                step: *c,
            },
            Value::List(l) => PyIter::Items(l.borrow().clone().into_iter()),
            Value::Tuple(t) => PyIter::Items(t.as_ref().clone().into_iter()),
            Value::Str(s) => PyIter::Items(
                s.chars()
                    .map(|c| Value::str(c.to_string()))
                    .collect::<Vec<_>>()
                    .into_iter(),
            ),
            Value::Dict(d) => PyIter::Items(
                d.borrow()
                    .values()
                    .map(|(k, _)| k.clone())
                    .collect::<Vec<_>>()
                    .into_iter(),
            ),
            Value::Set(s) => {
                PyIter::Items(s.borrow().values().cloned().collect::<Vec<_>>().into_iter())
            }
            Value::File(f) => PyIter::Items(methods::file_lines(f)?.into_iter()),
            other => {
                return Err(type_error(format!(
                    "'{}' object is not iterable",
                    other.type_name()
                )))
            }
        })
    }

    pub fn collect(&mut self, v: &Value) -> R<Vec<Value>> {
        if let Value::Range(a, b, c) = v {
            if range_len(*a, *b, *c) > MAX_ITEMS as i64 {
                return Err(exc("MemoryError", "sequence too large for this kernel"));
            }
        }
        let mut out = Vec::new();
        for item in self.iter_value(v)? {
            self.tick()?;
            out.push(item);
        }
        Ok(out)
    }

    // ---- operators ----------------------------------------------------

    fn inplace_op(&mut self, op: BinOp, current: Value, rhs: Value) -> R<Value> {
        // lists extend in place
        if let (BinOp::Add, Value::List(l)) = (op, &current) {
            let items = self.collect(&rhs)?;
            l.borrow_mut().extend(items);
            return Ok(current);
        }
        self.binary_op(op, current, rhs)
    }

    pub fn binary_op(&mut self, op: BinOp, l: Value, r: Value) -> R<Value> {
        use Value::*;
        let unsupported = |l: &Value, r: &Value| {
            type_error(format!(
                "unsupported operand type(s) for {}: '{}' and '{}'",
                op.symbol(),
                l.type_name(),
                r.type_name()
            ))
        };
        let li = as_int(&l);
        let ri = as_int(&r);
        if let (Some(a), Some(b)) = (li, ri) {
            return int_op(op, a, b);
        }
        if let (Some(a), Some(b)) = (as_float(&l), as_float(&r)) {
            return float_op(op, a, b).ok_or_else(|| unsupported(&l, &r))?;
        }
        match (op, &l, &r) {
            (BinOp::Add, Str(a), Str(b)) => {
                let mut s = String::with_capacity(a.len() + b.len());
                s.push_str(a);
                s.push_str(b);
                Ok(Value::str(s))
            }
            (BinOp::Add, List(a), List(b)) => {
                let mut v = a.borrow().clone();
                v.extend(b.borrow().iter().cloned());
                Ok(Value::list(v))
            }
            (BinOp::Add, Tuple(a), Tuple(b)) => {
                let mut v = a.as_ref().clone();
                v.extend(b.iter().cloned());
                Ok(Value::tuple(v))
            }
            (BinOp::Mul, Str(_) | List(_) | Tuple(_), Int(_) | Bool(_))
            | (BinOp::Mul, Int(_) | Bool(_), Str(_) | List(_) | Tuple(_)) => {
                let (seq, n) = if matches!(l, Int(_) | Bool(_)) {
                    (&r, li)
                } else {
                    (&l, ri)
                };
                let n = n.unwrap_or(0).max(0) as usize;
                match seq {
                    Str(s) => {
                        if s.len().saturating_mul(n) > MAX_ITEMS * 4 {
                            return Err(exc("MemoryError", "string too large for this kernel"));
                        }
                        Ok(Value::str(s.repeat(n)))
                    }
                    List(items) => {
                        let items = items.borrow();
                        if items.len().saturating_mul(n) > MAX_ITEMS {
                            return Err(exc("MemoryError", "list too large for this kernel"));
                        }
                        let mut v = Vec::with_capacity(items.len() * n);
                        for _ in 0..n {
                            v.extend(items.iter().cloned());
                        }
                        Ok(Value::list(v))
                    }
                    Tuple(items) => {
                        if items.len().saturating_mul(n) > MAX_ITEMS {
                            return Err(exc("MemoryError", "tuple too large for this kernel"));
                        }
                        let mut v = Vec::with_capacity(items.len() * n);
                        for _ in 0..n {
                            v.extend(items.iter().cloned());
                        }
                        Ok(Value::tuple(v))
                    }
                    _ => unreachable!(),
                }
            }
            (BinOp::Mod, Str(fmt), _) => Ok(Value::str(format::percent_format(self, fmt, &r)?)),
            (BinOp::BitOr | BinOp::BitAnd | BinOp::Sub | BinOp::BitXor, Set(a), Set(b)) => {
                let a = a.borrow();
                let b = b.borrow();
                let out: crate::value::Set = match op {
                    BinOp::BitOr => a
                        .iter()
                        .chain(b.iter())
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                    BinOp::BitAnd => a
                        .iter()
                        .filter(|(k, _)| b.contains_key(*k))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                    BinOp::Sub => a
                        .iter()
                        .filter(|(k, _)| !b.contains_key(*k))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                    _ => a
                        .iter()
                        .filter(|(k, _)| !b.contains_key(*k))
                        .chain(b.iter().filter(|(k, _)| !a.contains_key(*k)))
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                };
                Ok(Value::Set(Rc::new(RefCell::new(out))))
            }
            (BinOp::BitOr, Dict(a), Dict(b)) => {
                let mut out = a.borrow().clone();
                for (k, v) in b.borrow().iter() {
                    out.insert(k.clone(), v.clone());
                }
                Ok(Value::dict(out))
            }
            _ => Err(unsupported(&l, &r)),
        }
    }

    pub fn compare(&mut self, op: CmpOp, l: &Value, r: &Value) -> R<bool> {
        Ok(match op {
            CmpOp::Eq => py_eq(l, r),
            CmpOp::NotEq => !py_eq(l, r),
            CmpOp::Is => is_same(l, r),
            CmpOp::IsNot => !is_same(l, r),
            CmpOp::In => self.contains(r, l)?,
            CmpOp::NotIn => !self.contains(r, l)?,
            CmpOp::Lt => py_cmp(l, r, "<")? == Ordering::Less,
            CmpOp::LtE => py_cmp(l, r, "<=")? != Ordering::Greater,
            CmpOp::Gt => py_cmp(l, r, ">")? == Ordering::Greater,
            CmpOp::GtE => py_cmp(l, r, ">=")? != Ordering::Less,
        })
    }

    pub fn contains(&mut self, container: &Value, item: &Value) -> R<bool> {
        Ok(match container {
            Value::Str(s) => match item {
                Value::Str(sub) => s.contains(sub.as_ref()),
                other => {
                    return Err(type_error(format!(
                        "'in <string>' requires string as left operand, not {}",
                        other.type_name()
                    )))
                }
            },
            Value::List(l) => l.borrow().iter().any(|v| py_eq(v, item)),
            Value::Tuple(t) => t.iter().any(|v| py_eq(v, item)),
            Value::Dict(d) => d.borrow().contains_key(&self.key(item)?),
            Value::Set(s) => s.borrow().contains_key(&self.key(item)?),
            Value::Range(a, b, c) => match as_int(item) {
                Some(i) => {
                    let in_bounds = if *c > 0 {
                        i >= *a && i < *b
                    } else {
                        i <= *a && i > *b
                    };
                    in_bounds && (i - a) % c == 0
                }
                None => false,
            },
            other => {
                return Err(type_error(format!(
                    "argument of type '{}' is not iterable",
                    other.type_name()
                )))
            }
        })
    }
}

fn no_attr(v: &Value, attr: &str) -> Unwind {
    exc(
        "AttributeError",
        format!("'{}' object has no attribute '{attr}'", v.type_name()),
    )
}

/// Unpacks the tagged tuple produced for slice expressions.
pub fn slice_parts(v: &Value) -> Option<(&Value, &Value, &Value)> {
    match v {
        Value::Tuple(t) if t.len() == 4 && matches!(&t[0], Value::Type(n) if &**n == "slice") => {
            Some((&t[1], &t[2], &t[3]))
        }
        _ => None,
    }
}

pub fn exception_matches(ty: &str, handler: &Value) -> bool {
    match handler {
        Value::Type(t) => builtins::is_subclass(ty, t),
        Value::Tuple(items) => items.iter().any(|h| exception_matches(ty, h)),
        _ => false,
    }
}

pub fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Int(i) => Some(*i),
        Value::Bool(b) => Some(*b as i64),
        _ => None,
    }
}

pub fn as_float(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Bool(b) => Some(*b as i64 as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn overflow() -> Unwind {
    exc(
        "OverflowError",
        "integer overflow (this kernel uses 64-bit integers)",
    )
}

fn int_op(op: BinOp, a: i64, b: i64) -> R<Value> {
    Ok(match op {
        BinOp::Add => Value::Int(a.checked_add(b).ok_or_else(overflow)?),
        BinOp::Sub => Value::Int(a.checked_sub(b).ok_or_else(overflow)?),
        BinOp::Mul => Value::Int(a.checked_mul(b).ok_or_else(overflow)?),
        BinOp::Div => {
            if b == 0 {
                return Err(exc("ZeroDivisionError", "division by zero"));
            }
            Value::Float(a as f64 / b as f64)
        }
        BinOp::FloorDiv => {
            if b == 0 {
                return Err(exc(
                    "ZeroDivisionError",
                    "integer division or modulo by zero",
                ));
            }
            Value::Int(a.div_euclid(b) - if b < 0 && a.rem_euclid(b) != 0 { 1 } else { 0 })
        }
        BinOp::Mod => {
            if b == 0 {
                return Err(exc(
                    "ZeroDivisionError",
                    "integer division or modulo by zero",
                ));
            }
            let m = a % b;
            Value::Int(if m != 0 && ((m < 0) != (b < 0)) {
                m + b
            } else {
                m
            })
        }
        BinOp::Pow => {
            if b < 0 {
                Value::Float((a as f64).powf(b as f64))
            } else {
                let e = u32::try_from(b).map_err(|_| overflow())?;
                Value::Int(a.checked_pow(e).ok_or_else(overflow)?)
            }
        }
        BinOp::LShift => {
            if b < 0 {
                return Err(exc("ValueError", "negative shift count"));
            }
            if b >= 63 || (a != 0 && (a.abs().leading_zeros() as i64) <= b) {
                return Err(overflow());
            }
            Value::Int(a << b)
        }
        BinOp::RShift => {
            if b < 0 {
                return Err(exc("ValueError", "negative shift count"));
            }
            Value::Int(a >> b.min(63))
        }
        BinOp::BitAnd => Value::Int(a & b),
        BinOp::BitOr => Value::Int(a | b),
        BinOp::BitXor => Value::Int(a ^ b),
        BinOp::MatMul => {
            return Err(type_error(
                "unsupported operand type(s) for @: 'int' and 'int'",
            ))
        }
    })
}

fn float_op(op: BinOp, a: f64, b: f64) -> Option<R<Value>> {
    Some(Ok(Value::Float(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Some(Err(exc("ZeroDivisionError", "float division by zero")));
            }
            a / b
        }
        BinOp::FloorDiv => {
            if b == 0.0 {
                return Some(Err(exc(
                    "ZeroDivisionError",
                    "float floor division by zero",
                )));
            }
            (a / b).floor()
        }
        BinOp::Mod => {
            if b == 0.0 {
                return Some(Err(exc("ZeroDivisionError", "float modulo")));
            }
            let m = a % b;
            if m != 0.0 && ((m < 0.0) != (b < 0.0)) {
                m + b
            } else {
                m
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                return Some(Err(exc(
                    "ZeroDivisionError",
                    "0.0 cannot be raised to a negative power",
                )));
            }
            a.powf(b)
        }
        _ => return None,
    })))
}

pub fn py_eq(a: &Value, b: &Value) -> bool {
    use Value::*;
    if let (Some(x), Some(y)) = (as_float(a), as_float(b)) {
        if let (Some(i), Some(j)) = (as_int(a), as_int(b)) {
            return i == j;
        }
        return x == y;
    }
    match (a, b) {
        (None, None) => true,
        (Str(x), Str(y)) => x == y,
        (List(x), List(y)) => {
            Rc::ptr_eq(x, y) || {
                let x = x.borrow();
                let y = y.borrow();
                x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q))
            }
        }
        (Tuple(x), Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| py_eq(p, q))
        }
        (Dict(x), Dict(y)) => {
            Rc::ptr_eq(x, y) || {
                let x = x.borrow();
                let y = y.borrow();
                x.len() == y.len()
                    && x.iter()
                        .all(|(k, (_, v))| y.get(k).is_some_and(|(_, w)| py_eq(v, w)))
            }
        }
        (Set(x), Set(y)) => {
            let x = x.borrow();
            let y = y.borrow();
            x.len() == y.len() && x.keys().all(|k| y.contains_key(k))
        }
        (Range(a1, b1, c1), Range(a2, b2, c2)) => (a1, b1, c1) == (a2, b2, c2),
        (Type(x), Type(y)) => x == y,
        (Builtin(x), Builtin(y)) => x == y,
        (Function(x), Function(y)) => Rc::ptr_eq(x, y),
        (Exception(x), Exception(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn is_same(a: &Value, b: &Value) -> bool {
    use Value::*;
    match (a, b) {
        (None, None) => true,
        (Bool(x), Bool(y)) => x == y,
        (Int(x), Int(y)) => x == y,
        (Str(x), Str(y)) => Rc::ptr_eq(x, y) || x == y,
        (List(x), List(y)) => Rc::ptr_eq(x, y),
        (Dict(x), Dict(y)) => Rc::ptr_eq(x, y),
        (Set(x), Set(y)) => Rc::ptr_eq(x, y),
        (Tuple(x), Tuple(y)) => Rc::ptr_eq(x, y),
        (Function(x), Function(y)) => Rc::ptr_eq(x, y),
        (Type(x), Type(y)) => x == y,
        (Builtin(x), Builtin(y)) => x == y,
        _ => false,
    }
}

pub fn py_cmp(a: &Value, b: &Value, sym: &str) -> R<Ordering> {
    use Value::*;
    if let (Some(x), Some(y)) = (as_int(a), as_int(b)) {
        return Ok(x.cmp(&y));
    }
    if let (Some(x), Some(y)) = (as_float(a), as_float(b)) {
        return Ok(x.partial_cmp(&y).unwrap_or(Ordering::Equal));
    }
    match (a, b) {
        (Str(x), Str(y)) => Ok(x.cmp(y)),
        (List(x), List(y)) => seq_cmp(&x.borrow(), &y.borrow(), sym),
        (Tuple(x), Tuple(y)) => seq_cmp(x, y, sym),
        (Set(x), Set(y)) => {
            let x = x.borrow();
            let y = y.borrow();
            let sub = x.keys().all(|k| y.contains_key(k));
            let sup = y.keys().all(|k| x.contains_key(k));
            Ok(match (sub, sup) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Less,
                (false, true) => Ordering::Greater,
                // incomparable sets: make every strict/non-strict test false
                (false, false) => {
                    return Ok(if sym.starts_with('<') {
                        Ordering::Greater
                    } else {
                        Ordering::Less
                    })
                }
            })
        }
        _ => Err(type_error(format!(
            "'{sym}' not supported between instances of '{}' and '{}'",
            a.type_name(),
            b.type_name()
        ))),
    }
}

fn seq_cmp(x: &[Value], y: &[Value], sym: &str) -> R<Ordering> {
    for (p, q) in x.iter().zip(y.iter()) {
        if !py_eq(p, q) {
            return py_cmp(p, q, sym);
        }
    }
    Ok(x.len().cmp(&y.len()))
}
