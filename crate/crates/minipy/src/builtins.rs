//! Builtin functions, types and the exception hierarchy.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::rc::Rc;

use crate::interp::{as_float, as_int, exc, py_cmp, type_error, Interp, R};
use crate::value::*;

/// Builtin callables that are plain functions.
pub const FUNCTIONS: &[&str] = &[
    "abs",
    "all",
    "any",
    "bin",
    "callable",
    "chr",
    "dir",
    "divmod",
    "enumerate",
    "filter",
    "format",
    "getattr",
    "hasattr",
    "hash",
    "hex",
    "id",
    "isinstance",
    "issubclass",
    "iter",
    "len",
    "map",
    "max",
    "min",
    "next",
    "oct",
    "open",
    "ord",
    "pow",
    "print",
    "repr",
    "reversed",
    "round",
    "sorted",
    "sum",
    "zip",
];

/// Builtin type names usable as constructors and in `isinstance`.
pub const TYPES: &[&str] = &[
    "bool",
    "dict",
    "float",
    "frozenset",
    "int",
    "list",
    "object",
    "range",
    "set",
    "str",
    "tuple",
    "type",
];

const EXCEPTIONS: &[(&str, &str)] = &[
    ("BaseException", ""),
    ("Exception", "BaseException"),
    ("KeyboardInterrupt", "BaseException"),
    ("SystemExit", "BaseException"),
    ("ArithmeticError", "Exception"),
    ("ZeroDivisionError", "ArithmeticError"),
    ("OverflowError", "ArithmeticError"),
    ("LookupError", "Exception"),
    ("KeyError", "LookupError"),
    ("IndexError", "LookupError"),
    ("ValueError", "Exception"),
    ("UnicodeError", "ValueError"),
    ("JSONDecodeError", "ValueError"),
    ("StatisticsError", "ValueError"),
    ("TypeError", "Exception"),
    ("NameError", "Exception"),
    ("UnboundLocalError", "NameError"),
    ("AttributeError", "Exception"),
    ("RuntimeError", "Exception"),
    ("RecursionError", "RuntimeError"),
    ("NotImplementedError", "RuntimeError"),
    ("AssertionError", "Exception"),
    ("ImportError", "Exception"),
    ("ModuleNotFoundError", "ImportError"),
    ("OSError", "Exception"),
    ("FileNotFoundError", "OSError"),
    ("FileExistsError", "OSError"),
    ("IsADirectoryError", "OSError"),
    ("PermissionError", "OSError"),
    ("UnsupportedOperation", "OSError"),
    ("StopIteration", "Exception"),
    ("MemoryError", "Exception"),
    ("EOFError", "Exception"),
    ("SyntaxError", "Exception"),
    ("IndentationError", "SyntaxError"),
    ("Warning", "Exception"),
    ("error", "Exception"),
];

/// Every name resolvable without an import.
pub fn all_names() -> impl Iterator<Item = &'static str> {
    FUNCTIONS
        .iter()
        .chain(TYPES.iter())
        .copied()
        .chain(EXCEPTIONS.iter().map(|(n, _)| *n).filter(|n| *n != "error"))
        .chain(["IOError", "EnvironmentError"])
}

pub fn lookup(name: &str) -> Option<Value> {
    if let Some(f) = FUNCTIONS.iter().find(|f| **f == name) {
        return Some(Value::Builtin(f));
    }
    if TYPES.contains(&name) {
        return Some(Value::Type(Rc::from(name)));
    }
    if matches!(name, "IOError" | "EnvironmentError") {
        return Some(Value::Type(Rc::from("OSError")));
    }
    if name != "error" && is_exception_type(name) {
        return Some(Value::Type(Rc::from(name)));
    }
    None
}

pub fn is_exception_type(name: &str) -> bool {
    EXCEPTIONS.iter().any(|(n, _)| *n == name)
}

pub fn is_subclass(ty: &str, base: &str) -> bool {
    let mut cur = ty;
    loop {
        if cur == base {
            return true;
        }
        match EXCEPTIONS.iter().find(|(n, _)| *n == cur) {
            Some((_, parent)) if !parent.is_empty() => cur = parent,
            _ => return base == "object",
        }
    }
}

/// An empty instance of a builtin type, used to look up its methods.
pub fn prototype(t: &str) -> Value {
    match t {
        "str" => Value::str(""),
        "list" => Value::list(Vec::new()),
        "dict" => Value::dict(Dict::new()),
        "set" | "frozenset" => Value::Set(Rc::new(RefCell::new(Set::new()))),
        "tuple" => Value::tuple(Vec::new()),
        "int" => Value::Int(0),
        "float" => Value::Float(0.0),
        _ => Value::None,
    }
}

pub fn isinstance(v: &Value, t: &str) -> bool {
    match t {
        "object" => true,
        "int" => matches!(v, Value::Int(_) | Value::Bool(_)),
        "frozenset" | "set" => matches!(v, Value::Set(_)),
        _ => match v {
            Value::Exception(e) => is_subclass(&e.ty, t),
            _ => v.type_name() == t,
        },
    }
}

fn arg_count(name: &str, args: &[Value], min: usize, max: usize) -> R<()> {
    if args.len() < min || args.len() > max {
        let expected = if min == max {
            format!("exactly {min} argument{}", if min == 1 { "" } else { "s" })
        } else if args.len() < min {
            format!("at least {min} argument{}", if min == 1 { "" } else { "s" })
        } else {
            format!("at most {max} arguments")
        };
        return Err(type_error(format!(
            "{name}() takes {expected} ({} given)",
            args.len()
        )));
    }
    Ok(())
}

fn take_kw(kwargs: &mut Vec<(String, Value)>, name: &str) -> Option<Value> {
    let pos = kwargs.iter().position(|(k, _)| k == name)?;
    Some(kwargs.remove(pos).1)
}

fn no_kwargs(fname: &str, kwargs: &[(String, Value)]) -> R<()> {
    match kwargs.first() {
        Some((k, _)) => Err(type_error(format!(
            "{fname}() got an unexpected keyword argument '{k}'"
        ))),
        None => Ok(()),
    }
}

/// Sort `items` by `keys` using Python ordering; reports the first comparison error.
pub fn sort_values(items: Vec<Value>, keys: Vec<Value>, reverse: bool) -> R<Vec<Value>> {
    let mut paired: Vec<(Value, Value)> = keys.into_iter().zip(items).collect();
    let mut failure = None;
    paired.sort_by(|a, b| {
        if failure.is_some() {
            return Ordering::Equal;
        }
        let o = match py_cmp(&a.0, &b.0, "<") {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                Ordering::Equal
            }
        };
        if reverse {
            o.reverse()
        } else {
            o
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(paired.into_iter().map(|(_, v)| v).collect())
}

pub fn sort_with_key(
    interp: &mut Interp,
    items: Vec<Value>,
    key: Option<Value>,
    reverse: bool,
) -> R<Vec<Value>> {
    let keys = match key {
        Some(Value::None) | None => items.clone(),
        Some(f) => {
            let mut keys = Vec::with_capacity(items.len());
            for v in &items {
                keys.push(interp.call(&f, vec![v.clone()], Vec::new())?);
            }
            keys
        }
    };
    sort_values(items, keys, reverse)
}

fn min_max(
    interp: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let key = take_kw(&mut kwargs, "key").filter(|k| !matches!(k, Value::None));
    let default = take_kw(&mut kwargs, "default");
    no_kwargs(name, &kwargs)?;
    let items = match args.len() {
        0 => {
            return Err(type_error(format!(
                "{name} expected at least 1 argument, got 0"
            )))
        }
        1 => interp.collect(&args[0])?,
        _ => args,
    };
    if items.is_empty() {
        return default
            .ok_or_else(|| exc("ValueError", format!("{name}() iterable argument is empty")));
    }
    let want = if name == "max" {
        Ordering::Greater
    } else {
        Ordering::Less
    };
    let mut best = items[0].clone();
    let mut best_key = match &key {
        Some(f) => interp.call(f, vec![best.clone()], Vec::new())?,
        None => best.clone(),
    };
    for v in items.into_iter().skip(1) {
        let k = match &key {
            Some(f) => interp.call(f, vec![v.clone()], Vec::new())?,
            None => v.clone(),
        };
        if py_cmp(&k, &best_key, if name == "max" { ">" } else { "<" })? == want {
            best = v;
            best_key = k;
        }
    }
    Ok(best)
}

fn sum(interp: &mut Interp, args: Vec<Value>, mut kwargs: Vec<(String, Value)>) -> R<Value> {
    let start = take_kw(&mut kwargs, "start");
    no_kwargs("sum", &kwargs)?;
    arg_count("sum", &args, 1, 2)?;
    let mut acc = args.get(1).cloned().or(start).unwrap_or(Value::Int(0));
    if let Value::Str(_) = acc {
        return Err(type_error(
            "sum() can't sum strings [use ''.join(seq) instead]",
        ));
    }
    for item in interp.iter_value(&args[0])? {
        interp.tick()?;
        acc = interp.binary_op(crate::ast::BinOp::Add, acc, item)?;
    }
    Ok(acc)
}

fn round_half_even(x: f64) -> f64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 {
        2.0 * (x / 2.0).round()
    } else {
        r
    }
}

pub fn round_float(x: f64, ndigits: i64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    if ndigits >= 0 {
        // correctly rounded decimal conversion, then back
        let s = format!("{:.*}", ndigits.min(300) as usize, x);
        s.parse().unwrap_or(x)
    } else {
        let p = 10f64.powi((-ndigits).min(308) as i32);
        round_half_even(x / p) * p
    }
}

fn round(args: Vec<Value>, mut kwargs: Vec<(String, Value)>) -> R<Value> {
    let nd = take_kw(&mut kwargs, "ndigits");
    no_kwargs("round", &kwargs)?;
    arg_count("round", &args, 1, 2)?;
    let nd = args
        .get(1)
        .cloned()
        .or(nd)
        .filter(|v| !matches!(v, Value::None));
    match (&args[0], nd) {
        (Value::Float(f), None) => {
            if !f.is_finite() {
                return Err(exc(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            Ok(Value::Int(round_half_even(*f) as i64))
        }
        (Value::Float(f), Some(n)) => {
            let n = as_int(&n)
                .ok_or_else(|| type_error("'float' object cannot be interpreted as an integer"))?;
            Ok(Value::Float(round_float(*f, n)))
        }
        (v @ (Value::Int(_) | Value::Bool(_)), None) => Ok(Value::Int(as_int(v).unwrap_or(0))),
        (v @ (Value::Int(_) | Value::Bool(_)), Some(n)) => {
            let i = as_int(v).unwrap_or(0);
            let n = as_int(&n)
                .ok_or_else(|| type_error("'float' object cannot be interpreted as an integer"))?;
            if n >= 0 {
                return Ok(Value::Int(i));
            }
            let p = 10i64.checked_pow((-n) as u32).unwrap_or(i64::MAX);
            let q = i.div_euclid(p);
            let r = i.rem_euclid(p);
            let up = match (2 * r).cmp(&p) {
                Ordering::Greater => true,
                Ordering::Equal => q % 2 != 0,
                Ordering::Less => false,
            };
            Ok(Value::Int((q + up as i64) * p))
        }
        (other, _) => Err(type_error(format!(
            "type {} doesn't define __round__ method",
            other.type_name()
        ))),
    }
}

pub fn parse_int(s: &str, base: u32) -> Option<i64> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (base, body) = match base {
        0 | 16 if body.len() > 2 && body[..2].eq_ignore_ascii_case("0x") => (16, &body[2..]),
        0 | 8 if body.len() > 2 && body[..2].eq_ignore_ascii_case("0o") => (8, &body[2..]),
        0 | 2 if body.len() > 2 && body[..2].eq_ignore_ascii_case("0b") => (2, &body[2..]),
        0 => (10, body),
        b => (b, body),
    };
    if body.is_empty() || body.starts_with('_') || body.ends_with('_') || body.contains("__") {
        return None;
    }
    let digits: String = body.chars().filter(|c| *c != '_').collect();
    if digits.starts_with(['+', '-']) {
        return None;
    }
    let v = i64::from_str_radix(&digits, base).ok()?;
    Some(if neg { -v } else { v })
}

pub fn parse_float(s: &str) -> Option<f64> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let unsigned = lower.trim_start_matches(['+', '-']);
    if matches!(unsigned, "inf" | "infinity" | "nan") {
        return lower.parse().ok().or_else(|| {
            let v = if unsigned == "nan" {
                f64::NAN
            } else {
                f64::INFINITY
            };
            Some(if lower.starts_with('-') { -v } else { v })
        });
    }
    if t.is_empty()
        || !t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '+' | '-' | '_'))
    {
        return None;
    }
    let cleaned: String = t.chars().filter(|c| *c != '_').collect();
    cleaned.parse().ok()
}

pub fn to_int(v: &Value, base: Option<i64>) -> R<i64> {
    match (v, base) {
        (Value::Str(s), b) => {
            let b = b.unwrap_or(10);
            if !(b == 0 || (2..=36).contains(&b)) {
                return Err(exc("ValueError", "int() base must be >= 2 and <= 36, or 0"));
            }
            parse_int(s, b as u32).ok_or_else(|| {
                exc(
                    "ValueError",
                    format!("invalid literal for int() with base {b}: {}", str_repr(s)),
                )
            })
        }
        (_, Some(_)) => Err(type_error(
            "int() can't convert non-string with explicit base",
        )),
        (Value::Int(i), None) => Ok(*i),
        (Value::Bool(b), None) => Ok(*b as i64),
        (Value::Float(f), None) => {
            if f.is_nan() {
                return Err(exc("ValueError", "cannot convert float NaN to integer"));
            }
            if f.is_infinite() {
                return Err(exc(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            if f.abs() >= 9_223_372_036_854_775_808.0 {
                return Err(exc(
                    "OverflowError",
                    "integer overflow (this kernel uses 64-bit integers)",
                ));
            }
            Ok(f.trunc() as i64)
        }
        (other, None) => Err(type_error(format!(
            "int() argument must be a string, a bytes-like object or a real number, not '{}'",
            other.type_name()
        ))),
    }
}

pub fn to_float(v: &Value) -> R<f64> {
    match v {
        Value::Str(s) => parse_float(s).ok_or_else(|| {
            exc(
                "ValueError",
                format!("could not convert string to float: {}", str_repr(s)),
            )
        }),
        other => as_float(other).ok_or_else(|| {
            type_error(format!(
                "float() argument must be a string or a real number, not '{}'",
                other.type_name()
            ))
        }),
    }
}

fn make_set(interp: &mut Interp, items: Vec<Value>) -> R<Value> {
    let mut s = Set::new();
    for v in items {
        s.insert(interp.key(&v)?, v);
    }
    Ok(Value::Set(Rc::new(RefCell::new(s))))
}

pub fn dict_from(
    interp: &mut Interp,
    src: Option<&Value>,
    kwargs: Vec<(String, Value)>,
) -> R<Dict> {
    let mut d = Dict::new();
    match src {
        None => {}
        Some(Value::Dict(other)) => {
            d = other.borrow().clone();
        }
        Some(v) => {
            for (i, pair) in interp.collect(v)?.into_iter().enumerate() {
                let kv = interp.collect(&pair).map_err(|_| {
                    type_error(format!(
                        "cannot convert dictionary update sequence element #{i} to a sequence"
                    ))
                })?;
                if kv.len() != 2 {
                    return Err(exc(
                        "ValueError",
                        format!(
                            "dictionary update sequence element #{i} has length {}; 2 is required",
                            kv.len()
                        ),
                    ));
                }
                let key = interp.key(&kv[0])?;
                let mut it = kv.into_iter();
                let k = it.next().unwrap_or(Value::None);
                let v = it.next().unwrap_or(Value::None);
                match d.get_mut(&key) {
                    Some(e) => e.1 = v,
                    None => {
                        d.insert(key, (k, v));
                    }
                }
            }
        }
    }
    for (k, v) in kwargs {
        d.insert(Key::Str(Rc::from(k.as_str())), (Value::str(&k), v));
    }
    Ok(d)
}

/// Calls a builtin type as a constructor.
pub fn construct(
    interp: &mut Interp,
    t: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    if is_exception_type(t) {
        no_kwargs(t, &kwargs)?;
        return Ok(Value::Exception(Rc::new(ExcObj {
            ty: Rc::from(t),
            args,
        })));
    }
    match t {
        "int" => {
            let base = take_kw(&mut kwargs, "base");
            no_kwargs("int", &kwargs)?;
            arg_count("int", &args, 0, 2)?;
            let base = args
                .get(1)
                .cloned()
                .or(base)
                .map(|b| as_int(&b).unwrap_or(10));
            match args.first() {
                None => Ok(Value::Int(0)),
                Some(v) => Ok(Value::Int(to_int(v, base)?)),
            }
        }
        "float" => {
            no_kwargs("float", &kwargs)?;
            arg_count("float", &args, 0, 1)?;
            match args.first() {
                None => Ok(Value::Float(0.0)),
                Some(v) => Ok(Value::Float(to_float(v)?)),
            }
        }
        "str" => {
            no_kwargs("str", &kwargs)?;
            arg_count("str", &args, 0, 1)?;
            Ok(Value::str(
                args.first().map(|v| v.to_str()).unwrap_or_default(),
            ))
        }
        "bool" => {
            arg_count("bool", &args, 0, 1)?;
            Ok(Value::Bool(
                args.first().map(|v| v.truthy()).unwrap_or(false),
            ))
        }
        "list" => {
            arg_count("list", &args, 0, 1)?;
            match args.first() {
                None => Ok(Value::list(Vec::new())),
                Some(v) => Ok(Value::list(interp.collect(v)?)),
            }
        }
        "tuple" => {
            arg_count("tuple", &args, 0, 1)?;
            match args.first() {
                None => Ok(Value::tuple(Vec::new())),
                Some(v) => Ok(Value::tuple(interp.collect(v)?)),
            }
        }
        "set" | "frozenset" => {
            arg_count(t, &args, 0, 1)?;
            let items = match args.first() {
                None => Vec::new(),
                Some(v) => interp.collect(v)?,
            };
            make_set(interp, items)
        }
        "dict" => {
            arg_count("dict", &args, 0, 1)?;
            Ok(Value::dict(dict_from(interp, args.first(), kwargs)?))
        }
        "range" => {
            no_kwargs("range", &kwargs)?;
            arg_count("range", &args, 1, 3)?;
            let mut ints = Vec::new();
            for a in &args {
                ints.push(as_int(a).ok_or_else(|| {
                    type_error(format!(
                        "'{}' object cannot be interpreted as an integer",
                        a.type_name()
                    ))
                })?);
            }
            let (a, b, c) = match ints.len() {
                1 => (0, ints[0], 1),
                2 => (ints[0], ints[1], 1),
                _ => (ints[0], ints[1], ints[2]),
            };
            if c == 0 {
                return Err(exc("ValueError", "range() arg 3 must not be zero"));
            }
            Ok(Value::Range(a, b, c))
        }
        "type" => {
            arg_count("type", &args, 1, 1)?;
            Ok(Value::Type(Rc::from(args[0].type_name().as_str())))
        }
        "object" => Err(type_error(
            "object() instances are not supported in this kernel",
        )),
        other => Err(type_error(format!("cannot create '{other}' instances"))),
    }
}

fn single_int(name: &str, args: &[Value]) -> R<i64> {
    arg_count(name, args, 1, 1)?;
    as_int(&args[0]).ok_or_else(|| {
        type_error(format!(
            "'{}' object cannot be interpreted as an integer",
            args[0].type_name()
        ))
    })
}

fn radix(prefix: &str, i: i64, digits: String) -> Value {
    Value::str(format!("{}{prefix}{digits}", if i < 0 { "-" } else { "" }))
}

pub fn call_builtin(
    interp: &mut Interp,
    name: &'static str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    if name.contains('.') {
        return crate::modules::call(interp, name, args, kwargs);
    }
    match name {
        "print" => {
            let sep = take_kw(&mut kwargs, "sep").filter(|v| !matches!(v, Value::None));
            let end = take_kw(&mut kwargs, "end").filter(|v| !matches!(v, Value::None));
            let file = take_kw(&mut kwargs, "file").filter(|v| !matches!(v, Value::None));
            take_kw(&mut kwargs, "flush");
            no_kwargs("print", &kwargs)?;
            let sep = sep.map(|v| v.to_str()).unwrap_or_else(|| " ".into());
            let end = end.map(|v| v.to_str()).unwrap_or_else(|| "\n".into());
            let mut line = String::new();
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    line.push_str(&sep);
                }
                line.push_str(&a.to_str());
            }
            line.push_str(&end);
            match file {
                Some(Value::File(f)) => crate::methods::file_write(&f, &line)?,
                Some(Value::Module(m)) if m.name == "sys.stderr" || m.name == "sys.stdout" => {
                    interp.write_out(&line)
                }
                Some(other) => {
                    return Err(exc(
                        "AttributeError",
                        format!("'{}' object has no attribute 'write'", other.type_name()),
                    ))
                }
                None => interp.write_out(&line),
            }
            Ok(Value::None)
        }
        "len" => {
            arg_count("len", &args, 1, 1)?;
            let n = match &args[0] {
                Value::Str(s) => s.chars().count() as i64,
                Value::List(l) => l.borrow().len() as i64,
                Value::Tuple(t) => t.len() as i64,
                Value::Dict(d) => d.borrow().len() as i64,
                Value::Set(s) => s.borrow().len() as i64,
                Value::Range(a, b, c) => range_len(*a, *b, *c),
                other => {
                    return Err(type_error(format!(
                        "object of type '{}' has no len()",
                        other.type_name()
                    )))
                }
            };
            Ok(Value::Int(n))
        }
        "abs" => {
            arg_count("abs", &args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => i
                    .checked_abs()
                    .map(Value::Int)
                    .ok_or_else(|| exc("OverflowError", "integer overflow")),
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                other => Err(type_error(format!(
                    "bad operand type for abs(): '{}'",
                    other.type_name()
                ))),
            }
        }
        "min" | "max" => min_max(interp, name, args, kwargs),
        "sum" => sum(interp, args, kwargs),
        "round" => round(args, kwargs),
        "sorted" => {
            let key = take_kw(&mut kwargs, "key");
            let reverse = take_kw(&mut kwargs, "reverse")
                .map(|v| v.truthy())
                .unwrap_or(false);
            no_kwargs("sorted", &kwargs)?;
            arg_count("sorted", &args, 1, 1)?;
            let items = interp.collect(&args[0])?;
            Ok(Value::list(sort_with_key(interp, items, key, reverse)?))
        }
        "reversed" => {
            arg_count("reversed", &args, 1, 1)?;
            if matches!(args[0], Value::Set(_)) {
                return Err(type_error("'set' object is not reversible"));
            }
            let mut items = interp.collect(&args[0])?;
            items.reverse();
            Ok(Value::list(items))
        }
        "enumerate" => {
            let start = take_kw(&mut kwargs, "start");
            no_kwargs("enumerate", &kwargs)?;
            arg_count("enumerate", &args, 1, 2)?;
            let start = args
                .get(1)
                .cloned()
                .or(start)
                .and_then(|v| as_int(&v))
                .unwrap_or(0);
            let items = interp.collect(&args[0])?;
            Ok(Value::list(
                items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Value::tuple(vec![Value::Int(start + i as i64), v]))
                    .collect(),
            ))
        }
        "zip" => {
            take_kw(&mut kwargs, "strict");
            no_kwargs("zip", &kwargs)?;
            let mut cols = Vec::new();
            for a in &args {
                cols.push(interp.collect(a)?);
            }
            let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
            Ok(Value::list(
                (0..n)
                    .map(|i| Value::tuple(cols.iter().map(|c| c[i].clone()).collect()))
                    .collect(),
            ))
        }
        "map" => {
            if args.len() < 2 {
                return Err(type_error("map() must have at least two arguments."));
            }
            let f = args[0].clone();
            let mut cols = Vec::new();
            for a in &args[1..] {
                cols.push(interp.collect(a)?);
            }
            let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let call_args = cols.iter().map(|c| c[i].clone()).collect();
                out.push(interp.call(&f, call_args, Vec::new())?);
            }
            Ok(Value::list(out))
        }
        "filter" => {
            arg_count("filter", &args, 2, 2)?;
            let items = interp.collect(&args[1])?;
            let mut out = Vec::new();
            for v in items {
                let keep = match &args[0] {
                    Value::None => v.truthy(),
                    f => interp.call(f, vec![v.clone()], Vec::new())?.truthy(),
                };
                if keep {
                    out.push(v);
                }
            }
            Ok(Value::list(out))
        }
        "any" | "all" => {
            arg_count(name, &args, 1, 1)?;
            let want = name == "any";
            for v in interp.iter_value(&args[0])? {
                interp.tick()?;
                if v.truthy() == want {
                    return Ok(Value::Bool(want));
                }
            }
            Ok(Value::Bool(!want))
        }
        "isinstance" => {
            arg_count("isinstance", &args, 2, 2)?;
            fn check(v: &Value, t: &Value) -> R<bool> {
                match t {
                    Value::Type(t) => Ok(isinstance(v, t)),
                    Value::Tuple(ts) => {
                        for t in ts.iter() {
                            if check(v, t)? {
                                return Ok(true);
                            }
                        }
                        Ok(false)
                    }
                    _ => Err(type_error(
                        "isinstance() arg 2 must be a type, a tuple of types, or a union",
                    )),
                }
            }
            Ok(Value::Bool(check(&args[0], &args[1])?))
        }
        "issubclass" => {
            arg_count("issubclass", &args, 2, 2)?;
            match (&args[0], &args[1]) {
                (Value::Type(a), Value::Type(b)) => Ok(Value::Bool(
                    is_subclass(a, b) || (&**a == "bool" && &**b == "int"),
                )),
                _ => Err(type_error("issubclass() arg 1 must be a class")),
            }
        }
        "repr" => {
            arg_count("repr", &args, 1, 1)?;
            Ok(Value::str(args[0].repr()))
        }
        "format" => {
            arg_count("format", &args, 1, 2)?;
            let spec = args.get(1).map(|v| v.to_str()).unwrap_or_default();
            Ok(Value::str(crate::format::format_value(&args[0], &spec)?))
        }
        "open" => {
            let mode = take_kw(&mut kwargs, "mode");
            take_kw(&mut kwargs, "encoding");
            take_kw(&mut kwargs, "errors");
            take_kw(&mut kwargs, "newline");
            no_kwargs("open", &kwargs)?;
            arg_count("open", &args, 1, 3)?;
            let mode = args
                .get(1)
                .cloned()
                .or(mode)
                .map(|m| m.to_str())
                .unwrap_or_else(|| "r".into());
            crate::methods::open_file(interp, &args[0].to_str(), &mode)
        }
        "divmod" => {
            arg_count("divmod", &args, 2, 2)?;
            let q = interp.binary_op(
                crate::ast::BinOp::FloorDiv,
                args[0].clone(),
                args[1].clone(),
            )?;
            let r = interp.binary_op(crate::ast::BinOp::Mod, args[0].clone(), args[1].clone())?;
            Ok(Value::tuple(vec![q, r]))
        }
        "pow" => {
            arg_count("pow", &args, 2, 3)?;
            if let Some(m) = args.get(2) {
                let (Some(mut b), Some(mut e), Some(m)) =
                    (as_int(&args[0]), as_int(&args[1]), as_int(m))
                else {
                    return Err(type_error(
                        "pow() 3rd argument not allowed unless all arguments are integers",
                    ));
                };
                if m == 0 {
                    return Err(exc("ValueError", "pow() 3rd argument cannot be 0"));
                }
                if e < 0 {
                    return Err(exc(
                        "ValueError",
                        "base is not invertible for the given modulus",
                    ));
                }
                let m128 = m as i128;
                let mut acc: i128 = 1;
                b = (b as i128).rem_euclid(m128) as i64;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = (acc * b as i128).rem_euclid(m128);
                    }
                    b = ((b as i128 * b as i128).rem_euclid(m128)) as i64;
                    e >>= 1;
                }
                return Ok(Value::Int(acc as i64));
            }
            interp.binary_op(crate::ast::BinOp::Pow, args[0].clone(), args[1].clone())
        }
        "chr" => {
            let i = single_int("chr", &args)?;
            let c = u32::try_from(i)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| exc("ValueError", "chr() arg not in range(0x110000)"))?;
            Ok(Value::str(c.to_string()))
        }
        "ord" => {
            arg_count("ord", &args, 1, 1)?;
            match &args[0] {
                Value::Str(s) if s.chars().count() == 1 => {
                    Ok(Value::Int(s.chars().next().unwrap_or('\0') as i64))
                }
                Value::Str(s) => Err(type_error(format!(
                    "ord() expected a character, but string of length {} found",
                    s.chars().count()
                ))),
                other => Err(type_error(format!(
                    "ord() expected string of length 1, but {} found",
                    other.type_name()
                ))),
            }
        }
        "hex" => {
            let i = single_int("hex", &args)?;
            Ok(radix("0x", i, format!("{:x}", i.unsigned_abs())))
        }
        "oct" => {
            let i = single_int("oct", &args)?;
            Ok(radix("0o", i, format!("{:o}", i.unsigned_abs())))
        }
        "bin" => {
            let i = single_int("bin", &args)?;
            Ok(radix("0b", i, format!("{:b}", i.unsigned_abs())))
        }
        "hash" => {
            arg_count("hash", &args, 1, 1)?;
            let key = interp.key(&args[0])?;
            match key {
                Key::Int(i) => Ok(Value::Int(i)),
                other => {
                    use std::hash::{Hash, Hasher};
                    let mut h = std::collections::hash_map::DefaultHasher::new();
                    other.hash(&mut h);
                    Ok(Value::Int(h.finish() as i64))
                }
            }
        }
        "id" => {
            arg_count("id", &args, 1, 1)?;
            let p = match &args[0] {
                Value::List(l) => Rc::as_ptr(l) as *const u8 as usize,
                Value::Dict(d) => Rc::as_ptr(d) as *const u8 as usize,
                Value::Set(s) => Rc::as_ptr(s) as *const u8 as usize,
                Value::Tuple(t) => Rc::as_ptr(t) as *const u8 as usize,
                Value::Function(f) => Rc::as_ptr(f) as *const u8 as usize,
                Value::Str(s) => s.as_ptr() as usize,
                Value::Int(i) => *i as usize,
                _ => 0,
            };
            Ok(Value::Int(p as i64))
        }
        "callable" => {
            arg_count("callable", &args, 1, 1)?;
            Ok(Value::Bool(matches!(
                args[0],
                Value::Function(_) | Value::Builtin(_) | Value::Method(_) | Value::Type(_)
            )))
        }
        "hasattr" => {
            arg_count("hasattr", &args, 2, 2)?;
            let attr = args[1].to_str();
            Ok(Value::Bool(interp.get_attr(&args[0], &attr).is_ok()))
        }
        "getattr" => {
            arg_count("getattr", &args, 2, 3)?;
            let attr = args[1].to_str();
            match interp.get_attr(&args[0], &attr) {
                Ok(v) => Ok(v),
                Err(e) => match args.get(2) {
                    Some(d) => Ok(d.clone()),
                    None => Err(e),
                },
            }
        }
        "dir" => {
            arg_count("dir", &args, 0, 1)?;
            let mut names: Vec<String> = match args.first() {
                Some(Value::Module(m)) => m.attrs.keys().cloned().collect(),
                Some(other) => crate::methods::method_names(other)
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                None => interp.globals.borrow().keys().cloned().collect(),
            };
            names.sort();
            Ok(Value::list(names.into_iter().map(Value::str).collect()))
        }
        "iter" => {
            arg_count("iter", &args, 1, 1)?;
            Ok(Value::list(interp.collect(&args[0])?))
        }
        "next" => {
            arg_count("next", &args, 1, 2)?;
            match &args[0] {
                Value::List(l) => {
                    let mut l = l.borrow_mut();
                    if l.is_empty() {
                        return match args.get(1) {
                            Some(d) => Ok(d.clone()),
                            None => Err(exc("StopIteration", "")),
                        };
                    }
                    Ok(l.remove(0))
                }
                other => Err(type_error(format!(
                    "'{}' object is not an iterator",
                    other.type_name()
                ))),
            }
        }
        "submit_final_answer" => {
            let answer = take_kw(&mut kwargs, "answer");
            no_kwargs(name, &kwargs)?;
            let answer = args.into_iter().next().or(answer).ok_or_else(|| {
                type_error("submit_final_answer() missing 1 required positional argument: 'answer'")
            })?;
            interp.final_answer = Some(answer.to_str());
            Ok(Value::None)
        }
        "get_relevant_actions" => {
            let query = take_kw(&mut kwargs, "query");
            let k = take_kw(&mut kwargs, "k");
            no_kwargs(name, &kwargs)?;
            let mut it = args.into_iter();
            let query = it.next().or(query).ok_or_else(|| {
                type_error("get_relevant_actions() missing 1 required positional argument: 'query'")
            })?;
            let k = it.next().or(k).and_then(|v| as_int(&v));
            crate::kernel::retrieve_into(interp, &query.to_str(), k)
        }
        other => Err(exc("NameError", format!("name '{other}' is not defined"))),
    }
}
