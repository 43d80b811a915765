//! Methods on builtin values.

use std::cell::RefCell;
use std::fs;
use std::io::Write as _;
use std::rc::Rc;

use crate::builtins::{dict_from, sort_with_key};
use crate::interp::{as_int, exc, exc_from, py_eq, type_error, Interp, R};
use crate::value::*;

const STR_METHODS: &[&str] = &[
    "capitalize",
    "casefold",
    "center",
    "count",
    "endswith",
    "expandtabs",
    "find",
    "format",
    "index",
    "isalnum",
    "isalpha",
    "isascii",
    "isdecimal",
    "isdigit",
    "islower",
    "isnumeric",
    "isspace",
    "istitle",
    "isupper",
    "join",
    "ljust",
    "lower",
    "lstrip",
    "partition",
    "removeprefix",
    "removesuffix",
    "replace",
    "rfind",
    "rindex",
    "rjust",
    "rpartition",
    "rsplit",
    "rstrip",
    "split",
    "splitlines",
    "startswith",
    "strip",
    "swapcase",
    "title",
    "upper",
    "zfill",
];
const LIST_METHODS: &[&str] = &[
    "append", "clear", "copy", "count", "extend", "index", "insert", "pop", "remove", "reverse",
    "sort",
];
const TUPLE_METHODS: &[&str] = &["count", "index"];
const DICT_METHODS: &[&str] = &[
    "clear",
    "copy",
    "fromkeys",
    "get",
    "items",
    "keys",
    "most_common",
    "pop",
    "popitem",
    "setdefault",
    "update",
    "values",
];
const SET_METHODS: &[&str] = &[
    "add",
    "clear",
    "copy",
    "difference",
    "difference_update",
    "discard",
    "intersection",
    "intersection_update",
    "isdisjoint",
    "issubset",
    "issuperset",
    "pop",
    "remove",
    "symmetric_difference",
    "union",
    "update",
];
const FILE_METHODS: &[&str] = &[
    "close",
    "flush",
    "read",
    "readline",
    "readlines",
    "seek",
    "tell",
    "write",
    "writelines",
];
const MATCH_METHODS: &[&str] = &["end", "group", "groupdict", "groups", "span", "start"];
const INT_METHODS: &[&str] = &["bit_length", "is_integer"];
const FLOAT_METHODS: &[&str] = &["is_integer"];

pub fn method_names(v: &Value) -> &'static [&'static str] {
    if crate::modules::pattern_parts(v).is_some() {
        return crate::modules::PATTERN_METHODS;
    }
    match v {
        Value::Str(_) => STR_METHODS,
        Value::List(_) => LIST_METHODS,
        Value::Tuple(_) => TUPLE_METHODS,
        Value::Dict(_) => DICT_METHODS,
        Value::Set(_) => SET_METHODS,
        Value::File(_) => FILE_METHODS,
        Value::Match(_) => MATCH_METHODS,
        Value::Int(_) | Value::Bool(_) => INT_METHODS,
        Value::Float(_) => FLOAT_METHODS,
        _ => &[],
    }
}

pub fn has_method(v: &Value, name: &str) -> bool {
    method_names(v).contains(&name)
}

fn nargs(name: &str, args: &[Value], min: usize, max: usize) -> R<()> {
    if args.len() < min || args.len() > max {
        return Err(type_error(format!(
            "{name}() takes {} argument{} ({} given)",
            if min == max {
                format!("exactly {min}")
            } else {
                format!("{min} to {max}")
            },
            if max == 1 { "" } else { "s" },
            args.len()
        )));
    }
    Ok(())
}

fn kw(kwargs: &mut Vec<(String, Value)>, name: &str) -> Option<Value> {
    let pos = kwargs.iter().position(|(k, _)| k == name)?;
    Some(kwargs.remove(pos).1)
}

fn str_arg(v: &Value, what: &str) -> R<Rc<str>> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        other => Err(type_error(format!(
            "{what} must be str, not {}",
            other.type_name()
        ))),
    }
}

pub fn call_method(
    interp: &mut Interp,
    recv: &Value,
    name: &str,
    mut args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    if let Value::Type(t) = recv {
        if &**t == "dict" && name == "fromkeys" {
            nargs("fromkeys", &args, 1, 2)?;
            let default = args.get(1).cloned().unwrap_or(Value::None);
            let mut d = Dict::new();
            for k in interp.collect(&args[0])? {
                d.insert(interp.key(&k)?, (k, default.clone()));
            }
            return Ok(Value::dict(d));
        }
        if args.is_empty() {
            return Err(type_error(format!(
                "unbound method {t}.{name}() needs an argument"
            )));
        }
        let real = args.remove(0);
        if real.type_name() != **t && !(&**t == "int" && matches!(real, Value::Bool(_))) {
            return Err(type_error(format!(
                "descriptor '{name}' for '{t}' objects doesn't apply to a '{}' object",
                real.type_name()
            )));
        }
        return call_method(interp, &real, name, args, kwargs);
    }
    if crate::modules::pattern_parts(recv).is_some() {
        return crate::modules::pattern_method(interp, recv, name, args, kwargs);
    }
    match recv {
        Value::Str(s) => {
            if name == "format" {
                return Ok(Value::str(crate::format::str_format(
                    interp, s, &args, &kwargs,
                )?));
            }
            str_method(interp, s, name, args, kwargs)
        }
        Value::List(l) => list_method(interp, l, name, args, kwargs),
        Value::Tuple(t) => seq_common(interp, t, name, &args, "tuple"),
        Value::Dict(d) => dict_method(interp, d, name, args, kwargs),
        Value::Set(s) => set_method(interp, s, name, args),
        Value::File(f) => file_method(interp, f, name, args),
        Value::Match(m) => match_method(m, name, args),
        Value::Int(_) | Value::Bool(_) => match name {
            "bit_length" => Ok(Value::Int(
                64 - as_int(recv).unwrap_or(0).unsigned_abs().leading_zeros() as i64,
            )),
            _ => Ok(Value::Bool(true)),
        },
        Value::Float(f) => Ok(Value::Bool(f.is_finite() && f.fract() == 0.0)),
        other => {
            let _ = &mut kwargs;
            Err(exc(
                "AttributeError",
                format!("'{}' object has no attribute '{name}'", other.type_name()),
            ))
        }
    }
}

fn char_index(s: &str, byte: usize) -> i64 {
    s[..byte].chars().count() as i64
}

/// Resolves optional start/end char positions to a byte range of `s`.
fn sub_range(s: &str, start: Option<&Value>, end: Option<&Value>) -> (usize, usize) {
    let n = s.chars().count() as i64;
    let norm = |v: Option<&Value>, default: i64| -> i64 {
        match v.and_then(as_int) {
            Some(i) if i < 0 => (i + n).max(0),
            Some(i) => i.min(n),
            None => default,
        }
    };
    let a = norm(start, 0);
    let b = norm(end, n).max(a);
    let byte = |ci: i64| {
        s.char_indices()
            .nth(ci as usize)
            .map(|(b, _)| b)
            .unwrap_or(s.len())
    };
    (byte(a), byte(b))
}

fn split_whitespace_n(s: &str, maxsplit: i64) -> Vec<Value> {
    if maxsplit < 0 {
        return s.split_whitespace().map(Value::str).collect();
    }
    let mut out = Vec::new();
    let mut rest = s.trim_start();
    while !rest.is_empty() {
        if out.len() as i64 == maxsplit {
            out.push(Value::str(rest));
            break;
        }
        match rest.find(char::is_whitespace) {
            Some(p) => {
                out.push(Value::str(&rest[..p]));
                rest = rest[p..].trim_start();
            }
            None => {
                out.push(Value::str(rest));
                break;
            }
        }
    }
    out
}

fn strip_chars<'a>(s: &'a str, chars: Option<&Value>, left: bool, right: bool) -> R<&'a str> {
    let set: Option<Vec<char>> = match chars {
        None | Some(Value::None) => None,
        Some(v) => Some(str_arg(v, "strip arg")?.chars().collect()),
    };
    let pred = |c: char| match &set {
        None => c.is_whitespace(),
        Some(cs) => cs.contains(&c),
    };
    let mut out = s;
    if left {
        out = out.trim_start_matches(pred);
    }
    if right {
        out = out.trim_end_matches(pred);
    }
    Ok(out)
}

fn title_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev_cased = false;
    for c in s.chars() {
        if prev_cased {
            out.extend(c.to_lowercase());
        } else {
            out.extend(c.to_uppercase());
        }
        prev_cased = c.is_alphabetic();
    }
    out
}

fn str_method(
    interp: &mut Interp,
    s: &Rc<str>,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    let b = |v: bool| Ok(Value::Bool(v));
    let all_chars = |f: fn(char) -> bool| !s.is_empty() && s.chars().all(f);
    match name {
        "lower" | "casefold" => Ok(Value::str(s.to_lowercase())),
        "upper" => Ok(Value::str(s.to_uppercase())),
        "strip" => Ok(Value::str(strip_chars(s, args.first(), true, true)?)),
        "lstrip" => Ok(Value::str(strip_chars(s, args.first(), true, false)?)),
        "rstrip" => Ok(Value::str(strip_chars(s, args.first(), false, true)?)),
        "split" | "rsplit" => {
            let sep = args.first().cloned().or_else(|| kw(&mut kwargs, "sep"));
            let maxsplit = args
                .get(1)
                .cloned()
                .or_else(|| kw(&mut kwargs, "maxsplit"))
                .and_then(|v| as_int(&v))
                .unwrap_or(-1);
            match sep {
                None | Some(Value::None) => {
                    if name == "rsplit" && maxsplit >= 0 {
                        let rev: String = s.chars().rev().collect();
                        let mut parts = split_whitespace_n(&rev, maxsplit);
                        parts.reverse();
                        return Ok(Value::list(
                            parts
                                .into_iter()
                                .map(|p| Value::str(p.to_str().chars().rev().collect::<String>()))
                                .collect(),
                        ));
                    }
                    Ok(Value::list(split_whitespace_n(s, maxsplit)))
                }
                Some(sep) => {
                    let sep = str_arg(&sep, "sep")?;
                    if sep.is_empty() {
                        return Err(exc("ValueError", "empty separator"));
                    }
                    let parts: Vec<Value> = match (name, maxsplit) {
                        (_, m) if m < 0 => s.split(&*sep).map(Value::str).collect(),
                        ("split", m) => s.splitn(m as usize + 1, &*sep).map(Value::str).collect(),
                        (_, m) => {
                            let mut v: Vec<Value> =
                                s.rsplitn(m as usize + 1, &*sep).map(Value::str).collect();
                            v.reverse();
                            v
                        }
                    };
                    Ok(Value::list(parts))
                }
            }
        }
        "splitlines" => {
            let keep = args.first().map(|v| v.truthy()).unwrap_or(false);
            let mut out = Vec::new();
            let mut rest: &str = s;
            while !rest.is_empty() {
                match rest.find(['\n', '\r']) {
                    Some(p) => {
                        let nl_len = if rest[p..].starts_with("\r\n") { 2 } else { 1 };
                        let end = if keep { p + nl_len } else { p };
                        out.push(Value::str(&rest[..end]));
                        rest = &rest[p + nl_len..];
                    }
                    None => {
                        out.push(Value::str(rest));
                        break;
                    }
                }
            }
            Ok(Value::list(out))
        }
        "join" => {
            nargs("join", &args, 1, 1)?;
            let items = interp.collect(&args[0])?;
            let mut out = String::new();
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(s);
                }
                match v {
                    Value::Str(p) => out.push_str(p),
                    other => {
                        return Err(type_error(format!(
                            "sequence item {i}: expected str instance, {} found",
                            other.type_name()
                        )))
                    }
                }
            }
            Ok(Value::str(out))
        }
        "replace" => {
            nargs("replace", &args, 2, 3)?;
            let old = str_arg(&args[0], "replace() argument 1")?;
            let new = str_arg(&args[1], "replace() argument 2")?;
            match args.get(2).and_then(as_int) {
                Some(n) if n >= 0 => Ok(Value::str(s.replacen(&*old, &new, n as usize))),
                _ => Ok(Value::str(s.replace(&*old, &new))),
            }
        }
        "startswith" | "endswith" => {
            nargs(name, &args, 1, 3)?;
            let (a, e) = sub_range(s, args.get(1), args.get(2));
            let hay = &s[a..e];
            let test = |p: &str| {
                if name == "startswith" {
                    hay.starts_with(p)
                } else {
                    hay.ends_with(p)
                }
            };
            match &args[0] {
                Value::Str(p) => b(test(p)),
                Value::Tuple(ps) => {
                    for p in ps.iter() {
                        if test(&str_arg(p, "tuple item")?) {
                            return b(true);
                        }
                    }
                    b(false)
                }
                other => Err(type_error(format!(
                    "{name} first arg must be str or a tuple of str, not {}",
                    other.type_name()
                ))),
            }
        }
        "find" | "index" | "rfind" | "rindex" | "count" => {
            nargs(name, &args, 1, 3)?;
            let sub = str_arg(&args[0], "must be str")?;
            let (a, e) = sub_range(s, args.get(1), args.get(2));
            let hay = &s[a..e];
            if name == "count" {
                if sub.is_empty() {
                    return Ok(Value::Int(hay.chars().count() as i64 + 1));
                }
                return Ok(Value::Int(hay.matches(&*sub).count() as i64));
            }
            let found = if name.starts_with('r') {
                hay.rfind(&*sub)
            } else {
                hay.find(&*sub)
            };
            match found {
                Some(p) => Ok(Value::Int(char_index(s, a + p))),
                None if name.ends_with("index") => Err(exc("ValueError", "substring not found")),
                None => Ok(Value::Int(-1)),
            }
        }
        "isdigit" | "isdecimal" | "isnumeric" => {
            b(all_chars(|c| c.is_ascii_digit() || c.is_numeric()))
        }
        "isalpha" => b(all_chars(char::is_alphabetic)),
        "isalnum" => b(all_chars(char::is_alphanumeric)),
        "isspace" => b(all_chars(char::is_whitespace)),
        "isascii" => b(s.is_ascii()),
        "isupper" => b(s.chars().any(char::is_alphabetic) && !s.chars().any(char::is_lowercase)),
        "islower" => b(s.chars().any(char::is_alphabetic) && !s.chars().any(char::is_uppercase)),
        "istitle" => b(!s.is_empty() && title_case(s) == **s && s.chars().any(char::is_alphabetic)),
        "title" => Ok(Value::str(title_case(s))),
        "capitalize" => {
            let mut cs = s.chars();
            Ok(Value::str(match cs.next() {
                Some(f) => f
                    .to_uppercase()
                    .chain(cs.as_str().to_lowercase().chars())
                    .collect::<String>(),
                None => String::new(),
            }))
        }
        "swapcase" => Ok(Value::str(
            s.chars()
                .flat_map(|c| {
                    if c.is_uppercase() {
                        c.to_lowercase().collect::<Vec<_>>()
                    } else {
                        c.to_uppercase().collect::<Vec<_>>()
                    }
                })
                .collect::<String>(),
        )),
        "center" | "ljust" | "rjust" => {
            nargs(name, &args, 1, 2)?;
            let width = as_int(&args[0])
                .ok_or_else(|| type_error("width must be int"))?
                .max(0) as usize;
            let fill = match args.get(1) {
                Some(Value::Str(f)) if f.chars().count() == 1 => f.chars().next().unwrap_or(' '),
                Some(_) => {
                    return Err(type_error(
                        "The fill character must be exactly one character long",
                    ))
                }
                None => ' ',
            };
            let len = s.chars().count();
            if len >= width {
                return Ok(Value::Str(s.clone()));
            }
            let n = width - len;
            let fills = |k: usize| std::iter::repeat_n(fill, k).collect::<String>();
            Ok(Value::str(match name {
                "ljust" => format!("{s}{}", fills(n)),
                "rjust" => format!("{}{s}", fills(n)),
                _ => {
                    let left = n / 2 + (n & width & 1);
                    format!("{}{s}{}", fills(left), fills(n - left))
                }
            }))
        }
        "zfill" => {
            nargs("zfill", &args, 1, 1)?;
            let width = as_int(&args[0]).unwrap_or(0).max(0) as usize;
            let len = s.chars().count();
            if len >= width {
                return Ok(Value::Str(s.clone()));
            }
            let (sign, body) = match s.chars().next() {
                Some(c @ ('+' | '-')) => (c.to_string(), &s[1..]),
                _ => (String::new(), &s[..]),
            };
            Ok(Value::str(format!(
                "{sign}{}{body}",
                "0".repeat(width - len)
            )))
        }
        "partition" | "rpartition" => {
            nargs(name, &args, 1, 1)?;
            let sep = str_arg(&args[0], "sep")?;
            if sep.is_empty() {
                return Err(exc("ValueError", "empty separator"));
            }
            let found = if name == "partition" {
                s.find(&*sep)
            } else {
                s.rfind(&*sep)
            };
            Ok(Value::tuple(match found {
                Some(p) => vec![
                    Value::str(&s[..p]),
                    Value::Str(sep.clone()),
                    Value::str(&s[p + sep.len()..]),
                ],
                None if name == "partition" => {
                    vec![Value::Str(s.clone()), Value::str(""), Value::str("")]
                }
                None => vec![Value::str(""), Value::str(""), Value::Str(s.clone())],
            }))
        }
        "removeprefix" => {
            nargs(name, &args, 1, 1)?;
            let p = str_arg(&args[0], "prefix")?;
            Ok(Value::str(s.strip_prefix(&*p).unwrap_or(s)))
        }
        "removesuffix" => {
            nargs(name, &args, 1, 1)?;
            let p = str_arg(&args[0], "suffix")?;
            Ok(Value::str(s.strip_suffix(&*p).unwrap_or(s)))
        }
        "expandtabs" => {
            let size = args.first().and_then(as_int).unwrap_or(8).max(0) as usize;
            let mut out = String::new();
            let mut col = 0;
            for c in s.chars() {
                match c {
                    '\t' if size > 0 => {
                        let n = size - col % size;
                        out.push_str(&" ".repeat(n));
                        col += n;
                    }
                    '\t' => {}
                    '\n' | '\r' => {
                        out.push(c);
                        col = 0;
                    }
                    c => {
                        out.push(c);
                        col += 1;
                    }
                }
            }
            Ok(Value::str(out))
        }
        _ => Err(exc(
            "AttributeError",
            format!("'str' object has no attribute '{name}'"),
        )),
    }
}

fn seq_common(
    interp: &mut Interp,
    items: &[Value],
    name: &str,
    args: &[Value],
    what: &str,
) -> R<Value> {
    match name {
        "count" => {
            nargs("count", args, 1, 1)?;
            Ok(Value::Int(
                items.iter().filter(|v| py_eq(v, &args[0])).count() as i64,
            ))
        }
        "index" => {
            nargs("index", args, 1, 3)?;
            let n = items.len() as i64;
            let norm = |v: Option<&Value>, d: i64| match v.and_then(as_int) {
                Some(i) if i < 0 => (i + n).max(0),
                Some(i) => i.min(n),
                None => d,
            };
            let (a, e) = (norm(args.get(1), 0), norm(args.get(2), n));
            for i in a..e.max(a) {
                interp.tick()?;
                if py_eq(&items[i as usize], &args[0]) {
                    return Ok(Value::Int(i));
                }
            }
            Err(exc(
                "ValueError",
                if what == "list" {
                    format!("{} is not in list", args[0].repr())
                } else {
                    "tuple.index(x): x not in tuple".to_string()
                },
            ))
        }
        _ => Err(exc(
            "AttributeError",
            format!("'{what}' object has no attribute '{name}'"),
        )),
    }
}

fn list_method(
    interp: &mut Interp,
    l: &Rc<RefCell<Vec<Value>>>,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(String, Value)>,
) -> R<Value> {
    match name {
        "append" => {
            nargs("append", &args, 1, 1)?;
            l.borrow_mut()
                .push(args.into_iter().next().unwrap_or(Value::None));
            Ok(Value::None)
        }
        "extend" => {
            nargs("extend", &args, 1, 1)?;
            let items = interp.collect(&args[0])?;
            l.borrow_mut().extend(items);
            Ok(Value::None)
        }
        "insert" => {
            nargs("insert", &args, 2, 2)?;
            let n = l.borrow().len() as i64;
            let i = as_int(&args[0])
                .ok_or_else(|| type_error("'str' object cannot be interpreted as an integer"))?;
            let i = if i < 0 { (i + n).max(0) } else { i.min(n) } as usize;
            l.borrow_mut().insert(i, args[1].clone());
            Ok(Value::None)
        }
        "pop" => {
            nargs("pop", &args, 0, 1)?;
            let len = l.borrow().len();
            if len == 0 {
                return Err(exc("IndexError", "pop from empty list"));
            }
            let i = match args.first() {
                Some(idx) => interp
                    .normalize_index(idx, len, "list")
                    .map_err(|_| exc("IndexError", "pop index out of range"))?,
                None => len - 1,
            };
            Ok(l.borrow_mut().remove(i))
        }
        "remove" => {
            nargs("remove", &args, 1, 1)?;
            let pos = l.borrow().iter().position(|v| py_eq(v, &args[0]));
            match pos {
                Some(p) => {
                    l.borrow_mut().remove(p);
                    Ok(Value::None)
                }
                None => Err(exc("ValueError", "list.remove(x): x not in list")),
            }
        }
        "reverse" => {
            l.borrow_mut().reverse();
            Ok(Value::None)
        }
        "sort" => {
            let key = kw(&mut kwargs, "key");
            let reverse = kw(&mut kwargs, "reverse")
                .map(|v| v.truthy())
                .unwrap_or(false);
            if !args.is_empty() {
                return Err(type_error("sort() takes no positional arguments"));
            }
            let items = l.borrow().clone();
            let sorted = sort_with_key(interp, items, key, reverse)?;
            *l.borrow_mut() = sorted;
            Ok(Value::None)
        }
        "copy" => Ok(Value::list(l.borrow().clone())),
        "clear" => {
            l.borrow_mut().clear();
            Ok(Value::None)
        }
        _ => {
            let items = l.borrow().clone();
            seq_common(interp, &items, name, &args, "list")
        }
    }
}

fn dict_method(
    interp: &mut Interp,
    d: &Rc<RefCell<Dict>>,
    name: &str,
    args: Vec<Value>,
    kwargs: Vec<(String, Value)>,
) -> R<Value> {
    match name {
        "get" => {
            nargs("get", &args, 1, 2)?;
            let key = interp.key(&args[0])?;
            Ok(d.borrow()
                .get(&key)
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| args.get(1).cloned().unwrap_or(Value::None)))
        }
        "keys" => Ok(Value::list(
            d.borrow().values().map(|(k, _)| k.clone()).collect(),
        )),
        "values" => Ok(Value::list(
            d.borrow().values().map(|(_, v)| v.clone()).collect(),
        )),
        "items" => Ok(Value::list(
            d.borrow()
                .values()
                .map(|(k, v)| Value::tuple(vec![k.clone(), v.clone()]))
                .collect(),
        )),
        "pop" => {
            nargs("pop", &args, 1, 2)?;
            let key = interp.key(&args[0])?;
            let removed = d.borrow_mut().shift_remove(&key);
            match (removed, args.get(1)) {
                (Some((_, v)), _) => Ok(v),
                (None, Some(default)) => Ok(default.clone()),
                (None, None) => Err(exc_from(Rc::new(ExcObj {
                    ty: Rc::from("KeyError"),
                    args: vec![args[0].clone()],
                }))),
            }
        }
        "popitem" => {
            let last = d.borrow_mut().pop();
            match last {
                Some((_, (k, v))) => Ok(Value::tuple(vec![k, v])),
                None => Err(exc("KeyError", "'popitem(): dictionary is empty'")),
            }
        }
        "setdefault" => {
            nargs("setdefault", &args, 1, 2)?;
            let key = interp.key(&args[0])?;
            let default = args.get(1).cloned().unwrap_or(Value::None);
            let mut d = d.borrow_mut();
            let entry = d.entry(key).or_insert_with(|| (args[0].clone(), default));
            Ok(entry.1.clone())
        }
        "update" => {
            nargs("update", &args, 0, 1)?;
            let other = dict_from(interp, args.first(), kwargs)?;
            let mut d = d.borrow_mut();
            for (k, (kv, v)) in other {
                match d.get_mut(&k) {
                    Some(e) => e.1 = v,
                    None => {
                        d.insert(k, (kv, v));
                    }
                }
            }
            Ok(Value::None)
        }
        "most_common" => {
            nargs("most_common", &args, 0, 1)?;
            let pairs: Vec<Value> = d
                .borrow()
                .values()
                .map(|(k, v)| Value::tuple(vec![k.clone(), v.clone()]))
                .collect();
            let keys = pairs
                .iter()
                .map(|p| match p {
                    Value::Tuple(t) => t[1].clone(),
                    _ => Value::None,
                })
                .collect();
            let mut sorted = crate::builtins::sort_values(pairs, keys, true)?;
            if let Some(n) = args.first().and_then(as_int) {
                sorted.truncate(n.max(0) as usize);
            }
            Ok(Value::list(sorted))
        }
        "copy" => Ok(Value::dict(d.borrow().clone())),
        "clear" => {
            d.borrow_mut().clear();
            Ok(Value::None)
        }
        "fromkeys" => call_method(interp, &Value::Type(Rc::from("dict")), name, args, kwargs),
        _ => Err(exc(
            "AttributeError",
            format!("'dict' object has no attribute '{name}'"),
        )),
    }
}

fn set_method(interp: &mut Interp, s: &Rc<RefCell<Set>>, name: &str, args: Vec<Value>) -> R<Value> {
    let mut other_sets = Vec::new();
    if !matches!(name, "add" | "remove" | "discard") {
        for a in &args {
            let mut set = Set::new();
            for v in interp.collect(a)? {
                set.insert(interp.key(&v)?, v);
            }
            other_sets.push(set);
        }
    }
    let wrap = |set: Set| Value::Set(Rc::new(RefCell::new(set)));
    match name {
        "add" => {
            nargs("add", &args, 1, 1)?;
            let k = interp.key(&args[0])?;
            s.borrow_mut().entry(k).or_insert_with(|| args[0].clone());
            Ok(Value::None)
        }
        "remove" | "discard" => {
            nargs(name, &args, 1, 1)?;
            let k = interp.key(&args[0])?;
            if s.borrow_mut().shift_remove(&k).is_none() && name == "remove" {
                return Err(exc_from(Rc::new(ExcObj {
                    ty: Rc::from("KeyError"),
                    args: vec![args[0].clone()],
                })));
            }
            Ok(Value::None)
        }
        "pop" => {
            let v = s.borrow_mut().shift_remove_index(0);
            v.map(|(_, v)| v)
                .ok_or_else(|| exc("KeyError", "'pop from an empty set'"))
        }
        "clear" => {
            s.borrow_mut().clear();
            Ok(Value::None)
        }
        "copy" => Ok(wrap(s.borrow().clone())),
        "union" | "update" => {
            let mut out = s.borrow().clone();
            for o in other_sets {
                for (k, v) in o {
                    out.entry(k).or_insert(v);
                }
            }
            if name == "update" {
                *s.borrow_mut() = out;
                return Ok(Value::None);
            }
            Ok(wrap(out))
        }
        "intersection" | "intersection_update" => {
            let mut out = s.borrow().clone();
            for o in &other_sets {
                out.retain(|k, _| o.contains_key(k));
            }
            if name == "intersection_update" {
                *s.borrow_mut() = out;
                return Ok(Value::None);
            }
            Ok(wrap(out))
        }
        "difference" | "difference_update" => {
            let mut out = s.borrow().clone();
            for o in &other_sets {
                out.retain(|k, _| !o.contains_key(k));
            }
            if name == "difference_update" {
                *s.borrow_mut() = out;
                return Ok(Value::None);
            }
            Ok(wrap(out))
        }
        "symmetric_difference" => {
            nargs(name, &args, 1, 1)?;
            let me = s.borrow();
            let o = &other_sets[0];
            let mut out: Set = me
                .iter()
                .filter(|(k, _)| !o.contains_key(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            for (k, v) in o {
                if !me.contains_key(k) {
                    out.insert(k.clone(), v.clone());
                }
            }
            Ok(wrap(out))
        }
        "issubset" | "issuperset" | "isdisjoint" => {
            nargs(name, &args, 1, 1)?;
            let me = s.borrow();
            let o = &other_sets[0];
            Ok(Value::Bool(match name {
                "issubset" => me.keys().all(|k| o.contains_key(k)),
                "issuperset" => o.keys().all(|k| me.contains_key(k)),
                _ => !me.keys().any(|k| o.contains_key(k)),
            }))
        }
        _ => Err(exc(
            "AttributeError",
            format!("'set' object has no attribute '{name}'"),
        )),
    }
}

// ---- files ---------------------------------------------------------------

fn os_error(e: &std::io::Error, path: &str) -> crate::interp::Unwind {
    let (ty, errno, text) = match e.kind() {
        std::io::ErrorKind::NotFound => ("FileNotFoundError", 2, "No such file or directory"),
        std::io::ErrorKind::PermissionDenied => ("PermissionError", 13, "Permission denied"),
        std::io::ErrorKind::AlreadyExists => ("FileExistsError", 17, "File exists"),
        _ if std::path::Path::new(path).is_dir() => ("IsADirectoryError", 21, "Is a directory"),
        _ => ("OSError", 5, "Input/output error"),
    };
    exc(ty, format!("[Errno {errno}] {text}: {}", str_repr(path)))
}

pub fn open_file(interp: &Interp, path: &str, mode: &str) -> R<Value> {
    let real = interp.resolve(path);
    let reading = mode.contains('r') && !mode.contains('+');
    if !mode.chars().all(|c| "rwaxbt+".contains(c)) || mode.is_empty() {
        return Err(exc("ValueError", format!("invalid mode: '{mode}'")));
    }
    if real.is_dir() {
        return Err(exc(
            "IsADirectoryError",
            format!("[Errno 21] Is a directory: {}", str_repr(path)),
        ));
    }
    let mut content = String::new();
    if reading || mode.contains("r+") {
        let bytes = fs::read(&real).map_err(|e| os_error(&e, path))?;
        content = String::from_utf8_lossy(&bytes).into_owned();
        if !mode.contains('b') {
            content = content.replace("\r\n", "\n");
        }
    } else if mode.contains('w') {
        fs::write(&real, b"").map_err(|e| os_error(&e, path))?;
    } else if mode.contains('x') {
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&real)
            .map_err(|e| os_error(&e, path))?;
    } else if mode.contains('a') {
        fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&real)
            .map_err(|e| os_error(&e, path))?;
    }
    Ok(Value::File(Rc::new(RefCell::new(FileObj {
        path: real.to_string_lossy().into_owned(),
        mode: mode.to_string(),
        content,
        cursor: 0,
        closed: false,
        shown_path: path.to_string(),
    }))))
}

fn check_open(f: &FileObj) -> R<()> {
    if f.closed {
        return Err(exc("ValueError", "I/O operation on closed file."));
    }
    Ok(())
}

pub fn file_write(f: &Rc<RefCell<FileObj>>, text: &str) -> R<()> {
    let f = f.borrow();
    check_open(&f)?;
    if f.mode.contains('r') && !f.mode.contains('+') {
        return Err(exc("UnsupportedOperation", "not writable"));
    }
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(&f.path)
        .map_err(|e| os_error(&e, &f.shown_path))?;
    file.write_all(text.as_bytes())
        .map_err(|e| os_error(&e, &f.shown_path))
}

pub fn close_file(f: &Rc<RefCell<FileObj>>) -> R<()> {
    f.borrow_mut().closed = true;
    Ok(())
}

/// Remaining lines of a file opened for reading, consuming them.
pub fn file_lines(f: &Rc<RefCell<FileObj>>) -> R<Vec<Value>> {
    let mut f = f.borrow_mut();
    check_open(&f)?;
    let rest = f.content[f.cursor..].to_string();
    f.cursor = f.content.len();
    Ok(rest.split_inclusive('\n').map(Value::str).collect())
}

fn file_method(
    interp: &mut Interp,
    f: &Rc<RefCell<FileObj>>,
    name: &str,
    args: Vec<Value>,
) -> R<Value> {
    match name {
        "read" => {
            let mut fo = f.borrow_mut();
            check_open(&fo)?;
            let rest = &fo.content[fo.cursor..];
            let out: String = match args.first().and_then(as_int) {
                Some(n) if n >= 0 => rest.chars().take(n as usize).collect(),
                _ => rest.to_string(),
            };
            fo.cursor += out.len();
            Ok(Value::str(out))
        }
        "readline" => {
            let mut fo = f.borrow_mut();
            check_open(&fo)?;
            let rest = &fo.content[fo.cursor..];
            let end = rest.find('\n').map(|p| p + 1).unwrap_or(rest.len());
            let line = rest[..end].to_string();
            fo.cursor += end;
            Ok(Value::str(line))
        }
        "readlines" => Ok(Value::list(file_lines(f)?)),
        "write" => {
            nargs("write", &args, 1, 1)?;
            let text = match &args[0] {
                Value::Str(s) => s.clone(),
                other => {
                    return Err(type_error(format!(
                        "write() argument must be str, not {}",
                        other.type_name()
                    )))
                }
            };
            file_write(f, &text)?;
            Ok(Value::Int(text.chars().count() as i64))
        }
        "writelines" => {
            nargs("writelines", &args, 1, 1)?;
            for line in interp.collect(&args[0])? {
                file_write(f, &line.to_str())?;
            }
            Ok(Value::None)
        }
        "close" => {
            close_file(f)?;
            Ok(Value::None)
        }
        "flush" => Ok(Value::None),
        "seek" => {
            let pos = args.first().and_then(as_int).unwrap_or(0).max(0) as usize;
            let mut fo = f.borrow_mut();
            let mut p = pos.min(fo.content.len());
            while !fo.content.is_char_boundary(p) {
                p -= 1;
            }
            fo.cursor = p;
            Ok(Value::Int(p as i64))
        }
        "tell" => Ok(Value::Int(f.borrow().cursor as i64)),
        _ => Err(exc(
            "AttributeError",
            format!("'TextIOWrapper' object has no attribute '{name}'"),
        )),
    }
}

// ---- regex matches -------------------------------------------------------

fn group_index(m: &MatchObj, idx: &Value) -> R<usize> {
    match idx {
        Value::Str(name) => m
            .named
            .iter()
            .position(|(n, _)| **n == **name)
            .map(|p| {
                // named groups are also numbered; find by value position
                let target = &m.named[p].1;
                m.groups.iter().position(|g| g == target).unwrap_or(0)
            })
            .ok_or_else(|| exc("IndexError", "no such group")),
        other => {
            let i = as_int(other).ok_or_else(|| exc("IndexError", "no such group"))?;
            if i < 0 || i as usize >= m.groups.len() {
                return Err(exc("IndexError", "no such group"));
            }
            Ok(i as usize)
        }
    }
}

pub fn match_group(m: &MatchObj, idx: &Value) -> R<Value> {
    if let Value::Str(name) = idx {
        return match m.named.iter().find(|(n, _)| **n == **name) {
            Some((_, g)) => Ok(g.as_ref().map(Value::str).unwrap_or(Value::None)),
            None => Err(exc("IndexError", "no such group")),
        };
    }
    let i = group_index(m, idx)?;
    Ok(m.groups[i].as_ref().map(Value::str).unwrap_or(Value::None))
}

fn match_method(m: &Rc<MatchObj>, name: &str, args: Vec<Value>) -> R<Value> {
    match name {
        "group" => match args.len() {
            0 => match_group(m, &Value::Int(0)),
            1 => match_group(m, &args[0]),
            _ => {
                let mut out = Vec::new();
                for a in &args {
                    out.push(match_group(m, a)?);
                }
                Ok(Value::tuple(out))
            }
        },
        "groups" => Ok(Value::tuple(
            m.groups[1..]
                .iter()
                .map(|g| {
                    g.as_ref()
                        .map(Value::str)
                        .unwrap_or_else(|| args.first().cloned().unwrap_or(Value::None))
                })
                .collect(),
        )),
        "groupdict" => {
            let mut d = Dict::new();
            for (n, g) in &m.named {
                d.insert(
                    Key::Str(Rc::from(n.as_str())),
                    (
                        Value::str(n),
                        g.as_ref().map(Value::str).unwrap_or(Value::None),
                    ),
                );
            }
            Ok(Value::dict(d))
        }
        "start" => Ok(Value::Int(m.start as i64)),
        "end" => Ok(Value::Int(m.end as i64)),
        "span" => Ok(Value::tuple(vec![
            Value::Int(m.start as i64),
            Value::Int(m.end as i64),
        ])),
        _ => Err(exc(
            "AttributeError",
            format!("'re.Match' object has no attribute '{name}'"),
        )),
    }
}
